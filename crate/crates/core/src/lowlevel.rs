//! Learned low-level encoder, one-step latent dynamics and decoder.
//!
//! ```text
//! u_t   = W2 tanh(W1 x_t + b1) + b2          feed-forward summary
//! h_t   = GRU(u_t, h_{t-1})                   history memory
//! z_t   = u_t + C h_t + c                     latent (z_t = u_t without memory)
//! ẑ_t+1 = D2 tanh(D1 [z_t; onehot(a_t)]) + d  one-step dynamics
//! ```
//!
//! The decoder maps ẑ_{t+1} to the next raster (sigmoid, weighted squared
//! error), the two barrel slots (softmax each) and (terminal, success)
//! logits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hubtopo_maze::raster::{BARREL, COLOR_BASE, DIAMOND, DOOR_HALF, DOOR_LOCKED, KEY};
use hubtopo_maze::{Observation, Trajectory, FEATURE_LEN, NUM_ACTIONS, VIEW_LEN};
use hubtopo_nn::{gru_step, truncated_bptt, Adam, Dense, Gradients, GruCell, NodeId, ParamSet, Tape};

use crate::latent::{HistoryBuffer, HISTORY_LEN, LATENT_DIM};
use crate::{CoreError, Result};

pub const KIND: &str = "lowlevel";

#[derive(Debug, Clone, PartialEq)]
pub struct LowLevelConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub memory: bool,
    pub lr: f64,
    pub epochs: usize,
    pub window: usize,
    pub w_z: f64,
    pub w_vis: f64,
    pub w_barrel: f64,
    pub w_terminal: f64,
    /// Reconstruction weight of object channels relative to wall/floor.
    pub object_weight: f64,
    pub seed: u64,
}

impl Default for LowLevelConfig {
    fn default() -> Self {
        LowLevelConfig {
            latent_dim: LATENT_DIM,
            hidden: 128,
            memory: true,
            lr: 1e-4,
            epochs: 300,
            window: HISTORY_LEN,
            w_z: 1.0,
            w_vis: 1.0,
            w_barrel: 1.0,
            w_terminal: 0.5,
            object_weight: 4.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layers {
    enc1: Dense,
    enc2: Dense,
    memory: Option<(GruCell, Dense)>,
    dyn1: Dense,
    dyn2: Dense,
    dec1: Dense,
    vis: Dense,
    barrel: [Dense; 2],
    term: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowLevelModel {
    pub params: ParamSet,
    layers: Layers,
}

/// Per-step loss terms, already weighted.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub z: f64,
    pub vis: f64,
    pub barrel: f64,
    pub terminal: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.z + self.vis + self.barrel + self.terminal
    }
}

/// Per-channel reconstruction weights over the flattened raster.
pub fn vis_weights(object_weight: f64) -> Vec<f64> {
    let object = [KEY, DOOR_LOCKED, DOOR_HALF, DIAMOND, BARREL];
    (0..VIEW_LEN)
        .map(|i| {
            let ch = i % hubtopo_maze::raster::CHANNELS;
            if ch >= COLOR_BASE || object.contains(&ch) {
                object_weight
            } else {
                1.0
            }
        })
        .collect()
}

fn one_hot(k: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

impl LowLevelModel {
    pub fn new(cfg: &LowLevelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut ps = ParamSet::new();
        let (d, hid) = (cfg.latent_dim, cfg.hidden);
        let enc1 = Dense::new(&mut ps, "enc1", FEATURE_LEN, hid, &mut rng);
        let enc2 = Dense::new(&mut ps, "enc2", hid, d, &mut rng);
        let memory = cfg.memory.then(|| {
            let gru = GruCell::new(&mut ps, "enc.gru", d, d, &mut rng);
            let corr = Dense::new(&mut ps, "enc.corr", d, d, &mut rng);
            (gru, corr)
        });
        let dyn1 = Dense::new(&mut ps, "dyn1", d + NUM_ACTIONS, hid, &mut rng);
        let dyn2 = Dense::new(&mut ps, "dyn2", hid, d, &mut rng);
        let dec1 = Dense::new(&mut ps, "dec1", d, hid, &mut rng);
        let vis = Dense::new(&mut ps, "dec.vis", hid, VIEW_LEN, &mut rng);
        let barrel = [
            Dense::new(&mut ps, "dec.barrel0", hid, 5, &mut rng),
            Dense::new(&mut ps, "dec.barrel1", hid, 5, &mut rng),
        ];
        let term = Dense::new(&mut ps, "dec.term", hid, 2, &mut rng);
        let layers = Layers { enc1, enc2, memory, dyn1, dyn2, dec1, vis, barrel, term };
        LowLevelModel { params: ps, layers }
    }

    /// Rebinds a model to loaded parameters; memory is present iff the GRU is.
    pub fn from_params(ps: ParamSet) -> Result<Self> {
        let memory = if ps.id_of("enc.gru.w_update").is_some() {
            Some((GruCell::bind(&ps, "enc.gru")?, Dense::bind(&ps, "enc.corr")?))
        } else {
            None
        };
        let layers = Layers {
            enc1: Dense::bind(&ps, "enc1")?,
            enc2: Dense::bind(&ps, "enc2")?,
            memory,
            dyn1: Dense::bind(&ps, "dyn1")?,
            dyn2: Dense::bind(&ps, "dyn2")?,
            dec1: Dense::bind(&ps, "dec1")?,
            vis: Dense::bind(&ps, "dec.vis")?,
            barrel: [Dense::bind(&ps, "dec.barrel0")?, Dense::bind(&ps, "dec.barrel1")?],
            term: Dense::bind(&ps, "dec.term")?,
        };
        if layers.enc1.input != FEATURE_LEN {
            return Err(CoreError::Format(format!("encoder input {} != {FEATURE_LEN}", layers.enc1.input)));
        }
        Ok(LowLevelModel { params: ps, layers })
    }

    pub fn latent_dim(&self) -> usize {
        self.layers.enc2.output
    }

    pub fn hidden_size(&self) -> usize {
        self.layers.memory.map_or(0, |(g, _)| g.hidden)
    }

    pub fn has_memory(&self) -> bool {
        self.layers.memory.is_some()
    }

    fn summary(&self, x: &[f64]) -> Vec<f64> {
        let l = &self.layers;
        let a: Vec<f64> = l.enc1.apply(&self.params, x).into_iter().map(f64::tanh).collect();
        l.enc2.apply(&self.params, &a)
    }

    /// Encodes `obs` given the episode history and advances the memory.
    pub fn encode(&self, obs: &Observation, history: &mut HistoryBuffer) -> Result<Vec<f64>> {
        let u = self.summary(&obs.features());
        match self.layers.memory {
            None => Ok(u),
            Some((gru, corr)) => {
                history.hidden = gru_step(&self.params, &gru, &u, &history.hidden)?;
                let c = corr.apply(&self.params, &history.hidden);
                Ok(u.iter().zip(c).map(|(a, b)| a + b).collect())
            }
        }
    }

    pub fn predict_next(&self, z: &[f64], action: usize) -> Result<Vec<f64>> {
        if action >= NUM_ACTIONS || z.len() != self.latent_dim() {
            return Err(CoreError::InvalidInput(format!("predict_next: action {action}, latent {}", z.len())));
        }
        let l = &self.layers;
        let mut input = z.to_vec();
        input.extend(one_hot(action, NUM_ACTIONS));
        let a: Vec<f64> = l.dyn1.apply(&self.params, &input).into_iter().map(f64::tanh).collect();
        Ok(l.dyn2.apply(&self.params, &a))
    }

    /// Tape version of the encoder: returns (z, new hidden).
    fn latent_node(&self, tape: &mut Tape, x: NodeId, h: Option<NodeId>) -> Result<(NodeId, Option<NodeId>)> {
        let l = &self.layers;
        let a = l.enc1.forward(tape, x)?;
        let a = tape.tanh(a);
        let u = l.enc2.forward(tape, a)?;
        match (l.memory, h) {
            (Some((gru, corr)), Some(h)) => {
                let h2 = gru.forward(tape, u, h)?;
                let c = corr.forward(tape, h2)?;
                Ok((tape.add(u, c)?, Some(h2)))
            }
            _ => Ok((u, None)),
        }
    }

    /// Weighted loss terms for predicting step t+1 from z_t and a_t.
    #[allow(clippy::too_many_arguments)]
    fn step_loss(
        &self,
        tape: &mut Tape,
        cfg: &LowLevelConfig,
        weights: &[f64],
        z: NodeId,
        z_next: NodeId,
        action: usize,
        next: &Observation,
        status: [f64; 2],
    ) -> Result<(NodeId, LossParts)> {
        let l = &self.layers;
        let a = tape.input(one_hot(action, NUM_ACTIONS));
        let za = tape.concat(&[z, a]);
        let hdn = l.dyn1.forward(tape, za)?;
        let hdn = tape.tanh(hdn);
        let z_hat = l.dyn2.forward(tape, hdn)?;
        let lz = tape.squared_error(z_hat, z_next, None)?;

        let d = l.dec1.forward(tape, z_hat)?;
        let d = tape.tanh(d);
        let vis_logits = l.vis.forward(tape, d)?;
        let vis = tape.sigmoid(vis_logits);
        let target = tape.input(next.view.clone());
        let lvis = tape.squared_error(vis, target, Some(weights.to_vec()))?;
        let mut barrel_terms = Vec::with_capacity(2);
        for (slot, head) in l.barrel.iter().enumerate() {
            let logits = head.forward(tape, d)?;
            barrel_terms.push(tape.softmax_cross_entropy(logits, one_hot(next.barrel_vec[slot].min(4) as usize, 5), None)?);
        }
        let lb = tape.sum(&barrel_terms)?;
        let tl = l.term.forward(tape, d)?;
        let lt = tape.sigmoid_bce(tl, status.to_vec())?;

        let parts = LossParts {
            z: cfg.w_z * tape.scalar(lz),
            vis: cfg.w_vis * tape.scalar(lvis),
            barrel: cfg.w_barrel * tape.scalar(lb),
            terminal: cfg.w_terminal * tape.scalar(lt),
        };
        let terms = [
            tape.scale(lz, cfg.w_z),
            tape.scale(lvis, cfg.w_vis),
            tape.scale(lb, cfg.w_barrel),
            tape.scale(lt, cfg.w_terminal),
        ];
        Ok((tape.sum(&terms)?, parts))
    }

    /// Summed loss and gradients over one trajectory, with truncated BPTT.
    pub fn trajectory_loss(&self, cfg: &LowLevelConfig, traj: &Trajectory) -> Result<(f64, LossParts, Gradients)> {
        let n = traj.len();
        if n == 0 {
            return Err(CoreError::InvalidInput("empty trajectory".into()));
        }
        let weights = vis_weights(cfg.object_weight);
        let feats: Vec<Vec<f64>> = traj.observations.iter().map(Observation::features).collect();
        // the carry is h_{t-1}; h_0 is computed on the first tape
        let init = match self.layers.memory {
            Some((gru, _)) => vec![vec![0.0; gru.hidden]],
            None => Vec::new(),
        };
        let mut parts = LossParts::default();
        let out = truncated_bptt(&self.params, n, cfg.window, init, |tape, t, carry| {
            let x = tape.input(feats[t].clone());
            let (z, _) = self.latent_node(tape, x, None).map_err(to_nn)?;
            let h = match (self.layers.memory, carry.first()) {
                (Some((gru, _)), Some(&h0)) if t == 0 => Some(gru.forward(tape, z, h0)?),
                (_, h) => h.copied(),
            };
            // z_t = u_t + C h_t with h_t carried; recompute u_t on this tape
            let z = match (self.layers.memory, h) {
                (Some((_, corr)), Some(h)) => {
                    let c = corr.forward(tape, h)?;
                    tape.add(z, c)?
                }
                _ => z,
            };
            let x1 = tape.input(feats[t + 1].clone());
            let (z1, h1) = self.latent_node(tape, x1, h).map_err(to_nn)?;
            let last = t + 1 == n;
            let status = [f64::from(u8::from(last)), f64::from(u8::from(last && traj.success))];
            let (loss, p) = self
                .step_loss(tape, cfg, &weights, z, z1, traj.actions[t].id(), &traj.observations[t + 1], status)
                .map_err(to_nn)?;
            parts.z += p.z;
            parts.vis += p.vis;
            parts.barrel += p.barrel;
            parts.terminal += p.terminal;
            Ok((h1.into_iter().collect(), Some(loss)))
        })?;
        Ok((out.loss, parts, out.grads))
    }
}

fn to_nn(e: CoreError) -> hubtopo_nn::NnError {
    match e {
        CoreError::Nn(e) => e,
        other => hubtopo_nn::NnError::InvalidInput(other.to_string()),
    }
}

/// Mean per-step loss of every epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
}

impl TrainLog {
    pub fn to_text(&self) -> String {
        self.epoch_loss.iter().enumerate().map(|(e, l)| format!("epoch {e} loss {l}\n")).collect()
    }
}

/// Trains on every trajectory (successes and failures), one optimizer step
/// per trajectory with per-step-mean gradients.
pub fn train_low_level(trajs: &[&Trajectory], cfg: &LowLevelConfig) -> Result<(LowLevelModel, TrainLog)> {
    if trajs.is_empty() || trajs.iter().all(|t| t.is_empty()) {
        return Err(CoreError::InvalidInput("no transitions to train on".into()));
    }
    let mut model = LowLevelModel::new(cfg);
    let adam = Adam::new(cfg.lr).with_clip(5.0);
    let mut state = adam.init(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..trajs.len()).filter(|&i| !trajs[i].is_empty()).collect();
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut steps) = (0.0, 0usize);
        for &i in &order {
            let (loss, _, mut grads) = model.trajectory_loss(cfg, trajs[i])?;
            if !loss.is_finite() {
                return Err(CoreError::Diverged(format!("low-level loss {loss} at epoch {epoch}, trajectory {i}")));
            }
            grads.scale(1.0 / trajs[i].len() as f64);
            adam.step(&mut model.params, &grads, &mut state)?;
            total += loss;
            steps += trajs[i].len();
        }
        log.epoch_loss.push(total / steps as f64);
    }
    Ok((model, log))
}
