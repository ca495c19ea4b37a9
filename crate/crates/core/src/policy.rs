//! Target-conditioned recurrent policies, one per source hub, trained by
//! behavior cloning on perturbed edge segments.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use hubtopo_maze::{Observation, Trajectory, FEATURE_LEN, NUM_ACTIONS, VIEW_LEN};
use hubtopo_nn::io::{load_params_of_kind, save_params, seal_text, unseal_text, ParamHeader};
use hubtopo_nn::{gru_step, softmax_masked, truncated_bptt, Adam, Dense, Gradients, GruCell, ParamSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::exec::argmax;
use crate::topology::{BehaviorTopology, Segment};
use crate::{CoreError, Result};

pub const KIND: &str = "policy";
const MANIFEST: &str = "policies.txt";
const HEADER: &str = "hubtopo-policies 1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    pub obs_hidden: usize,
    pub memory: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Stop once the clean loss has not improved by `min_delta`, nor the
    /// greedy mistakes dropped, for this many epochs.
    pub patience: usize,
    pub min_delta: f64,
    /// Also stop once every canonical step is predicted greedily and the
    /// clean loss is within this gap of the smoothing floor.
    pub converged_gap: f64,
    /// Standard deviation of the Gaussian noise added to raster inputs.
    pub noise: f64,
    pub smoothing: f64,
    pub p_canonical: f64,
    pub p_truncated: f64,
    pub p_preroll: f64,
    pub max_perturb: usize,
    pub clip: f64,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            obs_hidden: 128,
            memory: 64,
            lr: 1e-3,
            epochs: 200,
            patience: 30,
            min_delta: 1e-3,
            converged_gap: 5e-3,
            noise: 0.01,
            smoothing: 0.05,
            p_canonical: 0.8,
            p_truncated: 0.1,
            p_preroll: 0.1,
            max_perturb: 3,
            clip: 5.0,
            seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.p_canonical, self.p_truncated, self.p_preroll];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CoreError::Config(format!("perturbation mix {probs:?} is not a distribution")));
        }
        if !(0.0..1.0).contains(&self.smoothing) || !(self.noise >= 0.0) || !(self.lr > 0.0) {
            return Err(CoreError::Config("policy smoothing, noise or lr out of range".into()));
        }
        if self.obs_hidden == 0 || self.memory == 0 || self.max_perturb == 0 {
            return Err(CoreError::Config("policy sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Canonical,
    /// Drops this many leading steps.
    Truncated(usize),
    /// Prepends this many preceding steps of the source trajectory.
    Preroll(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeTrainingSegment {
    pub base: Segment,
    pub variant: Variant,
}

impl EdgeTrainingSegment {
    /// Action indices of the source trajectory to imitate.
    pub fn steps(&self) -> Range<usize> {
        match self.variant {
            Variant::Canonical => self.base.start..self.base.end,
            Variant::Truncated(k) => self.base.start + k..self.base.end,
            Variant::Preroll(k) => self.base.start - k..self.base.end,
        }
    }
}

pub fn perturb_segment<R: Rng>(seg: &Segment, cfg: &PolicyConfig, rng: &mut R) -> EdgeTrainingSegment {
    let u: f64 = rng.gen();
    let k = rng.gen_range(1..=cfg.max_perturb);
    let variant = if u < cfg.p_canonical {
        Variant::Canonical
    } else if u < cfg.p_canonical + cfg.p_truncated {
        match k.min(seg.len().saturating_sub(1)) {
            0 => Variant::Canonical,
            k => Variant::Truncated(k),
        }
    } else {
        match k.min(seg.start) {
            0 => Variant::Canonical,
            k => Variant::Preroll(k),
        }
    };
    EdgeTrainingSegment { base: *seg, variant }
}

/// Cross-entropy floor of a perfectly confident correct prediction under
/// label smoothing `alpha` over `k` classes.
pub fn smoothing_floor(alpha: f64, k: usize) -> f64 {
    let hi = 1.0 - alpha + alpha / k as f64;
    let lo = alpha / k as f64;
    -(hi * hi.ln() + (k - 1) as f64 * lo * lo.ln())
}

/// Encoder, recurrent memory and action head of one source hub.
#[derive(Debug, Clone)]
pub struct HubPolicy {
    params: ParamSet,
    enc: Dense,
    gru: GruCell,
    head: Dense,
}

impl HubPolicy {
    pub fn new(input: usize, cfg: &PolicyConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let enc = Dense::new(&mut params, "enc", input, cfg.obs_hidden, &mut rng);
        let gru = GruCell::new(&mut params, "gru", cfg.obs_hidden, cfg.memory, &mut rng);
        let head = Dense::new(&mut params, "head", cfg.memory, NUM_ACTIONS, &mut rng);
        HubPolicy { params, enc, gru, head }
    }

    pub fn from_params(params: ParamSet) -> Result<Self> {
        let enc = Dense::bind(&params, "enc")?;
        let gru = GruCell::bind(&params, "gru")?;
        let head = Dense::bind(&params, "head")?;
        if gru.input != enc.output || head.input != gru.hidden || head.output != NUM_ACTIONS {
            return Err(CoreError::Format("policy layer shapes do not chain".into()));
        }
        Ok(HubPolicy { params, enc, gru, head })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn input_len(&self) -> usize {
        self.enc.input
    }

    pub fn memory_len(&self) -> usize {
        self.gru.hidden
    }

    /// Action distribution for one input; updates `memory`.
    pub fn act(&self, input: &[f64], memory: &mut Vec<f64>) -> Result<Vec<f64>> {
        if input.len() != self.enc.input || memory.len() != self.gru.hidden {
            return Err(CoreError::InvalidInput(format!(
                "policy expects input {} and memory {}, got {} and {}",
                self.enc.input,
                self.gru.hidden,
                input.len(),
                memory.len()
            )));
        }
        let x: Vec<f64> = self.enc.apply(&self.params, input).into_iter().map(f64::tanh).collect();
        *memory = gru_step(&self.params, &self.gru, &x, memory)?;
        Ok(softmax_masked(&self.head.apply(&self.params, memory), None))
    }

    /// Forward-only version of `sequence_loss`.
    pub fn sequence_loss_value(&self, inputs: &[Vec<f64>], actions: &[usize], smoothing: f64) -> Result<f64> {
        Ok(self.sequence_eval(inputs, actions, smoothing)?.0)
    }

    /// Mean smoothed cross-entropy and the number of steps whose greedy
    /// action differs from `actions`.
    pub fn sequence_eval(&self, inputs: &[Vec<f64>], actions: &[usize], smoothing: f64) -> Result<(f64, usize)> {
        let mut memory = vec![0.0; self.gru.hidden];
        let mut total = 0.0;
        let mut wrong = 0;
        for (x, &a) in inputs.iter().zip(actions) {
            let p = self.act(x, &mut memory)?;
            for (k, pk) in p.iter().enumerate() {
                let target = smoothing / NUM_ACTIONS as f64 + if k == a { 1.0 - smoothing } else { 0.0 };
                total -= target * pk.max(f64::MIN_POSITIVE).ln();
            }
            wrong += usize::from(argmax(&p) != a);
        }
        Ok((total / inputs.len() as f64, wrong))
    }

    /// Mean smoothed cross-entropy over one sequence, starting from zero
    /// memory.
    pub fn sequence_loss(&self, inputs: &[Vec<f64>], actions: &[usize], smoothing: f64) -> Result<(f64, Gradients)> {
        if inputs.len() != actions.len() || inputs.is_empty() {
            return Err(CoreError::InvalidInput("policy sequence needs one action per input".into()));
        }
        let n = inputs.len();
        let weight = 1.0 / n as f64;
        let out = truncated_bptt(&self.params, n, n, vec![vec![0.0; self.gru.hidden]], |tape, t, carry| {
            let x = tape.input(inputs[t].clone());
            let pre = self.enc.forward(tape, x)?;
            let e = tape.tanh(pre);
            let h = self.gru.forward(tape, e, carry[0])?;
            let logits = self.head.forward(tape, h)?;
            let mut target = vec![smoothing / NUM_ACTIONS as f64; NUM_ACTIONS];
            target[actions[t]] += 1.0 - smoothing;
            let ce = tape.softmax_cross_entropy(logits, target, None)?;
            Ok((vec![h], Some(tape.scale(ce, weight))))
        })?;
        Ok((out.loss, out.grads))
    }
}

/// Network input: observation features followed by the target embedding.
pub fn policy_input(obs: &Observation, target_embedding: &[f64]) -> Vec<f64> {
    let mut x = obs.features();
    x.extend_from_slice(target_embedding);
    x
}

/// Per-hub losses, one entry per epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyLog {
    /// Mean training loss on perturbed, noisy segments.
    pub losses: BTreeMap<usize, Vec<f64>>,
    /// Mean loss on the canonical segments without noise, measured after
    /// the epoch; early stopping watches this one.
    pub clean: BTreeMap<usize, Vec<f64>>,
    /// Hubs left without a policy because they have no out-edges.
    pub skipped: Vec<usize>,
}

impl PolicyLog {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let fmt = |l: &[f64]| l.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ");
        for (hub, l) in &self.losses {
            let _ = writeln!(s, "hub {hub} epochs {} loss {}", l.len(), fmt(l));
            let _ = writeln!(s, "hub {hub} clean {}", fmt(self.clean.get(hub).map_or(&[][..], Vec::as_slice)));
        }
        let skipped: Vec<String> = self.skipped.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "skipped {}", skipped.join(" "));
        s
    }
}

#[derive(Debug, Clone)]
pub struct PolicyBank {
    policies: BTreeMap<usize, HubPolicy>,
    /// Target conditioning vectors, indexed by hub id.
    embeddings: Vec<Vec<f64>>,
}

struct Example<'a> {
    seg: Segment,
    traj: &'a Trajectory,
    target: usize,
}

fn segment_key(seg: &Segment, traj: &Trajectory, max_perturb: usize) -> (usize, Vec<Vec<u64>>, Vec<usize>) {
    // the preroll context is part of the key
    let from = seg.start.saturating_sub(max_perturb);
    let obs = traj.observations[from..=seg.end]
        .iter()
        .map(|o| o.features().iter().map(|v| v.to_bits()).collect())
        .collect();
    let actions = traj.actions[from..seg.end].iter().map(|a| a.id()).collect();
    (seg.start - from, obs, actions)
}

fn hub_seed(seed: u64, hub: usize) -> u64 {
    seed ^ (hub as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn canonical(ex: &Example, embeddings: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    (ex.seg.start..ex.seg.end)
        .map(|t| (policy_input(&ex.traj.observations[t], &embeddings[ex.target]), ex.traj.actions[t].id()))
        .unzip()
}

type Trained = (HubPolicy, Vec<f64>, Vec<f64>);

fn train_one(hub: usize, examples: &[Example], embeddings: &[Vec<f64>], cfg: &PolicyConfig) -> Result<Trained> {
    let seed = hub_seed(cfg.seed, hub);
    let mut policy = HubPolicy::new(FEATURE_LEN + embeddings[0].len(), cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| CoreError::Config(e.to_string()))?;
    let adam = Adam::new(cfg.lr).with_clip(cfg.clip);
    let mut state = adam.init(policy.params());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let clean_sets: Vec<_> = examples.iter().map(|ex| canonical(ex, embeddings)).collect();
    let mut losses = Vec::new();
    let mut clean = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_wrong = usize::MAX;
    let floor = smoothing_floor(cfg.smoothing, NUM_ACTIONS);
    let mut stale = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let ex = &examples[i];
            let ts = perturb_segment(&ex.seg, cfg, &mut rng);
            let steps = ts.steps();
            let mut inputs = Vec::with_capacity(steps.len());
            let mut actions = Vec::with_capacity(steps.len());
            for t in steps {
                let mut x = policy_input(&ex.traj.observations[t], &embeddings[ex.target]);
                if cfg.noise > 0.0 {
                    x[..VIEW_LEN].iter_mut().for_each(|v| *v += noise.sample(&mut rng));
                }
                inputs.push(x);
                actions.push(ex.traj.actions[t].id());
            }
            let (loss, grads) = policy.sequence_loss(&inputs, &actions, cfg.smoothing)?;
            if !loss.is_finite() {
                return Err(CoreError::Diverged(format!("policy of hub {hub}: loss {loss}")));
            }
            adam.step(policy.params_mut(), &grads, &mut state)?;
            total += loss;
        }
        losses.push(total / examples.len() as f64);
        let (mut c, mut wrong) = (0.0, 0);
        for (inputs, actions) in &clean_sets {
            let (l, w) = policy.sequence_eval(inputs, actions, cfg.smoothing)?;
            c += l;
            wrong += w;
        }
        let c = c / clean_sets.len() as f64;
        clean.push(c);
        if wrong == 0 && c <= floor + cfg.converged_gap {
            break;
        }
        // a rare decisive step barely moves the mean loss, so fewer greedy
        // mistakes also counts as progress
        if c < best - cfg.min_delta || wrong < best_wrong {
            best = best.min(c);
            best_wrong = best_wrong.min(wrong);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok((policy, losses, clean))
}

impl PolicyBank {
    pub fn from_parts(policies: BTreeMap<usize, HubPolicy>, embeddings: Vec<Vec<f64>>) -> Self {
        PolicyBank { policies, embeddings }
    }

    /// Trains a policy for every hub with out-edges on all of its outgoing
    /// segments. `trajectories` are indexed like the topology's sequences.
    /// Identical segments (same observations, actions and preroll context)
    /// are kept once.
    pub fn train(
        topo: &BehaviorTopology,
        trajectories: &[&Trajectory],
        embeddings: Vec<Vec<f64>>,
        cfg: &PolicyConfig,
    ) -> Result<(PolicyBank, PolicyLog)> {
        cfg.validate()?;
        if embeddings.len() != topo.hub_count() || embeddings.iter().any(|e| e.len() != embeddings[0].len()) {
            return Err(CoreError::InvalidInput("one embedding of equal length per hub required".into()));
        }
        let mut per_hub: BTreeMap<usize, Vec<Example>> = BTreeMap::new();
        let mut seen = HashSet::new();
        for (&(source, target), segs) in &topo.edges {
            for seg in segs {
                let traj = trajectories
                    .get(seg.trajectory)
                    .ok_or_else(|| CoreError::InvalidInput(format!("segment refers to trajectory {}", seg.trajectory)))?;
                if seg.is_empty() || seg.end > traj.len() {
                    return Err(CoreError::InvalidInput(format!("segment {seg:?} does not fit its trajectory")));
                }
                if seen.insert((source, target, segment_key(seg, traj, cfg.max_perturb))) {
                    per_hub.entry(source).or_default().push(Example { seg: *seg, traj, target });
                }
            }
        }
        let skipped = (0..topo.hub_count()).filter(|h| !per_hub.contains_key(h)).collect();
        let trained = per_hub
            .par_iter()
            .map(|(&hub, ex)| train_one(hub, ex, &embeddings, cfg).map(|r| (hub, r)))
            .collect::<Result<Vec<_>>>()?;
        let mut policies = BTreeMap::new();
        let mut log = PolicyLog { losses: BTreeMap::new(), clean: BTreeMap::new(), skipped };
        for (hub, (policy, losses, clean)) in trained {
            policies.insert(hub, policy);
            log.losses.insert(hub, losses);
            log.clean.insert(hub, clean);
        }
        Ok((PolicyBank { policies, embeddings }, log))
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn has_policy(&self, hub: usize) -> bool {
        self.policies.contains_key(&hub)
    }

    pub fn policy(&self, hub: usize) -> Option<&HubPolicy> {
        self.policies.get(&hub)
    }

    pub fn hubs(&self) -> impl Iterator<Item = usize> + '_ {
        self.policies.keys().copied()
    }

    pub fn embedding(&self, hub: usize) -> Option<&[f64]> {
        self.embeddings.get(hub).map(Vec::as_slice)
    }

    /// Fresh edge-local memory.
    pub fn new_memory(&self, source: usize) -> Result<Vec<f64>> {
        self.policies
            .get(&source)
            .map(|p| vec![0.0; p.memory_len()])
            .ok_or_else(|| CoreError::InvalidInput(format!("no policy for hub {source}")))
    }

    pub fn act(&self, source: usize, target: usize, obs: &Observation, memory: &mut Vec<f64>) -> Result<Vec<f64>> {
        let policy = self
            .policies
            .get(&source)
            .ok_or_else(|| CoreError::InvalidInput(format!("no policy for hub {source}")))?;
        let emb = self
            .embedding(target)
            .ok_or_else(|| CoreError::InvalidInput(format!("no embedding for hub {target}")))?;
        policy.act(&policy_input(obs, emb), memory)
    }

    /// One params file per policy plus a sealed manifest holding the
    /// embeddings.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut m = String::new();
        let _ = writeln!(m, "{HEADER}");
        let ids: Vec<String> = self.policies.keys().map(usize::to_string).collect();
        let _ = writeln!(m, "policies {}", ids.join(" "));
        let _ = writeln!(m, "embeddings {}", self.embeddings.len());
        for e in &self.embeddings {
            let v: Vec<String> = e.iter().map(f64::to_string).collect();
            let _ = writeln!(m, "{}", v.join(" "));
        }
        for (&hub, p) in &self.policies {
            let header = ParamHeader { kind: KIND.into(), tag: hub as u64 };
            save_params(&dir.join(policy_file(hub)), &header, p.params())?;
        }
        std::fs::write(dir.join(MANIFEST), seal_text(&m))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST))?;
        let body = unseal_text(&text)?;
        let bad = |what: &str| CoreError::Format(format!("policy manifest: {what}"));
        let mut lines = body.lines();
        if lines.next() != Some(HEADER) {
            return Err(bad("header"));
        }
        let ids: Vec<usize> = lines
            .next()
            .and_then(|l| l.strip_prefix("policies"))
            .ok_or_else(|| bad("policies line"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("hub id")))
            .collect::<Result<_>>()?;
        let n: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("embeddings "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("embeddings line"))?;
        let embeddings = (0..n)
            .map(|_| {
                lines
                    .next()
                    .ok_or_else(|| bad("missing embedding"))?
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| bad("embedding value")))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut policies = BTreeMap::new();
        for hub in ids {
            let (tag, ps) = load_params_of_kind(&dir.join(policy_file(hub)), KIND)?;
            if tag != hub as u64 {
                return Err(bad("params tag does not match hub"));
            }
            policies.insert(hub, HubPolicy::from_params(ps)?);
        }
        Ok(PolicyBank { policies, embeddings })
    }

    /// Bit-exact comparison of every tensor and embedding.
    pub fn same_as(&self, other: &PolicyBank) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.embeddings.len() == other.embeddings.len()
            && self.embeddings.iter().zip(&other.embeddings).all(|(a, b)| bits(a) == bits(b))
            && self.policies.len() == other.policies.len()
            && self.policies.iter().zip(&other.policies).all(|((ha, a), (hb, b))| {
                ha == hb
                    && a.params.iter().zip(b.params.iter()).all(|((na, ta), (nb, tb))| {
                        na == nb && ta.shape() == tb.shape() && bits(ta.data()) == bits(tb.data())
                    })
            })
    }
}

fn policy_file(hub: usize) -> String {
    format!("policy_{hub:03}.htnn")
}
