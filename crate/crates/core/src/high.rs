//! Hub dynamics model: a GRU over hub embeddings with a softmax head whose
//! logits are masked to the out-neighbors of the current hub.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hubtopo_nn::{softmax_masked, Adam, Dense, Gradients, GruCell, ParamSet, Tape};

use crate::topology::BehaviorTopology;
use crate::{CoreError, Result};

pub const KIND: &str = "highlevel";

/// Next-hub predictor over hub histories, as consumed by search.
///
/// `Memory` summarizes a history so extending it by one hub is O(1).
pub trait HubModel {
    type Memory: Clone;

    /// Memory after the one-hub history `(start)`.
    fn begin(&self, start: usize) -> Self::Memory;

    /// Memory after appending `hub` to the history summarized by `memory`.
    fn advance(&self, memory: &Self::Memory, hub: usize) -> Self::Memory;

    /// Distribution over next hubs given the history (ending in `last`).
    /// Non-edges get exactly 0; an all-zero vector signals a dead end.
    fn next_dist(&self, memory: &Self::Memory, last: usize) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub lr: f64,
    pub pretrain_traversals: usize,
    pub pretrain_max_len: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for HighConfig {
    fn default() -> Self {
        HighConfig {
            embed_dim: 32,
            hidden: 64,
            lr: 2e-4,
            pretrain_traversals: 2000,
            pretrain_max_len: 64,
            epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighModel {
    pub params: ParamSet,
    embed: hubtopo_nn::ParamId,
    gru: GruCell,
    head: Dense,
    successors: Vec<Vec<usize>>,
}

/// Every proper prefix of every sequence paired with its successor.
pub fn make_training_examples(sequences: &[Vec<usize>]) -> Vec<(Vec<usize>, usize)> {
    sequences
        .iter()
        .flat_map(|s| (1..s.len()).map(move |m| (s[..m].to_vec(), s[m])))
        .collect()
}

impl HighModel {
    pub fn new(n_hubs: usize, successors: Vec<Vec<usize>>, cfg: &HighConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut ps = ParamSet::new();
        let embed = ps.add_uniform("embed", vec![n_hubs.max(1), cfg.embed_dim], 1, &mut rng);
        let gru = GruCell::new(&mut ps, "gru", cfg.embed_dim, cfg.hidden, &mut rng);
        let head = Dense::new(&mut ps, "head", cfg.hidden, n_hubs.max(1), &mut rng);
        HighModel { params: ps, embed, gru, head, successors }
    }

    pub fn for_topology(topo: &BehaviorTopology, cfg: &HighConfig) -> Self {
        HighModel::new(topo.hub_count(), topo.adjacency(), cfg)
    }

    pub fn from_params(ps: ParamSet, successors: Vec<Vec<usize>>) -> Result<Self> {
        let embed = ps.id_of("embed").ok_or_else(|| CoreError::Format("high model: no embedding".into()))?;
        let gru = GruCell::bind(&ps, "gru")?;
        let head = Dense::bind(&ps, "head")?;
        let n = ps.get(embed).dims2().0;
        if head.output != n || successors.len() != n {
            return Err(CoreError::Format(format!("high model: {n} hubs, head {}, topology {}", head.output, successors.len())));
        }
        Ok(HighModel { params: ps, embed, gru, head, successors })
    }

    pub fn hub_count(&self) -> usize {
        self.successors.len()
    }

    pub fn successors(&self) -> &[Vec<usize>] {
        &self.successors
    }

    pub fn embedding(&self, hub: usize) -> Vec<f64> {
        let t = self.params.get(self.embed);
        let (_, d) = t.dims2();
        t.data()[hub * d..(hub + 1) * d].to_vec()
    }

    pub fn embeddings(&self) -> Vec<Vec<f64>> {
        (0..self.hub_count()).map(|h| self.embedding(h)).collect()
    }

    fn mask(&self, last: usize) -> Vec<bool> {
        let mut m = vec![false; self.hub_count()];
        for &s in &self.successors[last] {
            m[s] = true;
        }
        m
    }

    fn step_hidden(&self, h: &[f64], hub: usize) -> Vec<f64> {
        hubtopo_nn::gru_step(&self.params, &self.gru, &self.embedding(hub), h).expect("shapes fixed at construction")
    }

    /// P(next | history) with non-edges at exactly zero.
    pub fn next_hub_dist(&self, history: &[usize]) -> Result<Vec<f64>> {
        let &last = history.last().ok_or_else(|| CoreError::InvalidInput("empty hub history".into()))?;
        if let Some(&bad) = history.iter().find(|&&h| h >= self.hub_count()) {
            return Err(CoreError::InvalidInput(format!("hub {bad} out of range")));
        }
        let mut mem = self.begin(history[0]);
        for &h in &history[1..] {
            mem = self.advance(&mem, h);
        }
        Ok(self.next_dist(&mem, last))
    }

    /// Summed masked cross-entropy over every prefix of `seq`, and the
    /// number of terms. Every consecutive pair must be an edge.
    pub fn sequence_loss(&self, seq: &[usize]) -> Result<(f64, usize, Gradients)> {
        let mut tape = Tape::new(&self.params);
        let table = tape.param(self.embed);
        let mut h = tape.input(vec![0.0; self.gru.hidden]);
        let mut terms = Vec::new();
        for m in 0..seq.len().saturating_sub(1) {
            let x = tape.row(table, seq[m])?;
            h = self.gru.forward(&mut tape, x, h)?;
            let mask = self.mask(seq[m]);
            if !mask[seq[m + 1]] {
                return Err(CoreError::InvalidInput(format!("({}, {}) is not an edge", seq[m], seq[m + 1])));
            }
            let logits = self.head.forward(&mut tape, h)?;
            let mut target = vec![0.0; self.hub_count()];
            target[seq[m + 1]] = 1.0;
            terms.push(tape.softmax_cross_entropy(logits, target, Some(mask))?);
        }
        if terms.is_empty() {
            return Ok((0.0, 0, Gradients::zeros_like(&self.params)));
        }
        let loss = tape.sum(&terms)?;
        Ok((tape.scalar(loss), terms.len(), tape.backward(loss)?))
    }

    /// One pass over `sequences` in shuffled order, one optimizer step per
    /// sequence. Returns the mean per-prediction loss.
    fn epoch(
        &mut self,
        sequences: &[Vec<usize>],
        adam: &Adam,
        state: &mut hubtopo_nn::OptimizerState,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let mut order: Vec<usize> = (0..sequences.len()).collect();
        order.shuffle(rng);
        let (mut total, mut count) = (0.0, 0);
        for i in order {
            let (loss, n, mut grads) = self.sequence_loss(&sequences[i])?;
            if n == 0 {
                continue;
            }
            if !loss.is_finite() {
                return Err(CoreError::Diverged(format!("high model loss {loss}")));
            }
            grads.scale(1.0 / n as f64);
            adam.step(&mut self.params, &grads, state)?;
            total += loss;
            count += n;
        }
        Ok(if count == 0 { 0.0 } else { total / count as f64 })
    }

    /// Trains for `epochs` passes; returns per-epoch mean loss.
    pub fn train(&mut self, sequences: &[Vec<usize>], lr: f64, epochs: usize, seed: u64) -> Result<Vec<f64>> {
        if sequences.iter().all(|s| s.len() < 2) {
            return Err(CoreError::InvalidInput("no hub transitions to train on".into()));
        }
        let adam = Adam::new(lr).with_clip(5.0);
        let mut state = adam.init(&self.params);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..epochs).map(|_| self.epoch(sequences, &adam, &mut state, &mut rng)).collect()
    }
}

/// Random walks from start hubs choosing uniformly among out-edges, with
/// between 2 and `max_len` hubs. Starts without out-edges are skipped.
pub fn sample_traversals(topo: &BehaviorTopology, n: usize, max_len: usize, seed: u64) -> Vec<Vec<usize>> {
    let adj = topo.adjacency();
    let starts: Vec<usize> = topo
        .hubs
        .iter()
        .filter(|h| h.kinds.contains(crate::topology::HubKinds::START) && !adj[h.id].is_empty())
        .map(|h| h.id)
        .collect();
    if starts.is_empty() || max_len < 2 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut walk = vec![starts[rng.gen_range(0..starts.len())]];
            let len = rng.gen_range(2..=max_len);
            while walk.len() < len {
                let next = &adj[*walk.last().expect("walk is non-empty")];
                if next.is_empty() {
                    break;
                }
                walk.push(next[rng.gen_range(0..next.len())]);
            }
            walk
        })
        .collect()
}

/// Builds a model, pretrains it on one pass of random traversals, then
/// trains on the demonstrated sequences. Returns the model and the
/// per-epoch demonstration loss.
pub fn train_high(topo: &BehaviorTopology, cfg: &HighConfig) -> Result<(HighModel, Vec<f64>)> {
    let mut model = HighModel::for_topology(topo, cfg);
    let walks = sample_traversals(topo, cfg.pretrain_traversals, cfg.pretrain_max_len, cfg.seed ^ 0x7a11);
    if !walks.is_empty() {
        model.train(&walks, cfg.lr, 1, cfg.seed ^ 1)?;
    }
    let log = model.train(&topo.sequences, cfg.lr, cfg.epochs, cfg.seed ^ 2)?;
    Ok((model, log))
}

impl HubModel for HighModel {
    type Memory = Vec<f64>;

    fn begin(&self, start: usize) -> Vec<f64> {
        self.step_hidden(&vec![0.0; self.gru.hidden], start)
    }

    fn advance(&self, memory: &Vec<f64>, hub: usize) -> Vec<f64> {
        self.step_hidden(memory, hub)
    }

    fn next_dist(&self, memory: &Vec<f64>, last: usize) -> Vec<f64> {
        let logits = self.head.apply(&self.params, memory);
        softmax_masked(&logits, Some(&self.mask(last)))
    }
}
