use rand_chacha::ChaCha8Rng;

use crate::{NnError, NodeId, ParamId, ParamSet, Tape, Tensor};

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new(ps: &mut ParamSet, name: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = ps.add_uniform(format!("{name}.w"), vec![output, input], input, rng);
        let b = ps.add_uniform(format!("{name}.b"), vec![output], input, rng);
        Dense { w, b, input, output }
    }

    /// Rebinds a layer to tensors already present in `ps`.
    pub fn bind(ps: &ParamSet, name: &str) -> Result<Self, NnError> {
        let w = lookup(ps, &format!("{name}.w"))?;
        let b = lookup(ps, &format!("{name}.b"))?;
        let (output, input) = ps.get(w).dims2();
        Ok(Dense { w, b, input, output })
    }

    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, NnError> {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        tape.linear(w, x, Some(b))
    }

    /// Tape-free forward pass for inference.
    pub fn apply(&self, ps: &ParamSet, x: &[f64]) -> Vec<f64> {
        let w = ps.get(self.w).data();
        let mut y = ps.get(self.b).data().to_vec();
        for (r, yr) in y.iter_mut().enumerate() {
            let row = &w[r * self.input..(r + 1) * self.input];
            *yr += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        y
    }
}

/// Gated recurrent unit:
///
/// ```text
/// u  = σ(W_u x + U_u h + b_u)
/// r  = σ(W_r x + U_r h + b_r)
/// n  = tanh(W_n x + U_n (r ⊙ h) + b_n)
/// h' = (1 − u) ⊙ n + u ⊙ h
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    pub w_update: ParamId,
    pub u_update: ParamId,
    pub b_update: ParamId,
    pub w_reset: ParamId,
    pub u_reset: ParamId,
    pub b_reset: ParamId,
    pub w_cand: ParamId,
    pub u_cand: ParamId,
    pub b_cand: ParamId,
}

const GRU_PARTS: [&str; 9] = [
    "w_update", "u_update", "b_update", "w_reset", "u_reset", "b_reset", "w_cand", "u_cand", "b_cand",
];

impl GruCell {
    pub fn new(ps: &mut ParamSet, name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut ids = Vec::with_capacity(9);
        for part in GRU_PARTS {
            let shape = match &part[..1] {
                "w" => vec![hidden, input],
                "u" => vec![hidden, hidden],
                _ => vec![hidden],
            };
            ids.push(ps.add_uniform(format!("{name}.{part}"), shape, hidden, rng));
        }
        Self::from_ids(input, hidden, &ids)
    }

    pub fn bind(ps: &ParamSet, name: &str) -> Result<Self, NnError> {
        let ids = GRU_PARTS
            .iter()
            .map(|p| lookup(ps, &format!("{name}.{p}")))
            .collect::<Result<Vec<_>, _>>()?;
        let (hidden, input) = ps.get(ids[0]).dims2();
        Ok(Self::from_ids(input, hidden, &ids))
    }

    fn from_ids(input: usize, hidden: usize, ids: &[ParamId]) -> Self {
        GruCell {
            input,
            hidden,
            w_update: ids[0],
            u_update: ids[1],
            b_update: ids[2],
            w_reset: ids[3],
            u_reset: ids[4],
            b_reset: ids[5],
            w_cand: ids[6],
            u_cand: ids[7],
            b_cand: ids[8],
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: NodeId, h: NodeId) -> Result<NodeId, NnError> {
        let xl = tape.value(x).len();
        let hl = tape.value(h).len();
        if xl != self.input || hl != self.hidden {
            return Err(NnError::Shape(format!(
                "gru: expected input {} / hidden {}, got {xl} / {hl}",
                self.input, self.hidden
            )));
        }
        let gate = |tape: &mut Tape, w: ParamId, u: ParamId, b: ParamId, hh: NodeId| {
            let (w, u, b) = (tape.param(w), tape.param(u), tape.param(b));
            let wx = tape.linear(w, x, Some(b))?;
            let uh = tape.linear(u, hh, None)?;
            tape.add(wx, uh)
        };
        let u_pre = gate(tape, self.w_update, self.u_update, self.b_update, h)?;
        let u = tape.sigmoid(u_pre);
        let r_pre = gate(tape, self.w_reset, self.u_reset, self.b_reset, h)?;
        let r = tape.sigmoid(r_pre);
        let rh = tape.mul(r, h)?;
        let n_pre = gate(tape, self.w_cand, self.u_cand, self.b_cand, rh)?;
        let n = tape.tanh(n_pre);
        let keep = tape.one_minus(u);
        let a = tape.mul(keep, n)?;
        let b = tape.mul(u, h)?;
        tape.add(a, b)
    }
}

/// One GRU step outside any training loop.
pub fn gru_step(ps: &ParamSet, cell: &GruCell, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>, NnError> {
    let mut tape = Tape::new(ps);
    let x = tape.input(x.to_vec());
    let h = tape.input(h_prev.to_vec());
    let out = cell.forward(&mut tape, x, h)?;
    Ok(tape.value(out).to_vec())
}

pub(crate) fn lookup(ps: &ParamSet, name: &str) -> Result<ParamId, NnError> {
    ps.id_of(name)
        .ok_or_else(|| NnError::InvalidInput(format!("missing parameter {name}")))
}

/// Zeroes every tensor, e.g. to build analytic test cases.
pub fn zero_all(ps: &mut ParamSet) {
    for id in ps.ids().collect::<Vec<_>>() {
        let shape = ps.get(id).shape().to_vec();
        *ps.get_mut(id) = Tensor::zeros(shape);
    }
}
