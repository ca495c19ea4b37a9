//! Reverse-mode differentiation over a flat operation tape.
//!
//! Every call on [`Tape`] evaluates one primitive eagerly and records it.
//! [`Tape::backward`] walks the records in reverse exactly once and
//! accumulates parameter gradients into a [`Gradients`] buffer.

use crate::{Gradients, NnError, ParamId, ParamSet};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    Linear { w: NodeId, x: NodeId, b: Option<NodeId> },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    OneMinus(NodeId),
    Concat(Vec<NodeId>),
    Row { table: NodeId, index: usize },
    Sum(Vec<NodeId>),
    SquaredError { pred: NodeId, target: NodeId, weights: Option<Vec<f64>> },
    SoftmaxCrossEntropy { logits: NodeId, target: Vec<f64>, mask: Option<Vec<bool>> },
    SigmoidBce { logits: NodeId, target: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Vec<f64>,
    /// Op-specific cached forward quantities (softmax probabilities, sigmoids).
    aux: Vec<f64>,
    rows: usize,
    cols: usize,
    needs_grad: bool,
}

/// Records one forward pass. Parameter values are borrowed, not copied.
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        let node = &self.nodes[id.0];
        match node.op {
            Op::Param(p) => self.params.get(p).data(),
            _ => &node.value,
        }
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id)[0]
    }

    fn dims(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    fn needs_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn push(&mut self, op: Op) -> NodeId {
        let (value, aux, rows, cols) = self.eval(&op);
        let needs_grad = match &op {
            Op::Input => false,
            Op::Param(_) => true,
            _ => op_inputs(&op).iter().any(|&i| self.needs_grad(i)),
        };
        self.nodes.push(Node { op, value, aux, rows, cols, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant (non-differentiated) vector input.
    pub fn input(&mut self, value: Vec<f64>) -> NodeId {
        let rows = value.len();
        self.nodes.push(Node {
            op: Op::Input,
            value,
            aux: Vec::new(),
            rows,
            cols: 1,
            needs_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Parameter leaf; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        let (rows, cols) = self.params.get(id).dims2();
        self.nodes.push(Node {
            op: Op::Param(id),
            value: Vec::new(),
            aux: Vec::new(),
            rows,
            cols,
            needs_grad: true,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(n);
        n
    }

    /// `w · x + b` with `w` of shape (out, in).
    pub fn linear(&mut self, w: NodeId, x: NodeId, b: Option<NodeId>) -> Result<NodeId, NnError> {
        let (out, inp) = self.dims(w);
        let xl = self.value(x).len();
        if xl != inp {
            return Err(NnError::Shape(format!("linear: weight is {out}x{inp}, input has {xl}")));
        }
        if let Some(b) = b {
            if self.value(b).len() != out {
                return Err(NnError::Shape(format!(
                    "linear: bias has {}, expected {out}",
                    self.value(b).len()
                )));
            }
        }
        Ok(self.push(Op::Linear { w, x, b }))
    }

    fn same_len(&self, a: NodeId, b: NodeId, what: &str) -> Result<(), NnError> {
        let (la, lb) = (self.value(a).len(), self.value(b).len());
        if la != lb {
            return Err(NnError::Shape(format!("{what}: lengths {la} and {lb}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.same_len(a, b, "add")?;
        Ok(self.push(Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.same_len(a, b, "sub")?;
        Ok(self.push(Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        self.same_len(a, b, "mul")?;
        Ok(self.push(Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        self.push(Op::Scale(a, factor))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Relu(a))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        self.push(Op::OneMinus(a))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        self.push(Op::Concat(parts.to_vec()))
    }

    /// Row `index` of a (rows, cols) table, e.g. an embedding lookup.
    pub fn row(&mut self, table: NodeId, index: usize) -> Result<NodeId, NnError> {
        let (rows, _) = self.dims(table);
        if index >= rows {
            return Err(NnError::Shape(format!("row {index} out of {rows}")));
        }
        Ok(self.push(Op::Row { table, index }))
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, terms: &[NodeId]) -> Result<NodeId, NnError> {
        if let Some(t) = terms.iter().find(|&&t| self.value(t).len() != 1) {
            return Err(NnError::Shape(format!("sum: node {} is not scalar", t.0)));
        }
        Ok(self.push(Op::Sum(terms.to_vec())))
    }

    /// Mean of `w_i (pred_i - target_i)^2`. Gradients flow into both sides.
    pub fn squared_error(
        &mut self,
        pred: NodeId,
        target: NodeId,
        weights: Option<Vec<f64>>,
    ) -> Result<NodeId, NnError> {
        self.same_len(pred, target, "squared_error")?;
        if let Some(w) = &weights {
            if w.len() != self.value(pred).len() {
                return Err(NnError::Shape("squared_error: weight length".into()));
            }
        }
        Ok(self.push(Op::SquaredError { pred, target, weights }))
    }

    /// Cross-entropy between `target` (a distribution) and softmax(logits).
    /// Masked-out classes get logit −∞, i.e. exactly zero probability.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        target: Vec<f64>,
        mask: Option<Vec<bool>>,
    ) -> Result<NodeId, NnError> {
        let k = self.value(logits).len();
        if target.len() != k || mask.as_ref().is_some_and(|m| m.len() != k) {
            return Err(NnError::Shape(format!("softmax_cross_entropy: {k} classes")));
        }
        if let Some(m) = &mask {
            if !m.iter().any(|&v| v) {
                return Err(NnError::InvalidInput("softmax_cross_entropy: every class masked".into()));
            }
            if m.iter().zip(&target).any(|(&keep, &t)| !keep && t != 0.0) {
                return Err(NnError::InvalidInput(
                    "softmax_cross_entropy: target mass on a masked class".into(),
                ));
            }
        }
        Ok(self.push(Op::SoftmaxCrossEntropy { logits, target, mask }))
    }

    /// Mean binary cross-entropy of sigmoid(logits) against targets in [0, 1].
    pub fn sigmoid_bce(&mut self, logits: NodeId, target: Vec<f64>) -> Result<NodeId, NnError> {
        if target.len() != self.value(logits).len() {
            return Err(NnError::Shape("sigmoid_bce: target length".into()));
        }
        Ok(self.push(Op::SigmoidBce { logits, target }))
    }

    fn eval(&self, op: &Op) -> (Vec<f64>, Vec<f64>, usize, usize) {
        let col = |v: Vec<f64>| {
            let n = v.len();
            (v, Vec::new(), n, 1)
        };
        match op {
            Op::Input | Op::Param(_) => unreachable!("leaves are not evaluated"),
            Op::Linear { w, x, b } => {
                let (out, inp) = self.dims(*w);
                let wv = self.value(*w);
                let xv = self.value(*x);
                let mut y = match b {
                    Some(b) => self.value(*b).to_vec(),
                    None => vec![0.0; out],
                };
                let nz: Vec<usize> = (0..inp).filter(|&j| xv[j] != 0.0).collect();
                if nz.len() * 2 < inp {
                    for (r, yr) in y.iter_mut().enumerate() {
                        let row = &wv[r * inp..(r + 1) * inp];
                        *yr += nz.iter().map(|&j| row[j] * xv[j]).sum::<f64>();
                    }
                } else {
                    for (r, yr) in y.iter_mut().enumerate() {
                        let row = &wv[r * inp..(r + 1) * inp];
                        *yr += row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                col(y)
            }
            Op::Add(a, b) => col(zip_map(self.value(*a), self.value(*b), |x, y| x + y)),
            Op::Sub(a, b) => col(zip_map(self.value(*a), self.value(*b), |x, y| x - y)),
            Op::Mul(a, b) => col(zip_map(self.value(*a), self.value(*b), |x, y| x * y)),
            Op::Scale(a, f) => col(self.value(*a).iter().map(|v| v * f).collect()),
            Op::Sigmoid(a) => col(self.value(*a).iter().map(|&v| sigmoid(v)).collect()),
            Op::Tanh(a) => col(self.value(*a).iter().map(|v| v.tanh()).collect()),
            Op::Relu(a) => col(self.value(*a).iter().map(|v| v.max(0.0)).collect()),
            Op::OneMinus(a) => col(self.value(*a).iter().map(|v| 1.0 - v).collect()),
            Op::Concat(parts) => col(parts.iter().flat_map(|p| self.value(*p).iter().copied()).collect()),
            Op::Row { table, index } => {
                let (_, cols) = self.dims(*table);
                col(self.value(*table)[index * cols..(index + 1) * cols].to_vec())
            }
            Op::Sum(terms) => col(vec![terms.iter().map(|t| self.scalar(*t)).sum()]),
            Op::SquaredError { pred, target, weights } => {
                let p = self.value(*pred);
                let t = self.value(*target);
                let n = p.len().max(1) as f64;
                let s: f64 = p
                    .iter()
                    .zip(t)
                    .enumerate()
                    .map(|(i, (a, b))| weights.as_ref().map_or(1.0, |w| w[i]) * (a - b) * (a - b))
                    .sum();
                col(vec![s / n])
            }
            Op::SoftmaxCrossEntropy { logits, target, mask } => {
                let probs = softmax_masked(self.value(*logits), mask.as_deref());
                let loss = target
                    .iter()
                    .zip(&probs)
                    .filter(|(t, _)| **t != 0.0)
                    .map(|(t, p)| -t * p.ln())
                    .sum();
                (vec![loss], probs, 1, 1)
            }
            Op::SigmoidBce { logits, target } => {
                let l = self.value(*logits);
                let n = l.len().max(1) as f64;
                // log(1 + e^x) - t x, computed stably.
                let loss: f64 = l
                    .iter()
                    .zip(target)
                    .map(|(&x, &t)| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p())
                    .sum();
                let s = l.iter().map(|&v| sigmoid(v)).collect();
                (vec![loss / n], s, 1, 1)
            }
        }
    }

    /// Re-evaluates every recorded op from the stored leaves.
    pub fn replay(&self) -> Vec<Vec<f64>> {
        let mut replayed = Tape {
            params: self.params,
            nodes: Vec::with_capacity(self.nodes.len()),
            param_nodes: vec![None; self.params.len()],
        };
        for node in &self.nodes {
            match &node.op {
                Op::Input | Op::Param(_) => replayed.nodes.push(node.clone()),
                op => {
                    let (value, aux, rows, cols) = replayed.eval(op);
                    replayed.nodes.push(Node {
                        op: op.clone(),
                        value,
                        aux,
                        rows,
                        cols,
                        needs_grad: node.needs_grad,
                    });
                }
            }
        }
        (0..replayed.nodes.len())
            .map(|i| replayed.value(NodeId(i)).to_vec())
            .collect()
    }

    pub fn backward(&self, loss: NodeId) -> Result<Gradients, NnError> {
        let mut grads = Gradients::zeros_like(self.params);
        self.backward_into(loss, &mut grads)?;
        Ok(grads)
    }

    /// Adds d(loss)/d(param) into `grads`.
    pub fn backward_into(&self, loss: NodeId, grads: &mut Gradients) -> Result<(), NnError> {
        if self.value(loss).len() != 1 {
            return Err(NnError::Shape(format!(
                "backward: loss has {} elements, expected a scalar",
                self.value(loss).len()
            )));
        }
        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        adj[loss.0] = vec![1.0];
        for i in (0..=loss.0).rev() {
            if adj[i].is_empty() || !self.nodes[i].needs_grad {
                continue;
            }
            let g = std::mem::take(&mut adj[i]);
            self.propagate(NodeId(i), &g, &mut adj, grads);
        }
        Ok(())
    }

    fn propagate(&self, id: NodeId, g: &[f64], adj: &mut [Vec<f64>], grads: &mut Gradients) {
        let node = &self.nodes[id.0];
        let acc = |adj: &mut [Vec<f64>], target: NodeId, f: &dyn Fn(usize) -> f64| {
            if !self.needs_grad(target) {
                return;
            }
            let len = self.value(target).len();
            let slot = &mut adj[target.0];
            if slot.is_empty() {
                *slot = vec![0.0; len];
            }
            for (k, s) in slot.iter_mut().enumerate() {
                *s += f(k);
            }
        };
        match &node.op {
            Op::Input => {}
            Op::Param(p) => {
                for (a, b) in grads.get_mut(*p).iter_mut().zip(g) {
                    *a += b;
                }
            }
            Op::Linear { w, x, b } => {
                let (out, inp) = self.dims(*w);
                let xv = self.value(*x);
                if let Some(b) = b {
                    acc(adj, *b, &|k| g[k]);
                }
                if self.needs_grad(*w) {
                    let slot = &mut adj[w.0];
                    if slot.is_empty() {
                        *slot = vec![0.0; out * inp];
                    }
                    let nz: Vec<usize> = (0..inp).filter(|&j| xv[j] != 0.0).collect();
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        let row = &mut slot[r * inp..(r + 1) * inp];
                        for &j in &nz {
                            row[j] += gr * xv[j];
                        }
                    }
                }
                if self.needs_grad(*x) {
                    let wv = self.value(*w);
                    let slot = &mut adj[x.0];
                    if slot.is_empty() {
                        *slot = vec![0.0; inp];
                    }
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        let row = &wv[r * inp..(r + 1) * inp];
                        for (s, wj) in slot.iter_mut().zip(row) {
                            *s += gr * wj;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                acc(adj, *a, &|k| g[k]);
                acc(adj, *b, &|k| g[k]);
            }
            Op::Sub(a, b) => {
                acc(adj, *a, &|k| g[k]);
                acc(adj, *b, &|k| -g[k]);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(adj, *a, &|k| g[k] * bv[k]);
                acc(adj, *b, &|k| g[k] * av[k]);
            }
            Op::Scale(a, f) => acc(adj, *a, &|k| g[k] * f),
            Op::Sigmoid(a) => {
                let y = &node.value;
                acc(adj, *a, &|k| g[k] * y[k] * (1.0 - y[k]));
            }
            Op::Tanh(a) => {
                let y = &node.value;
                acc(adj, *a, &|k| g[k] * (1.0 - y[k] * y[k]));
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                acc(adj, *a, &|k| if x[k] > 0.0 { g[k] } else { 0.0 });
            }
            Op::OneMinus(a) => acc(adj, *a, &|k| -g[k]),
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    acc(adj, *p, &|k| g[offset + k]);
                    offset += len;
                }
            }
            Op::Row { table, index } => {
                if self.needs_grad(*table) {
                    let (rows, cols) = self.dims(*table);
                    let slot = &mut adj[table.0];
                    if slot.is_empty() {
                        *slot = vec![0.0; rows * cols];
                    }
                    for (s, v) in slot[index * cols..(index + 1) * cols].iter_mut().zip(g) {
                        *s += v;
                    }
                }
            }
            Op::Sum(terms) => {
                for t in terms {
                    acc(adj, *t, &|_| g[0]);
                }
            }
            Op::SquaredError { pred, target, weights } => {
                let (p, t) = (self.value(*pred), self.value(*target));
                let n = p.len().max(1) as f64;
                let d = |k: usize| {
                    2.0 * g[0] * weights.as_ref().map_or(1.0, |w| w[k]) * (p[k] - t[k]) / n
                };
                acc(adj, *pred, &d);
                acc(adj, *target, &|k| -d(k));
            }
            Op::SoftmaxCrossEntropy { logits, target, mask } => {
                let probs = &node.aux;
                let total: f64 = target.iter().sum();
                acc(adj, *logits, &|k| {
                    if mask.as_ref().is_some_and(|m| !m[k]) {
                        0.0
                    } else {
                        g[0] * (total * probs[k] - target[k])
                    }
                });
            }
            Op::SigmoidBce { logits, target } => {
                let s = &node.aux;
                let n = s.len().max(1) as f64;
                acc(adj, *logits, &|k| g[0] * (s[k] - target[k]) / n);
            }
        }
    }
}

fn op_inputs(op: &Op) -> Vec<NodeId> {
    match op {
        Op::Input | Op::Param(_) => vec![],
        Op::Linear { w, x, b } => {
            let mut v = vec![*w, *x];
            v.extend(b);
            v
        }
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
        Op::Scale(a, _) | Op::Sigmoid(a) | Op::Tanh(a) | Op::Relu(a) | Op::OneMinus(a) => vec![*a],
        Op::Concat(p) | Op::Sum(p) => p.clone(),
        Op::Row { table, .. } => vec![*table],
        Op::SquaredError { pred, target, .. } => vec![*pred, *target],
        Op::SoftmaxCrossEntropy { logits, .. } | Op::SigmoidBce { logits, .. } => vec![*logits],
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax where `mask[k] == false` forces probability exactly 0.
/// An all-masked input yields an all-zero vector.
pub fn softmax_masked(logits: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let keep = |k: usize| mask.map_or(true, |m| m[k]);
    let max = (0..logits.len())
        .filter(|&k| keep(k))
        .map(|k| logits[k])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; logits.len()];
    }
    let exps: Vec<f64> = (0..logits.len())
        .map(|k| if keep(k) { (logits[k] - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
