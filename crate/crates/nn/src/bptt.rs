use crate::{Gradients, NnError, NodeId, ParamSet, Tape};

/// Result of a truncated-BPTT pass over one sequence.
#[derive(Debug, Clone)]
pub struct BpttOutput {
    /// Sum of every per-step loss term.
    pub loss: f64,
    pub grads: Gradients,
    /// Carried recurrent state after the last step (detached values).
    pub carry: Vec<Vec<f64>>,
}

/// Runs `step` over `len` time steps, cutting the graph every `window` steps.
///
/// `step(tape, t, carry)` receives the carried state nodes and returns the
/// next carry plus an optional scalar loss term for step `t`. At a window
/// boundary the carry is copied into fresh constant inputs, so gradients
/// never cross it. With `window >= len` this is full backpropagation
/// through time.
pub fn truncated_bptt<'p, F>(
    params: &'p ParamSet,
    len: usize,
    window: usize,
    init: Vec<Vec<f64>>,
    mut step: F,
) -> Result<BpttOutput, NnError>
where
    F: FnMut(&mut Tape<'p>, usize, &[NodeId]) -> Result<(Vec<NodeId>, Option<NodeId>), NnError>,
{
    if window == 0 {
        return Err(NnError::InvalidInput("bptt window must be positive".into()));
    }
    let mut grads = Gradients::zeros_like(params);
    let mut carry = init;
    let mut total = 0.0;
    let mut start = 0;
    while start < len {
        let end = (start + window).min(len);
        let mut tape = Tape::new(params);
        let mut nodes: Vec<NodeId> = carry.iter().map(|c| tape.input(c.clone())).collect();
        let mut terms = Vec::new();
        for t in start..end {
            let (next, loss) = step(&mut tape, t, &nodes)?;
            nodes = next;
            terms.extend(loss);
        }
        if !terms.is_empty() {
            let loss = tape.sum(&terms)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(NnError::NonFinite(format!("loss {value} in steps {start}..{end}")));
            }
            total += value;
            tape.backward_into(loss, &mut grads)?;
        }
        carry = nodes.iter().map(|&n| tape.value(n).to_vec()).collect();
        start = end;
    }
    Ok(BpttOutput { loss: total, grads, carry })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Dense, GruCell};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn run(ps: &ParamSet, cell: &GruCell, head: &Dense, xs: &[Vec<f64>], window: usize) -> BpttOutput {
        truncated_bptt(ps, xs.len(), window, vec![vec![0.0; cell.hidden]], |tape, t, carry| {
            let x = tape.input(xs[t].clone());
            let h = cell.forward(tape, x, carry[0])?;
            let o = head.forward(tape, h)?;
            let target = tape.input(vec![0.25]);
            let loss = tape.squared_error(o, target, None)?;
            Ok((vec![h], Some(loss)))
        })
        .unwrap()
    }

    #[test]
    fn clip_longer_than_sequence_equals_full_bptt() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ps = ParamSet::new();
        let cell = GruCell::new(&mut ps, "g", 2, 3, &mut rng);
        let head = Dense::new(&mut ps, "h", 3, 1, &mut rng);
        let xs: Vec<Vec<f64>> = (0..10).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let full = run(&ps, &cell, &head, &xs, 10);
        let clipped = run(&ps, &cell, &head, &xs, 75);
        assert_eq!(full.grads, clipped.grads);
        assert_eq!(full.loss, clipped.loss);
        let cut = run(&ps, &cell, &head, &xs, 3);
        // Forward values are unaffected by truncation, gradients are not.
        assert_eq!(cut.carry, full.carry);
        assert!((cut.loss - full.loss).abs() < 1e-12);
        assert_ne!(cut.grads, full.grads);
    }

    #[test]
    fn zero_window_is_rejected() {
        let ps = ParamSet::new();
        let r = truncated_bptt(&ps, 3, 0, vec![], |_, _, c| Ok((c.to_vec(), None)));
        assert!(r.is_err());
    }
}
