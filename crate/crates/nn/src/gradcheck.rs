use crate::{Gradients, NnError, ParamSet};

/// Compares `analytic` against central differences of `f` with step `h`.
///
/// Returns `max |analytic − numeric| / max(1, |numeric|)` over every scalar
/// parameter.
pub fn finite_diff_check<F>(f: F, params: &ParamSet, analytic: &Gradients, h: f64) -> Result<f64, NnError>
where
    F: Fn(&ParamSet) -> f64,
{
    if !(h > 0.0) {
        return Err(NnError::InvalidInput(format!("finite difference step {h}")));
    }
    let base = f(params);
    if !base.is_finite() {
        return Err(NnError::NonFinite(format!("objective is {base}")));
    }
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for id in params.ids() {
        for k in 0..params.get(id).len() {
            let orig = params.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + h;
            let plus = f(&probe);
            probe.get_mut(id).data_mut()[k] = orig - h;
            let minus = f(&probe);
            probe.get_mut(id).data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NnError::NonFinite(format!(
                    "objective non-finite when perturbing {}[{k}]",
                    params.name(id)
                )));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let err = (analytic.get(id)[k] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Dense, GruCell, Tape, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_is_exact() {
        let mut ps = ParamSet::new();
        let id = ps.add("v", Tensor::vector(vec![0.5, -1.5, 2.0]).unwrap());
        let loss = |ps: &ParamSet| ps.get(id).data().iter().map(|x| 3.0 * x * x).sum::<f64>();
        let mut g = Gradients::zeros_like(&ps);
        for (d, x) in g.get_mut(id).iter_mut().zip(ps.get(id).data()) {
            *d = 6.0 * x;
        }
        assert!(finite_diff_check(loss, &ps, &g, 1e-5).unwrap() < 1e-8);
    }

    #[test]
    fn constant_objective_has_zero_error() {
        let mut ps = ParamSet::new();
        ps.add("v", Tensor::vector(vec![0.5, -1.5]).unwrap());
        let g = Gradients::zeros_like(&ps);
        assert_eq!(finite_diff_check(|_| 4.0, &ps, &g, 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn rejects_non_finite_objective_and_bad_step() {
        let mut ps = ParamSet::new();
        ps.add("v", Tensor::vector(vec![1.0]).unwrap());
        let g = Gradients::zeros_like(&ps);
        assert!(finite_diff_check(|_| f64::NAN, &ps, &g, 1e-5).is_err());
        assert!(finite_diff_check(|_| 1.0, &ps, &g, 0.0).is_err());
    }

    fn two_layer_loss(ps: &ParamSet, l1: &Dense, l2: &Dense, x: &[f64], y: &[f64]) -> (f64, Gradients) {
        let mut tape = Tape::new(ps);
        let xi = tape.input(x.to_vec());
        let h = l1.forward(&mut tape, xi).unwrap();
        let h = tape.tanh(h);
        let o = l2.forward(&mut tape, h).unwrap();
        let t = tape.input(y.to_vec());
        let loss = tape.squared_error(o, t, None).unwrap();
        (tape.scalar(loss), tape.backward(loss).unwrap())
    }

    #[test]
    fn random_two_layer_network_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let mut ps = ParamSet::new();
            let l1 = Dense::new(&mut ps, "l1", 4, 6, &mut rng);
            let l2 = Dense::new(&mut ps, "l2", 6, 3, &mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, g) = two_layer_loss(&ps, &l1, &l2, &x, &y);
            let err = finite_diff_check(|p| two_layer_loss(p, &l1, &l2, &x, &y).0, &ps, &g, 1e-5).unwrap();
            assert!(err < 1e-4, "err {err}");
        }
    }

    fn gru_sequence_xent(ps: &ParamSet, cell: &GruCell, head: &Dense, xs: &[Vec<f64>], labels: &[usize]) -> (f64, Gradients) {
        let mut tape = Tape::new(ps);
        let mut h = tape.input(vec![0.0; cell.hidden]);
        let mut terms = Vec::new();
        for (x, &label) in xs.iter().zip(labels) {
            let xi = tape.input(x.clone());
            h = cell.forward(&mut tape, xi, h).unwrap();
            let logits = head.forward(&mut tape, h).unwrap();
            let mut t = vec![0.0; head.output];
            t[label] = 1.0;
            terms.push(tape.softmax_cross_entropy(logits, t, None).unwrap());
        }
        let loss = tape.sum(&terms).unwrap();
        (tape.scalar(loss), tape.backward(loss).unwrap())
    }

    #[test]
    fn gru_sequence_cross_entropy_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ps = ParamSet::new();
        let cell = GruCell::new(&mut ps, "g", 3, 4, &mut rng);
        let head = Dense::new(&mut ps, "head", 4, 5, &mut rng);
        let xs: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let labels = [0, 3, 1, 4, 2, 2];
        let (_, g) = gru_sequence_xent(&ps, &cell, &head, &xs, &labels);
        let err = finite_diff_check(|p| gru_sequence_xent(p, &cell, &head, &xs, &labels).0, &ps, &g, 1e-5).unwrap();
        assert!(err < 1e-4, "err {err}");
    }
}
