use crate::{Gradients, NnError, ParamSet};

/// Adaptive-moment (Adam) update settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the whole gradient when its L2 norm exceeds this value.
    pub max_grad_norm: Option<f64>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, max_grad_norm: None }
    }

    pub fn with_clip(mut self, max_norm: f64) -> Self {
        self.max_grad_norm = Some(max_norm);
        self
    }

    pub fn init(&self, params: &ParamSet) -> OptimizerState {
        OptimizerState {
            first: params.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
            second: params.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
            steps: 0,
        }
    }

    pub fn step(&self, params: &mut ParamSet, grads: &Gradients, state: &mut OptimizerState) -> Result<(), NnError> {
        if grads.len() != params.len() || state.first.len() != params.len() {
            return Err(NnError::Shape("optimizer: parameter count mismatch".into()));
        }
        for id in params.ids() {
            let g = grads.get(id);
            if g.len() != params.get(id).len() {
                return Err(NnError::Shape(format!("optimizer: gradient shape for {}", params.name(id))));
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(NnError::NonFinite(format!(
                    "gradient of {}[{i}] is {}",
                    params.name(id),
                    g[i]
                )));
            }
        }
        let scale = match self.max_grad_norm {
            Some(max) => {
                let n = grads.norm();
                if n > max { max / n } else { 1.0 }
            }
            None => 1.0,
        };
        state.steps += 1;
        let t = state.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for id in params.ids() {
            let g = grads.get(id);
            let m = &mut state.first[id.0];
            let v = &mut state.second[id.0];
            for (k, p) in params.get_mut(id).data_mut().iter_mut().enumerate() {
                let gk = g[k] * scale;
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                *p -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// First/second moment accumulators, aligned with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub steps: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{ParamId, Tensor};

    fn scalar(x: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("x", Tensor::vector(vec![x]).unwrap());
        ps
    }

    fn grad(g: f64) -> Gradients {
        let mut gr = Gradients::zeros_like(&scalar(0.0));
        gr.get_mut(ParamId(0))[0] = g;
        gr
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut ps = scalar(1.5);
        let adam = Adam::new(0.1);
        let mut st = adam.init(&ps);
        for _ in 0..10 {
            adam.step(&mut ps, &grad(0.0), &mut st).unwrap();
        }
        assert_eq!(ps.get(ParamId(0)).data()[0], 1.5);
    }

    #[test]
    fn constant_gradient_moves_monotonically_against_sign() {
        let mut ps = scalar(0.0);
        let adam = Adam::new(0.01);
        let mut st = adam.init(&ps);
        let mut prev = 0.0;
        for _ in 0..50 {
            adam.step(&mut ps, &grad(2.5), &mut st).unwrap();
            let x = ps.get(ParamId(0)).data()[0];
            assert!(x < prev);
            prev = x;
        }
    }

    #[test]
    fn quadratic_converges_near_minimum() {
        // f(x) = (x - 2)^2 from x = 0, lr 0.1, 100 steps. Running the update
        // rule gives |x - 2| ≈ 0.0084.
        let mut ps = scalar(0.0);
        let adam = Adam::new(0.1);
        let mut st = adam.init(&ps);
        for _ in 0..100 {
            let x = ps.get(ParamId(0)).data()[0];
            adam.step(&mut ps, &grad(2.0 * (x - 2.0)), &mut st).unwrap();
        }
        let x = ps.get(ParamId(0)).data()[0];
        assert!((x - 2.0).abs() < 0.1, "x = {x}");
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut ps = scalar(0.0);
        let adam = Adam::new(0.1);
        let mut st = adam.init(&ps);
        let err = adam.step(&mut ps, &grad(f64::NAN), &mut st).unwrap_err();
        assert!(err.to_string().contains("x[0]"), "{err}");
    }
}
