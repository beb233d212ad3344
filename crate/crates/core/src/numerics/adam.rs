use super::{ParamId, ParamSet, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Moment estimates for every parameter of one [`ParamSet`].
#[derive(Clone, Debug)]
pub struct AdamState {
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet, cfg: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params
            .ids()
            .map(|id| Tensor::zeros(params.value(id).shape()))
            .collect();
        Self {
            cfg,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Updates every parameter from its gradient slot.
    pub fn step(&mut self, params: &mut ParamSet) {
        let ids: Vec<ParamId> = params.ids().collect();
        self.step_subset(params, &ids);
    }

    /// Updates only `ids`; the others keep their values and moments.
    pub fn step_subset(&mut self, params: &mut ParamSet, ids: &[ParamId]) {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for &id in ids {
            let g = params.grad(id).data().to_vec();
            let m = self.m[id.0].data_mut();
            let v = self.v[id.0].data_mut();
            let w = params.value_mut(id).data_mut();
            for i in 0..g.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                w[i] -= c.lr * mh / (vh.sqrt() + c.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64, grad: f64) -> (ParamSet, ParamId) {
        let mut p = ParamSet::new();
        let id = p.add("w", Tensor::vector(vec![value])).unwrap();
        p.grad_mut(id).data_mut()[0] = grad;
        (p, id)
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut p, id) = single(1.0, 0.37);
        let mut opt = AdamState::new(&p, AdamConfig::with_lr(1e-3));
        opt.step(&mut p);
        assert!((p.value(id).item() - (1.0 - 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let (mut p, id) = single(0.5, 0.0);
        let mut opt = AdamState::new(&p, AdamConfig::default());
        for _ in 0..5 {
            opt.step(&mut p);
        }
        assert_eq!(p.value(id).item(), 0.5);
    }

    #[test]
    fn opposite_gradients_give_mirrored_updates() {
        let (mut a, ia) = single(0.0, 2.5);
        let (mut b, ib) = single(0.0, -2.5);
        let mut oa = AdamState::new(&a, AdamConfig::default());
        let mut ob = AdamState::new(&b, AdamConfig::default());
        for _ in 0..3 {
            oa.step(&mut a);
            ob.step(&mut b);
        }
        assert_eq!(a.value(ia).item(), -b.value(ib).item());
    }

    #[test]
    fn subset_leaves_others_untouched() {
        let mut p = ParamSet::new();
        let a = p.add("a", Tensor::vector(vec![1.0])).unwrap();
        let b = p.add("b", Tensor::vector(vec![1.0])).unwrap();
        p.grad_mut(a).data_mut()[0] = 1.0;
        p.grad_mut(b).data_mut()[0] = 1.0;
        let mut opt = AdamState::new(&p, AdamConfig::default());
        opt.step_subset(&mut p, &[b]);
        assert_eq!(p.value(a).item(), 1.0);
        assert!(p.value(b).item() < 1.0);
    }
}
