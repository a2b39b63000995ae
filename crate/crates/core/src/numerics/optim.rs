use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::net::{DenseNet, Gradients};
use super::real::Real;
use crate::error::{Error, Result};

/// Adaptive-moment (Adam) hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState<T: Real> {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Gradients<T>,
    pub second_moment: Gradients<T>,
}

impl<T: Real> OptimState<T> {
    pub fn new(net: &DenseNet<T>, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
        }
    }

    /// One bias-corrected Adam update of `net` in place.
    pub fn step(&mut self, net: &mut DenseNet<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.layers.len() != net.layers().len()
            || grads
                .layers
                .iter()
                .zip(net.layers())
                .any(|(g, l)| g.weights.dim() != l.weights.dim() || g.bias.len() != l.bias.len())
        {
            return Err(Error::Architecture(
                "gradient shapes do not match parameters".into(),
            ));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        self.step += 1;
        let t = self.step as i32;
        let c = &self.config;
        let b1 = T::from_f64(c.beta1);
        let b2 = T::from_f64(c.beta2);
        let one = T::one();
        let bc1 = T::from_f64(1.0 - c.beta1.powi(t));
        let bc2 = T::from_f64(1.0 - c.beta2.powi(t));
        let lr = T::from_f64(c.learning_rate);
        let eps = T::from_f64(c.epsilon);

        let update = |p: &mut T, m: &mut T, v: &mut T, g: &T| {
            *m = b1 * *m + (one - b1) * *g;
            *v = b2 * *v + (one - b2) * *g * *g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        };

        for (((layer, g), m), v) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first_moment.layers)
            .zip(&mut self.second_moment.layers)
        {
            Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(update);
        }
        Ok(())
    }
}

/// `target ← τ·online + (1−τ)·target`, elementwise.
pub fn soft_update<T: Real>(target: &mut DenseNet<T>, online: &DenseNet<T>, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("tau must be in (0, 1], got {tau}")));
    }
    if !target.same_architecture(online) {
        return Err(Error::Architecture(
            "soft update between different architectures".into(),
        ));
    }
    if tau == 1.0 {
        *target = online.clone();
        return Ok(());
    }
    let tau = T::from_f64(tau);
    let keep = T::one() - tau;
    for (t, o) in target.layers_mut().iter_mut().zip(online.layers()) {
        Zip::from(&mut t.weights)
            .and(&o.weights)
            .for_each(|t, &o| *t = tau * o + keep * *t);
        Zip::from(&mut t.bias)
            .and(&o.bias)
            .for_each(|t, &o| *t = tau * o + keep * *t);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::net::{Activation, Architecture, Layer};
    use ndarray::{Array1, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_net(w: f64) -> DenseNet<f64> {
        DenseNet::from_layers(vec![Layer {
            weights: Array2::from_elem((1, 1), w),
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    fn scalar_grad(g: f64) -> Gradients<f64> {
        let mut grads = Gradients::zeros_like(&scalar_net(0.0));
        grads.layers[0].weights[[0, 0]] = g;
        grads
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = scalar_net(0.0);
        let mut state = OptimState::new(&net, AdamConfig::with_learning_rate(0.001));
        state.step(&mut net, &scalar_grad(1.0)).unwrap();
        // m̂ = 1, v̂ = 1, so Δ = −lr / (1 + ε)
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((net.layers()[0].weights[[0, 0]] - expected).abs() < 1e-15);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let arch = Architecture::mlp(&[3, 8, 2], Activation::Identity).unwrap();
        let mut net = DenseNet::<f64>::new(&arch, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let before = net.clone();
        let mut state = OptimState::new(&net, AdamConfig::default());
        let zero = Gradients::zeros_like(&net);
        for _ in 0..3 {
            state.step(&mut net, &zero).unwrap();
        }
        assert_eq!(net, before);
        assert_eq!(state.step, 3);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut net = scalar_net(0.5);
        let mut state = OptimState::new(&net, AdamConfig::default());
        let err = state.step(&mut net, &scalar_grad(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(state.step, 0);
        assert_eq!(net.layers()[0].weights[[0, 0]], 0.5);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let arch = Architecture::mlp(&[4, 16, 3], Activation::Identity).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut net = DenseNet::<f32>::new(&arch, &mut rng).unwrap();
            let mut state = OptimState::new(&net, AdamConfig::default());
            for k in 0..20 {
                let x: Vec<f32> = (0..4).map(|i| (i + k) as f32 * 0.1).collect();
                let (g, _) = net.backward(&x, &[1.0, -0.5, 0.25]).unwrap();
                state.step(&mut net, &g).unwrap();
            }
            net.param_vec()
        };
        let a: Vec<u32> = run().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = run().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn soft_update_closed_forms() {
        let arch = Architecture::mlp(&[2, 3, 1], Activation::Identity).unwrap();
        let mut target = DenseNet::<f64>::zeros(&arch).unwrap();
        let mut online = DenseNet::<f64>::zeros(&arch).unwrap();
        online.params_mut().for_each(|p| *p = 1.0);

        soft_update(&mut target, &online, 0.001).unwrap();
        assert!(target.param_vec().iter().all(|&v| (v - 0.001).abs() < 1e-15));

        soft_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target, online);
    }

    #[test]
    fn soft_update_decays_geometrically() {
        let arch = Architecture::mlp(&[2, 4, 2], Activation::Identity).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let online = DenseNet::<f64>::new(&arch, &mut rng).unwrap();
        let mut target = DenseNet::<f64>::new(&arch, &mut rng).unwrap();
        let gap0: Vec<f64> = online
            .param_vec()
            .iter()
            .zip(target.param_vec())
            .map(|(o, t)| (o - t).abs())
            .collect();
        let tau = 0.05;
        let k = 40;
        for _ in 0..k {
            soft_update(&mut target, &online, tau).unwrap();
        }
        let factor = (1.0f64 - tau).powi(k);
        for ((o, t), g0) in online.param_vec().iter().zip(target.param_vec()).zip(gap0) {
            assert!(((o - t).abs() - factor * g0).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_update_rejects_mismatch_and_bad_tau() {
        let a = DenseNet::<f64>::zeros(&Architecture::mlp(&[2, 3], Activation::Identity).unwrap()).unwrap();
        let mut b =
            DenseNet::<f64>::zeros(&Architecture::mlp(&[2, 4], Activation::Identity).unwrap()).unwrap();
        assert!(matches!(soft_update(&mut b, &a, 0.5), Err(Error::Architecture(_))));
        let mut c = a.clone();
        assert!(soft_update(&mut c, &a, 0.0).is_err());
        assert!(soft_update(&mut c, &a, 1.5).is_err());
    }
}
