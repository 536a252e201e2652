//! Adam and Nesterov SGD with L2 weight decay, plus learning-rate schedules.
//!
//! Weight decay touches weight matrices only; biases are never decayed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Gradients, Layer, Mlp};
use crate::numcore::{Matrix, Scalar};

/// How the decay term enters the update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayMode {
    /// `g + λw` is fed to the optimizer (classical L2).
    #[default]
    Coupled,
    /// `w ← w − lr·λ·w` applied outside the adaptive step (AdamW style).
    Decoupled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Adam {
        lr: f64,
        weight_decay: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        #[serde(default)]
        decay_mode: DecayMode,
    },
    Sgd {
        lr: f64,
        weight_decay: f64,
        momentum: f64,
        nesterov: bool,
    },
}

impl OptimizerConfig {
    pub fn adam(lr: f64, weight_decay: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_mode: DecayMode::Coupled,
        }
    }

    pub fn sgd(lr: f64, weight_decay: f64) -> Self {
        OptimizerConfig::Sgd {
            lr,
            weight_decay,
            momentum: 0.9,
            nesterov: true,
        }
    }

    pub fn base_lr(&self) -> f64 {
        match self {
            OptimizerConfig::Adam { lr, .. } | OptimizerConfig::Sgd { lr, .. } => *lr,
        }
    }

    pub fn weight_decay(&self) -> f64 {
        match self {
            OptimizerConfig::Adam { weight_decay, .. } | OptimizerConfig::Sgd { weight_decay, .. } => *weight_decay,
        }
    }

    pub fn set_weight_decay(&mut self, wd: f64) {
        match self {
            OptimizerConfig::Adam { weight_decay, .. } | OptimizerConfig::Sgd { weight_decay, .. } => *weight_decay = wd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.base_lr() > 0.0 && self.weight_decay() >= 0.0;
        if !ok {
            return Err(Error::arg("optimizer needs lr > 0 and weight_decay >= 0"));
        }
        Ok(())
    }

    /// Fresh optimizer state for `model`.
    pub fn init<T: Scalar>(&self, model: &Mlp<T>) -> Optimizer<T> {
        match *self {
            OptimizerConfig::Adam {
                weight_decay,
                beta1,
                beta2,
                eps,
                decay_mode,
                ..
            } => Optimizer::Adam(AdamState {
                m: zeros_like(model),
                v: zeros_like(model),
                t: 0,
                beta1,
                beta2,
                eps,
                weight_decay,
                decay_mode,
            }),
            OptimizerConfig::Sgd {
                weight_decay,
                momentum,
                nesterov,
                ..
            } => Optimizer::Sgd(SgdState {
                buf: zeros_like(model),
                momentum,
                nesterov,
                weight_decay,
            }),
        }
    }
}

fn zeros_like<T: Scalar>(model: &Mlp<T>) -> Vec<Layer<T>> {
    model
        .layers()
        .iter()
        .map(|l| Layer {
            weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
            bias: vec![T::zero(); l.bias.len()],
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub m: Vec<Layer<T>>,
    pub v: Vec<Layer<T>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
}

#[derive(Clone, Debug)]
pub struct SgdState<T> {
    pub buf: Vec<Layer<T>>,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
}

#[derive(Clone, Debug)]
pub enum Optimizer<T> {
    Adam(AdamState<T>),
    Sgd(SgdState<T>),
}

impl<T: Scalar> Optimizer<T> {
    pub fn step(&mut self, model: &mut Mlp<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
        match self {
            Optimizer::Adam(s) => adam_step(model, grads, s, lr),
            Optimizer::Sgd(s) => sgd_step(model, grads, s, lr),
        }
    }
}

fn check_grads<T: Scalar>(model: &Mlp<T>, grads: &Gradients<T>) -> Result<()> {
    if grads.layers.len() != model.layers().len() {
        return Err(Error::arg("gradient/model layer count mismatch"));
    }
    for (g, l) in grads.layers.iter().zip(model.layers()) {
        if g.weight.shape() != l.weight.shape() || g.bias.len() != l.bias.len() {
            return Err(Error::Shape {
                op: "optimizer step",
                left: g.weight.shape(),
                right: l.weight.shape(),
            });
        }
        if !g.weight.is_finite() || g.bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Divergence("non-finite gradient".into()));
        }
    }
    Ok(())
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Scalar>(model: &mut Mlp<T>, grads: &Gradients<T>, state: &mut AdamState<T>, lr: f64) -> Result<()> {
    check_grads(model, grads)?;
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::lit(state.beta1), T::lit(state.beta2));
    let one = T::one();
    let bc1 = one - b1.powi(t);
    let bc2 = one - b2.powi(t);
    let lr = T::lit(lr);
    let eps = T::lit(state.eps);
    let wd = T::lit(state.weight_decay);
    let coupled = state.decay_mode == DecayMode::Coupled;

    let update = |w: &mut T, g: T, m: &mut T, v: &mut T, decay: bool| {
        let g = if decay && coupled { g + wd * *w } else { g };
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        if decay && !coupled {
            *w -= lr * wd * *w;
        }
        *w -= lr * m_hat / (v_hat.sqrt() + eps);
    };

    for (li, layer) in model.layers_mut().iter_mut().enumerate() {
        let g = &grads.layers[li];
        let (m, v) = (&mut state.m[li], &mut state.v[li]);
        for (((w, &gw), mw), vw) in layer
            .weight
            .as_mut_slice()
            .iter_mut()
            .zip(g.weight.as_slice())
            .zip(m.weight.as_mut_slice())
            .zip(v.weight.as_mut_slice())
        {
            update(w, gw, mw, vw, true);
        }
        for (((b, &gb), mb), vb) in layer
            .bias
            .iter_mut()
            .zip(&g.bias)
            .zip(m.bias.iter_mut())
            .zip(v.bias.iter_mut())
        {
            update(b, gb, mb, vb, false);
        }
    }
    Ok(())
}

/// One momentum SGD update (`buf ← μ·buf + g`; Nesterov step `g + μ·buf`).
pub fn sgd_step<T: Scalar>(model: &mut Mlp<T>, grads: &Gradients<T>, state: &mut SgdState<T>, lr: f64) -> Result<()> {
    check_grads(model, grads)?;
    let mu = T::lit(state.momentum);
    let lr = T::lit(lr);
    let wd = T::lit(state.weight_decay);
    let nesterov = state.nesterov;

    let update = |w: &mut T, g: T, buf: &mut T, decay: bool| {
        let g = if decay { g + wd * *w } else { g };
        *buf = mu * *buf + g;
        let d = if nesterov { g + mu * *buf } else { *buf };
        *w -= lr * d;
    };

    for (li, layer) in model.layers_mut().iter_mut().enumerate() {
        let g = &grads.layers[li];
        let buf = &mut state.buf[li];
        for ((w, &gw), bw) in layer
            .weight
            .as_mut_slice()
            .iter_mut()
            .zip(g.weight.as_slice())
            .zip(buf.weight.as_mut_slice())
        {
            update(w, gw, bw, true);
        }
        for ((b, &gb), bb) in layer.bias.iter_mut().zip(&g.bias).zip(buf.bias.iter_mut()) {
            update(b, gb, bb, false);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LrSchedule {
    /// `η_min + (base − η_min)(1 + cos(π·e/T_max))/2`, clamped at `η_min` past `T_max`.
    Cosine { t_max: usize, eta_min: f64 },
    /// `base · γ^{#milestones ≤ e}`.
    MultiStep { milestones: Vec<usize>, gamma: f64 },
    Constant,
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            LrSchedule::Cosine { eta_min, .. } if *eta_min < 0.0 => Err(Error::arg("eta_min must be >= 0")),
            LrSchedule::MultiStep { milestones, .. } if milestones.windows(2).any(|w| w[0] >= w[1]) => {
                Err(Error::arg("milestones must be strictly increasing"))
            }
            _ => Ok(()),
        }
    }

    pub fn lr_at(&self, epoch: usize, base_lr: f64) -> f64 {
        match self {
            LrSchedule::Cosine { t_max, eta_min } => {
                if *t_max == 0 || epoch >= *t_max {
                    return if epoch == 0 { base_lr } else { *eta_min };
                }
                let frac = epoch as f64 / *t_max as f64;
                eta_min + (base_lr - eta_min) * (1.0 + (std::f64::consts::PI * frac).cos()) / 2.0
            }
            LrSchedule::MultiStep { milestones, gamma } => {
                let passed = milestones.iter().filter(|&&m| m <= epoch).count();
                base_lr * gamma.powi(passed as i32)
            }
            LrSchedule::Constant => base_lr,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, MlpConfig};
    use crate::numcore::RngState;

    fn scalar_model(w: f64, b: f64) -> Mlp<f64> {
        // 1-in, 1-hidden, 2-class; only the first layer is exercised
        let cfg = MlpConfig {
            input_dim: 1,
            depth: 1,
            width: 1,
            activation: Activation::Relu,
            num_classes: 2,
        };
        let layers = vec![
            Layer {
                weight: Matrix::from_vec(1, 1, vec![w]).unwrap(),
                bias: vec![b],
            },
            Layer {
                weight: Matrix::zeros(2, 1),
                bias: vec![0.0; 2],
            },
        ];
        Mlp::from_layers(cfg, layers).unwrap()
    }

    fn grads(gw: f64, gb: f64) -> Gradients<f64> {
        Gradients {
            layers: vec![
                Layer {
                    weight: Matrix::from_vec(1, 1, vec![gw]).unwrap(),
                    bias: vec![gb],
                },
                Layer {
                    weight: Matrix::zeros(2, 1),
                    bias: vec![0.0; 2],
                },
            ],
        }
    }

    fn w0(m: &Mlp<f64>) -> f64 {
        m.layers()[0].weight.as_slice()[0]
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut m = scalar_model(0.5, 0.0);
        let mut opt = OptimizerConfig::adam(1e-3, 0.0).init(&m);
        opt.step(&mut m, &grads(0.37, 0.0), 1e-3).unwrap();
        assert!((0.5 - w0(&m) - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn adam_zero_grad_no_decay_is_fixed_point() {
        let mut m = scalar_model(0.5, 0.2);
        let before = m.clone();
        let mut opt = OptimizerConfig::adam(1e-3, 0.0).init(&m);
        opt.step(&mut m, &grads(0.0, 0.0), 1e-3).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn biases_are_never_decayed() {
        for cfg in [OptimizerConfig::adam(1e-2, 0.5), OptimizerConfig::sgd(0.1, 0.5)] {
            let mut m = scalar_model(0.5, 0.2);
            let mut opt = cfg.init(&m);
            opt.step(&mut m, &grads(0.0, 0.0), cfg.base_lr()).unwrap();
            assert_eq!(m.layers()[0].bias[0], 0.2);
            assert!(w0(&m) < 0.5);
        }
    }

    #[test]
    fn adam_matches_reference_recurrence() {
        // f(w) = 0.5·(w − 3)², reference written directly from the recurrences
        let (lr, wd, b1, b2, eps) = (0.05, 0.01, 0.9, 0.999, 1e-8);
        let mut m = scalar_model(0.0, 0.0);
        let mut opt = OptimizerConfig::adam(lr, wd).init(&m);
        let (mut w, mut mm, mut vv) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=10 {
            let g = w0(&m) - 3.0;
            opt.step(&mut m, &grads(g, 0.0), lr).unwrap();

            let g_ref = (w - 3.0) + wd * w;
            mm = b1 * mm + (1.0 - b1) * g_ref;
            vv = b2 * vv + (1.0 - b2) * g_ref * g_ref;
            let mh = mm / (1.0 - b1.powi(t));
            let vh = vv / (1.0 - b2.powi(t));
            w -= lr * mh / (vh.sqrt() + eps);
            assert!((w - w0(&m)).abs() < 1e-12);
        }
    }

    #[test]
    fn sgd_plain_step() {
        let mut m = scalar_model(1.0, 0.0);
        let mut st = SgdState {
            buf: zeros_like(&m),
            momentum: 0.0,
            nesterov: false,
            weight_decay: 0.0,
        };
        sgd_step(&mut m, &grads(2.0, 0.0), &mut st, 0.1).unwrap();
        assert!((w0(&m) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_nesterov_first_step() {
        let mut m = scalar_model(1.0, 0.0);
        let mut opt = OptimizerConfig::sgd(0.1, 0.0).init(&m);
        opt.step(&mut m, &grads(2.0, 0.0), 0.1).unwrap();
        assert!((w0(&m) - (1.0 - 0.1 * (2.0 + 0.9 * 2.0))).abs() < 1e-15);
    }

    #[test]
    fn sgd_matches_reference_recurrence() {
        let (lr, wd, mu) = (0.02, 0.003, 0.9);
        let mut m = scalar_model(0.0, 0.0);
        let mut opt = OptimizerConfig::sgd(lr, wd).init(&m);
        let (mut w, mut buf) = (0.0f64, 0.0f64);
        for _ in 0..10 {
            let g = 2.0 * (w0(&m) - 1.5);
            opt.step(&mut m, &grads(g, 0.0), lr).unwrap();

            let g_ref = 2.0 * (w - 1.5) + wd * w;
            buf = mu * buf + g_ref;
            w -= lr * (g_ref + mu * buf);
            assert!((w - w0(&m)).abs() < 1e-12);
        }
    }

    #[test]
    fn nan_gradient_is_divergence() {
        let mut m = scalar_model(1.0, 0.0);
        let mut opt = OptimizerConfig::adam(1e-3, 0.0).init(&m);
        let err = opt.step(&mut m, &grads(f64::NAN, 0.0), 1e-3).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
    }

    #[test]
    fn adam_bitwise_reproducible() {
        let cfg = MlpConfig {
            input_dim: 3,
            depth: 2,
            width: 4,
            activation: Activation::Tanh,
            num_classes: 2,
        };
        let run = || {
            let mut m: Mlp<f64> = Mlp::build(cfg.clone(), &mut RngState::new(3)).unwrap();
            let x = Matrix::from_vec(5, 3, RngState::new(4).gaussian(15)).unwrap();
            let mut opt = OptimizerConfig::adam(1e-2, 0.0).init(&m);
            for _ in 0..5 {
                let tr = m.forward(&x).unwrap();
                let (_, g) = m.loss_and_grad(&tr, &[0, 1, 1, 0, 1], crate::model::LossKind::CrossEntropy).unwrap();
                opt.step(&mut m, &g, 1e-2).unwrap();
            }
            m
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn cosine_endpoints() {
        let s = LrSchedule::Cosine { t_max: 100, eta_min: 0.0 };
        assert_eq!(s.lr_at(0, 1e-3), 1e-3);
        assert!((s.lr_at(50, 1e-3) - 5e-4).abs() < 1e-18);
        assert_eq!(s.lr_at(150, 1e-3), 0.0);
    }

    #[test]
    fn multistep_two_decays() {
        let s = LrSchedule::MultiStep {
            milestones: vec![300, 450],
            gamma: 0.1,
        };
        assert!((s.lr_at(460, 0.1) - 0.001).abs() < 1e-15);
        assert_eq!(s.lr_at(299, 0.1), 0.1);
    }

    #[test]
    fn schedules_non_increasing() {
        let cos = LrSchedule::Cosine { t_max: 37, eta_min: 1e-5 };
        let ms = LrSchedule::MultiStep {
            milestones: vec![5, 9, 20],
            gamma: 0.5,
        };
        for s in [cos, ms] {
            let lrs: Vec<f64> = (0..60).map(|e| s.lr_at(e, 0.1)).collect();
            assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn milestones_must_increase() {
        let s = LrSchedule::MultiStep {
            milestones: vec![5, 5],
            gamma: 0.5,
        };
        assert!(s.validate().is_err());
    }
}
