//! Optimizers, gradient clipping, early stopping, and checkpoints.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    RmsProp,
    Adam,
}

/// Optimizer hyperparameters. Defaults: lr 1e-3, RMSprop decay 0.9,
/// Adam betas (0.9, 0.999), epsilon 1e-8, clip_norm 5, patience 5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// RMSprop moving-average decay.
    pub decay: f64,
    /// Adam first/second moment decays.
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; None disables clipping.
    pub clip_norm: Option<f64>,
    /// Epochs without improvement before stopping; None disables.
    pub early_stop_patience: Option<usize>,
}

impl OptimizerConfig {
    pub fn rmsprop() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::RmsProp,
            ..Self::adam()
        }
    }

    pub fn adam() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            decay: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(5.0),
            early_stop_patience: Some(5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        for (name, v) in [
            ("decay", self.decay),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(0.0 < v && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if let Some(c) = self.clip_norm {
            if c <= 0.0 {
                return Err(Error::Config("clip_norm must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Running moments, one slot per parameter tensor.
#[derive(Debug, Clone, Default)]
pub struct OptimizerState {
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure(&mut self, params: &[Tensor]) {
        if self.first.len() != params.len() {
            self.first = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
            self.second = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

/// Scales all gradients so their global norm is at most `clip`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], clip: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > clip && norm > 0.0 {
        let scale = clip / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}

/// One optimizer step in place. Errors on NaN/Inf gradients so a broken
/// training run aborts instead of corrupting its parameters.
pub fn step(
    params: &mut [Tensor],
    grads: &[Tensor],
    config: &OptimizerConfig,
    state: &mut OptimizerState,
) -> Result<()> {
    config.validate()?;
    if params.len() != grads.len() {
        return Err(Error::Contract(format!(
            "{} params but {} grads",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                op: "optimizer step",
                lhs: p.shape(),
                rhs: g.shape(),
            });
        }
        if g.has_non_finite() {
            return Err(Error::NumericFailure(
                "NaN or Inf gradient; aborting training".into(),
            ));
        }
    }

    let mut grads: Vec<Tensor> = grads.to_vec();
    if let Some(clip) = config.clip_norm {
        clip_global_norm(&mut grads, clip);
    }

    state.ensure(params);
    state.step += 1;
    let t = state.step as f64;
    for (i, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
        match config.kind {
            OptimizerKind::RmsProp => {
                let s = state.second[i].data_mut();
                for (j, (&gv, pv)) in g.data().iter().zip(p.data_mut()).enumerate() {
                    s[j] = config.decay * s[j] + (1.0 - config.decay) * gv * gv;
                    *pv -= config.learning_rate * gv / (s[j].sqrt() + config.epsilon);
                }
            }
            OptimizerKind::Adam => {
                let bc1 = 1.0 - config.beta1.powf(t);
                let bc2 = 1.0 - config.beta2.powf(t);
                let m = state.first[i].data_mut();
                let v = state.second[i].data_mut();
                for (j, (&gv, pv)) in g.data().iter().zip(p.data_mut()).enumerate() {
                    m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gv;
                    v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * gv * gv;
                    let mhat = m[j] / bc1;
                    let vhat = v[j] / bc2;
                    *pv -= config.learning_rate * mhat / (vhat.sqrt() + config.epsilon);
                }
            }
        }
    }
    Ok(())
}

/// True iff the best loss in `history` has not improved for `patience`
/// consecutive epochs.
pub fn early_stop(history: &[f64], patience: usize) -> bool {
    debug_assert!(patience >= 1);
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    for &loss in history {
        if loss < best {
            best = loss;
            since_best = 0;
        } else {
            since_best += 1;
        }
    }
    since_best >= patience
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Version tag of the parameter-map checkpoint schema.
pub const CHECKPOINT_FORMAT: &str = "failslow-params-v1";

/// A flat, versioned map from parameter name to shape + row-major values,
/// serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub entries: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Contract(format!("checkpoint missing parameter {name:?}")))
    }

    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_reader(reader)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Contract(format!(
                "unsupported checkpoint format {:?}",
                ckpt.format
            )));
        }
        Ok(ckpt)
    }
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: &[f64]) -> Tensor {
        Tensor::from_vec(1, data.len(), data.to_vec()).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        for config in [OptimizerConfig::adam(), OptimizerConfig::rmsprop()] {
            let mut params = vec![t(&[1.0, -2.0, 3.0])];
            let grads = vec![t(&[0.0, 0.0, 0.0])];
            let mut state = OptimizerState::new();
            step(&mut params, &grads, &config, &mut state).unwrap();
            assert_eq!(params[0], t(&[1.0, -2.0, 3.0]));
        }
    }

    // Hand computation: Adam's bias-corrected first step moves each
    // coordinate by ~lr * sign(g).
    #[test]
    fn adam_first_step_is_signed_lr() {
        let config = OptimizerConfig {
            clip_norm: None,
            ..OptimizerConfig::adam()
        };
        let mut params = vec![t(&[0.0, 0.0])];
        let grads = vec![t(&[10.0, -0.5])];
        let mut state = OptimizerState::new();
        step(&mut params, &grads, &config, &mut state).unwrap();
        // mhat = g, vhat = g^2 -> update = -lr * g/(|g| + eps) = -lr*sign(g).
        assert!((params[0].data()[0] - (-1e-3)).abs() < 1e-6);
        assert!((params[0].data()[1] - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn clip_scales_to_unit_norm() {
        let mut grads = vec![t(&[6.0, 8.0])]; // norm 10
        let pre = clip_global_norm(&mut grads, 1.0);
        assert!((pre - 10.0).abs() < 1e-12);
        assert!((grads[0].frobenius_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nan_gradient_aborts() {
        let config = OptimizerConfig::adam();
        let mut params = vec![t(&[1.0])];
        let grads = vec![t(&[f64::NAN])];
        let mut state = OptimizerState::new();
        assert!(matches!(
            step(&mut params, &grads, &config, &mut state),
            Err(Error::NumericFailure(_))
        ));
    }

    #[test]
    fn steps_are_deterministic() {
        let config = OptimizerConfig::rmsprop();
        let run = || {
            let mut params = vec![t(&[1.0, 2.0])];
            let mut state = OptimizerState::new();
            for i in 0..10 {
                let grads = vec![t(&[0.1 * i as f64, -0.2])];
                step(&mut params, &grads, &config, &mut state).unwrap();
            }
            params[0].clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn early_stop_cases() {
        assert!(!early_stop(&[5.0, 4.0, 3.0, 2.0], 3)); // strictly decreasing
        assert!(early_stop(&[1.0, 1.0, 1.0, 1.0], 3)); // flat, length patience+1
        assert!(early_stop(&[5.0, 4.0, 4.5, 4.6, 4.7], 3)); // hand trace
        assert!(!early_stop(&[5.0, 4.0, 4.5, 4.6], 3));
        assert!(!early_stop(&[], 1));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut ckpt = Checkpoint::new();
        ckpt.insert("w", Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        ckpt.insert("b", t(&[0.5]));
        let mut buf = Vec::new();
        ckpt.save(&mut buf).unwrap();
        let loaded = Checkpoint::load(buf.as_slice()).unwrap();
        assert_eq!(loaded, ckpt);
        assert!(loaded.get("missing").is_err());
    }
}
