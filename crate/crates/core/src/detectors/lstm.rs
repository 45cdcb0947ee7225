//! LSTM forecaster: stacked standard LSTM cells (input/forget/output
//! gates and a cell state, sigmoid gates, tanh activations) with a dense
//! head predicting the next step, trained on MSE with gradient clipping
//! and early stopping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{
    clip_global_norm, early_stop, Graph, OptimizerConfig, OptimizerState, Tensor, Var,
};
use crate::error::{Error, Result};
use crate::rng::Rng;

use super::scoring::ForecastModel;
use super::sequence::SequenceDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub n_layers: usize,
    pub hidden: usize,
    pub input_features: usize,
    pub window: usize,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Cap on training pairs per epoch (deterministic subsample);
    /// None uses everything.
    pub max_train_pairs: Option<usize>,
    /// Fraction of training pairs held out for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            n_layers: 2,
            hidden: 100,
            input_features: 1,
            window: 32,
            optimizer: OptimizerConfig::rmsprop(),
            epochs: 30,
            batch_size: 64,
            max_train_pairs: Some(4096),
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 1 || self.hidden < 1 {
            return Err(Error::Config("lstm needs n_layers >= 1 and hidden >= 1".into()));
        }
        if !(1..=2).contains(&self.input_features) {
            return Err(Error::Config("input_features must be 1 or 2".into()));
        }
        self.optimizer.validate()
    }
}

/// Trained LSTM parameters, keyed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub params: BTreeMap<String, Tensor>,
    /// (train loss, validation loss) per epoch.
    pub loss_curve: Vec<(f64, f64)>,
}

/// Fixed parameter order: layer weights then head, names sorted.
fn param_names(config: &LstmConfig) -> Vec<String> {
    let mut names = Vec::new();
    for l in 0..config.n_layers {
        names.push(format!("layer{l}/w"));
        names.push(format!("layer{l}/b"));
    }
    names.push("head/w".into());
    names.push("head/b".into());
    names
}

fn init_params(config: &LstmConfig) -> BTreeMap<String, Tensor> {
    let mut rng = Rng::new(config.seed).derive("lstm-init");
    let h = config.hidden;
    let mut params = BTreeMap::new();
    for l in 0..config.n_layers {
        let in_dim = if l == 0 { config.input_features } else { h };
        let scale = 1.0 / ((in_dim + h) as f64).sqrt();
        params.insert(
            format!("layer{l}/w"),
            Tensor::randn(&mut rng, in_dim + h, 4 * h, scale),
        );
        // Forget-gate bias starts at 1 so early training retains state.
        let mut b = Tensor::zeros(1, 4 * h);
        for c in h..2 * h {
            b.set(0, c, 1.0);
        }
        params.insert(format!("layer{l}/b"), b);
    }
    let scale = 1.0 / (h as f64).sqrt();
    params.insert(
        "head/w".into(),
        Tensor::randn(&mut rng, h, config.input_features, scale),
    );
    params.insert("head/b".into(), Tensor::zeros(1, config.input_features));
    params
}

/// One LSTM cell step: returns (h', c').
pub fn lstm_cell(x: &Var, h: &Var, c: &Var, w: &Var, b: &Var, hidden: usize) -> Result<(Var, Var)> {
    let z = x.concat_cols(h)?.matmul(w)?.add_row_bias(b)?;
    let i = z.slice_cols(0, hidden)?.sigmoid();
    let f = z.slice_cols(hidden, 2 * hidden)?.sigmoid();
    let o = z.slice_cols(2 * hidden, 3 * hidden)?.sigmoid();
    let g = z.slice_cols(3 * hidden, 4 * hidden)?.tanh();
    let c_next = f.mul(c)?.add(&i.mul(&g)?)?;
    let h_next = o.mul(&c_next.tanh())?;
    Ok((h_next, c_next))
}

/// Forward pass over a timestep-major batch; returns the (B, F)
/// next-step prediction.
fn forward(
    graph: &Graph,
    params: &BTreeMap<String, Var>,
    steps: &[Tensor],
    config: &LstmConfig,
) -> Result<Var> {
    let batch = steps[0].rows();
    let h_dim = config.hidden;
    let mut inputs: Vec<Var> = steps.iter().map(|t| graph.constant(t.clone())).collect();
    for l in 0..config.n_layers {
        let w = &params[&format!("layer{l}/w")];
        let b = &params[&format!("layer{l}/b")];
        let mut h = graph.constant(Tensor::zeros(batch, h_dim));
        let mut c = graph.constant(Tensor::zeros(batch, h_dim));
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in &inputs {
            let (h_next, c_next) = lstm_cell(x, &h, &c, w, b, h_dim)?;
            h = h_next;
            c = c_next;
            outputs.push(h.clone());
        }
        inputs = outputs;
    }
    let last = inputs.last().expect("window length >= 1");
    last.matmul(&params["head/w"])?.add_row_bias(&params["head/b"])
}

/// Loss and gradients for one batch, in `names` order.
fn batch_loss_and_grads(
    values: &BTreeMap<String, Tensor>,
    names: &[String],
    steps: &[Tensor],
    targets: &Tensor,
    config: &LstmConfig,
) -> Result<(f64, Vec<Tensor>)> {
    let graph = Graph::new();
    let vars: BTreeMap<String, Var> = values
        .iter()
        .map(|(k, v)| (k.clone(), graph.param(v.clone())))
        .collect();
    let pred = forward(&graph, &vars, steps, config)?;
    let loss = pred.mse_loss(&graph.constant(targets.clone()))?;
    loss.backward()?;
    let grads = names.iter().map(|n| vars[n].grad()).collect();
    Ok((loss.value().data()[0], grads))
}

fn batch_loss_only(
    values: &BTreeMap<String, Tensor>,
    steps: &[Tensor],
    targets: &Tensor,
    config: &LstmConfig,
) -> Result<f64> {
    let graph = Graph::new();
    let vars: BTreeMap<String, Var> = values
        .iter()
        .map(|(k, v)| (k.clone(), graph.constant(v.clone())))
        .collect();
    let pred = forward(&graph, &vars, steps, config)?;
    let loss = pred.mse_loss(&graph.constant(targets.clone()))?;
    Ok(loss.value().data()[0])
}

/// Trains the forecaster on the dataset's training pairs.
pub fn train_lstm(dataset: &SequenceDataset, config: &LstmConfig) -> Result<LstmModel> {
    config.validate()?;
    if config.input_features != dataset.features.count() {
        return Err(Error::Config(format!(
            "config expects {} input features but dataset has {}",
            config.input_features,
            dataset.features.count()
        )));
    }
    if config.window != dataset.window_len {
        return Err(Error::Config(format!(
            "config window {} but dataset window {}",
            config.window, dataset.window_len
        )));
    }
    let mut refs = dataset.train_refs();
    if refs.is_empty() {
        return Err(Error::EmptyInput("dataset has no training pairs"));
    }
    let mut rng = Rng::new(config.seed).derive("lstm-train");
    if let Some(cap) = config.max_train_pairs {
        if refs.len() > cap {
            let keep = rng.sample_indices(refs.len(), cap);
            refs = keep.into_iter().map(|i| refs[i].clone()).collect();
        }
    }
    // Hold out the tail of a shuffled copy for early stopping.
    rng.shuffle(&mut refs);
    let n_val = ((refs.len() as f64 * config.validation_fraction) as usize).min(refs.len() - 1);
    let val_refs: Vec<_> = refs.split_off(refs.len() - n_val);

    let names = param_names(config);
    let mut values = init_params(config);
    let mut state = OptimizerState::new();
    let mut loss_curve = Vec::new();
    let mut val_history = Vec::new();
    let patience = config.optimizer.early_stop_patience;
    let mut best: Option<(f64, BTreeMap<String, Tensor>)> = None;

    for _epoch in 0..config.epochs {
        rng.shuffle(&mut refs);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in refs.chunks(config.batch_size.max(1)) {
            let (steps, targets) = dataset.batch(chunk)?;
            let (loss, mut grads) =
                batch_loss_and_grads(&values, &names, &steps, &targets, config)?;
            if let Some(clip) = config.optimizer.clip_norm {
                clip_global_norm(&mut grads, clip);
            }
            let mut params: Vec<Tensor> = names.iter().map(|n| values[n].clone()).collect();
            let no_extra_clip = OptimizerConfig {
                clip_norm: None, // already applied above
                ..config.optimizer.clone()
            };
            crate::autodiff::step(&mut params, &grads, &no_extra_clip, &mut state)?;
            for (name, tensor) in names.iter().zip(params) {
                values.insert(name.clone(), tensor);
            }
            epoch_loss += loss;
            n_batches += 1;
        }
        let train_loss = epoch_loss / n_batches.max(1) as f64;
        let val_loss = if val_refs.is_empty() {
            train_loss
        } else {
            let (steps, targets) = dataset.batch(&val_refs)?;
            batch_loss_only(&values, &steps, &targets, config)?
        };
        loss_curve.push((train_loss, val_loss));
        val_history.push(val_loss);
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, values.clone()));
        }
        if let Some(p) = patience {
            if early_stop(&val_history, p) {
                break;
            }
        }
    }
    let (_, best_values) = best.expect("at least one epoch ran");
    Ok(LstmModel {
        config: config.clone(),
        params: best_values,
        loss_curve,
    })
}

impl LstmModel {
    /// Parameters as a versioned name -> tensor checkpoint.
    pub fn checkpoint(&self) -> crate::autodiff::Checkpoint {
        let mut ckpt = crate::autodiff::Checkpoint::new();
        for (name, tensor) in &self.params {
            ckpt.insert(name.clone(), tensor.clone());
        }
        ckpt
    }

    /// Predicts the next scaled step from a (W, F) input window.
    pub fn forecast(&self, input: &Tensor) -> Result<Vec<f64>> {
        if input.shape() != (self.config.window, self.config.input_features) {
            return Err(Error::Shape {
                op: "lstm forecast",
                lhs: input.shape(),
                rhs: (self.config.window, self.config.input_features),
            });
        }
        // A window is a batch of one sample per timestep.
        let steps: Vec<Tensor> = (0..input.rows())
            .map(|r| {
                Tensor::from_vec(
                    1,
                    input.cols(),
                    (0..input.cols()).map(|c| input.get(r, c)).collect(),
                )
                .expect("row extraction is well-formed")
            })
            .collect();
        let graph = Graph::new();
        let vars: BTreeMap<String, Var> = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), graph.constant(v.clone())))
            .collect();
        let pred = forward(&graph, &vars, &steps, &self.config)?;
        Ok(pred.value().data().to_vec())
    }
}

impl ForecastModel for LstmModel {
    fn predict_next(&self, input: &Tensor) -> Result<Vec<f64>> {
        self.forecast(input)
    }

    /// Whole batches run through one forward pass.
    fn predict_batch(&self, steps: &[Tensor]) -> Result<Tensor> {
        if steps.len() != self.config.window {
            return Err(Error::Shape {
                op: "lstm predict_batch",
                lhs: (steps.len(), steps[0].cols()),
                rhs: (self.config.window, self.config.input_features),
            });
        }
        let graph = Graph::new();
        let vars: BTreeMap<String, Var> = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), graph.constant(v.clone())))
            .collect();
        Ok(forward(&graph, &vars, steps, &self.config)?.value())
    }
}
