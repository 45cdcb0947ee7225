//! Patch-transformer forecaster: the input window is cut into patches,
//! each patch linearly embedded and position-encoded, run through
//! transformer encoder layers (multi-head self-attention + feed-forward,
//! residual connections, layer normalization), and the last token feeds
//! a dense head predicting the next step.

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
pub struct PatchConfig {
    pub patch_size: usize,
    pub hidden: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Feed-forward width; conventionally a small multiple of hidden.
    pub ff_dim: usize,
    pub input_features: usize,
    pub window: usize,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_train_pairs: Option<usize>,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig {
            patch_size: 2,
            hidden: 64,
            n_layers: 2,
            n_heads: 4,
            ff_dim: 128,
            input_features: 1,
            window: 32,
            optimizer: OptimizerConfig::adam(),
            epochs: 20,
            batch_size: 16,
            max_train_pairs: Some(1024),
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl PatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 1 {
            return Err(Error::Config("patch_size must be >= 1".into()));
        }
        if !self.hidden.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "hidden {} not divisible by n_heads {}",
                self.hidden, self.n_heads
            )));
        }
        if self.n_layers < 1 {
            return Err(Error::Config("n_layers must be >= 1".into()));
        }
        self.optimizer.validate()
    }

    /// Tokens per window, counting the left-pad partial patch.
    pub fn n_tokens(&self) -> usize {
        self.window.div_ceil(self.patch_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchTstModel {
    pub config: PatchConfig,
    pub params: BTreeMap<String, Tensor>,
    pub loss_curve: Vec<(f64, f64)>,
}

fn param_names(config: &PatchConfig) -> Vec<String> {
    let mut names = vec!["embed/w".to_string(), "embed/b".to_string(), "pos".to_string()];
    for l in 0..config.n_layers {
        for p in ["wq", "wk", "wv", "wo", "ln1/g", "ln1/b", "ff/w1", "ff/b1", "ff/w2", "ff/b2", "ln2/g", "ln2/b"] {
            names.push(format!("layer{l}/{p}"));
        }
    }
    names.push("head/w".into());
    names.push("head/b".into());
    names
}

fn init_params(config: &PatchConfig) -> BTreeMap<String, Tensor> {
    let mut rng = Rng::new(config.seed).derive("patchtst-init");
    let d = config.hidden;
    let patch_dim = config.patch_size * config.input_features;
    let mut params = BTreeMap::new();
    params.insert(
        "embed/w".into(),
        Tensor::randn(&mut rng, patch_dim, d, 1.0 / (patch_dim as f64).sqrt()),
    );
    params.insert("embed/b".into(), Tensor::zeros(1, d));
    params.insert(
        "pos".into(),
        Tensor::randn(&mut rng, config.n_tokens(), d, 0.02),
    );
    let scale = 1.0 / (d as f64).sqrt();
    for l in 0..config.n_layers {
        for p in ["wq", "wk", "wv", "wo"] {
            params.insert(format!("layer{l}/{p}"), Tensor::randn(&mut rng, d, d, scale));
        }
        params.insert(format!("layer{l}/ln1/g"), ones(1, d));
        params.insert(format!("layer{l}/ln1/b"), Tensor::zeros(1, d));
        params.insert(
            format!("layer{l}/ff/w1"),
            Tensor::randn(&mut rng, d, config.ff_dim, scale),
        );
        params.insert(format!("layer{l}/ff/b1"), Tensor::zeros(1, config.ff_dim));
        params.insert(
            format!("layer{l}/ff/w2"),
            Tensor::randn(&mut rng, config.ff_dim, d, 1.0 / (config.ff_dim as f64).sqrt()),
        );
        params.insert(format!("layer{l}/ff/b2"), Tensor::zeros(1, d));
        params.insert(format!("layer{l}/ln2/g"), ones(1, d));
        params.insert(format!("layer{l}/ln2/b"), Tensor::zeros(1, d));
    }
    params.insert(
        "head/w".into(),
        Tensor::randn(&mut rng, d, config.input_features, scale),
    );
    params.insert("head/b".into(), Tensor::zeros(1, config.input_features));
    params
}

fn ones(r: usize, c: usize) -> Tensor {
    Tensor::from_vec(r, c, vec![1.0; r * c]).expect("shape matches data")
}

/// Cuts a (W, F) window into (n_tokens, patch_size*F) rows, left-padding
/// a short leading patch with the first value so the sequence end -
/// where prediction happens - stays aligned.
pub fn patchify(window: &Tensor, patch_size: usize) -> Tensor {
    let (w, f) = window.shape();
    let n_tokens = w.div_ceil(patch_size);
    let pad = n_tokens * patch_size - w;
    let mut data = Vec::with_capacity(n_tokens * patch_size * f);
    for token in 0..n_tokens {
        for p in 0..patch_size {
            let pos = (token * patch_size + p) as isize - pad as isize;
            let row = pos.max(0) as usize;
            for c in 0..f {
                data.push(window.get(row, c));
            }
        }
    }
    Tensor::from_vec(n_tokens, patch_size * f, data).expect("patch layout is consistent")
}

/// One encoder layer: pre-built attention + FF with residuals and
/// layer norms. `x` is (T, D).
pub fn encoder_layer(
    x: &Var,
    params: &BTreeMap<String, Var>,
    prefix: &str,
    n_heads: usize,
) -> Result<Var> {
    let attn = multi_head_attention(
        x,
        &params[&format!("{prefix}/wq")],
        &params[&format!("{prefix}/wk")],
        &params[&format!("{prefix}/wv")],
        &params[&format!("{prefix}/wo")],
        n_heads,
    )?;
    let x = x
        .add(&attn)?
        .layer_norm_rows(&params[&format!("{prefix}/ln1/g")], &params[&format!("{prefix}/ln1/b")])?;
    let ff = x
        .matmul(&params[&format!("{prefix}/ff/w1")])?
        .add_row_bias(&params[&format!("{prefix}/ff/b1")])?
        .relu()
        .matmul(&params[&format!("{prefix}/ff/w2")])?
        .add_row_bias(&params[&format!("{prefix}/ff/b2")])?;
    x.add(&ff)?
        .layer_norm_rows(&params[&format!("{prefix}/ln2/g")], &params[&format!("{prefix}/ln2/b")])
}

/// Scaled dot-product self-attention over all heads; rows of each head's
/// attention matrix are softmax-normalized.
pub fn multi_head_attention(
    x: &Var,
    wq: &Var,
    wk: &Var,
    wv: &Var,
    wo: &Var,
    n_heads: usize,
) -> Result<Var> {
    let (_, d) = x.shape();
    if d % n_heads != 0 {
        return Err(Error::Config(format!(
            "model dim {d} not divisible by {n_heads} heads"
        )));
    }
    let head_dim = d / n_heads;
    let q = x.matmul(wq)?;
    let k = x.matmul(wk)?;
    let v = x.matmul(wv)?;
    let mut heads: Option<Var> = None;
    for h in 0..n_heads {
        let span = (h * head_dim, (h + 1) * head_dim);
        let qh = q.slice_cols(span.0, span.1)?;
        let kh = k.slice_cols(span.0, span.1)?;
        let vh = v.slice_cols(span.0, span.1)?;
        let scores = qh
            .matmul(&kh.transpose())?
            .scale(1.0 / (head_dim as f64).sqrt())
            .softmax_rows();
        let ctx = scores.matmul(&vh)?;
        heads = Some(match heads {
            None => ctx,
            Some(acc) => acc.concat_cols(&ctx)?,
        });
    }
    heads.expect("n_heads >= 1").matmul(wo)
}

/// Full forward pass for one window; returns the (1, F) prediction.
fn forward(
    graph: &Graph,
    params: &BTreeMap<String, Var>,
    window: &Tensor,
    config: &PatchConfig,
) -> Result<Var> {
    let tokens = patchify(window, config.patch_size);
    let x = graph.constant(tokens);
    let embedded = x
        .matmul(&params["embed/w"])?
        .add_row_bias(&params["embed/b"])?
        .add(&params["pos"])?;
    let mut out = embedded;
    for l in 0..config.n_layers {
        out = encoder_layer(&out, params, &format!("layer{l}"), config.n_heads)?;
    }
    let n_tokens = config.n_tokens();
    let last = out.slice_rows(n_tokens - 1, n_tokens)?;
    last.matmul(&params["head/w"])?.add_row_bias(&params["head/b"])
}

fn minibatch_loss(
    values: &BTreeMap<String, Tensor>,
    names: &[String],
    dataset: &SequenceDataset,
    refs: &[(crate::model::DiskId, usize)],
    config: &PatchConfig,
    with_grads: bool,
) -> Result<(f64, Vec<Tensor>)> {
    let graph = Graph::new();
    let vars: BTreeMap<String, Var> = values
        .iter()
        .map(|(k, v)| {
            let var = if with_grads {
                graph.param(v.clone())
            } else {
                graph.constant(v.clone())
            };
            (k.clone(), var)
        })
        .collect();
    let mut total: Option<Var> = None;
    for (disk, i) in refs {
        let window = dataset.input_tensor(disk, *i)?;
        let pred = forward(&graph, &vars, &window, config)?;
        let target = graph.constant(Tensor::from_vec(
            1,
            config.input_features,
            dataset.target(disk, *i)?.to_vec(),
        )?);
        let loss = pred.mse_loss(&target)?;
        total = Some(match total {
            None => loss,
            Some(acc) => acc.add(&loss)?,
        });
    }
    let total = total
        .ok_or(Error::EmptyInput("empty minibatch"))?
        .scale(1.0 / refs.len() as f64);
    let value = total.value().data()[0];
    if !with_grads {
        return Ok((value, Vec::new()));
    }
    total.backward()?;
    Ok((value, names.iter().map(|n| vars[n].grad()).collect()))
}

/// Trains the patch transformer on the dataset's training pairs.
pub fn train_patchtst(dataset: &SequenceDataset, config: &PatchConfig) -> Result<PatchTstModel> {
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
    let mut rng = Rng::new(config.seed).derive("patchtst-train");
    if let Some(cap) = config.max_train_pairs {
        if refs.len() > cap {
            let keep = rng.sample_indices(refs.len(), cap);
            refs = keep.into_iter().map(|i| refs[i].clone()).collect();
        }
    }
    rng.shuffle(&mut refs);
    let n_val = ((refs.len() as f64 * config.validation_fraction) as usize).min(refs.len() - 1);
    let val_refs: Vec<_> = refs.split_off(refs.len() - n_val);

    let names = param_names(config);
    let mut values = init_params(config);
    let mut state = OptimizerState::new();
    let mut loss_curve = Vec::new();
    let mut val_history = Vec::new();
    let mut best: Option<(f64, BTreeMap<String, Tensor>)> = None;
    let optimizer = OptimizerConfig {
        clip_norm: None, // applied manually before the step
        ..config.optimizer.clone()
    };

    for _epoch in 0..config.epochs {
        rng.shuffle(&mut refs);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in refs.chunks(config.batch_size.max(1)) {
            let (loss, mut grads) =
                minibatch_loss(&values, &names, dataset, chunk, config, true)?;
            if let Some(clip) = config.optimizer.clip_norm {
                clip_global_norm(&mut grads, clip);
            }
            let mut params: Vec<Tensor> = names.iter().map(|n| values[n].clone()).collect();
            crate::autodiff::step(&mut params, &grads, &optimizer, &mut state)?;
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
            minibatch_loss(&values, &names, dataset, &val_refs, config, false)?.0
        };
        loss_curve.push((train_loss, val_loss));
        val_history.push(val_loss);
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, values.clone()));
        }
        if let Some(p) = config.optimizer.early_stop_patience {
            if early_stop(&val_history, p) {
                break;
            }
        }
    }
    let (_, best_values) = best.expect("at least one epoch ran");
    Ok(PatchTstModel {
        config: config.clone(),
        params: best_values,
        loss_curve,
    })
}

impl PatchTstModel {
    /// Parameters as a versioned name -> tensor checkpoint.
    pub fn checkpoint(&self) -> crate::autodiff::Checkpoint {
        let mut ckpt = crate::autodiff::Checkpoint::new();
        for (name, tensor) in &self.params {
            ckpt.insert(name.clone(), tensor.clone());
        }
        ckpt
    }

    pub fn forecast(&self, input: &Tensor) -> Result<Vec<f64>> {
        if input.shape() != (self.config.window, self.config.input_features) {
            return Err(Error::Shape {
                op: "patchtst forecast",
                lhs: input.shape(),
                rhs: (self.config.window, self.config.input_features),
            });
        }
        let graph = Graph::new();
        let vars: BTreeMap<String, Var> = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), graph.constant(v.clone())))
            .collect();
        let pred = forward(&graph, &vars, input, &self.config)?;
        Ok(pred.value().data().to_vec())
    }
}

impl ForecastModel for PatchTstModel {
    fn predict_next(&self, input: &Tensor) -> Result<Vec<f64>> {
        self.forecast(input)
    }
}
