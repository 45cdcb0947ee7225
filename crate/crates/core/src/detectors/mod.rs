//! Detector families and their trained, serializable models.
//!
//! Classical detectors (forests, isolation forest, SVM) consume snapshot
//! feature rows; sequence detectors (LSTM, patch transformer) and the
//! autoencoder train through the autodiff graph. Every trained model is
//! an immutable value, a deterministic function of (data, params, seed),
//! and serializes to versioned JSON.

pub mod autoencoder;
pub mod forest;
pub mod iforest;
pub mod lstm;
pub mod patchtst;
pub mod scoring;
pub mod sequence;
mod tree;

pub mod svm;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forest::{
    predict_forest, rank_disks, train_gbdt_ranker, train_random_forest, ForestKind, ForestModel,
    ForestParams, GbdtParams,
};
pub use iforest::{
    iforest_score, score_from_path_length, train_isolation_forest, IForestModel, IForestParams,
};
pub use svm::{cross_validate, svm_feature_importance, train_svm, SvmConfig, SvmKernel, SvmModel};
pub use tree::{DecisionTree, TreeNode, TreeParams};

pub use autoencoder::{train_autoencoder, AeConfig, AutoencoderModel};
pub use lstm::{train_lstm, LstmConfig, LstmModel};
pub use patchtst::{train_patchtst, PatchConfig, PatchTstModel};
pub use scoring::{classify_by_mse, forecast_mse, forecast_mse_by_day, ForecastModel};
pub use sequence::{build_sequences, MinMaxScaler, SeqFeatures, SequenceDataset};

/// Version tag of the model file schema.
pub const MODEL_FORMAT: &str = "failslow-model-v1";

/// A trained artifact of any detector family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum DetectorModel {
    Forest(ForestModel),
    IsolationForest(IForestModel),
    Svm(SvmModel),
    Lstm(LstmModel),
    PatchTst(PatchTstModel),
    Autoencoder(AutoencoderModel),
}

impl DetectorModel {
    pub fn family(&self) -> &'static str {
        match self {
            DetectorModel::Forest(m) => match m.kind {
                ForestKind::RandomForest => "random_forest",
                ForestKind::Gbdt => "gbdt",
            },
            DetectorModel::IsolationForest(_) => "isolation_forest",
            DetectorModel::Svm(_) => "svm",
            DetectorModel::Lstm(_) => "lstm",
            DetectorModel::PatchTst(_) => "patchtst",
            DetectorModel::Autoencoder(_) => "autoencoder",
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelEnvelope {
    format: String,
    model: DetectorModel,
}

/// Writes a model as versioned JSON.
pub fn save_model<W: Write>(model: &DetectorModel, out: W) -> Result<()> {
    let envelope = ModelEnvelope {
        format: MODEL_FORMAT.to_string(),
        model: model.clone(),
    };
    serde_json::to_writer(out, &envelope)?;
    Ok(())
}

pub fn load_model<R: Read>(reader: R) -> Result<DetectorModel> {
    let envelope: ModelEnvelope = serde_json::from_reader(reader)?;
    if envelope.format != MODEL_FORMAT {
        return Err(Error::Contract(format!(
            "unsupported model format {:?}",
            envelope.format
        )));
    }
    Ok(envelope.model)
}

/// Serializes a model to a JSON string (for determinism comparisons).
pub fn model_json(model: &DetectorModel) -> Result<String> {
    let mut buf = Vec::new();
    save_model(model, &mut buf)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}
