//! Versioned JSON documents for fitted models.
//!
//! ```json
//! {"format": "peakcast-model", "version": 1, "model": {"kind": "forest", ...}}
//! ```
//! Trees are written as nested arrays (see [`TreeNode`](super::TreeNode)).

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use super::LearnError;

pub const FORMAT: &str = "peakcast-model";
pub const VERSION: u64 = 1;

pub fn to_document<T: Serialize>(model: &T) -> Result<String, LearnError> {
    let doc = json!({ "format": FORMAT, "version": VERSION, "model": model });
    serde_json::to_string_pretty(&doc).map_err(|e| LearnError::Document(e.to_string()))
}

pub fn from_document<T: DeserializeOwned>(text: &str) -> Result<T, LearnError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| LearnError::Document(e.to_string()))?;
    if doc.get("format").and_then(Value::as_str) != Some(FORMAT) {
        return Err(LearnError::Document("missing or unknown format tag".into()));
    }
    match doc.get("version").and_then(Value::as_u64) {
        Some(VERSION) => {}
        Some(v) => return Err(LearnError::Document(format!("version {v} is not supported (expected {VERSION})"))),
        None => return Err(LearnError::Document("missing version field".into())),
    }
    let model = doc.get_mut("model").map(Value::take).ok_or_else(|| LearnError::Document("missing model".into()))?;
    serde_json::from_value(model).map_err(|e| LearnError::Document(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::*;

    fn data() -> (Matrix, Vec<u8>) {
        let rows: Vec<[f64; 2]> = (0..60).map(|i| [(i as f64 * 0.37).sin(), (i % 7) as f64 / 3.0]).collect();
        let y = rows.iter().map(|r| (r[0] + 0.2 * r[1] > 0.1) as u8).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn classifiers_round_trip_exactly() {
        let (x, y) = data();
        let models = [
            Classifier::Forest(fit_random_forest(&x, &y, &ForestParams { n_tree: 7, seed: 3, ..Default::default() }).unwrap()),
            Classifier::Gbm(fit_gbm(&x, &y, &GbmParams { n_rounds: 9, ..Default::default() }).unwrap()),
            Classifier::Logit(fit_logit_aic(&x, &y).unwrap()),
        ];
        for m in models {
            let text = to_document(&m).unwrap();
            let back: Classifier = from_document(&text).unwrap();
            assert_eq!(back, m);
            for row in x.iter_rows() {
                assert_eq!(back.predict_proba(row).unwrap().to_bits(), m.predict_proba(row).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn mlp_round_trip() {
        let (x, _) = data();
        let y: Vec<f64> = x.iter_rows().map(|r| r[0] * 3.0 + r[1]).collect();
        let m = fit_mlp(&x, &y, &MlpConfig { epochs: 5, ..Default::default() }).unwrap();
        let back: MlpModel = from_document(&to_document(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn version_is_mandatory() {
        let err = from_document::<Classifier>(r#"{"format":"peakcast-model","model":{}}"#).unwrap_err();
        assert!(err.to_string().contains("version"));
        let err = from_document::<Classifier>(r#"{"format":"peakcast-model","version":99,"model":{}}"#).unwrap_err();
        assert!(err.to_string().contains("99"));
    }
}
