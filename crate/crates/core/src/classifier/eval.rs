use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::train::{predict_all, Preloaded};
use crate::dataset::{DatasetManifest, Split};
use crate::error::Result;
use crate::synth::ForgeryKind;
use crate::tensor::bce_with_logit;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Classification results for one split. Positive = forged; a sample is
/// predicted forged when its logit is > 0. `per_kind` is keyed by forgery
/// kind ("none" for authentic images), so for the forged kinds it is the
/// recall on that kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub total: usize,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub per_kind: BTreeMap<String, KindStats>,
    /// Mean BCE over the split.
    pub loss: f64,
}

/// Builds a report from logits aligned with `record_ids`.
pub fn report_from_logits(manifest: &DatasetManifest, split: Split, record_ids: &[usize], logits: &[f32]) -> Result<EvalReport> {
    let labels: Vec<f32> = record_ids.iter().map(|&id| manifest.records[id].label as f32).collect();
    let loss = bce_with_logit(logits, &labels)?.value as f64;
    let mut confusion = Confusion::default();
    let mut per_kind: BTreeMap<String, KindStats> = BTreeMap::new();
    for (&id, &z) in record_ids.iter().zip(logits) {
        let rec = &manifest.records[id];
        let (pred, truth) = (z > 0.0, rec.label == 1);
        match (pred, truth) {
            (true, true) => confusion.tp += 1,
            (true, false) => confusion.fp += 1,
            (false, false) => confusion.tn += 1,
            (false, true) => confusion.fn_ += 1,
        }
        let k = per_kind.entry(rec.forgery_kind.as_str().to_owned()).or_default();
        k.count += 1;
        k.correct += (pred == truth) as usize;
    }
    for k in per_kind.values_mut() {
        k.accuracy = k.correct as f64 / k.count as f64;
    }
    let total = confusion.total();
    Ok(EvalReport {
        split,
        total,
        accuracy: (confusion.tp + confusion.tn) as f64 / total as f64,
        confusion,
        per_kind,
        loss,
    })
}

/// Infer-mode evaluation of a split already in memory.
pub fn evaluate_preloaded(model: &Model<f32>, manifest: &DatasetManifest, split: Split, data: &Preloaded) -> Result<EvalReport> {
    let logits = predict_all(model, data, 64)?;
    report_from_logits(manifest, split, &data.record_ids, &logits)
}

/// Decodes a split and evaluates it in infer mode.
pub fn evaluate(model: &Model<f32>, manifest: &DatasetManifest, split: Split) -> Result<EvalReport> {
    let data = Preloaded::load(manifest, split, model.arch.input_size)?;
    evaluate_preloaded(model, manifest, split, &data)
}

impl EvalReport {
    pub fn kind_accuracy(&self, kind: ForgeryKind) -> Option<f64> {
        self.per_kind.get(kind.as_str()).map(|k| k.accuracy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_manifest, Entry};

    fn manifest(authentic: usize, copy_move: usize, inpaint: usize) -> DatasetManifest {
        let mut e: Vec<Entry> = (0..authentic).map(|i| Entry::authentic(format!("a{i}"))).collect();
        e.extend((0..copy_move).map(|i| Entry::forged(format!("c{i}"), ForgeryKind::CopyMove, "m")));
        e.extend((0..inpaint).map(|i| Entry::forged(format!("p{i}"), ForgeryKind::Inpaint, "m")));
        let mut m = build_manifest(e, 0).unwrap();
        for r in &mut m.records {
            r.split = Split::Val;
        }
        m
    }

    #[test]
    fn always_forged_on_forged_split() {
        let m = manifest(0, 5, 3);
        let ids = m.ids(Split::Val);
        let r = report_from_logits(&m, Split::Val, &ids, &vec![10.0; ids.len()]).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.confusion.fn_, 0);
        assert_eq!(r.confusion.tp, 8);
    }

    #[test]
    fn constant_model_on_balanced_split_is_half() {
        let m = manifest(6, 3, 3);
        let ids = m.ids(Split::Val);
        for z in [-2.0, 2.0] {
            let r = report_from_logits(&m, Split::Val, &ids, &vec![z; ids.len()]).unwrap();
            assert_eq!(r.accuracy, 0.5);
        }
    }

    #[test]
    fn per_kind_recombines_to_overall() {
        let m = manifest(7, 5, 4);
        let ids = m.ids(Split::Val);
        let logits: Vec<f32> = (0..ids.len()).map(|i| ((i * 7919) % 13) as f32 - 6.0).collect();
        let r = report_from_logits(&m, Split::Val, &ids, &logits).unwrap();
        let counts: usize = r.per_kind.values().map(|k| k.count).sum();
        assert_eq!(counts, r.total);
        assert_eq!(r.confusion.total(), 16);
        let weighted: f64 = r.per_kind.values().map(|k| k.accuracy * k.count as f64).sum::<f64>() / r.total as f64;
        assert!((weighted - r.accuracy).abs() < 1e-12);
        assert_eq!(r.accuracy, (r.confusion.tp + r.confusion.tn) as f64 / 16.0);
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["confusion"]["fn"].is_u64());
        assert!(json["per_kind"]["copy_move"]["accuracy"].is_number());
    }
}
