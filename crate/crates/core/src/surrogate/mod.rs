//! Two-stage intercept-time approximator: a classifier decides whether the
//! pursuer can intercept at all, and only then a regressor predicts the
//! time. Infeasible pairs get the sentinel cost.

pub mod mlp;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assignment::T_INF;
use crate::datagen::{featurize, Dataset, EngagementClass};
use crate::dynamics::VehicleState;
use crate::error::{Error, Result};
pub use mlp::{Activation, AdamParams, Dropout, Loss, MlpSpec, MlpWeights, TrainConfig, TrainingLog};

const FORMAT: &str = "intercept-approximator";
const VERSION: u32 = 1;

/// Network architecture plus weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub spec: MlpSpec,
    pub weights: MlpWeights,
}

impl MlpModel {
    pub fn predict_one(&self, x: &[f64]) -> f64 {
        mlp::predict(&self.spec, &self.weights, x, 1).expect("input width checked by caller")[0]
    }

    pub fn predict(&self, x: &[f64], rows: usize) -> Result<Vec<f64>> {
        mlp::predict(&self.spec, &self.weights, x, rows)
    }
}

/// Per-feature affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    /// Fits on a row-major matrix of `dim` columns. Constant columns keep
    /// unit scale.
    pub fn fit(x: &[f64], dim: usize) -> Self {
        let rows = (x.len() / dim).max(1) as f64;
        let mut shift = vec![0.0; dim];
        let mut scale = vec![0.0; dim];
        for row in x.chunks(dim) {
            for (s, v) in shift.iter_mut().zip(row) {
                *s += v;
            }
        }
        shift.iter_mut().for_each(|s| *s /= rows);
        for row in x.chunks(dim) {
            for ((q, v), m) in scale.iter_mut().zip(row).zip(&shift) {
                *q += (v - m) * (v - m);
            }
        }
        for q in &mut scale {
            let sd = (*q / rows).sqrt();
            *q = if sd > 1e-12 { sd } else { 1.0 };
        }
        Self { shift, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.chunks(self.shift.len())
            .flat_map(|row| {
                row.iter()
                    .zip(&self.shift)
                    .zip(&self.scale)
                    .map(|((v, m), s)| (v - m) / s)
            })
            .collect()
    }
}

/// Sentinel rule: infeasible below probability 0.5, otherwise the regressed
/// time clamped to `[0, sentinel)`.
pub fn decide(probability: f64, regressed: f64, sentinel: f64) -> f64 {
    if !(probability >= 0.5) {
        sentinel
    } else {
        regressed.clamp(0.0, sentinel - sentinel * f64::EPSILON)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproximatorModel {
    pub class: EngagementClass,
    pub classifier: MlpModel,
    pub regressor: MlpModel,
    pub sentinel: f64,
    pub normalization: Normalization,
}

/// Classifier and regressor setups for [`ApproximatorModel::train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximatorSetup {
    pub classifier_spec: MlpSpec,
    pub regressor_spec: MlpSpec,
    pub classifier_train: TrainConfig,
    pub regressor_train: TrainConfig,
}

impl ApproximatorSetup {
    /// Architectures and batch/epoch settings for the engagement class.
    /// Maneuvering batches are cut from 2048 to 128 because desk-scale
    /// datasets are two orders of magnitude smaller.
    pub fn for_class(class: EngagementClass, seed: u64) -> Self {
        let cfg = |loss, batch_size, epochs, offset: u64| TrainConfig {
            loss,
            batch_size,
            epochs,
            adam: AdamParams::default(),
            seed: seed.wrapping_add(offset),
        };
        match class {
            EngagementClass::Stationary => Self {
                classifier_spec: MlpSpec::stationary_classifier(),
                regressor_spec: MlpSpec::stationary_regressor(),
                classifier_train: cfg(Loss::BinaryCrossEntropy, 32, 30, 0),
                regressor_train: cfg(Loss::MeanSquaredError, 32, 40, 1),
            },
            EngagementClass::Maneuvering => Self {
                classifier_spec: MlpSpec::maneuvering_classifier(),
                regressor_spec: MlpSpec::maneuvering_regressor(),
                classifier_train: cfg(Loss::BinaryCrossEntropy, 128, 45, 0),
                regressor_train: cfg(Loss::MeanSquaredError, 128, 100, 1),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximatorTrainingLog {
    pub classifier: TrainingLog,
    pub regressor: TrainingLog,
}

/// Held-out quality of an approximator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateMetrics {
    pub samples: usize,
    pub accuracy: f64,
    /// Over feasible samples only, s.
    pub mae: f64,
    pub mse: f64,
    pub feasible_samples: usize,
}

impl ApproximatorModel {
    /// Fits the normalisation on `train`, then the classifier on all of it and
    /// the regressor on its feasible samples.
    pub fn train(train: &Dataset, setup: &ApproximatorSetup) -> Result<(Self, ApproximatorTrainingLog)> {
        let dim = train.class.feature_dim();
        for spec in [&setup.classifier_spec, &setup.regressor_spec] {
            spec.validate()?;
            if spec.input_dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: spec.input_dim(),
                });
            }
        }
        if train.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let raw = train.feature_matrix();
        let normalization = Normalization::fit(&raw, dim);
        let x = normalization.apply(&raw);
        let labels: Vec<f64> = train.samples.iter().map(|s| f64::from(u8::from(s.feasible))).collect();
        let (cw, clog) = mlp::train(&setup.classifier_spec, &x, &labels, &setup.classifier_train)?;

        let feasible: Vec<usize> = (0..train.len()).filter(|&i| train.samples[i].feasible).collect();
        if feasible.is_empty() {
            return Err(Error::invalid("training set has no feasible samples for the regressor"));
        }
        let xr: Vec<f64> = feasible.iter().flat_map(|&i| x[i * dim..(i + 1) * dim].iter().copied()).collect();
        let yr: Vec<f64> = feasible
            .iter()
            .map(|&i| train.samples[i].intercept_time.expect("feasible samples carry a time"))
            .collect();
        let (rw, rlog) = mlp::train(&setup.regressor_spec, &xr, &yr, &setup.regressor_train)?;
        Ok((
            Self {
                class: train.class,
                classifier: MlpModel {
                    spec: setup.classifier_spec.clone(),
                    weights: cw,
                },
                regressor: MlpModel {
                    spec: setup.regressor_spec.clone(),
                    weights: rw,
                },
                sentinel: T_INF,
                normalization,
            },
            ApproximatorTrainingLog {
                classifier: clog,
                regressor: rlog,
            },
        ))
    }

    fn check_width(&self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.class.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.class.feature_dim(),
                actual: raw.len(),
            });
        }
        Ok(())
    }

    /// Classifier probability and raw regressor output for one feature vector.
    pub fn raw_outputs(&self, raw: &[f64]) -> Result<(f64, f64)> {
        self.check_width(raw)?;
        let x = self.normalization.apply(raw);
        Ok((self.classifier.predict_one(&x), self.regressor.predict_one(&x)))
    }

    pub fn approximate_features(&self, raw: &[f64]) -> Result<f64> {
        self.check_width(raw)?;
        let x = self.normalization.apply(raw);
        let p = self.classifier.predict_one(&x);
        if p < 0.5 {
            return Ok(self.sentinel);
        }
        Ok(decide(p, self.regressor.predict_one(&x), self.sentinel))
    }

    /// Approximate costs for row-major stacked feature vectors, one network
    /// pass per model.
    pub fn approximate_batch(&self, raw: &[f64]) -> Result<Vec<f64>> {
        let dim = self.class.feature_dim();
        if raw.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: raw.len() % dim,
            });
        }
        let rows = raw.len() / dim;
        if rows == 0 {
            return Ok(Vec::new());
        }
        let x = self.normalization.apply(raw);
        let p = self.classifier.predict(&x, rows)?;
        let t = self.regressor.predict(&x, rows)?;
        Ok(p.iter().zip(&t).map(|(&p, &t)| decide(p, t, self.sentinel)).collect())
    }

    /// Approximate minimum intercept time of a pursuer/target pair.
    pub fn approximate_cost(&self, pursuer: &VehicleState, target: &VehicleState) -> f64 {
        self.approximate_features(&featurize(self.class, pursuer, target))
            .expect("featurize matches the model class")
    }

    /// Accuracy on all samples, regression error on feasible ones.
    pub fn evaluate(&self, test: &Dataset) -> Result<SurrogateMetrics> {
        if test.class != self.class {
            return Err(Error::invalid("dataset class does not match model"));
        }
        let rows = test.len();
        let x = self.normalization.apply(&test.feature_matrix());
        let probs = self.classifier.predict(&x, rows)?;
        let preds = self.regressor.predict(&x, rows)?;
        let mut correct = 0;
        let (mut abs, mut sq, mut nf) = (0.0, 0.0, 0);
        for ((s, p), r) in test.samples.iter().zip(&probs).zip(&preds) {
            if (*p >= 0.5) == s.feasible {
                correct += 1;
            }
            if let Some(t) = s.intercept_time {
                let e = r - t;
                abs += e.abs();
                sq += e * e;
                nf += 1;
            }
        }
        let nfd = nf.max(1) as f64;
        Ok(SurrogateMetrics {
            samples: rows,
            accuracy: correct as f64 / rows.max(1) as f64,
            mae: abs / nfd,
            mse: sq / nfd,
            feasible_samples: nf,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelDocument::from(self)).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(format!("cannot parse model: {e}")))?;
        doc.into_model()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::ModelFormat(m) => Error::ModelFormat(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct LayerDocument {
    /// `[outputs, inputs]`.
    shape: [usize; 2],
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkDocument {
    spec: MlpSpec,
    layers: Vec<LayerDocument>,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    class: EngagementClass,
    sentinel: f64,
    normalization: Normalization,
    classifier: NetworkDocument,
    regressor: NetworkDocument,
}

impl From<&MlpModel> for NetworkDocument {
    fn from(m: &MlpModel) -> Self {
        Self {
            spec: m.spec.clone(),
            layers: m
                .weights
                .layers
                .iter()
                .map(|l| LayerDocument {
                    shape: [l.outputs, l.inputs],
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }
}

impl NetworkDocument {
    fn into_model(self, name: &str) -> Result<MlpModel> {
        self.spec
            .validate()
            .map_err(|e| Error::ModelFormat(format!("{name}: {e}")))?;
        let weights = MlpWeights {
            layers: self
                .layers
                .into_iter()
                .map(|l| mlp::DenseLayer {
                    outputs: l.shape[0],
                    inputs: l.shape[1],
                    weights: l.weights,
                    bias: l.bias,
                })
                .collect(),
        };
        weights
            .check(&self.spec)
            .map_err(|e| Error::ModelFormat(format!("{name}: {e}")))?;
        Ok(MlpModel {
            spec: self.spec,
            weights,
        })
    }
}

impl From<&ApproximatorModel> for ModelDocument {
    fn from(m: &ApproximatorModel) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            class: m.class,
            sentinel: m.sentinel,
            normalization: m.normalization.clone(),
            classifier: (&m.classifier).into(),
            regressor: (&m.regressor).into(),
        }
    }
}

impl ModelDocument {
    fn into_model(self) -> Result<ApproximatorModel> {
        if self.format != FORMAT {
            return Err(Error::ModelFormat(format!("unexpected format tag {:?}", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported model version {} (expected {VERSION})",
                self.version
            )));
        }
        let dim = self.class.feature_dim();
        let n = &self.normalization;
        if n.shift.len() != dim || n.scale.len() != dim || n.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::ModelFormat("normalization does not match feature width".into()));
        }
        if !(self.sentinel > 0.0 && self.sentinel.is_finite()) {
            return Err(Error::ModelFormat(format!("bad sentinel {}", self.sentinel)));
        }
        let classifier = self.classifier.into_model("classifier")?;
        let regressor = self.regressor.into_model("regressor")?;
        if classifier.spec.input_dim() != dim || regressor.spec.input_dim() != dim {
            return Err(Error::ModelFormat("network input width does not match feature width".into()));
        }
        if classifier.spec.activations.last() != Some(&Activation::Sigmoid) {
            return Err(Error::ModelFormat("classifier must end in a sigmoid".into()));
        }
        Ok(ApproximatorModel {
            class: self.class,
            classifier,
            regressor,
            sentinel: self.sentinel,
            normalization: self.normalization,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::LabeledSample;
    use crate::dynamics::Vec3;
    use rand::{Rng, SeedableRng};

    #[test]
    fn sentinel_rule() {
        assert_eq!(decide(0.2, 3.1, T_INF), T_INF);
        assert_eq!(decide(0.9, 3.1, T_INF), 3.1);
        assert_eq!(decide(0.9, -0.2, T_INF), 0.0);
        assert_eq!(decide(0.5, 2.0, T_INF), 2.0);
        assert!(decide(0.9, 5e6, T_INF) < T_INF);
        assert_eq!(decide(f64::NAN, 1.0, T_INF), T_INF);
    }

    #[test]
    fn normalization_standardises() {
        let x = [1.0, 10.0, 3.0, 10.0, 5.0, 10.0];
        let n = Normalization::fit(&x, 2);
        assert_eq!(n.shift, vec![3.0, 10.0]);
        assert_eq!(n.scale[1], 1.0);
        let z = n.apply(&x);
        assert!((z[0] + z[2] + z[4]).abs() < 1e-12);
        assert!(((z[0] * z[0] + z[2] * z[2] + z[4] * z[4]) / 3.0 - 1.0).abs() < 1e-12);
    }

    /// Small synthetic stationary dataset: feasible iff rz > 0, time linear.
    fn toy_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n)
            .map(|_| {
                let f = vec![
                    rng.gen_range(-3e4..-1e4),
                    rng.gen_range(-1e4..3e4),
                    rng.gen_range(2500.0..3500.0),
                    rng.gen_range(0.0..3e4),
                ];
                let feasible = f[1] > 0.0;
                let t = feasible.then(|| -f[0] / f[2]);
                LabeledSample {
                    features: f,
                    feasible,
                    intercept_time: t,
                }
            })
            .collect();
        Dataset::new(EngagementClass::Stationary, samples)
    }

    fn small_setup() -> ApproximatorSetup {
        let mut s = ApproximatorSetup::for_class(EngagementClass::Stationary, 4);
        s.classifier_train.epochs = 3;
        s.regressor_train.epochs = 3;
        s
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let (model, _) = ApproximatorModel::train(&toy_dataset(300, 1), &small_setup()).unwrap();
        let back = ApproximatorModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let p = VehicleState::new(
                Vec3::new(rng.gen_range(-3e4..-1e4), 0.0, rng.gen_range(0.0..3e4)),
                Vec3::new(rng.gen_range(2500.0..3500.0), 0.0, 0.0),
            );
            let t = VehicleState::new(Vec3::new(0.0, 0.0, rng.gen_range(0.0..3e4)), Vec3::ZERO);
            assert_eq!(
                model.approximate_cost(&p, &t).to_bits(),
                back.approximate_cost(&p, &t).to_bits()
            );
        }
    }

    #[test]
    fn malformed_documents_are_rejected() {
        let (model, _) = ApproximatorModel::train(&toy_dataset(100, 3), &small_setup()).unwrap();
        let text = model.to_json();
        let truncated = &text[..text.len() / 2];
        assert!(matches!(ApproximatorModel::from_json(truncated), Err(Error::ModelFormat(_))));
        let bumped = text.replacen("\"version\":1", "\"version\":2", 1);
        let err = ApproximatorModel::from_json(&bumped).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc["regressor"]["layers"][0]["shape"][0] = serde_json::json!(7);
        assert!(ApproximatorModel::from_json(&doc.to_string()).is_err());
    }

    #[test]
    fn sentinel_iff_classifier_below_half() {
        let (model, _) = ApproximatorModel::train(&toy_dataset(400, 5), &small_setup()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let f = [
                rng.gen_range(-3e4..-1e4),
                rng.gen_range(-1e4..3e4),
                rng.gen_range(2500.0..3500.0),
                rng.gen_range(0.0..3e4),
            ];
            let (p, _) = model.raw_outputs(&f).unwrap();
            let c = model.approximate_features(&f).unwrap();
            assert_eq!(c == T_INF, p < 0.5);
            assert!(c >= 0.0);
        }
        assert!(model.approximate_features(&[1.0]).is_err());
    }

    #[test]
    fn batch_matches_single() {
        let (model, _) = ApproximatorModel::train(&toy_dataset(400, 5), &small_setup()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let raw: Vec<f64> = (0..37)
            .flat_map(|_| {
                [
                    rng.gen_range(-3e4..-1e4),
                    rng.gen_range(-1e4..3e4),
                    rng.gen_range(2500.0..3500.0),
                    rng.gen_range(0.0..3e4),
                ]
            })
            .collect();
        let batch = model.approximate_batch(&raw).unwrap();
        assert_eq!(batch.len(), 37);
        for (row, c) in raw.chunks(4).zip(&batch) {
            let single = model.approximate_features(row).unwrap();
            assert!((single - c).abs() <= 1e-9 * single.abs().max(1.0), "{single} vs {c}");
        }
        assert!(model.approximate_batch(&[]).unwrap().is_empty());
        assert!(model.approximate_batch(&raw[..6]).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let d = toy_dataset(200, 7);
        let a = ApproximatorModel::train(&d, &small_setup()).unwrap();
        let b = ApproximatorModel::train(&d, &small_setup()).unwrap();
        assert_eq!(a, b);
    }
}
