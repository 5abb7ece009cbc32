//! Many-to-one unsupervised domain adaptation.
//!
//! Labeled source atoms are used as the initial centroids of a capacity-constrained
//! clustering of the unlabeled target. Each atom keeps its label while it is driven
//! into the target domain; target points are then labeled by the transported atom
//! whose power cell contains them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::clustering::{impm, ClusterConfig, ClusteringResult};
use crate::error::{Error, Result};
use crate::measure::{CentroidSet, EmpiricalMeasure};
use crate::power_diagram::best_site;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMeasure {
    pub measure: EmpiricalMeasure,
    pub labels: Vec<usize>,
}

impl LabeledMeasure {
    pub fn new(measure: EmpiricalMeasure, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != measure.len() {
            return Err(Error::LengthMismatch { expected: measure.len(), found: labels.len() });
        }
        Ok(Self { measure, labels })
    }
}

/// Transported source atoms with their labels and the final power weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationModel {
    pub centroids: CentroidSet,
    pub labels: Vec<usize>,
    pub h: Vec<f64>,
    pub clustering: ClusteringResult,
}

pub fn adapt(source: &LabeledMeasure, target: &EmpiricalMeasure, config: &ClusterConfig) -> Result<AdaptationModel> {
    if source.measure.dim() != target.dim() {
        return Err(Error::DimensionMismatch { expected: source.measure.dim(), found: target.dim() });
    }
    let y0 = CentroidSet::uniform(source.measure.dim(), source.measure.coords().to_vec())?;
    let clustering = impm(target, &y0, config)?;
    Ok(AdaptationModel {
        centroids: clustering.centroids.clone(),
        labels: source.labels.clone(),
        h: clustering.h.clone(),
        clustering,
    })
}

/// Label of the transported atom with the smallest power distance
/// `‖x − y_j‖² − r_j²`, i.e. the largest `⟨x, y_j⟩ + h_j`.
pub fn classify(model: &AdaptationModel, points: &EmpiricalMeasure) -> Result<Vec<usize>> {
    if points.dim() != model.centroids.dim() {
        return Err(Error::DimensionMismatch { expected: model.centroids.dim(), found: points.dim() });
    }
    Ok(points
        .points()
        .map(|x| model.labels[best_site(x, &model.centroids, &model.h).0])
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportedCentroid {
    pub position: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    pub accuracy: f64,
    /// True-positive rate, class 1 positive.
    pub sensitivity: f64,
    pub specificity: f64,
    pub confusion: Confusion,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transported_centroids: Vec<TransportedCentroid>,
}

/// Binary confusion statistics. A rate whose denominator is empty is reported as 1.
pub fn evaluate(predictions: &[usize], ground_truth: &[usize]) -> Result<AdaptationReport> {
    if predictions.is_empty() {
        return Err(Error::InvalidParameter("nothing to evaluate".into()));
    }
    if predictions.len() != ground_truth.len() {
        return Err(Error::LengthMismatch { expected: ground_truth.len(), found: predictions.len() });
    }
    let mut c = Confusion::default();
    for (&p, &t) in predictions.iter().zip(ground_truth) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "labels must be 0 or 1, got prediction {p} / truth {t}"
                )))
            }
        }
    }
    let rate = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok(AdaptationReport {
        accuracy: (c.tp + c.tn) as f64 / predictions.len() as f64,
        sensitivity: rate(c.tp, c.tp + c.fn_),
        specificity: rate(c.tn, c.tn + c.fp),
        confusion: c,
        transported_centroids: Vec::new(),
    })
}

impl AdaptationReport {
    pub fn with_centroids(mut self, model: &AdaptationModel) -> Self {
        self.transported_centroids = (0..model.centroids.len())
            .map(|j| TransportedCentroid {
                position: model.centroids.position(j).to_vec(),
                label: model.labels[j],
            })
            .collect();
        self
    }

    /// Percentages laid out as rows `Acc. / Sen. / Spe.` under one method column.
    pub fn table(&self, method: &str) -> String {
        let width = method.len().max(7);
        let mut out = format!("{:<6}| {:>width$}\n", "", method);
        out.push_str(&format!("{}+{}\n", "-".repeat(6), "-".repeat(width + 1)));
        for (name, v) in [
            ("Acc.", self.accuracy),
            ("Sen.", self.sensitivity),
            ("Spe.", self.specificity),
        ] {
            out.push_str(&format!("{name:<6}| {:>width$.2}\n", 100.0 * v));
        }
        out
    }
}

/// Isotropic Gaussian class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClass {
    pub mean: Vec<f64>,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Class 0 then class 1.
    pub source: [GaussianClass; 2],
    pub target: [GaussianClass; 2],
    pub source_per_class: usize,
    pub target_per_class: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let class = |mean: [f64; 2], variance| GaussianClass { mean: mean.to_vec(), variance };
        Self {
            source: [class([-2.0, 0.0], 0.5), class([2.0, 0.0], 0.5)],
            target: [class([1.0, 3.0], 0.8), class([7.0, 2.5], 1.0)],
            source_per_class: 30,
            target_per_class: 1500,
            seed: 7,
        }
    }
}

/// Labeled source and labeled target drawn from the two class pairs. Both measures
/// carry uniform masses.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<(LabeledMeasure, LabeledMeasure)> {
    let dim = config.source[0].mean.len();
    let all = config.source.iter().chain(&config.target);
    if dim == 0 || all.clone().any(|c| c.mean.len() != dim) {
        return Err(Error::InvalidParameter("class means must share one dimension".into()));
    }
    if all.clone().any(|c| !(c.variance > 0.0)) {
        return Err(Error::InvalidParameter("class variances must be positive".into()));
    }
    if config.source_per_class == 0 || config.target_per_class == 0 {
        return Err(Error::InvalidParameter("sample counts must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |classes: &[GaussianClass; 2], per_class: usize| -> Result<LabeledMeasure> {
        let mut coords = Vec::with_capacity(2 * per_class * dim);
        let mut labels = Vec::with_capacity(2 * per_class);
        for (label, class) in classes.iter().enumerate() {
            let normal = Normal::new(0.0, class.variance.sqrt())
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            for _ in 0..per_class {
                coords.extend(class.mean.iter().map(|m| m + normal.sample(&mut rng)));
                labels.push(label);
            }
        }
        LabeledMeasure::new(EmpiricalMeasure::uniform(dim, coords)?, labels)
    };
    let source = draw(&config.source, config.source_per_class)?;
    let target = draw(&config.target, config.target_per_class)?;
    Ok((source, target))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub generator: SyntheticConfig,
    pub cluster: ClusterConfig,
}

/// Generates data, adapts, and scores the target against the generator labels.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(AdaptationModel, AdaptationReport)> {
    let (source, target) = generate_synthetic(&config.generator)?;
    let model = adapt(&source, &target.measure, &config.cluster)?;
    let predicted = classify(&model, &target.measure)?;
    let report = evaluate(&predicted, &target.labels)?.with_centroids(&model);
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let r = evaluate(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap();
        assert_eq!((r.accuracy, r.sensitivity, r.specificity), (1.0, 1.0, 1.0));
    }

    #[test]
    fn biased_predictor_row() {
        let truth: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let r = evaluate(&[1; 100], &truth).unwrap();
        assert_eq!((r.accuracy, r.sensitivity, r.specificity), (0.5, 1.0, 0.0));
    }

    #[test]
    fn confusion_arithmetic() {
        let mut pred = vec![1; 45];
        pred.extend([0; 50]);
        pred.extend([0; 5]);
        let mut truth = vec![1; 45];
        truth.extend([0; 50]);
        truth.extend([1; 5]);
        let r = evaluate(&pred, &truth).unwrap();
        assert_eq!(r.confusion, Confusion { tp: 45, tn: 50, fp: 0, fn_: 5 });
        assert!((r.accuracy - 0.95).abs() < 1e-15);
        assert!((r.sensitivity - 0.9).abs() < 1e-15);
        assert_eq!(r.specificity, 1.0);
    }

    #[test]
    fn evaluate_errors() {
        assert!(evaluate(&[], &[]).is_err());
        assert!(evaluate(&[0, 1], &[0]).is_err());
        assert!(evaluate(&[2], &[0]).is_err());
    }

    #[test]
    fn classify_on_centroid_and_bisector() {
        let y = CentroidSet::uniform(2, vec![-1.0, 0.0, 1.0, 0.0]).unwrap();
        let h = y.voronoi_weights();
        let clustering = ClusteringResult {
            centroids: y.clone(),
            plan: crate::power_diagram::TransportPlan { assignment: vec![], k: 2 },
            h: h.clone(),
            w: vec![0.5, 0.5],
            objective_trace: vec![0.0],
            w2_estimate: 0.0,
            iterations: 0,
            termination: crate::clustering::Termination::PlanFixedPoint,
        };
        let model = AdaptationModel { centroids: y, labels: vec![1, 0], h, clustering };
        let pts = EmpiricalMeasure::uniform(2, vec![-1.0, 0.0, 1.0, 0.0, -0.1, 5.0, 0.1, -3.0]).unwrap();
        assert_eq!(classify(&model, &pts).unwrap(), vec![1, 0, 1, 0]);
    }

    #[test]
    fn table_layout() {
        let r = evaluate(&[1, 1], &[1, 0]).unwrap();
        let t = r.table("VWC");
        assert!(t.contains("Acc.  |   50.00"));
        assert!(t.contains("Spe.  |    0.00"));
    }

    #[test]
    fn generator_counts_and_labels() {
        let (s, t) = generate_synthetic(&SyntheticConfig::default()).unwrap();
        assert_eq!(s.measure.len(), 60);
        assert_eq!(t.measure.len(), 3000);
        assert_eq!(s.labels.iter().filter(|&&l| l == 1).count(), 30);
        assert_eq!(t.labels[..1500].iter().sum::<usize>(), 0);
    }
}
