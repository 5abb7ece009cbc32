//! Weighted point sets, centroid sets and the domains they live in.
//!
//! Coordinates are stored flat (`dim` values per point) so that the hot loops in
//! assignment and clustering walk contiguous memory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power_diagram::TransportPlan;

/// Tolerance used when checking that capacities carry the same total mass as the
/// (normalized) target measure.
pub const CAPACITY_MASS_TOL: f64 = 1e-9;

/// Neumaier-compensated summation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_coords(dim: usize, coords: &[f64], what: &str) -> Result<usize> {
    if dim == 0 {
        return Err(Error::InvalidMeasure(format!("{what}: dimension must be at least 1")));
    }
    if !coords.len().is_multiple_of(dim) {
        return Err(Error::InvalidMeasure(format!(
            "{what}: {} coordinates is not a multiple of dimension {dim}",
            coords.len()
        )));
    }
    if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
        return Err(Error::InvalidMeasure(format!(
            "{what}: non-finite coordinate in point {}",
            i / dim
        )));
    }
    Ok(coords.len() / dim)
}

fn flatten(points: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
    let dim = points.first().map_or(0, Vec::len);
    let mut coords = Vec::with_capacity(points.len() * dim);
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::InvalidMeasure(format!(
                "point {i} has {} coordinates, expected {dim}",
                p.len()
            )));
        }
        coords.extend_from_slice(p);
    }
    Ok((dim, coords))
}

/// A finitely supported measure: points `x_i` with positive masses `μ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Builds a measure from flat coordinates. Weights must be finite and strictly
    /// positive; they are not normalized here.
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = check_coords(dim, &coords, "measure")?;
        if n == 0 {
            return Err(Error::InvalidMeasure("measure has no points".into()));
        }
        if weights.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: weights.len() });
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidMeasure(format!(
                "weight {i} is {} (must be finite and > 0)",
                weights[i]
            )));
        }
        Ok(Self { dim, coords, weights })
    }

    pub fn from_points(points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let (dim, coords) = flatten(points)?;
        Self::new(dim, coords, weights)
    }

    /// Uniform probability measure on the given points.
    pub fn uniform(dim: usize, coords: Vec<f64>) -> Result<Self> {
        let n = check_coords(dim, &coords, "measure")?;
        Self::new(dim, coords, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    /// Rescales the weights to sum to one. Idempotent: a measure whose mass is
    /// already one to within rounding is returned unchanged.
    pub fn normalize(&self) -> Result<Self> {
        let total = self.total_mass();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidMeasure(format!("total mass {total} is not positive")));
        }
        if (total - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(self.clone());
        }
        let weights = self.weights.iter().map(|w| w / total).collect();
        Ok(Self { dim: self.dim, coords: self.coords.clone(), weights })
    }

    pub fn is_normalized(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= 1e-12
    }

    /// μ-weighted mean of the support.
    pub fn mean(&self) -> Vec<f64> {
        let total = self.total_mass();
        let mut mean = vec![0.0; self.dim];
        for (p, w) in self.points().zip(&self.weights) {
            for (m, c) in mean.iter_mut().zip(p) {
                *m += w * c;
            }
        }
        mean.iter_mut().for_each(|m| *m /= total);
        mean
    }

    /// Axis-aligned bounding box `(lo, hi)` of the support.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.points() {
            for d in 0..self.dim {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Returns a copy with every point shifted by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Self {
        let mut coords = self.coords.clone();
        for p in coords.chunks_exact_mut(self.dim) {
            for (c, o) in p.iter_mut().zip(offset) {
                *c += o;
            }
        }
        Self { dim: self.dim, coords, weights: self.weights.clone() }
    }
}

/// Dirac targets `(y_j, ν_j)` with fixed capacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSet {
    dim: usize,
    positions: Vec<f64>,
    capacities: Vec<f64>,
}

impl CentroidSet {
    /// Capacities must be positive and sum to one; positions must be pairwise distinct.
    pub fn new(dim: usize, positions: Vec<f64>, capacities: Vec<f64>) -> Result<Self> {
        let k = check_coords(dim, &positions, "centroids")?;
        if k == 0 {
            return Err(Error::InvalidMeasure("centroid set is empty".into()));
        }
        if capacities.len() != k {
            return Err(Error::LengthMismatch { expected: k, found: capacities.len() });
        }
        if let Some(j) = capacities.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidMeasure(format!(
                "capacity {j} is {} (must be finite and > 0)",
                capacities[j]
            )));
        }
        let total = compensated_sum(capacities.iter().copied());
        if (total - 1.0).abs() > CAPACITY_MASS_TOL {
            return Err(Error::InvalidMeasure(format!(
                "capacities sum to {total}, expected total mass 1"
            )));
        }
        let set = Self { dim, positions, capacities };
        set.check_distinct()?;
        Ok(set)
    }

    pub fn uniform(dim: usize, positions: Vec<f64>) -> Result<Self> {
        let k = check_coords(dim, &positions, "centroids")?;
        Self::new(dim, positions, vec![1.0 / k.max(1) as f64; k])
    }

    pub fn from_points(points: &[Vec<f64>], capacities: Vec<f64>) -> Result<Self> {
        let (dim, positions) = flatten(points)?;
        Self::new(dim, positions, capacities)
    }

    fn check_distinct(&self) -> Result<()> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.position(a)
                .iter()
                .zip(self.position(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for pair in order.windows(2) {
            if self.position(pair[0]) == self.position(pair[1]) {
                let (first, second) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
                return Err(Error::DuplicateCentroids { first, second });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of centroids `k`.
    pub fn len(&self) -> usize {
        self.capacities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacities.is_empty()
    }

    pub fn position(&self, j: usize) -> &[f64] {
        &self.positions[j * self.dim..(j + 1) * self.dim]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    /// Same capacities at new positions.
    pub fn with_positions(&self, positions: Vec<f64>) -> Result<Self> {
        Self::new(self.dim, positions, self.capacities.clone())
    }

    /// Weights `h_j = -|y_j|²/2`, i.e. all power radii zero: the power diagram is
    /// then the ordinary Voronoi diagram of the positions.
    pub fn voronoi_weights(&self) -> Vec<f64> {
        (0..self.len()).map(|j| -0.5 * dot(self.position(j), self.position(j))).collect()
    }

    pub fn translated(&self, offset: &[f64]) -> Self {
        let mut positions = self.positions.clone();
        for p in positions.chunks_exact_mut(self.dim) {
            for (c, o) in p.iter_mut().zip(offset) {
                *c += o;
            }
        }
        Self { dim: self.dim, positions, capacities: self.capacities.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    /// Counterclockwise vertex list of a convex polygon.
    ConvexPolygon(Vec<[f64; 2]>),
    AxisBox { lo: Vec<f64>, hi: Vec<f64> },
    DiscreteOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Density {
    Uniform,
    Empirical,
}

/// Support region `Ω` of the source measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    kind: DomainKind,
    density: Density,
}

impl Domain {
    pub fn convex_polygon(vertices: Vec<[f64; 2]>, density: Density) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::NonConvexDomain);
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite domain vertex".into()));
        }
        let n = vertices.len();
        for i in 0..n {
            let (a, b, c) = (vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            if cross <= 0.0 {
                return Err(Error::NonConvexDomain);
            }
        }
        Ok(Self { kind: DomainKind::ConvexPolygon(vertices), density })
    }

    pub fn axis_box(lo: Vec<f64>, hi: Vec<f64>, density: Density) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidParameter("box bounds must have equal, nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
            return Err(Error::InvalidParameter("box requires lo < hi on every axis".into()));
        }
        Ok(Self { kind: DomainKind::AxisBox { lo, hi }, density })
    }

    pub fn unit_square() -> Self {
        Self {
            kind: DomainKind::AxisBox { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] },
            density: Density::Uniform,
        }
    }

    pub fn discrete() -> Self {
        Self { kind: DomainKind::DiscreteOnly, density: Density::Empirical }
    }

    /// Bounding square of a point cloud padded by `pad` times its diameter.
    pub fn bounding_polygon(lo: &[f64], hi: &[f64], pad: f64) -> Result<Self> {
        if lo.len() != 2 || hi.len() != 2 {
            return Err(Error::UnsupportedMode("bounding polygon requires 2D data".into()));
        }
        let diam = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt().max(1e-9);
        let m = pad * diam;
        Self::axis_box(vec![lo[0] - m, lo[1] - m], vec![hi[0] + m, hi[1] + m], Density::Empirical)
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn density(&self) -> Density {
        self.density
    }

    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            DomainKind::ConvexPolygon(_) => Some(2),
            DomainKind::AxisBox { lo, .. } => Some(lo.len()),
            DomainKind::DiscreteOnly => None,
        }
    }

    /// CCW polygon for 2D domains.
    pub fn polygon(&self) -> Option<Vec<[f64; 2]>> {
        match &self.kind {
            DomainKind::ConvexPolygon(v) => Some(v.clone()),
            DomainKind::AxisBox { lo, hi } if lo.len() == 2 => Some(vec![
                [lo[0], lo[1]],
                [hi[0], lo[1]],
                [hi[0], hi[1]],
                [lo[0], hi[1]],
            ]),
            _ => None,
        }
    }

    /// Lebesgue measure of the domain (area in 2D).
    pub fn volume(&self) -> Option<f64> {
        match &self.kind {
            DomainKind::ConvexPolygon(v) => Some(crate::power_diagram::polygon_area(v)),
            DomainKind::AxisBox { lo, hi } => Some(lo.iter().zip(hi).map(|(l, h)| h - l).product()),
            DomainKind::DiscreteOnly => None,
        }
    }

    pub fn diameter(&self) -> Option<f64> {
        match &self.kind {
            DomainKind::ConvexPolygon(v) => {
                let mut d = 0.0f64;
                for a in v {
                    for b in v {
                        d = d.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
                    }
                }
                Some(d)
            }
            DomainKind::AxisBox { lo, hi } => Some(dist_sq(lo, hi).sqrt()),
            DomainKind::DiscreteOnly => None,
        }
    }
}

/// Affine combination `(1-λ)a + λc` of two probability vectors.
pub fn blend_measures(a: &[f64], c: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if a.len() != c.len() {
        return Err(Error::LengthMismatch { expected: a.len(), found: c.len() });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("blend coefficient {lambda} outside [0, 1]")));
    }
    Ok(a.iter().zip(c).map(|(x, y)| (1.0 - lambda) * x + lambda * y).collect())
}

/// `Σ μ_i ‖x_i − y_{π(i)}‖^p` for a given plan.
pub fn total_cost(
    m: &EmpiricalMeasure,
    y: &CentroidSet,
    plan: &TransportPlan,
    p: f64,
) -> Result<f64> {
    if m.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: y.dim() });
    }
    if plan.assignment.len() != m.len() {
        return Err(Error::LengthMismatch { expected: m.len(), found: plan.assignment.len() });
    }
    if let Some(&j) = plan.assignment.iter().find(|&&j| j >= y.len()) {
        return Err(Error::IndexOutOfRange { index: j, len: y.len() });
    }
    let terms = m.points().zip(m.weights()).zip(&plan.assignment).map(|((x, w), &j)| {
        let d2 = dist_sq(x, y.position(j));
        if p == 2.0 {
            w * d2
        } else {
            w * d2.sqrt().powf(p)
        }
    });
    Ok(compensated_sum(terms))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        let m = EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![2.0, 2.0]).unwrap();
        assert_eq!(m.normalize().unwrap().weights(), &[0.5, 0.5]);
        let m = EmpiricalMeasure::new(1, vec![3.0], vec![1.0]).unwrap();
        assert_eq!(m.normalize().unwrap().weights(), &[1.0]);
        let m = EmpiricalMeasure::new(1, vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 5.0]).unwrap();
        assert_eq!(m.normalize().unwrap().weights(), &[0.125, 0.25, 0.625]);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![1.0, -2.0]).is_err());
        assert!(EmpiricalMeasure::new(2, vec![0.0, 1.0, 2.0], vec![1.0]).is_err());
        assert!(EmpiricalMeasure::new(1, vec![0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn blend_examples() {
        let a = [0.3, 0.7];
        let c = [0.9, 0.1];
        assert_eq!(blend_measures(&a, &c, 0.0).unwrap(), vec![0.3, 0.7]);
        assert_eq!(blend_measures(&a, &c, 1.0).unwrap(), vec![0.9, 0.1]);
        let b = blend_measures(&[0.5, 0.5], &[1.0, 0.0], 0.6).unwrap();
        assert!((b[0] - 0.8).abs() < 1e-15 && (b[1] - 0.2).abs() < 1e-15);
        assert!(blend_measures(&a, &[1.0], 0.5).is_err());
        assert!(blend_measures(&a, &c, 1.5).is_err());
        assert!(blend_measures(&a, &c, -0.1).is_err());
    }

    #[test]
    fn total_cost_examples() {
        let m = EmpiricalMeasure::new(2, vec![0.0, 0.0], vec![1.0]).unwrap();
        let y = CentroidSet::new(2, vec![0.0, 0.0], vec![1.0]).unwrap();
        let plan = TransportPlan::new(vec![0], 1).unwrap();
        assert_eq!(total_cost(&m, &y, &plan, 2.0).unwrap(), 0.0);

        let y = CentroidSet::new(2, vec![3.0, 4.0], vec![1.0]).unwrap();
        assert_eq!(total_cost(&m, &y, &plan, 2.0).unwrap(), 25.0);
        assert!((total_cost(&m, &y, &plan, 1.0).unwrap() - 5.0).abs() < 1e-12);

        let m = EmpiricalMeasure::new(2, vec![0.0, 0.0, 2.0, 0.0], vec![0.5, 0.5]).unwrap();
        let y = CentroidSet::new(2, vec![1.0, 0.0], vec![1.0]).unwrap();
        let plan = TransportPlan::new(vec![0, 0], 1).unwrap();
        assert_eq!(total_cost(&m, &y, &plan, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn total_cost_rejects_bad_index() {
        let m = EmpiricalMeasure::new(1, vec![0.0], vec![1.0]).unwrap();
        let y = CentroidSet::new(1, vec![0.0], vec![1.0]).unwrap();
        let plan = TransportPlan { assignment: vec![3], k: 4 };
        assert!(matches!(
            total_cost(&m, &y, &plan, 2.0),
            Err(Error::IndexOutOfRange { index: 3, len: 1 })
        ));
    }

    #[test]
    fn centroid_validation() {
        assert!(matches!(
            CentroidSet::new(2, vec![0.0, 0.0, 0.0, 0.0], vec![0.5, 0.5]),
            Err(Error::DuplicateCentroids { first: 0, second: 1 })
        ));
        assert!(CentroidSet::new(1, vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(CentroidSet::new(1, vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn domain_validation() {
        let cw = vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]];
        assert!(matches!(
            Domain::convex_polygon(cw, Density::Uniform),
            Err(Error::NonConvexDomain)
        ));
        let dart = vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.2], [1.0, 2.0]];
        assert!(Domain::convex_polygon(dart, Density::Uniform).is_err());
        let tri = Domain::convex_polygon(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], Density::Uniform)
            .unwrap();
        assert!((tri.volume().unwrap() - 0.5).abs() < 1e-15);
        assert!(Domain::axis_box(vec![0.0, 1.0], vec![1.0, 1.0], Density::Uniform).is_err());
        assert_eq!(Domain::unit_square().volume(), Some(1.0));
    }

    #[test]
    fn voronoi_weights_are_half_negative_norms() {
        let y = CentroidSet::uniform(2, vec![0.25, 0.5, 0.75, 0.5]).unwrap();
        assert_eq!(y.voronoi_weights(), vec![-0.15625, -0.40625]);
    }
}
