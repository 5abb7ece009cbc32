//! Power (Laguerre) diagrams parameterized by the weight vector `h`.
//!
//! Cell `j` is the set of points where `⟨x, y_j⟩ + h_j` attains the maximum over all
//! centroids, equivalently the points of minimal power distance `‖x − y_j‖² − r_j²`
//! with `r_j² = |y_j|² + 2h_j`. In 2D the cells are built exactly by clipping the
//! domain polygon against the `k − 1` bounding half-planes of each site; in higher
//! dimension only the sample assignment is available.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{compensated_sum, dot, CentroidSet, Density, Domain, EmpiricalMeasure};

/// Facets shorter than this are treated as tangencies and dropped.
pub const DEGENERATE_FACET_LEN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    /// Index of the adjacent cell.
    pub neighbor: usize,
    pub length: f64,
    pub midpoint: [f64; 2],
    pub endpoints: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub index: usize,
    /// CCW vertices; empty when the cell does not meet the domain.
    pub polygon: Vec<[f64; 2]>,
    pub facets: Vec<Facet>,
    /// `r_j²` with `h_j = −(|y_j|² − r_j²)/2`. May be negative: only differences of
    /// power radii are meaningful.
    pub power_radius_sq: f64,
    pub area: f64,
    pub centroid: [f64; 2],
}

impl PowerCell {
    /// `r_j` when `r_j² ≥ 0`.
    pub fn power_radius(&self) -> Option<f64> {
        (self.power_radius_sq >= 0.0).then(|| self.power_radius_sq.sqrt())
    }

    pub fn is_empty(&self) -> bool {
        self.polygon.len() < 3
    }

    fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        if self.is_empty() {
            return false;
        }
        let n = self.polygon.len();
        (0..n).all(|t| {
            let a = self.polygon[t];
            let b = self.polygon[(t + 1) % n];
            (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= -tol
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDiagram {
    pub cells: Vec<PowerCell>,
    pub h: Vec<f64>,
    pub domain: Domain,
}

impl PowerDiagram {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn areas(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.area).collect()
    }

    /// Index of the first cell whose polygon contains `p` (boundary inclusive).
    pub fn locate(&self, p: [f64; 2]) -> Option<usize> {
        self.cells.iter().position(|c| c.contains(p, 1e-12))
    }
}

/// Per-sample assignment `π: x_i → j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransportPlan {
    pub assignment: Vec<usize>,
    pub k: usize,
}

impl TransportPlan {
    pub fn new(assignment: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&j) = assignment.iter().find(|&&j| j >= k) {
            return Err(Error::IndexOutOfRange { index: j, len: k });
        }
        Ok(Self { assignment, k })
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Sample count per centroid.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &j in &self.assignment {
            c[j] += 1;
        }
        c
    }
}

pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    polygon_area_centroid(poly).0
}

/// Signed shoelace area and area centroid.
pub(crate) fn polygon_area_centroid(poly: &[[f64; 2]]) -> (f64, [f64; 2]) {
    let n = poly.len();
    if n < 3 {
        return (0.0, poly.first().copied().unwrap_or([0.0, 0.0]));
    }
    // shift to the first vertex to limit cancellation
    let o = poly[0];
    let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for t in 1..n - 1 {
        let p = [poly[t][0] - o[0], poly[t][1] - o[1]];
        let q = [poly[t + 1][0] - o[0], poly[t + 1][1] - o[1]];
        let cross = p[0] * q[1] - q[0] * p[1];
        a2 += cross;
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
    }
    if a2 == 0.0 {
        return (0.0, o);
    }
    (0.5 * a2, [o[0] + cx / (3.0 * a2), o[1] + cy / (3.0 * a2)])
}

/// Edge provenance: the edge leaving a vertex lies either on the domain boundary or
/// on the bisector shared with a neighbor cell.
type Labeled = ([f64; 2], Option<usize>);

/// Keeps the part of a convex polygon where `⟨m, normal⟩ ≥ offset`.
fn clip(poly: &[Labeled], normal: [f64; 2], offset: f64, neighbor: usize) -> Vec<Labeled> {
    let n = poly.len();
    let side = |p: [f64; 2]| normal[0] * p[0] + normal[1] * p[1] - offset;
    let vals: Vec<f64> = poly.iter().map(|(p, _)| side(*p)).collect();
    if vals.iter().all(|&v| v >= 0.0) {
        return poly.to_vec();
    }
    let mut out = Vec::with_capacity(n + 1);
    for t in 0..n {
        let (p, label) = poly[t];
        let (q, _) = poly[(t + 1) % n];
        let (fp, fq) = (vals[t], vals[(t + 1) % n]);
        let crossing = |fp: f64, fq: f64| {
            let s = fp / (fp - fq);
            [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]
        };
        match (fp >= 0.0, fq >= 0.0) {
            (true, true) => out.push((p, label)),
            (true, false) => {
                out.push((p, label));
                if fp > 0.0 {
                    out.push((crossing(fp, fq), Some(neighbor)));
                } else if let Some(last) = out.last_mut() {
                    last.1 = Some(neighbor);
                }
            }
            (false, true) if fq > 0.0 => out.push((crossing(fp, fq), label)),
            (false, true) => {}
            (false, false) => {}
        }
    }
    if out.len() < 3 {
        out.clear();
    }
    out
}

fn build_cell(y: &CentroidSet, h: &[f64], domain: &[[f64; 2]], j: usize) -> PowerCell {
    let yj = y.position(j);
    let mut poly: Vec<Labeled> = domain.iter().map(|&p| (p, None)).collect();
    for i in 0..y.len() {
        if i == j || poly.is_empty() {
            continue;
        }
        let yi = y.position(i);
        let normal = [yj[0] - yi[0], yj[1] - yi[1]];
        poly = clip(&poly, normal, h[i] - h[j], i);
    }
    let n = poly.len();
    let mut facets = Vec::new();
    for t in 0..n {
        let (a, label) = poly[t];
        let (b, _) = poly[(t + 1) % n];
        if let Some(neighbor) = label {
            let length = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            if length >= DEGENERATE_FACET_LEN {
                facets.push(Facet {
                    neighbor,
                    length,
                    midpoint: [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])],
                    endpoints: [a, b],
                });
            }
        }
    }
    let polygon: Vec<[f64; 2]> = poly.into_iter().map(|(p, _)| p).collect();
    let (area, centroid) = polygon_area_centroid(&polygon);
    PowerCell {
        index: j,
        polygon,
        facets,
        power_radius_sq: dot(yj, yj) + 2.0 * h[j],
        area: area.max(0.0),
        centroid,
    }
}

pub(crate) fn check_weights(y: &CentroidSet, h: &[f64]) -> Result<()> {
    if h.len() != y.len() {
        return Err(Error::LengthMismatch { expected: y.len(), found: h.len() });
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("weight vector contains non-finite entries".into()));
    }
    Ok(())
}

/// Exact 2D power diagram of `(y, h)` restricted to a convex polygonal domain.
pub fn build_power_diagram_2d(y: &CentroidSet, h: &[f64], domain: &Domain) -> Result<PowerDiagram> {
    check_weights(y, h)?;
    let poly = domain.polygon().ok_or_else(|| {
        Error::UnsupportedMode("power diagram geometry requires a 2D polygonal domain".into())
    })?;
    if y.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: y.dim() });
    }
    let cells = (0..y.len())
        .into_par_iter()
        .map(|j| build_cell(y, h, &poly, j))
        .collect();
    Ok(PowerDiagram { cells, h: h.to_vec(), domain: domain.clone() })
}

/// Index of the maximal score `⟨x, y_j⟩ + h_j` (smallest index on ties) and the score.
#[inline]
pub(crate) fn best_site(x: &[f64], y: &CentroidSet, h: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (j, hj) in h.iter().enumerate() {
        let s = dot(x, y.position(j)) + hj;
        if s > best_score {
            best = j;
            best_score = s;
        }
    }
    (best, best_score)
}

/// Assignment plus the attained maximum `θ_h(x_i)` per sample.
pub(crate) fn assign_with_scores(
    m: &EmpiricalMeasure,
    y: &CentroidSet,
    h: &[f64],
) -> (Vec<usize>, Vec<f64>) {
    const CHUNK: usize = 512;
    let dim = m.dim();
    let parts: Vec<(Vec<usize>, Vec<f64>)> = m
        .coords()
        .par_chunks(CHUNK * dim)
        .map(|chunk| chunk.chunks_exact(dim).map(|x| best_site(x, y, h)).unzip())
        .collect();
    let mut assignment = Vec::with_capacity(m.len());
    let mut scores = Vec::with_capacity(m.len());
    for (a, s) in parts {
        assignment.extend(a);
        scores.extend(s);
    }
    (assignment, scores)
}

/// Sends every sample to the cell maximizing `⟨x_i, y_j⟩ + h_j`; ties go to the
/// smallest index.
pub fn assign(m: &EmpiricalMeasure, y: &CentroidSet, h: &[f64]) -> Result<TransportPlan> {
    check_weights(y, h)?;
    if m.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: y.dim(), found: m.dim() });
    }
    let (assignment, _) = assign_with_scores(m, y, h);
    Ok(TransportPlan { assignment, k: y.len() })
}

/// `w_j = Σ_{π(i)=j} μ_i`.
pub fn cell_masses(plan: &TransportPlan, m: &EmpiricalMeasure) -> Vec<f64> {
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); plan.k];
    for (&j, &w) in plan.assignment.iter().zip(m.weights()) {
        buckets[j].push(w);
    }
    buckets.into_iter().map(compensated_sum).collect()
}

/// `w_j = area(V_j) / area(Ω)` under the uniform density.
pub fn cell_masses_continuous(diagram: &PowerDiagram) -> Result<Vec<f64>> {
    if diagram.domain.density() != Density::Uniform {
        return Err(Error::UnsupportedMode(
            "continuous cell masses require a uniform-density domain".into(),
        ));
    }
    let total = diagram
        .domain
        .volume()
        .ok_or_else(|| Error::UnsupportedMode("domain has no volume".into()))?;
    Ok(diagram.cells.iter().map(|c| c.area / total).collect())
}
