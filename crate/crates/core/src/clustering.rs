//! Capacity-constrained clustering by alternating optimal transport with centroid
//! updates, plus the unconstrained k-means++/Lloyd baseline.
//!
//! Each outer iteration solves the transport problem for fixed centroids (a power
//! diagram whose cells carry exactly the prescribed masses), then moves every centroid
//! to the weighted mean of its cell. Both half-steps can only lower
//! `f = Σ_j Σ_{x_i ∈ V_j} μ_i ‖x_i − y_j‖²`, and since there are finitely many
//! assignments the loop stops at a plan fixed point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{dist_sq, dot, total_cost, CentroidSet, EmpiricalMeasure};
use crate::power_diagram::{assign, cell_masses, TransportPlan};
use crate::vot::{solve_empirical, Mode, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub solver: SolverConfig,
    pub mode: Mode,
    /// Stop once no centroid moves farther than this.
    pub outer_tol: f64,
    pub outer_max_iter: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            mode: Mode::GradientDescent,
            outer_tol: 1e-7,
            outer_max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// The assignment repeated itself.
    PlanFixedPoint,
    /// Centroids moved less than the outer tolerance.
    CentroidsConverged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub centroids: CentroidSet,
    pub plan: TransportPlan,
    pub h: Vec<f64>,
    /// Cell masses of `plan`.
    pub w: Vec<f64>,
    /// Objective after each transport step.
    pub objective_trace: Vec<f64>,
    /// Square root of the final objective.
    pub w2_estimate: f64,
    pub iterations: usize,
    pub termination: Termination,
}

/// Capacity-constrained k-means energy of a plan; the squared-distance transport cost.
pub fn clustering_objective(m: &EmpiricalMeasure, y: &CentroidSet, plan: &TransportPlan) -> Result<f64> {
    total_cost(m, y, plan, 2.0)
}

/// μ-weighted mean of every cluster, flat `k × dim`.
pub fn update_centroids(m: &EmpiricalMeasure, plan: &TransportPlan, k: usize) -> Result<Vec<f64>> {
    if plan.assignment.len() != m.len() {
        return Err(Error::LengthMismatch { expected: m.len(), found: plan.assignment.len() });
    }
    let dim = m.dim();
    let mut sums = vec![0.0; k * dim];
    let mut mass = vec![0.0; k];
    for ((x, w), &j) in m.points().zip(m.weights()).zip(&plan.assignment) {
        if j >= k {
            return Err(Error::IndexOutOfRange { index: j, len: k });
        }
        mass[j] += w;
        for (s, c) in sums[j * dim..(j + 1) * dim].iter_mut().zip(x) {
            *s += w * c;
        }
    }
    if let Some(j) = mass.iter().position(|&w| w == 0.0) {
        return Err(Error::DegenerateCluster(j));
    }
    for (j, s) in sums.chunks_exact_mut(dim).enumerate() {
        s.iter_mut().for_each(|v| *v /= mass[j]);
    }
    Ok(sums)
}

/// Centroid update with recovery: an empty cluster is re-seeded at the sample with
/// the largest residual cost `μ_i ‖x_i − y_{π(i)}‖²` not already used.
fn update_with_recovery(m: &EmpiricalMeasure, y: &CentroidSet, plan: &TransportPlan) -> Result<Vec<f64>> {
    let k = y.len();
    let dim = m.dim();
    let counts = plan.counts();
    let mut plan = plan.clone();
    let mut residuals: Vec<(f64, usize)> = m
        .points()
        .zip(m.weights())
        .zip(&plan.assignment)
        .enumerate()
        .map(|(i, ((x, w), &j))| (w * dist_sq(x, y.position(j)), i))
        .collect();
    residuals.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut donors = residuals.into_iter().map(|(_, i)| i);
    let mut counts_now = counts.clone();
    let mut reseeded = Vec::new();
    for j in (0..k).filter(|&j| counts[j] == 0) {
        let donor = donors
            .by_ref()
            .find(|&i| counts_now[plan.assignment[i]] > 1)
            .ok_or(Error::DegenerateCluster(j))?;
        counts_now[plan.assignment[donor]] -= 1;
        counts_now[j] += 1;
        plan.assignment[donor] = j;
        reseeded.push((j, donor));
    }
    let mut positions = update_centroids(m, &plan, k)?;
    for (j, i) in reseeded {
        positions[j * dim..(j + 1) * dim].copy_from_slice(m.point(i));
    }
    Ok(positions)
}

fn max_displacement(a: &[f64], b: &[f64], dim: usize) -> f64 {
    a.chunks_exact(dim)
        .zip(b.chunks_exact(dim))
        .map(|(p, q)| dist_sq(p, q).sqrt())
        .fold(0.0, f64::max)
}

/// Iterative measure-preserving mapping: alternate transport and centroid updates
/// with the capacities of `y0` held fixed.
pub fn impm(m: &EmpiricalMeasure, y0: &CentroidSet, config: &ClusterConfig) -> Result<ClusteringResult> {
    if m.dim() != y0.dim() {
        return Err(Error::DimensionMismatch { expected: y0.dim(), found: m.dim() });
    }
    if !(config.outer_tol >= 0.0) || config.outer_max_iter == 0 {
        return Err(Error::InvalidParameter("outer tolerance/iteration limit invalid".into()));
    }
    let m = &m.normalize()?;
    let dim = m.dim();
    let mut y = y0.clone();
    let mut h: Option<Vec<f64>> = None;
    let mut prev: Option<TransportPlan> = None;
    let mut trace = Vec::new();

    for iteration in 0..config.outer_max_iter {
        let sol = solve_empirical(m, &y, config.mode, &config.solver, h.as_deref())
            .map_err(|e| Error::Inner { iteration, source: Box::new(e) })?;
        let plan = sol.plan.expect("empirical solve yields a plan");
        trace.push(clustering_objective(m, &y, &plan)?);

        if prev.as_ref() == Some(&plan) {
            return finish(m, y, plan, sol.h, trace, iteration + 1, Termination::PlanFixedPoint);
        }

        let next = update_with_recovery(m, &y, &plan)?;
        let shift = max_displacement(y.positions(), &next, dim);
        // keep the power radii while the sites move
        let mut h_next = sol.h;
        for (j, hj) in h_next.iter_mut().enumerate() {
            let (old, new) = (y.position(j), &next[j * dim..(j + 1) * dim]);
            *hj -= 0.5 * (dot(new, new) - dot(old, old));
        }
        let y_next = y.with_positions(next)?;
        if shift < config.outer_tol {
            trace.push(clustering_objective(m, &y_next, &plan)?);
            return finish(m, y_next, plan, h_next, trace, iteration + 1, Termination::CentroidsConverged);
        }
        y = y_next;
        h = Some(h_next);
        prev = Some(plan);
    }
    let sol = solve_empirical(m, &y, config.mode, &config.solver, h.as_deref()).map_err(|e| {
        Error::Inner { iteration: config.outer_max_iter, source: Box::new(e) }
    })?;
    let plan = sol.plan.expect("empirical solve yields a plan");
    trace.push(clustering_objective(m, &y, &plan)?);
    finish(m, y, plan, sol.h, trace, config.outer_max_iter, Termination::MaxIterations)
}

fn finish(
    m: &EmpiricalMeasure,
    centroids: CentroidSet,
    plan: TransportPlan,
    h: Vec<f64>,
    objective_trace: Vec<f64>,
    iterations: usize,
    termination: Termination,
) -> Result<ClusteringResult> {
    let w = cell_masses(&plan, m);
    let last = objective_trace.last().copied().unwrap_or(0.0);
    Ok(ClusteringResult {
        centroids,
        plan,
        h,
        w,
        w2_estimate: last.max(0.0).sqrt(),
        objective_trace,
        iterations,
        termination,
    })
}

/// How the clustering starts.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// k-means++ seeding over the data, uniform capacities `1/k`.
    Seeded { k: usize, seed: u64 },
    Centroids(CentroidSet),
}

/// Variational Wasserstein clustering. The data are assumed to already live in a
/// common convex Euclidean domain.
pub fn vwc(m: &EmpiricalMeasure, init: Init, config: &ClusterConfig) -> Result<ClusteringResult> {
    let m = m.normalize()?;
    let y0 = match init {
        Init::Centroids(y) => y,
        Init::Seeded { k, seed } => {
            let positions = kmeans_pp_seeding(&m, k, &mut ChaCha8Rng::seed_from_u64(seed))?;
            CentroidSet::uniform(m.dim(), positions)?
        }
    };
    impm(&m, &y0, config)
}

/// D²-weighted seeding: the first center is drawn by mass, each further one with
/// probability proportional to `μ_i · min_c ‖x_i − c‖²`.
pub fn kmeans_pp_seeding<R: Rng>(m: &EmpiricalMeasure, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    if k == 0 || k > m.len() {
        return Err(Error::InvalidParameter(format!("k = {k} must lie in [1, {}]", m.len())));
    }
    let draw = |weights: &[f64], rng: &mut R| -> Option<usize> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if acc > target && *w > 0.0 {
                return Some(i);
            }
        }
        weights.iter().rposition(|&w| w > 0.0)
    };
    let dim = m.dim();
    let first = draw(m.weights(), rng).expect("positive weights");
    let mut centers = m.point(first).to_vec();
    let mut nearest: Vec<f64> = m.points().map(|x| dist_sq(x, m.point(first))).collect();
    for _ in 1..k {
        let scores: Vec<f64> = nearest.iter().zip(m.weights()).map(|(d, w)| d * w).collect();
        let pick = draw(&scores, rng).ok_or_else(|| {
            Error::InvalidParameter(format!("fewer than k = {k} distinct points"))
        })?;
        let c = m.point(pick).to_vec();
        for (d, x) in nearest.iter_mut().zip(m.points()) {
            *d = d.min(dist_sq(x, &c));
        }
        centers.extend(c);
    }
    debug_assert_eq!(centers.len(), k * dim);
    Ok(centers)
}

/// Unconstrained baseline: k-means++ seeding followed by weighted Lloyd iterations.
/// The returned capacities are the masses the clusters ended up with.
pub fn kmeans_pp(m: &EmpiricalMeasure, k: usize, seed: u64, max_iter: usize) -> Result<ClusteringResult> {
    let m = &m.normalize()?;
    let dim = m.dim();
    let mut positions = kmeans_pp_seeding(m, k, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let mut prev: Option<TransportPlan> = None;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    let mut plan = TransportPlan { assignment: Vec::new(), k };
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let y = CentroidSet::uniform(dim, positions.clone())?;
        plan = assign(m, &y, &y.voronoi_weights())?;
        trace.push(clustering_objective(m, &y, &plan)?);
        if prev.as_ref() == Some(&plan) {
            termination = Termination::PlanFixedPoint;
            break;
        }
        positions = update_with_recovery(m, &y, &plan)?;
        prev = Some(plan.clone());
    }
    // the final plan is only Voronoi-consistent with `positions` at a fixed point
    let y = CentroidSet::uniform(dim, positions.clone())?;
    if termination != Termination::PlanFixedPoint {
        plan = assign(m, &y, &y.voronoi_weights())?;
        trace.push(clustering_objective(m, &y, &plan)?);
    }
    let w = cell_masses(&plan, m);
    let capacities = if w.iter().all(|&v| v > 0.0) {
        let total: f64 = w.iter().sum();
        w.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / k as f64; k]
    };
    let centroids = CentroidSet::new(dim, positions, capacities)?;
    let h = centroids.voronoi_weights();
    let last = *trace.last().expect("at least one iteration");
    Ok(ClusteringResult {
        centroids,
        plan,
        h,
        w,
        objective_trace: trace,
        w2_estimate: last.max(0.0).sqrt(),
        iterations,
        termination,
    })
}
