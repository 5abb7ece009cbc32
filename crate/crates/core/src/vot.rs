//! Variational optimal transport: minimize the convex energy
//!
//! ```text
//! E(h) = ∫ max_j(⟨x, y_j⟩ + h_j) dμ(x) − Σ_j ν_j h_j
//! ```
//!
//! whose gradient is `w(h) − ν` (cell masses minus capacities). The minimizer `h*`
//! defines the power diagram that pushes `μ` forward onto `ν`.
//!
//! Two sources are supported. A uniform density on a convex polygon (continuous
//! mode) has a smooth energy and an exact Hessian from the facet lengths, so damped
//! Newton converges quadratically. An empirical measure has a piecewise-linear
//! energy; cell masses move in jumps of single atoms, so the stopping rule is
//! quantized by the largest atom mass.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::balance;
use crate::error::{Error, Result};
use crate::measure::{compensated_sum, dot, CentroidSet, Density, Domain, EmpiricalMeasure};
use crate::power_diagram::{
    assign_with_scores, build_power_diagram_2d, cell_masses, cell_masses_continuous, check_weights,
    PowerDiagram, TransportPlan,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Newton,
    #[serde(alias = "gd")]
    GradientDescent,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Newton => "newton",
            Mode::GradientDescent => "gd",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Tolerance on `max_j |w_j − ν_j|`.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Initial Newton step length.
    pub lambda: f64,
    pub backtrack_factor: f64,
    pub min_step: f64,
    /// Initial gradient-descent step `λ₀`; `None` picks `0.2 · diam²` of the data.
    pub gd_step: Option<f64>,
    /// Iteration scale of the step decay `λ_t = λ₀ / (1 + t / gd_decay)`.
    pub gd_decay: f64,
    /// Empirical mode: once within the atom quantization bound, give up on an exact
    /// match after this many iterations without improvement.
    pub stall_iter: usize,
    /// Empirical Newton: density window half-width as a fraction of the domain diameter.
    pub bandwidth: f64,
    /// Equal-mass empirical atoms: once the iterates are close, or stop improving for
    /// a few iterations, balance the plan exactly by moving single atoms along
    /// shortest exchange paths.
    pub polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            max_iter: 1000,
            lambda: 1.0,
            backtrack_factor: 0.5,
            min_step: 1e-12,
            gd_step: None,
            gd_decay: 50.0,
            stall_iter: 100,
            bandwidth: 0.05,
            polish: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon", self.epsilon),
            ("lambda", self.lambda),
            ("backtrack_factor", self.backtrack_factor),
            ("min_step", self.min_step),
            ("gd_decay", self.gd_decay),
            ("bandwidth", self.bandwidth),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.epsilon >= 1.0 {
            return Err(Error::InvalidParameter("epsilon must be below 1".into()));
        }
        if self.lambda > 1.0 || self.backtrack_factor >= 1.0 {
            return Err(Error::InvalidParameter(
                "lambda must lie in (0, 1] and backtrack_factor in (0, 1)".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        if let Some(s) = self.gd_step {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidParameter(format!("gd_step must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Measure being transported onto the centroids.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    Empirical(&'a EmpiricalMeasure),
    /// Normalized uniform density on a 2D polygonal domain.
    Uniform(&'a Domain),
}

impl Source<'_> {
    fn check(&self, y: &CentroidSet) -> Result<()> {
        match self {
            Source::Empirical(m) => {
                if m.dim() != y.dim() {
                    return Err(Error::DimensionMismatch { expected: y.dim(), found: m.dim() });
                }
                if !m.is_normalized() {
                    return Err(Error::InvalidMeasure("source measure must be normalized".into()));
                }
            }
            Source::Uniform(d) => {
                if d.density() != Density::Uniform || d.polygon().is_none() {
                    return Err(Error::UnsupportedMode(
                        "continuous mode needs a 2D domain with uniform density".into(),
                    ));
                }
                if y.dim() != 2 {
                    return Err(Error::DimensionMismatch { expected: 2, found: y.dim() });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub h: Vec<f64>,
    pub w: Vec<f64>,
    pub grad: Vec<f64>,
    pub energy: f64,
    pub iteration: usize,
    pub mode: Mode,
}

impl SolverState {
    /// `‖∇E‖_∞ = max_j |w_j − ν_j|`.
    pub fn max_deviation(&self) -> f64 {
        inf_norm(&self.grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub energy: f64,
    pub grad_inf_norm: f64,
    /// Accepted step length; 0 for the initial point and for the exact balancing step.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotSolution {
    pub h: Vec<f64>,
    pub w: Vec<f64>,
    pub energy: f64,
    pub iterations: usize,
    pub mode: Mode,
    /// Sample assignment (empirical sources).
    pub plan: Option<TransportPlan>,
    /// Cell geometry (2D sources).
    pub diagram: Option<PowerDiagram>,
    /// True when `max_j |w_j − ν_j| < ε`; false when the run stopped at the atom
    /// quantization bound instead.
    pub exact: bool,
    pub trace: Vec<TraceRecord>,
}

impl VotSolution {
    pub fn max_deviation(&self, y: &CentroidSet) -> f64 {
        self.w.iter().zip(y.capacities()).map(|(w, n)| (w - n).abs()).fold(0.0, f64::max)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Shift so that the last entry is zero.
fn pin(h: &mut [f64]) {
    if let Some(&last) = h.last() {
        h.iter_mut().for_each(|v| *v -= last);
    }
}

/// Everything known about one point `h`.
#[derive(Debug, Clone)]
struct Eval {
    h: Vec<f64>,
    w: Vec<f64>,
    grad: Vec<f64>,
    energy: f64,
    plan: Option<Vec<usize>>,
    diagram: Option<PowerDiagram>,
}

impl Eval {
    fn deviation(&self) -> f64 {
        inf_norm(&self.grad)
    }

    fn state(&self, iteration: usize, mode: Mode) -> SolverState {
        SolverState {
            h: self.h.clone(),
            w: self.w.clone(),
            grad: self.grad.clone(),
            energy: self.energy,
            iteration,
            mode,
        }
    }
}

fn evaluate(source: Source<'_>, y: &CentroidSet, h: Vec<f64>) -> Result<Eval> {
    let nu = y.capacities();
    let linear = compensated_sum(nu.iter().zip(&h).map(|(n, v)| n * v));
    match source {
        Source::Empirical(m) => {
            let (assignment, scores) = assign_with_scores(m, y, &h);
            let plan = TransportPlan { assignment, k: y.len() };
            let w = cell_masses(&plan, m);
            let integral = compensated_sum(scores.iter().zip(m.weights()).map(|(s, mu)| s * mu));
            let grad = w.iter().zip(nu).map(|(a, b)| a - b).collect();
            Ok(Eval {
                h,
                w,
                grad,
                energy: integral - linear,
                plan: Some(plan.assignment),
                diagram: None,
            })
        }
        Source::Uniform(domain) => {
            let diagram = build_power_diagram_2d(y, &h, domain)?;
            let w = cell_masses_continuous(&diagram)?;
            let integral = compensated_sum(diagram.cells.iter().zip(&w).map(|(c, wj)| {
                if *wj == 0.0 {
                    0.0
                } else {
                    wj * (dot(&c.centroid, y.position(c.index)) + h[c.index])
                }
            }));
            let grad = w.iter().zip(nu).map(|(a, b)| a - b).collect();
            Ok(Eval { h, w, grad, energy: integral - linear, plan: None, diagram: Some(diagram) })
        }
    }
}

/// `E(h)`; the integral is exact for uniform sources and a finite sum for empirical ones.
pub fn energy(h: &[f64], source: Source<'_>, y: &CentroidSet) -> Result<f64> {
    check_weights(y, h)?;
    source.check(y)?;
    Ok(evaluate(source, y, h.to_vec())?.energy)
}

/// `∇E(h) = w(h) − ν`.
pub fn gradient(h: &[f64], source: Source<'_>, y: &CentroidSet) -> Result<Vec<f64>> {
    check_weights(y, h)?;
    source.check(y)?;
    Ok(evaluate(source, y, h.to_vec())?.grad)
}

fn assemble(y: &CentroidSet, diagram: &PowerDiagram, facet_mass: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let k = y.len();
    let mut hess = DMatrix::zeros(k, k);
    for cell in &diagram.cells {
        let j = cell.index;
        for f in cell.facets.iter().filter(|f| f.neighbor > j) {
            let i = f.neighbor;
            let dist = crate::measure::dist_sq(y.position(i), y.position(j)).sqrt();
            let v = facet_mass(j, i) / dist;
            hess[(i, j)] -= v;
            hess[(j, i)] -= v;
            hess[(i, i)] += v;
            hess[(j, j)] += v;
        }
    }
    hess
}

fn facet_length(diagram: &PowerDiagram, j: usize, i: usize) -> f64 {
    let from_j = diagram.cells[j].facets.iter().find(|f| f.neighbor == i).map(|f| f.length);
    let from_i = diagram.cells[i].facets.iter().find(|f| f.neighbor == j).map(|f| f.length);
    match (from_j, from_i) {
        (Some(a), Some(b)) => 0.5 * (a + b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => 0.0,
    }
}

/// Hessian of `E` under the uniform density of the diagram's domain:
/// `H_ij = −|f_ij| / (vol(Ω) ‖y_i − y_j‖)` for adjacent cells, rows summing to zero.
pub fn hessian(diagram: &PowerDiagram, y: &CentroidSet) -> Result<DMatrix<f64>> {
    if diagram.len() != y.len() {
        return Err(Error::LengthMismatch { expected: y.len(), found: diagram.len() });
    }
    if diagram.domain.density() != Density::Uniform {
        return Err(Error::UnsupportedMode(
            "exact Hessian needs a uniform density; use hessian_empirical".into(),
        ));
    }
    let vol = diagram
        .domain
        .volume()
        .ok_or_else(|| Error::UnsupportedMode("Hessian needs cell geometry".into()))?;
    Ok(assemble(y, diagram, |j, i| facet_length(diagram, j, i) / vol))
}

fn segment_dist_sq(p: &[f64], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    qx * qx + qy * qy
}

/// Hessian estimate for an empirical source on a 2D diagram: the facet integral of
/// the density is replaced by the sample mass within `bandwidth` of the facet
/// divided by `2 · bandwidth`.
pub fn hessian_empirical(
    diagram: &PowerDiagram,
    y: &CentroidSet,
    m: &EmpiricalMeasure,
    bandwidth: f64,
) -> Result<DMatrix<f64>> {
    if diagram.len() != y.len() {
        return Err(Error::LengthMismatch { expected: y.len(), found: diagram.len() });
    }
    if m.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: m.dim() });
    }
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidParameter("bandwidth must be positive".into()));
    }
    let r2 = bandwidth * bandwidth;
    Ok(assemble(y, diagram, |j, i| {
        let Some(f) = diagram.cells[j].facets.iter().find(|f| f.neighbor == i) else {
            return 0.0;
        };
        let near = m
            .points()
            .zip(m.weights())
            .filter(|(p, _)| segment_dist_sq(p, f.endpoints[0], f.endpoints[1]) <= r2)
            .map(|(_, w)| *w);
        compensated_sum(near) / (2.0 * bandwidth)
    }))
}

/// Solves `H δ = −g` on the subspace `δ_k = 0`. Cholesky with escalating jitter.
fn newton_direction(hess: &DMatrix<f64>, grad: &[f64]) -> Option<Vec<f64>> {
    let k = grad.len();
    if k < 2 {
        return Some(vec![0.0; k]);
    }
    let n = k - 1;
    let sub = hess.view((0, 0), (n, n)).into_owned();
    let rhs = DVector::from_iterator(n, grad[..n].iter().map(|g| -g));
    let scale = (0..n).map(|i| sub[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut jitter = 0.0;
    for _ in 0..12 {
        let mut a = sub.clone();
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if let Some(chol) = a.cholesky() {
            let sol = chol.solve(&rhs);
            if sol.iter().all(|v| v.is_finite()) {
                let mut d: Vec<f64> = sol.iter().copied().collect();
                d.push(0.0);
                return Some(d);
            }
        }
        jitter = if jitter == 0.0 { 1e-10 * scale } else { jitter * 100.0 };
    }
    None
}

/// Empirical Newton: cells whose rows carry no sample mass get a diagonal floor so
/// that the step stays finite.
fn floor_diagonal(hess: &mut DMatrix<f64>) {
    let k = hess.nrows();
    let max_diag = (0..k).map(|i| hess[(i, i)]).fold(0.0, f64::max);
    let floor = if max_diag > 0.0 { 1e-3 * max_diag } else { 1.0 };
    for i in 0..k {
        if hess[(i, i)] < floor {
            hess[(i, i)] = floor;
        }
    }
}

struct Driver<'a> {
    source: Source<'a>,
    y: &'a CentroidSet,
    config: &'a SolverConfig,
    mode: Mode,
    /// Domain used for empirical Newton geometry.
    geometry: Option<Domain>,
    gd_step: f64,
    trace: Vec<TraceRecord>,
    /// Integer cell sizes for the balancing step, when it applies.
    targets: Option<Vec<usize>>,
}

/// Non-improving iterations before the balancing step is tried.
const POLISH_PATIENCE: usize = 10;

impl Driver<'_> {
    fn empirical(&self) -> Option<&EmpiricalMeasure> {
        match self.source {
            Source::Empirical(m) => Some(m),
            Source::Uniform(_) => None,
        }
    }

    /// Line-search acceptance: energy must not increase, and no cell that holds
    /// mass may lose all of it. Continuous Newton additionally keeps every cell above
    /// half of the smaller of its current smallest mass and the smallest capacity.
    fn acceptable(&self, old: &Eval, new: &Eval) -> bool {
        let tol = 4.0 * f64::EPSILON * (1.0 + old.energy.abs());
        if !(new.energy <= old.energy + tol) {
            return false;
        }
        if old.w.iter().zip(&new.w).any(|(a, b)| *a > 0.0 && *b <= 0.0) {
            return false;
        }
        if let Source::Uniform(_) = self.source {
            let min_old = old.w.iter().copied().fold(f64::INFINITY, f64::min);
            let min_nu = self.y.capacities().iter().copied().fold(f64::INFINITY, f64::min);
            let floor = 0.5 * min_old.min(min_nu);
            if new.w.iter().any(|&w| w < floor) {
                return false;
            }
        }
        true
    }

    fn direction(&self, cur: &Eval) -> Result<Option<Vec<f64>>> {
        match self.mode {
            Mode::GradientDescent => Ok(Some(cur.grad.iter().map(|g| -g).collect())),
            Mode::Newton => {
                let hess = match self.source {
                    Source::Uniform(_) => {
                        let diagram = cur.diagram.as_ref().expect("continuous eval has geometry");
                        hessian(diagram, self.y)?
                    }
                    Source::Empirical(m) => {
                        let domain = self.geometry.as_ref().expect("empirical newton has geometry");
                        let diagram = build_power_diagram_2d(self.y, &cur.h, domain)?;
                        let bw = self.config.bandwidth * domain.diameter().unwrap_or(1.0);
                        let mut hess = hessian_empirical(&diagram, self.y, m, bw)?;
                        floor_diagonal(&mut hess);
                        hess
                    }
                };
                Ok(newton_direction(&hess, &cur.grad))
            }
        }
    }

    fn initial_step(&self, iter: usize) -> f64 {
        match self.mode {
            Mode::Newton => self.config.lambda,
            Mode::GradientDescent => self.gd_step / (1.0 + iter as f64 / self.config.gd_decay),
        }
    }

    fn line_search(&self, cur: &Eval, dir: &[f64], mut step: f64) -> Result<Option<(Eval, f64)>> {
        while step >= self.config.min_step {
            let mut h: Vec<f64> = cur.h.iter().zip(dir).map(|(a, d)| a + step * d).collect();
            pin(&mut h);
            let trial = evaluate(self.source, self.y, h)?;
            if self.acceptable(cur, &trial) {
                return Ok(Some((trial, step)));
            }
            step *= self.config.backtrack_factor;
        }
        Ok(None)
    }

    /// One attempt at the exact balancing step; consumes `targets`.
    fn polish(&mut self, cur: &Eval) -> Result<Option<Eval>> {
        let (Some(targets), Source::Empirical(m)) = (self.targets.take(), self.source) else {
            return Ok(None);
        };
        let Some(h) = balance::rebalance(m, self.y, &cur.h, &targets) else {
            return Ok(None);
        };
        let next = evaluate(self.source, self.y, h)?;
        let plan = next.plan.as_ref().expect("empirical eval has a plan");
        let mut counts = vec![0usize; targets.len()];
        plan.iter().for_each(|&j| counts[j] += 1);
        let tol = 4.0 * f64::EPSILON * (1.0 + cur.energy.abs());
        Ok((counts == targets && next.energy <= cur.energy + tol).then_some(next))
    }

    fn run(mut self, h0: Vec<f64>) -> Result<VotSolution> {
        let config = self.config;
        let quantum = self.empirical().map(|m| (1.01 * m.max_weight()).max(config.epsilon));
        let mut cur = evaluate(self.source, self.y, h0)?;
        self.trace.push(TraceRecord {
            iter: 0,
            energy: cur.energy,
            grad_inf_norm: cur.deviation(),
            step: 0.0,
        });
        let mut best = (cur.clone(), 0usize);
        let mut since_best = 0usize;
        let mut iter = 0usize;
        loop {
            let dev = cur.deviation();
            if dev < config.epsilon {
                return Ok(self.finish(cur, iter, true));
            }
            if dev < best.0.deviation() {
                best = (cur.clone(), iter);
                since_best = 0;
            } else if iter > 0 {
                since_best += 1;
            }
            let within_quantum = quantum.is_some_and(|q| best.0.deviation() <= q);
            if self.targets.is_some()
                && (since_best >= POLISH_PATIENCE || iter >= config.max_iter || quantum.is_some_and(|q| dev <= q))
            {
                if let Some(done) = self.polish(&cur)? {
                    return Ok(self.finish_polished(done, iter + 1));
                }
            }
            if within_quantum && since_best >= config.stall_iter {
                let (b, it) = best;
                return Ok(self.finish(b, it, false));
            }
            if iter >= config.max_iter {
                if within_quantum {
                    let (b, it) = best;
                    return Ok(self.finish(b, it, false));
                }
                return Err(Error::NonConvergence { state: Box::new(cur.state(iter, self.mode)) });
            }

            let Some(dir) = self.direction(&cur)? else {
                return Err(Error::DegenerateConfiguration {
                    reason: "Newton system could not be factored".into(),
                    state: Box::new(cur.state(iter, self.mode)),
                });
            };
            let mut accepted = self.line_search(&cur, &dir, self.initial_step(iter))?;
            if accepted.is_none() && self.mode == Mode::Newton {
                // the estimated Hessian can point uphill across a kink; retry downhill
                let steepest: Vec<f64> = cur.grad.iter().map(|g| -g).collect();
                accepted = self.line_search(&cur, &steepest, self.gd_step)?;
            }
            let Some((next, step)) = accepted else {
                if let Some(done) = self.polish(&cur)? {
                    return Ok(self.finish_polished(done, iter + 1));
                }
                if within_quantum {
                    let (b, it) = best;
                    return Ok(self.finish(b, it, false));
                }
                return Err(Error::DegenerateConfiguration {
                    reason: "line search found no admissible step".into(),
                    state: Box::new(cur.state(iter, self.mode)),
                });
            };
            iter += 1;
            cur = next;
            self.trace.push(TraceRecord {
                iter,
                energy: cur.energy,
                grad_inf_norm: cur.deviation(),
                step,
            });
        }
    }

    fn finish_polished(mut self, eval: Eval, iter: usize) -> VotSolution {
        self.trace.push(TraceRecord { iter, energy: eval.energy, grad_inf_norm: eval.deviation(), step: 0.0 });
        let exact = eval.deviation() < self.config.epsilon;
        self.finish(eval, iter, exact)
    }

    fn finish(self, eval: Eval, iterations: usize, exact: bool) -> VotSolution {
        let k = self.y.len();
        VotSolution {
            h: eval.h,
            w: eval.w,
            energy: eval.energy,
            iterations,
            mode: self.mode,
            plan: eval.plan.map(|assignment| TransportPlan { assignment, k }),
            diagram: eval.diagram,
            exact,
            trace: self.trace,
        }
    }
}

fn initial_weights(y: &CentroidSet, h0: Option<&[f64]>) -> Result<Vec<f64>> {
    let mut h = match h0 {
        Some(h) => {
            check_weights(y, h)?;
            h.to_vec()
        }
        None => y.voronoi_weights(),
    };
    pin(&mut h);
    Ok(h)
}

fn sample_hull(m: &EmpiricalMeasure, y: &CentroidSet) -> (Vec<f64>, Vec<f64>) {
    let (mut lo, mut hi) = m.bounding_box();
    for j in 0..y.len() {
        for (d, c) in y.position(j).iter().enumerate() {
            lo[d] = lo[d].min(*c);
            hi[d] = hi[d].max(*c);
        }
    }
    (lo, hi)
}

fn polish_targets(config: &SolverConfig, source: Source<'_>, y: &CentroidSet) -> Option<Vec<usize>> {
    match source {
        Source::Empirical(m) if config.polish => balance::target_counts(m, y.capacities()),
        _ => None,
    }
}

/// `λ₀`: either configured or `0.2 · diam²` of the samples and centroids.
fn default_gd_step(config: &SolverConfig, m: &EmpiricalMeasure, y: &CentroidSet) -> f64 {
    config.gd_step.unwrap_or_else(|| {
        let (lo, hi) = sample_hull(m, y);
        let diam2 = crate::measure::dist_sq(&lo, &hi);
        0.2 * if diam2 > 0.0 { diam2 } else { 1.0 }
    })
}

/// Damped Newton solve. Starts from zero power radii (the Voronoi diagram of `y`)
/// unless `h0` is given. Empirical sources must be 2D.
pub fn solve_vot_from(
    source: Source<'_>,
    y: &CentroidSet,
    config: &SolverConfig,
    h0: Option<&[f64]>,
) -> Result<VotSolution> {
    config.validate()?;
    source.check(y)?;
    let mut gd_step = 0.0;
    let geometry = match source {
        Source::Empirical(m) => {
            gd_step = default_gd_step(config, m, y);
            if m.dim() != 2 {
                return Err(Error::UnsupportedMode(format!(
                    "Newton mode needs 2D cell geometry, data is {}D; use gradient descent",
                    m.dim()
                )));
            }
            let (lo, hi) = sample_hull(m, y);
            Some(Domain::bounding_polygon(&lo, &hi, 0.05)?)
        }
        Source::Uniform(_) => None,
    };
    if let Source::Uniform(domain) = source {
        let d2 = domain.diameter().unwrap_or(1.0).powi(2);
        gd_step = config.gd_step.unwrap_or(0.2 * d2);
    }
    let h = initial_weights(y, h0)?;
    let targets = polish_targets(config, source, y);
    Driver { source, y, config, mode: Mode::Newton, geometry, gd_step, trace: Vec::new(), targets }.run(h)
}

pub fn solve_vot(source: Source<'_>, y: &CentroidSet, config: &SolverConfig) -> Result<VotSolution> {
    solve_vot_from(source, y, config, None)
}

/// Gradient descent `h ← h − λ_t ∇E(h)` with the decaying schedule and backtracking.
/// Works in any dimension.
pub fn solve_vot_gd_from(
    m: &EmpiricalMeasure,
    y: &CentroidSet,
    config: &SolverConfig,
    h0: Option<&[f64]>,
) -> Result<VotSolution> {
    config.validate()?;
    let source = Source::Empirical(m);
    source.check(y)?;
    let gd_step = default_gd_step(config, m, y);
    let h = initial_weights(y, h0)?;
    Driver {
        source,
        y,
        config,
        mode: Mode::GradientDescent,
        geometry: None,
        gd_step,
        trace: Vec::new(),
        targets: polish_targets(config, source, y),
    }
    .run(h)
}

pub fn solve_vot_gd(m: &EmpiricalMeasure, y: &CentroidSet, config: &SolverConfig) -> Result<VotSolution> {
    solve_vot_gd_from(m, y, config, None)
}

/// Mode dispatch for an empirical source.
pub fn solve_empirical(
    m: &EmpiricalMeasure,
    y: &CentroidSet,
    mode: Mode,
    config: &SolverConfig,
    h0: Option<&[f64]>,
) -> Result<VotSolution> {
    match mode {
        Mode::Newton => solve_vot_from(Source::Empirical(m), y, config, h0),
        Mode::GradientDescent => solve_vot_gd_from(m, y, config, h0),
    }
}
