//! Exact finishing step for empirical sources with equal atom masses.
//!
//! Near the optimum, gradient steps on the piecewise-linear energy can only hop
//! between plans that are off by a few atoms. When every atom has the same mass the
//! balanced plan is a capacitated assignment, so we finish combinatorially:
//! successive shortest paths on the `k`-node exchange graph move single atoms
//! between cells while keeping every atom in a best cell, then the weights are
//! moved to the centre of the set of duals that induce the final plan.

use rayon::prelude::*;

use crate::measure::{dot, CentroidSet, EmpiricalMeasure};

/// Integer cell sizes closest to `ν · n` (largest remainder), or `None` when the
/// atoms do not all carry the same mass.
pub(crate) fn target_counts(m: &EmpiricalMeasure, nu: &[f64]) -> Option<Vec<usize>> {
    let w = m.weights();
    let (lo, hi) = w.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    if w.is_empty() || hi - lo > 1e-12 * hi {
        return None;
    }
    let n = m.len();
    let ideal: Vec<f64> = nu.iter().map(|v| v * n as f64).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|v| v.floor().max(0.0) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..nu.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (ideal[a] - ideal[a].floor(), ideal[b] - ideal[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &j in order.iter().take(n.checked_sub(assigned)?) {
        counts[j] += 1;
    }
    (counts.iter().sum::<usize>() == n).then_some(counts)
}

struct Exchange {
    k: usize,
    /// Row-major `n × k` scores `⟨x_i, y_j⟩`.
    scores: Vec<f64>,
    members: Vec<Vec<usize>>,
    /// `gap[i·k + j] = min over atoms x in cell i of s(x,i) − s(x,j)`.
    gap: Vec<f64>,
    arg: Vec<usize>,
}

impl Exchange {
    fn score(&self, x: usize, j: usize) -> f64 {
        self.scores[x * self.k + j]
    }

    fn refresh_row(&mut self, i: usize) {
        let k = self.k;
        for j in 0..k {
            self.gap[i * k + j] = f64::INFINITY;
            self.arg[i * k + j] = usize::MAX;
        }
        for idx in 0..self.members[i].len() {
            let x = self.members[i][idx];
            self.absorb(i, x);
        }
    }

    fn absorb(&mut self, i: usize, x: usize) {
        let k = self.k;
        let own = self.score(x, i);
        for j in (0..k).filter(|&j| j != i) {
            let g = own - self.score(x, j);
            let cell = i * k + j;
            if g < self.gap[cell] || (g == self.gap[cell] && x < self.arg[cell]) {
                self.gap[cell] = g;
                self.arg[cell] = x;
            }
        }
    }

    fn move_atom(&mut self, x: usize, from: usize, to: usize) {
        self.members[from].retain(|&v| v != x);
        self.members[to].push(x);
        self.refresh_row(from);
        self.absorb(to, x);
    }
}

/// Dense Dijkstra from every cell in `sources`; stops at the first popped cell in
/// `sinks`. Returns distances and predecessors.
fn shortest_paths(
    ex: &Exchange,
    h: &[f64],
    sources: &[bool],
    sinks: &[bool],
) -> Option<(Vec<f64>, Vec<usize>, usize)> {
    let k = ex.k;
    let mut dist = vec![f64::INFINITY; k];
    let mut pred = vec![usize::MAX; k];
    let mut done = vec![false; k];
    for j in (0..k).filter(|&j| sources[j]) {
        dist[j] = 0.0;
    }
    loop {
        let u = (0..k)
            .filter(|&j| !done[j] && dist[j].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))?;
        done[u] = true;
        if sinks[u] {
            return Some((dist, pred, u));
        }
        for v in (0..k).filter(|&v| !done[v]) {
            let gap = ex.gap[u * k + v];
            if !gap.is_finite() {
                continue;
            }
            let reduced = (gap + h[u] - h[v]).max(0.0);
            if dist[u] + reduced < dist[v] {
                dist[v] = dist[u] + reduced;
                pred[v] = u;
            }
        }
    }
}

/// Largest `t` such that `h_i − h_j ≥ −gap_ij + t` is feasible (minimum cycle mean
/// of `gap`, Karp), then a solution for `t/2`.
fn centred_weights(ex: &Exchange) -> Option<Vec<f64>> {
    let k = ex.k;
    let edges: Vec<(usize, usize, f64)> = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && ex.gap[i * k + j].is_finite())
        .map(|(i, j)| (i, j, ex.gap[i * k + j]))
        .collect();
    let mut walks = vec![vec![0.0; k]];
    for m in 1..=k {
        let prev = &walks[m - 1];
        let mut next = vec![f64::INFINITY; k];
        for &(i, j, g) in &edges {
            next[j] = next[j].min(prev[i] + g);
        }
        walks.push(next);
    }
    let t = (0..k)
        .filter(|&v| walks[k][v].is_finite())
        .map(|v| {
            (0..k)
                .filter(|&m| walks[m][v].is_finite())
                .map(|m| (walks[k][v] - walks[m][v]) / (k - m) as f64)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min);
    // no cycle at all: any margin works
    let t = if t.is_finite() { t } else { 1.0 };
    let scale = ex.scores.iter().fold(1.0f64, |a, s| a.max(s.abs()));
    if !(t > 1e-12 * scale) {
        return None;
    }
    let margin = 0.5 * t;
    // With `h_last = 0`, constraints `h_j − h_i ≤ gap_ij − margin` have a largest
    // solution (distances from `last`) and a smallest (minus distances to `last`).
    // Their average is feasible and sits away from both faces.
    let last = k - 1;
    let relax = |forward: bool| {
        let mut d = vec![f64::INFINITY; k];
        d[last] = 0.0;
        for _ in 0..k {
            let mut changed = false;
            for &(i, j, g) in &edges {
                let (from, to) = if forward { (i, j) } else { (j, i) };
                let cand = d[from] + g - margin;
                if cand < d[to] {
                    d[to] = cand;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        d
    };
    let (upper, lower) = (relax(true), relax(false));
    if upper.iter().chain(&lower).any(|v| !v.is_finite()) {
        return None;
    }
    Some(upper.iter().zip(&lower).map(|(u, l)| 0.5 * (u - l)).collect())
}

/// Weights whose power diagram puts exactly `targets[j]` atoms in cell `j`, starting
/// from the plan induced by `h`. `None` if the plan cannot be separated strictly.
pub(crate) fn rebalance(m: &EmpiricalMeasure, y: &CentroidSet, h: &[f64], targets: &[usize]) -> Option<Vec<f64>> {
    let k = y.len();
    let n = m.len();
    if k == 1 {
        return Some(vec![0.0]);
    }
    let mut scores = vec![0.0; n * k];
    scores.par_chunks_mut(k).enumerate().for_each(|(i, row)| {
        let x = m.point(i);
        for (j, s) in row.iter_mut().enumerate() {
            *s = dot(x, y.position(j));
        }
    });
    let mut members = vec![Vec::new(); k];
    for i in 0..n {
        let row = &scores[i * k..(i + 1) * k];
        let mut best = 0;
        for j in 1..k {
            if row[j] + h[j] > row[best] + h[best] {
                best = j;
            }
        }
        members[best].push(i);
    }
    let mut ex = Exchange { k, scores, members, gap: vec![f64::INFINITY; k * k], arg: vec![usize::MAX; k * k] };
    for i in 0..k {
        ex.refresh_row(i);
    }
    let mut h = h.to_vec();
    loop {
        let excess: Vec<bool> = (0..k).map(|j| ex.members[j].len() > targets[j]).collect();
        if !excess.contains(&true) {
            break;
        }
        let deficit: Vec<bool> = (0..k).map(|j| ex.members[j].len() < targets[j]).collect();
        let (dist, pred, sink) = shortest_paths(&ex, &h, &excess, &deficit)?;
        for j in 0..k {
            h[j] += dist[j].min(dist[sink]);
        }
        let mut path = Vec::new();
        let mut v = sink;
        while pred[v] != usize::MAX {
            path.push((pred[v], v, ex.arg[pred[v] * k + v]));
            v = pred[v];
        }
        for (from, to, x) in path {
            ex.move_atom(x, from, to);
        }
    }
    centred_weights(&ex)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_remainder_counts() {
        let m = EmpiricalMeasure::uniform(1, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = target_counts(&m, &[0.5, 0.5]).unwrap();
        assert_eq!(c.iter().sum::<usize>(), 7);
        assert!(c == vec![4, 3] || c == vec![3, 4]);
        let w = EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![0.3, 0.7]).unwrap();
        assert!(target_counts(&w, &[0.5, 0.5]).is_none());
    }

    #[test]
    fn balances_a_lopsided_start() {
        // all four atoms start in cell 0
        let m = EmpiricalMeasure::uniform(1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = CentroidSet::uniform(1, vec![0.0, 3.0]).unwrap();
        let h = rebalance(&m, &y, &[100.0, 0.0], &[2, 2]).unwrap();
        let cells: Vec<usize> = m.points().map(|x| crate::power_diagram::best_site(x, &y, &h).0).collect();
        assert_eq!(cells, vec![0, 0, 1, 1]);
        // the boundary sits midway between atoms 1 and 2
        assert!((1.5 * 3.0 + h[1] - h[0]).abs() < 1e-12, "{h:?}");
    }
}
