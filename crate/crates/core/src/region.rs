//! Stability-region geometry.
//!
//! A region is a weighted Minkowski sum of axis simplices: one term per
//! estimate vector `ĉ`, with weight `π_ĉ = Π_i P(Ĉ_i = ĉ_i)` and legs
//! `w_i(ĉ_i)`, the expected rate user `i` would get if served alone. The set is
//! `σ · Σ_ĉ π_ĉ · conv{0, w_1 e_1, …, w_N e_N}` with `σ = 1 - γ` after
//! [`scale_region`]. Its support function is
//! `h(θ) = σ Σ_ĉ π_ĉ max_i w_i θ_i` for `θ ≥ 0`.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::Rng;

use crate::channel::SuccessTable;
use crate::error::{Error, Result};
use crate::fmt::sig17;
use crate::policy::{rate_adapt, Decision};

/// Largest number of estimate vectors a region may enumerate.
pub const MAX_TERMS: u128 = 1_000_000;
/// Default tolerance separating "boundary" from "inside"/"outside".
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionKind {
    /// Rate-adapted region Λ.
    Full,
    /// Region of schedulers that transmit at the estimated rate.
    Naive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub weight: f64,
    /// Per-user axis intercept `w_i`.
    pub legs: Vec<f64>,
    /// Estimate rank per user.
    pub estimates: Vec<usize>,
    /// Rate rank per user that realizes `legs`.
    pub rates: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionTerms {
    kind: RegionKind,
    scale: f64,
    terms: Vec<Term>,
    /// `positions[user][rank]`: index of the rank in that user's domain.
    positions: Vec<Vec<Option<usize>>>,
    strides: Vec<usize>,
}

/// A nonnegative arrival-rate vector (packets/slot).
#[derive(Clone, Debug, PartialEq)]
pub struct RatePoint(Vec<f64>);

impl RatePoint {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if let Some(bad) = rates.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::Parameter(format!("arrival rate {bad} is not a nonnegative finite number")));
        }
        Ok(Self(rates))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Rate-adapted region Λ: legs `w_i = max_r P(C_i ≥ r | ĉ_i)·r`.
pub fn region_full(st: &SuccessTable, n_users: usize) -> Result<RegionTerms> {
    build(st, n_users, RegionKind::Full)
}

/// Region Λ̃ of schedulers that trust the estimate: legs `w_i = P(C_i ≥ ĉ_i | ĉ_i)·ĉ_i`.
pub fn region_naive(st: &SuccessTable, n_users: usize) -> Result<RegionTerms> {
    build(st, n_users, RegionKind::Naive)
}

fn build(st: &SuccessTable, n_users: usize, kind: RegionKind) -> Result<RegionTerms> {
    if n_users != st.n_users() {
        return Err(Error::UnsupportedDimension { expected: st.n_users(), actual: n_users });
    }
    let total = (st.rates().len() as u128).checked_pow(n_users as u32).unwrap_or(u128::MAX);
    if total > MAX_TERMS {
        return Err(Error::Size { terms: total, limit: MAX_TERMS });
    }

    // Legs depend on the user's own estimate only; compute them once per (user, ĉ).
    let mut offers: Vec<Vec<(usize, usize, f64)>> = Vec::with_capacity(n_users);
    for user in 0..n_users {
        let mut row = Vec::new();
        for &est in st.domain(user) {
            let (rate, leg) = match kind {
                RegionKind::Full => rate_adapt(st, user, est)?,
                RegionKind::Naive => (est, st.success(user, est, est)? * st.rates().rate(est)),
            };
            row.push((est, rate, leg));
        }
        offers.push(row);
    }

    let mut strides = vec![1; n_users];
    for user in (0..n_users.saturating_sub(1)).rev() {
        strides[user] = strides[user + 1] * offers[user + 1].len();
    }
    let count = strides[0] * offers[0].len();
    let mut terms = Vec::with_capacity(count);
    for index in 0..count {
        let mut weight = 1.0;
        let mut legs = Vec::with_capacity(n_users);
        let mut estimates = Vec::with_capacity(n_users);
        let mut rates = Vec::with_capacity(n_users);
        for user in 0..n_users {
            let (est, rate, leg) = offers[user][(index / strides[user]) % offers[user].len()];
            weight *= st.marginal(user, est);
            legs.push(leg);
            estimates.push(est);
            rates.push(rate);
        }
        terms.push(Term { weight, legs, estimates, rates });
    }

    let positions = (0..n_users)
        .map(|user| {
            let mut pos = vec![None; st.rates().len()];
            for (i, &est) in st.domain(user).iter().enumerate() {
                pos[est] = Some(i);
            }
            pos
        })
        .collect();
    Ok(RegionTerms { kind, scale: 1.0, terms, positions, strides })
}

/// `(1 - γ)·Λ`: the region left when a fraction γ of slots is spent exploring.
pub fn scale_region(region: &RegionTerms, gamma: f64) -> Result<RegionTerms> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Parameter(format!("gamma must lie in (0,1), got {gamma}")));
    }
    let mut scaled = region.clone();
    scaled.scale *= 1.0 - gamma;
    Ok(scaled)
}

impl RegionTerms {
    pub fn kind(&self) -> RegionKind {
        self.kind
    }

    pub fn n_users(&self) -> usize {
        self.positions.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Index of the term for a realised estimate vector.
    pub fn term_index(&self, estimates: &[usize]) -> Option<usize> {
        let mut index = 0;
        for (user, &est) in estimates.iter().enumerate() {
            index += self.positions[user].get(est).copied().flatten()? * self.strides[user];
        }
        Some(index)
    }

    /// Largest rate user `user` can receive alone: `σ Σ π w_user`.
    pub fn corner(&self, user: usize) -> f64 {
        self.scale * self.terms.iter().map(|t| t.weight * t.legs[user]).sum::<f64>()
    }

    pub fn corners(&self) -> Vec<f64> {
        (0..self.n_users()).map(|u| self.corner(u)).collect()
    }

    /// Support function `h(θ)`; `theta` should be nonnegative.
    pub fn support(&self, theta: &[f64]) -> f64 {
        self.scale
            * self
                .terms
                .iter()
                .map(|t| {
                    let best = t.legs.iter().zip(theta).map(|(w, th)| w * th).fold(0.0, f64::max);
                    t.weight * best
                })
                .sum::<f64>()
    }

    /// Largest `t` with `t·direction` in the region (two users only).
    pub fn radial_extent(&self, direction: &[f64]) -> Result<f64> {
        self.require_two_users()?;
        let normals = self.facet_normals()?;
        let mut extent = f64::INFINITY;
        for n in &normals {
            let dot = n[0] * direction[0] + n[1] * direction[1];
            if dot > 0.0 {
                extent = extent.min(self.support(n) / dot);
            }
        }
        Ok(extent)
    }

    fn require_two_users(&self) -> Result<()> {
        if self.n_users() != 2 {
            return Err(Error::UnsupportedDimension { expected: 2, actual: self.n_users() });
        }
        Ok(())
    }

    /// Outward unit normals of every facet in the positive orthant, axes included.
    fn facet_normals(&self) -> Result<Vec<[f64; 2]>> {
        let vertices = boundary_2d(self)?;
        let mut normals = vec![[1.0, 0.0], [0.0, 1.0]];
        for pair in vertices.windows(2) {
            let (dx, dy) = (pair[0][0] - pair[1][0], pair[1][1] - pair[0][1]);
            let norm = dx.hypot(dy);
            if norm > 0.0 {
                normals.push([dy / norm, dx / norm]);
            }
        }
        Ok(normals)
    }
}

/// Outer boundary of a two-user region, counterclockwise from `(corner_1, 0)`
/// to `(0, corner_2)`.
///
/// Each term contributes its hypotenuse as one edge; edges are swept in
/// decreasing order of `w_2/w_1`, and terms with equal ratios merge.
pub fn boundary_2d(region: &RegionTerms) -> Result<Vec<[f64; 2]>> {
    region.require_two_users()?;
    let mut edges: Vec<(f64, f64)> = region
        .terms
        .iter()
        .filter(|t| t.weight > 0.0 && (t.legs[0] > 0.0 || t.legs[1] > 0.0))
        .map(|t| (t.weight * t.legs[0], t.weight * t.legs[1]))
        .collect();
    // Decreasing w2/w1, compared by cross-multiplication so that w1 = 0 sorts first.
    let steeper = |a: &(f64, f64), b: &(f64, f64)| (a.1 * b.0).partial_cmp(&(b.1 * a.0)).unwrap_or(Ordering::Equal);
    edges.sort_by(|a, b| steeper(b, a));

    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(edges.len());
    for e in edges {
        match merged.last_mut() {
            Some(last) if steeper(last, &e) == Ordering::Equal => {
                last.0 += e.0;
                last.1 += e.1;
            }
            _ => merged.push(e),
        }
    }

    let s = region.scale;
    let (corner1, corner2) = (region.corner(0), region.corner(1));
    let mut vertices = vec![[corner1, 0.0]];
    let (mut x, mut y) = (corner1, 0.0);
    for (i, (dx, dy)) in merged.iter().enumerate() {
        if i + 1 == merged.len() {
            vertices.push([0.0, corner2]);
        } else {
            x = (x - s * dx).max(0.0);
            y += s * dy;
            vertices.push([x, y]);
        }
    }
    if merged.is_empty() {
        vertices.push([0.0, 0.0]);
    }
    Ok(vertices)
}

/// `lambda1,lambda2` CSV of boundary vertices.
pub fn boundary_csv(vertices: &[[f64; 2]]) -> String {
    let mut out = String::from("lambda1,lambda2\n");
    for v in vertices {
        let _ = writeln!(out, "{},{}", sig17(v[0]), sig17(v[1]));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Inside,
    Boundary,
    Outside,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Membership {
    pub verdict: Verdict,
    /// `min_θ (h(θ) - λ·θ)/|θ|` over the examined directions.
    pub margin: f64,
    /// Simplex-grid resolution used for three or more users; `None` when exact.
    pub grid_resolution: Option<usize>,
}

/// Number of simplex-grid directions examined before local refinement (N ≥ 3).
pub const GRID_BUDGET: usize = 20_000;

/// Classifies `lambda` against the region.
///
/// Two users are handled exactly through the boundary facets. For more users
/// the support-function margin is minimized over a simplex lattice of
/// resolution `grid_resolution` followed by pairwise mass-transfer refinement,
/// so verdicts near the boundary are approximate.
pub fn contains(region: &RegionTerms, lambda: &RatePoint, tol: f64) -> Result<Membership> {
    let n = region.n_users();
    if lambda.dim() != n {
        return Err(Error::UnsupportedDimension { expected: n, actual: lambda.dim() });
    }
    let point = lambda.as_slice();
    let margin_at = |theta: &[f64]| {
        let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        let dot: f64 = theta.iter().zip(point).map(|(t, l)| t * l).sum();
        (region.support(theta) - dot) / norm
    };
    let (margin, grid_resolution) = match n {
        1 => (region.corner(0) - point[0], None),
        2 => {
            let margin = region.facet_normals()?.iter().map(|nrm| margin_at(nrm)).fold(f64::INFINITY, f64::min);
            (margin, None)
        }
        _ => {
            let resolution = grid_resolution_for(n);
            (minimize_on_simplex(n, resolution, margin_at), Some(resolution))
        }
    };
    let verdict = if margin.abs() <= tol {
        Verdict::Boundary
    } else if margin > 0.0 {
        Verdict::Inside
    } else {
        Verdict::Outside
    };
    Ok(Membership { verdict, margin, grid_resolution })
}

fn grid_resolution_for(n: usize) -> usize {
    let mut m = 1;
    while lattice_size(n, m + 1) <= GRID_BUDGET as u128 {
        m += 1;
    }
    m
}

/// Number of points `k ∈ ℕ^n` with `Σk = m`: `C(m+n-1, n-1)`.
fn lattice_size(n: usize, m: usize) -> u128 {
    let (top, k) = ((m + n - 1) as u128, (n - 1) as u128);
    (0..k).fold(1u128, |acc, i| acc * (top - i) / (i + 1))
}

fn minimize_on_simplex(n: usize, resolution: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut best_theta = vec![0.0; n];
    let mut best = f64::INFINITY;
    let mut counts = vec![0usize; n];
    counts[n - 1] = resolution;
    let mut theta = vec![0.0; n];
    loop {
        for (t, &c) in theta.iter_mut().zip(&counts) {
            *t = c as f64 / resolution as f64;
        }
        let value = f(&theta);
        if value < best {
            best = value;
            best_theta.copy_from_slice(&theta);
        }
        if !next_composition(&mut counts) {
            break;
        }
    }

    let mut step = 1.0 / resolution as f64;
    while step > 1e-12 {
        let mut improved = false;
        for from in 0..n {
            for to in 0..n {
                if from == to || best_theta[from] <= 0.0 {
                    continue;
                }
                let moved = step.min(best_theta[from]);
                theta.copy_from_slice(&best_theta);
                theta[from] -= moved;
                theta[to] += moved;
                let value = f(&theta);
                if value < best {
                    best = value;
                    best_theta.copy_from_slice(&theta);
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    best
}

/// Advances `counts` to the next composition of the same total; false when exhausted.
fn next_composition(counts: &mut [usize]) -> bool {
    let n = counts.len();
    let total: usize = counts.iter().sum();
    // Odometer over the first n-1 entries, the last one absorbs the remainder.
    let mut j = n - 1;
    loop {
        if j == 0 {
            return false;
        }
        j -= 1;
        counts[j] += 1;
        let head: usize = counts[..n - 1].iter().sum();
        if head <= total {
            counts[n - 1] = total - head;
            return true;
        }
        counts[j] = 0;
    }
}

/// Per-term activation probabilities `α_i^ĉ` with `Σ_i α_i^ĉ ≤ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct AchievabilityWeights {
    /// `alpha[term][user]`, terms in [`RegionTerms::terms`] order.
    pub alpha: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Achievability {
    Feasible(AchievabilityWeights),
    /// No weights exist; `max_scale < 1` bounds how far `λ + δ` may be scaled.
    Infeasible { max_scale: f64 },
    /// The iterative search stopped with the optimal scale bracketed in `[lower, upper]`.
    Undecided { lower: f64, upper: f64 },
}

impl Achievability {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Achievability::Feasible(_))
    }
}

impl AchievabilityWeights {
    /// Long-run service per user, `σ Σ_ĉ π_ĉ α_i^ĉ w_i(ĉ)`.
    pub fn service(&self, region: &RegionTerms) -> Vec<f64> {
        let mut out = vec![0.0; region.n_users()];
        for (term, alpha) in region.terms.iter().zip(&self.alpha) {
            for (user, a) in alpha.iter().enumerate() {
                out[user] += term.weight * a * term.legs[user];
            }
        }
        out.iter().map(|s| s * region.scale).collect()
    }

    /// Stationary randomized decision: serve user `i` with probability
    /// `α_i^ĉ` at the term's rate, otherwise idle.
    pub fn decide<R: Rng + ?Sized>(&self, region: &RegionTerms, estimates: &[usize], rng: &mut R) -> Decision {
        let Some(index) = region.term_index(estimates) else {
            return Decision::Idle;
        };
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (user, &a) in self.alpha[index].iter().enumerate() {
            acc += a;
            if u < acc {
                let term = &region.terms[index];
                return Decision::Transmit { user, rate: term.rates[user], weight: 0.0 };
            }
        }
        Decision::Idle
    }
}

/// Iteration cap of the multiplicative-weights search used for N ≥ 3.
pub const MAX_ACHIEVABILITY_ITERS: usize = 20_000;

/// Finds `α` with `λ_i + δ ≤ σ Σ_ĉ π_ĉ α_i^ĉ w_i(ĉ_i)` and `Σ_i α_i^ĉ ≤ 1`.
///
/// Two users: exact. The target is pushed radially onto the boundary, the
/// fractional-knapsack allocation that gives user 1 the terms with the
/// smallest `w_2/w_1` first realises that boundary point, and the weights are
/// scaled back down, so returned weights meet the constraint with equality.
///
/// Three or more users: a multiplicative-weights game between users and terms
/// that brackets the best achievable scale of `λ + δ`; it reports feasibility
/// only with a certificate (an averaged allocation) and infeasibility only with
/// a dual bound below one.
pub fn achievability_weights(region: &RegionTerms, lambda: &RatePoint, slack: f64) -> Result<Achievability> {
    let n = region.n_users();
    if lambda.dim() != n {
        return Err(Error::UnsupportedDimension { expected: n, actual: lambda.dim() });
    }
    if !(slack >= 0.0 && slack.is_finite()) {
        return Err(Error::Parameter(format!("slack must be nonnegative, got {slack}")));
    }
    let demand: Vec<f64> = lambda.as_slice().iter().map(|l| l + slack).collect();
    if demand.iter().all(|&d| d == 0.0) {
        return Ok(Achievability::Feasible(AchievabilityWeights { alpha: vec![vec![0.0; n]; region.terms.len()] }));
    }
    match n {
        1 => {
            let extent = region.corner(0) / demand[0];
            if extent < 1.0 {
                return Ok(Achievability::Infeasible { max_scale: extent });
            }
            let a = 1.0 / extent;
            Ok(Achievability::Feasible(AchievabilityWeights { alpha: vec![vec![a]; region.terms.len()] }))
        }
        2 => Ok(achievability_2d(region, &demand)?),
        _ => Ok(achievability_iterative(region, &demand)),
    }
}

fn achievability_2d(region: &RegionTerms, demand: &[f64]) -> Result<Achievability> {
    let extent = region.radial_extent(demand)?;
    if extent < 1.0 {
        return Ok(Achievability::Infeasible { max_scale: extent });
    }
    let mut order: Vec<usize> = (0..region.terms.len()).collect();
    let legs = |i: usize| (region.terms[i].legs[0], region.terms[i].legs[1]);
    // Increasing w2/w1; terms useless to user 1 (w1 = 0) go last.
    order.sort_by(|&a, &b| {
        let (a1, a2) = legs(a);
        let (b1, b2) = legs(b);
        (a2 * b1).partial_cmp(&(b2 * a1)).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });

    let mut remaining = extent * demand[0] / region.scale;
    let mut alpha = vec![vec![0.0; 2]; region.terms.len()];
    for &i in &order {
        let term = &region.terms[i];
        let capacity = term.weight * term.legs[0];
        let first = if remaining <= 0.0 || capacity <= 0.0 {
            0.0
        } else if remaining >= capacity {
            remaining -= capacity;
            1.0
        } else {
            let f = remaining / capacity;
            remaining = 0.0;
            f
        };
        alpha[i] = vec![first / extent, (1.0 - first) / extent];
    }
    if demand[1] == 0.0 {
        for a in &mut alpha {
            a[1] = 0.0;
        }
    }
    Ok(Achievability::Feasible(AchievabilityWeights { alpha }))
}

fn achievability_iterative(region: &RegionTerms, demand: &[f64]) -> Achievability {
    let n = region.n_users();
    let active: Vec<usize> = (0..n).filter(|&i| demand[i] > 0.0).collect();
    let terms = &region.terms;
    // Ratio payoff of giving term k entirely to user i.
    let gain = |k: usize, i: usize| region.scale * terms[k].weight * terms[k].legs[i] / demand[i];
    let max_gain: f64 = active
        .iter()
        .map(|&i| (0..terms.len()).map(|k| gain(k, i)).sum::<f64>())
        .fold(0.0, f64::max);
    if max_gain <= 0.0 {
        return Achievability::Infeasible { max_scale: 0.0 };
    }
    let eta = ((active.len() as f64).ln().max(1.0) / MAX_ACHIEVABILITY_ITERS as f64).sqrt();
    let mut log_weights = vec![0.0; active.len()];
    let mut counts = vec![vec![0u32; n]; terms.len()];
    let mut upper = f64::INFINITY;
    let mut lower = 0.0;

    for iter in 1..=MAX_ACHIEVABILITY_ITERS {
        let top = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let theta: Vec<f64> = log_weights.iter().map(|w| (w - top).exp()).collect();
        let total: f64 = theta.iter().sum();

        let mut payoff = vec![0.0; active.len()];
        for k in 0..terms.len() {
            let (slot, _) = active
                .iter()
                .enumerate()
                .map(|(j, &i)| (j, theta[j] * gain(k, i)))
                .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            counts[k][active[slot]] += 1;
            payoff[slot] += gain(k, active[slot]);
        }
        let dual: f64 = theta.iter().zip(&payoff).map(|(t, p)| t * p).sum::<f64>() / total;
        upper = upper.min(dual);
        for (w, p) in log_weights.iter_mut().zip(&payoff) {
            *w -= eta * p / max_gain;
        }

        if iter % 64 == 0 || iter == MAX_ACHIEVABILITY_ITERS {
            let served = average_service(region, &counts, iter);
            lower = active.iter().map(|&i| served[i] / demand[i]).fold(f64::INFINITY, f64::min);
            if lower >= 1.0 {
                let alpha = counts
                    .iter()
                    .map(|c| c.iter().map(|&k| k as f64 / iter as f64 / lower).collect())
                    .collect();
                return Achievability::Feasible(AchievabilityWeights { alpha });
            }
        }
        if upper < 1.0 {
            return Achievability::Infeasible { max_scale: upper };
        }
    }
    Achievability::Undecided { lower, upper }
}

fn average_service(region: &RegionTerms, counts: &[Vec<u32>], iters: usize) -> Vec<f64> {
    let weights = AchievabilityWeights {
        alpha: counts.iter().map(|c| c.iter().map(|&k| k as f64 / iters as f64).collect()).collect(),
    };
    weights.service(region)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{JointStatistics, RateSpace};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fig1(accuracy: f64) -> SuccessTable {
        JointStatistics::two_level(0.2, 1.0, 0.8, accuracy, 2).unwrap().success_table().unwrap()
    }

    fn perfect_fig1() -> SuccessTable {
        let rates = RateSpace::new(vec![0.2, 1.0]).unwrap();
        JointStatistics::perfect(rates, &[0.2, 0.8], 2).unwrap().success_table().unwrap()
    }

    /// Brute force over every rate choice for every estimate.
    fn brute_corner(st: &SuccessTable) -> f64 {
        let n = st.rates().len();
        st.domain(0)
            .iter()
            .map(|&e| {
                let best = (0..n)
                    .map(|r| st.success(0, e, r).unwrap() * st.rates().rate(r))
                    .fold(0.0, f64::max);
                st.marginal(0, e) * best
            })
            .sum()
    }

    fn point(v: &[f64]) -> RatePoint {
        RatePoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn corners_of_the_worked_examples() {
        let full = region_full(&fig1(0.8), 2).unwrap();
        assert!((full.corner(0) - 0.8).abs() < 1e-12);
        assert!((full.corner(0) - brute_corner(&fig1(0.8))).abs() < 1e-15);
        let naive = region_naive(&fig1(0.8), 2).unwrap();
        assert!((naive.corner(0) - 0.704).abs() < 1e-12);
        let naive_b = region_naive(&fig1(0.4), 2).unwrap();
        assert!((naive_b.corner(1) - 0.432).abs() < 1e-12);
        let perfect = region_full(&perfect_fig1(), 2).unwrap();
        assert!((perfect.corner(0) - 0.84).abs() < 1e-12);
    }

    #[test]
    fn single_term_segment() {
        let rates = RateSpace::new(vec![3.0]).unwrap();
        let st = JointStatistics::perfect(rates, &[1.0], 1).unwrap().success_table().unwrap();
        let r = region_full(&st, 1).unwrap();
        assert_eq!(r.terms().len(), 1);
        assert_eq!(r.corner(0), 3.0);
        assert_eq!(contains(&r, &point(&[2.0]), DEFAULT_TOL).unwrap().verdict, Verdict::Inside);
        assert_eq!(contains(&r, &point(&[3.0]), DEFAULT_TOL).unwrap().verdict, Verdict::Boundary);
        assert_eq!(contains(&r, &point(&[3.1]), DEFAULT_TOL).unwrap().verdict, Verdict::Outside);
    }

    #[test]
    fn naive_equals_full_for_perfect_estimates() {
        let st = perfect_fig1();
        let full = region_full(&st, 2).unwrap();
        let naive = region_naive(&st, 2).unwrap();
        for (a, b) in full.terms().iter().zip(naive.terms()) {
            assert_eq!(a.legs, b.legs);
        }
    }

    #[test]
    fn enumeration_guard() {
        let rates = RateSpace::new((1..=10).map(f64::from).collect()).unwrap();
        let st = JointStatistics::perfect(rates, &[0.1; 10], 7).unwrap().success_table().unwrap();
        assert!(matches!(region_full(&st, 7), Err(Error::Size { .. })));
        assert!(region_full(&st, 6).is_err());
    }

    #[test]
    fn scaling() {
        let full = region_full(&fig1(0.8), 2).unwrap();
        let scaled = scale_region(&full, 0.2).unwrap();
        assert!((scaled.corner(0) - 0.64).abs() < 1e-12);
        let tiny = scale_region(&full, 1e-15).unwrap();
        assert!((tiny.corner(0) - full.corner(0)).abs() < 1e-12);
        assert!(scale_region(&full, 0.0).is_err());
        assert!(scale_region(&full, 1.0).is_err());
        let twice = scale_region(&scale_region(&full, 0.25).unwrap(), 0.5).unwrap();
        assert_eq!(twice.scale(), 0.75 * 0.5);
        assert_eq!(twice.terms(), full.terms());
    }

    #[test]
    fn scaled_membership_matches_rescaled_point() {
        let full = region_full(&fig1(0.8), 2).unwrap();
        let gamma = 0.3;
        let scaled = scale_region(&full, gamma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let q = [rng.random::<f64>() * 0.8, rng.random::<f64>() * 0.8];
            let a = contains(&scaled, &point(&q), 1e-9).unwrap().verdict;
            let b = contains(&full, &point(&[q[0] / (1.0 - gamma), q[1] / (1.0 - gamma)]), 1e-9).unwrap().verdict;
            assert_eq!(a, b, "{q:?}");
        }
    }

    #[test]
    fn boundary_of_a_single_triangle() {
        let rates = RateSpace::new(vec![2.0]).unwrap();
        let js = JointStatistics::perfect(rates, &[1.0], 2).unwrap();
        let r = region_full(&js.success_table().unwrap(), 2).unwrap();
        assert_eq!(boundary_2d(&r).unwrap(), vec![[2.0, 0.0], [0.0, 2.0]]);
        let half = scale_region(&r, 0.5).unwrap();
        assert_eq!(boundary_2d(&half).unwrap(), vec![[1.0, 0.0], [0.0, 1.0]]);
    }

    fn manual_region(terms: Vec<(f64, [f64; 2])>) -> RegionTerms {
        RegionTerms {
            kind: RegionKind::Full,
            scale: 1.0,
            terms: terms
                .into_iter()
                .map(|(weight, legs)| Term { weight, legs: legs.to_vec(), estimates: vec![0, 0], rates: vec![0, 0] })
                .collect(),
            positions: vec![vec![Some(0)], vec![Some(0)]],
            strides: vec![1, 1],
        }
    }

    /// Support function of a vertex list together with the origin: max over vertices.
    fn polygon_support(vertices: &[[f64; 2]], theta: [f64; 2]) -> f64 {
        vertices.iter().map(|v| v[0] * theta[0] + v[1] * theta[1]).fold(0.0, f64::max)
    }

    #[test]
    fn boundary_support_matches_direction_oracle() {
        let r = manual_region(vec![(0.5, [1.0, 0.5]), (0.5, [0.5, 1.0])]);
        let vertices = boundary_2d(&r).unwrap();
        assert_eq!(vertices.len(), 3);
        for k in 0..1000 {
            let angle = std::f64::consts::FRAC_PI_2 * k as f64 / 999.0;
            let theta = [angle.cos(), angle.sin()];
            // Independent oracle: h(θ) = Σ π max_i w_i θ_i.
            let oracle = 0.5 * (1.0f64 * theta[0]).max(0.5 * theta[1]) + 0.5 * (0.5 * theta[0]).max(1.0 * theta[1]);
            assert!((polygon_support(&vertices, theta) - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn boundary_merges_parallel_and_degenerate_terms() {
        let r = manual_region(vec![(0.25, [1.0, 1.0]), (0.25, [2.0, 2.0]), (0.25, [0.0, 0.0]), (0.25, [0.0, 1.0])]);
        let v = boundary_2d(&r).unwrap();
        assert_eq!(v, vec![[0.75, 0.0], [0.75, 0.25], [0.0, 1.0]]);
    }

    #[test]
    fn symmetric_users_give_a_symmetric_boundary() {
        let r = region_full(&fig1(0.8), 2).unwrap();
        let v = boundary_2d(&r).unwrap();
        let mirrored: Vec<[f64; 2]> = v.iter().rev().map(|p| [p[1], p[0]]).collect();
        for (a, b) in v.iter().zip(&mirrored) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_endpoints_are_the_corners() {
        let r = region_full(&fig1(0.4), 2).unwrap();
        let v = boundary_2d(&r).unwrap();
        assert_eq!(v[0], [r.corner(0), 0.0]);
        assert_eq!(v[v.len() - 1], [0.0, r.corner(1)]);
    }

    #[test]
    fn boundary_needs_two_users() {
        let st = JointStatistics::two_level(0.2, 1.0, 0.8, 0.8, 3).unwrap().success_table().unwrap();
        let r = region_full(&st, 3).unwrap();
        assert!(matches!(boundary_2d(&r), Err(Error::UnsupportedDimension { expected: 2, actual: 3 })));
    }

    #[test]
    fn membership_worked_examples() {
        let r = region_full(&fig1(0.8), 2).unwrap();
        assert_eq!(contains(&r, &point(&[0.0, 0.0]), 1e-9).unwrap().verdict, Verdict::Inside);
        assert_eq!(contains(&r, &point(&[0.81, 0.0]), 1e-9).unwrap().verdict, Verdict::Outside);
        assert_eq!(contains(&r, &point(&[0.79, 0.0]), 1e-9).unwrap().verdict, Verdict::Inside);
        assert_eq!(contains(&r, &point(&[0.4, 0.4]), 1e-9).unwrap().verdict, Verdict::Inside);
        assert_eq!(contains(&r, &point(&[0.8, 0.0]), 1e-9).unwrap().verdict, Verdict::Boundary);
        assert!((r.support(&[1.0, 1.0]) - 0.896).abs() < 1e-12);
    }

    #[test]
    fn membership_in_three_dimensions_tracks_the_support_function() {
        let st = JointStatistics::two_level(0.2, 1.0, 0.8, 0.8, 3).unwrap().success_table().unwrap();
        let r = region_full(&st, 3).unwrap();
        let m = contains(&r, &point(&[0.0, 0.0, 0.0]), 1e-9).unwrap();
        assert_eq!(m.verdict, Verdict::Inside);
        assert!(m.grid_resolution.unwrap() >= 100);
        assert_eq!(contains(&r, &point(&[0.79, 0.0, 0.0]), 1e-9).unwrap().verdict, Verdict::Inside);
        assert_eq!(contains(&r, &point(&[0.81, 0.0, 0.0]), 1e-9).unwrap().verdict, Verdict::Outside);
        let h = r.support(&[1.0, 1.0, 1.0]);
        let just_out = h / 3.0 * 1.01;
        assert_eq!(contains(&r, &point(&[just_out; 3]), 1e-9).unwrap().verdict, Verdict::Outside);
        assert_eq!(contains(&r, &point(&[h / 3.0 * 0.95; 3]), 1e-9).unwrap().verdict, Verdict::Inside);
    }

    #[test]
    fn lattice_enumeration_visits_every_composition() {
        for (n, m) in [(2, 5), (3, 4), (4, 3)] {
            let mut counts = vec![0; n];
            counts[n - 1] = m;
            let mut seen = 1;
            while next_composition(&mut counts) {
                assert_eq!(counts.iter().sum::<usize>(), m);
                seen += 1;
            }
            assert_eq!(seen as u128, lattice_size(n, m));
        }
    }

    #[test]
    fn achievability_worked_examples() {
        let r = region_full(&fig1(0.8), 2).unwrap();
        match achievability_weights(&r, &point(&[0.0, 0.0]), 0.0).unwrap() {
            Achievability::Feasible(w) => assert!(w.alpha.iter().flatten().all(|&a| a == 0.0)),
            other => panic!("{other:?}"),
        }
        match achievability_weights(&r, &point(&[0.79, 0.0]), 0.0).unwrap() {
            Achievability::Feasible(w) => {
                for a in &w.alpha {
                    assert!((a[0] - 0.9875).abs() < 1e-12, "{a:?}");
                    assert_eq!(a[1], 0.0);
                }
                assert!(w.service(&r)[0] >= 0.79 - 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert!(!achievability_weights(&r, &point(&[0.5, 0.5]), 0.0).unwrap().is_feasible());
        assert!(achievability_weights(&r, &point(&[0.4, 0.4]), 0.0).unwrap().is_feasible());
        assert!(!achievability_weights(&r, &point(&[0.4, 0.4]), 0.1).unwrap().is_feasible());
    }

    #[test]
    fn achievability_in_three_dimensions() {
        let st = JointStatistics::two_level(0.2, 1.0, 0.8, 0.8, 3).unwrap().success_table().unwrap();
        let r = region_full(&st, 3).unwrap();
        let h = r.support(&[1.0, 1.0, 1.0]);
        let inside = point(&[h / 3.0 * 0.95; 3]);
        match achievability_weights(&r, &inside, 0.0).unwrap() {
            Achievability::Feasible(w) => {
                let served = w.service(&r);
                assert!(served.iter().all(|&s| s >= h / 3.0 * 0.95 - 1e-12));
                assert!(w.alpha.iter().all(|a| a.iter().sum::<f64>() <= 1.0 + 1e-12));
            }
            other => panic!("{other:?}"),
        }
        let outside = point(&[h / 3.0 * 1.05; 3]);
        assert!(matches!(achievability_weights(&r, &outside, 0.0).unwrap(), Achievability::Infeasible { .. }));
    }

    #[test]
    fn randomized_policy_follows_the_weights() {
        let r = region_full(&fig1(0.8), 2).unwrap();
        let Achievability::Feasible(w) = achievability_weights(&r, &point(&[0.3, 0.2]), 0.0).unwrap() else {
            panic!("expected feasible");
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let index = r.term_index(&[1, 0]).unwrap();
        let draws = 200_000;
        let mut hits = [0u32; 3];
        for _ in 0..draws {
            match w.decide(&r, &[1, 0], &mut rng) {
                Decision::Transmit { user, rate, .. } => {
                    assert_eq!(rate, r.terms()[index].rates[user]);
                    hits[user] += 1;
                }
                Decision::Idle => hits[2] += 1,
            }
        }
        for user in 0..2 {
            let freq = hits[user] as f64 / draws as f64;
            assert!((freq - w.alpha[index][user]).abs() < 0.005);
        }
    }

    fn random_instance(seed: u64) -> RegionTerms {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rates = RateSpace::new(vec![0.5, 1.0, 2.0]).unwrap();
        let tables = (0..2)
            .map(|_| {
                let raw: Vec<f64> = (0..9).map(|_| rng.random::<f64>() + 0.01).collect();
                let sum: f64 = raw.iter().sum();
                raw.chunks(3).map(|row| row.iter().map(|x| x / sum).collect()).collect()
            })
            .collect();
        let js = JointStatistics::with_tolerance(rates, tables, 1e-9).unwrap();
        region_full(&js.success_table().unwrap(), 2).unwrap()
    }

    #[test]
    fn membership_and_achievability_agree_in_two_dimensions() {
        for seed in 0..5 {
            let r = random_instance(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            for _ in 0..1000 {
                let q = point(&[rng.random::<f64>() * r.corner(0), rng.random::<f64>() * r.corner(1)]);
                let m = contains(&r, &q, 1e-6).unwrap();
                if m.verdict == Verdict::Boundary {
                    continue;
                }
                let a = achievability_weights(&r, &q, 0.0).unwrap();
                assert_eq!(m.verdict == Verdict::Inside, a.is_feasible(), "{q:?} margin {}", m.margin);
                if let Achievability::Feasible(w) = a {
                    let s = w.service(&r);
                    assert!(s[0] >= q.as_slice()[0] - 1e-9 && s[1] >= q.as_slice()[1] - 1e-9);
                    assert!(w.alpha.iter().all(|a| a.iter().sum::<f64>() <= 1.0 + 1e-12));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn naive_legs_never_exceed_full_legs(seed in 0u64..10_000) {
            let r = random_instance(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rates = RateSpace::new(vec![0.5, 1.0, 2.0]).unwrap();
            let tables: Vec<Vec<Vec<f64>>> = (0..2).map(|_| {
                let raw: Vec<f64> = (0..9).map(|_| rng.random::<f64>() + 0.01).collect();
                let sum: f64 = raw.iter().sum();
                raw.chunks(3).map(|row| row.iter().map(|x| x / sum).collect()).collect()
            }).collect();
            let st = JointStatistics::with_tolerance(rates, tables, 1e-9).unwrap().success_table().unwrap();
            let full = region_full(&st, 2).unwrap();
            let naive = region_naive(&st, 2).unwrap();
            for (f, n) in full.terms().iter().zip(naive.terms()) {
                prop_assert!(n.legs[0] <= f.legs[0] && n.legs[1] <= f.legs[1]);
            }
            let v = boundary_2d(&r).unwrap();
            prop_assert_eq!(v[0][0], r.corner(0));
            prop_assert_eq!(v[v.len() - 1][1], r.corner(1));
        }
    }
}
