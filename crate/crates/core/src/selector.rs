//! Globally optimal salient time-step selection.
//!
//! A selection of `k` steps from a range of `T` frames always contains both
//! endpoints and is scored by summing a pair cost over consecutive selected
//! steps. [`select_salient`] minimizes that sum exactly with an `O(T²k)`
//! dynamic program; [`brute_force_select`] enumerates every feasible selection
//! and serves as its oracle. All indices here are relative to the range start.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::aggregation::{statistical_cost, AggregationKind};
use crate::error::{Error, Result};
use crate::features::StructuralMatrix;
use crate::grid::{FocusRange, Region};

pub const DEFAULT_GAMMA: f64 = 0.3;
pub const DEFAULT_SIGMA: f64 = 1.0;

/// Cost of keeping steps `i < j` adjacent in a selection.
pub trait PairCost {
    fn cost(&self, i: usize, j: usize) -> f64;
}

impl<F: Fn(usize, usize) -> f64> PairCost for F {
    fn cost(&self, i: usize, j: usize) -> f64 {
        self(i, j)
    }
}

/// Distance penalty `1 − γ·tanh(|i − j| / (σ·n / k))`.
#[inline]
pub fn distance_cost(i: usize, j: usize, n: usize, k: usize, gamma: f64, sigma: f64) -> f64 {
    let gap = i.abs_diff(j) as f64;
    1.0 - gamma * (gap / (sigma * n as f64 / k as f64)).tanh()
}

/// User-facing selection request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_aggregation")]
    pub aggregation: AggregationKind,
    #[serde(default)]
    pub region: Option<Region>,
    pub range: FocusRange,
    /// Absolute frame indices that must be selected.
    #[serde(default)]
    pub pinned: BTreeSet<usize>,
    /// Absolute frame indices that must not be selected.
    #[serde(default)]
    pub excluded: BTreeSet<usize>,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}

fn default_aggregation() -> AggregationKind {
    AggregationKind::Avg
}

impl SelectionParams {
    pub fn new(range: FocusRange, k: usize, alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            k,
            gamma: DEFAULT_GAMMA,
            sigma: DEFAULT_SIGMA,
            aggregation: AggregationKind::Avg,
            region: None,
            range,
            pinned: BTreeSet::new(),
            excluded: BTreeSet::new(),
        }
    }

    pub fn weights(&self) -> CostWeights {
        CostWeights {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            sigma: self.sigma,
        }
    }

    /// Checks every invariant against a dataset of `frames` steps.
    pub fn validate(&self, frames: usize) -> Result<()> {
        let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !unit(self.alpha) {
            return Err(Error::constraint("alpha must lie in [0, 1]", &["alpha"]));
        }
        if !unit(self.beta) {
            return Err(Error::constraint("beta must lie in [0, 1]", &["beta"]));
        }
        if (self.alpha + self.beta - 1.0).abs() > 1e-9 {
            return Err(Error::constraint(
                format!("alpha + beta must equal 1 (got {})", self.alpha + self.beta),
                &["alpha", "beta"],
            ));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::constraint(
                "gamma must be a non-negative number",
                &["gamma"],
            ));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::constraint("sigma must be positive", &["sigma"]));
        }
        self.range.validate(frames)?;
        let (pinned, excluded) = self.relative_sets()?;
        Constraints::new(pinned, excluded).validate(self.range.len(), self.k)
    }

    /// Pinned/excluded sets shifted to range-relative indices.
    pub fn relative_sets(&self) -> Result<(BTreeSet<usize>, BTreeSet<usize>)> {
        let shift = |set: &BTreeSet<usize>, field: &str| -> Result<BTreeSet<usize>> {
            set.iter()
                .map(|&t| {
                    if self.range.contains(t) {
                        Ok(t - self.range.start)
                    } else {
                        Err(Error::constraint(
                            format!("{field} frame {t} lies outside focus range {}", self.range),
                            &[field],
                        ))
                    }
                })
                .collect()
        };
        Ok((
            shift(&self.pinned, "pinned")?,
            shift(&self.excluded, "excluded")?,
        ))
    }
}

/// Weights of the combined cost. Unlike [`SelectionParams`] this does not
/// require `alpha + beta = 1`, so pure-distance objectives can be expressed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma: f64,
}

/// Per-pair breakdown of the combined cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairBreakdown {
    pub from: usize,
    pub to: usize,
    pub structural: f64,
    pub statistical: f64,
    pub distance: f64,
    pub combined: f64,
}

/// `α·C_struc + β·C_stat + C_dis` over one focus range.
pub struct CombinedCost<'a> {
    pub weights: CostWeights,
    pub k: usize,
    /// Structural costs indexed by range-relative steps.
    pub structural: &'a StructuralMatrix,
    /// Normalized aggregate per range-relative step.
    pub statistical: &'a [f64],
}

impl<'a> CombinedCost<'a> {
    pub fn new(
        weights: CostWeights,
        k: usize,
        structural: &'a StructuralMatrix,
        statistical: &'a [f64],
    ) -> Result<Self> {
        if structural.len() != statistical.len() {
            return Err(Error::Format(format!(
                "structural matrix covers {} steps, statistical series {}",
                structural.len(),
                statistical.len()
            )));
        }
        Ok(Self {
            weights,
            k,
            structural,
            statistical,
        })
    }

    pub fn len(&self) -> usize {
        self.statistical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statistical.is_empty()
    }

    pub fn breakdown(&self, i: usize, j: usize) -> PairBreakdown {
        let w = &self.weights;
        let structural = self.structural.get(i, j);
        let statistical = statistical_cost(self.statistical[i], self.statistical[j]);
        let distance = distance_cost(i, j, self.len(), self.k, w.gamma, w.sigma);
        PairBreakdown {
            from: i,
            to: j,
            structural,
            statistical,
            distance,
            combined: w.alpha * structural + w.beta * statistical + distance,
        }
    }
}

impl PairCost for CombinedCost<'_> {
    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        self.breakdown(i, j).combined
    }
}

/// Pair costs tabulated once for repeated DP runs.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    n: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    /// Evaluates `cost` on every ordered pair `i < j` of `n` steps.
    pub fn tabulate(n: usize, cost: &impl PairCost) -> Self {
        let mut values = vec![f64::NAN; n * n];
        for i in 0..n {
            for j in i + 1..n {
                values[i * n + j] = cost.cost(i, j);
            }
        }
        Self { n, values }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        Self::tabulate(n, &f)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

impl PairCost for CostMatrix {
    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Pinned and excluded steps, relative to the range start.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Constraints {
    pub pinned: BTreeSet<usize>,
    pub excluded: BTreeSet<usize>,
}

impl Constraints {
    pub fn new(pinned: BTreeSet<usize>, excluded: BTreeSet<usize>) -> Self {
        Self { pinned, excluded }
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self, n: usize, k: usize) -> Result<()> {
        if n < 2 {
            return Err(Error::constraint(
                "selection needs a range of at least two frames",
                &["range"],
            ));
        }
        if k < 2 {
            return Err(Error::constraint(
                format!("k must be at least 2 (got {k})"),
                &["k"],
            ));
        }
        if let Some(&t) = self.pinned.iter().chain(&self.excluded).find(|&&t| t >= n) {
            return Err(Error::constraint(
                format!("constrained step {t} lies outside a range of {n} steps"),
                &["pinned", "excluded"],
            ));
        }
        if let Some(&t) = self.pinned.intersection(&self.excluded).next() {
            return Err(Error::constraint(
                format!("step {t} is both pinned and excluded"),
                &["pinned", "excluded"],
            ));
        }
        if self.excluded.contains(&0) || self.excluded.contains(&(n - 1)) {
            return Err(Error::constraint(
                "range endpoints cannot be excluded",
                &["excluded"],
            ));
        }
        let forced = self
            .pinned
            .iter()
            .filter(|&&t| t != 0 && t != n - 1)
            .count()
            + 2;
        if forced > k {
            return Err(Error::constraint(
                format!("{forced} steps are forced (endpoints plus pins) but k = {k}"),
                &["k", "pinned"],
            ));
        }
        let candidates = n - self.excluded.len();
        if k > candidates {
            return Err(Error::constraint(
                format!("k = {k} exceeds the {candidates} selectable steps"),
                &["k", "excluded"],
            ));
        }
        Ok(())
    }
}

/// Chosen steps (range-relative, ascending) and their summed pair cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub steps: Vec<usize>,
    pub total_cost: f64,
}

/// Sum of pair costs over consecutive steps, accumulated left to right.
pub fn sequence_cost(steps: &[usize], cost: &impl PairCost) -> f64 {
    steps.windows(2).map(|w| cost.cost(w[0], w[1])).sum()
}

/// Exact minimum-cost selection of `k` steps out of `0..n`.
///
/// Among equal-cost optima the lexicographically smallest step sequence is
/// returned: the table is filled backwards (best completion from each step),
/// and the path is rebuilt forwards taking the smallest successor that attains
/// the optimum.
pub fn select_salient(
    n: usize,
    k: usize,
    cost: &impl PairCost,
    constraints: &Constraints,
) -> Result<Selection> {
    constraints.validate(n, k)?;
    let candidates: Vec<usize> = (0..n)
        .filter(|t| !constraints.excluded.contains(t))
        .collect();
    let m = candidates.len();
    // Furthest position a transition from position p may reach without
    // skipping a pinned step.
    let mut reach = vec![m - 1; m];
    let mut next_pin = m - 1;
    for p in (0..m).rev() {
        reach[p] = next_pin;
        if constraints.pinned.contains(&candidates[p]) {
            next_pin = p;
        }
    }

    // best[c][p]: min cost of a path from candidate p to the last candidate
    // that uses exactly c + 1 steps; succ[c][p]: its next position.
    let mut best = vec![vec![f64::INFINITY; m]; k];
    let mut succ = vec![vec![usize::MAX; m]; k];
    best[0][m - 1] = 0.0;
    for c in 1..k {
        let (done, rest) = best.split_at_mut(c);
        let prev = &done[c - 1];
        let row = &mut rest[0];
        let succ_row = &mut succ[c];
        // A path of c + 1 steps from p needs at least c candidates after it.
        for p in 0..m.saturating_sub(c) {
            let from = candidates[p];
            let mut min = f64::INFINITY;
            let mut arg = usize::MAX;
            for q in p + 1..=reach[p] {
                let tail = prev[q];
                if tail == f64::INFINITY {
                    continue;
                }
                let v = cost.cost(from, candidates[q]) + tail;
                if v < min {
                    min = v;
                    arg = q;
                }
            }
            row[p] = min;
            succ_row[p] = arg;
        }
    }
    if best[k - 1][0] == f64::INFINITY {
        return Err(Error::constraint(
            "no selection satisfies the constraints",
            &["k", "pinned", "excluded"],
        ));
    }
    let mut steps = Vec::with_capacity(k);
    let mut p = 0;
    steps.push(candidates[p]);
    for c in (1..k).rev() {
        p = succ[c][p];
        steps.push(candidates[p]);
    }
    let total_cost = sequence_cost(&steps, cost);
    Ok(Selection { steps, total_cost })
}

/// Upper bound on enumerated selections for [`brute_force_select`].
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    (0..r).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exhaustive reference for [`select_salient`] with the same tie-break
/// (lexicographically smallest sequence among equal costs).
pub fn brute_force_select(
    n: usize,
    k: usize,
    cost: &impl PairCost,
    constraints: &Constraints,
) -> Result<Selection> {
    constraints.validate(n, k)?;
    if binomial(n - 2, k - 2) > BRUTE_FORCE_LIMIT {
        return Err(Error::constraint(
            format!(
                "C({}, {}) selections exceed the enumeration limit",
                n - 2,
                k - 2
            ),
            &["k"],
        ));
    }
    let inner: Vec<usize> = (1..n - 1)
        .filter(|t| !constraints.excluded.contains(t))
        .collect();
    let r = k - 2;
    let mut best: Option<Selection> = None;
    // Combinations of `inner` in lexicographic order.
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        let mut steps = Vec::with_capacity(k);
        steps.push(0);
        steps.extend(idx.iter().map(|&i| inner[i]));
        steps.push(n - 1);
        if constraints.pinned.iter().all(|p| steps.contains(p)) {
            let total = sequence_cost(&steps, cost);
            if best.as_ref().is_none_or(|b| total < b.total_cost) {
                best = Some(Selection {
                    steps,
                    total_cost: total,
                });
            }
        }
        // Advance to the next combination.
        let mut i = r;
        loop {
            if i == 0 {
                return best.ok_or_else(|| {
                    Error::constraint("no selection satisfies the constraints", &["pinned"])
                });
            }
            i -= 1;
            if idx[i] < inner.len() - r + i {
                idx[i] += 1;
                for j in i + 1..r {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// `k` uniformly spaced steps, `round(i·(n−1)/(k−1))` with halves rounded up.
pub fn even_selection(n: usize, k: usize) -> Result<Vec<usize>> {
    if k < 2 || k > n {
        return Err(Error::constraint(
            format!("even selection needs 2 <= k <= {n}, got {k}"),
            &["k"],
        ));
    }
    let (span, parts) = (n - 1, k - 1);
    Ok((0..k)
        .map(|i| (2 * i * span + parts) / (2 * parts))
        .collect())
}

/// Thresholds of the arc-length/turning-angle trajectory simplification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcThresholds {
    pub eps: f64,
    pub theta: f64,
    pub mix: f64,
}

impl Default for ArcThresholds {
    fn default() -> Self {
        Self {
            eps: 0.3,
            theta: FRAC_PI_4,
            mix: 0.5,
        }
    }
}

/// Rescales a trajectory so its bounding box has unit diagonal.
pub fn normalize_trajectory(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let diag = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt();
    if diag.is_nan() || diag <= 0.0 {
        return points.iter().map(|_| [0.0, 0.0]).collect();
    }
    points
        .iter()
        .map(|p| [(p[0] - lo[0]) / diag, (p[1] - lo[1]) / diag])
        .collect()
}

/// Walks the trajectory accumulating arc length and absolute turning angle
/// since the last selected point; a point is selected once
/// `mix·arc/eps + (1 − mix)·angle/theta ≥ 1`. Both endpoints are always kept.
pub fn arc_based_selection(points: &[[f64; 2]], thresholds: &ArcThresholds) -> Result<Vec<usize>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Bounds(format!(
            "arc-based selection needs 2 points, got {n}"
        )));
    }
    let ArcThresholds { eps, theta, mix } = *thresholds;
    let seg = |a: usize, b: usize| [points[b][0] - points[a][0], points[b][1] - points[a][1]];
    let len = |v: [f64; 2]| v[0].hypot(v[1]);
    let mut steps = vec![0];
    let (mut arc, mut angle) = (0.0, 0.0);
    for i in 1..n - 1 {
        let incoming = seg(i - 1, i);
        let outgoing = seg(i, i + 1);
        arc += len(incoming);
        if len(incoming) > 0.0 && len(outgoing) > 0.0 {
            let cross = incoming[0] * outgoing[1] - incoming[1] * outgoing[0];
            let dot = incoming[0] * outgoing[0] + incoming[1] * outgoing[1];
            angle += cross.atan2(dot).abs();
        }
        if mix * arc / eps + (1.0 - mix) * angle / theta >= 1.0 {
            steps.push(i);
            arc = 0.0;
            angle = 0.0;
        }
    }
    steps.push(n - 1);
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, seed: u64) -> CostMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut full = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v: f64 = rng.random();
                full[i * n + j] = v;
                full[j * n + i] = v;
            }
        }
        CostMatrix::from_fn(n, |i, j| full[i * n + j])
    }

    #[test]
    fn distance_cost_examples() {
        // Reference values from tests/oracle/formulas.py.
        assert_eq!(distance_cost(4, 4, 100, 10, 0.3, 1.0), 1.0);
        assert!((distance_cost(0, 10, 100, 10, 0.3, 1.0) - 0.771521753213).abs() < 1e-5);
        assert!((distance_cost(0, 1_000_000, 100, 10, 0.3, 1.0) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn combined_cost_arithmetic() {
        let w = CostWeights {
            alpha: 0.8,
            beta: 0.2,
            gamma: 0.3,
            sigma: 1.0,
        };
        let v: f64 = w.alpha * 0.5 + w.beta * 1.0 + 0.9;
        assert!((v - 1.5).abs() < 1e-12);

        // alpha = 0, beta = 1, equal v̂, |i − j| = 0 → both components maximal.
        let codes = vec![crate::features::LatentCode::new(vec![1.0, 0.0]).unwrap(); 3];
        let m = StructuralMatrix::from_codes(&codes).unwrap();
        let stat = [0.4, 0.4, 0.4];
        let w = CostWeights {
            alpha: 0.0,
            beta: 1.0,
            gamma: 0.3,
            sigma: 1.0,
        };
        let c = CombinedCost::new(w, 2, &m, &stat).unwrap();
        assert_eq!(c.breakdown(1, 1).combined, 2.0);

        // alpha = 1, beta = 0, identical codes: C = C_struc(S=1) + C_dis.
        let w = CostWeights {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.3,
            sigma: 1.0,
        };
        let c = CombinedCost::new(w, 2, &m, &stat).unwrap();
        let b = c.breakdown(0, 2);
        let want = 0.924141819979 + (1.0 - 0.3 * (2.0f64 / 1.5).tanh());
        assert!((b.combined - want).abs() < 1e-9);
    }

    #[test]
    fn k_two_picks_endpoints() {
        let m = random_matrix(9, 1);
        let s = select_salient(9, 2, &m, &Constraints::none()).unwrap();
        assert_eq!(s.steps, vec![0, 8]);
        assert_eq!(s.total_cost, m.cost(0, 8));
    }

    #[test]
    fn k_equal_to_candidates_selects_all() {
        let m = random_matrix(7, 2);
        let excluded: BTreeSet<usize> = [3].into();
        let c = Constraints::new(BTreeSet::new(), excluded);
        let dp = select_salient(7, 6, &m, &c).unwrap();
        let bf = brute_force_select(7, 6, &m, &c).unwrap();
        assert_eq!(dp.steps, vec![0, 1, 2, 4, 5, 6]);
        assert_eq!(bf, dp);
    }

    #[test]
    fn matches_brute_force_t6_k3() {
        let m = random_matrix(6, 11);
        let dp = select_salient(6, 3, &m, &Constraints::none()).unwrap();
        let bf = brute_force_select(6, 3, &m, &Constraints::none()).unwrap();
        assert_eq!(dp, bf);
    }

    #[test]
    fn pinned_step_is_kept() {
        let m = random_matrix(8, 5);
        let c = Constraints::new([3].into(), BTreeSet::new());
        let dp = select_salient(8, 3, &m, &c).unwrap();
        assert_eq!(dp.steps, vec![0, 3, 7]);
        assert_eq!(dp.total_cost, m.cost(0, 3) + m.cost(3, 7));
        assert_eq!(brute_force_select(8, 3, &m, &c).unwrap(), dp);
    }

    #[test]
    fn excluding_a_selected_step_moves_the_selection() {
        let m = random_matrix(12, 8);
        let first = select_salient(12, 4, &m, &Constraints::none()).unwrap();
        let victim = first.steps[1];
        let c = Constraints::new(BTreeSet::new(), [victim].into());
        let second = select_salient(12, 4, &m, &c).unwrap();
        assert!(!second.steps.contains(&victim));
    }

    #[test]
    fn lexicographic_tie_break() {
        // Every selection costs the same; the smallest sequence wins.
        let flat = CostMatrix::from_fn(8, |_, _| 1.0);
        let s = select_salient(8, 4, &flat, &Constraints::none()).unwrap();
        assert_eq!(s.steps, vec![0, 1, 2, 7]);
        assert_eq!(
            brute_force_select(8, 4, &flat, &Constraints::none()).unwrap(),
            s
        );
    }

    #[test]
    fn infeasible_constraints() {
        let m = random_matrix(6, 0);
        let none = BTreeSet::new;
        let cases = [
            (6, 1, Constraints::none()),
            (6, 7, Constraints::none()),
            (6, 3, Constraints::new([1, 2].into(), none())),
            (6, 3, Constraints::new(none(), [0].into())),
            (6, 3, Constraints::new(none(), [5].into())),
            (6, 5, Constraints::new(none(), [1, 2].into())),
            (6, 3, Constraints::new([2].into(), [2].into())),
        ];
        for (n, k, c) in cases {
            assert!(
                matches!(select_salient(n, k, &m, &c), Err(Error::Constraint { .. })),
                "n={n} k={k} {c:?}"
            );
        }
    }

    #[test]
    fn pure_distance_gives_even_spacing() {
        let (n, k) = (21, 5);
        let w = |i: usize, j: usize| distance_cost(i, j, n, k, 1.0, 1.0);
        let dp = select_salient(n, k, &w, &Constraints::none()).unwrap();
        assert_eq!(dp.steps, vec![0, 5, 10, 15, 20]);
        assert_eq!(
            brute_force_select(n, k, &w, &Constraints::none())
                .unwrap()
                .steps,
            dp.steps
        );
    }

    #[test]
    fn even_selection_examples() {
        assert_eq!(even_selection(5, 3).unwrap(), vec![0, 2, 4]);
        assert_eq!(even_selection(10, 2).unwrap(), vec![0, 9]);
        assert_eq!(even_selection(7, 4).unwrap(), vec![0, 2, 4, 6]);
        assert_eq!(even_selection(40, 3).unwrap(), vec![0, 20, 39]);
        assert!(even_selection(3, 4).is_err());
    }

    #[test]
    fn arc_collinear_every_second_point() {
        let pts: Vec<[f64; 2]> = (0..7).map(|i| [0.2 * i as f64, 0.0]).collect();
        let th = ArcThresholds {
            eps: 0.3,
            theta: FRAC_PI_4,
            mix: 1.0,
        };
        assert_eq!(arc_based_selection(&pts, &th).unwrap(), vec![0, 2, 4, 6]);
    }

    #[test]
    fn arc_identical_points_keep_endpoints() {
        let pts = vec![[0.3, 0.3]; 6];
        assert_eq!(
            arc_based_selection(&pts, &ArcThresholds::default()).unwrap(),
            vec![0, 5]
        );
    }

    #[test]
    fn arc_right_angle_turn() {
        let pts = [
            [0.0, 0.0],
            [0.001, 0.0],
            [0.002, 0.0],
            [0.002, 0.001],
            [0.002, 0.002],
        ];
        let th = ArcThresholds {
            eps: 0.3,
            theta: FRAC_PI_4,
            mix: 0.0,
        };
        assert_eq!(arc_based_selection(&pts, &th).unwrap(), vec![0, 2, 4]);
        assert!(arc_based_selection(&pts[..1], &th).is_err());
    }

    #[test]
    fn params_validation() {
        let ok = SelectionParams::new(FocusRange::new(0, 9), 3, 0.6, 0.4);
        assert!(ok.validate(10).is_ok());
        let bad = SelectionParams {
            beta: 0.6,
            ..ok.clone()
        };
        let err = bad.validate(10).unwrap_err();
        assert_eq!(err.fields(), &["alpha".to_string(), "beta".to_string()]);
        let outside = SelectionParams {
            pinned: [12].into(),
            ..ok.clone()
        };
        assert!(outside.validate(20).is_err());
        let shifted = SelectionParams {
            range: FocusRange::new(5, 14),
            pinned: [7].into(),
            excluded: [9].into(),
            ..ok
        };
        let (p, e) = shifted.relative_sets().unwrap();
        assert_eq!((p, e), ([2].into(), [4].into()));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<usize>, Vec<usize>)> {
            (3usize..12).prop_flat_map(|n| {
                (
                    Just(n),
                    2usize..=n.min(6),
                    proptest::collection::vec(0.0f64..2.0, n * n),
                    proptest::collection::vec(1..n - 1, 0..2),
                    proptest::collection::vec(1..n - 1, 0..3),
                )
            })
        }

        proptest! {
            #[test]
            fn dp_equals_enumeration((n, k, raw, pins, excl) in instance()) {
                let m = CostMatrix::from_fn(n, |i, j| raw[i * n + j]);
                let pinned: BTreeSet<usize> = pins.into_iter().collect();
                let excluded: BTreeSet<usize> =
                    excl.into_iter().filter(|t| !pinned.contains(t)).collect();
                let c = Constraints::new(pinned.clone(), excluded.clone());
                match (select_salient(n, k, &m, &c), brute_force_select(n, k, &m, &c)) {
                    (Ok(dp), Ok(bf)) => {
                        prop_assert_eq!(&dp, &bf);
                        prop_assert!(dp.steps.windows(2).all(|w| w[0] < w[1]));
                        prop_assert!(pinned.iter().all(|p| dp.steps.contains(p)));
                        prop_assert!(dp.steps.iter().all(|s| !excluded.contains(s)));
                        prop_assert_eq!(dp.steps.len(), k);
                    }
                    (Err(_), Err(_)) => {}
                    (a, b) => prop_assert!(false, "dp {:?} vs brute force {:?}", a, b),
                }
            }

            #[test]
            fn dp_is_deterministic((n, k, raw, _p, _e) in instance()) {
                let m = CostMatrix::from_fn(n, |i, j| raw[i * n + j]);
                let a = select_salient(n, k, &m, &Constraints::none()).unwrap();
                let b = select_salient(n, k, &m, &Constraints::none()).unwrap();
                prop_assert_eq!(a.steps, b.steps);
                prop_assert_eq!(a.total_cost.to_bits(), b.total_cost.to_bits());
            }

            #[test]
            fn even_selection_is_strictly_increasing(n in 2usize..500, k in 2usize..50) {
                prop_assume!(k <= n);
                let s = even_selection(n, k).unwrap();
                prop_assert_eq!(s.len(), k);
                prop_assert_eq!((s[0], s[k - 1]), (0, n - 1));
                prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
