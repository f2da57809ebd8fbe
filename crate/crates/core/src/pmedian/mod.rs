//! p-median facility location.
//!
//! Model: choose `m` of `n` candidate regions to open and assign each region
//! to one open region, minimizing `sum_i a_i * d[i][assigned(i)]`:
//!
//! ```text
//! min  sum_ij a_i d_ij x_ij
//! s.t. sum_j x_ij = 1          for every i
//!      x_ij <= x_jj            for every i != j
//!      sum_j x_jj = m
//!      x_ij in {0, 1}
//! ```
//!
//! Solvers: exhaustive enumeration (small instances, used as an oracle),
//! greedy construction with vertex-substitution local search, and an exact
//! branch-and-bound driven by a Lagrangian bound on the assignment rows.

mod bnb;
mod heuristic;
mod io;

use serde::{Deserialize, Serialize};

pub use bnb::{solve, solve_with_stats, NodeTrace, SolveOptions, SolveStats};
pub use heuristic::solve_heuristic;
pub use io::{read_instance, read_solution, write_instance, write_solution, AssignmentRow, SolutionFile};


use crate::costmatrix::CostMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PMedianInstance {
    pub m: usize,
    /// Demand weight of each region (`a_i`).
    pub weights: Vec<f64>,
    /// Travel cost from region `i` to facility `j` (`d_ij`).
    pub costs: CostMatrix,
    /// External id of each region.
    pub labels: Vec<usize>,
}

impl PMedianInstance {
    pub fn new(m: usize, weights: Vec<f64>, costs: CostMatrix, labels: Vec<usize>) -> Result<Self> {
        let n = weights.len();
        costs.expect_dim(n)?;
        if labels.len() != n {
            return Err(Error::Dimension { expected: n, found: labels.len() });
        }
        if m == 0 || m > n {
            return Err(Error::validation(format!("need 1 <= m <= n (m = {m}, n = {n})")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::validation(format!("invalid region weight {w}")));
        }
        costs.validate()?;
        Ok(PMedianInstance { m, weights, costs, labels })
    }

    /// Instance labelled `0..n`.
    pub fn unlabelled(m: usize, weights: Vec<f64>, costs: CostMatrix) -> Result<Self> {
        let labels = (0..weights.len()).collect();
        Self::new(m, weights, costs, labels)
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn with_m(&self, m: usize) -> Result<Self> {
        Self::new(m, self.weights.clone(), self.costs.clone(), self.labels.clone())
    }

    #[inline]
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.costs.get(i, j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proof {
    Exact,
    HeuristicWithGap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacilitySolution {
    /// Open region indices, ascending.
    pub open: Vec<usize>,
    /// Facility index serving each region.
    pub assignment: Vec<usize>,
    pub objective: f64,
    pub proof: Proof,
    /// Best known lower bound on the optimum.
    pub lower_bound: f64,
    /// `(objective - lower_bound) / objective`, 0 when the objective is 0.
    pub gap: f64,
}

impl FacilitySolution {
    pub fn is_open(&self, j: usize) -> bool {
        self.open.binary_search(&j).is_ok()
    }
}

/// Assigns every region to its cheapest open facility; open regions serve
/// themselves and remaining ties go to the lowest index. Returns the
/// assignment and its objective.
pub fn assign(inst: &PMedianInstance, open: &[usize]) -> (Vec<usize>, f64) {
    let n = inst.n();
    let mut is_open = vec![false; n];
    for &j in open {
        is_open[j] = true;
    }
    let mut sorted: Vec<usize> = open.to_vec();
    sorted.sort_unstable();
    let mut assignment = Vec::with_capacity(n);
    let mut objective = 0.0;
    for i in 0..n {
        let j = if is_open[i] {
            i
        } else {
            let mut best = sorted[0];
            for &j in &sorted[1..] {
                if inst.cost(i, j) < inst.cost(i, best) {
                    best = j;
                }
            }
            best
        };
        assignment.push(j);
        objective += inst.weights[i] * inst.cost(i, j);
    }
    (assignment, objective)
}

pub(crate) fn solution_for(inst: &PMedianInstance, open: &[usize], proof: Proof, lower_bound: f64) -> FacilitySolution {
    let mut open = open.to_vec();
    open.sort_unstable();
    open.dedup();
    let (assignment, objective) = assign(inst, &open);
    let lower_bound = lower_bound.min(objective);
    let gap = if objective > 0.0 {
        ((objective - lower_bound) / objective).max(0.0)
    } else {
        0.0
    };
    FacilitySolution {
        open,
        assignment,
        objective,
        proof,
        lower_bound,
        gap,
    }
}

/// Scores a given facility set without optimizing it.
pub fn evaluate_fixed(inst: &PMedianInstance, open: &[usize]) -> Result<FacilitySolution> {
    if open.is_empty() {
        return Err(Error::validation("facility set is empty"));
    }
    if let Some(&j) = open.iter().find(|&&j| j >= inst.n()) {
        return Err(Error::validation(format!("facility index {j} out of range 0..{}", inst.n())));
    }
    let mut s = solution_for(inst, open, Proof::HeuristicWithGap, f64::NEG_INFINITY);
    s.lower_bound = s.objective;
    s.gap = 0.0;
    Ok(s)
}

/// Default cap on enumerated subsets for [`solve_exact_bruteforce`].
pub const BRUTEFORCE_BUDGET: u128 = 2_000_000;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        match acc.checked_mul((n - i) as u128) {
            Some(v) => acc = v / (i + 1) as u128,
            None => return u128::MAX,
        }
    }
    acc
}

/// Enumerates every `m`-subset in lexicographic order and keeps the first
/// one with the smallest objective.
pub fn solve_exact_bruteforce(inst: &PMedianInstance, budget: u128) -> Result<FacilitySolution> {
    let (n, m) = (inst.n(), inst.m);
    let subsets = binomial(n, m);
    if subsets > budget {
        return Err(Error::Budget { subsets, budget });
    }
    let mut idx: Vec<usize> = (0..m).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let (_, obj) = assign(inst, &idx);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, idx.clone()));
        }
        // Advance to the next combination.
        let mut k = m;
        while k > 0 && idx[k - 1] == n - m + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        idx[k - 1] += 1;
        for t in k..m {
            idx[t] = idx[t - 1] + 1;
        }
    }
    let (obj, open) = best.expect("at least one subset");
    Ok(solution_for(inst, &open, Proof::Exact, obj))
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::costmatrix::CostKind;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn matrix(rows: Vec<Vec<f64>>) -> CostMatrix {
        let dep = NaiveDate::from_ymd_opt(2018, 12, 10).unwrap().and_hms_opt(10, 0, 0).unwrap();
        CostMatrix::from_rows(CostKind::DistanceM, &rows, "test", dep).unwrap()
    }

    /// Random planar instance; `asymmetric` perturbs each direction separately.
    pub fn random_instance(seed: u64, n: usize, m: usize, asymmetric: bool) -> PMedianInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            0.0
                        } else {
                            let d = ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt();
                            if asymmetric {
                                d * rng.gen_range(0.8..1.25)
                            } else {
                                d
                            }
                        }
                    })
                    .collect()
            })
            .collect();
        let weights = (0..n)
            .map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.5..50.0) })
            .collect();
        PMedianInstance::unlabelled(m, weights, matrix(rows)).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn all_open_costs_nothing() {
        let inst = random_instance(1, 3, 3, false);
        let s = solve_exact_bruteforce(&inst, BRUTEFORCE_BUDGET).unwrap();
        assert_eq!(s.objective, 0.0);
        assert_eq!(s.assignment, vec![0, 1, 2]);
        assert_eq!(s.proof, Proof::Exact);
    }

    #[test]
    fn heavier_region_attracts_single_facility() {
        let c = 7.0;
        let inst = PMedianInstance::unlabelled(1, vec![1.0, 9.0], matrix(vec![vec![0.0, c], vec![c, 0.0]])).unwrap();
        let s = solve_exact_bruteforce(&inst, BRUTEFORCE_BUDGET).unwrap();
        assert_eq!(s.open, vec![1]);
        assert_eq!(s.objective, c);
    }

    #[test]
    fn zero_weight_region_never_changes_objective() {
        let mut inst = random_instance(3, 7, 2, true);
        inst.weights[4] = 0.0;
        let s = solve_exact_bruteforce(&inst, BRUTEFORCE_BUDGET).unwrap();
        for &j in &s.open {
            let mut assignment = s.assignment.clone();
            assignment[4] = j;
            let obj: f64 = (0..inst.n()).map(|i| inst.weights[i] * inst.cost(i, assignment[i])).sum();
            assert!((obj - s.objective).abs() <= 1e-12 * s.objective.max(1.0));
        }
    }

    #[test]
    fn budget_is_enforced() {
        let inst = random_instance(2, 30, 10, false);
        assert!(matches!(
            solve_exact_bruteforce(&inst, 1000),
            Err(Error::Budget { subsets: 30_045_015, budget: 1000 })
        ));
    }

    #[test]
    fn evaluate_fixed_rules() {
        let inst = random_instance(4, 8, 3, true);
        let all: Vec<usize> = (0..8).collect();
        assert_eq!(evaluate_fixed(&inst, &all).unwrap().objective, 0.0);
        assert!(evaluate_fixed(&inst, &[]).is_err());
        assert!(evaluate_fixed(&inst, &[8]).is_err());
        let s = evaluate_fixed(&inst, &[5, 1]).unwrap();
        assert_eq!(s.open, vec![1, 5]);
        assert_eq!(s.assignment[1], 1);
        assert_eq!(s.assignment[5], 5);
        for i in 0..8 {
            let best = [1, 5].iter().map(|&j| inst.cost(i, j)).fold(f64::INFINITY, f64::min);
            assert_eq!(inst.cost(i, s.assignment[i]), best);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let inst = PMedianInstance::unlabelled(
            2,
            vec![1.0; 3],
            matrix(vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]),
        )
        .unwrap();
        let s = evaluate_fixed(&inst, &[2, 1]).unwrap();
        assert_eq!(s.assignment, vec![1, 1, 2]);
        let b = solve_exact_bruteforce(&inst, BRUTEFORCE_BUDGET).unwrap();
        assert_eq!(b.open, vec![0, 1]);
    }

    #[test]
    fn instance_validation() {
        let m = matrix(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(PMedianInstance::unlabelled(0, vec![1.0, 1.0], m.clone()).is_err());
        assert!(PMedianInstance::unlabelled(3, vec![1.0, 1.0], m.clone()).is_err());
        assert!(PMedianInstance::unlabelled(1, vec![1.0, -1.0], m.clone()).is_err());
        assert!(PMedianInstance::unlabelled(1, vec![1.0, 1.0, 1.0], m).is_err());
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(200, 20), 1_613_587_787_967_350_073_386_147_640);
        assert_eq!(binomial(12, 4), 495);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(400, 200), u128::MAX);
    }
}
