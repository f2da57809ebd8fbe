//! Exact p-median by branch-and-bound on facility-open decisions.
//!
//! Bound: the assignment rows `sum_j x_ij = 1` are dualized with multipliers
//! `lambda_i`. For fixed multipliers the relaxation decomposes by facility:
//! `rho_j = sum_i min(0, a_i d_ij - lambda_i)` and the bound is
//! `sum_i lambda_i` plus the `m` smallest `rho_j` consistent with the
//! branching fixings. Multipliers are improved by subgradient ascent with
//! step `mu * (UB - L) / |g|^2`, halving `mu` after a run of iterations
//! without improvement. The bound also drives reduced-cost fixing: a free
//! facility whose forced opening (or closing) would lift the bound past the
//! incumbent is fixed for the whole subtree.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::heuristic::{greedy, vertex_substitution};
use super::{assign, solution_for, FacilitySolution, PMedianInstance, Proof};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Relative optimality tolerance used for pruning.
    pub epsilon: f64,
    pub max_nodes: usize,
    /// Wall-clock budget in seconds; `None` for unlimited.
    pub time_limit_s: Option<f64>,
    pub mu_start: f64,
    pub mu_halve_after: usize,
    pub max_iters_per_node: usize,
    pub min_mu: f64,
    /// Seed for the local-search scan order.
    pub seed: u64,
    /// Record every node for inspection.
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            epsilon: 1e-6,
            max_nodes: 1_000_000,
            time_limit_s: Some(600.0),
            mu_start: 2.0,
            mu_halve_after: 30,
            max_iters_per_node: 1000,
            min_mu: 1e-6,
            seed: 0,
            trace: false,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            v.push(format!("solver.epsilon must be >= 0 (got {})", self.epsilon));
        }
        if self.max_nodes == 0 {
            v.push("solver.max_nodes must be >= 1".into());
        }
        if !(self.mu_start > 0.0 && self.mu_start <= 2.0) {
            v.push(format!("solver.mu_start must be in (0, 2] (got {})", self.mu_start));
        }
        if self.max_iters_per_node == 0 {
            v.push("solver.max_iters_per_node must be >= 1".into());
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTrace {
    pub depth: usize,
    /// Fixings on entry to the node.
    pub forced_open: Vec<usize>,
    pub forced_closed: Vec<usize>,
    pub lower_bound: f64,
    /// Incumbent objective when the node finished.
    pub incumbent: f64,
    pub pruned: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub nodes: usize,
    pub subgradient_iterations: usize,
    pub root_lower_bound: f64,
    pub heuristic_objective: f64,
    pub elapsed: Duration,
    pub trace: Vec<NodeTrace>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Fix {
    Free,
    Open,
    Closed,
}

struct Node {
    fix: Vec<Fix>,
    lambda: Vec<f64>,
    bound: f64,
    depth: usize,
}

struct Relaxation {
    value: f64,
    selected: Vec<usize>,
    /// Largest rho among selected free facilities.
    rho_last: f64,
    /// Smallest rho among unselected free facilities.
    rho_next: f64,
}

struct Solver<'a> {
    inst: &'a PMedianInstance,
    n: usize,
    m: usize,
    /// Column-major weighted costs: `ct[j * n + i] = a_i * d_ij`.
    ct: Vec<f64>,
    rho: Vec<f64>,
    order: Vec<usize>,
    best_open: Vec<usize>,
    best_obj: f64,
    eps: f64,
}

impl<'a> Solver<'a> {
    fn new(inst: &'a PMedianInstance) -> Self {
        let n = inst.n();
        let mut ct = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let a = inst.weights[i];
                ct[j * n + i] = if a == 0.0 { 0.0 } else { a * inst.cost(i, j) };
            }
        }
        Solver {
            inst,
            n,
            m: inst.m,
            ct,
            rho: vec![0.0; n],
            order: Vec::with_capacity(n),
            best_open: Vec::new(),
            best_obj: f64::INFINITY,
            eps: 0.0,
        }
    }

    fn threshold(&self) -> f64 {
        self.best_obj - self.eps * self.best_obj.abs()
    }

    fn offer(&mut self, open: &[usize]) {
        let (_, obj) = assign(self.inst, open);
        if obj < self.best_obj {
            self.best_obj = obj;
            self.best_open = open.to_vec();
            self.best_open.sort_unstable();
        }
    }

    /// Evaluates the relaxation; `None` when the fixings are infeasible.
    fn relax(&mut self, fix: &[Fix], lambda: &[f64]) -> Option<Relaxation> {
        let n = self.n;
        let mut value: f64 = lambda.iter().sum();
        let mut selected = Vec::with_capacity(self.m);
        self.order.clear();
        for j in 0..n {
            if fix[j] == Fix::Closed {
                continue;
            }
            let col = &self.ct[j * n..(j + 1) * n];
            let r: f64 = col.iter().zip(lambda).map(|(c, l)| (c - l).min(0.0)).sum();
            self.rho[j] = r;
            match fix[j] {
                Fix::Open => {
                    selected.push(j);
                    value += r;
                }
                _ => self.order.push(j),
            }
        }
        if selected.len() > self.m {
            return None;
        }
        let need = self.m - selected.len();
        if self.order.len() < need {
            return None;
        }
        let rho = &self.rho;
        self.order.sort_by(|&a, &b| rho[a].total_cmp(&rho[b]).then(a.cmp(&b)));
        let mut rho_last = f64::NEG_INFINITY;
        for &j in &self.order[..need] {
            selected.push(j);
            value += rho[j];
            rho_last = rho[j];
        }
        let rho_next = self.order.get(need).map_or(f64::INFINITY, |&j| rho[j]);
        Some(Relaxation {
            value,
            selected,
            rho_last,
            rho_next,
        })
    }

    /// Fixes free facilities whose alternative branch is bounded out.
    fn reduced_cost_fixing(&self, fix: &mut [Fix], r: &Relaxation) {
        let cutoff = self.threshold();
        let need = self.order.len().min(self.m - fix.iter().filter(|f| **f == Fix::Open).count());
        if need == 0 {
            return;
        }
        for (pos, &j) in self.order.iter().enumerate() {
            if pos < need {
                if r.value - self.rho[j] + r.rho_next >= cutoff {
                    fix[j] = Fix::Open;
                }
            } else if r.value - r.rho_last + self.rho[j] >= cutoff {
                fix[j] = Fix::Closed;
            }
        }
    }

    fn subgradient(&self, selected: &[usize], lambda: &[f64], g: &mut [f64]) -> f64 {
        let n = self.n;
        g.iter_mut().for_each(|v| *v = 1.0);
        for &j in selected {
            let col = &self.ct[j * n..(j + 1) * n];
            for i in 0..n {
                if col[i] - lambda[i] < 0.0 {
                    g[i] -= 1.0;
                }
            }
        }
        g.iter().map(|v| v * v).sum()
    }

    fn initial_lambda(&self) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| self.ct[j * n + i])
                    .fold(f64::INFINITY, f64::min)
            })
            .map(|v| if v.is_finite() { v } else { 0.0 })
            .collect()
    }
}

fn fixed_lists(fix: &[Fix]) -> (Vec<usize>, Vec<usize>) {
    let open = (0..fix.len()).filter(|&j| fix[j] == Fix::Open).collect();
    let closed = (0..fix.len()).filter(|&j| fix[j] == Fix::Closed).collect();
    (open, closed)
}

/// Proves optimality within `opts.epsilon` or reports the remaining gap
/// when the node or time budget runs out.
pub fn solve(inst: &PMedianInstance, opts: &SolveOptions) -> Result<FacilitySolution> {
    solve_with_stats(inst, opts).map(|(s, _)| s)
}

pub fn solve_with_stats(inst: &PMedianInstance, opts: &SolveOptions) -> Result<(FacilitySolution, SolveStats)> {
    if let Some(issue) = opts.validate().into_iter().next() {
        return Err(crate::error::Error::Validation(issue));
    }
    let started = Instant::now();
    let deadline = opts.time_limit_s.map(|s| started + Duration::from_secs_f64(s));
    let (n, m) = (inst.n(), inst.m);
    let mut stats = SolveStats::default();

    let mut solver = Solver::new(inst);
    solver.eps = opts.epsilon;
    let start = vertex_substitution(inst, greedy(inst), opts.seed);
    solver.offer(&start);
    stats.heuristic_objective = solver.best_obj;

    if m == n || solver.best_obj == 0.0 {
        stats.root_lower_bound = solver.best_obj;
        stats.nodes = 1;
        stats.elapsed = started.elapsed();
        let sol = solution_for(inst, &solver.best_open, Proof::Exact, solver.best_obj);
        return Ok((sol, stats));
    }

    let mut stack = vec![Node {
        fix: vec![Fix::Free; n],
        lambda: solver.initial_lambda(),
        bound: f64::NEG_INFINITY,
        depth: 0,
    }];
    // Smallest bound among pruned nodes; the optimum cannot lie below it.
    let mut pruned_floor = f64::INFINITY;
    let mut g = vec![0.0; n];
    let mut exhausted = true;

    while let Some(mut node) = stack.pop() {
        let out_of_time = deadline.is_some_and(|d| Instant::now() >= d);
        if stats.nodes >= opts.max_nodes || out_of_time {
            stack.push(node);
            exhausted = false;
            break;
        }
        stats.nodes += 1;
        let entry = opts.trace.then(|| fixed_lists(&node.fix));

        let mut lambda = node.lambda.clone();
        let mut best_lambda = lambda.clone();
        let mut bound = node.bound;
        let mut mu = opts.mu_start;
        let mut stale = 0;
        let mut last_selected: Vec<usize> = Vec::new();
        let mut pruned = false;
        let mut feasible = true;
        for _ in 0..opts.max_iters_per_node {
            stats.subgradient_iterations += 1;
            let Some(r) = solver.relax(&node.fix, &lambda) else {
                feasible = false;
                break;
            };
            if r.value > bound {
                if r.value > bound + 1e-12 * bound.abs() {
                    stale = 0;
                } else {
                    stale += 1;
                }
                bound = r.value;
                best_lambda.copy_from_slice(&lambda);
            } else {
                stale += 1;
            }
            if r.selected != last_selected {
                solver.offer(&r.selected);
                last_selected.clone_from(&r.selected);
            }
            if bound >= solver.threshold() {
                pruned = true;
                break;
            }
            solver.reduced_cost_fixing(&mut node.fix, &r);
            let norm2 = solver.subgradient(&r.selected, &lambda, &mut g);
            if norm2 == 0.0 {
                // The relaxed solution is feasible and complementary: node solved.
                pruned = true;
                break;
            }
            if stale >= opts.mu_halve_after {
                mu /= 2.0;
                stale = 0;
                if mu < opts.min_mu {
                    break;
                }
            }
            let step = mu * (solver.best_obj - r.value).max(0.0) / norm2;
            if step == 0.0 {
                break;
            }
            for (l, gi) in lambda.iter_mut().zip(&g) {
                *l += step * gi;
            }
        }
        if stats.nodes == 1 {
            stats.root_lower_bound = bound;
        }

        let (n_open, n_free) = node.fix.iter().fold((0, 0), |(o, f), x| match x {
            Fix::Open => (o + 1, f),
            Fix::Free => (o, f + 1),
            Fix::Closed => (o, f),
        });
        if feasible && !pruned && (n_open == m || n_open + n_free == m) {
            // Leaf: the open set is determined.
            let open: Vec<usize> = (0..n).filter(|&j| node.fix[j] != Fix::Closed).take(m).collect();
            let open: Vec<usize> = if n_open == m {
                (0..n).filter(|&j| node.fix[j] == Fix::Open).collect()
            } else {
                open
            };
            solver.offer(&open);
            let (_, obj) = assign(inst, &open);
            bound = bound.max(obj);
            pruned = true;
        }
        if !feasible {
            pruned = true;
            bound = f64::INFINITY;
        }

        if let Some((forced_open, forced_closed)) = entry {
            stats.trace.push(NodeTrace {
                depth: node.depth,
                forced_open,
                forced_closed,
                lower_bound: bound,
                incumbent: solver.best_obj,
                pruned,
            });
        }
        if pruned || bound >= solver.threshold() {
            pruned_floor = pruned_floor.min(bound);
            continue;
        }

        // Branch on the least attractive selected free facility.
        let Some(r) = solver.relax(&node.fix, &best_lambda) else {
            continue;
        };
        let pivot = r
            .selected
            .iter()
            .copied()
            .filter(|&j| node.fix[j] == Fix::Free)
            .max_by(|&a, &b| solver.rho[a].total_cmp(&solver.rho[b]).then(b.cmp(&a)));
        let Some(pivot) = pivot else {
            // Every selected facility is already forced open.
            pruned_floor = pruned_floor.min(bound);
            continue;
        };
        let mut closed = node.fix.clone();
        closed[pivot] = Fix::Closed;
        node.fix[pivot] = Fix::Open;
        stack.push(Node {
            fix: closed,
            lambda: best_lambda.clone(),
            bound,
            depth: node.depth + 1,
        });
        stack.push(Node {
            fix: node.fix,
            lambda: best_lambda,
            bound,
            depth: node.depth + 1,
        });
    }

    let mut lower = pruned_floor;
    for node in &stack {
        lower = lower.min(node.bound);
    }
    let lower = lower.min(solver.best_obj);
    let proof = if exhausted { Proof::Exact } else { Proof::HeuristicWithGap };
    stats.elapsed = started.elapsed();
    let sol = solution_for(inst, &solver.best_open, proof, lower);
    Ok((sol, stats))
}
