//! Depth-first branch and cut over the simplex tableau.
//!
//! Nodes share a single [`RevisedSimplex`]: moving between nodes only
//! changes column bounds and the basis is re-optimized with the dual simplex.
//! Rows found violated in the lazy pool and rows returned by the
//! [`CutCallback`] are appended globally and stay for the rest of the search.
//! Callbacks may also separate valid inequalities at fractional nodes.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::lp::{Constraint, LinearProgram, LpError, RevisedSimplex, SimplexOptions, TableauStatus, FEASIBILITY_TOL};

/// Distance from the nearest integer below which a value counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Default wall-clock limit for a search.
pub const DEFAULT_TIME_LIMIT: Duration = Duration::from_secs(500);
const LAZY_TOL: f64 = 1e-6;
/// Separation rounds at the root and at every other node.
const ROOT_ROUNDS: usize = 50;
const NODE_ROUNDS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MipError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("integrality markers cover {markers} variables but the program has {vars}")]
    Arity { markers: usize, vars: usize },
    #[error("big-M constant must be positive, got {0}")]
    BigM(f64),
    #[error("variable {var} has integral value {value}; branching needs a fractional value")]
    NotFractional { var: usize, value: f64 },
    #[error("the relaxation is unbounded")]
    Unbounded,
    #[error("time limit of {0:?} reached before any feasible solution was found")]
    TimeLimitWithoutIncumbent(Duration),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipProblem {
    pub lp: LinearProgram,
    pub integer: Vec<bool>,
    /// Rows that are valid for the problem but only appended to the
    /// relaxation once a node solution violates them.
    pub lazy: Vec<Constraint>,
    pub big_m: f64,
    pub time_limit: Option<Duration>,
    /// A known feasible point and its objective, used as the first incumbent.
    pub warm_start: Option<(Vec<f64>, f64)>,
}

impl MipProblem {
    pub fn new(lp: LinearProgram, integer: Vec<bool>) -> Self {
        Self {
            lp,
            integer,
            lazy: Vec::new(),
            big_m: 1e6,
            time_limit: Some(DEFAULT_TIME_LIMIT),
            warm_start: None,
        }
    }

    pub fn validate(&self) -> Result<(), MipError> {
        self.lp.validate()?;
        if self.integer.len() != self.lp.num_vars() {
            return Err(MipError::Arity {
                markers: self.integer.len(),
                vars: self.lp.num_vars(),
            });
        }
        if !(self.big_m > 0.0) {
            return Err(MipError::BigM(self.big_m));
        }
        if let Some((x, _)) = &self.warm_start {
            if x.len() != self.lp.num_vars() {
                return Err(MipError::Arity {
                    markers: x.len(),
                    vars: self.lp.num_vars(),
                });
            }
        }
        let probe = LinearProgram {
            constraints: self.lazy.clone(),
            ..self.lp.clone()
        };
        probe.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    /// The time limit stopped the search; the incumbent is returned.
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipSolution {
    pub status: MipStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub nodes: usize,
    pub elapsed: Duration,
    pub pivots: usize,
    pub callback_cuts: usize,
    /// Rows returned by [`CutCallback::separate`] at fractional nodes.
    pub separated_cuts: usize,
    pub lazy_rows: usize,
    /// Every row appended during the search, lazy and callback alike.
    pub pool: Vec<Constraint>,
}

/// Answer of a [`CutCallback`] for one integral relaxation solution.
///
/// With no cuts the point is accepted. With cuts the point is rejected and
/// the rows are appended before the node is solved again. In both cases
/// `objective`, when present, is the true objective of the point, which may
/// exceed the relaxation value; a rejected point carrying an objective is
/// still recorded as an incumbent candidate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Verdict {
    pub cuts: Vec<Constraint>,
    pub objective: Option<f64>,
}

impl Verdict {
    pub fn accept() -> Self {
        Self::default()
    }

    pub fn accept_with(objective: f64) -> Self {
        Self {
            cuts: Vec::new(),
            objective: Some(objective),
        }
    }

    pub fn reject(cuts: Vec<Constraint>) -> Self {
        Self { cuts, objective: None }
    }

    pub fn is_accept(&self) -> bool {
        self.cuts.is_empty()
    }
}

pub trait CutCallback {
    fn on_integral(&mut self, x: &[f64], objective: f64) -> Verdict;

    /// Valid rows violated by the fractional relaxation point `x`. Every
    /// returned row must cut `x` off, otherwise the node loops until its
    /// round budget is spent.
    fn separate(&mut self, _x: &[f64]) -> Vec<Constraint> {
        Vec::new()
    }
}

impl<F: FnMut(&[f64], f64) -> Verdict> CutCallback for F {
    fn on_integral(&mut self, x: &[f64], objective: f64) -> Verdict {
        self(x, objective)
    }
}

/// Callback that accepts every integral point.
#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAll;

impl CutCallback for AcceptAll {
    fn on_integral(&mut self, _x: &[f64], _objective: f64) -> Verdict {
        Verdict::accept()
    }
}

/// A search node: the bound tightenings applied on top of the root box.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Node {
    pub fixes: Vec<(usize, f64, f64)>,
    /// Relaxation value of the parent, a lower bound for this node.
    pub bound: f64,
    pub depth: usize,
}

/// Splits `node` on `var` at `value` into the `var <= floor` and
/// `var >= ceil` children, returned as `(down, up)`.
pub fn branch(
    node: &Node,
    var: usize,
    value: f64,
    lower: f64,
    upper: f64,
    bound: f64,
) -> Result<(Node, Node), MipError> {
    let fl = value.floor();
    if value - fl <= INTEGRALITY_TOL || fl + 1.0 - value <= INTEGRALITY_TOL {
        return Err(MipError::NotFractional { var, value });
    }
    let mut down = Node {
        fixes: node.fixes.clone(),
        bound,
        depth: node.depth + 1,
    };
    let mut up = down.clone();
    down.fixes.push((var, lower, fl));
    up.fixes.push((var, fl + 1.0, upper));
    Ok((down, up))
}

fn most_fractional(x: &[f64], integer: &[bool]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    let mut best_frac = INTEGRALITY_TOL;
    for (j, (&v, &is_int)) in x.iter().zip(integer).enumerate() {
        if !is_int {
            continue;
        }
        let f = v - v.floor();
        let dist = f.min(1.0 - f);
        if dist > best_frac {
            best_frac = dist;
            best = Some((j, v));
        }
    }
    best
}

fn prune_tol(incumbent: f64) -> f64 {
    1e-9 * incumbent.abs().max(1.0)
}

struct Search<'a, C: CutCallback> {
    p: &'a MipProblem,
    cb: C,
    tab: RevisedSimplex,
    lazy_left: Vec<Constraint>,
    pool: Vec<Constraint>,
    current: Vec<(f64, f64)>,
    start: Instant,
    callback_cuts: usize,
    separated_cuts: usize,
    lazy_rows: usize,
}

enum NodeResult {
    Infeasible,
    Optimal(f64),
    TimedOut,
}

impl<C: CutCallback> Search<'_, C> {
    fn timed_out(&self) -> bool {
        self.p.time_limit.is_some_and(|limit| self.start.elapsed() >= limit)
    }

    fn apply_bounds(&mut self, node: &Node) {
        let n = self.p.lp.num_vars();
        let mut target: Vec<(f64, f64)> = (0..n).map(|j| (self.p.lp.lower[j], self.p.lp.upper[j])).collect();
        for &(j, lo, hi) in &node.fixes {
            target[j] = (lo, hi);
        }
        for j in 0..n {
            if target[j] != self.current[j] {
                self.tab.set_bounds(j, target[j].0, target[j].1);
                self.current[j] = target[j];
            }
        }
    }

    fn reoptimize(&mut self) -> Result<TableauStatus, MipError> {
        let status = match self.tab.reoptimize() {
            Ok(s) => s,
            Err(LpError::IterationLimit(_)) | Err(LpError::SingularBasis) => self.tab.restart()?,
            Err(e) => return Err(e.into()),
        };
        if status == TableauStatus::Optimal && self.tab.residual() > 1e-7 {
            self.tab.refactor().or_else(|_| self.tab.restart().map(|_| ()))?;
            return Ok(self.tab.reoptimize()?);
        }
        Ok(status)
    }

    fn add_violated_lazy(&mut self) -> bool {
        let x = self.tab.values();
        let mut added = Vec::new();
        self.lazy_left.retain(|c| {
            if c.scaled_violation(x) > LAZY_TOL {
                added.push(c.clone());
                false
            } else {
                true
            }
        });
        let any = !added.is_empty();
        for c in added {
            self.tab.add_row(&c);
            self.pool.push(c);
            self.lazy_rows += 1;
        }
        any
    }

    /// Solves the node relaxation, closing it under the lazy pool.
    fn solve_node(&mut self, incumbent: f64) -> Result<NodeResult, MipError> {
        loop {
            if self.timed_out() {
                return Ok(NodeResult::TimedOut);
            }
            match self.reoptimize()? {
                TableauStatus::Infeasible => return Ok(NodeResult::Infeasible),
                TableauStatus::Unbounded => return Err(MipError::Unbounded),
                TableauStatus::Optimal => {}
            }
            let z = self.tab.objective_value();
            if z >= incumbent - prune_tol(incumbent) {
                return Ok(NodeResult::Optimal(z));
            }
            if !self.add_violated_lazy() {
                return Ok(NodeResult::Optimal(z));
            }
        }
    }
}

/// Minimizes the problem, consulting `cb` on every integral relaxation
/// solution that survives bound pruning.
pub fn solve_mip<C: CutCallback>(p: &MipProblem, cb: C) -> Result<MipSolution, MipError> {
    p.validate()?;
    let start = Instant::now();
    let n = p.lp.num_vars();
    let tab = RevisedSimplex::new(&p.lp, SimplexOptions::default());
    let mut s = Search {
        p,
        cb,
        tab,
        lazy_left: p.lazy.clone(),
        pool: Vec::new(),
        current: (0..n).map(|j| (p.lp.lower[j], p.lp.upper[j])).collect(),
        start,
        callback_cuts: 0,
        separated_cuts: 0,
        lazy_rows: 0,
    };
    let root_status = match s.tab.solve() {
        Ok(st) => st,
        Err(LpError::IterationLimit(_)) => s.tab.restart()?,
        Err(e) => return Err(e.into()),
    };
    let mut incumbent = f64::INFINITY;
    let mut best: Option<Vec<f64>> = None;
    if let Some((x, value)) = &p.warm_start {
        incumbent = *value;
        best = Some(x.clone());
    }
    let mut nodes = 0;
    let mut timed_out = false;
    match root_status {
        TableauStatus::Unbounded => return Err(MipError::Unbounded),
        TableauStatus::Infeasible => {}
        _ => {
            let mut stack = vec![Node {
                fixes: Vec::new(),
                bound: f64::NEG_INFINITY,
                depth: 0,
            }];
            'nodes: while let Some(node) = stack.pop() {
                if node.bound >= incumbent - prune_tol(incumbent) {
                    continue;
                }
                if s.timed_out() {
                    timed_out = true;
                    break;
                }
                nodes += 1;
                s.apply_bounds(&node);
                let mut rounds = if node.depth == 0 { ROOT_ROUNDS } else { NODE_ROUNDS };
                loop {
                    let z = match s.solve_node(incumbent)? {
                        NodeResult::Infeasible => continue 'nodes,
                        NodeResult::TimedOut => {
                            timed_out = true;
                            break 'nodes;
                        }
                        NodeResult::Optimal(z) => z,
                    };
                    if z >= incumbent - prune_tol(incumbent) {
                        continue 'nodes;
                    }
                    let x = s.tab.values().to_vec();
                    if let Some((var, value)) = most_fractional(&x, &p.integer) {
                        if rounds > 0 {
                            rounds -= 1;
                            let rows = s.cb.separate(&x);
                            if !rows.is_empty() {
                                for c in rows {
                                    s.tab.add_row(&c);
                                    s.pool.push(c);
                                    s.separated_cuts += 1;
                                }
                                continue;
                            }
                        }
                        let (lo, hi) = s.current[var];
                        let (down, up) = branch(&node, var, value, lo, hi, z)?;
                        stack.push(down);
                        stack.push(up);
                        continue 'nodes;
                    }
                    let mut point = x;
                    for (v, &is_int) in point.iter_mut().zip(&p.integer) {
                        if is_int {
                            *v = v.round();
                        }
                    }
                    let verdict = s.cb.on_integral(&point, z);
                    if verdict.is_accept() || verdict.objective.is_some() {
                        let value = verdict.objective.unwrap_or(z);
                        if value < incumbent {
                            incumbent = value;
                            best = Some(point.clone());
                        }
                    }
                    if verdict.is_accept() {
                        continue 'nodes;
                    }
                    for c in verdict.cuts {
                        debug_assert!(
                            c.violation(&point) > FEASIBILITY_TOL,
                            "callback cut is not violated by the triggering point"
                        );
                        s.tab.add_row(&c);
                        s.pool.push(c);
                        s.callback_cuts += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let status = match (&best, timed_out) {
        (None, true) => {
            return Err(MipError::TimeLimitWithoutIncumbent(
                p.time_limit.unwrap_or(DEFAULT_TIME_LIMIT),
            ))
        }
        (None, false) => MipStatus::Infeasible,
        (Some(_), true) => MipStatus::Feasible,
        (Some(_), false) => MipStatus::Optimal,
    };
    Ok(MipSolution {
        status,
        objective: if best.is_some() { incumbent } else { f64::NAN },
        values: best.unwrap_or_default(),
        nodes,
        elapsed,
        pivots: s.tab.pivots(),
        callback_cuts: s.callback_cuts,
        separated_cuts: s.separated_cuts,
        lazy_rows: s.lazy_rows,
        pool: s.pool,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{Constraint, LinearProgram};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn binary_program(obj: &[f64], rows: Vec<Constraint>) -> MipProblem {
        let n = obj.len();
        let lp = LinearProgram {
            objective: obj.to_vec(),
            constraints: rows,
            lower: vec![0.0; n],
            upper: vec![1.0; n],
        };
        MipProblem::new(lp, vec![true; n])
    }

    #[test]
    fn knapsack_picks_dominant_item() {
        let p = binary_program(&[-3.0, -2.0], vec![Constraint::le(vec![(0, 1.0), (1, 1.0)], 1.0)]);
        let sol = solve_mip(&p, AcceptAll).unwrap();
        assert_eq!(sol.status, MipStatus::Optimal);
        assert_eq!(sol.values, vec![1.0, 0.0]);
        assert_eq!(sol.objective, -3.0);
    }

    #[test]
    fn totally_unimodular_flow_needs_no_branching() {
        // Shortest path 0 -> 3 on a small digraph as a flow LP.
        let arcs = [(0, 1, 4.0), (0, 2, 1.0), (2, 1, 1.0), (1, 3, 1.0), (2, 3, 5.0)];
        let mut lp = LinearProgram::new();
        for &(_, _, c) in &arcs {
            lp.add_var(c, 0.0, 1.0);
        }
        for v in 0..4 {
            let coeffs: Vec<(usize, f64)> = arcs
                .iter()
                .enumerate()
                .filter_map(|(e, &(a, b, _))| match (a == v, b == v) {
                    (true, _) => Some((e, 1.0)),
                    (_, true) => Some((e, -1.0)),
                    _ => None,
                })
                .collect();
            let rhs = match v {
                0 => 1.0,
                3 => -1.0,
                _ => 0.0,
            };
            lp.add_constraint(Constraint::eq(coeffs, rhs));
        }
        let p = MipProblem::new(lp, vec![true; arcs.len()]);
        let sol = solve_mip(&p, AcceptAll).unwrap();
        assert_eq!(sol.status, MipStatus::Optimal);
        assert_eq!(sol.nodes, 1);
        assert!((sol.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn branch_splits_on_floor_and_ceil() {
        let root = Node::default();
        let (down, up) = branch(&root, 0, 0.4, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(down.fixes, vec![(0, 0.0, 0.0)]);
        assert_eq!(up.fixes, vec![(0, 1.0, 1.0)]);
        let (down, up) = branch(&root, 2, 2.5, 0.0, 10.0, 1.0).unwrap();
        assert_eq!(down.fixes, vec![(2, 0.0, 2.0)]);
        assert_eq!(up.fixes, vec![(2, 3.0, 10.0)]);
        assert!(matches!(
            branch(&root, 1, 3.0, 0.0, 10.0, 0.0),
            Err(MipError::NotFractional { var: 1, .. })
        ));
    }

    fn enumerate(p: &MipProblem) -> Option<f64> {
        let n = p.lp.num_vars();
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << n) {
            let x: Vec<f64> = (0..n).map(|j| f64::from((mask >> j) & 1)).collect();
            let ok = p.lp.constraints.iter().chain(&p.lazy).all(|c| c.violation(&x) <= 1e-9);
            if ok {
                let v = p.lp.objective_value(&x);
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
        best
    }

    fn random_binary_program(rng: &mut ChaCha8Rng) -> MipProblem {
        let n = rng.random_range(2..=10);
        let m = rng.random_range(1..=6);
        let obj: Vec<f64> = (0..n).map(|_| rng.random_range(-10..=10) as f64).collect();
        let mut rows = Vec::new();
        for _ in 0..m {
            let mut coeffs = Vec::new();
            for j in 0..n {
                if rng.random_bool(0.6) {
                    coeffs.push((j, rng.random_range(-5..=8) as f64));
                }
            }
            let rhs = rng.random_range(-3..=10) as f64;
            rows.push(if rng.random_bool(0.8) {
                Constraint::le(coeffs, rhs)
            } else {
                Constraint::ge(coeffs, rhs - 4.0)
            });
        }
        let mut p = binary_program(&obj, rows);
        if rng.random_bool(0.5) {
            let k = p.lp.constraints.len() / 2;
            p.lazy = p.lp.constraints.split_off(k);
        }
        p
    }

    #[test]
    fn random_binary_programs_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut feasible = 0;
        for case in 0..100 {
            let p = random_binary_program(&mut rng);
            let sol = solve_mip(&p, AcceptAll).unwrap();
            match enumerate(&p) {
                Some(want) => {
                    feasible += 1;
                    assert_eq!(sol.status, MipStatus::Optimal, "case {case}");
                    assert!(
                        (sol.objective - want).abs() < 1e-6,
                        "case {case}: {} vs {want}",
                        sol.objective
                    );
                    let full = LinearProgram {
                        constraints: p.lp.constraints.iter().chain(&p.lazy).cloned().collect(),
                        ..p.lp.clone()
                    };
                    assert!(full.max_violation(&sol.values) < 1e-6);
                }
                None => assert_eq!(sol.status, MipStatus::Infeasible, "case {case}"),
            }
        }
        assert!(feasible > 40);
    }

    #[test]
    fn identical_inputs_give_identical_searches() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let p = random_binary_program(&mut rng);
            let a = solve_mip(&p, AcceptAll).unwrap();
            let b = solve_mip(&p, AcceptAll).unwrap();
            assert_eq!(a.nodes, b.nodes);
            assert_eq!(a.values, b.values);
            assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        }
    }

    #[test]
    fn callback_cuts_steer_the_search() {
        // Reject any point with x0 = 1 through a cut; the accepted
        // incumbents must satisfy every cut in the final pool.
        let p = binary_program(
            &[-5.0, -4.0, -3.0],
            vec![Constraint::le(vec![(0, 2.0), (1, 3.0), (2, 1.0)], 5.0)],
        );
        let mut accepted = Vec::new();
        let sol = solve_mip(&p, |x: &[f64], _z: f64| {
            if x[0] > 0.5 {
                Verdict::reject(vec![Constraint::le(vec![(0, 1.0)], 0.0)])
            } else {
                accepted.push(x.to_vec());
                Verdict::accept()
            }
        })
        .unwrap();
        assert_eq!(sol.status, MipStatus::Optimal);
        assert_eq!(sol.values, vec![0.0, 1.0, 1.0]);
        assert_eq!(sol.callback_cuts, 1);
        for x in &accepted {
            assert!(sol.pool.iter().all(|c| c.violation(x) <= 1e-9));
        }
    }

    #[test]
    fn incumbent_override_is_used_for_pruning() {
        // The callback reports a larger true cost for x1 = 1 than the
        // relaxation sees; the search must still return the best reported value.
        let p = binary_program(&[-2.0, -1.0], vec![Constraint::le(vec![(0, 1.0), (1, 1.0)], 1.0)]);
        let sol = solve_mip(&p, |x: &[f64], z: f64| {
            Verdict::accept_with(z + if x[0] > 0.5 { 0.5 } else { 0.0 })
        })
        .unwrap();
        assert_eq!(sol.objective, -1.5);
    }

    #[test]
    fn infeasible_and_arity_errors() {
        let p = binary_program(&[1.0, 1.0], vec![Constraint::ge(vec![(0, 1.0), (1, 1.0)], 3.0)]);
        assert_eq!(solve_mip(&p, AcceptAll).unwrap().status, MipStatus::Infeasible);
        let mut q = p.clone();
        q.integer.pop();
        assert!(matches!(solve_mip(&q, AcceptAll), Err(MipError::Arity { .. })));
    }

    #[test]
    fn zero_time_limit_without_incumbent_is_an_error() {
        let mut p = binary_program(&[-1.0, -1.0], vec![Constraint::le(vec![(0, 2.0), (1, 2.0)], 3.0)]);
        p.time_limit = Some(Duration::ZERO);
        assert!(matches!(
            solve_mip(&p, AcceptAll),
            Err(MipError::TimeLimitWithoutIncumbent(_))
        ));
    }

    #[test]
    fn warm_start_is_kept_or_improved() {
        let mut p = binary_program(&[-1.0, -1.0], vec![Constraint::le(vec![(0, 2.0), (1, 2.0)], 3.0)]);
        p.time_limit = Some(Duration::ZERO);
        p.warm_start = Some((vec![1.0, 0.0], -1.0));
        let sol = solve_mip(&p, AcceptAll).unwrap();
        assert_eq!(sol.status, MipStatus::Feasible);
        assert_eq!(sol.values, vec![1.0, 0.0]);

        let mut q = binary_program(&[-3.0, -2.0], vec![Constraint::le(vec![(0, 1.0), (1, 1.0)], 1.0)]);
        q.warm_start = Some((vec![0.0, 1.0], -2.0));
        let sol = solve_mip(&q, AcceptAll).unwrap();
        assert_eq!(sol.status, MipStatus::Optimal);
        assert_eq!(sol.values, vec![1.0, 0.0]);

        q.warm_start = Some((vec![1.0], -3.0));
        assert!(solve_mip(&q, AcceptAll).is_err());
    }
}
