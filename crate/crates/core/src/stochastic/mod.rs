//! Chance-constrained and recourse layers on top of the teaming MILP.

mod heuristic;
mod solve;

pub use heuristic::greedy_routes;
pub use solve::{
    solve, solve_ccp, solve_deterministic, solve_spr, CutRecord, ModelKind, SolveError, SolveOptions, SolveReport,
};

use crate::lp::Constraint;
use crate::model::{Node, ProblemInstance, VariableIndex};
use crate::numerics::{std_normal_quantile, GaussianScalar};

/// Slack allowed on the deterministic-equivalent chance row.
pub const CHANCE_TOL: f64 = 1e-9;

/// Sums of edge means and variances along one route.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RouteCostSummary {
    pub mean: f64,
    pub variance: f64,
}

impl RouteCostSummary {
    /// `B - (z_beta sqrt(V) + M)`.
    pub fn chance_margin(&self, capacity: f64, confidence: f64) -> f64 {
        let z = std_normal_quantile(confidence).expect("confidence validated in (0, 1)");
        capacity - (z * self.variance.sqrt() + self.mean)
    }

    pub fn violates_chance(&self, capacity: f64, confidence: f64) -> bool {
        self.chance_margin(capacity, confidence) < -CHANCE_TOL
    }
}

fn route_edges<'a>(
    inst: &'a ProblemInstance,
    k: usize,
    route: &'a [Node],
) -> impl Iterator<Item = GaussianScalar> + 'a {
    route
        .windows(2)
        .map(move |w| inst.edge(k, w[0], w[1]).expect("route uses graph edges").cost)
}

pub fn route_summary(inst: &ProblemInstance, k: usize, route: &[Node]) -> RouteCostSummary {
    let g = route_edges(inst, k, route).fold(GaussianScalar::default(), |acc, e| acc.add_independent(&e));
    RouteCostSummary {
        mean: g.mean,
        variance: g.variance,
    }
}

/// Vehicles whose route breaks its chance constraint.
pub fn ccp_check(inst: &ProblemInstance, routes: &[Vec<Node>]) -> Vec<usize> {
    routes
        .iter()
        .enumerate()
        .filter(|(k, r)| {
            let v = &inst.vehicles[*k];
            route_summary(inst, *k, r).violates_chance(v.capacity, v.confidence)
        })
        .map(|(k, _)| k)
        .collect()
}

/// Edge set excluded by a feasibility cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CutForm {
    /// Task-to-task edges of the route; all route edges when there are none.
    #[default]
    Interior,
    /// Every edge of the route. Removes exactly this route and nothing else.
    FullRoute,
}

/// `sum_{e in R} (1 - x_e) >= 1`, written as `sum_{e in R} x_e <= |R| - 1`.
pub fn ccp_feasibility_cut(index: &VariableIndex, k: usize, route: &[Node], form: CutForm) -> Constraint {
    let all: Vec<usize> = route
        .windows(2)
        .map(|w| index.x(k, w[0], w[1]).expect("route uses graph edges"))
        .collect();
    let interior: Vec<usize> = route
        .windows(2)
        .filter(|w| matches!((w[0], w[1]), (Node::Task(_), Node::Task(_))))
        .map(|w| index.x(k, w[0], w[1]).unwrap())
        .collect();
    let cols = match form {
        CutForm::Interior if !interior.is_empty() => interior,
        _ => all,
    };
    let n = cols.len() as f64;
    Constraint::le(cols.into_iter().map(|c| (c, 1.0)).collect(), n - 1.0)
}

/// Probability that the `l`-th failure happens on the edge into `route[i]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureTerm {
    pub position: usize,
    pub failure: usize,
    pub probability: f64,
    /// Replacement plus rescue cost charged for this failure.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecourseQuote {
    /// Penalized expected recourse cost.
    pub cost: f64,
    pub terms: Vec<FailureTerm>,
}

/// Mean cost charged when a failure happens on the edge into `node`:
/// a fresh vehicle of the same type drives from its start to `node`, and
/// the rescue vehicle makes a round trip there.
pub fn failure_cost(inst: &ProblemInstance, k: usize, node: Node) -> f64 {
    let replacement = match node {
        Node::Task(m) => inst.edges[k].from_start[m].cost.mean,
        Node::Terminal(_) => inst.edges[k].start_to_terminal.cost.mean,
        Node::Start(_) => 0.0,
    };
    replacement + inst.rescue.round_trip(node)
}

/// Expected recourse cost of vehicle `k` following `route`.
///
/// With `S_i` the cumulative cost of the first `i - 1` edges, the `l`-th
/// failure lands on edge `i - 1 -> i` with probability
/// `P(S_i >= l B) - P(S_{i-1} >= l B)`, clamped at zero, for
/// `l = 1..i-1` (positions counted from 1).
pub fn recourse_cost(inst: &ProblemInstance, k: usize, route: &[Node]) -> RecourseQuote {
    let mut quote = RecourseQuote::default();
    if route.len() < 2 {
        return quote;
    }
    let b = inst.vehicles[k].capacity;
    let mut prev = GaussianScalar::default();
    let mut total = 0.0;
    for (pos, e) in route_edges(inst, k, route).enumerate() {
        let i = pos + 2;
        let cur = prev.add_independent(&e);
        let cost = failure_cost(inst, k, route[i - 1]);
        for l in 1..i {
            let t = l as f64 * b;
            let p = (cur.upper_tail(t) - prev.upper_tail(t)).max(0.0);
            if p > 0.0 {
                total += p * cost;
                quote.terms.push(FailureTerm {
                    position: i - 1,
                    failure: l,
                    probability: p,
                    cost,
                });
            }
        }
        prev = cur;
    }
    quote.cost = inst.params.recourse_penalty * total;
    quote
}

/// `theta_k >= g (1 - n + sum_{e in R} x_e)` over every edge of the route,
/// i.e. `theta_k - g sum x_e >= g (1 - n)`.
pub fn optimality_cut(index: &VariableIndex, k: usize, route: &[Node], g: f64) -> Constraint {
    let theta = index.theta(k).expect("model built with recourse bounds");
    let mut coeffs = vec![(theta, 1.0)];
    let mut n = 0.0;
    for w in route.windows(2) {
        coeffs.push((index.x(k, w[0], w[1]).expect("route uses graph edges"), -g));
        n += 1.0;
    }
    Constraint::ge(coeffs, g * (1.0 - n))
}

#[cfg(test)]
mod tests;
