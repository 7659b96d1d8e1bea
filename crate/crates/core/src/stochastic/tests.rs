use super::*;
use crate::lp::Relation;
use crate::model::testing::planar;
use crate::model::{build_deterministic, BuildOptions, RequirementExpr};

fn one_vehicle(n_tasks: usize, capacity: f64) -> ProblemInstance {
    let tasks = (0..n_tasks)
        .map(|m| ([m as f64 + 1.0, 0.0], RequirementExpr::at_least(0, 1.0)))
        .collect();
    planar(vec![(vec![1.0], capacity)], tasks, 1, [0.0, 0.0], 1.0)
}

fn route(k: usize, tasks: &[usize]) -> Vec<Node> {
    let mut r = vec![Node::Start(k)];
    r.extend(tasks.iter().map(|&m| Node::Task(m)));
    r.push(Node::Terminal(k));
    r
}

#[test]
fn zero_variance_chance_is_the_mean_row() {
    let s = RouteCostSummary {
        mean: 100.0,
        variance: 0.0,
    };
    assert!(!s.violates_chance(100.0, 0.95));
    assert!(s.violates_chance(99.9, 0.95));
}

#[test]
fn mean_at_capacity_with_spread_violates() {
    let s = RouteCostSummary {
        mean: 100.0,
        variance: 1.0,
    };
    assert!(s.violates_chance(100.0, 0.95));
}

#[test]
fn chance_margin_worked_example() {
    let s = RouteCostSummary {
        mean: 39_000.0,
        variance: 250_000.0,
    };
    let margin = s.chance_margin(40_000.0, 0.95);
    assert!((margin - (40_000.0 - 39_822.426_813_475_74)).abs() < 1e-6, "{margin}");
    assert!(!s.violates_chance(40_000.0, 0.95));
}

#[test]
fn ccp_check_lists_violators() {
    let mut inst = one_vehicle(2, 100.0);
    for e in inst.edges[0].from_start.iter_mut() {
        e.cost.variance = 400.0;
    }
    let ok = vec![route(0, &[0, 1])];
    assert!(ccp_check(&inst, &ok).is_empty());
    inst.vehicles[0].capacity = 5.0;
    assert_eq!(ccp_check(&inst, &ok), vec![0]);
}

#[test]
fn interior_cut_forbids_the_inner_edge() {
    let inst = one_vehicle(2, 100.0);
    let built = build_deterministic(&inst).unwrap();
    let ix = &built.index;
    let r = route(0, &[0, 1]);
    let cut = ccp_feasibility_cut(ix, 0, &r, CutForm::Interior);
    assert_eq!(cut.relation, Relation::Le);
    assert_eq!(cut.coeffs, vec![(ix.x(0, Node::Task(0), Node::Task(1)).unwrap(), 1.0)]);
    assert_eq!(cut.rhs, 0.0);
}

#[test]
fn single_task_route_falls_back_to_all_edges() {
    let inst = one_vehicle(1, 100.0);
    let built = build_deterministic(&inst).unwrap();
    let ix = &built.index;
    let cut = ccp_feasibility_cut(ix, 0, &route(0, &[0]), CutForm::Interior);
    assert_eq!(cut.coeffs.len(), 2);
    assert_eq!(cut.rhs, 1.0);
    let mut x = vec![0.0; ix.n_vars()];
    x[ix.x(0, Node::Start(0), Node::Task(0)).unwrap()] = 1.0;
    x[ix.x(0, Node::Task(0), Node::Terminal(0)).unwrap()] = 1.0;
    assert!(cut.violation(&x) > 0.5);
}

#[test]
fn two_interior_edges_are_excluded_together() {
    let inst = one_vehicle(3, 100.0);
    let built = build_deterministic(&inst).unwrap();
    let ix = &built.index;
    let cut = ccp_feasibility_cut(ix, 0, &route(0, &[0, 1, 2]), CutForm::Interior);
    assert_eq!(cut.coeffs.len(), 2);
    assert_eq!(cut.rhs, 1.0);
    let full = ccp_feasibility_cut(ix, 0, &route(0, &[0, 1, 2]), CutForm::FullRoute);
    assert_eq!(full.coeffs.len(), 4);
    assert_eq!(full.rhs, 3.0);
}

#[test]
fn ample_capacity_means_no_recourse() {
    let mut inst = one_vehicle(3, 1e12);
    for e in inst.edges[0].between.iter_mut() {
        e.cost.variance = 10.0;
    }
    let q = recourse_cost(&inst, 0, &route(0, &[0, 1, 2]));
    assert_eq!(q.cost, 0.0);
    assert!(q.terms.is_empty());
}

#[test]
fn certain_failure_on_a_long_edge() {
    // One task 1 away; capacity far below the first edge's mean.
    let mut inst = one_vehicle(1, 1e-3);
    inst.edges[0].from_start[0].cost.variance = 1e-8;
    inst.rescue.to_task[0] = 5.0;
    inst.rescue.from_task[0] = 7.0;
    let q = recourse_cost(&inst, 0, &route(0, &[0]));
    let first = q.terms.iter().find(|t| t.position == 1 && t.failure == 1).unwrap();
    assert!((first.probability - 1.0).abs() < 1e-12);
    // replacement from start (mean 1) plus the rescue round trip
    assert!((first.cost - 13.0).abs() < 1e-12);
}

#[test]
fn recourse_matches_hand_computation() {
    // Route s -> m0 -> u; edge means 1, variances 0.25 each, B = 1.5.
    let mut inst = one_vehicle(1, 1.5);
    inst.edges[0].from_start[0].cost.variance = 0.25;
    inst.edges[0].to_terminal[0].cost.variance = 0.25;
    inst.edges[0].start_to_terminal.cost.mean = 3.0;
    inst.rescue.to_terminal[0] = 0.5;
    inst.rescue.from_terminal[0] = 0.5;
    inst.params.recourse_penalty = 2.0;
    let q = recourse_cost(&inst, 0, &route(0, &[0]));
    // i = 2 (into m0): l = 1, P(N(1, .25) >= 1.5) = 1 - Phi(1)
    // i = 3 (into u):  l = 1, P(N(2, .5) >= 1.5) - P(N(1, .25) >= 1.5)
    //                  l = 2, P(N(2, .5) >= 3) - P(N(1, .25) >= 3)
    let p21 = 0.158_655_253_931_457_05;
    let p31 = 0.760_249_938_906_523_9 - p21;
    let p32 = 0.078_649_603_525_142_58 - 3.167_124_183_311_998e-5;
    let c2 = 1.0 + 1.0 + 1.0;
    let c3 = 3.0 + 1.0;
    let expected = 2.0 * (p21 * c2 + p31 * c3 + p32 * c3);
    assert!((q.cost - expected).abs() < 1e-9, "{} vs {expected}", q.cost);
}

#[test]
fn optimality_cut_activation() {
    let inst = one_vehicle(3, 100.0);
    let built = crate::model::build_model(&inst, BuildOptions::recourse()).unwrap();
    let ix = &built.index;
    let r = route(0, &[0, 1]);
    let cut = optimality_cut(ix, 0, &r, 4.0);
    let theta = ix.theta(0).unwrap();
    let mut x = vec![0.0; ix.n_vars()];
    for w in r.windows(2) {
        x[ix.x(0, w[0], w[1]).unwrap()] = 1.0;
    }
    // full route selected: theta >= 4
    x[theta] = 3.0;
    assert!((cut.violation(&x) - 1.0).abs() < 1e-12);
    x[theta] = 4.0;
    assert_eq!(cut.violation(&x), 0.0);
    // one edge dropped: right side falls to 0
    x[theta] = 0.0;
    x[ix.x(0, Node::Task(1), Node::Terminal(0)).unwrap()] = 0.0;
    assert_eq!(cut.violation(&x), 0.0);
}

#[test]
fn solvers_agree_without_uncertainty() {
    let inst = planar(
        vec![(vec![1.0, 0.0], 60.0), (vec![0.0, 1.0], 60.0), (vec![1.0, 1.0], 60.0)],
        vec![
            ([5.0, 0.0], RequirementExpr::at_least(0, 1.0)),
            ([0.0, 5.0], RequirementExpr::at_least(1, 1.0)),
            ([5.0, 5.0], RequirementExpr::parse("a1 & a2", &["a1", "a2"]).unwrap()),
        ],
        2,
        [0.0, 0.0],
        2.0,
    );
    let det = solve_deterministic(&inst, SolveOptions::default()).unwrap();
    let ccp = solve_ccp(&inst, SolveOptions::default()).unwrap();
    let spr = solve_spr(&inst, SolveOptions::default()).unwrap();
    let f = |r: &SolveReport| r.plan.as_ref().unwrap().objective;
    assert!(det.is_optimal() && ccp.is_optimal() && spr.is_optimal());
    assert!((f(&det).first_stage() - f(&ccp).first_stage()).abs() < 1e-6);
    assert!((f(&det).first_stage() - f(&spr).first_stage()).abs() < 1e-6);
    assert_eq!(f(&spr).recourse, 0.0);
}

#[test]
fn over_tight_confidence_has_no_solution() {
    let mut inst = one_vehicle(1, 2.5);
    inst.edges[0].from_start[0].cost.variance = 1.0;
    inst.vehicles[0].confidence = 0.99;
    let rep = solve_ccp(&inst, SolveOptions::default()).unwrap();
    assert!(rep.plan.is_none());
    assert_eq!(rep.cuts.len(), 1);
    inst.vehicles[0].confidence = 0.6;
    let rep = solve_ccp(&inst, SolveOptions::default()).unwrap();
    assert!(rep.plan.is_some());
}
