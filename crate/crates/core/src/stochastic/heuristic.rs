//! Constructive plans used as the first incumbent of the branch and cut.
//!
//! Tasks are taken one at a time in a nearest-neighbour order and each is
//! given a small team whose members append the task to their routes. Every
//! route therefore lists its tasks in the same relative order, so the
//! earliest-start schedule never waits in a cycle.

use crate::model::{Direction, Node, Plan, ProblemInstance, RequirementExpr};

use super::{route_summary, ModelKind};

/// Unmet `>=` atoms of `e` under `alpha` as `(capability, shortfall)`.
/// Children of an `Or` all count, since meeting any of them helps.
fn shortfalls(e: &RequirementExpr, alpha: &[f64], out: &mut Vec<(usize, f64)>) {
    if e.evaluate(alpha) {
        return;
    }
    match e {
        RequirementExpr::Atom {
            capability,
            threshold,
            direction: Direction::AtLeast,
        } => out.push((*capability, threshold - alpha[*capability])),
        RequirementExpr::Atom { .. } => {}
        RequirementExpr::And(c) | RequirementExpr::Or(c) => c.iter().for_each(|x| shortfalls(x, alpha, out)),
    }
}

fn full_route(k: usize, tasks: &[usize]) -> Vec<Node> {
    let mut r = Vec::with_capacity(tasks.len() + 2);
    r.push(Node::Start(k));
    r.extend(tasks.iter().map(|&m| Node::Task(m)));
    r.push(Node::Terminal(k));
    r
}

/// Task order by repeated nearest neighbour, beginning at `first` or, when
/// `None`, at the task nearest the mean start position.
fn visiting_order(inst: &ProblemInstance, first: Option<usize>) -> Vec<usize> {
    let n_v = inst.n_vehicles().max(1) as f64;
    let mut at = inst
        .vehicles
        .iter()
        .fold([0.0, 0.0], |a, v| [a[0] + v.start[0] / n_v, a[1] + v.start[1] / n_v]);
    let mut left: Vec<usize> = (0..inst.n_tasks()).collect();
    let mut order = Vec::with_capacity(left.len());
    if let Some(m) = first {
        left.retain(|&t| t != m);
        at = inst.tasks[m].location;
        order.push(m);
    }
    while !left.is_empty() {
        let dist = |m: usize| {
            let p = inst.tasks[m].location;
            (p[0] - at[0]).hypot(p[1] - at[1])
        };
        let (i, _) = left
            .iter()
            .enumerate()
            .min_by(|a, b| dist(*a.1).total_cmp(&dist(*b.1)))
            .expect("non-empty");
        let m = left.remove(i);
        at = inst.tasks[m].location;
        order.push(m);
    }
    order
}

struct Builder<'a> {
    inst: &'a ProblemInstance,
    model: ModelKind,
    tasks: Vec<Vec<usize>>,
    mean: Vec<f64>,
}

impl Builder<'_> {
    /// Mean energy of vehicle `k` after appending `m`, if its capacity rows allow it.
    fn extended(&self, k: usize, m: usize) -> Option<f64> {
        let mut seq = self.tasks[k].clone();
        seq.push(m);
        let route = full_route(k, &seq);
        let s = route_summary(self.inst, k, &route);
        let v = &self.inst.vehicles[k];
        let mean_row = match self.model {
            ModelKind::Chance => v.confidence >= 0.5,
            _ => true,
        };
        if mean_row && s.mean > v.capacity {
            return None;
        }
        if self.model == ModelKind::Chance && s.violates_chance(v.capacity, v.confidence) {
            return None;
        }
        Some(s.mean)
    }

    fn team_for(&self, m: usize) -> Option<Vec<usize>> {
        let req = &self.inst.tasks[m].requirement;
        let mut team: Vec<(usize, f64)> = Vec::new();
        loop {
            let alpha = self.inst.team_alpha(&team.iter().map(|t| t.0).collect::<Vec<_>>());
            if req.evaluate(&alpha) {
                break;
            }
            let mut gaps = Vec::new();
            shortfalls(req, &alpha, &mut gaps);
            let best = (0..self.inst.n_vehicles())
                .filter(|k| !team.iter().any(|t| t.0 == *k))
                .filter_map(|k| {
                    let caps = &self.inst.vehicles[k].capabilities;
                    let gain: f64 = gaps.iter().map(|&(a, short)| caps[a].min(short) / short).sum();
                    if gain <= 0.0 {
                        return None;
                    }
                    let cost = self.extended(k, m)? - self.mean[k];
                    Some((k, cost, cost / gain))
                })
                .min_by(|a, b| a.2.total_cmp(&b.2))?;
            team.push((best.0, best.1));
        }
        // drop members the requirement can do without, dearest first
        team.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut i = 0;
        while i < team.len() {
            let rest: Vec<usize> = team
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, t)| t.0)
                .collect();
            if req.evaluate(&self.inst.team_alpha(&rest)) {
                team.remove(i);
            } else {
                i += 1;
            }
        }
        Some(team.into_iter().map(|t| t.0).collect())
    }
}

fn construct(inst: &ProblemInstance, model: ModelKind, order: &[usize]) -> Option<(Vec<Vec<Node>>, f64)> {
    let n_v = inst.n_vehicles();
    let mut b = Builder {
        inst,
        model,
        tasks: vec![Vec::new(); n_v],
        mean: vec![0.0; n_v],
    };
    for &m in order {
        for k in b.team_for(m)? {
            b.mean[k] = b.extended(k, m)?;
            b.tasks[k].push(m);
        }
    }
    let routes: Vec<Vec<Node>> = b
        .tasks
        .iter()
        .enumerate()
        .map(|(k, t)| if t.is_empty() { Vec::new() } else { full_route(k, t) })
        .collect();
    let o = Plan::from_routes(inst, routes.clone()).ok()?.objective;
    let value = match model {
        ModelKind::Recourse => o.total(),
        _ => o.first_stage(),
    };
    Some((routes, value))
}

/// Greedy feasible routes for `model`, the cheapest over nearest-neighbour
/// orders started at every task, or `None` when every construction gets
/// stuck.
pub fn greedy_routes(inst: &ProblemInstance, model: ModelKind) -> Option<Vec<Vec<Node>>> {
    std::iter::once(None)
        .chain((0..inst.n_tasks()).map(Some))
        .filter_map(|first| construct(inst, model, &visiting_order(inst, first)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(routes, _)| routes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::verify_plan;
    use crate::scenario::{generate_scenario, ScenarioConfig};
    use crate::stochastic::ccp_check;

    #[test]
    fn greedy_plans_are_feasible() {
        let mut built = 0;
        for seed in 0..20 {
            let inst = generate_scenario(&ScenarioConfig {
                n_vehicles: 4,
                n_tasks: 5,
                capacity: 22_000.0,
                spread: 9.0,
                seed,
                ..ScenarioConfig::default()
            })
            .unwrap();
            for model in ModelKind::ALL {
                let Some(routes) = greedy_routes(&inst, model) else {
                    continue;
                };
                built += 1;
                let plan = Plan::from_routes(&inst, routes.clone()).unwrap();
                verify_plan(&inst, &plan).unwrap();
                if model == ModelKind::Chance {
                    assert!(ccp_check(&inst, &routes).is_empty());
                }
            }
        }
        assert!(built >= 25, "only {built} constructions succeeded");
    }

    #[test]
    fn dispensable_members_are_dropped() {
        let inst = generate_scenario(&ScenarioConfig {
            n_vehicles: 6,
            n_tasks: 3,
            seed: 3,
            ..ScenarioConfig::default()
        })
        .unwrap();
        let routes = greedy_routes(&inst, ModelKind::Deterministic).unwrap();
        let plan = Plan::from_routes(&inst, routes).unwrap();
        for (m, team) in plan.teams(inst.n_tasks()).iter().enumerate() {
            for &k in team {
                let rest: Vec<usize> = team.iter().copied().filter(|&j| j != k).collect();
                assert!(!inst.tasks[m].requirement.evaluate(&inst.team_alpha(&rest)));
            }
        }
    }
}
