//! Exhaustive enumeration of plans for tiny instances.
//!
//! Every vehicle independently picks an ordered sequence of distinct tasks
//! (possibly empty). Each combination is screened for coverage, team
//! requirements, schedulability and capacity, then priced directly.

use thiserror::Error;

use crate::model::{Node, ProblemInstance};
use crate::stochastic::{recourse_cost, route_summary, ModelKind};

/// Largest fleet and task count the oracle accepts by default.
pub const DEFAULT_LIMIT: (usize, usize) = (3, 3);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("instance with {vehicles} vehicles and {tasks} tasks exceeds the enumeration bound ({max_v}, {max_m})")]
    TooLarge {
        vehicles: usize,
        tasks: usize,
        max_v: usize,
        max_m: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Optimal objective, `None` when no plan is feasible.
    pub objective: Option<f64>,
    pub routes: Vec<Vec<Node>>,
    /// Number of route combinations examined.
    pub enumerated: usize,
}

fn sequences(n: usize) -> Vec<Vec<usize>> {
    fn extend(n: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        out.push(cur.clone());
        for m in 0..n {
            if !used[m] {
                used[m] = true;
                cur.push(m);
                extend(n, cur, used, out);
                cur.pop();
                used[m] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(n, &mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Earliest start times by repeated relaxation; `None` on a precedence cycle.
fn schedule(inst: &ProblemInstance, seqs: &[&Vec<usize>]) -> Option<f64> {
    let n_m = inst.n_tasks();
    let mut q = vec![0.0f64; n_m];
    let step = |k: usize, from: Option<usize>, to: Node| -> f64 {
        let a = from.map_or(Node::Start(k), Node::Task);
        let s = from.map_or(0.0, |i| inst.tasks[i].service[k]);
        inst.edge(k, a, to).unwrap().time + s
    };
    let mut stable = false;
    for _ in 0..=n_m + 1 {
        let mut changed = false;
        for (k, seq) in seqs.iter().enumerate() {
            let mut prev: Option<usize> = None;
            let mut t = 0.0;
            for &m in seq.iter() {
                let arrive = t + step(k, prev, Node::Task(m));
                if arrive > q[m] + 1e-12 {
                    q[m] = arrive;
                    changed = true;
                }
                t = q[m];
                prev = Some(m);
            }
        }
        if !changed {
            stable = true;
            break;
        }
    }
    if !stable {
        return None;
    }
    let mut total = 0.0;
    for (k, seq) in seqs.iter().enumerate() {
        if let Some(&last) = seq.last() {
            total += q[last] + step(k, Some(last), Node::Terminal(k));
        }
    }
    Some(total)
}

fn to_route(k: usize, seq: &[usize]) -> Vec<Node> {
    if seq.is_empty() {
        return Vec::new();
    }
    let mut r = vec![Node::Start(k)];
    r.extend(seq.iter().map(|&m| Node::Task(m)));
    r.push(Node::Terminal(k));
    r
}

pub fn brute_force_oracle(inst: &ProblemInstance, model: ModelKind) -> Result<OracleResult, OracleError> {
    brute_force_oracle_within(inst, model, DEFAULT_LIMIT)
}

pub fn brute_force_oracle_within(
    inst: &ProblemInstance,
    model: ModelKind,
    limit: (usize, usize),
) -> Result<OracleResult, OracleError> {
    let (n_v, n_m) = (inst.n_vehicles(), inst.n_tasks());
    if n_v > limit.0 || n_m > limit.1 {
        return Err(OracleError::TooLarge {
            vehicles: n_v,
            tasks: n_m,
            max_v: limit.0,
            max_m: limit.1,
        });
    }
    let seqs = sequences(n_m);
    // Per vehicle: sequences that pass the vehicle-local capacity screen,
    // with their priced energy and recourse.
    let mut options: Vec<Vec<(&Vec<usize>, f64, f64)>> = Vec::with_capacity(n_v);
    for k in 0..n_v {
        let v = &inst.vehicles[k];
        let mut opts = Vec::new();
        for s in &seqs {
            let r = to_route(k, s);
            let sum = route_summary(inst, k, &r);
            let ok = match model {
                ModelKind::Deterministic | ModelKind::Recourse => sum.mean <= v.capacity + 1e-9,
                ModelKind::Chance => {
                    !sum.violates_chance(v.capacity, v.confidence)
                        && (v.confidence < 0.5 || sum.mean <= v.capacity + 1e-9)
                }
            };
            if ok {
                let g = match model {
                    ModelKind::Recourse => recourse_cost(inst, k, &r).cost,
                    _ => 0.0,
                };
                opts.push((s, sum.mean, g));
            }
        }
        options.push(opts);
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut enumerated = 0;
    let mut pick = vec![0usize; n_v];
    if options.iter().all(|o| !o.is_empty()) {
        'outer: loop {
            enumerated += 1;
            let chosen: Vec<&Vec<usize>> = (0..n_v).map(|k| options[k][pick[k]].0).collect();
            if let Some(value) = evaluate(inst, &chosen) {
                let total = value
                    + (0..n_v)
                        .map(|k| options[k][pick[k]].1 + options[k][pick[k]].2)
                        .sum::<f64>();
                if best.as_ref().is_none_or(|(b, _)| total < *b) {
                    best = Some((total, pick.clone()));
                }
            }
            for k in 0..n_v {
                pick[k] += 1;
                if pick[k] < options[k].len() {
                    continue 'outer;
                }
                pick[k] = 0;
            }
            break;
        }
    }
    Ok(match best {
        Some((objective, pick)) => OracleResult {
            objective: Some(objective),
            routes: (0..n_v).map(|k| to_route(k, options[k][pick[k]].0)).collect(),
            enumerated,
        },
        None => OracleResult {
            objective: None,
            routes: Vec::new(),
            enumerated,
        },
    })
}

/// Time-penalty term when the combination covers every task with a valid
/// team and can be scheduled.
fn evaluate(inst: &ProblemInstance, chosen: &[&Vec<usize>]) -> Option<f64> {
    for (m, task) in inst.tasks.iter().enumerate() {
        let team: Vec<usize> = (0..chosen.len()).filter(|&k| chosen[k].contains(&m)).collect();
        if team.is_empty() || !task.requirement.evaluate(&inst.team_alpha(&team)) {
            return None;
        }
    }
    schedule(inst, chosen).map(|t| inst.params.time_penalty * t)
}
