use std::collections::VecDeque;
use std::time::Duration;

use thiserror::Error;

use crate::mip::{MipSolution, MipStatus};
use crate::stochastic::{recourse_cost, route_summary};

use super::{Node, ProblemInstance, VariableIndex};

/// Tolerance used when replaying scheduling rows on a decoded plan.
const REPLAY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("vehicle {vehicle}: cannot decode route: {msg}")]
    Decode { vehicle: usize, msg: String },
    #[error("vehicle {vehicle}: malformed route: {msg}")]
    Route { vehicle: usize, msg: String },
    #[error("task {0} is not visited")]
    Unserved(usize),
    #[error("task {0}: the assigned team does not meet the requirement")]
    Requirement(usize),
    #[error("routes wait on each other in a cycle; no schedule exists")]
    Cyclic,
    #[error("schedule violated: {0}")]
    Schedule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveBreakdown {
    /// Expected travel energy of all selected edges.
    pub energy: f64,
    /// Time penalty times the sum of terminal arrival times.
    pub time: f64,
    /// Penalized expected recourse cost of all routes.
    pub recourse: f64,
}

impl ObjectiveBreakdown {
    /// The first-stage objective: energy plus time penalty.
    pub fn first_stage(&self) -> f64 {
        self.energy + self.time
    }

    pub fn total(&self) -> f64 {
        self.first_stage() + self.recourse
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleReport {
    pub mean: f64,
    pub variance: f64,
    /// `B - (z_beta sqrt(V) + M)`; negative when the chance constraint fails.
    pub chance_margin: f64,
    pub recourse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub status: MipStatus,
    pub nodes: usize,
    pub callback_cuts: usize,
    pub separated_cuts: usize,
    pub lazy_rows: usize,
    pub pivots: usize,
    pub elapsed: Duration,
}

impl SolveStats {
    pub fn from_solution(sol: &MipSolution) -> Self {
        Self {
            status: sol.status,
            nodes: sol.nodes,
            callback_cuts: sol.callback_cuts,
            separated_cuts: sol.separated_cuts,
            lazy_rows: sol.lazy_rows,
            pivots: sol.pivots,
            elapsed: sol.elapsed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    /// Per vehicle `[Start, Task.., Terminal]`, or empty when unused.
    pub routes: Vec<Vec<Node>>,
    /// Earliest start time of each task.
    pub task_times: Vec<f64>,
    /// Earliest terminal arrival of each vehicle (0 when unused).
    pub terminal_times: Vec<f64>,
    pub objective: ObjectiveBreakdown,
    pub vehicles: Vec<VehicleReport>,
    pub stats: Option<SolveStats>,
}

impl Plan {
    /// Schedules the routes as early as possible and prices them.
    pub fn from_routes(inst: &ProblemInstance, routes: Vec<Vec<Node>>) -> Result<Plan, PlanError> {
        check_routes(inst, &routes)?;
        let (task_times, terminal_times) = earliest_schedule(inst, &routes)?;
        let mut objective = ObjectiveBreakdown {
            time: inst.params.time_penalty * terminal_times.iter().sum::<f64>(),
            ..Default::default()
        };
        let mut vehicles = Vec::with_capacity(routes.len());
        for (k, r) in routes.iter().enumerate() {
            let s = route_summary(inst, k, r);
            let g = recourse_cost(inst, k, r).cost;
            objective.energy += s.mean;
            objective.recourse += g;
            vehicles.push(VehicleReport {
                mean: s.mean,
                variance: s.variance,
                chance_margin: s.chance_margin(inst.vehicles[k].capacity, inst.vehicles[k].confidence),
                recourse: g,
            });
        }
        Ok(Plan {
            routes,
            task_times,
            terminal_times,
            objective,
            vehicles,
            stats: None,
        })
    }

    /// Vehicles visiting each task.
    pub fn teams(&self, n_tasks: usize) -> Vec<Vec<usize>> {
        let mut teams = vec![Vec::new(); n_tasks];
        for (k, r) in self.routes.iter().enumerate() {
            for n in r {
                if let Node::Task(m) = *n {
                    teams[m].push(k);
                }
            }
        }
        teams
    }
}

/// Follows the selected edges of every vehicle from its start and prices
/// the resulting routes.
pub fn extract_plan(inst: &ProblemInstance, index: &VariableIndex, sol: &MipSolution) -> Result<Plan, PlanError> {
    let routes = decode_routes(inst, index, &sol.values)?;
    let mut plan = Plan::from_routes(inst, routes)?;
    plan.stats = Some(SolveStats::from_solution(sol));
    Ok(plan)
}

pub(crate) fn decode_routes(
    inst: &ProblemInstance,
    index: &VariableIndex,
    values: &[f64],
) -> Result<Vec<Vec<Node>>, PlanError> {
    let on = |c: usize| values[c] > 0.5;
    let mut routes = Vec::with_capacity(inst.n_vehicles());
    for k in 0..inst.n_vehicles() {
        let fail = |msg: String| PlanError::Decode { vehicle: k, msg };
        let selected: Vec<(Node, Node)> = index
            .edges(k)
            .filter(|&(_, _, c)| on(c))
            .map(|(a, b, _)| (a, b))
            .collect();
        if selected.is_empty() {
            routes.push(Vec::new());
            continue;
        }
        let mut route = vec![Node::Start(k)];
        let mut cur = Node::Start(k);
        while cur != Node::Terminal(k) {
            let mut next = selected.iter().filter(|e| e.0 == cur).map(|e| e.1);
            cur = match (next.next(), next.next()) {
                (Some(n), None) => n,
                (None, _) => return Err(fail(format!("no selected edge leaves {cur:?}"))),
                (Some(_), Some(_)) => return Err(fail(format!("route branches at {cur:?}"))),
            };
            if route.contains(&cur) || route.len() > selected.len() {
                return Err(fail(format!("route revisits {cur:?}")));
            }
            route.push(cur);
        }
        if route.len() - 1 != selected.len() {
            return Err(fail(format!(
                "{} selected edges but the route from the start uses {}",
                selected.len(),
                route.len() - 1
            )));
        }
        routes.push(route);
    }
    Ok(routes)
}

fn check_routes(inst: &ProblemInstance, routes: &[Vec<Node>]) -> Result<(), PlanError> {
    if routes.len() != inst.n_vehicles() {
        return Err(PlanError::Route {
            vehicle: routes.len(),
            msg: format!("{} routes for {} vehicles", routes.len(), inst.n_vehicles()),
        });
    }
    for (k, r) in routes.iter().enumerate() {
        if r.is_empty() {
            continue;
        }
        let fail = |msg: String| PlanError::Route { vehicle: k, msg };
        if r.len() < 3 || r[0] != Node::Start(k) || r[r.len() - 1] != Node::Terminal(k) {
            return Err(fail(
                "must run from the own start through at least one task to the own terminal".into(),
            ));
        }
        let mut seen = vec![false; inst.n_tasks()];
        for n in &r[1..r.len() - 1] {
            match *n {
                Node::Task(m) if m < inst.n_tasks() => {
                    if std::mem::replace(&mut seen[m], true) {
                        return Err(fail(format!("task {m} visited twice")));
                    }
                }
                other => return Err(fail(format!("{other:?} inside the route"))),
            }
        }
    }
    Ok(())
}

/// Earliest task start times and terminal arrivals for fixed routes.
///
/// A task starts once every team member has finished its previous task and
/// travelled over; the result is the longest path in the precedence graph.
pub fn earliest_schedule(inst: &ProblemInstance, routes: &[Vec<Node>]) -> Result<(Vec<f64>, Vec<f64>), PlanError> {
    let n_m = inst.n_tasks();
    let mut succ: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_m];
    let mut indeg = vec![0usize; n_m];
    let mut task_times = vec![0.0; n_m];
    let lag = |k: usize, a: Node, b: Node| {
        let service = match a {
            Node::Task(i) => inst.tasks[i].service[k],
            _ => 0.0,
        };
        inst.edge(k, a, b).expect("edge checked").time + service
    };
    for (k, r) in routes.iter().enumerate() {
        for w in r.windows(2) {
            match (w[0], w[1]) {
                (Node::Start(_), Node::Task(j)) => {
                    task_times[j] = f64::max(task_times[j], lag(k, w[0], w[1]));
                }
                (Node::Task(i), Node::Task(j)) => {
                    succ[i].push((j, lag(k, w[0], w[1])));
                    indeg[j] += 1;
                }
                _ => {}
            }
        }
    }
    let mut queue: VecDeque<usize> = (0..n_m).filter(|&m| indeg[m] == 0).collect();
    let mut done = 0;
    while let Some(i) = queue.pop_front() {
        done += 1;
        for &(j, l) in &succ[i] {
            task_times[j] = f64::max(task_times[j], task_times[i] + l);
            indeg[j] -= 1;
            if indeg[j] == 0 {
                queue.push_back(j);
            }
        }
    }
    if done < n_m {
        return Err(PlanError::Cyclic);
    }
    let terminal_times = routes
        .iter()
        .enumerate()
        .map(|(k, r)| match r.len() {
            0 => 0.0,
            n => match r[n - 2] {
                Node::Task(i) => task_times[i] + lag(k, r[n - 2], r[n - 1]),
                _ => 0.0,
            },
        })
        .collect();
    Ok((task_times, terminal_times))
}

/// Replays flow structure, task coverage, requirement satisfaction and the
/// scheduling rows on a plan, independently of any solver rows.
pub fn verify_plan(inst: &ProblemInstance, plan: &Plan) -> Result<(), PlanError> {
    check_routes(inst, &plan.routes)?;
    let teams = plan.teams(inst.n_tasks());
    for (m, team) in teams.iter().enumerate() {
        if team.is_empty() {
            return Err(PlanError::Unserved(m));
        }
        if !inst.tasks[m].requirement.evaluate(&inst.team_alpha(team)) {
            return Err(PlanError::Requirement(m));
        }
    }
    if plan.task_times.len() != inst.n_tasks() || plan.terminal_times.len() != inst.n_vehicles() {
        return Err(PlanError::Schedule("time vectors have the wrong length".into()));
    }
    let q = |n: Node| match n {
        Node::Start(_) => 0.0,
        Node::Task(m) => plan.task_times[m],
        Node::Terminal(k) => plan.terminal_times[k],
    };
    for (k, r) in plan.routes.iter().enumerate() {
        for w in r.windows(2) {
            let service = match w[0] {
                Node::Task(i) => inst.tasks[i].service[k],
                _ => 0.0,
            };
            let t = inst.edge(k, w[0], w[1]).expect("edge checked").time;
            if q(w[0]) + t + service > q(w[1]) + REPLAY_TOL {
                return Err(PlanError::Schedule(format!(
                    "vehicle {k} cannot reach {:?} by {} (earliest {})",
                    w[1],
                    q(w[1]),
                    q(w[0]) + t + service
                )));
            }
        }
    }
    Ok(())
}
