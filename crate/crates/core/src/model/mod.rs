//! Problem instances, MILP construction and plan decoding.

mod build;
pub mod io;
mod plan;
pub mod requirement;
mod subtour;

pub use build::{build_deterministic, build_model, BuildOptions, BuiltModel, EnergyRow, VariableIndex};
pub(crate) use plan::decode_routes;
pub use plan::{
    earliest_schedule, extract_plan, verify_plan, ObjectiveBreakdown, Plan, PlanError, SolveStats, VehicleReport,
};
pub use requirement::{linearize_requirement, Direction, Linearization, RequirementError, RequirementExpr};
pub use subtour::{separate_subtours, SUBTOUR_TOL};

use thiserror::Error;

use crate::numerics::GaussianScalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("instance has no {0}")]
    Empty(&'static str),
    #[error("vehicle {vehicle}: {msg}")]
    Vehicle { vehicle: usize, msg: String },
    #[error("task {task}: {source}")]
    Requirement {
        task: usize,
        #[source]
        source: RequirementError,
    },
    #[error("task {task}: {msg}")]
    Task { task: usize, msg: String },
    #[error("edge {edge} of vehicle {vehicle}: {msg}")]
    Edge { vehicle: usize, edge: String, msg: String },
    #[error("rescue costs: {0}")]
    Rescue(String),
    #[error("parameter {name}: {msg}")]
    Parameter { name: &'static str, msg: String },
}

/// A node of the routing graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Start(usize),
    Task(usize),
    Terminal(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub name: String,
    /// Vehicle type label; replacements after a failure come from the same type.
    pub kind: String,
    pub capabilities: Vec<f64>,
    pub capacity: f64,
    /// Chance-constraint confidence level.
    pub confidence: f64,
    pub start: [f64; 2],
    pub terminal: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub name: String,
    pub location: [f64; 2],
    pub requirement: RequirementExpr,
    /// Service time per vehicle.
    pub service: Vec<f64>,
}

/// Energy cost distribution and travel time of one directed edge.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Edge {
    pub cost: GaussianScalar,
    pub time: f64,
}

/// Edge table of one vehicle over its own start, its own terminal and the tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleEdges {
    pub from_start: Vec<Edge>,
    pub to_terminal: Vec<Edge>,
    /// Row-major `n_tasks x n_tasks`; the diagonal is unused.
    pub between: Vec<Edge>,
    /// Start to terminal; only its mean is used, as the replacement cost
    /// when a failure happens on the last leg.
    pub start_to_terminal: Edge,
}

impl VehicleEdges {
    pub fn filled(n_tasks: usize, e: Edge) -> Self {
        Self {
            from_start: vec![e; n_tasks],
            to_terminal: vec![e; n_tasks],
            between: vec![e; n_tasks * n_tasks],
            start_to_terminal: e,
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.from_start.len()
    }

    pub fn task_to_task(&self, i: usize, j: usize) -> &Edge {
        &self.between[i * self.n_tasks() + j]
    }

    pub fn task_to_task_mut(&mut self, i: usize, j: usize) -> &mut Edge {
        let n = self.n_tasks();
        &mut self.between[i * n + j]
    }

    /// Edge between two route nodes, if the graph has it.
    pub fn get(&self, from: Node, to: Node) -> Option<&Edge> {
        match (from, to) {
            (Node::Start(_), Node::Task(j)) => self.from_start.get(j),
            (Node::Task(i), Node::Terminal(_)) => self.to_terminal.get(i),
            (Node::Task(i), Node::Task(j)) if i != j => Some(self.task_to_task(i, j)),
            (Node::Start(_), Node::Terminal(_)) => Some(&self.start_to_terminal),
            _ => None,
        }
    }
}

/// Expected costs of the rescue vehicle from its start to a node and from
/// that node to its terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct RescueCosts {
    pub to_task: Vec<f64>,
    pub from_task: Vec<f64>,
    /// Indexed by vehicle: the rescue trip to that vehicle's terminal.
    pub to_terminal: Vec<f64>,
    pub from_terminal: Vec<f64>,
}

impl RescueCosts {
    pub fn uniform(n_tasks: usize, n_vehicles: usize, out_and_back: f64) -> Self {
        Self {
            to_task: vec![out_and_back / 2.0; n_tasks],
            from_task: vec![out_and_back / 2.0; n_tasks],
            to_terminal: vec![out_and_back / 2.0; n_vehicles],
            from_terminal: vec![out_and_back / 2.0; n_vehicles],
        }
    }

    /// Round trip of the rescue vehicle to `node`.
    pub fn round_trip(&self, node: Node) -> f64 {
        match node {
            Node::Task(m) => self.to_task[m] + self.from_task[m],
            Node::Terminal(k) => self.to_terminal[k] + self.from_terminal[k],
            Node::Start(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parameters {
    /// Weight of the terminal arrival times in the objective.
    pub time_penalty: f64,
    /// Weight of the expected recourse cost.
    pub recourse_penalty: f64,
}

impl Default for Parameters {
    fn default() -> Self {
        Self {
            time_penalty: 1.0,
            recourse_penalty: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub capabilities: Vec<String>,
    pub vehicles: Vec<Vehicle>,
    pub tasks: Vec<Task>,
    /// One table per vehicle.
    pub edges: Vec<VehicleEdges>,
    pub rescue: RescueCosts,
    pub params: Parameters,
}

impl ProblemInstance {
    pub fn n_vehicles(&self) -> usize {
        self.vehicles.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn edge(&self, k: usize, from: Node, to: Node) -> Option<&Edge> {
        self.edges[k].get(from, to)
    }

    /// Summed capability vector of a team.
    pub fn team_alpha(&self, team: &[usize]) -> Vec<f64> {
        let mut a = vec![0.0; self.capabilities.len()];
        for &k in team {
            for (x, c) in a.iter_mut().zip(&self.vehicles[k].capabilities) {
                *x += c;
            }
        }
        a
    }

    /// Largest summed capability any team can reach, plus one.
    pub fn requirement_big_m(&self) -> f64 {
        1.0 + self
            .vehicles
            .iter()
            .map(|v| v.capabilities.iter().cloned().fold(0.0, f64::max))
            .sum::<f64>()
    }

    /// Upper bound on any earliest task start or terminal arrival time.
    pub fn horizon(&self) -> f64 {
        let mut max_t: f64 = 0.0;
        for e in &self.edges {
            for x in e.from_start.iter().chain(&e.to_terminal) {
                max_t = max_t.max(x.time);
            }
            let n = e.n_tasks();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        max_t = max_t.max(e.task_to_task(i, j).time);
                    }
                }
            }
        }
        let max_s = self
            .tasks
            .iter()
            .flat_map(|t| t.service.iter())
            .cloned()
            .fold(0.0, f64::max);
        (self.n_tasks() as f64 + 1.0) * (max_t + max_s) + 1.0
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n_a = self.capabilities.len();
        let n_m = self.n_tasks();
        let n_v = self.n_vehicles();
        if n_v == 0 {
            return Err(ModelError::Empty("vehicles"));
        }
        if n_a == 0 {
            return Err(ModelError::Empty("capabilities"));
        }
        for (k, v) in self.vehicles.iter().enumerate() {
            let fail = |msg: String| ModelError::Vehicle { vehicle: k, msg };
            if v.capabilities.len() != n_a {
                return Err(fail(format!(
                    "capability vector has {} entries, expected {n_a}",
                    v.capabilities.len()
                )));
            }
            if v.capabilities
                .iter()
                .any(|&c| !(c >= 0.0) || !c.is_finite() || c.fract() != 0.0)
            {
                return Err(fail("capabilities must be non-negative integers".into()));
            }
            if !(v.capacity > 0.0) {
                return Err(fail(format!("capacity {} must be positive", v.capacity)));
            }
            if !(v.confidence > 0.0 && v.confidence < 1.0) {
                return Err(fail(format!("confidence {} must lie in (0, 1)", v.confidence)));
            }
        }
        for (m, t) in self.tasks.iter().enumerate() {
            t.requirement
                .validate(n_a)
                .map_err(|source| ModelError::Requirement { task: m, source })?;
            if t.service.len() != n_v {
                return Err(ModelError::Task {
                    task: m,
                    msg: format!("{} service times for {n_v} vehicles", t.service.len()),
                });
            }
            if t.service.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
                return Err(ModelError::Task {
                    task: m,
                    msg: "service times must be non-negative".into(),
                });
            }
        }
        if self.edges.len() != n_v {
            return Err(ModelError::Parameter {
                name: "edges",
                msg: format!("{} edge tables for {n_v} vehicles", self.edges.len()),
            });
        }
        for (k, e) in self.edges.iter().enumerate() {
            if e.from_start.len() != n_m || e.to_terminal.len() != n_m || e.between.len() != n_m * n_m {
                return Err(ModelError::Edge {
                    vehicle: k,
                    edge: "*".into(),
                    msg: format!("edge table does not cover {n_m} tasks"),
                });
            }
            let check = |name: String, x: &Edge| -> Result<(), ModelError> {
                let c = x.cost;
                if !(c.mean >= 0.0) || !c.mean.is_finite() || !(c.variance >= 0.0) || !c.variance.is_finite() {
                    return Err(ModelError::Edge {
                        vehicle: k,
                        edge: name,
                        msg: format!("invalid cost ({}, {})", c.mean, c.variance),
                    });
                }
                if !(x.time >= 0.0) || !x.time.is_finite() {
                    return Err(ModelError::Edge {
                        vehicle: k,
                        edge: name,
                        msg: format!("invalid time {}", x.time),
                    });
                }
                Ok(())
            };
            for m in 0..n_m {
                check(format!("s->m{m}"), &e.from_start[m])?;
                check(format!("m{m}->u"), &e.to_terminal[m])?;
                for j in 0..n_m {
                    if j != m {
                        check(format!("m{m}->m{j}"), e.task_to_task(m, j))?;
                    }
                }
            }
            check("s->u".into(), &e.start_to_terminal)?;
        }
        let r = &self.rescue;
        if r.to_task.len() != n_m
            || r.from_task.len() != n_m
            || r.to_terminal.len() != n_v
            || r.from_terminal.len() != n_v
        {
            return Err(ModelError::Rescue("table sizes do not match the instance".into()));
        }
        if r.to_task
            .iter()
            .chain(&r.from_task)
            .chain(&r.to_terminal)
            .chain(&r.from_terminal)
            .any(|&c| !(c >= 0.0) || !c.is_finite())
        {
            return Err(ModelError::Rescue("costs must be finite and non-negative".into()));
        }
        if !(self.params.time_penalty >= 0.0) {
            return Err(ModelError::Parameter {
                name: "time_penalty",
                msg: "must be non-negative".into(),
            });
        }
        if !(self.params.recourse_penalty >= 0.0) {
            return Err(ModelError::Parameter {
                name: "recourse_penalty",
                msg: "must be non-negative".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Instance whose edge means are `rate * euclidean distance`, travel
    /// times equal distance, unit service and zero variance.
    pub fn planar(
        vehicles: Vec<(Vec<f64>, f64)>,
        tasks: Vec<([f64; 2], RequirementExpr)>,
        n_caps: usize,
        depot: [f64; 2],
        rate: f64,
    ) -> ProblemInstance {
        let n_v = vehicles.len();
        let n_m = tasks.len();
        let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let edge = |d: f64| Edge {
            cost: GaussianScalar::deterministic(rate * d),
            time: d,
        };
        let locs: Vec<[f64; 2]> = tasks.iter().map(|t| t.0).collect();
        let mut edges = Vec::new();
        for _ in 0..n_v {
            let mut e = VehicleEdges::filled(n_m, Edge::default());
            for i in 0..n_m {
                e.from_start[i] = edge(dist(depot, locs[i]));
                e.to_terminal[i] = edge(dist(locs[i], depot));
                for j in 0..n_m {
                    if i != j {
                        *e.task_to_task_mut(i, j) = edge(dist(locs[i], locs[j]));
                    }
                }
            }
            edges.push(e);
        }
        ProblemInstance {
            capabilities: (0..n_caps).map(|a| format!("a{}", a + 1)).collect(),
            vehicles: vehicles
                .into_iter()
                .enumerate()
                .map(|(k, (c, b))| Vehicle {
                    name: format!("v{k}"),
                    kind: format!("t{k}"),
                    capabilities: c,
                    capacity: b,
                    confidence: 0.95,
                    start: depot,
                    terminal: depot,
                })
                .collect(),
            tasks: tasks
                .into_iter()
                .enumerate()
                .map(|(m, (loc, req))| Task {
                    name: format!("m{m}"),
                    location: loc,
                    requirement: req,
                    service: vec![1.0; n_v],
                })
                .collect(),
            edges,
            rescue: RescueCosts {
                to_task: locs.iter().map(|&l| rate * dist(depot, l)).collect(),
                from_task: locs.iter().map(|&l| rate * dist(l, depot)).collect(),
                to_terminal: vec![0.0; n_v],
                from_terminal: vec![0.0; n_v],
            },
            params: Parameters::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testing::planar;
    use super::*;

    fn one_task() -> ProblemInstance {
        planar(
            vec![(vec![1.0], 100.0)],
            vec![([3.0, 4.0], RequirementExpr::at_least(0, 1.0))],
            1,
            [0.0, 0.0],
            2.0,
        )
    }

    #[test]
    fn valid_instance_passes() {
        one_task().validate().unwrap();
    }

    #[test]
    fn validation_errors_name_the_offender() {
        let mut inst = one_task();
        inst.vehicles[0].capabilities = vec![0.5];
        assert!(matches!(inst.validate(), Err(ModelError::Vehicle { vehicle: 0, .. })));
        let mut inst = one_task();
        inst.edges[0].from_start[0].cost.mean = -1.0;
        assert!(matches!(inst.validate(), Err(ModelError::Edge { vehicle: 0, .. })));
        let mut inst = one_task();
        inst.tasks[0].requirement = RequirementExpr::at_least(4, 1.0);
        assert!(matches!(inst.validate(), Err(ModelError::Requirement { task: 0, .. })));
        let mut inst = one_task();
        inst.rescue.to_task.clear();
        assert!(matches!(inst.validate(), Err(ModelError::Rescue(_))));
    }

    #[test]
    fn edge_lookup_follows_graph() {
        let inst = one_task();
        assert!(inst.edge(0, Node::Start(0), Node::Task(0)).is_some());
        assert!(inst.edge(0, Node::Task(0), Node::Task(0)).is_none());
        assert!(inst.edge(0, Node::Terminal(0), Node::Task(0)).is_none());
        assert_eq!(inst.edge(0, Node::Start(0), Node::Task(0)).unwrap().cost.mean, 10.0);
    }
}
