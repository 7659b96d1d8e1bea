//! Text formats for instances and plans.
//!
//! Both are TOML documents tagged with a `format` line. Every edge cost is
//! written as `{ mean, variance, time }`; the second Gaussian parameter is a
//! variance, never a standard deviation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mip::MipStatus;
use crate::numerics::GaussianScalar;

use super::{
    Edge, ModelError, Node, Parameters, Plan, PlanError, ProblemInstance, RequirementExpr, RescueCosts, Task, Vehicle,
    VehicleEdges,
};

pub const INSTANCE_FORMAT: &str = "shtp-instance v1";
pub const PLAN_FORMAT: &str = "shtp-plan v1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed document: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("cannot serialize: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("expected format `{expected}`, found `{found}`")]
    Version { expected: &'static str, found: String },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    mean: f64,
    variance: f64,
    time: f64,
}

impl From<&Edge> for EdgeRecord {
    fn from(e: &Edge) -> Self {
        Self {
            mean: e.cost.mean,
            variance: e.cost.variance,
            time: e.time,
        }
    }
}

impl From<&EdgeRecord> for Edge {
    fn from(r: &EdgeRecord) -> Self {
        Edge {
            cost: GaussianScalar {
                mean: r.mean,
                variance: r.variance,
            },
            time: r.time,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct VehicleRecord {
    name: String,
    kind: String,
    capabilities: Vec<f64>,
    capacity: f64,
    confidence: f64,
    start: [f64; 2],
    terminal: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct TaskRecord {
    name: String,
    location: [f64; 2],
    requirement: String,
    service: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EdgeTableRecord {
    vehicle: String,
    start_to_terminal: EdgeRecord,
    from_start: Vec<EdgeRecord>,
    to_terminal: Vec<EdgeRecord>,
    /// One row per source task; the diagonal entry is a placeholder.
    between: Vec<Vec<EdgeRecord>>,
}

#[derive(Serialize, Deserialize)]
struct RescueRecord {
    to_task: Vec<f64>,
    from_task: Vec<f64>,
    to_terminal: Vec<f64>,
    from_terminal: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    time_penalty: f64,
    recourse_penalty: f64,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    format: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, String>,
    capabilities: Vec<String>,
    params: ParamRecord,
    rescue: RescueRecord,
    vehicles: Vec<VehicleRecord>,
    tasks: Vec<TaskRecord>,
    edges: Vec<EdgeTableRecord>,
}

pub fn write_instance(inst: &ProblemInstance) -> Result<String, FormatError> {
    write_instance_with(inst, &BTreeMap::new())
}

/// Writes an instance with free-form `meta` entries (generator settings and
/// the like) recorded in the header.
pub fn write_instance_with(inst: &ProblemInstance, meta: &BTreeMap<String, String>) -> Result<String, FormatError> {
    let n = inst.n_tasks();
    let file = InstanceFile {
        format: INSTANCE_FORMAT.into(),
        meta: meta.clone(),
        capabilities: inst.capabilities.clone(),
        params: ParamRecord {
            time_penalty: inst.params.time_penalty,
            recourse_penalty: inst.params.recourse_penalty,
        },
        rescue: RescueRecord {
            to_task: inst.rescue.to_task.clone(),
            from_task: inst.rescue.from_task.clone(),
            to_terminal: inst.rescue.to_terminal.clone(),
            from_terminal: inst.rescue.from_terminal.clone(),
        },
        vehicles: inst
            .vehicles
            .iter()
            .map(|v| VehicleRecord {
                name: v.name.clone(),
                kind: v.kind.clone(),
                capabilities: v.capabilities.clone(),
                capacity: v.capacity,
                confidence: v.confidence,
                start: v.start,
                terminal: v.terminal,
            })
            .collect(),
        tasks: inst
            .tasks
            .iter()
            .map(|t| TaskRecord {
                name: t.name.clone(),
                location: t.location,
                requirement: t.requirement.display(&inst.capabilities).to_string(),
                service: t.service.clone(),
            })
            .collect(),
        edges: inst
            .edges
            .iter()
            .zip(&inst.vehicles)
            .map(|(e, v)| EdgeTableRecord {
                vehicle: v.name.clone(),
                start_to_terminal: (&e.start_to_terminal).into(),
                from_start: e.from_start.iter().map(Into::into).collect(),
                to_terminal: e.to_terminal.iter().map(Into::into).collect(),
                between: e
                    .between
                    .chunks(n.max(1))
                    .take(n)
                    .map(|row| row.iter().map(Into::into).collect())
                    .collect(),
            })
            .collect(),
    };
    Ok(toml::to_string(&file)?)
}

fn check_format(found: &str, expected: &'static str) -> Result<(), FormatError> {
    if found == expected {
        Ok(())
    } else {
        Err(FormatError::Version {
            expected,
            found: found.into(),
        })
    }
}

pub fn read_instance(text: &str) -> Result<ProblemInstance, FormatError> {
    read_instance_meta(text).map(|(inst, _)| inst)
}

/// Parses and validates an instance, returning its header entries too.
pub fn read_instance_meta(text: &str) -> Result<(ProblemInstance, BTreeMap<String, String>), FormatError> {
    let file: InstanceFile = toml::from_str(text)?;
    check_format(&file.format, INSTANCE_FORMAT)?;
    let n = file.tasks.len();
    if file.edges.len() != file.vehicles.len() {
        return Err(FormatError::Shape(format!(
            "{} edge tables for {} vehicles",
            file.edges.len(),
            file.vehicles.len()
        )));
    }
    let mut tasks = Vec::with_capacity(n);
    for (m, t) in file.tasks.iter().enumerate() {
        let requirement = RequirementExpr::parse(&t.requirement, &file.capabilities)
            .map_err(|source| ModelError::Requirement { task: m, source })?;
        tasks.push(Task {
            name: t.name.clone(),
            location: t.location,
            requirement,
            service: t.service.clone(),
        });
    }
    let mut edges = Vec::with_capacity(file.edges.len());
    for (k, e) in file.edges.iter().enumerate() {
        let bad = |what: &str| FormatError::Shape(format!("edge table {k}: {what} does not match {n} tasks"));
        if e.from_start.len() != n || e.to_terminal.len() != n {
            return Err(bad("start/terminal list"));
        }
        if e.between.len() != n || e.between.iter().any(|r| r.len() != n) {
            return Err(bad("task matrix"));
        }
        edges.push(VehicleEdges {
            from_start: e.from_start.iter().map(Into::into).collect(),
            to_terminal: e.to_terminal.iter().map(Into::into).collect(),
            between: e.between.iter().flatten().map(Into::into).collect(),
            start_to_terminal: (&e.start_to_terminal).into(),
        });
    }
    let inst = ProblemInstance {
        capabilities: file.capabilities,
        vehicles: file
            .vehicles
            .into_iter()
            .map(|v| Vehicle {
                name: v.name,
                kind: v.kind,
                capabilities: v.capabilities,
                capacity: v.capacity,
                confidence: v.confidence,
                start: v.start,
                terminal: v.terminal,
            })
            .collect(),
        tasks,
        edges,
        rescue: RescueCosts {
            to_task: file.rescue.to_task,
            from_task: file.rescue.from_task,
            to_terminal: file.rescue.to_terminal,
            from_terminal: file.rescue.from_terminal,
        },
        params: Parameters {
            time_penalty: file.params.time_penalty,
            recourse_penalty: file.params.recourse_penalty,
        },
    };
    inst.validate()?;
    Ok((inst, file.meta))
}

#[derive(Serialize, Deserialize)]
struct ObjectiveRecord {
    energy: f64,
    time: f64,
    recourse: f64,
    first_stage: f64,
    total: f64,
}

#[derive(Serialize, Deserialize)]
struct PlanVehicleRecord {
    name: String,
    /// Task names in visiting order; empty when the vehicle stays home.
    route: Vec<String>,
    terminal_time: f64,
    mean: f64,
    variance: f64,
    chance_margin: f64,
    recourse: f64,
}

#[derive(Serialize, Deserialize)]
struct StatsRecord {
    status: String,
    nodes: usize,
    callback_cuts: usize,
    #[serde(default)]
    separated_cuts: usize,
    lazy_rows: usize,
    seconds: f64,
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<String>,
    objective: ObjectiveRecord,
    task_times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stats: Option<StatsRecord>,
    vehicles: Vec<PlanVehicleRecord>,
}

pub fn status_label(s: MipStatus) -> &'static str {
    match s {
        MipStatus::Optimal => "optimal",
        MipStatus::Feasible => "time-limit",
        MipStatus::Infeasible => "infeasible",
    }
}

/// Writes a plan; `model` is a free label such as `ccp`.
pub fn write_plan(inst: &ProblemInstance, plan: &Plan, model: Option<&str>) -> Result<String, FormatError> {
    let file = PlanFile {
        format: PLAN_FORMAT.into(),
        model: model.map(str::to_owned),
        objective: ObjectiveRecord {
            energy: plan.objective.energy,
            time: plan.objective.time,
            recourse: plan.objective.recourse,
            first_stage: plan.objective.first_stage(),
            total: plan.objective.total(),
        },
        task_times: plan.task_times.clone(),
        stats: plan.stats.as_ref().map(|s| StatsRecord {
            status: status_label(s.status).into(),
            nodes: s.nodes,
            callback_cuts: s.callback_cuts,
            separated_cuts: s.separated_cuts,
            lazy_rows: s.lazy_rows,
            seconds: s.elapsed.as_secs_f64(),
        }),
        vehicles: plan
            .routes
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let rep = plan.vehicles.get(k).copied().unwrap_or_default();
                PlanVehicleRecord {
                    name: inst.vehicles[k].name.clone(),
                    route: r
                        .iter()
                        .filter_map(|n| match *n {
                            Node::Task(m) => Some(inst.tasks[m].name.clone()),
                            _ => None,
                        })
                        .collect(),
                    terminal_time: plan.terminal_times.get(k).copied().unwrap_or(0.0),
                    mean: rep.mean,
                    variance: rep.variance,
                    chance_margin: rep.chance_margin,
                    recourse: rep.recourse,
                }
            })
            .collect(),
    };
    Ok(toml::to_string(&file)?)
}

/// Reads the routes of a plan file and re-schedules and re-prices them
/// against `inst`. Stored numbers are informational only.
pub fn read_plan(inst: &ProblemInstance, text: &str) -> Result<Plan, FormatError> {
    let file: PlanFile = toml::from_str(text)?;
    check_format(&file.format, PLAN_FORMAT)?;
    if file.vehicles.len() != inst.n_vehicles() {
        return Err(FormatError::Shape(format!(
            "plan lists {} vehicles, instance has {}",
            file.vehicles.len(),
            inst.n_vehicles()
        )));
    }
    let by_name: BTreeMap<&str, usize> = inst
        .tasks
        .iter()
        .enumerate()
        .map(|(m, t)| (t.name.as_str(), m))
        .collect();
    let mut routes = Vec::with_capacity(file.vehicles.len());
    for (k, v) in file.vehicles.iter().enumerate() {
        if v.name != inst.vehicles[k].name {
            return Err(FormatError::Shape(format!(
                "vehicle {k} is `{}` in the plan but `{}` in the instance",
                v.name, inst.vehicles[k].name
            )));
        }
        if v.route.is_empty() {
            routes.push(Vec::new());
            continue;
        }
        let mut r = vec![Node::Start(k)];
        for name in &v.route {
            let m = by_name
                .get(name.as_str())
                .ok_or_else(|| FormatError::Shape(format!("unknown task `{name}` in route of `{}`", v.name)))?;
            r.push(Node::Task(*m));
        }
        r.push(Node::Terminal(k));
        routes.push(r);
    }
    Ok(Plan::from_routes(inst, routes)?)
}
