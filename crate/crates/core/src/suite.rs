//! Experiment orchestration: parameter sweeps over seeded scenarios and the
//! practical case, each solved under every model and summarized as CSV.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::mip::{MipError, MipStatus, DEFAULT_TIME_LIMIT};
use crate::model::io::status_label;
use crate::model::{Plan, ProblemInstance};
use crate::practical::{encode_practical_case, PracticalCase, PracticalConfig, PracticalError};
use crate::scenario::{generate_scenario, ScenarioConfig, ScenarioError};
use crate::stochastic::{solve, ModelKind, SolveError, SolveOptions};

/// Capacity used by the task sweep once a row has this many tasks.
pub const LARGE_TASK_COUNT: usize = 24;
pub const LARGE_TASK_CAPACITY: f64 = 80_000.0;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Practical(#[from] PracticalError),
    #[error("{model} solve failed on {row} seed {seed}: {source}")]
    Solve {
        model: ModelKind,
        row: String,
        seed: u64,
        #[source]
        source: SolveError,
    },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SuiteName {
    VehicleSweep,
    TaskSweep,
    TaskTypeSweep,
    SigmaSweep,
    Practical,
}

impl SuiteName {
    pub const ALL: [SuiteName; 5] = [
        SuiteName::VehicleSweep,
        SuiteName::TaskSweep,
        SuiteName::TaskTypeSweep,
        SuiteName::SigmaSweep,
        SuiteName::Practical,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SuiteName::VehicleSweep => "vehicle_sweep",
            SuiteName::TaskSweep => "task_sweep",
            SuiteName::TaskTypeSweep => "tasktype_sweep",
            SuiteName::SigmaSweep => "sigma_sweep",
            SuiteName::Practical => "practical",
        }
    }

    /// Name of the swept parameter, used as the first CSV column.
    pub fn parameter(self) -> &'static str {
        match self {
            SuiteName::VehicleSweep => "n_v",
            SuiteName::TaskSweep => "n_m",
            SuiteName::TaskTypeSweep => "n_am",
            SuiteName::SigmaSweep => "c_sigma",
            SuiteName::Practical => "case",
        }
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SuiteName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SuiteName::ALL.into_iter().find(|n| n.label() == s).ok_or_else(|| {
            let names: Vec<&str> = SuiteName::ALL.iter().map(|n| n.label()).collect();
            format!("unknown suite `{s}` (expected one of {})", names.join(", "))
        })
    }
}

/// One table row: the swept value and the scenario it produces for seed 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub config: ScenarioConfig,
}

/// The rows of a sweep built on top of `base`. The practical suite has none.
pub fn sweep_rows(name: SuiteName, base: &ScenarioConfig) -> Vec<SweepRow> {
    let row = |value: f64, config: ScenarioConfig| SweepRow { value, config };
    match name {
        SuiteName::VehicleSweep => [6, 8, 10, 20, 50]
            .into_iter()
            .map(|n| {
                row(
                    n as f64,
                    ScenarioConfig {
                        n_vehicles: n,
                        ..*base
                    },
                )
            })
            .collect(),
        SuiteName::TaskSweep => [6, 12, 18, 24, 30]
            .into_iter()
            .map(|n| {
                let capacity = if n >= LARGE_TASK_COUNT {
                    LARGE_TASK_CAPACITY
                } else {
                    base.capacity
                };
                row(
                    n as f64,
                    ScenarioConfig {
                        n_tasks: n,
                        capacity,
                        ..*base
                    },
                )
            })
            .collect(),
        SuiteName::TaskTypeSweep => [1, 2, 4, 6]
            .into_iter()
            .map(|n| {
                row(
                    n as f64,
                    ScenarioConfig {
                        n_task_types: n,
                        n_capabilities: 3,
                        n_vehicle_types: 3,
                        ..*base
                    },
                )
            })
            .collect(),
        SuiteName::SigmaSweep => [3.0, 6.0, 9.0, 12.0, 15.0]
            .into_iter()
            .map(|s| {
                row(
                    s,
                    ScenarioConfig {
                        spread: s,
                        ..*base
                    },
                )
            })
            .collect(),
        SuiteName::Practical => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    /// Instances per row, seeded `first_seed`, `first_seed + 1`, ...
    pub instances: usize,
    pub first_seed: u64,
    pub time_limit: Duration,
    pub models: Vec<ModelKind>,
    pub base: ScenarioConfig,
    pub practical: PracticalConfig,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            instances: 5,
            first_seed: 0,
            time_limit: DEFAULT_TIME_LIMIT,
            models: ModelKind::ALL.to_vec(),
            base: ScenarioConfig::default(),
            practical: PracticalConfig::default(),
        }
    }
}

/// How a single solve ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Solved(MipStatus),
    /// The time limit hit before any feasible plan was found.
    NoIncumbent,
}

impl Outcome {
    pub fn label(self) -> &'static str {
        match self {
            Outcome::Solved(s) => status_label(s),
            Outcome::NoIncumbent => "no-incumbent",
        }
    }

    pub fn hit_limit(self) -> bool {
        matches!(self, Outcome::Solved(MipStatus::Feasible) | Outcome::NoIncumbent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub value: f64,
    pub seed: u64,
    pub model: ModelKind,
    pub outcome: Outcome,
    pub plan: Option<Plan>,
    pub seconds: f64,
    pub nodes: usize,
}

impl InstanceRecord {
    /// First-stage objective `f`.
    pub fn first_stage(&self) -> Option<f64> {
        self.plan.as_ref().map(|p| p.objective.first_stage())
    }

    /// `f + g`, with `g` the analytic expected recourse of the plan.
    pub fn total(&self) -> Option<f64> {
        self.plan.as_ref().map(|p| p.objective.total())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelSummary {
    pub mean_first_stage: Option<f64>,
    pub mean_total: Option<f64>,
    pub mean_seconds: f64,
    pub solved: usize,
    pub limit_hits: usize,
    pub infeasible: usize,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl ModelSummary {
    pub fn from_records<'a>(records: impl Iterator<Item = &'a InstanceRecord> + Clone) -> Self {
        Self {
            mean_first_stage: mean(records.clone().filter_map(InstanceRecord::first_stage)),
            mean_total: mean(records.clone().filter_map(InstanceRecord::total)),
            mean_seconds: mean(records.clone().map(|r| r.seconds)).unwrap_or(0.0),
            solved: records.clone().filter(|r| r.plan.is_some()).count(),
            limit_hits: records.clone().filter(|r| r.outcome.hit_limit()).count(),
            infeasible: records
                .filter(|r| r.outcome == Outcome::Solved(MipStatus::Infeasible))
                .count(),
        }
    }
}

/// Solves `inst` under `model`, turning a limit without incumbent into an
/// outcome instead of an error.
pub fn solve_record(
    inst: &ProblemInstance,
    model: ModelKind,
    opts: SolveOptions,
    value: f64,
    seed: u64,
) -> Result<InstanceRecord, SolveError> {
    let start = Instant::now();
    match solve(inst, model, opts) {
        Ok(rep) => Ok(InstanceRecord {
            value,
            seed,
            model,
            outcome: Outcome::Solved(rep.stats.status),
            seconds: start.elapsed().as_secs_f64(),
            nodes: rep.stats.nodes,
            plan: rep.plan,
        }),
        Err(SolveError::Mip(MipError::TimeLimitWithoutIncumbent(_))) => Ok(InstanceRecord {
            value,
            seed,
            model,
            outcome: Outcome::NoIncumbent,
            plan: None,
            seconds: start.elapsed().as_secs_f64(),
            nodes: 0,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone)]
pub struct PracticalOutcome {
    pub case: PracticalCase,
    pub records: Vec<InstanceRecord>,
}

impl PracticalOutcome {
    /// Per model and task: the team's vehicle kinds and whether the
    /// requirement holds for the team's summed capabilities.
    pub fn team_replay(&self) -> Vec<(ModelKind, usize, Vec<String>, bool)> {
        let inst = &self.case.instance;
        let mut out = Vec::new();
        for r in &self.records {
            let Some(plan) = &r.plan else { continue };
            for (m, team) in plan.teams(inst.n_tasks()).iter().enumerate() {
                let ok = inst.tasks[m].requirement.evaluate(&inst.team_alpha(team));
                let kinds = team.iter().map(|&k| inst.vehicles[k].kind.clone()).collect();
                out.push((r.model, m, kinds, ok));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: SuiteName,
    pub options: SuiteOptions,
    pub records: Vec<InstanceRecord>,
    pub practical: Option<PracticalOutcome>,
}

impl SuiteReport {
    fn values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = Vec::new();
        for r in &self.records {
            if !v.contains(&r.value) {
                v.push(r.value);
            }
        }
        v
    }

    pub fn summary(&self, value: f64, model: ModelKind) -> ModelSummary {
        ModelSummary::from_records(
            self.records
                .iter()
                .filter(move |r| r.value == value && r.model == model),
        )
    }

    fn header(&self) -> String {
        let o = &self.options;
        format!(
            "# suite={} spread_mode={} instances={} first_seed={} time_limit_s={}\n",
            self.name,
            o.base.spread_mode.label(),
            o.instances,
            o.first_seed,
            o.time_limit.as_secs_f64()
        )
    }

    /// Row means per model: first-stage objective, objective including the
    /// expected recourse, wall time, and counts of limit hits and
    /// infeasible instances.
    pub fn table_csv(&self) -> String {
        let mut s = self.header();
        s.push_str(self.name.parameter());
        for m in &self.options.models {
            let l = m.label();
            write!(s, ",{l}_f,{l}_f_plus_g,{l}_seconds,{l}_solved,{l}_limit,{l}_infeasible").unwrap();
        }
        s.push('\n');
        let cell = |x: Option<f64>| x.map(|v| format!("{v:.3}")).unwrap_or_default();
        for value in self.values() {
            write!(s, "{value}").unwrap();
            for &m in &self.options.models {
                let sm = self.summary(value, m);
                write!(
                    s,
                    ",{},{},{:.3},{},{},{}",
                    cell(sm.mean_first_stage),
                    cell(sm.mean_total),
                    sm.mean_seconds,
                    sm.solved,
                    sm.limit_hits,
                    sm.infeasible
                )
                .unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// One line per solve so that any row can be rerun from its seed.
    pub fn instances_csv(&self) -> String {
        let mut s = self.header();
        writeln!(
            s,
            "{},seed,model,status,f,f_plus_g,seconds,nodes",
            self.name.parameter()
        )
        .unwrap();
        for r in &self.records {
            let cell = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
            writeln!(
                s,
                "{},{},{},{},{},{},{:.3},{}",
                r.value,
                r.seed,
                r.model,
                r.outcome.label(),
                cell(r.first_stage()),
                cell(r.total()),
                r.seconds,
                r.nodes
            )
            .unwrap();
        }
        s
    }

    /// Team table of the practical case; empty for sweeps.
    pub fn teams_csv(&self) -> String {
        let Some(p) = &self.practical else {
            return String::new();
        };
        let inst = &p.case.instance;
        let mut s = self.header();
        s.push_str("model,task,team,satisfied\n");
        for (model, m, kinds, ok) in p.team_replay() {
            writeln!(s, "{model},{},{},{ok}", inst.tasks[m].name, kinds.join(" ")).unwrap();
        }
        s
    }

    /// Writes the table, per-instance and (for the practical case) team
    /// files into `dir`, returning their paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, SuiteError> {
        let io = |path: &Path, source| SuiteError::Io {
            path: path.to_owned(),
            source,
        };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut files = vec![
            (dir.join(format!("{}.csv", self.name)), self.table_csv()),
            (dir.join(format!("{}_instances.csv", self.name)), self.instances_csv()),
        ];
        if self.practical.is_some() {
            files.push((dir.join(format!("{}_teams.csv", self.name)), self.teams_csv()));
        }
        let mut out = Vec::new();
        for (path, text) in files {
            fs::write(&path, text).map_err(|e| io(&path, e))?;
            out.push(path);
        }
        Ok(out)
    }
}

/// Runs a suite, calling `progress` after every solve.
pub fn run_experiment_suite(
    name: SuiteName,
    opts: &SuiteOptions,
    progress: &mut dyn FnMut(&InstanceRecord),
) -> Result<SuiteReport, SuiteError> {
    let solve_opts = SolveOptions {
        time_limit: Some(opts.time_limit),
        ..SolveOptions::default()
    };
    let mut records = Vec::new();
    let mut practical = None;
    if name == SuiteName::Practical {
        let case = encode_practical_case(&opts.practical)?;
        let mut recs = Vec::new();
        for &model in &opts.models {
            let r = solve_record(&case.instance, model, solve_opts, 0.0, opts.practical.seed).map_err(|source| {
                SuiteError::Solve {
                    model,
                    row: name.to_string(),
                    seed: opts.practical.seed,
                    source,
                }
            })?;
            progress(&r);
            recs.push(r);
        }
        records = recs.clone();
        practical = Some(PracticalOutcome { case, records: recs });
    } else {
        for row in sweep_rows(name, &opts.base) {
            for i in 0..opts.instances {
                let seed = opts.first_seed + i as u64;
                let inst = generate_scenario(&ScenarioConfig { seed, ..row.config })?;
                for &model in &opts.models {
                    let r = solve_record(&inst, model, solve_opts, row.value, seed).map_err(|source| {
                        SuiteError::Solve {
                            model,
                            row: format!("{}={}", name.parameter(), row.value),
                            seed,
                            source,
                        }
                    })?;
                    progress(&r);
                    records.push(r);
                }
            }
        }
    }
    Ok(SuiteReport {
        name,
        options: opts.clone(),
        records,
        practical,
    })
}
