use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::lp::Constraint;
use crate::mip::{solve_mip, CutCallback, MipError, MipSolution, MipStatus, Verdict, DEFAULT_TIME_LIMIT};
use crate::model::{
    build_model, decode_routes, extract_plan, separate_subtours, BuildOptions, BuiltModel, ModelError, Node, Plan,
    PlanError, ProblemInstance, SolveStats, VariableIndex,
};

use super::heuristic::greedy_routes;
use super::{ccp_feasibility_cut, optimality_cut, recourse_cost, route_summary, CutForm};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mip(#[from] MipError),
    #[error("solver returned an undecodable plan: {0}")]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Deterministic,
    Chance,
    Recourse,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Deterministic, ModelKind::Chance, ModelKind::Recourse];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Deterministic => "det",
            ModelKind::Chance => "ccp",
            ModelKind::Recourse => "spr",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "det" | "deterministic" => Ok(ModelKind::Deterministic),
            "ccp" | "chance" => Ok(ModelKind::Chance),
            "spr" | "recourse" => Ok(ModelKind::Recourse),
            other => Err(format!("unknown model `{other}` (expected det, ccp or spr)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub time_limit: Option<Duration>,
    pub cut_form: CutForm,
    pub lazy_time_rows: bool,
    /// Separates subtour rows at fractional nodes.
    pub subtour_cuts: bool,
    /// Seeds the search with a greedily constructed plan.
    pub greedy_start: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_limit: Some(DEFAULT_TIME_LIMIT),
            cut_form: CutForm::default(),
            lazy_time_rows: true,
            subtour_cuts: true,
            greedy_start: true,
        }
    }
}

/// One row added by a callback together with the route that triggered it.
#[derive(Debug, Clone, PartialEq)]
pub struct CutRecord {
    pub vehicle: usize,
    pub route: Vec<Node>,
    pub row: Constraint,
    /// Chance margin for feasibility cuts, recourse cost for optimality cuts.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub model: ModelKind,
    /// `None` when the search proved that no plan exists.
    pub plan: Option<Plan>,
    pub stats: SolveStats,
    pub cuts: Vec<CutRecord>,
}

impl SolveReport {
    pub fn is_optimal(&self) -> bool {
        self.stats.status == MipStatus::Optimal
    }
}

pub fn solve(inst: &ProblemInstance, model: ModelKind, opts: SolveOptions) -> Result<SolveReport, SolveError> {
    match model {
        ModelKind::Deterministic => solve_deterministic(inst, opts),
        ModelKind::Chance => solve_ccp(inst, opts),
        ModelKind::Recourse => solve_spr(inst, opts),
    }
}

fn finish(
    inst: &ProblemInstance,
    model: ModelKind,
    index: &VariableIndex,
    sol: MipSolution,
    cuts: Vec<CutRecord>,
    started: Instant,
) -> Result<SolveReport, SolveError> {
    let mut stats = SolveStats::from_solution(&sol);
    stats.elapsed = started.elapsed();
    let plan = match sol.status {
        MipStatus::Infeasible => None,
        _ => Some(extract_plan(inst, index, &sol)?),
    };
    Ok(SolveReport {
        model,
        plan,
        stats,
        cuts,
    })
}

/// Adds subtour separation at fractional nodes to an integral-point check.
struct Separating<'a, F> {
    index: &'a VariableIndex,
    subtours: bool,
    check: F,
}

impl<F: FnMut(&[f64], f64) -> Verdict> CutCallback for Separating<'_, F> {
    fn on_integral(&mut self, x: &[f64], objective: f64) -> Verdict {
        (self.check)(x, objective)
    }

    fn separate(&mut self, x: &[f64]) -> Vec<Constraint> {
        if self.subtours {
            separate_subtours(self.index, x)
        } else {
            Vec::new()
        }
    }
}

fn build(inst: &ProblemInstance, mut b: BuildOptions, opts: &SolveOptions) -> Result<BuiltModel, SolveError> {
    b.lazy_time_rows = opts.lazy_time_rows;
    let mut built = build_model(inst, b)?;
    built.problem.time_limit = opts.time_limit;
    Ok(built)
}

/// Completes `routes` into a full point of `built` by solving it with every
/// edge and visit variable fixed to the routes.
fn seed_point<F: FnMut(&[f64], f64) -> Verdict>(
    built: &BuiltModel,
    routes: &[Vec<Node>],
    check: F,
) -> Option<(Vec<f64>, f64)> {
    let mut p = built.problem.clone();
    let ix = &built.index;
    let mut fix = |c: usize, on: bool| {
        let v = if on { 1.0 } else { 0.0 };
        p.lp.lower[c] = v;
        p.lp.upper[c] = v;
    };
    for (k, r) in routes.iter().enumerate() {
        for (a, b, c) in ix.edges(k) {
            fix(c, r.windows(2).any(|w| w[0] == a && w[1] == b));
        }
        for m in 0..ix.n_tasks() {
            fix(ix.y(k, m), r.contains(&Node::Task(m)));
        }
    }
    let cb = Separating {
        index: ix,
        subtours: false,
        check,
    };
    let sol = solve_mip(&p, cb).ok()?;
    (sol.status == MipStatus::Optimal).then_some((sol.values, sol.objective))
}

/// Installs the greedy warm start and charges its time to the search budget.
fn warm_start<F: FnMut(&[f64], f64) -> Verdict>(
    inst: &ProblemInstance,
    model: ModelKind,
    built: &mut BuiltModel,
    opts: &SolveOptions,
    started: Instant,
    check: F,
) {
    if !opts.greedy_start {
        return;
    }
    let Some(routes) = greedy_routes(inst, model) else {
        return;
    };
    let seed = seed_point(built, &routes, check);
    built.problem.warm_start = seed;
    if let Some(limit) = built.problem.time_limit.as_mut() {
        *limit = limit.saturating_sub(started.elapsed());
    }
}

pub fn solve_deterministic(inst: &ProblemInstance, opts: SolveOptions) -> Result<SolveReport, SolveError> {
    let started = Instant::now();
    let mut built = build(inst, BuildOptions::deterministic(), &opts)?;
    let accept = |_: &[f64], _: f64| Verdict::accept();
    warm_start(inst, ModelKind::Deterministic, &mut built, &opts, started, accept);
    let cb = Separating {
        index: &built.index,
        subtours: opts.subtour_cuts,
        check: accept,
    };
    let sol = solve_mip(&built.problem, cb)?;
    finish(inst, ModelKind::Deterministic, &built.index, sol, Vec::new(), started)
}

/// Routes of an integral point, or a no-good over every selected edge of
/// the first vehicle whose edges do not form a single path.
fn routes_or_nogood(inst: &ProblemInstance, index: &VariableIndex, x: &[f64]) -> Result<Vec<Vec<Node>>, Constraint> {
    decode_routes(inst, index, x).map_err(|e| {
        let k = match e {
            PlanError::Decode { vehicle, .. } => vehicle,
            _ => 0,
        };
        let cols: Vec<(usize, f64)> = index
            .edges(k)
            .filter(|&(_, _, c)| x[c] > 0.5)
            .map(|(_, _, c)| (c, 1.0))
            .collect();
        let n = cols.len() as f64;
        Constraint::le(cols, n - 1.0)
    })
}

/// Feasibility cuts for every route of an integral point that breaks its
/// chance constraint.
fn chance_check<'a>(
    inst: &'a ProblemInstance,
    index: &'a VariableIndex,
    form: CutForm,
    cuts: &'a mut Vec<CutRecord>,
) -> impl FnMut(&[f64], f64) -> Verdict + 'a {
    move |x: &[f64], _z: f64| {
        let routes = match routes_or_nogood(inst, index, x) {
            Ok(r) => r,
            Err(row) => return Verdict::reject(vec![row]),
        };
        let mut rows = Vec::new();
        for (k, r) in routes.iter().enumerate() {
            if r.is_empty() {
                continue;
            }
            let v = &inst.vehicles[k];
            let s = route_summary(inst, k, r);
            if s.violates_chance(v.capacity, v.confidence) {
                let row = ccp_feasibility_cut(index, k, r, form);
                cuts.push(CutRecord {
                    vehicle: k,
                    route: r.clone(),
                    row: row.clone(),
                    value: s.chance_margin(v.capacity, v.confidence),
                });
                rows.push(row);
            }
        }
        if rows.is_empty() {
            Verdict::accept()
        } else {
            Verdict::reject(rows)
        }
    }
}

/// Branch and cut with the chance constraint enforced by feasibility cuts
/// on every integral point whose routes break it.
pub fn solve_ccp(inst: &ProblemInstance, opts: SolveOptions) -> Result<SolveReport, SolveError> {
    let started = Instant::now();
    let mut built = build(inst, BuildOptions::chance(), &opts)?;
    let index = built.index.clone();
    let mut scratch = Vec::new();
    warm_start(
        inst,
        ModelKind::Chance,
        &mut built,
        &opts,
        started,
        chance_check(inst, &index, opts.cut_form, &mut scratch),
    );
    let mut cuts = Vec::new();
    let cb = Separating {
        index: &index,
        subtours: opts.subtour_cuts,
        check: chance_check(inst, &index, opts.cut_form, &mut cuts),
    };
    let sol = solve_mip(&built.problem, cb)?;
    finish(inst, ModelKind::Chance, &index, sol, cuts, started)
}

/// Optimality cuts for every route whose recourse bound `theta_k` falls
/// short of its recourse cost; the verdict carries the true objective.
fn recourse_check<'a>(
    inst: &'a ProblemInstance,
    index: &'a VariableIndex,
    cuts: &'a mut Vec<CutRecord>,
) -> impl FnMut(&[f64], f64) -> Verdict + 'a {
    move |x: &[f64], z: f64| {
        let routes = match routes_or_nogood(inst, index, x) {
            Ok(r) => r,
            Err(row) => return Verdict::reject(vec![row]),
        };
        let mut rows = Vec::new();
        let mut theta_sum = 0.0;
        let mut g_sum = 0.0;
        for (k, r) in routes.iter().enumerate() {
            let theta = x[index.theta(k).expect("recourse model")];
            theta_sum += theta;
            if r.is_empty() {
                continue;
            }
            let g = recourse_cost(inst, k, r).cost;
            g_sum += g;
            if theta < g - 1e-6 * g.max(1.0) {
                let row = optimality_cut(index, k, r, g);
                cuts.push(CutRecord {
                    vehicle: k,
                    route: r.clone(),
                    row: row.clone(),
                    value: g,
                });
                rows.push(row);
            }
        }
        let first_stage = z - theta_sum;
        let value = first_stage + g_sum;
        if rows.is_empty() {
            Verdict::accept_with(value)
        } else {
            Verdict {
                cuts: rows,
                objective: Some(value),
            }
        }
    }
}

/// Integer L-shaped branch and cut: each vehicle's recourse cost is
/// approximated from below by `theta_k`, tightened by optimality cuts
/// whenever an integral point under-estimates its route's recourse cost.
pub fn solve_spr(inst: &ProblemInstance, opts: SolveOptions) -> Result<SolveReport, SolveError> {
    let started = Instant::now();
    let mut built = build(inst, BuildOptions::recourse(), &opts)?;
    let index = built.index.clone();
    let mut scratch = Vec::new();
    warm_start(
        inst,
        ModelKind::Recourse,
        &mut built,
        &opts,
        started,
        recourse_check(inst, &index, &mut scratch),
    );
    let mut cuts = Vec::new();
    let cb = Separating {
        index: &index,
        subtours: opts.subtour_cuts,
        check: recourse_check(inst, &index, &mut cuts),
    };
    let sol = solve_mip(&built.problem, cb)?;
    finish(inst, ModelKind::Recourse, &index, sol, cuts, started)
}
