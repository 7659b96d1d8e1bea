use crate::lp::{Constraint, LinearProgram};
use crate::mip::MipProblem;

use super::{ModelError, Node, ProblemInstance};

/// Which energy capacity row to add per vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyRow {
    None,
    /// `sum mu x <= B_k` for every vehicle.
    Mean,
    /// The mean row only for vehicles whose confidence is at least one
    /// half, where it is implied by the chance constraint.
    ImpliedByChance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    pub energy: EnergyRow,
    /// Adds one recourse-bound variable per vehicle to the objective.
    pub recourse_bounds: bool,
    /// Keeps the scheduling rows in the lazy pool instead of the relaxation.
    pub lazy_time_rows: bool,
}

impl BuildOptions {
    pub fn deterministic() -> Self {
        Self {
            energy: EnergyRow::Mean,
            recourse_bounds: false,
            lazy_time_rows: true,
        }
    }

    pub fn chance() -> Self {
        Self {
            energy: EnergyRow::ImpliedByChance,
            ..Self::deterministic()
        }
    }

    pub fn recourse() -> Self {
        Self {
            recourse_bounds: true,
            ..Self::deterministic()
        }
    }
}

/// Column positions of every decision variable.
///
/// Per vehicle the edge variables are laid out as start-to-task (one per
/// task), task-to-terminal (one per task), then task-to-task in row-major
/// order with the diagonal skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableIndex {
    n_v: usize,
    n_m: usize,
    x_base: usize,
    y_base: usize,
    z_base: usize,
    q_task_base: usize,
    q_start_base: usize,
    q_terminal_base: usize,
    theta_base: Option<usize>,
    /// Indicator and auxiliary binaries of each task's requirement.
    pub w: Vec<Vec<usize>>,
    n_vars: usize,
}

impl VariableIndex {
    fn per_vehicle(&self) -> usize {
        self.n_m * (self.n_m + 1)
    }

    pub fn n_vehicles(&self) -> usize {
        self.n_v
    }

    pub fn n_tasks(&self) -> usize {
        self.n_m
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Column of `x_{k,from,to}`, or `None` when the edge is not in the graph.
    pub fn x(&self, k: usize, from: Node, to: Node) -> Option<usize> {
        let base = self.x_base + k * self.per_vehicle();
        let n = self.n_m;
        match (from, to) {
            (Node::Start(s), Node::Task(j)) if s == k && j < n => Some(base + j),
            (Node::Task(i), Node::Terminal(u)) if u == k && i < n => Some(base + n + i),
            (Node::Task(i), Node::Task(j)) if i != j && i < n && j < n => {
                let col = if j < i { j } else { j - 1 };
                Some(base + 2 * n + i * (n - 1) + col)
            }
            _ => None,
        }
    }

    /// All edges of vehicle `k` as `(from, to, column)`.
    pub fn edges(&self, k: usize) -> impl Iterator<Item = (Node, Node, usize)> + '_ {
        let n = self.n_m;
        let starts = (0..n).map(move |j| (Node::Start(k), Node::Task(j)));
        let ends = (0..n).map(move |i| (Node::Task(i), Node::Terminal(k)));
        let inner = (0..n).flat_map(move |i| {
            (0..n)
                .filter(move |&j| j != i)
                .map(move |j| (Node::Task(i), Node::Task(j)))
        });
        starts
            .chain(ends)
            .chain(inner)
            .map(move |(a, b)| (a, b, self.x(k, a, b).expect("edge in graph")))
    }

    pub fn x_range(&self) -> std::ops::Range<usize> {
        self.x_base..self.x_base + self.n_v * self.per_vehicle()
    }

    pub fn y(&self, k: usize, m: usize) -> usize {
        self.y_base + k * self.n_m + m
    }

    pub fn z(&self, m: usize) -> usize {
        self.z_base + m
    }

    /// Column of the start time of `node`, measured in horizons.
    pub fn q(&self, node: Node) -> usize {
        match node {
            Node::Task(m) => self.q_task_base + m,
            Node::Start(k) => self.q_start_base + k,
            Node::Terminal(k) => self.q_terminal_base + k,
        }
    }

    pub fn theta(&self, k: usize) -> Option<usize> {
        self.theta_base.map(|b| b + k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltModel {
    pub problem: MipProblem,
    pub index: VariableIndex,
    /// Big-M used in the scheduling rows.
    pub time_big_m: f64,
    /// Upper bound on every start time. Time columns hold `q / horizon`
    /// so that scheduling rows stay well scaled.
    pub horizon: f64,
}

pub fn build_deterministic(inst: &ProblemInstance) -> Result<BuiltModel, ModelError> {
    build_model(inst, BuildOptions::deterministic())
}

/// Assembles the teaming MILP: flow, visit linkage, capacity, scheduling and
/// requirement rows over the edge, team, completion, time, indicator and
/// optional recourse-bound variables.
pub fn build_model(inst: &ProblemInstance, opts: BuildOptions) -> Result<BuiltModel, ModelError> {
    inst.validate()?;
    let n_v = inst.n_vehicles();
    let n_m = inst.n_tasks();
    let mut lp = LinearProgram::new();
    let mut integer = Vec::new();
    let mut push = |lp: &mut LinearProgram, cost: f64, lo: f64, hi: f64, int: bool| {
        integer.push(int);
        lp.add_var(cost, lo, hi)
    };

    let horizon = inst.horizon();
    let x_base = lp.num_vars();
    for e in &inst.edges {
        for m in 0..n_m {
            push(&mut lp, e.from_start[m].cost.mean, 0.0, 1.0, true);
        }
        for m in 0..n_m {
            push(&mut lp, e.to_terminal[m].cost.mean, 0.0, 1.0, true);
        }
        for i in 0..n_m {
            for j in 0..n_m {
                if i != j {
                    push(&mut lp, e.task_to_task(i, j).cost.mean, 0.0, 1.0, true);
                }
            }
        }
    }
    let y_base = lp.num_vars();
    for _ in 0..n_v * n_m {
        push(&mut lp, 0.0, 0.0, 1.0, true);
    }
    let z_base = lp.num_vars();
    for _ in 0..n_m {
        push(&mut lp, 0.0, 1.0, 1.0, true);
    }
    let q_task_base = lp.num_vars();
    for _ in 0..n_m {
        push(&mut lp, 0.0, 0.0, 1.0, false);
    }
    let q_start_base = lp.num_vars();
    for _ in 0..n_v {
        push(&mut lp, 0.0, 0.0, 0.0, false);
    }
    let q_terminal_base = lp.num_vars();
    for _ in 0..n_v {
        push(&mut lp, inst.params.time_penalty * horizon, 0.0, 1.0, false);
    }
    let theta_base = if opts.recourse_bounds {
        let b = lp.num_vars();
        for _ in 0..n_v {
            push(&mut lp, 1.0, 0.0, f64::INFINITY, false);
        }
        Some(b)
    } else {
        None
    };
    let mut index = VariableIndex {
        n_v,
        n_m,
        x_base,
        y_base,
        z_base,
        q_task_base,
        q_start_base,
        q_terminal_base,
        theta_base,
        w: vec![Vec::new(); n_m],
        n_vars: 0,
    };

    for k in 0..n_v {
        let starts: Vec<(usize, f64)> = (0..n_m)
            .map(|j| (index.x(k, Node::Start(k), Node::Task(j)).unwrap(), 1.0))
            .collect();
        for m in 0..n_m {
            let incoming = incoming(&index, k, m);
            // flow conservation
            let mut row: Vec<(usize, f64)> = incoming.iter().map(|&c| (c, 1.0)).collect();
            row.extend(outgoing(&index, k, m).into_iter().map(|c| (c, -1.0)));
            lp.add_constraint(Constraint::eq(row, 0.0));
            // visit linkage
            let mut row = vec![(index.y(k, m), 1.0)];
            row.extend(incoming.iter().map(|&c| (c, -1.0)));
            lp.add_constraint(Constraint::eq(row, 0.0));
            // a visited task implies the vehicle leaves its start
            let mut row = vec![(index.y(k, m), 1.0)];
            row.extend(starts.iter().map(|&(c, _)| (c, -1.0)));
            lp.add_constraint(Constraint::le(row, 0.0));
        }
        lp.add_constraint(Constraint::le(starts.clone(), 1.0));

        let mean_row = match opts.energy {
            EnergyRow::None => false,
            EnergyRow::Mean => true,
            EnergyRow::ImpliedByChance => inst.vehicles[k].confidence >= 0.5,
        };
        if mean_row {
            let row: Vec<(usize, f64)> = index
                .edges(k)
                .map(|(a, b, c)| (c, inst.edge(k, a, b).unwrap().cost.mean))
                .filter(|&(_, mu)| mu != 0.0)
                .collect();
            lp.add_constraint(Constraint::le(row, inst.vehicles[k].capacity));
        }

        // the terminal time covers every travel and service time on the route
        let mut row = vec![(index.q(Node::Terminal(k)), 1.0)];
        for (a, b, c) in index.edges(k) {
            let service = match a {
                Node::Task(i) => inst.tasks[i].service[k],
                _ => 0.0,
            };
            let d = inst.edge(k, a, b).unwrap().time + service;
            if d != 0.0 {
                row.push((c, -d / horizon));
            }
        }
        lp.add_constraint(Constraint::ge(row, 0.0));
    }

    let c_req = inst.requirement_big_m();
    for (m, task) in inst.tasks.iter().enumerate() {
        let team: Vec<(usize, &[f64])> = (0..n_v)
            .map(|k| (index.y(k, m), inst.vehicles[k].capabilities.as_slice()))
            .collect();
        let lin = super::linearize_requirement(&mut lp, &task.requirement, index.z(m), &team, c_req)
            .map_err(|source| ModelError::Requirement { task: m, source })?;
        for w in lin.binaries() {
            debug_assert_eq!(w, integer.len());
            integer.push(true);
            index.w[m].push(w);
        }
        for r in lin.rows {
            lp.add_constraint(r);
        }
    }
    index.n_vars = lp.num_vars();

    let time_big_m = 10.0 * horizon;
    let m_scaled = time_big_m / horizon;
    let mut time_rows = Vec::new();
    for k in 0..n_v {
        for (a, b, c) in index.edges(k) {
            let e = inst.edge(k, a, b).unwrap();
            let service = match a {
                Node::Task(i) => inst.tasks[i].service[k],
                _ => 0.0,
            };
            // q_a - q_b + t + s <= C (1 - x), divided through by the horizon
            time_rows.push(Constraint::le(
                vec![(index.q(a), 1.0), (index.q(b), -1.0), (c, m_scaled)],
                m_scaled - (e.time + service) / horizon,
            ));
        }
    }

    let mut problem = MipProblem::new(lp, integer);
    problem.big_m = time_big_m;
    if opts.lazy_time_rows {
        problem.lazy = time_rows;
    } else {
        for r in time_rows {
            problem.lp.add_constraint(r);
        }
    }
    Ok(BuiltModel {
        problem,
        index,
        time_big_m,
        horizon,
    })
}

fn incoming(index: &VariableIndex, k: usize, m: usize) -> Vec<usize> {
    let mut v = vec![index.x(k, Node::Start(k), Node::Task(m)).unwrap()];
    v.extend((0..index.n_tasks()).filter_map(|i| index.x(k, Node::Task(i), Node::Task(m))));
    v
}

fn outgoing(index: &VariableIndex, k: usize, m: usize) -> Vec<usize> {
    let mut v = vec![index.x(k, Node::Task(m), Node::Terminal(k)).unwrap()];
    v.extend((0..index.n_tasks()).filter_map(|j| index.x(k, Node::Task(m), Node::Task(j))));
    v
}
