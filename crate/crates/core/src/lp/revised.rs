//! Revised bounded-variable simplex with a product-form inverse.
//!
//! The basis inverse is kept as a sequence of elementary transforms: column
//! etas from pivots and reinversion, and row etas from appended rows. Rows
//! and columns of the scaled constraint matrix are stored sparsely, so an
//! iteration costs a few sparse passes instead of a dense tableau update.

use super::{
    Constraint, LinearProgram, LpError, Relation, SimplexOptions, TableauStatus, FEASIBILITY_TOL, OPTIMALITY_TOL,
};

const PIVOT_TOL: f64 = 1e-7;
const DROP_TOL: f64 = 1e-13;
const BLAND_TRIGGER: usize = 60;
const REFACTOR_EVERY: usize = 80;
/// Temporary bound for columns whose cost sign points at an infinite bound.
const BOX: f64 = 1e7;
const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    /// Nonbasic at its current value, which need not be a bound.
    Free,
}

#[derive(Debug, Clone)]
enum Eta {
    /// Identity except column `pos`.
    Column {
        pos: usize,
        inv: f64,
        entries: Vec<(usize, f64)>,
    },
    /// Identity except row `pos`.
    Row { pos: usize, entries: Vec<(usize, f64)> },
}

#[derive(Debug, Clone, Default)]
struct Factor {
    etas: Vec<Eta>,
}

impl Factor {
    fn ftran(&self, v: &mut [f64]) {
        for e in &self.etas {
            match e {
                Eta::Column { pos, inv, entries } => {
                    let t = v[*pos];
                    if t != 0.0 {
                        v[*pos] = t * inv;
                        for &(i, a) in entries {
                            v[i] += a * t;
                        }
                    }
                }
                Eta::Row { pos, entries } => {
                    let s: f64 = entries.iter().map(|&(p, w)| w * v[p]).sum();
                    v[*pos] += s;
                }
            }
        }
    }

    fn btran(&self, v: &mut [f64]) {
        for e in self.etas.iter().rev() {
            match e {
                Eta::Column { pos, inv, entries } => {
                    let mut s = v[*pos] * inv;
                    for &(i, a) in entries {
                        s += a * v[i];
                    }
                    v[*pos] = s;
                }
                Eta::Row { pos, entries } => {
                    let t = v[*pos];
                    if t != 0.0 {
                        for &(p, w) in entries {
                            v[p] += w * t;
                        }
                    }
                }
            }
        }
    }

    fn push_column(&mut self, pos: usize, alpha: &[f64]) {
        let inv = 1.0 / alpha[pos];
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != pos && a.abs() > DROP_TOL)
            .map(|(i, &a)| (i, -a * inv))
            .collect();
        self.etas.push(Eta::Column { pos, inv, entries });
    }
}

fn row_scale_of(c: &Constraint) -> f64 {
    let s = c.coeffs.iter().fold(0.0_f64, |m, &(_, a)| m.max(a.abs()));
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

fn slack_bounds(rel: Relation) -> (f64, f64) {
    match rel {
        Relation::Le => (0.0, f64::INFINITY),
        Relation::Ge => (f64::NEG_INFINITY, 0.0),
        Relation::Eq => (0.0, 0.0),
    }
}

enum PrimalEnd {
    Optimal,
    Unbounded,
}

/// Simplex state over `(a_i / s_i) x + slack_i = b_i / s_i`, with the slack
/// of row `i` stored as column `n_struct + i`.
#[derive(Debug, Clone)]
pub struct RevisedSimplex {
    n_struct: usize,
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    cost: Vec<f64>,
    objective: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    x: Vec<f64>,
    d: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    pos: Vec<usize>,
    factor: Factor,
    constraints: Vec<Constraint>,
    row_scale: Vec<f64>,
    opts: SimplexOptions,
    pivots_total: usize,
    pivots_in_solve: usize,
    updates: usize,
    degenerate_run: usize,
    col_work: Vec<f64>,
    row_work: Vec<f64>,
    alpha: Vec<f64>,
    marked: Vec<bool>,
    touched: Vec<usize>,
}

impl RevisedSimplex {
    /// Builds the problem with an all-slack basis; call [`Self::solve`] next.
    pub fn new(lp: &LinearProgram, opts: SimplexOptions) -> Self {
        let n_struct = lp.num_vars();
        let obj_scale = lp.objective.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
        let obj_scale = if obj_scale > 0.0 { obj_scale } else { 1.0 };
        let mut s = RevisedSimplex {
            n_struct,
            m: 0,
            cols: vec![Vec::new(); n_struct],
            rows: Vec::new(),
            b: Vec::new(),
            cost: lp.objective.iter().map(|c| c / obj_scale).collect(),
            objective: lp.objective.clone(),
            lb: lp.lower.clone(),
            ub: lp.upper.clone(),
            x: vec![0.0; n_struct],
            d: vec![0.0; n_struct],
            state: vec![State::Lower; n_struct],
            basis: Vec::new(),
            pos: vec![NONE; n_struct],
            factor: Factor::default(),
            constraints: Vec::new(),
            row_scale: Vec::new(),
            opts,
            pivots_total: 0,
            pivots_in_solve: 0,
            updates: 0,
            degenerate_run: 0,
            col_work: Vec::new(),
            row_work: Vec::new(),
            alpha: vec![0.0; n_struct],
            marked: vec![false; n_struct],
            touched: Vec::new(),
        };
        for j in 0..n_struct {
            let (lo, hi) = (s.lb[j], s.ub[j]);
            let (v, st) = if lo.is_finite() {
                (lo, State::Lower)
            } else if hi.is_finite() {
                (hi, State::Upper)
            } else {
                (0.0, State::Free)
            };
            s.x[j] = v;
            s.state[j] = st;
        }
        for c in &lp.constraints {
            s.append_row(c);
        }
        s.compute_primal();
        s
    }

    /// Stores a row with its slack basic at the new last position, without
    /// touching the factorization.
    fn append_row(&mut self, c: &Constraint) -> usize {
        let i = self.m;
        let sc = row_scale_of(c);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(c.coeffs.len());
        for &(j, a) in &c.coeffs {
            match entries.iter_mut().find(|e| e.0 == j) {
                Some(e) => e.1 += a / sc,
                None => entries.push((j, a / sc)),
            }
        }
        entries.retain(|e| e.1 != 0.0);
        for &(j, a) in &entries {
            self.cols[j].push((i, a));
        }
        self.rows.push(entries);
        self.b.push(c.rhs / sc);
        self.constraints.push(c.clone());
        self.row_scale.push(sc);
        let (lo, hi) = slack_bounds(c.relation);
        let slack = self.n_struct + i;
        self.lb.push(lo);
        self.ub.push(hi);
        self.x.push(0.0);
        self.d.push(0.0);
        self.cost.push(0.0);
        self.state.push(State::Basic);
        self.pos.push(i);
        self.basis.push(slack);
        self.alpha.push(0.0);
        self.marked.push(false);
        self.m += 1;
        self.col_work.resize(self.m, 0.0);
        self.row_work.resize(self.m, 0.0);
        i
    }

    fn n(&self) -> usize {
        self.n_struct + self.m
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn num_structural(&self) -> usize {
        self.n_struct
    }

    pub fn pivots(&self) -> usize {
        self.pivots_total
    }

    pub fn values(&self) -> &[f64] {
        &self.x[..self.n_struct]
    }

    pub fn objective_value(&self) -> f64 {
        self.objective
            .iter()
            .zip(&self.x[..self.n_struct])
            .map(|(c, v)| c * v)
            .sum()
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lb[j], self.ub[j])
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.ub[j] - self.lb[j] <= 0.0
    }

    /// Dense column `j` of `[A | I]` in row coordinates.
    fn load_column(&self, j: usize, v: &mut [f64]) {
        v.iter_mut().for_each(|e| *e = 0.0);
        if j < self.n_struct {
            for &(i, a) in &self.cols[j] {
                v[i] = a;
            }
        } else {
            v[j - self.n_struct] = 1.0;
        }
    }

    /// Basic values from `B^-1 (b - N x_N)`.
    fn compute_primal(&mut self) {
        let mut v = std::mem::take(&mut self.col_work);
        v.copy_from_slice(&self.b);
        for j in 0..self.n_struct {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                for &(i, a) in &self.cols[j] {
                    v[i] -= a * xj;
                }
            }
        }
        for i in 0..self.m {
            let j = self.n_struct + i;
            if self.state[j] != State::Basic {
                v[i] -= self.x[j];
            }
        }
        self.factor.ftran(&mut v);
        for (p, &j) in self.basis.iter().enumerate() {
            self.x[j] = v[p];
        }
        self.col_work = v;
    }

    /// Reduced costs from the duals `c_B^T B^-1`.
    fn compute_duals(&mut self) {
        let mut y = std::mem::take(&mut self.row_work);
        for (p, &j) in self.basis.iter().enumerate() {
            y[p] = self.cost[j];
        }
        self.factor.btran(&mut y);
        for j in 0..self.n_struct {
            self.d[j] = if self.state[j] == State::Basic {
                0.0
            } else {
                self.cost[j] - self.cols[j].iter().map(|&(i, a)| a * y[i]).sum::<f64>()
            };
        }
        for i in 0..self.m {
            let j = self.n_struct + i;
            self.d[j] = if self.state[j] == State::Basic { 0.0 } else { -y[i] };
        }
        self.row_work = y;
    }

    /// Row `r` of `B^-1 [A | I]` over nonbasic columns, left in `alpha` for
    /// the indices listed in `touched`.
    fn compute_pivot_row(&mut self, r: usize) {
        for &j in &self.touched {
            self.alpha[j] = 0.0;
            self.marked[j] = false;
        }
        self.touched.clear();
        let mut rho = std::mem::take(&mut self.row_work);
        rho.iter_mut().for_each(|e| *e = 0.0);
        rho[r] = 1.0;
        self.factor.btran(&mut rho);
        for (i, &ri) in rho.iter().enumerate() {
            if ri == 0.0 {
                continue;
            }
            for &(j, a) in &self.rows[i] {
                if self.state[j] == State::Basic {
                    continue;
                }
                if !self.marked[j] {
                    self.marked[j] = true;
                    self.touched.push(j);
                }
                self.alpha[j] += ri * a;
            }
            let slack = self.n_struct + i;
            if self.state[slack] != State::Basic {
                self.alpha[slack] = ri;
                self.marked[slack] = true;
                self.touched.push(slack);
            }
        }
        self.row_work = rho;
    }

    fn check_pivot_budget(&self) -> Result<(), LpError> {
        if self.pivots_in_solve >= self.opts.max_pivots {
            Err(LpError::IterationLimit(self.opts.max_pivots))
        } else {
            Ok(())
        }
    }

    /// Replaces the basic column at position `r` by `q`, with `col` holding
    /// `B^-1 a_q`. Reduced costs are updated from the pivot row in `alpha`.
    fn exchange(&mut self, r: usize, q: usize, leaving_state: State) {
        let col = std::mem::take(&mut self.col_work);
        let arq = col[r];
        let theta_d = self.d[q] / arq;
        if theta_d != 0.0 {
            for &j in &self.touched {
                if self.state[j] != State::Basic {
                    self.d[j] -= theta_d * self.alpha[j];
                }
            }
        }
        let l = self.basis[r];
        self.d[l] = -theta_d;
        self.d[q] = 0.0;
        self.factor.push_column(r, &col);
        self.col_work = col;
        self.basis[r] = q;
        self.pos[q] = r;
        self.pos[l] = NONE;
        self.state[q] = State::Basic;
        self.state[l] = if self.is_fixed(l) { State::Lower } else { leaving_state };
        self.pivots_total += 1;
        self.pivots_in_solve += 1;
        self.updates += 1;
    }

    /// Moves every basic value by `-step * col`.
    fn shift_basics(&mut self, step: f64) {
        if step == 0.0 {
            return;
        }
        for (p, &j) in self.basis.iter().enumerate() {
            let a = self.col_work[p];
            if a != 0.0 {
                self.x[j] -= step * a;
            }
        }
    }

    fn pivot_mismatch(&self, r: usize, q: usize) -> bool {
        let a1 = self.alpha[q];
        let a2 = self.col_work[r];
        (a1 - a2).abs() > 1e-7 * (1.0 + a1.abs().max(a2.abs()))
    }

    fn dual(&mut self) -> Result<TableauStatus, LpError> {
        let mut retried = false;
        loop {
            self.check_pivot_budget()?;
            if self.updates >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let bland = self.degenerate_run > BLAND_TRIGGER;
            let mut r = NONE;
            let mut worst = 0.0;
            let mut below = false;
            for (p, &j) in self.basis.iter().enumerate() {
                let v = self.x[j];
                let (viol, is_below) = if v < self.lb[j] - FEASIBILITY_TOL {
                    (self.lb[j] - v, true)
                } else if v > self.ub[j] + FEASIBILITY_TOL {
                    (v - self.ub[j], false)
                } else {
                    continue;
                };
                let take = if bland {
                    r == NONE || j < self.basis[r]
                } else {
                    viol > worst
                };
                if take {
                    r = p;
                    worst = viol;
                    below = is_below;
                }
            }
            if r == NONE {
                return Ok(TableauStatus::Optimal);
            }
            self.compute_pivot_row(r);
            let eligible = |st: State, a: f64| -> bool {
                match st {
                    State::Lower => (below && a < -PIVOT_TOL) || (!below && a > PIVOT_TOL),
                    State::Upper => (below && a > PIVOT_TOL) || (!below && a < -PIVOT_TOL),
                    State::Free => a.abs() > PIVOT_TOL,
                    State::Basic => false,
                }
            };
            let dual_slack = |st: State, d: f64| -> f64 {
                match st {
                    State::Lower => d,
                    State::Upper => -d,
                    _ => d.abs(),
                }
            };
            let mut relaxed_min = f64::INFINITY;
            for &j in &self.touched {
                let a = self.alpha[j];
                if self.is_fixed(j) || !eligible(self.state[j], a) {
                    continue;
                }
                let s = dual_slack(self.state[j], self.d[j]).max(0.0);
                relaxed_min = relaxed_min.min((s + OPTIMALITY_TOL) / a.abs());
            }
            if relaxed_min == f64::INFINITY {
                if self.updates > 0 && !retried {
                    retried = true;
                    self.refactor()?;
                    continue;
                }
                return Ok(TableauStatus::Infeasible);
            }
            let mut q = NONE;
            let mut q_abs = 0.0;
            let mut q_ratio = f64::INFINITY;
            for &j in &self.touched {
                let a = self.alpha[j];
                if self.is_fixed(j) || !eligible(self.state[j], a) {
                    continue;
                }
                let ratio = dual_slack(self.state[j], self.d[j]).max(0.0) / a.abs();
                if ratio > relaxed_min {
                    continue;
                }
                let better = if bland {
                    ratio < q_ratio - 1e-15 || (ratio <= q_ratio + 1e-15 && j < q)
                } else {
                    a.abs() > q_abs
                };
                if better {
                    q = j;
                    q_abs = a.abs();
                    q_ratio = ratio;
                }
            }
            let mut col = std::mem::take(&mut self.col_work);
            self.load_column(q, &mut col);
            self.factor.ftran(&mut col);
            self.col_work = col;
            if self.pivot_mismatch(r, q) && self.updates > 0 {
                self.refactor()?;
                continue;
            }
            retried = false;
            let l = self.basis[r];
            let target = if below { self.lb[l] } else { self.ub[l] };
            let step = (self.x[l] - target) / self.col_work[r];
            self.degenerate_run = if q_ratio < 1e-12 { self.degenerate_run + 1 } else { 0 };
            self.shift_basics(step);
            self.x[q] += step;
            self.x[l] = target;
            self.exchange(r, q, if below { State::Lower } else { State::Upper });
        }
    }

    fn primal(&mut self) -> Result<PrimalEnd, LpError> {
        loop {
            self.check_pivot_budget()?;
            if self.updates >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let bland = self.degenerate_run > BLAND_TRIGGER;
            let mut q = NONE;
            let mut best = 0.0;
            for j in 0..self.n() {
                let st = self.state[j];
                if st == State::Basic || self.is_fixed(j) {
                    continue;
                }
                let d = self.d[j];
                let score = match st {
                    State::Lower if d < -OPTIMALITY_TOL => -d,
                    State::Upper if d > OPTIMALITY_TOL => d,
                    State::Free if d.abs() > OPTIMALITY_TOL => {
                        let room = if d < 0.0 {
                            self.ub[j] - self.x[j]
                        } else {
                            self.x[j] - self.lb[j]
                        };
                        if room <= 0.0 {
                            continue;
                        }
                        d.abs()
                    }
                    _ => continue,
                };
                if bland {
                    q = j;
                    break;
                }
                if score > best {
                    best = score;
                    q = j;
                }
            }
            if q == NONE {
                return Ok(PrimalEnd::Optimal);
            }
            let dir = if self.d[q] < 0.0 { 1.0 } else { -1.0 };
            let mut col = std::mem::take(&mut self.col_work);
            self.load_column(q, &mut col);
            self.factor.ftran(&mut col);
            self.col_work = col;
            let room = |p: usize, s: &Self| -> Option<(f64, f64)> {
                let j = s.basis[p];
                let a = dir * s.col_work[p];
                if a > PIVOT_TOL && s.lb[j].is_finite() {
                    Some((s.x[j] - s.lb[j], a))
                } else if a < -PIVOT_TOL && s.ub[j].is_finite() {
                    Some((s.ub[j] - s.x[j], -a))
                } else {
                    None
                }
            };
            let mut relaxed_min = f64::INFINITY;
            for p in 0..self.m {
                if let Some((lim, a)) = room(p, self) {
                    relaxed_min = relaxed_min.min((lim.max(0.0) + FEASIBILITY_TOL) / a);
                }
            }
            let mut r = NONE;
            let mut r_abs = 0.0;
            let mut r_ratio = f64::INFINITY;
            for p in 0..self.m {
                if let Some((lim, a)) = room(p, self) {
                    let ratio = lim.max(0.0) / a;
                    if ratio > relaxed_min {
                        continue;
                    }
                    let better = if bland {
                        ratio < r_ratio - 1e-15
                            || (ratio <= r_ratio + 1e-15 && (r == NONE || self.basis[p] < self.basis[r]))
                    } else {
                        a > r_abs
                    };
                    if better {
                        r = p;
                        r_abs = a;
                        r_ratio = ratio;
                    }
                }
            }
            let flip = if dir > 0.0 {
                self.ub[q] - self.x[q]
            } else {
                self.x[q] - self.lb[q]
            };
            if r == NONE && flip == f64::INFINITY {
                return Ok(PrimalEnd::Unbounded);
            }
            if r == NONE || flip <= r_ratio {
                let step = dir * flip;
                self.shift_basics(step);
                self.x[q] += step;
                self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
                self.x[q] = if dir > 0.0 { self.ub[q] } else { self.lb[q] };
                self.degenerate_run = 0;
                continue;
            }
            self.compute_pivot_row(r);
            if self.pivot_mismatch(r, q) && self.updates > 0 {
                self.refactor()?;
                continue;
            }
            let l = self.basis[r];
            let to_lower = dir * self.col_work[r] > 0.0;
            let target = if to_lower { self.lb[l] } else { self.ub[l] };
            let step = dir * r_ratio;
            self.degenerate_run = if r_ratio < 1e-12 { self.degenerate_run + 1 } else { 0 };
            self.shift_basics(step);
            self.x[q] += step;
            self.x[l] = target;
            self.exchange(r, q, if to_lower { State::Lower } else { State::Upper });
        }
    }

    /// Moves nonbasic columns to the bound their reduced cost asks for.
    /// Returns false when some column would need an infinite bound.
    fn restore_dual_feasibility(&mut self) -> bool {
        let mut ok = true;
        for j in 0..self.n() {
            let st = self.state[j];
            if st == State::Basic || self.is_fixed(j) {
                continue;
            }
            let d = self.d[j];
            if d > OPTIMALITY_TOL && st != State::Lower {
                if self.lb[j].is_finite() {
                    self.x[j] = self.lb[j];
                    self.state[j] = State::Lower;
                } else {
                    ok = false;
                }
            } else if d < -OPTIMALITY_TOL && st != State::Upper {
                if self.ub[j].is_finite() {
                    self.x[j] = self.ub[j];
                    self.state[j] = State::Upper;
                } else {
                    ok = false;
                }
            }
        }
        ok
    }

    fn primal_infeasibility(&self) -> f64 {
        self.basis
            .iter()
            .map(|&j| (self.lb[j] - self.x[j]).max(self.x[j] - self.ub[j]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Dual simplex to primal feasibility, then primal passes until both
    /// sides agree.
    fn dual_then_primal(&mut self) -> Result<TableauStatus, LpError> {
        for _ in 0..4 {
            if self.dual()? == TableauStatus::Infeasible {
                return Ok(TableauStatus::Infeasible);
            }
            self.degenerate_run = 0;
            if let PrimalEnd::Unbounded = self.primal()? {
                return Ok(TableauStatus::Unbounded);
            }
            self.compute_primal();
            if self.primal_infeasibility() <= FEASIBILITY_TOL {
                return Ok(TableauStatus::Optimal);
            }
            self.degenerate_run = 0;
        }
        Err(LpError::SingularBasis)
    }

    /// Solves from the current basis, boxing columns whose cost points at
    /// an infinite bound so the dual simplex can start.
    pub fn solve(&mut self) -> Result<TableauStatus, LpError> {
        self.pivots_in_solve = 0;
        self.degenerate_run = 0;
        self.refactor()?;
        let mut boxed = Vec::new();
        for j in 0..self.n() {
            if self.state[j] == State::Basic || self.is_fixed(j) {
                continue;
            }
            let d = self.d[j];
            if d > OPTIMALITY_TOL && !self.lb[j].is_finite() {
                boxed.push((j, self.lb[j], self.ub[j]));
                self.lb[j] = -BOX;
            } else if d < -OPTIMALITY_TOL && !self.ub[j].is_finite() {
                boxed.push((j, self.lb[j], self.ub[j]));
                self.ub[j] = BOX;
            }
        }
        self.restore_dual_feasibility();
        self.compute_primal();
        let status = self.dual()?;
        for &(j, lo, hi) in &boxed {
            self.lb[j] = lo;
            self.ub[j] = hi;
            if self.state[j] != State::Basic {
                self.state[j] = State::Free;
            }
        }
        if status == TableauStatus::Infeasible {
            return Ok(status);
        }
        self.degenerate_run = 0;
        if let PrimalEnd::Unbounded = self.primal()? {
            return Ok(TableauStatus::Unbounded);
        }
        self.compute_primal();
        if self.primal_infeasibility() > FEASIBILITY_TOL {
            self.degenerate_run = 0;
            return self.dual_then_primal();
        }
        Ok(TableauStatus::Optimal)
    }

    /// Changes the bounds of a column. A nonbasic column is placed on the
    /// bound matching its reduced-cost sign.
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lb[j] = lo;
        self.ub[j] = hi;
        if self.state[j] == State::Basic {
            return;
        }
        let dj = self.d[j];
        let (val, st) =
            if lo.is_finite() && (dj > 0.0 || !hi.is_finite() || (dj == 0.0 && self.state[j] != State::Upper)) {
                (lo, State::Lower)
            } else if hi.is_finite() {
                (hi, State::Upper)
            } else if lo.is_finite() {
                (lo, State::Lower)
            } else {
                (self.x[j], State::Free)
            };
        self.x[j] = val;
        self.state[j] = st;
    }

    /// Appends a row. Its slack becomes basic, so dual feasibility is kept.
    pub fn add_row(&mut self, c: &Constraint) {
        let i = self.append_row(c);
        let entries: Vec<(usize, f64)> = self.rows[i]
            .iter()
            .filter(|&&(j, _)| self.state[j] == State::Basic)
            .map(|&(j, a)| (self.pos[j], -a))
            .collect();
        if !entries.is_empty() {
            self.factor.etas.push(Eta::Row { pos: i, entries });
        }
        let activity: f64 = self.rows[i].iter().map(|&(j, a)| a * self.x[j]).sum();
        let slack = self.n_struct + i;
        self.x[slack] = self.b[i] - activity;
    }

    /// Largest scaled residual of `A x + slack = b` over all rows.
    pub fn residual(&self) -> f64 {
        (0..self.m)
            .map(|i| {
                let lhs: f64 =
                    self.rows[i].iter().map(|&(j, a)| a * self.x[j]).sum::<f64>() + self.x[self.n_struct + i];
                (lhs - self.b[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Rebuilds the product-form inverse of the current basis. Columns that
    /// turn out dependent are replaced by slacks and left nonbasic.
    pub fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let n_struct = self.n_struct;
        self.factor = Factor::default();
        let mut at = vec![NONE; m];
        let mut structs = Vec::new();
        for &j in &self.basis {
            if j >= n_struct {
                at[j - n_struct] = j;
            } else {
                structs.push(j);
            }
        }
        structs.sort_by_key(|&j| (self.cols[j].len(), j));
        let mut v = vec![0.0; m];
        let mut dropped = Vec::new();
        for j in structs {
            self.load_column(j, &mut v);
            self.factor.ftran(&mut v);
            let mut best = NONE;
            let mut best_abs = 1e-9;
            for (p, &a) in v.iter().enumerate() {
                if at[p] == NONE && a.abs() > best_abs {
                    best_abs = a.abs();
                    best = p;
                }
            }
            if best == NONE {
                dropped.push(j);
                continue;
            }
            self.factor.push_column(best, &v);
            at[best] = j;
        }
        for (p, slot) in at.iter_mut().enumerate() {
            if *slot == NONE {
                *slot = n_struct + p;
            }
        }
        for &j in &self.basis {
            self.pos[j] = NONE;
        }
        self.basis = at;
        for (p, &j) in self.basis.iter().enumerate() {
            self.pos[j] = p;
            self.state[j] = State::Basic;
        }
        for j in dropped {
            let v = self.x[j].clamp(self.lb[j], self.ub[j]);
            self.x[j] = v;
            self.state[j] = if v == self.lb[j] {
                State::Lower
            } else if v == self.ub[j] {
                State::Upper
            } else {
                State::Free
            };
        }
        self.updates = 0;
        self.compute_primal();
        self.compute_duals();
        Ok(())
    }

    /// Re-optimizes after bound changes or appended rows.
    pub fn reoptimize(&mut self) -> Result<TableauStatus, LpError> {
        self.pivots_in_solve = 0;
        self.degenerate_run = 0;
        if self.updates >= REFACTOR_EVERY / 2 {
            self.refactor()?;
        } else {
            self.compute_primal();
        }
        if !self.restore_dual_feasibility() {
            return self.restart();
        }
        self.compute_primal();
        self.dual_then_primal()
    }

    /// Starts over from a slack basis with the current bounds and rows.
    pub fn restart(&mut self) -> Result<TableauStatus, LpError> {
        let lp = LinearProgram {
            objective: self.objective.clone(),
            constraints: self.constraints.clone(),
            lower: self.lb[..self.n_struct].to_vec(),
            upper: self.ub[..self.n_struct].to_vec(),
        };
        let total = self.pivots_total;
        *self = RevisedSimplex::new(&lp, self.opts);
        let status = self.solve();
        self.pivots_total += total;
        status
    }

    #[cfg(test)]
    pub(crate) fn reduced_costs_ok(&self) -> bool {
        (0..self.n()).all(|j| match self.state[j] {
            State::Basic => true,
            _ if self.is_fixed(j) => true,
            State::Lower => self.d[j] >= -1e-7,
            State::Upper => self.d[j] <= 1e-7,
            State::Free => self.d[j].abs() <= 1e-7,
        })
    }
}
