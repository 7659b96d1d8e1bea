use super::{Constraint, LinearProgram, LpError, Relation, SimplexOptions, FEASIBILITY_TOL, OPTIMALITY_TOL};

const PIVOT_TOL: f64 = 1e-7;
const DROP_TOL: f64 = 1e-14;
const BLAND_TRIGGER: usize = 60;
const REFRESH_EVERY: usize = 100;
const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Structural,
    Slack,
    /// Phase-one artificial for the given row with coefficient `sign`.
    Artificial {
        row: usize,
        sign: i8,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableauStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

enum PrimalEnd {
    Optimal,
    Unbounded,
}

/// Dense simplex tableau `B^-1 [A | I]` with bounded columns.
///
/// Row `i` holds `(a_i / s_i) x + slack_i = b_i / s_i` where `s_i` is the
/// largest coefficient magnitude of the row. Slack bounds encode the row
/// relation: `[0, inf)` for `<=`, `(-inf, 0]` for `>=`, `[0, 0]` for `=`.
#[derive(Debug, Clone)]
pub struct Tableau {
    m: usize,
    n: usize,
    stride: usize,
    t: Vec<f64>,
    rhs: Vec<f64>,
    d: Vec<f64>,
    cost: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    kind: Vec<Kind>,
    basis: Vec<usize>,
    pos: Vec<usize>,
    n_struct: usize,
    objective: Vec<f64>,
    obj_scale: f64,
    rows: Vec<Constraint>,
    row_scale: Vec<f64>,
    slack_of_row: Vec<usize>,
    opts: SimplexOptions,
    pivots_total: usize,
    pivots_in_solve: usize,
    pivots_since_refactor: usize,
    degenerate_run: usize,
    since_refresh: usize,
    scratch: Vec<usize>,
    scratch_vals: Vec<f64>,
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

impl Tableau {
    /// Builds a tableau with a slack/artificial starting basis.
    pub fn new(lp: &LinearProgram, opts: SimplexOptions) -> Self {
        let n_struct = lp.num_vars();
        let m = lp.constraints.len();
        let obj_scale = lp.objective.iter().fold(0.0_f64, |a, c| a.max(c.abs())).max(1e-300);
        let obj_scale = if obj_scale > 1e-300 { obj_scale } else { 1.0 };
        let mut tab = Tableau {
            m: 0,
            n: n_struct,
            stride: n_struct + 2 * m + 16,
            t: Vec::new(),
            rhs: Vec::with_capacity(m),
            d: vec![0.0; n_struct],
            cost: lp.objective.iter().map(|c| c / obj_scale).collect(),
            lb: lp.lower.clone(),
            ub: lp.upper.clone(),
            x: vec![0.0; n_struct],
            state: vec![State::Lower; n_struct],
            kind: vec![Kind::Structural; n_struct],
            basis: Vec::with_capacity(m),
            pos: vec![NONE; n_struct],
            n_struct,
            objective: lp.objective.clone(),
            obj_scale,
            rows: Vec::with_capacity(m),
            row_scale: Vec::with_capacity(m),
            slack_of_row: Vec::with_capacity(m),
            opts,
            pivots_total: 0,
            pivots_in_solve: 0,
            pivots_since_refactor: 0,
            degenerate_run: 0,
            since_refresh: 0,
            scratch: Vec::new(),
            scratch_vals: Vec::new(),
        };
        for j in 0..n_struct {
            let (lo, hi) = (tab.lb[j], tab.ub[j]);
            if lo.is_finite() {
                tab.x[j] = lo;
                tab.state[j] = State::Lower;
            } else if hi.is_finite() {
                tab.x[j] = hi;
                tab.state[j] = State::Upper;
            } else {
                tab.x[j] = 0.0;
                tab.state[j] = State::Free;
            }
        }
        // Slack columns first so their indices are n_struct + i.
        for c in &lp.constraints {
            let (lo, hi) = slack_bounds(c.relation);
            tab.push_column(Kind::Slack, lo, hi);
        }
        tab.t = vec![0.0; m * tab.stride];
        let mut artificials = Vec::new();
        for (i, c) in lp.constraints.iter().enumerate() {
            let s = row_scale_of(c);
            let slack = n_struct + i;
            let off = i * tab.stride;
            for &(j, a) in &c.coeffs {
                tab.t[off + j] += a / s;
            }
            tab.t[off + slack] = 1.0;
            let r = (c.rhs - c.activity(&tab.x)) / s;
            tab.rows.push(c.clone());
            tab.row_scale.push(s);
            tab.slack_of_row.push(slack);
            tab.rhs.push(c.rhs / s);
            tab.basis.push(slack);
            tab.pos[slack] = i;
            tab.state[slack] = State::Basic;
            tab.x[slack] = r;
            let (lo, hi) = (tab.lb[slack], tab.ub[slack]);
            if r < lo - FEASIBILITY_TOL || r > hi + FEASIBILITY_TOL {
                artificials.push((i, r));
            }
        }
        tab.m = m;
        for (i, r) in artificials {
            let slack = n_struct + i;
            let v = r.clamp(tab.lb[slack], tab.ub[slack]);
            let resid = r - v;
            let sign: i8 = if resid > 0.0 { 1 } else { -1 };
            tab.x[slack] = v;
            tab.state[slack] = if v == tab.lb[slack] { State::Lower } else { State::Upper };
            tab.pos[slack] = NONE;
            let art = tab.push_column(Kind::Artificial { row: i, sign }, 0.0, f64::INFINITY);
            let off = i * tab.stride;
            tab.t[off + art] = f64::from(sign);
            if sign < 0 {
                for v in &mut tab.t[off..off + tab.n] {
                    *v = -*v;
                }
                tab.rhs[i] = -tab.rhs[i];
            }
            tab.basis[i] = art;
            tab.pos[art] = i;
            tab.state[art] = State::Basic;
            tab.x[art] = resid.abs();
        }
        tab
    }

    fn push_column(&mut self, kind: Kind, lo: f64, hi: f64) -> usize {
        let j = self.n;
        if j >= self.stride {
            self.grow_stride(j + 1);
        }
        self.n += 1;
        self.kind.push(kind);
        self.lb.push(lo);
        self.ub.push(hi);
        self.x.push(0.0);
        self.d.push(0.0);
        self.cost.push(0.0);
        self.state.push(State::Lower);
        self.pos.push(NONE);
        j
    }

    fn grow_stride(&mut self, min_cols: usize) {
        let new_stride = (self.stride * 3 / 2).max(min_cols + 16);
        let mut t = vec![0.0; self.m.max(self.rhs.len()) * new_stride];
        for i in 0..self.m {
            t[i * new_stride..i * new_stride + self.n]
                .copy_from_slice(&self.t[i * self.stride..i * self.stride + self.n]);
        }
        self.t = t;
        self.stride = new_stride;
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
        &self.rows
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.stride + j]
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.ub[j] - self.lb[j] <= 0.0
    }

    fn compute_reduced_costs(&mut self) {
        let n = self.n;
        let mut d = self.cost[..n].to_vec();
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.stride..i * self.stride + n];
                for (dj, &a) in d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
        for i in 0..self.m {
            d[self.basis[i]] = 0.0;
        }
        self.d = d;
    }

    /// Recomputes basic values from `B^-1 b` and the nonbasic values.
    fn refresh_basic_values(&mut self) {
        let nz: Vec<(usize, f64)> = (0..self.n)
            .filter(|&j| self.state[j] != State::Basic && self.x[j] != 0.0)
            .map(|j| (j, self.x[j]))
            .collect();
        for i in 0..self.m {
            let off = i * self.stride;
            let mut v = self.rhs[i];
            for &(j, xj) in &nz {
                v -= self.t[off + j] * xj;
            }
            self.x[self.basis[i]] = v;
        }
        self.since_refresh = 0;
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let stride = self.stride;
        let n = self.n;
        let off_r = r * stride;
        let piv = self.t[off_r + q];
        let inv = 1.0 / piv;
        self.scratch.clear();
        self.scratch_vals.clear();
        for j in 0..n {
            let v = self.t[off_r + j];
            if v != 0.0 {
                let nv = v * inv;
                if nv.abs() < DROP_TOL {
                    self.t[off_r + j] = 0.0;
                } else {
                    self.t[off_r + j] = nv;
                    self.scratch.push(j);
                    self.scratch_vals.push(nv);
                }
            }
        }
        self.t[off_r + q] = 1.0;
        self.rhs[r] *= inv;
        let rhs_r = self.rhs[r];
        let (before, rest) = self.t.split_at_mut(off_r);
        let (_, after) = rest.split_at_mut(stride);
        let idx = &self.scratch;
        let vals = &self.scratch_vals;
        let eliminate = |row: &mut [f64], rhs: &mut f64| {
            let f = row[q];
            if f != 0.0 {
                for (&j, &v) in idx.iter().zip(vals) {
                    row[j] -= f * v;
                }
                row[q] = 0.0;
                *rhs -= f * rhs_r;
            }
        };
        for (i, row) in before.chunks_exact_mut(stride).enumerate() {
            eliminate(&mut row[..n], &mut self.rhs[i]);
        }
        for (k, row) in after.chunks_mut(stride).take(self.m - r - 1).enumerate() {
            eliminate(&mut row[..n], &mut self.rhs[r + 1 + k]);
        }
        let f = self.d[q];
        if f != 0.0 {
            for (&j, &v) in idx.iter().zip(vals) {
                self.d[j] -= f * v;
            }
        }
        self.d[q] = 0.0;
        let leaving = self.basis[r];
        self.pos[leaving] = NONE;
        self.basis[r] = q;
        self.pos[q] = r;
        self.state[q] = State::Basic;
        self.pivots_total += 1;
        self.pivots_in_solve += 1;
        self.pivots_since_refactor += 1;
        self.since_refresh += 1;
    }

    fn check_pivot_budget(&self) -> Result<(), LpError> {
        if self.pivots_in_solve >= self.opts.max_pivots {
            Err(LpError::IterationLimit(self.opts.max_pivots))
        } else {
            Ok(())
        }
    }

    /// Moves the basic values by a step of `delta` in nonbasic column `q`.
    fn shift_basics(&mut self, q: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        for i in 0..self.m {
            let a = self.t[i * self.stride + q];
            if a != 0.0 {
                self.x[self.basis[i]] -= a * delta;
            }
        }
    }

    fn primal(&mut self) -> Result<PrimalEnd, LpError> {
        loop {
            self.check_pivot_budget()?;
            if self.since_refresh >= REFRESH_EVERY {
                self.refresh_basic_values();
            }
            let bland = self.degenerate_run > BLAND_TRIGGER;
            let mut enter = NONE;
            let mut enter_dir = 0.0;
            let mut best = 0.0;
            for j in 0..self.n {
                let st = self.state[j];
                if st == State::Basic || self.is_fixed(j) {
                    continue;
                }
                let dj = self.d[j];
                let dir = match st {
                    State::Lower if dj < -OPTIMALITY_TOL => 1.0,
                    State::Upper if dj > OPTIMALITY_TOL => -1.0,
                    State::Free if dj.abs() > OPTIMALITY_TOL => -dj.signum(),
                    _ => continue,
                };
                if bland {
                    enter = j;
                    enter_dir = dir;
                    break;
                }
                if dj.abs() > best {
                    best = dj.abs();
                    enter = j;
                    enter_dir = dir;
                }
            }
            if enter == NONE {
                return Ok(PrimalEnd::Optimal);
            }
            let q = enter;
            let dir = enter_dir;
            let flip = self.ub[q] - self.lb[q];
            // Harris two-pass ratio test.
            let mut relaxed_min = f64::INFINITY;
            for i in 0..self.m {
                let a = self.at(i, q);
                if a.abs() < PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let rate = -a * dir;
                let lim = if rate < 0.0 {
                    if self.lb[b].is_finite() {
                        (self.x[b] - self.lb[b] + FEASIBILITY_TOL) / -rate
                    } else {
                        continue;
                    }
                } else if self.ub[b].is_finite() {
                    (self.ub[b] - self.x[b] + FEASIBILITY_TOL) / rate
                } else {
                    continue;
                };
                relaxed_min = relaxed_min.min(lim);
            }
            if relaxed_min == f64::INFINITY && !flip.is_finite() {
                return Ok(PrimalEnd::Unbounded);
            }
            let mut leave = NONE;
            let mut leave_ratio = f64::INFINITY;
            let mut leave_abs = 0.0;
            let mut leave_to_upper = false;
            for i in 0..self.m {
                let a = self.at(i, q);
                if a.abs() < PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let rate = -a * dir;
                let (ratio, to_upper) = if rate < 0.0 {
                    if !self.lb[b].is_finite() {
                        continue;
                    }
                    ((self.x[b] - self.lb[b]) / -rate, false)
                } else {
                    if !self.ub[b].is_finite() {
                        continue;
                    }
                    ((self.ub[b] - self.x[b]) / rate, true)
                };
                if ratio > relaxed_min {
                    continue;
                }
                let better = if bland {
                    ratio < leave_ratio - 1e-12
                        || (ratio <= leave_ratio + 1e-12 && (leave == NONE || b < self.basis[leave]))
                } else {
                    a.abs() > leave_abs
                };
                if better {
                    leave = i;
                    leave_ratio = ratio;
                    leave_abs = a.abs();
                    leave_to_upper = to_upper;
                }
            }
            if leave == NONE || flip <= leave_ratio.max(0.0) {
                if !flip.is_finite() {
                    return Ok(PrimalEnd::Unbounded);
                }
                // Bound flip without a basis change.
                let step = flip * dir;
                self.shift_basics(q, step);
                if dir > 0.0 {
                    self.x[q] = self.ub[q];
                    self.state[q] = State::Upper;
                } else {
                    self.x[q] = self.lb[q];
                    self.state[q] = State::Lower;
                }
                self.degenerate_run = 0;
                continue;
            }
            let step = leave_ratio.max(0.0);
            if step < 1e-12 {
                self.degenerate_run += 1;
            } else {
                self.degenerate_run = 0;
            }
            self.shift_basics(q, step * dir);
            self.x[q] += step * dir;
            let b = self.basis[leave];
            self.pivot(leave, q);
            if leave_to_upper {
                self.x[b] = self.ub[b];
                self.state[b] = State::Upper;
            } else {
                self.x[b] = self.lb[b];
                self.state[b] = State::Lower;
            }
            if let Kind::Artificial { .. } = self.kind[b] {
                self.lb[b] = 0.0;
                self.ub[b] = 0.0;
                self.x[b] = 0.0;
                self.state[b] = State::Lower;
            }
        }
    }

    /// Dual simplex; requires a dual feasible basis.
    fn dual(&mut self) -> Result<TableauStatus, LpError> {
        loop {
            self.check_pivot_budget()?;
            if self.since_refresh >= REFRESH_EVERY {
                self.refresh_basic_values();
            }
            let bland = self.degenerate_run > BLAND_TRIGGER;
            let mut r = NONE;
            let mut worst = 0.0;
            let mut below = false;
            for i in 0..self.m {
                let b = self.basis[i];
                let v = self.x[b];
                let (viol, is_below) = if v < self.lb[b] - FEASIBILITY_TOL {
                    (self.lb[b] - v, true)
                } else if v > self.ub[b] + FEASIBILITY_TOL {
                    (v - self.ub[b], false)
                } else {
                    continue;
                };
                let take = if bland {
                    r == NONE || b < self.basis[r]
                } else {
                    viol > worst
                };
                if take {
                    r = i;
                    worst = viol;
                    below = is_below;
                }
            }
            if r == NONE {
                return Ok(TableauStatus::Optimal);
            }
            let off = r * self.stride;
            // Eligible entering columns move x_r toward its violated bound.
            let eligible = |st: State, a: f64| -> bool {
                match st {
                    State::Lower => (below && a < -PIVOT_TOL) || (!below && a > PIVOT_TOL),
                    State::Upper => (below && a > PIVOT_TOL) || (!below && a < -PIVOT_TOL),
                    State::Free => a.abs() > PIVOT_TOL,
                    State::Basic => false,
                }
            };
            let mut relaxed_min = f64::INFINITY;
            for j in 0..self.n {
                let a = self.t[off + j];
                if a == 0.0 || self.is_fixed(j) || !eligible(self.state[j], a) {
                    continue;
                }
                let slack = match self.state[j] {
                    State::Lower => self.d[j],
                    State::Upper => -self.d[j],
                    _ => self.d[j].abs(),
                };
                relaxed_min = relaxed_min.min((slack.max(0.0) + OPTIMALITY_TOL) / a.abs());
            }
            if relaxed_min == f64::INFINITY {
                return Ok(TableauStatus::Infeasible);
            }
            let mut q = NONE;
            let mut q_abs = 0.0;
            let mut q_ratio = f64::INFINITY;
            for j in 0..self.n {
                let a = self.t[off + j];
                if a == 0.0 || self.is_fixed(j) || !eligible(self.state[j], a) {
                    continue;
                }
                let slack = match self.state[j] {
                    State::Lower => self.d[j],
                    State::Upper => -self.d[j],
                    _ => self.d[j].abs(),
                }
                .max(0.0);
                let ratio = slack / a.abs();
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
            let b = self.basis[r];
            let target = if below { self.lb[b] } else { self.ub[b] };
            let a = self.t[off + q];
            let delta = (self.x[b] - target) / a;
            if q_ratio < 1e-12 {
                self.degenerate_run += 1;
            } else {
                self.degenerate_run = 0;
            }
            self.shift_basics(q, delta);
            self.x[q] += delta;
            self.pivot(r, q);
            self.x[b] = target;
            self.state[b] = if below { State::Lower } else { State::Upper };
            if self.lb[b] == self.ub[b] {
                self.state[b] = State::Lower;
            }
        }
    }

    fn artificial_columns(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(|&j| matches!(self.kind[j], Kind::Artificial { .. }))
    }

    /// Phase one, artificial clean-up and phase two from the initial basis.
    pub fn solve(&mut self) -> Result<TableauStatus, LpError> {
        self.pivots_in_solve = 0;
        self.degenerate_run = 0;
        let has_artificials = self.artificial_columns().next().is_some();
        if has_artificials {
            let saved = std::mem::take(&mut self.cost);
            self.cost = (0..self.n)
                .map(|j| {
                    if matches!(self.kind[j], Kind::Artificial { .. }) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            self.compute_reduced_costs();
            self.primal()?;
            self.refresh_basic_values();
            self.cost = saved;
            let infeasible = self.artificial_columns().any(|j| self.x[j] > FEASIBILITY_TOL);
            if infeasible {
                return Ok(TableauStatus::Infeasible);
            }
            self.evict_artificials();
        }
        self.compute_reduced_costs();
        self.degenerate_run = 0;
        let end = self.primal()?;
        self.refresh_basic_values();
        Ok(match end {
            PrimalEnd::Optimal => TableauStatus::Optimal,
            PrimalEnd::Unbounded => TableauStatus::Unbounded,
        })
    }

    /// Pivots zero-valued basic artificials out where possible, fixes the
    /// rest at zero and drops nonbasic artificial columns.
    fn evict_artificials(&mut self) {
        for i in 0..self.m {
            let b = self.basis[i];
            if !matches!(self.kind[b], Kind::Artificial { .. }) {
                continue;
            }
            let off = i * self.stride;
            let mut best = NONE;
            let mut best_abs = 1e-7;
            for j in 0..self.n {
                if self.state[j] == State::Basic || matches!(self.kind[j], Kind::Artificial { .. }) {
                    continue;
                }
                let a = self.t[off + j].abs();
                if a > best_abs {
                    best_abs = a;
                    best = j;
                }
            }
            if best != NONE {
                // Degenerate pivot: the artificial is at zero so no values move.
                let v = self.x[b];
                self.shift_basics(best, v / self.t[off + best]);
                self.x[best] += v / self.t[off + best];
                self.pivot(i, best);
                self.x[b] = 0.0;
                self.state[b] = State::Lower;
            }
        }
        for j in 0..self.n {
            if matches!(self.kind[j], Kind::Artificial { .. }) {
                self.lb[j] = 0.0;
                self.ub[j] = 0.0;
                if self.state[j] != State::Basic {
                    self.x[j] = 0.0;
                    self.state[j] = State::Lower;
                }
            }
        }
        self.drop_dead_artificials();
    }

    fn drop_dead_artificials(&mut self) {
        let keep: Vec<bool> = (0..self.n)
            .map(|j| !matches!(self.kind[j], Kind::Artificial { .. }) || self.state[j] == State::Basic)
            .collect();
        if keep.iter().all(|&k| k) {
            return;
        }
        let mut map = vec![NONE; self.n];
        let mut next = 0;
        for j in 0..self.n {
            if keep[j] {
                map[j] = next;
                next += 1;
            }
        }
        let new_n = next;
        for i in 0..self.m {
            let off = i * self.stride;
            for j in 0..self.n {
                if keep[j] && map[j] != j {
                    self.t[off + map[j]] = self.t[off + j];
                }
            }
            for v in &mut self.t[off + new_n..off + self.n] {
                *v = 0.0;
            }
        }
        let compact = |v: &mut Vec<f64>| {
            let mut k = 0;
            v.retain(|_| {
                k += 1;
                keep[k - 1]
            });
        };
        compact(&mut self.d);
        compact(&mut self.cost);
        compact(&mut self.lb);
        compact(&mut self.ub);
        compact(&mut self.x);
        let mut k = 0;
        self.state.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        let mut k = 0;
        self.kind.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        for b in &mut self.basis {
            *b = map[*b];
        }
        self.pos = vec![NONE; new_n];
        for (i, &b) in self.basis.iter().enumerate() {
            self.pos[b] = i;
        }
        for s in &mut self.slack_of_row {
            *s = map[*s];
        }
        self.n = new_n;
    }

    /// Changes the bounds of a column. A nonbasic column is placed on the
    /// bound matching its reduced-cost sign so the basis stays dual feasible.
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lb[j] = lo;
        self.ub[j] = hi;
        if self.state[j] == State::Basic {
            return;
        }
        let old = self.x[j];
        let dj = self.d[j];
        let (val, st) =
            if lo.is_finite() && (dj > 0.0 || !hi.is_finite() || (dj == 0.0 && self.state[j] != State::Upper)) {
                (lo, State::Lower)
            } else if hi.is_finite() {
                (hi, State::Upper)
            } else if lo.is_finite() {
                (lo, State::Lower)
            } else {
                (0.0, State::Free)
            };
        self.x[j] = val;
        self.state[j] = st;
        self.shift_basics(j, val - old);
    }

    /// Appends a row. Its slack becomes basic, so dual feasibility is kept.
    pub fn add_row(&mut self, c: &Constraint) {
        let s = row_scale_of(c);
        let (lo, hi) = slack_bounds(c.relation);
        let slack = self.push_column(Kind::Slack, lo, hi);
        let m = self.m;
        let stride = self.stride;
        self.t.resize((m + 1) * stride, 0.0);
        let off = m * stride;
        for &(j, a) in &c.coeffs {
            self.t[off + j] += a / s;
        }
        self.t[off + slack] = 1.0;
        let mut rhs = c.rhs / s;
        let mut basics: Vec<usize> = c
            .coeffs
            .iter()
            .map(|&(j, _)| j)
            .filter(|&j| self.state[j] == State::Basic)
            .collect();
        basics.sort_unstable();
        basics.dedup();
        for j in basics {
            let f = self.t[off + j];
            if f == 0.0 {
                continue;
            }
            let r = self.pos[j];
            let roff = r * stride;
            let n = self.n;
            let (head, tail) = self.t.split_at_mut(off);
            let src = &head[roff..roff + n];
            let dst = &mut tail[..n];
            for (dv, &sv) in dst.iter_mut().zip(src) {
                if sv != 0.0 {
                    *dv -= f * sv;
                }
            }
            dst[j] = 0.0;
            rhs -= f * self.rhs[r];
        }
        self.rhs.push(rhs);
        self.basis.push(slack);
        self.pos[slack] = m;
        self.state[slack] = State::Basic;
        self.x[slack] = (c.rhs - c.activity(&self.x[..self.n_struct])) / s;
        self.rows.push(c.clone());
        self.row_scale.push(s);
        self.slack_of_row.push(slack);
        self.m += 1;
    }

    /// Largest scaled residual of `A x + slack = b` over all rows.
    pub fn residual(&self) -> f64 {
        let xs = &self.x[..self.n_struct];
        let mut worst = 0.0_f64;
        for (i, c) in self.rows.iter().enumerate() {
            let s = self.row_scale[i];
            let mut lhs = c.activity(xs) / s + self.x[self.slack_of_row[i]];
            for j in self.artificial_columns() {
                if let Kind::Artificial { row, sign } = self.kind[j] {
                    if row == i {
                        lhs += f64::from(sign) * self.x[j];
                    }
                }
            }
            worst = worst.max((lhs - c.rhs / s).abs());
        }
        worst
    }

    /// Largest bound violation over all columns (basic values may drift).
    pub fn primal_infeasibility(&self) -> f64 {
        (0..self.n)
            .map(|j| (self.lb[j] - self.x[j]).max(self.x[j] - self.ub[j]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Rebuilds `B^-1 [A | I]` from the stored rows for the current basis.
    pub fn refactor(&mut self) -> Result<(), LpError> {
        let target: Vec<usize> = self.basis.clone();
        let mut in_target = vec![false; self.n];
        for &b in &target {
            in_target[b] = true;
        }
        let stride = self.stride;
        self.t.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.m {
            let s = self.row_scale[i];
            let off = i * stride;
            for &(j, a) in &self.rows[i].coeffs {
                self.t[off + j] += a / s;
            }
            self.t[off + self.slack_of_row[i]] = 1.0;
            self.rhs[i] = self.rows[i].rhs / s;
        }
        for j in 0..self.n {
            if let Kind::Artificial { row, sign } = self.kind[j] {
                self.t[row * stride + j] = f64::from(sign);
            }
        }
        self.basis = self.slack_of_row.clone();
        self.pos = vec![NONE; self.n];
        for (i, &b) in self.basis.iter().enumerate() {
            self.pos[b] = i;
        }
        let saved_states = self.state.clone();
        for &j in &target {
            if self.pos[j] != NONE {
                continue;
            }
            let mut best = NONE;
            let mut best_abs = 1e-9;
            for i in 0..self.m {
                if in_target[self.basis[i]] {
                    continue;
                }
                let a = self.t[i * stride + j].abs();
                if a > best_abs {
                    best_abs = a;
                    best = i;
                }
            }
            if best == NONE {
                return Err(LpError::SingularBasis);
            }
            let pi = self.pivots_in_solve;
            self.pivot(best, j);
            self.pivots_total -= 1;
            self.pivots_in_solve = pi;
        }
        for j in 0..self.n {
            self.state[j] = if self.pos[j] != NONE {
                State::Basic
            } else if saved_states[j] == State::Basic {
                // Was basic, is not anymore: cannot happen for a
                // square nonsingular basis.
                return Err(LpError::SingularBasis);
            } else {
                saved_states[j]
            };
        }
        self.compute_reduced_costs();
        self.refresh_basic_values();
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// Re-optimizes after bound changes or appended rows.
    ///
    /// Uses the dual simplex when the basis is dual feasible (always the
    /// case when every nonbasic column has finite bounds on the side its
    /// reduced cost asks for), then a primal pass to clear any residual
    /// dual infeasibility.
    pub fn reoptimize(&mut self) -> Result<TableauStatus, LpError> {
        self.pivots_in_solve = 0;
        self.degenerate_run = 0;
        if self.pivots_since_refactor > 20_000 {
            self.refactor()?;
        }
        self.refresh_basic_values();
        let mut dual_ok = true;
        for j in 0..self.n {
            let st = self.state[j];
            if st == State::Basic || self.is_fixed(j) {
                continue;
            }
            let dj = self.d[j];
            match st {
                State::Lower if dj < -OPTIMALITY_TOL => {
                    if self.ub[j].is_finite() {
                        let old = self.x[j];
                        self.x[j] = self.ub[j];
                        self.state[j] = State::Upper;
                        self.shift_basics(j, self.ub[j] - old);
                    } else {
                        dual_ok = false;
                    }
                }
                State::Upper if dj > OPTIMALITY_TOL => {
                    if self.lb[j].is_finite() {
                        let old = self.x[j];
                        self.x[j] = self.lb[j];
                        self.state[j] = State::Lower;
                        self.shift_basics(j, self.lb[j] - old);
                    } else {
                        dual_ok = false;
                    }
                }
                State::Free if dj.abs() > OPTIMALITY_TOL => dual_ok = false,
                _ => {}
            }
        }
        if !dual_ok {
            return self.restart();
        }
        let status = self.dual()?;
        self.refresh_basic_values();
        if status == TableauStatus::Infeasible {
            return Ok(status);
        }
        self.degenerate_run = 0;
        match self.primal()? {
            PrimalEnd::Optimal => {}
            PrimalEnd::Unbounded => return Ok(TableauStatus::Unbounded),
        }
        self.refresh_basic_values();
        if self.primal_infeasibility() > 10.0 * FEASIBILITY_TOL {
            // Drift pushed basics out of bounds during the primal pass.
            let status = self.dual()?;
            self.refresh_basic_values();
            return Ok(status);
        }
        Ok(TableauStatus::Optimal)
    }

    /// Starts over from a slack basis with the current bounds and rows.
    pub fn restart(&mut self) -> Result<TableauStatus, LpError> {
        let mut lp = LinearProgram {
            objective: self.objective.clone(),
            constraints: self.rows.clone(),
            lower: self.lb[..self.n_struct].to_vec(),
            upper: self.ub[..self.n_struct].to_vec(),
        };
        lp.objective.truncate(self.n_struct);
        let total = self.pivots_total;
        *self = Tableau::new(&lp, self.opts);
        let status = self.solve();
        self.pivots_total += total;
        status
    }

    #[cfg(test)]
    pub(crate) fn reduced_costs_ok(&self) -> bool {
        (0..self.n).all(|j| match self.state[j] {
            State::Basic => true,
            _ if self.is_fixed(j) => true,
            State::Lower => self.d[j] >= -1e-7,
            State::Upper => self.d[j] <= 1e-7,
            State::Free => self.d[j].abs() <= 1e-7,
        })
    }

    #[allow(dead_code)]
    pub(crate) fn objective_scale(&self) -> f64 {
        self.obj_scale
    }
}
