//! Linear programming with bounded-variable simplex methods.
//!
//! [`RevisedSimplex`] keeps a product-form basis inverse over sparse rows
//! and columns; [`solve_lp`] uses it, and the branch-and-cut engine
//! re-optimizes it with the dual simplex after bound changes and appended
//! rows instead of starting over at every node. [`Tableau`] is a dense
//! two-phase implementation kept as an independent reference.

mod revised;
mod tableau;

pub use revised::RevisedSimplex;
pub use tableau::{Tableau, TableauStatus};

use thiserror::Error;

/// Primal feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Reduced-cost (dual feasibility) tolerance.
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Default pivot cap for a single solve.
pub const DEFAULT_MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("constraint {row} references variable {var} but the program has {n} variables")]
    BadIndex { row: usize, var: usize, n: usize },
    #[error("variable {var} has lower bound {lower} above upper bound {upper}")]
    BadBounds { var: usize, lower: f64, upper: f64 },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("objective has {objective} entries but bounds have {bounds}")]
    Arity { objective: usize, bounds: usize },
    #[error("simplex exceeded {0} pivots")]
    IterationLimit(usize),
    #[error("basis could not be refactored (singular pivot)")]
    SingularBasis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// One linear row `sum coeffs[k].1 * x[coeffs[k].0]  (relation)  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> Self {
        Self { coeffs, relation, rhs }
    }

    pub fn le(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self::new(coeffs, Relation::Le, rhs)
    }

    pub fn ge(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self::new(coeffs, Relation::Ge, rhs)
    }

    pub fn eq(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self::new(coeffs, Relation::Eq, rhs)
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }

    /// Violation divided by the row's magnitude, so rows with large
    /// coefficients are judged on the same scale as unit rows.
    pub fn scaled_violation(&self, x: &[f64]) -> f64 {
        let scale = self
            .coeffs
            .iter()
            .fold(self.rhs.abs(), |m, &(_, a)| m.max(a.abs()))
            .max(1.0);
        self.violation(x) / scale
    }
}

/// `minimize c^T x` subject to rows and `lower <= x <= upper`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, c: Constraint) -> usize {
        self.constraints.push(c);
        self.constraints.len() - 1
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Arity {
                objective: n,
                bounds: self.lower.len().min(self.upper.len()),
            });
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite("objective"));
        }
        for (var, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::BadBounds {
                    var,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        for (row, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(LpError::NonFinite("constraint right-hand side"));
            }
            for &(var, a) in &c.coeffs {
                if var >= n {
                    return Err(LpError::BadIndex { row, var, n });
                }
                if !a.is_finite() {
                    return Err(LpError::NonFinite("constraint coefficient"));
                }
            }
        }
        Ok(())
    }

    /// Largest scaled violation over rows and bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.scaled_violation(x))
            .fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Primal values; meaningful only when `status` is `Optimal`.
    pub values: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_pivots: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_pivots: DEFAULT_MAX_PIVOTS,
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    solve_lp_with(lp, SimplexOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, opts: SimplexOptions) -> Result<LpOutcome, LpError> {
    lp.validate()?;
    let mut t = RevisedSimplex::new(lp, opts);
    let status = t.solve()?;
    let status = match status {
        TableauStatus::Optimal => LpStatus::Optimal,
        TableauStatus::Infeasible => LpStatus::Infeasible,
        TableauStatus::Unbounded => LpStatus::Unbounded,
    };
    let values = t.values().to_vec();
    let objective = if status == LpStatus::Optimal {
        lp.objective_value(&values)
    } else {
        f64::NAN
    };
    Ok(LpOutcome {
        status,
        values,
        objective,
        pivots: t.pivots(),
    })
}
