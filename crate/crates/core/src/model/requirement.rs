//! Task requirement expressions: AND/OR trees over capability thresholds.
//!
//! Text form: `scout >= 1 & (armor >= 10 | smoke >= 1)`. `&` binds tighter
//! than `|`; a bare capability name abbreviates `name >= 1`.

use std::fmt;

use thiserror::Error;

use crate::lp::{Constraint, LinearProgram};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RequirementError {
    #[error("unknown capability `{0}`")]
    UnknownCapability(String),
    #[error("capability index {index} out of range for {count} capabilities")]
    CapabilityIndex { index: usize, count: usize },
    #[error("threshold {0} must be a positive integer for a `>=` atom")]
    BadLowerThreshold(f64),
    #[error("threshold {0} must be a non-negative integer for a `<=` atom")]
    BadUpperThreshold(f64),
    #[error("`<=` atom on capability {0} with threshold 0 cannot be linearized")]
    UnsupportedAtom(usize),
    #[error("empty {0} node")]
    EmptyNode(&'static str),
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    AtLeast,
    AtMost,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RequirementExpr {
    Atom {
        capability: usize,
        threshold: f64,
        direction: Direction,
    },
    And(Vec<RequirementExpr>),
    Or(Vec<RequirementExpr>),
}

impl RequirementExpr {
    pub fn at_least(capability: usize, threshold: f64) -> Self {
        RequirementExpr::Atom {
            capability,
            threshold,
            direction: Direction::AtLeast,
        }
    }

    pub fn at_most(capability: usize, threshold: f64) -> Self {
        RequirementExpr::Atom {
            capability,
            threshold,
            direction: Direction::AtMost,
        }
    }

    /// Direct evaluation on the summed team capabilities `alpha`.
    pub fn evaluate(&self, alpha: &[f64]) -> bool {
        match self {
            RequirementExpr::Atom {
                capability,
                threshold,
                direction: Direction::AtLeast,
            } => alpha[*capability] >= *threshold,
            RequirementExpr::Atom {
                capability,
                threshold,
                direction: Direction::AtMost,
            } => alpha[*capability] <= *threshold,
            RequirementExpr::And(children) => children.iter().all(|c| c.evaluate(alpha)),
            RequirementExpr::Or(children) => children.iter().any(|c| c.evaluate(alpha)),
        }
    }

    pub fn atom_count(&self) -> usize {
        match self {
            RequirementExpr::Atom { .. } => 1,
            RequirementExpr::And(c) | RequirementExpr::Or(c) => c.iter().map(Self::atom_count).sum(),
        }
    }

    pub fn capabilities(&self, out: &mut Vec<usize>) {
        match self {
            RequirementExpr::Atom { capability, .. } => out.push(*capability),
            RequirementExpr::And(c) | RequirementExpr::Or(c) => c.iter().for_each(|e| e.capabilities(out)),
        }
    }

    /// Checks capability indices and that thresholds are integers with the
    /// sign each direction needs.
    pub fn validate(&self, n_capabilities: usize) -> Result<(), RequirementError> {
        match self {
            RequirementExpr::Atom {
                capability,
                threshold,
                direction,
            } => {
                if *capability >= n_capabilities {
                    return Err(RequirementError::CapabilityIndex {
                        index: *capability,
                        count: n_capabilities,
                    });
                }
                let integral = threshold.is_finite() && threshold.fract() == 0.0;
                match direction {
                    Direction::AtLeast if !integral || *threshold <= 0.0 => {
                        Err(RequirementError::BadLowerThreshold(*threshold))
                    }
                    Direction::AtMost if !integral || *threshold < 0.0 => {
                        Err(RequirementError::BadUpperThreshold(*threshold))
                    }
                    _ => Ok(()),
                }
            }
            RequirementExpr::And(c) if c.is_empty() => Err(RequirementError::EmptyNode("AND")),
            RequirementExpr::Or(c) if c.is_empty() => Err(RequirementError::EmptyNode("OR")),
            RequirementExpr::And(c) | RequirementExpr::Or(c) => c.iter().try_for_each(|e| e.validate(n_capabilities)),
        }
    }

    /// Formats with capability names.
    pub fn display<'a, S: AsRef<str>>(&'a self, names: &'a [S]) -> impl fmt::Display + 'a {
        Named { expr: self, names }
    }

    pub fn parse<S: AsRef<str>>(text: &str, names: &[S]) -> Result<Self, RequirementError> {
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
            names,
        };
        let e = p.or_expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }
}

struct Named<'a, S> {
    expr: &'a RequirementExpr,
    names: &'a [S],
}

impl<S: AsRef<str>> Named<'_, S> {
    fn write(&self, e: &RequirementExpr, f: &mut fmt::Formatter<'_>, parent_and: bool) -> fmt::Result {
        match e {
            RequirementExpr::Atom {
                capability,
                threshold,
                direction,
            } => {
                let op = match direction {
                    Direction::AtLeast => ">=",
                    Direction::AtMost => "<=",
                };
                let name = self
                    .names
                    .get(*capability)
                    .map(|s| s.as_ref().to_string())
                    .unwrap_or_else(|| format!("#{capability}"));
                write!(f, "{name} {op} {threshold}")
            }
            RequirementExpr::And(children) => {
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" & ")?;
                    }
                    self.write(c, f, true)?;
                }
                Ok(())
            }
            RequirementExpr::Or(children) => {
                if parent_and {
                    f.write_str("(")?;
                }
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    // Nested ORs keep their own grouping.
                    let nested = matches!(c, RequirementExpr::Or(_));
                    if nested {
                        f.write_str("(")?;
                    }
                    self.write(c, f, false)?;
                    if nested {
                        f.write_str(")")?;
                    }
                }
                if parent_and {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl<S: AsRef<str>> fmt::Display for Named<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.expr, f, false)
    }
}

struct Parser<'a, S> {
    src: &'a [u8],
    pos: usize,
    names: &'a [S],
}

impl<S: AsRef<str>> Parser<'_, S> {
    fn error(&self, msg: &str) -> RequirementError {
        RequirementError::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(tok.as_bytes()) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn or_expr(&mut self) -> Result<RequirementExpr, RequirementError> {
        let mut items = vec![self.and_expr()?];
        while self.eat("|") {
            items.push(self.and_expr()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            RequirementExpr::Or(items)
        })
    }

    fn and_expr(&mut self) -> Result<RequirementExpr, RequirementError> {
        let mut items = vec![self.primary()?];
        while self.eat("&") {
            items.push(self.primary()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            RequirementExpr::And(items)
        })
    }

    fn primary(&mut self) -> Result<RequirementExpr, RequirementError> {
        if self.eat("(") {
            let e = self.or_expr()?;
            if !self.eat(")") {
                return Err(self.error("expected `)`"));
            }
            return Ok(e);
        }
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || matches!(self.src[self.pos], b'_' | b'-' | b'.' | b'#'))
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected a capability name"));
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let capability = self
            .names
            .iter()
            .position(|n| n.as_ref() == name)
            .or_else(|| name.strip_prefix('#').and_then(|i| i.parse().ok()))
            .ok_or_else(|| RequirementError::UnknownCapability(name.to_string()))?;
        let direction = if self.eat(">=") {
            Direction::AtLeast
        } else if self.eat("<=") {
            Direction::AtMost
        } else {
            return Ok(RequirementExpr::at_least(capability, 1.0));
        };
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && matches!(self.src[self.pos], b'0'..=b'9' | b'.' | b'e' | b'E' | b'+' | b'-')
        {
            self.pos += 1;
        }
        let threshold: f64 = std::str::from_utf8(&self.src[start..self.pos])
            .expect("ascii")
            .parse()
            .map_err(|_| self.error("expected a number"))?;
        Ok(RequirementExpr::Atom {
            capability,
            threshold,
            direction,
        })
    }
}

/// Rows and binaries encoding `target <= rho(alpha)` for one task.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Linearization {
    pub rows: Vec<Constraint>,
    /// Indicator variable per atom, in left-to-right order.
    pub atom_vars: Vec<usize>,
    /// Auxiliary indicator per nested internal node.
    pub aux_vars: Vec<usize>,
}

impl Linearization {
    pub fn binaries(&self) -> impl Iterator<Item = usize> + '_ {
        self.atom_vars.iter().chain(&self.aux_vars).copied()
    }
}

/// Appends indicator variables to `lp` and returns the rows that force
/// `target = 1` only when the team selected through `team` satisfies `req`.
///
/// `team` lists `(y variable, capability vector)` per vehicle so that
/// `alpha_a = sum c_a * y`. `c_large` must exceed every reachable
/// `alpha - threshold`; atoms with `<=` raise it to at least `threshold + 1`.
pub fn linearize_requirement(
    lp: &mut LinearProgram,
    req: &RequirementExpr,
    target: usize,
    team: &[(usize, &[f64])],
    c_large: f64,
) -> Result<Linearization, RequirementError> {
    let n_caps = team.first().map_or(usize::MAX, |(_, c)| c.len());
    req.validate(n_caps)?;
    let mut out = Linearization::default();
    encode(lp, req, target, team, c_large, &mut out)?;
    Ok(out)
}

fn alpha_terms(team: &[(usize, &[f64])], capability: usize, scale: f64) -> Vec<(usize, f64)> {
    team.iter()
        .filter(|(_, c)| c[capability] != 0.0)
        .map(|&(y, c)| (y, scale * c[capability]))
        .collect()
}

fn atom_rows(
    lp: &mut LinearProgram,
    capability: usize,
    threshold: f64,
    direction: Direction,
    team: &[(usize, &[f64])],
    c_large: f64,
    out: &mut Linearization,
) -> Result<usize, RequirementError> {
    let w = lp.add_var(0.0, 0.0, 1.0);
    out.atom_vars.push(w);
    match direction {
        Direction::AtLeast => {
            // gamma * w - alpha <= 0
            let mut upper = vec![(w, threshold)];
            upper.extend(alpha_terms(team, capability, -1.0));
            out.rows.push(Constraint::le(upper, 0.0));
            // C * w - alpha >= 1 - gamma
            let mut lower = vec![(w, c_large)];
            lower.extend(alpha_terms(team, capability, -1.0));
            out.rows.push(Constraint::ge(lower, 1.0 - threshold));
        }
        Direction::AtMost => {
            if threshold == 0.0 {
                return Err(RequirementError::UnsupportedAtom(capability));
            }
            let c = c_large.max(threshold + 1.0);
            // C * w + alpha <= gamma + C
            let mut upper = vec![(w, c)];
            upper.extend(alpha_terms(team, capability, 1.0));
            out.rows.push(Constraint::le(upper, threshold + c));
            // C * w + alpha >= gamma + 1
            let mut lower = vec![(w, c)];
            lower.extend(alpha_terms(team, capability, 1.0));
            out.rows.push(Constraint::ge(lower, threshold + 1.0));
        }
    }
    Ok(w)
}

/// Indicator variable standing for `e`: the atom's own `w`, or a fresh
/// auxiliary binary bounded above by the encoding of `e`.
fn indicator(
    lp: &mut LinearProgram,
    e: &RequirementExpr,
    team: &[(usize, &[f64])],
    c_large: f64,
    out: &mut Linearization,
) -> Result<usize, RequirementError> {
    match e {
        RequirementExpr::Atom {
            capability,
            threshold,
            direction,
        } => atom_rows(lp, *capability, *threshold, *direction, team, c_large, out),
        _ => {
            let aux = lp.add_var(0.0, 0.0, 1.0);
            out.aux_vars.push(aux);
            encode(lp, e, aux, team, c_large, out)?;
            Ok(aux)
        }
    }
}

fn encode(
    lp: &mut LinearProgram,
    e: &RequirementExpr,
    target: usize,
    team: &[(usize, &[f64])],
    c_large: f64,
    out: &mut Linearization,
) -> Result<(), RequirementError> {
    match e {
        RequirementExpr::Atom { .. } => {
            let w = indicator(lp, e, team, c_large, out)?;
            out.rows.push(Constraint::le(vec![(target, 1.0), (w, -1.0)], 0.0));
        }
        RequirementExpr::And(children) => {
            for c in children {
                match c {
                    // A clause of atoms bounds the target by its indicator sum directly.
                    RequirementExpr::Or(atoms) if atoms.iter().all(|a| matches!(a, RequirementExpr::Atom { .. })) => {
                        encode(lp, c, target, team, c_large, out)?;
                    }
                    _ => {
                        let w = indicator(lp, c, team, c_large, out)?;
                        out.rows.push(Constraint::le(vec![(target, 1.0), (w, -1.0)], 0.0));
                    }
                }
            }
        }
        RequirementExpr::Or(children) => {
            let mut row = vec![(target, 1.0)];
            for c in children {
                let w = indicator(lp, c, team, c_large, out)?;
                row.push((w, -1.0));
            }
            out.rows.push(Constraint::le(row, 0.0));
        }
    }
    Ok(())
}
