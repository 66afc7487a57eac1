//! Records of checked inequalities.

use serde::Serialize;

/// Default absolute slack for structural inequalities.
pub const STRUCT_TOL: f64 = 1e-9;

/// One checked inequality `lhs <= rhs` (or an equality, see `check_id`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub check_id: String,
    /// Neutral name of the statement being checked.
    pub paper_anchor: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative values are violations.
    pub slack: f64,
    pub pass: bool,
}

impl Check {
    /// `lhs <= rhs` up to `tol` scaled by `max(1, |rhs|)`.
    pub fn le(id: impl Into<String>, anchor: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Check {
        let slack = if lhs == rhs { 0.0 } else { rhs - lhs };
        let scale = if rhs.is_finite() { rhs.abs().max(1.0) } else { 1.0 };
        let pass = !lhs.is_nan() && !rhs.is_nan() && slack >= -tol * scale;
        Check { check_id: id.into(), paper_anchor: anchor.into(), lhs, rhs, slack, pass }
    }

    /// `|lhs - rhs| <= tol * max(1, |rhs|)`; slack is `-|lhs - rhs|`.
    pub fn eq(id: impl Into<String>, anchor: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Check {
        let diff = if lhs == rhs { 0.0 } else { (lhs - rhs).abs() };
        let scale = if rhs.is_finite() { rhs.abs().max(1.0) } else { 1.0 };
        Check { check_id: id.into(), paper_anchor: anchor.into(), lhs, rhs, slack: -diff, pass: diff <= tol * scale }
    }

    /// A boolean condition recorded as `lhs = 0 <= rhs = 1` or a failure.
    pub fn holds(id: impl Into<String>, anchor: impl Into<String>, ok: bool) -> Check {
        let rhs = if ok { 1.0 } else { -1.0 };
        Check { check_id: id.into(), paper_anchor: anchor.into(), lhs: 0.0, rhs, slack: rhs, pass: ok }
    }

    /// `value` is finite.
    pub fn finite(id: impl Into<String>, anchor: impl Into<String>, value: f64) -> Check {
        let ok = value.is_finite();
        Check {
            check_id: id.into(),
            paper_anchor: anchor.into(),
            lhs: value,
            rhs: f64::INFINITY,
            slack: if ok { f64::INFINITY } else { f64::NEG_INFINITY },
            pass: ok,
        }
    }
}

/// Ordered list of checks.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Ledger {
    pub checks: Vec<Check>,
}

impl Ledger {
    pub fn new() -> Ledger {
        Ledger::default()
    }

    pub fn push(&mut self, c: Check) -> &Check {
        self.checks.push(c);
        self.checks.last().unwrap()
    }

    pub fn extend(&mut self, other: Ledger) {
        self.checks.extend(other.checks);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// First failing check, if any.
    pub fn first_failure(&self) -> Option<&Check> {
        self.failures().next()
    }

    pub fn min_slack(&self) -> f64 {
        self.checks.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.checks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter()
    }
}
