use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One checked iteration: `lhs <= rhs_bound`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub k: usize,
    pub lhs: f64,
    pub rhs_bound: f64,
    pub satisfied: bool,
}

/// A named per-iteration bound check.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub rows: Vec<BoundRow>,
    /// Iterations left out of the check, with the reason in `notes`.
    pub excluded: Vec<usize>,
    pub notes: Vec<String>,
}

impl BoundReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    /// Records `lhs <= rhs` allowing an absolute slack `tol`.
    pub fn push(&mut self, k: usize, lhs: f64, rhs_bound: f64, tol: f64) {
        self.rows.push(BoundRow {
            k,
            lhs,
            rhs_bound,
            satisfied: lhs <= rhs_bound + tol,
        });
    }

    pub fn all_satisfied(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.satisfied)
    }

    /// First violated row, if any.
    pub fn first_violation(&self) -> Option<&BoundRow> {
        self.rows.iter().find(|r| !r.satisfied)
    }

    /// CSV with columns `k,lhs,rhs_bound,satisfied`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_is_stable() {
        let mut r = BoundReport::new("t");
        r.push(0, 1.0, 1.0, 0.0);
        r.push(1, 0.5, 0.4, 0.0);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "k,lhs,rhs_bound,satisfied\n0,1.0,1.0,true\n1,0.5,0.4,false\n"
        );
        assert!(!r.all_satisfied());
        assert_eq!(r.first_violation().unwrap().k, 1);
    }
}
