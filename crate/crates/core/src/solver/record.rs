use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::StopReason;
use crate::error::{Error, Result};

/// Metrics of one completed outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub k: usize,
    /// `F(rho_k)` on the full objective.
    pub loss: f64,
    /// `KL(rho_k || rho_{k-1})` estimate.
    pub kl_step: f64,
    /// First-variation variance at `rho_k`.
    pub fv_var: f64,
    pub inner_iters: usize,
    pub stop_reason: StopReason,
    pub wall_ms: f64,
    pub seed: u64,
}

/// CSV header of a record stream.
pub const RECORD_COLUMNS: [&str; 8] = [
    "k",
    "loss",
    "kl_step",
    "fv_var",
    "inner_iters",
    "stop_reason",
    "wall_ms",
    "seed",
];

impl RunRecord {
    fn fields(&self) -> [String; 8] {
        [
            self.k.to_string(),
            format!("{:e}", self.loss),
            format!("{:e}", self.kl_step),
            format!("{:e}", self.fv_var),
            self.inner_iters.to_string(),
            self.stop_reason.to_string(),
            format!("{:.3}", self.wall_ms),
            self.seed.to_string(),
        ]
    }
}

/// Writes records as CSV with [`RECORD_COLUMNS`] as header.
pub fn write_records<W: Write>(records: &[RunRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RECORD_COLUMNS)?;
    for r in records {
        out.write_record(r.fields())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a stream written by [`write_records`].
pub fn read_records<R: Read>(r: R) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != RECORD_COLUMNS {
        return Err(Error::Parse(format!("unexpected record header {header:?}")));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::Parse(format!("record {}: bad {what}", line + 1));
        let num = |i: usize, what: &str| row[i].parse::<f64>().map_err(|_| bad(what));
        out.push(RunRecord {
            k: row[0].parse().map_err(|_| bad("k"))?,
            loss: num(1, "loss")?,
            kl_step: num(2, "kl_step")?,
            fv_var: num(3, "fv_var")?,
            inner_iters: row[4].parse().map_err(|_| bad("inner_iters"))?,
            stop_reason: StopReason::parse(&row[5]).ok_or_else(|| bad("stop_reason"))?,
            wall_ms: num(6, "wall_ms")?,
            seed: row[7].parse().map_err(|_| bad("seed"))?,
        });
    }
    Ok(out)
}
