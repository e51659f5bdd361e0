//! Trajectory CSV: one row per instant and virus.
//!
//! Columns are `k,virus,xbar,wbar` followed, in per-node mode, by
//! `x_1..x_n,w_1..w_q`. Virus and node indices are 1-based; values carry
//! twelve significant digits.

use siws_core::dynamics::LayeredState;
use siws_core::model::SystemShape;

#[derive(Debug, thiserror::Error)]
pub enum CsvReadError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header: {0}")]
    Header(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
}

/// Formats with twelve significant digits.
pub fn fmt_value(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn header(shape: &SystemShape, per_node: bool) -> Vec<String> {
    let mut h: Vec<String> = ["k", "virus", "xbar", "wbar"].iter().map(|s| s.to_string()).collect();
    if per_node {
        h.extend((1..=shape.n).map(|i| format!("x_{i}")));
        h.extend((1..=shape.q).map(|j| format!("w_{j}")));
    }
    h
}

/// Accumulates rows in memory.
pub struct TrajectoryCsv {
    writer: csv::Writer<Vec<u8>>,
    per_node: bool,
}

impl TrajectoryCsv {
    pub fn new(shape: &SystemShape, per_node: bool) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header(shape, per_node)).expect("writing to memory");
        Self { writer, per_node }
    }

    pub fn push(&mut self, k: usize, state: &LayeredState) {
        for r in 0..state.m() {
            let mut rec = vec![
                k.to_string(),
                (r + 1).to_string(),
                fmt_value(state.xbar(r)),
                fmt_value(state.wbar(r)),
            ];
            if self.per_node {
                rec.extend(state.x[r].iter().chain(&state.w[r]).map(|&v| fmt_value(v)));
            }
            self.writer.write_record(&rec).expect("writing to memory");
        }
    }

    pub fn finish(self) -> String {
        let bytes = self.writer.into_inner().expect("flushing to memory");
        String::from_utf8(bytes).expect("ASCII output")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub k: usize,
    /// 1-based.
    pub virus: usize,
    pub xbar: f64,
    pub wbar: f64,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

/// Parses a trajectory CSV written by [`TrajectoryCsv`].
pub fn read_trajectory(text: &str) -> Result<Vec<CsvRow>, CsvReadError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 4 || names[..4] != ["k", "virus", "xbar", "wbar"] {
        return Err(CsvReadError::Header(names.join(",")));
    }
    let n = names.iter().filter(|h| h.starts_with("x_")).count();
    let q = names.iter().filter(|h| h.starts_with("w_")).count();
    let mut rows = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = idx + 1;
        let bad = |message: String| CsvReadError::Row { row, message };
        let num = |i: usize| -> Result<f64, CsvReadError> {
            rec.get(i)
                .ok_or_else(|| bad(format!("missing column {}", names[i])))?
                .parse::<f64>()
                .map_err(|e| bad(format!("{}: {e}", names[i])))
        };
        let int = |i: usize| -> Result<usize, CsvReadError> {
            rec.get(i)
                .ok_or_else(|| bad(format!("missing column {}", names[i])))?
                .parse::<usize>()
                .map_err(|e| bad(format!("{}: {e}", names[i])))
        };
        rows.push(CsvRow {
            k: int(0)?,
            virus: int(1)?,
            xbar: num(2)?,
            wbar: num(3)?,
            x: (4..4 + n).map(num).collect::<Result<_, _>>()?,
            w: (4 + n..4 + n + q).map(num).collect::<Result<_, _>>()?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_keeps_twelve_digits() {
        let shape = SystemShape::new(2, 1, 2, 0.1).unwrap();
        let state = LayeredState::new(
            vec![vec![0.123456789012345, 0.2], vec![1.0 / 3.0, 0.0]],
            vec![vec![1.5], vec![2.0 / 7.0]],
            &shape,
        )
        .unwrap();
        let mut w = TrajectoryCsv::new(&shape, true);
        w.push(0, &state);
        w.push(3, &state);
        let text = w.finish();
        assert!(text.starts_with("k,virus,xbar,wbar,x_1,x_2,w_1\n"));
        let rows = read_trajectory(&text).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!((rows[3].k, rows[3].virus), (3, 2));
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-11 * b.abs().max(1e-300);
        assert!(rel(rows[0].x[0], 0.123456789012345));
        assert!(rel(rows[1].xbar, state.xbar(1)));
        assert!(rel(rows[1].w[0], 2.0 / 7.0));
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(matches!(read_trajectory("a,b\n1,2\n"), Err(CsvReadError::Header(_))));
    }
}
