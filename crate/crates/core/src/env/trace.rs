//! Per-control-step trace rows and their CSV form.

use std::io::{Read, Write};

use thiserror::Error;

use crate::actuation::NUM_THRUSTERS;

/// One control step: state after integration, references, and what the
/// controller commanded during the step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceRow {
    /// Episode time (s).
    pub t: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub ref_roll: f64,
    pub ref_pitch: f64,
    pub ref_yaw: f64,
    pub depth: f64,
    pub ref_depth: f64,
    /// Normalized channel outputs (roll, pitch, yaw, depth).
    pub u: [f64; 4],
    /// Adaptive compensation after the step; zero unless A-S-Surface.
    pub delta_u: [f64; 4],
    /// Commanded body wrench `[fx, fy, fz, tx, ty, tz]`.
    pub wrench: [f64; 6],
    pub commands: [f64; NUM_THRUSTERS],
    pub rq: f64,
    pub rp: f64,
    pub rz: f64,
    pub reward: f64,
    pub compound: f64,
}

pub const COLUMNS: usize = 9 + 4 + 4 + 6 + NUM_THRUSTERS + 5;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("trace contains no rows")]
    Empty,
}

pub fn header() -> Vec<String> {
    let mut h: Vec<String> = ["t", "roll", "pitch", "yaw", "ref_roll", "ref_pitch", "ref_yaw", "depth", "ref_depth"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(["u_roll", "u_pitch", "u_yaw", "u_depth"].iter().map(|s| s.to_string()));
    h.extend(["du_roll", "du_pitch", "du_yaw", "du_depth"].iter().map(|s| s.to_string()));
    h.extend(["fx", "fy", "fz", "tx", "ty", "tz"].iter().map(|s| s.to_string()));
    h.extend((0..NUM_THRUSTERS).map(|i| format!("cmd{i}")));
    h.extend(["rq", "rp", "rz", "reward", "compound"].iter().map(|s| s.to_string()));
    h
}

impl TraceRow {
    fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.t,
            self.roll,
            self.pitch,
            self.yaw,
            self.ref_roll,
            self.ref_pitch,
            self.ref_yaw,
            self.depth,
            self.ref_depth,
        ];
        v.extend_from_slice(&self.u);
        v.extend_from_slice(&self.delta_u);
        v.extend_from_slice(&self.wrench);
        v.extend_from_slice(&self.commands);
        v.extend_from_slice(&[self.rq, self.rp, self.rz, self.reward, self.compound]);
        v
    }

    fn from_values(v: &[f64]) -> TraceRow {
        let mut u = [0.0; 4];
        u.copy_from_slice(&v[9..13]);
        let mut delta_u = [0.0; 4];
        delta_u.copy_from_slice(&v[13..17]);
        let mut wrench = [0.0; 6];
        wrench.copy_from_slice(&v[17..23]);
        let mut commands = [0.0; NUM_THRUSTERS];
        commands.copy_from_slice(&v[23..23 + NUM_THRUSTERS]);
        let r = 23 + NUM_THRUSTERS;
        TraceRow {
            t: v[0],
            roll: v[1],
            pitch: v[2],
            yaw: v[3],
            ref_roll: v[4],
            ref_pitch: v[5],
            ref_yaw: v[6],
            depth: v[7],
            ref_depth: v[8],
            u,
            delta_u,
            wrench,
            commands,
            rq: v[r],
            rp: v[r + 1],
            rz: v[r + 2],
            reward: v[r + 3],
            compound: v[r + 4],
        }
    }
}

/// Writes rows with a header. Floats use the shortest round-trip form, so a
/// read back reproduces every value exactly.
pub fn write_trace<W: Write>(w: W, rows: &[TraceRow]) -> Result<(), TraceError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header())?;
    for row in rows {
        out.write_record(row.values().iter().map(|x| x.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<TraceRow>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r);
    let expected = header();
    let head = rdr.headers()?.clone();
    if head.is_empty() {
        return Err(TraceError::Empty);
    }
    if head.iter().ne(expected.iter().map(String::as_str)) {
        return Err(TraceError::Malformed { line: 1, message: "unexpected header".into() });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != COLUMNS {
            return Err(TraceError::Malformed {
                line,
                message: format!("expected {COLUMNS} fields, found {}", rec.len()),
            });
        }
        let mut vals = Vec::with_capacity(COLUMNS);
        for (field, name) in rec.iter().zip(&expected) {
            let v: f64 = field.trim().parse().map_err(|_| TraceError::Malformed {
                line,
                message: format!("column {name}: '{field}' is not a number"),
            })?;
            vals.push(v);
        }
        rows.push(TraceRow::from_values(&vals));
    }
    if rows.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(rows)
}
