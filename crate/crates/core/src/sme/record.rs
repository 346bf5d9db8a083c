use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubit::{Bloch, Operator, PauliAxis, QubitState, C64};

const MAGIC: &[u8; 8] = b"SSTRAJ01";

/// The measurement record of one trajectory: `dy[i]` is the increment over
/// `(times[i] - dt, times[i]]`, measured along `axes[i]`; `states[i]`, when
/// kept, is the conditional state at `times[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub times: Vec<f64>,
    pub dy: Vec<f64>,
    pub axes: Vec<PauliAxis>,
    pub states: Option<Vec<QubitState>>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    t: f64,
    dy: f64,
    ax: f64,
    ay: f64,
    az: f64,
}

impl TrajectoryRecord {
    pub fn new(dt: f64) -> Self {
        Self::with_capacity(dt, 0, false)
    }

    pub fn with_capacity(dt: f64, n: usize, keep_states: bool) -> Self {
        TrajectoryRecord {
            dt,
            times: Vec::with_capacity(n),
            dy: Vec::with_capacity(n),
            axes: Vec::with_capacity(n),
            states: keep_states.then(|| Vec::with_capacity(n)),
        }
    }

    /// Appends the increment ending at global step index `end_step`
    /// (time `end_step · dt`).
    pub fn push(&mut self, end_step: usize, dy: f64, axis: PauliAxis, state: Option<QubitState>) {
        self.times.push(end_step as f64 * self.dt);
        self.dy.push(dy);
        self.axes.push(axis);
        if let (Some(states), Some(s)) = (self.states.as_mut(), state) {
            states.push(s);
        }
    }

    pub fn len(&self) -> usize {
        self.dy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dy.is_empty()
    }

    /// Concatenates a later record. Snapshots survive only if both have them.
    pub fn append(&mut self, mut other: TrajectoryRecord) {
        self.times.append(&mut other.times);
        self.dy.append(&mut other.dy);
        self.axes.append(&mut other.axes);
        match (self.states.as_mut(), other.states) {
            (Some(mine), Some(mut theirs)) => mine.append(&mut theirs),
            _ => self.states = None,
        }
    }

    pub fn without_states(mut self) -> Self {
        self.states = None;
        self
    }

    /// Checks equal lengths and uniform spacing.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.times.len() != n || self.axes.len() != n {
            return Err(Error::Format("record columns differ in length".into()));
        }
        if let Some(s) = &self.states {
            if s.len() != n {
                return Err(Error::Format("state snapshots differ in length".into()));
            }
        }
        for (i, w) in self.times.windows(2).enumerate() {
            let gap = w[1] - w[0];
            if !(gap > 0.0) || (gap - self.dt).abs() > 1e-9 * self.dt.max(w[1].abs()) {
                return Err(Error::Format(format!(
                    "times not uniformly spaced by dt = {} at row {}",
                    self.dt,
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// CSV with header `t,dy,ax,ay,az`; floats use shortest round-trip form.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for i in 0..self.len() {
            let a = self.axes[i].vector();
            wr.serialize(CsvRow {
                t: self.times[i],
                dy: self.dy[i],
                ax: a.x,
                ay: a.y,
                az: a.z,
            })?;
        }
        if self.is_empty() {
            wr.write_record(["t", "dy", "ax", "ay", "az"])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a CSV record. The step `dt` is not stored in the CSV schema and
    /// must be supplied (normally from the run manifest).
    pub fn read_csv<R: Read>(r: R, dt: f64) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut rec = TrajectoryRecord::new(dt);
        for row in rd.deserialize() {
            let row: CsvRow = row?;
            rec.times.push(row.t);
            rec.dy.push(row.dy);
            rec.axes.push(PauliAxis::new(Bloch::new(row.ax, row.ay, row.az))?);
        }
        rec.validate()?;
        Ok(rec)
    }

    /// Little-endian binary form: magic, `dt`, length, state flag, then per
    /// row `t, dy, ax, ay, az` and optionally the 8 real components of the
    /// state matrix.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&[self.states.is_some() as u8])?;
        for i in 0..self.len() {
            let a = self.axes[i].vector();
            for v in [self.times[i], self.dy[i], a.x, a.y, a.z] {
                w.write_all(&v.to_le_bytes())?;
            }
            if let Some(states) = &self.states {
                for c in states[i].matrix().iter() {
                    w.write_all(&c.re.to_le_bytes())?;
                    w.write_all(&c.im.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let dt = read_f64(&mut r)?;
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let keep = match flag[0] {
            0 => false,
            1 => true,
            f => return Err(Error::Format(format!("bad state flag {f}"))),
        };
        let mut rec = TrajectoryRecord::with_capacity(dt, len.min(1 << 24), keep);
        for _ in 0..len {
            rec.times.push(read_f64(&mut r)?);
            rec.dy.push(read_f64(&mut r)?);
            let v = Bloch::new(read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
            rec.axes.push(PauliAxis::new(v)?);
            if let Some(states) = rec.states.as_mut() {
                let mut parts = [C64::new(0.0, 0.0); 4];
                for p in parts.iter_mut() {
                    *p = C64::new(read_f64(&mut r)?, read_f64(&mut r)?);
                }
                // nalgebra stores column-major.
                let m = Operator::from_column_slice(&parts);
                states.push(QubitState::from_matrix(m)?);
            }
        }
        rec.validate()?;
        Ok(rec)
    }
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
