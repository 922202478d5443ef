//! State traces and sensor dumps.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rotorsim_core::math::quaternion_wxyz;
use rotorsim_core::sensors::{SensorFrame, SensorKind};
use rotorsim_server::UavSnapshot;

/// Comma-separated trace, one row per vehicle per recorded step, ordered by
/// (time, uav). Columns: `time,uav,x,y,z,vx,vy,vz,qw,qx,qy,qz,p,q,r` then
/// one `w<i>` column per motor of the vehicle with the most motors. Values
/// use the shortest decimal form that reads back to the same `f64`.
pub struct TraceWriter<W: Write> {
    out: W,
    motors: usize,
}

pub fn trace_header(motors: usize) -> String {
    let mut h = String::from("time,uav,x,y,z,vx,vy,vz,qw,qx,qy,qz,p,q,r");
    for i in 0..motors {
        h.push_str(&format!(",w{i}"));
    }
    h
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, motors: usize) -> io::Result<Self> {
        writeln!(out, "{}", trace_header(motors))?;
        Ok(Self { out, motors })
    }

    pub fn row(&mut self, time: f64, s: &UavSnapshot) -> io::Result<()> {
        let st = &s.state;
        let q = quaternion_wxyz(&st.rotation);
        write!(self.out, "{time},{}", s.id)?;
        for v in st
            .position
            .iter()
            .chain(st.velocity.iter())
            .chain(q.iter())
            .chain(st.angular_velocity.iter())
        {
            write!(self.out, ",{v}")?;
        }
        for i in 0..self.motors {
            match st.motor_speeds.get(i) {
                Some(w) => write!(self.out, ",{w}")?,
                None => write!(self.out, ",")?,
            }
        }
        writeln!(self.out)
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Appends `f64 timestamp | u32 length | payload` records to one file per
/// vehicle and sensor kind, named `uav<id>_<kind>.bin`.
pub struct SensorDumps {
    dir: PathBuf,
    kinds: Vec<SensorKind>,
    files: BTreeMap<(u32, SensorKind), BufWriter<File>>,
}

pub fn dump_file_name(uav: u32, kind: SensorKind) -> String {
    format!("uav{uav}_{}.bin", kind.name())
}

impl SensorDumps {
    pub fn new(dir: &Path, kinds: Vec<SensorKind>) -> Self {
        Self {
            dir: dir.to_path_buf(),
            kinds,
            files: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, uav: u32, frame: &SensorFrame) -> io::Result<()> {
        let kind = frame.kind();
        if !self.kinds.contains(&kind) {
            return Ok(());
        }
        let w = match self.files.entry((uav, kind)) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => {
                std::fs::create_dir_all(&self.dir)?;
                e.insert(BufWriter::new(File::create(
                    self.dir.join(dump_file_name(uav, kind)),
                )?))
            }
        };
        let payload = frame.payload();
        w.write_all(&frame.timestamp().to_le_bytes())?;
        w.write_all(&(payload.len() as u32).to_le_bytes())?;
        w.write_all(&payload)
    }

    /// Flushes and returns the files written.
    pub fn finish(self) -> io::Result<Vec<PathBuf>> {
        let mut paths = Vec::new();
        for ((uav, kind), mut w) in self.files {
            w.flush()?;
            paths.push(self.dir.join(dump_file_name(uav, kind)));
        }
        Ok(paths)
    }
}

/// Splits a dump file back into `(timestamp, payload)` records.
pub fn read_dump(bytes: &[u8]) -> Option<Vec<(f64, &[u8])>> {
    let mut out = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        let ts = f64::from_le_bytes(bytes.get(at..at + 8)?.try_into().ok()?);
        let len = u32::from_le_bytes(bytes.get(at + 8..at + 12)?.try_into().ok()?) as usize;
        out.push((ts, bytes.get(at + 12..at + 12 + len)?));
        at += 12 + len;
    }
    Some(out)
}
