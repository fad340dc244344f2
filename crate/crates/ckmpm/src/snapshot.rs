//! Per-frame particle snapshots and full-state checkpoints.
//!
//! Snapshots hold what a viewer needs (position, velocity, `J` or `det F`,
//! material); checkpoints hold every particle field and restart a run
//! bit-exactly. All floats are written with 17 significant digits in text
//! and as little-endian IEEE doubles in binary, so both round-trip exactly.

use std::io::{BufRead, Read, Write};

use ckmpm_core::sim::Simulation;
use ckmpm_core::transfer::Particle;
use ckmpm_core::{Matrix3, Vector3};

use crate::error::{AppError, AppResult};

pub const TEXT_MAGIC: &str = "# ckmpm snapshot v1";
pub const BINARY_MAGIC: &[u8; 8] = b"CKSNAP01";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CKCHKP01";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotRecord {
    pub x: [f64; 3],
    pub v: [f64; 3],
    /// `J` for fluids, `det F` otherwise.
    pub j: f64,
    pub material: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub frame: u64,
    pub time: f64,
    pub dx: f64,
    pub records: Vec<SnapshotRecord>,
}

fn bad(msg: impl Into<String>) -> AppError {
    AppError::Format(msg.into())
}

fn io_err(e: std::io::Error) -> AppError {
    AppError::Format(format!("snapshot stream: {e}"))
}

impl Snapshot {
    pub fn capture(sim: &Simulation) -> Self {
        let records = sim
            .particles
            .iter()
            .map(|p| {
                let fluid = sim.materials.get(p.material as usize).is_some_and(|m| m.is_fluid());
                SnapshotRecord {
                    x: [p.x[0], p.x[1], p.x[2]],
                    v: [p.v[0], p.v[1], p.v[2]],
                    j: p.volume_ratio(fluid),
                    material: p.material,
                }
            })
            .collect();
        Self { frame: sim.frame, time: sim.time, dx: sim.geometry().dx, records }
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{TEXT_MAGIC}")?;
        writeln!(w, "frame {}", self.frame)?;
        writeln!(w, "time {:.16e}", self.time)?;
        writeln!(w, "particles {}", self.records.len())?;
        writeln!(w, "dx {:.16e}", self.dx)?;
        writeln!(w, "# x y z vx vy vz J material")?;
        for r in &self.records {
            for value in r.x.iter().chain(&r.v).chain(core::iter::once(&r.j)) {
                write!(w, "{value:>24.16e} ")?;
            }
            writeln!(w, "{:>5}", r.material)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> AppResult<Self> {
        let mut lines = r.lines();
        let mut next = || -> AppResult<String> { lines.next().ok_or_else(|| bad("truncated snapshot"))?.map_err(io_err) };
        if next()?.trim() != TEXT_MAGIC {
            return Err(bad("not a text snapshot"));
        }
        let mut field = |name: &str| -> AppResult<String> {
            let line = next()?;
            line.strip_prefix(name)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| bad(format!("expected `{name}` header, found `{line}`")))
        };
        let num = |s: String| s.parse::<f64>().map_err(|e| bad(format!("bad number `{s}`: {e}")));
        let int = |s: String| s.parse::<u64>().map_err(|e| bad(format!("bad integer `{s}`: {e}")));
        let frame = int(field("frame ")?)?;
        let time = num(field("time ")?)?;
        let count = int(field("particles ")?)? as usize;
        let dx = num(field("dx ")?)?;
        field("#")?;
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let line = next()?;
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 8 {
                return Err(bad(format!("record has {} columns, expected 8", cols.len())));
            }
            let f = |i: usize| num(cols[i].to_string());
            records.push(SnapshotRecord {
                x: [f(0)?, f(1)?, f(2)?],
                v: [f(3)?, f(4)?, f(5)?],
                j: f(6)?,
                material: cols[7].parse().map_err(|e| bad(format!("bad material id: {e}")))?,
            });
        }
        Ok(Self { frame, time, dx, records })
    }

    /// Same header and field order as the text form.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&self.frame.to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        w.write_all(&self.dx.to_le_bytes())?;
        for r in &self.records {
            for value in r.x.iter().chain(&r.v).chain(core::iter::once(&r.j)) {
                w.write_all(&value.to_le_bytes())?;
            }
            w.write_all(&u32::from(r.material).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> AppResult<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != BINARY_MAGIC {
            return Err(bad("not a binary snapshot"));
        }
        let mut rd = Reader(r);
        let frame = rd.u64()?;
        let time = rd.f64()?;
        let count = rd.u64()? as usize;
        let dx = rd.f64()?;
        let mut records = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            let x = [rd.f64()?, rd.f64()?, rd.f64()?];
            let v = [rd.f64()?, rd.f64()?, rd.f64()?];
            let j = rd.f64()?;
            let material = u16::try_from(rd.u32()?).map_err(|_| bad("material id out of range"))?;
            records.push(SnapshotRecord { x, v, j, material });
        }
        Ok(Self { frame, time, dx, records })
    }
}

struct Reader<R>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> AppResult<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(io_err)?;
        Ok(b)
    }

    fn u64(&mut self) -> AppResult<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn u32(&mut self) -> AppResult<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> AppResult<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn vector(&mut self) -> AppResult<Vector3> {
        Ok(Vector3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn matrix(&mut self) -> AppResult<Matrix3> {
        let mut m = Matrix3::zeros();
        for v in m.iter_mut() {
            *v = self.f64()?;
        }
        Ok(m)
    }
}

/// Full restartable state: clock plus every particle field.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub frame: u64,
    pub time: f64,
    pub particles: Vec<Particle>,
}

impl Checkpoint {
    pub fn capture(sim: &Simulation) -> Self {
        Self { step: sim.step_count, frame: sim.frame, time: sim.time, particles: sim.particles.clone() }
    }

    /// Overwrites the dynamic state of `sim`, which must have been built from
    /// the same scene.
    pub fn restore(&self, sim: &mut Simulation) -> AppResult<()> {
        if self.particles.len() != sim.particles.len() {
            return Err(bad(format!(
                "checkpoint has {} particles, scene has {}",
                self.particles.len(),
                sim.particles.len()
            )));
        }
        sim.particles.clone_from(&self.particles);
        sim.step_count = self.step;
        sim.frame = self.frame;
        sim.time = self.time;
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&self.step.to_le_bytes())?;
        w.write_all(&self.frame.to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        w.write_all(&(self.particles.len() as u64).to_le_bytes())?;
        for p in &self.particles {
            let scalars = [p.mass, p.volume, p.j];
            let fields = p.x.iter().chain(&p.v).chain(&scalars).chain(&p.f).chain(&p.b).chain(&p.grad_v);
            for value in fields {
                w.write_all(&value.to_le_bytes())?;
            }
            w.write_all(&u32::from(p.material).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> AppResult<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint"));
        }
        let mut rd = Reader(r);
        let step = rd.u64()?;
        let frame = rd.u64()?;
        let time = rd.f64()?;
        let count = rd.u64()? as usize;
        let mut particles = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            let x = rd.vector()?;
            let v = rd.vector()?;
            let (mass, volume, j) = (rd.f64()?, rd.f64()?, rd.f64()?);
            let f = rd.matrix()?;
            let b = rd.matrix()?;
            let grad_v = rd.matrix()?;
            let material = u16::try_from(rd.u32()?).map_err(|_| bad("material id out of range"))?;
            particles.push(Particle { x, v, mass, volume, f, j, b, grad_v, material });
        }
        Ok(Self { step, frame, time, particles })
    }
}
