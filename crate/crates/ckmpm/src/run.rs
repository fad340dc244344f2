use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ckmpm_core::sim::{Diagnostics, Simulation};
use ckmpm_core::Error;

use crate::config::{SceneConfig, SnapshotMode};
use crate::diagnostics::DiagnosticsWriter;
use crate::error::{AppError, AppResult};
use crate::scene::{self, Overrides};
use crate::snapshot::{Checkpoint, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Precision {
    #[default]
    Double,
    Single,
}

/// Everything `run` needs besides the scene itself.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub config: PathBuf,
    pub out: PathBuf,
    pub overrides: Overrides,
    pub precision: Precision,
    pub threads: Option<usize>,
    /// Resume from a checkpoint written by an earlier run of the same scene.
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub frames: u64,
    pub steps: u64,
    pub particles: usize,
    pub snapshots: u64,
    pub seconds: f64,
}

fn create(path: &Path) -> AppResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| AppError::io(path, e))
}

pub fn snapshot_path(out: &Path, frame: u64, binary: bool) -> PathBuf {
    out.join(format!("frame_{frame:05}.{}", if binary { "bin" } else { "txt" }))
}

fn write_snapshot(out: &Path, sim: &Simulation, mode: SnapshotMode) -> AppResult<u64> {
    let snap = Snapshot::capture(sim);
    let mut written = 0;
    if matches!(mode, SnapshotMode::Text | SnapshotMode::Both) {
        let path = snapshot_path(out, sim.frame, false);
        snap.write_text(create(&path)?).map_err(|e| AppError::io(&path, e))?;
        written += 1;
    }
    if matches!(mode, SnapshotMode::Binary | SnapshotMode::Both) {
        let path = snapshot_path(out, sim.frame, true);
        snap.write_binary(create(&path)?).map_err(|e| AppError::io(&path, e))?;
        written += 1;
    }
    Ok(written)
}

fn finite(d: &Diagnostics) -> bool {
    crate::diagnostics::row(d).iter().all(|v| v.is_finite())
}

/// Steps `sim` through `frames` frames, reporting every substep.
pub fn drive<F>(sim: &mut Simulation, frames: u64, mut on_step: F, mut on_frame: impl FnMut(&Simulation) -> AppResult<()>) -> AppResult<()>
where
    F: FnMut(&Diagnostics) -> AppResult<()>,
{
    while sim.frame < frames {
        let mut failure = None;
        let result = sim.advance_frame(|d| {
            if failure.is_some() {
                return;
            }
            if !finite(d) {
                failure = Some(AppError::Numerical {
                    step: d.step,
                    time: d.time,
                    source: Error::NonFinite { particle: None, what: "diagnostics" },
                });
            } else if let Err(e) = on_step(d) {
                failure = Some(e);
            }
        });
        if let Err(source) = result {
            return Err(AppError::Numerical { step: sim.step_count, time: sim.time, source });
        }
        if let Some(e) = failure {
            return Err(e);
        }
        on_frame(sim)?;
    }
    Ok(())
}

pub fn cmd_run(manifest: &RunManifest) -> AppResult<RunSummary> {
    if manifest.precision == Precision::Single {
        return Err(AppError::config("precision: single precision is not implemented; use `double`"));
    }
    let mut cfg = SceneConfig::load(&manifest.config)?;
    manifest.overrides.apply(&mut cfg);
    if manifest.threads.is_some_and(|n| n > 1) && manifest.overrides.deterministic != Some(true) {
        cfg.solver.deterministic = false;
    }
    with_threads(manifest.threads, || run_config(&cfg, manifest))?
}

fn run_config(cfg: &SceneConfig, manifest: &RunManifest) -> AppResult<RunSummary> {
    let mut sim = scene::build(cfg, &manifest.overrides)?;
    if let Some(path) = &manifest.resume {
        let file = File::open(path).map_err(|e| AppError::io(path, e))?;
        Checkpoint::read(std::io::BufReader::new(file))?.restore(&mut sim)?;
    }
    let out = &manifest.out;
    fs::create_dir_all(out).map_err(|e| AppError::io(out, e))?;
    let scene_path = out.join("scene.toml");
    fs::write(&scene_path, cfg.to_toml()).map_err(|e| AppError::io(&scene_path, e))?;

    let diag_path = out.join("diagnostics.csv");
    let mut diag = DiagnosticsWriter::new(create(&diag_path)?).map_err(|e| AppError::io(&diag_path, e))?;
    let start = Instant::now();
    let first_frame = sim.frame;
    let mut snapshots = 0;
    let mode = cfg.output.snapshots;
    let every = cfg.output.every;
    drive(
        &mut sim,
        cfg.time.frames,
        |d| diag.push(d).map_err(|e| AppError::io(&diag_path, e)),
        |s| {
            if s.frame % every == 0 || s.frame == cfg.time.frames {
                snapshots += write_snapshot(out, s, mode)?;
            }
            Ok(())
        },
    )?;
    diag.finish().map_err(|e| AppError::io(&diag_path, e))?;

    let ck_path = out.join("checkpoint.bin");
    Checkpoint::capture(&sim).write(create(&ck_path)?).map_err(|e| AppError::io(&ck_path, e))?;
    Ok(RunSummary {
        frames: sim.frame - first_frame,
        steps: sim.step_count,
        particles: sim.particles.len(),
        snapshots,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs `f` on a pool of `threads` workers (the global pool when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> AppResult<T> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| AppError::config(format!("threads: {e}")))?;
        return Ok(pool.install(f));
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(f())
}
