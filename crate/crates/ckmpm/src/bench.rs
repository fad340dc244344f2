//! Compact vs quadratic timing on a shared substep schedule.

use std::time::Instant;

use ckmpm_core::sim::Simulation;

use crate::config::{KernelName, SceneConfig};
use crate::error::{AppError, AppResult};
use crate::scene::{self, Overrides};

/// Wall time per phase, seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub activate: f64,
    pub p2g: f64,
    pub grid: f64,
    pub g2p: f64,
}

impl PhaseTimes {
    /// Scatter plus gather: the transfer phases.
    pub fn transfer(&self) -> f64 {
        self.p2g + self.g2p
    }

    pub fn total(&self) -> f64 {
        self.activate + self.p2g + self.grid + self.g2p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelRun {
    pub kernel: KernelName,
    pub particles: usize,
    pub steps: usize,
    pub phases: PhaseTimes,
    pub p2g_visits: f64,
    pub g2p_visits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub compact: KernelRun,
    pub quadratic: KernelRun,
}

impl BenchReport {
    /// Quadratic over compact wall time of the transfer phases.
    pub fn transfer_speedup(&self) -> f64 {
        self.quadratic.phases.transfer() / self.compact.phases.transfer()
    }

    pub fn total_speedup(&self) -> f64 {
        self.quadratic.phases.total() / self.compact.phases.total()
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "{:<10} {:>9} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10} {:>7}\n",
            "kernel", "particles", "steps", "activate", "p2g", "grid", "g2p", "transfer", "visits"
        );
        for r in [&self.compact, &self.quadratic] {
            let p = &r.phases;
            s.push_str(&format!(
                "{:<10} {:>9} {:>6} {:>9.3}s {:>9.3}s {:>9.3}s {:>9.3}s {:>9.3}s {:>7}\n",
                format!("{:?}", r.kernel).to_lowercase(),
                r.particles,
                r.steps,
                p.activate,
                p.p2g,
                p.grid,
                p.g2p,
                p.transfer(),
                r.p2g_visits
            ));
        }
        s.push_str(&format!(
            "speedup (quadratic / compact): transfer {:.2}x, total {:.2}x\n",
            self.transfer_speedup(),
            self.total_speedup()
        ));
        s
    }
}

fn timed_step(sim: &mut Simulation, dt: f64, t: &mut PhaseTimes) -> ckmpm_core::Result<()> {
    let mut clock = Instant::now();
    let mut lap = |slot: &mut f64| {
        let now = Instant::now();
        *slot += (now - clock).as_secs_f64();
        clock = now;
    };
    sim.phase_activate()?;
    lap(&mut t.activate);
    sim.phase_p2g(dt)?;
    lap(&mut t.p2g);
    sim.phase_grid_update(dt);
    lap(&mut t.grid);
    sim.phase_g2p(dt)?;
    lap(&mut t.g2p);
    sim.time += dt;
    sim.step_count += 1;
    Ok(())
}

fn run(cfg: &SceneConfig, overrides: &Overrides, kernel: KernelName, schedule: &[f64]) -> AppResult<(KernelRun, Vec<f64>)> {
    let mut sim = scene::build(cfg, &Overrides { kernel: Some(kernel), ..*overrides })?;
    let mut phases = PhaseTimes::default();
    let mut used = Vec::with_capacity(schedule.len());
    let frame_end = sim.frame_duration() * cfg.time.frames as f64;
    for &planned in schedule {
        let dt = if planned > 0.0 { planned } else { sim.next_dt(frame_end) };
        if !(dt > 0.0) {
            break;
        }
        timed_step(&mut sim, dt, &mut phases)
            .map_err(|source| AppError::Numerical { step: sim.step_count, time: sim.time, source })?;
        used.push(dt);
    }
    let run = KernelRun {
        kernel,
        particles: sim.particles.len(),
        steps: used.len(),
        phases,
        p2g_visits: sim.counters.p2g_visits_per_particle(),
        g2p_visits: sim.counters.g2p_visits_per_particle(),
    };
    Ok((run, used))
}

/// Runs `steps` substeps with the compact kernel, then replays the same
/// `Δt` sequence with the quadratic kernel.
pub fn cmd_bench(cfg: &SceneConfig, overrides: &Overrides, steps: usize) -> AppResult<BenchReport> {
    let (compact, schedule) = run(cfg, overrides, KernelName::Compact, &vec![0.0; steps])?;
    let (quadratic, _) = run(cfg, overrides, KernelName::Quadratic, &schedule)?;
    Ok(BenchReport { compact, quadratic })
}
