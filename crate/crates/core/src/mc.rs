//! Monte Carlo random-walk cross-validation oracle.
//!
//! Walkers start uniformly in the extracellular part of a centered box and
//! take fixed-length steps in uniform random directions. A step whose
//! segment would enter any closed disk or leave the domain square is
//! rejected and the walker stays in place for that step. The empirical
//! covariance of the final displacements estimates the same propagator
//! covariance the DG pipeline fits, by an entirely independent route.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::substrate::{CircleIndex, Substrate};

#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    /// Diffusivity D (μm²/s).
    pub diffusivity: f64,
    /// Simulated duration t_s (s).
    pub duration: f64,
    /// Number of time steps per walker.
    pub steps: usize,
    pub walkers: usize,
    pub seed: u64,
    /// Side of the centered start box (μm).
    pub init_box_side: f64,
}

impl McConfig {
    /// Step length `l = sqrt(4 D t_s / steps)`.
    pub fn step_length(&self) -> f64 {
        (4.0 * self.diffusivity * self.duration / self.steps as f64).sqrt()
    }

    pub fn validate(&self, substrate: &Substrate) -> Result<()> {
        if !(self.diffusivity > 0.0) {
            return Err(Error::param("diffusivity", "must be > 0"));
        }
        if !(self.duration > 0.0) {
            return Err(Error::param("duration", "must be > 0"));
        }
        if self.steps == 0 || self.walkers == 0 {
            return Err(Error::param("steps/walkers", "must be >= 1"));
        }
        if !(self.init_box_side > 0.0 && self.init_box_side <= substrate.side) {
            return Err(Error::param(
                "init_box_side",
                format!("must lie in (0, {}]", substrate.side),
            ));
        }
        if !(self.step_length() > 0.0) {
            return Err(Error::param("step_length", "derived step length is 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct McResult {
    /// Empirical covariance of final displacements (μm²).
    pub sigma_xx: f64,
    pub sigma_xy: f64,
    pub sigma_yy: f64,
    /// Standard error of each covariance entry.
    pub stderr_xx: f64,
    pub stderr_xy: f64,
    pub stderr_yy: f64,
    pub mean: [f64; 2],
    pub walkers_completed: usize,
    pub step_length: f64,
}

impl McResult {
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        [
            [self.sigma_xx, self.sigma_xy],
            [self.sigma_xy, self.sigma_yy],
        ]
    }
}

struct WalkerRun<'a> {
    index: &'a CircleIndex<'a>,
    half: f64,
    box_half: f64,
    step: f64,
}

impl WalkerRun<'_> {
    fn rng(&self, seed: u64, walker: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(walker);
        rng
    }

    fn start(&self, rng: &mut ChaCha8Rng, walker: usize) -> Result<[f64; 2]> {
        const LIMIT: usize = 1_000_000;
        for _ in 0..LIMIT {
            let p = [
                rng.gen_range(-self.box_half..self.box_half),
                rng.gen_range(-self.box_half..self.box_half),
            ];
            if !self.index.contains_axon(p) {
                return Ok(p);
            }
        }
        Err(Error::WalkerStartFailure {
            walker,
            attempts: LIMIT,
        })
    }

    /// Advances one walker; `record` sees every accepted position.
    fn walk(
        &self,
        seed: u64,
        walker: usize,
        steps: usize,
        mut record: impl FnMut([f64; 2]),
    ) -> Result<[f64; 2]> {
        let mut rng = self.rng(seed, walker as u64);
        let start = self.start(&mut rng, walker)?;
        let mut pos = start;
        record(pos);
        for _ in 0..steps {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let (s, c) = theta.sin_cos();
            let next = [pos[0] + self.step * c, pos[1] + self.step * s];
            if next[0].abs() > self.half || next[1].abs() > self.half {
                continue;
            }
            if self.index.segment_hits_axon(pos, next) {
                continue;
            }
            pos = next;
            record(pos);
        }
        Ok([pos[0] - start[0], pos[1] - start[1]])
    }
}

/// Runs all walkers and accumulates displacement statistics. Walkers own
/// independent, deterministically derived random substreams and the final
/// reduction runs in a fixed order, so the result is bitwise reproducible
/// for any worker count.
pub fn walk(substrate: &Substrate, config: &McConfig) -> Result<McResult> {
    config.validate(substrate)?;
    let step = config.step_length();
    let index = CircleIndex::new(substrate, step);
    let run = WalkerRun {
        index: &index,
        half: substrate.side / 2.0,
        box_half: config.init_box_side / 2.0,
        step,
    };
    let displacements: Vec<[f64; 2]> = (0..config.walkers)
        .into_par_iter()
        .map(|w| run.walk(config.seed, w, config.steps, |_| {}))
        .collect::<Result<_>>()?;

    let n = displacements.len() as f64;
    let mut mean = [0.0, 0.0];
    for d in &displacements {
        mean[0] += d[0];
        mean[1] += d[1];
    }
    mean[0] /= n;
    mean[1] /= n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut qxx, mut qxy, mut qyy) = (0.0, 0.0, 0.0);
    for d in &displacements {
        let dx = d[0] - mean[0];
        let dy = d[1] - mean[1];
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        qxx += dx * dx * dx * dx;
        qxy += dx * dy * dx * dy;
        qyy += dy * dy * dy * dy;
    }
    let (sxx, sxy, syy) = (sxx / n, sxy / n, syy / n);
    // Var(c_ab) ~ (E[(a b)^2] - c_ab^2) / n
    let se = |q: f64, c: f64| ((q / n - c * c).max(0.0) / n).sqrt();
    Ok(McResult {
        sigma_xx: sxx,
        sigma_xy: sxy,
        sigma_yy: syy,
        stderr_xx: se(qxx, sxx),
        stderr_xy: se(qxy, sxy),
        stderr_yy: se(qyy, syy),
        mean,
        walkers_completed: displacements.len(),
        step_length: step,
    })
}

/// Re-simulates the first `count` walkers and writes their accepted
/// positions as `walker,step,x,y` CSV lines (same paths as [`walk`]).
pub fn dump_trajectories(
    substrate: &Substrate,
    config: &McConfig,
    count: usize,
    w: &mut impl Write,
) -> Result<()> {
    config.validate(substrate)?;
    let step = config.step_length();
    let index = CircleIndex::new(substrate, step);
    let run = WalkerRun {
        index: &index,
        half: substrate.side / 2.0,
        box_half: config.init_box_side / 2.0,
        step,
    };
    for walker in 0..count.min(config.walkers) {
        let mut istep = 0usize;
        let mut io_err = None;
        run.walk(config.seed, walker, config.steps, |p| {
            if io_err.is_none() {
                if let Err(e) = writeln!(w, "{walker},{istep},{:.9e},{:.9e}", p[0], p[1]) {
                    io_err = Some(e);
                }
            }
            istep += 1;
        })?;
        if let Some(e) = io_err {
            return Err(e.into());
        }
    }
    Ok(())
}

/// Key-value result file with a config echo.
pub fn write_result(w: &mut impl Write, result: &McResult, config: &McConfig) -> Result<()> {
    writeln!(w, "sigma_xx = {:.17e}", result.sigma_xx)?;
    writeln!(w, "sigma_xy = {:.17e}", result.sigma_xy)?;
    writeln!(w, "sigma_yy = {:.17e}", result.sigma_yy)?;
    writeln!(w, "stderr_xx = {:.17e}", result.stderr_xx)?;
    writeln!(w, "stderr_xy = {:.17e}", result.stderr_xy)?;
    writeln!(w, "stderr_yy = {:.17e}", result.stderr_yy)?;
    writeln!(w, "mean_x = {:.17e}", result.mean[0])?;
    writeln!(w, "mean_y = {:.17e}", result.mean[1])?;
    writeln!(w, "walkers = {}", result.walkers_completed)?;
    writeln!(w, "step_length = {:.17e}", result.step_length)?;
    writeln!(w, "diffusivity = {:.17e}", config.diffusivity)?;
    writeln!(w, "duration = {:.17e}", config.duration)?;
    writeln!(w, "steps = {}", config.steps)?;
    writeln!(w, "seed = {}", config.seed)?;
    writeln!(w, "init_box_side = {:.17e}", config.init_box_side)?;
    Ok(())
}
