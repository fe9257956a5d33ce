//! Gaussian profile of the extracellular propagator.
//!
//! Scheme: draw seed points uniformly in the extracellular region of a
//! centered box, solve one diffusion problem per seed with (regularized)
//! point-source Cauchy data, center each solution on its seed and normalize
//! it to a density, average the densities into a mixture, and fit a
//! Gaussian to the mixture by moment matching on the pixel-center grid.
//! The covariance matrix of that Gaussian is the quantity of interest; the
//! least-squares residual against the fitted Gaussian is a diagnostic.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{build_mesh, StructuredTriMesh};
use crate::solver::{
    project_delta, sample_pixel_centers, solve, Basis, FieldState, SolveDiagnostics, SolverConfig,
};
use crate::substrate::Substrate;

/// Seed points for the per-delta solves.
#[derive(Debug, Clone)]
pub struct SeedSet {
    pub points: Vec<[f64; 2]>,
    pub box_side: f64,
    pub rng_seed: u64,
}

/// Draws `m` points uniformly from the extracellular part of the centered
/// `box_side` square by rejection sampling. Deterministic per seed.
pub fn sample_seeds(
    substrate: &Substrate,
    m: usize,
    box_side: f64,
    rng_seed: u64,
) -> Result<SeedSet> {
    sample_seeds_where(substrate, m, box_side, rng_seed, |_| true)
}

/// Rejection sampling with an extra acceptance predicate (used by
/// [`run_scheme`] to also avoid seeds whose containing mesh element is
/// non-diffusive in the stair-stepped geometry).
pub fn sample_seeds_where(
    substrate: &Substrate,
    m: usize,
    box_side: f64,
    rng_seed: u64,
    accept: impl Fn([f64; 2]) -> bool,
) -> Result<SeedSet> {
    if m == 0 {
        return Err(Error::param("m", "must be >= 1"));
    }
    if !(box_side > 0.0 && box_side <= substrate.side) {
        return Err(Error::param(
            "box_side",
            format!(
                "must lie in (0, side = {}], got {box_side}",
                substrate.side
            ),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let half = box_side / 2.0;
    let mut points = Vec::with_capacity(m);
    let mut attempts: usize = 0;
    let mut accepted: usize = 0;
    while points.len() < m {
        attempts += 1;
        let p = [rng.gen_range(-half..half), rng.gen_range(-half..half)];
        if !substrate.contains_axon(p) && accept(p) {
            accepted += 1;
            points.push(p);
        }
        if attempts >= 1_000_000 && (accepted as f64) < 1e-4 * attempts as f64 {
            return Err(Error::SamplingFailure { accepted, attempts });
        }
    }
    Ok(SeedSet {
        points,
        box_side,
        rng_seed,
    })
}

/// How per-seed solutions are re-centered before mixing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centering {
    /// Shift by the seed point (displacement convention); per-seed drift is
    /// preserved.
    SeedPoint,
    /// Shift by the empirical mean of the solution.
    EmpiricalMean,
}

/// Nodal density values on the pixel-center grid, re-centered so the grid
/// coordinates are displacements: node `(ix, iy)` sits at
/// `((ix + 1/2) h - side/2, (iy + 1/2) h - side/2)`.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    n: usize,
    h: f64,
    /// Row-major, `values[iy * n + ix]`, units 1/μm².
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn coord(&self, index: usize) -> f64 {
        (index as f64 + 0.5) * self.h - self.n as f64 * self.h / 2.0
    }

    /// Composite midpoint quadrature of the grid.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.h * self.h
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Production-scale invariants: unit integral within 1e-9 and no value
    /// below -1e-12. Transients of under-resolved sources can undershoot
    /// more on coarse test meshes; by the observation times of real runs
    /// the solution has smoothed far past that.
    pub fn validate(&self) -> Result<()> {
        let integral = self.integral();
        if (integral - 1.0).abs() > 1e-9 {
            return Err(Error::DegenerateField {
                reason: format!("integral {integral} deviates from 1 by more than 1e-9"),
            });
        }
        let min = self.min_value();
        if min < -1e-12 {
            return Err(Error::DegenerateField {
                reason: format!("negative density value {min} below the -1e-12 undershoot tolerance"),
            });
        }
        Ok(())
    }

    /// Midpoint-rule mean and second central moments.
    pub fn moments(&self) -> ([f64; 2], [[f64; 2]; 2]) {
        let (mut m0, mut mx, mut my) = (0.0, 0.0, 0.0);
        for iy in 0..self.n {
            let y = self.coord(iy);
            for ix in 0..self.n {
                let v = self.values[iy * self.n + ix];
                if v == 0.0 {
                    continue;
                }
                m0 += v;
                mx += v * self.coord(ix);
                my += v * y;
            }
        }
        let mean = [mx / m0, my / m0];
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for iy in 0..self.n {
            let dy = self.coord(iy) - mean[1];
            for ix in 0..self.n {
                let v = self.values[iy * self.n + ix];
                if v == 0.0 {
                    continue;
                }
                let dx = self.coord(ix) - mean[0];
                sxx += v * dx * dx;
                sxy += v * dx * dy;
                syy += v * dy * dy;
            }
        }
        (mean, [[sxx / m0, sxy / m0], [sxy / m0, syy / m0]])
    }

    /// Writes the grid as CSV, row-major.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        for iy in 0..self.n {
            let mut line = String::with_capacity(self.n * 12);
            for ix in 0..self.n {
                if ix > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{:e}", self.values[iy * self.n + ix]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Samples the solution at pixel centers, shifts the grid so the centering
/// point maps to the origin (snapped to a whole number of pixels), and
/// normalizes to unit integral.
pub fn center_normalize(
    field: &FieldState,
    seed_point: [f64; 2],
    mesh: &StructuredTriMesh,
    basis: &Basis,
    centering: Centering,
) -> Result<DensityGrid> {
    let n = mesh.pixels_per_side();
    let h = mesh.h();
    let raw = sample_pixel_centers(field, mesh, basis);

    let shift_point = match centering {
        Centering::SeedPoint => seed_point,
        Centering::EmpiricalMean => {
            let side = mesh.side();
            let (mut m0, mut mx, mut my) = (0.0, 0.0, 0.0);
            for iy in 0..n {
                let y = (iy as f64 + 0.5) * h - side / 2.0;
                for ix in 0..n {
                    let v = raw[iy * n + ix];
                    m0 += v;
                    mx += v * ((ix as f64 + 0.5) * h - side / 2.0);
                    my += v * y;
                }
            }
            if !(m0 > 0.0) {
                return Err(Error::DegenerateField {
                    reason: format!("field has non-positive total mass {m0}"),
                });
            }
            [mx / m0, my / m0]
        }
    };
    let kx = (shift_point[0] / h).round() as isize;
    let ky = (shift_point[1] / h).round() as isize;

    let mut values = vec![0.0; n * n];
    for iy in 0..n as isize {
        let sy = iy + ky;
        if sy < 0 || sy >= n as isize {
            continue;
        }
        for ix in 0..n as isize {
            let sx = ix + kx;
            if sx < 0 || sx >= n as isize {
                continue;
            }
            values[iy as usize * n + ix as usize] = raw[sy as usize * n + sx as usize];
        }
    }
    let integral: f64 = values.iter().sum::<f64>() * h * h;
    if !(integral > 0.0) {
        return Err(Error::DegenerateField {
            reason: format!("centered field has non-positive integral {integral}"),
        });
    }
    let inv = 1.0 / integral;
    values.iter_mut().for_each(|v| *v *= inv);
    Ok(DensityGrid { n, h, values })
}

/// Pointwise arithmetic mean of density grids sharing a geometry.
pub fn mixture(grids: &[DensityGrid]) -> Result<DensityGrid> {
    let first = grids
        .first()
        .ok_or_else(|| Error::param("densities", "need at least one grid"))?;
    for (i, g) in grids.iter().enumerate() {
        if g.n != first.n || (g.h - first.h).abs() > 1e-15 * first.h {
            return Err(Error::param(
                "densities",
                format!(
                    "grid {i} geometry ({} px, h = {}) differs from grid 0 ({} px, h = {})",
                    g.n, g.h, first.n, first.h
                ),
            ));
        }
    }
    let inv_m = 1.0 / grids.len() as f64;
    let mut values = vec![0.0; first.values.len()];
    for g in grids {
        for (o, &v) in values.iter_mut().zip(&g.values) {
            *o += v;
        }
    }
    values.iter_mut().for_each(|v| *v *= inv_m);
    Ok(DensityGrid {
        n: first.n,
        h: first.h,
        values,
    })
}

/// Moment-matched Gaussian with the fit-quality residual.
#[derive(Debug, Clone, Copy)]
pub struct GaussianFit {
    pub mean: [f64; 2],
    pub sigma_xx: f64,
    pub sigma_xy: f64,
    pub sigma_yy: f64,
    /// Unnormalized sum over all grid nodes of the squared mismatch against
    /// the fitted Gaussian density.
    pub residual: f64,
}

impl GaussianFit {
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        [
            [self.sigma_xx, self.sigma_xy],
            [self.sigma_xy, self.sigma_yy],
        ]
    }
}

/// Fits a Gaussian to the density by moment matching (composite midpoint
/// quadrature on the pixel grid) and evaluates the least-squares residual.
pub fn fit_gaussian(density: &DensityGrid) -> Result<GaussianFit> {
    let integral = density.integral();
    if (integral - 1.0).abs() > 1e-6 {
        return Err(Error::param(
            "density",
            format!("must integrate to 1 within 1e-6, got {integral}"),
        ));
    }
    let (mean, cov) = density.moments();
    let sigma_xx = cov[0][0];
    let sigma_xy = cov[0][1];
    let sigma_yy = cov[1][1];
    let det = sigma_xx * sigma_yy - sigma_xy * sigma_xy;
    if !(sigma_xx > 0.0 && det > 0.0) {
        return Err(Error::DegenerateFit {
            reason: format!(
                "covariance not positive definite: [[{sigma_xx}, {sigma_xy}], [{sigma_xy}, {sigma_yy}]]"
            ),
        });
    }
    let residual = gaussian_residual(density, mean, [sigma_xx, sigma_xy, sigma_yy]);
    Ok(GaussianFit {
        mean,
        sigma_xx,
        sigma_xy,
        sigma_yy,
        residual,
    })
}

/// `Σ_ij (gauss(x_i, y_j) - u_ij)^2`, no normalization.
fn gaussian_residual(density: &DensityGrid, mean: [f64; 2], sigma: [f64; 3]) -> f64 {
    let [sxx, sxy, syy] = sigma;
    let det = sxx * syy - sxy * sxy;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
    let (ixx, ixy, iyy) = (syy / det, -sxy / det, sxx / det);
    let n = density.n;
    let mut sum = 0.0;
    for iy in 0..n {
        let dy = density.coord(iy) - mean[1];
        for ix in 0..n {
            let dx = density.coord(ix) - mean[0];
            let quad = ixx * dx * dx + 2.0 * ixy * dx * dy + iyy * dy * dy;
            let g = norm * (-0.5 * quad).exp();
            let diff = g - density.values[iy * n + ix];
            sum += diff * diff;
        }
    }
    sum
}

/// Free-diffusion covariance after time `t`: `diag(2 t k, 2 t k)`.
pub fn analytic_free_sigma(k: f64, t: f64) -> [[f64; 2]; 2] {
    [[2.0 * t * k, 0.0], [0.0, 2.0 * t * k]]
}

/// Scheme parameters on top of the solver configuration.
#[derive(Debug, Clone)]
pub struct EapParams {
    /// Pixels per side of the solver mesh.
    pub grid_n: usize,
    /// Basis order p.
    pub order: usize,
    /// Number of seed densities in the mixture.
    pub m: usize,
    /// Side of the centered seed box (μm).
    pub box_side: f64,
    pub rng_seed: u64,
    /// Width of the regularized point source; `None` uses `2 h`.
    pub sigma0: Option<f64>,
    /// Subtract the known initial width `sigma0^2 I` from the fitted
    /// covariance (off by default: the raw fit slightly overestimates).
    pub subtract_initial_covariance: bool,
    pub centering: Centering,
    /// Also persist each centered per-seed density (they are large).
    pub dump_per_seed: bool,
}

impl EapParams {
    pub fn new(grid_n: usize, m: usize, box_side: f64, rng_seed: u64) -> Self {
        EapParams {
            grid_n,
            order: 1,
            m,
            box_side,
            rng_seed,
            sigma0: None,
            subtract_initial_covariance: false,
            centering: Centering::SeedPoint,
            dump_per_seed: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseTimings {
    pub mesh_s: f64,
    pub solve_s: f64,
    pub fit_s: f64,
}

/// Everything a scheme run produces.
#[derive(Debug, Clone)]
pub struct EapRun {
    pub fit: GaussianFit,
    pub mixture: DensityGrid,
    pub seeds: SeedSet,
    pub sigma0: f64,
    pub t_final: f64,
    pub k0: f64,
    pub grid_n: usize,
    pub steps_per_seed: usize,
    pub timings: PhaseTimings,
    /// Diagnostics of the first seed's solve (representative mass history).
    pub first_solve: Option<SolveDiagnostics>,
}

/// Runs the full scheme: mesh, seeds, one solve per seed, center and
/// normalize, mix, fit. Seeds are processed in a fixed order (each solve is
/// internally element-parallel), so results are bitwise reproducible for
/// any worker count. With `out_dir` set, persists the fit, the mixture and
/// (optionally) per-seed densities.
pub fn run_scheme(
    substrate: &Substrate,
    params: &EapParams,
    solver: &SolverConfig,
    out_dir: Option<&Path>,
) -> Result<EapRun> {
    let t_mesh = Instant::now();
    let basis = Basis::new(params.order)?;
    let mut mesh = build_mesh(substrate.side, params.grid_n)?;
    mesh.assign_diffusivity(substrate)?;
    let mesh_s = t_mesh.elapsed().as_secs_f64();

    let sigma0 = params.sigma0.unwrap_or(2.0 * mesh.h());
    let k = mesh.diffusivity();
    let seeds = sample_seeds_where(substrate, params.m, params.box_side, params.rng_seed, |p| {
        mesh.locate(p)
            .map(|e| k[e.0 as usize] > 0.0)
            .unwrap_or(false)
    })?;

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let t_solve = Instant::now();
    let mut sum: Option<DensityGrid> = None;
    let mut first_solve = None;
    let mut steps_per_seed = 0;
    for (i, &p) in seeds.points.iter().enumerate() {
        let mut one = || -> Result<DensityGrid> {
            let init = project_delta(&mesh, &basis, p, sigma0)?;
            let (fin, diag) = solve(&mesh, &basis, init, solver)?;
            steps_per_seed = diag.steps;
            if i == 0 {
                first_solve = Some(diag);
            }
            center_normalize(&fin, p, &mesh, &basis, params.centering)
        };
        let density = one().map_err(|e| Error::SeedFailure {
            index: i,
            source: Box::new(e),
        })?;
        if params.dump_per_seed {
            if let Some(dir) = out_dir {
                let mut f = std::fs::File::create(dir.join(format!("density_{i:03}.csv")))?;
                density.write_csv(&mut f)?;
            }
        }
        match &mut sum {
            None => sum = Some(density),
            Some(acc) => {
                for (o, v) in acc.values.iter_mut().zip(&density.values) {
                    *o += v;
                }
            }
        }
    }
    let mut mix = sum.expect("m >= 1");
    let inv_m = 1.0 / params.m as f64;
    mix.values.iter_mut().for_each(|v| *v *= inv_m);
    let solve_s = t_solve.elapsed().as_secs_f64();

    let t_fit = Instant::now();
    let mut fit = fit_gaussian(&mix)?;
    if params.subtract_initial_covariance {
        fit.sigma_xx -= sigma0 * sigma0;
        fit.sigma_yy -= sigma0 * sigma0;
    }
    let fit_s = t_fit.elapsed().as_secs_f64();

    let run = EapRun {
        fit,
        mixture: mix,
        seeds,
        sigma0,
        t_final: solver.t_final,
        k0: substrate.k0,
        grid_n: params.grid_n,
        steps_per_seed,
        timings: PhaseTimings {
            mesh_s,
            solve_s,
            fit_s,
        },
        first_solve,
    };
    if let Some(dir) = out_dir {
        let mut f = std::fs::File::create(dir.join("fit.txt"))?;
        write_fit_file(&mut f, &run)?;
        let mut f = std::fs::File::create(dir.join("mixture.csv"))?;
        run.mixture.write_csv(&mut f)?;
        let mut f = std::fs::File::create(dir.join("seeds.csv"))?;
        for p in &run.seeds.points {
            writeln!(f, "{:.17e},{:.17e}", p[0], p[1])?;
        }
    }
    Ok(run)
}

/// Key-value fit record as written next to the mixture dump.
pub fn write_fit_file(w: &mut impl Write, run: &EapRun) -> Result<()> {
    writeln!(w, "mu_x = {:.17e}", run.fit.mean[0])?;
    writeln!(w, "mu_y = {:.17e}", run.fit.mean[1])?;
    writeln!(w, "sigma_xx = {:.17e}", run.fit.sigma_xx)?;
    writeln!(w, "sigma_xy = {:.17e}", run.fit.sigma_xy)?;
    writeln!(w, "sigma_yy = {:.17e}", run.fit.sigma_yy)?;
    writeln!(w, "residual = {:.17e}", run.fit.residual)?;
    writeln!(w, "m = {}", run.seeds.points.len())?;
    writeln!(w, "T = {:.17e}", run.t_final)?;
    writeln!(w, "k0 = {:.17e}", run.k0)?;
    writeln!(w, "grid_n = {}", run.grid_n)?;
    Ok(())
}
