//! Discontinuous Galerkin solver for the diffusion equation with a
//! piecewise-constant, possibly vanishing coefficient.
//!
//! The second-order equation is split into `q = ∇u`, `u_t = ∇·(k q)` and
//! discretized element-wise with broken Lagrange polynomials. Interface
//! values are replaced by numerical fluxes: the arithmetic mean for `u`
//! ([`flux_u`]) and the harmonic-mean-weighted mean for `k q` ([`flux_k`]),
//! which shuts off transport through edges adjacent to non-diffusive (axon)
//! elements. The outer boundary is absorbing: the ghost trace is `u+ = -u-`,
//! `q+ = q-`, `k+ = k-`.
//!
//! Axon elements are stepped like every other element; their time
//! derivative is identically zero (all their edge coefficients and the
//! volume factor vanish), which keeps the per-element work uniform and the
//! update embarrassingly parallel. Within a Runge-Kutta stage each element
//! writes only its own coefficients and reads only its own and its three
//! neighbors' previous-stage coefficients, so results are bitwise
//! independent of the worker count.

pub mod basis;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{StructuredTriMesh, NO_NEIGHBOR};
pub use basis::Basis;

const MAX_D: usize = 10;

/// Per-element polynomial coefficients of the scalar unknown.
#[derive(Debug, Clone)]
pub struct FieldState {
    /// `coeffs[e * d + i]`, `d` = nodes per element.
    pub coeffs: Vec<f64>,
    /// Simulation time (s).
    pub time: f64,
}

/// Weak gradient `q = (qx, qy)`; recomputed from the field every stage.
#[derive(Debug, Clone)]
pub struct AuxField {
    pub qx: Vec<f64>,
    pub qy: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RkScheme {
    /// Explicit midpoint (2 stages).
    Rk2,
    /// Classical 4-stage Runge-Kutta.
    Rk4,
}

impl RkScheme {
    /// Extent of the stability region on the negative real axis.
    fn real_axis_limit(self) -> f64 {
        match self {
            RkScheme::Rk2 => 2.0,
            RkScheme::Rk4 => 2.78,
        }
    }
}

/// Measured spectral radius of the semidiscrete operator, `λ_max h^2 / k`,
/// per basis order (power iteration on free-diffusion meshes; grid
/// independent to three digits).
const OPERATOR_RADIUS: [f64; 3] = [60.0, 193.0, 463.0];

/// Largest safe CFL number `c` in `dt = c h^2 / k` for the given basis
/// order and Runge-Kutta scheme, with a 15% stability margin.
pub fn stable_cfl(order: usize, scheme: RkScheme) -> f64 {
    let lambda = OPERATOR_RADIUS[(order - 1).min(2)];
    0.85 * scheme.real_axis_limit() / lambda
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Explicit step; `None` derives `cfl_safety * h^2 / k_max`.
    pub dt: Option<f64>,
    /// Final time T (s), `>= 0`.
    pub t_final: f64,
    /// Dimensionless CFL number `c <= 0.25` for explicit diffusion;
    /// `None` uses [`stable_cfl`] for the basis order and scheme.
    pub cfl_safety: Option<f64>,
    pub scheme: RkScheme,
    /// Record conservation diagnostics (and check finiteness) every this
    /// many steps; the final step is always recorded.
    pub diag_every: usize,
}

impl SolverConfig {
    pub fn new(t_final: f64) -> Self {
        SolverConfig {
            dt: None,
            t_final,
            cfl_safety: None,
            scheme: RkScheme::Rk4,
            diag_every: 1,
        }
    }

    /// Validates the stability invariant `dt <= c h^2 / k_max`, `c <= 0.25`,
    /// and returns the step to use.
    pub fn resolve_dt(&self, mesh: &StructuredTriMesh, basis: &Basis) -> Result<f64> {
        if !(self.t_final >= 0.0) {
            return Err(Error::param("t_final", format!("must be >= 0, got {}", self.t_final)));
        }
        let cfl = self
            .cfl_safety
            .unwrap_or_else(|| stable_cfl(basis.order(), self.scheme));
        if !(cfl > 0.0 && cfl <= 0.25) {
            return Err(Error::param(
                "cfl_safety",
                format!("must lie in (0, 0.25], got {cfl}"),
            ));
        }
        let kmax = mesh.max_diffusivity();
        if !(kmax > 0.0) {
            return Err(Error::param(
                "mesh",
                "diffusivity not assigned (all elements have k = 0)",
            ));
        }
        let h = mesh.h();
        let bound = 0.25 * h * h / kmax;
        let dt = match self.dt {
            Some(dt) => {
                if !(dt > 0.0) {
                    return Err(Error::param("dt", format!("must be > 0, got {dt}")));
                }
                if dt > bound * (1.0 + 1e-12) {
                    return Err(Error::param(
                        "dt",
                        format!("violates stability bound: dt = {dt} > 0.25 h^2 / k = {bound}"),
                    ));
                }
                dt
            }
            None => cfl * h * h / kmax,
        };
        Ok(dt)
    }
}

/// Central flux for `u`: the arithmetic mean of the two traces. The caller
/// applies the outward normal.
#[inline]
pub fn flux_u(u_minus: f64, u_plus: f64) -> f64 {
    0.5 * (u_minus + u_plus)
}

/// Harmonic mean of the two diffusivities, `2 k- k+ / (k- + k+)`, defined
/// as 0 when both vanish. Zero whenever either side is non-diffusive, so no
/// flow crosses an axon wall.
pub fn flux_k(k_minus: f64, k_plus: f64) -> Result<f64> {
    if k_minus < 0.0 || k_plus < 0.0 {
        return Err(Error::param(
            "k",
            format!("diffusivities must be >= 0, got {k_minus} and {k_plus}"),
        ));
    }
    Ok(harmonic_mean(k_minus, k_plus))
}

#[inline]
fn harmonic_mean(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s == 0.0 {
        0.0
    } else {
        2.0 * a * b / s
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64], d: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        s += a[i] * b[i];
    }
    s
}

fn check_dims(coeffs: &[f64], mesh: &StructuredTriMesh, basis: &Basis) {
    assert_eq!(
        coeffs.len(),
        mesh.element_count() * basis.node_count(),
        "field size does not match mesh ({} elements) and basis ({} nodes)",
        mesh.element_count(),
        basis.node_count()
    );
}

/// Per-(shape, edge) tables with all physical scaling folded in, sized at
/// compile time so the element loops fully unroll.
struct EdgeTab<const D: usize, const G: usize> {
    nx: f64,
    ny: f64,
    /// `0.5 * h * rel_len * gauss_w[g]`.
    w: [f64; G],
    ts: [[f64; D]; G],
    tn: [[f64; D]; G],
}

struct Tables<const D: usize, const G: usize> {
    edges: [[EdgeTab<D, G>; 3]; 2],
    /// `h * deriv_hat[shape][axis]`, row-major.
    deriv: [[[[f64; D]; D]; 2]; 2],
    /// `mass_inv_ref / h^2`.
    minv: [[f64; D]; D],
}

impl<const D: usize, const G: usize> Tables<D, G> {
    fn new(basis: &Basis, h: f64) -> Self {
        let fixed = |v: &[f64]| -> [f64; D] { v.try_into().expect("table width") };
        let edges = std::array::from_fn(|shape| {
            std::array::from_fn(|edge| {
                let rule = &basis.edges[shape][edge];
                EdgeTab {
                    nx: rule.normal[0],
                    ny: rule.normal[1],
                    w: std::array::from_fn(|g| 0.5 * h * rule.rel_len * rule.weights[g]),
                    ts: std::array::from_fn(|g| fixed(&rule.trace_self[g * D..(g + 1) * D])),
                    tn: std::array::from_fn(|g| fixed(&rule.trace_nb[g * D..(g + 1) * D])),
                }
            })
        });
        let deriv = std::array::from_fn(|shape| {
            std::array::from_fn(|axis| {
                std::array::from_fn(|i| {
                    std::array::from_fn(|j| h * basis.deriv_hat[shape][axis][i * D + j])
                })
            })
        });
        let inv_h2 = 1.0 / (h * h);
        let minv =
            std::array::from_fn(|i| std::array::from_fn(|j| inv_h2 * basis.mass_inv_ref[i * D + j]));
        Tables { edges, deriv, minv }
    }
}

#[inline(always)]
fn adot<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        s += a[i] * b[i];
    }
    s
}

#[inline(always)]
fn chunk<const D: usize>(v: &[f64], e: usize) -> &[f64; D] {
    v[e * D..(e + 1) * D].try_into().expect("chunk width")
}

fn q_impl<const D: usize, const G: usize>(
    u: &[f64],
    mesh: &StructuredTriMesh,
    basis: &Basis,
    q: &mut [f64],
) {
    let tabs = Tables::<D, G>::new(basis, mesh.h());
    let neighbors = mesh.neighbors_raw();
    // q is interleaved: element e owns q[e*2D .. e*2D+D] (x component)
    // followed by the y component.
    q.par_chunks_mut(2 * D).enumerate().for_each(|(e, q_e)| {
        let shape = e & 1;
        let u_e = chunk::<D>(u, e);
        let mut bx = [0.0; D];
        let mut by = [0.0; D];
        for edge in 0..3 {
            let tab = &tabs.edges[shape][edge];
            let nb = neighbors[e][edge];
            for g in 0..G {
                let ts = &tab.ts[g];
                let um = adot(ts, u_e);
                let up = if nb == NO_NEIGHBOR {
                    -um
                } else {
                    adot(&tab.tn[g], chunk::<D>(u, nb as usize))
                };
                let cw = tab.w[g] * flux_u(um, up);
                let (fx, fy) = (cw * tab.nx, cw * tab.ny);
                for i in 0..D {
                    bx[i] += fx * ts[i];
                    by[i] += fy * ts[i];
                }
            }
        }
        let dx = &tabs.deriv[shape][0];
        let dy = &tabs.deriv[shape][1];
        for i in 0..D {
            bx[i] -= adot(&dx[i], u_e);
            by[i] -= adot(&dy[i], u_e);
        }
        for i in 0..D {
            q_e[i] = adot(&tabs.minv[i], &bx);
            q_e[D + i] = adot(&tabs.minv[i], &by);
        }
    });
}

/// What the fused rhs pass does with the per-element derivative.
#[derive(Clone, Copy, PartialEq)]
enum StageOp {
    /// `acc = deriv; out = u0 + c * deriv`
    First,
    /// `acc += 2 * deriv; out = u0 + c * deriv`
    Mid,
    /// `out = u0 + c * (acc + deriv)`
    Last,
    /// `out = u0 + c * deriv` (no accumulator)
    Plain,
}

/// Computes the per-element time derivative from the interleaved gradient
/// field and immediately forms the next stage vector (and the RK
/// accumulator), saving full-array passes.
#[allow(clippy::too_many_arguments)]
fn rhs_stage_impl<const D: usize, const G: usize>(
    q: &[f64],
    mesh: &StructuredTriMesh,
    basis: &Basis,
    u0: &[f64],
    c: f64,
    op: StageOp,
    acc: &mut [f64],
    out: &mut [f64],
) {
    let tabs = Tables::<D, G>::new(basis, mesh.h());
    let neighbors = mesh.neighbors_raw();
    let k = mesh.diffusivity();
    out.par_chunks_mut(D)
        .zip(acc.par_chunks_mut(D))
        .enumerate()
        .for_each(|(e, (out_e, acc_e))| {
            let shape = e & 1;
            let ke = k[e];
            let (qx_e, qy_e) = split_q::<D>(q, e);
            let mut b = [0.0; D];
            for edge in 0..3 {
                let tab = &tabs.edges[shape][edge];
                let nb = neighbors[e][edge];
                let keff = if nb == NO_NEIGHBOR {
                    ke
                } else {
                    harmonic_mean(ke, k[nb as usize])
                };
                if keff == 0.0 {
                    continue;
                }
                for g in 0..G {
                    let ts = &tab.ts[g];
                    let qxm = adot(ts, qx_e);
                    let qym = adot(ts, qy_e);
                    let (qxp, qyp) = if nb == NO_NEIGHBOR {
                        (qxm, qym)
                    } else {
                        let tn = &tab.tn[g];
                        let (qx_nb, qy_nb) = split_q::<D>(q, nb as usize);
                        (adot(tn, qx_nb), adot(tn, qy_nb))
                    };
                    let flux = keff * (flux_u(qxm, qxp) * tab.nx + flux_u(qym, qyp) * tab.ny);
                    let cw = tab.w[g] * flux;
                    for i in 0..D {
                        b[i] += cw * ts[i];
                    }
                }
            }
            if ke != 0.0 {
                let dx = &tabs.deriv[shape][0];
                let dy = &tabs.deriv[shape][1];
                for i in 0..D {
                    b[i] -= ke * (adot(&dx[i], qx_e) + adot(&dy[i], qy_e));
                }
            }
            let u0_e = chunk::<D>(u0, e);
            match op {
                StageOp::First => {
                    for i in 0..D {
                        let deriv = adot(&tabs.minv[i], &b);
                        acc_e[i] = deriv;
                        out_e[i] = u0_e[i] + c * deriv;
                    }
                }
                StageOp::Mid => {
                    for i in 0..D {
                        let deriv = adot(&tabs.minv[i], &b);
                        acc_e[i] += 2.0 * deriv;
                        out_e[i] = u0_e[i] + c * deriv;
                    }
                }
                StageOp::Last => {
                    for i in 0..D {
                        let deriv = adot(&tabs.minv[i], &b);
                        out_e[i] = u0_e[i] + c * (acc_e[i] + deriv);
                    }
                }
                StageOp::Plain => {
                    for i in 0..D {
                        let deriv = adot(&tabs.minv[i], &b);
                        out_e[i] = u0_e[i] + c * deriv;
                    }
                }
            }
        });
}

/// x/y component views of element `e` in the interleaved gradient array.
#[inline(always)]
fn split_q<const D: usize>(q: &[f64], e: usize) -> (&[f64; D], &[f64; D]) {
    let base = e * 2 * D;
    let (a, b) = q[base..base + 2 * D].split_at(D);
    (
        a.try_into().expect("split width"),
        b.try_into().expect("split width"),
    )
}

fn compute_q_into(u: &[f64], mesh: &StructuredTriMesh, basis: &Basis, q: &mut [f64]) {
    match basis.node_count() {
        3 => q_impl::<3, 2>(u, mesh, basis, q),
        6 => q_impl::<6, 3>(u, mesh, basis, q),
        10 => q_impl::<10, 4>(u, mesh, basis, q),
        d => unreachable!("unsupported basis size {d}"),
    }
}

#[allow(clippy::too_many_arguments)]
fn rhs_stage(
    q: &[f64],
    mesh: &StructuredTriMesh,
    basis: &Basis,
    u0: &[f64],
    c: f64,
    op: StageOp,
    acc: &mut [f64],
    out: &mut [f64],
) {
    match basis.node_count() {
        3 => rhs_stage_impl::<3, 2>(q, mesh, basis, u0, c, op, acc, out),
        6 => rhs_stage_impl::<6, 3>(q, mesh, basis, u0, c, op, acc, out),
        10 => rhs_stage_impl::<10, 4>(q, mesh, basis, u0, c, op, acc, out),
        d => unreachable!("unsupported basis size {d}"),
    }
}

/// Weak gradient of the broken polynomial field (per-element local mass
/// solve of the first equation of the split system).
pub fn compute_q(state: &FieldState, mesh: &StructuredTriMesh, basis: &Basis) -> AuxField {
    check_dims(&state.coeffs, mesh, basis);
    let d = basis.node_count();
    let n = mesh.element_count();
    let mut q = vec![0.0; 2 * n * d];
    compute_q_into(&state.coeffs, mesh, basis, &mut q);
    let mut qx = vec![0.0; n * d];
    let mut qy = vec![0.0; n * d];
    for e in 0..n {
        qx[e * d..(e + 1) * d].copy_from_slice(&q[e * 2 * d..e * 2 * d + d]);
        qy[e * d..(e + 1) * d].copy_from_slice(&q[e * 2 * d + d..(e + 1) * 2 * d]);
    }
    AuxField { qx, qy }
}

/// Time-derivative coefficients `du/dt` given the auxiliary gradient field.
pub fn compute_rhs(q: &AuxField, mesh: &StructuredTriMesh, basis: &Basis) -> Vec<f64> {
    check_dims(&q.qx, mesh, basis);
    let d = basis.node_count();
    let n = mesh.element_count();
    let mut interleaved = vec![0.0; 2 * n * d];
    for e in 0..n {
        interleaved[e * 2 * d..e * 2 * d + d].copy_from_slice(&q.qx[e * d..(e + 1) * d]);
        interleaved[e * 2 * d + d..(e + 1) * 2 * d].copy_from_slice(&q.qy[e * d..(e + 1) * d]);
    }
    let zero = vec![0.0; n * d];
    let mut acc = vec![0.0; n * d];
    let mut out = vec![0.0; n * d];
    // du/dt = 0 + 1 * deriv
    rhs_stage(&interleaved, mesh, basis, &zero, 1.0, StageOp::Plain, &mut acc, &mut out);
    out
}

struct Workspace {
    q: Vec<f64>,
    stage: Vec<f64>,
    acc: Vec<f64>,
}

impl Workspace {
    fn new(len: usize) -> Self {
        Workspace {
            q: vec![0.0; 2 * len],
            stage: vec![0.0; len],
            acc: vec![0.0; len],
        }
    }
}

/// One RK step: `u` holds the current coefficients on entry and the
/// advanced ones on return (buffers swapped, no allocation).
fn step_in_place(
    u: &mut Vec<f64>,
    dt: f64,
    mesh: &StructuredTriMesh,
    basis: &Basis,
    scheme: RkScheme,
    ws: &mut Workspace,
) {
    match scheme {
        RkScheme::Rk2 => {
            compute_q_into(u, mesh, basis, &mut ws.q);
            rhs_stage(&ws.q, mesh, basis, u, 0.5 * dt, StageOp::Plain, &mut ws.acc, &mut ws.stage);
            compute_q_into(&ws.stage, mesh, basis, &mut ws.q);
            rhs_stage(&ws.q, mesh, basis, u, dt, StageOp::Plain, &mut ws.acc, &mut ws.stage);
            std::mem::swap(u, &mut ws.stage);
        }
        RkScheme::Rk4 => {
            compute_q_into(u, mesh, basis, &mut ws.q);
            rhs_stage(&ws.q, mesh, basis, u, 0.5 * dt, StageOp::First, &mut ws.acc, &mut ws.stage);
            compute_q_into(&ws.stage, mesh, basis, &mut ws.q);
            rhs_stage(&ws.q, mesh, basis, u, 0.5 * dt, StageOp::Mid, &mut ws.acc, &mut ws.stage);
            compute_q_into(&ws.stage, mesh, basis, &mut ws.q);
            rhs_stage(&ws.q, mesh, basis, u, dt, StageOp::Mid, &mut ws.acc, &mut ws.stage);
            compute_q_into(&ws.stage, mesh, basis, &mut ws.q);
            rhs_stage(&ws.q, mesh, basis, u, dt / 6.0, StageOp::Last, &mut ws.acc, &mut ws.stage);
            std::mem::swap(u, &mut ws.stage);
        }
    }
}

/// One explicit Runge-Kutta step. Deterministic and independent of the
/// worker count; fails with [`Error::Instability`] if the result is not
/// finite.
pub fn step(
    state: &FieldState,
    mesh: &StructuredTriMesh,
    basis: &Basis,
    config: &SolverConfig,
) -> Result<FieldState> {
    check_dims(&state.coeffs, mesh, basis);
    let dt = config.resolve_dt(mesh, basis)?;
    let mut ws = Workspace::new(state.coeffs.len());
    let mut coeffs = state.coeffs.clone();
    step_in_place(&mut coeffs, dt, mesh, basis, config.scheme, &mut ws);
    let t = state.time + dt;
    if !coeffs.iter().all(|v| v.is_finite()) {
        return Err(Error::Instability { t });
    }
    Ok(FieldState { coeffs, time: t })
}

/// Per-step record of the conservation diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct StepDiag {
    pub t: f64,
    /// Total discrete mass `∫ u`.
    pub mass: f64,
    /// Max |coefficient| over all elements.
    pub peak: f64,
    /// Max |coefficient| over elements touching the outer boundary.
    pub boundary_peak: f64,
}

#[derive(Debug, Clone)]
pub struct SolveDiagnostics {
    pub steps: usize,
    pub history: Vec<StepDiag>,
}

fn diagnose(
    t: f64,
    coeffs: &[f64],
    mass_w: &[f64],
    d: usize,
    boundary: &[u32],
) -> StepDiag {
    let mut mass = 0.0;
    let mut peak = 0.0_f64;
    for (e, chunk) in coeffs.chunks_exact(d).enumerate() {
        let _ = e;
        for i in 0..d {
            mass += mass_w[i] * chunk[i];
            peak = peak.max(chunk[i].abs());
        }
    }
    let mut boundary_peak = 0.0_f64;
    for &e in boundary {
        let base = e as usize * d;
        for i in 0..d {
            boundary_peak = boundary_peak.max(coeffs[base + i].abs());
        }
    }
    StepDiag {
        t,
        mass,
        peak,
        boundary_peak,
    }
}

/// Advances the initial state to `config.t_final`, shortening the last step
/// to land exactly on T. Returns the final state and per-step diagnostics.
pub fn solve(
    mesh: &StructuredTriMesh,
    basis: &Basis,
    initial: FieldState,
    config: &SolverConfig,
) -> Result<(FieldState, SolveDiagnostics)> {
    check_dims(&initial.coeffs, mesh, basis);
    let dt = config.resolve_dt(mesh, basis)?;
    let d = basis.node_count();
    let h = mesh.h();
    let mass_w: Vec<f64> = basis
        .node_integral_ref
        .iter()
        .map(|&w| w * h * h)
        .collect();
    let boundary: Vec<u32> = mesh.boundary_elements().iter().map(|&e| e as u32).collect();

    let t0 = initial.time;
    let horizon = config.t_final;
    let mut coeffs = initial.coeffs;
    let mut history = Vec::new();
    history.push(diagnose(t0, &coeffs, &mass_w, d, &boundary));

    if horizon <= 0.0 {
        return Ok((
            FieldState {
                coeffs,
                time: t0,
            },
            SolveDiagnostics { steps: 0, history },
        ));
    }

    let n_full = (horizon / dt + 1e-9).floor() as usize;
    let remainder = horizon - n_full as f64 * dt;
    let mut ws = Workspace::new(coeffs.len());
    let mut steps = 0;
    let stride = config.diag_every.max(1);
    for istep in 0..n_full {
        step_in_place(&mut coeffs, dt, mesh, basis, config.scheme, &mut ws);
        steps += 1;
        if (istep + 1) % stride != 0 && istep + 1 != n_full {
            continue;
        }
        let t = t0 + (istep + 1) as f64 * dt;
        let diag = diagnose(t, &coeffs, &mass_w, d, &boundary);
        if !diag.mass.is_finite() || !diag.peak.is_finite() {
            return Err(Error::Instability { t });
        }
        history.push(diag);
    }
    if remainder > 1e-12 * horizon.max(dt) {
        step_in_place(&mut coeffs, remainder, mesh, basis, config.scheme, &mut ws);
        steps += 1;
        let diag = diagnose(t0 + horizon, &coeffs, &mass_w, d, &boundary);
        if !diag.mass.is_finite() || !diag.peak.is_finite() {
            return Err(Error::Instability { t: t0 + horizon });
        }
        history.push(diag);
    }
    Ok((
        FieldState {
            coeffs,
            time: t0 + horizon,
        },
        SolveDiagnostics { steps, history },
    ))
}

/// L2-projects a normalized isotropic Gaussian bump of width `sigma0`,
/// centered at `x0` and truncated at `6 sigma0`, onto the broken polynomial
/// space; coefficients of axon elements are zeroed (the Cauchy data lives in
/// the extracellular region) and the result is rescaled to unit discrete
/// mass.
pub fn project_delta(
    mesh: &StructuredTriMesh,
    basis: &Basis,
    x0: [f64; 2],
    sigma0: f64,
) -> Result<FieldState> {
    let h = mesh.h();
    if !(sigma0 >= 2.0 * h - 1e-12) {
        return Err(Error::param(
            "sigma0",
            format!("must be >= 2h = {}, got {sigma0}", 2.0 * h),
        ));
    }
    let home = mesh
        .locate(x0)
        .ok_or_else(|| Error::param("x0", format!("{x0:?} lies outside the domain")))?;
    if mesh.diffusivity()[home.0 as usize] == 0.0 {
        return Err(Error::param(
            "x0",
            format!("{x0:?} lies inside an axon element"),
        ));
    }

    let d = basis.node_count();
    let n = mesh.pixels_per_side();
    let half = mesh.side() / 2.0;
    let cut = 6.0 * sigma0;
    let cut2 = cut * cut;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma0 * sigma0);
    let inv2s2 = 1.0 / (2.0 * sigma0 * sigma0);

    let px0 = (((x0[0] - cut + half) / h).floor() as isize).clamp(0, n as isize - 1) as usize;
    let px1 = (((x0[0] + cut + half) / h).floor() as isize).clamp(0, n as isize - 1) as usize;
    let py0 = (((x0[1] - cut + half) / h).floor() as isize).clamp(0, n as isize - 1) as usize;
    let py1 = (((x0[1] + cut + half) / h).floor() as isize).clamp(0, n as isize - 1) as usize;

    let mut coeffs = vec![0.0; mesh.element_count() * d];
    let quad = &basis.quad_fine;
    let mut shape_vals: Vec<Vec<f64>> = Vec::with_capacity(2 * quad.points.len());
    for shape in 0..2 {
        for &pt in &quad.points {
            let mut vals = vec![0.0; d];
            basis.eval(pt[0], pt[1], &mut vals);
            let _ = shape; // basis values are shape-independent in reference coords
            shape_vals.push(vals);
        }
    }
    let nq = quad.points.len();
    let k = mesh.diffusivity();
    let minv = &basis.mass_inv_ref;
    for iy in py0..=py1 {
        for ix in px0..=px1 {
            let ox = -half + ix as f64 * h;
            let oy = -half + iy as f64 * h;
            for shape in 0..2 {
                let e = (iy * n + ix) * 2 + shape;
                if k[e] == 0.0 {
                    continue;
                }
                let mut b = [0.0; MAX_D];
                let mut any = false;
                for (q, &pt) in quad.points.iter().enumerate() {
                    // map reference -> physical for this shape
                    let (lx, ly) = if shape == 0 {
                        (pt[0] + pt[1], pt[1])
                    } else {
                        (pt[0], pt[0] + pt[1])
                    };
                    let x = ox + h * lx;
                    let y = oy + h * ly;
                    let dx = x - x0[0];
                    let dy = y - x0[1];
                    let r2 = dx * dx + dy * dy;
                    if r2 > cut2 {
                        continue;
                    }
                    let g = norm * (-r2 * inv2s2).exp();
                    let w = quad.weights[q] * g;
                    let vals = &shape_vals[shape * nq + q];
                    for i in 0..d {
                        b[i] += w * vals[i];
                    }
                    any = true;
                }
                if !any {
                    continue;
                }
                // physical h^2 factors cancel between the rhs and M^-1
                let out = &mut coeffs[e * d..(e + 1) * d];
                for i in 0..d {
                    out[i] = dot(&minv[i * d..(i + 1) * d], &b, d);
                }
            }
        }
    }

    let mass_w: Vec<f64> = basis
        .node_integral_ref
        .iter()
        .map(|&w| w * h * h)
        .collect();
    let mass: f64 = coeffs
        .chunks_exact(d)
        .map(|c| (0..d).map(|i| mass_w[i] * c[i]).sum::<f64>())
        .sum();
    if !(mass > 0.0) {
        return Err(Error::DegenerateField {
            reason: format!("projected bump has non-positive mass {mass}"),
        });
    }
    let inv = 1.0 / mass;
    coeffs.iter_mut().for_each(|c| *c *= inv);
    Ok(FieldState {
        coeffs,
        time: 0.0,
    })
}

/// Total discrete mass `∫ u` over the domain.
pub fn total_mass(state: &FieldState, mesh: &StructuredTriMesh, basis: &Basis) -> f64 {
    let d = basis.node_count();
    let h = mesh.h();
    state
        .coeffs
        .chunks_exact(d)
        .map(|c| {
            (0..d)
                .map(|i| basis.node_integral_ref[i] * h * h * c[i])
                .sum::<f64>()
        })
        .sum()
}

/// Quadrature moments of the field: `(mass, mean, covariance)`.
pub fn field_moments(
    state: &FieldState,
    mesh: &StructuredTriMesh,
    basis: &Basis,
) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let d = basis.node_count();
    let h = mesh.h();
    let n = mesh.pixels_per_side();
    let half = mesh.side() / 2.0;
    let quad = &basis.quad_fine;
    let nq = quad.points.len();
    let mut vals = vec![0.0; d * nq];
    for (q, &pt) in quad.points.iter().enumerate() {
        let mut v = vec![0.0; d];
        basis.eval(pt[0], pt[1], &mut v);
        vals[q * d..(q + 1) * d].copy_from_slice(&v);
    }
    let (mut m0, mut mx, mut my, mut mxx, mut mxy, mut myy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for e in 0..mesh.element_count() {
        let shape = e & 1;
        let p = e >> 1;
        let (ix, iy) = (p % n, p / n);
        let ox = -half + ix as f64 * h;
        let oy = -half + iy as f64 * h;
        let c = &state.coeffs[e * d..(e + 1) * d];
        for (q, &pt) in quad.points.iter().enumerate() {
            let u = dot(&vals[q * d..(q + 1) * d], c, d);
            if u == 0.0 {
                continue;
            }
            let (lx, ly) = if shape == 0 {
                (pt[0] + pt[1], pt[1])
            } else {
                (pt[0], pt[0] + pt[1])
            };
            let x = ox + h * lx;
            let y = oy + h * ly;
            let w = quad.weights[q] * h * h * u;
            m0 += w;
            mx += w * x;
            my += w * y;
            mxx += w * x * x;
            mxy += w * x * y;
            myy += w * y * y;
        }
    }
    let mean = [mx / m0, my / m0];
    let cov = [
        [mxx / m0 - mean[0] * mean[0], mxy / m0 - mean[0] * mean[1]],
        [mxy / m0 - mean[0] * mean[1], myy / m0 - mean[1] * mean[1]],
    ];
    (m0, mean, cov)
}

/// Field evaluated at the pixel centers (on the diagonal, where both
/// triangles of a pixel meet; the two one-sided traces are averaged).
/// Row-major `n x n`, index `iy * n + ix`.
pub fn sample_pixel_centers(
    state: &FieldState,
    mesh: &StructuredTriMesh,
    basis: &Basis,
) -> Vec<f64> {
    let d = basis.node_count();
    let n = mesh.pixels_per_side();
    let mut out = vec![0.0; n * n];
    out.par_iter_mut().enumerate().for_each(|(pix, v)| {
        let lower = pix * 2;
        let upper = pix * 2 + 1;
        let a = dot(
            &basis.center_trace[0],
            &state.coeffs[lower * d..(lower + 1) * d],
            d,
        );
        let b = dot(
            &basis.center_trace[1],
            &state.coeffs[upper * d..(upper + 1) * d],
            d,
        );
        *v = 0.5 * (a + b);
    });
    out
}

/// Per-pixel average of the two triangle means, for plot-ready dumps.
pub fn pixel_means(state: &FieldState, mesh: &StructuredTriMesh, basis: &Basis) -> Vec<f64> {
    let d = basis.node_count();
    let n = mesh.pixels_per_side();
    let inv_area = 2.0; // reference triangle area is 1/2
    let mut out = vec![0.0; n * n];
    for pix in 0..n * n {
        let mut acc = 0.0;
        for t in 0..2 {
            let e = pix * 2 + t;
            let c = &state.coeffs[e * d..(e + 1) * d];
            acc += inv_area * dot(&basis.node_integral_ref, c, d);
        }
        out[pix] = 0.5 * acc;
    }
    out
}

/// Writes the pixel-mean grid as CSV, row-major, one row per line.
pub fn write_field_dump(
    state: &FieldState,
    mesh: &StructuredTriMesh,
    basis: &Basis,
    w: &mut impl std::io::Write,
) -> Result<()> {
    let n = mesh.pixels_per_side();
    let grid = pixel_means(state, mesh, basis);
    for iy in 0..n {
        let row: Vec<String> = (0..n).map(|ix| format!("{:e}", grid[iy * n + ix])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
