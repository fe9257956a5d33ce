//! Command-line driver: substrate generation, single DG solves, the full
//! propagator scheme, Monte Carlo runs, and DG-vs-MC comparison.
//!
//! Every run writes a `config.resolved` file that reproduces it bit for bit
//! and a `run.meta` with the substrate content hash; `compare` refuses to
//! relate results computed on different substrates.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical failure,
//! 3 comparison-tolerance failure.

mod kv;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use eap_core::eap::{self, Centering, EapParams};
use eap_core::mc::{self, McConfig};
use eap_core::mesh::build_mesh;
use eap_core::solver::{
    self, project_delta, solve, Basis, RkScheme, SolverConfig,
};
use eap_core::substrate::{pack_circles, sample_radii, GammaParams, Substrate};
use eap_core::Error as CoreError;
use kv::KvFile;

const EXIT_USAGE: i32 = 1;
const EXIT_NUMERICAL: i32 = 2;
const EXIT_TOLERANCE: i32 = 3;

#[derive(Parser)]
#[command(
    name = "eapsim",
    about = "Extracellular diffusion propagator simulation on 2D circle substrates",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a packed circle substrate file.
    GenSubstrate(GenSubstrateArgs),
    /// Solve one diffusion problem from a point source and dump the field.
    Solve(SolveArgs),
    /// Run the full propagator scheme and fit the Gaussian profile.
    Eap(EapArgs),
    /// Monte Carlo random-walk covariance on the same substrate.
    Mc(McArgs),
    /// Compare an eap run against an mc run entry by entry.
    Compare(CompareArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key-value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if needed).
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0 = all cores); default from EAPSIM_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct GenSubstrateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    side: Option<f64>,
    /// Number of circles (0 gives a free-diffusion substrate).
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    rmin: Option<f64>,
    #[arg(long)]
    rmax: Option<f64>,
    /// Gamma shape; default derives a left-skewed distribution from the
    /// radius range.
    #[arg(long)]
    shape: Option<f64>,
    /// Gamma scale (μm).
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    k0: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_attempts: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Substrate file path.
    #[arg(long)]
    substrate: Option<PathBuf>,
    /// Pixels per side.
    #[arg(long)]
    n: Option<usize>,
    /// Basis order p (1..=3).
    #[arg(long)]
    order: Option<usize>,
    /// Final time T (s).
    #[arg(long)]
    t: Option<f64>,
    /// Explicit time step (s); must satisfy dt <= 0.25 h^2 / k.
    #[arg(long)]
    dt: Option<f64>,
    /// CFL number; default is the stable value for the order and scheme.
    #[arg(long)]
    cfl: Option<f64>,
    /// Runge-Kutta scheme: rk4 or rk2.
    #[arg(long)]
    scheme: Option<String>,
    /// Source point "x,y" (μm, centered coordinates).
    #[arg(long)]
    x0: Option<String>,
    /// Source width (μm); default 2h.
    #[arg(long)]
    sigma0: Option<f64>,
    /// Also dump the element diffusivity pattern.
    #[arg(long)]
    dump_diffusivity: bool,
}

#[derive(Args)]
struct EapArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    substrate: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    scheme: Option<String>,
    /// Number of seed densities in the mixture.
    #[arg(long)]
    m: Option<usize>,
    /// Side of the centered seed box (μm).
    #[arg(long)]
    box_side: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sigma0: Option<f64>,
    /// Subtract the initial source width sigma0^2 from the fitted diagonal.
    #[arg(long)]
    subtract_initial_covariance: bool,
    /// Center by "seed" (default) or empirical "mean".
    #[arg(long)]
    centering: Option<String>,
    /// Persist each per-seed density grid.
    #[arg(long)]
    dump_per_seed: bool,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    substrate: Option<PathBuf>,
    /// Walk duration t_s (s); defaults to the eap observation time.
    #[arg(long)]
    duration: Option<f64>,
    /// Steps per walker.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    walkers: Option<usize>,
    /// Diffusivity D (μm²/s); defaults to the substrate k0.
    #[arg(long)]
    diffusivity: Option<f64>,
    /// Side of the centered start box (μm).
    #[arg(long)]
    box_side: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dump the first N walker trajectories as CSV.
    #[arg(long)]
    dump_trajectories: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    /// Output directory of an `eap` run.
    #[arg(long)]
    eap: PathBuf,
    /// Output directory of an `mc` run.
    #[arg(long)]
    mc: PathBuf,
    /// Relative tolerance on covariance entries (scaled by the geometric
    /// mean of the MC diagonal).
    #[arg(long, default_value_t = 0.05)]
    rel_tol: f64,
    /// Alternative tolerance in MC standard errors.
    #[arg(long, default_value_t = 3.0)]
    sigma: f64,
    /// Where to write the comparison report (stdout always gets a copy).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through Display with exit code 0
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            std::process::exit(code);
        }
    };
    let code = match cli.command {
        Command::GenSubstrate(args) => run(cmd_gen_substrate(args)),
        Command::Solve(args) => run(cmd_solve(args)),
        Command::Eap(args) => run(cmd_eap(args)),
        Command::Mc(args) => run(cmd_mc(args)),
        Command::Compare(args) => match cmd_compare(args) {
            Ok(true) => 0,
            Ok(false) => EXIT_TOLERANCE,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        },
    };
    std::process::exit(code);
}

enum CliError {
    Usage(String),
    Numerical(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::InvalidParameter { .. } | CoreError::Parse { .. } | CoreError::Io(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<String> for CliError {
    fn from(s: String) -> Self {
        CliError::Usage(s)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn run(result: Result<(), CliError>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            EXIT_NUMERICAL
        }
    }
}

struct Ctx {
    config: KvFile,
    resolved: KvFile,
    out: PathBuf,
    workers: usize,
}

impl Ctx {
    fn new(common: &CommonArgs, subcommand: &str) -> Result<Ctx, CliError> {
        let config = match &common.config {
            Some(path) => KvFile::load(path).map_err(CliError::Usage)?,
            None => KvFile::new(),
        };
        let workers = match common.workers {
            Some(w) => w,
            None => match config.parse::<usize>("workers").map_err(CliError::Usage)? {
                Some(w) => w,
                None => std::env::var("EAPSIM_WORKERS")
                    .ok()
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(0),
            },
        };
        std::fs::create_dir_all(&common.out)?;
        let mut resolved = KvFile::new();
        resolved.set("subcommand", subcommand);
        resolved.set("workers", workers);
        Ok(Ctx {
            config,
            resolved,
            out: common.out.clone(),
            workers,
        })
    }

    /// flag > config file > default, recorded into the resolved echo.
    fn resolve<T: std::str::FromStr + std::fmt::Display + Clone>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T, CliError> {
        let value = match flag {
            Some(v) => v,
            None => self
                .config
                .parse::<T>(key)
                .map_err(CliError::Usage)?
                .unwrap_or(default),
        };
        self.resolved.set(key, value.clone());
        Ok(value)
    }

    fn resolve_opt<T: std::str::FromStr + std::fmt::Display + Clone>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> Result<Option<T>, CliError> {
        let value = match flag {
            Some(v) => Some(v),
            None => self.config.parse::<T>(key).map_err(CliError::Usage)?,
        };
        if let Some(v) = &value {
            self.resolved.set(key, v.clone());
        }
        Ok(value)
    }

    fn resolve_flag(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        let value = if flag {
            true
        } else {
            self.config
                .parse::<bool>(key)
                .map_err(CliError::Usage)?
                .unwrap_or(false)
        };
        self.resolved.set(key, value);
        Ok(value)
    }

    fn finish(&self, timings: &[(&str, f64)]) -> Result<(), CliError> {
        self.resolved.write(&self.out.join("config.resolved"))?;
        if !timings.is_empty() {
            let mut text = String::from("phase seconds\n");
            println!("phase timings:");
            for (name, secs) in timings {
                println!("  {name:<10} {secs:10.3} s");
                text.push_str(&format!("{name} {secs:.6}\n"));
            }
            std::fs::write(self.out.join("timings.txt"), text)?;
        }
        Ok(())
    }
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn write_meta(ctx: &Ctx, substrate_path: &Path, substrate: &Substrate) -> Result<(), CliError> {
    let mut meta = KvFile::new();
    meta.set("substrate_sha256", sha256_file(substrate_path)?);
    meta.set("circles", substrate.circles.len());
    meta.set("k0", format!("{:.17e}", substrate.k0));
    meta.set("side", format!("{:.17e}", substrate.side));
    meta.write(&ctx.out.join("run.meta"))?;
    Ok(())
}

fn load_substrate(ctx: &mut Ctx, flag: Option<PathBuf>) -> Result<(PathBuf, Substrate), CliError> {
    let path = match flag {
        Some(p) => p,
        None => ctx
            .config
            .get("substrate")
            .map(PathBuf::from)
            .ok_or_else(|| CliError::Usage("--substrate is required".into()))?,
    };
    ctx.resolved.set("substrate", path.display());
    let substrate = Substrate::load(&path)?;
    Ok((path, substrate))
}

fn parse_scheme(name: &str) -> Result<RkScheme, CliError> {
    match name {
        "rk4" => Ok(RkScheme::Rk4),
        "rk2" => Ok(RkScheme::Rk2),
        other => Err(CliError::Usage(format!(
            "unknown scheme '{other}' (expected rk4 or rk2)"
        ))),
    }
}

fn solver_config(
    ctx: &mut Ctx,
    t: Option<f64>,
    dt: Option<f64>,
    cfl: Option<f64>,
    scheme: Option<String>,
) -> Result<SolverConfig, CliError> {
    let t = ctx.resolve("t", t, 0.036)?;
    let mut config = SolverConfig::new(t);
    config.dt = ctx.resolve_opt("dt", dt)?;
    config.cfl_safety = ctx.resolve_opt("cfl", cfl)?;
    let scheme = match scheme {
        Some(s) => s,
        None => ctx
            .config
            .get("scheme")
            .unwrap_or("rk4")
            .to_string(),
    };
    ctx.resolved.set("scheme", &scheme);
    config.scheme = parse_scheme(&scheme)?;
    Ok(config)
}

fn cmd_gen_substrate(args: GenSubstrateArgs) -> Result<(), CliError> {
    let mut ctx = Ctx::new(&args.common, "gen-substrate")?;
    let side = ctx.resolve("side", args.side, 50.0)?;
    let count = ctx.resolve("count", args.count, 1901)?;
    let rmin = ctx.resolve("rmin", args.rmin, 0.150)?;
    let rmax = ctx.resolve("rmax", args.rmax, 1.141)?;
    let k0 = ctx.resolve("k0", args.k0, 450.0)?;
    let seed = ctx.resolve("seed", args.seed, 1)?;
    let max_attempts = ctx.resolve("max_attempts", args.max_attempts, 200_000)?;

    let defaults = GammaParams::spanning(rmin, rmax).map_err(CoreError::from_core)?;
    let shape = ctx.resolve("shape", args.shape, defaults.shape)?;
    let scale = ctx.resolve("scale", args.scale, defaults.scale)?;
    let params = GammaParams {
        shape,
        scale,
        rmin,
        rmax,
    };

    let t0 = Instant::now();
    let substrate = if count == 0 {
        Substrate::free(side, k0)
    } else {
        let radii = sample_radii(&params, count, seed).map_err(cli_err)?;
        match pack_circles(side, &radii, k0, seed, max_attempts) {
            Ok(s) => s,
            Err(e) => {
                // partial statistics help diagnose infeasible requests
                eprintln!("packing failed: {e}");
                return Err(CliError::Numerical(e.to_string()));
            }
        }
    };
    substrate.validate().map_err(cli_err)?;
    let gen_s = t0.elapsed().as_secs_f64();

    let path = ctx.out.join("substrate.sub");
    substrate.save(&path).map_err(cli_err)?;
    let mut summary = Vec::new();
    substrate
        .write_summary(&mut summary)
        .map_err(cli_err)?;
    std::fs::write(ctx.out.join("summary.txt"), &summary)?;
    print!("{}", String::from_utf8_lossy(&summary));
    write_meta(&ctx, &path, &substrate)?;
    ctx.finish(&[("pack", gen_s)])?;
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<(), CliError> {
    let mut ctx = Ctx::new(&args.common, "solve")?;
    let (substrate_path, substrate) = load_substrate(&mut ctx, args.substrate)?;
    let n = ctx.resolve("n", args.n, 400)?;
    let order = ctx.resolve("order", args.order, 1)?;
    let config = solver_config(&mut ctx, args.t, args.dt, args.cfl, args.scheme)?;
    let x0_raw = match args.x0 {
        Some(s) => s,
        None => ctx.config.get("x0").unwrap_or("0,0").to_string(),
    };
    ctx.resolved.set("x0", &x0_raw);
    let x0 = parse_point(&x0_raw)?;

    let workers = ctx.workers;
    let t_mesh = Instant::now();
    let basis = Basis::new(order).map_err(cli_err)?;
    let mut mesh = build_mesh(substrate.side, n).map_err(cli_err)?;
    mesh.assign_diffusivity(&substrate).map_err(cli_err)?;
    let mesh_s = t_mesh.elapsed().as_secs_f64();
    let sigma0 = ctx.resolve("sigma0", args.sigma0, 2.0 * mesh.h())?;

    if ctx.resolve_flag("dump_diffusivity", args.dump_diffusivity)? {
        let mut f = std::fs::File::create(ctx.out.join("diffusivity.txt"))?;
        mesh.write_diffusivity_grid(&mut f).map_err(cli_err)?;
    }

    let t_solve = Instant::now();
    let (fin, diag) = eap_core::with_workers(workers, || {
        let init = project_delta(&mesh, &basis, x0, sigma0)?;
        solve(&mesh, &basis, init, &config)
    })
    .map_err(cli_err)?;
    let solve_s = t_solve.elapsed().as_secs_f64();

    let mut f = std::fs::File::create(ctx.out.join(format!("u_t{}.csv", fin.time)))?;
    solver::write_field_dump(&fin, &mesh, &basis, &mut f).map_err(cli_err)?;
    let mut f = std::fs::File::create(ctx.out.join("mass_history.csv"))?;
    use std::io::Write as _;
    writeln!(f, "t,mass,peak,boundary_peak")?;
    for rec in &diag.history {
        writeln!(
            f,
            "{:.12e},{:.12e},{:.12e},{:.12e}",
            rec.t, rec.mass, rec.peak, rec.boundary_peak
        )?;
    }
    println!(
        "solved to t = {} in {} steps; final mass {:.9}",
        fin.time,
        diag.steps,
        diag.history.last().map(|r| r.mass).unwrap_or(f64::NAN)
    );
    write_meta(&ctx, &substrate_path, &substrate)?;
    ctx.finish(&[("mesh", mesh_s), ("solve", solve_s)])?;
    Ok(())
}

fn cmd_eap(args: EapArgs) -> Result<(), CliError> {
    let mut ctx = Ctx::new(&args.common, "eap")?;
    let (substrate_path, substrate) = load_substrate(&mut ctx, args.substrate)?;
    let n = ctx.resolve("n", args.n, 400)?;
    let order = ctx.resolve("order", args.order, 1)?;
    let config = solver_config(&mut ctx, args.t, args.dt, args.cfl, args.scheme)?;
    let m = ctx.resolve("m", args.m, 37)?;
    let box_side = ctx.resolve("box_side", args.box_side, 20.0)?;
    let seed = ctx.resolve("seed", args.seed, 1)?;

    let mut params = EapParams::new(n, m, box_side, seed);
    params.order = order;
    params.sigma0 = ctx.resolve_opt("sigma0", args.sigma0)?;
    params.subtract_initial_covariance =
        ctx.resolve_flag("subtract_initial_covariance", args.subtract_initial_covariance)?;
    params.dump_per_seed = ctx.resolve_flag("dump_per_seed", args.dump_per_seed)?;
    let centering = match args.centering {
        Some(c) => c,
        None => ctx.config.get("centering").unwrap_or("seed").to_string(),
    };
    ctx.resolved.set("centering", &centering);
    params.centering = match centering.as_str() {
        "seed" => Centering::SeedPoint,
        "mean" => Centering::EmpiricalMean,
        other => {
            return Err(CliError::Usage(format!(
                "unknown centering '{other}' (expected seed or mean)"
            )))
        }
    };

    let out = ctx.out.clone();
    let run = eap_core::with_workers(ctx.workers, || {
        eap::run_scheme(&substrate, &params, &config, Some(&out))
    })
    .map_err(cli_err)?;

    println!(
        "fitted covariance: [[{:.6}, {:.6}], [{:.6}, {:.6}]], residual {:.3e}",
        run.fit.sigma_xx, run.fit.sigma_xy, run.fit.sigma_xy, run.fit.sigma_yy, run.fit.residual
    );
    if substrate.circles.is_empty() {
        let analytic = eap::analytic_free_sigma(substrate.k0, config.t_final);
        println!("analytic free-diffusion diagonal: {:.6}", analytic[0][0]);
    }
    write_meta(&ctx, &substrate_path, &substrate)?;
    ctx.finish(&[
        ("mesh", run.timings.mesh_s),
        ("solve", run.timings.solve_s),
        ("fit", run.timings.fit_s),
    ])?;
    Ok(())
}

fn cmd_mc(args: McArgs) -> Result<(), CliError> {
    let mut ctx = Ctx::new(&args.common, "mc")?;
    let (substrate_path, substrate) = load_substrate(&mut ctx, args.substrate)?;
    let config = McConfig {
        diffusivity: ctx.resolve("diffusivity", args.diffusivity, substrate.k0)?,
        duration: ctx.resolve("duration", args.duration, 0.036)?,
        steps: ctx.resolve("steps", args.steps, 5000)?,
        walkers: ctx.resolve("walkers", args.walkers, 1_000_000)?,
        seed: ctx.resolve("seed", args.seed, 1)?,
        init_box_side: ctx.resolve("box_side", args.box_side, 20.0)?,
    };
    let trajectories = ctx.resolve_opt("dump_trajectories", args.dump_trajectories)?;

    let t0 = Instant::now();
    let result =
        eap_core::with_workers(ctx.workers, || mc::walk(&substrate, &config)).map_err(cli_err)?;
    let walk_s = t0.elapsed().as_secs_f64();

    let mut f = std::fs::File::create(ctx.out.join("result.txt"))?;
    mc::write_result(&mut f, &result, &config).map_err(cli_err)?;
    if let Some(count) = trajectories {
        let mut f = std::fs::File::create(ctx.out.join("trajectories.csv"))?;
        mc::dump_trajectories(&substrate, &config, count, &mut f).map_err(cli_err)?;
    }
    println!(
        "mc covariance: [[{:.6}, {:.6}], [{:.6}, {:.6}]] (stderr {:.2e}/{:.2e}/{:.2e}), l = {:.4} μm",
        result.sigma_xx,
        result.sigma_xy,
        result.sigma_xy,
        result.sigma_yy,
        result.stderr_xx,
        result.stderr_xy,
        result.stderr_yy,
        result.step_length
    );
    write_meta(&ctx, &substrate_path, &substrate)?;
    ctx.finish(&[("walk", walk_s)])?;
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<bool, String> {
    let eap_meta = KvFile::load(&args.eap.join("run.meta"))?;
    let mc_meta = KvFile::load(&args.mc.join("run.meta"))?;
    let eap_sha: String = eap_meta.require("substrate_sha256", "eap run.meta")?;
    let mc_sha: String = mc_meta.require("substrate_sha256", "mc run.meta")?;
    if eap_sha != mc_sha {
        return Err(format!(
            "refusing to compare: substrate hashes differ ({} vs {})",
            &eap_sha[..12.min(eap_sha.len())],
            &mc_sha[..12.min(mc_sha.len())]
        ));
    }

    let fit = KvFile::load(&args.eap.join("fit.txt"))?;
    let result = KvFile::load(&args.mc.join("result.txt"))?;
    let entries = [
        ("sigma_xx", "stderr_xx"),
        ("sigma_xy", "stderr_xy"),
        ("sigma_yy", "stderr_yy"),
    ];
    let mc_xx: f64 = result.require("sigma_xx", "mc result")?;
    let mc_yy: f64 = result.require("sigma_yy", "mc result")?;
    let scale = (mc_xx * mc_yy).sqrt();

    let mut report = String::new();
    report.push_str("entry       eap             mc              |diff|      tolerance   verdict\n");
    let circles: usize = eap_meta.require("circles", "eap run.meta")?;
    let mut all_ok = true;
    for (key, se_key) in entries {
        let a: f64 = fit.require(key, "eap fit")?;
        let b: f64 = result.require(key, "mc result")?;
        let se: f64 = result.require(se_key, "mc result")?;
        let tol = (args.rel_tol * scale).max(args.sigma * se);
        let diff = (a - b).abs();
        let ok = diff <= tol;
        all_ok &= ok;
        report.push_str(&format!(
            "{key:<10}  {a:<15.6}  {b:<15.6}  {diff:<10.4}  {tol:<10.4}  {}\n",
            if ok { "pass" } else { "FAIL" }
        ));
    }
    if circles == 0 {
        let t: f64 = fit.require("T", "eap fit")?;
        let k0: f64 = fit.require("k0", "eap fit")?;
        report.push_str(&format!(
            "analytic free-diffusion diagonal 2Tk = {:.6}\n",
            2.0 * t * k0
        ));
    }
    report.push_str(if all_ok {
        "comparison: PASS\n"
    } else {
        "comparison: FAIL\n"
    });
    print!("{report}");
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        std::fs::write(out, &report).map_err(|e| e.to_string())?;
    }
    Ok(all_ok)
}

fn parse_point(raw: &str) -> Result<[f64; 2], CliError> {
    let (x, y) = raw
        .split_once(',')
        .ok_or_else(|| CliError::Usage(format!("expected 'x,y', got '{raw}'")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| CliError::Usage(format!("cannot parse coordinate '{s}'")))
    };
    Ok([parse(x)?, parse(y)?])
}

fn cli_err(e: CoreError) -> CliError {
    CliError::from(e)
}

/// Bridge for core errors created in closures that already return core
/// results.
trait FromCore {
    fn from_core(e: CoreError) -> CliError;
}

impl FromCore for CoreError {
    fn from_core(e: CoreError) -> CliError {
        CliError::from(e)
    }
}
