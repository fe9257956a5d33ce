use eap_core::eap::{self, EapParams};
use eap_core::mc::{self, McConfig};
use eap_core::solver::{RkScheme, SolverConfig};
use eap_core::substrate::{pack_circles, sample_radii, GammaParams, Substrate};
use std::io::Write;
use std::time::Instant;

fn log(line: &str) {
    println!("{line}");
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open("/tmp/study.txt").unwrap();
    writeln!(f, "{line}").unwrap();
}

fn mc_run(substrate: &Substrate, walkers: usize) -> eap_core::mc::McResult {
    let mc_config = McConfig { diffusivity: 450.0, duration: 0.036, steps: 5000, walkers, seed: 9, init_box_side: 20.0 };
    mc::walk(substrate, &mc_config).unwrap()
}

fn dg_run(substrate: &Substrate, n: usize, m: usize) -> eap_core::eap::EapRun {
    let mut config = SolverConfig::new(0.036);
    config.scheme = RkScheme::Rk2;
    config.diag_every = 256;
    let mut p = EapParams::new(n, m, 20.0, 4);
    p.subtract_initial_covariance = true;
    eap::run_scheme(substrate, &p, &config, None).unwrap()
}

fn main() {
    // substrate A: 100 small circles (the acceptance candidate)
    let params = GammaParams { shape: 12.0, scale: 0.1297, rmin: 1.0, rmax: 2.6 };
    let radii = sample_radii(&params, 100, 20_260_731).unwrap();
    let sub_a = pack_circles(50.0, &radii, 450.0, 20_260_731, 500_000).unwrap();
    log(&format!("A: 100 circles, phi {:.4}", sub_a.area_fraction()));
    let t0 = Instant::now();
    let m = mc_run(&sub_a, 150_000);
    log(&format!("A MC: xx {:.4} xy {:.4} yy {:.4} se {:.4} [{:.0}s]", m.sigma_xx, m.sigma_xy, m.sigma_yy, m.stderr_xx, t0.elapsed().as_secs_f64()));
    for n in [128usize, 160] {
        let t0 = Instant::now();
        let run = dg_run(&sub_a, n, 6);
        log(&format!("A DG n={n}: xx {:.4} xy {:.4} yy {:.4} (sigma0^2 {:.4}) [{:.0}s]", run.fit.sigma_xx, run.fit.sigma_xy, run.fit.sigma_yy, run.sigma0*run.sigma0, t0.elapsed().as_secs_f64()));
    }

    // substrate B: 40 large circles, same area fraction scale
    let params_b = GammaParams { shape: 14.0, scale: 0.175, rmin: 1.6, rmax: 3.4 };
    let radii_b = sample_radii(&params_b, 40, 77).unwrap();
    let sub_b = pack_circles(50.0, &radii_b, 450.0, 77, 500_000).unwrap();
    log(&format!("B: 40 circles, phi {:.4}", sub_b.area_fraction()));
    let t0 = Instant::now();
    let m = mc_run(&sub_b, 150_000);
    log(&format!("B MC: xx {:.4} xy {:.4} yy {:.4} se {:.4} [{:.0}s]", m.sigma_xx, m.sigma_xy, m.sigma_yy, m.stderr_xx, t0.elapsed().as_secs_f64()));
    for n in [128usize, 160] {
        let t0 = Instant::now();
        let run = dg_run(&sub_b, n, 6);
        log(&format!("B DG n={n}: xx {:.4} xy {:.4} yy {:.4} (sigma0^2 {:.4}) [{:.0}s]", run.fit.sigma_xx, run.fit.sigma_xy, run.fit.sigma_yy, run.sigma0*run.sigma0, t0.elapsed().as_secs_f64()));
    }
}
