use std::path::PathBuf;

use dipolar_core::coupling::{coupling_coefficients, CouplingCoefficients, GVariant};
use dipolar_core::dynamics::{build_generator, eigenmodes, evolve};
use dipolar_core::microsim::{build_mode_grid, extract_rate_and_shift, microsim_run, MicrosimConfig};
use dipolar_core::pv::PvQuadratureSpec;
use dipolar_core::verify::{self, Suite};
use dipolar_core::Ensemble;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::input::{initial_state, EnsembleFile};
use crate::output::Bundle;
use crate::{Cli, Command};

struct Loaded {
    file: EnsembleFile,
    ensemble: Ensemble,
}

fn load(cli: &Cli, path: &std::path::Path) -> Result<Loaded, CliError> {
    let mut file = EnsembleFile::read(path)?;
    if let Some(u) = cli.units {
        file.length_unit = u;
    }
    let ensemble = file.ensemble()?;
    Ok(Loaded { file, ensemble })
}

/// Everything needed to redo the run: the parsed invocation and the
/// ensemble as it was interpreted.
fn metadata(cli: &Cli, name: &str, loaded: Option<&Loaded>, spec: Option<&PvQuadratureSpec>, results: Value) -> Value {
    json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "invocation": cli,
        "ensemble": loaded.map(|l| &l.file),
        "quadrature": spec,
        "results": results,
    })
}

fn coefficients(ens: &Ensemble, variant: GVariant, spec: &PvQuadratureSpec) -> Result<CouplingCoefficients, CliError> {
    Ok(coupling_coefficients(ens, variant, spec)?)
}

pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    match &cli.command {
        Command::Couplings {
            ensemble,
            variant,
            compare,
            quadrature,
        } => {
            let loaded = load(cli, ensemble)?;
            let ens = &loaded.ensemble;
            let spec = quadrature.spec()?;
            let c = coefficients(ens, *variant, &spec)?;
            let mut bundle = Bundle::create(&cli.out_dir)?;
            bundle.matrix("b.csv", ens, &c.b)?;
            bundle.matrix("g.csv", ens, &c.g)?;
            let mut results = json!({
                "variant": variant,
                "band": c.band,
                "max_residual": c.max_residual,
            });
            if let Some(pair) = compare {
                let &[v1, v2] = pair.as_slice() else {
                    return Err(CliError::Usage("--compare takes exactly two variants".into()));
                };
                let c1 = coefficients(ens, v1, &spec)?;
                let c2 = coefficients(ens, v2, &spec)?;
                let diff = &c1.g - &c2.g;
                bundle.matrix(&format!("g_{v1}.csv"), ens, &c1.g)?;
                bundle.matrix(&format!("g_{v2}.csv"), ens, &c2.g)?;
                bundle.matrix("g_diff.csv", ens, &diff)?;
                let max_abs = diff.iter().map(|z| z.norm()).fold(0.0, f64::max);
                let max_rel = diff
                    .iter()
                    .zip(c2.g.iter())
                    .filter(|(_, r)| r.norm() > 1e-6)
                    .map(|(d, r)| d.norm() / r.norm())
                    .fold(0.0, f64::max);
                results["compare"] = json!({
                    "variants": [v1, v2],
                    "max_abs_diff": max_abs,
                    "max_rel_diff": max_rel,
                    "max_residual": [c1.max_residual, c2.max_residual],
                });
                println!("max |g_{v1} - g_{v2}| = {max_abs:.3e} (relative {max_rel:.3e})");
            }
            let meta = metadata(cli, "couplings", Some(&loaded), Some(&spec), results);
            bundle.finish(meta)
        }
        Command::Spectrum {
            ensemble,
            variant,
            quadrature,
        } => {
            let loaded = load(cli, ensemble)?;
            let ens = &loaded.ensemble;
            let spec = quadrature.spec()?;
            let c = coefficients(ens, *variant, &spec)?;
            let modes = eigenmodes(&build_generator(ens, &c)?)?;
            let mut bundle = Bundle::create(&cli.out_dir)?;
            bundle.eigenmodes("eigenmodes.csv", ens, &modes)?;
            let results = json!({
                "variant": variant,
                "max_residual": c.max_residual,
                "rate_sum": modes.rates().iter().sum::<f64>(),
                "n_modes": modes.len(),
            });
            let meta = metadata(cli, "spectrum", Some(&loaded), Some(&spec), results);
            bundle.finish(meta)
        }
        Command::Evolve {
            ensemble,
            variant,
            initial,
            t_final,
            dt_max,
            quadrature,
        } => {
            let loaded = load(cli, ensemble)?;
            let ens = &loaded.ensemble;
            let init = initial_state(initial, ens)?;
            let spec = quadrature.spec()?;
            let c = coefficients(ens, *variant, &spec)?;
            let traj = evolve(&build_generator(ens, &c)?, &init, *t_final, *dt_max)?;
            let mut bundle = Bundle::create(&cli.out_dir)?;
            bundle.trajectory("trajectory.csv", ens, &traj, &[])?;
            let results = json!({
                "variant": variant,
                "max_residual": c.max_residual,
                "samples": traj.times.len(),
                "final_population": traj.final_population(),
            });
            let meta = metadata(cli, "evolve", Some(&loaded), Some(&spec), results);
            bundle.finish(meta)
        }
        Command::Microsim {
            ensemble,
            sector,
            band_halfwidth,
            n_omega,
            angular_order,
            t_final,
            initial,
            fit_start,
        } => {
            let loaded = load(cli, ensemble)?;
            let ens = &loaded.ensemble;
            let init = initial_state(initial, ens)?;
            let config = MicrosimConfig {
                sector: *sector,
                band_halfwidth: *band_halfwidth,
                n_omega: *n_omega,
                angular_order: *angular_order,
                t_final: *t_final,
            };
            let grid = build_mode_grid(ens, &config)?;
            let run = microsim_run(ens, &grid, &init)?;
            let window = [fit_start.unwrap_or(t_final / 6.0), *t_final];
            let fit = extract_rate_and_shift(&run.trajectory, window, &init.0)?;

            // Effective-dynamics counterpart: the eigenmode closest to the
            // initial state.
            let c = coefficients(ens, GVariant::Closed, &PvQuadratureSpec::default())?;
            let modes = eigenmodes(&build_generator(ens, &c)?)?;
            let (best, overlap) = (0..modes.len())
                .map(|k| (k, modes.vector(k).dotc(&init.0).norm_sqr()))
                .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });

            let mut bundle = Bundle::create(&cli.out_dir)?;
            bundle.trajectory(
                "trajectory.csv",
                ens,
                &run.trajectory,
                &[
                    ("photon_population", &run.photon_population),
                    ("alpha_population", &run.alpha_population),
                    ("norm", &run.norm),
                ],
            )?;
            let results = json!({
                "grid": {
                    "band": grid.band(),
                    "delta_omega": grid.delta_omega(),
                    "n_modes": grid.n_modes(),
                    "angular_nodes": grid.angular().len(),
                    "calibration": grid.calibration(),
                    "expected_population_error": grid.expected_population_error(),
                },
                "steps": run.steps,
                "step_size": run.step_size,
                "max_norm_drift": run.max_norm_drift,
                "max_alpha_population": run.max_alpha_population,
                "fit": { "window": window, "result": fit },
                "effective": {
                    "rate": modes.rates()[best],
                    "shift": modes.shifts()[best],
                    "overlap": overlap,
                    "variant": GVariant::Closed,
                },
            });
            println!(
                "fitted rate {:.6} shift {:.6}; effective eigenmode rate {:.6} shift {:.6}",
                fit.rate,
                fit.shift,
                modes.rates()[best],
                modes.shifts()[best]
            );
            let meta = metadata(cli, "microsim", Some(&loaded), None, results);
            bundle.finish(meta)
        }
        Command::Verify { suite } => {
            let suites: Vec<Suite> = if suite.is_empty() { Suite::ALL.to_vec() } else { suite.clone() };
            let report = verify::run(&suites)?;
            for c in &report.checks {
                println!(
                    "{} [{}] {}: {:.3e} (tolerance {:.1e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.suite,
                    c.name,
                    c.measured,
                    c.tolerance
                );
            }
            let mut bundle = Bundle::create(&cli.out_dir)?;
            bundle.json("report.json", &report)?;
            let failed = report.failures().count();
            let meta = metadata(cli, "verify", None, None, json!({ "passed": failed == 0 }));
            let dir = bundle.finish(meta)?;
            if failed > 0 {
                return Err(CliError::VerifyFailed(failed));
            }
            Ok(dir)
        }
    }
}
