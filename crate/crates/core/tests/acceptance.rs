//! Acceptance run: every self-check suite, grouped into the ten acceptance
//! criteria, plus a determinism comparison across repeated runs and thread
//! counts. Prints one PASS/FAIL line per criterion.

use std::time::Instant;

use dipolar_core::verify::{self, Report, Suite};

fn run_with_threads(threads: usize) -> Report {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(|| verify::run(&Suite::ALL)).expect("verify run")
}

struct Criterion {
    label: &'static str,
    checks: &'static [&'static str],
}

const CRITERIA: [Criterion; 9] = [
    Criterion {
        label: "tensor identities",
        checks: &[
            "polarization sum vs explicit polarizations",
            "angular average of transverse projector",
            "angular transform to tau at kR=0.5",
            "angular transform to tau at kR=1",
            "angular transform to tau at kR=5",
        ],
    },
    Criterion {
        label: "principal-value closed forms",
        checks: &[
            "P int sin(kR)/(k-k0) = pi cos(k0R)",
            "P int k cos(kR)/(k-k0) = -pi sin(k0R)",
            "P int k^2 sin(kR)/(k-k0) = pi cos(k0R)",
        ],
    },
    Criterion {
        label: "dispersive coupling equivalence",
        checks: &[
            "g full_numeric vs closed",
            "g extended vs closed",
            "g full_numeric vs extended",
        ],
    },
    Criterion {
        label: "decay couplings unchanged across variants",
        checks: &["b identical across variants", "decay rates extended vs full_numeric"],
    },
    Criterion {
        label: "dicke limit and trace identity",
        checks: &[
            "dicke symmetric rate relative to 2",
            "dicke antisymmetric rate",
            "sum of rates equals 3N",
        ],
    },
    Criterion {
        label: "effective dynamics self-consistency",
        checks: &["evolve vs eigenmode reconstruction", "spectrum rotation covariance"],
    },
    Criterion {
        label: "weisskopf-wigner and pair rates",
        checks: &["single atom population vs exp(-t)", "pair rwa rates vs eigenmodes"],
    },
    Criterion {
        label: "two-excitation sector sanity",
        checks: &["full sector norm drift", "full sector virtual population"],
    },
    Criterion {
        label: "lamb shift structure",
        checks: &[
            "lamb shift counter-rotating pair term",
            "lamb shift cubic cutoff scaling",
        ],
    },
];

fn line(index: usize, label: &str, passed: bool, detail: &str) -> String {
    format!(
        "{} {:>2} {label}: {detail}",
        if passed { "PASS" } else { "FAIL" },
        index
    )
}

#[test]
fn acceptance() {
    let start = Instant::now();
    let first = run_with_threads(1);
    let first_elapsed = start.elapsed();

    let mut all_passed = true;
    let mut lines = Vec::new();
    for (i, c) in CRITERIA.iter().enumerate() {
        let mut passed = true;
        let mut detail = Vec::new();
        for name in c.checks {
            match first.check(name) {
                Some(chk) => {
                    passed &= chk.passed;
                    detail.push(format!("{name} {:.3e} <= {:.1e}", chk.measured, chk.tolerance));
                }
                None => {
                    passed = false;
                    detail.push(format!("{name} missing"));
                }
            }
        }
        all_passed &= passed;
        lines.push(line(i + 1, c.label, passed, &detail.join("; ")));
    }

    let second = run_with_threads(1);
    let a = serde_json::to_string(&first).unwrap();
    let b = serde_json::to_string(&second).unwrap();
    let identical = a == b;
    let wide = run_with_threads(4);
    let same_shape = wide.checks.len() == first.checks.len()
        && wide.checks.iter().zip(&first.checks).all(|(x, y)| x.name == y.name);
    let spread = wide
        .checks
        .iter()
        .zip(&first.checks)
        .map(|(x, y)| (x.measured - y.measured).abs())
        .fold(0.0, f64::max);
    let repro = identical && same_shape && spread <= 1e-10;
    all_passed &= repro;
    lines.push(line(
        10,
        "reproducibility",
        repro,
        &format!("repeat byte-identical {identical}; 1 vs 4 threads max difference {spread:.3e} <= 1.0e-10"),
    ));

    for l in &lines {
        println!("{l}");
    }
    println!("single verify run took {:.1} s", first_elapsed.as_secs_f64());
    assert!(all_passed, "acceptance failures:\n{}", lines.join("\n"));
}
