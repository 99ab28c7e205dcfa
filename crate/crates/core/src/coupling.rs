//! Collective decay (b) and dispersive (g) coupling matrices, and the
//! cutoff-regularized single-atom self-energy.
//!
//! Matrices are 3N x 3N, indexed by flat channel `3 * atom + (m + 1)`, and
//! dimensionless: the generator uses them as `-(3 Gamma / 4)(b - i g)`.
//! Entries are complex because the circular dipole basis is; both matrices
//! are Hermitian with zero 3x3 blocks on the diagonal.
//!
//! The dispersive coupling is a principal-value frequency integral of the
//! decay dyadic,
//!
//! ```text
//! g_lj = (1 / pi) P int du u^3 / (u - 1) [d . tau(u x_lj) . d]
//! ```
//!
//! with u = omega / omega0, taken over the whole line (`Extended`), as the
//! resonant plus counter-rotating half-line pair (`FullNumeric`), or over a
//! finite band (`RwaCutoff`). Over the whole line it equals the closed-form
//! dispersive dyadic (`Closed`).

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, Zeeman};
use crate::error::{Error, Result};
use crate::geometry::{dipole_contract, dyad, gamma_profile, tau_profile};
use crate::pv::{pv_integral, pv_integral_n, PvQuadratureSpec, PvRange};

type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GVariant {
    /// Analytic dispersive dyadic.
    Closed,
    /// Resonant integral only, over a finite band.
    RwaCutoff,
    /// Resonant integral continued to negative frequencies.
    Extended,
    /// Resonant plus counter-rotating integrals over positive frequencies.
    FullNumeric,
}

impl GVariant {
    pub const ALL: [GVariant; 4] = [
        GVariant::Closed,
        GVariant::RwaCutoff,
        GVariant::Extended,
        GVariant::FullNumeric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GVariant::Closed => "closed",
            GVariant::RwaCutoff => "rwa_cutoff",
            GVariant::Extended => "extended",
            GVariant::FullNumeric => "full_numeric",
        }
    }
}

impl std::str::FromStr for GVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown variant '{s}' (expected closed, rwa_cutoff, extended or full_numeric)"
                ))
            })
    }
}

impl std::fmt::Display for GVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A dispersive coupling matrix together with how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersiveCoupling {
    pub g: DMatrix<C64>,
    pub variant: GVariant,
    /// Frequency band of a cutoff integral, in units of omega0.
    pub band: Option<[f64; 2]>,
    /// Largest quadrature residual over all entries (0 for `Closed`).
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingCoefficients {
    pub b: DMatrix<C64>,
    pub g: DMatrix<C64>,
    pub variant: GVariant,
    pub band: Option<[f64; 2]>,
    pub max_residual: f64,
}

impl CouplingCoefficients {
    pub fn n_channels(&self) -> usize {
        self.b.nrows()
    }
}

/// b and g for the requested variant. `spec` is ignored for `Closed`.
pub fn coupling_coefficients(
    ensemble: &Ensemble,
    variant: GVariant,
    spec: &PvQuadratureSpec,
) -> Result<CouplingCoefficients> {
    let b = coupling_b(ensemble);
    let disp = match variant {
        GVariant::Closed => DispersiveCoupling {
            g: coupling_g_closed(ensemble),
            variant,
            band: None,
            max_residual: 0.0,
        },
        _ => coupling_g_pv(ensemble, variant, spec)?,
    };
    Ok(CouplingCoefficients {
        b,
        g: disp.g,
        variant,
        band: disp.band,
        max_residual: disp.max_residual,
    })
}

/// Collective decay couplings d_{eta g} . tau(x_lj) . d_{g nu}, zero for l = j.
pub fn coupling_b(ensemble: &Ensemble) -> DMatrix<C64> {
    assemble(ensemble, |x, _| Ok((tau_profile(x), 0.0)))
        .expect("closed-form assembly cannot fail")
        .0
}

/// Dispersive couplings from the analytic dispersive dyadic.
pub fn coupling_g_closed(ensemble: &Ensemble) -> DMatrix<C64> {
    assemble(ensemble, |x, _| Ok((gamma_profile(x), 0.0)))
        .expect("closed-form assembly cannot fail")
        .0
}

/// Dispersive couplings by principal-value quadrature.
///
/// `RwaCutoff` integrates over [0, spec.cutoff]; use [`coupling_g_band`] for
/// other bands. `Closed` is rejected here since it involves no quadrature.
pub fn coupling_g_pv(
    ensemble: &Ensemble,
    variant: GVariant,
    spec: &PvQuadratureSpec,
) -> Result<DispersiveCoupling> {
    spec.validate()?;
    match variant {
        GVariant::Closed => Err(Error::validation(
            "the closed variant is not a quadrature; use coupling_g_closed",
        )),
        GVariant::RwaCutoff => coupling_g_band(ensemble, 0.0, spec.cutoff, spec),
        GVariant::Extended | GVariant::FullNumeric => {
            let (g, max_residual) = assemble(ensemble, |x, pair| {
                dispersive_profile(variant, x, spec).map_err(|e| annotate(e, pair))
            })?;
            Ok(DispersiveCoupling { g, variant, band: None, max_residual })
        }
    }
}

/// Resonant dispersive couplings integrated over the band [lower, upper]
/// (units of omega0), which must contain the resonance.
pub fn coupling_g_band(
    ensemble: &Ensemble,
    lower: f64,
    upper: f64,
    spec: &PvQuadratureSpec,
) -> Result<DispersiveCoupling> {
    if !(lower >= 0.0 && lower < 1.0 && upper > 1.0 && upper.is_finite()) {
        return Err(Error::validation(format!(
            "band [{lower}, {upper}] must satisfy 0 <= lower < 1 < upper"
        )));
    }
    let range = PvRange::Interval { lower, upper };
    let (g, max_residual) = assemble(ensemble, |x, pair| {
        let [a, c] = pv_integral_n(|u| profile_integrand(u, x), 1.0, range, x, spec)
            .map_err(|e| annotate(e, pair))?;
        Ok(((a.value / PI, c.value / PI), a.residual.max(c.residual) / PI))
    })?;
    Ok(DispersiveCoupling {
        g,
        variant: GVariant::RwaCutoff,
        band: Some([lower, upper]),
        max_residual,
    })
}

/// Profile coefficients (transverse, near-field) of the integrated dyadic
/// at separation x, and the quadrature residual.
fn dispersive_profile(variant: GVariant, x: f64, spec: &PvQuadratureSpec) -> Result<((f64, f64), f64)> {
    let integrand = |u: f64| profile_integrand(u, x);
    let (a, c, res) = match variant {
        GVariant::Extended => {
            let [a, c] = pv_integral_n(integrand, 1.0, PvRange::Line, x, spec)?;
            (a.value, c.value, a.residual.max(c.residual))
        }
        GVariant::FullNumeric => {
            let [ar, cr] = pv_integral_n(integrand, 1.0, PvRange::HalfLine, x, spec)?;
            // The counter-rotating term carries the contraction
            // d_{g nu} . tau . d_{eta g}, identical to d_{eta g} . tau . d_{g nu}
            // because tau is symmetric, so only its profile integral differs.
            let [ac, cc] = pv_integral_n(integrand, -1.0, PvRange::HalfLine, x, spec)?;
            (
                ar.value + ac.value,
                cr.value + cc.value,
                ar.residual.max(cr.residual) + ac.residual.max(cc.residual),
            )
        }
        _ => unreachable!("only whole-range variants reach here"),
    };
    Ok(((a / PI, c / PI), res / PI))
}

fn profile_integrand(u: f64, x: f64) -> [f64; 2] {
    let (a, c) = tau_profile(u * x);
    let u3 = u * u * u;
    [u3 * a, u3 * c]
}

fn annotate(err: Error, (l, j): (usize, usize)) -> Error {
    match err {
        Error::Convergence { context, residual, tolerance } => Error::Convergence {
            context: format!("{context}, atoms ({l}, {j})"),
            residual,
            tolerance,
        },
        other => other,
    }
}

/// Fills the off-diagonal blocks from a per-pair (transverse, near) profile.
/// Pairs are evaluated in parallel and written in a fixed order, so the
/// result does not depend on the thread count.
fn assemble<F>(ensemble: &Ensemble, profile: F) -> Result<(DMatrix<C64>, f64)>
where
    F: Fn(f64, (usize, usize)) -> Result<((f64, f64), f64)> + Sync,
{
    let n = ensemble.n_atoms();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|l| ((l + 1)..n).map(move |j| (l, j)))
        .collect();
    let blocks: Vec<(Matrix3<f64>, f64)> = pairs
        .par_iter()
        .map(|&(l, j)| {
            let r: Vector3<f64> = ensemble.separation(l, j);
            let x = r.norm();
            let ((a, c), res) = profile(x, (l, j))?;
            Ok((dyad(a, c, &(r / x)), res))
        })
        .collect::<Result<_>>()?;

    let mut m = DMatrix::zeros(3 * n, 3 * n);
    let mut max_res: f64 = 0.0;
    for (&(l, j), (t, res)) in pairs.iter().zip(&blocks) {
        max_res = max_res.max(*res);
        for eta in Zeeman::ALL {
            for nu in Zeeman::ALL {
                let (a, b) = (eta.index(), nu.index());
                m[(3 * l + a, 3 * j + b)] = dipole_contract(eta, t, nu);
                m[(3 * j + a, 3 * l + b)] = dipole_contract(eta, t, nu);
            }
        }
    }
    Ok((m, max_res))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambVariant {
    /// P int_0^L u^3 / (u - 1).
    Rwa,
    /// P int_-L^L u^3 / (u - 1).
    ExtendedAnsatz,
    /// The resonant term plus 3 (N - 1) int_0^L u^3 / (u + 1).
    Full,
}

/// Cutoff-dependent self-energy integral in units of omega0^3. It diverges
/// with the cutoff and only exists here to exhibit that structure; it never
/// enters the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambShift {
    pub value: f64,
    pub cutoff: f64,
    pub variant: LambVariant,
    pub residual: f64,
}

pub fn lamb_shift_regularized(
    variant: LambVariant,
    ensemble: &Ensemble,
    cutoff: f64,
) -> Result<LambShift> {
    let spec = PvQuadratureSpec { cutoff, ..Default::default() };
    spec.validate()?;
    let cube = |u: f64| u * u * u;
    let resonant = |lower: f64| {
        pv_integral(cube, 1.0, PvRange::Interval { lower, upper: cutoff }, 0.0, &spec)
    };
    let (value, residual) = match variant {
        LambVariant::Rwa => {
            let v = resonant(0.0)?;
            (v.value, v.residual)
        }
        LambVariant::ExtendedAnsatz => {
            let v = resonant(-cutoff)?;
            (v.value, v.residual)
        }
        LambVariant::Full => {
            let v = resonant(0.0)?;
            let extra = 3.0 * (ensemble.n_atoms() as f64 - 1.0);
            if extra == 0.0 {
                (v.value, v.residual)
            } else {
                let w = counter_rotating_integral(cutoff, &spec)?;
                (v.value + extra * w.value, v.residual + extra * w.residual)
            }
        }
    };
    Ok(LambShift { value, cutoff, variant, residual })
}

/// int_0^L u^3 / (u + 1) du by quadrature.
pub fn counter_rotating_integral(cutoff: f64, spec: &PvQuadratureSpec) -> Result<crate::pv::PvValue> {
    pv_integral(
        |u| u * u * u,
        -1.0,
        PvRange::Interval { lower: 0.0, upper: cutoff },
        0.0,
        spec,
    )
}
