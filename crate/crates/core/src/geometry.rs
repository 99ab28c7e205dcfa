//! Dipole basis vectors, polarization frames and the free-space exchange
//! dyadics.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::ensemble::Zeeman;
use crate::error::{Error, Result};

type C64 = Complex64;

/// Below this argument the near-field bracket of tau is evaluated by series.
pub const TAU_SERIES_SWITCH: f64 = 1e-2;

/// Excitation dipole vector d_{eta g} of the transition g -> e^eta.
pub fn dipole_up(eta: Zeeman) -> Vector3<C64> {
    let r = |x: f64| C64::new(x, 0.0);
    match eta {
        Zeeman::Zero => Vector3::new(r(0.0), r(0.0), r(1.0)),
        Zeeman::Minus => Vector3::new(
            r(FRAC_1_SQRT_2),
            C64::new(0.0, -FRAC_1_SQRT_2),
            r(0.0),
        ),
        Zeeman::Plus => Vector3::new(
            r(FRAC_1_SQRT_2),
            C64::new(0.0, FRAC_1_SQRT_2),
            r(0.0),
        ),
    }
}

/// De-excitation dipole vector d_{g eta}, the conjugate of [`dipole_up`].
pub fn dipole_down(eta: Zeeman) -> Vector3<C64> {
    dipole_up(eta).map(|c| c.conj())
}

/// Plain (non-conjugating) bilinear form `left . m . right`.
pub fn contract(left: &Vector3<C64>, m: &Matrix3<f64>, right: &Vector3<C64>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            acc += left[i] * m[(i, j)] * right[j];
        }
    }
    acc
}

/// d_{eta g} . m . d_{g nu}, the coupling-matrix entry for channels eta, nu.
pub fn dipole_contract(eta: Zeeman, m: &Matrix3<f64>, nu: Zeeman) -> C64 {
    contract(&dipole_up(eta), m, &dipole_down(nu))
}

/// Rotation of the excited-state triplet induced by a spatial rotation `q`:
/// `D[eta, nu] = conj(d_eta) . q . d_nu`, so that `q d_nu = sum_eta d_eta D[eta, nu]`.
pub fn spin1_rotation(q: &Matrix3<f64>) -> Matrix3<C64> {
    Matrix3::from_fn(|a, b| {
        let eta = Zeeman::ALL[a];
        let nu = Zeeman::ALL[b];
        let qd = q.map(|x| C64::new(x, 0.0)) * dipole_up(nu);
        dipole_down(eta).dot(&qd)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DyadicKind {
    Tau,
    Gamma,
}

/// Symmetric 3x3 tensor a [I - RR] + c [I - 3RR] evaluated at x = k R.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicTensor {
    pub m: Matrix3<f64>,
    pub x: f64,
    pub kind: DyadicKind,
}

/// a [I - RR] + c [I - 3RR] for unit `r_hat`.
pub fn dyad(transverse: f64, near: f64, r_hat: &Vector3<f64>) -> Matrix3<f64> {
    let rr = r_hat * r_hat.transpose();
    let id = Matrix3::identity();
    (id - rr) * transverse + (id - rr * 3.0) * near
}

/// Coefficients (sin x / x, cos x / x^2 - sin x / x^3) of the two brackets
/// of tau. Even in x; finite at x = 0.
pub fn tau_profile(x: f64) -> (f64, f64) {
    let ax = x.abs();
    if ax < TAU_SERIES_SWITCH {
        let x2 = x * x;
        let sinc = 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
        let near = -1.0 / 3.0 + x2 / 30.0 - x2 * x2 / 840.0;
        (sinc, near)
    } else {
        let (s, c) = ax.sin_cos();
        (s / ax, c / (ax * ax) - s / (ax * ax * ax))
    }
}

/// Coefficients (cos x / x, -(sin x / x^2 + cos x / x^3)) of the dispersive
/// dyadic. The sign of the near-field bracket is the one the principal-value
/// frequency integral produces (see `coupling::coupling_g_pv`).
pub fn gamma_profile(x: f64) -> (f64, f64) {
    let (s, c) = x.sin_cos();
    (c / x, -(s / (x * x) + c / (x * x * x)))
}

fn check_args(x: f64, r_hat: &Vector3<f64>) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("dyadic argument must be positive, got {x}")));
    }
    if (r_hat.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Domain("separation direction must be a unit vector".into()));
    }
    Ok(())
}

/// The transverse exchange dyadic tau(x) along `r_hat`; tends to (2/3) I as x -> 0.
pub fn tau_dyadic(x: f64, r_hat: &Vector3<f64>) -> Result<DyadicTensor> {
    check_args(x, r_hat)?;
    let (a, c) = tau_profile(x);
    Ok(DyadicTensor {
        m: dyad(a, c, r_hat),
        x,
        kind: DyadicKind::Tau,
    })
}

/// The dispersive dyadic along `r_hat`. Diverges like 1/x^3 at short range;
/// there is no small-x special case.
pub fn gamma_dyadic(x: f64, r_hat: &Vector3<f64>) -> Result<DyadicTensor> {
    check_args(x, r_hat)?;
    let (a, c) = gamma_profile(x);
    Ok(DyadicTensor {
        m: dyad(a, c, r_hat),
        x,
        kind: DyadicKind::Gamma,
    })
}

/// Real orthonormal polarization pair transverse to `k_hat`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationFrame {
    pub k_hat: Vector3<f64>,
    pub eps1: Vector3<f64>,
    pub eps2: Vector3<f64>,
}

impl PolarizationFrame {
    pub fn eps(&self, lambda: usize) -> &Vector3<f64> {
        match lambda {
            0 => &self.eps1,
            _ => &self.eps2,
        }
    }
}

/// eps1 = normalize(z x k), falling back to x near the poles; eps2 = k x eps1.
pub fn polarization_frame(k_hat: &Vector3<f64>) -> Result<PolarizationFrame> {
    if (k_hat.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::validation("propagation direction must be a unit vector"));
    }
    let eps1 = if k_hat.z.abs() > 1.0 - 1e-9 {
        Vector3::x()
    } else {
        Vector3::z().cross(k_hat).normalize()
    };
    let eps2 = k_hat.cross(&eps1);
    Ok(PolarizationFrame {
        k_hat: *k_hat,
        eps1,
        eps2,
    })
}

/// d_{eta g} . (I - k k) . d_{g nu}.
pub fn polarization_sum(eta: Zeeman, nu: Zeeman, k_hat: &Vector3<f64>) -> C64 {
    let proj = Matrix3::identity() - k_hat * k_hat.transpose();
    dipole_contract(eta, &proj, nu)
}

/// Explicit sum over the two real polarizations of a frame.
pub fn polarization_sum_explicit(eta: Zeeman, nu: Zeeman, frame: &PolarizationFrame) -> C64 {
    let up = dipole_up(eta);
    let down = dipole_down(nu);
    [frame.eps1, frame.eps2]
        .iter()
        .map(|e| {
            let e = e.map(|c| C64::new(c, 0.0));
            up.dot(&e) * down.dot(&e)
        })
        .sum()
}
