//! Gauss-Legendre rules and quadrature over photon propagation directions.

use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};
use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1], nodes ascending.
///
/// Newton iteration on the three-term Legendre recurrence from the usual
/// Chebyshev-like initial guesses; good to a few ulp for n up to several
/// hundred.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Cached rule; the PV engine asks for the same handful of sizes repeatedly.
pub(crate) fn gauss_legendre_cached(n: usize) -> std::sync::Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, std::sync::Arc<(Vec<f64>, Vec<f64>)>>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| std::sync::Arc::new(gauss_legendre(n)))
        .clone()
}

/// Nodes on the unit sphere with weights summing to 4 pi.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularQuadrature {
    nodes: Vec<Vector3<f64>>,
    weights: Vec<f64>,
    order: usize,
}

impl AngularQuadrature {
    /// Gauss-Legendre in cos(theta) times the trapezoid rule in phi.
    ///
    /// Integrates spherical harmonics exactly up to degree `order`. The phi
    /// count is kept even so the node set is closed under k -> -k.
    pub fn product(order: usize) -> Self {
        let n_theta = order / 2 + 1;
        let mut n_phi = order + 1;
        if n_phi % 2 == 1 {
            n_phi += 1;
        }
        let (ct, wt) = gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (c, w) in ct.iter().zip(&wt) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for k in 0..n_phi {
                let phi = k as f64 * dphi;
                nodes.push(Vector3::new(s * phi.cos(), s * phi.sin(), *c));
                weights.push(w * dphi);
            }
        }
        AngularQuadrature { nodes, weights, order }
    }

    /// Arbitrary rule; nodes are checked to be unit vectors and weights
    /// positive. `order` is the degree the caller claims it integrates.
    pub fn from_parts(nodes: Vec<Vector3<f64>>, weights: Vec<f64>, order: usize) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::validation("nodes and weights must be non-empty and equal length"));
        }
        if nodes.iter().any(|n| (n.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::validation("quadrature nodes must be unit vectors"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::validation("quadrature weights must be positive"));
        }
        Ok(AngularQuadrature { nodes, weights, order })
    }

    pub fn nodes(&self) -> &[Vector3<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vector3<f64>, f64)> {
        self.nodes.iter().zip(self.weights.iter().copied())
    }
}

/// Sum of w_i (I - k_i k_i); analytically (8 pi / 3) I.
pub fn angular_average_projector(quad: &AngularQuadrature) -> Matrix3<f64> {
    quad.iter().fold(Matrix3::zeros(), |acc, (k, w)| {
        acc + (Matrix3::identity() - k * k.transpose()) * w
    })
}

/// Quadrature of the plane-wave weighted transverse projector.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularTransform {
    /// Real part of the sum, which should equal 4 pi tau(k |R|).
    pub value: Matrix3<f64>,
    /// Largest |imaginary part| among the entries.
    pub max_imag: f64,
}

/// Quadrature of the integral over directions of exp(-i k k_hat . R) (I - k_hat k_hat).
pub fn angular_transform_to_tau(
    quad: &AngularQuadrature,
    k: f64,
    r_vec: &Vector3<f64>,
) -> Result<AngularTransform> {
    if !(r_vec.norm() > 0.0) {
        return Err(Error::Domain("separation vector must be non-zero".into()));
    }
    let mut re = Matrix3::zeros();
    let mut im = Matrix3::zeros();
    for (khat, w) in quad.iter() {
        let phase = -k * khat.dot(r_vec);
        let proj = Matrix3::identity() - khat * khat.transpose();
        re += proj * (w * phase.cos());
        im += proj * (w * phase.sin());
    }
    // Symmetrize; the projector is symmetric but rounding is not.
    let value = (re + re.transpose()) * 0.5;
    let im = (im + im.transpose()) * 0.5;
    Ok(AngularTransform {
        value,
        max_imag: im.amax(),
    })
}
