//! The effective non-Hermitian generator of the single-excitation
//! amplitudes, its eigenmodes, and time evolution.
//!
//! Time is in units of 1 / Gamma. The generator is
//! `M = -(1/2) I - (3/4)(b - i g)`; an eigenvalue `lambda = -rate/2 - i shift`
//! defines the collective decay rate and level shift of a mode.

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::coupling::{CouplingCoefficients, GVariant};
use crate::ensemble::{AmplitudeVector, Ensemble};
use crate::error::{Error, Result};

type C64 = Complex64;

/// Largest allowed product of step and spectral-radius bound.
const STEP_SCALE: f64 = 0.05;

/// Trajectories keep at most about this many samples; long runs are thinned.
const MAX_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveGenerator {
    pub m: DMatrix<C64>,
    pub variant: GVariant,
}

impl EffectiveGenerator {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// -(M + M^dagger), the rate matrix of the excited population.
    pub fn decay_matrix(&self) -> DMatrix<C64> {
        -(&self.m + self.m.adjoint())
    }

    /// Smallest eigenvalue of the decay matrix; non-negative for a physical
    /// generator.
    pub fn min_decay_eigenvalue(&self) -> f64 {
        self.decay_matrix()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Cheap upper bound on the spectral radius (max absolute row sum).
    pub fn spectral_bound(&self) -> f64 {
        self.m
            .row_iter()
            .map(|r| r.iter().map(|c| c.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

pub fn build_generator(
    ensemble: &Ensemble,
    coefficients: &CouplingCoefficients,
) -> Result<EffectiveGenerator> {
    let n = ensemble.n_channels();
    if coefficients.b.shape() != (n, n) || coefficients.g.shape() != (n, n) {
        return Err(Error::validation(format!(
            "coupling matrices are {:?} and {:?}, ensemble needs {n}x{n}",
            coefficients.b.shape(),
            coefficients.g.shape()
        )));
    }
    let i = C64::i();
    let half_gamma = 0.5 * ensemble.gamma();
    let pref = 0.75 * ensemble.gamma();
    let m = DMatrix::from_fn(n, n, |r, c| {
        let diag = if r == c { -half_gamma } else { 0.0 };
        C64::new(diag, 0.0) - (coefficients.b[(r, c)] - i * coefficients.g[(r, c)]) * pref
    });
    Ok(EffectiveGenerator {
        m,
        variant: coefficients.variant,
    })
}

/// Eigenvalues and unit eigenvectors (columns), sorted by decay rate
/// descending, then by shift ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenmodeSet {
    pub values: Vec<C64>,
    pub vectors: DMatrix<C64>,
}

impl EigenmodeSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.values.iter().map(|l| -2.0 * l.re).collect()
    }

    pub fn shifts(&self) -> Vec<f64> {
        self.values.iter().map(|l| -l.im).collect()
    }

    pub fn vector(&self, k: usize) -> DVector<C64> {
        self.vectors.column(k).into_owned()
    }
}

/// Complete eigendecomposition of the generator.
///
/// Eigenvalues closer than max(1e-10, 1e-13 |M|) form one cluster. Its
/// eigenspace is obtained from the smallest right singular vectors of
/// `M - lambda I`, and a canonical basis is built by Gram-Schmidt over the
/// columns of the orthogonal projector onto it, in index order. Every vector
/// then has its largest-magnitude entry made real and positive.
pub fn eigenmodes(gen: &EffectiveGenerator) -> Result<EigenmodeSet> {
    let n = gen.dim();
    let scale = gen.spectral_bound().max(1.0);
    let schur = Schur::try_new(gen.m.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    let raw: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();

    // Cluster nearly equal eigenvalues.
    let tol = (1e-13 * scale).max(1e-10);
    let mut cluster_of = vec![usize::MAX; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if cluster_of[i] != usize::MAX {
            continue;
        }
        let members: Vec<usize> = (i..n)
            .filter(|&j| cluster_of[j] == usize::MAX && (raw[j] - raw[i]).norm() <= tol)
            .collect();
        for &j in &members {
            cluster_of[j] = clusters.len();
        }
        clusters.push(members);
    }

    let mut modes: Vec<(C64, Vec<DVector<C64>>)> = Vec::with_capacity(clusters.len());
    for members in &clusters {
        let lambda = members.iter().map(|&j| raw[j]).sum::<C64>() / members.len() as f64;
        let basis = eigenspace(&gen.m, lambda, members.len(), scale)?;
        modes.push((lambda, canonical_basis(&basis)));
    }
    modes.sort_by(|(a, _), (b, _)| {
        let ra = -2.0 * a.re;
        let rb = -2.0 * b.re;
        rb.total_cmp(&ra).then((-a.im).total_cmp(&-b.im))
    });

    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (lambda, vecs) in modes {
        for v in vecs {
            vectors.set_column(values.len(), &v);
            values.push(lambda);
        }
    }
    Ok(EigenmodeSet { values, vectors })
}

/// Orthonormal basis (columns) of the `dim`-dimensional near-null space of
/// M - lambda I.
fn eigenspace(m: &DMatrix<C64>, lambda: C64, dim: usize, scale: f64) -> Result<DMatrix<C64>> {
    let n = m.nrows();
    let shifted = m - DMatrix::<C64>::identity(n, n) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("singular value decomposition failed".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let worst = svd.singular_values[order[dim - 1]];
    if worst > 1e-6 * scale {
        return Err(Error::Numerical(format!(
            "eigenvalue {lambda} has a defective or ill-conditioned eigenspace (residual {worst:.3e})"
        )));
    }
    let mut basis = DMatrix::zeros(n, dim);
    for (k, &row) in order.iter().take(dim).enumerate() {
        let v: DVector<C64> = v_t.row(row).adjoint();
        basis.set_column(k, &v);
    }
    Ok(basis)
}

/// Deterministic orthonormal basis for the span of the columns of `u`.
fn canonical_basis(u: &DMatrix<C64>) -> Vec<DVector<C64>> {
    let dim = u.ncols();
    if dim == 1 {
        return vec![fix_phase(u.column(0).normalize())];
    }
    let projector = u * u.adjoint();
    let mut out: Vec<DVector<C64>> = Vec::with_capacity(dim);
    for c in 0..projector.ncols() {
        if out.len() == dim {
            break;
        }
        let mut v: DVector<C64> = projector.column(c).into_owned();
        for q in &out {
            let proj = q.dotc(&v);
            v -= q * proj;
        }
        let norm = v.norm();
        if norm > 1e-6 {
            out.push(fix_phase(v / C64::new(norm, 0.0)));
        }
    }
    out
}

/// Rotates the phase so the largest-magnitude entry (first on ties) is real
/// and positive.
fn fix_phase(v: DVector<C64>) -> DVector<C64> {
    let mut best = 0;
    for (i, c) in v.iter().enumerate() {
        if c.norm() > v[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let p = v[best];
    if p.norm() == 0.0 {
        return v;
    }
    let phase = p.conj() / p.norm();
    v * phase
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    #[serde(skip)]
    pub amplitudes: Vec<AmplitudeVector>,
    pub excited_population: Vec<f64>,
    pub emission_rate: Vec<f64>,
}

impl TrajectoryResult {
    pub fn final_population(&self) -> f64 {
        *self.excited_population.last().expect("trajectory is never empty")
    }

    pub fn final_amplitudes(&self) -> &AmplitudeVector {
        self.amplitudes.last().expect("trajectory is never empty")
    }
}

/// Integrates d beta / dt = M beta with the classical fourth-order
/// Runge-Kutta scheme at a fixed step `h <= min(dt_max, 0.05 / rho)`, rho the
/// row-sum bound on the spectral radius. The step is shrunk so that an
/// integer number of steps lands on `t_final`. Runs longer than
/// 20000 steps record every k-th step only (always including the last).
///
/// For a linear system one RK4 step is multiplication by the degree-four
/// Taylor polynomial of exp(h M); its error per unit time is about
/// rho (h rho)^4 / 120, below 6e-8 rho at the largest allowed step.
pub fn evolve(
    gen: &EffectiveGenerator,
    initial: &AmplitudeVector,
    t_final: f64,
    dt_max: f64,
) -> Result<TrajectoryResult> {
    let n = gen.dim();
    if initial.len() != n {
        return Err(Error::validation(format!(
            "initial state has {} channels, generator has {n}",
            initial.len()
        )));
    }
    if (initial.norm_sqr() - 1.0).abs() > 1e-10 {
        return Err(Error::validation("initial state must be normalized"));
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::validation("t_final must be positive"));
    }
    if !(dt_max > 0.0) {
        return Err(Error::validation("dt_max must be positive"));
    }
    let rho = gen.spectral_bound();
    let h_cap = if rho > 0.0 { dt_max.min(STEP_SCALE / rho) } else { dt_max };
    let steps = (t_final / h_cap).ceil();
    if !(steps < 1e8) || h_cap < 1e-12 * t_final {
        return Err(Error::Numerical(format!(
            "step size underflow: {h_cap:.3e} over t_final = {t_final}"
        )));
    }
    let steps = steps.max(1.0) as usize;
    let h = t_final / steps as f64;

    let stride = steps.div_ceil(MAX_SAMPLES);
    let samples = steps / stride + 2;
    let propagator = rk4_propagator(&gen.m, h);
    let mut beta = initial.0.clone();
    let mut out = TrajectoryResult {
        times: Vec::with_capacity(samples),
        amplitudes: Vec::with_capacity(samples),
        excited_population: Vec::with_capacity(samples),
        emission_rate: Vec::with_capacity(samples),
    };
    for k in 0..=steps {
        if k > 0 {
            beta = &propagator * &beta;
        }
        if k % stride != 0 && k != steps {
            continue;
        }
        out.times.push(if k == steps { t_final } else { k as f64 * h });
        out.excited_population.push(beta.norm_squared());
        out.emission_rate.push(emission_rate(&gen.m, &beta));
        out.amplitudes.push(AmplitudeVector(beta.clone()));
    }
    Ok(out)
}

/// I + hM + (hM)^2/2 + (hM)^3/6 + (hM)^4/24.
fn rk4_propagator(m: &DMatrix<C64>, h: f64) -> DMatrix<C64> {
    let n = m.nrows();
    let a = m * C64::new(h, 0.0);
    let mut term = DMatrix::<C64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=4 {
        term = &term * &a / C64::new(k as f64, 0.0);
        sum += &term;
    }
    sum
}

/// -d/dt |beta|^2 = -2 Re(beta^dagger M beta).
pub fn emission_rate(m: &DMatrix<C64>, beta: &DVector<C64>) -> f64 {
    -2.0 * beta.dotc(&(m * beta)).re
}

/// beta(t) = sum_k c_k exp(lambda_k t) v_k with c solving V c = beta(0).
pub fn reconstruct(modes: &EigenmodeSet, initial: &AmplitudeVector, t: f64) -> Result<AmplitudeVector> {
    if initial.len() != modes.len() {
        return Err(Error::validation("initial state dimension does not match the eigenmodes"));
    }
    let c = modes
        .vectors
        .clone()
        .lu()
        .solve(&initial.0)
        .ok_or_else(|| Error::Numerical("eigenvector matrix is singular".into()))?;
    let evolved = DVector::from_fn(c.len(), |k, _| c[k] * (modes.values[k] * t).exp());
    Ok(AmplitudeVector(&modes.vectors * evolved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{coupling_coefficients, coupling_b, coupling_g_closed};
    use crate::ensemble::{make_ensemble, LengthUnit, Zeeman};
    use crate::geometry::spin1_rotation;
    use crate::pv::PvQuadratureSpec;
    use approx::assert_relative_eq;
    use nalgebra::{Rotation3, Vector3};
    use proptest::prelude::*;

    fn generator(pos: &[Vector3<f64>]) -> (Ensemble, EffectiveGenerator) {
        let e = make_ensemble(pos, 1000.0, LengthUnit::InverseK0).unwrap();
        let c = coupling_coefficients(&e, GVariant::Closed, &PvQuadratureSpec::default()).unwrap();
        let g = build_generator(&e, &c).unwrap();
        (e, g)
    }

    fn dicke() -> (Ensemble, EffectiveGenerator) {
        generator(&[Vector3::zeros(), Vector3::new(0.0, 0.0, 1e-3)])
    }

    #[test]
    fn single_atom_generator() {
        let (_, g) = generator(&[Vector3::zeros()]);
        assert_eq!(g.m, DMatrix::identity(3, 3) * C64::new(-0.5, 0.0));
        let modes = eigenmodes(&g).unwrap();
        for l in &modes.values {
            assert!((l - C64::new(-0.5, 0.0)).norm() < 1e-14);
        }
        assert_eq!(modes.vectors, DMatrix::identity(3, 3));
    }

    #[test]
    fn dicke_limit_modes() {
        let (e, g) = dicke();
        for z in Zeeman::ALL {
            let s = AmplitudeVector::symmetric(&e, z).0;
            let ms = &g.m * &s;
            // The symmetric combination is an eigenvector with real part -1.
            let lambda = s.dotc(&ms);
            assert!((lambda.re + 1.0).abs() < 1e-3);
            assert!((ms - &s * lambda).norm() < 1e-13 * g.spectral_bound());
        }
        let modes = eigenmodes(&g).unwrap();
        let rates = modes.rates();
        for r in &rates[..3] {
            assert!((r - 2.0).abs() < 2e-3);
        }
        for r in &rates[3..] {
            assert!(r.abs() < 1e-3);
        }
        assert_relative_eq!(rates.iter().sum::<f64>(), 6.0, epsilon = 1e-10);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let e1 = make_ensemble(&[Vector3::zeros()], 1000.0, LengthUnit::InverseK0).unwrap();
        let e2 = make_ensemble(&[Vector3::zeros(), Vector3::x()], 1000.0, LengthUnit::InverseK0).unwrap();
        let c2 = coupling_coefficients(&e2, GVariant::Closed, &PvQuadratureSpec::default()).unwrap();
        assert!(matches!(build_generator(&e1, &c2), Err(Error::Validation(_))));
    }

    #[test]
    fn single_atom_decay() {
        let (e, g) = generator(&[Vector3::zeros()]);
        let init = AmplitudeVector::single(&e, e.channel(0, 1).unwrap());
        let tr = evolve(&g, &init, 1.0, 0.01).unwrap();
        assert!((tr.final_population() - (-1.0f64).exp()).abs() < 1e-8);
        assert_eq!(*tr.times.last().unwrap(), 1.0);
        assert_relative_eq!(tr.emission_rate[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn dicke_symmetric_decay() {
        // At x = 1e-3 the near-field shift puts the spectral radius near
        // 1.5e9, far beyond what a fixed explicit step can cover.
        let (e, g) = dicke();
        let init = AmplitudeVector::symmetric(&e, Zeeman::Zero);
        assert!(matches!(evolve(&g, &init, 1.0, 0.01), Err(Error::Numerical(_))));

        // The symmetric state is a common eigenvector of b and g, so the
        // dispersive part only adds a phase; drop it to reach t = 1.
        let mut c = coupling_coefficients(&e, GVariant::Closed, &PvQuadratureSpec::default()).unwrap();
        c.g.fill(C64::new(0.0, 0.0));
        let decay_only = build_generator(&e, &c).unwrap();
        let tr = evolve(&decay_only, &init, 1.0, 0.01).unwrap();
        assert!((tr.final_population() - (-2.0f64).exp()).abs() < 1e-4);

        // With the full generator a pair at x = 0.05 is still close to the
        // limit (rate 2 - x^2 / 10) and cheap enough to integrate.
        let (e, g) = generator(&[Vector3::zeros(), Vector3::new(0.0, 0.0, 0.05)]);
        let init = AmplitudeVector::symmetric(&e, Zeeman::Zero);
        let tr = evolve(&g, &init, 1.0, 0.01).unwrap();
        assert!((tr.final_population() - (-2.0f64).exp()).abs() < 1e-4);
        assert!(tr.times.len() <= MAX_SAMPLES + 2);
        assert_eq!(*tr.times.last().unwrap(), 1.0);
    }

    #[test]
    fn evolve_rejects_bad_input() {
        let (e, g) = dicke();
        let init = AmplitudeVector::symmetric(&e, Zeeman::Zero);
        assert!(evolve(&g, &init, 0.0, 0.01).is_err());
        assert!(evolve(&g, &AmplitudeVector::zeros(6), 1.0, 0.01).is_err());
        assert!(matches!(evolve(&g, &init, 1.0, 1e-13), Err(Error::Numerical(_))));
    }

    #[test]
    fn generator_conjugates_under_rotation() {
        let pos = [Vector3::zeros(), Vector3::new(0.4, -1.1, 0.7), Vector3::new(2.0, 0.3, -0.5)];
        let q = *Rotation3::from_euler_angles(0.3, -1.2, 2.1).matrix();
        let (e, g) = generator(&pos);
        let (_, gr) = generator(&e.positions().iter().map(|r| q * r).collect::<Vec<_>>());
        let d = spin1_rotation(&q).map(|c| c.conj());
        let mut big = DMatrix::zeros(9, 9);
        for l in 0..3 {
            big.view_mut((3 * l, 3 * l), (3, 3)).copy_from(&d);
        }
        let expected = &big * &g.m * big.adjoint();
        assert!((expected - &gr.m).camax() < 1e-12);
    }

    fn positions(n: usize) -> impl Strategy<Value = Vec<Vector3<f64>>> {
        prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64), n)
            .prop_map(|v| v.into_iter().map(|(x, y, z)| Vector3::new(x, y, z)).collect())
    }

    fn well_separated(pos: &[Vector3<f64>], min: f64) -> bool {
        pos.iter().enumerate().all(|(i, a)| pos[i + 1..].iter().all(|b| (a - b).norm() >= min))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn trace_and_decay_form(pos in (1usize..=6).prop_flat_map(positions)) {
            prop_assume!(well_separated(&pos, 0.05));
            let (e, g) = generator(&pos);
            let tr: f64 = (0..g.dim()).map(|k| g.m[(k, k)].re).sum();
            prop_assert!((tr + 1.5 * e.n_atoms() as f64).abs() < 1e-12);
            prop_assert!(g.min_decay_eigenvalue() >= -1e-10);
            let modes = eigenmodes(&g).unwrap();
            let rates = modes.rates();
            prop_assert!((rates.iter().sum::<f64>() - 3.0 * e.n_atoms() as f64).abs() < 1e-10);
            prop_assert!(rates.iter().all(|r| *r >= -1e-10));
            prop_assert!(rates.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn propagation_paths_agree(pos in (2usize..=4).prop_flat_map(positions), seed in 0usize..12) {
            prop_assume!(well_separated(&pos, 1.0));
            let (e, g) = generator(&pos);
            let init = AmplitudeVector::single(&e, crate::ensemble::ChannelIndex::from_flat(seed % e.n_channels(), e.n_atoms()).unwrap());
            let t = 3.0;
            let tr = evolve(&g, &init, t, 1e-3).unwrap();
            let modes = eigenmodes(&g).unwrap();
            let rec = reconstruct(&modes, &init, t).unwrap();
            prop_assert!((&tr.final_amplitudes().0 - &rec.0).camax() < 1e-8);
            for w in tr.excited_population.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
        }

        #[test]
        fn rotation_leaves_spectrum_invariant(pos in (2usize..=4).prop_flat_map(positions), a in 0.0..6.3f64, b in 0.0..3.1f64, c in 0.0..6.3f64) {
            prop_assume!(well_separated(&pos, 0.3));
            let q = *Rotation3::from_euler_angles(a, b, c).matrix();
            let (_, g) = generator(&pos);
            let rotated: Vec<_> = pos.iter().map(|r| q * r).collect();
            let (_, gr) = generator(&rotated);
            let m1 = eigenmodes(&g).unwrap();
            let m2 = eigenmodes(&gr).unwrap();
            for (x, y) in m1.values.iter().zip(&m2.values) {
                prop_assert!((x - y).norm() < 1e-10, "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn b_is_shared_by_every_variant() {
        let e = make_ensemble(&[Vector3::zeros(), Vector3::new(0.3, 0.9, -0.2)], 1000.0, LengthUnit::InverseK0).unwrap();
        let spec = PvQuadratureSpec::default();
        let b = coupling_b(&e);
        for v in GVariant::ALL {
            assert_eq!(coupling_coefficients(&e, v, &spec).unwrap().b, b);
        }
        assert_eq!(coupling_g_closed(&e).shape(), (6, 6));
    }
}
