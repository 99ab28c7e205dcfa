//! Wavefunction simulation of the atoms coupled to a discretized set of
//! field modes, without the Markov approximation.
//!
//! Amplitudes are in the interaction picture, time in 1 / Gamma and
//! frequencies in Gamma. The single-excitation sector couples the atomic
//! amplitudes beta to one-photon amplitudes e_q; the full sector (two atoms
//! only) adds the counter-rotating amplitudes alpha_q of states with both
//! atoms excited plus one photon.
//!
//! All modes of one frequency share the same phase factor, so the photon
//! amplitudes of a frequency shell n are always of the form e_q = u_q . y_n
//! with dy_n / dt = exp(i (w_n - w0) t) beta, where u_q is the mode's
//! coupling row. Only the 3N-vectors y_n (and z_n for alpha) are integrated;
//! the shell enters the atomic equation through the Gram matrix
//! S_n = sum_q u_q^dagger u_q. This is an exact rewrite of the mode
//! equations; the mode amplitudes are reconstructed on request.

use std::f64::consts::PI;

use nalgebra::{DVector, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryResult;
use crate::ensemble::{AmplitudeVector, Ensemble, Zeeman};
use crate::error::{Error, Result};
use crate::geometry::{dipole_down, dipole_up, polarization_frame, PolarizationFrame};
use crate::quadrature::AngularQuadrature;

type C64 = Complex64;

/// Frequencies per parallel work unit; fixed so that sums are always
/// reduced in the same order.
const CHUNK: usize = 64;

/// Largest allowed product of step and fastest phase frequency.
const PHASE_STEP: f64 = 0.05;

/// Trajectories keep at most about this many samples.
const MAX_SAMPLES: usize = 5_000;

/// Norm drift beyond which a run is reported as failed.
const DRIFT_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    /// Excitation-number conserving couplings only.
    Rwa,
    /// Adds the two-excited-atoms-plus-photon states (N = 2).
    Full,
}

impl std::str::FromStr for Sector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rwa" => Ok(Sector::Rwa),
            "full" => Ok(Sector::Full),
            other => Err(Error::validation(format!("unknown sector '{other}' (expected rwa or full)"))),
        }
    }
}

/// Parameters of a mode grid and the run it is meant for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrosimConfig {
    pub sector: Sector,
    /// Half-width W of the band around omega0 (rwa) or upper frequency
    /// limit (full), in units of Gamma.
    pub band_halfwidth: f64,
    pub n_omega: usize,
    pub angular_order: usize,
    pub t_final: f64,
}

/// One field mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub k_hat: Vector3<f64>,
    pub omega: f64,
    pub polarization: Vector3<f64>,
    /// Squared coupling constant g_q^2 of the mode.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    config: MicrosimConfig,
    omega0: f64,
    band: [f64; 2],
    delta_omega: f64,
    frequencies: Vec<f64>,
    angular: AngularQuadrature,
    frames: Vec<PolarizationFrame>,
    calibration: f64,
    expected_population_error: f64,
}

/// Midpoint frequency grid times a product angular rule times two
/// polarizations.
///
/// Couplings are g_q^2 = (3 / 16 pi^2) c (w_q / w0)^3 dw w_i, which makes the
/// golden-rule single-atom rate exactly Gamma on the grid; the angular
/// factor c = 4 pi / sum(w_i) absorbs any error in the direction weights.
pub fn build_mode_grid(ensemble: &Ensemble, config: &MicrosimConfig) -> Result<ModeGrid> {
    let w0 = ensemble.omega0();
    let cfg = config;
    if !(cfg.band_halfwidth > 0.0) || !cfg.band_halfwidth.is_finite() {
        return Err(Error::validation("band half-width must be positive"));
    }
    if cfg.n_omega == 0 {
        return Err(Error::validation("n_omega must be positive"));
    }
    if !(cfg.t_final > 0.0) || !cfg.t_final.is_finite() {
        return Err(Error::validation("t_final must be positive"));
    }
    let band = match cfg.sector {
        Sector::Rwa => {
            if cfg.band_halfwidth >= w0 {
                return Err(Error::validation(format!(
                    "band half-width {} must be below omega0 = {w0}",
                    cfg.band_halfwidth
                )));
            }
            [w0 - cfg.band_halfwidth, w0 + cfg.band_halfwidth]
        }
        Sector::Full => {
            if ensemble.n_atoms() != 2 {
                return Err(Error::validation(format!(
                    "the full sector is implemented for two atoms, got {}",
                    ensemble.n_atoms()
                )));
            }
            if cfg.band_halfwidth <= w0 {
                return Err(Error::validation(format!(
                    "frequency cutoff {} must exceed omega0 = {w0}",
                    cfg.band_halfwidth
                )));
            }
            [0.0, cfg.band_halfwidth]
        }
    };
    let delta_omega = (band[1] - band[0]) / cfg.n_omega as f64;
    let limit = 2.0 * PI / (5.0 * cfg.t_final);
    if delta_omega > limit {
        return Err(Error::validation(format!(
            "frequency spacing {delta_omega:.4} exceeds 2 pi / (5 t_final) = {limit:.4}; \
             need n_omega >= {}",
            ((band[1] - band[0]) / limit).ceil()
        )));
    }
    let frequencies = (0..cfg.n_omega)
        .map(|n| band[0] + (n as f64 + 0.5) * delta_omega)
        .collect();
    let angular = AngularQuadrature::product(cfg.angular_order);
    let frames = angular
        .nodes()
        .iter()
        .map(polarization_frame)
        .collect::<Result<Vec<_>>>()?;
    let calibration = 4.0 * PI / angular.weight_sum();
    // The amplitude tail outside a flat band of half-width W removes about
    // 2 Gamma / (pi W) of the population.
    let edge = match cfg.sector {
        Sector::Rwa => cfg.band_halfwidth,
        Sector::Full => w0,
    };
    Ok(ModeGrid {
        config: cfg.clone(),
        omega0: w0,
        band,
        delta_omega,
        frequencies,
        angular,
        frames,
        calibration,
        expected_population_error: 2.0 / (PI * edge),
    })
}

impl ModeGrid {
    pub fn config(&self) -> &MicrosimConfig {
        &self.config
    }

    pub fn sector(&self) -> Sector {
        self.config.sector
    }

    pub fn band(&self) -> [f64; 2] {
        self.band
    }

    pub fn delta_omega(&self) -> f64 {
        self.delta_omega
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn angular(&self) -> &AngularQuadrature {
        &self.angular
    }

    pub fn calibration(&self) -> f64 {
        self.calibration
    }

    /// Relative deviation of the single-atom population from exp(-Gamma t)
    /// expected from the finite band.
    pub fn expected_population_error(&self) -> f64 {
        self.expected_population_error
    }

    pub fn n_modes(&self) -> usize {
        self.frequencies.len() * self.angular.len() * 2
    }

    /// Number of two-excitation amplitudes for a two-atom ensemble.
    pub fn alpha_len(&self) -> usize {
        match self.config.sector {
            Sector::Rwa => 0,
            Sector::Full => 9 * self.n_modes(),
        }
    }

    fn mode_weight(&self, omega: f64, w_dir: f64) -> f64 {
        let u = omega / self.omega0;
        3.0 / (16.0 * PI * PI) * self.calibration * u * u * u * self.delta_omega * w_dir
    }

    /// Modes ordered by frequency, then direction, then polarization.
    pub fn modes(&self) -> impl Iterator<Item = Mode> + '_ {
        self.frequencies.iter().flat_map(move |&omega| {
            self.angular
                .iter()
                .zip(&self.frames)
                .flat_map(move |((k, w), frame)| {
                    (0..2).map(move |lambda| Mode {
                        k_hat: *k,
                        omega,
                        polarization: *frame.eps(lambda),
                        weight: self.mode_weight(omega, w),
                    })
                })
        })
    }

    /// Calls `visit(u, w)` for every mode of shell `n`, where u[a] is the
    /// coupling of atomic channel a to the photon and, in the full sector,
    /// w[9 a + s] the coupling of channel a to two-excitation state s.
    fn visit_shell(&self, ensemble: &Ensemble, n: usize, mut visit: impl FnMut(&[C64], &[C64])) {
        let omega = self.frequencies[n];
        let scale = omega / self.omega0;
        let d = ensemble.n_channels();
        let full = self.config.sector == Sector::Full;
        let down: Vec<Vector3<C64>> = Zeeman::ALL.iter().map(|&z| dipole_down(z)).collect();
        let up: Vec<Vector3<C64>> = Zeeman::ALL.iter().map(|&z| dipole_up(z)).collect();
        let mut u = vec![C64::new(0.0, 0.0); d];
        let mut w = vec![C64::new(0.0, 0.0); if full { 9 * d } else { 0 }];
        for ((k, wt), frame) in self.angular.iter().zip(&self.frames) {
            let g = self.mode_weight(omega, wt).sqrt();
            let phases: Vec<C64> = ensemble
                .positions()
                .iter()
                .map(|r| C64::cis(-scale * k.dot(r)))
                .collect();
            for lambda in 0..2 {
                let eps = frame.eps(lambda).map(|c| C64::new(c, 0.0));
                for (l, ph) in phases.iter().enumerate() {
                    for (i, dn) in down.iter().enumerate() {
                        u[3 * l + i] = *ph * dn.dot(&eps) * g;
                    }
                }
                if full {
                    let up_eps: Vec<C64> = up.iter().map(|v| v.dot(&eps) * g).collect();
                    w.fill(C64::new(0.0, 0.0));
                    for eta in 0..3 {
                        for other in 0..3 {
                            // Atom 0 stays in eta while atom 1 is raised to
                            // `other`: state (eta, other).
                            w[9 * eta + 3 * eta + other] = phases[1] * up_eps[other];
                            // Atom 1 stays in eta while atom 0 is raised:
                            // state (other, eta).
                            w[9 * (3 + eta) + 3 * other + eta] = phases[0] * up_eps[other];
                        }
                    }
                }
                visit(&u, &w);
            }
        }
    }
}

/// Reduced state: atomic amplitudes plus the per-shell vectors y_n, z_n.
#[derive(Debug, Clone, PartialEq)]
pub struct MicrosimState {
    pub beta: DVector<C64>,
    /// y_n for every shell, shell-major.
    pub y: Vec<C64>,
    /// z_n for every shell (full sector only).
    pub z: Vec<C64>,
}

impl MicrosimState {
    /// One-photon amplitudes e_q in the order of [`ModeGrid::modes`].
    pub fn photon_amplitudes(&self, ensemble: &Ensemble, grid: &ModeGrid) -> Vec<C64> {
        let d = ensemble.n_channels();
        let mut out = Vec::with_capacity(grid.n_modes());
        for n in 0..grid.frequencies.len() {
            let y = &self.y[n * d..(n + 1) * d];
            grid.visit_shell(ensemble, n, |u, _| {
                out.push(u.iter().zip(y).map(|(a, b)| a * b).sum());
            });
        }
        out
    }

    /// Two-excitation amplitudes, nine per mode in the order
    /// (atom 0 level, atom 1 level); empty in the rwa sector.
    pub fn alpha_amplitudes(&self, ensemble: &Ensemble, grid: &ModeGrid) -> Vec<C64> {
        if grid.sector() == Sector::Rwa {
            return Vec::new();
        }
        let d = ensemble.n_channels();
        let mut out = Vec::with_capacity(grid.alpha_len());
        for n in 0..grid.frequencies.len() {
            let z = &self.z[n * d..(n + 1) * d];
            grid.visit_shell(ensemble, n, |_, w| {
                for s in 0..9 {
                    out.push((0..d).map(|a| w[9 * a + s] * z[a]).sum());
                }
            });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicrosimResult {
    /// Atomic amplitudes; `excited_population` is |beta|^2.
    pub trajectory: TrajectoryResult,
    /// Total norm at the sample times.
    pub norm: Vec<f64>,
    /// Photon population at the sample times.
    pub photon_population: Vec<f64>,
    /// Two-excitation population at the sample times (zeros for rwa).
    pub alpha_population: Vec<f64>,
    /// Largest |norm - 1| over every integration step.
    pub max_norm_drift: f64,
    /// Largest two-excitation population over every integration step.
    pub max_alpha_population: f64,
    pub steps: usize,
    pub step_size: f64,
    pub final_state: MicrosimState,
}

/// Integrates the mode equations from beta(0) = `initial`, with every field
/// amplitude starting at zero.
///
/// Classical RK4 at a fixed step no larger than 0.05 over the fastest phase
/// frequency in the grid. Parallel over fixed frequency chunks with an
/// ordered reduction, so results do not depend on the number of threads.
pub fn microsim_run(
    ensemble: &Ensemble,
    grid: &ModeGrid,
    initial: &AmplitudeVector,
) -> Result<MicrosimResult> {
    let d = ensemble.n_channels();
    if initial.len() != d {
        return Err(Error::validation(format!(
            "initial state has {} channels, ensemble has {d}",
            initial.len()
        )));
    }
    if (initial.norm_sqr() - 1.0).abs() > 1e-10 {
        return Err(Error::validation("initial state must be normalized"));
    }
    let full = grid.sector() == Sector::Full;
    if full && ensemble.n_atoms() != 2 {
        return Err(Error::validation("the full sector is implemented for two atoms"));
    }
    let sys = System::new(ensemble, grid);

    let t_final = grid.config.t_final;
    let w0 = grid.omega0;
    let mut fastest = grid
        .frequencies
        .iter()
        .map(|w| (w - w0).abs())
        .fold(0.0, f64::max);
    if full {
        fastest = fastest.max(grid.band[1] + w0);
    }
    let h_cap = PHASE_STEP / fastest.max(1.0);
    let steps = (t_final / h_cap).ceil().max(1.0) as usize;
    let h = t_final / steps as f64;
    let stride = steps.div_ceil(MAX_SAMPLES);

    let len = d + sys.n * sys.blk;
    let mut state = vec![C64::new(0.0, 0.0); len];
    state[..d].copy_from_slice(initial.0.as_slice());
    let mut k1 = vec![C64::new(0.0, 0.0); len];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp = k1.clone();

    let mut out = MicrosimResult {
        trajectory: TrajectoryResult {
            times: Vec::new(),
            amplitudes: Vec::new(),
            excited_population: Vec::new(),
            emission_rate: Vec::new(),
        },
        norm: Vec::new(),
        photon_population: Vec::new(),
        alpha_population: Vec::new(),
        max_norm_drift: 0.0,
        max_alpha_population: 0.0,
        steps,
        step_size: h,
        final_state: MicrosimState { beta: DVector::zeros(d), y: Vec::new(), z: Vec::new() },
    };

    for k in 0..=steps {
        let t = if k == steps { t_final } else { k as f64 * h };
        if k > 0 {
            let t0 = (k - 1) as f64 * h;
            sys.rhs(t0, &state, &mut k1);
            axpy_into(&mut tmp, &state, 0.5 * h, &k1);
            sys.rhs(t0 + 0.5 * h, &tmp, &mut k2);
            axpy_into(&mut tmp, &state, 0.5 * h, &k2);
            sys.rhs(t0 + 0.5 * h, &tmp, &mut k3);
            axpy_into(&mut tmp, &state, h, &k3);
            sys.rhs(t0 + h, &tmp, &mut k4);
            let c = h / 6.0;
            for i in 0..len {
                state[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * c;
            }
        }
        let (photon, alpha) = sys.field_populations(&state);
        let atomic: f64 = state[..d].iter().map(|c| c.norm_sqr()).sum();
        let total = atomic + photon + alpha;
        out.max_norm_drift = out.max_norm_drift.max((total - 1.0).abs());
        out.max_alpha_population = out.max_alpha_population.max(alpha);
        if !total.is_finite() || out.max_norm_drift > DRIFT_LIMIT {
            return Err(Error::Numerical(format!(
                "norm drift {:.3e} at t = {t:.6} exceeds {DRIFT_LIMIT:.0e}",
                out.max_norm_drift
            )));
        }
        if k % stride == 0 || k == steps {
            sys.rhs(t, &state, &mut k1);
            let beta = DVector::from_column_slice(&state[..d]);
            let dbeta = DVector::from_column_slice(&k1[..d]);
            let tr = &mut out.trajectory;
            tr.times.push(t);
            tr.excited_population.push(atomic);
            tr.emission_rate.push(-2.0 * beta.dotc(&dbeta).re);
            tr.amplitudes.push(AmplitudeVector(beta));
            out.norm.push(total);
            out.photon_population.push(photon);
            out.alpha_population.push(alpha);
        }
    }

    let (y, z) = sys.split_fields(&state[d..]);
    out.final_state = MicrosimState {
        beta: DVector::from_column_slice(&state[..d]),
        y,
        z,
    };
    Ok(out)
}

fn axpy_into(out: &mut [C64], x: &[C64], a: f64, y: &[C64]) {
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + yi * a;
    }
}

/// The reduced linear system. State layout: beta (d entries), then one
/// block per shell holding y_n and, in the full sector, z_n.
struct System {
    d: usize,
    n: usize,
    /// Entries per shell block: d or 2d.
    blk: usize,
    full: bool,
    /// Per shell: S_n row-major, then T_n in the full sector.
    mats: Vec<C64>,
    /// w_n - w0 for the first shell, and the shell spacing.
    detuning0: f64,
    omega0: f64,
    spacing: f64,
}

impl System {
    fn new(ensemble: &Ensemble, grid: &ModeGrid) -> Self {
        let d = ensemble.n_channels();
        let full = grid.sector() == Sector::Full;
        let k = if full { 2 } else { 1 };
        let n = grid.frequencies.len();
        let per = k * d * d;
        let mut mats = vec![C64::new(0.0, 0.0); n * per];
        mats.par_chunks_mut(per).enumerate().for_each(|(shell, m)| {
            let (s, t) = m.split_at_mut(d * d);
            grid.visit_shell(ensemble, shell, |u, w| {
                for a in 0..d {
                    for b in 0..d {
                        s[a * d + b] += u[a].conj() * u[b];
                    }
                }
                if full {
                    for a in 0..d {
                        for b in 0..d {
                            let mut acc = C64::new(0.0, 0.0);
                            for st in 0..9 {
                                acc += w[9 * a + st].conj() * w[9 * b + st];
                            }
                            t[a * d + b] += acc;
                        }
                    }
                }
            });
        });
        System {
            d,
            n,
            blk: k * d,
            full,
            mats,
            detuning0: grid.frequencies[0] - grid.omega0,
            omega0: grid.omega0,
            spacing: grid.delta_omega,
        }
    }

    fn rhs(&self, t: f64, state: &[C64], out: &mut [C64]) {
        let d = self.d;
        let blk = self.blk;
        let per = self.mats.len() / self.n;
        let beta = &state[..d];
        let fields = &state[d..];
        let (dbeta, dfields) = out.split_at_mut(d);
        let step = C64::cis(self.spacing * t);
        let partials: Vec<Vec<C64>> = dfields
            .par_chunks_mut(CHUNK * blk)
            .enumerate()
            .map(|(c, dchunk)| {
                let n0 = c * CHUNK;
                let det = self.detuning0 + n0 as f64 * self.spacing;
                let mut ph_r = C64::cis(det * t);
                let mut ph_c = C64::cis((det + 2.0 * self.omega0) * t);
                let mut acc = vec![C64::new(0.0, 0.0); d];
                for (j, dblk) in dchunk.chunks_mut(blk).enumerate() {
                    let shell = n0 + j;
                    let f = &fields[shell * blk..(shell + 1) * blk];
                    let m = &self.mats[shell * per..(shell + 1) * per];
                    for a in 0..d {
                        dblk[a] = ph_r * beta[a];
                    }
                    matvec_sub(&m[..d * d], &f[..d], ph_r.conj(), &mut acc);
                    if self.full {
                        for a in 0..d {
                            dblk[d + a] = ph_c * beta[a];
                        }
                        matvec_sub(&m[d * d..], &f[d..], ph_c.conj(), &mut acc);
                    }
                    ph_r *= step;
                    ph_c *= step;
                }
                acc
            })
            .collect();
        dbeta.fill(C64::new(0.0, 0.0));
        for p in partials {
            for (o, v) in dbeta.iter_mut().zip(p) {
                *o += v;
            }
        }
    }

    /// (photon, two-excitation) populations: sums of y^dagger S y and
    /// z^dagger T z.
    fn field_populations(&self, state: &[C64]) -> (f64, f64) {
        let d = self.d;
        let blk = self.blk;
        let per = self.mats.len() / self.n;
        let fields = &state[d..];
        let parts: Vec<(f64, f64)> = fields
            .par_chunks(CHUNK * blk)
            .enumerate()
            .map(|(c, chunk)| {
                let mut p = 0.0;
                let mut q = 0.0;
                for (j, f) in chunk.chunks(blk).enumerate() {
                    let shell = c * CHUNK + j;
                    let m = &self.mats[shell * per..(shell + 1) * per];
                    p += quad_form(&m[..d * d], &f[..d]);
                    if self.full {
                        q += quad_form(&m[d * d..], &f[d..]);
                    }
                }
                (p, q)
            })
            .collect();
        parts.iter().fold((0.0, 0.0), |(a, b), (p, q)| (a + p, b + q))
    }

    fn split_fields(&self, fields: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let d = self.d;
        let mut y = Vec::with_capacity(self.n * d);
        let mut z = Vec::new();
        for f in fields.chunks(self.blk) {
            y.extend_from_slice(&f[..d]);
            if self.full {
                z.extend_from_slice(&f[d..]);
            }
        }
        (y, z)
    }
}

/// acc -= phase * (M v), M row-major d x d.
fn matvec_sub(m: &[C64], v: &[C64], phase: C64, acc: &mut [C64]) {
    let d = v.len();
    for (a, row) in m.chunks(d).enumerate() {
        let s: C64 = row.iter().zip(v).map(|(x, y)| x * y).sum();
        acc[a] -= phase * s;
    }
}

fn quad_form(m: &[C64], v: &[C64]) -> f64 {
    let d = v.len();
    m.chunks(d)
        .zip(v)
        .map(|(row, va)| (va.conj() * row.iter().zip(v).map(|(x, y)| x * y).sum::<C64>()).re)
        .sum()
}

/// Least-squares rate and shift with their fit residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateShiftFit {
    /// Minus the slope of ln(population).
    pub rate: f64,
    /// Minus the slope of the unwrapped phase of the probe amplitude.
    pub shift: f64,
    /// RMS residuals of the two linear fits.
    pub rate_residual: f64,
    pub shift_residual: f64,
    pub points: usize,
}

/// Fits exp(-rate t) to the excited population and exp(-i shift t) to the
/// probe amplitude `probe^dagger beta(t)` over samples with t in `window`.
pub fn extract_rate_and_shift(
    traj: &TrajectoryResult,
    window: [f64; 2],
    probe: &DVector<C64>,
) -> Result<RateShiftFit> {
    let [t1, t2] = window;
    if !(t1 < t2) {
        return Err(Error::Fit(format!("empty window [{t1}, {t2}]")));
    }
    let first = traj.times.first().copied().unwrap_or(f64::NAN);
    let last = traj.times.last().copied().unwrap_or(f64::NAN);
    if t1 < first || t2 > last {
        return Err(Error::Fit(format!(
            "window [{t1}, {t2}] lies outside the trajectory [{first}, {last}]"
        )));
    }
    let idx: Vec<usize> = (0..traj.times.len())
        .filter(|&i| traj.times[i] >= t1 && traj.times[i] <= t2)
        .collect();
    if idx.len() < 3 {
        return Err(Error::Fit("fewer than three samples in the window".into()));
    }
    if probe.len() != traj.amplitudes[0].len() {
        return Err(Error::Fit("probe vector has the wrong dimension".into()));
    }
    let pops: Vec<f64> = idx.iter().map(|&i| traj.excited_population[i]).collect();
    if pops.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::Fit("population vanishes inside the window".into()));
    }
    if pops.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-9)) {
        return Err(Error::Fit("population is not monotonically decaying in the window".into()));
    }
    let times: Vec<f64> = idx.iter().map(|&i| traj.times[i]).collect();
    let logs: Vec<f64> = pops.iter().map(|p| p.ln()).collect();

    let mut phases = Vec::with_capacity(idx.len());
    let mut prev: Option<f64> = None;
    for &i in &idx {
        let amp = probe.dotc(&traj.amplitudes[i].0);
        if amp.norm() == 0.0 {
            return Err(Error::Fit("probe amplitude vanishes inside the window".into()));
        }
        let mut ph = amp.arg();
        if let Some(p) = prev {
            ph += 2.0 * PI * ((p - ph) / (2.0 * PI)).round();
        }
        phases.push(ph);
        prev = Some(ph);
    }
    let (slope_r, res_r) = linear_fit(&times, &logs);
    let (slope_s, res_s) = linear_fit(&times, &phases);
    Ok(RateShiftFit {
        rate: -slope_r,
        shift: -slope_s,
        rate_residual: res_r,
        shift_residual: res_s,
        points: idx.len(),
    })
}

/// Slope and RMS residual of the least-squares line through (x, y).
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (my + slope * (a - mx));
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, rms)
}
