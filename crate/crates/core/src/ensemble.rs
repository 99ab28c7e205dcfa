//! Atoms, unit conventions and channel bookkeeping.
//!
//! Units throughout the crate: hbar = c = 1, the single-atom decay rate is the
//! unit of rate (gamma = 1), and lengths are stored as k0 * r.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DVector, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transition frequency used when none is given, in units of gamma.
pub const DEFAULT_OMEGA0: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthUnit {
    /// Positions already given as k0 * r.
    InverseK0,
    /// Positions in units of the transition wavelength.
    Wavelength,
}

impl LengthUnit {
    /// Factor converting a length in this unit to k0 * r.
    pub fn to_inverse_k0(self) -> f64 {
        match self {
            LengthUnit::InverseK0 => 1.0,
            LengthUnit::Wavelength => 2.0 * PI,
        }
    }
}

/// Excited Zeeman sublevel m = -1, 0, +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Zeeman {
    Minus,
    Zero,
    Plus,
}

impl Zeeman {
    pub const ALL: [Zeeman; 3] = [Zeeman::Minus, Zeeman::Zero, Zeeman::Plus];

    pub fn from_m(m: i32) -> Result<Self> {
        match m {
            -1 => Ok(Zeeman::Minus),
            0 => Ok(Zeeman::Zero),
            1 => Ok(Zeeman::Plus),
            _ => Err(Error::validation(format!(
                "Zeeman index must be -1, 0 or +1, got {m}"
            ))),
        }
    }

    pub fn m(self) -> i32 {
        self.index() as i32 - 1
    }

    /// Position inside a per-atom block of three channels.
    pub fn index(self) -> usize {
        match self {
            Zeeman::Minus => 0,
            Zeeman::Zero => 1,
            Zeeman::Plus => 2,
        }
    }
}

impl fmt::Display for Zeeman {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.m())
    }
}

/// An (atom, Zeeman) pair flattened atom-major: `flat = 3 * atom + m + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChannelIndex {
    pub atom: usize,
    pub zeeman: Zeeman,
}

impl ChannelIndex {
    pub fn flat(self) -> usize {
        3 * self.atom + self.zeeman.index()
    }

    pub fn from_flat(flat: usize, n_atoms: usize) -> Result<Self> {
        if flat >= 3 * n_atoms {
            return Err(Error::validation(format!(
                "channel {flat} out of range for {n_atoms} atoms"
            )));
        }
        Ok(ChannelIndex {
            atom: flat / 3,
            zeeman: Zeeman::ALL[flat % 3],
        })
    }

    /// Column label used in CSV headers, e.g. `atom0_m-1`.
    pub fn label(self) -> String {
        format!("atom{}_m{}", self.atom, self.zeeman.m())
    }
}

/// N atoms at rest plus the transition parameters. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    positions: Vec<Vector3<f64>>,
    omega0: f64,
}

impl Ensemble {
    /// Validates and stores positions in k0 * r units.
    pub fn new(positions: &[Vector3<f64>], omega0: f64, unit: LengthUnit) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::validation("ensemble needs at least one atom"));
        }
        if !omega0.is_finite() || omega0 <= 0.0 {
            return Err(Error::validation(format!(
                "omega0 must be positive and finite, got {omega0}"
            )));
        }
        if let Some(i) = positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::validation(format!("position of atom {i} is not finite")));
        }
        let scale = unit.to_inverse_k0();
        let positions: Vec<_> = positions.iter().map(|p| p * scale).collect();
        for l in 0..positions.len() {
            for j in l + 1..positions.len() {
                if (positions[l] - positions[j]).norm() == 0.0 {
                    return Err(Error::DegenerateGeometry { first: l, second: j });
                }
            }
        }
        Ok(Ensemble { positions, omega0 })
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    pub fn n_channels(&self) -> usize {
        3 * self.positions.len()
    }

    /// Positions as k0 * r.
    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    /// Positions converted back to `unit`.
    pub fn positions_in(&self, unit: LengthUnit) -> Vec<Vector3<f64>> {
        let scale = unit.to_inverse_k0();
        self.positions.iter().map(|p| p / scale).collect()
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    /// Single-atom decay rate; the unit of rate.
    pub fn gamma(&self) -> f64 {
        1.0
    }

    /// k0 * (r_l - r_j).
    pub fn separation(&self, l: usize, j: usize) -> Vector3<f64> {
        self.positions[l] - self.positions[j]
    }

    pub fn channel(&self, atom: usize, zeeman: i32) -> Result<ChannelIndex> {
        if atom >= self.n_atoms() {
            return Err(Error::validation(format!(
                "atom {atom} out of range for {} atoms",
                self.n_atoms()
            )));
        }
        Ok(ChannelIndex {
            atom,
            zeeman: Zeeman::from_m(zeeman)?,
        })
    }

    pub fn channels(&self) -> impl Iterator<Item = ChannelIndex> + '_ {
        (0..self.n_channels()).map(|a| ChannelIndex {
            atom: a / 3,
            zeeman: Zeeman::ALL[a % 3],
        })
    }

    /// Largest pairwise separation k0 * |r_l - r_j| (0 for one atom).
    pub fn max_separation(&self) -> f64 {
        let n = self.n_atoms();
        let mut best: f64 = 0.0;
        for l in 0..n {
            for j in l + 1..n {
                best = best.max(self.separation(l, j).norm());
            }
        }
        best
    }

    /// A copy with every position mapped through `f`.
    pub fn transformed(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Result<Self> {
        let positions: Vec<_> = self.positions.iter().map(f).collect();
        Ensemble::new(&positions, self.omega0, LengthUnit::InverseK0)
    }
}

/// Convenience wrapper around [`Ensemble::new`].
pub fn make_ensemble(
    positions: &[Vector3<f64>],
    omega0: f64,
    unit: LengthUnit,
) -> Result<Ensemble> {
    Ensemble::new(positions, omega0, unit)
}

/// Single-excitation amplitudes beta_l^eta, one per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeVector(pub DVector<Complex64>);

impl AmplitudeVector {
    pub fn zeros(n_channels: usize) -> Self {
        AmplitudeVector(DVector::zeros(n_channels))
    }

    /// All amplitude on a single channel.
    pub fn single(ensemble: &Ensemble, channel: ChannelIndex) -> Self {
        let mut v = DVector::zeros(ensemble.n_channels());
        v[channel.flat()] = Complex64::new(1.0, 0.0);
        AmplitudeVector(v)
    }

    /// Equal-phase superposition of one Zeeman channel over all atoms.
    pub fn symmetric(ensemble: &Ensemble, zeeman: Zeeman) -> Self {
        Self::with_signs(ensemble, zeeman, |_| 1.0)
    }

    /// Alternating-sign superposition of one Zeeman channel (for two atoms,
    /// the antisymmetric state).
    pub fn alternating(ensemble: &Ensemble, zeeman: Zeeman) -> Self {
        Self::with_signs(ensemble, zeeman, |l| if l % 2 == 0 { 1.0 } else { -1.0 })
    }

    fn with_signs(ensemble: &Ensemble, zeeman: Zeeman, sign: impl Fn(usize) -> f64) -> Self {
        let n = ensemble.n_atoms();
        let amp = 1.0 / (n as f64).sqrt();
        let mut v = DVector::zeros(ensemble.n_channels());
        for l in 0..n {
            v[3 * l + zeeman.index()] = Complex64::new(sign(l) * amp, 0.0);
        }
        AmplitudeVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::validation("cannot normalize a zero amplitude vector"));
        }
        Ok(AmplitudeVector(&self.0 / Complex64::new(n, 0.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn single_atom() {
        let e = make_ensemble(&[v(0.0, 0.0, 0.0)], 100.0, LengthUnit::InverseK0).unwrap();
        assert_eq!(e.n_atoms(), 1);
        assert_eq!(e.gamma(), 1.0);
    }

    #[test]
    fn wavelength_units_scale_by_two_pi() {
        let e = make_ensemble(
            &[v(0.0, 0.0, 0.0), v(0.5, 0.0, 0.0)],
            100.0,
            LengthUnit::Wavelength,
        )
        .unwrap();
        assert_relative_eq!(e.positions()[1].x, PI, max_relative = 1e-15);
    }

    #[test]
    fn duplicate_positions_rejected() {
        let err = make_ensemble(&[v(0.0, 0.0, 0.0), v(0.0, 0.0, 0.0)], 100.0, LengthUnit::InverseK0)
            .unwrap_err();
        assert_eq!(err, Error::DegenerateGeometry { first: 0, second: 1 });
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(matches!(
            make_ensemble(&[v(f64::NAN, 0.0, 0.0)], 100.0, LengthUnit::InverseK0),
            Err(Error::Validation(_))
        ));
        assert!(make_ensemble(&[v(0.0, 0.0, 0.0)], 0.0, LengthUnit::InverseK0).is_err());
        assert!(make_ensemble(&[], 1.0, LengthUnit::InverseK0).is_err());
    }

    #[test]
    fn channel_examples() {
        let pts: Vec<_> = (0..3).map(|i| v(i as f64, 0.0, 0.0)).collect();
        let e = make_ensemble(&pts, 100.0, LengthUnit::InverseK0).unwrap();
        assert_eq!(e.channel(0, -1).unwrap().flat(), 0);
        assert_eq!(e.channel(2, 1).unwrap().flat(), 8);
        assert_eq!(e.channel(1, 0).unwrap().flat(), 4);
        assert!(e.channel(3, 0).is_err());
        assert!(e.channel(0, 2).is_err());
        assert_eq!(e.channel(2, -1).unwrap().label(), "atom2_m-1");
    }

    proptest! {
        #[test]
        fn channel_flat_is_bijective(n in 1usize..20, flat in 0usize..60) {
            prop_assume!(flat < 3 * n);
            let c = ChannelIndex::from_flat(flat, n).unwrap();
            prop_assert_eq!(c.flat(), flat);
            prop_assert!(c.atom < n);
        }

        #[test]
        fn wavelength_round_trip(x in -50.0f64..50.0, y in -50.0f64..50.0, z in -50.0f64..50.0) {
            prop_assume!(x != 0.0 || y != 0.0 || z != 0.0);
            let e = make_ensemble(&[v(0.0, 0.0, 0.0), v(x, y, z)], 10.0, LengthUnit::Wavelength).unwrap();
            let back = e.positions_in(LengthUnit::Wavelength)[1];
            for (a, b) in back.iter().zip([x, y, z]) {
                prop_assert!((a - b).abs() <= 1e-14 * b.abs().max(1e-300));
            }
        }
    }
}
