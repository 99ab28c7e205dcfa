use std::fs;
use std::path::Path;

use dipolar_core::{make_ensemble, AmplitudeVector, Ensemble, LengthUnit, Zeeman};
use nalgebra::{DVector, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomEntry {
    pub position: [f64; 3],
}

/// On-disk ensemble description. Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleFile {
    pub omega0_over_gamma: f64,
    pub length_unit: LengthUnit,
    pub atoms: Vec<AtomEntry>,
}

impl EnsembleFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CliError::Schema {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn ensemble(&self) -> Result<Ensemble, CliError> {
        let pos: Vec<Vector3<f64>> = self.atoms.iter().map(|a| Vector3::from(a.position)).collect();
        Ok(make_ensemble(&pos, self.omega0_over_gamma, self.length_unit)?)
    }
}

fn zeeman(s: &str) -> Result<Zeeman, CliError> {
    let m: i32 = s
        .trim()
        .trim_start_matches('+')
        .parse()
        .map_err(|_| CliError::Usage(format!("bad Zeeman index '{s}'")))?;
    Ok(Zeeman::from_m(m)?)
}

fn number(s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("bad number '{s}' in initial state")))
}

/// Parses `single:l,eta`, `symmetric:eta`, `alternating:eta`, or a comma
/// list of channel weights, each `re` or `re:im`. The result is normalized.
pub fn initial_state(spec: &str, ens: &Ensemble) -> Result<AmplitudeVector, CliError> {
    let bad = || CliError::Usage(format!("invalid initial state '{spec}'"));
    let state = if let Some(rest) = spec.strip_prefix("single:") {
        let (l, eta) = rest.split_once(',').ok_or_else(bad)?;
        let l: usize = l.trim().parse().map_err(|_| bad())?;
        if l >= ens.n_atoms() {
            return Err(CliError::Usage(format!(
                "atom index {l} out of range for {} atoms",
                ens.n_atoms()
            )));
        }
        AmplitudeVector::single(ens, ens.channel(l, zeeman(eta)?.m())?)
    } else if let Some(eta) = spec.strip_prefix("symmetric:") {
        AmplitudeVector::symmetric(ens, zeeman(eta)?)
    } else if let Some(eta) = spec.strip_prefix("alternating:") {
        AmplitudeVector::alternating(ens, zeeman(eta)?)
    } else if spec.chars().next().is_some_and(char::is_alphabetic) {
        return Err(bad());
    } else {
        let entries: Vec<Complex64> = spec
            .split(',')
            .map(|w| match w.split_once(':') {
                Some((re, im)) => Ok(Complex64::new(number(re)?, number(im)?)),
                None => Ok(Complex64::new(number(w)?, 0.0)),
            })
            .collect::<Result<_, CliError>>()?;
        if entries.len() != ens.n_channels() {
            return Err(CliError::Usage(format!(
                "initial state has {} weights, ensemble has {} channels",
                entries.len(),
                ens.n_channels()
            )));
        }
        AmplitudeVector(DVector::from_vec(entries))
    };
    Ok(state.normalized()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> Ensemble {
        make_ensemble(&[Vector3::zeros(), Vector3::x()], 1000.0, LengthUnit::InverseK0).unwrap()
    }

    #[test]
    fn presets() {
        let e = pair();
        let s = initial_state("single:1,-1", &e).unwrap();
        assert_eq!(s.0[3], Complex64::new(1.0, 0.0));
        let s = initial_state("symmetric:0", &e).unwrap();
        assert!((s.0[1].re - s.0[4].re).abs() < 1e-15);
        let s = initial_state("alternating:+1", &e).unwrap();
        assert!((s.0[2].re + s.0[5].re).abs() < 1e-15);
    }

    #[test]
    fn weights_are_normalized() {
        let e = pair();
        let s = initial_state("1,0,0,0:1,0,0", &e).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
        assert!((s.0[3].im - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn invalid_presets() {
        let e = pair();
        for bad in ["single:2,0", "single:0,2", "symmetric:x", "bogus:1", "1,2", "0,0,0,0,0,0"] {
            assert!(initial_state(bad, &e).is_err(), "{bad}");
        }
    }

    #[test]
    fn strict_schema() {
        let ok = r#"{"omega0_over_gamma": 1000, "length_unit": "wavelength", "atoms": [{"position": [0,0,0]}]}"#;
        let f: EnsembleFile = serde_json::from_str(ok).unwrap();
        assert_eq!(f.length_unit, LengthUnit::Wavelength);
        let extra = r#"{"omega0_over_gamma": 1000, "length_unit": "inverse_k0", "atoms": [], "gamma": 1}"#;
        assert!(serde_json::from_str::<EnsembleFile>(extra).is_err());
        let typo = r#"{"omega0_over_gamma": 1000, "length_unit": "inverse_k0", "atoms": [{"postion": [0,0,0]}]}"#;
        assert!(serde_json::from_str::<EnsembleFile>(typo).is_err());
    }
}
