//! Named generating measures used throughout the experiments.

use nalgebra::{DMatrix, DVector};

use crate::maps::{AffineMap, PiecewiseLinear1D, Similarity};
use crate::measure::{sequence_slope, Atom, GeneratingMeasure, TailSpec, SEQUENCE_WEIGHT_CONST};
use crate::{Error, Result};

/// Largest admissible truncation for `sequence_example`; beyond this the
/// square-index slopes k^k overflow an f64.
pub const SEQUENCE_MAX_ATOMS: usize = 20_000;

/// Identifier of a named measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetId {
    /// Two similarities `q/(q-1)·x + 1` (weight 1/3) and `q/(q+3)·x - 1`
    /// (weight 2/3); contracting on average for every integer q >= 5.
    PrimeQ(u64),
    /// Point mass on the planar shear [[1,1],[0,1]]: zero Lyapunov exponent
    /// but positive contraction rate.
    ShearMatrix,
    /// Equal weights on `x/2 - 1` and `x/2 + 1`; attractor [-2, 2].
    Bernoulli,
    /// Point mass on `x/2 + 1`; the stationary measure is δ₂.
    SingleContraction,
    /// Equal weights on `x/2 + 1` and `-x`; compactly supported stationary
    /// measure even though the flip is only non-expanding.
    CompactFlip,
    /// Equal weights on `x/2 + 1` and `x + 1`; non-compact support.
    NoncompactTranslation,
    /// First `N` atoms of the countably supported ramp family with weights
    /// `(6/π²) n⁻²`; the unique stationary measure is δ₀ while every moment
    /// `E[ρ^t]`, t > 0, diverges.
    SequenceExample(usize),
}

impl PresetId {
    pub fn name(&self) -> &'static str {
        match self {
            Self::PrimeQ(_) => "prime_q",
            Self::ShearMatrix => "shear_matrix",
            Self::Bernoulli => "bernoulli",
            Self::SingleContraction => "single_contraction",
            Self::CompactFlip => "compact_flip",
            Self::NoncompactTranslation => "noncompact_translation",
            Self::SequenceExample(_) => "sequence_example",
        }
    }
}

fn sim(a: f64, b: f64, weight: f64) -> Result<Atom> {
    Ok(Atom { map: Similarity::scalar(a, b)?.into(), weight })
}

/// Build the measure a preset names.
pub fn preset(id: &PresetId) -> Result<GeneratingMeasure> {
    match *id {
        PresetId::PrimeQ(q) => {
            if q < 5 {
                return Err(Error::InvalidArgument(format!("prime_q requires q >= 5, got {q}")));
            }
            let q = q as f64;
            GeneratingMeasure::new(vec![
                sim(q / (q - 1.0), 1.0, 1.0 / 3.0)?,
                sim(q / (q + 3.0), -1.0, 2.0 / 3.0)?,
            ])
        }
        PresetId::ShearMatrix => {
            let map = AffineMap::new(
                DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
                DVector::zeros(2),
            )?;
            GeneratingMeasure::new(vec![Atom { map: map.into(), weight: 1.0 }])
        }
        PresetId::Bernoulli => {
            GeneratingMeasure::new(vec![sim(0.5, -1.0, 0.5)?, sim(0.5, 1.0, 0.5)?])
        }
        PresetId::SingleContraction => GeneratingMeasure::new(vec![sim(0.5, 1.0, 1.0)?]),
        PresetId::CompactFlip => {
            GeneratingMeasure::new(vec![sim(0.5, 1.0, 0.5)?, sim(-1.0, 0.0, 0.5)?])
        }
        PresetId::NoncompactTranslation => {
            GeneratingMeasure::new(vec![sim(0.5, 1.0, 0.5)?, sim(1.0, 1.0, 0.5)?])
        }
        PresetId::SequenceExample(n_atoms) => {
            if !(10..=SEQUENCE_MAX_ATOMS).contains(&n_atoms) {
                return Err(Error::InvalidArgument(format!(
                    "sequence_example truncation must lie in [10, {SEQUENCE_MAX_ATOMS}], got {n_atoms}"
                )));
            }
            let atoms: Vec<Atom> = (1..=n_atoms as u64)
                .map(|n| {
                    let ramp =
                        PiecewiseLinear1D::new(vec![n as f64], vec![0.0], 0.0, sequence_slope(n))?;
                    Ok(Atom {
                        map: ramp.into(),
                        weight: SEQUENCE_WEIGHT_CONST / (n as f64 * n as f64),
                    })
                })
                .collect::<Result<_>>()?;
            GeneratingMeasure::with_tail(atoms, TailSpec::SquareSequence { truncation: n_atoms })
        }
    }
}

/// Parse a preset from its name and optional parameters (`q` for `prime_q`,
/// `n_atoms` for `sequence_example`).
pub fn parse_preset(name: &str, q: Option<u64>, n_atoms: Option<usize>) -> Result<PresetId> {
    match name {
        "prime_q" => Ok(PresetId::PrimeQ(q.ok_or_else(|| {
            Error::InvalidArgument("preset prime_q requires parameter q".into())
        })?)),
        "shear_matrix" => Ok(PresetId::ShearMatrix),
        "bernoulli" => Ok(PresetId::Bernoulli),
        "single_contraction" => Ok(PresetId::SingleContraction),
        "compact_flip" => Ok(PresetId::CompactFlip),
        "noncompact_translation" => Ok(PresetId::NoncompactTranslation),
        "sequence_example" => Ok(PresetId::SequenceExample(n_atoms.ok_or_else(|| {
            Error::InvalidArgument("preset sequence_example requires parameter n_atoms".into())
        })?)),
        other => Err(Error::UnknownPreset(other.into())),
    }
}

/// True when `q` has a nontrivial factor; the tail experiments are valid for
/// composite q, only the external absolute-continuity citation needs
/// primality, so composite q only triggers a note.
pub fn is_composite(q: u64) -> bool {
    q >= 4 && (2..=q.isqrt()).any(|d| q.is_multiple_of(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::LipschitzMap;

    #[test]
    fn prime5_atoms() {
        let mu = preset(&PresetId::PrimeQ(5)).unwrap();
        let rhos: Vec<f64> =
            mu.atoms().iter().map(|a| a.map.lipschitz_constant().unwrap()).collect();
        assert_eq!(rhos, vec![1.25, 0.625]);
        assert!((mu.atoms()[0].weight - 1.0 / 3.0).abs() < 1e-15);
        assert!((mu.atoms()[1].weight - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn contracting_for_all_q() {
        for q in [5u64, 7, 11, 101] {
            let chi = preset(&PresetId::PrimeQ(q)).unwrap().contraction_rate().unwrap();
            assert!(chi < 0.0, "q={q}: chi={chi}");
        }
    }

    #[test]
    fn flip_and_translation_atoms() {
        let flip = preset(&PresetId::CompactFlip).unwrap();
        assert_eq!(flip.atoms()[1].map.lipschitz_constant().unwrap(), 1.0);
        let tr = preset(&PresetId::NoncompactTranslation).unwrap();
        assert!(tr.atoms()[1].map.fixed_point().is_err());
    }

    #[test]
    fn sequence_atoms_have_ramp_slopes() {
        let mu = preset(&PresetId::SequenceExample(100)).unwrap();
        let rho = |i: usize| mu.atoms()[i].map.lipschitz_constant().unwrap();
        assert_eq!(rho(8), 27.0); // n = 9 = 3², slope 3³
        assert_eq!(rho(2), 1.0 / 3.0); // n = 3, off-square
        assert!(matches!(mu.atoms()[0].map, LipschitzMap::Piecewise(_)));
    }

    #[test]
    fn preset_parameter_validation() {
        assert!(preset(&PresetId::PrimeQ(4)).is_err());
        assert!(preset(&PresetId::SequenceExample(5)).is_err());
        assert!(preset(&PresetId::SequenceExample(10_000_000)).is_err());
        assert!(parse_preset("no_such", None, None).is_err());
        assert!(parse_preset("prime_q", None, None).is_err());
    }

    #[test]
    fn composite_detection() {
        assert!(!is_composite(5));
        assert!(!is_composite(101));
        assert!(is_composite(9));
        assert!(is_composite(100));
    }
}
