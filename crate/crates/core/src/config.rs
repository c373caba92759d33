//! TOML experiment configuration: schema, defaults, validation, rendering.

use serde::{Deserialize, Serialize};

use crate::maps::{AffineMap, LipschitzMap, PiecewiseLinear1D, Similarity};
use crate::measure::{Atom, GeneratingMeasure};
use crate::presets::{parse_preset, PresetId};
use crate::{Error, Result};

/// Which pipeline a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    /// Contraction rate, with certified truncation error where available.
    Chi,
    /// Lipschitz moments E[ρ^t] over a t grid.
    Moment,
    /// Monte Carlo Lyapunov exponent.
    Lyapunov,
    /// Backward-iteration sample batch, written as CSV.
    Sample,
    /// Empirical tail curve plus exponent fit.
    Tail,
    /// Large-deviation frequencies plus rate fit.
    Ldp,
    /// Cramér rate function over an x grid.
    Rate,
    /// Smoothed differential entropy plus the annulus bound.
    Entropy,
    /// Analytic lower-bound tail exponent.
    Lowerbound,
    /// Bump-observable weak-convergence diagnostic.
    Diagnose,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Chi => "chi",
            Self::Moment => "moment",
            Self::Lyapunov => "lyapunov",
            Self::Sample => "sample",
            Self::Tail => "tail",
            Self::Ldp => "ldp",
            Self::Rate => "rate",
            Self::Entropy => "entropy",
            Self::Lowerbound => "lowerbound",
            Self::Diagnose => "diagnose",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        toml::from_str::<KindHolder>(&format!("kind = \"{s}\""))
            .map(|k| k.kind)
            .map_err(|_| Error::Config(format!("unknown experiment kind '{s}'")))
    }
}

#[derive(Deserialize)]
struct KindHolder {
    kind: ExperimentKind,
}

/// Preset selector with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetSpec {
    pub name: String,
    /// prime_q parameter (q >= 5).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<u64>,
    /// sequence_example truncation (number of atoms).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_atoms: Option<usize>,
}

/// One map of a custom generating measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase", tag = "kind")]
pub enum MapDescriptor {
    /// Scalar affine map `a x + b`.
    Scalar { a: f64, b: f64, weight: f64 },
    /// General affine map; `matrix` in row-major rows.
    Affine { matrix: Vec<Vec<f64>>, translation: Vec<f64>, weight: f64 },
    /// Similarity `scale * rotation * x + translation`.
    Similarity { scale: f64, rotation: Vec<Vec<f64>>, translation: Vec<f64>, weight: f64 },
    /// Continuous piecewise-linear map on the line.
    Piecewise {
        knots: Vec<f64>,
        values: Vec<f64>,
        left_slope: f64,
        right_slope: f64,
        weight: f64,
    },
}

impl MapDescriptor {
    pub fn weight(&self) -> f64 {
        match *self {
            Self::Scalar { weight, .. }
            | Self::Affine { weight, .. }
            | Self::Similarity { weight, .. }
            | Self::Piecewise { weight, .. } => weight,
        }
    }

    pub fn build(&self) -> Result<Atom> {
        let map: LipschitzMap = match self {
            Self::Scalar { a, b, .. } => AffineMap::scalar(*a, *b)?.into(),
            Self::Affine { matrix, translation, .. } => {
                AffineMap::new(rows_to_matrix(matrix)?, nalgebra::DVector::from_vec(translation.clone()))?
                    .into()
            }
            Self::Similarity { scale, rotation, translation, .. } => Similarity::new(
                *scale,
                rows_to_matrix(rotation)?,
                nalgebra::DVector::from_vec(translation.clone()),
            )?
            .into(),
            Self::Piecewise { knots, values, left_slope, right_slope, .. } => {
                PiecewiseLinear1D::new(knots.clone(), values.clone(), *left_slope, *right_slope)?
                    .into()
            }
        };
        Ok(Atom { map, weight: self.weight() })
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<nalgebra::DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config("matrix must be square and non-empty".into()));
    }
    Ok(nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn default_tol() -> f64 {
    1e-6
}
fn default_count() -> usize {
    100_000
}
fn default_trials() -> usize {
    10_000
}
fn default_n() -> usize {
    1000
}
fn default_n_grid() -> Vec<usize> {
    vec![50, 100, 200, 400]
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_sigma() -> f64 {
    1.0
}
fn default_scale() -> f64 {
    2.0
}
fn default_t_max() -> f64 {
    200.0
}
fn default_t_grid() -> Vec<f64> {
    vec![-0.5, 0.1, 0.5, 1.0]
}
fn default_min_exceed() -> u64 {
    crate::tails::DEFAULT_MIN_EXCEED
}
fn default_eval_count() -> usize {
    100_000
}
fn default_start_percentile() -> f64 {
    0.5
}
fn default_bump_radius() -> f64 {
    1.0
}

/// A full experiment description. Unknown keys are rejected. Defaults:
/// tol 1e-6, count 1e5, trials 1e4, n 1000, n_grid [50,100,200,400],
/// epsilon 0.1, sigma 1, scale (annulus L) 2, t_max 200,
/// t_grid [-0.5, 0.1, 0.5, 1], min_exceed 30, eval_count 1e5,
/// start_percentile 0.5 (median radius grid origin), bump_radius 1, seed 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// Exactly one of `preset` and `maps` must be present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<PresetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maps: Option<Vec<MapDescriptor>>,

    /// Backward-sampling residual tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Number of stationary draws (sample, tail, entropy, lowerbound input).
    #[serde(default = "default_count")]
    pub count: usize,
    /// Monte Carlo repetitions (lyapunov, ldp, diagnose).
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Word length for the Lyapunov estimate.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Word-length grid for ldp and diagnose.
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    /// Large-deviation threshold.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Gaussian smoothing bandwidth for entropy.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Geometric annulus scale L for the entropy bound.
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Legendre supremum search range for rate functions.
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// Exponents for the moment experiment.
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    /// x grid for the rate experiment; defaults to a grid around chi.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_grid: Option<Vec<f64>>,
    /// Exceedance floor for the tail fit.
    #[serde(default = "default_min_exceed")]
    pub min_exceed: u64,
    /// Evaluation points for the entropy estimator.
    #[serde(default = "default_eval_count")]
    pub eval_count: usize,
    /// Explicit tail radius grid; omitted means the automatic geometric grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    /// Distance percentile seeding the automatic radius grid.
    #[serde(default = "default_start_percentile")]
    pub start_percentile: f64,
    /// Tail/entropy/diagnose center; defaults to the origin (tail prefers
    /// the expanding atom's fixed point when one exists).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    /// Sampling start point; defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    /// Backward-iteration step ceiling; omitted means the chi-derived default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_n: Option<usize>,
    /// Outermost annulus index; omitted means automatic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_max: Option<usize>,
    /// Bump test-function radius for diagnose.
    #[serde(default = "default_bump_radius")]
    pub bump_radius: f64,
    /// Large-deviation event variant: "factorwise" (default) or "product".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ldp_variant: Option<String>,
}

impl ExperimentConfig {
    /// A config with defaults for every knob.
    pub fn new(experiment: ExperimentKind, preset: PresetSpec) -> Self {
        let doc = format!(
            "experiment = \"{}\"\n[preset]\nname = \"{}\"\n{}{}",
            experiment.name(),
            preset.name,
            preset.q.map_or(String::new(), |q| format!("q = {q}\n")),
            preset.n_atoms.map_or(String::new(), |n| format!("n_atoms = {n}\n")),
        );
        parse_config(&doc).expect("default config is valid")
    }

    /// The atoms this config names, via the preset registry or the custom
    /// map descriptors.
    pub fn build_measure(&self) -> Result<GeneratingMeasure> {
        match (&self.preset, &self.maps) {
            (Some(_), None) => crate::presets::preset(&self.preset_id()?),
            (None, Some(maps)) => {
                let atoms: Vec<Atom> = maps.iter().map(|m| m.build()).collect::<Result<_>>()?;
                GeneratingMeasure::new(atoms)
            }
            _ => unreachable!("validated: exactly one of preset/maps"),
        }
    }

    pub fn preset_id(&self) -> Result<PresetId> {
        let p = self
            .preset
            .as_ref()
            .ok_or_else(|| Error::Config("no preset in config".into()))?;
        parse_preset(&p.name, p.q, p.n_atoms)
    }

    pub fn ldp_variant(&self) -> Result<crate::tails::LdpVariant> {
        match self.ldp_variant.as_deref() {
            None | Some("factorwise") => Ok(crate::tails::LdpVariant::Factorwise),
            Some("product") => Ok(crate::tails::LdpVariant::Product),
            Some(other) => Err(Error::Config(format!("unknown ldp_variant '{other}'"))),
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        match (&self.preset, &self.maps) {
            (Some(_), Some(_)) => return fail("give either 'preset' or 'maps', not both".into()),
            (None, None) => return fail("one of 'preset' or 'maps' is required".into()),
            _ => {}
        }
        if let Some(p) = &self.preset {
            parse_preset(&p.name, p.q, p.n_atoms)?;
        }
        if let Some(maps) = &self.maps {
            if maps.is_empty() {
                return fail("'maps' must not be empty".into());
            }
            let sum: f64 = maps.iter().map(|m| m.weight()).sum();
            if (sum - 1.0).abs() > 1e-12 {
                return fail(format!("weights sum != 1 (got {sum})"));
            }
        }
        if !(self.tol > 0.0 && self.tol <= crate::sampler::TRUNCATION_CEILING) {
            return fail(format!("'tol' must be in (0, 1e-3], got {}", self.tol));
        }
        if !(self.epsilon > 0.0) {
            return fail("'epsilon' must be positive".into());
        }
        if !(self.sigma > 0.0) {
            return fail("'sigma' must be positive".into());
        }
        if !(self.scale > 1.0) {
            return fail(format!("'scale' must exceed 1, got {}", self.scale));
        }
        if !(self.t_max > 0.0) {
            return fail("'t_max' must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.start_percentile) {
            return fail("'start_percentile' must be in [0, 1]".into());
        }
        if !(self.bump_radius > 0.0) {
            return fail("'bump_radius' must be positive".into());
        }
        if self.count == 0 || self.trials == 0 || self.n == 0 || self.eval_count == 0 {
            return fail("'count', 'trials', 'n' and 'eval_count' must be positive".into());
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return fail("'n_grid' must be non-empty and strictly increasing".into());
        }
        if let Some(r) = &self.radii {
            if r.is_empty() || r[0] <= 0.0 || r.windows(2).any(|w| w[0] >= w[1]) {
                return fail("'radii' must be positive and strictly increasing".into());
            }
        }
        self.ldp_variant()?;
        Ok(())
    }
}

/// Parses and validates a TOML experiment document; unknown keys and
/// out-of-range knobs are errors.
pub fn parse_config(document: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig =
        toml::from_str(document).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Renders a config back to TOML; `parse_config(render(c)) == c`.
pub fn render(config: &ExperimentConfig) -> String {
    toml::to_string_pretty(config).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "experiment = \"chi\"\n[preset]\nname = \"prime_q\"\nq = 5\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.experiment, ExperimentKind::Chi);
        assert_eq!(c.seed, 0);
        assert_eq!(c.tol, 1e-6);
        assert_eq!(c.count, 100_000);
        assert_eq!(c.n_grid, vec![50, 100, 200, 400]);
        assert_eq!(c.min_exceed, 30);
        assert!(c.radii.is_none());
        let mu = c.build_measure().unwrap();
        assert_eq!(mu.atoms().len(), 2);
    }

    #[test]
    fn unknown_key_rejected() {
        let doc = format!("{MINIMAL}frobnicate = 3\n");
        let err = parse_config(&doc).unwrap_err();
        assert!(err.to_string().contains("frobnicate"), "{err}");
    }

    #[test]
    fn bad_weights_rejected() {
        let doc = "\
experiment = \"chi\"
[[maps]]
kind = \"scalar\"
a = 0.5
b = 1.0
weight = 0.5
[[maps]]
kind = \"scalar\"
a = 0.5
b = -1.0
weight = 0.6
";
        let err = parse_config(doc).unwrap_err();
        assert!(err.to_string().contains("weights sum != 1"), "{err}");
    }

    #[test]
    fn preset_and_maps_mutually_exclusive() {
        let doc = format!(
            "{MINIMAL}[[maps]]\nkind = \"scalar\"\na = 0.5\nb = 0.0\nweight = 1.0\n"
        );
        assert!(parse_config(&doc).is_err());
        assert!(parse_config("experiment = \"chi\"\n").is_err());
    }

    #[test]
    fn custom_maps_build() {
        let doc = "\
experiment = \"sample\"
seed = 7
tol = 1e-8
[[maps]]
kind = \"similarity\"
scale = 0.5
rotation = [[0.0, -1.0], [1.0, 0.0]]
translation = [1.0, 0.0]
weight = 0.25
[[maps]]
kind = \"affine\"
matrix = [[0.5, 0.1], [0.0, 0.5]]
translation = [0.0, 1.0]
weight = 0.75
";
        let c = parse_config(doc).unwrap();
        let mu = c.build_measure().unwrap();
        assert_eq!(mu.dim(), 2);
        assert!(mu.contraction_rate().unwrap() < 0.0);
    }

    #[test]
    fn piecewise_map_builds() {
        let doc = "\
experiment = \"chi\"
[[maps]]
kind = \"piecewise\"
knots = [0.0, 1.0]
values = [0.0, 0.5]
left_slope = 0.0
right_slope = 0.0
weight = 1.0
";
        let mu = parse_config(doc).unwrap().build_measure().unwrap();
        assert_eq!(mu.dim(), 1);
    }

    #[test]
    fn out_of_range_knobs_rejected() {
        for bad in [
            "tol = 0.5",
            "tol = -1e-6",
            "scale = 1.0",
            "epsilon = 0.0",
            "n_grid = [10, 10]",
            "radii = [2.0, 1.0]",
            "start_percentile = 1.5",
            "ldp_variant = \"sideways\"",
        ] {
            let doc = format!("{MINIMAL}{bad}\n");
            assert!(parse_config(&doc).is_err(), "accepted {bad}");
        }
    }

    #[test]
    fn parse_error_carries_position() {
        let err = parse_config("experiment = \"chi\n").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn round_trip_identity() {
        let docs = [
            MINIMAL.to_string(),
            "experiment = \"tail\"\ntol = 1e-9\nradii = [1.0, 2.0, 4.0]\ncenter = [0.5]\nseed = 99\n[preset]\nname = \"prime_q\"\nq = 7\n"
                .to_string(),
            "experiment = \"ldp\"\nldp_variant = \"product\"\nepsilon = 0.25\n[preset]\nname = \"bernoulli\"\n"
                .to_string(),
        ];
        for doc in docs {
            let c = parse_config(&doc).unwrap();
            let c2 = parse_config(&render(&c)).unwrap();
            assert_eq!(c, c2);
        }
    }

    #[test]
    fn every_kind_parses() {
        for kind in [
            "chi",
            "moment",
            "lyapunov",
            "sample",
            "tail",
            "ldp",
            "rate",
            "entropy",
            "lowerbound",
            "diagnose",
        ] {
            assert_eq!(ExperimentKind::parse(kind).unwrap().name(), kind);
        }
        assert!(ExperimentKind::parse("frob").is_err());
    }
}
