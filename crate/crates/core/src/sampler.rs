//! Sampling from the stationary measure by backward iteration
//! z_n = γ₁γ₂⋯γₙ x, plus the forward Markov chain for cross-validation.
//!
//! Backward iteration converges pointwise: appending a new map on the inside
//! perturbs the point by at most A_x·Πρ(γᵢ), so the running ρ-product gives a
//! computable stopping rule. The a.s.-eventual decay rate of the Cauchy bound
//! is not observable at run time; we use the heuristic rate λ̄ = e^{χ/2} and
//! account for truncations explicitly.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::Write;

use crate::maps::{LipschitzMap, Point};
use crate::measure::GeneratingMeasure;
use crate::rng::derive_stream;
use crate::{Error, Result};

/// Default ceiling on the fraction of truncated draws a set may carry and
/// still be marked valid.
pub const TRUNCATION_CEILING: f64 = 1e-3;

/// One draw from the stationary measure, with its certification metadata.
#[derive(Debug, Clone)]
pub struct StationaryDraw {
    pub point: Point,
    pub steps_used: usize,
    pub residual_bound: f64,
    pub truncated: bool,
}

/// A batch of draws with provenance.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub draws: Vec<StationaryDraw>,
    pub measure_id: String,
    pub seed: u64,
    pub tolerance: f64,
    pub start_point: Point,
}

impl SampleSet {
    /// Wrap raw points (synthetic data, reference distributions) as a sample
    /// set with zero residuals.
    pub fn from_points(points: Vec<Point>, label: &str) -> Self {
        let dim = points.first().map_or(1, Point::dim);
        SampleSet {
            draws: points
                .into_iter()
                .map(|point| StationaryDraw {
                    point,
                    steps_used: 0,
                    residual_bound: 0.0,
                    truncated: false,
                })
                .collect(),
            measure_id: label.to_string(),
            seed: 0,
            tolerance: 0.0,
            start_point: Point::origin(dim),
        }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.start_point.dim()
    }

    pub fn truncated_fraction(&self) -> f64 {
        if self.draws.is_empty() {
            return 0.0;
        }
        self.draws.iter().filter(|d| d.truncated).count() as f64 / self.draws.len() as f64
    }

    pub fn is_valid(&self) -> bool {
        self.truncated_fraction() <= TRUNCATION_CEILING
    }

    pub fn points(&self) -> impl Iterator<Item = &Point> {
        self.draws.iter().map(|d| &d.point)
    }

    /// First coordinates, the 1D view used by the KS diagnostics.
    pub fn coords_1d(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.point.as_slice()[0]).collect()
    }

    /// CSV: `index, coord_0..coord_{d-1}, steps_used, residual_bound,
    /// truncated`, LF line endings.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let d = self.dim();
        let coords_header: Vec<String> = (0..d).map(|i| format!("coord_{i}")).collect();
        writeln!(w, "index,{},steps_used,residual_bound,truncated", coords_header.join(","))?;
        for (i, draw) in self.draws.iter().enumerate() {
            let coords: Vec<String> = draw.point.as_slice().iter().map(|c| format!("{c}")).collect();
            writeln!(
                w,
                "{i},{},{},{},{}",
                coords.join(","),
                draw.steps_used,
                draw.residual_bound,
                draw.truncated
            )?;
        }
        Ok(())
    }
}

/// A_x = sup over the support of d(x, γx).
pub fn displacement_bound(mu: &GeneratingMeasure, x: &Point) -> Result<f64> {
    let mut sup = 0.0f64;
    for a in mu.atoms() {
        sup = sup.max(a.map.apply(x)?.distance(x));
    }
    Ok(sup)
}

/// Default step cap: generous multiple of the expected tolerance-hitting
/// time `log(1/tol)/|χ|`.
pub fn default_max_n(chi: f64, tol: f64) -> usize {
    ((40.0 * (1.0 / tol).ln() / chi.abs()).ceil() as usize).max(8)
}

/// Shared per-measure state for backward draws.
struct BackwardContext<'a> {
    mu: &'a GeneratingMeasure,
    dist: rand::distr::weighted::WeightedIndex<f64>,
    rhos: Vec<f64>,
    all_linear: bool,
    a_x: f64,
    /// 1/(1 - λ̄) with λ̄ = e^{χ/2}; future-decay factor of the residual.
    future_factor: f64,
}

impl<'a> BackwardContext<'a> {
    fn new(mu: &'a GeneratingMeasure, x: &Point) -> Result<Self> {
        if x.dim() != mu.dim() {
            return Err(Error::DimensionMismatch { expected: mu.dim(), got: x.dim() });
        }
        // χ of the measure actually sampled: the (truncated, renormalized)
        // atom list.
        let total: f64 = mu.atoms().iter().map(|a| a.weight).sum();
        let rhos = mu.atom_rhos()?;
        let chi: f64 = mu
            .atoms()
            .iter()
            .zip(&rhos)
            .map(|(a, &rho)| a.weight / total * rho.ln())
            .sum();
        if chi >= 0.0 {
            return Err(Error::NonContracting(chi));
        }
        let lambda_bar = (chi / 2.0).exp();
        let (dist, _) = mu.atom_sampler()?;
        let all_linear = mu
            .atoms()
            .iter()
            .all(|a| !matches!(a.map, LipschitzMap::Piecewise(_)));
        Ok(Self {
            mu,
            dist,
            rhos,
            all_linear,
            a_x: displacement_bound(mu, x)?,
            future_factor: 1.0 / (1.0 - lambda_bar),
        })
    }

    fn draw(&self, x: &Point, tol: f64, max_n: usize, rng: &mut ChaCha8Rng) -> Result<StationaryDraw> {
        let d = self.mu.dim();
        // Affine words compose into a single (B, c); words containing
        // piecewise atoms are kept as the map sequence and evaluated once at
        // the stopping time.
        let mut word_linear = nalgebra::DMatrix::<f64>::identity(d, d);
        let mut word_shift = nalgebra::DVector::<f64>::zeros(d);
        let mut word_seq: Vec<usize> = Vec::new();

        let mut log_r = 0.0f64;
        let mut steps = 0usize;
        let mut truncated = true;
        let mut residual = f64::INFINITY;
        for n in 1..=max_n {
            let i = self.dist.sample(rng);
            if self.all_linear {
                let (a, b) = self.mu.atoms()[i].map.linear_parts();
                word_shift += &word_linear * b;
                word_linear *= a;
            } else {
                word_seq.push(i);
            }
            log_r += self.rhos[i].ln();
            steps = n;
            residual = log_r.exp() * self.a_x * self.future_factor;
            if residual <= tol {
                truncated = false;
                break;
            }
        }
        let point = if self.all_linear {
            Point::from_vector(&word_linear * x.coords() + &word_shift)
        } else {
            // right-to-left: z_n = γ₁(γ₂(⋯γₙ(x)))
            let mut y = x.clone();
            for &i in word_seq.iter().rev() {
                y = self.mu.atoms()[i].map.apply(&y)?;
            }
            y
        };
        Ok(StationaryDraw { point, steps_used: steps, residual_bound: residual, truncated })
    }
}

/// One backward draw, stopping at the first n with
/// `Πρ(γᵢ) · A_x / (1 - λ̄) <= tol` (λ̄ = e^{χ/2}).
pub fn backward_sample(
    mu: &GeneratingMeasure,
    x: &Point,
    tol: f64,
    max_n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<StationaryDraw> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    BackwardContext::new(mu, x)?.draw(x, tol, max_n, rng)
}

/// `count` independent backward draws; draw i uses the stream derived from
/// `(seed, i)`, so the output is a pure function of the arguments no matter
/// how the draws are scheduled.
pub fn sample_batch(
    mu: &GeneratingMeasure,
    x: &Point,
    tol: f64,
    count: usize,
    max_n: usize,
    seed: u64,
) -> Result<SampleSet> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let ctx = BackwardContext::new(mu, x)?;
    let draws: Result<Vec<StationaryDraw>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_stream(seed, i as u64);
            ctx.draw(x, tol, max_n, &mut rng)
        })
        .collect();
    Ok(SampleSet {
        draws: draws?,
        measure_id: mu.content_hash(),
        seed,
        tolerance: tol,
        start_point: x.clone(),
    })
}

/// Forward chain: returns γₙ∘⋯∘γ₁(x) by successive application. Same
/// marginal law as the backward word of the same length.
pub fn forward_orbit(
    mu: &GeneratingMeasure,
    x: &Point,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Point> {
    let (dist, _) = mu.atom_sampler()?;
    let mut y = x.clone();
    for _ in 0..n {
        let i = dist.sample(rng);
        y = mu.atoms()[i].map.apply(&y)?;
    }
    Ok(y)
}
