//! Differential-entropy estimation for Gaussian-smoothed sample measures
//! and the geometric-annulus upper bound on differential entropy.
//!
//! All entropies are in nats.

use rand::prelude::*;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::maps::Point;
use crate::rng::derive_stream;
use crate::sampler::SampleSet;
use crate::stats::{logsumexp, mean_stderr};
use crate::{Error, Result};

/// Annulus index cap for the automatic choice of `i_max`.
pub const I_MAX_CAP: usize = 64;
/// Leftover mass beyond the outermost annulus at which the automatic
/// `i_max` stops growing.
pub const AUTO_LEFTOVER_TARGET: f64 = 1e-4;
/// Leftover mass above which the annulus bound is flagged unreliable.
pub const LEFTOVER_RELIABLE_LIMIT: f64 = 0.01;

/// `h(x) = -x ln x`, with `h(0) = 0`. The summand of discrete entropy.
pub fn h(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!("h requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        Ok(0.0)
    } else {
        Ok(-x * x.ln())
    }
}

/// Lebesgue volume of the d-ball of radius R, via the recurrence
/// `V_d = (2π/d) V_{d-2}` with `V_1 = 2` and `V_2 = π`.
pub fn ball_volume(d: usize, radius: f64) -> f64 {
    assert!(d >= 1 && radius > 0.0);
    let mut v = if d % 2 == 1 { 2.0 } else { std::f64::consts::PI };
    let mut k = if d % 2 == 1 { 1 } else { 2 };
    while k < d {
        k += 2;
        v *= 2.0 * std::f64::consts::PI / k as f64;
    }
    v * radius.powi(d as i32)
}

/// Empirical mass per geometric annulus around a center.
#[derive(Debug, Clone)]
pub struct AnnulusDecomposition {
    pub scale: f64,
    pub center: Point,
    /// probs[0] is the unit-ball mass (index i = -1); probs[k] for k >= 1
    /// is the mass of the annulus B_{L^{k}} \ B_{L^{k-1}} (index i = k-1).
    pub probs: Vec<f64>,
    /// Lebesgue volumes of the same regions.
    pub volumes: Vec<f64>,
    pub leftover_mass: f64,
}

/// The annulus upper bound on differential entropy and its diagnostics.
#[derive(Debug, Clone)]
pub struct AnnulusBound {
    pub bound: f64,
    /// The same sum without the unit-ball term, for comparison; not an
    /// upper bound when the measure charges the unit ball.
    pub bound_without_unit_ball: f64,
    pub leftover_mass: f64,
    /// False when more than 1% of the mass lies beyond the outermost
    /// annulus; the truncated sum then undercounts the tail.
    pub reliable: bool,
    pub decomposition: AnnulusDecomposition,
}

/// `Σ_{i=-1}^{i_max} h(p̂_i) + p̂_i ln m_i` with p̂ the empirical annulus
/// masses around `center`, geometric scale L, and m the region volumes.
/// The i = -1 term covers the unit ball. `i_max = None` picks the smallest
/// index with leftover mass below 1e-4, capped at 64.
pub fn annulus_bound(
    samples: &SampleSet,
    center: &Point,
    scale: f64,
    i_max: Option<usize>,
) -> Result<AnnulusBound> {
    if !(scale > 1.0) {
        return Err(Error::InvalidArgument(format!("annulus scale must exceed 1, got {scale}")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty sample set".into()));
    }
    let d = samples.dim();
    let total = samples.len() as f64;
    let mut dists: Vec<f64> = samples.points().map(|p| p.distance(center)).collect();
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let count_within = |r: f64| dists.partition_point(|&x| x < r);

    let i_max = match i_max {
        Some(i) => i.min(I_MAX_CAP),
        None => {
            let mut i = 0usize;
            while i < I_MAX_CAP {
                let outside = dists.len() - count_within(scale.powi(i as i32 + 1));
                if (outside as f64) / total < AUTO_LEFTOVER_TARGET {
                    break;
                }
                i += 1;
            }
            i
        }
    };

    let mut probs = Vec::with_capacity(i_max + 2);
    let mut volumes = Vec::with_capacity(i_max + 2);
    let mut prev_count = count_within(1.0);
    probs.push(prev_count as f64 / total);
    volumes.push(ball_volume(d, 1.0));
    for i in 0..=i_max {
        let outer = scale.powi(i as i32 + 1);
        let inner = scale.powi(i as i32);
        let count = count_within(outer);
        probs.push((count - prev_count) as f64 / total);
        volumes.push(ball_volume(d, outer) - ball_volume(d, inner));
        prev_count = count;
    }
    let leftover_mass = (dists.len() - prev_count) as f64 / total;

    let mut bound = 0.0;
    let mut bound_tail = 0.0;
    for (k, (&p, &m)) in probs.iter().zip(&volumes).enumerate() {
        let term = h(p)? + p * m.ln();
        bound += term;
        if k >= 1 {
            bound_tail += term;
        }
    }
    Ok(AnnulusBound {
        bound,
        bound_without_unit_ball: bound_tail,
        leftover_mass,
        reliable: leftover_mass <= LEFTOVER_RELIABLE_LIMIT,
        decomposition: AnnulusDecomposition {
            scale,
            center: center.clone(),
            probs,
            volumes,
            leftover_mass,
        },
    })
}

/// Replaces each sample point by itself plus isotropic Gaussian noise of
/// standard deviation `sigma`, with one derived stream per point.
pub fn smooth_samples(samples: &SampleSet, sigma: f64, seed: u64) -> Result<SampleSet> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    let d = samples.dim();
    let points: Vec<Point> = samples
        .points()
        .enumerate()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, p)| {
            let mut rng = derive_stream(seed, i as u64);
            let coords: Vec<f64> = p
                .as_slice()
                .iter()
                .map(|&c| c + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Point::new(coords)
        })
        .collect::<Result<_>>()?;
    debug_assert!(points.iter().all(|p| p.dim() == d));
    Ok(SampleSet::from_points(points, "smoothed"))
}

/// Monte Carlo estimate of the differential entropy of the sample measure
/// convolved with an isotropic Gaussian of standard deviation `sigma`.
///
/// Draws `eval_count` points `y = z + σξ` with z uniform from the samples,
/// then averages `-ln f̂(y)` where f̂ is the exact mixture density of the
/// smoothed sample measure, evaluated in log-space.
pub fn smoothed_entropy(
    samples: &SampleSet,
    sigma: f64,
    eval_count: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    if samples.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "smoothed_entropy needs at least 10 samples, got {}",
            samples.len()
        )));
    }
    if eval_count == 0 {
        return Err(Error::InvalidArgument("eval_count must be positive".into()));
    }
    let d = samples.dim();
    let points: Vec<&Point> = samples.points().collect();
    let n = points.len();
    let log_norm =
        -(n as f64).ln() - d as f64 / 2.0 * (2.0 * std::f64::consts::PI * sigma * sigma).ln();
    let inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);

    let log_densities: Vec<f64> = (0..eval_count)
        .into_par_iter()
        .map(|j| {
            let mut rng = derive_stream(seed, j as u64);
            let z = points[rng.random_range(0..n)];
            let y: Vec<f64> = z
                .as_slice()
                .iter()
                .map(|&c| c + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let log_kernels: Vec<f64> = points
                .iter()
                .map(|p| {
                    let sq: f64 = p
                        .as_slice()
                        .iter()
                        .zip(&y)
                        .map(|(&a, &b)| (a - b) * (a - b))
                        .sum();
                    -sq * inv_two_sigma2
                })
                .collect();
            log_norm + logsumexp(&log_kernels)
        })
        .collect();
    let neg: Vec<f64> = log_densities.iter().map(|&v| -v).collect();
    Ok(mean_stderr(&neg))
}
