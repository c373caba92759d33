//! Empirical tail curves and power-law exponent fits, the analytic
//! lower-bound exponent of the expanding atom, empirical large-deviation
//! rates, and the bump-function weak-convergence diagnostic.

use nalgebra::DMatrix;
use rand::prelude::*;
use rayon::prelude::*;

use crate::maps::{LipschitzMap, Point};
use crate::measure::GeneratingMeasure;
use crate::rng::derive_stream;
use crate::sampler::{forward_orbit, sample_batch, SampleSet};
use crate::stats::{mean_stderr, ols, wilson_interval};
use crate::{Error, Result};

/// Default exceedance floor below which a radius is excluded from the
/// log-log fit; fewer exceedances make the Wilson interval span an order of
/// magnitude and poison the regression.
pub const DEFAULT_MIN_EXCEED: u64 = 30;

/// Exceedance probabilities of a sample set over a radius grid.
#[derive(Debug, Clone)]
pub struct TailCurve {
    pub center: Point,
    pub radii: Vec<f64>,
    pub exceed_counts: Vec<u64>,
    pub total: u64,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
}

impl TailCurve {
    pub fn p_hat(&self) -> Vec<f64> {
        self.exceed_counts.iter().map(|&c| c as f64 / self.total as f64).collect()
    }

    /// CSV: `R, exceed, total, p_hat, ci_low, ci_high`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "R,exceed,total,p_hat,ci_low,ci_high")?;
        for (i, &r) in self.radii.iter().enumerate() {
            let p = self.exceed_counts[i] as f64 / self.total as f64;
            writeln!(
                w,
                "{r},{},{},{p},{},{}",
                self.exceed_counts[i], self.total, self.ci_low[i], self.ci_high[i]
            )?;
        }
        Ok(())
    }
}

/// Fitted tail exponent: `p(R) ≈ C·R^{-alpha_hat}`.
#[derive(Debug, Clone)]
pub struct TailFit {
    pub alpha_hat: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub radii_used: Vec<f64>,
}

/// Which large-deviation event is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LdpVariant {
    /// `|nχ_μ - Σ log ρ(γᵢ)| > εn`, factor-wise sums.
    Factorwise,
    /// `|nλ̂ - log ρ(γ₁⋯γₙ)| > εn`, ρ of the composed word, with the
    /// Lyapunov reference estimated at the largest grid length.
    Product,
}

/// Empirical deviation frequencies over a grid of word lengths.
#[derive(Debug, Clone)]
pub struct LdpCurve {
    pub epsilon: f64,
    pub n_grid: Vec<usize>,
    pub event_freqs: Vec<f64>,
    pub trials: usize,
    pub variant: LdpVariant,
    /// Lyapunov reference and its stderr (PRODUCT variant only). The
    /// reference is itself an estimate at the largest grid length, so the
    /// product curve is circular by construction; consumers are expected to
    /// surface this.
    pub lambda_ref: Option<(f64, f64)>,
}

impl LdpCurve {
    /// CSV: `n, trials, deviations, freq`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "n,trials,deviations,freq")?;
        for (i, &n) in self.n_grid.iter().enumerate() {
            let dev = (self.event_freqs[i] * self.trials as f64).round() as u64;
            writeln!(w, "{n},{},{dev},{}", self.trials, self.event_freqs[i])?;
        }
        Ok(())
    }
}

/// Fitted exponential decay rate of the deviation frequencies.
#[derive(Debug, Clone, Copy)]
pub enum LdpRate {
    /// Every frequency was zero: the empirical rate is +∞.
    Infinite,
    Fit { delta_hat: f64, stderr: f64 },
}

/// Exceedance counts of `samples` around `center` over an increasing radius
/// grid, with 95% Wilson intervals.
pub fn empirical_tail(samples: &SampleSet, center: &Point, radii: &[f64]) -> Result<TailCurve> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty sample set".into()));
    }
    if radii.is_empty() || radii.windows(2).any(|w| !(w[0] < w[1])) || radii[0] <= 0.0 {
        return Err(Error::InvalidArgument("radii must be positive and increasing".into()));
    }
    let mut dists: Vec<f64> = samples.points().map(|p| p.distance(center)).collect();
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let total = dists.len() as u64;
    let exceed_counts: Vec<u64> = radii
        .iter()
        .map(|&r| (dists.len() - dists.partition_point(|&d| d < r)) as u64)
        .collect();
    let (ci_low, ci_high): (Vec<f64>, Vec<f64>) =
        exceed_counts.iter().map(|&c| wilson_interval(c, total)).unzip();
    Ok(TailCurve {
        center: center.clone(),
        radii: radii.to_vec(),
        exceed_counts,
        total,
        ci_low,
        ci_high,
    })
}

/// Geometric radius grid `R_j = R_0 · 2^{j/2}` from the given percentile of
/// the center distances up to the sample maximum (log-log fits want even
/// spacing in log R).
pub fn auto_radii(samples: &SampleSet, center: &Point, start_percentile: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty sample set".into()));
    }
    let mut dists: Vec<f64> = samples.points().map(|p| p.distance(center)).collect();
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((dists.len() - 1) as f64 * start_percentile.clamp(0.0, 1.0)) as usize;
    let r0 = dists[idx];
    let max = *dists.last().unwrap();
    if !(r0 > 0.0) {
        return Err(Error::InvalidArgument(
            "all samples coincide with the center; no radius grid".into(),
        ));
    }
    let mut radii = Vec::new();
    let mut j = 0u32;
    loop {
        let r = r0 * 2f64.powf(j as f64 / 2.0);
        if r > max {
            break;
        }
        radii.push(r);
        j += 1;
    }
    if radii.is_empty() {
        radii.push(r0);
    }
    Ok(radii)
}

/// OLS of `log p̂` against `log R` over the radii with at least `min_exceed`
/// exceedances; `alpha_hat` is minus the slope.
pub fn fit_tail_exponent(curve: &TailCurve, min_exceed: u64) -> Result<TailFit> {
    let usable: Vec<usize> = (0..curve.radii.len())
        .filter(|&i| curve.exceed_counts[i] >= min_exceed.max(1))
        .collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientTailData { usable: usable.len(), needed: 3 });
    }
    let xs: Vec<f64> = usable.iter().map(|&i| curve.radii[i].ln()).collect();
    let ys: Vec<f64> = usable
        .iter()
        .map(|&i| (curve.exceed_counts[i] as f64 / curve.total as f64).ln())
        .collect();
    let fit = ols(&xs, &ys).ok_or(Error::InsufficientTailData { usable: usable.len(), needed: 3 })?;
    Ok(TailFit {
        alpha_hat: -fit.slope,
        stderr: fit.slope_stderr,
        r_squared: fit.r_squared,
        radii_used: usable.iter().map(|&i| curve.radii[i]).collect(),
    })
}

/// The analytic lower-bound exponent: over expanding atoms g (ρ(g) > 1),
/// the minimum of `-log p_g / log ρ(g)`, with the witnessing atom and its
/// fixed point. The stationary tail at that fixed point decays no faster
/// than `R^{-alpha_1}`.
pub fn lower_bound_exponent(mu: &GeneratingMeasure) -> Result<(f64, usize, Point)> {
    let mut best: Option<(f64, usize, Point)> = None;
    for (i, atom) in mu.atoms().iter().enumerate() {
        let rho = atom.map.lipschitz_constant()?;
        if rho <= 1.0 {
            continue;
        }
        if matches!(atom.map, LipschitzMap::Piecewise(_)) {
            continue; // lower bound needs a globally affine expanding atom
        }
        let alpha = -atom.weight.ln() / rho.ln();
        let x0 = atom.map.fixed_point()?;
        if best.as_ref().is_none_or(|(a, _, _)| alpha < *a) {
            best = Some((alpha, i, x0));
        }
    }
    best.ok_or(Error::NoExpandingAtom)
}

/// Empirical frequency of the large-deviation event per word length.
pub fn ldp_empirical(
    mu: &GeneratingMeasure,
    epsilon: f64,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
    variant: LdpVariant,
) -> Result<LdpCurve> {
    if mu.is_countable() {
        return Err(Error::CountableSupport);
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    if trials < 1000 {
        return Err(Error::InvalidArgument("ldp_empirical needs trials >= 1000".into()));
    }
    if n_grid.is_empty() || n_grid.windows(2).any(|w| !(w[0] < w[1])) || n_grid[0] == 0 {
        return Err(Error::InvalidArgument("n_grid must be positive and increasing".into()));
    }
    let n_max = *n_grid.last().unwrap();
    let work = n_max as u64 * trials as u64;
    if work > crate::measure::WORK_BUDGET {
        return Err(Error::WorkBudget(work));
    }
    let (dist, _) = mu.atom_sampler()?;
    let log_rhos: Vec<f64> = mu
        .atom_rhos()?
        .iter()
        .enumerate()
        .map(|(i, &r)| if r > 0.0 { Ok(r.ln()) } else { Err(Error::ZeroLipschitz(i)) })
        .collect::<Result<_>>()?;

    let (reference, lambda_ref) = match variant {
        LdpVariant::Factorwise => (mu.contraction_rate()?, None),
        LdpVariant::Product => {
            let budget_trials = (crate::measure::WORK_BUDGET / 4 / n_max as u64)
                .min(trials as u64)
                .max(1) as usize;
            let est = mu.lyapunov_estimate(n_max, budget_trials, seed ^ 0x517c_c1b7_2722_0a95)?;
            (est.0, Some(est))
        }
    };

    let all_linear = mu
        .atoms()
        .iter()
        .all(|a| !matches!(a.map, LipschitzMap::Piecewise(_)));
    let linear_parts: Vec<DMatrix<f64>> = if all_linear {
        mu.atoms().iter().map(|a| a.map.linear_parts().0).collect()
    } else {
        Vec::new()
    };

    let counts: Result<Vec<Vec<u64>>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = derive_stream(seed, trial as u64);
            let mut hits = vec![0u64; n_grid.len()];
            match variant {
                LdpVariant::Factorwise => {
                    let mut sum = 0.0;
                    let mut gi = 0usize;
                    for n in 1..=n_max {
                        sum += log_rhos[dist.sample(&mut rng)];
                        if gi < n_grid.len() && n == n_grid[gi] {
                            if (sum - n as f64 * reference).abs() > epsilon * n as f64 {
                                hits[gi] = 1;
                            }
                            gi += 1;
                        }
                    }
                }
                LdpVariant::Product => {
                    let d = mu.dim();
                    let mut word = DMatrix::<f64>::identity(d, d);
                    let mut word_pw: Option<LipschitzMap> = None;
                    let mut log_scale = 0.0f64;
                    let mut gi = 0usize;
                    for n in 1..=n_max {
                        let i = dist.sample(&mut rng);
                        if all_linear {
                            word *= &linear_parts[i];
                            if n % 32 == 0 {
                                let m = word.amax();
                                word /= m;
                                log_scale += m.ln();
                            }
                        } else {
                            word_pw = Some(match word_pw.take() {
                                None => mu.atoms()[i].map.clone(),
                                Some(w) => w.compose(&mu.atoms()[i].map)?,
                            });
                        }
                        if gi < n_grid.len() && n == n_grid[gi] {
                            let log_norm = if all_linear {
                                log_scale + crate::maps::operator_norm(&word)?.ln()
                            } else {
                                word_pw.as_ref().unwrap().lipschitz_constant()?.ln()
                            };
                            if (log_norm - n as f64 * reference).abs() > epsilon * n as f64 {
                                hits[gi] = 1;
                            }
                            gi += 1;
                        }
                    }
                }
            }
            Ok(hits)
        })
        .collect();
    let counts = counts?;
    let mut totals = vec![0u64; n_grid.len()];
    for hits in &counts {
        for (t, h) in totals.iter_mut().zip(hits) {
            *t += h;
        }
    }
    Ok(LdpCurve {
        epsilon,
        n_grid: n_grid.to_vec(),
        event_freqs: totals.iter().map(|&t| t as f64 / trials as f64).collect(),
        trials,
        variant,
        lambda_ref,
    })
}

/// OLS of `-log frequency` against `n`; the slope is the empirical rate δ̂.
pub fn ldp_rate_fit(curve: &LdpCurve) -> Result<LdpRate> {
    let nonzero: Vec<usize> =
        (0..curve.n_grid.len()).filter(|&i| curve.event_freqs[i] > 0.0).collect();
    if nonzero.is_empty() {
        return Ok(LdpRate::Infinite);
    }
    if nonzero.len() < 3 {
        return Err(Error::InsufficientLdpData);
    }
    let xs: Vec<f64> = nonzero.iter().map(|&i| curve.n_grid[i] as f64).collect();
    let ys: Vec<f64> = nonzero.iter().map(|&i| -curve.event_freqs[i].ln()).collect();
    let fit = ols(&xs, &ys).ok_or(Error::InsufficientLdpData)?;
    Ok(LdpRate::Fit { delta_hat: fit.slope, stderr: fit.slope_stderr })
}

/// The ramp test function f_{R,x}(y): exactly 0 within distance R/2 of x,
/// exactly 1 beyond distance R, linear in between. Lipschitz with constant
/// at most 2/R.
pub fn bump_value(radius: f64, x: &Point, y: &Point) -> f64 {
    assert!(radius > 0.0, "bump radius must be positive");
    let d = y.distance(x);
    if d <= radius / 2.0 {
        0.0
    } else if d >= radius {
        1.0
    } else {
        (d - radius / 2.0) / (radius / 2.0)
    }
}

/// Weak-convergence diagnostic of forward words against a high-accuracy
/// reference sample.
#[derive(Debug, Clone)]
pub struct ConvergenceDiagnostic {
    /// (n, |E f(z_n) - E_ν f|) per grid point.
    pub gaps: Vec<(usize, f64)>,
    /// Monte Carlo noise floor per grid point (stderr of orbit mean plus
    /// stderr of the reference mean).
    pub noise_floor: Vec<f64>,
    /// Fitted exponential decay rate of the gaps, when at least three gaps
    /// exceed twice their noise floor; `None` means BelowNoise.
    pub theta_hat: Option<f64>,
    pub reference_mean: f64,
}

/// Gap between the n-step forward mean of the bump observable and its mean
/// under a reference sample of size `10 * trials`.
pub fn convergence_diagnostic(
    mu: &GeneratingMeasure,
    x: &Point,
    center: &Point,
    radius: f64,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ConvergenceDiagnostic> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("n_grid must be increasing".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    let ref_count = 10 * trials;
    let ref_tol = (radius * 1e-6).min(1e-6);
    let chi = mu.contraction_rate()?;
    let max_n = crate::sampler::default_max_n(chi, ref_tol);
    let reference = sample_batch(mu, x, ref_tol, ref_count, max_n, seed ^ 0x9e37_79b9)?;
    let ref_values: Vec<f64> =
        reference.points().map(|p| bump_value(radius, center, p)).collect();
    let (ref_mean, ref_se) = mean_stderr(&ref_values);

    let mut gaps = Vec::with_capacity(n_grid.len());
    let mut noise = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let values: Result<Vec<f64>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = derive_stream(seed, (gi * trials + t) as u64);
                let y = forward_orbit(mu, x, n, &mut rng)?;
                Ok(bump_value(radius, center, &y))
            })
            .collect();
        let (mean, se) = mean_stderr(&values?);
        gaps.push((n, (mean - ref_mean).abs()));
        noise.push(se + ref_se);
    }

    let signal: Vec<usize> = (0..gaps.len())
        .filter(|&i| gaps[i].1 > 2.0 * noise[i] && gaps[i].1 > 0.0)
        .collect();
    let theta_hat = if signal.len() >= 3 {
        let xs: Vec<f64> = signal.iter().map(|&i| gaps[i].0 as f64).collect();
        let ys: Vec<f64> = signal.iter().map(|&i| -gaps[i].1.ln()).collect();
        ols(&xs, &ys).map(|f| f.slope)
    } else {
        None
    };
    Ok(ConvergenceDiagnostic { gaps, noise_floor: noise, theta_hat, reference_mean: ref_mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{preset, PresetId};

    fn synthetic_pareto(n: usize, alpha: f64, seed: u64) -> SampleSet {
        // inverse CDF: |y| = u^{-1/alpha} on u in (0,1), P(|y| >= R) = R^{-alpha}
        let points: Vec<Point> = (0..n)
            .map(|i| {
                let mut rng = derive_stream(seed, i as u64);
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                Point::scalar(u.powf(-1.0 / alpha))
            })
            .collect();
        SampleSet::from_points(points, "synthetic-pareto")
    }

    #[test]
    fn tail_of_point_mass() {
        let set = SampleSet::from_points(vec![Point::scalar(2.0); 50], "pm");
        let curve = empirical_tail(&set, &Point::scalar(0.0), &[1.0, 3.0]).unwrap();
        assert_eq!(curve.exceed_counts, vec![50, 0]);
    }

    #[test]
    fn tail_counts_monotone_and_wilson_covers_pareto() {
        let set = synthetic_pareto(200_000, 2.0, 4);
        let radii: Vec<f64> = (0..8).map(|j| 2f64.powf(1.0 + j as f64 / 2.0)).collect();
        let curve = empirical_tail(&set, &Point::scalar(0.0), &radii).unwrap();
        for w in curve.exceed_counts.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for (i, &r) in radii.iter().enumerate() {
            let truth = r.powf(-2.0);
            assert!(
                curve.ci_low[i] <= truth && truth <= curve.ci_high[i],
                "R={r}: CI [{}, {}] misses {truth}",
                curve.ci_low[i],
                curve.ci_high[i]
            );
        }
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        // counts = round(N * R^-2) over radii 2^1..2^10
        let total = 100_000_000u64;
        let radii: Vec<f64> = (1..=10).map(|j| 2f64.powi(j)).collect();
        let exceed_counts: Vec<u64> =
            radii.iter().map(|r| (total as f64 * r.powf(-2.0)).round() as u64).collect();
        let (ci_low, ci_high): (Vec<f64>, Vec<f64>) =
            exceed_counts.iter().map(|&c| wilson_interval(c, total)).unzip();
        let curve = TailCurve {
            center: Point::scalar(0.0),
            radii,
            exceed_counts,
            total,
            ci_low,
            ci_high,
        };
        let fit = fit_tail_exponent(&curve, 30).unwrap();
        assert!((fit.alpha_hat - 2.0).abs() < 0.01, "alpha = {}", fit.alpha_hat);
        assert!(fit.r_squared > 0.9999);
    }

    #[test]
    fn fit_rejects_all_zero_exceedances() {
        let set = SampleSet::from_points(vec![Point::scalar(0.5); 100], "compact");
        let curve = empirical_tail(&set, &Point::scalar(0.0), &[1.0, 2.0, 4.0, 8.0]).unwrap();
        assert!(matches!(
            fit_tail_exponent(&curve, 30),
            Err(Error::InsufficientTailData { .. })
        ));
    }

    #[test]
    fn pareto_estimator_consistency() {
        // exceedance counts at nested radii are correlated, so the OLS
        // stderr is not a calibrated CI; check raw accuracy instead
        let mut errs = Vec::new();
        for rep in 0..20 {
            let set = synthetic_pareto(100_000, 2.0, 1000 + rep);
            let radii: Vec<f64> = (0..14).map(|j| 2f64.powf(j as f64 / 2.0)).collect();
            let curve = empirical_tail(&set, &Point::scalar(0.0), &radii).unwrap();
            let fit = fit_tail_exponent(&curve, 30).unwrap();
            assert!(fit.r_squared > 0.99);
            errs.push((fit.alpha_hat - 2.0).abs());
        }
        let worst = errs.iter().cloned().fold(0.0f64, f64::max);
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        assert!(worst < 0.3, "worst error {worst}");
        assert!(mean < 0.1, "mean error {mean}");
    }

    #[test]
    fn lower_bound_prime5() {
        let mu = preset(&PresetId::PrimeQ(5)).unwrap();
        let (alpha1, idx, x0) = lower_bound_exponent(&mu).unwrap();
        assert!((alpha1 - 4.923343).abs() < 1e-6);
        assert_eq!(idx, 0);
        assert!((x0.as_slice()[0] + 4.0).abs() < 1e-9);
    }

    #[test]
    fn lower_bound_requires_expansion() {
        let mu = preset(&PresetId::Bernoulli).unwrap();
        assert!(matches!(lower_bound_exponent(&mu), Err(Error::NoExpandingAtom)));
    }

    #[test]
    fn lower_bound_takes_minimum_over_expanding_atoms() {
        use crate::maps::Similarity;
        use crate::measure::{Atom, GeneratingMeasure};
        let mu = GeneratingMeasure::new(vec![
            Atom { map: Similarity::scalar(2.0, 1.0).unwrap().into(), weight: 0.5 },
            Atom { map: Similarity::scalar(1.1, 1.0).unwrap().into(), weight: 0.01 },
            Atom { map: Similarity::scalar(0.25, 0.0).unwrap().into(), weight: 0.49 },
        ])
        .unwrap();
        let (alpha1, idx, _) = lower_bound_exponent(&mu).unwrap();
        assert!((alpha1 - 1.0).abs() < 1e-12);
        assert_eq!(idx, 0);
    }

    #[test]
    fn ldp_single_rho_never_deviates() {
        let mu = preset(&PresetId::SingleContraction).unwrap();
        let curve =
            ldp_empirical(&mu, 0.05, &[1, 5, 10], 1000, 0, LdpVariant::Factorwise).unwrap();
        assert!(curve.event_freqs.iter().all(|&f| f == 0.0));
        assert!(matches!(ldp_rate_fit(&curve).unwrap(), LdpRate::Infinite));
    }

    #[test]
    fn ldp_large_epsilon_never_deviates() {
        // bounded increments: per-step deviation is at most
        // max_i |log rho_i - chi| = 0.462
        let mu = preset(&PresetId::PrimeQ(5)).unwrap();
        let curve =
            ldp_empirical(&mu, 0.47, &[1, 2, 5, 10], 2000, 0, LdpVariant::Factorwise).unwrap();
        assert!(curve.event_freqs.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn ldp_frequency_decreasing_in_epsilon() {
        let mu = preset(&PresetId::PrimeQ(5)).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [0.05, 0.1, 0.2] {
            let c = ldp_empirical(&mu, eps, &[50], 20_000, 3, LdpVariant::Factorwise).unwrap();
            assert!(c.event_freqs[0] <= prev);
            prev = c.event_freqs[0];
        }
    }

    #[test]
    fn ldp_product_matches_factorwise_for_similarities() {
        // similarities: rho of the word equals the product of the rhos, so
        // with matched seeds the two variants count the same events up to
        // the lambda reference, which converges to chi here
        let mu = preset(&PresetId::PrimeQ(5)).unwrap();
        let f = ldp_empirical(&mu, 0.1, &[20, 40], 2000, 5, LdpVariant::Factorwise).unwrap();
        let p = ldp_empirical(&mu, 0.1, &[20, 40], 2000, 5, LdpVariant::Product).unwrap();
        assert!(p.lambda_ref.is_some());
        for (a, b) in f.event_freqs.iter().zip(&p.event_freqs) {
            assert!((a - b).abs() < 0.05, "{a} vs {b}");
        }
    }

    #[test]
    fn rate_fit_exact_exponential() {
        let curve = LdpCurve {
            epsilon: 0.1,
            n_grid: vec![10, 20, 40, 80],
            event_freqs: vec![10, 20, 40, 80]
                .into_iter()
                .map(|n| (-0.05 * n as f64).exp())
                .collect(),
            trials: 100_000,
            variant: LdpVariant::Factorwise,
            lambda_ref: None,
        };
        match ldp_rate_fit(&curve).unwrap() {
            LdpRate::Fit { delta_hat, stderr } => {
                assert!((delta_hat - 0.05).abs() < 1e-6);
                assert!(stderr < 1e-6);
            }
            LdpRate::Infinite => panic!("expected a fit"),
        }
    }

    #[test]
    fn bump_boundary_values() {
        let x = Point::scalar(0.0);
        assert_eq!(bump_value(2.0, &x, &Point::scalar(1.0)), 0.0); // d = R/2
        assert_eq!(bump_value(2.0, &x, &Point::scalar(2.0)), 1.0); // d = R
        assert_eq!(bump_value(2.0, &x, &Point::scalar(1.5)), 0.5); // d = 3R/4
        assert_eq!(bump_value(2.0, &x, &Point::scalar(0.1)), 0.0);
        assert_eq!(bump_value(2.0, &x, &Point::scalar(-5.0)), 1.0);
    }

    #[test]
    fn bump_is_lipschitz_with_constant_two_over_r() {
        let x = Point::scalar(0.3);
        let radius = 1.7;
        for i in 0..500 {
            let mut rng = derive_stream(77, i);
            let y = Point::scalar(rng.random::<f64>() * 8.0 - 4.0);
            let y2 = Point::scalar(rng.random::<f64>() * 8.0 - 4.0);
            let lhs = (bump_value(radius, &x, &y) - bump_value(radius, &x, &y2)).abs();
            assert!(lhs <= 2.0 / radius * y.distance(&y2) + 1e-12);
        }
    }

    #[test]
    fn diagnostic_deterministic_contraction() {
        let mu = preset(&PresetId::SingleContraction).unwrap();
        let diag = convergence_diagnostic(
            &mu,
            &Point::scalar(0.0),
            &Point::scalar(2.0),
            1.0,
            &[0, 5, 22, 30],
            200,
            0,
        )
        .unwrap();
        // zero-step orbit is the start point: f(0) = 1 (distance 2 >= R)
        assert!((diag.gaps[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(diag.gaps[2].1, 0.0);
        assert_eq!(diag.gaps[3].1, 0.0);
    }
}
