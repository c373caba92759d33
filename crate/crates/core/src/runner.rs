//! Experiment orchestration: builds the measure a config names, runs the
//! selected pipeline inside a local thread pool, and writes the result
//! files plus a run manifest.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::config::{render, ExperimentConfig, ExperimentKind};
use crate::entropy::{annulus_bound, smooth_samples, smoothed_entropy};
use crate::maps::Point;
use crate::measure::{GeneratingMeasure, Moment};
use crate::presets::{is_composite, PresetId};
use crate::sampler::{default_max_n, sample_batch, SampleSet};
use crate::tails::{
    auto_radii, convergence_diagnostic, empirical_tail, fit_tail_exponent, ldp_empirical,
    ldp_rate_fit, lower_bound_exponent, LdpRate,
};
use crate::{Error, Result};

/// Exit status of a completed run: `Ok` maps to process exit 0, `Flagged`
/// to 2 (results were produced but a statistical quality gate tripped).
/// Hard errors surface as `Err` and map to exit 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Flagged,
}

impl RunStatus {
    pub fn code(&self) -> i32 {
        match self {
            Self::Ok => 0,
            Self::Flagged => 2,
        }
    }
}

struct RunOutput {
    /// Lines for results.txt, flat `key=value`.
    results: Vec<String>,
    /// (file name, body) pairs for CSV artifacts.
    files: Vec<(String, String)>,
    /// Human-readable notes for the manifest.
    notes: Vec<String>,
    status: RunStatus,
}

impl RunOutput {
    fn new() -> Self {
        RunOutput { results: Vec::new(), files: Vec::new(), notes: Vec::new(), status: RunStatus::Ok }
    }

    fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        self.results.push(format!("{key}={value}"));
    }

    fn flag(&mut self, note: String) {
        self.notes.push(note);
        self.status = RunStatus::Flagged;
    }
}

/// Runs the experiment a config describes and writes its outputs into
/// `out_dir` (created if missing): `results.txt`, experiment CSVs, and
/// `manifest.txt`. `threads = 0` means the rayon default; the thread count
/// never changes any emitted bytes outside the manifest.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    threads: usize,
) -> Result<RunStatus> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let mu = config.build_measure()?;
    let mut out = pool.install(|| dispatch(config, &mu))?;

    if let Some(p) = &config.preset {
        if p.name == "prime_q" {
            if let Some(q) = p.q {
                if is_composite(q) {
                    out.notes.push(format!(
                        "note: q={q} is composite; tail-decay results are unaffected"
                    ));
                }
            }
        }
    }

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("results.txt"), format!("{}\n", out.results.join("\n")))?;
    for (name, body) in &out.files {
        std::fs::write(out_dir.join(name), body)?;
    }

    let mut manifest = String::new();
    let _ = writeln!(manifest, "experiment={}", config.experiment.name());
    let _ = writeln!(manifest, "seed={}", config.seed);
    let _ = writeln!(manifest, "measure_hash={}", mu.content_hash());
    let _ = writeln!(manifest, "exit_status={}", out.status.code());
    let _ = writeln!(manifest, "threads={threads}");
    let _ = writeln!(manifest, "wall_time_s={:.3}", start.elapsed().as_secs_f64());
    for note in &out.notes {
        let _ = writeln!(manifest, "note={note}");
    }
    let _ = writeln!(manifest, "--- config ---");
    manifest.push_str(&render(config));
    std::fs::write(out_dir.join("manifest.txt"), manifest)?;
    Ok(out.status)
}

fn dispatch(config: &ExperimentConfig, mu: &GeneratingMeasure) -> Result<RunOutput> {
    match config.experiment {
        ExperimentKind::Chi => run_chi(config, mu),
        ExperimentKind::Moment => run_moment(config, mu),
        ExperimentKind::Lyapunov => run_lyapunov(config, mu),
        ExperimentKind::Sample => run_sample(config, mu),
        ExperimentKind::Tail => run_tail(config, mu),
        ExperimentKind::Ldp => run_ldp(config, mu),
        ExperimentKind::Rate => run_rate(config, mu),
        ExperimentKind::Entropy => run_entropy(config, mu),
        ExperimentKind::Lowerbound => run_lowerbound(config, mu),
        ExperimentKind::Diagnose => run_diagnose(config, mu),
    }
}

fn point_from(coords: &Option<Vec<f64>>, dim: usize) -> Result<Point> {
    match coords {
        None => Ok(Point::origin(dim)),
        Some(c) => {
            let p = Point::new(c.clone())?;
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.dim() });
            }
            Ok(p)
        }
    }
}

fn draw_samples(config: &ExperimentConfig, mu: &GeneratingMeasure) -> Result<SampleSet> {
    let start = point_from(&config.start, mu.dim())?;
    let chi = mu.contraction_rate()?;
    let max_n = config.max_n.unwrap_or_else(|| default_max_n(chi, config.tol));
    sample_batch(mu, &start, config.tol, config.count, max_n, config.seed)
}

fn run_chi(config: &ExperimentConfig, mu: &GeneratingMeasure) -> Result<RunOutput> {
    let mut out = RunOutput::new();
    let (chi, err) = mu.contraction_rate_certified()?;
    out.kv("chi", chi);
    out.kv("certified_error", err);
    if config.preset_id().ok() == Some(PresetId::ShearMatrix) {
        out.notes.push("contraction rate of a point mass equals log of the norm".into());
    }
    Ok(out)
}

fn run_moment(config: &ExperimentConfig, mu: &GeneratingMeasure) -> Result<RunOutput> {
    let mut out = RunOutput::new();
    for &t in &config.t_grid {
        match mu.moment(t)? {
            Moment::Finite(v) => out.kv(&format!("moment_t{t}"), v),
            Moment::Diverges { witness } => {
                out.kv(&format!("moment_t{t}"), format!("DIVERGES@{witness}"))
            }
        }
    }
    Ok(out)
}

fn run_lyapunov(config: &ExperimentConfig, mu: &GeneratingMeasure) -> Result<RunOutput> {
    let mut out = RunOutput::new();
    let (lambda, se) = mu.lyapunov_estimate(config.n, config.trials, config.seed)?;
    out.kv("lambda_hat", lambda);
    out.kv("stderr", se);
    out.kv("n", config.n);
    out.kv("trials", config.trials);
    Ok(out)
}

fn sample_common(
    config: &ExperimentConfig,
    mu: &GeneratingMeasure,
    out: &mut RunOutput,
) -> Result<SampleSet> {
    let samples = draw_samples(config, mu)?;
    out.kv("count", samples.len());
    out.kv("truncated_fraction", samples.truncated_fraction());
    if !samples.is_valid() {
        out.flag(format!(
            "truncated fraction {} exceeds ceiling {}",
            samples.truncated_fraction(),
            crate::sampler::TRUNCATION_CEILING
        ));
    }
    let mut csv = Vec::new();
    samples.write_csv(&mut csv)?;
    out.files.push(("samples.csv".into(), String::from_utf8(csv).expect("ascii csv")));
    Ok(samples)
}

fn run_sample(config: &ExperimentConfig, mu: &GeneratingMeasure) -> Result<RunOutput> {
    let mut out = RunOutput::new();
    sample_common(config, mu, &mut out)?;
    Ok(out)
}

fn tail_center(config: &ExperimentConfig, mu: &GeneratingMeasure) -> Result<Point> {
    if config.center.is_some() {
        return point_from(&config.center, mu.dim());
    }
    match lower_bound_exponent(mu) {
        Ok((_, _, fp)) => Ok(fp),
        Err(Error::NoExpandingAtom) => Ok(Point::origin(mu.dim())),
        Err(e) => Err(e),
    }
}

fn run_tail(config: &ExperimentConfig, mu: &GeneratingMeasure) -> Result<RunOutput> {
    let mut out = RunOutput::new();
    let samples = sample_common(config, mu, &mut out)?;
    let center = tail_center(config, mu)?;
    let radii = match &config.radii {
        Some(r) => r.clone(),
        None => auto_radii(&samples, &center, config.start_percentile)?,
    };
    let curve = empirical_tail(&samples, &center, &radii)?;
    let mut csv = Vec::new();
    curve.write_csv(&mut csv)?;
    out.files.push(("tail.csv".into(), String::from_utf8(csv).expect("ascii csv")));
    out.kv("center", format!("{:?}", center.as_slice()));
    match fit_tail_exponent(&curve, config.min_exceed) {
        Ok(fit) => {
            out.kv("alpha_hat", fit.alpha_hat);
            out.kv("stderr", fit.stderr);
            out.kv("r_squared", fit.r_squared);
            out.kv("radii_used", fit.radii_used.len());
        }
        Err(e @ Error::InsufficientTailData { .. }) => {
            out.kv("alpha_hat", "NA");
            out.flag(format!("tail fit skipped: {e}"));
        }
        Err(e) => return Err(e),
    }
    Ok(out)
}

fn run_ldp(config: &ExperimentConfig, mu: &GeneratingMeasure) -> Result<RunOutput> {
    let mut out = RunOutput::new();
    let curve = ldp_empirical(
        mu,
        config.epsilon,
        &config.n_grid,
        config.trials,
        config.seed,
        config.ldp_variant()?,
    )?;
    let mut csv = Vec::new();
    curve.write_csv(&mut csv)?;
    out.files.push(("ldp.csv".into(), String::from_utf8(csv).expect("ascii csv")));
    out.kv("epsilon", config.epsilon);
    if let Some((l, se)) = curve.lambda_ref {
        out.kv("lambda_ref", l);
        out.kv("lambda_ref_stderr", se);
    }
    match ldp_rate_fit(&curve) {
        Ok(LdpRate::Infinite) => out.kv("delta_hat", "INF"),
        Ok(LdpRate::Fit { delta_hat, stderr }) => {
            out.kv("delta_hat", delta_hat);
            out.kv("delta_stderr", stderr);
        }
        Err(e @ Error::InsufficientLdpData) => {
            out.kv("delta_hat", "NA");
            out.flag(format!("rate fit skipped: {e}"));
        }
        Err(e) => return Err(e),
    }
    Ok(out)
}

fn run_rate(config: &ExperimentConfig, mu: &GeneratingMeasure) -> Result<RunOutput> {
    let mut out = RunOutput::new();
    let chi = mu.contraction_rate()?;
    let grid = match &config.x_grid {
        Some(g) => g.clone(),
        None => (0..41).map(|i| chi - 1.0 + i as f64 * 0.05).collect(),
    };
    let rf = mu.rate_function(&grid, config.t_max)?;
    let mut csv = String::from("x,rate\n");
    for (x, v) in rf.grid().iter().zip(rf.values()) {
        let _ = writeln!(csv, "{x},{v}");
    }
    out.files.push(("rate.csv".into(), csv));
    out.kv("chi", chi);
    out.kv("rate_at_chi", rf.value_at(mu, chi)?);
    out.kv("t_max", config.t_max);
    Ok(out)
}

fn run_entropy(config: &ExperimentConfig, mu: &GeneratingMeasure) -> Result<RunOutput> {
    let mut out = RunOutput::new();
    let samples = sample_common(config, mu, &mut out)?;
    let (h_hat, se) =
        smoothed_entropy(&samples, config.sigma, config.eval_count, config.seed ^ 0x5eed)?;
    let smoothed = smooth_samples(&samples, config.sigma, config.seed ^ 0xb0b)?;
    let center = point_from(&config.center, mu.dim())?;
    let bound = annulus_bound(&smoothed, &center, config.scale, config.i_max)?;
    out.kv("H_hat", h_hat);
    out.kv("stderr", se);
    out.kv("annulus_bound", bound.bound);
    out.kv("annulus_bound_without_unit_ball", bound.bound_without_unit_ball);
    out.kv("L", config.scale);
    out.kv("leftover_mass", bound.leftover_mass);
    if !bound.reliable {
        out.flag(format!("annulus leftover mass {} exceeds 1%", bound.leftover_mass));
    }
    Ok(out)
}

fn run_lowerbound(config: &ExperimentConfig, mu: &GeneratingMeasure) -> Result<RunOutput> {
    let _ = config;
    let mut out = RunOutput::new();
    let (alpha1, atom, fp) = lower_bound_exponent(mu)?;
    out.kv("alpha_1", alpha1);
    out.kv("atom", atom);
    out.kv(
        "fixed_point",
        fp.as_slice().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
    );
    Ok(out)
}

fn run_diagnose(config: &ExperimentConfig, mu: &GeneratingMeasure) -> Result<RunOutput> {
    let mut out = RunOutput::new();
    let start = point_from(&config.start, mu.dim())?;
    let center = point_from(&config.center, mu.dim())?;
    let diag = convergence_diagnostic(
        mu,
        &start,
        &center,
        config.bump_radius,
        &config.n_grid,
        config.trials,
        config.seed,
    )?;
    let mut csv = String::from("n,gap,noise_floor\n");
    for ((n, gap), noise) in diag.gaps.iter().zip(&diag.noise_floor) {
        let _ = writeln!(csv, "{n},{gap},{noise}");
    }
    out.files.push(("diagnose.csv".into(), csv));
    out.kv("reference_mean", diag.reference_mean);
    match diag.theta_hat {
        Some(theta) => out.kv("theta_hat", theta),
        None => out.kv("theta_hat", "BELOW_NOISE"),
    }
    Ok(out)
}
