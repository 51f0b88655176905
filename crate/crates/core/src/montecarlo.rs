//! Seeded Monte Carlo power study: null calibration, alternative power and
//! the convergence of the learnt-manifold test towards the true-manifold
//! test as the number of auxiliary vertices grows.
//!
//! Every replicate owns a ChaCha20 stream selected by `(arm, index)` under the
//! base seed, so results do not depend on scheduling or thread count.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::ParametricCurve;
use crate::error::{Error, ErrorCategory, Result};
use crate::inference::{self, LearntParams, MetricMatrix};
use crate::manifold::EmbedParams;
use crate::rdpg::{self, LatentMatrix};

/// Largest tolerated fraction of failed replicates per arm.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name", deny_unknown_fields)]
pub enum CurveSpec {
    HardyWeinberg,
    /// Coefficients in increasing powers of `tau`, one list per coordinate.
    Polynomial { coefficients: Vec<Vec<f64>> },
}

impl CurveSpec {
    pub fn build(&self) -> Result<ParametricCurve> {
        match self {
            CurveSpec::HardyWeinberg => Ok(ParametricCurve::hardy_weinberg()),
            CurveSpec::Polynomial { coefficients } => ParametricCurve::polynomial(coefficients.clone()),
        }
    }
}

/// Distribution of the community parameters around the arm's center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum CommunityDistribution {
    PointMass,
    /// Normal around the center, conditioned on `[0, 1]`.
    TruncatedNormal { sd: f64 },
}

impl CommunityDistribution {
    fn validate(&self) -> Result<()> {
        match *self {
            CommunityDistribution::PointMass => Ok(()),
            CommunityDistribution::TruncatedNormal { sd } if sd > 0.0 && sd.is_finite() => Ok(()),
            CommunityDistribution::TruncatedNormal { sd } => Err(Error::Config(format!(
                "truncated-normal community sd must be positive, got {sd}"
            ))),
        }
    }

    fn sample<R: Rng>(&self, center: f64, rng: &mut R) -> Result<f64> {
        match *self {
            CommunityDistribution::PointMass => Ok(center),
            CommunityDistribution::TruncatedNormal { sd } => {
                let normal = Normal::new(center, sd).map_err(|e| Error::Config(e.to_string()))?;
                for _ in 0..100_000 {
                    let tau = normal.sample(rng);
                    if (0.0..=1.0).contains(&tau) {
                        return Ok(tau);
                    }
                }
                Err(Error::Numerical(format!(
                    "truncated normal around {center} with sd {sd} rarely lands in [0, 1]"
                )))
            }
        }
    }
}

/// Distribution of the auxiliary parameters on `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum AuxiliaryDistribution {
    Uniform,
    Beta { a: f64, b: f64 },
}

impl AuxiliaryDistribution {
    fn validate(&self) -> Result<()> {
        match *self {
            AuxiliaryDistribution::Uniform => Ok(()),
            AuxiliaryDistribution::Beta { a, b } => Beta::new(a, b)
                .map(|_| ())
                .map_err(|e| Error::Config(format!("auxiliary beta({a}, {b}): {e}"))),
        }
    }

    fn sampler(&self) -> Result<AuxSampler> {
        Ok(match *self {
            AuxiliaryDistribution::Uniform => AuxSampler::Uniform,
            AuxiliaryDistribution::Beta { a, b } => {
                AuxSampler::Beta(Beta::new(a, b).map_err(|e| Error::Config(e.to_string()))?)
            }
        })
    }
}

enum AuxSampler {
    Uniform,
    Beta(Beta<f64>),
}

impl AuxSampler {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            AuxSampler::Uniform => rng.gen::<f64>(),
            AuxSampler::Beta(b) => b.sample(rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum MetricSpec {
    Identity,
    Diagonal { entries: Vec<f64> },
    Full { rows: Vec<Vec<f64>> },
}

impl MetricSpec {
    pub fn build(&self, k: usize) -> Result<MetricMatrix> {
        let m = match self {
            MetricSpec::Identity => return Ok(MetricMatrix::identity(k)),
            MetricSpec::Diagonal { entries } => {
                if entries.len() != k {
                    return Err(Error::Config(format!("metric diagonal needs {k} entries")));
                }
                MetricMatrix::diagonal(entries)?
            }
            MetricSpec::Full { rows } => {
                if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                    return Err(Error::Config(format!("metric matrix must be {k} x {k}")));
                }
                MetricMatrix::new(DMatrix::from_fn(k, k, |i, j| rows[i][j]))?
            }
        };
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerConfig {
    pub curve: CurveSpec,
    pub community_size: usize,
    pub auxiliary_count: usize,
    pub tau_null: f64,
    pub tau_alt: f64,
    pub community: CommunityDistribution,
    pub auxiliary: AuxiliaryDistribution,
    pub alpha: f64,
    pub replicates: usize,
    pub radius: f64,
    pub metric: MetricSpec,
    pub seed: u64,
    pub embed: EmbedParams,
    pub largest_component: bool,
}

impl PowerConfig {
    /// Hardy-Weinberg curve, `s = 5`, `m = 1000`, `tau0 = 0.3`,
    /// `tau* = 0.35`, `alpha = 0.05`, radius 1, identity metric, 1000
    /// replicates per arm.
    pub fn example1() -> Self {
        PowerConfig {
            curve: CurveSpec::HardyWeinberg,
            community_size: 5,
            auxiliary_count: 1000,
            tau_null: 0.3,
            tau_alt: 0.35,
            community: CommunityDistribution::PointMass,
            auxiliary: AuxiliaryDistribution::Uniform,
            alpha: 0.05,
            replicates: 1000,
            radius: 1.0,
            metric: MetricSpec::Identity,
            seed: 7,
            embed: EmbedParams::default(),
            largest_component: false,
        }
    }

    /// Reduced scale: 300 auxiliary vertices, 100 replicates per arm.
    pub fn smoke() -> Self {
        PowerConfig {
            auxiliary_count: 300,
            replicates: 100,
            ..PowerConfig::example1()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.community_size == 0 || self.auxiliary_count == 0 || self.replicates == 0 {
            return fail("community_size, auxiliary_count and replicates must be at least 1".into());
        }
        for (name, tau) in [("tau_null", self.tau_null), ("tau_alt", self.tau_alt)] {
            if !(0.0..=1.0).contains(&tau) {
                return fail(format!("{name} must lie in [0, 1], got {tau}"));
            }
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return fail(format!("radius must be positive, got {}", self.radius));
        }
        if self.embed.max_iters == 0 || !(self.embed.tol >= 0.0) {
            return fail("embed.max_iters must be positive and embed.tol non-negative".into());
        }
        if self.replicates > u32::MAX as usize {
            return fail("too many replicates".into());
        }
        self.community.validate()?;
        self.auxiliary.validate()
    }

    fn learnt_params(&self) -> LearntParams {
        LearntParams {
            radius: self.radius,
            embed: self.embed,
            largest_component: self.largest_component,
        }
    }
}

/// Replicate arm. Each arm has its own family of random streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// Community at `tau0`; calibrates the critical values.
    Null,
    /// Community at `tau*`.
    Alternative,
    /// Fresh community at `tau0`, for checking the size of the tests.
    Validation,
}

impl Arm {
    pub fn tag(self) -> u64 {
        match self {
            Arm::Null => 0,
            Arm::Alternative => 1,
            Arm::Validation => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arm::Null => "null",
            Arm::Alternative => "alternative",
            Arm::Validation => "validation",
        }
    }
}

/// Random stream of replicate `index` in `arm`.
pub fn replicate_rng(seed: u64, arm: Arm, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((arm.tag() << 32) | index as u64);
    rng
}

/// The three statistics of one replicate. A statistic is `None` when it
/// could not be computed; `failure` then says why.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateStatistics {
    pub arm: Arm,
    pub index: usize,
    pub t_k: Option<f64>,
    pub t_1: Option<f64>,
    pub t_1_hat: Option<f64>,
    pub failure: Option<String>,
}

impl ReplicateStatistics {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Precomputed pieces shared by all replicates of one configuration.
pub struct PowerExperiment {
    cfg: PowerConfig,
    curve: ParametricCurve,
    metric: MetricMatrix,
    p0: DVector<f64>,
}

impl PowerExperiment {
    pub fn new(cfg: PowerConfig) -> Result<Self> {
        cfg.validate()?;
        let curve = cfg.curve.build()?;
        let metric = cfg.metric.build(curve.dim())?;
        let p0 = curve.evaluate(cfg.tau_null)?;
        Ok(PowerExperiment { cfg, curve, metric, p0 })
    }

    pub fn config(&self) -> &PowerConfig {
        &self.cfg
    }

    pub fn curve(&self) -> &ParametricCurve {
        &self.curve
    }

    fn center(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Null | Arm::Validation => self.cfg.tau_null,
            Arm::Alternative => self.cfg.tau_alt,
        }
    }

    /// Latent matrix of replicate `index` in `arm`, together with the rng
    /// positioned just after the parameter draws.
    pub fn latent(&self, arm: Arm, index: usize) -> Result<(LatentMatrix, ChaCha20Rng)> {
        let mut rng = replicate_rng(self.cfg.seed, arm, index);
        let center = self.center(arm);
        let community = (0..self.cfg.community_size)
            .map(|_| self.cfg.community.sample(center, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let sampler = self.cfg.auxiliary.sampler()?;
        let auxiliary: Vec<f64> = (0..self.cfg.auxiliary_count).map(|_| sampler.sample(&mut rng)).collect();
        let x = LatentMatrix::from_curve(&self.curve, &community, &auxiliary)?;
        Ok((x, rng))
    }

    /// Simulates replicate `index` of `arm` and evaluates all three
    /// statistics on it. Numerical failures are recorded, usage errors are
    /// returned.
    pub fn replicate(&self, arm: Arm, index: usize) -> Result<ReplicateStatistics> {
        let mut out = ReplicateStatistics {
            arm,
            index,
            t_k: None,
            t_1: None,
            t_1_hat: None,
            failure: None,
        };
        let aligned = match self.aligned_estimates(arm, index) {
            Ok(a) => a,
            Err(e) if e.category() == ErrorCategory::Numerical => {
                out.failure = Some(e.to_string());
                return Ok(out);
            }
            Err(e) => return Err(e),
        };
        let s = self.cfg.community_size;
        let community = aligned.rows(0, s).into_owned();
        out.t_k = Some(inference::t_unrestricted(&community, &self.p0, &self.metric)?.value);
        out.t_1 = Some(inference::t_true_manifold(&self.curve, &community, self.cfg.tau_null, &self.metric)?.value);
        match inference::t_learnt_manifold(&self.p0, &aligned, s, &self.cfg.learnt_params()) {
            Ok(o) => out.t_1_hat = Some(o.value),
            Err(e) if e.category() == ErrorCategory::Numerical => out.failure = Some(e.to_string()),
            Err(e) => return Err(e),
        }
        Ok(out)
    }

    /// Adjacency spectral embedding of the replicate, rotated onto the true
    /// latent positions.
    pub fn aligned_estimates(&self, arm: Arm, index: usize) -> Result<DMatrix<f64>> {
        let (x, mut rng) = self.latent(arm, index)?;
        let a = rdpg::sample_adjacency(&x, &mut rng)?;
        let emb = rdpg::ase_adjacency(&a, x.dim())?;
        let fit = rdpg::procrustes_align(&emb.embedding, x.positions())?;
        Ok(fit.apply(&emb.embedding))
    }

    /// All replicates of one arm, in index order.
    pub fn run_arm(&self, arm: Arm) -> Result<Vec<ReplicateStatistics>> {
        let start = Instant::now();
        let stats = (0..self.cfg.replicates)
            .into_par_iter()
            .map(|i| self.replicate(arm, i))
            .collect::<Result<Vec<_>>>()?;
        let failed = stats.iter().filter(|r| r.failed()).count();
        log::info!(
            "{} arm: {} replicates, {} failed, {:.1?}",
            arm.name(),
            stats.len(),
            failed,
            start.elapsed()
        );
        if failed as f64 > MAX_FAILURE_FRACTION * stats.len() as f64 {
            let first = stats.iter().find_map(|r| r.failure.clone()).unwrap_or_default();
            return Err(Error::Experiment(format!(
                "{failed} of {} {} replicates failed (first: {first}); the localization radius is probably too small",
                stats.len(),
                arm.name()
            )));
        }
        Ok(stats)
    }

    pub fn run(&self) -> Result<PowerReport> {
        let start = Instant::now();
        let null = self.run_arm(Arm::Null)?;
        let critical = critical_values(&null, self.cfg.alpha)?;
        let alt = self.run_arm(Arm::Alternative)?;
        let power = power_estimate(&alt, &critical)?;
        let failures = null
            .iter()
            .chain(&alt)
            .filter_map(|r| {
                r.failure.as_ref().map(|reason| FailureRecord {
                    arm: r.arm,
                    index: r.index,
                    reason: reason.clone(),
                })
            })
            .collect();
        let mut replicates = null;
        replicates.extend(alt);
        Ok(PowerReport {
            config: self.cfg.clone(),
            seeds: SeedInfo::new(self.cfg.seed),
            critical,
            power,
            failures,
            replicates,
            elapsed: start.elapsed(),
        })
    }
}

/// The `ceil((1 - alpha) B)`-th smallest of `values`.
pub fn order_statistic_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("no samples to take a quantile of".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    // guard against (1 - alpha) * B landing a hair above an integer
    let rank = (((1.0 - alpha) * b as f64) - 1e-9).ceil().clamp(1.0, b as f64) as usize;
    Ok(sorted[rank - 1])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalValues {
    pub t_k: f64,
    pub t_1: f64,
    pub t_1_hat: f64,
}

fn column(samples: &[ReplicateStatistics], pick: fn(&ReplicateStatistics) -> Option<f64>) -> Vec<f64> {
    samples.iter().filter_map(pick).collect()
}

/// Per-statistic null quantiles; failed statistics are skipped.
pub fn critical_values(null_samples: &[ReplicateStatistics], alpha: f64) -> Result<CriticalValues> {
    if null_samples.is_empty() {
        return Err(Error::Argument("no null replicates".into()));
    }
    Ok(CriticalValues {
        t_k: order_statistic_quantile(&column(null_samples, |r| r.t_k), alpha)?,
        t_1: order_statistic_quantile(&column(null_samples, |r| r.t_1), alpha)?,
        t_1_hat: order_statistic_quantile(&column(null_samples, |r| r.t_1_hat), alpha)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rejections {
    /// Fraction of used replicates with statistic at or above the critical value.
    pub power: f64,
    pub rejected: usize,
    pub used: usize,
    pub excluded: usize,
}

impl Rejections {
    fn count(values: &[Option<f64>], critical: f64) -> Self {
        let used: Vec<f64> = values.iter().flatten().copied().collect();
        let rejected = used.iter().filter(|&&v| v >= critical).count();
        Rejections {
            power: if used.is_empty() {
                0.0
            } else {
                rejected as f64 / used.len() as f64
            },
            rejected,
            used: used.len(),
            excluded: values.len() - used.len(),
        }
    }

    /// Binomial standard error of `power`.
    pub fn standard_error(&self) -> f64 {
        if self.used == 0 {
            return 0.0;
        }
        (self.power * (1.0 - self.power) / self.used as f64).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerEstimate {
    pub t_k: Rejections,
    pub t_1: Rejections,
    pub t_1_hat: Rejections,
}

pub fn power_estimate(alt_samples: &[ReplicateStatistics], critical: &CriticalValues) -> Result<PowerEstimate> {
    if alt_samples.is_empty() {
        return Err(Error::Argument("no alternative replicates".into()));
    }
    let pick = |f: fn(&ReplicateStatistics) -> Option<f64>| alt_samples.iter().map(f).collect::<Vec<_>>();
    Ok(PowerEstimate {
        t_k: Rejections::count(&pick(|r| r.t_k), critical.t_k),
        t_1: Rejections::count(&pick(|r| r.t_1), critical.t_1),
        t_1_hat: Rejections::count(&pick(|r| r.t_1_hat), critical.t_1_hat),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailureRecord {
    pub arm: Arm,
    pub index: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedInfo {
    pub base_seed: u64,
    pub generator: &'static str,
    /// How a replicate's stream id is formed.
    pub stream: &'static str,
    pub arm_tags: [(&'static str, u64); 3],
}

impl SeedInfo {
    fn new(base_seed: u64) -> Self {
        SeedInfo {
            base_seed,
            generator: "ChaCha20 keyed by seed_from_u64(base_seed)",
            stream: "arm_tag << 32 | replicate_index",
            arm_tags: [
                (Arm::Null.name(), Arm::Null.tag()),
                (Arm::Alternative.name(), Arm::Alternative.tag()),
                (Arm::Validation.name(), Arm::Validation.tag()),
            ],
        }
    }
}

/// Outcome of [`run_power_experiment`]. The JSON form is the summary;
/// per-replicate rows go to CSV and wall-clock time is kept out of both so
/// that outputs are reproducible.
#[derive(Clone, Debug, Serialize)]
pub struct PowerReport {
    pub config: PowerConfig,
    pub seeds: SeedInfo,
    pub critical: CriticalValues,
    pub power: PowerEstimate,
    pub failures: Vec<FailureRecord>,
    #[serde(skip)]
    pub replicates: Vec<ReplicateStatistics>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl PowerReport {
    pub fn arm(&self, arm: Arm) -> impl Iterator<Item = &ReplicateStatistics> {
        self.replicates.iter().filter(move |r| r.arm == arm)
    }
}

pub fn run_power_experiment(cfg: &PowerConfig) -> Result<PowerReport> {
    PowerExperiment::new(cfg.clone())?.run()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub m: usize,
    pub power_t_1: f64,
    pub power_t_1_hat: f64,
    /// `|power(T1_hat) - power(T1)|`.
    pub gap: f64,
    /// Pooled binomial standard error of the gap.
    pub standard_error: f64,
}

/// Runs the experiment once per auxiliary count and tabulates the power gap
/// between the learnt- and true-manifold tests.
pub fn convergence_study(cfg: &PowerConfig, m_values: &[usize]) -> Result<Vec<ConvergenceRow>> {
    if m_values.is_empty() || m_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("m values must be non-empty and strictly increasing".into()));
    }
    m_values
        .iter()
        .map(|&m| {
            let report = run_power_experiment(&PowerConfig {
                auxiliary_count: m,
                ..cfg.clone()
            })?;
            let (a, b) = (report.power.t_1, report.power.t_1_hat);
            Ok(ConvergenceRow {
                m,
                power_t_1: a.power,
                power_t_1_hat: b.power,
                gap: (b.power - a.power).abs(),
                standard_error: (a.standard_error().powi(2) + b.standard_error().powi(2)).sqrt(),
            })
        })
        .collect()
}
