//! Monte Carlo realisation of the interference model behind [`crate::link_model`].
//!
//! Each trial drops co-SF LoRa interferers and non-LoRa interferers as
//! homogeneous Poisson fields on a disk around the gateway, draws unit-mean
//! exponential (Rayleigh power) gains for every link, and declares an outage
//! when either SIR condition fails. The disk is truncated at `sim_radius`;
//! with `alpha > 2` the missing far-field interference is `O(radius^(2-alpha))`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::link_model::{total_outage, KVariant, LinkParams, SfTable, SpreadingFactor};
use crate::seeding::{derive_seed, trial_rng};

/// Minimum ratio of simulation disk radius to link distance.
pub const EDGE_GUARD: f64 = 10.0;

const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FadingMode {
    /// One desired-link gain shared by both SIR conditions.
    SharedGain,
    /// A fresh desired-link gain per condition; the two outage events are
    /// then independent given the interferer fields.
    #[default]
    IndependentPerCondition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub params: LinkParams,
    pub sf: SpreadingFactor,
    pub trials: u64,
    /// km
    pub sim_radius: f64,
    pub seed: u64,
    pub fading_mode: FadingMode,
}

impl OracleConfig {
    /// Config with the minimum admissible disk (`10·r`) and independent
    /// per-condition fading.
    pub fn new(params: LinkParams, sf: SpreadingFactor, trials: u64, seed: u64) -> Self {
        Self {
            params,
            sf,
            trials,
            sim_radius: default_radius(params.r),
            seed,
            fading_mode: FadingMode::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.sim_radius.is_finite() && self.sim_radius > 0.0) {
            return Err(Error::Config(format!(
                "sim_radius must be positive, got {}",
                self.sim_radius
            )));
        }
        if self.sim_radius < EDGE_GUARD * self.params.r {
            return Err(Error::Config(format!(
                "sim_radius {} km is below {EDGE_GUARD}·r = {} km",
                self.sim_radius,
                EDGE_GUARD * self.params.r
            )));
        }
        Ok(())
    }
}

fn default_radius(r: f64) -> f64 {
    if r > 0.0 {
        EDGE_GUARD * r
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub empirical_outage: f64,
    pub trials: u64,
    pub ci95_halfwidth: f64,
}

impl OracleResult {
    pub fn from_counts(outages: u64, trials: u64) -> Self {
        let p = outages as f64 / trials as f64;
        Self {
            empirical_outage: p,
            trials,
            ci95_halfwidth: ci95(p, trials),
        }
    }

    /// `|empirical − expected| ≤ 3·ci95`.
    pub fn agrees_with(&self, expected: f64) -> bool {
        (self.empirical_outage - expected).abs() <= 3.0 * self.ci95_halfwidth
    }
}

/// Normal-approximation 95% half-width for a binomial proportion.
pub fn ci95(p: f64, trials: u64) -> f64 {
    Z95 * (p * (1.0 - p) / trials as f64).sqrt()
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean > 0.0 {
        // mean is finite and positive, so construction cannot fail
        Poisson::new(mean).expect("valid Poisson mean").sample(rng) as u64
    } else {
        0
    }
}

/// Distances to the gateway of a PPP realisation on a disk. Only distances
/// matter for interference at the centre, so no angle is drawn.
pub fn sample_ppp_distances<R: Rng + ?Sized>(density: f64, radius: f64, rng: &mut R) -> Vec<f64> {
    let n = poisson_count(density * std::f64::consts::PI * radius * radius, rng);
    (0..n)
        .map(|_| radius * rng.random::<f64>().sqrt())
        .collect()
}

/// Homogeneous Poisson point process of intensity `density` on the disk of
/// `radius` centred at the gateway (the origin).
pub fn sample_ppp<R: Rng + ?Sized>(density: f64, radius: f64, rng: &mut R) -> Vec<Point> {
    let n = poisson_count(density * std::f64::consts::PI * radius * radius, rng);
    (0..n)
        .map(|_| {
            let d = radius * rng.random::<f64>().sqrt();
            let theta = std::f64::consts::TAU * rng.random::<f64>();
            let (s, c) = theta.sin_cos();
            Point { x: d * c, y: d * s }
        })
        .collect()
}

/// Aggregate Rayleigh-faded interference at the origin from a PPP,
/// `Σ h·d^-α`. Inlines [`sample_ppp_distances`] to avoid allocating.
fn aggregate_interference<R: Rng + ?Sized>(
    count_dist: Option<&Poisson<f64>>,
    radius: f64,
    alpha: f64,
    rng: &mut R,
) -> f64 {
    let Some(dist) = count_dist else {
        return 0.0;
    };
    let n = dist.sample(rng) as u64;
    let r2 = radius * radius;
    let half_alpha = -alpha / 2.0;
    (0..n)
        .map(|_| {
            let d2 = r2 * rng.random::<f64>();
            let h: f64 = Exp1.sample(rng);
            h * d2.powf(half_alpha)
        })
        .sum()
}

fn count_distribution(density: f64, radius: f64) -> Option<Poisson<f64>> {
    let mean = density * std::f64::consts::PI * radius * radius;
    (mean > 0.0).then(|| Poisson::new(mean).expect("valid Poisson mean"))
}

/// Outage counts, one per entry of `ext_thresholds`, over `trials` trials.
///
/// Each trial draws one pair of interferer fields and then, per threshold,
/// fresh desired-link gains. Trial `t` uses ChaCha stream `t` under a key
/// derived from `seed`, so the result does not depend on the thread count.
fn outage_counts(
    params: &LinkParams,
    ext_thresholds: &[f64],
    trials: u64,
    sim_radius: f64,
    seed: u64,
    mode: FadingMode,
) -> Vec<u64> {
    let cosf = count_distribution(params.cosf_density(), sim_radius);
    let ext = count_distribution(params.lambda_i, sim_radius);
    let signal_loss = params.r.powf(-params.alpha);
    let base = ChaCha8Rng::seed_from_u64(seed);
    let n = ext_thresholds.len();

    (0..trials)
        .into_par_iter()
        .fold(
            || vec![0u64; n],
            |mut acc, t| {
                let mut rng = trial_rng(&base, t);
                let i_cosf =
                    aggregate_interference(cosf.as_ref(), sim_radius, params.alpha, &mut rng);
                let i_ext =
                    aggregate_interference(ext.as_ref(), sim_radius, params.alpha, &mut rng);
                for (slot, &beta_x) in acc.iter_mut().zip(ext_thresholds) {
                    let h_a: f64 = Exp1.sample(&mut rng);
                    let h_b: f64 = Exp1.sample(&mut rng);
                    let h_ext = match mode {
                        FadingMode::SharedGain => h_a,
                        FadingMode::IndependentPerCondition => h_b,
                    };
                    // an empty field never causes outage
                    let fail_cosf = i_cosf > 0.0 && h_a * signal_loss < params.beta_cosf * i_cosf;
                    let fail_ext = i_ext > 0.0 && h_ext * signal_loss < beta_x * i_ext;
                    if fail_cosf || fail_ext {
                        *slot += 1;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

pub fn simulate_outage(cfg: &OracleConfig, table: &SfTable) -> Result<OracleResult> {
    cfg.validate()?;
    let counts = outage_counts(
        &cfg.params,
        &[table.entry(cfg.sf).sir_threshold],
        cfg.trials,
        cfg.sim_radius,
        cfg.seed,
        cfg.fading_mode,
    );
    Ok(OracleResult::from_counts(counts[0], cfg.trials))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub lambda_sf: f64,
    pub lambda_i: f64,
    pub r: f64,
}

/// λ_SF ∈ {0.5, 1, 2, 4} × λ_I ∈ {0.01, 0.05, 0.1, 0.2} × r ∈ {0.5, 1.5, 3}.
pub fn default_grid() -> Vec<GridPoint> {
    cartesian_grid(
        &[0.5, 1.0, 2.0, 4.0],
        &[0.01, 0.05, 0.1, 0.2],
        &[0.5, 1.5, 3.0],
    )
}

pub fn cartesian_grid(lambda_sf: &[f64], lambda_i: &[f64], r: &[f64]) -> Vec<GridPoint> {
    let mut out = Vec::with_capacity(lambda_sf.len() * lambda_i.len() * r.len());
    for &ls in lambda_sf {
        for &li in lambda_i {
            for &rr in r {
                out.push(GridPoint {
                    lambda_sf: ls,
                    lambda_i: li,
                    r: rr,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub point: GridPoint,
    pub sf: SpreadingFactor,
    pub closed_canonical: f64,
    pub closed_printed: f64,
    pub empirical: f64,
    pub ci95: f64,
    pub pass_canonical: bool,
    pub pass_printed: bool,
}

/// Runs the oracle at every grid point for all six SFs (independent
/// per-condition fading, minimum disk) and compares against both
/// geometry-constant variants. One row per (point, SF), in grid order.
pub fn validate_grid(
    grid: &[GridPoint],
    template: &LinkParams,
    table: &SfTable,
    trials: u64,
    seed: u64,
) -> Result<Vec<ValidationRow>> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let thresholds: Vec<f64> = table.entries().iter().map(|e| e.sir_threshold).collect();
    let mut rows = Vec::with_capacity(grid.len() * 6);
    for point in grid {
        let params = LinkParams {
            lambda_sf: point.lambda_sf,
            lambda_i: point.lambda_i,
            r: point.r,
            ..*template
        };
        params.validate()?;
        let point_seed = derive_seed(
            seed,
            &[
                point.lambda_sf.to_bits(),
                point.lambda_i.to_bits(),
                point.r.to_bits(),
            ],
        );
        let counts = outage_counts(
            &params,
            &thresholds,
            trials,
            default_radius(params.r),
            point_seed,
            FadingMode::IndependentPerCondition,
        );
        for (sf, &count) in SpreadingFactor::ALL.iter().zip(&counts) {
            let result = OracleResult::from_counts(count, trials);
            let canon = LinkParams {
                k_variant: KVariant::Canonical,
                ..params
            };
            let printed = LinkParams {
                k_variant: KVariant::AsPrinted,
                ..params
            };
            let closed_canonical = total_outage(*sf, &canon, table);
            let closed_printed = total_outage(*sf, &printed, table);
            rows.push(ValidationRow {
                point: *point,
                sf: *sf,
                closed_canonical,
                closed_printed,
                empirical: result.empirical_outage,
                ci95: result.ci95_halfwidth,
                pass_canonical: result.agrees_with(closed_canonical),
                pass_printed: result.agrees_with(closed_printed),
            });
        }
    }
    Ok(rows)
}

pub fn write_validation_csv<W: Write>(rows: &[ValidationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "lambda_sf",
        "lambda_i",
        "r",
        "sf",
        "closed_canonical",
        "closed_printed",
        "empirical",
        "ci95",
        "pass_canonical",
        "pass_printed",
    ])?;
    for row in rows {
        w.write_record([
            row.point.lambda_sf.to_string(),
            row.point.lambda_i.to_string(),
            row.point.r.to_string(),
            row.sf.index().to_string(),
            format!("{:.8}", row.closed_canonical),
            format!("{:.8}", row.closed_printed),
            format!("{:.8}", row.empirical),
            format!("{:.8}", row.ci95),
            row.pass_canonical.to_string(),
            row.pass_printed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
