//! Closed-form outage probability and effective bit-rate of a LoRa uplink.
//!
//! The reference smart-meter sits `r` km from the gateway. Two independent
//! Poisson fields interfere with it:
//!
//! * co-SF LoRa devices, thinned by activity (`p_active`) and SF allocation
//!   (`p_sf`) to density `λ = p_sf · p_active · lambda_sf`, decoded against
//!   the co-SF capture threshold `beta_cosf`;
//! * non-LoRa devices at density `lambda_i`, treated as noise and decoded
//!   against the per-SF sensitivity threshold from the [`SfTable`].
//!
//! With Rayleigh fading and path loss `r^-α`, each source contributes an
//! exponential success factor `exp(-k·density·r²·β^(2/α))`.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// LoRa spreading factor, SF7 through SF12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SpreadingFactor(u8);

impl SpreadingFactor {
    pub const MIN: u8 = 7;
    pub const MAX: u8 = 12;

    pub const ALL: [SpreadingFactor; 6] = [
        SpreadingFactor(7),
        SpreadingFactor(8),
        SpreadingFactor(9),
        SpreadingFactor(10),
        SpreadingFactor(11),
        SpreadingFactor(12),
    ];

    pub fn new(index: u8) -> Result<Self> {
        if (Self::MIN..=Self::MAX).contains(&index) {
            Ok(Self(index))
        } else {
            Err(Error::UnknownSpreadingFactor(index))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// Position in [`SpreadingFactor::ALL`].
    pub fn ordinal(self) -> usize {
        usize::from(self.0 - Self::MIN)
    }
}

impl TryFrom<u8> for SpreadingFactor {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Self::new(value)
    }
}

impl From<SpreadingFactor> for u8 {
    fn from(sf: SpreadingFactor) -> u8 {
        sf.0
    }
}

impl fmt::Display for SpreadingFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SF{}", self.0)
    }
}

/// One row of the SF table: nominal bit-rate and the SIR threshold against
/// non-LoRa interference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SfEntry {
    pub sf: SpreadingFactor,
    /// kb/s
    pub bit_rate: f64,
    pub sir_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfTable {
    entries: [SfEntry; 6],
}

const DEFAULT_TABLE: [(u8, f64, f64); 6] = [
    (7, 5.47, 0.25),
    (8, 3.13, 0.125),
    (9, 1.76, 0.06),
    (10, 0.98, 0.03),
    (11, 0.54, 0.017),
    (12, 0.29, 0.01),
];

impl Default for SfTable {
    fn default() -> Self {
        let entries = DEFAULT_TABLE.map(|(sf, bit_rate, sir_threshold)| SfEntry {
            sf: SpreadingFactor(sf),
            bit_rate,
            sir_threshold,
        });
        Self { entries }
    }
}

impl SfTable {
    /// Builds a table from six entries in any order. Unless
    /// `allow_non_monotone` is set, bit-rate and threshold must both be
    /// strictly decreasing in SF.
    pub fn new(entries: Vec<SfEntry>, allow_non_monotone: bool) -> Result<Self> {
        if entries.len() != 6 {
            return Err(Error::InvalidSfTable(format!(
                "expected 6 entries, got {}",
                entries.len()
            )));
        }
        let mut slots: [Option<SfEntry>; 6] = [None; 6];
        for e in entries {
            if !(e.bit_rate.is_finite() && e.bit_rate > 0.0) {
                return Err(Error::InvalidSfTable(format!(
                    "{}: bit rate must be positive, got {}",
                    e.sf, e.bit_rate
                )));
            }
            if !(e.sir_threshold.is_finite() && e.sir_threshold > 0.0) {
                return Err(Error::InvalidSfTable(format!(
                    "{}: SIR threshold must be positive, got {}",
                    e.sf, e.sir_threshold
                )));
            }
            let slot = &mut slots[e.sf.ordinal()];
            if slot.is_some() {
                return Err(Error::InvalidSfTable(format!("{} listed twice", e.sf)));
            }
            *slot = Some(e);
        }
        // six entries, no duplicates, so every slot is filled
        let entries = slots.map(|s| s.expect("slot filled"));
        if !allow_non_monotone {
            for w in entries.windows(2) {
                if w[1].bit_rate >= w[0].bit_rate {
                    return Err(Error::InvalidSfTable(format!(
                        "bit rate must decrease with SF ({} -> {})",
                        w[0].sf, w[1].sf
                    )));
                }
                if w[1].sir_threshold >= w[0].sir_threshold {
                    return Err(Error::InvalidSfTable(format!(
                        "SIR threshold must decrease with SF ({} -> {})",
                        w[0].sf, w[1].sf
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    /// Reads the override format: header `sf,bit_rate_kbps,sir_threshold`
    /// followed by six rows.
    pub fn from_csv<R: Read>(reader: R, allow_non_monotone: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["sf", "bit_rate_kbps", "sir_threshold"] {
            return Err(Error::InvalidSfTable(format!(
                "expected header `sf,bit_rate_kbps,sir_threshold`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = Vec::with_capacity(6);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |idx: usize| rec.get(idx).unwrap_or("");
            let parse = |idx: usize| -> Result<f64> {
                field(idx).parse::<f64>().map_err(|_| {
                    Error::InvalidSfTable(format!("row {}: bad number `{}`", i + 1, field(idx)))
                })
            };
            let sf: u8 = field(0).parse().map_err(|_| {
                Error::InvalidSfTable(format!("row {}: bad SF `{}`", i + 1, field(0)))
            })?;
            entries.push(SfEntry {
                sf: SpreadingFactor::new(sf)?,
                bit_rate: parse(1)?,
                sir_threshold: parse(2)?,
            });
        }
        Self::new(entries, allow_non_monotone)
    }

    pub fn entries(&self) -> &[SfEntry; 6] {
        &self.entries
    }

    pub fn entry(&self, sf: SpreadingFactor) -> &SfEntry {
        &self.entries[sf.ordinal()]
    }

    pub fn max_bit_rate(&self) -> f64 {
        self.entries.iter().map(|e| e.bit_rate).fold(0.0, f64::max)
    }
}

/// Which constant multiplies the interference term in the exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KVariant {
    /// `π Γ(1+2/α) Γ(1−2/α)`, the Laplace functional of a Rayleigh-faded
    /// Poisson field.
    #[default]
    Canonical,
    /// `π Γ(1+1/α) Γ(1−1/α)`.
    AsPrinted,
}

impl std::str::FromStr for KVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(Self::Canonical),
            "as_printed" | "as-printed" => Ok(Self::AsPrinted),
            other => Err(Error::param(
                "k_variant",
                format!("expected `canonical` or `as_printed`, got `{other}`"),
            )),
        }
    }
}

impl fmt::Display for KVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Canonical => "canonical",
            Self::AsPrinted => "as_printed",
        })
    }
}

/// Every input of the outage model. Densities are devices/km², distances km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub alpha: f64,
    pub beta_cosf: f64,
    pub p_active: f64,
    pub p_sf: f64,
    pub lambda_sf: f64,
    pub lambda_i: f64,
    pub r: f64,
    pub k_variant: KVariant,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            beta_cosf: 4.0,
            p_active: 0.025,
            p_sf: 1.0 / 6.0,
            lambda_sf: 0.5,
            lambda_i: 0.05,
            r: 1.5,
            k_variant: KVariant::Canonical,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        fn nonneg(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ))
            }
        }
        fn prob(name: &'static str, v: f64) -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::param(name, format!("must lie in [0, 1], got {v}")))
            }
        }
        if !(self.alpha.is_finite() && self.alpha > 2.0) {
            return Err(Error::param(
                "alpha",
                format!("path-loss exponent must exceed 2, got {}", self.alpha),
            ));
        }
        if !(self.beta_cosf.is_finite() && self.beta_cosf > 0.0) {
            return Err(Error::param(
                "beta_cosf",
                format!("must be positive, got {}", self.beta_cosf),
            ));
        }
        prob("p_active", self.p_active)?;
        prob("p_sf", self.p_sf)?;
        nonneg("lambda_sf", self.lambda_sf)?;
        nonneg("lambda_i", self.lambda_i)?;
        nonneg("r", self.r)
    }

    /// Density of active co-SF interferers, `p_sf · p_active · lambda_sf`.
    pub fn cosf_density(&self) -> f64 {
        self.p_sf * self.p_active * self.lambda_sf
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = r;
        self
    }
}

pub fn geometry_constant(alpha: f64, variant: KVariant) -> Result<f64> {
    if alpha.is_nan() || alpha <= 2.0 {
        return Err(Error::param(
            "alpha",
            format!("interference diverges for alpha <= 2 (got {alpha})"),
        ));
    }
    Ok(k_unchecked(alpha, variant))
}

fn k_unchecked(alpha: f64, variant: KVariant) -> f64 {
    let delta = match variant {
        KVariant::Canonical => 2.0 / alpha,
        KVariant::AsPrinted => 1.0 / alpha,
    };
    std::f64::consts::PI * libm::tgamma(1.0 + delta) * libm::tgamma(1.0 - delta)
}

/// `1 - exp(-x)` without cancellation near zero.
fn outage_from_exponent(x: f64) -> f64 {
    (-(-x).exp_m1()).clamp(0.0, 1.0)
}

fn cosf_exponent(params: &LinkParams, k: f64) -> f64 {
    k * params.cosf_density() * params.r * params.r * params.beta_cosf.powf(2.0 / params.alpha)
}

fn external_exponent(params: &LinkParams, k: f64, sir_threshold: f64) -> f64 {
    k * params.lambda_i * params.r * params.r * sir_threshold.powf(2.0 / params.alpha)
}

fn debug_check(params: &LinkParams) {
    debug_assert!(params.validate().is_ok(), "invalid LinkParams: {params:?}");
}

/// Outage caused by co-SF LoRa interference alone.
pub fn lora_outage(params: &LinkParams) -> f64 {
    debug_check(params);
    let k = k_unchecked(params.alpha, params.k_variant);
    outage_from_exponent(cosf_exponent(params, k))
}

/// Outage caused by non-LoRa interference alone, for a link on `sf`.
pub fn external_outage(sf: SpreadingFactor, params: &LinkParams, table: &SfTable) -> f64 {
    debug_check(params);
    let k = k_unchecked(params.alpha, params.k_variant);
    outage_from_exponent(external_exponent(params, k, table.entry(sf).sir_threshold))
}

/// Outage of a link on `sf` from either interference source.
pub fn total_outage(sf: SpreadingFactor, params: &LinkParams, table: &SfTable) -> f64 {
    debug_check(params);
    let k = k_unchecked(params.alpha, params.k_variant);
    outage_from_exponent(
        cosf_exponent(params, k) + external_exponent(params, k, table.entry(sf).sir_threshold),
    )
}

pub fn per_sf_outage(params: &LinkParams, table: &SfTable) -> [f64; 6] {
    SpreadingFactor::ALL.map(|sf| total_outage(sf, params, table))
}

/// SF-allocation-weighted average outage, `p_sf · Σ_x P_out,x`.
pub fn avg_outage(params: &LinkParams, table: &SfTable) -> f64 {
    let sum: f64 = per_sf_outage(params, table).iter().sum();
    (params.p_sf * sum).clamp(0.0, 1.0)
}

/// kb/s actually delivered on `sf`: nominal rate times success probability.
pub fn effective_bitrate(sf: SpreadingFactor, params: &LinkParams, table: &SfTable) -> f64 {
    (1.0 - total_outage(sf, params, table)) * table.entry(sf).bit_rate
}

pub fn avg_effective_bitrate(params: &LinkParams, table: &SfTable) -> f64 {
    let sum: f64 = SpreadingFactor::ALL
        .iter()
        .map(|&sf| effective_bitrate(sf, params, table))
        .sum();
    params.p_sf * sum
}

/// Parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    LambdaSf,
    LambdaI,
    R,
}

impl SweepAxis {
    fn apply(self, template: &LinkParams, value: f64) -> LinkParams {
        let mut p = *template;
        match self {
            Self::LambdaSf => p.lambda_sf = value,
            Self::LambdaI => p.lambda_i = value,
            Self::R => p.r = value,
        }
        p
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda_sf" | "lambda-sf" => Ok(Self::LambdaSf),
            "lambda_i" | "lambda-i" => Ok(Self::LambdaI),
            "r" => Ok(Self::R),
            other => Err(Error::UnknownAxis(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepMetric {
    #[default]
    Outage,
    /// Effective bit-rate, kb/s.
    Bitrate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub per_sf: [f64; 6],
    pub average: f64,
}

/// Evaluates the model over `grid` along `axis`.
///
/// With `single_sf` set the per-SF columns assume every meter uses that one
/// SF (`p_sf = 1` for the co-SF density); the average column always uses the
/// template's `p_sf`.
pub fn sweep(
    template: &LinkParams,
    table: &SfTable,
    axis: SweepAxis,
    grid: &[f64],
    metric: SweepMetric,
    single_sf: bool,
) -> Result<Vec<SweepRow>> {
    grid.iter()
        .map(|&value| {
            let params = axis.apply(template, value);
            params.validate()?;
            let column_params = if single_sf {
                LinkParams {
                    p_sf: 1.0,
                    ..params
                }
            } else {
                params
            };
            let (per_sf, average) = match metric {
                SweepMetric::Outage => (
                    per_sf_outage(&column_params, table),
                    avg_outage(&params, table),
                ),
                SweepMetric::Bitrate => (
                    SpreadingFactor::ALL.map(|sf| effective_bitrate(sf, &column_params, table)),
                    avg_effective_bitrate(&params, table),
                ),
            };
            Ok(SweepRow {
                axis_value: value,
                per_sf,
                average,
            })
        })
        .collect()
}

/// `n` evenly spaced values from `from` to `to` inclusive.
pub fn linspace(from: f64, to: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![from],
        _ => {
            let last = (n - 1) as f64;
            // i/last scaling keeps round grids round (0.1 steps land on 3.9, not 3.9000000000000004)
            (0..n)
                .map(|i| from + (to - from) * i as f64 / last)
                .collect()
        }
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "axis_value",
        "sf7",
        "sf8",
        "sf9",
        "sf10",
        "sf11",
        "sf12",
        "average",
    ])?;
    for row in rows {
        let mut rec = Vec::with_capacity(8);
        rec.push(format!("{}", row.axis_value));
        rec.extend(row.per_sf.iter().map(|v| format!("{v:.10}")));
        rec.push(format!("{:.10}", row.average));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
