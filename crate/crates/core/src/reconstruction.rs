//! Loss simulation, linear-interpolation reconstruction and CV(RMSE) scoring.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sampling::{Grid, PowerSeries, Sample, SampleSet, Strategy};
use crate::seeding::{hash_str, rng_for};
use crate::stats::{median, quantile_sorted, sorted_copy};

/// Independent per-sample loss with a fixed probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossModel {
    pub outage_probability: f64,
    pub seed: u64,
}

impl LossModel {
    pub fn new(outage_probability: f64, seed: u64) -> Result<Self> {
        check_probability(outage_probability)?;
        Ok(Self {
            outage_probability,
            seed,
        })
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::param(
            "outage_probability",
            format!("must lie in [0, 1], got {p}"),
        ))
    }
}

/// Drops each sample independently with the model's probability. Order is
/// preserved and the outcome depends only on the seed.
pub fn apply_loss(samples: &SampleSet, loss: &LossModel) -> SampleSet {
    let mut rng = rng_for(loss.seed, &[]);
    let kept = samples
        .samples
        .iter()
        .filter(|_| rng.random::<f64>() >= loss.outage_probability)
        .copied()
        .collect();
    SampleSet {
        samples: kept,
        ..samples.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub series: PowerSeries,
    /// No sample was received; `series` is all zeros.
    pub empty: bool,
}

/// Fills `out` by linear interpolation between samples, holding the first
/// and last values outside their span. `samples` are positioned relative to
/// `out[0]` via `offset` (a sample at `slot_index` lands at
/// `slot_index - offset`).
fn interpolate_into(samples: &[Sample], offset: usize, out: &mut [f64]) {
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
        out.fill(0.0);
        return;
    };
    let first_pos = (first.slot_index - offset).min(out.len());
    out[..first_pos].fill(first.power);
    for pair in samples.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (ia, ib) = (a.slot_index - offset, b.slot_index - offset);
        let span = (ib - ia) as f64;
        for (j, slot) in out[ia..ib].iter_mut().enumerate() {
            *slot = a.power + (b.power - a.power) * (j as f64 / span);
        }
    }
    let last_pos = last.slot_index - offset;
    if last_pos < out.len() {
        out[last_pos..].fill(last.power);
    }
}

/// Rebuilds a series on `grid` from whatever samples arrived.
pub fn reconstruct(received: &SampleSet, grid: &Grid) -> Reconstruction {
    let mut values = vec![0.0; grid.len];
    let in_grid: Vec<Sample> = received
        .samples
        .iter()
        .filter(|s| s.slot_index < grid.len)
        .copied()
        .collect();
    interpolate_into(&in_grid, 0, &mut values);
    Reconstruction {
        series: PowerSeries {
            household_id: grid.household_id.clone(),
            start: grid.start,
            slot_minutes: grid.slot_minutes,
            values,
        },
        empty: in_grid.is_empty(),
    }
}

/// Day-by-day reconstruction: each day is interpolated from its own samples
/// only, with hold extrapolation at both day edges.
pub fn reconstruct_daily(received: &SampleSet, grid: &Grid) -> Vec<f64> {
    let per_day = (crate::sampling::MINUTES_PER_DAY / grid.slot_minutes) as usize;
    let mut values = vec![0.0; grid.len];
    let mut rest = received.samples.as_slice();
    for (day, chunk) in values.chunks_mut(per_day).enumerate() {
        let day_start = day * per_day;
        let day_end = day_start + chunk.len();
        let split = rest.partition_point(|s| s.slot_index < day_end);
        let (today, tail) = rest.split_at(split);
        let skip = today.partition_point(|s| s.slot_index < day_start);
        interpolate_into(&today[skip..], day_start, chunk);
        rest = tail;
    }
    values
}

fn cv_rmse_values(original: &[f64], reconstructed: &[f64]) -> Result<f64> {
    let n = original.len() as f64;
    let mean = original.iter().sum::<f64>() / n;
    if mean.is_nan() || mean <= 0.0 {
        return Err(Error::ZeroMean);
    }
    let mse = original
        .iter()
        .zip(reconstructed)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    Ok(mse.sqrt() / mean)
}

/// RMSE over all slots divided by the mean of `original`.
pub fn cv_rmse(original: &PowerSeries, reconstructed: &PowerSeries) -> Result<f64> {
    if original.len() != reconstructed.len()
        || original.slot_minutes != reconstructed.slot_minutes
        || original.start != reconstructed.start
    {
        return Err(Error::GridMismatch(format!(
            "{} slots of {} min from {} vs {} slots of {} min from {}",
            original.len(),
            original.slot_minutes,
            original.start,
            reconstructed.len(),
            reconstructed.slot_minutes,
            reconstructed.start
        )));
    }
    if original.is_empty() {
        return Err(Error::ZeroMean);
    }
    cv_rmse_values(&original.values, &reconstructed.values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub min: f64,
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let s = sorted_copy(values);
        Self {
            min: s.first().copied().unwrap_or(f64::NAN),
            p10: quantile_sorted(&s, 0.10),
            p25: quantile_sorted(&s, 0.25),
            p50: quantile_sorted(&s, 0.50),
            p75: quantile_sorted(&s, 0.75),
            p90: quantile_sorted(&s, 0.90),
            max: s.last().copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub household_id: String,
    pub strategy: Strategy,
    pub outage_probability: f64,
    /// One CV(RMSE) per Monte Carlo run, in run order.
    pub cv_rmse_samples: Vec<f64>,
}

impl EvaluationResult {
    pub fn runs(&self) -> usize {
        self.cv_rmse_samples.len()
    }

    pub fn summary(&self) -> Summary {
        Summary::of(&self.cv_rmse_samples)
    }

    /// The household's representative error at this outage level.
    pub fn median(&self) -> f64 {
        median(&self.cv_rmse_samples)
    }
}

/// Scores every sample set at every outage level over `runs` loss
/// realisations. Each run drops samples, reconstructs day by day and
/// computes one CV(RMSE) over the whole series. Run `i` at outage `p` for
/// strategy `s` is seeded from `(seed, household, s, p, i)`.
pub fn evaluate(
    series: &PowerSeries,
    sets: &[SampleSet],
    outage_grid: &[f64],
    runs: usize,
    seed: u64,
) -> Result<Vec<EvaluationResult>> {
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    for &p in outage_grid {
        check_probability(p)?;
    }
    if series.is_empty() || series.mean().is_nan() || series.mean() <= 0.0 {
        return Err(Error::ZeroMean);
    }
    let grid = series.grid();
    let household = hash_str(&series.household_id);
    let mut results = Vec::with_capacity(sets.len() * outage_grid.len());
    for set in sets {
        for &p in outage_grid {
            let cv_rmse_samples = (0..runs)
                .into_par_iter()
                .map(|run| {
                    let loss = LossModel {
                        outage_probability: p,
                        seed: crate::seeding::derive_seed(
                            seed,
                            &[household, set.strategy as u64, p.to_bits(), run as u64],
                        ),
                    };
                    let received = apply_loss(set, &loss);
                    let rebuilt = reconstruct_daily(&received, &grid);
                    cv_rmse_values(&series.values, &rebuilt)
                })
                .collect::<Result<Vec<f64>>>()?;
            results.push(EvaluationResult {
                household_id: series.household_id.clone(),
                strategy: set.strategy,
                outage_probability: p,
                cv_rmse_samples,
            });
        }
    }
    Ok(results)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandRow {
    pub outage: f64,
    pub strategy: Strategy,
    pub households: usize,
    pub bands: Summary,
}

/// Distribution over households of `time − event` CV(RMSE) at one outage
/// level. Positive values mean event-based sampling reconstructed better.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeRow {
    pub outage: f64,
    pub households: usize,
    pub bands: Summary,
    pub fraction_event_better: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusReport {
    pub bands: Vec<BandRow>,
    pub relative: Vec<RelativeRow>,
}

/// Per-outage, per-strategy percentile bands of household CV(RMSE) (each
/// household represented by its median over runs), plus the time-minus-event
/// difference table for households evaluated under both strategies.
pub fn corpus_report(results: &[EvaluationResult]) -> CorpusReport {
    let mut outages: Vec<f64> = results.iter().map(|r| r.outage_probability).collect();
    outages.sort_by(f64::total_cmp);
    outages.dedup_by(|a, b| a.to_bits() == b.to_bits());

    let mut by_key: HashMap<(u64, Strategy), Vec<(&str, f64)>> = HashMap::new();
    for r in results {
        by_key
            .entry((r.outage_probability.to_bits(), r.strategy))
            .or_default()
            .push((&r.household_id, r.median()));
    }

    let mut report = CorpusReport::default();
    for &p in &outages {
        for strategy in [Strategy::Time, Strategy::Event] {
            if let Some(entries) = by_key.get(&(p.to_bits(), strategy)) {
                let values: Vec<f64> = entries.iter().map(|e| e.1).collect();
                report.bands.push(BandRow {
                    outage: p,
                    strategy,
                    households: values.len(),
                    bands: Summary::of(&values),
                });
            }
        }
        let (Some(time), Some(event)) = (
            by_key.get(&(p.to_bits(), Strategy::Time)),
            by_key.get(&(p.to_bits(), Strategy::Event)),
        ) else {
            continue;
        };
        let event_by_id: HashMap<&str, f64> = event.iter().copied().collect();
        let diffs: Vec<f64> = time
            .iter()
            .filter_map(|(id, t)| event_by_id.get(id).map(|e| t - e))
            .collect();
        if diffs.is_empty() {
            continue;
        }
        let better = diffs.iter().filter(|d| **d > 0.0).count();
        report.relative.push(RelativeRow {
            outage: p,
            households: diffs.len(),
            bands: Summary::of(&diffs),
            fraction_event_better: better as f64 / diffs.len() as f64,
        });
    }
    report
}

pub fn write_results_csv<W: Write>(results: &[EvaluationResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["household_id", "strategy", "outage", "run", "cv_rmse"])?;
    for r in results {
        for (run, cv) in r.cv_rmse_samples.iter().enumerate() {
            w.write_record([
                r.household_id.as_str(),
                r.strategy.as_str(),
                &r.outage_probability.to_string(),
                &run.to_string(),
                &cv.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_results_csv`]. Rows are regrouped by
/// (household, strategy, outage) in first-seen order; runs are ordered by
/// their run index.
pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<EvaluationResult>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != ["household_id", "strategy", "outage", "run", "cv_rmse"] {
        return Err(Error::Config(format!(
            "evaluation results: expected header `household_id,strategy,outage,run,cv_rmse`, got `{}`",
            header.join(",")
        )));
    }
    let mut order: Vec<(String, Strategy, u64)> = Vec::new();
    let mut runs: HashMap<(String, Strategy, u64), Vec<(usize, f64)>> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad =
            |what: &str| Error::Config(format!("evaluation results row {}: bad {what}", i + 1));
        let id = rec.get(0).ok_or_else(|| bad("household_id"))?.to_owned();
        let strategy: Strategy = rec.get(1).unwrap_or("").parse()?;
        let outage: f64 = rec
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("outage"))?;
        check_probability(outage)?;
        let run: usize = rec
            .get(3)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("run"))?;
        let cv: f64 = rec
            .get(4)
            .and_then(|s| s.parse().ok())
            .filter(|v: &f64| *v >= 0.0)
            .ok_or_else(|| bad("cv_rmse"))?;
        let key = (id, strategy, outage.to_bits());
        let entry = runs.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push((run, cv));
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let mut rs = runs.remove(&key).unwrap_or_default();
            rs.sort_by_key(|r| r.0);
            EvaluationResult {
                household_id: key.0,
                strategy: key.1,
                outage_probability: f64::from_bits(key.2),
                cv_rmse_samples: rs.into_iter().map(|r| r.1).collect(),
            }
        })
        .collect())
}

fn summary_fields(s: &Summary) -> [String; 7] {
    [s.p10, s.p25, s.p50, s.p75, s.p90, s.min, s.max].map(|v| format!("{v:.8}"))
}

pub fn write_report_csv<W: Write>(report: &CorpusReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "outage", "strategy", "p10", "p25", "p50", "p75", "p90", "min", "max",
    ])?;
    for row in &report.bands {
        let mut rec = vec![row.outage.to_string(), row.strategy.to_string()];
        rec.extend(summary_fields(&row.bands));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_relative_csv<W: Write>(report: &CorpusReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "outage",
        "households",
        "p10",
        "p25",
        "p50",
        "p75",
        "p90",
        "min",
        "max",
        "fraction_event_better",
    ])?;
    for row in &report.relative {
        let mut rec = vec![row.outage.to_string(), row.households.to_string()];
        rec.extend(summary_fields(&row.bands));
        rec.push(format!("{:.6}", row.fraction_event_better));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
