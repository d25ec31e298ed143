//! Time-based and event-based sampling of household power series.
//!
//! The event-based sampler emits a sample when the energy consumed since the
//! last emission reaches `e_lim`, or when the power moves by at least `p_lim`
//! away from the last emitted value. [`tune_thresholds`] raises those
//! thresholds until the event sampler uses fewer samples than a time-based
//! budget.

use std::fmt;
use std::io::Write;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: u32 = 24 * 60;

/// Uniformly gridded average power (kW) of one household.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    pub household_id: String,
    pub start: DateTime<Utc>,
    pub slot_minutes: u32,
    pub values: Vec<f64>,
}

impl PowerSeries {
    /// Checks that the slot divides a day and every value is finite and
    /// non-negative. Whole-day coverage is enforced by the corpus loader,
    /// not here, so short fixtures remain constructible.
    pub fn new(
        household_id: impl Into<String>,
        start: DateTime<Utc>,
        slot_minutes: u32,
        values: Vec<f64>,
    ) -> Result<Self> {
        if slot_minutes == 0 || MINUTES_PER_DAY % slot_minutes != 0 {
            return Err(Error::param(
                "slot_minutes",
                format!("slot must divide 24 h, got {slot_minutes} min"),
            ));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::param(
                "values",
                format!("slot {i}: power must be finite and >= 0, got {v}"),
            ));
        }
        Ok(Self {
            household_id: household_id.into(),
            start,
            slot_minutes,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Slot length in hours, for kW → kWh conversion.
    pub fn slot_hours(&self) -> f64 {
        f64::from(self.slot_minutes) / 60.0
    }

    pub fn slots_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.slot_minutes) as usize
    }

    pub fn timestamp(&self, slot_index: usize) -> DateTime<Utc> {
        self.start + Duration::minutes(i64::from(self.slot_minutes) * slot_index as i64)
    }

    pub fn grid(&self) -> Grid {
        Grid {
            household_id: self.household_id.clone(),
            start: self.start,
            slot_minutes: self.slot_minutes,
            len: self.values.len(),
        }
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

/// Shape of a [`PowerSeries`] without its values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub household_id: String,
    pub start: DateTime<Utc>,
    pub slot_minutes: u32,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Time,
    Energy,
    PowerChange,
}

impl Trigger {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Time => "time",
            Self::Energy => "energy",
            Self::PowerChange => "power_change",
        }
    }
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub slot_index: usize,
    /// kW
    pub power: f64,
    pub trigger: Trigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventThresholds {
    /// kWh
    pub e_lim: f64,
    /// kW
    pub p_lim: f64,
    /// kW
    pub p_step: f64,
}

impl Default for EventThresholds {
    fn default() -> Self {
        Self {
            e_lim: 2.0,
            p_lim: 1.0,
            p_step: 0.5,
        }
    }
}

impl EventThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("e_lim", self.e_lim),
            ("p_lim", self.p_lim),
            ("p_step", self.p_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Time,
    Event,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Time => "time",
            Self::Event => "event",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(Self::Time),
            "event" => Ok(Self::Event),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}` (expected time or event)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub household_id: String,
    pub strategy: Strategy,
    pub thresholds: Option<EventThresholds>,
    /// Strictly increasing `slot_index`.
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count(&self, trigger: Trigger) -> usize {
        self.samples.iter().filter(|s| s.trigger == trigger).count()
    }
}

/// One sample every `interval_minutes`, starting at slot 0.
pub fn time_sample(series: &PowerSeries, interval_minutes: u32) -> Result<SampleSet> {
    if interval_minutes == 0 || interval_minutes % series.slot_minutes != 0 {
        return Err(Error::Config(format!(
            "sampling interval {interval_minutes} min is not a positive multiple of the {} min slot",
            series.slot_minutes
        )));
    }
    let stride = (interval_minutes / series.slot_minutes) as usize;
    let samples = series
        .values
        .iter()
        .enumerate()
        .step_by(stride)
        .map(|(slot_index, &power)| Sample {
            slot_index,
            power,
            trigger: Trigger::Time,
        })
        .collect();
    Ok(SampleSet {
        household_id: series.household_id.clone(),
        strategy: Strategy::Time,
        thresholds: None,
        samples,
    })
}

/// Send-on-delta sampling.
///
/// Slot 0 is always emitted as a baseline (trigger `time`). It anchors the
/// power-change reference but does not reset the energy accumulator, so the
/// first energy sample accounts for energy from the start of the series.
/// Every later emission resets the accumulator. When both conditions fire in
/// one slot the sample is labelled `power_change`.
pub fn event_sample(series: &PowerSeries, th: &EventThresholds) -> SampleSet {
    let slot_hours = series.slot_hours();
    let mut samples = Vec::new();
    let mut energy = 0.0;
    let mut reference = 0.0;

    for (slot_index, &power) in series.values.iter().enumerate() {
        energy += power * slot_hours;
        let trigger = if slot_index == 0 {
            Some(Trigger::Time)
        } else if (power - reference).abs() >= th.p_lim {
            Some(Trigger::PowerChange)
        } else if energy >= th.e_lim {
            Some(Trigger::Energy)
        } else {
            None
        };
        if let Some(trigger) = trigger {
            samples.push(Sample {
                slot_index,
                power,
                trigger,
            });
            reference = power;
            if slot_index != 0 {
                energy = 0.0;
            }
        }
    }

    SampleSet {
        household_id: series.household_id.clone(),
        strategy: Strategy::Event,
        thresholds: Some(*th),
        samples,
    }
}

pub const TUNE_ITERATION_CAP: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub thresholds: EventThresholds,
    pub samples: SampleSet,
    /// Number of event-sampler evaluations.
    pub iterations: usize,
    /// Set when the cap was hit before the budget was met; `thresholds` and
    /// `samples` are then the evaluation with the fewest samples.
    pub capped: bool,
}

/// Threshold tuning against a time-sampling budget.
///
/// While the event sampler yields at least as many samples as `time_budget`,
/// `p_lim` grows by `p_step`; if the evaluated set had no power-change
/// samples, `e_lim` doubles and `p_lim` resets to `p_step` instead.
pub fn tune_thresholds(
    series: &PowerSeries,
    initial: &EventThresholds,
    time_budget: &SampleSet,
) -> Result<TuneOutcome> {
    initial.validate()?;
    let budget = time_budget.len();
    let mut th = *initial;
    let mut best: Option<(EventThresholds, SampleSet)> = None;

    for iteration in 1..=TUNE_ITERATION_CAP {
        let events = event_sample(series, &th);
        if events.len() < budget {
            return Ok(TuneOutcome {
                thresholds: th,
                samples: events,
                iterations: iteration,
                capped: false,
            });
        }
        let no_power_samples = events.count(Trigger::PowerChange) == 0;
        if best.as_ref().is_none_or(|(_, b)| events.len() < b.len()) {
            best = Some((th, events));
        }
        th.p_lim += th.p_step;
        if no_power_samples {
            th.e_lim *= 2.0;
            th.p_lim = th.p_step;
        }
    }

    let (thresholds, samples) = best.expect("at least one evaluation");
    log::warn!(
        "{}: threshold tuning hit the {TUNE_ITERATION_CAP}-iteration cap with {} samples (budget {budget})",
        series.household_id,
        samples.len()
    );
    Ok(TuneOutcome {
        thresholds,
        samples,
        iterations: TUNE_ITERATION_CAP,
        capped: true,
    })
}

/// Writes `household_id,slot_index,timestamp,power_kw,trigger` rows for each
/// set; `series` supplies the timestamps and must be parallel to `sets`.
pub fn write_samples_csv<'a, W: Write>(
    pairs: impl IntoIterator<Item = (&'a PowerSeries, &'a SampleSet)>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "household_id",
        "slot_index",
        "timestamp",
        "power_kw",
        "trigger",
    ])?;
    for (series, set) in pairs {
        for s in &set.samples {
            w.write_record([
                set.household_id.as_str(),
                &s.slot_index.to_string(),
                &crate::dataio::format_timestamp(series.timestamp(s.slot_index)),
                &s.power.to_string(),
                s.trigger.as_str(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn start() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2016, 10, 3, 0, 0, 0).unwrap()
    }

    fn series(values: Vec<f64>) -> PowerSeries {
        PowerSeries::new("h1", start(), 10, values).unwrap()
    }

    fn slots(set: &SampleSet) -> Vec<usize> {
        set.samples.iter().map(|s| s.slot_index).collect()
    }

    #[test]
    fn rejects_bad_series() {
        assert!(PowerSeries::new("h", start(), 7, vec![1.0]).is_err());
        assert!(PowerSeries::new("h", start(), 0, vec![1.0]).is_err());
        assert!(PowerSeries::new("h", start(), 10, vec![1.0, -0.1]).is_err());
        assert!(PowerSeries::new("h", start(), 10, vec![f64::NAN]).is_err());
    }

    #[test]
    fn time_sampling_counts() {
        let day = series(vec![1.0; 144]);
        let set = time_sample(&day, 30).unwrap();
        assert_eq!(set.len(), 48);
        assert_eq!(&slots(&set)[..3], &[0, 3, 6]);
        assert!(set.samples.iter().all(|s| s.trigger == Trigger::Time));

        assert_eq!(time_sample(&day, 10).unwrap().len(), 144);
        let week = series(vec![1.0; 144 * 7]);
        assert_eq!(time_sample(&week, 30).unwrap().len(), 336);

        assert!(matches!(time_sample(&day, 25), Err(Error::Config(_))));
        assert!(time_sample(&day, 0).is_err());
    }

    #[test]
    fn constant_load_triggers_energy_every_two_hours() {
        let day = series(vec![1.0; 144]);
        let th = EventThresholds {
            e_lim: 2.0,
            p_lim: 1000.0,
            p_step: 0.5,
        };
        let set = event_sample(&day, &th);
        assert_eq!(set.len(), 13);
        assert_eq!(set.samples[0].trigger, Trigger::Time);
        let energy: Vec<usize> = set
            .samples
            .iter()
            .filter(|s| s.trigger == Trigger::Energy)
            .map(|s| s.slot_index)
            .collect();
        assert_eq!(energy.len(), 12);
        assert!(energy.windows(2).all(|w| w[1] - w[0] == 12));
        assert_eq!(energy[0], 11);
        assert_eq!(*energy.last().unwrap(), 143);
    }

    #[test]
    fn all_zero_series_only_has_baseline() {
        let set = event_sample(&series(vec![0.0; 144]), &EventThresholds::default());
        assert_eq!(set.len(), 1);
        assert_eq!(set.samples[0].slot_index, 0);
    }

    #[test]
    fn power_step_triggers_power_change() {
        let mut v = vec![0.2; 10];
        v.extend([1.8; 10]);
        let set = event_sample(&series(v), &EventThresholds::default());
        let step = set.samples.iter().find(|s| s.slot_index == 10).unwrap();
        assert_eq!(step.trigger, Trigger::PowerChange);
        assert_eq!(step.power, 1.8);
    }

    #[test]
    fn change_is_measured_from_last_emitted_sample() {
        // 0.6 kW increments: no single slot-to-slot change reaches 1 kW but
        // the drift from the baseline does.
        let set = event_sample(
            &series(vec![0.0, 0.6, 1.2, 1.8]),
            &EventThresholds {
                e_lim: 100.0,
                p_lim: 1.0,
                p_step: 0.5,
            },
        );
        assert_eq!(slots(&set), vec![0, 2]);
    }

    #[test]
    fn both_triggers_in_one_slot_label_power_change() {
        // energy reaches 2 kWh exactly at slot 1 where the power also jumps
        let set = event_sample(
            &series(vec![0.0, 12.0]),
            &EventThresholds {
                e_lim: 2.0,
                p_lim: 1.0,
                p_step: 0.5,
            },
        );
        assert_eq!(set.len(), 2);
        assert_eq!(set.samples[1].trigger, Trigger::PowerChange);
    }

    #[test]
    fn tuning_leaves_small_sets_alone() {
        let day = series(vec![1.0; 144]);
        let budget = time_sample(&day, 30).unwrap();
        let out = tune_thresholds(&day, &EventThresholds::default(), &budget).unwrap();
        assert_eq!(out.thresholds, EventThresholds::default());
        assert_eq!(out.samples.len(), 13);
        assert_eq!(out.iterations, 1);
        assert!(!out.capped);
    }

    /// 20 slots alternating 0/3 kW. Budget: slots 0,3,…,18 → 7 samples.
    /// p_lim 1.0 … 3.0: every slot differs from the last emitted value by
    /// 3 kW → 20 samples each time (5 evaluations). p_lim 3.5: no power
    /// changes; 0.5 kWh per 3 kW slot gives energy samples at slots 7 and
    /// 15 → 3 samples, under budget.
    #[test]
    fn tuning_raises_power_threshold() {
        let toy = series(
            (0..20)
                .map(|i| if i % 2 == 0 { 0.0 } else { 3.0 })
                .collect(),
        );
        let budget = time_sample(&toy, 30).unwrap();
        assert_eq!(budget.len(), 7);
        let out = tune_thresholds(&toy, &EventThresholds::default(), &budget).unwrap();
        assert_eq!(out.iterations, 6);
        assert_eq!(out.thresholds.p_lim, 3.5);
        assert_eq!(out.thresholds.e_lim, 2.0);
        assert_eq!(slots(&out.samples), vec![0, 7, 15]);
        assert!(!out.capped);
    }

    /// 20 slots at a constant 6 kW (1 kWh per slot). e_lim 2: energy samples
    /// at 1,3,…,19 → 11 ≥ 7 with no power changes, so e_lim doubles to 4 and
    /// p_lim resets to 0.5. e_lim 4: samples at 0,3,7,11,15,19 → 6 < 7.
    #[test]
    fn tuning_doubles_energy_limit_without_power_changes() {
        let toy = series(vec![6.0; 20]);
        let budget = time_sample(&toy, 30).unwrap();
        let out = tune_thresholds(&toy, &EventThresholds::default(), &budget).unwrap();
        assert_eq!(out.iterations, 2);
        assert_eq!(out.thresholds.e_lim, 4.0);
        assert_eq!(out.thresholds.p_lim, 0.5);
        assert_eq!(slots(&out.samples), vec![0, 3, 7, 11, 15, 19]);
    }

    #[test]
    fn tuning_caps_iterations() {
        // one slot: the baseline alone meets a budget of one, forever
        let one = series(vec![1.0]);
        let budget = time_sample(&one, 30).unwrap();
        assert_eq!(budget.len(), 1);
        let out = tune_thresholds(&one, &EventThresholds::default(), &budget).unwrap();
        assert!(out.capped);
        assert_eq!(out.iterations, TUNE_ITERATION_CAP);
        assert_eq!(out.samples.len(), 1);
    }

    #[test]
    fn tuning_rejects_bad_thresholds() {
        let day = series(vec![1.0; 144]);
        let budget = time_sample(&day, 30).unwrap();
        let bad = EventThresholds {
            p_step: 0.0,
            ..EventThresholds::default()
        };
        assert!(tune_thresholds(&day, &bad, &budget).is_err());
    }

    #[test]
    fn samples_csv_layout() {
        let day = series(vec![1.0, 2.5, 1.0]);
        let set = event_sample(&day, &EventThresholds::default());
        let mut buf = Vec::new();
        write_samples_csv([(&day, &set)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "household_id,slot_index,timestamp,power_kw,trigger"
        );
        assert_eq!(lines[1], "h1,0,2016-10-03T00:00:00Z,1,time");
        assert_eq!(lines[2], "h1,1,2016-10-03T00:10:00Z,2.5,power_change");
    }
}
