//! Household consumption corpora: CSV ingestion, persistence and a synthetic
//! load generator.
//!
//! One CSV file per household, header `timestamp,household_id,power_kw`,
//! ISO-8601 UTC timestamps on exact 10-minute boundaries, covering whole days
//! with no gaps. Rows may appear in any order; they are sorted on load.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveTime, SecondsFormat, TimeZone, Timelike, Utc};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sampling::{PowerSeries, MINUTES_PER_DAY};
use crate::seeding::rng_for;

pub const CORPUS_SLOT_MINUTES: u32 = 10;
pub const CSV_HEADER: [&str; 3] = ["timestamp", "household_id", "power_kw"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub household_id: String,
    pub path: PathBuf,
    pub days: usize,
    /// Hex SHA-256 of the file contents.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub households: Vec<ManifestEntry>,
    pub slot_minutes: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    /// Parallel to `manifest.households`.
    pub series: Vec<PowerSeries>,
}

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .ok()
        .filter(|dt| dt.offset().local_minus_utc() == 0)
        .map(|dt| dt.with_timezone(&Utc))
}

/// Loads a single file or every `*.csv` file in a directory (sorted by
/// name). Any malformed file aborts the whole load.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "csv"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };

    let loaded = files
        .par_iter()
        .map(|f| load_series_file(f))
        .collect::<Result<Vec<_>>>()?;

    let mut seen = HashSet::new();
    let mut households = Vec::with_capacity(loaded.len());
    let mut series = Vec::with_capacity(loaded.len());
    for (entry, s) in loaded {
        if !seen.insert(entry.household_id.clone()) {
            return Err(Error::Load {
                path: entry.path,
                row: 0,
                reason: format!(
                    "household `{}` appears in more than one file",
                    entry.household_id
                ),
            });
        }
        households.push(entry);
        series.push(s);
    }
    Ok(Corpus {
        manifest: CorpusManifest {
            households,
            slot_minutes: CORPUS_SLOT_MINUTES,
        },
        series,
    })
}

/// Parses and validates one household file.
pub fn load_series_file(path: &Path) -> Result<(ManifestEntry, PowerSeries)> {
    let bytes = fs::read(path)?;
    let checksum = hex::encode(Sha256::digest(&bytes));
    let fail = |row: usize, reason: String| Error::Load {
        path: path.to_path_buf(),
        row,
        reason,
    };

    let mut rdr = csv::ReaderBuilder::new().from_reader(bytes.as_slice());
    let header = rdr.headers().map_err(|e| fail(1, e.to_string()))?.clone();
    let header: Vec<&str> = header
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}'))
        .collect();
    if header != CSV_HEADER {
        return Err(fail(
            1,
            format!(
                "expected header `{}`, got `{}`",
                CSV_HEADER.join(","),
                header.join(",")
            ),
        ));
    }

    let mut household: Option<String> = None;
    let mut rows: Vec<(DateTime<Utc>, f64, usize)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            fail(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 3 {
            return Err(fail(line, format!("expected 3 fields, got {}", rec.len())));
        }
        let ts = parse_timestamp(&rec[0]).ok_or_else(|| {
            fail(
                line,
                format!("`{}` is not an ISO-8601 UTC timestamp", &rec[0]),
            )
        })?;
        if ts.second() != 0 || ts.nanosecond() != 0 || ts.minute() % CORPUS_SLOT_MINUTES != 0 {
            return Err(fail(
                line,
                format!(
                    "timestamp {} is not on a {CORPUS_SLOT_MINUTES}-minute boundary",
                    &rec[0]
                ),
            ));
        }
        let id = &rec[1];
        if id.is_empty() {
            return Err(fail(line, "empty household_id".into()));
        }
        match &household {
            None => household = Some(id.to_owned()),
            Some(h) if h != id => {
                return Err(fail(
                    line,
                    format!("household `{id}` differs from `{h}` earlier in the file"),
                ))
            }
            Some(_) => {}
        }
        let power: f64 = rec[2]
            .parse()
            .map_err(|_| fail(line, format!("power `{}` is not a number", &rec[2])))?;
        if !power.is_finite() || power < 0.0 {
            return Err(fail(
                line,
                format!("power must be finite and >= 0, got {power}"),
            ));
        }
        rows.push((ts, power, line));
    }

    let household = household.ok_or_else(|| fail(1, "no data rows".into()))?;
    rows.sort_by_key(|r| r.0);
    let step = chrono::Duration::minutes(i64::from(CORPUS_SLOT_MINUTES));
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.0 == b.0 {
            return Err(fail(
                b.2,
                format!("duplicate timestamp {}", format_timestamp(b.0)),
            ));
        }
        if b.0 - a.0 != step {
            return Err(fail(
                b.2,
                format!("missing slot at {}", format_timestamp(a.0 + step)),
            ));
        }
    }
    let start = rows[0].0;
    if start.time() != NaiveTime::MIN {
        return Err(fail(
            rows[0].2,
            format!(
                "series starts at {}, not at midnight",
                format_timestamp(start)
            ),
        ));
    }
    let per_day = (MINUTES_PER_DAY / CORPUS_SLOT_MINUTES) as usize;
    if rows.len() % per_day != 0 {
        return Err(fail(
            rows.last().map_or(0, |r| r.2),
            format!(
                "{} slots do not cover whole days ({per_day} per day)",
                rows.len()
            ),
        ));
    }

    let values = rows.iter().map(|r| r.1).collect();
    let series = PowerSeries::new(household.clone(), start, CORPUS_SLOT_MINUTES, values)?;
    Ok((
        ManifestEntry {
            household_id: household,
            path: path.to_path_buf(),
            days: series.len() / per_day,
            checksum,
        },
        series,
    ))
}

fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn write_series_csv<W: std::io::Write>(series: &PowerSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for (i, v) in series.values.iter().enumerate() {
        w.write_record([
            format_timestamp(series.timestamp(i)),
            series.household_id.clone(),
            v.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one `<household_id>.csv` per series into `dir` (created if
/// missing) and returns the manifest of what was written.
pub fn write_corpus(dir: &Path, series: &[PowerSeries]) -> Result<CorpusManifest> {
    fs::create_dir_all(dir)?;
    let mut households = Vec::with_capacity(series.len());
    for s in series {
        if s.slot_minutes != CORPUS_SLOT_MINUTES {
            return Err(Error::Config(format!(
                "{}: corpus files use {CORPUS_SLOT_MINUTES}-minute slots, series has {}",
                s.household_id, s.slot_minutes
            )));
        }
        let path = dir.join(format!("{}.csv", file_stem_for(&s.household_id)));
        let mut buf = Vec::new();
        write_series_csv(s, &mut buf)?;
        fs::write(&path, &buf)?;
        households.push(ManifestEntry {
            household_id: s.household_id.clone(),
            path,
            days: s.len() / s.slots_per_day(),
            checksum: hex::encode(Sha256::digest(&buf)),
        });
    }
    Ok(CorpusManifest {
        households,
        slot_minutes: CORPUS_SLOT_MINUTES,
    })
}

/// Parameters of the synthetic household load model: a diurnally modulated
/// base load plus rectangular appliance events arriving as a Poisson process.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLoadConfig {
    /// kW
    pub base_load: f64,
    /// Relative per-household spread of the base load, in [0, 1).
    pub base_load_spread: f64,
    pub events_per_day: f64,
    /// kW
    pub magnitude_min: f64,
    pub magnitude_max: f64,
    /// Slots
    pub duration_min: usize,
    pub duration_max: usize,
    /// Peak-to-mean ratio of the daily sinusoid, in [0, 1].
    pub diurnal_amplitude: f64,
    /// Hour of day at which the diurnal term peaks.
    pub peak_hour: f64,
    pub seed: u64,
    pub start: DateTime<Utc>,
}

impl Default for SyntheticLoadConfig {
    fn default() -> Self {
        Self {
            base_load: 0.3,
            base_load_spread: 0.5,
            events_per_day: 8.0,
            magnitude_min: 0.3,
            magnitude_max: 2.5,
            duration_min: 1,
            duration_max: 9,
            diurnal_amplitude: 0.5,
            peak_hour: 19.0,
            seed: 0,
            start: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        }
    }
}

impl SyntheticLoadConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("base_load", self.base_load),
            ("events_per_day", self.events_per_day),
            ("magnitude_min", self.magnitude_min),
            ("magnitude_max", self.magnitude_max),
            ("peak_hour", self.peak_hour),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        if !(0.0..1.0).contains(&self.base_load_spread) {
            return Err(Error::param("base_load_spread", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.diurnal_amplitude) {
            return Err(Error::param("diurnal_amplitude", "must lie in [0, 1]"));
        }
        if self.magnitude_min > self.magnitude_max {
            return Err(Error::param("magnitude_min", "exceeds magnitude_max"));
        }
        if self.duration_min == 0 || self.duration_min > self.duration_max {
            return Err(Error::param(
                "duration_min",
                "must be at least 1 slot and at most duration_max",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApplianceEvent {
    pub start_slot: usize,
    pub duration: usize,
    /// kW
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticHousehold {
    pub series: PowerSeries,
    pub events: Vec<ApplianceEvent>,
}

/// `households` series of `days` days each at 10-minute resolution.
/// Household `i` draws from its own stream derived from `(cfg.seed, i)`.
pub fn generate_synthetic(
    cfg: &SyntheticLoadConfig,
    households: usize,
    days: usize,
) -> Result<Vec<SyntheticHousehold>> {
    cfg.validate()?;
    if households == 0 || days == 0 {
        return Err(Error::Config(
            "households and days must be at least 1".into(),
        ));
    }
    let slot_minutes = CORPUS_SLOT_MINUTES;
    let per_day = (MINUTES_PER_DAY / slot_minutes) as usize;
    let len = per_day * days;
    let slot_hours = f64::from(slot_minutes) / 60.0;
    let events_dist = (cfg.events_per_day > 0.0)
        .then(|| Poisson::new(cfg.events_per_day).expect("positive finite rate"));

    (0..households)
        .into_par_iter()
        .map(|h| {
            let mut rng = rng_for(cfg.seed, &[h as u64]);
            let spread = if cfg.base_load_spread > 0.0 {
                cfg.base_load_spread * rng.random_range(-1.0..=1.0)
            } else {
                0.0
            };
            let base = cfg.base_load * (1.0 + spread);
            let mut values: Vec<f64> = (0..len)
                .map(|i| {
                    let hour = (i % per_day) as f64 * slot_hours;
                    let phase = std::f64::consts::TAU * (hour - cfg.peak_hour) / 24.0;
                    base * (1.0 + cfg.diurnal_amplitude * phase.cos())
                })
                .collect();
            let mut events = Vec::new();
            for day in 0..days {
                let n = events_dist
                    .as_ref()
                    .map_or(0, |d| d.sample(&mut rng) as usize);
                for _ in 0..n {
                    let ev = ApplianceEvent {
                        start_slot: day * per_day + rng.random_range(0..per_day),
                        duration: rng.random_range(cfg.duration_min..=cfg.duration_max),
                        magnitude: rng.random_range(cfg.magnitude_min..=cfg.magnitude_max),
                    };
                    let end = (ev.start_slot + ev.duration).min(len);
                    values[ev.start_slot..end]
                        .iter_mut()
                        .for_each(|v| *v += ev.magnitude);
                    events.push(ev);
                }
            }
            // cos can push the base term a hair below zero at amplitude 1
            values.iter_mut().for_each(|v| *v = v.max(0.0));
            let series =
                PowerSeries::new(format!("synth-{h:04}"), cfg.start, slot_minutes, values)?;
            Ok(SyntheticHousehold { series, events })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    fn day_csv(id: &str, skip: Option<usize>) -> String {
        let start = Utc.with_ymd_and_hms(2016, 10, 3, 0, 0, 0).unwrap();
        let mut s = String::from("timestamp,household_id,power_kw\n");
        for i in 0..144 {
            if Some(i) == skip {
                continue;
            }
            let ts = start + chrono::Duration::minutes(10 * i as i64);
            s.push_str(&format!(
                "{},{id},{}\n",
                format_timestamp(ts),
                0.5 + (i % 5) as f64 * 0.1
            ));
        }
        s
    }

    #[test]
    fn empty_directory_gives_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = load_corpus(dir.path()).unwrap();
        assert!(corpus.manifest.households.is_empty());
        assert!(corpus.series.is_empty());
    }

    #[test]
    fn one_day_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "h1.csv", &day_csv("h1", None));
        write(dir.path(), "notes.txt", "ignored");
        let corpus = load_corpus(dir.path()).unwrap();
        assert_eq!(corpus.manifest.households.len(), 1);
        assert_eq!(corpus.manifest.households[0].days, 1);
        assert_eq!(corpus.manifest.households[0].checksum.len(), 64);
        assert_eq!(corpus.series[0].len(), 144);
        assert_eq!(corpus.series[0].household_id, "h1");
    }

    #[test]
    fn missing_slot_is_reported_with_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "h1.csv", &day_csv("h1", Some(30)));
        let err = load_corpus(&p).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("missing slot at 2016-10-03T05:00:00Z"),
            "{msg}"
        );
        assert!(matches!(err, Error::Load { .. }));
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let good = day_csv("h1", None);
        let cases = [
            (
                "neg",
                good.replacen(",0.5\n", ",-0.5\n", 1),
                "power must be",
            ),
            ("hdr", good.replacen("power_kw", "kw", 1), "expected header"),
            (
                "off",
                good.replacen("T00:10:00Z", "T00:11:00Z", 1),
                "boundary",
            ),
            (
                "dup",
                good.replacen("T00:10:00Z", "T00:00:00Z", 1),
                "duplicate timestamp",
            ),
            ("nan", good.replacen(",0.5\n", ",abc\n", 1), "not a number"),
            ("ids", good.replacen(",h1,", ",h2,", 1), "differs"),
            (
                "tz",
                good.replacen("T00:10:00Z", "T00:10:00+01:00", 1),
                "ISO-8601",
            ),
            (
                "empty",
                "timestamp,household_id,power_kw\n".to_string(),
                "no data rows",
            ),
        ];
        for (name, body, needle) in cases {
            let p = write(dir.path(), &format!("{name}.csv"), &body);
            let msg = load_corpus(&p).unwrap_err().to_string();
            assert!(msg.contains(needle), "{name}: {msg}");
        }
        // a partial day
        let partial: String = good.lines().take(100).map(|l| format!("{l}\n")).collect();
        let p = write(dir.path(), "partial.csv", &partial);
        assert!(load_corpus(&p)
            .unwrap_err()
            .to_string()
            .contains("whole days"));
    }

    #[test]
    fn unsorted_rows_and_crlf_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let good = day_csv("h1", None);
        let mut lines: Vec<&str> = good.lines().collect();
        lines[1..].reverse();
        let p = write(dir.path(), "h1.csv", &(lines.join("\r\n") + "\r\n"));
        let (_, s) = load_series_file(&p).unwrap();
        let (_, reference) = load_series_file(&write(dir.path(), "ref.csv", &good)).unwrap();
        assert_eq!(s, reference);
    }

    #[test]
    fn duplicate_households_across_files() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", &day_csv("h1", None));
        write(dir.path(), "b.csv", &day_csv("h1", None));
        assert!(load_corpus(dir.path())
            .unwrap_err()
            .to_string()
            .contains("more than one file"));
    }

    #[test]
    fn flat_synthetic_load_is_constant() {
        let cfg = SyntheticLoadConfig {
            base_load: 0.7,
            base_load_spread: 0.0,
            events_per_day: 0.0,
            diurnal_amplitude: 0.0,
            ..SyntheticLoadConfig::default()
        };
        let corpus = generate_synthetic(&cfg, 3, 2).unwrap();
        for h in &corpus {
            assert_eq!(h.series.len(), 288);
            assert!(h.series.values.iter().all(|v| *v == 0.7));
            assert!(h.events.is_empty());
        }
    }

    #[test]
    fn synthetic_corpus_is_reproducible() {
        let cfg = SyntheticLoadConfig {
            seed: 11,
            ..SyntheticLoadConfig::default()
        };
        let a = generate_synthetic(&cfg, 4, 3).unwrap();
        let b = generate_synthetic(&cfg, 4, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|h| h.series.values.iter().all(|v| *v >= 0.0)));
        let other = generate_synthetic(&SyntheticLoadConfig { seed: 12, ..cfg }, 4, 3).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn synthetic_event_rate_matches_poisson() {
        // Poisson(8) per household-day over 1000 household-days: mean of the
        // daily counts has sd sqrt(8/1000) = 0.0894; ±4σ = ±0.358.
        let cfg = SyntheticLoadConfig {
            events_per_day: 8.0,
            seed: 3,
            ..SyntheticLoadConfig::default()
        };
        let corpus = generate_synthetic(&cfg, 100, 10).unwrap();
        let total: usize = corpus.iter().map(|h| h.events.len()).sum();
        let mean = total as f64 / 1000.0;
        assert!((mean - 8.0).abs() <= 0.358, "{mean}");
    }

    #[test]
    fn synthetic_config_validation() {
        let d = SyntheticLoadConfig::default();
        assert!(SyntheticLoadConfig {
            base_load: -1.0,
            ..d.clone()
        }
        .validate()
        .is_err());
        assert!(SyntheticLoadConfig {
            duration_min: 0,
            ..d.clone()
        }
        .validate()
        .is_err());
        assert!(SyntheticLoadConfig {
            diurnal_amplitude: 1.5,
            ..d.clone()
        }
        .validate()
        .is_err());
        assert!(SyntheticLoadConfig {
            magnitude_min: 5.0,
            ..d.clone()
        }
        .validate()
        .is_err());
        assert!(generate_synthetic(&d, 0, 1).is_err());
    }
}
