use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use meterlink_core::dataio::{self, SyntheticLoadConfig};
use meterlink_core::link_model::{linspace, write_sweep_csv};
use meterlink_core::ppp_oracle::{cartesian_grid, write_validation_csv};
use meterlink_core::reconstruction::{write_relative_csv, write_report_csv, write_results_csv};
use meterlink_core::sampling::write_samples_csv;
use meterlink_core::{
    corpus_report, evaluate, plan, sweep, time_sample, tune_thresholds, validate_grid,
    EvaluationResult, EventThresholds, KVariant, LinkParams, PlanRequest, PowerSeries,
    QualityTarget, SampleSet, SfTable, Strategy, SweepAxis, SweepMetric,
};

use crate::config::ConfigFile;
use crate::{
    Cli, CliError, Command, EvaluateCmd, GenSyntheticCmd, LinkArgs, LinkCmd, PlanCmd, SampleCmd,
    SamplingArgs, ValidateCmd,
};

type CliResult<T = ()> = Result<T, CliError>;

const DEFAULT_SEED: u64 = 0x5eed;
const DEFAULT_TRIALS: u64 = 100_000;
const DEFAULT_RUNS: usize = 100;

pub fn run(cli: Cli) -> CliResult {
    let config = ConfigFile::discover(cli.config.as_deref())?;
    let parallel = match cli.parallel {
        Some(n) => Some(n),
        None => config.get::<usize>("parallel")?,
    };
    if parallel == Some(0) {
        return Err(CliError::Usage("--parallel must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Link(cmd) => link(cmd, &config),
        Command::Validate(cmd) => validate(cmd, &config),
        Command::Sample(cmd) => sample(cmd),
        Command::Evaluate(cmd) => evaluate_cmd(cmd, &config),
        Command::Plan(cmd) => plan_cmd(cmd, &config),
        Command::GenSynthetic(cmd) => gen_synthetic(cmd),
    })
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_list<T: std::str::FromStr>(flag: &str, s: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| usage(format!("--{flag}: bad value `{t}`")))
        })
        .collect()
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::Runtime(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn pick<T: std::str::FromStr>(
    flag: Option<T>,
    config: &ConfigFile,
    key: &str,
) -> CliResult<Option<T>> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => config.get(key),
    }
}

fn link_params(args: &LinkArgs, config: &ConfigFile) -> CliResult<(LinkParams, SfTable)> {
    let d = LinkParams::default();
    let k_variant = match args.k_variant.as_deref().or(config.raw("k_variant")) {
        Some(s) => s.parse::<KVariant>()?,
        None => d.k_variant,
    };
    let params = LinkParams {
        alpha: pick(args.alpha, config, "alpha")?.unwrap_or(d.alpha),
        beta_cosf: pick(args.beta_cosf, config, "beta_cosf")?.unwrap_or(d.beta_cosf),
        p_active: pick(args.p_active, config, "p_active")?.unwrap_or(d.p_active),
        p_sf: pick(args.p_sf, config, "p_sf")?.unwrap_or(d.p_sf),
        lambda_sf: pick(args.lambda_sf, config, "lambda_sf")?.unwrap_or(d.lambda_sf),
        lambda_i: pick(args.lambda_i, config, "lambda_i")?.unwrap_or(d.lambda_i),
        r: config.get("r")?.unwrap_or(d.r),
        k_variant,
    };
    let allow = args.allow_non_monotone || config.get("allow_non_monotone")?.unwrap_or(false);
    let table_path: Option<PathBuf> = args
        .sf_table
        .clone()
        .or_else(|| config.raw("sf_table").map(PathBuf::from));
    let table = match table_path {
        Some(p) => {
            let f = File::open(&p)
                .map_err(|e| usage(format!("cannot open SF table {}: {e}", p.display())))?;
            SfTable::from_csv(f, allow)?
        }
        None => SfTable::default(),
    };
    Ok((params, table))
}

fn link(cmd: LinkCmd, config: &ConfigFile) -> CliResult {
    let axis: SweepAxis = cmd.axis.parse()?;
    let metric = match cmd.metric.as_str() {
        "outage" => SweepMetric::Outage,
        "bitrate" => SweepMetric::Bitrate,
        other => {
            return Err(usage(format!(
                "--metric: expected outage or bitrate, got `{other}`"
            )))
        }
    };
    let (mut params, table) = link_params(&cmd.link, config)?;
    if let Some(r) = cmd.r {
        params.r = r;
    }
    params.validate()?;
    let grid = match (&cmd.grid, cmd.from, cmd.to) {
        (Some(g), _, _) => parse_list("grid", g)?,
        (None, Some(from), Some(to)) => linspace(from, to, cmd.points),
        _ => return Err(usage("give either --grid or both --from and --to")),
    };
    let rows = sweep(&params, &table, axis, &grid, metric, cmd.single_sf)?;
    write_sweep_csv(&rows, output(cmd.out.as_deref())?)?;
    Ok(())
}

fn validate(cmd: ValidateCmd, config: &ConfigFile) -> CliResult {
    let trials = pick(cmd.trials, config, "trials")?.unwrap_or(DEFAULT_TRIALS);
    if trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let seed = pick(cmd.seed, config, "seed")?.unwrap_or(DEFAULT_SEED);
    let (params, table) = link_params(&cmd.link, config)?;
    let grid = cartesian_grid(
        &parse_list::<f64>("lambda-sf-grid", &cmd.lambda_sf_grid)?,
        &parse_list::<f64>("lambda-i-grid", &cmd.lambda_i_grid)?,
        &parse_list::<f64>("r-grid", &cmd.r_grid)?,
    );
    let rows = validate_grid(&grid, &params, &table, trials, seed)?;
    let failures = rows.iter().filter(|r| !r.pass_canonical).count();
    if failures > 0 {
        log::warn!(
            "{failures} of {} points disagree with the canonical closed form",
            rows.len()
        );
    }
    write_validation_csv(&rows, output(cmd.out.as_deref())?)?;
    Ok(())
}

fn thresholds(args: &SamplingArgs) -> CliResult<EventThresholds> {
    let th = EventThresholds {
        e_lim: args.e_lim,
        p_lim: args.p_lim,
        p_step: args.p_step,
    };
    th.validate()?;
    Ok(th)
}

fn parse_strategies(s: &str) -> CliResult<Vec<Strategy>> {
    let list: Vec<Strategy> = if s == "both" {
        vec![Strategy::Time, Strategy::Event]
    } else {
        parse_list("strategy", s)?
    };
    if list.is_empty() {
        return Err(usage("no sampling strategy given"));
    }
    Ok(list)
}

struct Sampled {
    time: SampleSet,
    event: SampleSet,
    iterations: usize,
    capped: bool,
}

/// Time-based samples at the configured interval, and event-based samples
/// tuned (unless disabled) to stay below the time-based count.
fn sample_household(series: &PowerSeries, args: &SamplingArgs) -> CliResult<Sampled> {
    let th = thresholds(args)?;
    let time = time_sample(series, args.interval_min)?;
    if args.no_tune {
        return Ok(Sampled {
            event: meterlink_core::event_sample(series, &th),
            time,
            iterations: 0,
            capped: false,
        });
    }
    let tuned = tune_thresholds(series, &th, &time)?;
    Ok(Sampled {
        event: tuned.samples,
        time,
        iterations: tuned.iterations,
        capped: tuned.capped,
    })
}

fn load(corpus: &Path) -> CliResult<Vec<PowerSeries>> {
    let corpus = dataio::load_corpus(corpus)?;
    log::info!("loaded {} households", corpus.series.len());
    Ok(corpus.series)
}

fn sample(cmd: SampleCmd) -> CliResult {
    let strategies = parse_strategies(&cmd.strategy)?;
    let series = load(&cmd.corpus)?;
    fs::create_dir_all(&cmd.out_dir)?;
    let sampled = series
        .par_iter()
        .map(|s| sample_household(s, &cmd.sampling))
        .collect::<CliResult<Vec<_>>>()?;

    if strategies.contains(&Strategy::Time) {
        write_samples_csv(
            series.iter().zip(sampled.iter().map(|s| &s.time)),
            create(&cmd.out_dir.join("samples_time.csv"))?,
        )?;
    }
    if strategies.contains(&Strategy::Event) {
        write_samples_csv(
            series.iter().zip(sampled.iter().map(|s| &s.event)),
            create(&cmd.out_dir.join("samples_event.csv"))?,
        )?;
        let mut log = create(&cmd.out_dir.join("tuning_log.csv"))?;
        writeln!(
            log,
            "household_id,e_lim,p_lim,p_step,iterations,event_samples,time_samples,capped"
        )?;
        for s in &sampled {
            let th = s.event.thresholds.unwrap_or_default();
            writeln!(
                log,
                "{},{},{},{},{},{},{},{}",
                s.event.household_id,
                th.e_lim,
                th.p_lim,
                th.p_step,
                s.iterations,
                s.event.len(),
                s.time.len(),
                s.capped
            )?;
        }
        log.flush()?;
    }
    Ok(())
}

fn parse_outages(s: &str) -> CliResult<Vec<f64>> {
    let grid: Vec<f64> = parse_list("outage", s)?;
    if let Some(p) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(usage(format!("--outage: {p} is not a probability")));
    }
    Ok(grid)
}

fn evaluate_cmd(cmd: EvaluateCmd, config: &ConfigFile) -> CliResult {
    let strategies = parse_strategies(&cmd.strategies)?;
    let outages = parse_outages(&cmd.outage)?;
    let runs = pick(cmd.runs, config, "runs")?.unwrap_or(DEFAULT_RUNS);
    if runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }
    let seed = pick(cmd.seed, config, "seed")?.unwrap_or(DEFAULT_SEED);
    thresholds(&cmd.sampling)?;
    let series = load(&cmd.corpus)?;
    fs::create_dir_all(&cmd.out_dir)?;

    let per_household = series
        .par_iter()
        .map(|s| -> CliResult<Vec<EvaluationResult>> {
            if s.is_empty() || s.mean() <= 0.0 {
                log::warn!("{}: zero consumption, skipped", s.household_id);
                return Ok(Vec::new());
            }
            let sampled = sample_household(s, &cmd.sampling)?;
            let sets: Vec<SampleSet> = strategies
                .iter()
                .map(|st| match st {
                    Strategy::Time => sampled.time.clone(),
                    Strategy::Event => sampled.event.clone(),
                })
                .collect();
            Ok(evaluate(s, &sets, &outages, runs, seed)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let results: Vec<EvaluationResult> = per_household.into_iter().flatten().collect();

    write_results_csv(&results, create(&cmd.out_dir.join("results.csv"))?)?;
    let report = corpus_report(&results);
    write_report_csv(&report, create(&cmd.out_dir.join("report.csv"))?)?;
    write_relative_csv(&report, create(&cmd.out_dir.join("relative.csv"))?)?;
    Ok(())
}

fn plan_cmd(cmd: PlanCmd, config: &ConfigFile) -> CliResult {
    let (params, table) = link_params(&cmd.link, config)?;
    let target = match (cmd.target_outage, cmd.max_cv) {
        (Some(p), None) => {
            if !(p > 0.0 && p < 1.0) {
                return Err(usage(format!(
                    "--target-outage must lie strictly between 0 and 1, got {p}"
                )));
            }
            QualityTarget::Outage(p)
        }
        (None, Some(max_cv_rmse)) => QualityTarget::Reconstruction {
            max_cv_rmse,
            quantile: cmd.quantile,
            strategy: cmd.strategy.parse()?,
        },
        _ => return Err(usage("give exactly one of --target-outage or --max-cv")),
    };
    let corpus = match (&target, &cmd.evaluation) {
        (QualityTarget::Reconstruction { .. }, None) => {
            return Err(usage("--max-cv needs --evaluation <results.csv>"))
        }
        (_, Some(path)) => {
            let f = File::open(path)
                .map_err(|e| usage(format!("cannot open {}: {e}", path.display())))?;
            Some(meterlink_core::reconstruction::read_results_csv(f)?)
        }
        _ => None,
    };
    let result = plan(&PlanRequest { params, target }, &table, corpus.as_deref())?;
    let mut out = output(cmd.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &result)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn gen_synthetic(cmd: GenSyntheticCmd) -> CliResult {
    let d = SyntheticLoadConfig::default();
    let cfg = SyntheticLoadConfig {
        base_load: cmd.base_load.unwrap_or(d.base_load),
        events_per_day: cmd.events_per_day.unwrap_or(d.events_per_day),
        diurnal_amplitude: cmd.diurnal_amplitude.unwrap_or(d.diurnal_amplitude),
        seed: cmd.seed.unwrap_or(DEFAULT_SEED),
        ..d
    };
    let corpus = dataio::generate_synthetic(&cfg, cmd.households, cmd.days)?;
    let series: Vec<PowerSeries> = corpus.into_iter().map(|h| h.series).collect();
    let manifest = dataio::write_corpus(&cmd.out_dir, &series)?;
    eprintln!(
        "wrote {} households × {} days to {}",
        manifest.households.len(),
        cmd.days,
        cmd.out_dir.display()
    );
    Ok(())
}
