//! Outage modelling, sampling and range planning for LoRa-connected
//! electricity meters.
//!
//! The crate is organised along the pipeline a deployment study follows:
//!
//! - [`link_model`]: closed-form outage probability and effective bit-rate of
//!   a LoRa uplink under co-SF LoRa interference and non-LoRa interference,
//!   both placed as Poisson point processes.
//! - [`ppp_oracle`]: Monte Carlo realisation of the same generative model,
//!   used to check the closed forms.
//! - [`sampling`]: time-based and event-based (send-on-delta) sampling of
//!   household power series, with threshold tuning against a time budget.
//! - [`reconstruction`]: sample loss, linear-interpolation reconstruction and
//!   CV(RMSE) scoring.
//! - [`dataio`]: corpus CSV ingestion and a synthetic load generator.
//! - [`planner`]: maximum gateway range meeting an outage or quality target.

pub mod dataio;
pub mod error;
pub mod link_model;
pub mod planner;
pub mod ppp_oracle;
pub mod reconstruction;
pub mod sampling;
pub mod seeding;
pub mod stats;

pub use error::{Error, Result};
pub use link_model::{
    avg_effective_bitrate, avg_outage, effective_bitrate, external_outage, geometry_constant,
    lora_outage, sweep, total_outage, KVariant, LinkParams, SfEntry, SfTable, SpreadingFactor,
    SweepAxis, SweepMetric, SweepRow,
};
pub use planner::{
    max_range, plan, resolve_outage_target, PerSfOutage, PlanRequest, PlanResult, QualityTarget,
};
pub use ppp_oracle::{
    sample_ppp, simulate_outage, validate_grid, FadingMode, GridPoint, OracleConfig, OracleResult,
    ValidationRow,
};
pub use reconstruction::{
    apply_loss, corpus_report, cv_rmse, evaluate, reconstruct, CorpusReport, EvaluationResult,
    LossModel,
};
pub use sampling::{
    event_sample, time_sample, tune_thresholds, EventThresholds, PowerSeries, Sample, SampleSet,
    Strategy, Trigger, TuneOutcome,
};
