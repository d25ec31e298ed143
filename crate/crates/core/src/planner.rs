//! Gateway range planning: the largest link distance whose average outage
//! stays within a target, where the target may itself be derived from a
//! reconstruction-quality requirement.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::link_model::{avg_effective_bitrate, avg_outage, per_sf_outage, LinkParams, SfTable};
use crate::reconstruction::EvaluationResult;
use crate::sampling::Strategy;
use crate::stats::quantile;

/// Absolute bisection tolerance on the range, km. The solver keeps halving
/// well past this so the outage at the returned range is also tight.
pub const RANGE_TOLERANCE_KM: f64 = 1e-4;

const MAX_RANGE_KM: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QualityTarget {
    /// Maximum average outage probability, used as is.
    Outage(f64),
    /// At most `max_cv_rmse` for the `quantile` fraction of households under
    /// `strategy`.
    Reconstruction {
        max_cv_rmse: f64,
        quantile: f64,
        strategy: Strategy,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    /// Link parameters; `r` is ignored.
    pub params: LinkParams,
    pub target: QualityTarget,
}

/// Outage per spreading factor, serialised as `{"sf7": …, …, "sf12": …}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerSfOutage {
    pub sf7: f64,
    pub sf8: f64,
    pub sf9: f64,
    pub sf10: f64,
    pub sf11: f64,
    pub sf12: f64,
}

impl From<[f64; 6]> for PerSfOutage {
    fn from(v: [f64; 6]) -> Self {
        let [sf7, sf8, sf9, sf10, sf11, sf12] = v;
        Self {
            sf7,
            sf8,
            sf9,
            sf10,
            sf11,
            sf12,
        }
    }
}

impl PerSfOutage {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.sf7, self.sf8, self.sf9, self.sf10, self.sf11, self.sf12,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanResult {
    pub max_range_km: f64,
    pub target_outage: f64,
    pub per_sf_outage: PerSfOutage,
    pub avg_effective_bitrate_kbps: f64,
}

/// Outage level at which the `quantile` household CV(RMSE) (household median
/// over runs) crosses `max_cv_rmse`, interpolated linearly between grid
/// levels. Saturates at the largest grid level when the bound is never
/// crossed.
pub fn resolve_outage_target(
    max_cv_rmse: f64,
    quantile_level: f64,
    strategy: Strategy,
    corpus: &[EvaluationResult],
) -> Result<f64> {
    if !(0.0..=1.0).contains(&quantile_level) {
        return Err(Error::param(
            "quantile",
            format!("must lie in [0, 1], got {quantile_level}"),
        ));
    }
    let mut levels: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for r in corpus.iter().filter(|r| r.strategy == strategy) {
        // non-negative floats order like their bit patterns
        levels
            .entry(r.outage_probability.to_bits())
            .or_insert_with(|| (r.outage_probability, Vec::new()))
            .1
            .push(r.median());
    }
    if levels.is_empty() {
        return Err(Error::Config(format!(
            "evaluation corpus has no {strategy}-based results"
        )));
    }
    let curve: Vec<(f64, f64)> = levels
        .into_values()
        .map(|(p, households)| (p, quantile(&households, quantile_level)))
        .collect();

    let (p0, q0) = curve[0];
    if q0 > max_cv_rmse {
        return Err(Error::Infeasible(format!(
            "the {:.0}th-percentile CV(RMSE) is already {q0:.4} at outage {p0}, above the bound {max_cv_rmse}",
            quantile_level * 100.0
        )));
    }
    for pair in curve.windows(2) {
        let ((pa, qa), (pb, qb)) = (pair[0], pair[1]);
        if qb > max_cv_rmse {
            // qa ≤ bound < qb
            return Ok(pa + (max_cv_rmse - qa) / (qb - qa) * (pb - pa));
        }
    }
    Ok(curve.last().map(|c| c.0).unwrap_or(p0))
}

/// Largest `r` with `avg_outage(r) ≤ target`, by bisection on the strictly
/// increasing average-outage curve.
pub fn max_range(target: f64, params: &LinkParams, table: &SfTable) -> Result<PlanResult> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::param(
            "target_outage",
            format!("must lie strictly between 0 and 1, got {target}"),
        ));
    }
    params.with_r(0.0).validate()?;
    let outage_at = |r: f64| avg_outage(&params.with_r(r), table);

    let mut lo = 0.0;
    let mut hi = 1.0;
    while outage_at(hi) <= target {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_RANGE_KM {
            return Err(Error::Infeasible(format!(
                "average outage never exceeds {target}: no interferers to limit the range"
            )));
        }
    }
    // Halve until the bracket stops shrinking; this is far below
    // RANGE_TOLERANCE_KM and pins the outage to ~1e-12.
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if outage_at(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    debug_assert!(hi - lo <= RANGE_TOLERANCE_KM);

    let at = params.with_r(lo);
    Ok(PlanResult {
        max_range_km: lo,
        target_outage: target,
        per_sf_outage: per_sf_outage(&at, table).into(),
        avg_effective_bitrate_kbps: avg_effective_bitrate(&at, table),
    })
}

/// Resolves the request's target against `corpus` if needed, then solves.
pub fn plan(
    request: &PlanRequest,
    table: &SfTable,
    corpus: Option<&[EvaluationResult]>,
) -> Result<PlanResult> {
    let target = match request.target {
        QualityTarget::Outage(p) => p,
        QualityTarget::Reconstruction {
            max_cv_rmse,
            quantile,
            strategy,
        } => {
            let corpus = corpus.ok_or_else(|| {
                Error::Config("a reconstruction-quality target needs evaluation results".into())
            })?;
            resolve_outage_target(max_cv_rmse, quantile, strategy, corpus)?
        }
    };
    if target <= 0.0 {
        return Err(Error::Infeasible(
            "the quality target resolves to zero tolerable outage".into(),
        ));
    }
    max_range(target, &request.params, table)
}
