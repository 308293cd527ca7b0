//! Calibrated model file: everything the engine needs to simulate a book.
//!
//! Stored as one JSON document tagged with [`MODEL_SCHEMA`]. Floats are
//! written in shortest round-trip form, so serialize then parse gives back a
//! bit-identical model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{
    self, calibrate_theta, filtered_sizes, moves_from_mid_path, CalibError, DepletionPairs, EstimateOptions,
    IntensityTable, SizeBucketing, SizeFilter, ThetaFit, Variant,
};
use crate::dist::{Conditioning, SizeDistribution};
use crate::eventlog::FlowItem;
use crate::flow::{level_stats, segment_by_ref_price, DayFlow, FlowSegment, LevelStats};
use crate::hawkes::{self, component_of, FitOptions, FitResult, HawkesError, HawkesModel, MarkedEvent, Realization};
use crate::lob::{quantize_queue, OrderEvent};
use crate::types::{EventType, Side};

pub const MODEL_SCHEMA: &str = "qrlob-model/1";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unsupported model schema '{0}' (expected '{MODEL_SCHEMA}')")]
    Schema(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model is inconsistent: {0}")]
    Invalid(String),
    #[error(transparent)]
    Calib(#[from] CalibError),
    #[error(transparent)]
    Hawkes(#[from] HawkesError),
}

/// Simulation family, queue-reactive or Hawkes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    #[serde(rename = "QRU")]
    Qru,
    #[serde(rename = "QR")]
    Qr,
    #[serde(rename = "FTQR")]
    Ftqr,
    #[serde(rename = "SAQR")]
    Saqr,
    /// Hawkes flow with unit sizes `ceil(AES)`.
    #[serde(rename = "HAWKES_U")]
    HawkesU,
    /// Hawkes flow with sizes from the stationary laws.
    #[serde(rename = "HAWKES_S")]
    HawkesS,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 6] = [
        ModelVariant::Qru,
        ModelVariant::Qr,
        ModelVariant::Ftqr,
        ModelVariant::Saqr,
        ModelVariant::HawkesU,
        ModelVariant::HawkesS,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::Qru => "QRU",
            ModelVariant::Qr => "QR",
            ModelVariant::Ftqr => "FTQR",
            ModelVariant::Saqr => "SAQR",
            ModelVariant::HawkesU => "HAWKES_U",
            ModelVariant::HawkesS => "HAWKES_S",
        }
    }

    /// Intensity-table family, `None` for Hawkes variants.
    pub fn table_variant(self) -> Option<Variant> {
        match self {
            ModelVariant::Qru => Some(Variant::Qru),
            ModelVariant::Qr => Some(Variant::Qr),
            ModelVariant::Ftqr => Some(Variant::Ftqr),
            ModelVariant::Saqr => Some(Variant::Saqr),
            _ => None,
        }
    }

    pub fn is_hawkes(self) -> bool {
        self.table_variant().is_none()
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase().replace('-', "_");
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == up)
            .ok_or_else(|| format!("unknown variant '{s}' (expected one of QRU, QR, FTQR, SAQR, HAWKES_U, HAWKES_S)"))
    }
}

/// Size law of one (event type, size bucket) cell, for SAQR de-quantization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSizes {
    pub eta: EventType,
    pub bucket: u64,
    pub dist: SizeDistribution,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelSizes {
    pub limit: Option<SizeDistribution>,
    pub cancel: Option<SizeDistribution>,
    pub market: Option<SizeDistribution>,
    /// Sizes of consuming events that left volume behind.
    pub cancel_partial: Option<SizeDistribution>,
    pub market_partial: Option<SizeDistribution>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub within_bucket: Vec<BucketSizes>,
}

impl LevelSizes {
    pub fn base(&self, eta: EventType) -> Option<&SizeDistribution> {
        match eta.base() {
            EventType::Limit => self.limit.as_ref(),
            EventType::Cancel => self.cancel.as_ref(),
            _ => self.market.as_ref(),
        }
    }

    pub fn partial(&self, eta: EventType) -> Option<&SizeDistribution> {
        match eta.base() {
            EventType::Cancel => self.cancel_partial.as_ref(),
            EventType::Market => self.market_partial.as_ref(),
            _ => self.limit.as_ref(),
        }
    }

    pub fn within(&self, eta: EventType, bucket: u64) -> Option<&SizeDistribution> {
        self.within_bucket
            .iter()
            .find(|b| b.eta == eta && b.bucket == bucket)
            .map(|b| &b.dist)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelModel {
    pub level: usize,
    pub aes: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<LevelStats>,
    /// One pooled table, or bid then ask. Empty for Hawkes models.
    #[serde(default)]
    pub tables: Vec<IntensityTable>,
    #[serde(default)]
    pub sizes: LevelSizes,
    /// Stationary queue-size law, used for the initial book and refills.
    pub queue: Option<SizeDistribution>,
}

impl LevelModel {
    pub fn table(&self, side: Side) -> Option<&IntensityTable> {
        match self.tables.len() {
            0 => None,
            1 => self.tables.first(),
            _ => self.tables.iter().find(|t| t.side == Some(side)),
        }
    }

    pub fn unit_size(&self) -> u64 {
        (self.aes.ceil() as u64).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub schema: String,
    pub variant: ModelVariant,
    pub tick_size: f64,
    pub depth: usize,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_fit: Option<ThetaFit>,
    /// Reference price (half ticks) the simulated book starts from.
    pub initial_ref_half_ticks: i64,
    pub levels: Vec<LevelModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hawkes: Option<HawkesModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hawkes_fit: Option<HawkesFitSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesFitSummary {
    pub log_likelihood: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub spectral_radius: f64,
}

impl Model {
    pub fn level(&self, level: usize) -> Option<&LevelModel> {
        self.levels.get(level.checked_sub(1)?)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.schema != MODEL_SCHEMA {
            return Err(ModelError::Schema(self.schema.clone()));
        }
        let bad = |m: String| Err(ModelError::Invalid(m));
        if !(self.tick_size.is_finite() && self.tick_size > 0.0) {
            return bad(format!("tick size {}", self.tick_size));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta {}", self.theta));
        }
        if self.depth == 0 || self.levels.len() != self.depth {
            return bad(format!("depth {} but {} levels", self.depth, self.levels.len()));
        }
        for (i, lm) in self.levels.iter().enumerate() {
            if lm.level != i + 1 {
                return bad(format!("level entry {i} is labelled {}", lm.level));
            }
            if !(lm.aes.is_finite() && lm.aes > 0.0) {
                return bad(format!("level {} has AES {}", lm.level, lm.aes));
            }
            for t in &lm.tables {
                if t.level != lm.level {
                    return bad(format!("table for level {} stored under level {}", t.level, lm.level));
                }
                if t.buckets.iter().any(|b| b.total < 0.0 || b.rates.iter().any(|r| !(r.is_finite() && *r >= 0.0))) {
                    return bad(format!("level {} has invalid rates", lm.level));
                }
                let c = t.total_consistency();
                if c > 1e-9 {
                    return bad(format!("level {}: rate sum differs from total by {c:e}", lm.level));
                }
            }
        }
        match self.variant.table_variant() {
            Some(v) => {
                for lm in &self.levels {
                    if lm.tables.is_empty() {
                        return bad(format!("{} model has no table at level {}", self.variant, lm.level));
                    }
                    for t in &lm.tables {
                        if !tables_compatible(t.variant, v) {
                            return bad(format!("{} table cannot drive a {} model", t.variant.as_str(), self.variant));
                        }
                    }
                }
            }
            None => match &self.hawkes {
                Some(h) => {
                    h.validate()?;
                    if h.dim != hawkes::ORDER_FLOW_DIM {
                        return bad(format!("Hawkes block has dim {}, expected 6", h.dim));
                    }
                }
                None => return bad(format!("{} model has no Hawkes block", self.variant)),
            },
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Model, ModelError> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        let schema = probe.get("schema").and_then(|s| s.as_str()).unwrap_or("");
        if schema != MODEL_SCHEMA {
            return Err(ModelError::Schema(schema.to_string()));
        }
        let m: Model = serde_json::from_value(probe)?;
        m.validate()?;
        Ok(m)
    }

    /// Whether this model can drive a simulation of `variant`.
    pub fn supports(&self, variant: ModelVariant) -> Result<(), ModelError> {
        match variant.table_variant() {
            Some(v) => {
                for lm in &self.levels {
                    let ok = !lm.tables.is_empty() && lm.tables.iter().all(|t| tables_compatible(t.variant, v));
                    if !ok {
                        return Err(ModelError::Invalid(format!(
                            "a {} model cannot be simulated as {variant}",
                            self.variant
                        )));
                    }
                }
                Ok(())
            }
            None => {
                if self.hawkes.is_none() {
                    return Err(ModelError::Invalid(format!("{variant} needs a Hawkes block in the model")));
                }
                Ok(())
            }
        }
    }
}

/// Three-type tables serve QRU and QR alike; FTQR and SAQR need their own.
fn tables_compatible(table: Variant, wanted: Variant) -> bool {
    match wanted {
        Variant::Qru | Variant::Qr => matches!(table, Variant::Qru | Variant::Qr),
        other => table == other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateOptions {
    pub variant: ModelVariant,
    pub depth: usize,
    pub tick_size: f64,
    pub estimate: EstimateOptions,
    /// Per-level AES overrides (index 0 = level 1).
    pub aes_override: Option<Vec<f64>>,
    /// Use this theta instead of calibrating it.
    pub theta: Option<f64>,
    pub theta_mechanism: DepletionPairs,
    pub theta_max_iter: usize,
    pub hawkes: FitOptions,
    /// Minimum count for a SAQR within-bucket size law to be stored.
    pub within_bucket_min: usize,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        CalibrateOptions {
            variant: ModelVariant::Qr,
            depth: 5,
            tick_size: 1.0,
            estimate: EstimateOptions::default(),
            aes_override: None,
            theta: None,
            theta_mechanism: DepletionPairs::default(),
            theta_max_iter: 100,
            hawkes: FitOptions::default(),
            within_bucket_min: 1,
        }
    }
}

/// Calibrates a full model from sessionized days.
pub fn calibrate_model(days: &[DayFlow], opts: &CalibrateOptions) -> Result<Model, ModelError> {
    if opts.depth == 0 {
        return Err(ModelError::Invalid("depth must be at least 1".into()));
    }
    let day_segments: Vec<Vec<FlowSegment>> = days.iter().map(segment_by_ref_price).collect();
    let segments: Vec<FlowSegment> = day_segments.iter().flatten().cloned().collect();
    let events: Vec<&OrderEvent> = segments.iter().flat_map(|s| s.events.iter()).collect();

    let mut levels = Vec::with_capacity(opts.depth);
    for level in 1..=opts.depth {
        let stats = level_stats(events.iter().copied(), level);
        let aes = match opts.aes_override.as_ref().and_then(|v| v.get(level - 1)) {
            Some(&a) => a,
            None => stats.aes.ok_or(CalibError::NoEvents(level))?,
        };
        let tables = match opts.variant.table_variant() {
            Some(v) => {
                let est = EstimateOptions {
                    aes_override: Some(aes),
                    ..opts.estimate
                };
                calibration::estimate(&segments, level, v, &est)?
            }
            None => Vec::new(),
        };
        let at_level = || events.iter().copied().filter(move |e| e.level == level);
        let law = |f: SizeFilter| filtered_sizes(at_level(), level, f, Conditioning::Stationary, aes).ok();
        let mut sizes = LevelSizes {
            limit: law(SizeFilter::Base(EventType::Limit)),
            cancel: law(SizeFilter::Base(EventType::Cancel)),
            market: law(SizeFilter::Base(EventType::Market)),
            cancel_partial: law(SizeFilter::Partial(EventType::Cancel)),
            market_partial: law(SizeFilter::Partial(EventType::Market)),
            within_bucket: Vec::new(),
        };
        if opts.variant == ModelVariant::Saqr {
            sizes.within_bucket = within_bucket_laws(at_level(), aes, opts.estimate.size_bucketing, opts.within_bucket_min)?;
        }
        let queue = SizeDistribution::from_sizes(at_level().map(|e| e.q_before), Conditioning::Stationary).ok();
        levels.push(LevelModel {
            level,
            aes,
            stats: Some(stats),
            tables,
            sizes,
            queue,
        });
    }

    let (theta, theta_fit) = match opts.theta {
        Some(t) => (t, None),
        None => {
            let mut moves = Vec::new();
            for d in days {
                let mids: Vec<i64> = d.records.iter().map(|r| r.mid_half_ticks).collect();
                moves.extend(moves_from_mid_path(&mids));
            }
            let fit = calibrate_theta(&moves, &opts.theta_mechanism, opts.theta_max_iter)?;
            (fit.theta, Some(fit))
        }
    };

    let (hawkes, hawkes_fit) = if opts.variant.is_hawkes() {
        let data = hawkes_realizations(days);
        let init = hawkes::initial_guess(hawkes::ORDER_FLOW_DIM, &data)?;
        let FitResult {
            model,
            log_likelihood,
            grad_norm,
            iterations,
            converged,
        } = hawkes::fit_many(&data, &init, &opts.hawkes)?;
        let summary = HawkesFitSummary {
            log_likelihood,
            grad_norm,
            iterations,
            converged,
            spectral_radius: model.spectral_radius(),
        };
        (Some(model), Some(summary))
    } else {
        (None, None)
    };

    let initial_ref_half_ticks = days
        .iter()
        .flat_map(|d| d.records.first())
        .map(|r| r.ref_half_ticks)
        .next()
        .unwrap_or(1);
    let model = Model {
        schema: MODEL_SCHEMA.to_string(),
        variant: opts.variant,
        tick_size: opts.tick_size,
        depth: opts.depth,
        theta,
        theta_fit,
        initial_ref_half_ticks,
        levels,
        hawkes,
        hawkes_fit,
    };
    model.validate()?;
    Ok(model)
}

fn within_bucket_laws<'a, I>(events: I, aes: f64, bucketing: SizeBucketing, min_count: usize) -> Result<Vec<BucketSizes>, CalibError>
where
    I: Iterator<Item = &'a OrderEvent>,
{
    use std::collections::BTreeMap;
    quantize_queue(1, aes)?;
    let mut cells: BTreeMap<(EventType, u64), Vec<u64>> = BTreeMap::new();
    for ev in events {
        let eta = ev.eta.base();
        cells.entry((eta, bucketing.bucket(ev.size, aes))).or_default().push(ev.size);
    }
    let mut out = Vec::new();
    for ((eta, bucket), sizes) in cells {
        if sizes.len() < min_count.max(1) {
            continue;
        }
        out.push(BucketSizes {
            eta,
            bucket,
            dist: SizeDistribution::from_sizes(sizes, Conditioning::Stationary)?,
        });
    }
    Ok(out)
}

/// Level-1 events of each day as a six-component Hawkes realization, times
/// in seconds from the session open.
pub fn hawkes_realizations(days: &[DayFlow]) -> Vec<Realization> {
    days.iter()
        .map(|d| {
            let events = d
                .records
                .iter()
                .filter_map(|r| match r.item {
                    FlowItem::Order(ev) if ev.level == 1 => Some(MarkedEvent {
                        t: (ev.ts_ns - d.open_ns) as f64 * 1e-9,
                        component: component_of(ev.eta, ev.side),
                        size: ev.size,
                    }),
                    _ => None,
                })
                .collect();
            Realization {
                events,
                horizon: (d.close_ns - d.open_ns) as f64 * 1e-9,
            }
        })
        .collect()
}
