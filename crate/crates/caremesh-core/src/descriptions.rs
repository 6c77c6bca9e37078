//! Format service: converts raw key/value documents from heterogeneous
//! sources (people or devices) into validated semantic descriptions bound to
//! KB concepts.
//!
//! Raw documents are flat text maps. The canonical field names are listed in
//! the README; parsing is strict by default (unknown keys rejected) with a
//! lenient mode that collects warnings instead. Formatting is pure: the same
//! raw document against the same KB snapshot always yields the same value.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{ConceptId, KnowledgeBase};
use crate::units::{normalize_disjoint, GridPoint, Minutes, TimeInterval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    HumanForm,
    DeviceProfile,
}

/// A raw description as submitted by a person or a device profile. Devices
/// without the resources to format their own documents submit these through
/// a formatting broker, which is nothing more than calling the format
/// functions on their behalf.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDescription {
    pub source_kind: SourceKind,
    pub fields: BTreeMap<String, String>,
}

impl RawDescription {
    pub fn new(source_kind: SourceKind) -> Self {
        Self { source_kind, fields: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.fields.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Priority {
    Routine,
    Elevated,
    Emergency,
}

impl Priority {
    fn parse(s: &str) -> Option<Self> {
        match s.to_uppercase().as_str() {
            "ROUTINE" => Some(Self::Routine),
            "ELEVATED" => Some(Self::Elevated),
            "EMERGENCY" => Some(Self::Emergency),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Routine => "ROUTINE",
            Self::Elevated => "ELEVATED",
            Self::Emergency => "EMERGENCY",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderType {
    Professional,
    Informal,
    Device,
}

impl ProviderType {
    pub const ALL: [ProviderType; 3] =
        [ProviderType::Professional, ProviderType::Informal, ProviderType::Device];

    fn parse(s: &str) -> Option<Self> {
        match s.to_lowercase().as_str() {
            "professional" => Some(Self::Professional),
            "informal" => Some(Self::Informal),
            "device" => Some(Self::Device),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Professional => "professional",
            Self::Informal => "informal",
            Self::Device => "device",
        }
    }
}

/// Hard non-functional restrictions. Absent fields mean unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    pub max_price: Option<i64>,
    pub min_quality: Option<u8>,
    pub allowed_provider_types: BTreeSet<ProviderType>,
    pub max_distance: Option<f64>,
}

impl Default for Constraints {
    fn default() -> Self {
        Self {
            max_price: None,
            min_quality: None,
            allowed_provider_types: ProviderType::ALL.into_iter().collect(),
            max_distance: None,
        }
    }
}

/// Soft preference weights over quality, price, and proximity. Non-negative,
/// summing to 1 within 1e-9.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceWeights {
    pub w_quality: f64,
    pub w_price: f64,
    pub w_distance: f64,
}

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl PreferenceWeights {
    pub fn uniform() -> Self {
        Self { w_quality: 1.0 / 3.0, w_price: 1.0 / 3.0, w_distance: 1.0 / 3.0 }
    }

    pub fn valid(&self) -> bool {
        let nonneg = self.w_quality >= 0.0 && self.w_price >= 0.0 && self.w_distance >= 0.0;
        let sum = self.w_quality + self.w_price + self.w_distance;
        nonneg && (sum - 1.0).abs() <= WEIGHT_SUM_TOLERANCE
    }
}

/// A requester's typed, time-windowed, prioritized need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRequest {
    pub id: String,
    pub requester: String,
    pub concept: ConceptId,
    pub window: TimeInterval,
    pub auth_token: String,
    pub estimated_duration: Minutes,
    pub priority: Priority,
    pub location: GridPoint,
    pub constraints: Constraints,
    pub preferences: PreferenceWeights,
}

/// A provider's semantically described capability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceOffer {
    pub id: String,
    pub provider: String,
    pub provider_type: ProviderType,
    pub concept: ConceptId,
    /// integer cents per engagement
    pub price: i64,
    /// ordinal 1..=5
    pub quality: u8,
    /// disjoint, sorted intervals; touching runs are merged at format time
    pub availability: Vec<TimeInterval>,
    pub location: GridPoint,
    /// concurrent contracts the provider can hold
    pub capacity: u32,
    /// present iff `provider_type == Device`
    pub invocation_endpoint: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("missing required field '{key}'")]
    MissingField { key: String },
    #[error("malformed field '{key}': {reason}")]
    MalformedField { key: String, reason: String },
    #[error("unknown service type '{concept}'")]
    UnknownConcept { concept: String },
    #[error("unknown field '{key}'")]
    UnknownKey { key: String },
    #[error("invalid description: {reason}")]
    InvariantViolation { reason: String },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FormatOptions {
    /// In lenient mode unknown keys are collected as warnings instead of
    /// rejecting the document.
    pub lenient: bool,
}

/// A formatted value plus any lenient-mode warnings for the caller to log.
#[derive(Debug, Clone, PartialEq)]
pub struct Formatted<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

pub const REQUEST_KEYS: &[&str] = &[
    "id",
    "requester",
    "service_type",
    "window_start",
    "window_end",
    "auth_token",
    "estimated_duration",
    "priority",
    "location",
    "max_price",
    "min_quality",
    "allowed_provider_types",
    "max_distance",
    "w_quality",
    "w_price",
    "w_distance",
];

pub const OFFER_KEYS: &[&str] = &[
    "id",
    "provider",
    "provider_type",
    "service_type",
    "price",
    "quality",
    "availability",
    "location",
    "capacity",
    "endpoint",
];

fn check_keys(
    raw: &RawDescription,
    known: &[&str],
    opts: FormatOptions,
) -> Result<Vec<String>, FormatError> {
    let mut warnings = Vec::new();
    for key in raw.fields.keys() {
        if !known.contains(&key.as_str()) {
            if opts.lenient {
                warnings.push(format!("ignoring unknown field '{key}'"));
            } else {
                return Err(FormatError::UnknownKey { key: key.clone() });
            }
        }
    }
    Ok(warnings)
}

fn required<'a>(raw: &'a RawDescription, key: &str) -> Result<&'a str, FormatError> {
    raw.fields
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| FormatError::MissingField { key: key.to_string() })
}

fn malformed(key: &str, reason: impl Into<String>) -> FormatError {
    FormatError::MalformedField { key: key.to_string(), reason: reason.into() }
}

fn parse_i64(raw: &RawDescription, key: &str) -> Result<Option<i64>, FormatError> {
    raw.fields
        .get(key)
        .map(|v| {
            v.trim().parse::<i64>().map_err(|_| malformed(key, format!("not an integer: {v:?}")))
        })
        .transpose()
}

fn parse_f64(raw: &RawDescription, key: &str) -> Result<Option<f64>, FormatError> {
    match raw.fields.get(key) {
        None => Ok(None),
        Some(v) => {
            let parsed = v
                .trim()
                .parse::<f64>()
                .map_err(|_| malformed(key, format!("not a number: {v:?}")))?;
            if !parsed.is_finite() {
                return Err(malformed(key, "not finite"));
            }
            Ok(Some(parsed))
        }
    }
}

fn parse_location(raw: &RawDescription) -> Result<GridPoint, FormatError> {
    match raw.fields.get("location") {
        None => Ok(GridPoint::default()),
        Some(v) => {
            let parts: Vec<&str> = v.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(malformed("location", format!("expected \"x,y\", got {v:?}")));
            }
            let x = parts[0].parse().map_err(|_| malformed("location", "x is not an integer"))?;
            let y = parts[1].parse().map_err(|_| malformed("location", "y is not an integer"))?;
            Ok(GridPoint::new(x, y))
        }
    }
}

fn resolve_concept(raw_value: &str, kb: &KnowledgeBase) -> Result<ConceptId, FormatError> {
    kb.resolve(raw_value)
        .map_err(|_| FormatError::UnknownConcept { concept: raw_value.trim().to_lowercase() })
}

/// Parses `"[0,480]"` or `"[[0,480],[500,600]]"` into normalized intervals.
fn parse_availability(value: &str) -> Result<Vec<TimeInterval>, FormatError> {
    let key = "availability";
    let val: serde_json::Value =
        serde_json::from_str(value).map_err(|e| malformed(key, e.to_string()))?;
    let arr = val.as_array().ok_or_else(|| malformed(key, "expected an array"))?;
    let pairs: Vec<(Minutes, Minutes)> = if arr.iter().all(serde_json::Value::is_number) {
        vec![serde_json::from_value(val.clone()).map_err(|e| malformed(key, e.to_string()))?]
    } else {
        serde_json::from_value(val.clone()).map_err(|e| malformed(key, e.to_string()))?
    };
    let intervals = pairs
        .into_iter()
        .map(|(s, e)| TimeInterval::new(s, e).map_err(|r| malformed(key, r)))
        .collect::<Result<Vec<_>, _>>()?;
    normalize_disjoint(intervals).map_err(|r| FormatError::InvariantViolation { reason: r })
}

/// Formats a raw request document against a KB snapshot.
///
/// Required keys: `service_type`, `requester`, `window_start`, `window_end`.
/// Missing optional fields take documented defaults: priority ROUTINE,
/// uniform preference weights, duration spanning the whole window, and
/// unconstrained restrictions.
pub fn format_request(
    raw: &RawDescription,
    kb: &KnowledgeBase,
    opts: FormatOptions,
) -> Result<Formatted<ServiceRequest>, FormatError> {
    let warnings = check_keys(raw, REQUEST_KEYS, opts)?;

    let concept = resolve_concept(required(raw, "service_type")?, kb)?;
    let requester = required(raw, "requester")?.to_string();
    let start: Minutes = required(raw, "window_start")?
        .trim()
        .parse()
        .map_err(|_| malformed("window_start", "not an integer"))?;
    let end: Minutes = required(raw, "window_end")?
        .trim()
        .parse()
        .map_err(|_| malformed("window_end", "not an integer"))?;
    let window = TimeInterval::new(start, end).map_err(|r| malformed("window_end", r))?;

    let estimated_duration = match parse_i64(raw, "estimated_duration")? {
        Some(d) if d <= 0 => return Err(malformed("estimated_duration", "must be positive")),
        Some(d) if d > window.len() => {
            return Err(malformed("estimated_duration", "exceeds the request window"))
        }
        Some(d) => d,
        None => window.len(),
    };

    let priority = match raw.fields.get("priority") {
        None => Priority::Routine,
        Some(v) => Priority::parse(v).ok_or_else(|| {
            malformed("priority", format!("expected ROUTINE, ELEVATED, or EMERGENCY, got {v:?}"))
        })?,
    };

    let min_quality = match parse_i64(raw, "min_quality")? {
        None => None,
        Some(q) if (1..=5).contains(&q) => Some(q as u8),
        Some(q) => return Err(malformed("min_quality", format!("{q} is outside 1..=5"))),
    };
    let max_price = match parse_i64(raw, "max_price")? {
        Some(p) if p < 0 => return Err(malformed("max_price", "negative")),
        other => other,
    };
    let max_distance = match parse_f64(raw, "max_distance")? {
        Some(d) if d < 0.0 => return Err(malformed("max_distance", "negative")),
        other => other,
    };
    let allowed_provider_types = match raw.fields.get("allowed_provider_types") {
        None => ProviderType::ALL.into_iter().collect(),
        Some(v) => {
            let mut set = BTreeSet::new();
            for part in v.split(',') {
                let part = part.trim();
                let pt = ProviderType::parse(part).ok_or_else(|| {
                    malformed("allowed_provider_types", format!("unknown provider type {part:?}"))
                })?;
                set.insert(pt);
            }
            if set.is_empty() {
                return Err(malformed("allowed_provider_types", "empty list"));
            }
            set
        }
    };

    let weight_keys = ["w_quality", "w_price", "w_distance"];
    let any_weight = weight_keys.iter().any(|k| raw.fields.contains_key(*k));
    let preferences = if any_weight {
        let w = PreferenceWeights {
            w_quality: parse_f64(raw, "w_quality")?.unwrap_or(0.0),
            w_price: parse_f64(raw, "w_price")?.unwrap_or(0.0),
            w_distance: parse_f64(raw, "w_distance")?.unwrap_or(0.0),
        };
        if !w.valid() {
            return Err(malformed("w_quality", "weights must be non-negative and sum to 1"));
        }
        w
    } else {
        PreferenceWeights::uniform()
    };

    let id = raw
        .fields
        .get("id")
        .cloned()
        .unwrap_or_else(|| format!("req-{}-{}", requester, window.start));

    Ok(Formatted {
        value: ServiceRequest {
            id,
            requester,
            concept,
            window,
            auth_token: raw.fields.get("auth_token").cloned().unwrap_or_default(),
            estimated_duration,
            priority,
            location: parse_location(raw)?,
            constraints: Constraints {
                max_price,
                min_quality,
                allowed_provider_types,
                max_distance,
            },
            preferences,
        },
        warnings,
    })
}

/// Formats a raw offer document. Required keys: `service_type`, `provider`,
/// `provider_type`. Defaults: price 0, quality 3, capacity 1, availability
/// spanning the whole scenario horizon `[0, horizon)`.
pub fn format_offer(
    raw: &RawDescription,
    kb: &KnowledgeBase,
    horizon: Minutes,
    opts: FormatOptions,
) -> Result<Formatted<ServiceOffer>, FormatError> {
    let warnings = check_keys(raw, OFFER_KEYS, opts)?;

    let concept = resolve_concept(required(raw, "service_type")?, kb)?;
    let provider = required(raw, "provider")?.to_string();
    let provider_type = {
        let v = required(raw, "provider_type")?;
        ProviderType::parse(v)
            .ok_or_else(|| malformed("provider_type", format!("unknown provider type {v:?}")))?
    };

    let price = match parse_i64(raw, "price")?.unwrap_or(0) {
        p if p < 0 => return Err(malformed("price", "negative")),
        p => p,
    };
    let quality = match parse_i64(raw, "quality")?.unwrap_or(3) {
        q if (1..=5).contains(&q) => q as u8,
        q => return Err(malformed("quality", format!("{q} is outside 1..=5"))),
    };
    let capacity = match parse_i64(raw, "capacity")?.unwrap_or(1) {
        c if c >= 1 => c as u32,
        _ => return Err(malformed("capacity", "must be at least 1")),
    };
    let availability = match raw.fields.get("availability") {
        None => {
            let horizon_iv = TimeInterval::new(0, horizon)
                .map_err(|r| FormatError::InvariantViolation { reason: format!("horizon: {r}") })?;
            vec![horizon_iv]
        }
        Some(v) => parse_availability(v)?,
    };

    let endpoint = raw.fields.get("endpoint").cloned();
    match (provider_type, &endpoint) {
        (ProviderType::Device, None) => {
            return Err(FormatError::InvariantViolation {
                reason: "device offer requires an invocation endpoint".into(),
            })
        }
        (ProviderType::Professional | ProviderType::Informal, Some(_)) => {
            return Err(FormatError::InvariantViolation {
                reason: "only device offers carry an invocation endpoint".into(),
            })
        }
        _ => {}
    }

    let id = raw.fields.get("id").cloned().unwrap_or_else(|| format!("{}/{}", provider, concept));

    Ok(Formatted {
        value: ServiceOffer {
            id,
            provider,
            provider_type,
            concept,
            price,
            quality,
            availability,
            location: parse_location(raw)?,
            capacity,
            invocation_endpoint: endpoint,
        },
        warnings,
    })
}

impl ServiceRequest {
    /// Canonical raw form. Feeding this back through [`format_request`]
    /// reproduces the value exactly.
    pub fn to_raw(&self) -> RawDescription {
        let mut raw = RawDescription::new(SourceKind::HumanForm)
            .with("id", self.id.clone())
            .with("requester", self.requester.clone())
            .with("service_type", self.concept.as_str())
            .with("window_start", self.window.start.to_string())
            .with("window_end", self.window.end.to_string())
            .with("estimated_duration", self.estimated_duration.to_string())
            .with("priority", self.priority.as_str())
            .with("location", self.location.to_string())
            .with(
                "allowed_provider_types",
                self.constraints
                    .allowed_provider_types
                    .iter()
                    .map(ProviderType::as_str)
                    .collect::<Vec<_>>()
                    .join(","),
            )
            .with("w_quality", self.preferences.w_quality.to_string())
            .with("w_price", self.preferences.w_price.to_string())
            .with("w_distance", self.preferences.w_distance.to_string());
        if !self.auth_token.is_empty() {
            raw = raw.with("auth_token", self.auth_token.clone());
        }
        if let Some(p) = self.constraints.max_price {
            raw = raw.with("max_price", p.to_string());
        }
        if let Some(q) = self.constraints.min_quality {
            raw = raw.with("min_quality", q.to_string());
        }
        if let Some(d) = self.constraints.max_distance {
            raw = raw.with("max_distance", d.to_string());
        }
        raw
    }
}

impl ServiceOffer {
    /// Canonical raw form; see [`ServiceRequest::to_raw`].
    pub fn to_raw(&self) -> RawDescription {
        let source = match self.provider_type {
            ProviderType::Device => SourceKind::DeviceProfile,
            _ => SourceKind::HumanForm,
        };
        let availability = serde_json::to_string(
            &self.availability.iter().map(|iv| (iv.start, iv.end)).collect::<Vec<_>>(),
        )
        .expect("intervals serialize");
        let mut raw = RawDescription::new(source)
            .with("id", self.id.clone())
            .with("provider", self.provider.clone())
            .with("provider_type", self.provider_type.as_str())
            .with("service_type", self.concept.as_str())
            .with("price", self.price.to_string())
            .with("quality", self.quality.to_string())
            .with("availability", availability)
            .with("location", self.location.to_string())
            .with("capacity", self.capacity.to_string());
        if let Some(ep) = &self.invocation_endpoint {
            raw = raw.with("endpoint", ep.clone());
        }
        raw
    }
}
