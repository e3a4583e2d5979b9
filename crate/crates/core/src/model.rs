//! Domain types for Folksodriven tags: the `(C, E, R, X)` tuple and its
//! space-time event.
//!
//! A tag couples a formal context (topics, descriptions and their incidence),
//! a time exposition (click-through rate of the resource), the resource URI and
//! a four-vector event. The event's time component is the scaled CTR; the three
//! spatial components are filled in later by the embedding.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Default mapping from CTR in `[0, 1]` onto the event time axis.
pub const DEFAULT_TIME_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("impressions must be positive")]
    ZeroImpressions,
    #[error("clicks ({clicks}) exceed impressions ({impressions})")]
    ClicksExceedImpressions { clicks: u64, impressions: u64 },
    #[error("event time component is zero; direction undefined")]
    ZeroTimeComponent,
    #[error("tag label is empty after normalization")]
    EmptyLabel,
    #[error("invalid formal context: {0}")]
    InvalidContext(String),
    #[error("invalid resource uri {uri:?}: {reason}")]
    InvalidResource { uri: String, reason: String },
    #[error("event components must be finite")]
    NonFiniteEvent,
    #[error("inconsistent exposition: ctr {ctr} != {clicks}/{impressions}")]
    InconsistentCtr { clicks: u64, impressions: u64, ctr: f64 },
}

/// Normalizes a raw tag: Unicode NFC, lowercase, one leading `#` removed,
/// surrounding whitespace trimmed.
pub fn normalize_label(raw: &str) -> String {
    let nfc: String = raw.trim().nfc().collect();
    let folded = nfc.to_lowercase();
    let stripped = folded.strip_prefix('#').unwrap_or(&folded);
    stripped.trim().to_string()
}

/// Formal context `C = (T, D, I)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawContext")]
pub struct FormalContext {
    topics: BTreeSet<String>,
    descriptions: BTreeSet<String>,
    incidence: BTreeSet<(String, String)>,
}

#[derive(Deserialize)]
struct RawContext {
    topics: BTreeSet<String>,
    descriptions: BTreeSet<String>,
    incidence: BTreeSet<(String, String)>,
}

impl TryFrom<RawContext> for FormalContext {
    type Error = ModelError;

    fn try_from(raw: RawContext) -> Result<Self, Self::Error> {
        FormalContext::new(raw.topics, raw.descriptions, raw.incidence)
    }
}

impl FormalContext {
    pub fn new(
        topics: BTreeSet<String>,
        descriptions: BTreeSet<String>,
        incidence: BTreeSet<(String, String)>,
    ) -> Result<Self, ModelError> {
        if topics.is_empty() {
            return Err(ModelError::InvalidContext("empty topic set".into()));
        }
        if descriptions.is_empty() {
            return Err(ModelError::InvalidContext("empty description set".into()));
        }
        for (t, d) in &incidence {
            if !topics.contains(t) {
                return Err(ModelError::InvalidContext(format!("incidence references unknown topic {t:?}")));
            }
            if !descriptions.contains(d) {
                return Err(ModelError::InvalidContext(format!(
                    "incidence references unknown description {d:?}"
                )));
            }
        }
        Ok(Self { topics, descriptions, incidence })
    }

    /// Context with a single topic/description pair, related to each other.
    pub fn single(topic: &str, description: &str) -> Result<Self, ModelError> {
        Self::new(
            BTreeSet::from([topic.to_string()]),
            BTreeSet::from([description.to_string()]),
            BTreeSet::from([(topic.to_string(), description.to_string())]),
        )
    }

    pub fn topics(&self) -> &BTreeSet<String> {
        &self.topics
    }

    pub fn descriptions(&self) -> &BTreeSet<String> {
        &self.descriptions
    }

    pub fn incidence(&self) -> &BTreeSet<(String, String)> {
        &self.incidence
    }
}

/// Time exposition `E`: the click-through rate of a resource.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawExposition")]
pub struct TimeExposition {
    clicks: u64,
    impressions: u64,
    ctr: f64,
}

#[derive(Deserialize)]
struct RawExposition {
    clicks: u64,
    impressions: u64,
    ctr: f64,
}

impl TryFrom<RawExposition> for TimeExposition {
    type Error = ModelError;

    fn try_from(raw: RawExposition) -> Result<Self, Self::Error> {
        let e = compute_ctr(raw.clicks, raw.impressions)?;
        if e.ctr.to_bits() != raw.ctr.to_bits() {
            return Err(ModelError::InconsistentCtr { clicks: raw.clicks, impressions: raw.impressions, ctr: raw.ctr });
        }
        Ok(e)
    }
}

impl TimeExposition {
    pub fn clicks(&self) -> u64 {
        self.clicks
    }

    pub fn impressions(&self) -> u64 {
        self.impressions
    }

    pub fn ctr(&self) -> f64 {
        self.ctr
    }
}

/// Builds a [`TimeExposition`] from raw counts. Clicks above impressions are
/// rejected, not clamped.
pub fn compute_ctr(clicks: u64, impressions: u64) -> Result<TimeExposition, ModelError> {
    if impressions == 0 {
        return Err(ModelError::ZeroImpressions);
    }
    if clicks > impressions {
        return Err(ModelError::ClicksExceedImpressions { clicks, impressions });
    }
    Ok(TimeExposition { clicks, impressions, ctr: clicks as f64 / impressions as f64 })
}

/// Resource `R`: an absolute URI.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ResourceRef(String);

impl ResourceRef {
    pub fn parse(uri: &str) -> Result<Self, ModelError> {
        let uri = uri.trim();
        match url::Url::parse(uri) {
            Ok(u) if !u.cannot_be_a_base() || !u.path().is_empty() => Ok(Self(uri.to_string())),
            Ok(_) => Err(ModelError::InvalidResource { uri: uri.into(), reason: "missing authority and path".into() }),
            Err(e) => Err(ModelError::InvalidResource { uri: uri.into(), reason: e.to_string() }),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ResourceRef {
    type Error = ModelError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s)
    }
}

impl From<ResourceRef> for String {
    fn from(r: ResourceRef) -> String {
        r.0
    }
}

impl fmt::Display for ResourceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A four-vector event; `t` is the first (time) component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEvent")]
pub struct MinkowskiEvent {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Deserialize)]
struct RawEvent {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl TryFrom<RawEvent> for MinkowskiEvent {
    type Error = ModelError;

    fn try_from(r: RawEvent) -> Result<Self, Self::Error> {
        MinkowskiEvent::new(r.t, r.x, r.y, r.z)
    }
}

impl MinkowskiEvent {
    pub fn new(t: f64, x: f64, y: f64, z: f64) -> Result<Self, ModelError> {
        if [t, x, y, z].iter().all(|c| c.is_finite()) {
            Ok(Self { t, x, y, z })
        } else {
            Err(ModelError::NonFiniteEvent)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeDirection {
    PastDirected,
    FutureDirected,
}

pub fn classify_time_direction(event: &MinkowskiEvent) -> Result<TimeDirection, ModelError> {
    if event.t < 0.0 {
        Ok(TimeDirection::PastDirected)
    } else if event.t > 0.0 {
        Ok(TimeDirection::FutureDirected)
    } else {
        Err(ModelError::ZeroTimeComponent)
    }
}

/// Squared interval `s² = −Δt² + Δx² + Δy² + Δz²`, signature (−,+,+,+).
pub fn minkowski_interval(a: &MinkowskiEvent, b: &MinkowskiEvent) -> f64 {
    let dt = a.t - b.t;
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    -(dt * dt) + dx * dx + dy * dy + dz * dz
}

/// A Folksodriven tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTag")]
pub struct FDTag {
    label: String,
    context: FormalContext,
    exposition: TimeExposition,
    resource: ResourceRef,
    event: MinkowskiEvent,
}

#[derive(Deserialize)]
struct RawTag {
    label: String,
    context: FormalContext,
    exposition: TimeExposition,
    resource: ResourceRef,
    event: MinkowskiEvent,
}

impl TryFrom<RawTag> for FDTag {
    type Error = ModelError;

    fn try_from(r: RawTag) -> Result<Self, Self::Error> {
        if r.label.is_empty() || normalize_label(&r.label) != r.label {
            return Err(ModelError::EmptyLabel);
        }
        Ok(FDTag { label: r.label, context: r.context, exposition: r.exposition, resource: r.resource, event: r.event })
    }
}

/// Builds a tag; the event time is `time_scale · ctr` and the spatial part is
/// the origin until an embedding assigns coordinates.
pub fn make_fd_tag(
    label: &str,
    context: FormalContext,
    exposition: TimeExposition,
    resource: ResourceRef,
    time_scale: f64,
) -> Result<FDTag, ModelError> {
    let label = normalize_label(label);
    if label.is_empty() {
        return Err(ModelError::EmptyLabel);
    }
    let event = MinkowskiEvent::new(time_scale * exposition.ctr(), 0.0, 0.0, 0.0)?;
    Ok(FDTag { label, context, exposition, resource, event })
}

impl FDTag {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn context(&self) -> &FormalContext {
        &self.context
    }

    pub fn exposition(&self) -> &TimeExposition {
        &self.exposition
    }

    pub fn resource(&self) -> &ResourceRef {
        &self.resource
    }

    pub fn event(&self) -> &MinkowskiEvent {
        &self.event
    }

    /// Copy of this tag with its spatial coordinates replaced.
    pub fn with_position(&self, position: [f64; 3]) -> Result<FDTag, ModelError> {
        let event = MinkowskiEvent::new(self.event.t, position[0], position[1], position[2])?;
        Ok(FDTag { event, ..self.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> FormalContext {
        FormalContext::single("world news", "headline").unwrap()
    }

    #[test]
    fn ctr_examples() {
        assert_eq!(compute_ctr(0, 100).unwrap().ctr(), 0.0);
        assert_eq!(compute_ctr(1000, 1000).unwrap().ctr(), 1.0);
        assert_eq!(compute_ctr(50, 1000).unwrap().ctr(), 50.0 / 1000.0);
        assert_eq!(compute_ctr(100, 0), Err(ModelError::ZeroImpressions));
        assert!(matches!(compute_ctr(5, 4), Err(ModelError::ClicksExceedImpressions { .. })));
    }

    #[test]
    fn direction_examples() {
        let ev = |t| MinkowskiEvent::new(t, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(classify_time_direction(&ev(-1.0)), Ok(TimeDirection::PastDirected));
        assert_eq!(classify_time_direction(&ev(0.5)), Ok(TimeDirection::FutureDirected));
        assert_eq!(classify_time_direction(&ev(0.0)), Err(ModelError::ZeroTimeComponent));
        assert_eq!(classify_time_direction(&ev(-0.0)), Err(ModelError::ZeroTimeComponent));
    }

    #[test]
    fn interval_examples() {
        let o = MinkowskiEvent::new(0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(minkowski_interval(&o, &o), 0.0);
        let a = MinkowskiEvent::new(0.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(minkowski_interval(&a, &o), 1.0);
        let b = MinkowskiEvent::new(2.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(minkowski_interval(&b, &o), -1.0);
    }

    #[test]
    fn non_finite_event_rejected() {
        assert_eq!(MinkowskiEvent::new(f64::NAN, 0.0, 0.0, 0.0), Err(ModelError::NonFiniteEvent));
    }

    #[test]
    fn fd_tag_construction() {
        let e = compute_ctr(50, 1000).unwrap();
        let r = ResourceRef::parse("https://example.org/a").unwrap();
        let tag = make_fd_tag("#WorldNews", ctx(), e, r.clone(), 1.0).unwrap();
        assert_eq!(tag.label(), "worldnews");
        assert_eq!(tag.event().t, 0.05);
        assert_eq!((tag.event().x, tag.event().y, tag.event().z), (0.0, 0.0, 0.0));

        assert_eq!(make_fd_tag("  ", ctx(), e, r.clone(), 1.0), Err(ModelError::EmptyLabel));
        assert_eq!(make_fd_tag("#", ctx(), e, r, 1.0), Err(ModelError::EmptyLabel));
    }

    #[test]
    fn empty_topic_set_is_invalid_context() {
        let res = FormalContext::new(BTreeSet::new(), BTreeSet::from(["d".to_string()]), BTreeSet::new());
        assert!(matches!(res, Err(ModelError::InvalidContext(_))));
    }

    #[test]
    fn dangling_incidence_rejected() {
        let res = FormalContext::new(
            BTreeSet::from(["t".to_string()]),
            BTreeSet::from(["d".to_string()]),
            BTreeSet::from([("t".to_string(), "missing".to_string())]),
        );
        assert!(matches!(res, Err(ModelError::InvalidContext(_))));
    }

    #[test]
    fn label_normalization() {
        assert_eq!(normalize_label("#News"), "news");
        assert_eq!(normalize_label("news"), "news");
        assert_eq!(normalize_label("##News"), "#news");
        // "é" composed vs. decomposed
        assert_eq!(normalize_label("Cafe\u{301}"), normalize_label("CAF\u{c9}"));
    }

    #[test]
    fn resource_uris() {
        assert!(ResourceRef::parse("https://example.org/x").is_ok());
        assert!(ResourceRef::parse("urn:isbn:0451450523").is_ok());
        assert!(ResourceRef::parse("not a uri").is_err());
        assert!(ResourceRef::parse("/relative/path").is_err());
    }

    #[test]
    fn tag_serde_round_trip() {
        let e = compute_ctr(3, 10).unwrap();
        let r = ResourceRef::parse("https://example.org/a").unwrap();
        let tag = make_fd_tag("#A", ctx(), e, r, 2.0).unwrap().with_position([1.0, -2.0, 0.5]).unwrap();
        let s = serde_json::to_string(&tag).unwrap();
        let back: FDTag = serde_json::from_str(&s).unwrap();
        assert_eq!(back, tag);

        let tampered = s.replace("\"clicks\":3", "\"clicks\":4");
        assert!(serde_json::from_str::<FDTag>(&tampered).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn event() -> impl Strategy<Value = MinkowskiEvent> {
            (-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64)
                .prop_map(|(t, x, y, z)| MinkowskiEvent::new(t, x, y, z).unwrap())
        }

        proptest! {
            #[test]
            fn ctr_bounded(impressions in 1u64..1_000_000, frac in 0.0..=1.0f64) {
                let clicks = (impressions as f64 * frac).floor() as u64;
                let e = compute_ctr(clicks, impressions).unwrap();
                prop_assert!((0.0..=1.0).contains(&e.ctr()));
            }

            #[test]
            fn interval_symmetric(a in event(), b in event()) {
                prop_assert_eq!(minkowski_interval(&a, &b), minkowski_interval(&b, &a));
            }

            #[test]
            fn interval_translation_invariant(a in event(), b in event(), s in event()) {
                let shift = |e: &MinkowskiEvent| MinkowskiEvent::new(e.t + s.t, e.x + s.x, e.y + s.y, e.z + s.z).unwrap();
                let before = minkowski_interval(&a, &b);
                let after = minkowski_interval(&shift(&a), &shift(&b));
                prop_assert!((before - after).abs() <= 1e-9 * (1.0 + before.abs()));
            }

            #[test]
            fn direction_antisymmetric(e in event()) {
                prop_assume!(e.t != 0.0);
                let flipped = MinkowskiEvent { t: -e.t, ..e };
                prop_assert_ne!(classify_time_direction(&e).unwrap(), classify_time_direction(&flipped).unwrap());
            }
        }
    }
}
