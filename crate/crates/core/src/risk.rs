//! Feature extraction and the sign-constrained risk score.
//!
//! Harmful features carry non-negative weights and protective ones
//! non-positive weights, so switching a harmful feature on can never lower the
//! clamped sum and switching a protective one on can never raise it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{ClauseAnnotation, Dimension, Label};

const DEFAULT_WEIGHTS: &str = include_str!("../data/weights.json");

pub const MAX_SCORE: i64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    SensitiveDataCollection,
    ThirdPartySharing,
    DataSale,
    IndefiniteRetention,
    TrackingTechnologies,
    CrossSiteTracking,
    LocationCollection,
    LawEnforcementSharing,
    DevicePermissions,
    UserOptOut,
    UserDeletion,
    UserAccess,
    ConsentWithdrawal,
}

impl Feature {
    pub const ALL: [Feature; 13] = [
        Feature::SensitiveDataCollection,
        Feature::ThirdPartySharing,
        Feature::DataSale,
        Feature::IndefiniteRetention,
        Feature::TrackingTechnologies,
        Feature::CrossSiteTracking,
        Feature::LocationCollection,
        Feature::LawEnforcementSharing,
        Feature::DevicePermissions,
        Feature::UserOptOut,
        Feature::UserDeletion,
        Feature::UserAccess,
        Feature::ConsentWithdrawal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::SensitiveDataCollection => "sensitive_data_collection",
            Feature::ThirdPartySharing => "third_party_sharing",
            Feature::DataSale => "data_sale",
            Feature::IndefiniteRetention => "indefinite_retention",
            Feature::TrackingTechnologies => "tracking_technologies",
            Feature::CrossSiteTracking => "cross_site_tracking",
            Feature::LocationCollection => "location_collection",
            Feature::LawEnforcementSharing => "law_enforcement_sharing",
            Feature::DevicePermissions => "device_permissions",
            Feature::UserOptOut => "user_opt_out",
            Feature::UserDeletion => "user_deletion",
            Feature::UserAccess => "user_access",
            Feature::ConsentWithdrawal => "consent_withdrawal",
        }
    }

    /// Whether `label` triggers this feature.
    pub fn matches(self, label: &Label) -> bool {
        use Dimension::*;
        let (dim, name) = (label.dimension(), label.name());
        match self {
            Feature::SensitiveDataCollection => {
                dim == DataType && matches!(name, "health" | "biometric" | "financial" | "government_id")
            }
            Feature::ThirdPartySharing => {
                dim == SharingRecipient
                    && matches!(
                        name,
                        "advertisers" | "analytics_providers" | "data_brokers" | "affiliates"
                    )
            }
            Feature::DataSale => dim == SharingRecipient && name == "data_brokers",
            Feature::IndefiniteRetention => dim == RetentionDeletion && name == "indefinite_retention",
            Feature::TrackingTechnologies => dim == TrackingTechnology,
            Feature::CrossSiteTracking => dim == TrackingTechnology && name == "cross_site_tracking",
            Feature::LocationCollection => {
                (dim == DataType && name == "location") || (dim == Permission && name == "location_access")
            }
            Feature::LawEnforcementSharing => dim == SharingRecipient && name == "law_enforcement",
            Feature::DevicePermissions => {
                dim == Permission && matches!(name, "camera" | "microphone" | "contacts_access")
            }
            Feature::UserOptOut => dim == UserControl && name == "opt_out",
            Feature::UserDeletion => dim == UserControl && name == "deletion_request",
            Feature::UserAccess => dim == UserControl && name == "access_request",
            Feature::ConsentWithdrawal => dim == UserControl && name == "consent_withdrawal",
        }
    }

    /// Labels of `annotation` that trigger this feature. Ambiguous
    /// annotations trigger nothing.
    pub fn triggers(self, annotation: &ClauseAnnotation) -> impl Iterator<Item = &Label> {
        let labels = if annotation.ambiguous {
            None
        } else {
            Some(annotation.labels.iter())
        };
        labels.into_iter().flatten().filter(move |l| self.matches(l))
    }

    pub fn fires(self, annotation: &ClauseAnnotation) -> bool {
        self.triggers(annotation).next().is_some()
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown feature {s:?}"))
    }
}

/// Binary indicators over the fixed feature list, with the segments that
/// triggered each one in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: BTreeMap<Feature, u8>,
    pub provenance: BTreeMap<Feature, Vec<String>>,
}

impl FeatureVector {
    pub fn zero() -> Self {
        FeatureVector {
            values: Feature::ALL.into_iter().map(|f| (f, 0)).collect(),
            provenance: BTreeMap::new(),
        }
    }

    /// A vector with the given features on and no provenance. Intended for
    /// exercising [`score`] directly.
    pub fn from_fired(fired: impl IntoIterator<Item = Feature>) -> Self {
        let mut x = Self::zero();
        for f in fired {
            x.values.insert(f, 1);
        }
        x
    }

    pub fn get(&self, feature: Feature) -> bool {
        self.values.get(&feature).is_some_and(|v| *v == 1)
    }

    pub fn fired(&self) -> impl Iterator<Item = Feature> + '_ {
        self.values.iter().filter(|(_, v)| **v == 1).map(|(f, _)| *f)
    }

    pub fn segments(&self, feature: Feature) -> &[String] {
        self.provenance.get(&feature).map_or(&[], Vec::as_slice)
    }
}

pub fn extract_features(annotations: &[ClauseAnnotation]) -> FeatureVector {
    let mut x = FeatureVector::zero();
    for a in annotations {
        for f in Feature::ALL {
            if f.fires(a) {
                x.values.insert(f, 1);
                let ids = x.provenance.entry(f).or_default();
                if !ids.contains(&a.segment_id) {
                    ids.push(a.segment_id.clone());
                }
            }
        }
    }
    x
}

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("cannot read weights {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid weights JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("weights configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub low_max: i64,
    pub medium_max: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct RiskWeights {
    pub version: String,
    harmful: BTreeMap<Feature, i64>,
    protective: BTreeMap<Feature, i64>,
    pub thresholds: Thresholds,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeights {
    version: String,
    harmful: BTreeMap<String, i64>,
    protective: BTreeMap<String, i64>,
    thresholds: Thresholds,
}

impl From<RiskWeights> for RawWeights {
    fn from(w: RiskWeights) -> Self {
        let names = |m: BTreeMap<Feature, i64>| m.into_iter().map(|(f, v)| (f.as_str().to_string(), v)).collect();
        RawWeights {
            version: w.version,
            harmful: names(w.harmful),
            protective: names(w.protective),
            thresholds: w.thresholds,
        }
    }
}

impl TryFrom<RawWeights> for RiskWeights {
    type Error = String;

    fn try_from(raw: RawWeights) -> Result<Self, Self::Error> {
        let parse = |m: BTreeMap<String, i64>| -> Result<BTreeMap<Feature, i64>, String> {
            m.into_iter().map(|(k, v)| Ok((k.parse::<Feature>()?, v))).collect()
        };
        RiskWeights::new(raw.version, parse(raw.harmful)?, parse(raw.protective)?, raw.thresholds)
    }
}

impl RiskWeights {
    /// Checks signs, coverage, disjointness and threshold order.
    pub fn new(
        version: impl Into<String>,
        harmful: BTreeMap<Feature, i64>,
        protective: BTreeMap<Feature, i64>,
        thresholds: Thresholds,
    ) -> Result<Self, String> {
        if let Some((f, w)) = harmful.iter().find(|(_, w)| **w < 0) {
            return Err(format!("harmful weight for {f} is negative ({w})"));
        }
        if let Some((f, w)) = protective.iter().find(|(_, w)| **w > 0) {
            return Err(format!("protective weight for {f} is positive ({w})"));
        }
        if let Some(f) = harmful.keys().find(|f| protective.contains_key(f)) {
            return Err(format!("{f} is listed as both harmful and protective"));
        }
        if let Some(f) = Feature::ALL
            .iter()
            .find(|f| !harmful.contains_key(f) && !protective.contains_key(f))
        {
            return Err(format!("no weight for {f}"));
        }
        let Thresholds { low_max, medium_max } = thresholds;
        if !(0 < low_max && low_max < medium_max && medium_max < MAX_SCORE) {
            return Err(format!(
                "thresholds must satisfy 0 < low_max < medium_max < 100, got {low_max} and {medium_max}"
            ));
        }
        Ok(RiskWeights {
            version: version.into(),
            harmful,
            protective,
            thresholds,
        })
    }

    pub fn embedded() -> Self {
        Self::from_json_str(DEFAULT_WEIGHTS).expect("embedded weights are valid")
    }

    pub fn from_json_str(json: &str) -> Result<Self, RiskError> {
        serde_json::from_str(json).map_err(|e| {
            if e.is_data() {
                RiskError::Config(e.to_string())
            } else {
                RiskError::Parse(e)
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, RiskError> {
        let raw = std::fs::read_to_string(path).map_err(|source| RiskError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&raw)
    }

    pub fn weight(&self, feature: Feature) -> i64 {
        self.harmful
            .get(&feature)
            .or_else(|| self.protective.get(&feature))
            .copied()
            .unwrap_or(0)
    }

    pub fn is_harmful(&self, feature: Feature) -> bool {
        self.harmful.contains_key(&feature)
    }

    pub fn harmful(&self) -> impl Iterator<Item = (Feature, i64)> + '_ {
        self.harmful.iter().map(|(f, w)| (*f, *w))
    }

    pub fn protective(&self) -> impl Iterator<Item = (Feature, i64)> + '_ {
        self.protective.iter().map(|(f, w)| (*f, *w))
    }
}

impl Default for RiskWeights {
    fn default() -> Self {
        Self::embedded()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskLevel {
    Low,
    Medium,
    High,
}

impl RiskLevel {
    pub const ALL: [RiskLevel; 3] = [RiskLevel::Low, RiskLevel::Medium, RiskLevel::High];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLevel::Low => "Low",
            RiskLevel::Medium => "Medium",
            RiskLevel::High => "High",
        }
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RiskLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RiskLevel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown risk level {s:?}"))
    }
}

/// clamp(Σ w_f · x_f, 0, 100).
pub fn score(x: &FeatureVector, w: &RiskWeights) -> Result<u8, RiskError> {
    if x.values.len() != Feature::ALL.len() || Feature::ALL.iter().any(|f| !x.values.contains_key(f)) {
        return Err(RiskError::Config(
            "feature vector does not cover the feature list".into(),
        ));
    }
    if let Some((f, v)) = x.values.iter().find(|(_, v)| **v > 1) {
        return Err(RiskError::Config(format!("feature {f} has non-binary value {v}")));
    }
    let sum: i64 = x.values.iter().map(|(f, v)| w.weight(*f) * i64::from(*v)).sum();
    Ok(sum.clamp(0, MAX_SCORE) as u8)
}

pub fn discretize(score: u8, w: &RiskWeights) -> RiskLevel {
    let s = i64::from(score);
    if s <= w.thresholds.low_max {
        RiskLevel::Low
    } else if s <= w.thresholds.medium_max {
        RiskLevel::Medium
    } else {
        RiskLevel::High
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    pub feature: Feature,
    pub weight: i64,
    pub segment_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskReport {
    pub score: u8,
    pub level: RiskLevel,
    pub contributions: Vec<Contribution>,
    pub weights_version: String,
}

/// Score an already extracted vector.
pub fn report_from_features(x: &FeatureVector, w: &RiskWeights) -> Result<RiskReport, RiskError> {
    let s = score(x, w)?;
    Ok(RiskReport {
        score: s,
        level: discretize(s, w),
        contributions: x
            .fired()
            .map(|f| Contribution {
                feature: f,
                weight: w.weight(f),
                segment_ids: x.segments(f).to_vec(),
            })
            .collect(),
        weights_version: w.version.clone(),
    })
}

pub fn build_risk_report(annotations: &[ClauseAnnotation], w: &RiskWeights) -> Result<RiskReport, RiskError> {
    report_from_features(&extract_features(annotations), w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn ann(id: &str, labels: &[(Dimension, &str)]) -> ClauseAnnotation {
        ClauseAnnotation::from_labels(
            id,
            labels.iter().map(|(d, l)| Label::new(*d, *l)).collect::<BTreeSet<_>>(),
            "test",
        )
    }

    // Hand-copied default table, in declaration order.
    const ORACLE_WEIGHTS: [i64; 13] = [25, 20, 25, 15, 10, 15, 10, 10, 10, -10, -10, -5, -5];

    fn oracle_score(bits: u16) -> i64 {
        let mut s = 0;
        for (i, w) in ORACLE_WEIGHTS.iter().enumerate() {
            if bits & (1 << i) != 0 {
                s += w;
            }
        }
        s.clamp(0, 100)
    }

    fn vector(bits: u16) -> FeatureVector {
        FeatureVector::from_fired(
            Feature::ALL
                .into_iter()
                .enumerate()
                .filter(|(i, _)| bits & (1 << i) != 0)
                .map(|(_, f)| f),
        )
    }

    #[test]
    fn no_annotations_no_features() {
        let x = extract_features(&[]);
        assert_eq!(x.values.len(), 13);
        assert_eq!(x.fired().count(), 0);
        assert!(x.provenance.is_empty());
    }

    #[test]
    fn health_fires_sensitive_collection() {
        let x = extract_features(&[ann("seg-4", &[(Dimension::DataType, "health")])]);
        assert_eq!(x.fired().collect::<Vec<_>>(), [Feature::SensitiveDataCollection]);
        assert_eq!(x.segments(Feature::SensitiveDataCollection), ["seg-4"]);
    }

    #[test]
    fn advertisers_and_opt_out() {
        let x = extract_features(&[
            ann("seg-0", &[(Dimension::SharingRecipient, "advertisers")]),
            ann("seg-1", &[(Dimension::UserControl, "opt_out")]),
        ]);
        assert_eq!(
            x.fired().collect::<Vec<_>>(),
            [Feature::ThirdPartySharing, Feature::UserOptOut]
        );
    }

    #[test]
    fn ambiguous_annotations_contribute_nothing() {
        let mut a = ann("seg-0", &[(Dimension::DataType, "health")]);
        a.ambiguous = true;
        assert_eq!(extract_features(&[a]).fired().count(), 0);
    }

    #[test]
    fn provenance_lists_every_triggering_segment_once() {
        let x = extract_features(&[
            ann(
                "seg-2",
                &[
                    (Dimension::TrackingTechnology, "cookies"),
                    (Dimension::TrackingTechnology, "pixels"),
                ],
            ),
            ann("seg-0", &[(Dimension::DataType, "email")]),
            ann("seg-7", &[(Dimension::TrackingTechnology, "cross_site_tracking")]),
        ]);
        assert_eq!(x.segments(Feature::TrackingTechnologies), ["seg-2", "seg-7"]);
        assert_eq!(x.segments(Feature::CrossSiteTracking), ["seg-7"]);
    }

    #[test]
    fn data_brokers_fire_sharing_and_sale() {
        let x = extract_features(&[ann("seg-0", &[(Dimension::SharingRecipient, "data_brokers")])]);
        assert!(x.get(Feature::ThirdPartySharing) && x.get(Feature::DataSale));
    }

    #[test]
    fn score_examples() {
        let w = RiskWeights::embedded();
        assert_eq!(score(&FeatureVector::zero(), &w).unwrap(), 0);
        let two = FeatureVector::from_fired([Feature::SensitiveDataCollection, Feature::ThirdPartySharing]);
        assert_eq!(score(&two, &w).unwrap(), 45);
        let harmful: Vec<_> = w.harmful().map(|(f, _)| f).collect();
        assert_eq!(w.harmful().map(|(_, v)| v).sum::<i64>(), 140);
        assert_eq!(score(&FeatureVector::from_fired(harmful), &w).unwrap(), 100);
    }

    #[test]
    fn discretize_examples() {
        let w = RiskWeights::embedded();
        assert_eq!(discretize(0, &w), RiskLevel::Low);
        assert_eq!(discretize(45, &w), RiskLevel::Medium);
        assert_eq!(discretize(67, &w), RiskLevel::High);
    }

    #[test]
    fn report_examples() {
        let w = RiskWeights::embedded();
        let empty = build_risk_report(&[], &w).unwrap();
        assert_eq!((empty.score, empty.level), (0, RiskLevel::Low));
        assert!(empty.contributions.is_empty());

        let mut anns = vec![
            ann("seg-0", &[(Dimension::DataType, "health")]),
            ann("seg-1", &[(Dimension::SharingRecipient, "advertisers")]),
        ];
        let r = build_risk_report(&anns, &w).unwrap();
        assert_eq!((r.score, r.level, r.contributions.len()), (45, RiskLevel::Medium, 2));
        assert_eq!(r.contributions[1].segment_ids, ["seg-1"]);
        assert_eq!(r.weights_version, "default-1");

        anns.push(ann(
            "seg-2",
            &[
                (Dimension::UserControl, "opt_out"),
                (Dimension::UserControl, "deletion_request"),
            ],
        ));
        let r = build_risk_report(&anns, &w).unwrap();
        assert_eq!((r.score, r.level), (25, RiskLevel::Low));
    }

    #[test]
    fn incomplete_vector_is_a_configuration_error() {
        let mut x = FeatureVector::zero();
        x.values.remove(&Feature::DataSale);
        assert!(matches!(score(&x, &RiskWeights::embedded()), Err(RiskError::Config(_))));
    }

    #[test]
    fn loader_rejects_bad_signs_and_coverage() {
        let base: serde_json::Value = serde_json::from_str(DEFAULT_WEIGHTS).unwrap();
        let bad = |edit: &dyn Fn(&mut serde_json::Value)| {
            let mut v = base.clone();
            edit(&mut v);
            RiskWeights::from_json_str(&v.to_string()).unwrap_err().to_string()
        };
        assert!(bad(&|v| v["protective"]["user_opt_out"] = 5.into()).contains("positive"));
        assert!(bad(&|v| v["harmful"]["data_sale"] = (-1).into()).contains("negative"));
        assert!(bad(&|v| {
            v["harmful"].as_object_mut().unwrap().remove("data_sale");
        })
        .contains("no weight for data_sale"));
        assert!(bad(&|v| v["protective"]["data_sale"] = 0.into()).contains("both"));
        assert!(bad(&|v| v["harmful"]["mystery"] = 1.into()).contains("unknown feature"));
        assert!(bad(&|v| v["thresholds"]["low_max"] = 70.into()).contains("thresholds"));
        assert!(matches!(RiskWeights::from_json_str("{"), Err(RiskError::Parse(_))));
    }

    #[test]
    fn weights_round_trip_through_json() {
        let w = RiskWeights::embedded();
        let back = RiskWeights::from_json_str(&serde_json::to_string(&w).unwrap()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn exhaustive_oracle_agreement() {
        let w = RiskWeights::embedded();
        for bits in 0u16..(1 << 13) {
            assert_eq!(
                i64::from(score(&vector(bits), &w).unwrap()),
                oracle_score(bits),
                "bits {bits:013b}"
            );
        }
    }

    #[test]
    fn rule_table_matches_hand_listing() {
        let vocab = crate::schema::CategoryVocabulary::default_vocabulary();
        let fired_by = |f: Feature| -> Vec<String> {
            vocab
                .all_labels()
                .filter(|l| f.matches(l))
                .map(|l| format!("{}/{}", l.dimension(), l.name()))
                .collect()
        };
        assert_eq!(
            fired_by(Feature::LocationCollection),
            ["DataType/location", "Permission/location_access"]
        );
        assert_eq!(fired_by(Feature::TrackingTechnologies).len(), 5);
        assert_eq!(fired_by(Feature::ThirdPartySharing).len(), 4);
        assert_eq!(fired_by(Feature::DevicePermissions).len(), 3);
        for f in Feature::ALL {
            assert!(!fired_by(f).is_empty(), "{f} can never fire");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn harmful_flips_never_lower_protective_flips_never_raise(bits in 0u16..(1 << 13)) {
            let w = RiskWeights::embedded();
            let base = score(&vector(bits), &w).unwrap();
            for (i, f) in Feature::ALL.into_iter().enumerate() {
                if bits & (1 << i) != 0 {
                    continue;
                }
                let flipped = score(&vector(bits | (1 << i)), &w).unwrap();
                if w.is_harmful(f) {
                    prop_assert!(flipped >= base);
                } else {
                    prop_assert!(flipped <= base);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn level_is_monotone_in_score(a in 0u8..=100, b in 0u8..=100) {
            let w = RiskWeights::embedded();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(discretize(lo, &w) <= discretize(hi, &w));
        }

        #[test]
        fn arbitrary_sign_valid_weights_stay_monotone(
            hw in proptest::collection::vec(0i64..60, 9),
            pw in proptest::collection::vec(-60i64..=0, 4),
            bits in 0u16..(1 << 13),
        ) {
            let harmful = Feature::ALL[..9].iter().copied().zip(hw).collect();
            let protective = Feature::ALL[9..].iter().copied().zip(pw).collect();
            let w = RiskWeights::new("p", harmful, protective, Thresholds { low_max: 33, medium_max: 66 }).unwrap();
            let base = score(&vector(bits), &w).unwrap();
            prop_assert!(base <= 100);
            for i in 0..13 {
                let flipped = score(&vector(bits | (1 << i)), &w).unwrap();
                if i < 9 { prop_assert!(flipped >= base) } else { prop_assert!(flipped <= base) }
            }
        }
    }
}
