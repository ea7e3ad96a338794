//! Top-1 affect labels, family prevalence and affective charge.
//!
//! Each sentence carries a 28-way probability vector over the GoEmotions
//! inventory. The sentence is assigned its argmax label, the label is mapped to
//! a family, and a continuation's prevalence of a family is the share of its
//! sentences assigned to that family.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_LABELS: usize = 28;

/// Canonical label order of the affect classifier's output.
pub const LABELS: [&str; N_LABELS] = [
    "admiration",
    "amusement",
    "anger",
    "annoyance",
    "approval",
    "caring",
    "confusion",
    "curiosity",
    "desire",
    "disappointment",
    "disapproval",
    "disgust",
    "embarrassment",
    "excitement",
    "fear",
    "gratitude",
    "grief",
    "joy",
    "love",
    "nervousness",
    "optimism",
    "pride",
    "realization",
    "relief",
    "remorse",
    "sadness",
    "surprise",
    "neutral",
];

#[derive(Debug, Error, PartialEq)]
pub enum AffectError {
    #[error("unknown affect label {0:?}")]
    UnknownLabel(String),
    #[error("affect vector has {0} entries, expected 28")]
    WrongLength(usize),
    #[error("affect vector has a negative or non-finite entry at {0}")]
    InvalidProbability(usize),
    #[error("affect vector is all zeros")]
    AllZero,
    #[error("continuation has no sentences with affect vectors")]
    EmptyContinuation,
    #[error("charge variant {variant:?} needs label counts or the {needs:?} scheme")]
    SchemeMismatch {
        variant: ChargeVariant,
        needs: FamilyScheme,
    },
}

/// Index of `name` in [`LABELS`].
pub fn label_index(name: &str) -> Result<usize, AffectError> {
    LABELS
        .iter()
        .position(|l| *l == name)
        .ok_or_else(|| AffectError::UnknownLabel(name.to_string()))
}

/// One sentence's class probabilities in canonical label order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AffectVector([f64; N_LABELS]);

impl AffectVector {
    pub fn new(probs: [f64; N_LABELS]) -> Result<Self, AffectError> {
        for (i, p) in probs.iter().enumerate() {
            if !p.is_finite() || *p < 0.0 {
                return Err(AffectError::InvalidProbability(i));
            }
        }
        if probs.iter().all(|p| *p == 0.0) {
            return Err(AffectError::AllZero);
        }
        Ok(AffectVector(probs))
    }

    /// A vector with all mass on one label.
    pub fn one_hot(label: usize) -> Self {
        let mut probs = [0.0; N_LABELS];
        probs[label] = 1.0;
        AffectVector(probs)
    }

    pub fn probs(&self) -> &[f64; N_LABELS] {
        &self.0
    }

    /// Argmax label; ties go to the lowest canonical index.
    pub fn top1_label(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate().skip(1) {
            if *p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

impl TryFrom<Vec<f64>> for AffectVector {
    type Error = AffectError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        let arr: [f64; N_LABELS] = v.as_slice().try_into().map_err(|_| AffectError::WrongLength(v.len()))?;
        AffectVector::new(arr)
    }
}

impl From<AffectVector> for Vec<f64> {
    fn from(v: AffectVector) -> Self {
        v.0.to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SurpriseCuriosity,
    Conflict,
    ThreatAnxiety,
    Neutral,
    SadnessLoss,
    WarmthAffiliation,
    Other,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::SurpriseCuriosity => "surprise_curiosity",
            Family::Conflict => "conflict",
            Family::ThreatAnxiety => "threat_anxiety",
            Family::Neutral => "neutral",
            Family::SadnessLoss => "sadness_loss",
            Family::WarmthAffiliation => "warmth_affiliation",
            Family::Other => "other",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Label-to-family mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FamilyScheme {
    /// Three focal families plus residual other.
    Main4,
    /// Six interpretable families plus residual other.
    Robust7,
}

impl FamilyScheme {
    pub fn families(self) -> &'static [Family] {
        match self {
            FamilyScheme::Main4 => &[
                Family::SurpriseCuriosity,
                Family::Conflict,
                Family::Neutral,
                Family::Other,
            ],
            FamilyScheme::Robust7 => &[
                Family::SurpriseCuriosity,
                Family::Conflict,
                Family::ThreatAnxiety,
                Family::Neutral,
                Family::SadnessLoss,
                Family::WarmthAffiliation,
                Family::Other,
            ],
        }
    }

    /// Family of the label at canonical index `label`.
    pub fn family_of(self, label: usize) -> Result<Family, AffectError> {
        let name = LABELS
            .get(label)
            .ok_or_else(|| AffectError::UnknownLabel(label.to_string()))?;
        Ok(self.family_of_name(name).expect("canonical label"))
    }

    pub fn family_of_name(self, name: &str) -> Result<Family, AffectError> {
        let shared = match name {
            "confusion" | "curiosity" | "realization" | "surprise" => Some(Family::SurpriseCuriosity),
            "anger" | "annoyance" | "disapproval" | "disgust" => Some(Family::Conflict),
            "neutral" => Some(Family::Neutral),
            _ => None,
        };
        if let Some(f) = shared {
            return Ok(f);
        }
        label_index(name)?;
        Ok(match self {
            FamilyScheme::Main4 => Family::Other,
            FamilyScheme::Robust7 => match name {
                "fear" | "nervousness" => Family::ThreatAnxiety,
                "sadness" | "grief" | "disappointment" | "remorse" => Family::SadnessLoss,
                "admiration" | "approval" | "caring" | "gratitude" | "love" | "joy" => Family::WarmthAffiliation,
                _ => Family::Other,
            },
        })
    }
}

/// Which families and labels count toward affective charge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeVariant {
    /// surprise-curiosity + conflict
    Main,
    /// main + fear + nervousness
    ThreatInclusive,
    /// threat-inclusive + sadness/loss + excitement, joy, amusement, desire
    Expanded,
}

impl ChargeVariant {
    pub const ALL: [ChargeVariant; 3] = [
        ChargeVariant::Main,
        ChargeVariant::ThreatInclusive,
        ChargeVariant::Expanded,
    ];

    /// Canonical labels summed by this variant.
    pub fn labels(self) -> Vec<&'static str> {
        let mut out = vec![
            "confusion",
            "curiosity",
            "realization",
            "surprise",
            "anger",
            "annoyance",
            "disapproval",
            "disgust",
        ];
        if matches!(self, ChargeVariant::ThreatInclusive | ChargeVariant::Expanded) {
            out.extend(["fear", "nervousness"]);
        }
        if self == ChargeVariant::Expanded {
            out.extend([
                "sadness",
                "grief",
                "disappointment",
                "remorse",
                "excitement",
                "joy",
                "amusement",
                "desire",
            ]);
        }
        out
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChargeVariant::Main => "affective_charge",
            ChargeVariant::ThreatInclusive => "affective_charge_threat",
            ChargeVariant::Expanded => "affective_charge_expanded",
        }
    }
}

/// Per-family sentence shares for one continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceProfile {
    pub scheme: FamilyScheme,
    pub n_sentences: usize,
    family_counts: Vec<(Family, usize)>,
    label_counts: Option<[usize; N_LABELS]>,
}

impl PrevalenceProfile {
    /// Build from family counts only; label-level charge variants will be
    /// unavailable unless the scheme resolves them.
    pub fn from_family_counts(scheme: FamilyScheme, counts: &[(Family, usize)]) -> Result<Self, AffectError> {
        let mut family_counts: Vec<(Family, usize)> = scheme.families().iter().map(|f| (*f, 0)).collect();
        for (fam, n) in counts {
            let slot = family_counts
                .iter_mut()
                .find(|(f, _)| f == fam)
                .ok_or_else(|| AffectError::UnknownLabel(fam.to_string()))?;
            slot.1 += n;
        }
        let n_sentences = family_counts.iter().map(|(_, n)| n).sum();
        if n_sentences == 0 {
            return Err(AffectError::EmptyContinuation);
        }
        Ok(PrevalenceProfile {
            scheme,
            n_sentences,
            family_counts,
            label_counts: None,
        })
    }

    pub fn count(&self, family: Family) -> usize {
        self.family_counts
            .iter()
            .find(|(f, _)| *f == family)
            .map_or(0, |(_, n)| *n)
    }

    /// Share of sentences in `family`; 0 for families outside the scheme.
    pub fn share(&self, family: Family) -> f64 {
        self.count(family) as f64 / self.n_sentences as f64
    }

    pub fn shares(&self) -> Vec<(Family, f64)> {
        self.family_counts
            .iter()
            .map(|(f, n)| (*f, *n as f64 / self.n_sentences as f64))
            .collect()
    }

    pub fn label_counts(&self) -> Option<&[usize; N_LABELS]> {
        self.label_counts.as_ref()
    }
}

/// Top-1 prevalence of each family over a continuation's sentences.
pub fn prevalence(vectors: &[AffectVector], scheme: FamilyScheme) -> Result<PrevalenceProfile, AffectError> {
    if vectors.is_empty() {
        return Err(AffectError::EmptyContinuation);
    }
    let mut labels = [0usize; N_LABELS];
    for v in vectors {
        labels[v.top1_label()] += 1;
    }
    let mut family_counts: Vec<(Family, usize)> = scheme.families().iter().map(|f| (*f, 0)).collect();
    for (label, n) in labels.iter().enumerate() {
        let fam = scheme.family_of(label)?;
        if let Some(slot) = family_counts.iter_mut().find(|(f, _)| *f == fam) {
            slot.1 += n;
        }
    }
    Ok(PrevalenceProfile {
        scheme,
        n_sentences: vectors.len(),
        family_counts,
        label_counts: Some(labels),
    })
}

/// Summed share of the variant's components.
pub fn affective_charge(profile: &PrevalenceProfile, variant: ChargeVariant) -> Result<f64, AffectError> {
    let n = profile.n_sentences as f64;
    let main_count = profile.count(Family::SurpriseCuriosity) + profile.count(Family::Conflict);
    let main = || main_count as f64 / n;
    if variant == ChargeVariant::Main {
        return Ok(main());
    }
    if let Some(labels) = &profile.label_counts {
        let count: usize = variant
            .labels()
            .iter()
            .map(|l| labels[label_index(l).expect("canonical label")])
            .sum();
        return Ok(count as f64 / n);
    }
    match (variant, profile.scheme) {
        (ChargeVariant::ThreatInclusive, FamilyScheme::Robust7) => {
            Ok((main_count + profile.count(Family::ThreatAnxiety)) as f64 / n)
        }
        (ChargeVariant::ThreatInclusive, _) => Err(AffectError::SchemeMismatch {
            variant,
            needs: FamilyScheme::Robust7,
        }),
        _ => Err(AffectError::SchemeMismatch {
            variant,
            needs: FamilyScheme::Robust7,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn idx(name: &str) -> usize {
        label_index(name).unwrap()
    }

    fn vectors(names: &[&str]) -> Vec<AffectVector> {
        names.iter().map(|n| AffectVector::one_hot(idx(n))).collect()
    }

    #[test]
    fn top1_examples() {
        assert_eq!(AffectVector::one_hot(idx("curiosity")).top1_label(), idx("curiosity"));
        assert_eq!(AffectVector::new([1.0 / 28.0; 28]).unwrap().top1_label(), 0);
        let mut p = [0.0; 28];
        p[idx("neutral")] = 0.51;
        p[idx("sadness")] = 0.49;
        assert_eq!(AffectVector::new(p).unwrap().top1_label(), idx("neutral"));
    }

    #[test]
    fn invalid_vectors_rejected() {
        assert_eq!(AffectVector::new([0.0; 28]), Err(AffectError::AllZero));
        let mut p = [0.1; 28];
        p[3] = -0.1;
        assert_eq!(AffectVector::new(p), Err(AffectError::InvalidProbability(3)));
        assert_eq!(AffectVector::try_from(vec![0.5; 27]), Err(AffectError::WrongLength(27)));
    }

    #[test]
    fn family_table_examples() {
        use FamilyScheme::*;
        assert_eq!(Main4.family_of_name("curiosity"), Ok(Family::SurpriseCuriosity));
        assert_eq!(Main4.family_of_name("fear"), Ok(Family::Other));
        assert_eq!(Robust7.family_of_name("fear"), Ok(Family::ThreatAnxiety));
        assert_eq!(Main4.family_of_name("neutral"), Ok(Family::Neutral));
        assert_eq!(Robust7.family_of_name("neutral"), Ok(Family::Neutral));
        assert_eq!(Robust7.family_of_name("joy"), Ok(Family::WarmthAffiliation));
        assert_eq!(Robust7.family_of_name("excitement"), Ok(Family::Other));
        assert!(matches!(
            Main4.family_of_name("boredom"),
            Err(AffectError::UnknownLabel(_))
        ));
        assert!(Main4.family_of(28).is_err());
    }

    #[test]
    fn mapping_is_total_and_covers_every_family() {
        for scheme in [FamilyScheme::Main4, FamilyScheme::Robust7] {
            let mut seen = std::collections::BTreeSet::new();
            for label in 0..N_LABELS {
                let fam = scheme.family_of(label).unwrap();
                assert!(scheme.families().contains(&fam));
                seen.insert(fam);
            }
            assert_eq!(seen.len(), scheme.families().len());
        }
    }

    #[test]
    fn prevalence_examples() {
        let p = prevalence(&vectors(&["curiosity", "neutral", "anger", "joy"]), FamilyScheme::Main4).unwrap();
        for fam in FamilyScheme::Main4.families() {
            assert_eq!(p.share(*fam), 0.25);
        }
        let p = prevalence(&vectors(&["neutral", "neutral"]), FamilyScheme::Main4).unwrap();
        assert_eq!(p.share(Family::Neutral), 1.0);
        assert_eq!(p.share(Family::Conflict), 0.0);
        let p = prevalence(&vectors(&["surprise", "realization", "confusion"]), FamilyScheme::Main4).unwrap();
        assert_eq!(p.share(Family::SurpriseCuriosity), 1.0);
        assert_eq!(
            prevalence(&[], FamilyScheme::Main4),
            Err(AffectError::EmptyContinuation)
        );
    }

    #[test]
    fn charge_examples() {
        let p = PrevalenceProfile::from_family_counts(
            FamilyScheme::Main4,
            &[
                (Family::SurpriseCuriosity, 21),
                (Family::Conflict, 20),
                (Family::Neutral, 29),
                (Family::Other, 30),
            ],
        )
        .unwrap();
        assert!((affective_charge(&p, ChargeVariant::Main).unwrap() - 0.41).abs() < 1e-15);
        assert!(matches!(
            affective_charge(&p, ChargeVariant::ThreatInclusive),
            Err(AffectError::SchemeMismatch { .. })
        ));
        assert!(matches!(
            affective_charge(&p, ChargeVariant::Expanded),
            Err(AffectError::SchemeMismatch { .. })
        ));

        let neutral = prevalence(&vectors(&["neutral"; 3]), FamilyScheme::Main4).unwrap();
        for v in ChargeVariant::ALL {
            assert_eq!(affective_charge(&neutral, v).unwrap(), 0.0);
        }

        let p = prevalence(&vectors(&["fear", "anger"]), FamilyScheme::Main4).unwrap();
        assert_eq!(affective_charge(&p, ChargeVariant::Main).unwrap(), 0.5);
        assert_eq!(affective_charge(&p, ChargeVariant::ThreatInclusive).unwrap(), 1.0);
    }

    #[test]
    fn robust_family_counts_resolve_threat_variant() {
        let p = PrevalenceProfile::from_family_counts(
            FamilyScheme::Robust7,
            &[(Family::ThreatAnxiety, 1), (Family::Conflict, 1), (Family::Other, 2)],
        )
        .unwrap();
        assert_eq!(affective_charge(&p, ChargeVariant::ThreatInclusive).unwrap(), 0.5);
        assert!(affective_charge(&p, ChargeVariant::Expanded).is_err());
    }

    fn affect_vectors() -> impl Strategy<Value = Vec<[f64; N_LABELS]>> {
        proptest::collection::vec(
            proptest::array::uniform28(0.0f64..1.0).prop_map(|mut a| {
                a[0] += 1e-3;
                a
            }),
            1..30,
        )
    }

    proptest! {
        #[test]
        fn shares_partition_and_variants_nest(raw in affect_vectors(), scale in 1e-3f64..1e3) {
            let vs: Vec<AffectVector> = raw.iter().map(|a| AffectVector::new(*a).unwrap()).collect();
            for scheme in [FamilyScheme::Main4, FamilyScheme::Robust7] {
                let p = prevalence(&vs, scheme).unwrap();
                let total: f64 = p.shares().iter().map(|(_, s)| s).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                for (fam, s) in p.shares() {
                    let k = p.count(fam) as f64;
                    prop_assert_eq!(s, k / vs.len() as f64);
                }
                let m = affective_charge(&p, ChargeVariant::Main).unwrap();
                let t = affective_charge(&p, ChargeVariant::ThreatInclusive).unwrap();
                let e = affective_charge(&p, ChargeVariant::Expanded).unwrap();
                prop_assert!(m <= t && t <= e);

                let scaled: Vec<AffectVector> = raw
                    .iter()
                    .map(|a| AffectVector::new(a.map(|x| x * scale)).unwrap())
                    .collect();
                let ps = prevalence(&scaled, scheme).unwrap();
                prop_assert_eq!(ps.shares(), p.shares());
            }
        }
    }
}
