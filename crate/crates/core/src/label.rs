//! Binary label space shared across the pipeline.

use serde::{Deserialize, Serialize};

/// Gold label attached to a generated sample at construction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GoldLabel {
    #[serde(rename = "INCLUSIVE")]
    Inclusive,
    #[serde(rename = "NONINCLUSIVE")]
    NonInclusive,
}

impl GoldLabel {
    /// The opposite class, used by the adversarial mock backend.
    pub fn flipped(self) -> Self {
        match self {
            GoldLabel::Inclusive => GoldLabel::NonInclusive,
            GoldLabel::NonInclusive => GoldLabel::Inclusive,
        }
    }
}

/// Outcome of normalizing one model response. `Undetermined` is the only
/// escape hatch: it marks responses from which no unambiguous label could be
/// extracted, and is scored as an incorrect prediction downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Prediction {
    #[serde(rename = "INCLUSIVE")]
    Inclusive,
    #[serde(rename = "NONINCLUSIVE")]
    NonInclusive,
    #[serde(rename = "UNDETERMINED")]
    Undetermined,
}

impl From<GoldLabel> for Prediction {
    fn from(label: GoldLabel) -> Self {
        match label {
            GoldLabel::Inclusive => Prediction::Inclusive,
            GoldLabel::NonInclusive => Prediction::NonInclusive,
        }
    }
}

impl Prediction {
    /// True only for a determined prediction that matches the gold label.
    pub fn matches(self, gold: GoldLabel) -> bool {
        self == Prediction::from(gold)
    }
}
