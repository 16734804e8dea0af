use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Gas modality of one input stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Co2,
    Ch4,
}

impl Modality {
    pub const BOTH: [Modality; 2] = [Modality::Co2, Modality::Ch4];

    pub fn key(self) -> &'static str {
        match self {
            Modality::Co2 => "co2",
            Modality::Ch4 => "ch4",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Architecture variant: the full model and its six ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Fume,
    /// Adds bidirectional cross-stream attention after self-attention.
    FullCrossModalAttn,
    /// Plain concatenation instead of channel-attention fusion.
    SelfAttnOnly,
    Co2Only,
    Ch4Only,
    ClassificationOnly,
    SegmentationOnly,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Fume,
        Variant::FullCrossModalAttn,
        Variant::SelfAttnOnly,
        Variant::Co2Only,
        Variant::Ch4Only,
        Variant::ClassificationOnly,
        Variant::SegmentationOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fume => "fume",
            Variant::FullCrossModalAttn => "full-cross-modal-attn",
            Variant::SelfAttnOnly => "self-attn-only",
            Variant::Co2Only => "co2-only",
            Variant::Ch4Only => "ch4-only",
            Variant::ClassificationOnly => "classification-only",
            Variant::SegmentationOnly => "segmentation-only",
        }
    }

    /// Input streams the variant consumes.
    pub fn modalities(self) -> &'static [Modality] {
        match self {
            Variant::Co2Only => &[Modality::Co2],
            Variant::Ch4Only => &[Modality::Ch4],
            _ => &Modality::BOTH,
        }
    }

    pub fn uses(self, m: Modality) -> bool {
        self.modalities().contains(&m)
    }

    pub fn has_segmentation(self) -> bool {
        self != Variant::ClassificationOnly
    }

    pub fn has_classification(self) -> bool {
        self != Variant::SegmentationOnly
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!(matches!("fume2".parse::<Variant>(), Err(Error::UnknownVariant(_))));
    }
}
