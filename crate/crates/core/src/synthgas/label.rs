use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Health state derived from rumen pH.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HealthLabel {
    Healthy = 0,
    Transitional = 1,
    Acidotic = 2,
}

impl HealthLabel {
    pub const ALL: [HealthLabel; 3] = [HealthLabel::Healthy, HealthLabel::Transitional, HealthLabel::Acidotic];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            HealthLabel::Healthy => "healthy",
            HealthLabel::Transitional => "transitional",
            HealthLabel::Acidotic => "acidotic",
        }
    }
}

impl fmt::Display for HealthLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HealthLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HealthLabel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown health label `{s}`")))
    }
}

pub const PH_MIN: f64 = 4.0;
pub const PH_MAX: f64 = 8.0;

/// Healthy at pH 6.0 and above, transitional in `[5.8, 6.0)`, acidotic
/// below 5.8.
pub fn map_ph_to_class(ph: f64) -> Result<HealthLabel> {
    if !(PH_MIN..=PH_MAX).contains(&ph) {
        return Err(Error::InvalidArgument(format!("pH {ph} outside [{PH_MIN}, {PH_MAX}]")));
    }
    Ok(if ph >= 6.0 {
        HealthLabel::Healthy
    } else if ph >= 5.8 {
        HealthLabel::Transitional
    } else {
        HealthLabel::Acidotic
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        assert_eq!(map_ph_to_class(6.5).unwrap(), HealthLabel::Healthy);
        assert_eq!(map_ph_to_class(6.0).unwrap(), HealthLabel::Healthy);
        assert_eq!(map_ph_to_class(5.9).unwrap(), HealthLabel::Transitional);
        assert_eq!(map_ph_to_class(5.8).unwrap(), HealthLabel::Transitional);
        assert_eq!(map_ph_to_class(5.79).unwrap(), HealthLabel::Acidotic);
        assert!(map_ph_to_class(3.9).is_err());
        assert!(map_ph_to_class(f64::NAN).is_err());
    }
}
