//! Daily load-multiplier profiles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EnvError;

const MILD_CSV: &str = include_str!("../../../../profiles/mild.csv");
const AGGRESSIVE_CSV: &str = include_str!("../../../../profiles/aggressive.csv");

pub const HOURS_PER_DAY: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Mild,
    Aggressive,
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileKind::Mild => "mild",
            ProfileKind::Aggressive => "aggressive",
        })
    }
}

impl FromStr for ProfileKind {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mild" => Ok(ProfileKind::Mild),
            "aggressive" => Ok(ProfileKind::Aggressive),
            other => Err(EnvError::Config(format!("unknown profile `{other}`"))),
        }
    }
}

/// 24 hourly load multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyProfile {
    values: Vec<f64>,
}

impl DailyProfile {
    pub fn from_values(values: Vec<f64>) -> Result<Self, EnvError> {
        if values.len() != HOURS_PER_DAY {
            return Err(EnvError::Config(format!(
                "a daily profile needs {HOURS_PER_DAY} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(EnvError::Config("profile multipliers must be finite and >= 0".into()));
        }
        Ok(Self { values })
    }

    /// Parses `hour,lambda` rows; `#` lines and the header are skipped.
    pub fn parse_csv(text: &str) -> Result<Self, EnvError> {
        let mut values = vec![f64::NAN; HOURS_PER_DAY];
        let mut seen = 0;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("hour") {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let (Some(h), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(EnvError::Config(format!("bad profile row `{line}`")));
            };
            let hour: usize = h
                .parse()
                .map_err(|_| EnvError::Config(format!("bad hour `{h}`")))?;
            let value: f64 = v
                .parse()
                .map_err(|_| EnvError::Config(format!("bad multiplier `{v}`")))?;
            if hour >= HOURS_PER_DAY || !values[hour].is_nan() {
                return Err(EnvError::Config(format!("hour {hour} out of range or repeated")));
            }
            values[hour] = value;
            seen += 1;
        }
        if seen != HOURS_PER_DAY {
            return Err(EnvError::Config(format!("profile has {seen} hours, expected 24")));
        }
        Self::from_values(values)
    }

    pub fn builtin(kind: ProfileKind) -> Self {
        let text = match kind {
            ProfileKind::Mild => MILD_CSV,
            ProfileKind::Aggressive => AGGRESSIVE_CSV,
        };
        Self::parse_csv(text).expect("shipped profile is valid")
    }

    pub fn at(&self, hour: usize) -> f64 {
        self.values[hour % HOURS_PER_DAY]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn peak_hour(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (h, &v)| if v > best.1 { (h, v) } else { best })
            .0
    }
}

/// Multiplier of a shipped profile at `hour`.
pub fn daily_profile(kind: ProfileKind, hour: usize) -> f64 {
    assert!(hour < HOURS_PER_DAY, "hour must be in [0, 24)");
    DailyProfile::builtin(kind).at(hour)
}
