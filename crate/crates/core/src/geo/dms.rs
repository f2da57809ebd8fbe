use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hemisphere {
    N,
    S,
    E,
    W,
}

impl Hemisphere {
    fn sign(self) -> f64 {
        match self {
            Hemisphere::N | Hemisphere::E => 1.0,
            Hemisphere::S | Hemisphere::W => -1.0,
        }
    }

    pub fn is_latitude(self) -> bool {
        matches!(self, Hemisphere::N | Hemisphere::S)
    }

    fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'N' => Some(Hemisphere::N),
            'S' => Some(Hemisphere::S),
            'E' => Some(Hemisphere::E),
            'W' => Some(Hemisphere::W),
            _ => None,
        }
    }
}

impl fmt::Display for Hemisphere {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Hemisphere::N => 'N',
            Hemisphere::S => 'S',
            Hemisphere::E => 'E',
            Hemisphere::W => 'W',
        };
        write!(f, "{c}")
    }
}

/// Degrees-minutes-seconds coordinate. The sign is carried by the hemisphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmsCoordinate {
    pub degrees: u32,
    pub minutes: u32,
    pub seconds: f64,
    pub hemisphere: Hemisphere,
}

impl DmsCoordinate {
    pub fn validate(&self) -> Result<()> {
        if self.minutes >= 60 {
            return Err(Error::validation(format!("minutes {} not in [0, 60)", self.minutes)));
        }
        if !(self.seconds.is_finite() && (0.0..60.0).contains(&self.seconds)) {
            return Err(Error::validation(format!("seconds {} not in [0, 60)", self.seconds)));
        }
        let limit = if self.hemisphere.is_latitude() { 90.0 } else { 180.0 };
        let magnitude = self.magnitude();
        if magnitude > limit {
            return Err(Error::validation(format!(
                "{magnitude} degrees exceeds {limit} for hemisphere {}",
                self.hemisphere
            )));
        }
        Ok(())
    }

    fn magnitude(&self) -> f64 {
        self.degrees as f64 + self.minutes as f64 / 60.0 + self.seconds / 3600.0
    }

    /// Splits a signed decimal value into DMS. `latitude` selects N/S versus E/W.
    pub fn from_decimal(value: f64, latitude: bool) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::validation("non-finite decimal coordinate"));
        }
        let hemisphere = match (latitude, value < 0.0) {
            (true, false) => Hemisphere::N,
            (true, true) => Hemisphere::S,
            (false, false) => Hemisphere::E,
            (false, true) => Hemisphere::W,
        };
        let abs = value.abs();
        let degrees = abs.floor();
        let rem_minutes = (abs - degrees) * 60.0;
        let minutes = rem_minutes.floor().min(59.0);
        let seconds = ((rem_minutes - minutes) * 60.0).clamp(0.0, 60.0 - 1e-12);
        let dms = DmsCoordinate {
            degrees: degrees as u32,
            minutes: minutes as u32,
            seconds,
            hemisphere,
        };
        dms.validate()?;
        Ok(dms)
    }
}

/// Converts DMS to signed decimal degrees; S and W are negative.
pub fn dms_to_decimal(c: &DmsCoordinate) -> Result<f64> {
    c.validate()?;
    Ok(c.hemisphere.sign() * c.magnitude())
}

impl FromStr for DmsCoordinate {
    type Err = Error;

    /// Accepts `41°00'36.5"N`, `41d00m36.5sN` and `41 0 36.5 N`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::validation(format!("unrecognized DMS coordinate {s:?}"));
        let last = s.chars().last().ok_or_else(bad)?;
        let hemisphere = Hemisphere::from_char(last).ok_or_else(bad)?;
        let body = &s[..s.len() - last.len_utf8()];
        let parts: Vec<&str> = body
            .split(|c: char| matches!(c, '°' | '\'' | '"' | 'd' | 'm' | 's' | ':') || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .collect();
        if parts.is_empty() || parts.len() > 3 {
            return Err(bad());
        }
        let degrees: u32 = parts[0].parse().map_err(|_| bad())?;
        let minutes: u32 = parts.get(1).map(|p| p.parse()).transpose().map_err(|_| bad())?.unwrap_or(0);
        let seconds: f64 = parts.get(2).map(|p| p.parse()).transpose().map_err(|_| bad())?.unwrap_or(0.0);
        let dms = DmsCoordinate {
            degrees,
            minutes,
            seconds,
            hemisphere,
        };
        dms.validate()?;
        Ok(dms)
    }
}

impl fmt::Display for DmsCoordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}d{:02}m{:.4}s{}", self.degrees, self.minutes, self.seconds, self.hemisphere)
    }
}
