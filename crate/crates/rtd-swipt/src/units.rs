//! Parsing of unit-suffixed command-line scalars. Powers accept `W`, `mW`
//! and `dBm` suffixes (internally watts, with P_W = 10^((dBm-30)/10));
//! gains accept linear values or a `dB` suffix.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum UnitError {
    #[error("cannot parse power value \"{0}\" (expected e.g. 1e-8, 2.4mW, -50dBm)")]
    BadPower(String),
    #[error("cannot parse gain value \"{0}\" (expected e.g. 100 or 20dB)")]
    BadGain(String),
    #[error("power value \"{0}\" must be non-negative")]
    NegativePower(String),
}

/// Parse a power into watts. A bare number is taken as watts.
pub fn parse_power_watts(text: &str) -> Result<f64, UnitError> {
    let t = text.trim();
    let (num, scale_db) = if let Some(stripped) = t.strip_suffix("dBm") {
        let v: f64 = stripped.trim().parse().map_err(|_| UnitError::BadPower(text.into()))?;
        return Ok(10f64.powf((v - 30.0) / 10.0));
    } else if let Some(stripped) = t.strip_suffix("mW") {
        (stripped.trim().parse::<f64>(), 1e-3)
    } else if let Some(stripped) = t.strip_suffix('W') {
        (stripped.trim().parse::<f64>(), 1.0)
    } else {
        (t.parse::<f64>(), 1.0)
    };
    let v = num.map_err(|_| UnitError::BadPower(text.into()))? * scale_db;
    if !v.is_finite() || v < 0.0 {
        return Err(UnitError::NegativePower(text.into()));
    }
    Ok(v)
}

/// Parse an antenna gain: linear by default, `dB` suffix converts.
pub fn parse_gain_linear(text: &str) -> Result<f64, UnitError> {
    let t = text.trim();
    if let Some(stripped) = t.strip_suffix("dB") {
        let v: f64 = stripped.trim().parse().map_err(|_| UnitError::BadGain(text.into()))?;
        Ok(10f64.powf(v / 10.0))
    } else {
        t.parse().map_err(|_| UnitError::BadGain(text.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_suffixes() {
        assert_eq!(parse_power_watts("1e-8").unwrap(), 1e-8);
        assert_eq!(parse_power_watts("2.5W").unwrap(), 2.5);
        assert!((parse_power_watts("2.4mW").unwrap() - 2.4e-3).abs() < 1e-18);
        // -50 dBm = 1e-8 W
        assert!((parse_power_watts("-50dBm").unwrap() - 1e-8).abs() < 1e-22);
        assert!((parse_power_watts("0dBm").unwrap() - 1e-3).abs() < 1e-18);
        assert!(parse_power_watts("abc").is_err());
        assert!(parse_power_watts("-1W").is_err());
    }

    #[test]
    fn gain_suffixes() {
        assert_eq!(parse_gain_linear("100").unwrap(), 100.0);
        assert!((parse_gain_linear("20dB").unwrap() - 100.0).abs() < 1e-12);
        assert!(parse_gain_linear("junk").is_err());
    }
}
