//! Unit-aware scalar inputs.
//!
//! Internal units are fixed: times in days, rates per day, volatility per
//! square-root day, markups and fees as fractions. Configuration values may
//! be bare numbers (already in internal units) or strings with an explicit
//! suffix, e.g. `"10bps"`, `"100/day"`, `"1/sqrt(year)"`, `"30s"`.
//! Years have 365 days.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

pub const DAYS_PER_YEAR: f64 = 365.0;
pub const SECONDS_PER_DAY: f64 = 86_400.0;

fn split_number(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E')
                    && s[i + 1..].starts_with(|n: char| n.is_ascii_digit() || n == '-' || n == '+')))
        })
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let value: f64 = s[..end].parse().ok()?;
    Some((value, s[end..].trim()))
}

macro_rules! unit_type {
    ($(#[$meta:meta])* $name:ident, $expecting:literal, $parse:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
        pub struct $name(pub f64);

        impl $name {
            pub fn get(self) -> f64 {
                self.0
            }

            pub fn parse(s: &str) -> Result<Self, String> {
                $parse(s).map($name).ok_or_else(|| format!(concat!("expected ", $expecting, ", got `{}`"), s))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_f64(self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                struct V;
                impl<'de> Visitor<'de> for V {
                    type Value = $name;
                    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                        f.write_str($expecting)
                    }
                    fn visit_f64<E: de::Error>(self, v: f64) -> Result<$name, E> {
                        Ok($name(v))
                    }
                    fn visit_i64<E: de::Error>(self, v: i64) -> Result<$name, E> {
                        Ok($name(v as f64))
                    }
                    fn visit_u64<E: de::Error>(self, v: u64) -> Result<$name, E> {
                        Ok($name(v as f64))
                    }
                    fn visit_str<E: de::Error>(self, v: &str) -> Result<$name, E> {
                        $name::parse(v).map_err(E::custom)
                    }
                }
                d.deserialize_any(V)
            }
        }
    };
}

unit_type!(
    /// Dimensionless fraction; accepts `"10bps"`, `"0.1%"` or a bare number.
    Fraction,
    "a fraction or a value with a bps/% suffix",
    parse_fraction
);
unit_type!(
    /// Duration in days; accepts suffixes `s`, `min`/`m`, `h`, `d`/`day(s)`, `y`/`year(s)`.
    Duration,
    "a duration in days or with a s/min/h/day/year suffix",
    parse_duration
);
unit_type!(
    /// Rate per day; accepts `"/day"`, `"/year"`, `"/h"` suffixes.
    PerDay,
    "a rate per day or with a /day, /year, /h suffix",
    parse_rate
);
unit_type!(
    /// Volatility per square-root day; accepts `"/sqrt(year)"` and `"/sqrt(day)"`.
    Volatility,
    "a volatility per sqrt(day) or with a /sqrt(year) suffix",
    parse_volatility
);

fn strip_percent(value: f64, rest: &str) -> (f64, String) {
    let rest = rest.trim();
    if let Some(r) = rest.strip_prefix('%') {
        (value / 100.0, r.trim().to_string())
    } else {
        (value, rest.to_string())
    }
}

fn parse_fraction(s: &str) -> Option<f64> {
    let (v, rest) = split_number(s)?;
    match rest.to_ascii_lowercase().as_str() {
        "" => Some(v),
        "bps" | "bp" => Some(v * 1e-4),
        "%" => Some(v / 100.0),
        _ => None,
    }
}

fn parse_duration(s: &str) -> Option<f64> {
    let (v, rest) = split_number(s)?;
    let factor = match rest.to_ascii_lowercase().as_str() {
        "" | "d" | "day" | "days" => 1.0,
        "s" | "sec" | "second" | "seconds" => 1.0 / SECONDS_PER_DAY,
        "m" | "min" | "minute" | "minutes" => 60.0 / SECONDS_PER_DAY,
        "h" | "hour" | "hours" => 1.0 / 24.0,
        "y" | "yr" | "year" | "years" => DAYS_PER_YEAR,
        _ => return None,
    };
    Some(v * factor)
}

fn parse_rate(s: &str) -> Option<f64> {
    let (v, rest) = split_number(s)?;
    let (v, rest) = strip_percent(v, rest);
    let factor = match rest.replace(' ', "").to_ascii_lowercase().as_str() {
        "" | "/day" | "/d" | "perday" => 1.0,
        "/year" | "/yr" | "/y" => 1.0 / DAYS_PER_YEAR,
        "/h" | "/hour" => 24.0,
        _ => return None,
    };
    Some(v * factor)
}

fn parse_volatility(s: &str) -> Option<f64> {
    let (v, rest) = split_number(s)?;
    let (v, rest) = strip_percent(v, rest);
    let factor = match rest.replace(' ', "").to_ascii_lowercase().as_str() {
        "" | "/sqrt(day)" | "/sqrt(d)" => 1.0,
        "/sqrt(year)" | "/sqrt(yr)" | "/sqrt(y)" => 1.0 / DAYS_PER_YEAR.sqrt(),
        _ => return None,
    };
    Some(v * factor)
}

/// Annualized volatility converted to per square-root day.
pub fn annual_vol_to_daily(sigma: f64) -> f64 {
    sigma / DAYS_PER_YEAR.sqrt()
}

pub fn seconds_to_days(s: f64) -> f64 {
    s / SECONDS_PER_DAY
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_suffixes() {
        assert!((Fraction::parse("10bps").unwrap().get() - 0.001).abs() < 1e-18);
        assert!((Fraction::parse("7.5 bps").unwrap().get() - 0.00075).abs() < 1e-18);
        assert_eq!(Fraction::parse("0.001").unwrap().get(), 0.001);
        assert!((Fraction::parse("0.3%").unwrap().get() - 0.003).abs() < 1e-18);
        assert!((Duration::parse("30s").unwrap().get() - 30.0 / 86400.0).abs() < 1e-18);
        assert!((Duration::parse("5min").unwrap().get() - 300.0 / 86400.0).abs() < 1e-18);
        assert_eq!(Duration::parse("0.5day").unwrap().get(), 0.5);
        assert_eq!(PerDay::parse("100/day").unwrap().get(), 100.0);
        assert!((PerDay::parse("0.4/year").unwrap().get() - 0.4 / 365.0).abs() < 1e-18);
        assert!((PerDay::parse("40%/year").unwrap().get() - 0.4 / 365.0).abs() < 1e-18);
        let v = Volatility::parse("1/sqrt(year)").unwrap().get();
        assert!((v - 1.0 / 365f64.sqrt()).abs() < 1e-15);
        assert!((Volatility::parse("120% / sqrt(year)").unwrap().get() - 1.2 / 365f64.sqrt()).abs() < 1e-15);
        assert_eq!(Fraction::parse("1e-3").unwrap().get(), 1e-3);
        assert!(Fraction::parse("10 furlongs").is_err());
        assert!(Duration::parse("").is_err());
    }

    #[test]
    fn deserializes_numbers_and_strings() {
        #[derive(Deserialize)]
        struct T {
            a: Fraction,
            b: Fraction,
            c: Duration,
        }
        let t: T = toml::from_str("a = 3\nb = \"5bps\"\nc = \"1m\"").unwrap();
        assert_eq!(t.a.get(), 3.0);
        assert!((t.b.get() - 5e-4).abs() < 1e-18);
        assert!((t.c.get() - 60.0 / 86400.0).abs() < 1e-18);
    }
}
