//! Quantity expressions such as `"4GB"`, `"90s"` or `"25% of the RAM"`, and
//! their conversion into a knob's canonical unit.
//!
//! Memory is canonicalized to bytes and time to milliseconds. Binary
//! multiples are used for memory (`1kB = 1024B`), matching PostgreSQL.

use std::sync::LazyLock;

use regex::Regex;

use crate::catalog::{SystemProfile, Unit};
use crate::error::{Error, Result};

const KIB: f64 = 1024.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PercentBase {
    Ram,
    Disk,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Suffix {
    Memory(f64),
    Time(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Quantity {
    /// A literal, optionally carrying a unit suffix (scale to bytes or ms).
    Literal { value: f64, suffix: Option<Suffix> },
    Percent { percent: f64, base: PercentBase },
}

static PERCENT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(-?\d+(?:\.\d+)?)\s*%\s*(?:of\s+)?(?:the\s+)?(?:total\s+|available\s+|system\s+|physical\s+)*(.*?)\s*$")
        .unwrap()
});

static LITERAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(-?\d+(?:\.\d+)?(?:e[+-]?\d+)?)\s*([a-z]*)$").unwrap());

fn suffix(s: &str) -> Option<Option<Suffix>> {
    let sfx = match s {
        "" => return Some(None),
        "b" | "byte" | "bytes" => Suffix::Memory(1.0),
        "k" | "kb" | "kib" => Suffix::Memory(KIB),
        "mb" | "mib" => Suffix::Memory(KIB * KIB),
        "g" | "gb" | "gib" => Suffix::Memory(KIB * KIB * KIB),
        "tb" | "tib" => Suffix::Memory(KIB * KIB * KIB * KIB),
        "us" => Suffix::Time(0.001),
        "ms" => Suffix::Time(1.0),
        "s" | "sec" | "secs" | "second" | "seconds" => Suffix::Time(1_000.0),
        "min" | "mins" | "minute" | "minutes" => Suffix::Time(60_000.0),
        "h" | "hour" | "hours" => Suffix::Time(3_600_000.0),
        "d" | "day" | "days" => Suffix::Time(86_400_000.0),
        _ => return None,
    };
    Some(Some(sfx))
}

/// Parses a quantity expression without resolving it.
pub fn parse_quantity(expr: &str) -> Result<Quantity> {
    let text = expr.trim().to_ascii_lowercase();
    if let Some(caps) = PERCENT.captures(&text) {
        let percent: f64 = caps[1]
            .parse()
            .map_err(|_| Error::quantity(expr, "bad percentage"))?;
        let base = match caps[2].trim_end_matches('.') {
            "ram" | "memory" | "ram size" | "memory size" => PercentBase::Ram,
            "disk" | "disk space" | "disk size" | "storage" => PercentBase::Disk,
            "" => return Err(Error::quantity(expr, "percentage without a base")),
            other => {
                return Err(Error::quantity(
                    expr,
                    format!("unsupported percentage base {other:?}"),
                ))
            }
        };
        return Ok(Quantity::Percent { percent, base });
    }
    let caps = LITERAL
        .captures(&text)
        .ok_or_else(|| Error::quantity(expr, "not a quantity"))?;
    let value: f64 = caps[1]
        .parse()
        .map_err(|_| Error::quantity(expr, "bad number"))?;
    let suffix = suffix(&caps[2]).ok_or_else(|| Error::quantity(expr, "unknown unit suffix"))?;
    Ok(Quantity::Literal { value, suffix })
}

fn bytes_to(unit: Unit, bytes: f64, expr: &str) -> Result<f64> {
    match unit {
        Unit::Bytes => Ok(bytes),
        Unit::Kilobytes => Ok(bytes / KIB),
        Unit::Pages => Ok(bytes / (8.0 * KIB)),
        _ => Err(Error::quantity(
            expr,
            format!("memory quantity for a knob measured in {unit:?}"),
        )),
    }
}

/// Resolves `expr` to an absolute number in `unit`.
///
/// Bare numbers are taken to be in the knob's unit already, so resolving an
/// absolute value is the identity.
pub fn resolve_quantity(expr: &str, profile: &SystemProfile, unit: Unit) -> Result<f64> {
    let value = match parse_quantity(expr)? {
        Quantity::Literal { value, suffix: None } => value,
        Quantity::Literal {
            value,
            suffix: Some(Suffix::Memory(scale)),
        } => bytes_to(unit, value * scale, expr)?,
        Quantity::Literal {
            value,
            suffix: Some(Suffix::Time(scale)),
        } => match unit {
            Unit::Milliseconds => value * scale,
            Unit::Seconds => value * scale / 1_000.0,
            _ => {
                return Err(Error::quantity(
                    expr,
                    format!("time quantity for a knob measured in {unit:?}"),
                ))
            }
        },
        Quantity::Percent { percent, base } => {
            let total = match base {
                PercentBase::Ram => profile.ram_bytes as f64,
                PercentBase::Disk => profile
                    .disk_bytes
                    .ok_or_else(|| Error::quantity(expr, "profile has no disk size"))?
                    as f64,
            };
            bytes_to(unit, total * percent / 100.0, expr)?
        }
    };
    if value < 0.0 && unit.is_non_negative() {
        return Err(Error::quantity(expr, "negative quantity"));
    }
    Ok(value)
}

/// Renders a canonical value with PostgreSQL unit syntax (`4GB`, `90s`).
pub fn render_native(value: f64, unit: Unit, integer: bool) -> String {
    let whole = value.round();
    match unit {
        Unit::Bytes if value >= 0.0 => {
            let b = whole as u64;
            for (scale, name) in [(1u64 << 40, "TB"), (1 << 30, "GB"), (1 << 20, "MB"), (1 << 10, "kB")] {
                if b >= scale && b.is_multiple_of(scale) {
                    return format!("{}{name}", b / scale);
                }
            }
            format!("{b}B")
        }
        Unit::Milliseconds if value >= 0.0 => {
            let ms = whole as u64;
            for (scale, name) in [(60_000u64, "min"), (1_000, "s")] {
                if ms >= scale && ms.is_multiple_of(scale) {
                    return format!("{}{name}", ms / scale);
                }
            }
            format!("{ms}ms")
        }
        _ if integer => format!("{}", whole as i64),
        _ => format!("{value}"),
    }
}
