//! Unit tables and numeric rendering.
//!
//! Link capacities are decimal (`1Gbps` is exactly 10^9 bit/s). Memory and
//! disk sizes are binary (`1MiB` is 2^20 bytes). Decimal scales are applied
//! by shifting the exponent of the literal before parsing, so `0.3ms` is the
//! correctly rounded `0.0003` rather than `0.3 * 0.001`.

/// Bytes in one mebibyte.
pub const MIB: f64 = 1_048_576.0;
/// Bytes in one gibibyte.
pub const GIB: f64 = 1_073_741_824.0;
/// One gigabit per second, decimal.
pub const GBPS: f64 = 1e9;

/// How a unit suffix scales its literal.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Scale {
    /// Multiply by `10^exp`, applied textually.
    Decimal(i32),
    /// Multiply by an exact power of two.
    Binary(f64),
}

/// A family of units a quantity may be written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// Bits per second.
    Bandwidth,
    /// Seconds.
    Time,
    /// Bytes.
    Size,
    /// Bytes per second.
    ByteRate,
}

impl Dimension {
    /// Accepted suffixes, listed largest first; the last entry is the base unit.
    fn units(self) -> &'static [(&'static str, Scale)] {
        match self {
            Dimension::Bandwidth => &[
                ("Gbps", Scale::Decimal(9)),
                ("Mbps", Scale::Decimal(6)),
                ("Kbps", Scale::Decimal(3)),
                ("bps", Scale::Decimal(0)),
            ],
            Dimension::Time => &[("ms", Scale::Decimal(-3)), ("s", Scale::Decimal(0))],
            Dimension::Size => &[
                ("GiB", Scale::Binary(GIB)),
                ("MiB", Scale::Binary(MIB)),
                ("KiB", Scale::Binary(1024.0)),
                ("B", Scale::Binary(1.0)),
            ],
            Dimension::ByteRate => &[
                ("GiB/s", Scale::Binary(GIB)),
                ("MiB/s", Scale::Binary(MIB)),
                ("KiB/s", Scale::Binary(1024.0)),
                ("B/s", Scale::Binary(1.0)),
            ],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Dimension::Bandwidth => "bandwidth",
            Dimension::Time => "time",
            Dimension::Size => "size",
            Dimension::ByteRate => "byte rate",
        }
    }
}

/// Parses `<number><unit>` into the dimension's base unit.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let split = text
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .unwrap_or(text.len());
    let (number, unit) = text.split_at(split);
    if number.is_empty() || number.starts_with('.') || number.ends_with('.') {
        return Err(format!("expected a number in {} quantity `{text}`", dim.name()));
    }
    let scale = dim
        .units()
        .iter()
        .find(|(suffix, _)| *suffix == unit)
        .map(|(_, scale)| *scale)
        .ok_or_else(|| {
            let names: Vec<&str> = dim.units().iter().map(|(s, _)| *s).collect();
            format!(
                "unknown {} unit `{unit}` in `{text}` (expected one of {})",
                dim.name(),
                names.join(", ")
            )
        })?;
    let value = match scale {
        Scale::Decimal(exp) => format!("{number}e{exp}").parse::<f64>(),
        Scale::Binary(factor) => number.parse::<f64>().map(|v| v * factor),
    }
    .map_err(|e| format!("bad number `{number}`: {e}"))?;
    if !value.is_finite() {
        return Err(format!("{} quantity `{text}` is out of range", dim.name()));
    }
    Ok(value)
}

/// Renders a base-unit value with the largest unit that keeps the number at
/// least 1 and parses back to the identical `f64`.
pub fn render_quantity(value: f64, dim: Dimension) -> String {
    for require_whole in [true, false] {
        for (suffix, scale) in dim.units() {
            let scaled = match scale {
                Scale::Decimal(exp) => value / 10f64.powi(*exp),
                Scale::Binary(factor) => value / factor,
            };
            if require_whole && scaled < 1.0 {
                continue;
            }
            let candidate = format!("{scaled}{suffix}");
            if parse_quantity(&candidate, dim).ok() == Some(value) {
                return candidate;
            }
        }
    }
    let (base, _) = dim.units()[dim.units().len() - 1];
    format!("{value}{base}")
}

/// Formats like C's `%.9g`: nine significant digits, trailing zeros removed,
/// exponent form outside `[1e-4, 1e9)`.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
