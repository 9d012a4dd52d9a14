//! Nine-significant-digit number output.

use std::io;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter};

/// Significant digits of every float in a report.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Formats `x` with nine significant digits, in plain notation when the
/// exponent is moderate and scientific otherwise.
///
/// ```
/// assert_eq!(mmtrace::number::sig9(17.37), "17.3700000");
/// assert_eq!(mmtrace::number::sig9(0.0), "0.0");
/// assert_eq!(mmtrace::number::sig9(1e-9), "1.00000000e-9");
/// ```
pub fn sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0.0".into() } else { format!("{x}") };
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    // The exponent after rounding, so 9.9999999999 counts as 1e1.
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if (-5..15).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(1) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}

/// Compact JSON formatter that writes floats via [`sig9`].
#[derive(Debug, Default, Clone, Copy)]
pub struct Sig9Formatter;

impl Formatter for Sig9Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            writer.write_all(sig9(value).as_bytes())
        } else {
            CompactFormatter.write_null(writer)
        }
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serialises `value` as one line of JSON with nine-digit floats.
pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    value.serialize(&mut serde_json::Serializer::with_formatter(&mut out, Sig9Formatter))?;
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}
