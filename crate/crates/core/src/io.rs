//! Serialization helpers shared by the CSV and JSON emitters.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        // normalizes -0.0 as well
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    format!("{v:.16e}")
}

pub fn write_json<W: Write, T: Serialize>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}
