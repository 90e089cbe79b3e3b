//! 16-bit greyscale PGM heatmaps.

use serde::Serialize;

use crate::CliError;

/// Row-major matrix of dB values, row 0 drawn at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct DbMatrix {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// Axis description written next to a heatmap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapMeta {
    pub width: usize,
    pub height: usize,
    pub db_min: f64,
    pub db_max: f64,
    /// Quantity along columns, left to right.
    pub x_axis: Axis,
    /// Quantity along rows, top to bottom.
    pub y_axis: Axis,
    pub value: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    pub first: f64,
    pub last: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, values: &[f64]) -> Self {
        Self {
            name: name.into(),
            first: values.first().copied().unwrap_or(f64::NAN),
            last: values.last().copied().unwrap_or(f64::NAN),
            count: values.len(),
        }
    }
}

/// Encodes `m` as a binary P5 PGM with maxval 65535. Values map linearly from
/// [`db_min`, `db_max`] onto [0, 65535] and are clamped; NaN maps to 0.
pub fn render_heatmap(m: &DbMatrix, db_min: f64, db_max: f64) -> Result<Vec<u8>, CliError> {
    if m.width == 0 || m.height == 0 || m.values.len() != m.width * m.height {
        return Err(CliError::Config(format!(
            "heatmap needs a non-empty {}x{} grid, got {} values",
            m.width,
            m.height,
            m.values.len()
        )));
    }
    if !(db_min < db_max) || !db_min.is_finite() || !db_max.is_finite() {
        return Err(CliError::Config(format!(
            "dB window must satisfy min < max, got {db_min}..{db_max}"
        )));
    }
    let header = format!("P5\n{} {}\n65535\n", m.width, m.height);
    let mut out = Vec::with_capacity(header.len() + 2 * m.values.len());
    out.extend_from_slice(header.as_bytes());
    for &v in &m.values {
        out.extend_from_slice(&pixel(v, db_min, db_max).to_be_bytes());
    }
    Ok(out)
}

fn pixel(v: f64, lo: f64, hi: f64) -> u16 {
    if v.is_nan() {
        return 0;
    }
    let x = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    (x * 65535.0).round() as u16
}
