//! Plot digitization: axis calibration, color-keyed series extraction,
//! target selection and monotonicity cleaning.

mod render;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::units::{parse_quantity, same_quantity};

pub use render::{render_synthetic_plot, AxisSpec, GroundTruth, SeriesSpec, SpecError, SyntheticPlotSpec, MIN_COLOR_DISTANCE};

pub type Rgb = [u8; 3];

/// Per-channel color tolerance used when none is given.
pub const DEFAULT_TOLERANCE: u8 = 30;
/// Minimum number of mask pixels for a series to count as present.
pub const DEFAULT_MIN_PIXELS: usize = 12;
/// Monotonicity tolerance as a fraction of the y-axis span.
pub const DEFAULT_MONOTONIC_FRACTION: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DigitizerError {
    #[error("axis needs at least 2 anchors, got {0}")]
    TooFewAnchors(usize),
    #[error("degenerate anchors: {0}")]
    DegenerateAnchors(String),
    #[error("log axis anchor value {0} is not positive")]
    NonPositiveLogAnchor(f64),
    #[error("series {0} not found in image")]
    SeriesNotFound(String),
    #[error("no series key given")]
    NoSeriesKeys,
    #[error("target '{target}' matched {matches} series")]
    AmbiguousTarget { target: String, matches: usize },
    #[error("{given} traces but {expected} labels")]
    LabelCountMismatch { given: usize, expected: usize },
    #[error("{dropped} of {total} points dropped by monotonicity cleaning")]
    EmptyAfterCleaning { dropped: usize, total: usize },
    #[error("points not ordered by x at index {0}")]
    Unordered(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log10,
}

impl Scale {
    fn forward(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log10 => v.log10(),
        }
    }

    fn inverse(self, v: f64) -> f64 {
        match self {
            Scale::Linear => v,
            Scale::Log10 => 10f64.powf(v),
        }
    }
}

/// One axis: `forward(value) = slope * pixel + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisCalibration {
    pub scale: Scale,
    pub anchors: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Per-anchor residual in pixels.
    pub residuals: Vec<f64>,
}

impl AxisCalibration {
    pub fn fit(anchors: &[(f64, f64)], scale: Scale) -> Result<Self, DigitizerError> {
        if anchors.len() < 2 {
            return Err(DigitizerError::TooFewAnchors(anchors.len()));
        }
        for &(p, v) in anchors {
            if !p.is_finite() || !v.is_finite() {
                return Err(DigitizerError::DegenerateAnchors(format!("non-finite anchor ({p}, {v})")));
            }
            if scale == Scale::Log10 && v <= 0.0 {
                return Err(DigitizerError::NonPositiveLogAnchor(v));
            }
        }
        let sign = |a: f64, b: f64| (b - a).signum();
        let ps = sign(anchors[0].0, anchors[1].0);
        let vs = sign(anchors[0].1, anchors[1].1);
        for w in anchors.windows(2) {
            let (dp, dv) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            if dp == 0.0 {
                return Err(DigitizerError::DegenerateAnchors(format!("coincident pixel {}", w[0].0)));
            }
            if dv == 0.0 {
                return Err(DigitizerError::DegenerateAnchors(format!("repeated value {}", w[0].1)));
            }
            if dp.signum() != ps || dv.signum() != vs {
                return Err(DigitizerError::DegenerateAnchors("anchors not strictly monotone".into()));
            }
        }
        let n = anchors.len() as f64;
        let xs: Vec<f64> = anchors.iter().map(|a| a.0).collect();
        let ys: Vec<f64> = anchors.iter().map(|a| scale.forward(a.1)).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let residuals = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept) / slope - x)
            .collect();
        Ok(AxisCalibration {
            scale,
            anchors: anchors.to_vec(),
            slope,
            intercept,
            residuals,
        })
    }

    pub fn to_data(&self, pixel: f64) -> f64 {
        self.scale.inverse(self.slope * pixel + self.intercept)
    }

    pub fn to_pixel(&self, value: f64) -> f64 {
        (self.scale.forward(value) - self.intercept) / self.slope
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotCalibration {
    pub x: AxisCalibration,
    pub y: AxisCalibration,
}

impl PlotCalibration {
    /// Text form used in trace export headers.
    pub fn describe(&self) -> String {
        let axis = |a: &AxisCalibration| {
            let anchors: Vec<String> = a.anchors.iter().map(|(p, v)| format!("{p}->{v}")).collect();
            format!("{:?}[{}]", a.scale, anchors.join(",")).to_lowercase()
        };
        format!("x={} y={}", axis(&self.x), axis(&self.y))
    }
}

pub fn calibrate_axes(
    x_anchors: &[(f64, f64)],
    x_scale: Scale,
    y_anchors: &[(f64, f64)],
    y_scale: Scale,
) -> Result<PlotCalibration, DigitizerError> {
    Ok(PlotCalibration {
        x: AxisCalibration::fit(x_anchors, x_scale)?,
        y: AxisCalibration::fit(y_anchors, y_scale)?,
    })
}

pub fn pixel_to_data(cal: &PlotCalibration, px: f64, py: f64) -> (f64, f64) {
    (cal.x.to_data(px), cal.y.to_data(py))
}

pub fn data_to_pixel(cal: &PlotCalibration, x: f64, y: f64) -> (f64, f64) {
    (cal.x.to_pixel(x), cal.y.to_pixel(y))
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub left: u32,
    pub top: u32,
    pub right: u32,
    pub bottom: u32,
}

impl PixelRect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.left && x <= self.right && y >= self.top && y <= self.bottom
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesKey {
    pub color: Rgb,
    pub tolerance: u8,
}

impl SeriesKey {
    pub fn new(color: Rgb) -> Self {
        SeriesKey {
            color,
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn matches(&self, px: Rgb) -> bool {
        channel_distance(self.color, px) <= self.tolerance
    }

    pub fn name(&self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.color[0], self.color[1], self.color[2])
    }
}

pub fn channel_distance(a: Rgb, b: Rgb) -> u8 {
    (0..3).map(|i| a[i].abs_diff(b[i])).max().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    /// Search region; the whole image when absent.
    pub plot_area: Option<PixelRect>,
    /// Axis, gridline and background colors never assigned to a series.
    pub suppress: Vec<Rgb>,
    pub min_pixels: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            plot_area: None,
            suppress: vec![[0, 0, 0], [200, 200, 200], [255, 255, 255]],
            min_pixels: DEFAULT_MIN_PIXELS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTrace {
    pub series_key: String,
    pub points: Vec<(f64, f64)>,
    pub pixel_points: Vec<(f64, f64)>,
    /// Fraction of columns in the series' horizontal extent where it was found.
    pub quality: f64,
}

/// Trace each keyed series by column-wise centroids of its color mask.
pub fn extract_series(
    image: &RgbImage,
    cal: &PlotCalibration,
    keys: &[SeriesKey],
    options: &ExtractOptions,
) -> Result<Vec<SeriesTrace>, DigitizerError> {
    if keys.is_empty() {
        return Err(DigitizerError::NoSeriesKeys);
    }
    let area = options.plot_area.unwrap_or(PixelRect {
        left: 0,
        top: 0,
        right: image.width().saturating_sub(1),
        bottom: image.height().saturating_sub(1),
    });
    keys.iter().map(|k| trace_one(image, cal, k, options, area)).collect()
}

fn trace_one(
    image: &RgbImage,
    cal: &PlotCalibration,
    key: &SeriesKey,
    options: &ExtractOptions,
    area: PixelRect,
) -> Result<SeriesTrace, DigitizerError> {
    let suppressed = |c: Rgb| {
        options
            .suppress
            .iter()
            .any(|s| channel_distance(*s, c) <= key.tolerance && channel_distance(*s, key.color) > key.tolerance)
    };
    let right = area.right.min(image.width().saturating_sub(1));
    let bottom = area.bottom.min(image.height().saturating_sub(1));
    let mut total = 0usize;
    let mut columns: Vec<(u32, Vec<(u32, u32)>)> = Vec::new();
    for x in area.left..=right {
        let mut runs: Vec<(u32, u32)> = Vec::new();
        for y in area.top..=bottom {
            let c = image.get_pixel(x, y).0;
            if !key.matches(c) || suppressed(c) {
                continue;
            }
            total += 1;
            match runs.last_mut() {
                Some(run) if run.1 + 1 == y => run.1 = y,
                _ => runs.push((y, y)),
            }
        }
        // Runs touching the frame are clipped by the axis and their centroid is biased.
        runs.retain(|r| r.0 > area.top + 1 && r.1 + 2 < bottom);
        if !runs.is_empty() {
            columns.push((x, runs));
        }
    }
    if total < options.min_pixels {
        return Err(DigitizerError::SeriesNotFound(key.name()));
    }
    let mut pixel_points = Vec::with_capacity(columns.len());
    let mut previous: Option<f64> = None;
    for (x, runs) in &columns {
        let centre = |r: &(u32, u32)| (r.0 + r.1) as f64 / 2.0;
        let chosen = match previous {
            Some(p) => runs
                .iter()
                .min_by(|a, b| (centre(a) - p).abs().total_cmp(&(centre(b) - p).abs()))
                .unwrap(),
            None => runs.iter().max_by_key(|r| r.1 - r.0).unwrap(),
        };
        let y = centre(chosen);
        previous = Some(y);
        pixel_points.push((*x as f64, y));
    }
    let span = columns.last().unwrap().0 - columns[0].0 + 1;
    let points = pixel_points
        .iter()
        .map(|&(px, py)| pixel_to_data(cal, px, py))
        .collect();
    Ok(SeriesTrace {
        series_key: key.name(),
        points,
        pixel_points,
        quality: columns.len() as f64 / span as f64,
    })
}

/// Index of the trace whose label states the same quantity as `target`.
pub fn select_target_series(
    traces: &[SeriesTrace],
    labels: &[String],
    target: &str,
) -> Result<usize, DigitizerError> {
    if traces.len() != labels.len() {
        return Err(DigitizerError::LabelCountMismatch {
            given: traces.len(),
            expected: labels.len(),
        });
    }
    let ambiguous = |matches| DigitizerError::AmbiguousTarget {
        target: target.to_string(),
        matches,
    };
    let wanted = parse_quantity(target).map_err(|_| ambiguous(0))?;
    let hits: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| parse_quantity(l).is_ok_and(|q| same_quantity(&q, &wanted)))
        .map(|(i, _)| i)
        .collect();
    match hits.as_slice() {
        [one] => Ok(*one),
        _ => Err(ambiguous(hits.len())),
    }
}

/// Default monotonicity tolerance for a calibrated plot region.
pub fn default_tolerance(cal: &PlotCalibration, area: PixelRect) -> f64 {
    let a = cal.y.to_data(area.top as f64);
    let b = cal.y.to_data(area.bottom as f64);
    DEFAULT_MONOTONIC_FRACTION * (a - b).abs()
}

/// Collapse duplicate x values and drop points that fall more than
/// `tolerance` below the running maximum. Returns the cleaned trace and the
/// number of dropped points.
pub fn enforce_monotonicity(trace: &SeriesTrace, tolerance: f64) -> Result<(SeriesTrace, usize), DigitizerError> {
    let n = trace.points.len();
    let has_pixels = trace.pixel_points.len() == n;
    let mut merged: Vec<((f64, f64), (f64, f64))> = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i > 0 && trace.points[i].0 < trace.points[i - 1].0 {
            return Err(DigitizerError::Unordered(i));
        }
        let mut j = i;
        let (mut sy, mut spx, mut spy) = (0.0, 0.0, 0.0);
        while j < n && trace.points[j].0 == trace.points[i].0 {
            sy += trace.points[j].1;
            if has_pixels {
                spx += trace.pixel_points[j].0;
                spy += trace.pixel_points[j].1;
            }
            j += 1;
        }
        let k = (j - i) as f64;
        merged.push(((trace.points[i].0, sy / k), (spx / k, spy / k)));
        i = j;
    }
    let mut kept = Vec::with_capacity(merged.len());
    let mut running = f64::NEG_INFINITY;
    for item in &merged {
        if item.0 .1 < running - tolerance {
            continue;
        }
        running = running.max(item.0 .1);
        kept.push(*item);
    }
    let dropped = merged.len() - kept.len();
    if dropped * 2 > merged.len() {
        return Err(DigitizerError::EmptyAfterCleaning {
            dropped,
            total: merged.len(),
        });
    }
    Ok((
        SeriesTrace {
            series_key: trace.series_key.clone(),
            points: kept.iter().map(|k| k.0).collect(),
            pixel_points: if has_pixels { kept.iter().map(|k| k.1).collect() } else { Vec::new() },
            quality: trace.quality,
        },
        dropped,
    ))
}

/// Two-column export with calibration metadata in a header comment.
pub fn trace_to_csv(trace: &SeriesTrace, cal: &PlotCalibration) -> String {
    let mut out = format!(
        "# series={} quality={:.4} calibration: {}\ntime_s,strain\n",
        trace.series_key,
        trace.quality,
        cal.describe()
    );
    for (t, e) in &trace.points {
        out.push_str(&format!("{t},{e}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_midpoint() {
        let a = AxisCalibration::fit(&[(100.0, 0.0), (900.0, 1000.0)], Scale::Linear).unwrap();
        assert!((a.to_data(500.0) - 500.0).abs() < 1e-9);
    }

    #[test]
    fn log_midpoint() {
        let a = AxisCalibration::fit(&[(900.0, 1.0), (100.0, 100.0)], Scale::Log10).unwrap();
        assert!((a.to_data(500.0) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_and_log_errors() {
        assert!(matches!(
            AxisCalibration::fit(&[(100.0, 0.0), (100.0, 10.0)], Scale::Linear),
            Err(DigitizerError::DegenerateAnchors(_))
        ));
        assert_eq!(
            AxisCalibration::fit(&[(100.0, 0.0), (200.0, 10.0)], Scale::Log10),
            Err(DigitizerError::NonPositiveLogAnchor(0.0))
        );
        assert_eq!(
            AxisCalibration::fit(&[(100.0, 1.0)], Scale::Linear),
            Err(DigitizerError::TooFewAnchors(1))
        );
    }

    fn trace(points: &[(f64, f64)]) -> SeriesTrace {
        SeriesTrace {
            series_key: "k".into(),
            points: points.to_vec(),
            pixel_points: Vec::new(),
            quality: 1.0,
        }
    }

    #[test]
    fn monotonicity_rules() {
        let (t, flags) = enforce_monotonicity(&trace(&[(0.0, 0.10), (1.0, 0.05), (2.0, 0.20)]), 0.01).unwrap();
        assert_eq!(flags, 1);
        assert_eq!(t.points, vec![(0.0, 0.10), (2.0, 0.20)]);

        let mono = trace(&[(0.0, 0.0), (1.0, 0.1), (2.0, 0.2)]);
        let (t, flags) = enforce_monotonicity(&mono, 0.01).unwrap();
        assert_eq!((t.points, flags), (mono.points.clone(), 0));

        let desc: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 1.0 - 0.1 * i as f64)).collect();
        assert!(matches!(
            enforce_monotonicity(&trace(&desc), 0.01),
            Err(DigitizerError::EmptyAfterCleaning { .. })
        ));
    }

    #[test]
    fn duplicate_x_collapses_to_mean() {
        let (t, flags) = enforce_monotonicity(&trace(&[(0.0, 0.1), (0.0, 0.3), (1.0, 0.3)]), 0.01).unwrap();
        assert_eq!(flags, 0);
        assert_eq!(t.points, vec![(0.0, 0.2), (1.0, 0.3)]);
    }

    #[test]
    fn target_selection() {
        let traces = vec![trace(&[]), trace(&[])];
        let labels = vec!["52.7 MPa".to_string(), "31.6 MPa".to_string()];
        assert_eq!(select_target_series(&traces, &labels, "σ = 31.6 MPa").unwrap(), 1);
        let one = vec![trace(&[])];
        assert_eq!(select_target_series(&one, &["600 C".to_string()], "873.15 K").unwrap(), 0);
        let same = vec!["10 MPa".to_string(), "10 MPa".to_string()];
        assert_eq!(
            select_target_series(&traces, &same, "10 MPa"),
            Err(DigitizerError::AmbiguousTarget {
                target: "10 MPa".into(),
                matches: 2
            })
        );
    }
}
