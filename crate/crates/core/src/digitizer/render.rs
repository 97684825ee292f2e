//! Synthetic plot renderer used as a ground-truth source for the digitizer.

use image::{Rgb as Pixel, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{channel_distance, AxisCalibration, PixelRect, PlotCalibration, Rgb, Scale};

/// Smallest allowed per-channel distance between two series colors, and
/// between a series color and the axis, grid or background colors.
pub const MIN_COLOR_DISTANCE: u8 = 64;

pub const AXIS_COLOR: Rgb = [0, 0, 0];
pub const GRID_COLOR: Rgb = [200, 200, 200];
const TICK_LENGTH: u32 = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("plot needs at least one series")]
    NoSeries,
    #[error("series {0} and {1} have indistinguishable colors")]
    SimilarColors(usize, usize),
    #[error("series {0} color clashes with axis, grid or background")]
    ReservedColor(usize),
    #[error("invalid axis: {0}")]
    Axis(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("series {0} points must have strictly increasing x")]
    SeriesOrder(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub scale: Scale,
    pub ticks: Vec<f64>,
}

impl AxisSpec {
    fn fraction(&self, v: f64) -> f64 {
        let f = |x: f64| match self.scale {
            Scale::Linear => x,
            Scale::Log10 => x.log10(),
        };
        (f(v) - f(self.min)) / (f(self.max) - f(self.min))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub label: String,
    pub color: Rgb,
    pub points: Vec<(f64, f64)>,
    pub line_width: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPlotSpec {
    pub width: u32,
    pub height: u32,
    pub plot_area: PixelRect,
    pub x_axis: AxisSpec,
    pub y_axis: AxisSpec,
    pub series: Vec<SeriesSpec>,
    pub gridlines: bool,
    pub background: Rgb,
    /// Maximum vertical displacement, in pixels, applied to each polyline vertex.
    pub jitter: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub calibration: PlotCalibration,
    pub series: Vec<SeriesSpec>,
}

impl SyntheticPlotSpec {
    pub fn x_pixel(&self, v: f64) -> f64 {
        let a = &self.plot_area;
        a.left as f64 + self.x_axis.fraction(v) * (a.right - a.left) as f64
    }

    pub fn y_pixel(&self, v: f64) -> f64 {
        let a = &self.plot_area;
        a.bottom as f64 - self.y_axis.fraction(v) * (a.bottom - a.top) as f64
    }

    /// Calibration an extraction skill would report from the tick marks.
    pub fn calibration(&self) -> PlotCalibration {
        let xs: Vec<(f64, f64)> = self.x_axis.ticks.iter().map(|t| (self.x_pixel(*t), *t)).collect();
        let ys: Vec<(f64, f64)> = self.y_axis.ticks.iter().map(|t| (self.y_pixel(*t), *t)).collect();
        PlotCalibration {
            x: AxisCalibration::fit(&xs, self.x_axis.scale).expect("validated ticks"),
            y: AxisCalibration::fit(&ys, self.y_axis.scale).expect("validated ticks"),
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.series.is_empty() {
            return Err(SpecError::NoSeries);
        }
        if self.width < 32 || self.height < 32 {
            return Err(SpecError::Geometry("image smaller than 32 pixels".into()));
        }
        let a = self.plot_area;
        if a.left <= TICK_LENGTH || a.right >= self.width || a.bottom + TICK_LENGTH >= self.height || a.left >= a.right || a.top >= a.bottom {
            return Err(SpecError::Geometry("plot area does not fit the image".into()));
        }
        for (name, axis) in [("x", &self.x_axis), ("y", &self.y_axis)] {
            if !(axis.min < axis.max) {
                return Err(SpecError::Axis(format!("{name} range is empty")));
            }
            if axis.scale == Scale::Log10 && axis.min <= 0.0 {
                return Err(SpecError::Axis(format!("{name} log axis must be positive")));
            }
            if axis.ticks.len() < 2 || axis.ticks.windows(2).any(|w| w[1] <= w[0]) {
                return Err(SpecError::Axis(format!("{name} needs at least 2 increasing ticks")));
            }
            if axis.ticks.iter().any(|t| *t < axis.min || *t > axis.max) {
                return Err(SpecError::Axis(format!("{name} tick outside range")));
            }
        }
        for (i, s) in self.series.iter().enumerate() {
            if [AXIS_COLOR, GRID_COLOR, self.background]
                .iter()
                .any(|c| channel_distance(*c, s.color) < MIN_COLOR_DISTANCE)
            {
                return Err(SpecError::ReservedColor(i));
            }
            for (j, o) in self.series.iter().enumerate().skip(i + 1) {
                if channel_distance(s.color, o.color) < MIN_COLOR_DISTANCE {
                    return Err(SpecError::SimilarColors(i, j));
                }
            }
            if s.points.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(SpecError::SeriesOrder(i));
            }
        }
        Ok(())
    }
}

pub fn render_synthetic_plot(spec: &SyntheticPlotSpec) -> Result<(RgbImage, GroundTruth), SpecError> {
    spec.validate()?;
    let mut img = RgbImage::from_pixel(spec.width, spec.height, Pixel(spec.background));
    let a = spec.plot_area;
    if spec.gridlines {
        for t in &spec.x_axis.ticks {
            let x = spec.x_pixel(*t).round() as u32;
            for y in a.top..a.bottom {
                img.put_pixel(x, y, Pixel(GRID_COLOR));
            }
        }
        for t in &spec.y_axis.ticks {
            let y = spec.y_pixel(*t).round() as u32;
            for x in a.left + 1..=a.right {
                img.put_pixel(x, y, Pixel(GRID_COLOR));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for s in &spec.series {
        let vertices: Vec<(f64, f64)> = s
            .points
            .iter()
            .map(|(x, y)| {
                let j = if spec.jitter > 0 {
                    rng.gen_range(-(spec.jitter as i64)..=spec.jitter as i64) as f64
                } else {
                    0.0
                };
                (spec.x_pixel(*x), spec.y_pixel(*y) + j)
            })
            .collect();
        let interior = PixelRect {
            left: a.left + 1,
            top: a.top,
            right: a.right,
            bottom: a.bottom - 1,
        };
        if vertices.len() == 1 {
            stamp(&mut img, vertices[0], s.line_width, s.color, interior);
        }
        for w in vertices.windows(2) {
            let (p, q) = (w[0], w[1]);
            let len = (q.0 - p.0).abs().max((q.1 - p.1).abs());
            let steps = (len * 4.0).ceil().max(1.0) as usize;
            for k in 0..=steps {
                let f = k as f64 / steps as f64;
                stamp(&mut img, (p.0 + f * (q.0 - p.0), p.1 + f * (q.1 - p.1)), s.line_width, s.color, interior);
            }
        }
    }
    for x in a.left..=a.right {
        img.put_pixel(x, a.bottom, Pixel(AXIS_COLOR));
    }
    for y in a.top..=a.bottom {
        img.put_pixel(a.left, y, Pixel(AXIS_COLOR));
    }
    for t in &spec.x_axis.ticks {
        let x = spec.x_pixel(*t).round() as u32;
        for y in a.bottom + 1..=a.bottom + TICK_LENGTH {
            img.put_pixel(x, y, Pixel(AXIS_COLOR));
        }
    }
    for t in &spec.y_axis.ticks {
        let y = spec.y_pixel(*t).round() as u32;
        for x in a.left - TICK_LENGTH..a.left {
            img.put_pixel(x, y, Pixel(AXIS_COLOR));
        }
    }
    Ok((
        img,
        GroundTruth {
            calibration: spec.calibration(),
            series: spec.series.clone(),
        },
    ))
}

fn stamp(img: &mut RgbImage, (fx, fy): (f64, f64), width: u32, color: Rgb, clip: PixelRect) {
    let half = width.max(1) as f64 / 2.0;
    let (x0, x1) = ((fx - half).ceil(), (fx + half).floor());
    let (y0, y1) = ((fy - half).ceil(), (fy + half).floor());
    let mut y = y0;
    while y <= y1 {
        let mut x = x0;
        while x <= x1 {
            if x >= 0.0 && y >= 0.0 && clip.contains(x as u32, y as u32) {
                img.put_pixel(x as u32, y as u32, Pixel(color));
            }
            x += 1.0;
        }
        y += 1.0;
    }
}
