//! Shared oracles and generators for integration tests.
#![allow(dead_code)]

use creepdb::digitizer::{AxisSpec, PixelRect, Rgb, Scale, SeriesSpec, SyntheticPlotSpec};
use rand::Rng;

pub const PALETTE: [Rgb; 5] = [[220, 30, 30], [30, 60, 220], [30, 160, 40], [240, 140, 0], [150, 40, 180]];

/// Ground truth y at `x` by linear interpolation, in log space for log axes.
pub fn truth_at(truth: &[(f64, f64)], x: f64, scale: Scale) -> Option<f64> {
    let f = |v: f64| if scale == Scale::Log10 { v.log10() } else { v };
    let g = |v: f64| if scale == Scale::Log10 { 10f64.powf(v) } else { v };
    if x < truth.first()?.0 || x > truth.last()?.0 {
        return None;
    }
    let i = truth.partition_point(|p| p.0 <= x).clamp(1, truth.len() - 1);
    let (a, b) = (truth[i - 1], truth[i]);
    let w = (x - a.0) / (b.0 - a.0);
    Some(g(f(a.1) * (1.0 - w) + f(b.1) * w))
}

/// Mean absolute relative error of recovered points against ground truth.
/// Linear axes use max(|y|, 5% of the axis span) as the denominator so that
/// values near zero do not dominate; log axes use pure relative error.
pub fn trace_error(recovered: &[(f64, f64)], truth: &[(f64, f64)], y_axis: &AxisSpec) -> f64 {
    let span = y_axis.max - y_axis.min;
    let errs: Vec<f64> = recovered
        .iter()
        .filter_map(|&(x, y)| {
            let t = truth_at(truth, x, y_axis.scale)?;
            let denom = match y_axis.scale {
                Scale::Linear => t.abs().max(0.05 * span),
                Scale::Log10 => t.abs(),
            };
            Some((y - t).abs() / denom)
        })
        .collect();
    if errs.is_empty() {
        return f64::INFINITY;
    }
    errs.iter().sum::<f64>() / errs.len() as f64
}

/// Creep-like curve sampled densely over [0, t_max].
fn creep_curve(rng: &mut impl Rng, t_max: f64, y_lo: f64, y_hi: f64, log: bool) -> Vec<(f64, f64)> {
    let kind = rng.gen_range(0..3);
    let m: f64 = rng.gen_range(0.25..0.7);
    let b: f64 = rng.gen_range(3.0..8.0) / t_max;
    let shape = |u: f64| -> f64 {
        match kind {
            0 => u.powf(m),
            1 => 0.7 * (1.0 - (-b * u * t_max).exp()) + 0.3 * u,
            _ => 0.6 * (1.0 - (-b * u * t_max).exp()) + 0.4 * u * u * u,
        }
    };
    let top = shape(1.0);
    (0..=200)
        .map(|i| {
            let u = i as f64 / 200.0;
            let s = shape(u) / top;
            let y = if log {
                10f64.powf(y_lo.log10() + s * (y_hi.log10() - y_lo.log10()))
            } else {
                y_lo + s * (y_hi - y_lo)
            };
            (u * t_max, y)
        })
        .collect()
}

/// Random plot with 1-4 series, linear or log y axis, optional gridlines and jitter.
pub fn random_plot_spec(rng: &mut impl Rng, seed: u64, jitter: u32) -> SyntheticPlotSpec {
    let log = rng.gen_bool(0.4);
    let n_series = rng.gen_range(1..=4);
    let t_max = [1000.0, 3600.0, 36_000.0, 100.0][rng.gen_range(0..4)];
    let x_axis = AxisSpec {
        min: 0.0,
        max: t_max,
        scale: Scale::Linear,
        ticks: (0..=4).map(|i| t_max * i as f64 / 4.0).collect(),
    };
    let y_axis = if log {
        AxisSpec {
            min: 1e-4,
            max: 1e-1,
            scale: Scale::Log10,
            ticks: vec![1e-4, 1e-3, 1e-2, 1e-1],
        }
    } else {
        let top = [0.05, 0.1, 0.2, 0.5][rng.gen_range(0..4)];
        AxisSpec {
            min: 0.0,
            max: top,
            scale: Scale::Linear,
            ticks: (0..=5).map(|i| top * i as f64 / 5.0).collect(),
        }
    };
    let mut colors = PALETTE.to_vec();
    let series = (0..n_series)
        .map(|k| {
            let color = colors.remove(rng.gen_range(0..colors.len()));
            let (lo, hi) = if log {
                (rng.gen_range(1.5e-4..1e-3), rng.gen_range(5e-3..9e-2))
            } else {
                let span = y_axis.max;
                (rng.gen_range(0.0..0.1) * span, rng.gen_range(0.5..0.95) * span)
            };
            SeriesSpec {
                label: format!("series {k}"),
                color,
                points: creep_curve(rng, t_max, lo, hi, log),
                line_width: rng.gen_range(1..=3),
            }
        })
        .collect();
    SyntheticPlotSpec {
        width: 640,
        height: 480,
        plot_area: PixelRect {
            left: 60,
            top: 20,
            right: 620,
            bottom: 440,
        },
        x_axis,
        y_axis,
        series,
        gridlines: rng.gen_bool(0.5),
        background: [255, 255, 255],
        jitter,
        seed,
    }
}

pub fn paper(doi: &str) -> creepdb::store::PaperRow {
    creepdb::store::PaperRow {
        doi: doi.into(),
        title: format!("Paper {doi}"),
        authors: vec!["A. Author".into()],
        year: 2020,
        source_path: format!("{doi}.txt"),
    }
}

pub fn record(
    doi: &str,
    material: &str,
    category: &str,
    temperature_k: f64,
    stress_mpa: f64,
    verdict: creepdb::validator::Verdict,
) -> creepdb::store::CreepRecord {
    creepdb::store::CreepRecord {
        record_id: 0,
        doi: doi.into(),
        material: material.into(),
        category: category.into(),
        temperature_k,
        stress_mpa,
        model_name: "norton_bailey".into(),
        equation: "eps = A*sigma^n*t^m".into(),
        bindings: creepdb::models::Catalog::builtin()
            .get("norton_bailey")
            .unwrap()
            .equation
            .bindings
            .clone(),
        params: vec![
            creepdb::store::ParamValue { name: "A".into(), value: 1e-9, unit: "MPa^-n*s^-m".into() },
            creepdb::store::ParamValue { name: "m".into(), value: 0.3, unit: "1".into() },
        ],
        params_source: "text".into(),
        curve: vec![(0.0, 0.0), (3600.0, 0.002), (7200.0, 0.0031)],
        verdict,
        r2: Some(if verdict == creepdb::validator::Verdict::Flagged { 0.7 } else { 0.995 }),
        evidence: creepdb::validator::Evidence {
            figure_id: Some("fig1".into()),
            text_locations: vec!["p1".into()],
        },
        report: None,
    }
}

pub fn fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo")
}

/// Corpus index, config and scripted backend of the demo corpus.
pub fn fixture() -> (
    creepdb::corpus::CorpusIndex,
    creepdb::pipeline::PipelineConfig,
    creepdb::backend::ScriptedBackend,
) {
    let dir = fixture_dir();
    let index = creepdb::corpus::CorpusIndex::ingest_manifest(&dir.join("manifest.jsonl")).unwrap();
    let config = creepdb::pipeline::PipelineConfig::load(&dir.join("config.toml")).unwrap();
    let backend = creepdb::backend::ScriptedBackend::load(&dir.join("replies.jsonl")).unwrap();
    (index, config, backend)
}
