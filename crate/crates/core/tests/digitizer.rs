mod common;

use common::{random_plot_spec, trace_error, truth_at};
use creepdb::digitizer::{
    calibrate_axes, data_to_pixel, enforce_monotonicity, extract_series, pixel_to_data, render_synthetic_plot,
    select_target_series, AxisSpec, DigitizerError, ExtractOptions, PixelRect, Scale, SeriesKey, SeriesSpec,
    SeriesTrace, SyntheticPlotSpec,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn options(spec: &SyntheticPlotSpec) -> ExtractOptions {
    ExtractOptions {
        plot_area: Some(spec.plot_area),
        ..ExtractOptions::default()
    }
}

fn single_series_spec(width: u32) -> SyntheticPlotSpec {
    let points: Vec<(f64, f64)> = (0..=100)
        .map(|i| {
            let t = i as f64 * 10.0;
            (t, 0.08 + 0.2 * (1.0 - (-t / 300.0).exp()) + 0.0001 * t)
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
        x_axis: AxisSpec {
            min: 0.0,
            max: 1000.0,
            scale: Scale::Linear,
            ticks: vec![0.0, 250.0, 500.0, 750.0, 1000.0],
        },
        y_axis: AxisSpec {
            min: 0.0,
            max: 0.4,
            scale: Scale::Linear,
            ticks: vec![0.0, 0.1, 0.2, 0.3, 0.4],
        },
        series: vec![SeriesSpec {
            label: "s".into(),
            color: [220, 30, 30],
            points,
            line_width: width,
        }],
        gridlines: true,
        background: [255, 255, 255],
        jitter: 0,
        seed: 3,
    }
}

#[test]
fn single_series_round_trip_below_one_percent() {
    let spec = single_series_spec(2);
    let (img, truth) = render_synthetic_plot(&spec).unwrap();
    let traces = extract_series(&img, &truth.calibration, &[SeriesKey::new([220, 30, 30])], &options(&spec)).unwrap();
    let t = &traces[0];
    assert!(t.quality > 0.99);
    let span = spec.y_axis.max - spec.y_axis.min;
    for &(x, y) in &t.points {
        let Some(want) = truth_at(&truth.series[0].points, x, Scale::Linear) else { continue };
        assert!((y - want).abs() / want.abs().max(0.05 * span) < 0.01, "x={x} y={y} want={want}");
    }
}

#[test]
fn missing_key_is_series_not_found() {
    let spec = single_series_spec(2);
    let (img, truth) = render_synthetic_plot(&spec).unwrap();
    let err = extract_series(&img, &truth.calibration, &[SeriesKey::new([30, 60, 220])], &options(&spec)).unwrap_err();
    assert!(matches!(err, DigitizerError::SeriesNotFound(_)));
}

#[test]
fn random_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (i, jitter) in [(0u64, 0u32), (1, 1)].iter().flat_map(|&(k, j)| (0..15).map(move |i| (k * 100 + i, j))) {
        let spec = random_plot_spec(&mut rng, i, jitter);
        let (img, truth) = render_synthetic_plot(&spec).unwrap();
        let keys: Vec<SeriesKey> = spec.series.iter().map(|s| SeriesKey::new(s.color)).collect();
        let traces = extract_series(&img, &truth.calibration, &keys, &options(&spec)).unwrap();
        let limit = if jitter == 0 { 0.01 } else { 0.02 };
        for (t, s) in traces.iter().zip(&truth.series) {
            let err = trace_error(&t.points, &s.points, &spec.y_axis);
            assert!(err < limit, "plot {i} series {} err {err}", s.label);
        }
    }
}

#[test]
fn traces_never_use_other_series_pixels() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..10 {
        let spec = random_plot_spec(&mut rng, seed, 1);
        let (img, truth) = render_synthetic_plot(&spec).unwrap();
        let keys: Vec<SeriesKey> = spec.series.iter().map(|s| SeriesKey::new(s.color)).collect();
        let traces = extract_series(&img, &truth.calibration, &keys, &options(&spec)).unwrap();
        for (t, key) in traces.iter().zip(&keys) {
            for &(px, py) in &t.pixel_points {
                let c = img.get_pixel(px as u32, py.round() as u32).0;
                assert!(key.matches(c), "seed {seed}: pixel ({px},{py}) belongs to another mask");
            }
        }
    }
}

#[test]
fn calibration_invertible_on_interior() {
    let cal = calibrate_axes(
        &[(60.0, 0.0), (340.0, 500.0), (620.0, 1000.0)],
        Scale::Linear,
        &[(440.0, 1e-4), (20.0, 1e-1)],
        Scale::Log10,
    )
    .unwrap();
    for px in (60..=620).step_by(7) {
        for py in (20..=440).step_by(7) {
            let (x, y) = pixel_to_data(&cal, px as f64, py as f64);
            let (qx, qy) = data_to_pixel(&cal, x, y);
            assert!((qx - px as f64).abs() < 0.5 && (qy - py as f64).abs() < 0.5);
        }
    }
}

#[test]
fn fig3_target_selection() {
    let mut spec = single_series_spec(2);
    let high: Vec<(f64, f64)> = (0..=100).map(|i| (i as f64 * 10.0, 0.03 * (i as f64 * 10.0).powf(0.42))).collect();
    spec.series[0].label = "52.7 MPa".into();
    spec.series[0].points = high;
    spec.series.push(SeriesSpec {
        label: "31.6 MPa".into(),
        color: [30, 60, 220],
        points: (0..=100).map(|i| (i as f64 * 10.0, 0.015 * (i as f64 * 10.0).powf(0.4))).collect(),
        line_width: 2,
    });
    let (img, truth) = render_synthetic_plot(&spec).unwrap();
    let keys: Vec<SeriesKey> = spec.series.iter().map(|s| SeriesKey::new(s.color)).collect();
    let traces = extract_series(&img, &truth.calibration, &keys, &options(&spec)).unwrap();
    let labels: Vec<String> = spec.series.iter().map(|s| s.label.clone()).collect();
    let idx = select_target_series(&traces, &labels, "σ = 31.6 MPa").unwrap();
    assert_eq!(idx, 1);
    let target = &traces[idx];
    assert!(trace_error(&target.points, &truth.series[1].points, &spec.y_axis) < 0.01);
    assert!(trace_error(&target.points, &truth.series[0].points, &spec.y_axis) > 0.1);
}

fn arb_trace() -> impl Strategy<Value = SeriesTrace> {
    prop::collection::vec((0u8..4, -1.0f64..1.0), 1..60).prop_map(|steps| {
        let mut x = 0.0;
        let mut y = 0.0;
        let points = steps
            .into_iter()
            .map(|(dx, dy)| {
                x += dx as f64;
                y += dy * 0.05 + 0.02;
                (x, y)
            })
            .collect();
        SeriesTrace {
            series_key: "p".into(),
            points,
            pixel_points: Vec::new(),
            quality: 1.0,
        }
    })
}

proptest! {
    #[test]
    fn monotonicity_is_idempotent(trace in arb_trace(), tol in 0.0f64..0.05) {
        if let Ok((once, _)) = enforce_monotonicity(&trace, tol) {
            let (twice, flags) = enforce_monotonicity(&once, tol).unwrap();
            prop_assert_eq!(flags, 0);
            prop_assert_eq!(&twice, &once);
            for w in once.points.windows(2) {
                prop_assert!(w[1].0 > w[0].0);
                prop_assert!(w[1].1 >= w[0].1 - tol);
            }
        }
    }
}
