//! Writes the six-bundle demo corpus: page texts, rendered figures, the
//! manifest, scripted backend replies, screening truth and a config file.
//!
//! cargo run -p creepdb --example make_demo_corpus -- [out_dir]

use std::fs;
use std::path::{Path, PathBuf};

use creepdb::digitizer::{render_synthetic_plot, AxisSpec, PixelRect, Rgb, Scale, SeriesSpec, SyntheticPlotSpec};
use creepdb::formula::standardize;
use creepdb::models::{evaluate, r_squared, Catalog, Values};
use serde_json::{json, Value};

const HOUR: f64 = 3600.0;

struct Figure {
    id: &'static str,
    caption: String,
    spec: SyntheticPlotSpec,
    time_unit: &'static str,
    strain_unit: &'static str,
    with_plot_area: bool,
}

struct Doc {
    id: &'static str,
    doi: &'static str,
    title: &'static str,
    authors: Vec<&'static str>,
    year: i32,
    pages: Vec<String>,
    figure: Option<Figure>,
    screen: Value,
    parse: Option<Vec<Value>>,
}

fn curve(model: &str, params: &Values, cond: &Values, t_end_s: f64, time_scale: f64, strain_scale: f64) -> Vec<(f64, f64)> {
    let catalog = Catalog::builtin();
    let m = catalog.get(model).expect("catalog model");
    let times: Vec<f64> = (0..=200).map(|i| t_end_s * i as f64 / 200.0).collect();
    let strains = evaluate(m, params, cond, &times).expect("evaluates");
    times
        .iter()
        .zip(strains)
        .map(|(t, e)| (t / time_scale, e / strain_scale))
        .collect()
}

fn values(pairs: &[(&str, f64)]) -> Values {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn linear_axis(max: f64, ticks: usize) -> AxisSpec {
    AxisSpec {
        min: 0.0,
        max,
        scale: Scale::Linear,
        ticks: (0..=ticks).map(|i| max * i as f64 / ticks as f64).collect(),
    }
}

fn plot(x_axis: AxisSpec, y_axis: AxisSpec, series: Vec<SeriesSpec>, gridlines: bool) -> SyntheticPlotSpec {
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
        gridlines,
        background: [255, 255, 255],
        jitter: 0,
        seed: 11,
    }
}

fn series(label: &str, color: Rgb, points: Vec<(f64, f64)>) -> SeriesSpec {
    SeriesSpec {
        label: label.into(),
        color,
        points,
        line_width: 2,
    }
}

fn hex(c: Rgb) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// Figure block of a parser reply, with anchors read off the tick marks.
fn figure_reply(f: &Figure) -> Value {
    let s = &f.spec;
    let xs: Vec<Value> = s.x_axis.ticks.iter().map(|t| json!({"pixel": round1(s.x_pixel(*t)), "value": t})).collect();
    let ys: Vec<Value> = s.y_axis.ticks.iter().map(|t| json!({"pixel": round1(s.y_pixel(*t)), "value": t})).collect();
    let scale = |a: &AxisSpec| if a.scale == Scale::Log10 { "log10" } else { "linear" };
    let mut v = json!({
        "figure_id": f.id,
        "x_scale": scale(&s.x_axis),
        "y_scale": scale(&s.y_axis),
        "x_anchors": xs,
        "y_anchors": ys,
        "time_unit": f.time_unit,
        "strain_unit": f.strain_unit,
        "series": s.series.iter().map(|x| json!({"label": x.label, "color": hex(x.color)})).collect::<Vec<_>>(),
    });
    if f.with_plot_area {
        let a = s.plot_area;
        v["plot_area"] = json!({"left": a.left, "top": a.top, "right": a.right, "bottom": a.bottom});
    }
    v
}

fn params_json(pairs: &[(&str, f64, &str)]) -> Value {
    Value::Array(pairs.iter().map(|(n, v, u)| json!({"name": n, "value": v, "unit": u})).collect())
}

fn screen_reply(has_data: bool, has_equation: bool, why: &str) -> Value {
    json!({"has_data": has_data, "has_equation": has_equation, "rationale": why})
}

fn doc1() -> Doc {
    // Norton-Bailey, two stresses; the target is the lower one.
    let (a, n, m) = (7.2e-9, 3.0, 0.35);
    let mk = |sigma: f64| curve("norton_bailey", &values(&[("A", a), ("n", n), ("m", m)]), &values(&[("sigma", sigma)]), 100.0 * HOUR, HOUR, 0.01);
    let spec = plot(
        linear_axis(100.0, 5),
        linear_axis(10.0, 5),
        vec![series("52.7 MPa", [220, 30, 30], mk(52.7)), series("31.6 MPa", [30, 60, 220], mk(31.6))],
        true,
    );
    let figure = Figure {
        id: "fig3",
        caption: "Creep strain of X46Cr13 at 600 °C under 52.7 MPa and 31.6 MPa.".into(),
        spec,
        time_unit: "h",
        strain_unit: "%",
        with_plot_area: true,
    };
    let reply = json!({
        "material": "X46Cr13",
        "category": "steel_iron",
        "temperature": "600 degC",
        "stress": {"value": 31.6, "unit": "MPa"},
        "target_condition": "σ = 31.6 MPa",
        "model": {
            "name": "norton_bailey",
            "equation": "eps = A*sigma^n*t^m",
            "bindings": [
                {"symbol": "eps", "role": "strain", "unit": "1"},
                {"symbol": "t", "role": "time", "unit": "s"},
                {"symbol": "A", "role": "parameter", "unit": "MPa^-n*s^-m"},
                {"symbol": "sigma", "role": "stress", "unit": "MPa"},
                {"symbol": "n", "role": "parameter", "unit": "1"},
                {"symbol": "m", "role": "parameter", "unit": "1"}
            ],
            "parameters": params_json(&[("A", a, "MPa^-n*s^-m"), ("n", n, "1"), ("m", m, "1")])
        },
        "figure": figure_reply(&figure),
        "text_locations": ["page 1, paragraph 3", "page 2, table 1"]
    });
    Doc {
        id: "doc1",
        doi: "10.5555/demo.2019.001",
        title: "Primary creep of martensitic stainless steel X46Cr13 at 600 °C",
        authors: vec!["K. Brandt", "L. Ortiz"],
        year: 2019,
        pages: vec![
            "Uniaxial creep tests were performed on X46Cr13 martensitic stainless steel at 600 °C under constant \
             loads of 52.7 MPa and 31.6 MPa. Strain was recorded with high-temperature extensometers."
                .into(),
            format!(
                "The primary creep strain follows the Norton-Bailey time hardening law eps = A*sigma^n*t^m with \
                 t in seconds and sigma in MPa. Table 1: A = {a:e}, n = {n}, m = {m}. Fig. 3 shows the measured curves."
            ),
        ],
        figure: Some(figure),
        screen: screen_reply(true, true, "Reports measured creep curves and a Norton-Bailey law."),
        parse: Some(vec![json!({"tool_call": {"name": "figure_info", "arguments": {"figure_id": "fig3"}}}), reply]),
    }
}

fn doc2() -> Doc {
    let p = [("theta1", 0.01), ("theta2", 2e-5), ("theta3", 0.002), ("theta4", 2e-6)];
    let pts = curve("theta_projection", &values(&p), &Values::new(), 300.0 * HOUR, HOUR, 1.0);
    let spec = plot(linear_axis(300.0, 6), linear_axis(0.03, 3), vec![series("400 MPa", [20, 150, 40], pts)], false);
    let figure = Figure {
        id: "fig2",
        caption: "Creep curve of the nickel-base superalloy at 750 °C and 400 MPa.".into(),
        spec,
        time_unit: "h",
        strain_unit: "1",
        with_plot_area: true,
    };
    let reply = json!({
        "material": "Inconel 718",
        "category": "nickel_alloy",
        "temperature": {"value": 750, "unit": "degC"},
        "stress": "400 MPa",
        "model": {
            "name": "theta_projection",
            "equation": "eps = theta1*(1 - exp(-theta2*t)) + theta3*(exp(theta4*t) - 1)",
            "parameters": params_json(&[
                ("theta1", 0.01, "1"),
                ("theta2", 0.072, "1/h"),
                ("theta3", 0.002, "1"),
                ("theta4", 0.0072, "1/h")
            ])
        },
        "figure": figure_reply(&figure),
        "text_locations": ["page 2, eq. 4"]
    });
    Doc {
        id: "doc2",
        doi: "10.5555/demo.2021.014",
        title: "Theta projection of creep in a nickel-base superalloy",
        authors: vec!["R. Iyer"],
        year: 2021,
        pages: vec![
            "Creep rupture experiments on Inconel 718 were run at 750 °C and 400 MPa until tertiary creep.".into(),
            "The curve is described by the theta projection eps = theta1*(1 - exp(-theta2*t)) + theta3*(exp(theta4*t) - 1) \
             with theta1 = 0.01, theta2 = 0.072 1/h, theta3 = 0.002 and theta4 = 0.0072 1/h."
                .into(),
        ],
        figure: Some(figure),
        // First reply omits a required field; the retry corrects it.
        screen: json!([{"has_data": true, "rationale": "creep curves"}, screen_reply(true, true, "Creep curves with theta projection fit.")]),
        parse: Some(vec![reply]),
    }
}

fn doc3() -> Doc {
    // Overdamped Duffing response under constant forcing, time in hours.
    let per_h = [("delta", 3.0), ("alpha", 1.0), ("beta", 0.5), ("gamma", 1.0)];
    let mut p: Vec<(&str, f64)> = per_h.iter().map(|(k, v)| (*k, if *k == "delta" { v / HOUR } else { v / (HOUR * HOUR) })).collect();
    p.extend([("omega", 0.0), ("x0", 0.0), ("v0", 0.0), ("scale", 0.02), ("offset", 0.01)]);
    let pts = curve("duffing", &values(&p), &Values::new(), 10.0 * HOUR, HOUR, 1.0);
    let spec = plot(linear_axis(10.0, 5), linear_axis(0.03, 3), vec![series("700 MPa", [150, 40, 160], pts)], true);
    let figure = Figure {
        id: "fig5",
        caption: "Strain response of AMAG-183 at 700 MPa with the Duffing reconstruction.".into(),
        spec,
        time_unit: "h",
        strain_unit: "1",
        with_plot_area: false,
    };
    let reply = json!({
        "material": "AMAG-183 metallic glass",
        "category": "metallic_glass",
        "temperature": "573.15 K",
        "stress": "700 MPa",
        "model": {
            "name": "duffing",
            "equation": "d^2(x)/d(t)^2 + delta*d(x)/d(t) + alpha*x + beta*x^3 = gamma*cos(omega*t)",
            "bindings": [
                {"symbol": "x", "role": "strain", "unit": "1"},
                {"symbol": "t", "role": "time", "unit": "s"},
                {"symbol": "delta", "role": "parameter", "unit": "1/s"},
                {"symbol": "alpha", "role": "parameter", "unit": "1/s^2"},
                {"symbol": "beta", "role": "parameter", "unit": "1/s^2"},
                {"symbol": "gamma", "role": "parameter", "unit": "1/s^2"},
                {"symbol": "omega", "role": "parameter", "unit": "1/s"}
            ],
            "parameters": params_json(&[
                ("delta", 3.0, "1/h"),
                ("alpha", 1.0, "1/h^2"),
                ("beta", 0.5, "1/h^2"),
                ("gamma", 1.0, "1/h^2"),
                ("omega", 0.0, "1/h"),
                ("x0", 0.0, "1"),
                ("v0", 0.0, "1/h"),
                ("scale", 0.02, "1"),
                ("offset", 0.01, "1")
            ])
        },
        "figure": figure_reply(&figure),
        "text_locations": ["page 1, eq. 2"]
    });
    Doc {
        id: "doc3",
        doi: "10.5555/demo.2023.207",
        title: "Anelastic creep of a Zr-based metallic glass described by a Duffing oscillator",
        authors: vec!["M. Sato", "P. Weber"],
        year: 2023,
        pages: vec![
            "Creep of AMAG-183 metallic glass was measured at 573.15 K under 700 MPa. The strain is modelled as a \
             non-linear Duffing oscillator d^2(x)/d(t)^2 + delta*d(x)/d(t) + alpha*x + beta*x^3 = gamma*cos(omega*t) \
             with delta = 3 1/h, alpha = 1 1/h^2, beta = 0.5 1/h^2, gamma = 1 1/h^2 and omega = 0, mapped to strain as \
             0.01 + 0.02 x."
                .into(),
        ],
        figure: Some(figure),
        screen: screen_reply(true, true, "Experimental creep with an explicit ODE model."),
        parse: Some(vec![reply]),
    }
}

fn doc4() -> Doc {
    let (a, n, q_kj, eps0) = (11.8, 4.0, 150.0, 0.002);
    let q = standardize(q_kj, "kJ/mol").expect("known unit").value;
    assert!((q - 150_000.0).abs() < 1e-6, "kJ/mol converts to J/mol");
    let p = values(&[("A", a), ("n", n), ("Q", q), ("eps0", eps0)]);
    let cond = values(&[("sigma", 80.0), ("T", 473.15)]);
    let pts: Vec<(f64, f64)> = curve("norton", &p, &cond, 1000.0 * HOUR, HOUR, 1.0)
        .into_iter()
        .filter(|(t, _)| *t > 0.0)
        .collect();
    let y = AxisSpec {
        min: 1e-3,
        max: 1e-1,
        scale: Scale::Log10,
        ticks: vec![1e-3, 1e-2, 1e-1],
    };
    let spec = plot(linear_axis(1000.0, 4), y, vec![series("80 MPa", [230, 120, 0], pts)], true);
    let figure = Figure {
        id: "fig1",
        caption: "Secondary creep of the aluminium alloy at 200 °C and 80 MPa (log strain axis).".into(),
        spec,
        time_unit: "h",
        strain_unit: "1",
        with_plot_area: true,
    };
    let reply = json!({
        "material": "AA2618-T61",
        "category": "aluminum_alloy",
        "temperature": "200 °C",
        "stress": "80 MPa",
        "model": {
            "name": "norton",
            "equation": "d(eps)/d(t) = A*sigma^n*exp(-Q/(R*T))",
            "bindings": [
                {"symbol": "eps", "role": "strain", "unit": "1"},
                {"symbol": "t", "role": "time", "unit": "s"},
                {"symbol": "A", "role": "parameter", "unit": "MPa^-n*s^-1"},
                {"symbol": "sigma", "role": "stress", "unit": "MPa"},
                {"symbol": "n", "role": "parameter", "unit": "1"},
                {"symbol": "Q", "role": "activation_energy", "unit": "J/mol"},
                {"symbol": "R", "role": "gas_constant", "unit": "J/(mol*K)"},
                {"symbol": "T", "role": "temperature", "unit": "K"}
            ],
            "parameters": params_json(&[("A", a, "MPa^-n*s^-1"), ("n", n, "1"), ("Q", q_kj, "kJ/mol"), ("eps0", eps0, "1")])
        },
        "figure": figure_reply(&figure),
        "text_locations": ["page 1, eq. 1", "page 1, table 2"]
    });
    Doc {
        id: "doc4",
        doi: "10.5555/demo.2017.033",
        title: "Steady-state creep of AA2618 aluminium alloy",
        authors: vec!["T. Nguyen", "A. Kowalski", "S. Meyer"],
        year: 2017,
        pages: vec![format!(
            "Tensile creep tests on AA2618-T61 at 200 °C and 80 MPa. The minimum creep rate obeys the Norton law \
             d(eps)/d(t) = A*sigma^n*exp(-Q/(R*T)) with A = {a}, n = {n}, Q = {q_kj} kJ/mol and an instantaneous \
             strain of {eps0}."
        )],
        figure: Some(figure),
        screen: screen_reply(true, true, "Creep tests with a Norton power law."),
        parse: Some(vec![reply]),
    }
}

fn doc5() -> Doc {
    // The reported amplitude disagrees with the plotted curve.
    let truth = [("eps0", 0.002), ("a", 0.01), ("b", 1.0 / HOUR)];
    let pts = curve("logarithmic", &values(&truth), &Values::new(), 500.0 * HOUR, HOUR, 0.01);
    let claimed_a = claimed_amplitude(&truth, 0.7);
    let spec = plot(linear_axis(500.0, 5), linear_axis(8.0, 4), vec![series("10 MPa", [0, 150, 150], pts)], false);
    let figure = Figure {
        id: "fig4",
        caption: "Compressive creep of HDPE at 23 °C and 10 MPa.".into(),
        spec,
        time_unit: "h",
        strain_unit: "%",
        with_plot_area: true,
    };
    let reply = json!({
        "material": "HDPE",
        "category": "polymer",
        "temperature": "23 degC",
        "stress": "10 MPa",
        "model": {
            "name": "logarithmic",
            "equation": "eps = eps0 + a*ln(1 + b*t)",
            "bindings": [
                {"symbol": "eps", "role": "strain", "unit": "1"},
                {"symbol": "t", "role": "time", "unit": "s"},
                {"symbol": "eps0", "role": "parameter", "unit": "1"},
                {"symbol": "a", "role": "parameter", "unit": "1"},
                {"symbol": "b", "role": "parameter", "unit": "1/s"}
            ],
            "parameters": params_json(&[("eps0", 0.002, "1"), ("a", claimed_a, "1"), ("b", 1.0, "1/h")])
        },
        "figure": figure_reply(&figure),
        "text_locations": ["page 1, eq. 3"]
    });
    Doc {
        id: "doc5",
        doi: "10.5555/demo.2015.090",
        title: "Logarithmic creep of high-density polyethylene",
        authors: vec!["E. Lindqvist"],
        year: 2015,
        pages: vec![format!(
            "Creep compliance of HDPE was measured at 23 °C under 10 MPa for 500 h. The strain follows \
             eps = eps0 + a*ln(1 + b*t) with eps0 = 0.002, a = {claimed_a:.5} and b = 1 1/h."
        )],
        figure: Some(figure),
        screen: screen_reply(true, true, "Polymer creep data with a logarithmic law."),
        parse: Some(vec![reply]),
    }
}

/// Amplitude whose curve reaches the given R² against the true one.
fn claimed_amplitude(truth: &[(&str, f64)], target_r2: f64) -> f64 {
    let catalog = Catalog::builtin();
    let m = catalog.get("logarithmic").unwrap();
    let times: Vec<f64> = (0..=200).map(|i| 500.0 * HOUR * i as f64 / 200.0).collect();
    let obs = evaluate(m, &values(truth), &Values::new(), &times).unwrap();
    let r2 = |a: f64| {
        let mut p = values(truth);
        p.insert("a".into(), a);
        r_squared(&obs, &evaluate(m, &p, &Values::new(), &times).unwrap()).unwrap()
    };
    let (mut lo, mut hi) = (0.01, 0.03);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if r2(mid) > target_r2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * 1e5).round() / 1e5
}

fn doc6() -> Doc {
    Doc {
        id: "doc6",
        doi: "10.5555/demo.2020.118",
        title: "Fatigue crack growth in welded structural joints",
        authors: vec!["J. Park"],
        year: 2020,
        pages: vec![
            "Constant amplitude fatigue tests of fillet welded joints were analysed with the Paris law. Crack growth \
             rates were measured with the potential drop method."
                .into(),
        ],
        figure: None,
        screen: screen_reply(true, false, "Fatigue study; no time-dependent deformation law."),
        parse: None,
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).expect("create dir");
    }
    fs::write(path, bytes).expect("write file");
}

fn main() {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo"));
    let docs = vec![doc1(), doc2(), doc3(), doc4(), doc5(), doc6()];
    let mut manifest = String::new();
    let mut replies = String::new();
    let mut truth = String::from("bundle_id,relevant\n");
    for d in &docs {
        let mut pages = Vec::new();
        for (i, text) in d.pages.iter().enumerate() {
            let rel = format!("{}/page{}.txt", d.id, i + 1);
            write(&out.join(&rel), format!("{text}\n"));
            pages.push(rel);
        }
        let mut figures = Vec::new();
        if let Some(f) = &d.figure {
            let (img, _) = render_synthetic_plot(&f.spec).expect("valid plot");
            let rel = format!("{}/{}.png", d.id, f.id);
            fs::create_dir_all(out.join(d.id)).expect("create dir");
            img.save(out.join(&rel)).expect("write png");
            figures.push(json!({"id": f.id, "image_path": rel, "caption": f.caption}));
        }
        let entry = json!({
            "id": d.id, "doi": d.doi, "title": d.title, "authors": d.authors, "year": d.year,
            "pages": pages, "figures": figures,
        });
        manifest.push_str(&format!("{entry}\n"));
        let screen = match &d.screen {
            Value::Array(list) => list.clone(),
            one => vec![one.clone()],
        };
        replies.push_str(&format!("{}\n", json!({"skill": "domain_filter", "key": d.id, "responses": screen})));
        if let Some(p) = &d.parse {
            replies.push_str(&format!("{}\n", json!({"skill": "multimodal_parser", "key": d.id, "responses": p})));
        }
        truth.push_str(&format!("{},{}\n", d.id, u8::from(d.parse.is_some())));
    }
    let nav = json!({
        "skill": "bibliographic_navigator",
        "key": "creep of stainless steel",
        "responses": [{"query": "creep AND (steel OR X46Cr13 OR \"stainless steel\")"}]
    });
    replies.push_str(&format!("{nav}\n"));
    write(&out.join("manifest.jsonl"), manifest);
    write(&out.join("replies.jsonl"), replies);
    write(&out.join("truth.csv"), truth);
    write(
        &out.join("config.toml"),
        "max_in_flight = 3\n\n[thresholds]\nvalid = 0.9\nreview = 0.5\n\n[backend]\nscripted_path = \"replies.jsonl\"\n",
    );
    println!("wrote demo corpus to {}", out.display());
}
