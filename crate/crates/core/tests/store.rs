mod common;

use common::{paper, record};
use creepdb::store::{
    CreepRecord, ExportFormat, Histogram, RecordFilter, ReviewAction, ReviewKind, StatsConfig, Store, StoreError,
    CSV_HEADER,
};
use creepdb::validator::Verdict;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MATERIALS: [&str; 5] = ["X46Cr13", "Inconel 718", "HDPE", "AA2618", "inconel 625"];
const CATEGORIES: [&str; 4] = ["steel_iron", "nickel_alloy", "polymer", "aluminum_alloy"];
const VERDICTS: [Verdict; 3] = [Verdict::Valid, Verdict::ValidTextOnly, Verdict::Flagged];

fn random_store(rng: &mut impl Rng, n: usize) -> (Store, Vec<CreepRecord>) {
    let mut s = Store::open_in_memory().unwrap();
    for d in 0..7 {
        s.insert_paper(&paper(&format!("10.5/{d}"))).unwrap();
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut r = record(
            &format!("10.5/{}", rng.gen_range(0..7)),
            MATERIALS[rng.gen_range(0..MATERIALS.len())],
            CATEGORIES[rng.gen_range(0..CATEGORIES.len())],
            // Coarse grid so range bounds often hit values exactly.
            rng.gen_range(0..40) as f64 * 25.0 + 273.15,
            rng.gen_range(0..60) as f64 * 5.0,
            VERDICTS[rng.gen_range(0..VERDICTS.len())],
        );
        r.record_id = s.insert_record(&r).unwrap();
        out.push(r);
    }
    (s, out)
}

fn random_filter(rng: &mut impl Rng) -> RecordFilter {
    let range = |rng: &mut dyn rand::RngCore, lo: f64, step: f64, n: i32| -> Option<(f64, f64)> {
        if rng.gen_bool(0.5) {
            return None;
        }
        let a = lo + rng.gen_range(0..n) as f64 * step;
        let b = a + rng.gen_range(0..n) as f64 * step;
        Some((a, b))
    };
    RecordFilter {
        material: rng.gen_bool(0.4).then(|| ["inconel", "HD", "x46", "2618", "zzz"][rng.gen_range(0..5)].to_string()),
        category: rng.gen_bool(0.4).then(|| CATEGORIES[rng.gen_range(0..CATEGORIES.len())].to_string()),
        temperature_k: range(rng, 273.15, 25.0, 40),
        stress_mpa: range(rng, 0.0, 5.0, 60),
        verdicts: rng
            .gen_bool(0.4)
            .then(|| VERDICTS.iter().copied().filter(|_| rng.gen_bool(0.5)).collect()),
    }
}

fn brute(records: &[CreepRecord], f: &RecordFilter) -> Vec<i64> {
    let within = |v: f64, r: Option<(f64, f64)>| r.is_none_or(|(lo, hi)| lo <= v && v <= hi);
    let mut hits: Vec<&CreepRecord> = records
        .iter()
        .filter(|r| {
            f.material
                .as_ref()
                .is_none_or(|m| r.material.to_lowercase().contains(&m.to_lowercase()))
                && f.category.as_ref().is_none_or(|c| &r.category == c)
                && within(r.temperature_k, f.temperature_k)
                && within(r.stress_mpa, f.stress_mpa)
                && f.verdicts.as_ref().is_none_or(|vs| vs.contains(&r.verdict))
        })
        .collect();
    hits.sort_by(|a, b| a.doi.cmp(&b.doi).then(a.record_id.cmp(&b.record_id)));
    hits.into_iter().map(|r| r.record_id).collect()
}

#[test]
fn conjunctive_filter_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (store, records) = random_store(&mut rng, 1000);
    for i in 0..150 {
        let f = random_filter(&mut rng);
        let got: Vec<i64> = store.query(&f).unwrap().iter().map(|r| r.record_id).collect();
        assert_eq!(got, brute(&records, &f), "{f:?}");
        if i % 10 == 0 {
            let csv = store.export(&f, ExportFormat::Csv).unwrap();
            assert_eq!(csv.iter().filter(|b| **b == b'\n').count(), got.len() + 1);
        }
    }
}

#[test]
fn histograms_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (store, records) = random_store(&mut rng, 300);
    let config = StatsConfig::default();
    let stats = store.stats(&RecordFilter::default(), &config).unwrap();
    let count = |edges: &[f64], vals: Vec<f64>| -> (Vec<usize>, usize) {
        let n = edges.len() - 1;
        let mut counts = vec![0; n];
        let mut outside = 0;
        for v in vals {
            match (0..n).find(|&i| edges[i] <= v && (v < edges[i + 1] || (i == n - 1 && v == edges[n]))) {
                Some(i) => counts[i] += 1,
                None => outside += 1,
            }
        }
        (counts, outside)
    };
    let (tc, to) = count(&config.temperature_edges, records.iter().map(|r| r.temperature_k).collect());
    assert_eq!((stats.temperature_histogram.counts.clone(), stats.temperature_histogram.outside), (tc, to));
    let (sc, so) = count(&config.stress_edges, records.iter().map(|r| r.stress_mpa).collect());
    assert_eq!((stats.stress_histogram.counts.clone(), stats.stress_histogram.outside), (sc, so));
    assert_eq!(stats.total, 300);
    let share_sum: f64 = stats.category_shares.values().sum();
    assert!((share_sum - 1.0).abs() < 1e-12);
    let scatter_points: usize = stats.scatter.values().map(Vec::len).sum();
    assert_eq!(scatter_points, 300);
}

proptest! {
    #[test]
    fn histogram_conserves_values(vals in prop::collection::vec(-10.0f64..120.0, 0..200)) {
        let edges = [0.0, 10.0, 50.0, 100.0];
        let h = Histogram::build(&edges, vals.iter().copied());
        prop_assert_eq!(h.counts.iter().sum::<usize>() + h.outside, vals.len());
        let top = vals.iter().filter(|v| (50.0..=100.0).contains(*v)).count();
        prop_assert_eq!(h.counts[2], top);
    }
}

#[derive(Debug, Clone)]
enum Op {
    Paper(u8),
    Record(u8, bool),
    Review(usize, bool),
}

fn arb_ops() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        prop_oneof![
            (0u8..5).prop_map(Op::Paper),
            (0u8..5, any::<bool>()).prop_map(|(d, f)| Op::Record(d, f)),
            (0usize..20, any::<bool>()).prop_map(|(i, a)| Op::Review(i, a)),
        ],
        1..40,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn referential_integrity_under_interleavings(ops in arb_ops()) {
        let mut s = Store::open_in_memory().unwrap();
        let mut papers = std::collections::BTreeSet::new();
        let mut live: Vec<(i64, Verdict)> = Vec::new();
        let mut reviewed = 0;
        for op in ops {
            match op {
                Op::Paper(d) => {
                    let r = s.insert_paper(&paper(&format!("10.7/{d}")));
                    prop_assert_eq!(r.is_ok(), papers.insert(d));
                }
                Op::Record(d, flagged) => {
                    let v = if flagged { Verdict::Flagged } else { Verdict::Valid };
                    let r = s.insert_record(&record(&format!("10.7/{d}"), "M", "other", 500.0, 10.0, v));
                    match r {
                        Ok(id) => {
                            prop_assert!(papers.contains(&d));
                            live.push((id, v));
                        }
                        Err(e) => {
                            prop_assert!(!papers.contains(&d));
                            prop_assert!(matches!(e, StoreError::UnknownDoi(_)), "{e:?}");
                        }
                    }
                }
                Op::Review(i, approve) => {
                    let Some(&(id, v)) = live.get(i) else { continue };
                    let action = ReviewAction {
                        record_id: id,
                        action: if approve { ReviewKind::Approve } else { ReviewKind::Reject },
                        note: String::new(),
                        timestamp: 1,
                    };
                    match s.review(&action) {
                        Ok(rec) => {
                            prop_assert_eq!(v, Verdict::Flagged);
                            reviewed += 1;
                            if approve {
                                prop_assert_eq!(rec.verdict, Verdict::Valid);
                                live[i].1 = Verdict::Valid;
                            } else {
                                live[i].1 = Verdict::Rejected;
                            }
                        }
                        Err(StoreError::NotReviewable { .. }) => prop_assert_ne!(v, Verdict::Flagged),
                        Err(StoreError::UnknownRecord(_)) => prop_assert_eq!(v, Verdict::Rejected),
                        Err(e) => prop_assert!(false, "unexpected {e:?}"),
                    }
                }
            }
            prop_assert!(s.orphan_records().unwrap().is_empty());
        }
        let expected_live = live.iter().filter(|(_, v)| *v != Verdict::Rejected).count();
        prop_assert_eq!(s.count_records().unwrap(), expected_live);
        prop_assert_eq!(s.audit_log().unwrap().len(), reviewed);
    }
}

#[test]
fn data_export_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (store, _) = random_store(&mut rng, 120);
    let all = RecordFilter::default();
    let bytes = store.export(&all, ExportFormat::Data).unwrap();
    let mut fresh = Store::open_in_memory().unwrap();
    assert_eq!(fresh.import_data(&bytes).unwrap(), 120);
    assert_eq!(fresh.export(&all, ExportFormat::Data).unwrap(), bytes);
    assert_eq!(
        fresh.export(&all, ExportFormat::Csv).unwrap(),
        store.export(&all, ExportFormat::Csv).unwrap()
    );
    // Importing twice collides on record ids.
    assert!(matches!(fresh.import_data(&bytes), Err(StoreError::ConstraintViolation(_))));
}

#[test]
fn csv_layout_and_curve_files() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (store, _) = random_store(&mut rng, 5);
    let csv = String::from_utf8(store.export(&RecordFilter::default(), ExportFormat::Csv).unwrap()).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER.join(","));
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(store.export_to_dir(&RecordFilter::default(), dir.path()).unwrap(), 5);
    let exported = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(exported, csv);
    let curves = std::fs::read_dir(dir.path().join("curves")).unwrap().count();
    assert_eq!(curves, 5);
    let empty = Store::open_in_memory().unwrap();
    let header_only = empty.export(&RecordFilter::default(), ExportFormat::Csv).unwrap();
    assert_eq!(String::from_utf8(header_only).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
}

#[test]
fn invalid_filters_name_the_field() {
    let s = Store::open_in_memory().unwrap();
    let f = RecordFilter {
        stress_mpa: Some((10.0, 1.0)),
        ..Default::default()
    };
    match s.query(&f) {
        Err(StoreError::InvalidFilter { field, .. }) => assert_eq!(field, "stress_MPa"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn store_persists_across_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("db.sqlite");
    {
        let mut s = Store::open(&path).unwrap();
        s.insert_paper(&paper("10.1/a")).unwrap();
        s.insert_record(&record("10.1/a", "M", "rock", 300.0, 5.0, Verdict::Valid)).unwrap();
    }
    let s = Store::open(&path).unwrap();
    assert_eq!(s.count_records().unwrap(), 1);
    assert_eq!(s.papers().unwrap().len(), 1);
}
