//! Prediction against a per-tree oracle, interval properties, and persistence.

use std::io::Write;

use bartm::data::{augment, ingest_csv, write_csv, Dataset, IngestOptions};
use bartm::mdm::{generate_surface, GeneratedModelSpec, ScenarioPreset};
use bartm::model::Hyperparams;
use bartm::posterior::{predict, predict_with, quantile, summarize, PointEstimate};
use bartm::sampler::{run_chain, PosteriorDraws};
use proptest::prelude::*;

fn masked_fit() -> (Dataset, PosteriorDraws) {
    let d = generate_surface(&GeneratedModelSpec {
        n: 150,
        seed: 12,
        ..Default::default()
    })
    .unwrap();
    let d = ScenarioPreset::builtin("pattern-mixture").unwrap().apply(&d, 0, 3).unwrap();
    let hyper = Hyperparams {
        m: 10,
        n_burn: 50,
        n_post: 40,
        ..Default::default()
    };
    let draws = run_chain(&augment(&d), &hyper, 6).unwrap();
    (d, draws)
}

#[test]
fn per_draw_output_is_sum_of_routed_leaves() {
    let (d, draws) = masked_fit();
    let results = predict(&draws, &d, 0.9).unwrap();
    assert!(!draws.schema.dummy_map.is_empty());
    for (i, r) in results.iter().enumerate().take(40) {
        // Augmented row built by hand: base values, then one indicator per flagged column.
        let mut row = d.row(i);
        for &j in &draws.schema.dummy_map {
            row.push(Some(if d.is_missing(i, j) { 1.0 } else { 0.0 }));
        }
        for (k, draw) in draws.draws.iter().enumerate() {
            let scaled: f64 = draw.trees.iter().map(|t| t.route(&row).unwrap()).sum();
            let (lo, hi) = (draws.transform.y_min, draws.transform.y_max);
            let expected = lo + (scaled + 0.5) * (hi - lo);
            assert!((r.per_draw[k] - expected).abs() < 1e-9 * (1.0 + expected.abs()));
        }
        let mean = r.per_draw.iter().sum::<f64>() / r.per_draw.len() as f64;
        assert_eq!(r.point, mean);
        assert_eq!(r.ci_lower, quantile(&r.per_draw, (1.0 - 0.9) / 2.0));
        assert_eq!(r.ci_upper, quantile(&r.per_draw, (1.0 + 0.9) / 2.0));
    }
}

#[test]
fn intervals_nest_and_median_option_works() {
    let (d, draws) = masked_fit();
    let wide = predict(&draws, &d, 0.95).unwrap();
    let narrow = predict_with(&draws, &d, 0.5, PointEstimate::Median).unwrap();
    for (w, n) in wide.iter().zip(&narrow) {
        assert!(w.ci_lower <= n.ci_lower && n.ci_upper <= w.ci_upper);
        assert_eq!(n.point, quantile(&n.per_draw, 0.5));
    }
    assert!(predict(&draws, &d, 1.5).is_err());
}

#[test]
fn schema_mismatch_is_rejected() {
    let (d, draws) = masked_fit();
    let wrong = Dataset::complete(&[vec![0.0, 1.0]], vec![0.0], vec!["X1".into(), "X2".into()]).unwrap();
    assert!(predict(&draws, &wrong, 0.9).is_err());
    let renamed = Dataset::new(vec![d.row(0)], vec![0.0], vec!["a".into(), "b".into(), "c".into()]).unwrap();
    assert!(predict(&draws, &renamed, 0.9).is_err());
}

#[test]
fn persisted_model_predicts_identically() {
    let (d, draws) = masked_fit();
    let json = serde_json::to_string(&draws).unwrap();
    let back: PosteriorDraws = serde_json::from_str(&json).unwrap();
    assert_eq!(back, draws);
    assert_eq!(predict(&back, &d, 0.9).unwrap(), predict(&draws, &d, 0.9).unwrap());
}

#[test]
fn csv_round_trip_preserves_mask_and_values() {
    let (d, _) = masked_fit();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let mut file = std::fs::File::create(&path).unwrap();
    write_csv(&d, "y", "NA", &mut file).unwrap();
    file.flush().unwrap();
    let back = ingest_csv(&path, &IngestOptions::new("y")).unwrap();
    assert_eq!(back.dropped_rows, 0);
    let b = back.dataset;
    assert_eq!(b.n_rows(), d.n_rows());
    for i in 0..d.n_rows() {
        assert_eq!(b.row(i), d.row(i));
        assert_eq!(b.response()[i], d.response()[i]);
    }
}

proptest! {
    #[test]
    fn quantile_sandwich(values in prop::collection::vec(-1e3f64..1e3, 1..200), a in 0.01f64..0.99, b in 0.01f64..0.99) {
        let (inner, outer) = if a < b { (a, b) } else { (b, a) };
        let i = summarize(values.clone(), inner, PointEstimate::Mean).unwrap();
        let o = summarize(values, outer, PointEstimate::Mean).unwrap();
        prop_assert!(o.ci_lower <= i.ci_lower && i.ci_upper <= o.ci_upper);
        prop_assert!(o.ci_lower <= o.ci_upper);
    }

    #[test]
    fn quantile_is_monotone_and_bounded(values in prop::collection::vec(-1e3f64..1e3, 1..100), p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let (lo, hi) = if p < q { (p, q) } else { (q, p) };
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(quantile(&values, lo) <= quantile(&values, hi));
        prop_assert!(min <= quantile(&values, lo) && quantile(&values, hi) <= max);
    }
}
