//! Mean/mode imputation with training-only statistics.

use bartm::data::{ColumnKind, Dataset};
use bartm::mdm::{generate_surface, inject_missingness, GeneratedModelSpec, MdmSpec};
use bartm_harness::mean_impute;

fn names(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("c{j}")).collect()
}

#[test]
fn complete_data_is_unchanged() {
    let d = Dataset::complete(&[vec![1.0, 2.0], vec![3.0, 4.0]], vec![0.0, 1.0], names(2)).unwrap();
    let (tr, te) = mean_impute(&d, &d).unwrap();
    assert_eq!(tr, d);
    assert_eq!(te, d);
}

#[test]
fn missing_cell_gets_observed_mean() {
    let d = Dataset::new(vec![vec![Some(2.0)], vec![Some(4.0)], vec![None]], vec![0.0; 3], names(1)).unwrap();
    let (tr, _) = mean_impute(&d, &d).unwrap();
    assert_eq!(tr.get(2, 0), Some(3.0));
    assert!(!tr.has_missing());
}

#[test]
fn test_rows_use_training_statistics_only() {
    let train = Dataset::new(vec![vec![Some(1.0)], vec![Some(3.0)]], vec![0.0; 2], names(1)).unwrap();
    let test = Dataset::new(vec![vec![Some(100.0)], vec![None]], vec![0.0; 2], names(1)).unwrap();
    let (_, te) = mean_impute(&train, &test).unwrap();
    assert_eq!(te.get(0, 0), Some(100.0));
    assert_eq!(te.get(1, 0), Some(2.0));
    assert!(!te.has_missing());
}

#[test]
fn nominal_columns_get_the_mode() {
    let d = Dataset::new(
        vec![vec![Some(2.0)], vec![Some(1.0)], vec![Some(2.0)], vec![None]],
        vec![0.0; 4],
        names(1),
    )
    .unwrap()
    .with_column_kinds(vec![ColumnKind::Nominal])
    .unwrap();
    let (tr, _) = mean_impute(&d, &d).unwrap();
    assert_eq!(tr.get(3, 0), Some(2.0));
}

#[test]
fn fully_missing_column_is_filled_with_zero() {
    let d = Dataset::new(vec![vec![Some(5.0), None], vec![Some(6.0), None]], vec![0.0; 2], names(2)).unwrap();
    let (tr, te) = mean_impute(&d, &d).unwrap();
    assert_eq!(tr.get(0, 1), Some(0.0));
    assert_eq!(te.get(1, 1), Some(0.0));
}

#[test]
fn mcar_column_imputations_average_to_observed_mean() {
    let d = generate_surface(&GeneratedModelSpec {
        n: 2_000,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let spec = MdmSpec::Mcar {
        targets: vec!["X2".into()],
        rate: 0.3,
    };
    let masked = inject_missingness(&d, &[spec], 8).unwrap();
    let observed: Vec<f64> = (0..masked.n_rows()).filter_map(|i| masked.get(i, 1)).collect();
    let observed_mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let (tr, _) = mean_impute(&masked, &masked).unwrap();
    let imputed: Vec<f64> = (0..masked.n_rows())
        .filter(|&i| masked.is_missing(i, 1))
        .map(|i| tr.get(i, 1).unwrap())
        .collect();
    assert!(imputed.len() > 400);
    assert!(imputed.iter().all(|&v| v == observed_mean));
    let imputed_mean = imputed.iter().sum::<f64>() / imputed.len() as f64;
    assert!((imputed_mean - observed_mean).abs() <= 1e-12 * observed_mean.abs().max(1.0));
    // Untouched columns and observed cells keep their values.
    for i in 0..masked.n_rows() {
        assert_eq!(tr.get(i, 0), masked.get(i, 0));
        if let Some(v) = masked.get(i, 1) {
            assert_eq!(tr.get(i, 1), Some(v));
        }
    }
}
