//! Data generation and missingness mechanisms against analytic and Monte Carlo oracles.

use bartm::data::Dataset;
use bartm::mdm::{
    apply_pattern_mixture, generate_surface, inject_missingness, missingness_probabilities, response_surface, standard_normal_cdf,
    GeneratedModelSpec, MdmSpec, PatternMixtureSpec, ProbitScaling, ScenarioPreset, Term,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn surface(n: usize, seed: u64) -> Dataset {
    generate_surface(&GeneratedModelSpec {
        n,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn column(d: &Dataset, j: usize) -> Vec<f64> {
    (0..d.n_rows()).map(|i| d.latent(i, j)).collect()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn rate_and_se(flags: impl Iterator<Item = bool>) -> (f64, f64) {
    let v: Vec<bool> = flags.collect();
    let p = v.iter().filter(|&&b| b).count() as f64 / v.len() as f64;
    (p, (p * (1.0 - p) / v.len() as f64).sqrt().max(1e-6))
}

#[test]
fn sample_correlations_match_design() {
    let d = surface(500, 1);
    let (x1, x2, x3) = (column(&d, 0), column(&d, 1), column(&d, 2));
    assert!((correlation(&x1, &x2) - 0.2).abs() < 0.1);
    assert!((correlation(&x2, &x3) - 0.2).abs() < 0.1);
    assert!((correlation(&x1, &x3) - 0.4).abs() < 0.1);
}

#[test]
fn surface_mean_matches_analytic_moments() {
    // E[x1 + x2 + 2 x3] = 0, E[-x1^2 + x2^2] = 0, E[x1 x2] = rho1.
    let d = surface(1_000_000, 2);
    let g: Vec<f64> = (0..d.n_rows())
        .map(|i| response_surface([d.latent(i, 0), d.latent(i, 1), d.latent(i, 2)]))
        .collect();
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    let sd = (g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - 0.2).abs() < 3.0 * sd / n.sqrt(), "mean {mean}");
}

#[test]
fn non_positive_definite_covariance_is_rejected() {
    let spec = GeneratedModelSpec {
        rho1: 0.9,
        rho2: -0.9,
        ..Default::default()
    };
    assert!(generate_surface(&spec).is_err());
}

#[test]
fn constant_probit_rate() {
    let d = surface(1_000_000, 3);
    let spec = MdmSpec::Mar {
        target: "X3".into(),
        gamma0: -3.0,
        gamma1: 0.0,
        terms: vec![Term::new("X1", 1), Term::new("X2", 2)],
        scaling: ProbitScaling::None,
    };
    let out = inject_missingness(&d, &[spec], 9).unwrap();
    let (rate, se) = rate_and_se((0..out.n_rows()).map(|i| out.is_missing(i, 2)));
    let target = standard_normal_cdf(-3.0);
    assert!((rate - target).abs() < 3.0 * se, "rate {rate}, target {target}");
}

#[test]
fn mcar_row_rate_equals_gamma() {
    let d = surface(100_000, 4);
    let spec = MdmSpec::Mcar {
        targets: vec!["X1".into()],
        rate: 0.33,
    };
    let out = inject_missingness(&d, &[spec], 1).unwrap();
    let (rate, se) = rate_and_se((0..out.n_rows()).map(|i| out.row_has_missing(i)));
    assert!((rate - 0.33).abs() < 3.0 * se);
}

#[test]
fn nmar_rate_matches_probit_integral() {
    // Independent Monte Carlo of E[Phi(-3 + 2 X1^2 + 2 X2)] from fresh covariate draws.
    let spec = GeneratedModelSpec::default();
    let c = spec.covariance();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let m = 400_000;
    let l11 = c[1][1] - c[0][1] * c[0][1];
    let probs: Vec<f64> = (0..m)
        .map(|_| {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let x1 = z1;
            let x2 = c[0][1] * z1 + l11.sqrt() * z2;
            standard_normal_cdf(-3.0 + 2.0 * x1 * x1 + 2.0 * x2)
        })
        .collect();
    let oracle = probs.iter().sum::<f64>() / m as f64;
    let oracle_se = (probs.iter().map(|p| (p - oracle).powi(2)).sum::<f64>() / (m as f64 - 1.0) / m as f64).sqrt();

    let d = surface(100_000, 5);
    let preset = ScenarioPreset::builtin("selection-nmar").unwrap();
    let level = preset.params.levels.iter().position(|&g| g == 2.0).unwrap();
    let out = inject_missingness(&d, &preset.specs_for_level(level).unwrap(), 2).unwrap();
    let (rate, se) = rate_and_se((0..out.n_rows()).map(|i| out.row_has_missing(i)));
    let both = (se * se + oracle_se * oracle_se).sqrt();
    assert!((rate - oracle).abs() < 3.0 * both, "rate {rate}, oracle {oracle}");
}

#[test]
fn probit_inputs_use_latent_values() {
    // A self-referencing formula must see the value even after it has been masked.
    let d = surface(5_000, 6);
    let mask_first = MdmSpec::Mcar {
        targets: vec!["X2".into()],
        rate: 0.9,
    };
    let nmar = MdmSpec::Nmar {
        target: "X2".into(),
        gamma0: -1.0,
        gamma1: 1.0,
        terms: vec![Term::new("X2", 1)],
        scaling: ProbitScaling::None,
    };
    let masked = inject_missingness(&d, &[mask_first], 3).unwrap();
    assert!(masked.column_missing_count(1) > 4_000);
    assert_eq!(
        missingness_probabilities(&masked, &nmar).unwrap(),
        missingness_probabilities(&d, &nmar).unwrap()
    );
}

#[test]
fn injection_is_seed_deterministic_and_keeps_latent_values() {
    let d = surface(1_000, 7);
    let preset = ScenarioPreset::builtin("selection-mar").unwrap();
    let specs = preset.specs_for_level(4).unwrap();
    let a = inject_missingness(&d, &specs, 10).unwrap();
    let b = inject_missingness(&d, &specs, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, inject_missingness(&d, &specs, 11).unwrap());
    assert_eq!(a.unmasked(), d);
}

#[test]
fn pattern_mixture_without_triggers_is_identity() {
    let d = surface(100, 8);
    let spec = PatternMixtureSpec {
        trigger: "X3".into(),
        mu_b: 10.0,
        sigma_b_sq: 0.5,
        sign: 1.0,
    };
    assert_eq!(apply_pattern_mixture(&d, &spec, 1).unwrap(), d);
}

#[test]
fn pattern_mixture_group_gap_matches_oracle() {
    let n = 100_000;
    let d = surface(n, 9);
    let preset = ScenarioPreset::builtin("pattern-mixture").unwrap();
    let out = preset.apply(&d, 0, 4).unwrap();
    let g: Vec<f64> = (0..n)
        .map(|i| response_surface([d.latent(i, 0), d.latent(i, 1), d.latent(i, 2)]))
        .collect();
    let group_mean = |v: &[f64], flag: bool| {
        let sel: Vec<f64> = (0..n).filter(|&i| out.is_missing(i, 2) == flag).map(|i| v[i]).collect();
        let m = sel.iter().sum::<f64>() / sel.len() as f64;
        let var = sel.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (sel.len() - 1) as f64;
        (m, var / sel.len() as f64)
    };
    let (y1, v1) = group_mean(out.response(), true);
    let (y0, v0) = group_mean(out.response(), false);
    let (g1, _) = group_mean(&g, true);
    let (g0, _) = group_mean(&g, false);
    let gap = y1 - y0;
    let expected = 10.0 + g1 - g0;
    assert!((gap - expected).abs() < 3.0 * (v1 + v0).sqrt(), "gap {gap}, expected {expected}");
}

#[test]
fn bhd_pattern_mixture_offsets_are_range_relative() {
    let preset = ScenarioPreset::builtin("bhd-pattern-mixture").unwrap();
    let y = [5.0, 50.0, 20.0];
    let specs: Vec<PatternMixtureSpec> = preset.params.pattern_mixture.iter().map(|t| t.resolve(&y)).collect();
    assert_eq!(specs.len(), 2);
    assert_eq!(specs[0].trigger, "rm");
    assert_eq!(specs[0].mu_b, 11.25);
    assert_eq!(specs[0].sigma_b_sq, (11.25f64 / 4.0).powi(2));
    assert_eq!(specs[1].trigger, "crim");
    assert_eq!(specs[1].sign, -1.0);
}

#[test]
fn presets_ship_printed_grids() {
    let levels = |name: &str| ScenarioPreset::builtin(name).unwrap().params.levels;
    assert_eq!(levels("selection-mcar"), vec![0.0, 0.03, 0.07, 0.11, 0.16, 0.26, 0.33]);
    assert_eq!(levels("selection-mar"), vec![0.0, 0.8, 1.4, 2.0, 2.7, 4.0, 7.0, 30.0]);
    assert_eq!(levels("selection-nmar"), vec![0.0, 0.8, 1.4, 2.0, 2.7, 4.0, 7.0, 30.0]);
    assert_eq!(levels("bhd-mcar"), vec![0.0, 0.02, 0.04, 0.07, 0.10, 0.13, 0.17]);
    assert_eq!(levels("bhd-mar"), vec![0.0, 1.3, 1.5, 1.7, 2.1, 2.6, 3.1, 3.8]);
    assert_eq!(levels("bhd-pattern-mixture"), levels("bhd-mar"));
    assert_eq!(levels("bhd-nmar"), vec![0.0, 3.3, 3.6, 3.9, 4.1, 4.3, 4.6, 4.8]);
}

#[test]
fn unknown_formula_column_is_an_error() {
    let d = surface(10, 1);
    let spec = MdmSpec::Nmar {
        target: "X2".into(),
        gamma0: 0.0,
        gamma1: 1.0,
        terms: vec![Term::new("nope", 1)],
        scaling: ProbitScaling::None,
    };
    assert!(inject_missingness(&d, &[spec], 1).is_err());
}
