//! With the likelihood switched off the chain must target the tree prior.
//! The oracle below samples that prior directly with a naive recursive
//! generator that shares no code with the crate.

use bartm::data::{augment, Dataset};
use bartm::model::Hyperparams;
use bartm::sampler::{Sampler, SamplerOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture() -> (Vec<Vec<Option<f64>>>, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 30;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let a: f64 = rng.random_range(0..6) as f64;
        let b: f64 = rng.random();
        let c = if rng.random_bool(0.3) { None } else { Some(rng.random_range(0..3) as f64) };
        rows.push(vec![Some(a), Some(b), c]);
        y.push(rng.random::<f64>());
    }
    let d = Dataset::new(rows, y, vec!["a".into(), "b".into(), "c".into()]).unwrap();
    let design_rows = augment(&d).as_dataset();
    let full: Vec<Vec<Option<f64>>> = (0..n).map(|i| design_rows.row(i)).collect();
    (full, d)
}

/// Naive draw from the data-dependent prior; returns (depth, leaves).
fn oracle_tree(rows: &[Vec<Option<f64>>], depth: usize, hyper: &Hyperparams, rng: &mut ChaCha8Rng) -> (usize, usize) {
    let p = rows[0].len();
    let mut candidates = Vec::new();
    for j in 0..p {
        let mut vals: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        if vals.len() >= 2 {
            vals.pop();
            candidates.push((j, vals));
        }
    }
    if candidates.is_empty() {
        return (depth, 1);
    }
    let p_split = hyper.alpha * (1.0 + depth as f64).powf(-hyper.beta);
    if !rng.random_bool(p_split) {
        return (depth, 1);
    }
    let (j, vals) = &candidates[rng.random_range(0..candidates.len())];
    let c = vals[rng.random_range(0..vals.len())];
    let missing_left = rng.random_bool(0.5);
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for r in rows {
        let go_left = match r[*j] {
            Some(v) => v <= c,
            None => missing_left,
        };
        if go_left {
            left.push(r.clone());
        } else {
            right.push(r.clone());
        }
    }
    let (dl, ll) = oracle_tree(&left, depth + 1, hyper, rng);
    let (dr, lr) = oracle_tree(&right, depth + 1, hyper, rng);
    (dl.max(dr), ll + lr)
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn batch_means(v: &[f64], batches: usize) -> (f64, f64) {
    let size = v.len() / batches;
    let means: Vec<f64> = v.chunks(size).take(batches).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    mean_se(&means)
}

#[test]
fn prior_only_chain_matches_direct_prior_sampling() {
    let (rows, d) = fixture();
    let hyper = Hyperparams {
        m: 1,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let oracle: Vec<(usize, usize)> = (0..100_000).map(|_| oracle_tree(&rows, 0, &hyper, &mut rng)).collect();

    let aug = augment(&d);
    let x = aug.design();
    let options = SamplerOptions {
        use_likelihood: false,
        check_residuals: false,
    };
    let sampler = Sampler::new(&x, d.response(), hyper, options).unwrap();
    let mut state = sampler.initial_state(5);
    for _ in 0..1000 {
        sampler.gibbs_iteration(&mut state).unwrap();
    }
    let mut depth = Vec::new();
    let mut leaves = Vec::new();
    for _ in 0..20_000 {
        sampler.gibbs_iteration(&mut state).unwrap();
        let t = &state.ensemble.trees[0];
        depth.push(t.max_depth() as f64);
        leaves.push(t.num_leaves() as f64);
    }

    let (od, od_se) = mean_se(&oracle.iter().map(|o| o.0 as f64).collect::<Vec<_>>());
    let (ol, ol_se) = mean_se(&oracle.iter().map(|o| o.1 as f64).collect::<Vec<_>>());
    let (md, md_se) = batch_means(&depth, 50);
    let (ml, ml_se) = batch_means(&leaves, 50);
    let z_depth = (md - od) / (md_se.powi(2) + od_se.powi(2)).sqrt();
    let z_leaves = (ml - ol) / (ml_se.powi(2) + ol_se.powi(2)).sqrt();
    println!("depth chain {md:.4} +- {md_se:.4} oracle {od:.4} +- {od_se:.4}; leaves chain {ml:.4} +- {ml_se:.4} oracle {ol:.4} +- {ol_se:.4}");
    assert!(z_depth.abs() < 3.0, "depth: chain {md} +- {md_se}, oracle {od} +- {od_se}");
    assert!(z_leaves.abs() < 3.0, "leaves: chain {ml} +- {ml_se}, oracle {ol} +- {ol_se}");
}
