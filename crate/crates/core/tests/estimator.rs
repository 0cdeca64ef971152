mod common;

use common::{cell_mean_did, lsdv, normal_equations, random_panel};
use decentra_core::estimator::{
    cluster_robust_vcov, fit, solve_least_squares, RSquared, RegressionSpec, TREATMENT_TERM,
};
use decentra_core::panel::PanelDataset;
use decentra_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn spec(outcome: &str, covariates: &[&str], fe: bool) -> RegressionSpec {
    RegressionSpec {
        outcome: outcome.into(),
        covariates: covariates.iter().map(|s| s.to_string()).collect(),
        interactions: Vec::new(),
        fixed_effect: fe.then(|| "school_id".to_string()),
        cluster: "school_id".into(),
        include_intercept: !fe,
        r_squared: RSquared::Within,
    }
}

#[test]
fn qr_solution_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = DMatrix::from_fn(200, 5, |_, j| {
        if j == 0 {
            1.0
        } else {
            rng.sample::<f64, _>(StandardNormal)
        }
    });
    let beta = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0]);
    let noise = DVector::from_fn(200, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = &x * &beta + noise;
    let qr = solve_least_squares(&x, &y).unwrap();
    let oracle = normal_equations(&x, &y);
    for j in 0..5 {
        assert!((qr.coefficients[j] - oracle[j]).abs() < 1e-7, "coef {j}");
    }
    let resid = &y - &x * &qr.coefficients;
    let xtu = x.transpose() * resid;
    assert!(xtu.amax() < 1e-8);
}

#[test]
fn rank_deficiency_names_the_column() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a: Vec<f64> = (0..50).map(|_| rng.random()).collect();
    let x = DMatrix::from_fn(50, 3, |i, j| match j {
        0 => 1.0,
        1 => a[i],
        _ => 2.0 * a[i] - 1.0,
    });
    let y = DVector::from_fn(50, |i, _| a[i]);
    let names = ["const".to_string(), "a".to_string(), "b".to_string()];
    let err =
        decentra_core::estimator::solve_least_squares_named(&x, &y, Some(&names)).unwrap_err();
    match err {
        Error::RankDeficient { columns } => assert_eq!(columns, vec!["b".to_string()]),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn fixed_effects_match_dummy_variables() {
    let covs = ["post", "public", TREATMENT_TERM, "age", "books", "w1"];
    for seed in 0..8 {
        let data = random_panel(seed, 12, 6, 2, 4.0);
        let f = fit(&data, &spec("score_math", &covs, true)).unwrap();
        assert!(f.absorbed.contains(&"public".to_string()));
        assert!(f.absorbed.contains(&"w1".to_string()));
        let terms: Vec<Vec<String>> = f
            .names
            .iter()
            .map(|n| n.split(':').map(str::to_string).collect())
            .collect();
        let oracle = lsdv(&data, "score_math", &terms);
        for (b, o) in f.estimates.iter().zip(&oracle) {
            assert!((b - o).abs() < 1e-8, "seed {seed}: {b} vs {o}");
        }
    }
}

#[test]
fn saturated_fit_is_the_cell_contrast() {
    for seed in 0..20 {
        let data = random_panel(100 + seed, 10, 5, 2, -3.0);
        let f = fit(&data, &RegressionSpec::saturated("score_math")).unwrap();
        let b = f.treatment().unwrap().estimate;
        assert!(
            (b - cell_mean_did(&data, "score_math")).abs() < 1e-10,
            "seed {seed}"
        );
    }
}

#[test]
fn row_order_does_not_matter() {
    let data = random_panel(7, 15, 8, 2, 2.0);
    let s = spec("score_math", &["post", TREATMENT_TERM, "age", "girl"], true);
    let a = fit(&data, &s).unwrap();
    let mut rows = data.rows().to_vec();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
    let b = fit(&PanelDataset::new(rows).unwrap(), &s).unwrap();
    for j in 0..a.names.len() {
        assert!((a.estimates[j] - b.estimates[j]).abs() < 1e-9);
        assert!((a.std_error(j) - b.std_error(j)).abs() < 1e-9);
    }
}

#[test]
fn affine_covariate_changes_only_its_own_slope() {
    let data = random_panel(8, 15, 8, 2, 2.0);
    let s = spec(
        "score_math",
        &["post", "public", TREATMENT_TERM, "age"],
        false,
    );
    let a = fit(&data, &s).unwrap();
    let shifted = data.map_rows(|r| r.age = 2.0 * r.age + 3.0);
    let b = fit(&shifted, &s).unwrap();
    let ta = a.treatment().unwrap();
    let tb = b.treatment().unwrap();
    assert!((ta.estimate - tb.estimate).abs() < 1e-8);
    assert!((ta.std_error - tb.std_error).abs() < 1e-8);
    let age = |f: &decentra_core::estimator::FitResult| f.coefficient("age").unwrap().estimate;
    assert!((age(&a) - 2.0 * age(&b)).abs() < 1e-8);
}

#[test]
fn t_statistics_are_ratios() {
    let data = random_panel(9, 12, 6, 2, 5.0);
    let f = fit(
        &data,
        &spec(
            "score_lit",
            &["post", "public", TREATMENT_TERM, "books"],
            false,
        ),
    )
    .unwrap();
    for c in f.coefficients() {
        assert!((c.t_stat - c.estimate / c.std_error).abs() < 1e-12 * c.t_stat.abs().max(1.0));
        assert!(c.p_value > 0.0 && c.p_value <= 1.0);
    }
}

#[test]
fn residuals_are_orthogonal_to_regressors() {
    let data = random_panel(10, 12, 6, 2, 5.0);
    let f = fit(
        &data,
        &spec(
            "score_math",
            &["post", "public", TREATMENT_TERM, "age"],
            false,
        ),
    )
    .unwrap();
    for name in f.names.iter().filter(|n| *n != "const") {
        let parts: Vec<String> = name.split(':').map(str::to_string).collect();
        let col = data.product_column(&parts).unwrap();
        let dot: f64 = col.iter().zip(&f.residuals).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-7, "{name}: {dot}");
    }
    assert!(f.residuals.iter().sum::<f64>().abs() < 1e-7);
}

#[test]
fn singleton_clusters_reduce_to_classical_variance_under_homoskedasticity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 4000;
    let x = DMatrix::from_fn(n, 3, |_, j| {
        if j == 0 {
            1.0
        } else {
            rng.sample::<f64, _>(StandardNormal)
        }
    });
    let y = DVector::from_fn(n, |i, _| {
        1.0 + x[(i, 1)] - x[(i, 2)] + 2.0 * rng.sample::<f64, _>(StandardNormal)
    });
    let ls = solve_least_squares(&x, &y).unwrap();
    let resid: Vec<f64> = ls.residuals.iter().copied().collect();
    let ids: Vec<usize> = (0..n).collect();
    let robust = cluster_robust_vcov(&x, &resid, &ids).unwrap();
    let s2 = resid.iter().map(|u| u * u).sum::<f64>() / (n - 3) as f64;
    let classical = (x.transpose() * &x).try_inverse().unwrap() * s2;
    for j in 0..3 {
        let ratio = robust[(j, j)] / classical[(j, j)];
        assert!((ratio - 1.0).abs() < 0.2, "coef {j}: ratio {ratio}");
    }
}

#[test]
fn fixed_effects_with_intercept_are_rejected() {
    let data = random_panel(11, 6, 4, 2, 1.0);
    let mut s = spec("score_math", &["post", TREATMENT_TERM], true);
    s.include_intercept = true;
    assert!(fit(&data, &s).is_err());
}

#[test]
fn missing_cell_is_reported() {
    let data = random_panel(12, 8, 4, 2, 1.0);
    let only_public = data.filter(|r| r.is_public);
    let err = fit(&only_public, &RegressionSpec::saturated("score_math")).unwrap_err();
    assert!(matches!(err, Error::EmptyCell(_)), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cluster_vcov_is_symmetric_psd(seed in 0u64..10_000) {
        let data = random_panel(seed, 8, 4, 2, 3.0);
        let f = fit(&data, &spec("score_math", &["post", "public", TREATMENT_TERM, "girl"], false)).unwrap();
        let v = &f.vcov;
        prop_assert!((v - v.transpose()).amax() < 1e-10 * v.amax());
        let eig = v.clone().symmetric_eigen();
        prop_assert!(eig.eigenvalues.iter().all(|&e| e > -1e-9 * v.amax()));
    }

    #[test]
    fn outcome_shift_moves_only_the_intercept(seed in 0u64..10_000, c in -100.0f64..100.0) {
        let data = random_panel(seed, 8, 4, 2, 3.0);
        let s = RegressionSpec::saturated("score_math");
        let a = fit(&data, &s).unwrap();
        let b = fit(&data.map_rows(|r| r.score_math += c), &s).unwrap();
        prop_assert!((b.coefficient("const").unwrap().estimate - a.coefficient("const").unwrap().estimate - c).abs() < 1e-8);
        let (ta, tb) = (a.treatment().unwrap(), b.treatment().unwrap());
        prop_assert!((ta.estimate - tb.estimate).abs() < 1e-8);
        prop_assert!((ta.std_error - tb.std_error).abs() < 1e-8);
    }
}
