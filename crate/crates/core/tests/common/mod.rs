//! Shared builders and independent oracles for the integration tests.
#![allow(dead_code)]

use decentra_core::panel::{PanelDataset, PanelRow};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A small random two-group panel with school effects, covariates and a
/// planted interaction of `effect`. School 0 is private and school 1 public,
/// the rest are drawn.
pub fn random_panel(
    seed: u64,
    n_schools: usize,
    pupils: usize,
    n_periods: u32,
    effect: f64,
) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut pupil = 0u64;
    for school in 0..n_schools as u64 {
        let public = match school {
            0 => false,
            1 => true,
            _ => rng.random::<f64>() < 0.6,
        };
        let anglophone = rng.random::<f64>() < 0.3;
        let school_effect: f64 = 3.0 * rng.sample::<f64, _>(StandardNormal);
        let w1: f64 = rng.sample(StandardNormal);
        for period in 0..n_periods {
            let post = period + 1 == n_periods;
            for _ in 0..pupils {
                let age = rng.random_range(7..=13) as f64;
                let girl = if rng.random::<bool>() { 1.0 } else { 0.0 };
                let books = if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 };
                let electricity = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
                let grade_high = age >= 10.0;
                let noise: f64 = 5.0 * rng.sample::<f64, _>(StandardNormal);
                let p = if public { 1.0 } else { 0.0 };
                let d = if post { 1.0 } else { 0.0 };
                let score = 40.0 + school_effect + 2.0 * d - 4.0 * p + effect * d * p - 0.4 * age
                    + 2.5 * books
                    + 1.5 * electricity
                    + 0.8 * w1
                    + noise;
                rows.push(PanelRow {
                    pupil_id: pupil,
                    school_id: school,
                    municipality_id: school / 3,
                    period,
                    post,
                    is_public: public,
                    is_anglophone: anglophone,
                    grade_high,
                    age,
                    girl,
                    books,
                    electricity,
                    w: vec![w1],
                    score_math: score,
                    score_lit: score + 5.0 * rng.sample::<f64, _>(StandardNormal),
                });
                pupil += 1;
            }
        }
    }
    PanelDataset::new(rows).expect("valid random panel")
}

/// OLS through the normal equations with an LU factorization; independent
/// of the QR path used by the library.
pub fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    xtx.lu().solve(&xty).expect("nonsingular normal equations")
}

/// Least-squares dummy-variable fit: the named regressors plus one dummy
/// per school and no intercept. Returns the slopes in the order given.
pub fn lsdv(data: &PanelDataset, outcome: &str, regressors: &[Vec<String>]) -> Vec<f64> {
    let n = data.len();
    let schools: Vec<u64> = data.rows().iter().map(|r| r.school_id).collect();
    let mut ids: Vec<u64> = schools.clone();
    ids.sort_unstable();
    ids.dedup();
    let k = regressors.len();
    let mut x = DMatrix::zeros(n, k + ids.len());
    for (j, term) in regressors.iter().enumerate() {
        let col = data.product_column(term).unwrap();
        for i in 0..n {
            x[(i, j)] = col[i];
        }
    }
    for (i, s) in schools.iter().enumerate() {
        let g = ids.binary_search(s).unwrap();
        x[(i, k + g)] = 1.0;
    }
    let y = DVector::from_vec(data.column(outcome).unwrap());
    let b = normal_equations(&x, &y);
    b.iter().take(k).copied().collect()
}

/// Difference of the four cell means computed with plain loops.
pub fn cell_mean_did(data: &PanelDataset, outcome: &str) -> f64 {
    let y = data.column(outcome).unwrap();
    let mut sum = [[0.0f64; 2]; 2];
    let mut cnt = [[0usize; 2]; 2];
    for (r, v) in data.rows().iter().zip(&y) {
        let (p, t) = (r.is_public as usize, r.post as usize);
        sum[p][t] += v;
        cnt[p][t] += 1;
    }
    let m = |p: usize, t: usize| sum[p][t] / cnt[p][t] as f64;
    (m(1, 1) - m(1, 0)) - (m(0, 1) - m(0, 0))
}

/// Best objective `Σ s_i·x_i` over all increments on a grid of `units`
/// steps per unit of budget, subject to the budget, the cap and the
/// compatibility conditions. `delta` and `cap` are in grid units.
pub fn brute_force_objective(s: &[f64], delta: u32, cap: u32, step: f64) -> f64 {
    let n = s.len();
    let total = delta * n as u32;
    let mut best = f64::NEG_INFINITY;
    let mut x = vec![0u32; n];
    #[allow(clippy::too_many_arguments)]
    fn rec(
        i: usize,
        left: u32,
        s: &[f64],
        x: &mut Vec<u32>,
        delta: u32,
        cap: u32,
        step: f64,
        best: &mut f64,
    ) {
        let n = s.len();
        let (lo, hi) = if s[i] > 0.0 {
            (delta, cap)
        } else if s[i] < 0.0 {
            (0, delta)
        } else {
            (0, cap)
        };
        if i == n - 1 {
            if left >= lo && left <= hi {
                x[i] = left;
                let obj: f64 = s
                    .iter()
                    .zip(x.iter())
                    .map(|(a, b)| a * *b as f64 * step)
                    .sum();
                if obj > *best {
                    *best = obj;
                }
            }
            return;
        }
        for v in lo..=hi.min(left) {
            x[i] = v;
            rec(i + 1, left - v, s, x, delta, cap, step, best);
        }
    }
    rec(0, total, s, &mut x, delta, cap, step, &mut best);
    best
}
