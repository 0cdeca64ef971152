use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};

/// A column whose component orthogonal to the preceding columns has norm
/// below this fraction of its own norm is treated as linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `(X'X)⁻¹`, assembled from the triangular factor.
    pub xtx_inv: DMatrix<f64>,
}

/// Least-squares fit of `outcome` on the columns of `design` via Householder
/// QR. Rank deficiency is an error naming the offending columns by index.
pub fn solve_least_squares(design: &DMatrix<f64>, outcome: &DVector<f64>) -> Result<LeastSquares> {
    solve_least_squares_named(design, outcome, None)
}

/// As [`solve_least_squares`], naming dependent columns with `names`.
pub fn solve_least_squares_named(
    design: &DMatrix<f64>,
    outcome: &DVector<f64>,
    names: Option<&[String]>,
) -> Result<LeastSquares> {
    let (n, p) = design.shape();
    if outcome.len() != n {
        return Err(domain(format!(
            "design has {n} rows but the outcome has {} entries",
            outcome.len()
        )));
    }
    if p == 0 {
        return Err(domain("design has no columns"));
    }
    if n < p {
        return Err(domain(format!(
            "{n} observations cannot identify {p} coefficients"
        )));
    }
    if design.iter().chain(outcome.iter()).any(|v| !v.is_finite()) {
        return Err(domain("design and outcome must be finite"));
    }

    let qr = design.clone().qr();
    let r = qr.r();
    check_rank(design, &r, names)?;
    let mut qty = outcome.clone();
    qr.q_tr_mul(&mut qty);
    let head = qty.rows(0, p).into_owned();
    let coefficients = r
        .solve_upper_triangular(&head)
        .ok_or_else(|| Error::Invariant("triangular solve failed on a full-rank factor".into()))?;
    let residuals = outcome - design * &coefficients;
    let xtx_inv = inverse_gram(&r)?;
    Ok(LeastSquares {
        coefficients,
        residuals,
        xtx_inv,
    })
}

/// `(X'X)⁻¹` for a full-rank design.
pub fn xtx_inverse(design: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if design.nrows() < design.ncols() || design.ncols() == 0 {
        return Err(domain("design must have at least as many rows as columns"));
    }
    let r = design.clone().qr().r();
    check_rank(design, &r, None)?;
    inverse_gram(&r)
}

fn check_rank(design: &DMatrix<f64>, r: &DMatrix<f64>, names: Option<&[String]>) -> Result<()> {
    let p = design.ncols();
    let dependent: Vec<String> = (0..p)
        .filter(|&j| {
            let norm = design.column(j).norm();
            norm == 0.0 || r[(j, j)].abs() <= RANK_TOLERANCE * norm
        })
        .map(|j| match names.and_then(|n| n.get(j)) {
            Some(name) => name.clone(),
            None => format!("column {j}"),
        })
        .collect();
    if !dependent.is_empty() {
        return Err(Error::RankDeficient { columns: dependent });
    }
    Ok(())
}

fn inverse_gram(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = r.ncols();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Invariant("cannot invert triangular factor".into()))?;
    let g = &r_inv * r_inv.transpose();
    Ok((&g + g.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let ls = solve_least_squares(&x, &y).unwrap();
        assert!((ls.coefficients[0] - 1.0).abs() < 1e-14);
        assert!(ls.residuals.amax() < 1e-14);
    }

    #[test]
    fn intercept_is_mean() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let y = DVector::from_column_slice(&[1.0, 1.0]);
        let ls = solve_least_squares(&x, &y).unwrap();
        assert!((ls.coefficients[0] - 1.0).abs() < 1e-15);
        assert!((ls.xtx_inv[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rank_deficiency_names_column() {
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[
                1.0, 1.0, 2.0, //
                1.0, 2.0, 3.0, //
                1.0, 3.0, 4.0, //
                1.0, 5.0, 6.0,
            ],
        );
        let y = DVector::from_column_slice(&[1.0, 2.0, 2.0, 4.0]);
        let names: Vec<String> = ["const", "x", "x_plus_one"].map(String::from).to_vec();
        match solve_least_squares_named(&x, &y, Some(&names)) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["x_plus_one"]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        let zero = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let err = solve_least_squares(&zero, &y).unwrap_err();
        assert!(err.to_string().contains("column 1"));
    }

    #[test]
    fn shape_errors() {
        let x = DMatrix::from_element(2, 3, 1.0);
        let y = DVector::from_element(2, 1.0);
        assert!(solve_least_squares(&x, &y).is_err());
        let x = DMatrix::from_element(3, 1, 1.0);
        assert!(solve_least_squares(&x, &y).is_err());
    }
}
