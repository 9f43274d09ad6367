//! Dense linear-algebra primitives shared by every fitting path.
//!
//! Three entry points:
//!
//! - [`solve_square`]: LU with partial pivoting, rejected in favour of the
//!   minimum-norm pseudo-inverse solution when a pivot falls below tolerance.
//! - [`least_squares`]: normal equations `(AᵀA) x = Aᵀb` through Cholesky, with a
//!   rank-revealing fallback when a Cholesky pivot fails the tolerance.
//! - [`solve_rectangular`]: minimum-norm least-squares solution for any shape.
//!
//! Factorizations are delegated to `faer`. The default pivot tolerance is
//! `1e-12 × max|entry|` of the matrix being factored. `condition_estimate` is the
//! ratio of the extreme pivot magnitudes and only an estimate.

use faer::linalg::solvers::{Solve, SolveLstsq};
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Relative pivot threshold used when the caller does not pass one.
pub const PIVOT_RELATIVE_TOL: f64 = 1e-12;

const REFINEMENT_STEPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Direct,
    PseudoInverse,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SolveReport {
    pub method_used: SolveMethod,
    pub condition_estimate: f64,
    pub max_residual: f64,
}

impl SolveReport {
    pub fn fell_back(&self) -> bool {
        self.method_used == SolveMethod::PseudoInverse
    }
}

pub fn default_pivot_tol(a: &Matrix) -> f64 {
    PIVOT_RELATIVE_TOL * a.max_abs()
}

fn check_finite(a: &Matrix, b: &[f64]) -> Result<()> {
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix"));
    }
    if !b.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("right-hand side"));
    }
    Ok(())
}

fn col(b: &[f64]) -> MatRef<'_, f64> {
    MatRef::from_column_major_slice(b, b.len(), 1)
}

fn residual_inf(a: MatRef<'_, f64>, x: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    let r = a * x - b;
    let mut worst = 0.0f64;
    for j in 0..r.ncols() {
        for i in 0..r.nrows() {
            worst = worst.max(r[(i, j)].abs());
        }
    }
    worst
}

fn to_vec(x: &Mat<f64>) -> Vec<f64> {
    (0..x.nrows()).map(|i| x[(i, 0)]).collect()
}

/// Solves a square system, falling back to the minimum-norm solution when A is
/// singular to `pivot_tol` (default `1e-12 × max|A|`).
pub fn solve_square(a: &Matrix, b: &[f64], pivot_tol: Option<f64>) -> Result<(Vec<f64>, SolveReport)> {
    let p = a.nrows();
    if a.ncols() != p {
        return Err(Error::shape("square matrix", format!("{}x{}", a.nrows(), a.ncols())));
    }
    if b.len() != p {
        return Err(Error::shape(format!("right-hand side of length {p}"), b.len()));
    }
    check_finite(a, b)?;
    let tol = pivot_tol.unwrap_or_else(|| default_pivot_tol(a));
    if !(tol > 0.0) && p > 0 && a.max_abs() > 0.0 {
        return Err(Error::InvalidArgument(format!("pivot tolerance must be positive, got {tol}")));
    }
    let x = solve_square_mat(a.as_faer(), col(b), tol);
    Ok((to_vec(&x.0), x.1))
}

fn solve_square_mat(a: MatRef<'_, f64>, b: MatRef<'_, f64>, tol: f64) -> (Mat<f64>, SolveReport) {
    let p = a.nrows();
    if p > 0 {
        let lu = a.partial_piv_lu();
        let u = lu.U();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..p {
            let d = u[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if lo > tol && lo.is_finite() {
            let x = lu.solve(b);
            if x.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
                let max_residual = residual_inf(a, x.as_ref(), b);
                return (
                    x,
                    SolveReport { method_used: SolveMethod::Direct, condition_estimate: hi / lo, max_residual },
                );
            }
        }
    }
    let (x, cond) = min_norm(a, b);
    let max_residual = residual_inf(a, x.as_ref(), b);
    (x, SolveReport { method_used: SolveMethod::PseudoInverse, condition_estimate: cond, max_residual })
}

/// Least squares through the normal equations, with a rank-revealing fallback.
/// Systems with fewer rows than unknowns get the minimum-norm solution.
pub fn least_squares(a: &Matrix, b: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
    if b.len() != a.nrows() {
        return Err(Error::shape(format!("right-hand side of length {}", a.nrows()), b.len()));
    }
    check_finite(a, b)?;
    let (x, rep) = least_squares_mat(a.as_faer(), col(b))?;
    Ok((to_vec(&x), rep))
}

/// [`least_squares`] for several right-hand sides sharing one factorization.
/// `b` is `m × k`; the result is `p × k`.
pub fn least_squares_multi(a: &Matrix, b: &Matrix) -> Result<(Matrix, SolveReport)> {
    if b.nrows() != a.nrows() {
        return Err(Error::shape(format!("right-hand side with {} rows", a.nrows()), b.nrows()));
    }
    check_finite(a, b.as_slice())?;
    let (x, rep) = least_squares_mat(a.as_faer(), b.as_faer())?;
    Ok((Matrix::from_faer(x.as_ref()), rep))
}

fn least_squares_mat(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<(Mat<f64>, SolveReport)> {
    let (m, p) = (a.nrows(), a.ncols());
    if m < p {
        // more unknowns than rows: the normal equations are singular
        let (x, cond) = min_norm(a, b);
        let max_residual = residual_inf(a, x.as_ref(), b);
        return Ok((x, SolveReport { method_used: SolveMethod::PseudoInverse, condition_estimate: cond, max_residual }));
    }
    let gram = a.transpose() * a;
    let rhs = a.transpose() * b;
    let mut gmax = 0.0f64;
    for j in 0..p {
        for i in 0..p {
            gmax = gmax.max(gram[(i, j)].abs());
        }
    }
    let tol = PIVOT_RELATIVE_TOL * gmax;
    if let Ok(llt) = gram.llt(Side::Lower) {
        let l = llt.L();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..p {
            let d = l[(i, i)] * l[(i, i)];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if p > 0 && lo > tol {
            let mut x = llt.solve(&rhs);
            // refinement restores the normal-equation optimality that the
            // squared conditioning of the Gram matrix costs
            for _ in 0..REFINEMENT_STEPS {
                let grad = a.transpose() * (b - a * &x);
                x += llt.solve(&grad);
            }
            if x.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
                let max_residual = residual_inf(a, x.as_ref(), b);
                return Ok((
                    x,
                    SolveReport { method_used: SolveMethod::Direct, condition_estimate: hi / lo, max_residual },
                ));
            }
        }
    }
    let (x, cond) = min_norm(a, b);
    let max_residual = residual_inf(a, x.as_ref(), b);
    Ok((x, SolveReport { method_used: SolveMethod::PseudoInverse, condition_estimate: cond, max_residual }))
}

/// Minimum-norm least-squares solution for any shape. Square invertible input
/// takes the same LU path as [`solve_square`].
pub fn solve_rectangular(a: &Matrix, b: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
    if b.len() != a.nrows() {
        return Err(Error::shape(format!("right-hand side of length {}", a.nrows()), b.len()));
    }
    check_finite(a, b)?;
    if a.nrows() == a.ncols() {
        return solve_square(a, b, None);
    }
    let (x, cond) = min_norm(a.as_faer(), col(b));
    let max_residual = residual_inf(a.as_faer(), x.as_ref(), col(b));
    Ok((
        to_vec(&x),
        SolveReport { method_used: SolveMethod::PseudoInverse, condition_estimate: cond, max_residual },
    ))
}

fn rank_tol(q: usize, p: usize) -> f64 {
    f64::EPSILON * q.max(p) as f64
}

/// Minimum-norm least squares: QR when A has full rank, SVD with the usual
/// `eps·max(q,p)·σ_max` cutoff otherwise.
fn min_norm(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> (Mat<f64>, f64) {
    let (q, p) = (a.nrows(), a.ncols());
    if q == 0 || p == 0 {
        return (Mat::zeros(p, b.ncols()), 1.0);
    }
    let tol = rank_tol(q, p);
    if q >= p {
        let qr = a.col_piv_qr();
        let r = qr.thin_R();
        let top = r[(0, 0)].abs();
        let (mut lo, mut full) = (f64::INFINITY, top > 0.0);
        for i in 0..p {
            let d = r[(i, i)].abs();
            lo = lo.min(d);
            if d <= tol * top {
                full = false;
            }
        }
        if full {
            let mut x = qr.solve_lstsq(b);
            for _ in 0..REFINEMENT_STEPS {
                let r = b - a * &x;
                x += qr.solve_lstsq(&r);
            }
            if x.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
                return (x, top / lo);
            }
        }
    } else {
        // x = Q R⁻ᵀ b from Aᵀ = Q R keeps x in the row space of A
        let at = a.transpose();
        let qr = at.qr();
        let r = qr.thin_R();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..q {
            let d = r[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if hi > 0.0 && lo > tol * hi {
            let mut z = b.to_owned();
            r.transpose().solve_lower_triangular_in_place(z.as_mut());
            let x = qr.compute_thin_Q() * &z;
            if x.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
                return (x, hi / lo);
            }
        }
    }
    svd_min_norm(a, b)
}

fn svd_min_norm(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> (Mat<f64>, f64) {
    let (q, p) = (a.nrows(), a.ncols());
    let svd = match a.thin_svd() {
        Ok(s) => s,
        // SVD did not converge; nothing better to offer than a zero solution
        Err(_) => return (Mat::zeros(p, b.ncols()), f64::INFINITY),
    };
    let s = svd.S().column_vector();
    let smax = (0..s.nrows()).fold(0.0f64, |m, i| m.max(s[i].abs()));
    let cut = rank_tol(q, p) * smax;
    let mut utb = svd.U().transpose() * b;
    let mut smin = f64::INFINITY;
    for i in 0..s.nrows() {
        let si = s[i];
        if si > cut {
            smin = smin.min(si);
            for j in 0..utb.ncols() {
                utb[(i, j)] /= si;
            }
        } else {
            for j in 0..utb.ncols() {
                utb[(i, j)] = 0.0;
            }
        }
    }
    let x = svd.V() * &utb;
    let cond = if smin.is_finite() { smax / smin } else { f64::INFINITY };
    (x, cond)
}

/// Explicit Moore-Penrose pseudo-inverse (test and diagnostics helper).
pub fn pseudo_inverse(a: &Matrix) -> Result<Matrix> {
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix"));
    }
    let eye = Mat::<f64>::identity(a.nrows(), a.nrows());
    let (x, _) = svd_min_norm(a.as_faer(), eye.as_ref());
    Ok(Matrix::from_faer(x.as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut r = SeededRng::new(seed);
        Matrix::from_fn(rows, cols, |_, _| r.uniform_in(-1.0, 1.0))
    }

    #[test]
    fn identity_solve_is_direct() {
        let (x, rep) = solve_square(&Matrix::identity(3), &[1.0, 2.0, 3.0], None).unwrap();
        assert!(close(&x, &[1.0, 2.0, 3.0], 1e-15));
        assert_eq!(rep.method_used, SolveMethod::Direct);
        assert_eq!(rep.max_residual, 0.0);
    }

    #[test]
    fn diagonal_solve() {
        let a = Matrix::from_rows(&[[2.0, 0.0], [0.0, 4.0]]).unwrap();
        let (x, rep) = solve_square(&a, &[2.0, 8.0], None).unwrap();
        assert!(close(&x, &[1.0, 2.0], 1e-15));
        assert!((rep.condition_estimate - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_square_gives_minimum_norm() {
        let a = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let (x, rep) = solve_square(&a, &[2.0, 2.0], None).unwrap();
        assert_eq!(rep.method_used, SolveMethod::PseudoInverse);
        // every solution is (t, 2 - t); enumerate a fine grid of t and keep the shortest
        let best = (-4000..=4000)
            .map(|k| k as f64 * 1e-3)
            .min_by(|s, t| {
                let ns = s * s + (2.0 - s) * (2.0 - s);
                let nt = t * t + (2.0 - t) * (2.0 - t);
                ns.partial_cmp(&nt).unwrap()
            })
            .unwrap();
        assert!((best - 1.0).abs() < 1e-12);
        assert!(close(&x, &[best, 2.0 - best], 1e-12));
    }

    #[test]
    fn non_finite_rejected() {
        let a = Matrix::from_rows(&[[1.0, f64::NAN], [0.0, 1.0]]).unwrap();
        assert!(matches!(solve_square(&a, &[1.0, 1.0], None), Err(Error::NonFinite(_))));
        assert!(matches!(
            least_squares(&Matrix::identity(2), &[1.0, f64::INFINITY]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(solve_rectangular(&a, &[1.0, 1.0]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn constant_column_regression_is_mean() {
        let a = Matrix::from_rows(&[[1.0], [1.0], [1.0]]).unwrap();
        let (x, rep) = least_squares(&a, &[1.0, 2.0, 3.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14);
        assert_eq!(rep.method_used, SolveMethod::Direct);
    }

    #[test]
    fn identity_over_zero_row() {
        // AᵀA = I, Aᵀb = (1, 1) by hand
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap();
        let (x, _) = least_squares(&a, &[1.0, 1.0, 0.0]).unwrap();
        assert!(close(&x, &[1.0, 1.0], 1e-14));
    }

    #[test]
    fn collinear_line_fit() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]]).unwrap();
        let (x, rep) = least_squares(&a, &[0.0, 1.0, 2.0]).unwrap();
        assert!(close(&x, &[1.0, 0.0], 1e-13));
        assert!(rep.max_residual < 1e-13);
    }

    #[test]
    fn rank_deficient_least_squares_falls_back() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        let (x, rep) = least_squares(&a, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(rep.method_used, SolveMethod::PseudoInverse);
        // minimum-norm solution of x1 + 2 x2 = 1 is (1, 2) / 5
        assert!(close(&x, &[0.2, 0.4], 1e-12));
    }

    #[test]
    fn rectangular_min_norm_picks_zero_free_coordinate() {
        let a = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let (x, rep) = solve_rectangular(&a, &[3.0]).unwrap();
        assert!(close(&x, &[3.0, 0.0], 1e-15));
        assert_eq!(rep.method_used, SolveMethod::PseudoInverse);
    }

    #[test]
    fn rectangular_duplicate_rows() {
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let (x, _) = solve_rectangular(&a, &[1.0, 2.0, 1.0, 2.0]).unwrap();
        assert!(close(&x, &[1.0, 2.0], 1e-14));
    }

    #[test]
    fn rectangular_matches_least_squares_when_overdetermined() {
        let a = random(5, 3, 11);
        let b = [0.3, -1.0, 2.0, 0.5, 0.1];
        let (x1, _) = solve_rectangular(&a, &b).unwrap();
        let (x2, _) = least_squares(&a, &b).unwrap();
        let scale = crate::matrix::max_abs(&x2).max(1.0);
        assert!(close(&x1, &x2, 1e-10 * scale));
    }

    #[test]
    fn underdetermined_rank_deficient_uses_svd() {
        // two identical rows in a 2x3 system
        let a = Matrix::from_rows(&[[1.0, 1.0, 0.0], [1.0, 1.0, 0.0]]).unwrap();
        let (x, _) = solve_rectangular(&a, &[2.0, 2.0]).unwrap();
        assert!(close(&x, &[1.0, 1.0, 0.0], 1e-12));
    }

    #[test]
    fn underdetermined_full_rank_is_min_norm() {
        let a = random(3, 7, 5);
        let b = [1.0, -2.0, 0.5];
        let (x, rep) = solve_rectangular(&a, &b).unwrap();
        assert!(rep.max_residual < 1e-12);
        let pinv = pseudo_inverse(&a).unwrap();
        let xp = pinv.mul_vec(&b).unwrap();
        assert!(close(&x, &xp, 1e-11));
    }

    #[test]
    fn multi_rhs_matches_single() {
        let a = random(20, 4, 9);
        let b = random(20, 3, 10);
        let (x, _) = least_squares_multi(&a, &b).unwrap();
        for j in 0..3 {
            let (xj, _) = least_squares(&a, &b.column(j)).unwrap();
            assert!(close(&x.column(j), &xj, 1e-12));
        }
    }
}
