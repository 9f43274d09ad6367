//! Shared inputs for the criterion benchmarks.

use annbn_core::benchmarks::{gen_1d, gen_poly5, laplace_problem, LaplaceGrid, LaplaceSpec};
use annbn_core::{Dataset, Matrix, SeededRng};

/// Uniform inputs on `[0, 1]^n` with a smooth sum-of-sines target.
pub fn smooth_dataset(m: usize, n: usize, seed: u64) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let x = Matrix::from_fn(m, n, |_, _| rng.uniform());
    let y = x.rows().map(|r| r.iter().enumerate().map(|(j, v)| ((j + 1) as f64 * v).sin()).sum()).collect();
    Dataset::new(x, y).expect("rows and targets have equal length")
}

pub fn curve_1d(m: usize) -> Dataset {
    gen_1d(m, 0.0, 0).expect("a positive row count is valid")
}

pub fn poly5_noisy(m: usize) -> Dataset {
    gen_poly5(m, 0.05, 0).expect("a positive row count is valid")
}

/// Laplace benchmark grid with spacing `h` in both directions.
pub fn laplace_grid(h: f64) -> LaplaceGrid {
    laplace_problem(&LaplaceSpec { dx: h, dy: h, ..LaplaceSpec::default() }, None).expect("spacing leaves interior points")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_requested_shapes() {
        let ds = smooth_dataset(30, 4, 1);
        assert_eq!((ds.len(), ds.n_features()), (30, 4));
        assert_eq!(curve_1d(12).len(), 12);
        assert_eq!(poly5_noisy(9).n_features(), 5);
        assert_eq!(laplace_grid(0.25).points.nrows(), 25);
    }
}
