//! Error-weighted ensembles of networks fitted on random subsamples.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rbf_net::{self, RbfConfig, RbfNet};
use crate::rng::SeededRng;
use crate::sigmoid_net::{self, mean_abs_diff, SigmoidConfig, SigmoidNet};

/// Smallest fold error used when weighting, so a perfect member cannot
/// produce an infinite weight.
pub const ERROR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Member {
    Sigmoid(SigmoidNet),
    Rbf(RbfNet),
}

impl Member {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            Member::Sigmoid(net) => net.predict(x),
            Member::Rbf(net) => net.predict(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseConfig {
    Sigmoid(SigmoidConfig),
    Rbf(RbfConfig),
}

impl BaseConfig {
    fn seed(&self) -> u64 {
        match self {
            BaseConfig::Sigmoid(c) => c.seed,
            BaseConfig::Rbf(c) => c.seed,
        }
    }

    fn with_seed(&self, seed: u64) -> BaseConfig {
        match *self {
            BaseConfig::Sigmoid(c) => BaseConfig::Sigmoid(SigmoidConfig { seed, ..c }),
            BaseConfig::Rbf(c) => BaseConfig::Rbf(RbfConfig { seed, ..c }),
        }
    }

    fn fit(&self, ds: &Dataset) -> Result<Member> {
        match self {
            BaseConfig::Sigmoid(c) => Ok(Member::Sigmoid(sigmoid_net::fit(ds, c)?.0)),
            BaseConfig::Rbf(c) => Ok(Member::Rbf(rbf_net::fit_rbf(ds, c)?.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<Member>,
    /// Out-of-sample MAE of each member, already floored.
    pub fold_errors: Vec<f64>,
    pub alpha: f64,
}

impl Ensemble {
    /// Normalized inverse-error weights.
    pub fn weights(&self) -> Vec<f64> {
        let inv: Vec<f64> = self.fold_errors.iter().map(|e| 1.0 / e.max(ERROR_FLOOR)).collect();
        let total: f64 = inv.iter().sum();
        inv.into_iter().map(|w| w / total).collect()
    }

    pub fn n_features(&self) -> usize {
        match &self.members[0] {
            Member::Sigmoid(net) => net.n_features,
            Member::Rbf(net) => net.n_features,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let preds = self.members.par_iter().map(|m| m.predict(x)).collect::<Result<Vec<_>>>()?;
        let weights = self.weights();
        Ok((0..x.nrows())
            .map(|i| {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                let mut acc = 0.0;
                for (p, w) in preds.iter().zip(&weights) {
                    lo = lo.min(p[i]);
                    hi = hi.max(p[i]);
                    acc += w * p[i];
                }
                // rounding in the weighted sum can step one ulp outside the hull
                acc.clamp(lo, hi)
            })
            .collect())
    }
}

/// Fits `n_f` members, each on `⌈alpha·m⌉` rows drawn without replacement.
///
/// Member `f` uses the base seed plus `f`, so a single member with `alpha = 1`
/// reproduces a plain fit. Each member is scored on the rows it did not see,
/// or on the whole sample when it saw all of them.
pub fn fit_ensemble(ds: &Dataset, base: &BaseConfig, n_f: usize, alpha: f64, seed: u64) -> Result<Ensemble> {
    if n_f == 0 {
        return Err(Error::InvalidArgument("ensemble needs at least one member".to_string()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("subsample fraction must lie in (0, 1], got {alpha}")));
    }
    let m = ds.len();
    let size = ((alpha * m as f64) - 1e-9).ceil().max(1.0) as usize;
    let size = size.min(m);
    let fitted = (0..n_f)
        .into_par_iter()
        .map(|f| {
            let mut rng = SeededRng::derive(seed, f as u64);
            let perm = rng.permutation(m);
            let mut inside = perm[..size].to_vec();
            let mut outside = perm[size..].to_vec();
            inside.sort_unstable();
            outside.sort_unstable();
            let member = base.with_seed(base.seed().wrapping_add(f as u64)).fit(&ds.subset(&inside))?;
            let eval = if outside.is_empty() { ds.clone() } else { ds.subset(&outside) };
            let err = mean_abs_diff(&member.predict(&eval.x)?, &eval.y);
            if !err.is_finite() {
                return Err(Error::NonFinite("ensemble fold error"));
            }
            Ok((member, err.max(ERROR_FLOOR)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (members, fold_errors) = fitted.into_iter().unzip();
    Ok(Ensemble { members, fold_errors, alpha })
}

pub fn predict_ensemble(ens: &Ensemble, x: &Matrix) -> Result<Vec<f64>> {
    ens.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(m: usize, seed: u64) -> Dataset {
        let mut r = SeededRng::new(seed);
        let x = Matrix::from_fn(m, 1, |_, _| r.uniform());
        let y = x.rows().map(|p| (4.0 * p[0]).sin() + 0.05 * r.uniform()).collect();
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn single_full_member_matches_plain_fit() {
        let ds = curve(60, 1);
        let cfg = SigmoidConfig { seed: 4, ..SigmoidConfig::default() };
        let ens = fit_ensemble(&ds, &BaseConfig::Sigmoid(cfg), 1, 1.0, 9).unwrap();
        let (net, _) = sigmoid_net::fit(&ds, &cfg).unwrap();
        let probe = curve(25, 2).x;
        assert_eq!(ens.predict(&probe).unwrap(), net.predict(&probe).unwrap());
        assert_eq!(ens.weights(), vec![1.0]);
    }

    #[test]
    fn weights_are_inverse_errors() {
        let ens = Ensemble { members: Vec::new(), fold_errors: vec![1.0, 2.0, 4.0], alpha: 0.8 };
        let w = ens.weights();
        let expect = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_error_member_dominates() {
        let ens = Ensemble { members: Vec::new(), fold_errors: vec![0.0, 0.1], alpha: 1.0 };
        let w = ens.weights();
        assert!(w[0] > 1.0 - 1e-9 && w.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn members_see_different_rows() {
        let ds = curve(80, 3);
        let base = BaseConfig::Rbf(RbfConfig { neurons: Some(2), ..RbfConfig::default() });
        let ens = fit_ensemble(&ds, &base, 3, 0.5, 1).unwrap();
        assert_eq!(ens.members.len(), 3);
        assert_ne!(ens.members[0], ens.members[1]);
        assert!(ens.fold_errors.iter().all(|&e| e >= ERROR_FLOOR));
    }

    #[test]
    fn rejects_bad_arguments() {
        let ds = curve(20, 3);
        let base = BaseConfig::Sigmoid(SigmoidConfig::default());
        assert!(fit_ensemble(&ds, &base, 0, 0.5, 1).is_err());
        assert!(fit_ensemble(&ds, &base, 2, 0.0, 1).is_err());
        assert!(fit_ensemble(&ds, &base, 2, 1.5, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn prediction_lies_in_member_hull(seed in 0u64..1000, n_f in 1usize..5, alpha in 0.3f64..1.0) {
            let ds = curve(40, seed);
            let base = BaseConfig::Sigmoid(SigmoidConfig { seed, ..SigmoidConfig::default() });
            let ens = fit_ensemble(&ds, &base, n_f, alpha, seed).unwrap();
            let probe = curve(15, seed + 1).x;
            let p = ens.predict(&probe).unwrap();
            let each: Vec<Vec<f64>> = ens.members.iter().map(|m| m.predict(&probe).unwrap()).collect();
            for i in 0..probe.nrows() {
                let lo = each.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
                let hi = each.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= p[i] && p[i] <= hi);
            }
        }
    }
}
