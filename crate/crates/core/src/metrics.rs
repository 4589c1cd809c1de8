//! Utility metrics, the IBU-over-MI gain and multi-run aggregation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::Estimator;
use crate::types::{Distribution, MechanismId};

fn check_len(f: &[f64], g: &[f64]) -> Result<()> {
    if f.len() != g.len() {
        return Err(Error::LengthMismatch(f.len(), g.len()));
    }
    Ok(())
}

pub fn mse_slices(f: &[f64], f_hat: &[f64]) -> Result<f64> {
    check_len(f, f_hat)?;
    Ok(f.iter()
        .zip(f_hat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / f.len() as f64)
}

pub fn mae_slices(f: &[f64], f_hat: &[f64]) -> Result<f64> {
    check_len(f, f_hat)?;
    Ok(f.iter().zip(f_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / f.len() as f64)
}

pub fn max_abs_error(f: &[f64], f_hat: &[f64]) -> Result<f64> {
    check_len(f, f_hat)?;
    Ok(f.iter()
        .zip(f_hat)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Mean squared error over the `k` items.
pub fn mse(f: &Distribution, f_hat: &Distribution) -> Result<f64> {
    mse_slices(f.probs(), f_hat.probs())
}

/// Mean absolute error over the `k` items.
pub fn mae(f: &Distribution, f_hat: &Distribution) -> Result<f64> {
    mae_slices(f.probs(), f_hat.probs())
}

/// Percentage improvement of IBU over MI, clipped at zero. A zero MI
/// baseline yields zero.
pub fn utility_gain(metric_mi: f64, metric_ibu: f64) -> f64 {
    if metric_mi <= 0.0 {
        return 0.0;
    }
    100.0 * ((metric_mi - metric_ibu) / metric_mi).max(0.0)
}

/// One estimator's outcome on one run of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub mechanism: MechanismId,
    pub estimator: Estimator,
    /// One-shot ε, or ε1 for longitudinal mechanisms.
    pub eps: f64,
    pub eps_inf: Option<f64>,
    pub n: usize,
    pub k: usize,
    pub distribution: String,
    pub run: usize,
    pub seed: u64,
    pub mse: f64,
    pub mae: f64,
    pub iterations: Option<usize>,
}

/// Gains of one sweep point, computed from run-averaged metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRecord {
    pub mechanism: MechanismId,
    pub eps: f64,
    pub eps_inf: Option<f64>,
    pub n: usize,
    pub k: usize,
    pub distribution: String,
    pub gamma_mse: f64,
    pub gamma_mae: f64,
    pub runs: usize,
    pub mse_mi: f64,
    pub mse_ibu: f64,
    pub mae_mi: f64,
    pub mae_ibu: f64,
}

type GroupKey = (MechanismId, String, usize, usize, u64, u64);

#[derive(Default)]
struct Group {
    eps: f64,
    eps_inf: Option<f64>,
    mi: Vec<(usize, u64, f64, f64)>,
    ibu: Vec<(usize, u64, f64, f64)>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    s / c as f64
}

/// Group by sweep point, average each estimator's metrics over runs, then
/// apply the gain formula to the averages.
pub fn aggregate(results: &[ExperimentResult]) -> Result<Vec<GainRecord>> {
    let mut groups: BTreeMap<GroupKey, Group> = BTreeMap::new();
    for r in results {
        // Budgets are positive, so bit patterns sort like the values.
        let key = (
            r.mechanism,
            r.distribution.clone(),
            r.n,
            r.k,
            r.eps_inf.map_or(0, f64::to_bits),
            r.eps.to_bits(),
        );
        let g = groups.entry(key).or_default();
        g.eps = r.eps;
        g.eps_inf = r.eps_inf;
        let row = (r.run, r.seed, r.mse, r.mae);
        match r.estimator {
            Estimator::Mi => g.mi.push(row),
            Estimator::Ibu => g.ibu.push(row),
        }
    }
    groups
        .into_iter()
        .map(|((mechanism, distribution, n, k, _, _), g)| {
            let runs_mi: BTreeSet<(usize, u64)> = g.mi.iter().map(|r| (r.0, r.1)).collect();
            let runs_ibu: BTreeSet<(usize, u64)> = g.ibu.iter().map(|r| (r.0, r.1)).collect();
            if runs_mi.is_empty()
                || runs_mi != runs_ibu
                || runs_mi.len() != g.mi.len()
                || runs_ibu.len() != g.ibu.len()
            {
                return Err(Error::UnpairedRuns(format!(
                    "{mechanism} eps={} n={n} k={k} {distribution}: {} MI rows vs {} IBU rows",
                    g.eps,
                    g.mi.len(),
                    g.ibu.len()
                )));
            }
            let mse_mi = mean(g.mi.iter().map(|r| r.2));
            let mse_ibu = mean(g.ibu.iter().map(|r| r.2));
            let mae_mi = mean(g.mi.iter().map(|r| r.3));
            let mae_ibu = mean(g.ibu.iter().map(|r| r.3));
            Ok(GainRecord {
                mechanism,
                eps: g.eps,
                eps_inf: g.eps_inf,
                n,
                k,
                distribution,
                gamma_mse: utility_gain(mse_mi, mse_ibu),
                gamma_mae: utility_gain(mae_mi, mae_ibu),
                runs: g.mi.len(),
                mse_mi,
                mse_ibu,
                mae_mi,
                mae_ibu,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn metric_examples() {
        assert_eq!(mse_slices(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(mse_slices(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!((mse_slices(&[0.5, 0.5], &[0.6, 0.4]).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(mae_slices(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(mae_slices(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!((mae_slices(&[0.5, 0.5], &[0.6, 0.4]).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(
            mse_slices(&[1.0], &[0.5, 0.5]),
            Err(Error::LengthMismatch(1, 2))
        );
    }

    #[test]
    fn gain_examples() {
        assert!((utility_gain(0.02, 0.01) - 50.0).abs() < 1e-12);
        assert_eq!(utility_gain(0.01, 0.02), 0.0);
        assert_eq!(utility_gain(0.3, 0.3), 0.0);
        assert_eq!(utility_gain(0.0, 0.0), 0.0);
    }

    fn row(est: Estimator, run: usize, mse: f64, mae: f64) -> ExperimentResult {
        ExperimentResult {
            mechanism: MechanismId::Oue,
            estimator: est,
            eps: 2.0,
            eps_inf: None,
            n: 100,
            k: 4,
            distribution: "uniform".into(),
            run,
            seed: run as u64 * 7,
            mse,
            mae,
            iterations: None,
        }
    }

    #[test]
    fn aggregate_examples() {
        let mut rows = Vec::new();
        for run in 0..20 {
            rows.push(row(Estimator::Mi, run, 0.02, 0.1));
            rows.push(row(Estimator::Ibu, run, 0.01, 0.1));
        }
        let g = aggregate(&rows).unwrap();
        assert_eq!(g.len(), 1);
        assert!((g[0].gamma_mse - 50.0).abs() < 1e-9);
        assert_eq!(g[0].gamma_mae, 0.0);
        assert_eq!(g[0].runs, 20);

        let single = aggregate(&[
            row(Estimator::Mi, 0, 0.04, 0.2),
            row(Estimator::Ibu, 0, 0.03, 0.1),
        ])
        .unwrap();
        assert!((single[0].gamma_mse - utility_gain(0.04, 0.03)).abs() < 1e-12);
        assert!((single[0].gamma_mae - 50.0).abs() < 1e-12);

        assert!(aggregate(&[]).unwrap().is_empty());
        assert!(matches!(
            aggregate(&[row(Estimator::Mi, 0, 0.1, 0.1)]),
            Err(Error::UnpairedRuns(_))
        ));
    }

    proptest! {
        #[test]
        fn gain_bounded_and_scale_invariant(mi in 1e-9f64..10.0, ibu in 0.0f64..10.0, c in 1e-3f64..1e3) {
            let g = utility_gain(mi, ibu);
            prop_assert!((0.0..=100.0).contains(&g));
            prop_assert!((utility_gain(c * mi, c * ibu) - g).abs() < 1e-9);
        }

        #[test]
        fn mse_bounded_by_mae_times_max_error(pairs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..50)) {
            let (f, g): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = mse_slices(&f, &g).unwrap();
            let a = mae_slices(&f, &g).unwrap();
            let mx = max_abs_error(&f, &g).unwrap();
            prop_assert!(m <= a * mx + 1e-15);
        }
    }
}
