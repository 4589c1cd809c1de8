//! Server-side aggregation: support counting, Matrix Inversion and the
//! Iterative Bayesian Update.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::oneshot::accumulate_support;
use crate::types::{ChannelParams, Distribution, DistributionRole, Report};

/// Square channel with `p*` on the diagonal and `q*` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelMatrix {
    k: usize,
    p_star: f64,
    q_star: f64,
}

pub fn build_channel(params: &ChannelParams, k: usize) -> ChannelMatrix {
    ChannelMatrix {
        k,
        p_star: params.p_star,
        q_star: params.q_star,
    }
}

impl ChannelMatrix {
    pub fn get(&self, v: usize, y: usize) -> f64 {
        if v == y {
            self.p_star
        } else {
            self.q_star
        }
    }

    pub fn to_dense(&self) -> DenseChannel {
        let k = self.k;
        DenseChannel::new(k, (0..k * k).map(|i| self.get(i / k, i % k)).collect())
    }
}

/// A general row-major `k x k` channel, `A[v][y] = entries[v * k + y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseChannel {
    k: usize,
    entries: Vec<f64>,
}

impl DenseChannel {
    pub fn new(k: usize, entries: Vec<f64>) -> Self {
        assert_eq!(entries.len(), k * k, "dense channel must be k x k");
        DenseChannel { k, entries }
    }

    pub fn get(&self, v: usize, y: usize) -> f64 {
        self.entries[v * self.k + y]
    }

    pub fn scaled(&self, c: f64) -> Self {
        DenseChannel::new(self.k, self.entries.iter().map(|a| a * c).collect())
    }
}

/// The two products IBU needs from a channel.
pub trait Channel {
    fn size(&self) -> usize;
    /// `out[y] = sum_v f[v] A[v][y]`.
    fn push_forward(&self, f: &[f64], out: &mut [f64]);
    /// `out[v] = sum_y A[v][y] w[y]`.
    fn pull_back(&self, w: &[f64], out: &mut [f64]);
}

impl Channel for ChannelMatrix {
    fn size(&self) -> usize {
        self.k
    }

    fn push_forward(&self, f: &[f64], out: &mut [f64]) {
        let total: f64 = f.iter().sum();
        let diff = self.p_star - self.q_star;
        for (o, &fy) in out.iter_mut().zip(f) {
            *o = self.q_star * total + diff * fy;
        }
    }

    fn pull_back(&self, w: &[f64], out: &mut [f64]) {
        let total: f64 = w.iter().sum();
        let diff = self.p_star - self.q_star;
        for (o, &wv) in out.iter_mut().zip(w) {
            *o = self.q_star * total + diff * wv;
        }
    }
}

impl Channel for DenseChannel {
    fn size(&self) -> usize {
        self.k
    }

    fn push_forward(&self, f: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (v, &fv) in f.iter().enumerate() {
            let row = &self.entries[v * self.k..(v + 1) * self.k];
            for (o, &a) in out.iter_mut().zip(row) {
                *o += fv * a;
            }
        }
    }

    fn pull_back(&self, w: &[f64], out: &mut [f64]) {
        for (v, o) in out.iter_mut().enumerate() {
            let row = &self.entries[v * self.k..(v + 1) * self.k];
            *o = row.iter().zip(w).map(|(a, b)| a * b).sum();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrFunc {
    /// Largest absolute change between successive iterates.
    #[default]
    MaxAbs,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IbuInit {
    #[default]
    Uniform,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IbuConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub err_func: ErrFunc,
    pub init: IbuInit,
}

impl Default for IbuConfig {
    fn default() -> Self {
        IbuConfig {
            max_iter: 10_000,
            tol: 1e-12,
            err_func: ErrFunc::MaxAbs,
            init: IbuInit::Uniform,
        }
    }
}

/// Per-item support counts over `n` reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportCounts {
    pub counts: Vec<u64>,
    pub n: usize,
}

impl SupportCounts {
    pub fn new(counts: Vec<u64>, n: usize) -> Self {
        SupportCounts { counts, n }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Count, for each item, how many reports support it.
pub fn count_supports(reports: &[Report], mechanism: &Mechanism) -> Result<SupportCounts> {
    let mut counts = vec![0u64; mechanism.k()];
    for r in reports {
        mechanism.check_report(r)?;
        accumulate_support(r, mechanism.params(), &mut counts)?;
    }
    Ok(SupportCounts::new(counts, reports.len()))
}

/// Unbiased estimate before post-processing; may leave the simplex.
pub fn mi_raw(counts: &SupportCounts, params: &ChannelParams) -> Result<Vec<f64>> {
    if counts.n == 0 {
        return Err(Error::EmptyCounts);
    }
    let diff = params.p_star - params.q_star;
    if diff == 0.0 {
        return Err(Error::DegenerateChannel);
    }
    let n = counts.n as f64;
    Ok(counts
        .counts
        .iter()
        .map(|&c| (c as f64 - n * params.q_star) / (n * diff))
        .collect())
}

/// Clip negatives to zero and renormalize; an all-zero vector becomes
/// uniform.
pub fn clip_and_normalize(raw: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = raw.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total > 0.0 {
        clipped.into_iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / raw.len() as f64; raw.len()]
    }
}

pub fn mi_estimate(counts: &SupportCounts, params: &ChannelParams) -> Result<Distribution> {
    let raw = mi_raw(counts, params)?;
    Distribution::new(clip_and_normalize(&raw), DistributionRole::Estimated)
}

/// Support counts normalized to sum 1.
pub fn observed_distribution(counts: &SupportCounts) -> Result<Distribution> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    let total = total as f64;
    Distribution::new(
        counts.counts.iter().map(|&c| c as f64 / total).collect(),
        DistributionRole::Observed,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbuOutcome {
    pub estimate: Distribution,
    /// Number of updates performed.
    pub iterations: usize,
    /// Stopping-criterion value after the last update.
    pub final_error: f64,
}

/// `sum_y f_tilde(y) ln (f A)(y)`, the objective IBU climbs.
pub fn log_likelihood<C: Channel>(f_tilde: &[f64], f: &[f64], channel: &C) -> f64 {
    let mut mix = vec![0.0; channel.size()];
    channel.push_forward(f, &mut mix);
    f_tilde
        .iter()
        .zip(&mix)
        .filter(|(&o, _)| o > 0.0)
        .map(|(&o, &m)| o * m.ln())
        .sum()
}

/// Run IBU, calling `observe` with every iterate (including the start).
pub fn ibu_with<C: Channel, F: FnMut(&[f64])>(
    f_tilde: &[f64],
    channel: &C,
    cfg: &IbuConfig,
    mut observe: F,
) -> Result<IbuOutcome> {
    let k = channel.size();
    if f_tilde.len() != k {
        return Err(Error::LengthMismatch(f_tilde.len(), k));
    }
    let mut f = match &cfg.init {
        IbuInit::Uniform => vec![1.0 / k as f64; k],
        IbuInit::Explicit(v) => {
            if v.len() != k {
                return Err(Error::LengthMismatch(v.len(), k));
            }
            Distribution::new(v.clone(), DistributionRole::Estimated)?.into_probs()
        }
    };
    observe(&f);
    let mut mix = vec![0.0; k];
    let mut ratio = vec![0.0; k];
    let mut back = vec![0.0; k];
    let mut iterations = 0;
    let mut final_error = f64::INFINITY;
    while iterations < cfg.max_iter {
        channel.push_forward(&f, &mut mix);
        for y in 0..k {
            ratio[y] = if f_tilde[y] > 0.0 {
                if mix[y] <= 0.0 {
                    return Err(Error::ZeroDenominator(y));
                }
                f_tilde[y] / mix[y]
            } else {
                0.0
            };
        }
        channel.pull_back(&ratio, &mut back);
        let mut next: Vec<f64> = f.iter().zip(&back).map(|(a, b)| a * b).collect();
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        final_error = match cfg.err_func {
            ErrFunc::MaxAbs => f
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        };
        f = next;
        iterations += 1;
        observe(&f);
        if final_error < cfg.tol {
            break;
        }
    }
    Ok(IbuOutcome {
        estimate: Distribution::new(f, DistributionRole::Estimated)?,
        iterations,
        final_error,
    })
}

pub fn ibu_estimate<C: Channel>(
    f_tilde: &Distribution,
    channel: &C,
    cfg: &IbuConfig,
) -> Result<IbuOutcome> {
    ibu_with(f_tilde.probs(), channel, cfg, |_| {})
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "MI")]
    Mi,
    #[serde(rename = "IBU")]
    Ibu,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Mi => "MI",
            Estimator::Ibu => "IBU",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MI" => Ok(Estimator::Mi),
            "IBU" => Ok(Estimator::Ibu),
            _ => Err(Error::Config(format!("unknown estimator {s:?}"))),
        }
    }
}

/// Estimated distribution plus convergence metadata (IBU only).
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub distribution: Distribution,
    pub iterations: Option<usize>,
    pub final_error: Option<f64>,
}

/// Estimate from already-counted supports.
pub fn estimate_from_counts(
    counts: &SupportCounts,
    params: &ChannelParams,
    estimator: Estimator,
    cfg: &IbuConfig,
) -> Result<Estimate> {
    if counts.n == 0 {
        return Err(Error::EmptyCounts);
    }
    match estimator {
        Estimator::Mi => Ok(Estimate {
            distribution: mi_estimate(counts, params)?,
            iterations: None,
            final_error: None,
        }),
        Estimator::Ibu => {
            let observed = observed_distribution(counts)?;
            let channel = build_channel(params, counts.counts.len());
            let out = ibu_estimate(&observed, &channel, cfg)?;
            Ok(Estimate {
                distribution: out.estimate,
                iterations: Some(out.iterations),
                final_error: Some(out.final_error),
            })
        }
    }
}

/// Full server pipeline: count supports, then MI or IBU.
pub fn estimate(
    reports: &[Report],
    mechanism: &Mechanism,
    estimator: Estimator,
    cfg: &IbuConfig,
) -> Result<Estimate> {
    if reports.is_empty() {
        return Err(Error::EmptyCounts);
    }
    let counts = count_supports(reports, mechanism)?;
    estimate_from_counts(&counts, mechanism.params(), estimator, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{MechanismId, MechanismSpec};

    fn params(p: f64, q: f64) -> ChannelParams {
        ChannelParams::unchecked(p, q, None)
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn count_grr_and_ue() {
        let grr =
            Mechanism::new(MechanismSpec::one_shot(MechanismId::Grr, 2, 1.0).unwrap()).unwrap();
        let reports = [0, 0, 1].map(|i| Report::Item { index: i });
        assert_eq!(
            count_supports(&reports, &grr).unwrap(),
            SupportCounts::new(vec![2, 1], 3)
        );

        let ue =
            Mechanism::new(MechanismSpec::one_shot(MechanismId::Sue, 3, 1.0).unwrap()).unwrap();
        let reports = [
            Report::Bits {
                bits: vec![1, 1, 0],
            },
            Report::Bits {
                bits: vec![0, 1, 0],
            },
        ];
        assert_eq!(count_supports(&reports, &ue).unwrap().counts, vec![1, 2, 0]);
    }

    #[test]
    fn count_ss_total_is_n_omega() {
        use crate::rng::seeded;
        // eps small enough that omega = 2 at k = 5.
        let spec = MechanismSpec::one_shot(MechanismId::Ss, 5, 0.5).unwrap();
        let ss = Mechanism::new(spec).unwrap();
        assert_eq!(ss.params().subset_size(), Some(2));
        let mut rng = seeded(1);
        let reports: Vec<Report> = (0..100)
            .map(|i| ss.client(i % 5, &mut rng).unwrap())
            .collect();
        assert_eq!(count_supports(&reports, &ss).unwrap().total(), 200);
    }

    #[test]
    fn mi_examples() {
        let c = SupportCounts::new(vec![2, 1], 3);
        let d = mi_estimate(&c, &params(1.0, 0.0)).unwrap();
        assert!(close(d.probs(), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));

        let c = SupportCounts::new(vec![60, 40], 100);
        assert!(close(
            &mi_raw(&c, &params(0.75, 0.25)).unwrap(),
            &[0.7, 0.3],
            1e-12
        ));

        let c = SupportCounts::new(vec![0, 100], 100);
        assert!(close(
            &mi_raw(&c, &params(0.75, 0.25)).unwrap(),
            &[-0.5, 1.5],
            1e-12
        ));
        assert_eq!(
            mi_estimate(&c, &params(0.75, 0.25)).unwrap().probs(),
            &[0.0, 1.0]
        );
    }

    #[test]
    fn mi_errors_and_all_zero_corner() {
        assert_eq!(
            mi_raw(&SupportCounts::new(vec![0, 0], 0), &params(0.75, 0.25)),
            Err(Error::EmptyCounts)
        );
        assert_eq!(
            mi_raw(&SupportCounts::new(vec![1, 1], 2), &params(0.5, 0.5)),
            Err(Error::DegenerateChannel)
        );
        assert_eq!(clip_and_normalize(&[-0.1, -0.2, 0.0]), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn channel_construction() {
        let id = build_channel(&params(1.0, 0.0), 3).to_dense();
        for v in 0..3 {
            for y in 0..3 {
                assert_eq!(id.get(v, y), if v == y { 1.0 } else { 0.0 });
            }
        }
        let a = build_channel(&params(0.5, 0.25), 2);
        assert_eq!(
            a.to_dense(),
            DenseChannel::new(2, vec![0.5, 0.25, 0.25, 0.5])
        );
        let grr = crate::oneshot::grr_params(
            crate::types::PrivacyBudget::new(1.3).unwrap(),
            crate::types::DomainSize::new(7).unwrap(),
        )
        .unwrap();
        let a = build_channel(&grr, 7);
        let row: f64 = (0..7).map(|y| a.get(0, y)).sum();
        assert!((row - 1.0).abs() < 1e-12);
    }

    #[test]
    fn observed_examples() {
        assert!(close(
            observed_distribution(&SupportCounts::new(vec![2, 1], 3))
                .unwrap()
                .probs(),
            &[2.0 / 3.0, 1.0 / 3.0],
            1e-15
        ));
        assert_eq!(
            observed_distribution(&SupportCounts::new(vec![5, 5, 10], 20))
                .unwrap()
                .probs(),
            &[0.25, 0.25, 0.5]
        );
        assert_eq!(
            observed_distribution(&SupportCounts::new(vec![0, 0], 3)),
            Err(Error::EmptyCounts)
        );
    }

    #[test]
    fn ibu_identity_channel() {
        let f_tilde = Distribution::new(vec![0.3, 0.7], DistributionRole::Observed).unwrap();
        let a = build_channel(&params(1.0, 0.0), 2);
        let one = IbuConfig {
            max_iter: 1,
            ..IbuConfig::default()
        };
        let out = ibu_estimate(&f_tilde, &a, &one).unwrap();
        assert!(close(out.estimate.probs(), &[0.3, 0.7], 1e-15));
        let out = ibu_estimate(&f_tilde, &a, &IbuConfig::default()).unwrap();
        assert!(close(out.estimate.probs(), &[0.3, 0.7], 1e-15));
        // The second update only confirms the fixed point.
        assert_eq!(out.iterations, 2);
        assert_eq!(out.final_error, 0.0);
    }

    #[test]
    fn ibu_interior_binary_matches_mi() {
        let f_tilde = Distribution::new(vec![0.6, 0.4], DistributionRole::Observed).unwrap();
        let out = ibu_estimate(
            &f_tilde,
            &build_channel(&params(0.75, 0.25), 2),
            &IbuConfig::default(),
        )
        .unwrap();
        assert!(close(out.estimate.probs(), &[0.7, 0.3], 1e-6));
    }

    #[test]
    fn ibu_uniform_is_fixed_point() {
        let k = 6;
        let f_tilde = Distribution::uniform(k, DistributionRole::Observed);
        let a = build_channel(&params(0.4, 0.12), k);
        let mut seen = 0;
        ibu_with(f_tilde.probs(), &a, &IbuConfig::default(), |f| {
            seen += 1;
            assert!(f.iter().all(|&x| (x - 1.0 / k as f64).abs() < 1e-15));
        })
        .unwrap();
        assert!(seen >= 2);
    }

    #[test]
    fn structured_and_dense_routes_agree() {
        let f_tilde = [0.1, 0.05, 0.4, 0.25, 0.2];
        let a = build_channel(&params(0.45, 0.1375), 5);
        let cfg = IbuConfig {
            max_iter: 500,
            tol: 0.0,
            ..IbuConfig::default()
        };
        let fast = ibu_with(&f_tilde, &a, &cfg, |_| {}).unwrap();
        let dense = ibu_with(&f_tilde, &a.to_dense(), &cfg, |_| {}).unwrap();
        assert!(close(fast.estimate.probs(), dense.estimate.probs(), 1e-12));
    }

    #[test]
    fn scaling_channel_leaves_iterates_unchanged() {
        let f_tilde = [0.3, 0.1, 0.6];
        let a = build_channel(&params(0.5, 0.2), 3).to_dense();
        let cfg = IbuConfig {
            max_iter: 50,
            tol: 0.0,
            ..IbuConfig::default()
        };
        let mut base = Vec::new();
        ibu_with(&f_tilde, &a, &cfg, |f| base.push(f.to_vec())).unwrap();
        for c in [0.01, 3.0, 1e6] {
            let mut scaled = Vec::new();
            ibu_with(&f_tilde, &a.scaled(c), &cfg, |f| scaled.push(f.to_vec())).unwrap();
            for (x, y) in base.iter().zip(&scaled) {
                assert!(close(x, y, 1e-12));
            }
        }
    }

    #[test]
    fn zero_denominator_guard() {
        // A column with observed mass but no probability under the channel.
        let a = DenseChannel::new(2, vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(
            ibu_with(&[0.5, 0.5], &a, &IbuConfig::default(), |_| {}),
            Err(Error::ZeroDenominator(1))
        );
    }

    #[test]
    fn estimate_rejects_empty() {
        let grr =
            Mechanism::new(MechanismSpec::one_shot(MechanismId::Grr, 5, 1.0).unwrap()).unwrap();
        assert_eq!(
            estimate(&[], &grr, Estimator::Ibu, &IbuConfig::default()),
            Err(Error::EmptyCounts)
        );
    }
}
