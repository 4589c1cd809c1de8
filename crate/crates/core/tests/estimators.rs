mod common;

use common::{mean, slope};
use ldpfo::estimation::{
    build_channel, estimate_from_counts, ibu_estimate, ibu_with, log_likelihood, mi_estimate,
    mi_raw, observed_distribution, IbuConfig, SupportCounts,
};
use ldpfo::oneshot::accumulate_support;
use ldpfo::rng::{derive_seed, seeded};
use ldpfo::types::{ChannelParams, DistributionRole};
use ldpfo::{Distribution, Estimator, Mechanism, MechanismId, MechanismSpec};
use rand::Rng;
use rayon::prelude::*;

fn spec(id: MechanismId, k: usize) -> MechanismSpec {
    if id.is_longitudinal() {
        MechanismSpec::longitudinal(id, k, 4.0, 2.0).unwrap()
    } else {
        MechanismSpec::one_shot(id, k, 2.0).unwrap()
    }
}

/// Population with exactly `round(n f(v))` users on each value.
fn population(f: &[f64], n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    for (v, &p) in f.iter().enumerate() {
        let c = if v + 1 == f.len() {
            n - out.len()
        } else {
            (p * n as f64).round() as usize
        };
        out.extend(std::iter::repeat_n(v, c));
    }
    out
}

fn counts(mech: &Mechanism, users: &[usize], seed: u64) -> SupportCounts {
    let mut rng = seeded(seed);
    let mut c = vec![0u64; mech.k()];
    for &v in users {
        let r = mech.client(v, &mut rng).unwrap();
        accumulate_support(&r, mech.params(), &mut c).unwrap();
    }
    SupportCounts::new(c, users.len())
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

const F10: [f64; 10] = [0.3, 0.2, 0.15, 0.1, 0.08, 0.06, 0.05, 0.03, 0.02, 0.01];

#[test]
fn mse_vanishes_as_n_grows() {
    let ns = [10_000usize, 100_000, 1_000_000];
    let ids: Vec<MechanismId> = MechanismId::all().collect();
    ids.par_iter().for_each(|&id| {
        let mech = Mechanism::new(spec(id, 10)).unwrap();
        let mut mi_mse = Vec::new();
        let mut ibu_mse = Vec::new();
        for (i, &n) in ns.iter().enumerate() {
            let users = population(&F10, n);
            let truth: Vec<f64> = F10.to_vec();
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for run in 0..3 {
                let c = counts(&mech, &users, derive_seed(i as u64, &[run]));
                a.push(mse(&mi_raw(&c, mech.params()).unwrap(), &truth));
                let est =
                    estimate_from_counts(&c, mech.params(), Estimator::Ibu, &IbuConfig::default())
                        .unwrap();
                b.push(mse(est.distribution.probs(), &truth));
            }
            mi_mse.push(mean(&a));
            ibu_mse.push(mean(&b));
        }
        let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
        let s = slope(&x, &mi_mse.iter().map(|m| m.ln()).collect::<Vec<_>>());
        assert!(
            (-1.3..=-0.7).contains(&s),
            "{id}: MI log-log slope {s}, mse {mi_mse:?}"
        );
        assert!(
            ibu_mse.windows(2).all(|w| w[1] < w[0]),
            "{id}: IBU mse {ibu_mse:?}"
        );
        assert!(ibu_mse[2] < 1e-4, "{id}: IBU mse {ibu_mse:?}");
    });
}

#[test]
fn raw_mi_is_unbiased() {
    let (k, n, runs) = (6, 100_000, 200);
    let f = [0.35, 0.25, 0.15, 0.12, 0.08, 0.05];
    let users = population(&f, n);
    let truth: Vec<f64> = (0..k)
        .map(|v| users.iter().filter(|&&u| u == v).count() as f64 / n as f64)
        .collect();
    let ids: Vec<MechanismId> = MechanismId::all().collect();
    let failures: Vec<String> = ids
        .par_iter()
        .flat_map(|&id| {
            let mech = Mechanism::new(spec(id, k)).unwrap();
            let raws: Vec<Vec<f64>> = (0..runs)
                .map(|r| {
                    mi_raw(
                        &counts(&mech, &users, derive_seed(99, &[r as u64])),
                        mech.params(),
                    )
                    .unwrap()
                })
                .collect();
            (0..k)
                .filter_map(|v| {
                    let xs: Vec<f64> = raws.iter().map(|r| r[v]).collect();
                    let m = mean(&xs);
                    let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (runs - 1) as f64)
                        .sqrt();
                    let se = sd / (runs as f64).sqrt();
                    ((m - truth[v]).abs() > 3.0 * se)
                        .then(|| format!("{id} v={v}: mean {m} truth {} se {se}", truth[v]))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

fn random_instance(rng: &mut impl Rng, k: usize) -> (ChannelParams, Vec<f64>) {
    let p: f64 = rng.random_range(0.3..0.95);
    let q = rng.random_range(0.01..p - 0.05);
    let raw: Vec<f64> = (0..k)
        .map(|_| rng.random_range(0.0..1.0f64).powi(2) + 1e-6)
        .collect();
    let s: f64 = raw.iter().sum();
    (
        ChannelParams::new(p, q, None).unwrap(),
        raw.iter().map(|x| x / s).collect(),
    )
}

#[test]
fn em_log_likelihood_never_decreases() {
    let mut rng = seeded(12);
    for trial in 0..200 {
        let k = rng.random_range(2..40);
        let (params, f_tilde) = random_instance(&mut rng, k);
        let channel = build_channel(&params, k);
        let cfg = IbuConfig {
            max_iter: 2_000,
            ..IbuConfig::default()
        };
        let mut prev = f64::NEG_INFINITY;
        ibu_with(&f_tilde, &channel, &cfg, |f| {
            let sum: f64 = f.iter().sum();
            assert!(
                (sum - 1.0).abs() <= 1e-9 && f.iter().all(|&x| x >= 0.0),
                "trial {trial}"
            );
            let ll = log_likelihood(&f_tilde, f, &channel);
            assert!(ll - prev >= -1e-12, "trial {trial}: {prev} -> {ll}");
            prev = ll;
        })
        .unwrap();
    }
}

/// Maximizer of the k=2 log-likelihood over a 1e-4 grid on the first
/// coordinate.
fn grid_mle(p: f64, q: f64, obs: [f64; 2]) -> f64 {
    (0..=10_000)
        .map(|i| i as f64 * 1e-4)
        .map(|a| {
            let m0 = a * p + (1.0 - a) * q;
            let m1 = a * q + (1.0 - a) * p;
            (a, obs[0] * m0.ln() + obs[1] * m1.ln())
        })
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap()
        .0
}

#[test]
fn ibu_matches_grid_mle_at_k2() {
    let mut rng = seeded(2);
    let mut interior = 0;
    for i in 0..100 {
        let p = rng.random_range(0.55..0.99);
        let q = rng.random_range(0.01..p - 0.02);
        let o = rng.random_range(0.0..1.0);
        let obs = Distribution::new(vec![o, 1.0 - o], DistributionRole::Observed).unwrap();
        let params = ChannelParams::new(p, q, None).unwrap();
        let out = ibu_estimate(&obs, &build_channel(&params, 2), &IbuConfig::default()).unwrap();
        let mle = grid_mle(p, q, [o, 1.0 - o]);
        let got = out.estimate.probs()[0];
        assert!(
            (got - mle).abs() <= 2e-4,
            "instance {i}: ibu {got} grid {mle} (p={p}, q={q}, o={o})"
        );

        // Rows sum to p + q; MI on the row-normalized pair is the interior MLE.
        let (pn, qn) = (p / (p + q), q / (p + q));
        let raw0 = (o - qn) / (pn - qn);
        if raw0 > 0.0 && raw0 < 1.0 {
            interior += 1;
            assert!(
                (got - raw0).abs() <= 1e-6,
                "instance {i}: ibu {got} mi {raw0}"
            );
        }
    }
    assert!(interior > 20);
}

#[test]
fn mi_and_ibu_agree_inside_simplex() {
    let mut rng = seeded(8);
    for trial in 0..100 {
        let k = rng.random_range(2..12);
        let (p, q) = {
            let (params, _) = random_instance(&mut rng, k);
            (params.p_star, params.q_star)
        };
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let f: Vec<f64> = raw.iter().map(|x| x / s).collect();
        // Expected support counts of a very large population drawn from f.
        let n: u64 = 1_000_000_000_000;
        let c: Vec<u64> = f
            .iter()
            .map(|&fv| (n as f64 * (q + (p - q) * fv)).round() as u64)
            .collect();
        let sc = SupportCounts::new(c, n as usize);
        let params = ChannelParams::new(p, q, None).unwrap();
        let mi = mi_estimate(&sc, &params).unwrap();
        let obs = observed_distribution(&sc).unwrap();
        // Weak channels converge slowly; the claim is about the limit.
        let cfg = IbuConfig {
            max_iter: 2_000_000,
            ..IbuConfig::default()
        };
        let ibu = ibu_estimate(&obs, &build_channel(&params, k), &cfg).unwrap();
        for (a, b) in mi.probs().iter().zip(ibu.estimate.probs()) {
            assert!(
                (a - b).abs() <= 1e-6,
                "trial {trial}: {:?} vs {:?}",
                mi.probs(),
                ibu.estimate.probs()
            );
        }
    }
}
