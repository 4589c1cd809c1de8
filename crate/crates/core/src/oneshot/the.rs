//! Thresholded histogram encoding.
//!
//! Clients send the one-hot histogram plus Laplace noise of scale `2/ε`; the
//! server counts a coordinate as supported when it exceeds a threshold `θ`
//! chosen to minimize the estimator variance.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::Result;
use crate::types::{Aux, ChannelParams, DomainSize, PrivacyBudget, Report};

/// Variance objective minimized by the threshold.
pub fn the_mse(theta: f64, eps: f64) -> f64 {
    let a = (eps * theta / 2.0).exp();
    let denom = 1.0 + (eps * (theta - 0.5)).exp() - 2.0 * a;
    (2.0 * a - 1.0) / (denom * denom)
}

const THETA_TOL: f64 = 1e-6;

/// Golden-section search for the optimal threshold on `(0.5, 1)`.
pub fn the_theta(eps: PrivacyBudget) -> f64 {
    let eps = eps.get();
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.5, 1.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = the_mse(x1, eps);
    let mut f2 = the_mse(x2, eps);
    while hi - lo > THETA_TOL {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = the_mse(x1, eps);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = the_mse(x2, eps);
        }
    }
    (lo + hi) / 2.0
}

/// Support probabilities for threshold `theta`.
pub fn the_probs(eps: f64, theta: f64) -> (f64, f64) {
    (
        1.0 - 0.5 * (eps / 2.0 * (theta - 1.0)).exp(),
        0.5 * (-eps * theta / 2.0).exp(),
    )
}

pub fn the_params(eps: PrivacyBudget) -> Result<ChannelParams> {
    let theta = the_theta(eps);
    let (p, q) = the_probs(eps.get(), theta);
    ChannelParams::new(p, q, Some(Aux::Threshold(theta)))
}

/// One Laplace(0, scale) draw as the difference of two unit exponentials.
#[inline]
pub fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let a: f64 = rng.sample(Exp1);
    let b: f64 = rng.sample(Exp1);
    scale * (a - b)
}

pub fn the_client<R: Rng + ?Sized>(
    v: usize,
    eps: PrivacyBudget,
    k: DomainSize,
    rng: &mut R,
) -> Result<Report> {
    k.check(v)?;
    let scale = 2.0 / eps.get();
    let values = (0..k.get())
        .map(|i| if i == v { 1.0 } else { 0.0 } + laplace(scale, rng))
        .collect();
    Ok(Report::NoisyHist { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn eps(e: f64) -> PrivacyBudget {
        PrivacyBudget::new(e).unwrap()
    }

    #[test]
    fn theta_in_open_bracket_and_locally_optimal() {
        for e in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let t = the_theta(eps(e));
            assert!(t > 0.5 && t < 1.0);
            let m = the_mse(t, e);
            assert!(m <= the_mse(t - 0.01, e) && m <= the_mse(t + 0.01, e));
        }
    }

    #[test]
    fn theta_matches_grid_scan() {
        let e = 1.0;
        let (mut best_t, mut best_m) = (0.0, f64::INFINITY);
        let mut i = 1u32;
        while (i as f64) * 1e-6 < 0.5 {
            let t = 0.5 + i as f64 * 1e-6;
            let m = the_mse(t, e);
            if m < best_m {
                best_m = m;
                best_t = t;
            }
            i += 1;
        }
        assert!((the_theta(eps(e)) - best_t).abs() < 1e-5, "{best_t}");
    }

    #[test]
    fn ordering() {
        for e in [1.0, 2.0, 4.0] {
            let c = the_params(eps(e)).unwrap();
            assert!(0.0 < c.q_star && c.q_star < c.p_star && c.p_star < 1.0);
        }
    }

    #[test]
    fn noise_moments() {
        let mut rng = seeded(21);
        let (k, v, trials) = (3usize, 1usize, 1_000_000);
        let e = 2.0;
        let mut sum = vec![0.0; k];
        let mut sq = vec![0.0; k];
        for _ in 0..trials {
            let Report::NoisyHist { values } =
                the_client(v, eps(e), DomainSize::new(k).unwrap(), &mut rng).unwrap()
            else {
                unreachable!()
            };
            for i in 0..k {
                sum[i] += values[i];
                sq[i] += values[i] * values[i];
            }
        }
        let var_expected = 8.0 / (e * e);
        for i in 0..k {
            let mean = sum[i] / trials as f64;
            let var = sq[i] / trials as f64 - mean * mean;
            let target = if i == v { 1.0 } else { 0.0 };
            assert!((mean - target).abs() < 0.005, "mean[{i}] = {mean}");
            assert!((var / var_expected - 1.0).abs() < 0.02, "var[{i}] = {var}");
        }
    }

    #[test]
    fn threshold_tail_probabilities() {
        let mut rng = seeded(22);
        let e = 2.0;
        let c = the_params(eps(e)).unwrap();
        let theta = c.threshold().unwrap();
        let trials = 1_000_000;
        let (mut own, mut other) = (0usize, 0usize);
        for _ in 0..trials {
            if 1.0 + laplace(2.0 / e, &mut rng) > theta {
                own += 1;
            }
            if laplace(2.0 / e, &mut rng) > theta {
                other += 1;
            }
        }
        assert!((own as f64 / trials as f64 - c.p_star).abs() < 0.002);
        assert!((other as f64 / trials as f64 - c.q_star).abs() < 0.002);
    }

    #[test]
    fn vanishing_noise() {
        let mut rng = seeded(23);
        let Report::NoisyHist { values } =
            the_client(0, eps(1e7), DomainSize::new(3).unwrap(), &mut rng).unwrap()
        else {
            unreachable!()
        };
        assert!((values[0] - 1.0).abs() < 1e-4 && values[1].abs() < 1e-4 && values[2].abs() < 1e-4);
    }
}
