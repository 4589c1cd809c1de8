//! Subset selection.

use rand::seq::index;
use rand::Rng;

use crate::error::Result;
use crate::types::{Aux, ChannelParams, DomainSize, PrivacyBudget, Report};

/// Subset size `round(k / (e^ε + 1))`, ties to even, clamped to `[1, k-1]`.
pub fn ss_omega(eps: PrivacyBudget, k: DomainSize) -> usize {
    let k = k.get();
    let w = (k as f64 / (eps.exp() + 1.0)).round_ties_even() as usize;
    w.clamp(1, k - 1)
}

/// Probability that the true value is placed in the subset.
pub fn ss_keep_prob(eps: f64, k: usize, omega: usize) -> f64 {
    let e = eps.exp();
    if e.is_infinite() {
        return 1.0;
    }
    let w = omega as f64;
    w * e / (w * e + k as f64 - w)
}

pub fn ss_params(eps: PrivacyBudget, k: DomainSize) -> Result<ChannelParams> {
    let omega = ss_omega(eps, k);
    let (e, kf, w) = (eps.exp(), k.get() as f64, omega as f64);
    let p = ss_keep_prob(eps.get(), k.get(), omega);
    let q = (w * e * (w - 1.0) + (kf - w) * w) / ((kf - 1.0) * (w * e + kf - w));
    ChannelParams::new(p, q, Some(Aux::SubsetSize(omega)))
}

/// Sample a subset of size `omega` that contains `v` with probability
/// [`ss_keep_prob`] and otherwise uniform values from the rest of the
/// domain. Items are returned sorted.
pub fn ss_perturb<R: Rng + ?Sized>(
    v: usize,
    k: usize,
    omega: usize,
    keep: f64,
    rng: &mut R,
) -> Vec<usize> {
    let include = rng.random_bool(keep);
    let others = if include { omega - 1 } else { omega };
    let mut items: Vec<usize> = index::sample(rng, k - 1, others)
        .into_iter()
        .map(|i| if i >= v { i + 1 } else { i })
        .collect();
    if include {
        items.push(v);
    }
    items.sort_unstable();
    items
}

pub fn ss_client<R: Rng + ?Sized>(
    v: usize,
    eps: PrivacyBudget,
    k: DomainSize,
    rng: &mut R,
) -> Result<Report> {
    k.check(v)?;
    let omega = ss_omega(eps, k);
    let keep = ss_keep_prob(eps.get(), k.get(), omega);
    Ok(Report::Subset {
        items: ss_perturb(v, k.get(), omega, keep, rng),
    })
}
