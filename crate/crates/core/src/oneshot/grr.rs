//! Generalized randomized response.

use rand::Rng;

use crate::error::Result;
use crate::types::{ChannelParams, DomainSize, PrivacyBudget, Report};

/// Keep probability `e^ε / (e^ε + k - 1)` and per-other-value probability
/// `1 / (e^ε + k - 1)`.
pub fn grr_probs(eps: f64, k: usize) -> (f64, f64) {
    let e = eps.exp();
    let denom = e + k as f64 - 1.0;
    // e/denom overflows to NaN once e^eps is infinite.
    if e.is_infinite() {
        return (1.0, 0.0);
    }
    (e / denom, 1.0 / denom)
}

pub fn grr_params(eps: PrivacyBudget, k: DomainSize) -> Result<ChannelParams> {
    let (p, q) = grr_probs(eps.get(), k.get());
    ChannelParams::new(p, q, None)
}

/// Report `v` with probability `keep`, otherwise a uniformly chosen value of
/// `0..k` other than `v`.
#[inline]
pub fn grr_perturb<R: Rng + ?Sized>(v: usize, k: usize, keep: f64, rng: &mut R) -> usize {
    if rng.random_bool(keep) {
        v
    } else {
        let other = rng.random_range(0..k - 1);
        if other >= v {
            other + 1
        } else {
            other
        }
    }
}

pub fn grr_client<R: Rng + ?Sized>(
    v: usize,
    eps: PrivacyBudget,
    k: DomainSize,
    rng: &mut R,
) -> Result<Report> {
    k.check(v)?;
    let (p, _) = grr_probs(eps.get(), k.get());
    Ok(Report::Item {
        index: grr_perturb(v, k.get(), p, rng),
    })
}
