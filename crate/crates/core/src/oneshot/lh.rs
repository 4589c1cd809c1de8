//! Local hashing (binary and optimized).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grr::{grr_perturb, grr_probs};
use crate::error::Result;
use crate::hash::hash_value;
use crate::types::{Aux, ChannelParams, DomainSize, PrivacyBudget, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LhVariant {
    Blh,
    Olh,
}

/// Hash range size: 2 for BLH, `round(e^ε + 1)` (ties to even) for OLH.
pub fn lh_g(eps: PrivacyBudget, variant: LhVariant) -> usize {
    match variant {
        LhVariant::Blh => 2,
        LhVariant::Olh => {
            let g = (eps.exp() + 1.0).round_ties_even();
            if g.is_finite() {
                (g as usize).max(2)
            } else {
                usize::MAX
            }
        }
    }
}

pub fn lh_params(eps: PrivacyBudget, variant: LhVariant) -> Result<ChannelParams> {
    let g = lh_g(eps, variant);
    let (p, _) = grr_probs(eps.get(), g);
    ChannelParams::new(p, 1.0 / g as f64, Some(Aux::HashRange(g)))
}

/// Draw a fresh hash seed, hash `v` into `0..g` and randomize the hash value
/// with GRR over the reduced domain.
pub fn lh_client<R: Rng + ?Sized>(
    v: usize,
    eps: PrivacyBudget,
    k: DomainSize,
    variant: LhVariant,
    rng: &mut R,
) -> Result<Report> {
    k.check(v)?;
    let g = lh_g(eps, variant);
    let (p, _) = grr_probs(eps.get(), g);
    let seed: u64 = rng.random();
    let value = grr_perturb(hash_value(seed, v, g), g, p, rng);
    Ok(Report::Hashed { seed, value })
}
