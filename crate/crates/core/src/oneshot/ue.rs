//! Unary encoding: symmetric (basic one-time RAPPOR) and optimized.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::types::{ChannelParams, DomainSize, PrivacyBudget, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UeVariant {
    Sue,
    Oue,
}

/// Per-bit probabilities `(p, q)` of reporting 1 for a set and an unset
/// input bit.
pub fn ue_probs(eps: f64, variant: UeVariant) -> (f64, f64) {
    match variant {
        UeVariant::Sue => {
            let h = (eps / 2.0).exp();
            if h.is_infinite() {
                return (1.0, 0.0);
            }
            (h / (h + 1.0), 1.0 / (h + 1.0))
        }
        UeVariant::Oue => (0.5, 1.0 / (eps.exp() + 1.0)),
    }
}

pub fn ue_params(eps: PrivacyBudget, variant: UeVariant) -> Result<ChannelParams> {
    let (p, q) = ue_probs(eps.get(), variant);
    ChannelParams::new(p, q, None)
}

pub fn one_hot(v: usize, k: usize) -> Vec<u8> {
    let mut bits = vec![0u8; k];
    bits[v] = 1;
    bits
}

/// Flip each bit independently: a set bit stays set with probability `p`,
/// an unset bit becomes set with probability `q`.
pub fn ue_perturb<R: Rng + ?Sized>(input: &[u8], p: f64, q: f64, rng: &mut R) -> Vec<u8> {
    input
        .iter()
        .map(|&b| {
            let prob = if b == 1 { p } else { q };
            rng.random_bool(prob) as u8
        })
        .collect()
}

pub fn ue_client<R: Rng + ?Sized>(
    v: usize,
    eps: PrivacyBudget,
    k: DomainSize,
    variant: UeVariant,
    rng: &mut R,
) -> Result<Report> {
    k.check(v)?;
    let (p, q) = ue_probs(eps.get(), variant);
    Ok(Report::Bits {
        bits: ue_perturb(&one_hot(v, k.get()), p, q, rng),
    })
}
