//! Memoization-based mechanisms for repeated collection.
//!
//! A user's value is obfuscated once at `eps_inf` and the result memoized;
//! each released report re-obfuscates the memoized value so that the first
//! report satisfies `eps_1`-LDP. Only the first report (one collection) is
//! modelled.
//!
//! Two channel pairs are tracked per mechanism:
//!
//! * `composed`: the pairwise composition `(p1 p2 + q1 q2, p1 q2 + q1 p2)`
//!   of the two randomizers. The second-step parameters are chosen so this
//!   pair meets the family's budget identity at `eps_1` exactly.
//! * `effective`: the probabilities that a released report supports the
//!   user's own value and any other value. This is what the estimators
//!   consume. For unary encoding both pairs coincide; for GRR-type chains on
//!   more than two symbols the effective likelihood ratio is strictly below
//!   `e^{eps_1}`.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::hash_value;
use crate::oneshot::grr::{grr_perturb, grr_probs};
use crate::oneshot::ue::{one_hot, ue_perturb, ue_probs, UeVariant};
use crate::types::{
    Aux, ChannelParams, DomainSize, LongitudinalBudget, MechanismId, MechanismSpec, Report,
};

/// Slack allowed on `p2 <= 1` and `q2 >= 0` before the chain is declared
/// infeasible.
const P2_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPair {
    pub p: f64,
    pub q: f64,
}

/// Which budget identity certifies the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainFamily {
    /// `ln(p/q) = eps`.
    Grr,
    /// `ln(p(1-q) / (q(1-p))) = eps`.
    Ue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub family: ChainFamily,
    pub step1: StepPair,
    pub step2: StepPair,
    pub composed: StepPair,
    pub effective: ChannelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<usize>,
}

impl StepParams {
    fn identity(&self, pair: StepPair) -> f64 {
        match self.family {
            ChainFamily::Grr => (pair.p / pair.q).ln(),
            ChainFamily::Ue => (pair.p * (1.0 - pair.q) / (pair.q * (1.0 - pair.p))).ln(),
        }
    }

    /// Budget identity evaluated on the composed pair; equals `eps_1`.
    pub fn certified_epsilon(&self) -> f64 {
        self.identity(self.composed)
    }

    /// Budget identity evaluated on the first step alone; equals `eps_inf`.
    pub fn first_step_epsilon(&self) -> f64 {
        match self.family {
            ChainFamily::Grr => {
                // For hashed chains step1.q holds the support-level 1/g.
                let q1 = match self.g {
                    Some(g) => (1.0 - self.step1.p) / (g as f64 - 1.0),
                    None => self.step1.q,
                };
                (self.step1.p / q1).ln()
            }
            ChainFamily::Ue => self.identity(self.step1),
        }
    }

    /// Likelihood ratio of the released report between the user's own value
    /// and another value, in the family's form. Never exceeds `eps_1`.
    pub fn effective_epsilon(&self) -> f64 {
        self.identity(StepPair {
            p: self.effective.p_star,
            q: self.effective.q_star,
        })
    }
}

fn degenerate(b: LongitudinalBudget, detail: impl Into<String>) -> Error {
    Error::DegenerateChain {
        eps_inf: b.eps_inf(),
        eps_1: b.eps_1(),
        detail: detail.into(),
    }
}

fn check_step2(b: LongitudinalBudget, p2: f64, q2: f64) -> Result<(f64, f64)> {
    if !(p2.is_finite() && q2.is_finite()) || p2 > 1.0 + P2_SLACK || !(p2 > q2) || q2 < -P2_SLACK {
        return Err(degenerate(b, format!("second step p2={p2}, q2={q2}")));
    }
    Ok((p2.min(1.0), q2.max(0.0)))
}

fn effective_params(
    b: LongitudinalBudget,
    p: f64,
    q: f64,
    aux: Option<Aux>,
) -> Result<ChannelParams> {
    ChannelParams::new(p, q, aux).map_err(|_| degenerate(b, format!("effective p*={p}, q*={q}")))
}

/// Second step of a GRR chain over `m` symbols.
pub fn grr_second_step(b: LongitudinalBudget, m: usize) -> Result<(f64, f64)> {
    let (ei, e1) = (b.eps_inf(), b.eps_1());
    let m = m as f64;
    let p2 = ((ei + e1).exp() - 1.0)
        / (-m * e1.exp() + (m - 1.0) * ei.exp() + e1.exp() + (e1 + ei).exp() - 1.0);
    let (p2, _) = check_step2(b, p2, (1.0 - p2) / (m - 1.0))?;
    Ok((p2, (1.0 - p2) / (m - 1.0)))
}

/// GRR composed with GRR over the full domain.
pub fn l_grr_params(b: LongitudinalBudget, k: DomainSize) -> Result<StepParams> {
    let m = k.get();
    let (p1, _) = grr_probs(b.eps_inf(), m);
    let q1 = (1.0 - p1) / (m as f64 - 1.0);
    let (p2, q2) = grr_second_step(b, m)?;
    let effective = effective_params(
        b,
        p1 * p2 + (1.0 - p1) * q2,
        q1 * p2 + (1.0 - q1) * q2,
        None,
    )?;
    Ok(StepParams {
        family: ChainFamily::Grr,
        step1: StepPair { p: p1, q: q1 },
        step2: StepPair { p: p2, q: q2 },
        composed: StepPair {
            p: p1 * p2 + q1 * q2,
            q: p1 * q2 + q1 * p2,
        },
        effective,
        g: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LUeVariant {
    /// SUE then SUE (basic RAPPOR).
    LSue,
    /// OUE then OUE.
    LOue,
    /// SUE then OUE.
    LSoue,
    /// OUE then SUE.
    LOsue,
}

impl LUeVariant {
    fn first(self) -> UeVariant {
        match self {
            LUeVariant::LSue | LUeVariant::LSoue => UeVariant::Sue,
            LUeVariant::LOue | LUeVariant::LOsue => UeVariant::Oue,
        }
    }
}

/// Solve for the second-step `q2` of an OUE-shaped second step (`p2 = 1/2`)
/// so that the bit chain meets the UE identity at `eps_1`.
fn oue_second_step(b: LongitudinalBudget, p1: f64, q1: f64) -> Result<(f64, f64)> {
    let big_e = b.eps_1().exp();
    // p* = a0 + a1 x, q* = b0 + b1 x with x = q2.
    let (a0, a1) = (p1 / 2.0, 1.0 - p1);
    let (b0, b1) = (q1 / 2.0, 1.0 - q1);
    let qa = a1 * b1 * (big_e - 1.0);
    let qb = a1 * (1.0 - b0) - a0 * b1 - big_e * (b1 * (1.0 - a0) - a1 * b0);
    let qc = a0 * (1.0 - b0) - big_e * b0 * (1.0 - a0);
    if qc <= 0.0 {
        return Err(degenerate(b, "eps_1 not reachable with an OUE second step"));
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Err(degenerate(b, "no real second-step solution"));
    }
    // Smaller root, in the cancellation-free form.
    let q2 = 2.0 * qc / (-qb + disc.sqrt());
    check_step2(b, 0.5, q2)
}

pub fn l_ue_params(b: LongitudinalBudget, variant: LUeVariant) -> Result<StepParams> {
    let (p1, q1) = ue_probs(b.eps_inf(), variant.first());
    let (p2, q2) = match variant {
        LUeVariant::LSue => {
            let h = (b.eps_1() / 2.0).exp();
            let target = h / (h + 1.0);
            let p2 = (target + p1 - 1.0) / (2.0 * p1 - 1.0);
            check_step2(b, p2, 1.0 - p2)?
        }
        LUeVariant::LOsue => {
            let (a, e1) = (b.eps_inf().exp(), b.eps_1().exp());
            let p2 = (a * e1 - 1.0) / (a - e1 + a * e1 - 1.0);
            check_step2(b, p2, 1.0 - p2)?
        }
        LUeVariant::LOue | LUeVariant::LSoue => oue_second_step(b, p1, q1)?,
    };
    let p = p1 * p2 + (1.0 - p1) * q2;
    let q = q1 * p2 + (1.0 - q1) * q2;
    let effective = effective_params(b, p, q, None)?;
    Ok(StepParams {
        family: ChainFamily::Ue,
        step1: StepPair { p: p1, q: q1 },
        step2: StepPair { p: p2, q: q2 },
        composed: StepPair { p, q },
        effective,
        g: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LLhVariant {
    LBlh,
    LOlh,
}

/// Hash range for the longitudinal local-hashing variants.
pub fn l_lh_g(b: LongitudinalBudget, variant: LLhVariant) -> usize {
    match variant {
        LLhVariant::LBlh => 2,
        LLhVariant::LOlh => {
            let (a, e1) = (b.eps_inf().exp(), b.eps_1().exp());
            let radicand = a.powi(4) - 14.0 * a * a
                + 12.0 * a * e1 * (1.0 - a * e1)
                + 12.0 * a.powi(3) * e1
                + 1.0;
            let x = (1.0 - a * a + radicand.sqrt()) / (6.0 * (a - e1));
            if !x.is_finite() {
                return 2;
            }
            let g = 1.0 + x.round_ties_even().max(1.0);
            if g.is_finite() && g < usize::MAX as f64 {
                (g as usize).max(2)
            } else {
                2
            }
        }
    }
}

pub fn l_lh_params(b: LongitudinalBudget, variant: LLhVariant) -> Result<StepParams> {
    let g = l_lh_g(b, variant);
    let (p1, _) = grr_probs(b.eps_inf(), g);
    let q1_grr = (1.0 - p1) / (g as f64 - 1.0);
    let (p2, q2) = grr_second_step(b, g)?;
    // Another user's value collides with the hash of ours with probability
    // 1/g, which makes q* = 1/g regardless of the chain.
    let effective = effective_params(
        b,
        p1 * p2 + (1.0 - p1) * q2,
        1.0 / g as f64,
        Some(Aux::HashRange(g)),
    )?;
    Ok(StepParams {
        family: ChainFamily::Grr,
        step1: StepPair {
            p: p1,
            q: 1.0 / g as f64,
        },
        step2: StepPair { p: p2, q: q2 },
        composed: StepPair {
            p: p1 * p2 + q1_grr * q2,
            q: p1 * q2 + q1_grr * p2,
        },
        effective,
        g: Some(g),
    })
}

/// A user's memoized first-step output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Memo {
    Item(usize),
    Bits(Vec<u8>),
    Hashed { seed: u64, value: usize },
}

/// Per-user memo of first-step outputs. Entries are written once.
#[derive(Debug, Clone, Default)]
pub struct MemoTable {
    entries: HashMap<usize, Memo>,
}

impl MemoTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, v: usize) -> Option<&Memo> {
        self.entries.get(&v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
enum Chain {
    Grr,
    Ue,
    Lh,
}

/// A longitudinal mechanism with its step parameters resolved.
#[derive(Debug, Clone)]
pub struct LongitudinalMechanism {
    spec: MechanismSpec,
    params: StepParams,
    chain: Chain,
}

impl LongitudinalMechanism {
    pub fn new(spec: MechanismSpec) -> Result<Self> {
        let b = spec
            .longitudinal_budget()
            .ok_or_else(|| Error::BudgetKindMismatch(spec.id.to_string()))?;
        let (params, chain) = match spec.id {
            MechanismId::LGrr => (l_grr_params(b, spec.k)?, Chain::Grr),
            MechanismId::LSue => (l_ue_params(b, LUeVariant::LSue)?, Chain::Ue),
            MechanismId::LOue => (l_ue_params(b, LUeVariant::LOue)?, Chain::Ue),
            MechanismId::LSoue => (l_ue_params(b, LUeVariant::LSoue)?, Chain::Ue),
            MechanismId::LOsue => (l_ue_params(b, LUeVariant::LOsue)?, Chain::Ue),
            MechanismId::LBlh => (l_lh_params(b, LLhVariant::LBlh)?, Chain::Lh),
            MechanismId::LOlh => (l_lh_params(b, LLhVariant::LOlh)?, Chain::Lh),
            other => return Err(Error::BudgetKindMismatch(other.to_string())),
        };
        Ok(LongitudinalMechanism {
            spec,
            params,
            chain,
        })
    }

    pub fn spec(&self) -> &MechanismSpec {
        &self.spec
    }

    pub fn step_params(&self) -> &StepParams {
        &self.params
    }

    fn first_step<R: Rng + ?Sized>(&self, v: usize, rng: &mut R) -> Memo {
        let k = self.spec.k.get();
        let s1 = self.params.step1;
        match self.chain {
            Chain::Grr => Memo::Item(grr_perturb(v, k, s1.p, rng)),
            Chain::Ue => Memo::Bits(ue_perturb(&one_hot(v, k), s1.p, s1.q, rng)),
            Chain::Lh => {
                let g = self.params.g.expect("hash range resolved at construction");
                let seed: u64 = rng.random();
                Memo::Hashed {
                    seed,
                    value: grr_perturb(hash_value(seed, v, g), g, s1.p, rng),
                }
            }
        }
    }

    /// Release one report for `v`, memoizing the first step in `memo`.
    pub fn client<R: Rng + ?Sized>(
        &self,
        v: usize,
        memo: &mut MemoTable,
        rng: &mut R,
    ) -> Result<Report> {
        self.spec.k.check(v)?;
        if !memo.entries.contains_key(&v) {
            let first = self.first_step(v, rng);
            memo.entries.insert(v, first);
        }
        let s2 = self.params.step2;
        Ok(match &memo.entries[&v] {
            Memo::Item(y) => Report::Item {
                index: grr_perturb(*y, self.spec.k.get(), s2.p, rng),
            },
            Memo::Bits(bits) => Report::Bits {
                bits: ue_perturb(bits, s2.p, s2.q, rng),
            },
            Memo::Hashed { seed, value } => {
                let g = self.params.g.expect("hash range resolved at construction");
                Report::Hashed {
                    seed: *seed,
                    value: grr_perturb(*value, g, s2.p, rng),
                }
            }
        })
    }
}

/// One-off client call: resolves the mechanism parameters and releases a
/// report, memoizing into `memo`.
pub fn l_client<R: Rng + ?Sized>(
    v: usize,
    spec: &MechanismSpec,
    memo: &mut MemoTable,
    rng: &mut R,
) -> Result<Report> {
    LongitudinalMechanism::new(*spec)?.client(v, memo, rng)
}
