//! Shared domain vocabulary: domain sizes, privacy budgets, distributions,
//! channel parameters, reports and mechanism specifications.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a probability vector.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Cardinality of the data domain. Values are dense indices `0..k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct DomainSize(usize);

impl DomainSize {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidDomainSize(k));
        }
        Ok(DomainSize(k))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn check(self, v: usize) -> Result<()> {
        if v < self.0 {
            Ok(())
        } else {
            Err(Error::IndexOutOfDomain {
                index: v,
                k: self.0,
            })
        }
    }
}

impl TryFrom<usize> for DomainSize {
    type Error = Error;
    fn try_from(k: usize) -> Result<Self> {
        DomainSize::new(k)
    }
}

impl From<DomainSize> for usize {
    fn from(k: DomainSize) -> usize {
        k.0
    }
}

/// A one-shot privacy budget ε, in nats.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon.is_finite() && epsilon > 0.0 {
            Ok(PrivacyBudget(epsilon))
        } else {
            Err(Error::InvalidBudget(epsilon))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn exp(self) -> f64 {
        self.0.exp()
    }
}

impl TryFrom<f64> for PrivacyBudget {
    type Error = Error;
    fn try_from(e: f64) -> Result<Self> {
        PrivacyBudget::new(e)
    }
}

impl From<PrivacyBudget> for f64 {
    fn from(e: PrivacyBudget) -> f64 {
        e.0
    }
}

/// Budget pair for memoization-based mechanisms: `eps_inf` bounds the
/// memoized first step, `eps_1` bounds the first released report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLongitudinal")]
pub struct LongitudinalBudget {
    eps_inf: f64,
    eps_1: f64,
}

#[derive(Deserialize)]
struct RawLongitudinal {
    eps_inf: f64,
    eps_1: f64,
}

impl TryFrom<RawLongitudinal> for LongitudinalBudget {
    type Error = Error;
    fn try_from(r: RawLongitudinal) -> Result<Self> {
        LongitudinalBudget::new(r.eps_inf, r.eps_1)
    }
}

impl LongitudinalBudget {
    pub fn new(eps_inf: f64, eps_1: f64) -> Result<Self> {
        let ok = eps_inf.is_finite() && eps_1.is_finite() && eps_1 > 0.0 && eps_1 <= eps_inf;
        if !ok {
            return Err(Error::InvalidLongitudinalBudget { eps_inf, eps_1 });
        }
        Ok(LongitudinalBudget { eps_inf, eps_1 })
    }

    pub fn eps_inf(&self) -> f64 {
        self.eps_inf
    }

    pub fn eps_1(&self) -> f64 {
        self.eps_1
    }
}

/// Which quantity a [`Distribution`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionRole {
    True,
    Observed,
    Estimated,
}

/// A probability vector over `0..k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probs: Vec<f64>,
    role: DistributionRole,
}

impl Distribution {
    pub fn new(probs: Vec<f64>, role: DistributionRole) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        for (index, &value) in probs.iter().enumerate() {
            // NaN fails this comparison too.
            if !(value >= 0.0) {
                return Err(Error::NegativeEntry { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if !((sum - 1.0).abs() <= NORMALIZATION_TOL) {
            return Err(Error::NotNormalized(sum));
        }
        Ok(Distribution { probs, role })
    }

    pub fn uniform(k: usize, role: DistributionRole) -> Self {
        Distribution {
            probs: vec![1.0 / k as f64; k],
            role,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn role(&self) -> DistributionRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Check a raw vector and wrap it as an estimated distribution.
pub fn validate_distribution(probs: &[f64]) -> Result<Distribution> {
    Distribution::new(probs.to_vec(), DistributionRole::Estimated)
}

/// Mechanism-specific auxiliary channel parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aux {
    /// Hash range size `g` of local hashing.
    HashRange(usize),
    /// Subset size `ω` of subset selection.
    SubsetSize(usize),
    /// Support threshold `θ` of thresholded histogram encoding.
    Threshold(f64),
}

/// The pure-LDP pair `(p*, q*)`: probability that a report supports the
/// user's own value, and that it supports any given other value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub p_star: f64,
    pub q_star: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<Aux>,
}

impl ChannelParams {
    pub fn new(p_star: f64, q_star: f64, aux: Option<Aux>) -> Result<Self> {
        if !(0.0 < q_star && q_star < p_star && p_star < 1.0) {
            return Err(Error::InvalidChannel { p_star, q_star });
        }
        Ok(ChannelParams {
            p_star,
            q_star,
            aux,
        })
    }

    /// Construct without the strict pure-LDP ordering check. Used for the
    /// noiseless limit (`p* = 1`, `q* = 0`) in tests and diagnostics.
    pub fn unchecked(p_star: f64, q_star: f64, aux: Option<Aux>) -> Self {
        ChannelParams {
            p_star,
            q_star,
            aux,
        }
    }

    pub fn hash_range(&self) -> Option<usize> {
        match self.aux {
            Some(Aux::HashRange(g)) => Some(g),
            _ => None,
        }
    }

    pub fn subset_size(&self) -> Option<usize> {
        match self.aux {
            Some(Aux::SubsetSize(w)) => Some(w),
            _ => None,
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        match self.aux {
            Some(Aux::Threshold(t)) => Some(t),
            _ => None,
        }
    }
}

/// An obfuscated report as sent by one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Item { index: usize },
    Bits { bits: Vec<u8> },
    Hashed { seed: u64, value: usize },
    Subset { items: Vec<usize> },
    NoisyHist { values: Vec<f64> },
}

impl Report {
    pub fn kind(&self) -> ReportKind {
        match self {
            Report::Item { .. } => ReportKind::Item,
            Report::Bits { .. } => ReportKind::Bits,
            Report::Hashed { .. } => ReportKind::Hashed,
            Report::Subset { .. } => ReportKind::Subset,
            Report::NoisyHist { .. } => ReportKind::NoisyHist,
        }
    }

    /// Check structural invariants against the domain size and, for hashed
    /// reports, the hash range.
    pub fn validate(&self, k: usize, g: Option<usize>) -> Result<()> {
        match self {
            Report::Item { index } if *index >= k => {
                Err(Error::IndexOutOfDomain { index: *index, k })
            }
            Report::Bits { bits } => {
                if bits.len() != k {
                    return Err(Error::MalformedReport(format!(
                        "bit vector has length {}, expected {k}",
                        bits.len()
                    )));
                }
                if bits.iter().any(|&b| b > 1) {
                    return Err(Error::MalformedReport(
                        "bit vector entries must be 0 or 1".into(),
                    ));
                }
                Ok(())
            }
            Report::Hashed { value, .. } => match g {
                Some(g) if *value >= g => Err(Error::MalformedReport(format!(
                    "hash value {value} outside range {g}"
                ))),
                _ => Ok(()),
            },
            Report::Subset { items } => {
                if let Some(&bad) = items.iter().find(|&&i| i >= k) {
                    return Err(Error::IndexOutOfDomain { index: bad, k });
                }
                let mut sorted = items.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != items.len() {
                    return Err(Error::MalformedReport("subset has duplicate items".into()));
                }
                Ok(())
            }
            Report::NoisyHist { values } if values.len() != k => Err(Error::MalformedReport(
                format!("histogram has length {}, expected {k}", values.len()),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Item,
    Bits,
    Hashed,
    Subset,
    NoisyHist,
}

impl ReportKind {
    pub fn name(self) -> &'static str {
        match self {
            ReportKind::Item => "item",
            ReportKind::Bits => "bits",
            ReportKind::Hashed => "hashed",
            ReportKind::Subset => "subset",
            ReportKind::NoisyHist => "noisy_hist",
        }
    }
}

/// The fourteen supported mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MechanismId {
    Grr,
    Sue,
    Oue,
    Ss,
    The,
    Blh,
    Olh,
    LGrr,
    LSue,
    LOue,
    LSoue,
    LOsue,
    LBlh,
    LOlh,
}

impl MechanismId {
    pub const ONE_SHOT: [MechanismId; 7] = [
        MechanismId::Grr,
        MechanismId::Sue,
        MechanismId::Oue,
        MechanismId::Ss,
        MechanismId::The,
        MechanismId::Blh,
        MechanismId::Olh,
    ];

    pub const LONGITUDINAL: [MechanismId; 7] = [
        MechanismId::LGrr,
        MechanismId::LSue,
        MechanismId::LOue,
        MechanismId::LSoue,
        MechanismId::LOsue,
        MechanismId::LBlh,
        MechanismId::LOlh,
    ];

    pub fn all() -> impl Iterator<Item = MechanismId> {
        Self::ONE_SHOT.into_iter().chain(Self::LONGITUDINAL)
    }

    pub fn is_longitudinal(self) -> bool {
        Self::LONGITUDINAL.contains(&self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MechanismId::Grr => "GRR",
            MechanismId::Sue => "SUE",
            MechanismId::Oue => "OUE",
            MechanismId::Ss => "SS",
            MechanismId::The => "THE",
            MechanismId::Blh => "BLH",
            MechanismId::Olh => "OLH",
            MechanismId::LGrr => "L-GRR",
            MechanismId::LSue => "L-SUE",
            MechanismId::LOue => "L-OUE",
            MechanismId::LSoue => "L-SOUE",
            MechanismId::LOsue => "L-OSUE",
            MechanismId::LBlh => "L-BLH",
            MechanismId::LOlh => "L-OLH",
        }
    }

    pub fn report_kind(self) -> ReportKind {
        use MechanismId::*;
        match self {
            Grr | LGrr => ReportKind::Item,
            Sue | Oue | LSue | LOue | LSoue | LOsue => ReportKind::Bits,
            Blh | Olh | LBlh | LOlh => ReportKind::Hashed,
            Ss => ReportKind::Subset,
            The => ReportKind::NoisyHist,
        }
    }
}

impl fmt::Display for MechanismId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MechanismId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        MechanismId::all()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| Error::UnknownMechanism(s.to_string()))
    }
}

impl Serialize for MechanismId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for MechanismId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Budget {
    OneShot(PrivacyBudget),
    Longitudinal(LongitudinalBudget),
}

/// Mechanism id, domain size and budget: everything the client and the
/// server need to agree on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub id: MechanismId,
    pub k: DomainSize,
    pub budget: Budget,
}

impl MechanismSpec {
    pub fn new(id: MechanismId, k: DomainSize, budget: Budget) -> Result<Self> {
        let matches = matches!(
            (id.is_longitudinal(), &budget),
            (false, Budget::OneShot(_)) | (true, Budget::Longitudinal(_))
        );
        if !matches {
            return Err(Error::BudgetKindMismatch(id.to_string()));
        }
        Ok(MechanismSpec { id, k, budget })
    }

    pub fn one_shot(id: MechanismId, k: usize, eps: f64) -> Result<Self> {
        Self::new(
            id,
            DomainSize::new(k)?,
            Budget::OneShot(PrivacyBudget::new(eps)?),
        )
    }

    pub fn longitudinal(id: MechanismId, k: usize, eps_inf: f64, eps_1: f64) -> Result<Self> {
        Self::new(
            id,
            DomainSize::new(k)?,
            Budget::Longitudinal(LongitudinalBudget::new(eps_inf, eps_1)?),
        )
    }

    pub fn one_shot_budget(&self) -> Option<PrivacyBudget> {
        match self.budget {
            Budget::OneShot(e) => Some(e),
            Budget::Longitudinal(_) => None,
        }
    }

    pub fn longitudinal_budget(&self) -> Option<LongitudinalBudget> {
        match self.budget {
            Budget::Longitudinal(b) => Some(b),
            Budget::OneShot(_) => None,
        }
    }
}
