//! Uniform client/server view over all fourteen mechanisms.

use rand::Rng;

use crate::error::{Error, Result};
use crate::longitudinal::{LongitudinalMechanism, MemoTable, StepParams};
use crate::oneshot::{self, grr, lh, ss, the, ue, LhVariant, UeVariant};
use crate::types::{ChannelParams, MechanismId, MechanismSpec, PrivacyBudget, Report};

#[derive(Debug, Clone)]
enum Inner {
    Grr { keep: f64 },
    Ue { p: f64, q: f64 },
    Lh { g: usize, keep: f64 },
    Ss { omega: usize, keep: f64 },
    The { scale: f64 },
    Longitudinal(Box<LongitudinalMechanism>),
}

/// A mechanism with all client and server parameters resolved from its
/// [`MechanismSpec`].
#[derive(Debug, Clone)]
pub struct Mechanism {
    spec: MechanismSpec,
    params: ChannelParams,
    inner: Inner,
}

impl Mechanism {
    pub fn new(spec: MechanismSpec) -> Result<Self> {
        if spec.id.is_longitudinal() {
            let l = LongitudinalMechanism::new(spec)?;
            return Ok(Mechanism {
                spec,
                params: l.step_params().effective,
                inner: Inner::Longitudinal(Box::new(l)),
            });
        }
        let eps = spec
            .one_shot_budget()
            .ok_or_else(|| Error::BudgetKindMismatch(spec.id.to_string()))?;
        let (params, inner) = one_shot_parts(spec, eps)?;
        Ok(Mechanism {
            spec,
            params,
            inner,
        })
    }

    pub fn spec(&self) -> &MechanismSpec {
        &self.spec
    }

    pub fn id(&self) -> MechanismId {
        self.spec.id
    }

    pub fn k(&self) -> usize {
        self.spec.k.get()
    }

    /// Support probabilities `(p*, q*)` used by the estimators.
    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn step_params(&self) -> Option<&StepParams> {
        match &self.inner {
            Inner::Longitudinal(l) => Some(l.step_params()),
            _ => None,
        }
    }

    /// Obfuscate `v`. Longitudinal mechanisms use a fresh memo, i.e. this is
    /// the first report of a new user.
    pub fn client<R: Rng + ?Sized>(&self, v: usize, rng: &mut R) -> Result<Report> {
        self.client_with_memo(v, &mut MemoTable::new(), rng)
    }

    pub fn client_with_memo<R: Rng + ?Sized>(
        &self,
        v: usize,
        memo: &mut MemoTable,
        rng: &mut R,
    ) -> Result<Report> {
        self.spec.k.check(v)?;
        let k = self.k();
        Ok(match &self.inner {
            Inner::Grr { keep } => Report::Item {
                index: grr::grr_perturb(v, k, *keep, rng),
            },
            Inner::Ue { p, q } => Report::Bits {
                bits: ue::ue_perturb(&ue::one_hot(v, k), *p, *q, rng),
            },
            Inner::Lh { g, keep } => {
                let seed: u64 = rng.random();
                Report::Hashed {
                    seed,
                    value: grr::grr_perturb(crate::hash::hash_value(seed, v, *g), *g, *keep, rng),
                }
            }
            Inner::Ss { omega, keep } => Report::Subset {
                items: ss::ss_perturb(v, k, *omega, *keep, rng),
            },
            Inner::The { scale } => Report::NoisyHist {
                values: (0..k)
                    .map(|i| if i == v { 1.0 } else { 0.0 } + the::laplace(*scale, rng))
                    .collect(),
            },
            Inner::Longitudinal(l) => l.client(v, memo, rng)?,
        })
    }

    /// Reject reports of the wrong kind or with broken structure.
    pub fn check_report(&self, report: &Report) -> Result<()> {
        let expected = self.spec.id.report_kind();
        if report.kind() != expected {
            return Err(Error::KindMismatch {
                expected: expected.name(),
                found: report.kind().name(),
            });
        }
        report.validate(self.k(), self.params.hash_range())
    }

    pub fn supports(&self, report: &Report, v: usize) -> Result<bool> {
        self.check_report(report)?;
        self.spec.k.check(v)?;
        oneshot::support_contains(report, v, &self.params)
    }
}

fn one_shot_parts(spec: MechanismSpec, eps: PrivacyBudget) -> Result<(ChannelParams, Inner)> {
    let k = spec.k;
    Ok(match spec.id {
        MechanismId::Grr => {
            let params = grr::grr_params(eps, k)?;
            (
                params,
                Inner::Grr {
                    keep: params.p_star,
                },
            )
        }
        MechanismId::Sue | MechanismId::Oue => {
            let variant = if spec.id == MechanismId::Sue {
                UeVariant::Sue
            } else {
                UeVariant::Oue
            };
            let params = ue::ue_params(eps, variant)?;
            (
                params,
                Inner::Ue {
                    p: params.p_star,
                    q: params.q_star,
                },
            )
        }
        MechanismId::Blh | MechanismId::Olh => {
            let variant = if spec.id == MechanismId::Blh {
                LhVariant::Blh
            } else {
                LhVariant::Olh
            };
            let params = lh::lh_params(eps, variant)?;
            let g = lh::lh_g(eps, variant);
            (
                params,
                Inner::Lh {
                    g,
                    keep: params.p_star,
                },
            )
        }
        MechanismId::Ss => {
            let params = ss::ss_params(eps, k)?;
            let omega = ss::ss_omega(eps, k);
            (
                params,
                Inner::Ss {
                    omega,
                    keep: params.p_star,
                },
            )
        }
        MechanismId::The => (
            the::the_params(eps)?,
            Inner::The {
                scale: 2.0 / eps.get(),
            },
        ),
        other => return Err(Error::BudgetKindMismatch(other.to_string())),
    })
}
