//! One-time pure LDP mechanisms: client-side obfuscation, server-side
//! channel parameters and support sets.

pub mod grr;
pub mod lh;
pub mod ss;
pub mod the;
pub mod ue;

pub use grr::{grr_client, grr_params};
pub use lh::{lh_client, lh_g, lh_params, LhVariant};
pub use ss::{ss_client, ss_omega, ss_params};
pub use the::{the_client, the_params, the_theta};
pub use ue::{ue_client, ue_params, UeVariant};

use crate::error::{Error, Result};
use crate::hash::hash_value;
use crate::types::{ChannelParams, Report};

fn missing_aux(report: &Report) -> Error {
    Error::KindMismatch {
        expected: "channel parameters carrying the matching auxiliary value",
        found: report.kind().name(),
    }
}

fn entry<T: Copy>(xs: &[T], v: usize) -> Result<T> {
    xs.get(v).copied().ok_or(Error::IndexOutOfDomain {
        index: v,
        k: xs.len(),
    })
}

/// Whether `report` supports item `v`.
pub fn support_contains(report: &Report, v: usize, params: &ChannelParams) -> Result<bool> {
    Ok(match report {
        Report::Item { index } => *index == v,
        Report::Bits { bits } => entry(bits, v)? == 1,
        Report::Hashed { seed, value } => {
            let g = params.hash_range().ok_or_else(|| missing_aux(report))?;
            hash_value(*seed, v, g) == *value
        }
        Report::Subset { items } => items.contains(&v),
        Report::NoisyHist { values } => {
            let theta = params.threshold().ok_or_else(|| missing_aux(report))?;
            entry(values, v)? > theta
        }
    })
}

/// Add one to `counts[v]` for every `v` the report supports. Equivalent to
/// calling [`support_contains`] for each `v`, without the per-item dispatch.
pub fn accumulate_support(
    report: &Report,
    params: &ChannelParams,
    counts: &mut [u64],
) -> Result<()> {
    let k = counts.len();
    match report {
        Report::Item { index } => {
            counts[entry_index(*index, k)?] += 1;
        }
        Report::Bits { bits } => {
            check_len(bits.len(), k)?;
            for (c, &b) in counts.iter_mut().zip(bits) {
                *c += b as u64;
            }
        }
        Report::Hashed { seed, value } => {
            let g = params.hash_range().ok_or_else(|| missing_aux(report))?;
            for (v, c) in counts.iter_mut().enumerate() {
                if hash_value(*seed, v, g) == *value {
                    *c += 1;
                }
            }
        }
        Report::Subset { items } => {
            for &i in items {
                counts[entry_index(i, k)?] += 1;
            }
        }
        Report::NoisyHist { values } => {
            let theta = params.threshold().ok_or_else(|| missing_aux(report))?;
            check_len(values.len(), k)?;
            for (c, &y) in counts.iter_mut().zip(values) {
                if y > theta {
                    *c += 1;
                }
            }
        }
    }
    Ok(())
}

fn entry_index(i: usize, k: usize) -> Result<usize> {
    if i < k {
        Ok(i)
    } else {
        Err(Error::IndexOutOfDomain { index: i, k })
    }
}

fn check_len(len: usize, k: usize) -> Result<()> {
    if len == k {
        Ok(())
    } else {
        Err(Error::LengthMismatch(len, k))
    }
}
