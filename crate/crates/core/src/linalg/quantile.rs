//! Multiset quantiles: `q`-quantile of `m` values is the `(q m)`-th
//! smallest element, counting duplicates with multiplicity.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraction::Fraction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultisetQuantileSpec {
    pub q: Fraction,
    pub m: usize,
}

impl MultisetQuantileSpec {
    pub fn new(q: Fraction, m: usize) -> Result<Self> {
        if q.is_zero() || q > Fraction::ONE {
            return Err(Error::InvalidSpec(format!("quantile level {q} must lie in (0, 1]")));
        }
        q.count(m)?;
        Ok(Self { q, m })
    }

    /// Size of the lower set `L_q`.
    pub fn count(&self) -> usize {
        self.q.count(self.m).expect("checked at construction")
    }
}

/// Total order on (value, index); ties resolve toward the lower index.
#[inline]
pub(crate) fn value_index_cmp(values: &[f64], a: usize, b: usize) -> Ordering {
    values[a].total_cmp(&values[b]).then(a.cmp(&b))
}

/// The `k`-th smallest element (1-indexed) of `values`.
pub fn order_statistic(values: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > values.len() {
        return Err(Error::IndexOutOfRange { index: k, len: values.len() });
    }
    let mut buf = values.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    Ok(*kth)
}

pub fn quantile(values: &[f64], spec: MultisetQuantileSpec) -> Result<f64> {
    if values.len() != spec.m {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a quantile over {} items",
            values.len(),
            spec.m
        )));
    }
    order_statistic(values, spec.count())
}

/// Indices of `L_q`: exactly `q m` positions whose values are at most the
/// quantile, lowest indices first among ties. Returned in ascending order.
pub fn lower_set(values: &[f64], spec: MultisetQuantileSpec) -> Result<Vec<usize>> {
    if values.len() != spec.m {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a quantile over {} items",
            values.len(),
            spec.m
        )));
    }
    let k = spec.count();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.select_nth_unstable_by(k - 1, |&a, &b| value_index_cmp(values, a, b));
    let mut set = order[..k].to_vec();
    set.sort_unstable();
    Ok(set)
}
