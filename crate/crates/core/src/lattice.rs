//! Log-domain arithmetic and the fast zeta transform over subset lattices.
//!
//! All weights handled by the sampler are stored as natural logarithms of
//! nonnegative reals. Negative infinity encodes an exact zero.

use crate::error::{Error, Result};

/// Largest ground set accepted by [`SubsetArray`].
pub const MAX_GROUND_SET: usize = 25;

/// Relative difference below which a log-domain subtraction is treated as
/// having lost all significant digits.
pub const DEFAULT_CANCELLATION_THRESHOLD: f64 = 1.0 / 4_294_967_296.0; // 2^-32

/// Tolerance for a subtrahend that exceeds the minuend only through rounding.
const ORDER_SLACK: f64 = 1e-9;

/// `log(e^a + e^b)`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log(e^a - e^b)` with the default cancellation threshold.
///
/// Returns the value together with a cancellation flag. A flagged result is
/// reported as negative infinity and must not be trusted.
#[inline]
pub fn log_sub(a: f64, b: f64) -> Result<(f64, bool)> {
    log_sub_with(a, b, DEFAULT_CANCELLATION_THRESHOLD)
}

/// `log(e^a - e^b)`, flagging cancellation when `1 - e^(b-a) < threshold`.
#[inline]
pub fn log_sub_with(a: f64, b: f64, threshold: f64) -> Result<(f64, bool)> {
    if b == f64::NEG_INFINITY {
        return Ok((a, false));
    }
    if a.is_nan() || b.is_nan() || b > a + ORDER_SLACK {
        return Err(Error::OrderViolation { a, b });
    }
    let rel = -(b - a).min(0.0).exp_m1();
    if rel < threshold {
        Ok((f64::NEG_INFINITY, true))
    } else {
        Ok((a + rel.ln(), false))
    }
}

/// Log-sum-exp over a slice.
pub fn log_sum(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// A log-valued function on the subsets of `{0, .., m-1}`, indexed by bitmask.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetArray {
    m: usize,
    entries: Vec<f64>,
}

impl SubsetArray {
    pub fn new(m: usize, entries: Vec<f64>) -> Result<Self> {
        if m > MAX_GROUND_SET {
            return Err(Error::Config(format!(
                "ground set of size {m} exceeds the limit {MAX_GROUND_SET}"
            )));
        }
        if entries.len() != 1 << m {
            return Err(Error::Config(format!(
                "subset array over {m} elements needs {} entries, got {}",
                1usize << m,
                entries.len()
            )));
        }
        if entries.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Config("subset array holds NaN or +inf".into()));
        }
        Ok(Self { m, entries })
    }

    pub fn ground_size(&self) -> usize {
        self.m
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    #[inline]
    pub fn get(&self, mask: usize) -> f64 {
        self.entries[mask]
    }

    /// Replaces every entry by the log-sum over its subsets, in place.
    pub fn zeta_in_place(&mut self) {
        zeta_slice(&mut self.entries);
    }
}

/// `g(T) = log sum_{S subset of T} e^{f(S)}` for every `T`.
pub fn fast_zeta(f: &SubsetArray) -> SubsetArray {
    let mut g = f.clone();
    g.zeta_in_place();
    g
}

/// In-place butterfly passes in increasing bit order. `xs.len()` must be a power of two.
pub(crate) fn zeta_slice(xs: &mut [f64]) {
    debug_assert!(xs.len().is_power_of_two());
    let mut bit = 1;
    while bit < xs.len() {
        for block in xs.chunks_exact_mut(bit * 2) {
            let (without, with) = block.split_at_mut(bit);
            for (lo, hi) in without.iter().zip(with.iter_mut()) {
                *hi = log_add(*lo, *hi);
            }
        }
        bit <<= 1;
    }
}

/// Iterator over the submasks of `mask`, from `mask` itself down to zero.
pub fn submasks(mask: usize) -> impl Iterator<Item = usize> {
    let mut next = Some(mask);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 { None } else { Some((cur - 1) & mask) };
        Some(cur)
    })
}
