//! Per-node score sums `tau_i(U, T)`: the sum of `pi_i(S)` over parent sets
//! `S ⊆ U` that intersect `T`.
//!
//! `tau_i(U)` (all subsets of `U ∩ C_i`) is the zeta transform of the score
//! table; a constrained sum is one log-domain subtraction,
//! `tau_i(U, T) = tau_i(U) - tau_i(U \ T)`. Pairs where that subtraction loses
//! its significant digits are found during preprocessing and stored exactly.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::lattice::{self, log_add, log_sub_with, SubsetArray};
use crate::scores::LocalScoreTable;

/// Relative gap below which a query is answered from the exact store. Zeta sums
/// carry relative error near 1e-14, so a subtraction with gap `g` is good to about
/// `1e-14 / g`; `2^-16` keeps every answer within 1e-9.
pub const TAU_CANCELLATION_THRESHOLD: f64 = 1.0 / 65_536.0;

#[derive(Debug, Clone)]
pub struct TauTable {
    pub node: usize,
    pub candidates: Vec<usize>,
    log_tau: SubsetArray,
    log_empty: f64,
    exceptions: HashMap<u64, f64>,
    threshold: f64,
}

#[inline]
fn pack(k: usize, u: usize, t: usize) -> u64 {
    ((u as u64) << k) | t as u64
}

impl TauTable {
    pub fn k(&self) -> usize {
        self.candidates.len()
    }

    /// `log tau_i(J)` for a candidate-position mask `J`.
    #[inline]
    pub fn log_tau(&self, mask: usize) -> f64 {
        self.log_tau.get(mask)
    }

    /// `log pi_i(∅)`, the factor of a root node.
    #[inline]
    pub fn log_empty(&self) -> f64 {
        self.log_empty
    }

    pub fn exception_count(&self) -> usize {
        self.exceptions.len()
    }

    /// Exactly stored `(U, T)` pairs as `(u_mask, t_mask, log value)`.
    pub fn exceptions(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let k = self.k();
        self.exceptions
            .iter()
            .map(move |(&key, &v)| ((key >> k) as usize, (key & ((1u64 << k) - 1)) as usize, v))
    }

    /// `log tau_i(U, T)` for candidate-position masks with `T ⊆ U`.
    ///
    /// An empty `T` yields `-inf`: no parent set can intersect it.
    #[inline]
    pub fn query_masks(&self, u: usize, t: usize) -> f64 {
        debug_assert_eq!(t & !u, 0);
        if t == 0 {
            return f64::NEG_INFINITY;
        }
        match log_sub_with(self.log_tau.get(u), self.log_tau.get(u & !t), self.threshold) {
            Ok((v, false)) => v,
            _ => self
                .exceptions
                .get(&pack(self.k(), u, t))
                .copied()
                .unwrap_or(f64::NEG_INFINITY),
        }
    }

    /// `log tau_i(u, t)` for node sets; both are intersected with the candidates.
    pub fn query(&self, u: &[usize], t: &[usize]) -> Result<f64> {
        if t.iter().any(|x| !u.contains(x)) {
            return Err(Error::NotSubset);
        }
        Ok(self.query_masks(self.mask_of(u), self.mask_of(t)))
    }

    /// `log tau_i(u)`: unrestricted sum over subsets of `u ∩ C_i`.
    pub fn query_unrestricted(&self, u: &[usize]) -> f64 {
        self.log_tau.get(self.mask_of(u))
    }

    fn mask_of(&self, set: &[usize]) -> usize {
        self.candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| set.contains(c))
            .fold(0, |m, (b, _)| m | 1 << b)
    }
}

/// Builds the tau table with [`TAU_CANCELLATION_THRESHOLD`].
pub fn build_tau(t: &LocalScoreTable) -> TauTable {
    build_tau_with(t, TAU_CANCELLATION_THRESHOLD)
}

/// Builds the tau table, sweeping all `T ⊆ U ⊆ C_i` and storing the exact value of
/// every pair whose subtraction is flagged.
pub fn build_tau_with(t: &LocalScoreTable, threshold: f64) -> TauTable {
    let k = t.k();
    let full = (1usize << k) - 1;
    let scores = &t.log_scores;
    let mut log_tau = SubsetArray::new(k, scores.clone()).expect("score table shape");
    log_tau.zeta_in_place();

    // singles[j][V] = sum over S ⊆ V \ {j} of pi(S ∪ {j}). One zeta pass per candidate.
    let singles: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let bit = 1usize << j;
            let mut h: Vec<f64> = (0..=full)
                .map(|v| if v & bit != 0 { f64::NEG_INFINITY } else { scores[v | bit] })
                .collect();
            lattice::zeta_slice(&mut h);
            h
        })
        .collect();

    let mut exceptions = HashMap::new();
    for u in 0..=full {
        let tau_u = log_tau.get(u);
        let mut t_mask = u;
        while t_mask != 0 {
            let flagged = match log_sub_with(tau_u, log_tau.get(u & !t_mask), threshold) {
                Ok((_, flag)) => flag,
                Err(_) => true,
            };
            if flagged {
                exceptions.insert(pack(k, u, t_mask), exact_tau(&singles, u, t_mask));
            }
            t_mask = (t_mask - 1) & u;
        }
    }

    TauTable {
        node: t.node,
        candidates: t.candidates.clone(),
        log_tau,
        log_empty: scores[0],
        exceptions,
        threshold,
    }
}

/// `tau(U, T) = tau(U, {j}) + tau(U \ {j}, T \ {j})` with `j` the lowest bit of `T`,
/// unrolled down to the single-element base cases.
fn exact_tau(singles: &[Vec<f64>], mut u: usize, mut t: usize) -> f64 {
    let mut acc = f64::NEG_INFINITY;
    while t != 0 {
        let j = t.trailing_zeros() as usize;
        acc = log_add(acc, singles[j][u]);
        u &= !(1 << j);
        t &= !(1 << j);
    }
    acc
}
