//! Metropolis-Hastings over root-partitions with Metropolis coupling.
//!
//! A state is an ordered partition `R_1 .. R_k`; its unnormalized posterior is
//! `prod_t prod_{i in R_t} tau_i(R_1 ∪ .. ∪ R_{t-1}, R_{t-1})`, with roots
//! contributing `pi_i(∅)`. Proposals are uniform over the union of all split,
//! merge and swap moves.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RootPartition;
use crate::tau::TauTable;

/// Log factor of one node given the part it sits in.
#[inline]
pub(crate) fn node_factor(tau: &TauTable, part_index: &[usize], part: usize) -> f64 {
    if part == 0 {
        return tau.log_empty();
    }
    let mut u = 0usize;
    let mut t = 0usize;
    for (b, &c) in tau.candidates.iter().enumerate() {
        let pc = part_index[c];
        if pc < part {
            u |= 1 << b;
            if pc + 1 == part {
                t |= 1 << b;
            }
        }
    }
    tau.query_masks(u, t)
}

/// `log pi(R)`; `-inf` when any node has no admissible parent set.
pub fn partition_score(r: &RootPartition, taus: &[TauTable]) -> f64 {
    let idx = r.part_index();
    let mut acc = 0.0;
    for (t, part) in r.parts().iter().enumerate() {
        for &i in part {
            acc += node_factor(&taus[i], &idx, t);
            if acc == f64::NEG_INFINITY {
                return acc;
            }
        }
    }
    acc
}

/// Neighbourhood size by move type. Kept as floats: split counts grow as `2^|R_t|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveCounts {
    pub splits: f64,
    pub merges: f64,
    pub swaps: f64,
}

impl MoveCounts {
    pub fn total(&self) -> f64 {
        self.splits + self.merges + self.swaps
    }
}

pub fn enumerate_moves(r: &RootPartition) -> MoveCounts {
    let sizes: Vec<f64> = r.parts().iter().map(|p| p.len() as f64).collect();
    let n: f64 = sizes.iter().sum();
    let sq: f64 = sizes.iter().map(|s| s * s).sum();
    MoveCounts {
        splits: sizes.iter().map(|&s| s.exp2() - 2.0).sum(),
        merges: (sizes.len() - 1) as f64,
        swaps: (n * n - sq) / 2.0,
    }
}

/// Draws one neighbour uniformly; returns it with `log q(r | r') - log q(r' | r)`.
pub fn propose<R: Rng + ?Sized>(r: &RootPartition, rng: &mut R) -> Result<(RootPartition, f64)> {
    let counts = enumerate_moves(r);
    let total = counts.total();
    if total <= 0.0 {
        return Err(Error::NoMoves);
    }
    let mut next = r.clone();
    let mut x = rng.random::<f64>() * total;
    if x < counts.splits {
        let parts = next.parts_mut();
        let mut t = parts.len() - 1;
        for (idx, p) in parts.iter().enumerate() {
            let w = (p.len() as f64).exp2() - 2.0;
            if x < w {
                t = idx;
                break;
            }
            x -= w;
        }
        let members = std::mem::take(&mut parts[t]);
        let (first, second) = loop {
            let (a, b): (Vec<usize>, Vec<usize>) =
                members.iter().partition(|_| rng.random::<bool>());
            if !a.is_empty() && !b.is_empty() {
                break (a, b);
            }
        };
        parts[t] = first;
        parts.insert(t + 1, second);
    } else if x < counts.splits + counts.merges {
        let parts = next.parts_mut();
        let t = rng.random_range(0..parts.len() - 1);
        let tail = parts.remove(t + 1);
        parts[t].extend(tail);
        parts[t].sort_unstable();
    } else {
        let idx = r.part_index();
        let n = idx.len();
        let (a, b) = loop {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if idx[a] != idx[b] {
                break (a, b);
            }
        };
        let parts = next.parts_mut();
        for (v, w) in [(a, b), (b, a)] {
            let p = &mut parts[idx[v]];
            let pos = p.binary_search(&v).expect("node in its part");
            p[pos] = w;
            p.sort_unstable();
        }
    }
    let log_q_ratio = total.ln() - enumerate_moves(&next).total().ln();
    Ok((next, log_q_ratio))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Number of coupled chains `M`.
    pub chains: usize,
    /// Total steps `L`.
    pub length: usize,
    pub thinning: usize,
    pub burn_in_fraction: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 16,
            length: 100_000,
            thinning: 50,
            burn_in_fraction: 0.5,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains < 1 || self.length < 1 || self.thinning < 1 {
            return Err(Error::Config(
                "chains, length and thinning must all be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::Config("burn-in fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn burn_in_steps(&self) -> usize {
        (self.burn_in_fraction * self.length as f64).floor() as usize
    }

    /// Number of samples `run` will store.
    pub fn stored_count(&self) -> usize {
        (self.length - self.burn_in_steps()) / self.thinning
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub partition: RootPartition,
    pub log_score: f64,
    pub inverse_temperature: f64,
}

impl ChainState {
    pub fn new(partition: RootPartition, taus: &[TauTable], inverse_temperature: f64) -> Self {
        let log_score = partition_score(&partition, taus);
        Self {
            partition,
            log_score,
            inverse_temperature,
        }
    }
}

/// One Metropolis-Hastings update; returns whether the proposal was accepted.
pub fn mh_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    taus: &[TauTable],
    rng: &mut R,
) -> Result<bool> {
    let (proposal, log_q_ratio) = propose(&state.partition, rng)?;
    let new_score = partition_score(&proposal, taus);
    if new_score == f64::NEG_INFINITY {
        return Ok(false);
    }
    let log_alpha = state.inverse_temperature * (new_score - state.log_score) + log_q_ratio;
    if log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha {
        state.partition = proposal;
        state.log_score = new_score;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Proposes exchanging the states of adjacent chains `k` and `k + 1` (chain `c` has
/// inverse temperature `(c + 1) / M`); returns whether the swap happened.
pub fn coupled_swap<R: Rng + ?Sized>(states: &mut [ChainState], rng: &mut R) -> bool {
    let m = states.len();
    if m < 2 {
        return false;
    }
    let k = rng.random_range(0..m - 1);
    let l = k + 1;
    let log_alpha = (states[l].inverse_temperature - states[k].inverse_temperature)
        * (states[k].log_score - states[l].log_score);
    if log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha {
        let (lo, hi) = states.split_at_mut(l);
        std::mem::swap(&mut lo[k].partition, &mut hi[0].partition);
        std::mem::swap(&mut lo[k].log_score, &mut hi[0].log_score);
        true
    } else {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSample {
    pub step: usize,
    pub log_score: f64,
    pub parts: Vec<Vec<usize>>,
}

impl PartitionSample {
    pub fn partition(&self) -> Result<RootPartition> {
        RootPartition::new(self.parts.clone())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub proposed: Vec<u64>,
    pub accepted: Vec<u64>,
    pub swaps_proposed: u64,
    pub swaps_accepted: u64,
}

impl ChainDiagnostics {
    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.proposed)
            .map(|(&a, &p)| if p == 0 { 0.0 } else { a as f64 / p as f64 })
            .collect()
    }

    pub fn swap_rate(&self) -> f64 {
        if self.swaps_proposed == 0 {
            0.0
        } else {
            self.swaps_accepted as f64 / self.swaps_proposed as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub samples: Vec<PartitionSample>,
    pub diagnostics: ChainDiagnostics,
}

/// Simulates `M` coupled chains from `(V)`. With `M > 1`, odd steps update every chain
/// and even steps attempt one swap; a single chain updates on every step. The cold
/// chain (`M`-th) is stored every `thinning` steps after burn-in.
pub fn run(cfg: &McmcConfig, taus: &[TauTable]) -> Result<RunOutput> {
    cfg.validate()?;
    let n = taus.len();
    if n < 2 {
        return Err(Error::NoMoves);
    }
    let m = cfg.chains;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut chain_rngs: Vec<ChaCha8Rng> = (0..m)
        .map(|_| ChaCha8Rng::seed_from_u64(master.next_u64()))
        .collect();
    let mut states: Vec<ChainState> = (0..m)
        .map(|c| ChainState::new(RootPartition::single(n), taus, (c + 1) as f64 / m as f64))
        .collect();
    let mut diag = ChainDiagnostics {
        proposed: vec![0; m],
        accepted: vec![0; m],
        ..Default::default()
    };
    let burn = cfg.burn_in_steps();
    let mut samples = Vec::with_capacity(cfg.stored_count());
    for step in 1..=cfg.length {
        if m == 1 || step % 2 == 1 {
            for (c, (state, rng)) in states.iter_mut().zip(chain_rngs.iter_mut()).enumerate() {
                diag.proposed[c] += 1;
                if mh_step(state, taus, rng)? {
                    diag.accepted[c] += 1;
                }
            }
        } else {
            diag.swaps_proposed += 1;
            if coupled_swap(&mut states, &mut master) {
                diag.swaps_accepted += 1;
            }
        }
        if step > burn && (step - burn).is_multiple_of(cfg.thinning) {
            let cold = &states[m - 1];
            samples.push(PartitionSample {
                step,
                log_score: cold.log_score,
                parts: cold.partition.parts().to_vec(),
            });
        }
    }
    Ok(RunOutput {
        samples,
        diagnostics: diag,
    })
}
