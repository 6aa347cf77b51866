//! Drawing DAGs given root-partitions.
//!
//! Interval sums `f(X, Y) = sum_{X ⊆ S ⊆ Y} pi(S)` let a constrained parent set
//! be drawn in `O(K)` steps. Entries live in a flat array indexed by a ternary
//! code: digit `b` is 0 when candidate `b` is outside `Y`, 1 when it is in `Y`
//! but not `X`, and 2 when it is in `X`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Dag, RootPartition};
use crate::lattice::{log_add, log_sub, submasks};
use crate::scores::LocalScoreTable;

/// Largest `K` for which the `3^K` table is built; above it draws go brute-force.
pub const MAX_INTERVAL_K: usize = 16;

#[derive(Debug, Clone)]
pub struct IntervalSumTable {
    pub node: usize,
    pub candidates: Vec<usize>,
    log_f: Vec<f64>,
    pow3: Vec<usize>,
}

impl IntervalSumTable {
    pub fn k(&self) -> usize {
        self.candidates.len()
    }

    fn index(&self, x: usize, y: usize) -> usize {
        debug_assert_eq!(x & !y, 0);
        let mut idx = 0;
        for (b, p) in self.pow3.iter().enumerate() {
            if x >> b & 1 == 1 {
                idx += 2 * p;
            } else if y >> b & 1 == 1 {
                idx += p;
            }
        }
        idx
    }

    /// `log f(X, Y)` for candidate-position masks `X ⊆ Y`.
    pub fn log_f(&self, x: usize, y: usize) -> f64 {
        self.log_f[self.index(x, y)]
    }

    pub fn len(&self) -> usize {
        self.log_f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_f.is_empty()
    }
}

pub fn build_interval_sums(t: &LocalScoreTable) -> Result<IntervalSumTable> {
    let k = t.k();
    if k > MAX_INTERVAL_K {
        return Err(Error::TooLarge(format!(
            "interval table for K = {k} exceeds the limit {MAX_INTERVAL_K}"
        )));
    }
    let pow3: Vec<usize> = (0..k).map(|b| 3usize.pow(b as u32)).collect();
    let size = 3usize.pow(k as u32);
    let mut log_f = vec![f64::NEG_INFINITY; size];
    for (s, &v) in t.log_scores.iter().enumerate() {
        let idx: usize = (0..k).filter(|b| s >> b & 1 == 1).map(|b| 2 * pow3[b]).sum();
        log_f[idx] = v;
    }
    // Pass b fills entries whose digit b is 1 and whose higher digits contain no 1,
    // from the two neighbours with digit b set to 2 and to 0.
    for b in 0..k {
        let high_bits = k - 1 - b;
        for h in 0..1usize << high_bits {
            let high: usize = (0..high_bits)
                .filter(|j| h >> j & 1 == 1)
                .map(|j| 2 * pow3[b + 1 + j])
                .sum();
            for low in 0..pow3[b] {
                let idx = high + pow3[b] + low;
                log_f[idx] = log_add(log_f[idx + pow3[b]], log_f[idx - pow3[b]]);
            }
        }
    }
    Ok(IntervalSumTable {
        node: t.node,
        candidates: t.candidates.clone(),
        log_f,
        pow3,
    })
}

/// `g = f(X, Y) - f(X, Y \ T)`; `None` flags cancellation.
#[inline]
fn g_value(a: f64, b: f64) -> Option<f64> {
    match log_sub(a, b) {
        Ok((v, false)) => Some(v),
        _ => None,
    }
}

/// Draws `S ⊆ u` with `S ∩ t ≠ ∅` with probability proportional to `pi(S)`.
/// Masks are over candidate positions. Falls back to brute force on cancellation.
pub fn sample_parents<R: Rng + ?Sized>(
    tab: &IntervalSumTable,
    scores: &LocalScoreTable,
    u: usize,
    t: usize,
    rng: &mut R,
) -> Result<usize> {
    if t == 0 || t & !u != 0 {
        return Err(Error::NotSubset);
    }
    match sample_with_table(tab, u, t, rng) {
        Some(Ok(s)) => Ok(s),
        Some(Err(e)) => Err(e),
        None => sample_parents_bruteforce(scores, u, t, rng),
    }
}

fn sample_with_table<R: Rng + ?Sized>(
    tab: &IntervalSumTable,
    u: usize,
    t: usize,
    rng: &mut R,
) -> Option<Result<usize>> {
    // a indexes f(X, u \ E); b indexes f(X, u \ E \ t), dead once X meets t
    let mut a = tab.index(0, u);
    let mut b = Some(tab.index(0, u & !t));
    let lookup = |i: Option<usize>| i.map_or(f64::NEG_INFINITY, |i| tab.log_f[i]);
    let mut g = g_value(tab.log_f[a], lookup(b))?;
    if g == f64::NEG_INFINITY {
        return Some(Err(Error::EmptySupport {
            node: tab.node,
            partition: None,
        }));
    }
    let mut x = 0usize;
    let mut rest = u;
    while rest != 0 {
        let bit = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        let p3 = tab.pow3[bit];
        let in_t = t >> bit & 1 == 1;
        let b_in = if in_t { None } else { b.map(|i| i + p3) };
        let g_in = g_value(tab.log_f[a + p3], lookup(b_in))?;
        let prob = (g_in - g).exp();
        if rng.random::<f64>() < prob {
            x |= 1 << bit;
            a += p3;
            b = b_in;
            g = g_in;
        } else {
            a -= p3;
            if !in_t {
                b = b.map(|i| i - p3);
            }
            g = g_value(tab.log_f[a], lookup(b))?;
        }
    }
    assert!(x & !u == 0 && x & t != 0, "drawn parent set violates the constraint");
    Some(Ok(x))
}

/// Enumerates every admissible `S` and samples by one cumulative pass.
pub fn sample_parents_bruteforce<R: Rng + ?Sized>(
    scores: &LocalScoreTable,
    u: usize,
    t: usize,
    rng: &mut R,
) -> Result<usize> {
    if t == 0 || t & !u != 0 {
        return Err(Error::NotSubset);
    }
    let valid: Vec<usize> = submasks(u).filter(|s| s & t != 0).collect();
    let total = valid
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &s| log_add(acc, scores.log_scores[s]));
    if total == f64::NEG_INFINITY {
        return Err(Error::EmptySupport {
            node: scores.node,
            partition: None,
        });
    }
    let target = rng.random::<f64>();
    let mut cum = 0.0;
    let mut last = valid[0];
    for &s in &valid {
        let w = (scores.log_scores[s] - total).exp();
        if w > 0.0 {
            cum += w;
            last = s;
            if target < cum {
                return Ok(s);
            }
        }
    }
    Ok(last)
}

/// Masks `(U, T)` over `C_i` for node `i` placed in part `part`.
pub(crate) fn constraint_masks(candidates: &[usize], part_index: &[usize], part: usize) -> (usize, usize) {
    let mut u = 0;
    let mut t = 0;
    for (b, &c) in candidates.iter().enumerate() {
        let pc = part_index[c];
        if pc < part {
            u |= 1 << b;
            if pc + 1 == part {
                t |= 1 << b;
            }
        }
    }
    (u, t)
}

/// One DAG per partition. Nodes are handled in turn, each with its own table and
/// random stream derived from `seed`, so only one table is alive at a time.
pub fn sample_dags(
    partitions: &[RootPartition],
    tables: &[LocalScoreTable],
    seed: u64,
) -> Result<Vec<Dag>> {
    let n = tables.len();
    let indices: Vec<Vec<usize>> = partitions
        .iter()
        .map(|r| {
            if r.n_nodes() != n {
                return Err(Error::InvalidData(format!(
                    "partition covers {} nodes, expected {n}",
                    r.n_nodes()
                )));
            }
            Ok(r.part_index())
        })
        .collect::<Result<_>>()?;
    let mut parents = vec![vec![Vec::new(); n]; partitions.len()];
    for (i, scores) in tables.iter().enumerate() {
        if scores.node != i {
            return Err(Error::InvalidData(format!(
                "score table {i} belongs to node {}",
                scores.node
            )));
        }
        let tab = if scores.k() <= MAX_INTERVAL_K {
            Some(build_interval_sums(scores)?)
        } else {
            None
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        for (s, idx) in indices.iter().enumerate() {
            let part = idx[i];
            if part == 0 {
                continue;
            }
            let (u, t) = constraint_masks(&scores.candidates, idx, part);
            let drawn = match &tab {
                Some(tab) => sample_parents(tab, scores, u, t, &mut rng),
                None => sample_parents_bruteforce(scores, u, t, &mut rng),
            };
            let mask = drawn.map_err(|e| match e {
                Error::EmptySupport { node, .. } => Error::EmptySupport {
                    node,
                    partition: Some(s),
                },
                Error::NotSubset => Error::EmptySupport {
                    node: i,
                    partition: Some(s),
                },
                other => other,
            })?;
            parents[s][i] = scores.parents_of_mask(mask);
        }
    }
    parents.into_iter().map(Dag::new).collect()
}
