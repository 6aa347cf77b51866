//! Candidate parent selection.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactPosterior;
use crate::lattice::{submasks, zeta_slice};
use crate::scores::LocalScorer;

/// Default number of nodes greedy-lite adds in its final step.
pub const DEFAULT_LITE_TAIL: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateAssignment {
    pub k: usize,
    /// `sets[i]` is the ordered candidate list of node `i`.
    pub sets: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct AssignmentJson {
    #[serde(rename = "K")]
    k: usize,
    candidates: BTreeMap<String, Vec<usize>>,
}

impl CandidateAssignment {
    pub fn new(k: usize, sets: Vec<Vec<usize>>) -> Result<Self> {
        let n = sets.len();
        for (i, c) in sets.iter().enumerate() {
            if c.len() != k {
                return Err(Error::InvalidCandidates(format!(
                    "node {i} has {} candidates, expected {k}",
                    c.len()
                )));
            }
            for (a, &x) in c.iter().enumerate() {
                if x == i || x >= n || c[..a].contains(&x) {
                    return Err(Error::InvalidCandidates(format!(
                        "bad candidate {x} for node {i}"
                    )));
                }
            }
        }
        Ok(Self { k, sets })
    }

    pub fn n(&self) -> usize {
        self.sets.len()
    }

    pub fn to_json(&self) -> Result<String> {
        let j = AssignmentJson {
            k: self.k,
            candidates: self
                .sets
                .iter()
                .enumerate()
                .map(|(i, c)| (i.to_string(), c.clone()))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: AssignmentJson = serde_json::from_str(s)?;
        let n = j.candidates.len();
        let mut sets = vec![None; n];
        for (key, c) in j.candidates {
            let i: usize = key
                .parse()
                .map_err(|_| Error::InvalidCandidates(format!("bad node key {key:?}")))?;
            if i >= n || sets[i].is_some() {
                return Err(Error::InvalidCandidates(format!("node key {i} out of range")));
            }
            sets[i] = Some(c);
        }
        Self::new(j.k, sets.into_iter().map(Option::unwrap).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k + 1 > n {
        return Err(Error::KTooLarge {
            k,
            available: n.saturating_sub(1),
        });
    }
    Ok(())
}

/// Memoized local scores of one node.
struct NodeScores<'a> {
    scorer: &'a LocalScorer,
    node: usize,
    cache: HashMap<Vec<usize>, f64>,
}

impl<'a> NodeScores<'a> {
    fn new(scorer: &'a LocalScorer, node: usize) -> Self {
        Self {
            scorer,
            node,
            cache: HashMap::new(),
        }
    }

    fn score(&mut self, set: &[usize]) -> Result<f64> {
        let mut key = set.to_vec();
        key.sort_unstable();
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        let v = self.scorer.log_local(self.node, &key)?;
        self.cache.insert(key, v);
        Ok(v)
    }

    /// `max_{S ⊆ base} log pi(S ∪ extra)`.
    fn best_within(&mut self, base: &[usize], extra: &[usize]) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        let mut set = Vec::with_capacity(base.len() + extra.len());
        for m in submasks((1usize << base.len()) - 1) {
            set.clear();
            set.extend_from_slice(extra);
            set.extend((0..base.len()).filter(|b| m >> b & 1 == 1).map(|b| base[b]));
            best = best.max(self.score(&set)?);
        }
        Ok(best)
    }

    /// Goodness of every non-member, sorted best first, ties by ascending id.
    fn ranked(&mut self, members: &[usize], n: usize) -> Result<Vec<(usize, f64)>> {
        let mut out = Vec::new();
        let node = self.node;
        for j in (0..n).filter(|&j| j != node && !members.contains(&j)) {
            out.push((j, self.best_within(members, &[j])?));
        }
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(out)
    }
}

/// The `k` nodes with the highest singleton score.
pub fn select_top(scorer: &LocalScorer, k: usize) -> Result<CandidateAssignment> {
    select_greedy_lite(scorer, k, k)
}

/// `k` rounds, each adding the node with the highest goodness
/// `max_{S ⊆ C_i} log pi_i(S ∪ {j})`.
pub fn select_greedy(scorer: &LocalScorer, k: usize) -> Result<CandidateAssignment> {
    select_greedy_lite(scorer, k, 0)
}

/// `k - s` greedy rounds, then the `s` best remaining nodes at once.
pub fn select_greedy_lite(scorer: &LocalScorer, k: usize, s: usize) -> Result<CandidateAssignment> {
    let n = scorer.n_vars();
    check_k(k, n)?;
    if s > k {
        return Err(Error::Config(format!("greedy-lite tail {s} exceeds k = {k}")));
    }
    let mut sets = Vec::with_capacity(n);
    for i in 0..n {
        let mut ns = NodeScores::new(scorer, i);
        let mut c = Vec::with_capacity(k);
        for _ in 0..k - s {
            let best = ns.ranked(&c, n)?[0].0;
            c.push(best);
        }
        if s > 0 {
            c.extend(ns.ranked(&c, n)?.into_iter().take(s).map(|(j, _)| j));
        }
        sets.push(c);
    }
    CandidateAssignment::new(k, sets)
}

/// Starts from a random `k`-set, then repeatedly drops the node whose removal keeps
/// `max_{S ⊆ C_i} log pi_i(S)` highest and adds the node with the best goodness,
/// until the added node is the one just dropped. Capped at `10 k` exchanges, after
/// which the best set seen is returned.
pub fn select_back_forth(scorer: &LocalScorer, k: usize, seed: u64) -> Result<CandidateAssignment> {
    let n = scorer.n_vars();
    check_k(k, n)?;
    let mut sets = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let mut c: Vec<usize> = sample(&mut rng, others.len(), k)
            .into_iter()
            .map(|p| others[p])
            .collect();
        if k == 0 {
            sets.push(c);
            continue;
        }
        let mut ns = NodeScores::new(scorer, i);
        let mut best = (ns.best_within(&c, &[])?, c.clone());
        let mut converged = false;
        for _ in 0..10 * k {
            let mut drop = (f64::NEG_INFINITY, usize::MAX, 0);
            for (pos, &x) in c.iter().enumerate() {
                let rest: Vec<usize> = c.iter().copied().filter(|&y| y != x).collect();
                let v = ns.best_within(&rest, &[])?;
                if v > drop.0 || (v == drop.0 && x < drop.1) {
                    drop = (v, x, pos);
                }
            }
            let deleted = c.remove(drop.2);
            let added = ns.ranked(&c, n)?[0].0;
            c.push(added);
            if added == deleted {
                converged = true;
                break;
            }
            let v = ns.best_within(&c, &[])?;
            if v > best.0 {
                best = (v, c.clone());
            }
        }
        sets.push(if converged { c } else { best.1 });
    }
    CandidateAssignment::new(k, sets)
}

/// Per node, the `k`-set maximizing `sum_{S ⊆ C} g_i(S)`; ties go to the smallest mask.
pub fn select_opt(marginals: &ExactPosterior, k: usize) -> Result<CandidateAssignment> {
    let n = marginals.n;
    check_k(k, n)?;
    if marginals.parent_marginals.len() != n
        || marginals.parent_marginals.iter().any(|g| g.len() != 1 << n)
    {
        return Err(Error::MarginalsMissing(format!(
            "expected {n} tables of {} parent-set marginals",
            1usize << n
        )));
    }
    let sets = marginals
        .parent_marginals
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut covered = g.clone();
            zeta_slice_linear(&mut covered);
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (m, &c) in covered.iter().enumerate() {
                if m >> i & 1 == 0 && m.count_ones() as usize == k && c > best.0 {
                    best = (c, m);
                }
            }
            (0..n).filter(|b| best.1 >> b & 1 == 1).collect()
        })
        .collect();
    CandidateAssignment::new(k, sets)
}

/// Zeta transform of nonnegative linear-space values via the log-domain routine.
fn zeta_slice_linear(xs: &mut [f64]) {
    for x in xs.iter_mut() {
        *x = x.ln();
    }
    zeta_slice(xs);
    for x in xs.iter_mut() {
        *x = x.exp();
    }
}

/// `max_{S ⊆ C} log pi_i(S)`, the score a candidate set covers.
pub fn covered_max(scorer: &LocalScorer, node: usize, set: &[usize]) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for m in submasks((1usize << set.len()) - 1) {
        let s: Vec<usize> = (0..set.len()).filter(|b| m >> b & 1 == 1).map(|b| set[b]).collect();
        best = best.max(scorer.log_local(node, &s)?);
    }
    Ok(best)
}
