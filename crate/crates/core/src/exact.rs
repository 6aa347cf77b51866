//! Brute-force posteriors for small `n`: DAG enumeration, summation over ordered
//! partitions, coverage of candidate assignments and Markov equivalence classes.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::candidates::CandidateAssignment;
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::lattice::{log_add, log_sum, submasks};
use crate::scores::LocalScoreTable;
use crate::tau::{build_tau, TauTable};

pub const MAX_DAG_ENUMERATION: usize = 5;
pub const MAX_PARTITION_SUM: usize = 9;
pub const MAX_EQUIVALENCE_CLASS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactPosterior {
    pub n: usize,
    pub log_z: f64,
    /// `parent_marginals[i][S]` with `S` a bitmask over node ids.
    pub parent_marginals: Vec<Vec<f64>>,
    /// `edge_marginals[j][i]` is the probability of `i -> j`.
    pub edge_marginals: Vec<Vec<f64>>,
    /// `ancestor_marginals[j][i]` is the probability that `i` is an ancestor of `j`.
    /// Only the DAG enumeration path provides it.
    pub ancestor_marginals: Option<Vec<Vec<f64>>>,
}

impl ExactPosterior {
    /// `sum_{S ⊆ C} g_i(S)` for a node-id set `C`.
    pub fn covered_mass(&self, i: usize, set: &[usize]) -> f64 {
        let mask = set.iter().fold(0usize, |m, &c| m | 1 << c);
        submasks(mask).map(|s| self.parent_marginals[i][s]).sum()
    }

    fn from_parent_marginals(
        n: usize,
        log_z: f64,
        parent_marginals: Vec<Vec<f64>>,
        ancestor_marginals: Option<Vec<Vec<f64>>>,
    ) -> Self {
        let mut edge = vec![vec![0.0; n]; n];
        for (j, g) in parent_marginals.iter().enumerate() {
            for (s, &p) in g.iter().enumerate() {
                for (i, e) in edge[j].iter_mut().enumerate() {
                    if s >> i & 1 == 1 {
                        *e += p;
                    }
                }
            }
        }
        Self {
            n,
            log_z,
            parent_marginals,
            edge_marginals: edge,
            ancestor_marginals,
        }
    }
}

/// Scores re-indexed by node-id bitmask; subsets outside the candidates get `-inf`.
pub(crate) fn expand_tables(tables: &[LocalScoreTable]) -> Result<Vec<Vec<f64>>> {
    let n = tables.len();
    tables
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.node != i || t.candidates.iter().any(|&c| c >= n) {
                return Err(Error::InvalidData(format!("score table {i} does not fit n = {n}")));
            }
            let mut full = vec![f64::NEG_INFINITY; 1 << n];
            for (m, &v) in t.log_scores.iter().enumerate() {
                let ids = t.parents_of_mask(m);
                full[ids.iter().fold(0usize, |a, &c| a | 1 << c)] = v;
            }
            Ok(full)
        })
        .collect()
}

fn is_acyclic(parent_masks: &[usize]) -> bool {
    let n = parent_masks.len();
    let mut placed = 0usize;
    loop {
        let before = placed;
        for (i, &p) in parent_masks.iter().enumerate() {
            if placed >> i & 1 == 0 && p & !placed == 0 {
                placed |= 1 << i;
            }
        }
        if placed == (1 << n) - 1 {
            return true;
        }
        if placed == before {
            return false;
        }
    }
}

/// Every DAG with nonzero score and its log weight `sum_i log pi_i(pa(i))`.
pub fn enumerate_dags(tables: &[LocalScoreTable]) -> Result<Vec<(Dag, f64)>> {
    let n = tables.len();
    if n > MAX_DAG_ENUMERATION {
        return Err(Error::TooLarge(format!(
            "DAG enumeration supports n <= {MAX_DAG_ENUMERATION}, got {n}"
        )));
    }
    let full = expand_tables(tables)?;
    let options: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..1usize << n)
                .filter(|&s| s >> i & 1 == 0 && full[i][s] > f64::NEG_INFINITY)
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    let mut choice = vec![0usize; n];
    let mut masks = vec![0usize; n];
    if options.iter().any(Vec::is_empty) {
        return Ok(out);
    }
    loop {
        for i in 0..n {
            masks[i] = options[i][choice[i]];
        }
        if is_acyclic(&masks) {
            let w: f64 = (0..n).map(|i| full[i][masks[i]]).sum();
            let parents = masks
                .iter()
                .map(|&m| (0..n).filter(|b| m >> b & 1 == 1).collect())
                .collect();
            out.push((Dag::new(parents)?, w));
        }
        // odometer over parent-set choices
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(out);
            }
            choice[pos] += 1;
            if choice[pos] < options[pos].len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

pub fn posterior_by_dag_enumeration(tables: &[LocalScoreTable]) -> Result<ExactPosterior> {
    let n = tables.len();
    let dags = enumerate_dags(tables)?;
    let log_z = log_sum(&dags.iter().map(|(_, w)| *w).collect::<Vec<_>>());
    let mut parent = vec![vec![0.0; 1 << n]; n];
    let mut anc = vec![vec![0.0; n]; n];
    for (g, w) in &dags {
        let p = (w - log_z).exp();
        for (i, row) in parent.iter_mut().enumerate() {
            let m = g.parents(i).iter().fold(0usize, |a, &c| a | 1 << c);
            row[m] += p;
        }
        for (j, row) in g.ancestor_matrix().iter().enumerate() {
            for (i, &is_anc) in row.iter().enumerate() {
                if is_anc {
                    anc[j][i] += p;
                }
            }
        }
    }
    Ok(ExactPosterior::from_parent_marginals(n, log_z, parent, Some(anc)))
}

/// Calls `f` with every ordered partition of `{0, .., n-1}`, parts as sorted id lists.
pub fn for_each_ordered_partition<F: FnMut(&[Vec<usize>])>(n: usize, mut f: F) {
    fn rec<F: FnMut(&[Vec<usize>])>(rest: usize, parts: &mut Vec<Vec<usize>>, f: &mut F) {
        if rest == 0 {
            f(parts);
            return;
        }
        for p in submasks(rest).filter(|&p| p != 0) {
            parts.push((0..usize::BITS as usize).filter(|b| p >> b & 1 == 1).collect());
            rec(rest & !p, parts, f);
            parts.pop();
        }
    }
    if n == 0 {
        return;
    }
    rec((1 << n) - 1, &mut Vec::new(), &mut f);
}

/// Candidate-position mask for full candidates `V \ {i}` from a node-id mask.
#[inline]
fn squeeze(mask: usize, i: usize) -> usize {
    (mask & ((1 << i) - 1)) | ((mask >> (i + 1)) << i)
}

struct PartitionWalk<'a> {
    n: usize,
    taus: &'a [TauTable],
    /// log mass per node and `(U, T)` node-mask pair
    weights: Option<Vec<HashMap<(usize, usize), f64>>>,
    log_z: f64,
    path: Vec<(usize, usize, usize)>,
}

impl PartitionWalk<'_> {
    fn factor(&self, i: usize, u: usize, t: usize) -> f64 {
        if t == 0 {
            self.taus[i].log_empty()
        } else {
            self.taus[i].query_masks(squeeze(u, i), squeeze(t, i))
        }
    }

    /// `u` is the union of placed parts and `t` the last one.
    fn walk(&mut self, rest: usize, u: usize, t: usize, acc: f64) {
        if rest == 0 {
            self.log_z = log_add(self.log_z, acc);
            if let Some(w) = self.weights.as_mut() {
                for &(part, pu, pt) in &self.path {
                    for i in (0..self.n).filter(|b| part >> b & 1 == 1) {
                        let e = w[i].entry((pu, pt)).or_insert(f64::NEG_INFINITY);
                        *e = log_add(*e, acc);
                    }
                }
            }
            return;
        }
        for p in submasks(rest).filter(|&p| p != 0) {
            let mut next = acc;
            for i in (0..self.n).filter(|b| p >> b & 1 == 1) {
                next += self.factor(i, u, t);
                if next == f64::NEG_INFINITY {
                    break;
                }
            }
            if next == f64::NEG_INFINITY {
                continue;
            }
            self.path.push((p, u, t));
            self.walk(rest & !p, u | p, p, next);
            self.path.pop();
        }
    }
}

fn check_full(tables: &[LocalScoreTable]) -> Result<()> {
    let n = tables.len();
    if n > MAX_PARTITION_SUM {
        return Err(Error::TooLarge(format!(
            "partition summation supports n <= {MAX_PARTITION_SUM}, got {n}"
        )));
    }
    for (i, t) in tables.iter().enumerate() {
        let full: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        if t.candidates != full {
            return Err(Error::CandidateRestricted {
                node: i,
                k: t.k(),
                n_minus_one: n - 1,
            });
        }
    }
    Ok(())
}

/// `log Z` as the sum of `pi(R)` over all ordered partitions; needs full candidates.
pub fn log_partition_function(tables: &[LocalScoreTable]) -> Result<f64> {
    check_full(tables)?;
    let taus: Vec<TauTable> = tables.iter().map(build_tau).collect();
    Ok(run_walk(&taus, false).0)
}

/// Per-node log weights of each `(U, T)` constraint met during the walk.
type ConstraintWeights = Vec<HashMap<(usize, usize), f64>>;

fn run_walk(taus: &[TauTable], marginals: bool) -> (f64, Option<ConstraintWeights>) {
    let n = taus.len();
    let mut w = PartitionWalk {
        n,
        taus,
        weights: marginals.then(|| vec![HashMap::new(); n]),
        log_z: f64::NEG_INFINITY,
        path: Vec::new(),
    };
    w.walk((1 << n) - 1, 0, 0, 0.0);
    (w.log_z, w.weights)
}

/// Exact posterior by summing over ordered partitions. `taus` must be built from
/// `tables`, both with candidates `V \ {i}`.
pub fn posterior_by_partition_sum(
    taus: &[TauTable],
    tables: &[LocalScoreTable],
) -> Result<ExactPosterior> {
    check_full(tables)?;
    let n = tables.len();
    if taus.len() != n {
        return Err(Error::InvalidData("one tau table per node required".into()));
    }
    let full = expand_tables(tables)?;
    let (log_z, weights) = run_walk(taus, true);
    let weights = weights.expect("requested");
    let mut parent = vec![vec![0.0; 1 << n]; n];
    for i in 0..n {
        for (&(u, t), &lw) in &weights[i] {
            if t == 0 {
                parent[i][0] += (lw - log_z).exp();
                continue;
            }
            let tau = taus[i].query_masks(squeeze(u, i), squeeze(t, i));
            for s in submasks(u).filter(|s| s & t != 0) {
                parent[i][s] += (lw - log_z + full[i][s] - tau).exp();
            }
        }
    }
    Ok(ExactPosterior::from_parent_marginals(n, log_z, parent, None))
}

/// Full-candidate tables from `tables` with every set outside `C_i` scored `-inf`.
pub fn mask_to_assignment(
    tables: &[LocalScoreTable],
    assign: &CandidateAssignment,
) -> Result<Vec<LocalScoreTable>> {
    let n = tables.len();
    let full = expand_tables(tables)?;
    (0..n)
        .map(|i| {
            let allowed = assign.sets[i].iter().fold(0usize, |m, &c| m | 1 << c);
            let cand: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let scores = (0..1usize << (n - 1))
                .map(|m| {
                    let ids = cand
                        .iter()
                        .enumerate()
                        .filter(|(b, _)| m >> b & 1 == 1)
                        .fold(0usize, |a, (_, &c)| a | 1 << c);
                    if ids & !allowed == 0 {
                        full[i][ids]
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            LocalScoreTable::from_parts(i, cand, scores)
        })
        .collect()
}

/// `(coverage, mean coverage)` of an assignment. `tables` are the full-candidate
/// scores that produced `exact`.
pub fn coverage_exact(
    assign: &CandidateAssignment,
    exact: &ExactPosterior,
    tables: &[LocalScoreTable],
) -> Result<(f64, f64)> {
    let n = exact.n;
    if assign.sets.len() != n || tables.len() != n {
        return Err(Error::InvalidCandidates("assignment size differs from n".into()));
    }
    let mean = (0..n)
        .map(|i| exact.covered_mass(i, &assign.sets[i]))
        .sum::<f64>()
        / n as f64;
    let masked = mask_to_assignment(tables, assign)?;
    let log_zr = if n <= MAX_DAG_ENUMERATION {
        log_sum(&enumerate_dags(&masked)?.iter().map(|(_, w)| *w).collect::<Vec<_>>())
    } else {
        log_partition_function(&masked)?
    };
    Ok(((log_zr - exact.log_z).exp().min(1.0), mean.min(1.0)))
}

/// Closure of `g` under covered-edge reversals, breadth first.
pub fn markov_equivalence_class(g: &Dag) -> Result<Vec<Dag>> {
    if g.n() > MAX_EQUIVALENCE_CLASS {
        return Err(Error::TooLarge(format!(
            "equivalence classes supported for n <= {MAX_EQUIVALENCE_CLASS}"
        )));
    }
    let mut seen = HashSet::new();
    let mut order = Vec::new();
    let mut queue = VecDeque::from([g.clone()]);
    seen.insert(g.clone());
    while let Some(h) = queue.pop_front() {
        for (i, j) in h.covered_edges() {
            let r = h.reversed(i, j)?;
            if seen.insert(r.clone()) {
                queue.push_back(r);
            }
        }
        order.push(h);
    }
    Ok(order)
}
