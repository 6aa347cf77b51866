//! Local scores `log pi_i(S) = log rho_i(S) + log l_i(S)`: the binomial structure
//! prior and the BGe marginal likelihood, tabulated over candidate subsets.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;

use crate::dataio::{posterior_stats, BgeHyper, DataMatrix, PosteriorStats};
use crate::error::{Error, Result};
use crate::lattice::MAX_GROUND_SET;

/// `-log C(n-1, k)`.
pub fn log_dag_prior_factor(n: usize, k: usize) -> Result<f64> {
    if n == 0 || k > n - 1 {
        return Err(Error::SizeOutOfRange { n, k });
    }
    Ok(-ln_binomial((n - 1) as u64, k as u64))
}

/// Index list of `parents ∪ {node}` in ascending order with `node` moved last.
pub fn block_order(node: usize, parents: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = parents.iter().copied().filter(|&p| p != node).collect();
    idx.sort_unstable();
    idx.dedup();
    idx.push(node);
    idx
}

pub(crate) fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

fn log_det_spd(m: DMatrix<f64>) -> Option<f64> {
    if m.nrows() == 0 {
        return Some(0.0);
    }
    let chol = m.cholesky()?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for k in 0..l.nrows() {
        let d = l[(k, k)];
        if !(d > 0.0) {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc)
}

/// Evaluates local scores against fixed data and hyperparameters.
#[derive(Debug, Clone)]
pub struct LocalScorer {
    stats: PosteriorStats,
    hyper: BgeHyper,
    n: usize,
}

impl LocalScorer {
    pub fn new(d: &DataMatrix, h: &BgeHyper) -> Result<Self> {
        Ok(Self {
            stats: posterior_stats(d, h)?,
            hyper: h.clone(),
            n: d.n_vars(),
        })
    }

    pub fn from_stats(stats: PosteriorStats, hyper: BgeHyper) -> Result<Self> {
        hyper.validate()?;
        let n = hyper.dim();
        if stats.r_mat.nrows() != n {
            return Err(Error::InvalidHyper("posterior and prior dimensions differ".into()));
        }
        Ok(Self { stats, hyper, n })
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn stats(&self) -> &PosteriorStats {
        &self.stats
    }

    pub fn hyper(&self) -> &BgeHyper {
        &self.hyper
    }

    /// Log marginal likelihood of the variable block `idx` under the block's
    /// normal-Wishart marginal (Wishart degrees of freedom reduced by `n - |idx|`).
    /// `None` when a determinant is not positive.
    fn log_block_marginal(&self, idx: &[usize]) -> Option<f64> {
        let l = idx.len();
        if l == 0 {
            return Some(0.0);
        }
        let big_n = self.stats.n_samples as f64;
        let lf = l as f64;
        let dof = self.hyper.alpha_w - self.n as f64 + lf;
        let mut acc = -0.5 * big_n * lf * std::f64::consts::PI.ln()
            + 0.5 * lf * (self.hyper.alpha_mu / (self.hyper.alpha_mu + big_n)).ln();
        for j in 1..=l {
            let j = j as f64;
            acc += ln_gamma(0.5 * (dof + big_n + 1.0 - j)) - ln_gamma(0.5 * (dof + 1.0 - j));
        }
        let log_t = log_det_spd(submatrix(&self.hyper.t_mat, idx))?;
        let log_r = log_det_spd(submatrix(&self.stats.r_mat, idx))?;
        Some(acc + 0.5 * dof * log_t - 0.5 * (dof + big_n) * log_r)
    }

    /// `log l_i(S)`: BGe local marginal likelihood of `node` given `parents`.
    pub fn bge_log_marginal(&self, node: usize, parents: &[usize]) -> Result<f64> {
        if parents.contains(&node) {
            return Err(Error::InvalidCandidates(format!(
                "node {node} listed among its own parents"
            )));
        }
        if node >= self.n || parents.iter().any(|&p| p >= self.n) {
            return Err(Error::InvalidCandidates("node id out of range".into()));
        }
        let family = block_order(node, parents);
        let fail = |reason: &str| Error::NumericFailure {
            node,
            parents: parents.to_vec(),
            reason: reason.to_owned(),
        };
        let with = self
            .log_block_marginal(&family)
            .ok_or_else(|| fail("family block not positive definite"))?;
        let without = self
            .log_block_marginal(&family[..family.len() - 1])
            .ok_or_else(|| fail("parent block not positive definite"))?;
        Ok(with - without)
    }

    /// `log pi_i(S) = log rho(|S|) + log l_i(S)`.
    pub fn log_local(&self, node: usize, parents: &[usize]) -> Result<f64> {
        Ok(log_dag_prior_factor(self.n, parents.len())? + self.bge_log_marginal(node, parents)?)
    }

    /// Scores every subset of `candidates` for `node`, indexed by bitmask over
    /// candidate positions.
    pub fn table(&self, node: usize, candidates: &[usize]) -> Result<LocalScoreTable> {
        validate_candidates(node, candidates, self.n)?;
        let k = candidates.len();
        let mut log_scores = Vec::with_capacity(1 << k);
        let mut parents = Vec::with_capacity(k);
        for mask in 0..(1usize << k) {
            parents.clear();
            parents.extend((0..k).filter(|b| mask >> b & 1 == 1).map(|b| candidates[b]));
            log_scores.push(self.log_local(node, &parents)?);
        }
        Ok(LocalScoreTable {
            node,
            candidates: candidates.to_vec(),
            log_scores,
        })
    }

    /// One table per node, each over all other nodes in ascending order.
    pub fn full_tables(&self) -> Result<Vec<LocalScoreTable>> {
        (0..self.n)
            .map(|i| {
                let c: Vec<usize> = (0..self.n).filter(|&j| j != i).collect();
                self.table(i, &c)
            })
            .collect()
    }
}

fn validate_candidates(node: usize, candidates: &[usize], n: usize) -> Result<()> {
    if candidates.len() > MAX_GROUND_SET {
        return Err(Error::InvalidCandidates(format!(
            "{} candidates exceed the limit {MAX_GROUND_SET}",
            candidates.len()
        )));
    }
    if node >= n {
        return Err(Error::InvalidCandidates(format!("node {node} out of range")));
    }
    for (a, &c) in candidates.iter().enumerate() {
        if c == node || c >= n || candidates[..a].contains(&c) {
            return Err(Error::InvalidCandidates(format!(
                "bad candidate {c} for node {node}"
            )));
        }
    }
    Ok(())
}

/// Log local scores of one node over all subsets of its candidate parents.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalScoreTable {
    pub node: usize,
    pub candidates: Vec<usize>,
    /// `log pi_i(S)` indexed by bitmask over positions in `candidates`.
    pub log_scores: Vec<f64>,
}

impl LocalScoreTable {
    /// Builds a table from precomputed scores, checking the structural invariants.
    pub fn from_parts(node: usize, candidates: Vec<usize>, log_scores: Vec<f64>) -> Result<Self> {
        if candidates.len() > MAX_GROUND_SET {
            return Err(Error::InvalidCandidates("too many candidates".into()));
        }
        if candidates.contains(&node) {
            return Err(Error::InvalidCandidates(format!("node {node} is its own candidate")));
        }
        if log_scores.len() != 1 << candidates.len() {
            return Err(Error::InvalidCandidates("score table length mismatch".into()));
        }
        if log_scores.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidCandidates("score table holds NaN or +inf".into()));
        }
        if !log_scores[0].is_finite() {
            return Err(Error::InvalidCandidates("empty parent set must score finitely".into()));
        }
        Ok(Self {
            node,
            candidates,
            log_scores,
        })
    }

    pub fn k(&self) -> usize {
        self.candidates.len()
    }

    /// Node ids of the subset encoded by `mask`.
    pub fn parents_of_mask(&self, mask: usize) -> Vec<usize> {
        (0..self.k())
            .filter(|b| mask >> b & 1 == 1)
            .map(|b| self.candidates[b])
            .collect()
    }

    /// Bitmask over candidate positions of `set ∩ C_i`.
    pub fn mask_of(&self, set: &[usize]) -> usize {
        self.candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| set.contains(c))
            .fold(0, |m, (b, _)| m | 1 << b)
    }

    /// Little-endian dump: node, K and candidate ids as `u32`, then `2^K` `f64` scores.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.node as u32).to_le_bytes())?;
        w.write_all(&(self.k() as u32).to_le_bytes())?;
        for &c in &self.candidates {
            w.write_all(&(c as u32).to_le_bytes())?;
        }
        for v in &self.log_scores {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<usize> {
            r.read_exact(&mut word)?;
            Ok(u32::from_le_bytes(word) as usize)
        };
        let node = read_u32(&mut r)?;
        let k = read_u32(&mut r)?;
        if k > MAX_GROUND_SET {
            return Err(Error::InvalidCandidates(format!("K = {k} in dump exceeds limit")));
        }
        let candidates = (0..k).map(|_| read_u32(&mut r)).collect::<Result<Vec<_>>>()?;
        let mut buf = [0u8; 8];
        let mut log_scores = Vec::with_capacity(1 << k);
        for _ in 0..(1usize << k) {
            r.read_exact(&mut buf)?;
            log_scores.push(f64::from_le_bytes(buf));
        }
        Self::from_parts(node, candidates, log_scores)
    }
}

/// Scores all subsets of `c` for node `i`.
pub fn build_score_table(
    i: usize,
    c: &[usize],
    d: &DataMatrix,
    h: &BgeHyper,
) -> Result<LocalScoreTable> {
    LocalScorer::new(d, h)?.table(i, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use num_bigint::BigUint;

    fn toy_data(rows: usize, cols: usize, seed: u64) -> DataMatrix {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut v = DMatrix::from_fn(rows, cols, |_, _| next());
        // induce dependence so scores are not all alike
        for r in 0..rows {
            for c in 1..cols {
                v[(r, c)] += 0.8 * v[(r, c - 1)];
            }
        }
        DataMatrix::from_values(v).unwrap()
    }

    fn exact_ln_binomial(n: u64, k: u64) -> f64 {
        let mut num = BigUint::from(1u32);
        let mut den = BigUint::from(1u32);
        for j in 0..k {
            num *= n - j;
            den *= j + 1;
        }
        let q = num / den;
        q.to_string().parse::<f64>().unwrap().ln()
    }

    #[test]
    fn prior_factor_values() {
        assert_eq!(log_dag_prior_factor(6, 0).unwrap(), 0.0);
        assert!((log_dag_prior_factor(6, 2).unwrap() + 10f64.ln()).abs() < 1e-12);
        let want = -exact_ln_binomial(19, 10);
        assert!((log_dag_prior_factor(20, 10).unwrap() - want).abs() < 1e-10);
        assert!(matches!(log_dag_prior_factor(6, 6), Err(Error::SizeOutOfRange { .. })));
        for k in 0..=9 {
            let a = log_dag_prior_factor(10, k).unwrap();
            let b = log_dag_prior_factor(10, 9 - k).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn block_order_puts_node_last() {
        assert_eq!(block_order(2, &[5, 0, 3]), vec![0, 3, 5, 2]);
        assert_eq!(block_order(4, &[]), vec![4]);
    }

    /// Marginal likelihood of one column under mu ~ N(nu, (alpha_mu w)^-1),
    /// w ~ Gamma(dof/2, rate t/2), by brute-force quadrature over (mu, log w).
    fn quadrature_univariate(x: &[f64], nu: f64, alpha_mu: f64, dof: f64, t: f64) -> f64 {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let (mu_lo, mu_hi) = (mean - 12.0, mean + 12.0);
        let (u_lo, u_hi) = (-14.0f64, 8.0f64);
        let (nm, nu_steps) = (3000usize, 3000usize);
        let hm = (mu_hi - mu_lo) / nm as f64;
        let hu = (u_hi - u_lo) / nu_steps as f64;
        let log_norm_gamma = 0.5 * dof * (0.5 * t).ln() - ln_gamma(0.5 * dof);
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let simpson = |k: usize, n: usize| -> f64 {
            if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            }
        };
        let mut logs = Vec::with_capacity((nm + 1) * (nu_steps + 1));
        for a in 0..=nm {
            let mu = mu_lo + a as f64 * hm;
            for b in 0..=nu_steps {
                let u = u_lo + b as f64 * hu;
                let w = u.exp();
                // prior on w in log-coordinates includes the Jacobian w
                let lp_w = log_norm_gamma + (0.5 * dof) * u - 0.5 * t * w;
                let lp_mu = 0.5 * ((alpha_mu * w).ln() - ln2pi) - 0.5 * alpha_mu * w * (mu - nu).powi(2);
                let ll: f64 = x
                    .iter()
                    .map(|xi| 0.5 * (w.ln() - ln2pi) - 0.5 * w * (xi - mu).powi(2))
                    .sum();
                logs.push(lp_w + lp_mu + ll + (simpson(a, nm) * simpson(b, nu_steps)).ln());
            }
        }
        crate::lattice::log_sum(&logs) + (hm * hu / 9.0).ln()
    }

    #[test]
    fn empty_parent_score_matches_quadrature() {
        let raw = toy_data(5, 2, 3);
        let d = crate::dataio::standardize(&raw).unwrap();
        let h = BgeHyper::default_for(2);
        let scorer = LocalScorer::new(&d, &h).unwrap();
        let got = scorer.bge_log_marginal(1, &[]).unwrap();
        let x: Vec<f64> = d.values().column(1).iter().copied().collect();
        let dof = h.alpha_w - 2.0 + 1.0;
        let want = quadrature_univariate(&x, 0.0, h.alpha_mu, dof, h.t_mat[(1, 1)]);
        assert!((got - want).abs() < 1e-4, "bge {got} vs quadrature {want}");
    }

    #[test]
    fn two_node_score_equivalence() {
        let d = toy_data(30, 2, 9);
        let s = LocalScorer::new(&d, &BgeHyper::default_for(2)).unwrap();
        let fwd = s.bge_log_marginal(0, &[]).unwrap() + s.bge_log_marginal(1, &[0]).unwrap();
        let bwd = s.bge_log_marginal(1, &[]).unwrap() + s.bge_log_marginal(0, &[1]).unwrap();
        assert!((fwd - bwd).abs() < 1e-9);
    }

    #[test]
    fn duplicate_column_stays_finite() {
        let mut v = toy_data(20, 3, 5).values().clone();
        let c0 = v.column(0).clone_owned();
        v.set_column(2, &c0);
        let d = DataMatrix::from_values(v).unwrap();
        let s = LocalScorer::new(&d, &BgeHyper::default_for(3)).unwrap();
        assert!(s.log_local(2, &[0]).unwrap().is_finite());
        assert!(s.log_local(1, &[0, 2]).unwrap().is_finite());
    }

    #[test]
    fn numeric_failure_on_broken_prior() {
        let d = toy_data(10, 3, 2);
        let stats = posterior_stats(&d, &BgeHyper::default_for(3)).unwrap();
        let mut bad = stats.clone();
        bad.r_mat[(0, 0)] = -1.0;
        let s = LocalScorer {
            stats: bad,
            hyper: BgeHyper::default_for(3),
            n: 3,
        };
        assert!(matches!(s.bge_log_marginal(1, &[0]), Err(Error::NumericFailure { .. })));
    }

    #[test]
    fn table_indexing_and_naive_recompute() {
        let d = toy_data(25, 5, 11);
        let h = BgeHyper::default_for(5);
        let empty = build_score_table(0, &[], &d, &h).unwrap();
        assert_eq!(empty.log_scores.len(), 1);

        let c = [4, 1, 2];
        let t = build_score_table(3, &c, &d, &h).unwrap();
        assert_eq!(t.log_scores.len(), 8);
        let s = LocalScorer::new(&d, &h).unwrap();
        let want = s.bge_log_marginal(3, &[4, 2]).unwrap() + log_dag_prior_factor(5, 2).unwrap();
        assert!((t.log_scores[0b101] - want).abs() < 1e-12);

        let naive: f64 = (0..8usize)
            .map(|m| {
                let p: Vec<usize> = (0..3).filter(|b| m >> b & 1 == 1).map(|b| c[b]).collect();
                s.log_local(3, &p).unwrap()
            })
            .sum();
        let table_sum: f64 = t.log_scores.iter().sum();
        assert!((naive - table_sum).abs() < 1e-9);
    }

    #[test]
    fn table_invariant_under_candidate_reordering() {
        let d = toy_data(25, 5, 17);
        let h = BgeHyper::default_for(5);
        let a = build_score_table(0, &[1, 2, 3, 4], &d, &h).unwrap();
        let b = build_score_table(0, &[3, 1, 4, 2], &d, &h).unwrap();
        for mask in 0..16usize {
            let set = a.parents_of_mask(mask);
            assert!((a.log_scores[mask] - b.log_scores[b.mask_of(&set)]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_candidates() {
        let d = toy_data(10, 3, 1);
        let h = BgeHyper::default_for(3);
        assert!(build_score_table(0, &[0, 1], &d, &h).is_err());
        assert!(build_score_table(0, &[1, 1], &d, &h).is_err());
        assert!(build_score_table(0, &[7], &d, &h).is_err());
    }

    #[test]
    fn binary_dump_round_trip() {
        let d = toy_data(12, 4, 4);
        let t = build_score_table(2, &[3, 0], &d, &BgeHyper::default_for(4)).unwrap();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 * 4 + 8 * 4);
        assert_eq!(&buf[0..4], &2u32.to_le_bytes());
        assert_eq!(&buf[4..8], &2u32.to_le_bytes());
        assert_eq!(&buf[8..12], &3u32.to_le_bytes());
        let back = LocalScoreTable::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn nonzero_nu_still_score_equivalent() {
        let d = toy_data(15, 3, 21);
        let mut h = BgeHyper::default_for(3);
        h.nu = DVector::from_vec(vec![0.5, -0.3, 0.2]);
        let s = LocalScorer::new(&d, &h).unwrap();
        // 0 -> 1 -> 2 versus 2 -> 1 -> 0
        let a = s.log_local(0, &[]).unwrap() + s.log_local(1, &[0]).unwrap() + s.log_local(2, &[1]).unwrap();
        let b = s.log_local(2, &[]).unwrap() + s.log_local(1, &[2]).unwrap() + s.log_local(0, &[1]).unwrap();
        assert!((a - b).abs() < 1e-9);
    }
}
