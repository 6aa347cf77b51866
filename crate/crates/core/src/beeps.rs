//! Posterior sampling of linear-Gaussian edge weights given a DAG, and the causal
//! effects `A = (I - B)^-1` they imply.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{posterior_stats, BgeHyper, DataMatrix, PosteriorStats};
use crate::error::{Error, Result};
use crate::graph::{topological_order, Dag};
use crate::scores::{block_order, submatrix};

/// Conditional posterior of one row of `B` and of the node's error precision.
#[derive(Debug, Clone, PartialEq)]
pub struct RowPosterior {
    pub node: usize,
    pub parents: Vec<usize>,
    /// `R11^-1 R12`.
    pub mean: DVector<f64>,
    /// `R11`; `b | q` has precision `q R11`.
    pub precision_scale: DMatrix<f64>,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    pub dof: f64,
    chol_l: DMatrix<f64>,
}

impl RowPosterior {
    /// Location and precision matrix of the marginal multivariate t of the row.
    pub fn t_precision(&self) -> DMatrix<f64> {
        &self.precision_scale * (self.dof / (2.0 * self.gamma_rate))
    }
}

pub fn row_posterior(i: usize, parents: &[usize], stats: &PosteriorStats) -> Result<RowPosterior> {
    let n = stats.r_mat.nrows();
    if i >= n || parents.iter().any(|&p| p >= n || p == i) {
        return Err(Error::InvalidData(format!("bad parent set for node {i}")));
    }
    let order = block_order(i, parents);
    let pa = &order[..order.len() - 1];
    let l = order.len();
    let singular = || Error::SingularBlock { node: i, dag: None };
    let r11 = submatrix(&stats.r_mat, pa);
    let r12 = DVector::from_fn(pa.len(), |a, _| stats.r_mat[(pa[a], i)]);
    let r22 = stats.r_mat[(i, i)];
    let (mean, chol_l) = if pa.is_empty() {
        (DVector::zeros(0), DMatrix::zeros(0, 0))
    } else {
        let chol = r11.clone().cholesky().ok_or_else(singular)?;
        (chol.solve(&r12), chol.l())
    };
    let schur = r22 - r12.dot(&mean);
    let dof = stats.alpha_w_post - n as f64 + l as f64;
    if !(schur > 0.0) || !(dof > 0.0) {
        return Err(singular());
    }
    Ok(RowPosterior {
        node: i,
        parents: pa.to_vec(),
        mean,
        precision_scale: r11,
        gamma_shape: dof / 2.0,
        gamma_rate: schur / 2.0,
        dof,
        chol_l,
    })
}

/// Draws `q ~ Gamma(shape, rate)` and then `b ~ N(mean, (q R11)^-1)`.
pub fn sample_row<R: Rng + ?Sized>(rp: &RowPosterior, rng: &mut R) -> (DVector<f64>, f64) {
    let gamma = Gamma::new(rp.gamma_shape, 1.0 / rp.gamma_rate).expect("positive parameters");
    let q: f64 = gamma.sample(rng);
    let m = rp.mean.len();
    if m == 0 {
        return (DVector::zeros(0), q);
    }
    let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    // L^T y = z gives y ~ N(0, R11^-1)
    let y = rp
        .chol_l
        .transpose()
        .solve_upper_triangular(&z)
        .expect("Cholesky factor has a positive diagonal");
    (&rp.mean + y / q.sqrt(), q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDagParams {
    /// `b_mat[(i, j)]` is the weight of `j -> i`.
    pub b_mat: DMatrix<f64>,
    pub q_diag: DVector<f64>,
}

impl LinearDagParams {
    pub fn n(&self) -> usize {
        self.b_mat.nrows()
    }

    fn support(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        (0..n)
            .map(|i| (0..n).filter(|&j| j != i && self.b_mat[(i, j)] != 0.0).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectMatrix {
    /// `a_mat[(i, j)]` is the total effect of `x_j` on `x_i`.
    pub a_mat: DMatrix<f64>,
}

/// `A = (I - B)^-1` by forward substitution `a_i = e_i + sum_k b_ik a_k` in
/// topological order, so non-ancestral entries stay exactly zero.
pub fn effects(params: &LinearDagParams) -> Result<EffectMatrix> {
    let n = params.n();
    if (0..n).any(|i| params.b_mat[(i, i)] != 0.0) {
        return Err(Error::CyclicSupport);
    }
    let support = params.support();
    let order = topological_order(&support).ok_or(Error::CyclicSupport)?;
    let mut a = DMatrix::zeros(n, n);
    for &i in &order {
        a[(i, i)] = 1.0;
        for &k in &support[i] {
            let b = params.b_mat[(i, k)];
            for j in 0..n {
                let v = a[(k, j)];
                if v != 0.0 {
                    a[(i, j)] += b * v;
                }
            }
        }
    }
    Ok(EffectMatrix { a_mat: a })
}

/// Effects after removing every edge into an intervened node.
pub fn joint_effects(params: &LinearDagParams, intervened: &[usize]) -> Result<EffectMatrix> {
    let mut p = params.clone();
    for &x in intervened {
        if x >= p.n() {
            return Err(Error::InvalidData(format!("intervened node {x} out of range")));
        }
        p.b_mat.row_mut(x).fill(0.0);
    }
    effects(&p)
}

/// Row posteriors keyed by `(node, parents)`, shared across DAG samples.
pub struct RowCache<'a> {
    stats: &'a PosteriorStats,
    rows: HashMap<(usize, Vec<usize>), RowPosterior>,
}

impl<'a> RowCache<'a> {
    pub fn new(stats: &'a PosteriorStats) -> Self {
        Self {
            stats,
            rows: HashMap::new(),
        }
    }

    pub fn get(&mut self, i: usize, parents: &[usize]) -> Result<&RowPosterior> {
        let key = (i, parents.to_vec());
        if !self.rows.contains_key(&key) {
            let rp = row_posterior(i, parents, self.stats)?;
            self.rows.insert(key.clone(), rp);
        }
        Ok(&self.rows[&key])
    }
}

/// Samples `B` and `Q` row by row for one DAG.
pub fn sample_params<R: Rng + ?Sized>(
    g: &Dag,
    cache: &mut RowCache<'_>,
    rng: &mut R,
) -> Result<LinearDagParams> {
    let n = g.n();
    let mut b = DMatrix::zeros(n, n);
    let mut q = DVector::zeros(n);
    for i in 0..n {
        let rp = cache.get(i, g.parents(i))?;
        let (row, qi) = sample_row(rp, rng);
        for (a, &p) in rp.parents.iter().enumerate() {
            b[(i, p)] = row[a];
        }
        q[i] = qi;
    }
    Ok(LinearDagParams { b_mat: b, q_diag: q })
}

/// One effect matrix per DAG; DAG `s` uses random stream `s` of `seed`.
pub fn run_beeps(
    dags: &[Dag],
    d: &DataMatrix,
    h: &BgeHyper,
    intervened: &[usize],
    seed: u64,
) -> Result<Vec<EffectMatrix>> {
    let stats = posterior_stats(d, h)?;
    run_beeps_with_stats(dags, &stats, intervened, seed)
}

pub fn run_beeps_with_stats(
    dags: &[Dag],
    stats: &PosteriorStats,
    intervened: &[usize],
    seed: u64,
) -> Result<Vec<EffectMatrix>> {
    let n = stats.r_mat.nrows();
    let mut cache = RowCache::new(stats);
    dags.iter()
        .enumerate()
        .map(|(s, g)| {
            if g.n() != n {
                return Err(Error::InvalidData(format!(
                    "DAG {s} has {} nodes, data has {n}",
                    g.n()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let params = sample_params(g, &mut cache, &mut rng).map_err(|e| match e {
                Error::SingularBlock { node, .. } => Error::SingularBlock { node, dag: Some(s) },
                other => other,
            })?;
            joint_effects(&params, intervened)
        })
        .collect()
}

/// `out[j][i]`: fraction of DAGs in which `i` is an ancestor of `j`.
pub fn ancestor_posterior(dags: &[Dag]) -> Vec<Vec<f64>> {
    let n = dags.first().map_or(0, Dag::n);
    let mut out = vec![vec![0.0; n]; n];
    if dags.is_empty() {
        return out;
    }
    let w = 1.0 / dags.len() as f64;
    for g in dags {
        for (j, row) in g.ancestor_matrix().iter().enumerate() {
            for (i, &a) in row.iter().enumerate() {
                if a {
                    out[j][i] += w;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    /// `[i, j]`: effect of `x_j` on `x_i`.
    pub pair: [usize; 2],
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-pair posterior summaries; all ordered pairs `i != j` when `pairs` is empty.
pub fn summarize(effects: &[EffectMatrix], pairs: &[[usize; 2]]) -> Vec<EffectSummary> {
    let n = effects.first().map_or(0, |e| e.a_mat.nrows());
    let all: Vec<[usize; 2]>;
    let pairs = if pairs.is_empty() {
        all = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| [i, j]))
            .collect();
        &all
    } else {
        pairs
    };
    pairs
        .iter()
        .map(|&[i, j]| {
            let mut v: Vec<f64> = effects.iter().map(|e| e.a_mat[(i, j)]).collect();
            v.sort_by(f64::total_cmp);
            EffectSummary {
                pair: [i, j],
                mean: v.iter().sum::<f64>() / v.len().max(1) as f64,
                q05: quantile(&v, 0.05),
                q95: quantile(&v, 0.95),
            }
        })
        .collect()
}

/// Entrywise posterior mean of the effect matrices.
pub fn mean_effects(effects: &[EffectMatrix]) -> DMatrix<f64> {
    let n = effects.first().map_or(0, |e| e.a_mat.nrows());
    let mut acc = DMatrix::zeros(n, n);
    for e in effects {
        acc += &e.a_mat;
    }
    if !effects.is_empty() {
        acc /= effects.len() as f64;
    }
    acc
}
