//! Random linear-Gaussian DAG models and data drawn from them.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::beeps::{effects, EffectMatrix, LinearDagParams};
use crate::dataio::DataMatrix;
use crate::error::{Error, Result};
use crate::graph::Dag;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub dag: Dag,
    pub params: LinearDagParams,
    pub true_effects: EffectMatrix,
}

impl GroundTruth {
    /// Population covariance `(I - B)^-1 Q^-1 (I - B)^-T`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let a = &self.true_effects.a_mat;
        let qinv = DMatrix::from_diagonal(&self.params.q_diag.map(|q| 1.0 / q));
        a * qinv * a.transpose()
    }

    /// The same model on unit-variance variables: `b_ij` becomes `b_ij sd_j / sd_i`.
    /// Effects of standardized data are compared against this version.
    pub fn standardized(&self) -> Result<Self> {
        let sd = self.covariance().diagonal().map(f64::sqrt);
        let n = sd.len();
        let b = DMatrix::from_fn(n, n, |i, j| self.params.b_mat[(i, j)] * sd[j] / sd[i]);
        let q = DVector::from_fn(n, |i, _| self.params.q_diag[i] * sd[i] * sd[i]);
        let params = LinearDagParams { b_mat: b, q_diag: q };
        Ok(Self {
            dag: self.dag.clone(),
            true_effects: effects(&params)?,
            params,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let n = self.dag.n();
        let j = TruthJson {
            parents: self.dag.parent_sets().to_vec(),
            b: (0..n)
                .map(|i| (0..n).map(|k| self.params.b_mat[(i, k)]).collect())
                .collect(),
            q: self.params.q_diag.iter().copied().collect(),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    /// Parses the format of `to_json`; effects are recomputed from `B`.
    pub fn from_json(s: &str) -> Result<Self> {
        let j: TruthJson = serde_json::from_str(s)?;
        let n = j.parents.len();
        if j.b.len() != n || j.b.iter().any(|r| r.len() != n) || j.q.len() != n {
            return Err(Error::InvalidData("ground truth dimensions disagree".into()));
        }
        if j.q.iter().any(|&q| !(q > 0.0)) {
            return Err(Error::InvalidData("error precisions must be positive".into()));
        }
        let dag = Dag::new(j.parents)?;
        let b = DMatrix::from_fn(n, n, |i, k| j.b[i][k]);
        for i in 0..n {
            for k in 0..n {
                if (b[(i, k)] != 0.0) != dag.has_edge(k, i) {
                    return Err(Error::InvalidData(format!(
                        "weight of {k} -> {i} disagrees with the parent lists"
                    )));
                }
            }
        }
        let params = LinearDagParams {
            b_mat: b,
            q_diag: DVector::from_vec(j.q),
        };
        Ok(Self {
            dag,
            true_effects: effects(&params)?,
            params,
        })
    }
}

/// JSON layout: parent lists, `b[i][j]` for `j -> i`, and error precisions.
#[derive(Serialize, Deserialize)]
struct TruthJson {
    parents: Vec<Vec<usize>>,
    b: Vec<Vec<f64>>,
    q: Vec<f64>,
}

/// Random order, each forward edge present with probability `avg_degree / (n - 1)`,
/// weights uniform on `±[0.1, 2]`, error variances uniform on `[0.5, 2]`.
pub fn generate_model<R: Rng + ?Sized>(n: usize, avg_degree: f64, rng: &mut R) -> Result<GroundTruth> {
    if n == 0 {
        return Err(Error::InvalidData("model needs at least one node".into()));
    }
    let max = (n - 1) as f64;
    if !(0.0..=max).contains(&avg_degree) {
        return Err(Error::DegreeOutOfRange(avg_degree));
    }
    let p = if n > 1 { avg_degree / max } else { 0.0 };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut parents = vec![Vec::new(); n];
    let mut b = DMatrix::zeros(n, n);
    for (pos, &child) in order.iter().enumerate() {
        for &parent in &order[..pos] {
            if rng.random::<f64>() < p {
                let magnitude = rng.random_range(0.1..=2.0);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                b[(child, parent)] = sign * magnitude;
                parents[child].push(parent);
            }
        }
    }
    let q = DVector::from_fn(n, |_, _| 1.0 / rng.random_range(0.5..=2.0));
    let params = LinearDagParams { b_mat: b, q_diag: q };
    Ok(GroundTruth {
        dag: Dag::new(parents)?,
        true_effects: effects(&params)?,
        params,
    })
}

/// `N` draws of `x = B x + e`, `e ~ N(0, Q^-1)`, in topological order.
pub fn generate_data<R: Rng + ?Sized>(gt: &GroundTruth, n_samples: usize, rng: &mut R) -> Result<DataMatrix> {
    if n_samples == 0 {
        return Err(Error::InvalidData("need at least one sample".into()));
    }
    let n = gt.dag.n();
    let order = gt.dag.topological_order().ok_or(Error::CyclicGraph)?;
    let sd: Vec<f64> = gt.params.q_diag.iter().map(|q| q.sqrt().recip()).collect();
    let mut x = DMatrix::zeros(n_samples, n);
    for r in 0..n_samples {
        for &i in &order {
            let mut v = sd[i] * rng.sample::<f64, _>(StandardNormal);
            for &p in gt.dag.parents(i) {
                v += gt.params.b_mat[(i, p)] * x[(r, p)];
            }
            x[(r, i)] = v;
        }
    }
    DataMatrix::from_values(x)
}
