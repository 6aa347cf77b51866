//! End-to-end stages shared by the command line, the C interface and the tests:
//! candidate selection, Gadget sampling, Beeps summaries and evaluation.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::beeps::{ancestor_posterior, run_beeps, summarize, EffectMatrix, EffectSummary};
use crate::candidates::{
    select_back_forth, select_greedy, select_greedy_lite, select_opt, select_top,
    CandidateAssignment, DEFAULT_LITE_TAIL,
};
use crate::dagsample::sample_dags;
use crate::dataio::{BgeHyper, DataMatrix};
use crate::error::{Error, Result};
use crate::exact::{
    coverage_exact, posterior_by_dag_enumeration, posterior_by_partition_sum, ExactPosterior,
    MAX_DAG_ENUMERATION, MAX_PARTITION_SUM,
};
use crate::graph::Dag;
use crate::mcmc::{self, ChainDiagnostics, McmcConfig, PartitionSample};
use crate::scores::{LocalScoreTable, LocalScorer};
use crate::synth::GroundTruth;
use crate::tau::{build_tau, TauTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    Top,
    Greedy,
    GreedyLite { tail: usize },
    BackForth,
    Opt,
}

impl Default for Selector {
    fn default() -> Self {
        Selector::GreedyLite {
            tail: DEFAULT_LITE_TAIL,
        }
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "top" => Selector::Top,
            "greedy" => Selector::Greedy,
            "greedy-lite" => Selector::default(),
            "back-forth" => Selector::BackForth,
            "opt" => Selector::Opt,
            other => return Err(Error::Config(format!("unknown selector {other:?}"))),
        })
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selector::Top => "top",
            Selector::Greedy => "greedy",
            Selector::GreedyLite { .. } => "greedy-lite",
            Selector::BackForth => "back-forth",
            Selector::Opt => "opt",
        })
    }
}

/// Exact posterior over unrestricted candidates, by DAG enumeration when `n` allows.
pub fn exact_posterior(scorer: &LocalScorer) -> Result<(ExactPosterior, Vec<LocalScoreTable>)> {
    let n = scorer.n_vars();
    if n > MAX_PARTITION_SUM {
        return Err(Error::TooLarge(format!(
            "exact posterior needs n <= {MAX_PARTITION_SUM}, got {n}"
        )));
    }
    let tables = scorer.full_tables()?;
    let exact = if n <= MAX_DAG_ENUMERATION {
        posterior_by_dag_enumeration(&tables)?
    } else {
        let taus: Vec<TauTable> = tables.iter().map(build_tau).collect();
        posterior_by_partition_sum(&taus, &tables)?
    };
    Ok((exact, tables))
}

/// Greedy-lite tails larger than `k` are clamped to `k`.
pub fn select_candidates(
    scorer: &LocalScorer,
    k: usize,
    selector: Selector,
    seed: u64,
) -> Result<CandidateAssignment> {
    match selector {
        Selector::Top => select_top(scorer, k),
        Selector::Greedy => select_greedy(scorer, k),
        Selector::GreedyLite { tail } => select_greedy_lite(scorer, k, tail.min(k)),
        Selector::BackForth => select_back_forth(scorer, k, seed),
        Selector::Opt => {
            let n = scorer.n_vars();
            if k + 1 > n {
                return Err(Error::KTooLarge {
                    k,
                    available: n.saturating_sub(1),
                });
            }
            select_opt(&exact_posterior(scorer)?.0, k)
        }
    }
}

pub fn score_tables(scorer: &LocalScorer, assign: &CandidateAssignment) -> Result<Vec<LocalScoreTable>> {
    assign
        .sets
        .iter()
        .enumerate()
        .map(|(i, c)| scorer.table(i, c))
        .collect()
}

pub fn tau_tables(tables: &[LocalScoreTable]) -> Vec<TauTable> {
    tables.iter().map(build_tau).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GadgetConfig {
    pub k: usize,
    pub selector: Selector,
    pub mcmc: McmcConfig,
    /// Number of DAGs `r`.
    pub dag_count: usize,
}

impl GadgetConfig {
    /// Thinning that leaves at least `dag_count` post-burn-in samples.
    pub fn thinning_for(length: usize, burn_in_fraction: f64, dag_count: usize) -> Result<usize> {
        let burn = (burn_in_fraction * length as f64).floor() as usize;
        if dag_count == 0 {
            return Err(Error::Config("need at least one DAG".into()));
        }
        let t = (length - burn.min(length)) / dag_count;
        if t == 0 {
            return Err(Error::Config(format!(
                "{} post-burn-in steps cannot yield {dag_count} samples",
                length - burn.min(length)
            )));
        }
        Ok(t)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k + 1 > n {
            return Err(Error::KTooLarge {
                k: self.k,
                available: n.saturating_sub(1),
            });
        }
        if self.k > crate::lattice::MAX_GROUND_SET {
            return Err(Error::Config(format!("k = {} exceeds 25", self.k)));
        }
        self.mcmc.validate()?;
        if self.dag_count == 0 || self.mcmc.stored_count() < self.dag_count {
            return Err(Error::Config(format!(
                "the chain stores {} samples, {} DAGs requested",
                self.mcmc.stored_count(),
                self.dag_count
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GadgetRun {
    pub candidates: CandidateAssignment,
    /// The last `dag_count` stored partitions.
    pub samples: Vec<PartitionSample>,
    pub dags: Vec<Dag>,
    pub diagnostics: ChainDiagnostics,
    pub exception_counts: Vec<usize>,
}

/// Random stream for DAG sampling, distinct from the chains' streams.
pub fn dag_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

pub fn run_gadget(d: &DataMatrix, h: &BgeHyper, cfg: &GadgetConfig) -> Result<GadgetRun> {
    let scorer = LocalScorer::new(d, h)?;
    cfg.validate(scorer.n_vars())?;
    let candidates = select_candidates(&scorer, cfg.k, cfg.selector, cfg.mcmc.seed)?;
    run_gadget_with(&scorer, candidates, cfg)
}

pub fn run_gadget_with(
    scorer: &LocalScorer,
    candidates: CandidateAssignment,
    cfg: &GadgetConfig,
) -> Result<GadgetRun> {
    let tables = score_tables(scorer, &candidates)?;
    let taus = tau_tables(&tables);
    let out = mcmc::run(&cfg.mcmc, &taus)?;
    let mut samples = out.samples;
    let drop = samples.len().saturating_sub(cfg.dag_count);
    samples.drain(..drop);
    let partitions = samples
        .iter()
        .map(PartitionSample::partition)
        .collect::<Result<Vec<_>>>()?;
    let dags = sample_dags(&partitions, &tables, dag_seed(cfg.mcmc.seed))?;
    Ok(GadgetRun {
        candidates,
        samples,
        dags,
        diagnostics: out.diagnostics,
        exception_counts: taus.iter().map(TauTable::exception_count).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagRecord {
    pub sample_index: usize,
    pub parents: Vec<Vec<usize>>,
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_dags(path: &Path, dags: &[Dag]) -> Result<()> {
    write_jsonl(
        path,
        dags.iter().enumerate().map(|(s, g)| DagRecord {
            sample_index: s,
            parents: g.parent_sets().to_vec(),
        }),
    )
}

pub fn read_dags(path: &Path) -> Result<Vec<Dag>> {
    read_jsonl::<DagRecord>(path)?
        .into_iter()
        .map(|r| Dag::new(r.parents))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeepsSummary {
    pub n: usize,
    pub samples: usize,
    pub intervened: Vec<usize>,
    pub effects: Vec<EffectSummary>,
    /// `ancestors[j][i]`: fraction of DAGs with `i` an ancestor of `j`.
    pub ancestors: Vec<Vec<f64>>,
}

impl BeepsSummary {
    pub fn build(dags: &[Dag], effects: &[EffectMatrix], intervened: &[usize], pairs: &[[usize; 2]]) -> Self {
        Self {
            n: dags.first().map_or(0, Dag::n),
            samples: effects.len(),
            intervened: intervened.to_vec(),
            effects: summarize(effects, pairs),
            ancestors: ancestor_posterior(dags),
        }
    }

    /// Posterior-mean effect matrix; unit diagonal and zeros for unsummarized pairs.
    pub fn mean_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::identity(self.n, self.n);
        for e in &self.effects {
            m[(e.pair[0], e.pair[1])] = e.mean;
        }
        m
    }
}

pub fn run_beeps_summary(
    dags: &[Dag],
    d: &DataMatrix,
    h: &BgeHyper,
    intervened: &[usize],
    pairs: &[[usize; 2]],
    seed: u64,
) -> Result<(Vec<EffectMatrix>, BeepsSummary)> {
    let effects = run_beeps(dags, d, h, intervened, seed)?;
    let summary = BeepsSummary::build(dags, &effects, intervened, pairs);
    Ok((effects, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub mse: f64,
    /// MSE of the all-zero estimate.
    pub baseline_mse: f64,
    /// Precision of ancestor calls with posterior fraction above one half;
    /// `None` when nothing is called.
    pub ancestor_precision: Option<f64>,
    pub ancestor_calls: usize,
}

/// Mean squared error over ordered pairs `i != j`.
pub fn effect_mse(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    let n = truth.nrows();
    if n < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let d = estimate[(i, j)] - truth[(i, j)];
            acc += d * d;
        }
    }
    acc / (n * (n - 1)) as f64
}

pub fn evaluate(estimate: &DMatrix<f64>, ancestors: Option<&[Vec<f64>]>, truth: &GroundTruth) -> Result<EvalReport> {
    let n = truth.dag.n();
    if estimate.nrows() != n || estimate.ncols() != n {
        return Err(Error::InvalidData(format!(
            "estimate is {}x{}, truth has {n} nodes",
            estimate.nrows(),
            estimate.ncols()
        )));
    }
    let a = &truth.true_effects.a_mat;
    let (precision, calls) = match ancestors {
        Some(anc) if anc.len() == n => {
            let real = truth.dag.ancestor_matrix();
            let mut calls = 0;
            let mut hits = 0;
            for j in 0..n {
                for i in (0..n).filter(|&i| i != j) {
                    if anc[j][i] > 0.5 {
                        calls += 1;
                        hits += real[j][i] as usize;
                    }
                }
            }
            ((calls > 0).then(|| hits as f64 / calls as f64), calls)
        }
        _ => (None, 0),
    };
    Ok(EvalReport {
        n,
        mse: effect_mse(estimate, a),
        baseline_mse: effect_mse(&DMatrix::identity(n, n), a),
        ancestor_precision: precision,
        ancestor_calls: calls,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactReport {
    pub n: usize,
    pub k: usize,
    pub selector: String,
    pub method: String,
    pub log_z: f64,
    pub coverage: f64,
    pub mean_coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactMethod {
    Auto,
    DagEnumeration,
    PartitionSum,
}

impl FromStr for ExactMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "auto" => ExactMethod::Auto,
            "dag" => ExactMethod::DagEnumeration,
            "partition" => ExactMethod::PartitionSum,
            other => return Err(Error::Config(format!("unknown exact method {other:?}"))),
        })
    }
}

/// `Z`, coverage and mean coverage of the selector's assignment.
pub fn exact_report(
    scorer: &LocalScorer,
    k: usize,
    selector: Selector,
    method: ExactMethod,
    seed: u64,
) -> Result<ExactReport> {
    let n = scorer.n_vars();
    let use_dags = match method {
        ExactMethod::Auto => n <= MAX_DAG_ENUMERATION,
        ExactMethod::DagEnumeration => true,
        ExactMethod::PartitionSum => false,
    };
    if use_dags && n > MAX_DAG_ENUMERATION {
        return Err(Error::TooLarge(format!(
            "DAG enumeration supports n <= {MAX_DAG_ENUMERATION}, got {n}"
        )));
    }
    if n > MAX_PARTITION_SUM {
        return Err(Error::TooLarge(format!(
            "partition summation supports n <= {MAX_PARTITION_SUM}, got {n}"
        )));
    }
    let tables = scorer.full_tables()?;
    let exact = if use_dags {
        posterior_by_dag_enumeration(&tables)?
    } else {
        posterior_by_partition_sum(&tau_tables(&tables), &tables)?
    };
    let assign = match selector {
        Selector::Opt => {
            if k + 1 > n {
                return Err(Error::KTooLarge {
                    k,
                    available: n.saturating_sub(1),
                });
            }
            select_opt(&exact, k)?
        }
        other => select_candidates(scorer, k, other, seed)?,
    };
    let (coverage, mean_coverage) = coverage_exact(&assign, &exact, &tables)?;
    Ok(ExactReport {
        n,
        k,
        selector: selector.to_string(),
        method: if use_dags { "dag-enumeration" } else { "partition-sum" }.into(),
        log_z: exact.log_z,
        coverage,
        mean_coverage,
    })
}
