use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use gadget_core::mcmc::{self, McmcConfig, PartitionSample};
use gadget_core::pipeline::{
    self, dag_seed, BeepsSummary, ExactMethod, GadgetConfig, Selector,
};
use gadget_core::synth::{generate_data, generate_model, GroundTruth};
use gadget_core::{dagsample, load_csv, standardize, BgeHyper, CandidateAssignment, DataMatrix, Error, LocalScorer};

#[derive(Parser)]
#[command(name = "gadget", version, about = "Sample DAGs and causal effects from linear-Gaussian data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random linear-Gaussian model and data from it.
    Synth(SynthArgs),
    /// Select candidates, run the partition chain and sample DAGs.
    Gadget(GadgetArgs),
    /// Sample causal-effect matrices for a file of DAGs.
    Beeps(BeepsArgs),
    /// Compare posterior-mean effects with a ground truth.
    Eval(EvalArgs),
    /// Exact partition function and coverage for small n.
    Exact(ExactArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, allow_negative_numbers = true)]
    avg_degree: f64,
    /// Number of samples.
    #[arg(long = "N")]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with one column per variable.
    #[arg(long)]
    data: PathBuf,
    /// The CSV has no header row.
    #[arg(long)]
    no_header: bool,
    /// Scale every column to zero mean and unit variance first.
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    alpha_mu: Option<f64>,
    #[arg(long)]
    alpha_w: Option<f64>,
}

impl DataArgs {
    fn load(&self) -> Result<(DataMatrix, BgeHyper), Error> {
        let mut d = load_csv(&self.data, !self.no_header)?;
        if self.standardize {
            d = standardize(&d)?;
        }
        let mut h = BgeHyper::default_for(d.n_vars());
        if let Some(a) = self.alpha_mu {
            h.alpha_mu = a;
        }
        if let Some(a) = self.alpha_w {
            h.alpha_w = a;
        }
        h.validate()?;
        Ok((d, h))
    }
}

#[derive(Args)]
struct GadgetArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Candidate parents per node; defaults to min(12, n - 1).
    #[arg(long)]
    k: Option<usize>,
    /// top, greedy, greedy-lite, back-forth or opt.
    #[arg(long, default_value = "greedy-lite")]
    selector: Selector,
    /// Nodes greedy-lite adds in its last step.
    #[arg(long, default_value_t = 6)]
    lite_tail: usize,
    /// Read candidates from a JSON file instead of selecting them.
    #[arg(long, conflicts_with = "selector")]
    candidates: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    chains: usize,
    /// Total chain length.
    #[arg(long, default_value_t = 100_000)]
    steps: usize,
    #[arg(long, default_value_t = 0.5)]
    burn_in: f64,
    /// Number of DAGs to draw.
    #[arg(long, default_value_t = 1000)]
    dags: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct BeepsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// JSONL file of DAGs as written by `gadget`.
    #[arg(long)]
    dags: PathBuf,
    /// Comma-separated nodes set by a joint intervention.
    #[arg(long, value_delimiter = ',')]
    intervene: Vec<usize>,
    /// Pairs `i:j` (effect of j on i) to summarize; all pairs by default.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    pairs: Vec<[usize; 2]>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    summary: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Compare against the truth rescaled to unit-variance variables.
    #[arg(long)]
    standardized_truth: bool,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value = "greedy-lite")]
    selector: Selector,
    /// auto, dag or partition.
    #[arg(long, default_value = "auto")]
    method: ExactMethod,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_pair(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected i:j, got {s:?}"))?;
    let a = a.trim().parse().map_err(|_| format!("bad node id in {s:?}"))?;
    let b = b.trim().parse().map_err(|_| format!("bad node id in {s:?}"))?;
    Ok([a, b])
}

/// Failures a caller can fix by changing flags exit with 2, the rest with 1.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::KTooLarge { .. }
        | Error::Config(_)
        | Error::DegreeOutOfRange(_)
        | Error::InvalidHyper(_)
        | Error::TooLarge(_)
        | Error::SizeOutOfRange { .. } => 2,
        _ => 1,
    }
}

fn worker_note() -> Result<String, Error> {
    match std::env::var("GADGET_THREADS") {
        Ok(v) => {
            let w: usize = v
                .parse()
                .ok()
                .filter(|&w| w > 0)
                .ok_or_else(|| Error::Config(format!("GADGET_THREADS={v:?} is not a positive integer")))?;
            Ok(format!("workers requested: {w} (sampling streams are fixed per item; output does not depend on it)"))
        }
        Err(_) => Ok("workers: 1".into()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<(), Error> {
    if a.n < 2 {
        return Err(Error::Config("--n must be at least 2".into()));
    }
    if a.samples < 2 {
        return Err(Error::Config("--N must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let gt = generate_model(a.n, a.avg_degree, &mut rng)?;
    let d = generate_data(&gt, a.samples, &mut rng)?;
    std::fs::create_dir_all(&a.out)?;
    d.write_csv(&a.out.join("data.csv"))?;
    std::fs::write(a.out.join("truth.json"), gt.to_json()? + "\n")?;
    Ok(())
}

fn cmd_gadget(a: &GadgetArgs) -> Result<(), Error> {
    let (d, h) = a.data.load()?;
    let n = d.n_vars();
    let k = a.k.unwrap_or(12.min(n - 1));
    let selector = match a.selector {
        Selector::GreedyLite { .. } => Selector::GreedyLite { tail: a.lite_tail },
        s => s,
    };
    let thinning = GadgetConfig::thinning_for(a.steps, a.burn_in, a.dags)?;
    let cfg = GadgetConfig {
        k,
        selector,
        mcmc: McmcConfig {
            chains: a.chains,
            length: a.steps,
            thinning,
            burn_in_fraction: a.burn_in,
            seed: a.seed,
        },
        dag_count: a.dags,
    };
    cfg.validate(n)?;
    std::fs::create_dir_all(&a.out)?;
    let mut log = String::new();
    let result = run_gadget_stages(a, &d, &h, &cfg, &mut log);
    match &result {
        Ok(()) => log.push_str("status: ok\n"),
        Err(e) => {
            let _ = writeln!(log, "status: failed: {e}");
        }
    }
    std::fs::write(a.out.join("diagnostics.log"), &log)?;
    result
}

fn run_gadget_stages(
    a: &GadgetArgs,
    d: &DataMatrix,
    h: &BgeHyper,
    cfg: &GadgetConfig,
    log: &mut String,
) -> Result<(), Error> {
    let n = d.n_vars();
    let _ = writeln!(log, "n: {n}, N: {}, K: {}, {}", d.n_samples(), cfg.k, worker_note()?);
    let clock = Instant::now();
    let scorer = LocalScorer::new(d, h)?;
    let candidates = match &a.candidates {
        Some(path) => {
            let c = CandidateAssignment::read(path)?;
            if c.n() != n || c.k != cfg.k {
                return Err(Error::Config(format!(
                    "candidate file has n = {}, K = {}; expected n = {n}, K = {}",
                    c.n(),
                    c.k,
                    cfg.k
                )));
            }
            c
        }
        None => pipeline::select_candidates(&scorer, cfg.k, cfg.selector, cfg.mcmc.seed)?,
    };
    candidates.write(&a.out.join("candidates.json"))?;
    let _ = writeln!(log, "selection ({}): {:.3}s", cfg.selector, clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let tables = pipeline::score_tables(&scorer, &candidates)?;
    let taus = pipeline::tau_tables(&tables);
    let exceptions: usize = taus.iter().map(|t| t.exception_count()).sum();
    let _ = writeln!(
        log,
        "score and tau tables: {:.3}s, {exceptions} exact exceptions",
        clock.elapsed().as_secs_f64()
    );

    let clock = Instant::now();
    let out = mcmc::run(&cfg.mcmc, &taus)?;
    let mut samples = out.samples;
    let drop = samples.len().saturating_sub(cfg.dag_count);
    samples.drain(..drop);
    pipeline::write_jsonl(&a.out.join("partitions.jsonl"), &samples)?;
    let rates: Vec<String> = out
        .diagnostics
        .acceptance_rates()
        .iter()
        .map(|r| format!("{r:.3}"))
        .collect();
    let _ = writeln!(
        log,
        "chain: {} steps, {} chains, thinning {}: {:.3}s",
        cfg.mcmc.length,
        cfg.mcmc.chains,
        cfg.mcmc.thinning,
        clock.elapsed().as_secs_f64()
    );
    let _ = writeln!(log, "acceptance rates: {}", rates.join(" "));
    let _ = writeln!(log, "swap acceptance rate: {:.3}", out.diagnostics.swap_rate());

    let clock = Instant::now();
    let partitions = samples
        .iter()
        .map(PartitionSample::partition)
        .collect::<Result<Vec<_>, _>>()?;
    let dags = dagsample::sample_dags(&partitions, &tables, dag_seed(cfg.mcmc.seed))?;
    pipeline::write_dags(&a.out.join("dags.jsonl"), &dags)?;
    let _ = writeln!(log, "dag sampling: {} DAGs, {:.3}s", dags.len(), clock.elapsed().as_secs_f64());
    Ok(())
}

#[derive(Serialize)]
struct EffectRecord {
    sample_index: usize,
    effects: Vec<f64>,
}

fn cmd_beeps(a: &BeepsArgs) -> Result<(), Error> {
    let (d, h) = a.data.load()?;
    let n = d.n_vars();
    if let Some(&x) = a.intervene.iter().find(|&&x| x >= n) {
        return Err(Error::Config(format!("intervened node {x} out of range")));
    }
    if let Some(p) = a.pairs.iter().find(|p| p[0] >= n || p[1] >= n) {
        return Err(Error::Config(format!("pair {}:{} out of range", p[0], p[1])));
    }
    let dags = pipeline::read_dags(&a.dags)?;
    if dags.is_empty() {
        return Err(Error::InvalidData("DAG file is empty".into()));
    }
    let (effects, summary) = pipeline::run_beeps_summary(&dags, &d, &h, &a.intervene, &a.pairs, a.seed)?;
    std::fs::create_dir_all(&a.out)?;
    pipeline::write_jsonl(
        &a.out.join("effects.jsonl"),
        effects.iter().enumerate().map(|(s, e)| EffectRecord {
            sample_index: s,
            effects: (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| e.a_mat[(i, j)]).collect(),
        }),
    )?;
    write_json(&a.out.join("summary.json"), &summary)
}

fn cmd_eval(a: &EvalArgs) -> Result<(), Error> {
    for p in [&a.summary, &a.truth] {
        if !p.exists() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let summary: BeepsSummary = serde_json::from_str(&std::fs::read_to_string(&a.summary)?)?;
    let mut truth = GroundTruth::from_json(&std::fs::read_to_string(&a.truth)?)?;
    if a.standardized_truth {
        truth = truth.standardized()?;
    }
    if summary.n != truth.dag.n() {
        return Err(Error::Config(format!(
            "summary has n = {}, truth has n = {}",
            summary.n,
            truth.dag.n()
        )));
    }
    let report = pipeline::evaluate(&summary.mean_matrix(), Some(&summary.ancestors), &truth)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(out) = &a.out {
        std::fs::write(out, text + "\n")?;
    }
    Ok(())
}

fn cmd_exact(a: &ExactArgs) -> Result<(), Error> {
    let (d, h) = a.data.load()?;
    let scorer = LocalScorer::new(&d, &h)?;
    let report = pipeline::exact_report(&scorer, a.k, a.selector, a.method, a.seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Gadget(a) => cmd_gadget(a),
        Command::Beeps(a) => cmd_beeps(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Exact(a) => cmd_exact(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
