use std::fs;
use std::io::{self, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mol_core::decomposition::ReconstructionReport;
use mol_core::experiment::{OutputSpec, ReportFormat, WorkloadSource};
use mol_core::format::{read_index, read_queries, write_index, write_queries};
use mol_core::verify::run_verify;
use mol_core::{
    decompose, generate, mol_score_batch, run_experiment, to_mol_instance, ComponentConfig, Distribution,
    ExperimentConfig, ExperimentReport, GatingFunction, Method, MolDecomposition, WorkloadSpec,
};

mod parse;

/// Mixture-of-logits retrieval: workloads, benchmarks, queries, decomposition.
#[derive(Parser)]
#[command(name = "mol", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic workload and write the index and query files.
    Gen(GenArgs),
    /// Run an experiment config and write the report.
    Bench(BenchArgs),
    /// Answer one query and print its top-k with scores.
    Query(QueryArgs),
    /// Decompose a matrix into a two-component MoL and write the certificate.
    Decompose(DecomposeArgs),
    /// Run the invariant suite over a seed range.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Workload spec JSON (or an experiment config with a generated workload).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; receives `items.mole` and `queries.molq`.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n_items: usize,
    #[arg(long, default_value_t = 32)]
    n_queries: usize,
    #[arg(long, default_value_t = 2)]
    p_q: usize,
    #[arg(long, default_value_t = 4)]
    p_x: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long)]
    normalized: bool,
    /// Draw vectors around this many cluster centers instead of i.i.d.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    spread: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of a generated workload.
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; `.json` selects JSON, anything else CSV. Defaults to the
    /// config's `output`, or CSV on stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    /// Experiment config supplying the workload and gate, instead of
    /// `--index`/`--queries`/`--gate`.
    #[arg(long, conflicts_with_all = ["index", "queries"])]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, requires = "queries")]
    index: Option<PathBuf>,
    #[arg(long, requires = "index")]
    queries: Option<PathBuf>,
    /// Position of the query in the query file.
    #[arg(long, default_value_t = 0)]
    query: usize,
    #[arg(long, short, default_value_t = 10)]
    k: usize,
    /// brute_force, exact, per_embedding:N, average:N or combined:N1,N2
    #[arg(long, default_value = "exact", value_parser = parse::method)]
    method: Method,
    /// uniform, argmax or softmax:T
    #[arg(long, value_parser = parse::gate)]
    gate: Option<GatingFunction>,
    /// Also write the result as JSON here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Matrix file: one row per line, values separated by commas or whitespace.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, short)]
    d: usize,
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    /// Certificate JSON path; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Half-open seed range `A..B`.
    #[arg(long, default_value = "0..10", value_parser = parse::seed_range, conflicts_with = "seed")]
    seeds: Range<u64>,
    /// Verify a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the full report as JSON here.
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Outcome {
    Ok,
    VerificationFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Query(args) => cmd_query(args),
        Command::Decompose(args) => cmd_decompose(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("--config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("--config {}", path.display()))
}

fn load_workload_spec(path: &Path) -> anyhow::Result<WorkloadSpec> {
    let value: serde_json::Value = read_json(path)?;
    let spec = match value.get("workload") {
        Some(workload) => match serde_json::from_value(workload.clone())? {
            WorkloadSource::Generate(spec) => spec,
            WorkloadSource::Files { .. } => bail!("--config {}: workload must be a generator spec", path.display()),
        },
        None => serde_json::from_value(value).with_context(|| format!("--config {}", path.display()))?,
    };
    Ok(spec)
}

fn cmd_gen(args: GenArgs) -> anyhow::Result<Outcome> {
    let mut spec = match &args.config {
        Some(path) => load_workload_spec(path)?,
        None => WorkloadSpec {
            seed: 0,
            n_items: args.n_items,
            n_queries: args.n_queries,
            config: ComponentConfig::new(args.p_q, args.p_x, args.dim, args.normalized)?,
            gate: GatingFunction::Uniform,
            distribution: match args.clusters {
                Some(n_clusters) => Distribution::Clustered { n_clusters, spread: args.spread },
                None => Distribution::default(),
            },
        },
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let workload = generate(&spec)?;
    fs::create_dir_all(&args.output).with_context(|| format!("--output {}", args.output.display()))?;
    let items = args.output.join("items.mole");
    let queries = args.output.join("queries.molq");
    write_index(&workload.index, &items)?;
    write_queries(&workload.queries, &queries)?;
    println!(
        "wrote {} items to {} and {} queries to {}",
        workload.index.n_items(),
        items.display(),
        workload.queries.len(),
        queries.display()
    );
    Ok(Outcome::Ok)
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<Outcome> {
    let mut config: ExperimentConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        match &mut config.workload {
            WorkloadSource::Generate(spec) => spec.seed = seed,
            WorkloadSource::Files { .. } => bail!("--seed only applies to generated workloads"),
        }
    }
    let output = match args.output {
        Some(path) => {
            let format = if path.extension().is_some_and(|e| e == "json") {
                ReportFormat::Json
            } else {
                ReportFormat::Csv
            };
            Some(OutputSpec { path, format })
        }
        None => config.output.clone(),
    };
    let report = run_experiment(&config)?;
    for skipped in &report.skipped {
        eprintln!("skipped {skipped}: budget cannot cover k");
    }
    match output {
        Some(OutputSpec { path, format }) => {
            let file = fs::File::create(&path).with_context(|| format!("output {}", path.display()))?;
            write_report(&report, format, file)?;
            eprintln!("wrote {} rows to {}", report.rows.len(), path.display());
        }
        None => write_report(&report, ReportFormat::Csv, io::stdout().lock())?,
    }
    Ok(Outcome::Ok)
}

fn write_report(report: &ExperimentReport, format: ReportFormat, mut out: impl Write) -> anyhow::Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut writer = csv::Writer::from_writer(out);
            for row in &report.rows {
                writer.serialize(row)?;
            }
            writer.flush()?;
        }
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, report)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn cmd_query(args: QueryArgs) -> anyhow::Result<Outcome> {
    let (index, queries, gate) = match (&args.config, &args.index, &args.queries) {
        (Some(path), _, _) => {
            let mut config: ExperimentConfig = read_json(path)?;
            if let (Some(seed), WorkloadSource::Generate(spec)) = (args.seed, &mut config.workload) {
                spec.seed = seed;
            }
            let workload = mol_core::experiment::load_workload(&config)?;
            (workload.index, workload.queries, workload.gate)
        }
        (None, Some(index), Some(queries)) => (
            read_index(index).with_context(|| format!("--index {}", index.display()))?,
            read_queries(queries).with_context(|| format!("--queries {}", queries.display()))?,
            GatingFunction::Uniform,
        ),
        _ => bail!("either --config or both --index and --queries are required"),
    };
    let gate = args.gate.unwrap_or(gate);
    let query = queries
        .get(args.query)
        .ok_or_else(|| anyhow!("--query {} out of range: {} queries loaded", args.query, queries.len()))?;
    let result = mol_core::experiment::run_method(args.method, query, &index, &gate, args.k)?;

    println!("# {} k={} gate={} candidates_scored={}", args.method, args.k, gate.label(), result.candidates_scored);
    println!("rank\titem_id\tscore");
    for (rank, (id, score)) in result.item_ids.iter().zip(&result.scores).enumerate() {
        println!("{}\t{id}\t{score:.9}", rank + 1);
    }
    if let Some(path) = &args.output {
        fs::write(path, serde_json::to_string_pretty(&result)?).with_context(|| format!("--output {}", path.display()))?;
    }
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct DecompositionOutput<'a> {
    certificate: &'a MolDecomposition,
    reconstruction: ReconstructionReport,
}

fn cmd_decompose(args: DecomposeArgs) -> anyhow::Result<Outcome> {
    let text = fs::read_to_string(&args.input).with_context(|| format!("--input {}", args.input.display()))?;
    let matrix = parse::matrix(&text).with_context(|| format!("--input {}", args.input.display()))?;
    let dec = decompose(&matrix, args.d, args.epsilon)?;
    let instance = to_mol_instance(&dec)?;
    let items: Vec<usize> = (0..matrix.cols).collect();
    let mut scores = Vec::with_capacity(matrix.rows * matrix.cols);
    for q in &instance.queries {
        scores.extend(mol_score_batch(q, &instance.index, &items, &instance.gate)?);
    }
    let reconstruction = dec.error_report(&matrix, &scores);
    let json = serde_json::to_string_pretty(&DecompositionOutput {
        certificate: &dec,
        reconstruction,
    })?;
    match &args.output {
        Some(path) => fs::write(path, json + "\n").with_context(|| format!("--output {}", path.display()))?,
        None => println!("{json}"),
    }
    eprintln!(
        "{}x{} d={} rank={} max_rel_error={:.3e} degenerate={}",
        matrix.rows,
        matrix.cols,
        dec.d,
        dec.numerical_rank,
        reconstruction.max_rel_error,
        reconstruction.degenerate_entries
    );
    Ok(Outcome::Ok)
}

fn cmd_verify(args: VerifyArgs) -> anyhow::Result<Outcome> {
    let seeds = match args.seed {
        Some(seed) => seed..seed + 1,
        None => args.seeds,
    };
    let report = run_verify(seeds.clone())?;
    if let Some(path) = &args.output {
        fs::write(path, serde_json::to_string_pretty(&report)?).with_context(|| format!("--output {}", path.display()))?;
    }
    for failure in &report.failures {
        eprintln!("FAIL {failure}");
    }
    println!(
        "verify seeds {}..{}: {} checks, {} failures",
        seeds.start,
        seeds.end,
        report.checks,
        report.failures.len()
    );
    Ok(if report.passed() { Outcome::Ok } else { Outcome::VerificationFailed })
}
