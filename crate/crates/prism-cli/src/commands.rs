//! Subcommand implementations: benchmark sweeps, one-off synthesis, and
//! ledger audits.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use prism::bench::{gen_alloc_bench, gen_scm, load_adult, BenchPair, ScmConfig, ShiftKind};
use prism::core::{DiscreteDataset, Schema};
use prism::eval::{
    aggregate_all, run_pipeline, tstr_run_with, write_aggregate_csv, write_figure_csv,
    write_runs_csv, MethodConfig, RunReport, DEFAULT_EPSILONS, DEFAULT_N_SYN,
};
use prism::par;
use prism::privacy::{compose, LedgerEntry};
use prism::structure::{Dag, Regime};
use prism::allocation::AllocationMode;

use crate::config::{parse_list, ConfigFile};
use crate::{AuditArgs, BenchArgs, SynthArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config: exit code 2.
    Usage(String),
    /// Failure while running: exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<prism::core::Error> for CliError {
    fn from(err: prism::core::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

// ---------------------------------------------------------------------------
// bench

#[derive(Clone, Copy, PartialEq, Eq)]
enum BenchmarkKind {
    ScmSpurious,
    ScmMarginal,
    AllocWins,
    Adult,
}

impl BenchmarkKind {
    fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "scm-spurious" => Ok(BenchmarkKind::ScmSpurious),
            "scm-marginal" => Ok(BenchmarkKind::ScmMarginal),
            "alloc-wins" => Ok(BenchmarkKind::AllocWins),
            "adult" => Ok(BenchmarkKind::Adult),
            other => Err(usage(format!(
                "unknown benchmark `{other}` (expected scm-spurious, scm-marginal, alloc-wins, \
                 or adult)"
            ))),
        }
    }

    fn figure_file(self) -> &'static str {
        match self {
            BenchmarkKind::ScmSpurious => "fig_scm_shift.csv",
            BenchmarkKind::ScmMarginal => "fig_scm_marginal.csv",
            BenchmarkKind::AllocWins => "fig_alloc_wins.csv",
            BenchmarkKind::Adult => "fig_adult.csv",
        }
    }

    /// Benchmark draws come from a seed stream disjoint from the evaluation
    /// seeds, offset per benchmark.
    fn data_seed_base(self) -> u64 {
        match self {
            BenchmarkKind::ScmSpurious => 1000,
            BenchmarkKind::ScmMarginal => 2000,
            BenchmarkKind::AllocWins => 3000,
            BenchmarkKind::Adult => 0,
        }
    }

    fn default_methods(self) -> Vec<&'static str> {
        match self {
            BenchmarkKind::ScmSpurious | BenchmarkKind::ScmMarginal => vec![
                "prism-causal-opt",
                "prism-causal-unif",
                "prism-graphical-opt",
                "prism-graphical-unif",
                "all-features-unif",
                "independence-only",
                "corr-top2",
            ],
            BenchmarkKind::AllocWins => vec!["oracle-opt", "oracle-unif"],
            BenchmarkKind::Adult => vec![
                "prism-predictive-opt",
                "prism-predictive-unif",
                "all-features-unif",
                "independence-only",
                "corr-top8",
            ],
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "run.benchmark",
    "run.methods",
    "run.epsilons",
    "run.seeds",
    "run.n_syn",
    "run.k",
    "run.output_dir",
    "run.adult_path",
    "run.adult_raw",
    "scm.n_train",
    "scm.n_test",
    "scm.p_flip_train",
    "scm.p_flip_test",
    "scm.shift_kind",
    "scm.seed",
];

/// Everything needed to materialize the benchmark for one evaluation seed.
struct BenchPlan {
    kind: BenchmarkKind,
    scm_base: Option<ScmConfig>,
    data_seed_base: u64,
    adult_path: Option<PathBuf>,
    adult_raw: bool,
}

impl BenchPlan {
    fn bench_for_seed(&self, seed: u64) -> Result<BenchPair, CliError> {
        match self.kind {
            BenchmarkKind::ScmSpurious | BenchmarkKind::ScmMarginal => {
                let mut config = self.scm_base.clone().expect("scm template");
                config.seed = self.data_seed_base + seed;
                Ok(gen_scm(&config)?)
            }
            BenchmarkKind::AllocWins => Ok(gen_alloc_bench(self.data_seed_base + seed)?),
            BenchmarkKind::Adult => {
                let path = self.adult_path.as_deref().ok_or_else(|| {
                    usage("the adult benchmark needs --adult-path or run.adult_path")
                })?;
                Ok(load_adult(path, seed, self.adult_raw)?)
            }
        }
    }
}

fn scm_template(kind: BenchmarkKind, file: &ConfigFile) -> Result<Option<ScmConfig>, CliError> {
    let mut base = match kind {
        BenchmarkKind::ScmSpurious => ScmConfig::spurious(0),
        BenchmarkKind::ScmMarginal => ScmConfig::marginal(0),
        _ => return Ok(None),
    };
    if let Some(v) = file.get_parsed::<usize>("scm.n_train").map_err(usage)? {
        base.n_train = v;
    }
    if let Some(v) = file.get_parsed::<usize>("scm.n_test").map_err(usage)? {
        base.n_test = v;
    }
    if let Some(v) = file.get_parsed::<f64>("scm.p_flip_train").map_err(usage)? {
        base.p_flip_train = v;
    }
    if let Some(v) = file.get_parsed::<f64>("scm.p_flip_test").map_err(usage)? {
        base.p_flip_test = v;
    }
    if let Some(v) = file.get("scm.shift_kind") {
        base.shift_kind = match v {
            "spurious" => ShiftKind::Spurious,
            "marginal" => ShiftKind::Marginal,
            other => return Err(usage(format!("unknown shift_kind `{other}`"))),
        };
    }
    Ok(Some(base))
}

pub fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            let parsed = ConfigFile::parse(&text)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            parsed.ensure_known(KNOWN_KEYS).map_err(usage)?;
            parsed
        }
        None => ConfigFile::default(),
    };

    let benchmark = args
        .benchmark
        .clone()
        .or_else(|| file.get("run.benchmark").map(str::to_string))
        .ok_or_else(|| usage("name a benchmark via --benchmark or run.benchmark"))?;
    let kind = BenchmarkKind::parse(&benchmark)?;

    let k = match args.k.or(file.get_parsed("run.k").map_err(usage)?) {
        Some(k) => Some(k),
        None if kind == BenchmarkKind::Adult => Some(8),
        None => None,
    };
    let method_names: Vec<String> = args
        .methods
        .clone()
        .or_else(|| {
            file.get("run.methods")
                .map(|raw| parse_list(raw).expect("string list"))
        })
        .unwrap_or_else(|| kind.default_methods().iter().map(|s| s.to_string()).collect());
    let methods: Vec<MethodConfig> = method_names
        .iter()
        .map(|name| MethodConfig::parse(name, k).map_err(|e| usage(e.to_string())))
        .collect::<Result<_, _>>()?;

    let epsilons: Vec<f64> = args
        .epsilons
        .clone()
        .or(file.get_list("run.epsilons").map_err(usage)?)
        .unwrap_or_else(|| DEFAULT_EPSILONS.to_vec());
    let seeds: Vec<u64> = args
        .seeds
        .clone()
        .or(file.get_list("run.seeds").map_err(usage)?)
        .unwrap_or_else(|| (0..10).collect());
    if methods.is_empty() || epsilons.is_empty() || seeds.is_empty() {
        return Err(usage("methods, epsilons, and seeds must all be nonempty"));
    }
    let n_syn = args
        .n_syn
        .or(file.get_parsed("run.n_syn").map_err(usage)?)
        .unwrap_or(DEFAULT_N_SYN);
    let output_dir = args
        .output_dir
        .clone()
        .or_else(|| file.get("run.output_dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let adult_path = args
        .adult_path
        .clone()
        .or_else(|| file.get("run.adult_path").map(PathBuf::from));
    let adult_raw =
        args.adult_raw || file.get_parsed("run.adult_raw").map_err(usage)?.unwrap_or(false);

    let plan = BenchPlan {
        kind,
        scm_base: scm_template(kind, &file)?,
        data_seed_base: file
            .get_parsed("scm.seed")
            .map_err(usage)?
            .unwrap_or_else(|| kind.data_seed_base()),
        adult_path,
        adult_raw,
    };

    // One benchmark draw per evaluation seed, then the full grid fanned out;
    // results keep combo order, so output files are reproducible bytes.
    let benches: Vec<BenchPair> = seeds
        .iter()
        .map(|&s| plan.bench_for_seed(s))
        .collect::<Result<_, _>>()?;
    let mut combos = Vec::new();
    for method in &methods {
        for &eps in &epsilons {
            for (idx, &seed) in seeds.iter().enumerate() {
                combos.push((method.clone(), eps, seed, idx));
            }
        }
    }
    let runs: Vec<RunReport> = par::map_vec(&combos, |(method, eps, seed, idx)| {
        tstr_run_with(method, &benches[*idx], *eps, n_syn, *seed)
    })
    .into_iter()
    .collect::<prism::core::Result<_>>()?;

    fs::create_dir_all(&output_dir)?;
    let runs_path = output_dir.join("runs.csv");
    write_runs_csv(fs::File::create(&runs_path)?, &runs)?;
    println!("wrote {} ({} runs)", runs_path.display(), runs.len());

    if seeds.len() >= 2 {
        let aggregates = aggregate_all(&runs)?;
        let aggregate_path = output_dir.join("aggregate.csv");
        write_aggregate_csv(fs::File::create(&aggregate_path)?, &aggregates)?;
        let figure_path = output_dir.join(kind.figure_file());
        write_figure_csv(fs::File::create(&figure_path)?, &aggregates)?;
        println!("wrote {}", aggregate_path.display());
        println!("wrote {}", figure_path.display());
        for agg in &aggregates {
            println!(
                "  {} eps={}: auc {:.3} ± {:.3}",
                agg.method, agg.epsilon, agg.auc_mean, agg.auc_ci95
            );
        }
    } else {
        println!("single seed: skipping aggregate.csv and figure output");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synth

fn read_discrete_csv(path: &Path) -> Result<DiscreteDataset, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| usage(e.to_string()))?.iter().map(str::to_string).collect();
    if headers.is_empty() {
        return Err(usage("input csv has no columns"));
    }
    let mut rows: Vec<Vec<u32>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Runtime(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(CliError::Runtime(format!(
                "row {}: expected {} fields, found {}",
                idx + 1,
                headers.len(),
                record.len()
            )));
        }
        let row: Vec<u32> = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse().map_err(|_| {
                    CliError::Runtime(format!(
                        "row {}, column {}: `{field}` is not a nonnegative integer code",
                        idx + 1,
                        headers[col]
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(usage("input csv has no data rows"));
    }
    let cards: Vec<usize> = (0..headers.len())
        .map(|c| rows.iter().map(|r| r[c] as usize + 1).max().unwrap_or(1))
        .collect();
    let columns = headers.into_iter().zip(cards).collect();
    let schema = Schema::new(columns, rows[0].len() - 1)?;
    Ok(DiscreteDataset::from_rows(schema, &rows)?)
}

/// One `parent child` pair of zero-based column indices per line; `#` starts
/// a comment.
fn read_dag(path: &Path, node_count: usize) -> Result<Dag, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse = |token: Option<&str>| -> Result<usize, CliError> {
            token
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| usage(format!("{}:{}: expected `parent child`", path.display(), idx + 1)))
        };
        let parent = parse(parts.next())?;
        let child = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(usage(format!(
                "{}:{}: expected exactly two indices",
                path.display(),
                idx + 1
            )));
        }
        edges.push((parent, child));
    }
    Ok(Dag::new(node_count, edges)?)
}

fn write_ledger(path: &Path, ledger: &[LedgerEntry]) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(e.to_string()))?;
    writer
        .write_record(["epsilon", "delta", "label"])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    for entry in ledger {
        writer
            .write_record([
                format!("{:.12}", entry.epsilon),
                format!("{:e}", entry.delta),
                entry.label.clone(),
            ])
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let data = read_discrete_csv(&args.input)?;
    let regime = match args.regime.as_str() {
        "causal" => Regime::Causal,
        "graphical" => Regime::Graphical,
        "predictive" => Regime::Predictive,
        other => return Err(usage(format!("unknown regime `{other}`"))),
    };
    let allocation = match args.allocation.as_str() {
        "optimal" => AllocationMode::Optimal,
        "uniform" => AllocationMode::Uniform,
        other => return Err(usage(format!("unknown allocation `{other}`"))),
    };
    let k = match regime {
        Regime::Predictive => {
            Some(args.k.ok_or_else(|| usage("the predictive regime needs --k"))?)
        }
        _ => None,
    };
    let dag = match regime {
        Regime::Causal | Regime::Graphical => {
            let path = args
                .dag
                .as_deref()
                .ok_or_else(|| usage("the causal and graphical regimes need --dag"))?;
            Some(read_dag(path, data.schema().ncols())?)
        }
        Regime::Predictive => None,
    };

    let method = MethodConfig::Prism { regime, allocation, k };
    let n_syn = args.n_syn.unwrap_or_else(|| data.n());
    let output =
        run_pipeline(&method, &data, dag.as_ref(), None, args.epsilon, n_syn, args.seed)?;

    let output_dir = args.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&output_dir)?;
    let synth_path = output_dir.join("synthetic.csv");
    let mut writer =
        csv::Writer::from_path(&synth_path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let schema = output.synthetic.schema().clone();
    let names: Vec<&str> = (0..schema.ncols()).map(|c| schema.name(c)).collect();
    writer.write_record(&names).map_err(|e| CliError::Runtime(e.to_string()))?;
    for r in 0..output.synthetic.n() {
        let row: Vec<String> =
            output.synthetic.row(r).iter().map(|v| v.to_string()).collect();
        writer.write_record(&row).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    writer.flush()?;

    let ledger_path = output_dir.join("ledger.csv");
    write_ledger(&ledger_path, &output.ledger)?;
    let (eps, delta) = compose(&output.ledger);
    println!("wrote {} ({} records)", synth_path.display(), output.synthetic.n());
    println!(
        "wrote {} ({} steps composing to epsilon {:.6}, delta {:.3e})",
        ledger_path.display(),
        output.ledger.len(),
        eps,
        delta
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// audit

fn parse_ledger(text: &str) -> Result<Vec<LedgerEntry>, CliError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(text.as_bytes());
    let mut entries = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| usage(format!("ledger row {}: {e}", idx + 1)))?;
        if record.len() != 3 {
            return Err(usage(format!("ledger row {}: expected 3 fields", idx + 1)));
        }
        let epsilon: f64 = record[0]
            .parse()
            .map_err(|_| usage(format!("ledger row {}: bad epsilon `{}`", idx + 1, &record[0])))?;
        let delta: f64 = record[1]
            .parse()
            .map_err(|_| usage(format!("ledger row {}: bad delta `{}`", idx + 1, &record[1])))?;
        entries.push(LedgerEntry::new(record[2].to_string(), epsilon, delta));
    }
    Ok(entries)
}

pub fn cmd_audit(args: &AuditArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.ledger)
        .map_err(|e| usage(format!("cannot read {}: {e}", args.ledger.display())))?;
    let entries = parse_ledger(&text)?;
    for entry in &entries {
        println!("{:<12.9} {:<12.3e} {}", entry.epsilon, entry.delta, entry.label);
    }
    let (eps, delta) = compose(&entries);
    println!("total: epsilon {eps:.9}, delta {delta:.3e} ({} steps)", entries.len());
    Ok(())
}
