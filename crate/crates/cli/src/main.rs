use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cuberobust::corruption::{corrupt, Adversary};
use cuberobust::facts::{run_facts, FactsConfig};
use cuberobust::geometry::{sample_body, Cloud, SampleSet, TruthLabel};
use cuberobust::harness::{
    estimate, evaluate, generate_instance, mean_tv_nondecreasing, replay, resolve_truth, run_experiment, EstimateMode,
    EstimateOutput, ExperimentConfig, RunReport, SweepSpec, TruthSpec,
};
use cuberobust::set_lemma::{run_lemma_suite, LemmaSuiteConfig};
use serde::Serialize;

const DEFAULT_D: usize = 2;
const DEFAULT_N: usize = 20_000;

#[derive(Parser)]
#[command(name = "cuberobust", version, about = "Robust hypercube estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the fully resolved default config as JSON.
    InitConfig {
        #[command(flatten)]
        exp: ExpArgs,
    },
    /// Draw a clean sample from the configured body (CSV).
    Sample {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw and corrupt a sample; writes the active points (CSV).
    Corrupt {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write one label per output row.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Run an estimator. Without --input, generates the instance from the
    /// config and writes a full run report.
    Estimate {
        #[command(flatten)]
        exp: ExpArgs,
        /// Points CSV to estimate from; the report then has no evaluation.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score an estimate (from `estimate --input`) against the config's instance.
    Evaluate {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a report's embedded config and compare bit for bit.
    Replay {
        #[arg(long)]
        report: PathBuf,
    },
    /// Random checks of the set-system sum bounds.
    LemmaCheck {
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo checks of the cube geometry facts.
    FactsCheck {
        #[arg(long)]
        configs: Option<usize>,
        #[arg(long)]
        mc_budget: Option<usize>,
        /// Comma-separated fact names; all by default.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid over ε (and optionally d); writes a CSV table.
    Sweep {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    ShiftScale,
    Rotation,
    Affine,
}

impl From<ModeArg> for EstimateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ShiftScale => EstimateMode::ShiftScale,
            ModeArg::Rotation => EstimateMode::Rotation,
            ModeArg::Affine => EstimateMode::Affine,
        }
    }
}

/// Experiment flags; each overrides the corresponding config field.
#[derive(Args)]
struct ExpArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Corruption level.
    #[arg(long = "epsilon")]
    epsilon: Option<f64>,
    /// Adversary name (e.g. corner_shift) or a JSON object.
    #[arg(long)]
    adversary: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

enum CliError {
    /// Exit 2.
    Config(String),
    /// Exit 1, optionally with a JSON document for stdout.
    Contract(String, Option<String>),
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Contract(format!("io error: {e}"), None)
    }
}

impl From<cuberobust::Error> for CliError {
    fn from(e: cuberobust::Error) -> Self {
        CliError::Contract(e.to_string(), None)
    }
}

type CliResult<T> = Result<T, CliError>;

fn json_error(what: &str, e: &serde_json::Error) -> CliError {
    CliError::Config(format!("{what}: line {}, column {}: {e}", e.line(), e.column()))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| json_error(&path.display().to_string(), &e))
}

fn parse_adversary(s: &str) -> CliResult<Adversary> {
    let json = if s.trim_start().starts_with('{') { s.to_string() } else { format!("{{\"kind\":\"{s}\"}}") };
    serde_json::from_str(&json).map_err(|e| json_error("--adversary", &e))
}

impl ExpArgs {
    /// Resolves the config file plus flag overrides. Without a config file
    /// the truth family follows `--mode` and `n` defaults to at least the
    /// estimators' minimum.
    fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => read_config(p)?,
            None => {
                let mut c = ExperimentConfig::new(DEFAULT_D, DEFAULT_N);
                let mode = self.mode.map(EstimateMode::from).unwrap_or_default();
                c.mode = mode;
                c.truth = match mode {
                    EstimateMode::ShiftScale => {
                        TruthSpec::ShiftScale { lower: None, upper: None, max_center: 2.0, side_range: [0.5, 4.0] }
                    }
                    EstimateMode::Rotation => TruthSpec::Rotation { normals: None },
                    EstimateMode::Affine => TruthSpec::default(),
                };
                c
            }
        };
        if let Some(d) = self.d {
            cfg.d = d;
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(e) = self.epsilon {
            cfg.corruption.epsilon = e;
        }
        if let Some(a) = &self.adversary {
            cfg.corruption.adversary = parse_adversary(a)?;
        }
        if let Some(m) = self.mode {
            cfg.mode = m.into();
        }
        if self.config.is_none() && self.n.is_none() && cfg.mode != EstimateMode::Rotation {
            let ss = &cfg.estimator.shift_scale;
            cfg.n = cfg.n.max(ss.n_min(cfg.d, cfg.estimator_eps()));
        }
        Ok(cfg)
    }

    fn validated(&self) -> CliResult<ExperimentConfig> {
        let cfg = self.resolve()?;
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Checks only what sampling and corruption need; `n` may be below the
    /// estimators' minimum.
    fn for_sampling(&self) -> CliResult<ExperimentConfig> {
        let cfg = self.resolve()?;
        let check = || -> cuberobust::Result<()> {
            if cfg.d == 0 || cfg.n == 0 {
                return Err(cuberobust::Error::InvalidArgument("d and n must be positive".into()));
            }
            cfg.truth.validate(cfg.d)?;
            cfg.corruption_spec().validate(cfg.d)
        };
        check().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

fn points_csv(cloud: &Cloud, active_only: bool) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (1..=cloud.dim()).map(|i| format!("x{i}")).collect();
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..cloud.len() {
        if active_only && !cloud.is_active(i) {
            continue;
        }
        w.write_record(cloud.point(i).iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| csv_err(e.into_error().into()))?).expect("ascii"))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Contract(format!("csv error: {e}"), None)
}

fn read_points(path: &Path) -> CliResult<Cloud> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let d = r.headers().map_err(|e| bad(e.to_string()))?.len();
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| bad(format!("line {}: {e}", k + 2)))?;
        rows.push(row);
    }
    Cloud::from_rows(d, &rows).map_err(|e| bad(e.to_string()))
}

fn label_name(l: TruthLabel) -> &'static str {
    match l {
        TruthLabel::Inlier => "inlier",
        TruthLabel::Outlier => "outlier",
        TruthLabel::DeletedByAdversary => "deleted",
    }
}

fn labels_csv(set: &SampleSet) -> String {
    let mut s = String::from("label\n");
    for (i, &l) in set.labels().iter().enumerate() {
        if set.cloud().is_active(i) {
            s.push_str(label_name(l));
            s.push('\n');
        }
    }
    s
}

#[derive(Serialize)]
struct FailureReport<'a> {
    status: &'static str,
    error: String,
    config: &'a ExperimentConfig,
}

fn failure(cfg: &ExperimentConfig, e: cuberobust::Error) -> CliError {
    let msg = e.to_string();
    let doc = to_json(&FailureReport { status: "error", error: msg.clone(), config: cfg });
    CliError::Contract(msg, Some(doc))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::InitConfig { exp } => emit(None, &to_json(&exp.resolve()?)),
        Command::Sample { exp, out } => {
            let cfg = exp.for_sampling()?;
            let truth = resolve_truth(&cfg)?;
            let set = sample_body(&truth, cfg.n, cfg.seeds().sample)?;
            emit(out.as_deref().or(cfg.output.points.as_deref().map(Path::new)), &points_csv(set.cloud(), false)?)
        }
        Command::Corrupt { exp, out, labels } => {
            let cfg = exp.for_sampling()?;
            let truth = resolve_truth(&cfg)?;
            let clean = sample_body(&truth, cfg.n, cfg.seeds().sample)?;
            let set = corrupt(&clean, &truth, &cfg.corruption_spec())?;
            if let Some(p) = labels.as_deref().or(cfg.output.labels.as_deref().map(Path::new)) {
                fs::write(p, labels_csv(&set))?;
            }
            emit(out.as_deref().or(cfg.output.points.as_deref().map(Path::new)), &points_csv(set.cloud(), true)?)
        }
        Command::Estimate { exp, input, out } => {
            let cfg = exp.validated()?;
            let out = out.as_deref().or(cfg.output.report.as_deref().map(Path::new)).map(Path::to_path_buf);
            let text = match input {
                Some(p) => {
                    let cloud = read_points(&p)?;
                    if cloud.dim() != cfg.d {
                        return Err(CliError::Config(format!(
                            "{} has {} columns, config has d = {}",
                            p.display(),
                            cloud.dim(),
                            cfg.d
                        )));
                    }
                    let est = estimate(&cloud, &cfg, None, &cfg.seeds()).map_err(|e| failure(&cfg, e))?;
                    to_json(&est)
                }
                None => to_json(&run_experiment(&cfg).map_err(|e| failure(&cfg, e))?),
            };
            emit(out.as_deref(), &text)
        }
        Command::Evaluate { exp, estimate: est_path, out } => {
            let cfg = exp.validated()?;
            let text =
                fs::read_to_string(&est_path).map_err(|e| CliError::Config(format!("{}: {e}", est_path.display())))?;
            let est: EstimateOutput =
                serde_json::from_str(&text).map_err(|e| json_error(&est_path.display().to_string(), &e))?;
            let inst = generate_instance(&cfg)?;
            let ev = evaluate(&inst.sample, &inst.truth, &est, cfg.estimator.mc_budget, cfg.seeds().tv, &cfg)
                .map_err(|e| failure(&cfg, e))?;
            emit(out.as_deref(), &to_json(&ev))
        }
        Command::Replay { report } => {
            let text =
                fs::read_to_string(&report).map_err(|e| CliError::Config(format!("{}: {e}", report.display())))?;
            let rep: RunReport =
                serde_json::from_str(&text).map_err(|e| json_error(&report.display().to_string(), &e))?;
            rep.config.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let (_, same) = replay(&rep).map_err(|e| failure(&rep.config, e))?;
            if same {
                eprintln!("replay matches");
                Ok(())
            } else {
                Err(CliError::Contract("replay differs from the stored report".into(), None))
            }
        }
        Command::LemmaCheck { instances, seed, out } => {
            let mut cfg = LemmaSuiteConfig::default();
            if let Some(k) = instances {
                cfg.instances = k;
            }
            let rep = run_lemma_suite(&cfg, seed)?;
            emit(out.as_deref(), &to_json(&rep))?;
            if rep.passed() {
                Ok(())
            } else {
                Err(CliError::Contract("set-system bound violated".into(), None))
            }
        }
        Command::FactsCheck { configs, mc_budget, only, seed, out } => {
            let mut cfg = FactsConfig::default();
            if let Some(k) = configs {
                cfg.configs_per_fact = k;
            }
            if let Some(m) = mc_budget {
                cfg.mc_budget = m;
            }
            let rep = run_facts(&cfg, seed, &only).map_err(|e| CliError::Config(e.to_string()))?;
            emit(out.as_deref(), &to_json(&rep))?;
            let failed: Vec<&str> = rep.facts.iter().filter(|f| !f.passed).map(|f| f.name.as_str()).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Contract(format!("facts failed: {}", failed.join(", ")), None))
            }
        }
        Command::Sweep { exp, eps, dims, repeats, out } => {
            let mut base = exp.resolve()?;
            if exp.n.is_none() && exp.config.is_none() {
                // Enough points for the smallest ε and largest d of the grid.
                let d_max = dims.iter().copied().max().unwrap_or(base.d);
                let ss = &base.estimator.shift_scale;
                base.n = eps.iter().map(|&e| ss.n_min(d_max, e.max(ss.eps_min))).max().unwrap_or(0).max(DEFAULT_N);
            }
            let spec = SweepSpec { eps, dims, repeats };
            let rows = cuberobust::harness::run_sweep(&base, &spec).map_err(|e| CliError::Config(e.to_string()))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
            emit(out.as_deref(), &String::from_utf8(bytes).expect("utf8"))?;
            eprintln!("mean tv nondecreasing in eps: {}", mean_tv_nondecreasing(&rows));
            match rows.iter().find(|r| r.status != "ok") {
                Some(r) => Err(CliError::Contract(format!("run d={} eps={} failed: {}", r.d, r.eps, r.status), None)),
                None => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Contract(msg, doc)) => {
            if let Some(doc) = doc {
                let _ = io::stdout().lock().write_all(doc.as_bytes());
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
