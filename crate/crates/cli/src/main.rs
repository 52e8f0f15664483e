use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use sqa_cli::commands::{self, EvaluateArgs};
use sqa_cli::config::{RunConfig, ENDPOINT_ENV};
use sqa_cli::Failure;
use sqa_core::backend::BackendKind;
use sqa_core::scoring::Metric;
use sqa_core::synth::{DegradationSpec, SceneSpec};

#[derive(Parser)]
#[command(name = "sqa", version, about = "Ground-truth-free segmentation quality assessment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every sample of a manifest.
    Score {
        manifest: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compare scores with ground truth and write a report.
    Evaluate {
        manifest: PathBuf,
        scores: PathBuf,
        /// Bottom-k percentages, e.g. `--k 25 --k 50`.
        #[arg(long = "k")]
        k: Vec<f64>,
        /// Output prefix; `.json` and `.txt` are appended.
        #[arg(long, default_value = "report")]
        output: PathBuf,
        /// Also compare true Dice of the backend's box-prompt replacement.
        #[arg(long)]
        replacement: bool,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Generate a synthetic corpus with known true Dice.
    Synth {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Scene spec JSON file; defaults apply to missing fields.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// JSON array of degradation specs.
        #[arg(long)]
        degradations: Option<PathBuf>,
        /// Overrides the scene seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Send a fixed query to the configured backend and report latency.
    BackendCheck {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    backend: Option<BackendKind>,
    #[arg(long)]
    tolerance: Option<u32>,
    /// Fixture root for the file backend.
    #[arg(long)]
    root: Option<PathBuf>,
    /// Remote endpoint; also read from SQA_BACKEND_ENDPOINT.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long)]
    retries: Option<u32>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    connectivity: Option<u8>,
    #[arg(long)]
    min_area: Option<usize>,
    #[arg(long, value_parser = parse_metric)]
    metric: Option<Metric>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long = "k")]
    k: Vec<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<BackendKind, String> {
    match s {
        "reference" => Ok(BackendKind::Reference),
        "file" => Ok(BackendKind::File),
        "remote" => Ok(BackendKind::Remote),
        _ => Err(format!("unknown backend {s:?}; expected reference, file or remote")),
    }
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    match s {
        "dice" => Ok(Metric::Dice),
        "iou" => Ok(Metric::Iou),
        _ => Err(format!("unknown metric {s:?}; expected dice or iou")),
    }
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).map_err(Failure::Input)?,
            None => RunConfig::default(),
        };
        let b = &mut cfg.backend;
        if let Some(v) = self.backend {
            b.kind = v;
        }
        if let Some(v) = self.tolerance {
            b.tolerance = v;
        }
        if let Some(v) = self.root {
            b.root = Some(v);
        }
        if let Some(v) = self.endpoint.or_else(|| std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.is_empty())) {
            b.endpoint = Some(v);
        }
        if let Some(v) = self.timeout {
            b.timeout_secs = v;
        }
        if let Some(v) = self.retries {
            b.retries = v;
        }
        if let Some(v) = self.max_in_flight {
            b.max_in_flight = v;
        }
        if let Some(v) = self.connectivity {
            cfg.connectivity = v;
        }
        if let Some(v) = self.min_area {
            cfg.min_area = v;
        }
        if let Some(v) = self.metric {
            cfg.metric = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if !self.k.is_empty() {
            cfg.k_list = self.k;
        }
        if let Some(v) = self.output {
            cfg.output = Some(v);
        }
        Ok(cfg)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Input)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::Input)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Score { manifest, run } => {
            let mut cfg = run.resolve()?;
            if cfg.output.is_none() {
                cfg.output = Some(PathBuf::from("scores.json"));
            }
            let file = commands::cmd_score(&manifest, &cfg)?;
            println!("scored {} sample(s)", file.records.len());
        }
        Command::Evaluate {
            manifest,
            scores,
            k,
            output,
            replacement,
            workers,
        } => {
            let k_list = if k.is_empty() {
                sqa_cli::config::DEFAULT_K_LIST.to_vec()
            } else {
                k
            };
            let result = commands::cmd_evaluate(&EvaluateArgs {
                manifest: &manifest,
                scores: &scores,
                k_list: &k_list,
                output: &output,
                replacement,
                workers,
            });
            match &result {
                Ok(file) => print!("{}", file.report.render_text()),
                Err(_) => {
                    let txt = PathBuf::from(format!("{}.txt", output.display()));
                    if let Ok(text) = std::fs::read_to_string(txt) {
                        print!("{text}");
                    }
                }
            }
            result?;
        }
        Command::Synth {
            n,
            out,
            scene,
            degradations,
            seed,
        } => {
            let mut spec: SceneSpec = match scene {
                Some(p) => read_json(&p)?,
                None => SceneSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let degs: Vec<DegradationSpec> = match degradations {
                Some(p) => read_json(&p)?,
                None => Vec::new(),
            };
            if n == 0 {
                return Err(Failure::Input(anyhow!("--n must be at least 1")));
            }
            let manifest = commands::cmd_synth(&spec, &degs, n, &out)?;
            println!("wrote {} sample(s) to {}", manifest.samples.len(), out.display());
        }
        Command::BackendCheck { run } => {
            let cfg = run.resolve()?;
            for line in commands::cmd_backend_check(&cfg)? {
                println!("{:<5} ok  area={:<3} latency={:.2} ms", line.prompt, line.area, line.latency_ms);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
