use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tcdm_core::evaluation::{self, CorrelationSummary};
use tcdm_core::{
    degrade, load_ply, save_ply, score, ColorSpace, DegradationKind, DegradationSpec, Error, EtaMode, MetricConfig,
    PlyEncoding, SamplingStrategy, WeightScheme,
};

const THREADS_ENV: &str = "TCDM_THREADS";

const EXIT_USAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "tcdm", version, about = "Full-reference point cloud quality scoring")]
struct Cli {
    /// Worker threads [default: $TCDM_THREADS, else all cores].
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score a distorted cloud against its reference.
    Score {
        reference: PathBuf,
        distorted: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
        /// Include per-patch features in the JSON report.
        #[arg(long, requires = "json")]
        verbose: bool,
    },
    /// Score every row of a manifest and correlate the scores with MOS.
    Batch {
        manifest: PathBuf,
        /// Report CSV; the score cache is kept next to it.
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Recompute the statistics of a report, optionally testing it against
    /// another report on the same rows.
    Eval {
        report: PathBuf,
        /// Competing report; H=1 means `report` fits MOS significantly better.
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(long, default_value_t = evaluation::DEFAULT_SIGNIFICANCE)]
        significance: f64,
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetically degraded copy of a cloud.
    Degrade {
        input: PathBuf,
        /// geometry_gaussian, color_noise or downsample.
        #[arg(value_parser = parse_from_str::<DegradationKind>)]
        kind: DegradationKind,
        /// Noise sigma, or kept fraction for downsampling.
        level: f64,
        /// RNG seed, either numeric or `s<number>`.
        #[arg(value_parser = parse_seed)]
        seed: u64,
        output: PathBuf,
        /// Write ASCII instead of binary PLY.
        #[arg(long)]
        ascii: bool,
    },
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Number of Voronoi seeds.
    #[arg(long, default_value_t = 400)]
    seeds: usize,
    /// Neighborhood size of the regression and of the difference fields.
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Weight of the complexity feature in the fusion.
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    /// Stabilizing constant of the similarity ratios.
    #[arg(long, default_value_t = 1e-6)]
    t: f64,
    /// fps, random or random:<seed>.
    #[arg(long, default_value = "fps", value_parser = parse_from_str::<SamplingStrategy>)]
    sampling: SamplingStrategy,
    /// sigmoid, constant, inverse_distance or exp_decay.
    #[arg(long, default_value = "sigmoid", value_parser = parse_from_str::<WeightScheme>)]
    weight_scheme: WeightScheme,
    /// rgb or yuv.
    #[arg(long, default_value = "rgb", value_parser = parse_from_str::<ColorSpace>)]
    color_space: ColorSpace,
    /// Distance scale of the neighbor weights: std or variance.
    #[arg(long, default_value = "std", value_parser = parse_from_str::<EtaMode>)]
    eta_mode: EtaMode,
    /// Use the unnormalized 1:2:1 / 6:1:1 color weights.
    #[arg(long)]
    raw_color_weights: bool,
    /// Let neighbors coinciding with the predicted point enter the regression.
    #[arg(long)]
    keep_coincident: bool,
}

impl ConfigArgs {
    fn to_config(&self) -> MetricConfig {
        MetricConfig {
            seeds: self.seeds,
            k: self.k,
            t: self.t,
            alpha: self.alpha,
            sampling: self.sampling,
            weight_scheme: self.weight_scheme,
            color_space: self.color_space,
            eta_mode: self.eta_mode,
            raw_color_weights: self.raw_color_weights,
            exclude_coincident: !self.keep_coincident,
        }
    }
}

fn parse_from_str<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_seed(s: &str) -> Result<u64, String> {
    s.strip_prefix('s')
        .unwrap_or(s)
        .parse()
        .map_err(|_| format!("invalid seed `{s}` (expected e.g. 7 or s7)"))
}

/// Failure of a subcommand, mapped to an exit status.
enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { EXIT_INPUT } else { EXIT_INTERNAL })
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<(), Failure> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Usage("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot start {n} threads: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Score {
            reference,
            distorted,
            config,
            json,
            verbose,
        } => {
            let config = config.to_config();
            config.validate()?;
            let report = score(&load_ply(&reference)?, &load_ply(&distorted)?, &config)?;
            if json {
                let mut value = serde_json::to_value(&report).expect("report serializes");
                if !verbose {
                    if let Some(obj) = value.as_object_mut() {
                        obj.remove("per_patch");
                    }
                }
                println!(
                    "{}",
                    serde_json::to_string_pretty(&value).expect("json value serializes")
                );
            } else {
                println!("{}", report.q);
            }
        }
        Command::Batch {
            manifest,
            out,
            config,
            json,
        } => {
            let run = evaluation::run_benchmark(&manifest, &config.to_config(), &out)?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&run.summary).expect("summary serializes")
                );
            } else {
                println!(
                    "rows: {} scored, {} cached, {} skipped",
                    run.computed, run.cache_hits, run.skipped
                );
                print_summary(&run.summary);
            }
        }
        Command::Eval {
            report,
            against,
            significance,
            json,
        } => eval(&report, against.as_deref(), significance, json)?,
        Command::Degrade {
            input,
            kind,
            level,
            seed,
            output,
            ascii,
        } => {
            let cloud = load_ply(&input)?;
            let degraded = degrade(&cloud, &DegradationSpec::new(kind, level, seed))?;
            let encoding = if ascii {
                PlyEncoding::Ascii
            } else {
                PlyEncoding::BinaryLittleEndian
            };
            save_ply(&degraded, &output, encoding)?;
        }
    }
    Ok(())
}

fn fmt_stat(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "n/a".into())
}

fn print_summary(s: &CorrelationSummary) {
    println!(
        "all: n={} plcc={} srocc={} rmse={}",
        s.n,
        fmt_stat(s.plcc),
        fmt_stat(s.srocc),
        fmt_stat(s.rmse)
    );
    if s.degenerate {
        println!("degenerate: zero variance in scores or MOS");
    }
    for (kind, t) in &s.per_type {
        println!(
            "{kind}: n={} plcc={} srocc={} rmse={}",
            t.n,
            fmt_stat(t.plcc),
            fmt_stat(t.srocc),
            fmt_stat(t.rmse)
        );
    }
}

type Residuals = HashMap<(String, String), f64>;

fn residuals(path: &Path) -> Result<Residuals, Failure> {
    let mut out = HashMap::new();
    for (record, mapped) in evaluation::read_report(path)? {
        let Some(m) = mapped else {
            return Err(Failure::Core(Error::Statistics(format!(
                "{} has rows without a mapped score",
                path.display()
            ))));
        };
        out.insert((record.reference_id, record.distorted_id), m - record.mos);
    }
    Ok(out)
}

fn eval(report: &Path, against: Option<&Path>, significance: f64, json: bool) -> Result<(), Failure> {
    let rows = evaluation::read_report(report)?;
    let records: Vec<_> = rows.into_iter().map(|(r, _)| r).collect();
    if records.is_empty() {
        return Err(Failure::Core(Error::Statistics(format!(
            "{} has no rows",
            report.display()
        ))));
    }
    let (summary, _) = evaluation::summarize(&records);
    let mut h = None;
    if let Some(other) = against {
        let a = residuals(report)?;
        let b = residuals(other)?;
        let mut keys: Vec<_> = a.keys().filter(|k| b.contains_key(*k)).cloned().collect();
        keys.sort();
        if keys.len() != a.len() || keys.len() != b.len() {
            log::warn!("comparing the {} rows common to both reports", keys.len());
        }
        let ra: Vec<f64> = keys.iter().map(|k| a[k]).collect();
        let rb: Vec<f64> = keys.iter().map(|k| b[k]).collect();
        h = Some(evaluation::f_test(&ra, &rb, significance)?);
    }
    if json {
        let value = serde_json::json!({ "summary": summary, "f_test_h": h.map(u8::from) });
        println!(
            "{}",
            serde_json::to_string_pretty(&value).expect("json value serializes")
        );
    } else {
        print_summary(&summary);
        if let Some(h) = h {
            println!("f-test H={}", u8::from(h));
        }
    }
    Ok(())
}
