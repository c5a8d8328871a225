//! `rpcf`: track a sequence, evaluate a dataset, run the oracle self-test, or write
//! synthetic sequences.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use rpcf::bench::{
    emit_results, evaluate_ope, format_ablation_table, format_boxes, generate, load_dataset,
    load_sequence, run_ablation, EvalResult, RpcfFactory, SyntheticSpec, Variant,
};
use rpcf::config::{format_config, load_config};
use rpcf::tracker::TrackerConfig;

#[derive(Parser)]
#[command(
    name = "rpcf",
    version,
    about = "ROI pooled correlation filter tracker"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track one OTB-layout sequence from its first ground-truth box.
    Track {
        seq_dir: PathBuf,
        /// key = value configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write boxes, metrics and curves here instead of printing boxes.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One-pass evaluation over every sequence directory in a dataset.
    Eval {
        dataset_dir: PathBuf,
        /// baseline, feature_map_avg_pool, feature_map_max_pool, rpcf, or all.
        #[arg(long, default_value = "rpcf")]
        variant: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle checks; exits nonzero if any fails.
    Selftest,
    /// Write synthetic sequences in the OTB layout.
    Synth {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Deformation amplitudes, one deforming sequence each.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.15,0.2")]
        amplitudes: Vec<f64>,
    },
    /// Print the effective configuration.
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn tracker_config(path: Option<&Path>) -> Result<TrackerConfig> {
    match path {
        Some(p) => Ok(load_config(p)?),
        None => Ok(TrackerConfig::default()),
    }
}

fn summary(result: &EvalResult) -> String {
    format!(
        "sequences {} failed {} dp20 {:.4} auc {:.4}",
        result.sequences.len(),
        result.failures.len(),
        result.dp20,
        result.auc
    )
}

fn track(seq_dir: &Path, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let config = tracker_config(config)?;
    let sequence = load_sequence(seq_dir)?;
    let result = evaluate_ope(&RpcfFactory(config), std::slice::from_ref(&sequence))?;
    if let Some((name, err)) = result.failures.first() {
        bail!("tracking {name} failed: {err}");
    }
    match out {
        Some(dir) => {
            emit_results(&result, dir)?;
            println!("{}", summary(&result));
        }
        None => {
            print!("{}", format_boxes(&result.sequences[0].boxes));
            eprintln!("{}", summary(&result));
        }
    }
    Ok(())
}

fn eval(dataset: &Path, variant: &str, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let base = tracker_config(config)?;
    let sequences = load_dataset(dataset)?;
    if sequences.is_empty() {
        bail!("no sequences found in {}", dataset.display());
    }
    if variant == "all" {
        let rows = run_ablation(&base, &Variant::ALL, &sequences)?;
        let table = format_ablation_table(&rows);
        if let Some(dir) = out {
            for (v, r) in &rows {
                emit_results(r, &dir.join(v.name()))?;
            }
            let path = dir.join("ablation.txt");
            fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
        }
        print!("{table}");
        return Ok(());
    }
    let v = Variant::parse(variant)?;
    let result = evaluate_ope(&RpcfFactory(v.configure(&base)), &sequences)?;
    for (name, err) in &result.failures {
        eprintln!("warning: {name} failed: {err}");
    }
    if result.sequences.is_empty() {
        bail!("every sequence failed");
    }
    if let Some(dir) = out {
        emit_results(&result, dir)?;
    }
    println!("{} {}", v.name(), summary(&result));
    Ok(())
}

fn selftest() -> Result<bool> {
    let checks = rpcf::selftest::run_all()?;
    let mut ok = true;
    for c in &checks {
        let tag = if c.passed() { "PASS" } else { "FAIL" };
        println!(
            "{tag}  {}  {:.3e} (limit {:.0e})",
            c.name, c.value, c.threshold
        );
        ok &= c.passed();
    }
    Ok(ok)
}

fn synth(out: &Path, frames: usize, seed: u64, amplitudes: &[f64]) -> Result<()> {
    let spec = SyntheticSpec {
        frames,
        ..SyntheticSpec::translating(seed)
    };
    generate(&spec)?.write(&out.join(&spec.name))?;
    for (i, &a) in amplitudes.iter().enumerate() {
        let spec = SyntheticSpec {
            frames,
            ..SyntheticSpec::deforming(a, seed + 1 + i as u64)
        };
        generate(&spec)?.write(&out.join(&spec.name))?;
    }
    println!(
        "wrote {} sequences to {}",
        amplitudes.len() + 1,
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Track {
            seq_dir,
            config,
            out,
        } => track(&seq_dir, config.as_deref(), out.as_deref())?,
        Command::Eval {
            dataset_dir,
            variant,
            config,
            out,
        } => eval(&dataset_dir, &variant, config.as_deref(), out.as_deref())?,
        Command::Selftest => return selftest(),
        Command::Synth {
            out_dir,
            frames,
            seed,
            amplitudes,
        } => synth(&out_dir, frames, seed, &amplitudes)?,
        Command::Config { config } => {
            print!("{}", format_config(&tracker_config(config.as_deref())?))
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
