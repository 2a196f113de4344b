//! Command-line entry point: dataset generation, training, evaluation, the
//! component ablation suite, and the gradient checker, all driven by JSON
//! configs and a single seed. Exit codes: 0 success, 1 runtime/IO failure,
//! 2 configuration or validation failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use ddian_cli::config::{load_synthetic_spec, RunConfig};
use ddian_cli::report::OutputGuard;
use ddian_cli::{dataset_csv, model_file, report, CliError};
use ddian_core::data::DomainDataset;
use ddian_core::trainer;

#[derive(Parser)]
#[command(
    name = "ddian",
    about = "Adversarial domain-generalization training on synthetic multi-domain data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-domain dataset and write it as CSV.
    GenData {
        /// JSON file with the generator spec (family, angles, sigma, ...).
        #[arg(long)]
        spec: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the source domains of a config and evaluate on its target.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a saved model on a dataset CSV.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Restrict evaluation to this domain id; all samples when omitted.
        #[arg(long)]
        target: Option<usize>,
    },
    /// Run the five-variant component ablation over several seeds.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Check analytic gradients of every loss against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenData { spec, out } => gen_data(&spec, &out),
        Command::Train { config } => train(&config),
        Command::Eval {
            model,
            data,
            target,
        } => eval(&model, &data, target),
        Command::Ablate { config, seeds } => ablate(&config, seeds),
        Command::Gradcheck { seed } => gradcheck(seed),
    }
}

fn gen_data(spec_path: &Path, out: &Path) -> Result<(), CliError> {
    let section = load_synthetic_spec(spec_path)?;
    let ds = ddian_core::data::generate(&section.to_core())?;
    dataset_csv::save_csv(&ds, out)?;
    println!(
        "wrote {} samples ({} domains x {} classes) to {}",
        ds.total_len(),
        ds.num_domains(),
        ds.num_classes(),
        out.display()
    );
    for dense in 0..ds.num_domains() {
        let samples = ds.samples(dense);
        let mut per_class = vec![0usize; ds.num_classes()];
        for s in samples {
            per_class[s.y] += 1;
        }
        println!(
            "  domain {}: {} samples, per class {:?}",
            ds.domain_ids()[dense],
            samples.len(),
            per_class
        );
    }
    Ok(())
}

fn load_dataset(config: &RunConfig) -> Result<DomainDataset, CliError> {
    match (&config.data.synthetic, &config.data.csv) {
        (Some(synth), None) => Ok(ddian_core::data::generate(&synth.to_core())?),
        (None, Some(path)) => dataset_csv::load_csv(path, config.data.num_classes),
        _ => unreachable!("validated at parse time"),
    }
}

fn train(config_path: &Path) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let ds = load_dataset(&config)?;
    let (sources, target) = ds.leave_one_out(config.data.target_domain)?;

    let train_config = config.train.to_core(config.hyper.to_core());
    let arch = config.model.to_core();
    let started = Instant::now();
    let (model, mut result) = trainer::train(&train_config, &arch, &sources)?;
    let target_reads = target.read_count();
    if target_reads != 0 {
        return Err(CliError::Runtime(format!(
            "target domain was read {target_reads} times during training"
        )));
    }
    result.target_accuracy = Some(trainer::evaluate(&model, &target)?);
    result.wall_clock_secs = started.elapsed().as_secs_f64();

    std::fs::create_dir_all(&config.output).map_err(|e| {
        CliError::Runtime(format!("cannot create {}: {e}", config.output.display()))
    })?;
    let mut guard = OutputGuard::new();
    guard.write(&config.output.join("config.json"), config.effective_json())?;
    guard.write(
        &config.output.join("result.json"),
        report::result_json(&config, &result, target_reads),
    )?;
    guard.write(
        &config.output.join("losses.csv"),
        report::losses_csv(&result),
    )?;
    let model_path = config.output.join("model.bin");
    model_file::save(&model, &model_path)?;
    guard.record(&model_path);
    guard.disarm();

    println!(
        "trained {} epochs in {:.1}s",
        train_config.hp.epochs, result.wall_clock_secs
    );
    if let Some(acc) = result.source_val_accuracy {
        println!("source validation accuracy: {acc:.4}");
    }
    println!(
        "target domain {} accuracy: {:.4}",
        config.data.target_domain,
        result.target_accuracy.unwrap()
    );
    println!("outputs in {}", config.output.display());
    Ok(())
}

fn eval(model_path: &Path, data: &Path, target: Option<usize>) -> Result<(), CliError> {
    let model = model_file::load(model_path)?;
    let ds = dataset_csv::load_csv(data, Some(model.arch().num_classes))?;
    let accuracy = match target {
        None => trainer::evaluate(&model, &ds)?,
        Some(id) => {
            let dense = ds
                .domain_ids()
                .iter()
                .position(|&d| d == id)
                .ok_or_else(|| {
                    CliError::Config(format!("domain id {id} not present in {}", data.display()))
                })?;
            let samples = ds.samples(dense);
            let mut xs = Vec::with_capacity(samples.len() * ds.feature_dim());
            for s in samples {
                xs.extend_from_slice(&s.x);
            }
            let preds = model.predict(&xs, samples.len())?;
            let correct = preds
                .iter()
                .zip(samples)
                .filter(|(p, s)| **p == s.y)
                .count();
            correct as f64 / samples.len() as f64
        }
    };
    println!("{accuracy:.4}");
    Ok(())
}

fn ablate(config_path: &Path, seeds: u64) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let ds = load_dataset(&config)?;
    let base = config.train.to_core(config.hyper.to_core());
    let arch = config.model.to_core();
    let started = Instant::now();
    let report = trainer::ablation_suite(&base, &arch, &ds, config.data.target_domain, seeds)?;

    std::fs::create_dir_all(&config.output).map_err(|e| {
        CliError::Runtime(format!("cannot create {}: {e}", config.output.display()))
    })?;
    let mut guard = OutputGuard::new();
    guard.write(&config.output.join("config.json"), config.effective_json())?;
    guard.write(
        &config.output.join("ablation.csv"),
        report::ablation_csv(&report),
    )?;
    guard.disarm();

    print!("{}", report::ablation_summary_table(&report));
    println!(
        "{} runs in {:.1}s; table in {}",
        report.rows.len(),
        started.elapsed().as_secs_f64(),
        config.output.join("ablation.csv").display()
    );
    Ok(())
}

fn gradcheck(seed: u64) -> Result<(), CliError> {
    let report = trainer::gradient_check(seed);
    for entry in &report.losses {
        println!(
            "{:<16} max_rel_err={:.3e} {}",
            entry.name,
            entry.max_rel_err,
            if entry.pass { "ok" } else { "FAIL" }
        );
    }
    println!(
        "{:<16} max_rel_err={:.3e} {}",
        report.composite.name,
        report.composite.max_rel_err,
        if report.composite.pass { "ok" } else { "FAIL" }
    );
    if report.all_pass() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "gradient check failed (tolerance {})",
            report.tolerance
        )))
    }
}
