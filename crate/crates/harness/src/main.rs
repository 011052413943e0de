use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dcg_core::data::{generate, read_dataset, write_dataset, Dataset, DatasetManifest};
use dcg_core::DomainId;
use dcg_harness::experiments::{
    ablate, diversity_sweep, discussion, sensitivity, sweep_svg, write_json, write_score_table,
    write_sensitivity_csv, SENSITIVITY_KS, SENSITIVITY_OMEGAS, SWEEP_NS,
};
use dcg_harness::metrics::write_run;
use dcg_harness::verify::{format_table, verify_oracles};
use dcg_harness::{dump, train, HarnessError, Result, TrainConfig, Variant};

#[derive(Parser)]
#[command(name = "dcg", version, about = "Domain convex game lab")]
struct Cli {
    /// Log progress of each finished run.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Experiment {
    /// Flat JSON training config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Held-out domain ids; all domains when omitted.
    #[arg(long, value_delimiter = ',')]
    holdout: Vec<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset from a manifest.
    GenerateData { manifest: PathBuf, out_dir: PathBuf },
    /// One leave-one-domain-out run.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        holdout: u32,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy against the augmented-pool cap N.
    SweepDiversity {
        #[command(flatten)]
        exp: Experiment,
        #[arg(long, value_delimiter = ',', default_values_t = SWEEP_NS)]
        ns: Vec<usize>,
    },
    /// All eight variants.
    Ablate(Experiment),
    /// Full DCG over an omega × k grid.
    Sensitivity {
        #[command(flatten)]
        exp: Experiment,
        #[arg(long, value_delimiter = ',', default_values_t = SENSITIVITY_OMEGAS)]
        omegas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = SENSITIVITY_KS)]
        ks: Vec<usize>,
    },
    /// Full DCG against random meta-split and scoped filters.
    Discussion(Experiment),
    /// Compare the pipeline against closed-form oracles.
    VerifyOracles {
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Write the most and least often filtered samples of a run as images.
    DumpFiltered {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        n: usize,
    },
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    let config: TrainConfig = match path {
        None => TrainConfig::default(),
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?,
    };
    config.validate()?;
    Ok(config)
}

struct Loaded {
    config: TrainConfig,
    dataset: Dataset,
    held_out: Vec<DomainId>,
}

fn load(exp: &Experiment) -> Result<Loaded> {
    let config = load_config(exp.config.as_deref())?;
    let dataset = read_dataset(&exp.data)?;
    let held_out = if exp.holdout.is_empty() {
        dataset.domain_ids()
    } else {
        exp.holdout.iter().map(|&h| DomainId(h)).collect()
    };
    fs::create_dir_all(&exp.out)?;
    Ok(Loaded { config, dataset, held_out })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateData { manifest, out_dir } => {
            let m: DatasetManifest = serde_json::from_str(&fs::read_to_string(&manifest)?)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", manifest.display())))?;
            m.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            let d = generate(&m)?;
            write_dataset(&d, &out_dir)?;
            println!("wrote {} samples to {}", d.len(), out_dir.display());
        }
        Command::Train { config, data, holdout, seed, out } => {
            let config = load_config(Some(&config))?;
            let dataset = read_dataset(&data)?;
            let run = train(&config, &dataset, DomainId(holdout), seed)?;
            write_run(&out, &run.result, &run.params, &run.history)?;
            println!("{} held-out {holdout} seed {seed}: accuracy {:.4}", config.variant, run.result.final_accuracy);
        }
        Command::SweepDiversity { exp, ns } => {
            let l = load(&exp)?;
            let report = diversity_sweep(&l.config, &l.dataset, &ns, &[Variant::AugOnly, Variant::FullDcg], &l.held_out)?;
            write_json(&report, &exp.out.join("sweep.json"))?;
            fs::write(exp.out.join("curve.svg"), sweep_svg(&report))?;
            for c in &report.curves {
                println!(
                    "{:<10} spearman {:.3} decreasing {:.1} mean {:?}",
                    c.variant.name(),
                    c.median_spearman,
                    c.median_decreasing,
                    c.mean.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>()
                );
            }
        }
        Command::Ablate(exp) => {
            let l = load(&exp)?;
            let rows = ablate(&l.config, &l.dataset, &Variant::ALL, &l.held_out)?;
            write_score_table(&l.dataset, &rows, &exp.out.join("ablation.csv"))?;
            write_json(&rows, &exp.out.join("ablation.json"))?;
            print!("{}", fs::read_to_string(exp.out.join("ablation.csv"))?);
        }
        Command::Sensitivity { exp, omegas, ks } => {
            let l = load(&exp)?;
            let cells = sensitivity(&l.config, &l.dataset, &omegas, &ks, &l.held_out)?;
            write_sensitivity_csv(&cells, &exp.out.join("sensitivity.csv"))?;
            print!("{}", fs::read_to_string(exp.out.join("sensitivity.csv"))?);
        }
        Command::Discussion(exp) => {
            let l = load(&exp)?;
            let rows = discussion(&l.config, &l.dataset, &l.held_out)?;
            write_score_table(&l.dataset, &rows, &exp.out.join("discussion.csv"))?;
            write_json(&rows, &exp.out.join("discussion.json"))?;
            print!("{}", fs::read_to_string(exp.out.join("discussion.csv"))?);
        }
        Command::VerifyOracles { out, trials } => {
            let rows = verify_oracles(trials)?;
            print!("{}", format_table(&rows));
            write_json(&rows, &out)?;
            if rows.iter().any(|r| !r.pass) {
                return Err(HarnessError::Core(dcg_core::DcgError::Numeric("oracle check failed".into())));
            }
        }
        Command::DumpFiltered { run, out, n } => {
            let entries = dump::dump_filtered(&run, &out, n)?;
            println!("wrote {} images to {}", entries.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
