use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use grhd::dataset::Split;
use grhd_cli::commands::{self, EmbedArgs, EvalArgs, SynthArgs, TrainArgs};
use grhd_cli::{gradcheck, CliError};

#[derive(Parser)]
#[command(name = "grhd", version, about = "Gradient-reversal hierarchical anomalous sound detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerArg {
    Nls,
    Knn,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic corpus with a manifest.
    Synth {
        /// Generator config (key = value lines).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one machine type and write a checkpoint plus loss log.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        machine: String,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Run config (key = value lines); flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, value_enum)]
        precision: Option<Precision>,
        /// Loss log CSV; defaults to `<out>.loss.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score test clips and report AUC / pAUC per section and overall.
    Eval {
        /// One per machine type.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        scorer: Option<ScorerArg>,
        #[arg(long)]
        p: Option<f64>,
        /// Neighbours for the knn scorer.
        #[arg(long)]
        k: Option<usize>,
        /// Report CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export pooled embeddings of every clip in a split.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Finite-difference and reversal self test; exit 1 on any failure.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replace the reversal with a same-sign scale (harness self test).
        #[arg(long, hide = true)]
        inject_sign_flip: bool,
    },
}

fn push<T: ToString>(v: &mut Vec<(String, String)>, key: &str, value: Option<T>) {
    if let Some(x) = value {
        v.push((key.to_string(), x.to_string()));
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Synth { config, out, seed } => {
            commands::synth(&SynthArgs { config, out, seed }, &mut stdout)?;
        }
        Command::Train {
            data,
            machine,
            out,
            config,
            seed,
            epochs,
            alpha,
            beta,
            gamma,
            precision,
            log,
        } => {
            let mut overrides = Vec::new();
            push(&mut overrides, "seed", seed);
            push(&mut overrides, "epochs", epochs);
            push(&mut overrides, "alpha", alpha);
            push(&mut overrides, "beta", beta);
            push(&mut overrides, "gamma", gamma);
            push(
                &mut overrides,
                "precision",
                precision.map(|p| match p {
                    Precision::F32 => "f32",
                    Precision::F64 => "f64",
                }),
            );
            let args = TrainArgs {
                data,
                machine,
                out,
                config,
                overrides,
                log,
            };
            commands::train_cmd(&args, &mut stdout)?;
        }
        Command::Eval {
            checkpoints,
            data,
            config,
            scorer,
            p,
            k,
            out,
        } => {
            let mut overrides = Vec::new();
            push(
                &mut overrides,
                "scorer",
                scorer.map(|s| match s {
                    ScorerArg::Nls => "nls",
                    ScorerArg::Knn => "knn",
                }),
            );
            push(&mut overrides, "p", p);
            push(&mut overrides, "knn_k", k);
            let args = EvalArgs {
                checkpoints,
                data,
                config,
                overrides,
                out,
            };
            commands::eval_cmd(&args, &mut stdout)?;
        }
        Command::Embed {
            checkpoint,
            data,
            out,
            split,
        } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            commands::embed_cmd(
                &EmbedArgs {
                    checkpoint,
                    data,
                    out,
                    split,
                },
                &mut stdout,
            )?;
        }
        Command::Gradcheck { seed, inject_sign_flip } => {
            use std::io::Write;
            let lines = gradcheck::run_suite(seed, inject_sign_flip)?;
            let passed = lines.iter().filter(|l| l.passed()).count();
            for l in &lines {
                let _ = writeln!(stdout, "{}", l.render());
            }
            let verdict = if passed == lines.len() { "PASS" } else { "FAIL" };
            let _ = writeln!(stdout, "gradcheck {passed}/{} {verdict}", lines.len());
            return Ok(passed == lines.len());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
