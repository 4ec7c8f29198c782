use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use actnet::activations::ActivationKind;
use actnet::bench::selu_demo::{DEMO_LAYERS, DEMO_SAMPLES, DEMO_WIDTH};
use actnet::bench::{
    render_table, run_gradcheck, run_suite_file, selu_demo, GradcheckTarget, Perturbation,
    RunOptions, TableFormat,
};
use actnet::dataio::{log_mel_spectrogram, patch_split, read_wav, SpectrogramParams};
use actnet::layers::checkpoint;

#[derive(Parser)]
#[command(name = "actnet", version, about = "Activation-function benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a config file.
    Run {
        config: PathBuf,
        /// Base seed for every experiment (repetition r uses seed + r).
        #[arg(long)]
        seed: Option<u64>,
        /// Epoch count for every experiment.
        #[arg(long)]
        epochs: Option<usize>,
        /// Directory for `<config>.csv` and `<config>.md`.
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
    },
    /// Finite-difference gradient checks: `all`, an activation name, or one
    /// of dense, conv, batchnorm, dropout, softmax-ce.
    Gradcheck {
        #[arg(default_value = "all")]
        target: String,
        #[arg(long, hide = true, default_value_t = 0.0)]
        perturb_gelu: f64,
    },
    /// Per-layer output moments of a deep SELU stack next to the same ReLU stack.
    SeluDemo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Extract log-mel patches from a WAV file into a tensor container.
    Features {
        wav: PathBuf,
        out: PathBuf,
    },
}

fn run(cli: Cli) -> actnet::Result<bool> {
    match cli.command {
        Command::Run {
            config,
            seed,
            epochs,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let stem = config
                .file_stem()
                .map_or("results".into(), |s| s.to_string_lossy().into_owned());
            let opts = RunOptions {
                seed,
                epochs,
                csv_path: Some(out_dir.join(format!("{stem}.csv"))),
            };
            let rows = run_suite_file(&config, &opts, |msg| eprintln!("{msg}"))?;
            let md = render_table(&rows, TableFormat::Markdown)?;
            actnet::bench::table::write_text(out_dir.join(format!("{stem}.md")), &md)?;
            print!("{md}");
            Ok(rows.iter().all(|r| r.error.is_empty()))
        }
        Command::Gradcheck {
            target,
            perturb_gelu,
        } => {
            let target: GradcheckTarget = target.parse()?;
            let report = run_gradcheck(target, Perturbation { gelu_scale: perturb_gelu })?;
            print!("{}", report.render());
            Ok(report.passed())
        }
        Command::SeluDemo { seed } => {
            let mut ok = true;
            for act in [ActivationKind::SELU, ActivationKind::RELU] {
                let r = selu_demo(act, DEMO_LAYERS, DEMO_WIDTH, DEMO_SAMPLES, seed)?;
                print!("{}", r.render());
                println!("within bounds: {}\n", r.within_bounds());
                ok &= r.within_bounds() == act.is_selu();
            }
            Ok(ok)
        }
        Command::Features { wav, out } => {
            let (samples, rate) = read_wav(&wav)?;
            let params = SpectrogramParams::table3(rate);
            let spec = log_mel_spectrogram(samples.data(), &params)?;
            let patches = patch_split(&spec, params.patch_frames)?;
            checkpoint::save(&out, &patches)?;
            println!(
                "{}: {} frames at {rate} Hz -> {} patches of {:?} written to {}",
                wav.display(),
                spec.shape()[0],
                patches.len(),
                patches[0].shape(),
                out.display()
            );
            Ok(true)
        }
    }
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
