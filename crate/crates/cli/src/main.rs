use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use saccadic_cli::{
    cmd_analyze, cmd_estimate, cmd_evaluate, cmd_generate, cmd_sweep_nc, AnalyzeArgs, EstimateArgs, EvaluateArgs,
    GenerateArgs, SweepArgs,
};

/// Age-dependent saccadic model: estimate priors, generate scanpaths, evaluate saliency.
#[derive(Debug, Parser)]
#[command(name = "saccadic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate per-group saccade distributions from a fixation log.
    Estimate(EstimateArgs),
    /// Generate scanpaths from a saliency map and a viewer profile.
    Generate(GenerateArgs),
    /// Score predictions against human fixations.
    Evaluate(EvaluateArgs),
    /// Sweep the candidate count N_c and score plausibility.
    SweepNc(SweepArgs),
    /// Center-bias crowns, amplitude marginals and pairwise KS tests per group.
    Analyze(AnalyzeArgs),
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate(a) => {
            for g in cmd_estimate(&a)? {
                let counts: Vec<String> = g.cell_counts.iter().map(|c| c.to_string()).collect();
                println!("{}: saccades per cell [{}]", g.group_id, counts.join(", "));
            }
        }
        Command::Generate(a) => {
            let s = cmd_generate(&a)?;
            println!("wrote {} fixations to {}", s.rows, s.scanpaths_csv.display());
        }
        Command::Evaluate(a) => {
            let rows = cmd_evaluate(&a)?;
            println!("wrote {} rows to {}", rows.len(), a.out.join("metrics.csv").display());
        }
        Command::SweepNc(a) => {
            for r in cmd_sweep_nc(&a)? {
                println!("nc={:2}  kl_amplitude={:.4}  kl_joint={:.4}", r.nc, r.kl_amplitude, r.kl_joint);
            }
        }
        Command::Analyze(a) => {
            let s = cmd_analyze(&a)?;
            for (g, c) in s.groups.iter().zip(&s.crowns) {
                println!("{g}: outer 4 crowns hold {:.3}", c[6..].iter().sum::<f64>());
            }
        }
    }
    Ok(())
}

/// Malformed input exits with 2, every other failure with 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    let bad_input = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<saccadic_core::Error>(),
            Some(saccadic_core::Error::MissingColumn(_) | saccadic_core::Error::Parse { .. })
        )
    });
    if bad_input {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
