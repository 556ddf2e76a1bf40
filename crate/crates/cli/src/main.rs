//! `tofu` command-line front end. Exit status: 0 success, 2 configuration error,
//! 3 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod manifest;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use tofu::rfgen::ShapeFormat;
use tofu::{Error, Result};

use commands::{Globals, ShapeArgs};

#[derive(Debug, Parser)]
#[command(name = "tofu", version, about = "TOFU-RADAR dipolar recoupling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Powder override, e.g. golden:144:5.
    #[arg(long, global = true, value_name = "scheme:nab:ngamma")]
    powder: Option<String>,
    #[arg(long, global = true, value_name = "quarter|half")]
    condition: Option<String>,
    #[arg(long, global = true, value_name = "real|abs")]
    detect: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    /// amplitude, total phase
    Two,
    /// amplitude, phase, offset
    Three,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write one TOFU element as a shape file.
    Shape {
        /// B in units of ωr.
        #[arg(long)]
        b_over_wr: Option<f64>,
        /// C in units of ωr; overrides --condition.
        #[arg(long)]
        c_over_wr: Option<f64>,
        #[arg(long)]
        spinning_hz: Option<f64>,
        /// Samples per element.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long, default_value = "tofu_shape.txt")]
        file: String,
    },
    /// Simulate MAIN and REFERENCE dephasing series and η.
    Dephase,
    /// Analytic Fresnel η curves over a distance grid.
    Chart,
    /// Fit distances to the η columns of a CSV.
    Fit {
        #[arg(long, value_name = "CSV")]
        input: PathBuf,
        /// Fit only this column.
        #[arg(long)]
        column: Option<String>,
    },
    /// Truncation margins and the effective Hamiltonian for a config.
    Check,
    /// TOFU and POST-C7 curves of the three-spin truncation demonstration.
    Fig1b,
}

fn globals(cli: &Cli) -> Result<Globals> {
    Ok(Globals {
        config: cli.config.clone(),
        out: cli.out.clone(),
        powder: cli.powder.as_deref().map(str::parse).transpose()?,
        condition: cli.condition.as_deref().map(str::parse).transpose()?,
        detect: cli.detect.as_deref().map(str::parse).transpose()?,
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let g = globals(&cli)?;
    let start = Instant::now();
    let (name, path) = match &cli.command {
        Command::Shape { b_over_wr, c_over_wr, spinning_hz, steps, format, file } => {
            let args = ShapeArgs {
                b_over_wr: *b_over_wr,
                c_over_wr: *c_over_wr,
                spinning_hz: *spinning_hz,
                steps: *steps,
                format: format.map(|f| match f {
                    Format::Two => ShapeFormat::TwoColumn,
                    Format::Three => ShapeFormat::ThreeColumn,
                }),
                file: file.clone(),
            };
            ("shape", commands::shape(&g, &args)?)
        }
        Command::Dephase => ("dephase", commands::dephase(&g)?),
        Command::Chart => ("chart", commands::chart(&g)?),
        Command::Fit { input, column } => {
            let (path, text) = commands::fit(&g, input, column.as_deref())?;
            print!("{text}");
            ("fit", path)
        }
        Command::Check => {
            let (path, text) = commands::check(&g)?;
            print!("{text}");
            ("check", path)
        }
        Command::Fig1b => ("fig1b", commands::fig1b(&g)?),
    };
    eprintln!("tofu {name}: wrote {} in {:.2} s", path.display(), start.elapsed().as_secs_f64());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config() {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
