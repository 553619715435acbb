use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bulkembed_cli::{run_loaded, Manifest, RunError, RunOptions, Task, OUT_ENV};

#[derive(Parser)]
#[command(
    name = "bulkembed",
    version,
    about = "Einstein bulk extensions of chart metrics"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(clap::Args)]
struct Common {
    /// Manifest JSON file.
    #[arg(long)]
    manifest: PathBuf,
    /// Overrides the manifest's truncation order.
    #[arg(long)]
    order: Option<usize>,
    /// Overrides the manifest's cosmological constant.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Output directory for report.json.
    #[arg(long, env = OUT_ENV, default_value = ".")]
    out: PathBuf,
    /// Also dump the glue system as CSV.
    #[arg(long)]
    csv: bool,
}

#[derive(Subcommand)]
enum Verb {
    /// Christoffel symbols and Ricci tensor at the center.
    Ricci(Common),
    /// Local bulk extension of the metric.
    EmbedLocal(Common),
    /// Glue chart extensions over the manifold.
    Glue(Common),
    /// Homotopy groups of the product.
    Homotopy(Common),
    /// Check the Einstein equations on the metric.
    Verify(Common),
    /// Every task listed in the manifest.
    Run(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (only, c) = match cli.verb {
        Verb::Ricci(c) => (Some(Task::Ricci), c),
        Verb::EmbedLocal(c) => (Some(Task::EmbedLocal), c),
        Verb::Glue(c) => (Some(Task::Glue), c),
        Verb::Homotopy(c) => (Some(Task::Homotopy), c),
        Verb::Verify(c) => (Some(Task::Verify), c),
        Verb::Run(c) => (None, c),
    };
    match execute(only, &c) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(only: Option<Task>, c: &Common) -> Result<i32, RunError> {
    let mut m = Manifest::load(&c.manifest)?;
    if let Some(k) = c.order {
        m.order = k;
    }
    if let Some(l) = c.lambda {
        m.lambda = l;
    }
    m.validate()?;
    let opts = RunOptions {
        out_dir: Some(c.out.clone()),
        csv: c.csv,
    };
    let (report, code) = run_loaded(&m, only, &opts)?;
    for line in report.summary() {
        println!("{line}");
    }
    println!("report: {}", c.out.join("report.json").display());
    Ok(code)
}
