use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use fraisse::artifacts::RunDir;
use fraisse::commands::{self, Report};
use fraisse::engine_from_env;

/// Finite-stage Fraïssé constructions: build chains, run certification
/// batteries and verify certificates.
///
/// Exit status: 0 when every certificate passes, 1 when at least one is
/// negative, 2 on configuration or resource errors. The LP engine is
/// chosen with FRAISSE_LP_ENGINE=float|exact.
#[derive(Parser)]
#[command(name = "fraisse", version)]
struct Cli {
    /// Root under which each run gets its own directory.
    #[arg(long, global = true, default_value = "artifacts")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stage chain of l-infinity spaces with isometric connectives.
    BuildGurarij {
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 12)]
        dim_cap: usize,
        #[arg(long, default_value_t = 0.25)]
        resolution: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Stage chain of function systems with unital connectives.
    BuildPoulsen {
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, default_value_t = 24)]
        dim_cap: usize,
        #[arg(long, default_value_t = 0.25)]
        resolution: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Certifies the first scheduled obligations of a chain.
    CertifyExtension {
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 12)]
        dim_cap: usize,
        #[arg(long, default_value_t = 0.25)]
        resolution: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 24)]
        battery: usize,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
    },
    /// Back-and-forth between pairs of embeddings of random planes.
    Homogeneity {
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 12)]
        dim_cap: usize,
        #[arg(long, default_value_t = 0.25)]
        resolution: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        pairs: usize,
        #[arg(long, default_value_t = 8)]
        rounds: usize,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
    },
    /// Arrow chain, operator battery, surjectivity trace and kernel.
    UniversalOp {
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, default_value_t = 32)]
        dom_cap: usize,
        #[arg(long, default_value_t = 16)]
        cod_cap: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        battery: usize,
        #[arg(long, default_value_t = 0.2)]
        eps: f64,
        #[arg(long, default_value_t = 20)]
        probes: usize,
    },
    /// State chain into l-infinity^d and its projection battery.
    UniversalState {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long, default_value_t = 80)]
        cap: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        battery: usize,
        #[arg(long, default_value_t = 0.2)]
        eps: f64,
    },
    /// Unital isometries l-infinity^d -> l-infinity^m moving t close to s.
    Minimality {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the uniform states instead of random ones.
        #[arg(long)]
        uniform: bool,
        /// Target dimension; defaults to the least admissible one.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Block-diagonal embedding of M_d moving a state on M_kd close to t.
    MatrixMinimality {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Face condition for the projection l-infinity^n -> l-infinity^k.
    CheckFace {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Biface condition for a coordinate projection, or for the averaging
    /// map on the worst sample found by search.
    CheckBiface {
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        averaging: bool,
    },
    /// Recomputes a certificate from its witness.
    Verify {
        certificate: PathBuf,
        /// Chain file the certificate refers to.
        #[arg(long)]
        chain: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::BuildGurarij { .. } => "build-gurarij",
            Command::BuildPoulsen { .. } => "build-poulsen",
            Command::CertifyExtension { .. } => "certify-extension",
            Command::Homogeneity { .. } => "homogeneity",
            Command::UniversalOp { .. } => "universal-op",
            Command::UniversalState { .. } => "universal-state",
            Command::Minimality { .. } => "minimality",
            Command::MatrixMinimality { .. } => "matrix-minimality",
            Command::CheckFace { .. } => "check-face",
            Command::CheckBiface { .. } => "check-biface",
            Command::Verify { .. } => "verify",
        }
    }
}

fn run(cli: Cli) -> Result<Report> {
    let engine = engine_from_env()?;
    fraisse_core::lp::set_default_engine(engine);
    if let Command::Verify { certificate, chain } = &cli.command {
        return commands::verify(engine, certificate, chain.as_deref());
    }
    // Parsed parameters, defaults included, so the output root and argument
    // spelling do not change the run directory.
    let fingerprint = format!("{} {:?}", engine.name(), cli.command);
    let mut dir = RunDir::create(&cli.out, cli.command.name(), &fingerprint)?;
    let mut report = match cli.command {
        Command::BuildGurarij { depth, dim_cap, resolution, seed } => commands::build_gurarij(engine, &mut dir, depth, dim_cap, resolution, seed)?,
        Command::BuildPoulsen { depth, dim_cap, resolution, seed } => commands::build_poulsen(engine, &mut dir, depth, dim_cap, resolution, seed)?,
        Command::CertifyExtension { depth, dim_cap, resolution, seed, battery, eps } => {
            commands::certify_extension(engine, &mut dir, depth, dim_cap, resolution, seed, battery, eps)?
        }
        Command::Homogeneity { depth, dim_cap, resolution, seed, pairs, rounds, delta } => {
            commands::homogeneity(engine, &mut dir, depth, dim_cap, resolution, seed, pairs, rounds, delta)?
        }
        Command::UniversalOp { depth, dom_cap, cod_cap, seed, battery, eps, probes } => {
            commands::universal_op(&mut dir, depth, dom_cap, cod_cap, seed, battery, eps, probes)?
        }
        Command::UniversalState { d, depth, cap, seed, battery, eps } => commands::universal_state(&mut dir, d, depth, cap, seed, battery, eps)?,
        Command::Minimality { d, eps, trials, seed, uniform, m } => commands::minimality(engine, &mut dir, d, eps, trials, seed, uniform, m)?,
        Command::MatrixMinimality { d, eps, seed, samples } => commands::matrix_minimality(&mut dir, d, eps, seed, samples)?,
        Command::CheckFace { n, k, samples, eps, seed } => commands::check_face(&mut dir, n, k, samples, eps, seed)?,
        Command::CheckBiface { n, k, samples, eps, seed, averaging } => commands::check_biface(&mut dir, n, k, samples, eps, seed, averaging)?,
        Command::Verify { .. } => unreachable!("handled above"),
    };
    report.persist(&mut dir)?;
    report.lines.push(format!("artifacts in {}", dir.path().display()));
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            for l in &report.lines {
                println!("{l}");
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
