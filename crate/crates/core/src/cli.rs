//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::dims::{SumMode, Variant};
use crate::error::{Error, Result};
use crate::format::{format_measure, load_measure};
use crate::ifs::{parse_fraction, IfsModel};
use crate::measure::Point;
use crate::metric::fortet_mourier_capped;
use crate::report::{run_report, verify, Session};
use crate::typgen::{finite_net_measure, weighted_packing_measure, RadiusScan};

#[derive(Debug, Parser)]
#[command(name = "dimlab", version, about = "Multifractal box dimensions of discrete and self-similar measures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Discretize an IFS model into a measure file.
    Build {
        /// IFS model file.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        depth: u32,
        /// Output file; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate every exponent and write report.csv plus series/*.csv.
    Report(RunArgs),
    /// Check the resolution guard and the configured expectations.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Treat the open set condition as given.
        #[arg(long)]
        assume_osc: bool,
    },
    /// Fortet–Mourier distance between two measure files.
    Metric {
        first: PathBuf,
        second: PathBuf,
        /// Write the optimal test function values here.
        #[arg(long)]
        witness: Option<PathBuf>,
        #[arg(long, default_value_t = crate::metric::DEFAULT_SUPPORT_CAP)]
        cap: usize,
    },
    /// Generate measures from the packing and finite-net constructions.
    Typgen {
        #[command(subcommand)]
        kind: TypgenKind,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Build depth of an IFS input.
    #[arg(long)]
    pub depth: Option<u32>,
    /// Comma-separated q values, e.g. "-1,0,1/2".
    #[arg(long, allow_hyphen_values = true)]
    pub q_grid: Option<String>,
    #[arg(long)]
    pub mode: Option<SumMode>,
    #[arg(long)]
    pub variant: Option<Variant>,
}

#[derive(Debug, Subcommand)]
pub enum TypgenKind {
    /// Weighted packing measure around a point.
    Packing {
        #[command(flatten)]
        source: Source,
        /// Base point, comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long)]
        s: f64,
        #[arg(long, allow_hyphen_values = true)]
        q: f64,
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
        #[arg(long, default_value_t = 3)]
        base: u32,
        #[arg(long, default_value_t = 40)]
        j_max: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uniform measure on the first n atoms of a measure file.
    Net {
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Reference measure given either as a file or as an IFS model and depth.
#[derive(Debug, Args)]
pub struct Source {
    #[arg(long, conflicts_with_all = ["config", "depth"])]
    pub measure: Option<PathBuf>,
    #[arg(long, requires = "depth")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<u32>,
}

impl Source {
    fn load(&self) -> Result<crate::measure::DiscreteMeasure> {
        match (&self.measure, &self.config, self.depth) {
            (Some(m), _, _) => load_measure(m),
            (None, Some(c), Some(d)) => IfsModel::load(c)?.build_measure(d),
            _ => Err(Error::InvalidInput("give --measure, or --config with --depth".into())),
        }
    }
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',').map(|t| parse_fraction(t.trim())).collect()
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_run(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(d) = args.depth {
        cfg.set_depth(d)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(q) = &args.q_grid {
        cfg.q_grid = parse_list(q)?;
    }
    if let Some(m) = args.mode {
        cfg.set_mode(m);
    }
    if let Some(v) = args.variant {
        cfg.set_variant(v);
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

/// Runs one command; `Ok(false)` means a verification failed.
pub fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Build { config, depth, out } => {
            let ifs = IfsModel::load(&config)?;
            let measure = ifs.build_measure(depth)?;
            let header = vec![
                ("source".to_string(), config.display().to_string()),
                ("depth".to_string(), depth.to_string()),
                ("atoms".to_string(), measure.len().to_string()),
            ];
            write_output(out.as_deref(), &format_measure(&measure, &header))?;
            Ok(true)
        }
        Command::Report(args) => {
            let cfg = load_run(&args)?;
            let dir = out_dir(&cfg);
            let session = Session::open(cfg)?;
            if let Err(e) = session.check_resolution() {
                eprintln!("warning: {e}");
            }
            let report = run_report(&session);
            report.write_dir(&dir)?;
            let failed = report.rows.iter().filter(|r| r.value().is_none()).count();
            eprintln!("wrote {} rows to {} ({failed} failed)", report.rows.len(), dir.join("report.csv").display());
            Ok(true)
        }
        Command::Verify { run, assume_osc } => {
            let mut cfg = load_run(&run)?;
            cfg.assume_osc |= assume_osc;
            let write_to = run.out.clone();
            let session = Session::open(cfg)?;
            let (checks, report) = verify(&session);
            for c in &checks {
                println!("{c}");
            }
            if let (Some(dir), Some(report)) = (write_to, report) {
                report.write_dir(&dir)?;
            }
            let passed = checks.iter().all(|c| c.passed);
            println!("{}", if passed { "verify: pass" } else { "verify: FAIL" });
            Ok(passed)
        }
        Command::Metric { first, second, witness, cap } => {
            let (d, w) = fortet_mourier_capped(&load_measure(&first)?, &load_measure(&second)?, cap)?;
            println!("{d:?}");
            if let Some(path) = witness {
                let mut text = String::new();
                for (p, v) in w.support.iter().zip(&w.values) {
                    for c in &p.0 {
                        text.push_str(&format!("{c:?} "));
                    }
                    text.push_str(&format!("{v:?}\n"));
                }
                write_output(Some(&path), &text)?;
            }
            Ok(true)
        }
        Command::Typgen { kind } => {
            match kind {
                TypgenKind::Packing { source, x, s, q, t, base, j_max, out } => {
                    let pi = source.load()?;
                    let x = Point::new(parse_list(&x)?);
                    let m = weighted_packing_measure(&pi, &x, s, q, t, &RadiusScan { base, j_max })?;
                    if !m.verify(&pi) {
                        return Err(Error::InvalidInput("packing certificate failed re-verification".into()));
                    }
                    write_output(out.as_deref(), &format_measure(&m.measure, &m.header()))?;
                }
                TypgenKind::Net { sample, n, out } => {
                    let pts = load_measure(&sample)?.points();
                    let m = finite_net_measure(&pts, n, None)?;
                    let header = vec![("n".to_string(), n.to_string())];
                    write_output(out.as_deref(), &format_measure(&m, &header))?;
                }
            }
            Ok(true)
        }
    }
}

/// Entry point shared by the binary: honours `DIMLAB_THREADS` and maps
/// outcomes to exit codes (0 ok, 1 verification failure, 2 error).
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("DIMLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
