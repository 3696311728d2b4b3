//! `spincat`: sizes of superpositions of ground states of spin clusters.
//!
//! Exit codes: 0 success, 1 table values outside tolerance, 2 usage error,
//! 3 invalid input, 4 size budget exceeded, 5 numerical failure,
//! 6 no admissible partition, 7 I/O failure.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use spincat::analysis::{
    analyze, entry_from_model, grid, plm_sweep, polarized_pair, ring_scaling, table1, AnalysisOptions, RING_SPINS,
};
use spincat::eigen::SolverOptions;
use spincat::fisher::FisherOptions;
use spincat::hamiltonian::SpinModel;
use spincat::models::{build, EntryKind, ModelEntry, ModelKey};
use spincat::{Error, HalfInt};

use output::{Meta, Output};

#[derive(Parser, Debug)]
#[command(name = "spincat", version = output::VERSION, about = "Size measures of superpositions in spin clusters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Measures of one superposition: D_FI, D_RFI, D_LM and state statistics.
    Analyze(AnalyzeArgs),
    /// D_FI and D_RFI over every pair of ground-multiplet projections.
    Grid(ModelArgs),
    /// Discrimination probabilities of single spins and named subsets against M.
    PlmSweep(ModelArgs),
    /// Alternating-ring sizes as a function of the larger spin.
    RingScaling(RingArgs),
    /// Every column of the size table, compared with the published values.
    Table1(TableArgs),
    /// Writes a registry model in the JSON model format.
    ExportModel(ExportArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct CommonArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Eigensolver residual tolerance, relative to the operator norm bound.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Seed for the eigensolver and the random Fisher starts.
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Maximum Lanczos restarts.
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
    /// Sectors up to this dimension are diagonalized densely.
    #[arg(long, default_value_t = 1024)]
    dense_threshold: usize,
    /// Largest sector dimension the run may enumerate.
    #[arg(long, default_value_t = 5_000_000)]
    max_sector_dim: u64,
    /// Threshold delta of the partition search.
    #[arg(long, default_value_t = 1e-2)]
    delta: f64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

impl CommonArgs {
    fn options(&self) -> AnalysisOptions {
        let mut o = AnalysisOptions {
            solver: SolverOptions {
                tol: self.tol,
                seed: self.seed,
                max_restarts: self.max_iter,
                dense_threshold: self.dense_threshold,
                ..SolverOptions::default()
            },
            fisher: FisherOptions {
                seed: self.seed,
                ..FisherOptions::default()
            },
            max_sector_dim: self.max_sector_dim,
            ..AnalysisOptions::default()
        };
        o.partition.delta = self.delta;
        o
    }

    fn validate(&self) -> Result<(), Error> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "--tol must lie in (0, 1), got {}",
                self.tol
            )));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "--delta must lie in (0, 1/2), got {}",
                self.delta
            )));
        }
        if self.max_sector_dim == 0 {
            return Err(Error::InvalidArgument("--max-sector-dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct ModelArgs {
    /// Registry key (mn12_set1, mn12_set2, fe8, mn6, mn6_family:<s_A>, fe4,
    /// cr7ni, v15, mn10, tb). Omit when --model-file is given.
    model: Option<String>,
    /// JSON model file instead of a registry key.
    #[arg(long, conflicts_with = "model")]
    model_file: Option<PathBuf>,
    /// Ground-multiplet spin of a model file; found from the spectrum when absent.
    #[arg(long, requires = "model_file")]
    ground_s: Option<HalfInt>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
struct AnalyzeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Projection of the first component ("3/2" or "1.5"); defaults to S.
    #[arg(long, allow_hyphen_values = true)]
    m1: Option<HalfInt>,
    /// Projection of the second component; defaults to -S.
    #[arg(long, allow_hyphen_values = true)]
    m2: Option<HalfInt>,
    /// Relative phase of the second component, radians.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    phase: f64,
    /// Also evaluate the phases 0, π/2, π and 3π/2.
    #[arg(long)]
    phase_sweep: bool,
    /// Skip the partition search.
    #[arg(long)]
    no_dlm: bool,
    /// Require the closed-form treatment (mn10, tb).
    #[arg(long)]
    closed_form: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
struct RingArgs {
    /// Values of s_A; defaults to 1, 3/2, 2, 5/2.
    #[arg(long = "s-a", value_delimiter = ',')]
    s_a: Vec<HalfInt>,
    /// Skip the partition search.
    #[arg(long)]
    no_dlm: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
struct TableArgs {
    /// Include the Mn12 columns (hours of CPU time).
    #[arg(long)]
    extended: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ExportArgs {
    /// Registry key.
    model: String,
    /// For v15: export the hexagon instead of the triangle.
    #[arg(long)]
    hexagon: bool,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidCluster(_)
        | Error::EmptySector { .. }
        | Error::BasisMismatch
        | Error::SectorMismatch { .. }
        | Error::InvalidCoupling(_)
        | Error::RequiresComplex
        | Error::InvalidSuperposition(_)
        | Error::DimensionMismatch { .. }
        | Error::InvalidArgument(_)
        | Error::Parse(_)
        | Error::UnknownModel(_)
        | Error::Json(_) => 3,
        Error::BudgetExceeded { .. } | Error::SubsetTooLarge { .. } => 4,
        Error::NoConvergence { .. } | Error::AmbiguousMultiplet(_) => 5,
        Error::Infeasible { .. } => 6,
        Error::Io(_) => 7,
    }
}

fn load_entry(args: &ModelArgs, opts: &AnalysisOptions) -> Result<ModelEntry, Error> {
    match (&args.model, &args.model_file) {
        (Some(key), None) => build(key.parse::<ModelKey>()?),
        (None, Some(path)) => entry_from_model(SpinModel::load(path)?, args.ground_s, opts),
        _ => Err(Error::InvalidArgument(
            "give either a registry key or --model-file".into(),
        )),
    }
}

fn set_threads(n: usize) {
    if n > 0 {
        // only fails if a pool already exists, which is harmless here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Analyze(a) => {
            a.model.common.validate()?;
            set_threads(a.model.common.threads);
            let mut opts = a.model.common.options();
            opts.phase = a.phase;
            opts.phase_sweep = a.phase_sweep;
            opts.compute_d_lm = !a.no_dlm;
            let entry = load_entry(&a.model, &opts)?;
            let is_closed = matches!(entry.kind, EntryKind::ClosedForm(_));
            if a.closed_form && !is_closed {
                return Err(Error::InvalidArgument(format!("{} has no closed form", entry.key)));
            }
            let (m1, m2) = match (a.m1, a.m2) {
                (Some(m1), Some(m2)) => (m1, m2),
                (None, None) => polarized_pair(&entry)?,
                _ => return Err(Error::InvalidArgument("give both --m1 and --m2 or neither".into())),
            };
            let report = analyze(&entry, m1, m2, &opts)?;
            let out = Output::new(&a.model.common.out)?;
            let stem = format!("analyze_{}_{}_{}", file_key(&report.model), m1.as_f64(), m2.as_f64());
            let meta = Meta::new("analyze", &a, &opts, report.timings.clone());
            out.json(&stem, &meta, &report)?;
            print!("{}", report.table());
            Ok(0)
        }
        Command::Grid(a) => {
            a.common.validate()?;
            set_threads(a.common.threads);
            let opts = a.common.options();
            let entry = load_entry(&a, &opts)?;
            let (cells, secs) = output::timed(|| grid(&entry, &opts))?;
            let out = Output::new(&a.common.out)?;
            let meta = Meta::new("grid", &a, &opts, output::single_stage("grid", secs));
            let rows: Vec<output::GridRow> = cells.iter().map(output::GridRow::from).collect();
            let path = out.csv(&format!("grid_{}", file_key(&entry.key.to_string())), &meta, &rows)?;
            println!("{}", path.display());
            Ok(0)
        }
        Command::PlmSweep(a) => {
            a.common.validate()?;
            set_threads(a.common.threads);
            let opts = a.common.options();
            let entry = load_entry(&a, &opts)?;
            let (rows, secs) = output::timed(|| plm_sweep(&entry, &opts))?;
            let out = Output::new(&a.common.out)?;
            let meta = Meta::new("plm-sweep", &a, &opts, output::single_stage("plm-sweep", secs));
            let rows: Vec<output::SweepRowOut> = rows.iter().map(output::SweepRowOut::from).collect();
            let path = out.csv(&format!("plm_{}", file_key(&entry.key.to_string())), &meta, &rows)?;
            println!("{}", path.display());
            Ok(0)
        }
        Command::RingScaling(a) => {
            a.common.validate()?;
            set_threads(a.common.threads);
            let mut opts = a.common.options();
            opts.compute_d_lm = !a.no_dlm;
            let spins = if a.s_a.is_empty() {
                RING_SPINS.to_vec()
            } else {
                a.s_a.clone()
            };
            let (res, secs) = output::timed(|| ring_scaling(&spins, &opts))?;
            let out = Output::new(&a.common.out)?;
            let meta = Meta::new("ring-scaling", &a, &opts, output::single_stage("ring-scaling", secs));
            let rows = output::ring_rows(&res);
            out.csv("ring_scaling", &meta, &rows)?;
            out.json("ring_scaling", &meta, &res)?;
            println!(
                "D_FI linear fit: slope {:.6}, intercept {:.6}, relative RMS {:.4}",
                res.d_fi_linear.slope, res.d_fi_linear.intercept, res.d_fi_linear.relative_rms
            );
            if let Some(f) = &res.d_rfi_exponential {
                println!(
                    "D_RFI exponential fit: rate {:.6}, relative RMS of ln {:.4}",
                    f.slope, f.relative_rms
                );
            }
            Ok(0)
        }
        Command::Table1(a) => {
            a.common.validate()?;
            set_threads(a.common.threads);
            let opts = a.common.options();
            let ((reports, cells), secs) = output::timed(|| table1(a.extended, &opts))?;
            let out = Output::new(&a.common.out)?;
            let timings = reports
                .iter()
                .flat_map(|r| {
                    r.timings.iter().map(move |t| spincat::analysis::StageTiming {
                        stage: format!("{} {}", r.model, t.stage),
                        seconds: t.seconds,
                    })
                })
                .chain(output::single_stage("table1", secs))
                .collect();
            let meta = Meta::new("table1", &a, &opts, timings);
            let rows: Vec<output::TableRow> = cells.iter().map(output::TableRow::from).collect();
            out.csv("table1", &meta, &rows)?;
            out.json("table1", &meta, &reports)?;
            let mut all_ok = true;
            for c in &cells {
                all_ok &= c.within_tolerance;
                println!(
                    "{:<8} {:<16} computed {:>12.6}  reference {:>10}  {}",
                    c.column,
                    c.measure,
                    c.computed,
                    c.reference,
                    if c.within_tolerance { "ok" } else { "OUT OF TOLERANCE" }
                );
            }
            Ok(if all_ok { 0 } else { 1 })
        }
        Command::ExportModel(a) => {
            let entry = build(a.model.parse::<ModelKey>()?)?;
            let model = match &entry.kind {
                EntryKind::Exchange(m) => m,
                EntryKind::V15(v) if a.hexagon => &v.hexagon,
                EntryKind::V15(v) => &v.triangle,
                EntryKind::ClosedForm(_) => {
                    return Err(Error::InvalidArgument(format!(
                        "{} is a closed form without couplings",
                        entry.key
                    )))
                }
            };
            let text = model.to_json()?;
            match &a.out {
                Some(p) => std::fs::write(p, format!("{text}\n"))?,
                None => println!("{text}"),
            }
            Ok(0)
        }
    }
}

fn file_key(s: &str) -> String {
    s.replace([':', '/'], "_")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
