mod report;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use arofac2::synthgen::{modal_rank, write_sweep_csv, Matching};
use arofac2::t3::{read_t3, write_t3};
use arofac2::{
    arofac2_detailed, eem, gen_synthetic, match_components, noise_sweep, parafac_als, AlsConfig, Arofac2Config,
    GroundTruth, NoiseScale, SynthSpec, Tensor3,
};
use clap::{Args, Parser, Subcommand};

use report::{Comparison, Method, RunReport, Sidecar};

const EXIT_INPUT: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

/// Rank detection and CP decomposition of three-way tensors.
#[derive(Parser)]
#[command(name = "arofac2", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a tensor read from a .t3 file or an EEM CSV stack.
    Decompose(DecomposeArgs),
    /// Write a synthetic tensor and its ground truth.
    Synth(SynthArgs),
    /// Detected rank over a grid of noise levels.
    Sweep(SweepArgs),
    /// Run AROFAC2 and fixed-rank PARAFAC-ALS on the same input.
    Compare(CompareArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// FindRankOne restarts per mode pairing.
    #[arg(long)]
    restarts: Option<usize>,
    /// Span dimension to use instead of the energy rule.
    #[arg(long)]
    rank_hint: Option<usize>,
    /// Skip the mode-3 run and fit per-slice weights instead.
    #[arg(long)]
    no_mode3: bool,
}

impl RunArgs {
    fn config(&self) -> Arofac2Config {
        let mut cfg = Arofac2Config::default();
        if let Some(r) = self.restarts {
            cfg.restarts_per_mode = r;
        }
        cfg.span_target_dim = self.rank_hint;
        cfg.compute_mode3 = !self.no_mode3;
        cfg
    }
}

#[derive(Args)]
struct DecomposeArgs {
    /// A .t3 file, or a CSV pattern such as `eem/sample_{}.csv`.
    #[arg(long)]
    input: String,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, num_args = 3, value_names = ["N1", "N2", "N3"], required = true)]
    dims: Vec<usize>,
    #[arg(long)]
    rank: usize,
    /// Noise level (standard deviation unless --noise-is-variance).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    noise_is_variance: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    /// File stem of the tensor and its sidecar.
    #[arg(long, default_value = "synth")]
    name: String,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, num_args = 3, value_names = ["N1", "N2", "N3"], default_values_t = [50, 60, 70])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    rank: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.05, 0.1, 0.2, 0.3, 0.35, 0.45, 0.6])]
    eps_grid: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    n_seeds: usize,
    #[arg(long)]
    noise_is_variance: bool,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    input: String,
    /// Rank of the PARAFAC-ALS arm.
    #[arg(long)]
    rank: usize,
    /// Ground-truth sidecar; defaults to `<input stem>.truth.json`.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

/// A failure tagged with the exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<arofac2::Error> for Failure {
    fn from(e: arofac2::Error) -> Self {
        let code = if e.is_input_error() { EXIT_INPUT } else { EXIT_NUMERICAL };
        Failure { code, err: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        Failure { code: EXIT_INPUT, err }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn input_failure(e: arofac2::Error, what: &str) -> Failure {
    let code = if e.is_input_error() { EXIT_INPUT } else { EXIT_NUMERICAL };
    Failure {
        code,
        err: anyhow::Error::new(e).context(what.to_string()),
    }
}

fn load_tensor(input: &str) -> CliResult<Tensor3> {
    let t = if input.contains("{}") {
        eem::load_eem_csv(input)
    } else {
        let f = File::open(input).map_err(|e| input_failure(e.into(), &format!("opening {input}")))?;
        read_t3(BufReader::new(f))
    };
    t.map_err(|e| {
        let code = if e.is_input_error() || matches!(e, arofac2::Error::DimensionMismatch(_)) {
            EXIT_INPUT
        } else {
            EXIT_NUMERICAL
        };
        Failure {
            code,
            err: anyhow::Error::new(e).context(format!("reading {input}")),
        }
    })
}

fn command_line() -> Vec<String> {
    std::env::args().collect()
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn dims3(v: &[usize]) -> [usize; 3] {
    [v[0], v[1], v[2]]
}

fn run_arofac2(a: &Tensor3, input: &str, run: &RunArgs) -> CliResult<RunReport> {
    let cfg = run.config();
    let start = Instant::now();
    let out = arofac2_detailed(a, &cfg, run.seed)?;
    let d = out.decomposition;
    Ok(RunReport {
        command: command_line(),
        method: Method::Arofac2,
        input: input.to_string(),
        dims: a.dims(),
        seed: run.seed,
        arofac2_config: Some(cfg),
        als_config: None,
        rank: d.rank,
        rel_error: d.rel_error,
        factors: d.factors,
        slice_weights: d.slice_weights,
        diagnostics: Some(out.diagnostics),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn decompose(args: &DecomposeArgs) -> CliResult<()> {
    let a = load_tensor(&args.input)?;
    let report = run_arofac2(&a, &args.input, &args.run)?;
    ensure_dir(&args.output_dir)?;
    report::write_json(&args.output_dir.join("report.json"), &report)?;
    report::write_factor_csvs(&args.output_dir, "", &report.decomposition())?;
    println!(
        "rank {} rel_error {:.3e} ({:.1}s)",
        report.rank, report.rel_error, report.wall_time_s
    );
    Ok(())
}

fn synth(args: &SynthArgs) -> CliResult<()> {
    let mut spec = SynthSpec::new(dims3(&args.dims), args.rank, args.noise, args.seed);
    if args.noise_is_variance {
        spec.noise = NoiseScale::Variance;
    }
    let (a, truth) = gen_synthetic(&spec).map_err(|e| Failure {
        code: EXIT_INPUT,
        err: anyhow::Error::new(e).context("invalid synthetic spec"),
    })?;
    ensure_dir(&args.output_dir)?;
    let path = args.output_dir.join(format!("{}.t3", args.name));
    report::write_atomic(&path, |out| write_t3(&a, out).map_err(std::io::Error::other))?;
    let sidecar = report::sidecar_path(&path);
    report::write_json(&sidecar, &Sidecar { spec, truth })?;
    println!("{} {}", path.display(), sidecar.display());
    Ok(())
}

fn sweep(args: &SweepArgs) -> CliResult<()> {
    let mut base = SynthSpec::new(dims3(&args.dims), args.rank, 0.0, args.run.seed);
    if args.noise_is_variance {
        base.noise = NoiseScale::Variance;
    }
    let rows = noise_sweep(&base, &args.eps_grid, args.n_seeds, &args.run.config()).map_err(|e| Failure {
        code: EXIT_INPUT,
        err: anyhow::Error::new(e).context("invalid sweep arguments"),
    })?;
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: eps {} seed {} failed: {}",
            r.eps,
            r.seed,
            r.error.as_deref().unwrap_or_default()
        );
    }
    ensure_dir(&args.output_dir)?;
    report::write_atomic(&args.output_dir.join("sweep.csv"), |out| {
        write_sweep_csv(&rows, out).map_err(std::io::Error::other)
    })?;
    let summary: Vec<(f64, Option<usize>, usize, usize)> = args
        .eps_grid
        .iter()
        .map(|&e| {
            let cells: Vec<_> = rows.iter().filter(|r| r.eps == e).collect();
            let ok = cells.iter().filter(|r| r.detected_rank.is_some()).count();
            (e, modal_rank(&rows, e), ok, cells.len() - ok)
        })
        .collect();
    report::write_atomic(&args.output_dir.join("rank_vs_eps.csv"), |out| {
        writeln!(out, "eps,modal_rank,succeeded,failed")?;
        for (e, m, ok, bad) in &summary {
            writeln!(out, "{e},{},{ok},{bad}", m.map(|m| m.to_string()).unwrap_or_default())?;
        }
        Ok(())
    })?;
    for (e, m, ok, bad) in &summary {
        let m = m.map_or("-".to_string(), |m| m.to_string());
        println!("eps {e}: modal rank {m} ({ok} ok, {bad} failed)");
    }
    Ok(())
}


fn load_sidecar(path: &Path) -> anyhow::Result<GroundTruth> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let s: Sidecar = serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))?;
    Ok(s.truth)
}

fn matching(d: &arofac2::Decomposition, truth: &GroundTruth) -> Option<Matching> {
    match_components(d, truth).ok()
}

fn compare(args: &CompareArgs) -> CliResult<()> {
    let a = load_tensor(&args.input)?;
    let mut warnings = Vec::new();
    let truth_path = args.truth.clone().or_else(|| {
        let p = report::sidecar_path(Path::new(&args.input));
        p.exists().then_some(p)
    });
    let truth = match &truth_path {
        Some(p) => match load_sidecar(p) {
            Ok(t) => Some(t),
            Err(e) => {
                warnings.push(format!("ground truth unavailable ({e:#}); comparing fits only"));
                None
            }
        },
        None => {
            warnings.push("no ground-truth sidecar found; comparing fits only".into());
            None
        }
    };

    let aro = run_arofac2(&a, &args.input, &args.run)?;
    let als_cfg = AlsConfig {
        init_seed: args.run.seed,
        ..AlsConfig::new(args.rank)
    };
    let start = Instant::now();
    let d = parafac_als(&a, &als_cfg)?;
    let par = RunReport {
        command: command_line(),
        method: Method::ParafacAls,
        input: args.input.clone(),
        dims: a.dims(),
        seed: args.run.seed,
        arofac2_config: None,
        als_config: Some(als_cfg),
        rank: d.rank,
        rel_error: d.rel_error,
        factors: d.factors,
        slice_weights: None,
        diagnostics: None,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    if aro.rank != par.rank {
        warnings.push(format!(
            "AROFAC2 detected rank {} but PARAFAC-ALS was run at rank {}",
            aro.rank, par.rank
        ));
    }
    let (am, pm) = match &truth {
        Some(t) => (matching(&aro.decomposition(), t), matching(&par.decomposition(), t)),
        None => (None, None),
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    ensure_dir(&args.output_dir)?;
    let dir = &args.output_dir;
    report::write_json(&dir.join("arofac2_report.json"), &aro)?;
    report::write_json(&dir.join("parafac_report.json"), &par)?;
    report::write_factor_csvs(dir, "arofac2_", &aro.decomposition())?;
    report::write_factor_csvs(dir, "parafac_", &par.decomposition())?;
    if let Some(m) = &am {
        report::write_corr_csv(&dir.join("arofac2_corr.csv"), m)?;
    }
    if let Some(m) = &pm {
        report::write_corr_csv(&dir.join("parafac_corr.csv"), m)?;
    }
    let cmp = Comparison {
        input: args.input.clone(),
        truth: truth.as_ref().and(truth_path.map(|p| p.display().to_string())),
        arofac2_rank: aro.rank,
        parafac_rank: par.rank,
        rank_discrepancy: aro.rank != par.rank,
        arofac2_rel_error: aro.rel_error,
        parafac_rel_error: par.rel_error,
        arofac2_matching: am,
        parafac_matching: pm,
        warnings,
    };
    report::write_json(&dir.join("comparison.json"), &cmp)?;
    let corr = |m: &Option<Matching>| m.as_ref().map_or("-".to_string(), |m| format!("{:.4}", m.min_matched_corr));
    println!(
        "arofac2: rank {} rel_error {:.3e} min corr {}",
        cmp.arofac2_rank,
        cmp.arofac2_rel_error,
        corr(&cmp.arofac2_matching)
    );
    println!(
        "parafac: rank {} rel_error {:.3e} min corr {}",
        cmp.parafac_rank,
        cmp.parafac_rel_error,
        corr(&cmp.parafac_matching)
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Decompose(a) => decompose(a),
        Command::Synth(a) => synth(a),
        Command::Sweep(a) => sweep(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
