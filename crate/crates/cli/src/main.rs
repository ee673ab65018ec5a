use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trbu::experiments::{self, presets, CurveSpec, ExperimentReport};
use trbu::{io, metrics, vdt, Config, Error, Factors, GapMethod, ObservationMask, Result, Tensor};

#[derive(Parser)]
#[command(name = "trbu", version, about = "Tensor ring completion over balanced unfoldings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random tensor ring as a DT1 tensor plus its factor file.
    Synth(SynthArgs),
    /// Complete a partially observed tensor.
    Complete(CompleteArgs),
    /// Recovery probability against sampling rate, per unfolding length.
    Curve(CurveArgs),
    /// Recovery rate over a (rank, sampling rate) grid.
    Phase(PhaseArgs),
    /// Print the incoherence profile of a tensor ring.
    Incoherence(IncoherenceArgs),
    /// Check the sampling-operator condition on a small tangent space.
    Certify(CertifyArgs),
    /// Convert between PPM images and DT1 tensors under a tensorization plan.
    Vdt(VdtArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    /// One rank for every bond, or one per bond.
    #[arg(long, value_delimiter = ',', required = true)]
    rank: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    factors: Option<PathBuf>,
}

#[derive(Args)]
struct SolverArgs {
    /// `key = value` solver configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter set: synthetic, image, nonuniform or video.
    #[arg(long)]
    preset: Option<String>,
    /// Row modes per unfolding.
    #[arg(long)]
    l: Option<usize>,
}

#[derive(Args)]
struct CompleteArgs {
    /// Observed tensor (DT1). With `--sr` it is also the ground truth.
    #[arg(long)]
    input: PathBuf,
    /// Observation mask, MK1 or binary PGM (zero pixels missing).
    #[arg(long, conflicts_with = "sr")]
    mask: Option<PathBuf>,
    /// Sample this fraction of the input uniformly instead of reading a mask.
    #[arg(long)]
    sr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ground truth for the reported relative error.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write zeros in timing columns.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct HarnessArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    trials: Option<usize>,
    /// 100 trials per point.
    #[arg(long, conflicts_with = "trials")]
    long: bool,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct CurveArgs {
    /// fig1a, fig1b, table2-a or table2-b.
    #[arg(long, conflicts_with_all = ["dims", "rank"])]
    preset: Option<String>,
    #[arg(long, value_delimiter = ',', requires = "rank")]
    dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', requires = "dims")]
    rank: Option<Vec<usize>>,
    /// Sampling rates; 0.05 to 0.95 in steps of 0.05 by default.
    #[arg(long, value_delimiter = ',')]
    sr: Option<Vec<f64>>,
    /// Only this unfolding length.
    #[arg(long)]
    l: Option<usize>,
    #[command(flatten)]
    harness: HarnessArgs,
}

#[derive(Args)]
struct PhaseArgs {
    /// fig2 or fig2-small.
    #[arg(long, default_value = "fig2-small")]
    preset: String,
    /// Write the grid's cell list without running any trials.
    #[arg(long)]
    dry_run: bool,
    /// Per-trial CSV.
    #[arg(long)]
    records: Option<PathBuf>,
    #[command(flatten)]
    harness: HarnessArgs,
}

#[derive(Args)]
struct IncoherenceArgs {
    /// Factor file; otherwise a random ring from `--dims`, `--rank`, `--seed`.
    #[arg(long, conflicts_with_all = ["dims", "rank"])]
    factors: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', requires = "rank")]
    dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', requires = "dims")]
    rank: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long, value_delimiter = ',', default_value = "8,8")]
    dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    rank: Vec<usize>,
    /// Bernoulli sampling probability.
    #[arg(long, default_value_t = 0.6)]
    sr: f64,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    l: Option<usize>,
}

#[derive(Args)]
struct VdtArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// kodim04, einstein or dyadic:K.
    #[arg(long)]
    plan: String,
    /// DT1 tensor back to a PPM image.
    #[arg(long)]
    inverse: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Complete(a) => complete(a),
        Command::Curve(a) => curve(a),
        Command::Phase(a) => phase(a),
        Command::Incoherence(a) => incoherence(a),
        Command::Certify(a) => certify(a),
        Command::Vdt(a) => vdt_cmd(a),
    }
}

/// Write through a sibling temporary so a failed run leaves no partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::from(e).at_path(&tmp))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::from(e).at_path(path))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn broadcast_ranks(rank: &[usize], d: usize) -> Result<Vec<usize>> {
    match rank.len() {
        1 => Ok(vec![rank[0]; d]),
        n if n == d => Ok(rank.to_vec()),
        n => Err(Error::InvalidArgument(format!("{n} ranks for an order-{d} tensor"))),
    }
}

fn read_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
    Config::parse(&text).map_err(|e| e.at_path(path))
}

fn solver_preset(name: &str) -> Result<Config> {
    let cfg = match name {
        "synthetic" => Config::synthetic(),
        "image" => Config::real_data().with_mu0(10f64.powf(-3.7)),
        "nonuniform" => Config::real_data().with_mu0(1e-3),
        "video" => Config {
            beta: 1.05,
            ..Config::real_data().with_mu0(10f64.powf(-3.7))
        },
        other => return Err(Error::InvalidArgument(format!("unknown solver preset {other:?}"))),
    };
    Ok(cfg)
}

fn solver_config(a: &SolverArgs) -> Result<Config> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(p), _) => read_config(p)?,
        (None, Some(name)) => solver_preset(name)?,
        (None, None) => Config::synthetic(),
    };
    if let Some(l) = a.l {
        cfg.len = Some(l);
    }
    Ok(cfg)
}

fn synth(a: SynthArgs) -> Result<()> {
    let ranks = broadcast_ranks(&a.rank, a.dims.len())?;
    let f = Factors::random(&a.dims, &ranks, a.seed)?;
    let t = f.synthesize();
    let bytes = io::encode_tensor(&t);
    let factor_bytes = a.factors.as_ref().map(|_| io::encode_factors(&f));
    write_atomic(&a.out, &bytes)?;
    if let (Some(p), Some(b)) = (&a.factors, factor_bytes) {
        write_atomic(p, &b)?;
    }
    println!("dims {:?} ranks {:?} state {}", a.dims, ranks, f.state());
    Ok(())
}

fn read_any_mask(path: &Path, dims: &[usize]) -> Result<ObservationMask> {
    let is_pgm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let mask = if is_pgm {
        let trailing = dims.get(2..).unwrap_or(&[]);
        io::read_pgm_mask(path, trailing)?
    } else {
        io::read_mask(path)?
    };
    if mask.dims() != dims {
        return Err(Error::InvalidArgument(format!(
            "mask dims {:?} do not match tensor dims {:?}",
            mask.dims(),
            dims
        ))
        .at_path(path));
    }
    Ok(mask)
}

fn complete(a: CompleteArgs) -> Result<()> {
    let input: Tensor = io::read_tensor(&a.input)?;
    let cfg = solver_config(&a.solver)?;
    let (mask, truth) = match (&a.mask, a.sr) {
        (Some(p), _) => (read_any_mask(p, input.dims())?, None),
        (None, Some(sr)) => {
            if !(sr > 0.0 && sr <= 1.0) {
                return Err(Error::InvalidArgument(format!("sampling rate {sr} outside (0, 1]")));
            }
            let m = trbu::sampling::samples_for_rate(input.len(), sr).max(1);
            (ObservationMask::uniform(input.dims(), m, a.seed)?, Some(input.clone()))
        }
        (None, None) => return Err(Error::InvalidArgument("need --mask or --sr".into())),
    };
    let truth = match &a.truth {
        Some(p) => Some(io::read_tensor::<f64>(p)?),
        None => truth,
    };
    let (x, mut trace) = trbu::solver::trbu_complete(&input, &mask, &cfg)?;
    if a.no_timing {
        trace.clear_timing();
    }
    write_atomic(&a.out, &io::encode_tensor(&x))?;
    if let Some(p) = &a.trace {
        write_atomic(p, trace.to_csv().as_bytes())?;
    }
    println!(
        "observed {} of {} entries, {} iterations ({:?})",
        mask.count(),
        mask.total(),
        trace.iterations(),
        trace.termination
    );
    if let Some(t) = truth {
        println!("re {:e}", metrics::relative_error(&x, &t)?);
    }
    Ok(())
}

fn trials(h: &HarnessArgs, default: usize) -> usize {
    if h.long {
        100
    } else {
        h.trials.unwrap_or(default)
    }
}

fn finish(mut report: ExperimentReport, h: &HarnessArgs, csv: impl Fn(&ExperimentReport) -> String) -> Result<ExperimentReport> {
    if h.no_timing {
        report.clear_timing();
    }
    emit(h.out.as_deref(), &csv(&report))?;
    Ok(report)
}

fn curve(a: CurveArgs) -> Result<()> {
    let mut spec = match (&a.preset, &a.dims, &a.rank) {
        (Some(name), _, _) => presets::curve(name)?,
        (None, Some(dims), Some(rank)) => {
            let ranks = broadcast_ranks(rank, dims.len())?;
            CurveSpec::new(dims.clone(), ranks, experiments::sr_steps(1, 19))
        }
        _ => return Err(Error::InvalidArgument("need --preset or --dims with --rank".into())),
    };
    if let Some(sr) = &a.sr {
        spec.sr_list = sr.clone();
    }
    if let Some(l) = a.l {
        spec.lens = vec![l];
    }
    if let Some(p) = &a.harness.config {
        spec.cfg = read_config(p)?;
    }
    let h = &a.harness;
    let n = trials(h, spec.trials);
    let spec = spec
        .with_trials(n)
        .with_seed(h.seed)
        .with_jobs(h.jobs);
    let report = finish(experiments::run_recovery_curve(&spec)?, h, ExperimentReport::curve_csv)?;
    for (l, sr, rate) in report.curve_summary() {
        eprintln!("l={l} sr={sr} success={rate}");
    }
    Ok(())
}

fn phase(a: PhaseArgs) -> Result<()> {
    let mut spec = presets::grid(&a.preset)?;
    if let Some(p) = &a.harness.config {
        spec.cfg = read_config(p)?;
    }
    let h = &a.harness;
    let n = trials(h, spec.trials);
    let spec = spec
        .with_trials(n)
        .with_seed(h.seed)
        .with_jobs(h.jobs);
    if a.dry_run {
        let mut s = String::from("r,sr\n");
        for r in &spec.r_list {
            for sr in &spec.sr_list {
                s.push_str(&format!("{r},{sr}\n"));
            }
        }
        return emit(h.out.as_deref(), &s);
    }
    let report = finish(experiments::run_phase_grid(&spec)?, h, ExperimentReport::grid_csv)?;
    if let Some(p) = &a.records {
        write_atomic(p, report.curve_csv().as_bytes())?;
    }
    Ok(())
}

fn incoherence(a: IncoherenceArgs) -> Result<()> {
    let f: Factors = match (&a.factors, &a.dims, &a.rank) {
        (Some(p), _, _) => io::read_factors(p)?,
        (None, Some(dims), Some(rank)) => Factors::random(dims, &broadcast_ranks(rank, dims.len())?, a.seed)?,
        _ => return Err(Error::InvalidArgument("need --factors or --dims with --rank".into())),
    };
    let p = f.incoherence_profile();
    println!("core,n,r_in,r_out,mu,bound_base");
    let (dims, ranks) = (f.dims(), f.ranks());
    for i in 0..f.order() {
        println!(
            "{i},{},{},{},{:.6},{:.6}",
            dims[i],
            ranks[i],
            ranks[(i + 1) % f.order()],
            p.mu[i],
            p.bound_base[i]
        );
    }
    Ok(())
}

fn certify(a: CertifyArgs) -> Result<()> {
    let d = a.dims.len();
    let ranks = broadcast_ranks(&a.rank, d)?;
    let len = a.l.unwrap_or(d.div_ceil(2));
    if len == 0 || len >= d {
        return Err(Error::InvalidArgument(format!("unfolding length {len} must lie in 1..{d}")));
    }
    if !(a.sr > 0.0 && a.sr <= 1.0) {
        return Err(Error::InvalidArgument(format!("probability {} outside (0, 1]", a.sr)));
    }
    let bound = a.sr / 2.0;
    let mut hold = 0;
    println!("seed,gap,holds");
    for k in 0..a.trials {
        let seed = a.seed.wrapping_add(k);
        let f = Factors::random(&a.dims, &ranks, seed)?;
        let ts = trbu::TangentSpace::from_tensor(&f.synthesize(), 0, len, Some(ranks[0] * ranks[len]))?;
        let mask = ObservationMask::bernoulli(&a.dims, a.sr, experiments::mask_seed(seed))?;
        let gap = ts.condition_gap(&mask, a.sr, GapMethod::default())?;
        let ok = gap <= bound;
        hold += ok as usize;
        println!("{seed},{gap:.6},{}", ok as u8);
    }
    eprintln!("gap <= p/2 = {bound} in {hold}/{} draws", a.trials);
    Ok(())
}

fn parse_plan(name: &str) -> Result<vdt::VdtPlan> {
    match name {
        "kodim04" => Ok(vdt::VdtPlan::kodim04()),
        "einstein" => Ok(vdt::VdtPlan::einstein()),
        other => match other.strip_prefix("dyadic:").map(str::parse::<usize>) {
            Some(Ok(k)) if k > 0 => vdt::VdtPlan::dyadic(k, vec![3]),
            _ => Err(Error::InvalidArgument(format!(
                "unknown plan {other:?}; use kodim04, einstein or dyadic:K"
            ))),
        },
    }
}

fn vdt_cmd(a: VdtArgs) -> Result<()> {
    let plan = parse_plan(&a.plan)?;
    if a.inverse {
        let t: Tensor = io::read_tensor(&a.input)?;
        let img = vdt::vdt_inverse(&t, &plan)?;
        write_atomic(&a.out, &io::encode_ppm(&img)?)?;
        println!("{:?} -> {:?}", t.dims(), img.dims());
    } else {
        let img: Tensor = io::read_ppm(&a.input)?;
        let t = vdt::vdt_forward(&img, &plan)?;
        write_atomic(&a.out, &io::encode_tensor(&t))?;
        println!("{:?} -> {:?}", img.dims(), t.dims());
    }
    Ok(())
}
