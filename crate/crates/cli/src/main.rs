use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ldpspline::estimators::resolve_clamped;
use ldpspline::harness::experiment::{run_rate_experiment, ExperimentConfig};
use ldpspline::wavelets::base_level;
use ldpspline::{
    adaptive_estimate, audit_privacy, plan_spline_noise, plan_wavelet_noise, release, spline_estimate,
    wavelet_estimate, BSplineBasis, DensityEstimate, FunctionalSpec, LepskiConfig, MechanismKind,
    MultiresolutionLadder, NoisePlan, ReleaseBundle, ResolutionRule, DEFAULT_TAU,
};

#[derive(Parser)]
#[command(name = "ldpspline", version, about = "Locally private density release and plug-in estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sanitize a raw sample file into a release bundle.
    Release(ReleaseArgs),
    /// Evaluate the density estimate of a bundle on a grid.
    Estimate(EstimateArgs),
    /// Plug-in value of a functional.
    Functional(FunctionalArgs),
    /// Lepski resolution selection on a wavelet bundle.
    Adapt(AdaptArgs),
    /// Worst-case likelihood ratio of a mechanism.
    Audit(AuditArgs),
    /// Run a rate experiment from a config file.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, default_value = "wavelet")]
    mechanism: MechanismKind,
    #[arg(long, default_value_t = 3)]
    degree: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Level-weight exponent of the wavelet mechanism.
    #[arg(long = "a-exp", default_value_t = 2.0)]
    a_exp: f64,
    /// Top wavelet level, or the spline level.
    #[arg(long, default_value_t = 6)]
    jmax: u32,
}

impl PlanArgs {
    fn plan(&self) -> Result<NoisePlan> {
        Ok(match self.mechanism {
            MechanismKind::Spline => plan_spline_noise(&Arc::new(BSplineBasis::new(self.jmax, self.degree)?), self.alpha)?,
            MechanismKind::Wavelet => plan_wavelet_noise(
                &Arc::new(MultiresolutionLadder::new(self.degree, self.jmax)?),
                self.alpha,
                self.a_exp,
            )?,
        })
    }
}

#[derive(Args)]
struct ReleaseArgs {
    /// One sample in [0, 1] per line.
    input: PathBuf,
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Store the sanitized records alongside the aggregate.
    #[arg(long)]
    keep_records: bool,
}

#[derive(Args)]
struct LevelArgs {
    /// Resolution level (wavelet bundles).
    #[arg(long, conflicts_with = "rule")]
    jn: Option<u32>,
    /// Rule-based level: `p` for the atomic rule, `p/m` for the smooth rule.
    #[arg(long)]
    rule: Option<String>,
}

#[derive(Args)]
struct EstimateArgs {
    bundle: PathBuf,
    #[command(flatten)]
    level: LevelArgs,
    #[arg(long, default_value_t = 1001)]
    points: usize,
    /// Highest derivative written.
    #[arg(long, default_value_t = 0)]
    derivs: usize,
    /// Curve CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FunctionalArgs {
    bundle: PathBuf,
    /// Functional identifier, e.g. `entropy` or `point:r=1,x0=0.5`.
    functional: String,
    #[command(flatten)]
    level: LevelArgs,
}

#[derive(Args)]
struct AdaptArgs {
    bundle: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = 1)]
    smax: usize,
    /// Number of grid intervals for the sup statistic.
    #[arg(long)]
    grid: Option<usize>,
    /// Comparison trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Curve CSV of the selected estimate.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long, default_value_t = 4096)]
    grid: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    config: PathBuf,
    /// Report CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_samples(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let x: f64 = line.parse().with_context(|| format!("{}:{}: not a number", path.display(), i + 1))?;
        if !(0.0..=1.0).contains(&x) {
            bail!("{}:{}: sample {x} outside [0, 1]", path.display(), i + 1);
        }
        out.push(x);
    }
    if out.is_empty() {
        bail!("{} holds no samples", path.display());
    }
    Ok(out)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load(path: &Path) -> Result<ReleaseBundle> {
    ReleaseBundle::load(path).with_context(|| format!("loading {}", path.display()))
}

fn parse_rule(s: &str, mechanism: MechanismKind, a: f64) -> Result<ResolutionRule> {
    let num = |v: &str| v.trim().parse::<f64>().with_context(|| format!("bad rule '{s}'"));
    Ok(match s.split_once('/') {
        None => match mechanism {
            MechanismKind::Spline => ResolutionRule::AtomicSpline { p: num(s)? },
            MechanismKind::Wavelet => ResolutionRule::AtomicWavelet { p: num(s)?, a },
        },
        Some((p, m)) => {
            if mechanism != MechanismKind::Wavelet {
                bail!("the smooth rule needs a wavelet bundle");
            }
            ResolutionRule::SmoothWavelet { p: num(p)?, m: num(m)? as u32, a, a_prime: 0.3 }
        }
    })
}

fn estimate_from(bundle: &ReleaseBundle, level: &LevelArgs) -> Result<DensityEstimate> {
    match bundle.mechanism {
        MechanismKind::Spline => {
            let requested = match (&level.jn, &level.rule) {
                (Some(j), _) => Some(*j),
                (None, Some(r)) => Some(ldpspline::choose_resolution(
                    parse_rule(r, MechanismKind::Spline, 0.0)?,
                    bundle.n,
                    bundle.alpha,
                )?),
                _ => None,
            };
            if let Some(j) = requested.filter(|&j| j != bundle.j_max) {
                bail!("spline bundle was released at level {}, not {j}", bundle.j_max);
            }
            let basis = Arc::new(BSplineBasis::new(bundle.j_max, bundle.degree)?);
            Ok(spline_estimate(bundle, &basis)?)
        }
        MechanismKind::Wavelet => {
            let a = bundle.level_weight.context("wavelet bundle without level weight")?;
            let floor = base_level(bundle.degree) - 1;
            let j = match (&level.jn, &level.rule) {
                (Some(j), _) => *j,
                (None, Some(r)) => {
                    let (j, overridden) =
                        resolve_clamped(parse_rule(r, MechanismKind::Wavelet, a)?, bundle.n, bundle.alpha, floor, bundle.j_max)?;
                    if overridden {
                        eprintln!("note: rule level clamped to {j}");
                    }
                    j
                }
                _ => bundle.j_max,
            };
            let ladder = Arc::new(MultiresolutionLadder::new(bundle.degree, j.max(floor))?);
            Ok(wavelet_estimate(bundle, &ladder, j)?)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Release(args) => {
            let samples = read_samples(&args.input)?;
            let plan = args.plan.plan()?;
            let bundle = release(&samples, &plan, args.seed, args.keep_records)?;
            bundle.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
        }
        Command::Estimate(args) => {
            let est = estimate_from(&load(&args.bundle)?, &args.level)?;
            let mut out = output(args.out.as_deref())?;
            est.write_curve_csv(&mut out, args.points, args.derivs)?;
            out.flush()?;
        }
        Command::Functional(args) => {
            let spec = FunctionalSpec::parse(&args.functional)?;
            let est = estimate_from(&load(&args.bundle)?, &args.level)?;
            let eval = spec.evaluate(&est)?;
            if eval.floor_active {
                eprintln!("note: density floor {} was active", spec.floor);
            }
            println!("{}", eval.value);
        }
        Command::Adapt(args) => {
            let bundle = load(&args.bundle)?;
            if bundle.mechanism != MechanismKind::Wavelet {
                bail!("adaptive selection needs a wavelet bundle");
            }
            let a = bundle.level_weight.context("wavelet bundle without level weight")?;
            let cfg = LepskiConfig { tau: args.tau, s_max: args.smax, a, grid: args.grid };
            let ladder = Arc::new(MultiresolutionLadder::new(bundle.degree, bundle.j_max)?);
            let (est, trace) = adaptive_estimate(&bundle, &ladder, bundle.n, bundle.alpha, &cfg)?;
            println!("{}", trace.selected);
            if let Some(p) = &args.trace {
                trace.write_csv(output(Some(p))?)?;
            }
            if let Some(p) = &args.out {
                let mut out = output(Some(p))?;
                est.write_curve_csv(&mut out, 1001, 0)?;
                out.flush()?;
            }
        }
        Command::Audit(args) => {
            let plan = args.plan.plan()?;
            let ratio = audit_privacy(&plan, args.grid);
            println!("max_ratio {ratio}");
            println!("alpha {}", args.plan.alpha);
            if ratio > args.plan.alpha * (1.0 + 1e-12) {
                bail!("privacy bound violated: {ratio} > {}", args.plan.alpha);
            }
        }
        Command::Experiment(args) => {
            let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
            let report = run_rate_experiment(&ExperimentConfig::parse(&text)?)?;
            let mut out = output(args.out.as_deref())?;
            report.write_csv(&mut out)?;
            out.flush()?;
            for (alpha, fit) in &report.slopes {
                if let Some(f) = fit {
                    eprintln!("alpha {alpha}: slope {:.4} [{:.4}, {:.4}]", f.slope, f.ci_low, f.ci_high);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
