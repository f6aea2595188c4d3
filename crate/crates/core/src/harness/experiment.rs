//! Monte Carlo rate experiments over grids of sample sizes and budgets.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::densities::TestDensity;
use super::stats::{log_log_slope, summarize, SlopeFit};
use crate::adaptive::{candidate_levels, lepski_select, oracle_resolution, LepskiConfig};
use crate::bundle::ReleaseBundle;
use crate::error::{Error, Result};
use crate::estimators::{resolve_clamped, spline_estimate, wavelet_estimate, DensityEstimate, ResolutionRule};
use crate::functionals::FunctionalSpec;
use crate::privacy::{plan_spline_noise, Features, plan_wavelet_noise, release, simulate_release, MechanismKind, NoisePlan};
use crate::quadrature::{uniform_breaks, GaussLegendre};
use crate::splines::BSplineBasis;
use crate::wavelets::{base_level, MultiresolutionLadder};

/// Stream for replication `rep` of grid cell `cell`.
pub fn replication_rng(master: u64, cell: u64, rep: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream((cell << 32) | rep);
    rng
}

/// What is measured per replication.
#[derive(Debug, Clone)]
pub enum Loss {
    /// `|Lambda(f_n) - Lambda(f)|`.
    Functional(FunctionalSpec),
    /// `||f_n - f||_2^2`.
    L2Squared,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    /// Rule-based level; the mechanism decides between the atomic variants.
    Rule(ResolutionRule),
    Fixed(u32),
    Adaptive(LepskiConfig),
    /// Oracle level from the known density.
    Oracle { p: f64, s_max: usize },
}

/// How aggregates are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReleaseMode {
    /// Per-record sanitization and averaging.
    Records,
    /// Clean feature means plus the exact law of averaged Laplace noise.
    Simulated,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub density: String,
    pub mechanism: MechanismKind,
    pub loss: Loss,
    pub degree: usize,
    pub n_values: Vec<u64>,
    pub alphas: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub a: f64,
    pub selection: Selection,
    pub release: ReleaseMode,
    pub record_timing: bool,
    /// Textual form of each setting, echoed in reports.
    echo: BTreeMap<String, String>,
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse '{s}'"))))
        .collect()
}

fn parse_n(v: &str) -> Result<u64> {
    let v = v.trim();
    if let Some(e) = v.strip_prefix("2^") {
        let e: u32 = e.parse().map_err(|_| Error::InvalidParameter(format!("n: cannot parse '{v}'")))?;
        return 1u64.checked_shl(e).ok_or_else(|| Error::InvalidParameter(format!("n: {v} too large")));
    }
    v.parse().map_err(|_| Error::InvalidParameter(format!("n: cannot parse '{v}'")))
}

fn kv(args: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for part in args.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("expected key=value in '{part}'")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::InvalidParameter(format!("{k}: not a number")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

impl Selection {
    /// `atomic:p=2`, `smooth:p=3,m=0,a_prime=0.3`, `fixed:j=3`,
    /// `adaptive:tau=1,s_max=1` or `oracle:p=2,s_max=1`.
    pub fn parse(s: &str, mechanism: MechanismKind, a: f64) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let p = kv(args)?;
        let need = |k: &str| p.get(k).copied().ok_or_else(|| Error::InvalidParameter(format!("{name} needs {k}")));
        let or = |k: &str, d: f64| p.get(k).copied().unwrap_or(d);
        Ok(match name {
            "atomic" => Selection::Rule(match mechanism {
                MechanismKind::Spline => ResolutionRule::AtomicSpline { p: need("p")? },
                MechanismKind::Wavelet => ResolutionRule::AtomicWavelet { p: need("p")?, a },
            }),
            "smooth" => {
                if mechanism != MechanismKind::Wavelet {
                    return Err(Error::InvalidParameter("the smooth rule needs the wavelet mechanism".into()));
                }
                Selection::Rule(ResolutionRule::SmoothWavelet {
                    p: need("p")?,
                    m: or("m", 0.0) as u32,
                    a,
                    a_prime: or("a_prime", 0.3),
                })
            }
            "fixed" => Selection::Fixed(need("j")? as u32),
            "adaptive" => {
                let d = LepskiConfig::default();
                Selection::Adaptive(LepskiConfig {
                    tau: or("tau", d.tau),
                    s_max: or("s_max", d.s_max as f64) as usize,
                    a,
                    grid: p.get("grid").map(|g| *g as usize),
                })
            }
            "oracle" => Selection::Oracle { p: need("p")?, s_max: or("s_max", 1.0) as usize },
            other => return Err(Error::InvalidParameter(format!("unknown selection '{other}'"))),
        })
    }
}

impl ExperimentConfig {
    /// Reads `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("line {}: expected key = value", i + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_map(map)
    }

    pub fn from_map(map: BTreeMap<String, String>) -> Result<Self> {
        const KEYS: &[&str] = &[
            "density", "mechanism", "functional", "degree", "n", "alpha", "reps", "seed", "a", "selection", "release",
            "timing",
        ];
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::InvalidParameter(format!("unknown config key '{k}'")));
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let need = |k: &str| get(k).ok_or_else(|| Error::InvalidParameter(format!("config needs '{k}'")));
        let mechanism: MechanismKind = get("mechanism").unwrap_or("wavelet").parse()?;
        let a: f64 = get("a").map_or(Ok(2.0), |v| v.parse().map_err(|_| Error::InvalidParameter("a".into())))?;
        let loss = match get("functional").unwrap_or("l2") {
            "l2" => Loss::L2Squared,
            id => Loss::Functional(FunctionalSpec::parse(id)?),
        };
        let degree: usize =
            get("degree").map_or(Ok(3), |v| v.parse().map_err(|_| Error::InvalidParameter("degree".into())))?;
        let n_values = need("n")?.split(',').map(parse_n).collect::<Result<Vec<_>>>()?;
        let alphas = parse_list::<f64>("alpha", get("alpha").unwrap_or("1"))?;
        let reps: usize =
            get("reps").map_or(Ok(100), |v| v.parse().map_err(|_| Error::InvalidParameter("reps".into())))?;
        let seed: u64 = get("seed").map_or(Ok(1), |v| v.parse().map_err(|_| Error::InvalidParameter("seed".into())))?;
        let selection = Selection::parse(need("selection")?, mechanism, a)?;
        let release = match get("release").unwrap_or("simulated") {
            "simulated" => ReleaseMode::Simulated,
            "records" => ReleaseMode::Records,
            other => return Err(Error::InvalidParameter(format!("unknown release mode '{other}'"))),
        };
        let record_timing = match get("timing").unwrap_or("true") {
            "true" => true,
            "false" => false,
            other => return Err(Error::InvalidParameter(format!("timing must be true or false, got '{other}'"))),
        };
        let cfg = Self {
            density: need("density")?.to_string(),
            mechanism,
            loss,
            degree,
            n_values,
            alphas,
            reps,
            seed,
            a,
            selection,
            release,
            record_timing,
            echo: map,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds a config from typed settings (the echo is generated).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        density: &str,
        mechanism: MechanismKind,
        loss: Loss,
        degree: usize,
        n_values: Vec<u64>,
        alphas: Vec<f64>,
        reps: usize,
        seed: u64,
        a: f64,
        selection: Selection,
    ) -> Result<Self> {
        let mut echo = BTreeMap::new();
        echo.insert("density".into(), density.to_string());
        echo.insert("mechanism".into(), mechanism.to_string());
        echo.insert(
            "functional".into(),
            match &loss {
                Loss::L2Squared => "l2".into(),
                Loss::Functional(s) => s.id(),
            },
        );
        echo.insert("degree".into(), degree.to_string());
        echo.insert("n".into(), n_values.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
        echo.insert("alpha".into(), alphas.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        echo.insert("reps".into(), reps.to_string());
        echo.insert("seed".into(), seed.to_string());
        echo.insert("a".into(), a.to_string());
        echo.insert("selection".into(), format!("{selection:?}"));
        let cfg = Self {
            density: density.to_string(),
            mechanism,
            loss,
            degree,
            n_values,
            alphas,
            reps,
            seed,
            a,
            selection,
            release: ReleaseMode::Simulated,
            record_timing: true,
            echo,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_release(mut self, mode: ReleaseMode) -> Self {
        self.release = mode;
        self.echo.insert("release".into(), format!("{mode:?}").to_lowercase());
        self
    }

    pub fn with_timing(mut self, on: bool) -> Self {
        self.record_timing = on;
        self.echo.insert("timing".into(), on.to_string());
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.n_values.iter().any(|&n| n < 2) {
            return Err(Error::InvalidParameter("every n must be at least 2".into()));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidBudget(self.alphas.first().copied().unwrap_or(0.0)));
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be positive".into()));
        }
        if self.mechanism == MechanismKind::Wavelet && self.degree == 0 {
            return Err(Error::InvalidParameter("the wavelet mechanism needs degree >= 1".into()));
        }
        if matches!(self.selection, Selection::Adaptive(_) | Selection::Oracle { .. })
            && self.mechanism != MechanismKind::Wavelet
        {
            return Err(Error::InvalidParameter("adaptive and oracle selection need the wavelet mechanism".into()));
        }
        Ok(())
    }

    /// One-line JSON echo of the settings.
    pub fn echo_json(&self) -> String {
        serde_json::to_string(&self.echo).expect("string map serializes")
    }
}

/// Results of one `(n, alpha)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub n: u64,
    pub alpha: f64,
    /// Level used, or the most frequent selected level.
    pub jn: u32,
    pub mean_abs_err: f64,
    pub stderr: f64,
    /// Mean of the signed error (functional loss only; zero otherwise).
    pub bias: f64,
    /// Plain variance of the signed error.
    pub variance: f64,
    pub mse: f64,
    pub runtime_ms: u128,
    /// The rule's window was empty or clamped, so a fallback level was used.
    pub flagged: bool,
    /// Count of replications per selected level.
    pub selected: BTreeMap<u32, usize>,
    /// Adaptive runs: oracle level, mean oracle loss, and the fraction of
    /// replications selecting above the oracle.
    pub oracle: Option<OracleComparison>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleComparison {
    pub j_star: u32,
    pub mean_loss: f64,
    pub overshoot: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config_echo: String,
    pub truth: Option<f64>,
    pub cells: Vec<CellResult>,
    /// Slope of log mean loss against log n for each alpha.
    pub slopes: Vec<(f64, Option<SlopeFit>)>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# {}\n", self.config_echo);
        s.push_str("n,alpha,jn,mean_abs_err,stderr,runtime_ms\n");
        for c in &self.cells {
            writeln!(s, "{},{},{},{},{},{}", c.n, c.alpha, c.jn, c.mean_abs_err, c.stderr, c.runtime_ms)
                .expect("write to string");
        }
        s
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        out.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn slope(&self, alpha: f64) -> Option<SlopeFit> {
        self.slopes.iter().find(|(a, _)| *a == alpha).and_then(|(_, f)| *f)
    }
}

struct Shared {
    density: TestDensity,
    ladder: Option<Arc<MultiresolutionLadder>>,
    truth: Option<f64>,
}

/// `int (f_n - f)^2` on the estimate's mesh (at least 256 cells).
pub fn l2_squared_error(est: &DensityEstimate, density: &TestDensity) -> f64 {
    let cells = est.piecewise().cells().max(256);
    let gl = GaussLegendre::new(est.degree() + 6);
    gl.integrate_cells(&uniform_breaks(cells), |x| {
        let e = est.value_unchecked(x, 0) - density.value(x);
        e * e
    })
}

fn top_level_needed(cfg: &ExperimentConfig) -> Result<u32> {
    let j0 = base_level(cfg.degree.max(1));
    let mut top = j0 - 1;
    for &n in &cfg.n_values {
        for &alpha in &cfg.alphas {
            let j = match cfg.selection {
                Selection::Rule(rule) => resolve_clamped(rule, n, alpha, 0, 30)?.0,
                Selection::Fixed(j) => j,
                Selection::Adaptive(_) | Selection::Oracle { .. } => *candidate_levels(n, j0).end(),
            };
            top = top.max(j);
        }
    }
    Ok(top)
}

/// Sweeps the `(alpha, n)` grid with `reps` replications per cell.
pub fn run_rate_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let density = TestDensity::parse(&cfg.density)?;
    let truth = match &cfg.loss {
        Loss::Functional(spec) => Some(density.oracle(spec)?),
        Loss::L2Squared => None,
    };
    let ladder = match cfg.mechanism {
        MechanismKind::Wavelet => Some(Arc::new(MultiresolutionLadder::new(cfg.degree, top_level_needed(cfg)?)?)),
        MechanismKind::Spline => None,
    };
    let shared = Shared { density, ladder, truth };
    let mut cells = Vec::new();
    let mut index = 0u64;
    for &alpha in &cfg.alphas {
        for &n in &cfg.n_values {
            cells.push(run_cell(cfg, &shared, index, n, alpha)?);
            index += 1;
        }
    }
    let slopes = cfg
        .alphas
        .iter()
        .map(|&alpha| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = cells
                .iter()
                .filter(|c| c.alpha == alpha && c.mean_abs_err > 0.0)
                .map(|c| (c.n as f64, c.mean_abs_err))
                .unzip();
            (alpha, log_log_slope(&xs, &ys))
        })
        .collect();
    Ok(ExperimentReport { config_echo: cfg.echo_json(), truth: shared.truth, cells, slopes })
}

struct Replication {
    signed: f64,
    loss: f64,
    level: u32,
    oracle_loss: Option<f64>,
}

fn run_cell(cfg: &ExperimentConfig, shared: &Shared, cell: u64, n: u64, alpha: f64) -> Result<CellResult> {
    let start = Instant::now();
    let (fixed_level, flagged) = match cfg.selection {
        Selection::Rule(rule) => {
            let floor = match cfg.mechanism {
                MechanismKind::Spline => 0,
                MechanismKind::Wavelet => base_level(cfg.degree) - 1,
            };
            let (j, flag) = resolve_clamped(rule, n, alpha, floor, 30)?;
            if flag {
                log::info!("n = {n}, alpha = {alpha}: resolution rule overridden, using level {j}");
            }
            (Some(j), flag && matches!(rule, ResolutionRule::SmoothWavelet { .. }))
        }
        Selection::Fixed(j) => (Some(j), false),
        _ => (None, false),
    };
    let j_star = match (&cfg.selection, &shared.ladder) {
        (Selection::Adaptive(l), Some(ladder)) => {
            let p = shared.density.smoothness() as f64;
            Some(oracle_resolution(&shared.density.derivatives(), ladder, n, alpha, cfg.a, p.max(1.0), l.s_max)?)
        }
        (Selection::Oracle { p, s_max }, Some(ladder)) => {
            Some(oracle_resolution(&shared.density.derivatives(), ladder, n, alpha, cfg.a, *p, *s_max)?)
        }
        _ => None,
    };
    let plan: NoisePlan = match cfg.mechanism {
        MechanismKind::Spline => {
            let j = fixed_level.expect("spline runs use a fixed or rule level");
            plan_spline_noise(&Arc::new(BSplineBasis::new(j, cfg.degree)?), alpha)?
        }
        MechanismKind::Wavelet => plan_wavelet_noise(shared.ladder.as_ref().expect("ladder built"), alpha, cfg.a)?,
    };
    let reps: Vec<Replication> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(cfg.seed, cell, rep);
            let samples = shared.density.sample(n as usize, &mut rng);
            let bundle: ReleaseBundle = match cfg.release {
                ReleaseMode::Simulated => simulate_release(&samples, &plan, &mut rng)?,
                ReleaseMode::Records => release(&samples, &plan, rand::RngCore::next_u64(&mut rng), false)?,
            };
            let (est, level) = match (cfg.mechanism, &cfg.selection) {
                (MechanismKind::Spline, _) => {
                    let Features::Spline(basis) = plan.features() else { unreachable!("spline plan") };
                    (spline_estimate(&bundle, basis)?, basis.level())
                }
                (MechanismKind::Wavelet, Selection::Adaptive(lc)) => {
                    let ladder = shared.ladder.as_ref().expect("ladder built");
                    let (j, _) = lepski_select(&bundle, ladder, n, alpha, lc)?;
                    (wavelet_estimate(&bundle, ladder, j)?, j)
                }
                (MechanismKind::Wavelet, Selection::Oracle { .. }) => {
                    let ladder = shared.ladder.as_ref().expect("ladder built");
                    let j = j_star.expect("oracle level");
                    (wavelet_estimate(&bundle, ladder, j)?, j)
                }
                (MechanismKind::Wavelet, _) => {
                    let ladder = shared.ladder.as_ref().expect("ladder built");
                    let j = fixed_level.expect("level");
                    (wavelet_estimate(&bundle, ladder, j)?, j)
                }
            };
            let (signed, loss) = evaluate_loss(cfg, shared, &est)?;
            let oracle_loss = match (&cfg.selection, j_star) {
                (Selection::Adaptive(_), Some(js)) => {
                    let ladder = shared.ladder.as_ref().expect("ladder built");
                    Some(evaluate_loss(cfg, shared, &wavelet_estimate(&bundle, ladder, js)?)?.1)
                }
                _ => None,
            };
            Ok(Replication { signed, loss, level, oracle_loss })
        })
        .collect::<Result<_>>()?;
    let losses: Vec<f64> = reps.iter().map(|r| r.loss).collect();
    let signed: Vec<f64> = reps.iter().map(|r| r.signed).collect();
    let ls = summarize(&losses);
    let ss = summarize(&signed);
    let mse = signed.iter().map(|e| e * e).sum::<f64>() / signed.len() as f64;
    let mut selected = BTreeMap::new();
    for r in &reps {
        *selected.entry(r.level).or_insert(0) += 1;
    }
    let jn = selected.iter().max_by_key(|(j, c)| (**c, std::cmp::Reverse(**j))).map(|(j, _)| *j).unwrap_or(0);
    let oracle = j_star.filter(|_| matches!(cfg.selection, Selection::Adaptive(_))).map(|js| {
        let ol: Vec<f64> = reps.iter().filter_map(|r| r.oracle_loss).collect();
        OracleComparison {
            j_star: js,
            mean_loss: summarize(&ol).mean,
            overshoot: reps.iter().filter(|r| r.level > js).count() as f64 / reps.len() as f64,
        }
    });
    Ok(CellResult {
        n,
        alpha,
        jn,
        mean_abs_err: ls.mean,
        stderr: ls.stderr,
        bias: ss.mean,
        variance: ss.variance,
        mse,
        runtime_ms: if cfg.record_timing { start.elapsed().as_millis() } else { 0 },
        flagged,
        selected,
        oracle,
    })
}

fn evaluate_loss(cfg: &ExperimentConfig, shared: &Shared, est: &DensityEstimate) -> Result<(f64, f64)> {
    match &cfg.loss {
        Loss::Functional(spec) => {
            let e = spec.evaluate(est)?.value - shared.truth.expect("truth computed");
            Ok((e, e.abs()))
        }
        Loss::L2Squared => {
            let e = l2_squared_error(est, &shared.density);
            Ok((e.sqrt(), e))
        }
    }
}

/// Chosen `tau` (if any) and the `(tau, overshoot frequency)` pairs tried.
pub type TauCalibration = (Option<f64>, Vec<(f64, f64)>);

/// Smallest `tau` in `candidates` (ascending) whose overshoot frequency over
/// `reps` replications is at most `level`, with the overshoot frequencies.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_tau(
    density: &str,
    degree: usize,
    n: u64,
    alpha: f64,
    a: f64,
    s_max: usize,
    candidates: &[f64],
    reps: usize,
    seed: u64,
    level: f64,
) -> Result<TauCalibration> {
    let mut freqs = Vec::new();
    for &tau in candidates {
        let cfg = ExperimentConfig::new(
            density,
            MechanismKind::Wavelet,
            Loss::L2Squared,
            degree,
            vec![n],
            vec![alpha],
            reps,
            seed,
            a,
            Selection::Adaptive(LepskiConfig { tau, s_max, a, grid: None }),
        )?;
        let report = run_rate_experiment(&cfg)?;
        let over = report.cells[0].oracle.map_or(0.0, |o| o.overshoot);
        freqs.push((tau, over));
        if over <= level {
            return Ok((Some(tau), freqs));
        }
    }
    Ok((None, freqs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(selection: &str, mechanism: &str) -> ExperimentConfig {
        ExperimentConfig::parse(&format!(
            "density = sine-mix\nmechanism = {mechanism}\nfunctional = point:r=0,x0=0.5\n\
             n = 2^8, 2^10\nalpha = 1\nreps = 8\nseed = 3\nselection = {selection}\ntiming = false\n"
        ))
        .unwrap()
    }

    #[test]
    fn reports_are_reproducible() {
        let cfg = small("atomic:p=2", "wavelet");
        let a = run_rate_experiment(&cfg).unwrap().to_csv();
        let b = run_rate_experiment(&cfg).unwrap().to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with("# {"));
        assert_eq!(a.lines().count(), 4);
    }

    #[test]
    fn mse_is_bias_squared_plus_variance() {
        let report = run_rate_experiment(&small("atomic:p=2", "spline")).unwrap();
        for c in &report.cells {
            let diff = c.mse - (c.bias * c.bias + c.variance);
            assert!(diff.abs() <= 1e-12 * c.mse.max(1.0), "{diff}");
        }
    }

    #[test]
    fn adaptive_cells_carry_oracle() {
        let report = run_rate_experiment(&small("adaptive:tau=1", "wavelet")).unwrap();
        assert!(report.cells.iter().all(|c| c.oracle.is_some()));
    }

    #[test]
    fn config_errors() {
        assert!(ExperimentConfig::parse("density = uniform\nn = 10\nselection = fixed:j=2\nbogus = 1").is_err());
        assert!(ExperimentConfig::parse("density = uniform\nselection = fixed:j=2").is_err());
        assert!(ExperimentConfig::parse("density = uniform\nn = 10\nselection = smooth:p=3\nmechanism = spline").is_err());
        assert!(ExperimentConfig::parse("density = uniform\nn = 10\nalpha = -1\nselection = fixed:j=2").is_err());
    }
}
