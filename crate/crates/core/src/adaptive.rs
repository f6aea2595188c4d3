//! Data-driven choice of the wavelet truncation level by pairwise
//! comparison of estimates, plus the oracle level for simulations.

use std::io::Write;
use std::ops::RangeInclusive;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bundle::ReleaseBundle;
use crate::error::{Error, Result};
use crate::estimators::{wavelet_estimate, DensityEstimate};
use crate::functionals::Derivatives;
use crate::poly::PiecewisePolynomial;
use crate::splines::{l2_project, BSplineBasis};
use crate::wavelets::MultiresolutionLadder;

/// Threshold constant: the smallest power of two with at most 5% overshoot
/// over 200 replications on `poly-density` (n = 2^13, alpha = 1, d = 3,
/// a = 2, s_max = 1, seed 5). See [`calibrate_tau`](crate::harness::experiment::calibrate_tau).
pub const DEFAULT_TAU: f64 = 268_435_456.0;

/// Upper limit on the comparison grid size.
pub const GRID_CAP: usize = 1 << 18;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LepskiConfig {
    pub tau: f64,
    /// Derivatives `0..=s_max` are compared; needs `s_max <= d - 2`.
    pub s_max: usize,
    /// Level-weight exponent used in the threshold.
    pub a: f64,
    /// Grid size override; `None` uses `min(n^{4/3}, GRID_CAP)`.
    pub grid: Option<usize>,
}

impl Default for LepskiConfig {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU, s_max: 1, a: 2.0, grid: None }
    }
}

/// `{max(1, j0 - 1), ..., max(floor(ln n / 3), j0 - 1)}`.
pub fn candidate_levels(n: u64, j0: u32) -> RangeInclusive<u32> {
    let lo = (j0 - 1).max(1);
    let top = ((n.max(1) as f64).ln() / 3.0).floor() as u32;
    lo..=top.max(lo)
}

/// `min(ceil(n^{4/3}), GRID_CAP)`.
pub fn default_grid_size(n: u64) -> usize {
    let m = (n as f64).powf(4.0 / 3.0).ceil();
    if m >= GRID_CAP as f64 {
        GRID_CAP
    } else {
        (m as usize).max(1)
    }
}

/// `n^{-1} 2^{2ls} l (2^l + 2^{2l} l^{2a} alpha^{-2})`, the variance proxy.
pub fn variance_proxy(n: u64, alpha: f64, a: f64, l: u32, s: usize) -> f64 {
    let lf = l as f64;
    let two_l = lf.exp2();
    (2.0 * lf * s as f64).exp2() * lf * (two_l + two_l * two_l * lf.powf(2.0 * a) / (alpha * alpha)) / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub j: u32,
    pub l: u32,
    pub s: usize,
    pub l2: f64,
    pub grid: f64,
    pub threshold: f64,
}

impl Comparison {
    pub fn passes(&self) -> bool {
        self.l2 <= self.threshold && self.grid <= self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LepskiTrace {
    pub candidates: Vec<u32>,
    pub comparisons: Vec<Comparison>,
    pub selected: u32,
}

impl LepskiTrace {
    /// Whether every comparison of `j` against higher candidates passes.
    pub fn admissible(&self, j: u32) -> bool {
        self.comparisons.iter().filter(|c| c.j == j).all(Comparison::passes)
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "j,l,s,l2_stat,grid_stat,threshold,pass")?;
        for c in &self.comparisons {
            writeln!(out, "{},{},{},{},{},{},{}", c.j, c.l, c.s, c.l2, c.grid, c.threshold, c.passes())?;
        }
        Ok(())
    }
}

fn check_config(cfg: &LepskiConfig, ladder: &MultiresolutionLadder) -> Result<()> {
    if !(cfg.tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {}", cfg.tau)));
    }
    if cfg.s_max + 2 > ladder.degree() {
        return Err(Error::UnsupportedDerivative {
            order: cfg.s_max,
            degree: ladder.degree(),
            max: ladder.degree().saturating_sub(2),
        });
    }
    if !(cfg.a > 1.0) {
        return Err(Error::DivergentWeight(cfg.a));
    }
    Ok(())
}

/// Cumulative estimates `f^j` for every candidate, all on the finest mesh.
fn cumulative_estimates(
    bundle: &ReleaseBundle,
    ladder: &Arc<MultiresolutionLadder>,
    levels: &[u32],
) -> Result<Vec<PiecewisePolynomial>> {
    let top = *levels.last().expect("nonempty candidates");
    let cells = 1usize << (top + 1);
    levels
        .iter()
        .map(|&j| Ok(wavelet_estimate(bundle, ladder, j)?.piecewise().refine(cells)))
        .collect()
}

fn compare(diff: &PiecewisePolynomial, s: usize, grid: usize) -> (f64, f64) {
    let d = diff.derivative(s);
    let nodes = d.degree() + 1;
    let l2 = d.integrate_over(&d.breaks(), nodes, 0, |_, v| v[0] * v[0]);
    let mut max = 0.0f64;
    for t in 0..=grid {
        let v = d.eval(t as f64 / grid as f64, 0);
        max = max.max(v * v);
    }
    (l2, max)
}

fn difference(a: &PiecewisePolynomial, b: &PiecewisePolynomial) -> PiecewisePolynomial {
    let mut nb = b.clone();
    nb.scale(-1.0);
    a.add(&nb)
}

/// Smallest candidate whose estimate stays within the threshold of every
/// finer candidate, for all compared derivatives.
pub fn lepski_select(
    bundle: &ReleaseBundle,
    ladder: &Arc<MultiresolutionLadder>,
    n: u64,
    alpha: f64,
    cfg: &LepskiConfig,
) -> Result<(u32, LepskiTrace)> {
    check_config(cfg, ladder)?;
    let levels: Vec<u32> = candidate_levels(n, ladder.j0()).collect();
    let top = *levels.last().expect("nonempty candidates");
    if bundle.j_max < top || ladder.j_max() < top {
        return Err(Error::ResolutionOutOfRange {
            level: top as i64,
            lo: ladder.first_level() as i64,
            hi: bundle.j_max.min(ladder.j_max()) as i64,
        });
    }
    let grid = cfg.grid.unwrap_or_else(|| default_grid_size(n));
    let est = cumulative_estimates(bundle, ladder, &levels)?;
    let mut jobs = Vec::new();
    for (a, &j) in levels.iter().enumerate() {
        for (b, &l) in levels.iter().enumerate().skip(a + 1) {
            for s in 0..=cfg.s_max {
                jobs.push((a, j, b, l, s));
            }
        }
    }
    let comparisons: Vec<Comparison> = jobs
        .par_iter()
        .map(|&(a, j, b, l, s)| {
            let (l2, grid_stat) = compare(&difference(&est[a], &est[b]), s, grid);
            Comparison { j, l, s, l2, grid: grid_stat, threshold: cfg.tau * variance_proxy(n, alpha, cfg.a, l, s) }
        })
        .collect();
    let mut trace = LepskiTrace { candidates: levels.clone(), comparisons, selected: top };
    trace.selected = levels.iter().copied().find(|&j| trace.admissible(j)).unwrap_or(top);
    Ok((trace.selected, trace))
}

/// Wavelet estimate at the Lepski level.
pub fn adaptive_estimate(
    bundle: &ReleaseBundle,
    ladder: &Arc<MultiresolutionLadder>,
    n: u64,
    alpha: f64,
    cfg: &LepskiConfig,
) -> Result<(DensityEstimate, LepskiTrace)> {
    let (j, trace) = lepski_select(bundle, ladder, n, alpha, cfg)?;
    Ok((wavelet_estimate(bundle, ladder, j)?, trace))
}

/// `sup |(f - P_j f)^{(s)}|` over `grid + 1` equispaced points, with `P_j`
/// the orthogonal projection onto the level-`j` splines of degree `d`.
pub fn projection_error(f: Derivatives<'_>, degree: usize, j: u32, s: usize, grid: usize) -> Result<f64> {
    let basis = Arc::new(BSplineBasis::new(j, degree)?);
    let proj = l2_project(|x| f(x, 0), &basis, degree + 12)?.to_piecewise();
    let mut max = 0.0f64;
    for t in 0..=grid {
        let x = t as f64 / grid as f64;
        max = max.max((f(x, s) - proj.eval(x, s)).abs());
    }
    Ok(max)
}

/// Smallest candidate where the squared projection error is below the
/// variance proxy for every `s <= min(s_max, floor(p))`.
#[allow(clippy::too_many_arguments)]
pub fn oracle_resolution(
    f: Derivatives<'_>,
    ladder: &MultiresolutionLadder,
    n: u64,
    alpha: f64,
    a: f64,
    p: f64,
    s_max: usize,
) -> Result<u32> {
    let levels: Vec<u32> = candidate_levels(n, ladder.j0()).collect();
    let s_top = s_max.min(p.floor().max(0.0) as usize);
    for &j in &levels {
        let mut ok = true;
        for s in 0..=s_top {
            let b = projection_error(f, ladder.degree(), j, s, 4096)?;
            if b * b > variance_proxy(n, alpha, a, j, s) {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(j);
        }
    }
    Ok(*levels.last().expect("nonempty candidates"))
}
