//! Variance of the linearized noise term of `int f^2` for both mechanisms as
//! the resolution grows.

use std::sync::Arc;

use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use super::densities::TestDensity;
use super::experiment::replication_rng;
use super::stats::{fit_line, SlopeFit};
use crate::error::{Error, Result};
use crate::privacy::{plan_spline_noise, plan_wavelet_noise, MechanismKind};
use crate::splines::{inner_products, BSplineBasis};
use crate::wavelets::{base_level, MultiresolutionLadder};

#[derive(Debug, Clone)]
pub struct NoiseDemoConfig {
    pub density: String,
    pub degree: usize,
    pub a: f64,
    pub alphas: Vec<f64>,
    pub n: u64,
    /// Resolutions swept; wavelet levels below `j0 - 1` are skipped.
    pub levels: Vec<u32>,
    pub reps: usize,
    pub seed: u64,
}

impl Default for NoiseDemoConfig {
    fn default() -> Self {
        Self {
            density: "sine-mix".into(),
            degree: 3,
            a: 2.0,
            alphas: vec![1.0, 2.0],
            n: 1 << 12,
            levels: (2..=8).collect(),
            reps: 2000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NoiseCurve {
    pub mechanism: MechanismKind,
    pub alpha: f64,
    pub levels: Vec<u32>,
    /// Closed-form variance `sum_c w_c^2 2 sigma_c^2 / n`.
    pub exact: Vec<f64>,
    /// Monte Carlo variance over the replications.
    pub monte_carlo: Vec<f64>,
    /// Fit of `log2` Monte Carlo variance against `j`, i.e. the exponent of
    /// growth in `2^j`.
    pub exponent: Option<SlopeFit>,
}

#[derive(Debug, Clone)]
pub struct NoiseDemoReport {
    pub curves: Vec<NoiseCurve>,
}

impl NoiseDemoReport {
    pub fn curve(&self, mechanism: MechanismKind, alpha: f64) -> Option<&NoiseCurve> {
        self.curves.iter().find(|c| c.mechanism == mechanism && c.alpha == alpha)
    }

    /// Gnuplot-ready blocks: `j exact monte_carlo` per curve.
    pub fn to_data(&self) -> String {
        let mut s = String::new();
        for c in &self.curves {
            s.push_str(&format!("# {} alpha={}\n", c.mechanism, c.alpha));
            for ((j, e), m) in c.levels.iter().zip(&c.exact).zip(&c.monte_carlo) {
                s.push_str(&format!("{j} {e} {m}\n"));
            }
            s.push_str("\n\n");
        }
        s
    }
}

/// Noise weights of a release and their per-coordinate noise scales.
struct Weighted {
    weights: Vec<f64>,
    scales: Vec<f64>,
}

impl Weighted {
    fn exact(&self, n: f64) -> f64 {
        self.weights.iter().zip(&self.scales).map(|(w, s)| 2.0 * (w * s).powi(2) / n).sum()
    }
}

fn mc_variance(items: &[Weighted], n: u64, reps: usize, seed: u64, cell: u64) -> Result<Vec<Vec<f64>>> {
    let gamma = Gamma::new(n as f64, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let draws: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, cell, rep);
            items
                .iter()
                .map(|it| {
                    it.weights
                        .iter()
                        .zip(&it.scales)
                        .map(|(w, s)| w * s * (gamma.sample(&mut rng) - gamma.sample(&mut rng)) / n as f64)
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(draws)
}

fn variance_of(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let (mut k, mut mean) = (0.0, 0.0);
    for x in xs.clone() {
        k += 1.0;
        mean += x;
    }
    mean /= k;
    xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)
}

fn curve(
    mechanism: MechanismKind,
    alpha: f64,
    levels: Vec<u32>,
    items: Vec<Weighted>,
    cfg: &NoiseDemoConfig,
    cell: u64,
) -> Result<NoiseCurve> {
    let exact: Vec<f64> = items.iter().map(|it| it.exact(cfg.n as f64)).collect();
    let draws = mc_variance(&items, cfg.n, cfg.reps, cfg.seed, cell)?;
    let monte_carlo: Vec<f64> = (0..items.len()).map(|i| variance_of(draws.iter().map(|d| d[i]))).collect();
    let xs: Vec<f64> = levels.iter().map(|&j| j as f64).collect();
    let ys: Vec<f64> = monte_carlo.iter().map(|v| v.log2()).collect();
    Ok(NoiseCurve { mechanism, alpha, exponent: fit_line(&xs, &ys), levels, exact, monte_carlo })
}

/// Sweeps the resolution for both mechanisms at every budget.
pub fn run_noise_accumulation_demo(cfg: &NoiseDemoConfig) -> Result<NoiseDemoReport> {
    let density = TestDensity::parse(&cfg.density)?;
    let twice_f = |x: f64| 2.0 * density.value(x);
    let nodes = cfg.degree + 12;
    let j0 = base_level(cfg.degree.max(1));
    let wl: Vec<u32> = cfg.levels.iter().copied().filter(|&j| j + 1 >= j0).collect();
    let top = *wl.iter().max().ok_or_else(|| Error::InvalidParameter("no usable levels".into()))?;
    let ladder = Arc::new(MultiresolutionLadder::new(cfg.degree, top)?);
    let beta = ladder.analyze_with(twice_f, top, top + 3, nodes)?;
    let wavelet_weights: Vec<Vec<f64>> =
        (ladder.first_level()..=top).map(|j| ladder.solve_gram(j, beta.level(j).expect("analyzed"))).collect();
    let bases: Vec<Arc<BSplineBasis>> =
        cfg.levels.iter().map(|&j| BSplineBasis::new(j, cfg.degree).map(Arc::new)).collect::<Result<_>>()?;
    let spline_weights: Vec<Vec<f64>> = bases.iter().map(|b| inner_products(twice_f, b, nodes)).collect();

    let mut curves = Vec::new();
    let mut cell = 0u64;
    for &alpha in &cfg.alphas {
        let items = bases
            .iter()
            .zip(&spline_weights)
            .map(|(b, w)| {
                let plan = plan_spline_noise(b, alpha)?;
                Ok(Weighted { weights: w.clone(), scales: vec![plan.scales()[0]; w.len()] })
            })
            .collect::<Result<Vec<_>>>()?;
        curves.push(curve(MechanismKind::Spline, alpha, cfg.levels.clone(), items, cfg, cell)?);
        cell += 1;

        let plan = plan_wavelet_noise(&ladder, alpha, cfg.a)?;
        let items = wl
            .iter()
            .map(|&jn| {
                let mut weights = Vec::new();
                let mut scales = Vec::new();
                for (i, w) in wavelet_weights.iter().enumerate().take((jn + 2 - j0) as usize) {
                    weights.extend_from_slice(w);
                    scales.extend(std::iter::repeat_n(plan.scales()[i], w.len()));
                }
                Weighted { weights, scales }
            })
            .collect();
        curves.push(curve(MechanismKind::Wavelet, alpha, wl.clone(), items, cfg, cell)?);
        cell += 1;
    }
    Ok(NoiseDemoReport { curves })
}
