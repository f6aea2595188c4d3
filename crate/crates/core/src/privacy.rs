//! The two local privacy mechanisms: Laplace noise on spline dual features
//! or on a multiresolution wavelet feature vector.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::bundle::ReleaseBundle;
use crate::error::{Error, Result};
use crate::splines::{check_domain, BSplineBasis};
use crate::wavelets::MultiresolutionLadder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MechanismKind {
    Spline,
    Wavelet,
}

impl MechanismKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MechanismKind::Spline => "spline",
            MechanismKind::Wavelet => "wavelet",
        }
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spline" => Ok(MechanismKind::Spline),
            "wavelet" => Ok(MechanismKind::Wavelet),
            other => Err(Error::InvalidParameter(format!("unknown mechanism '{other}'"))),
        }
    }
}

/// Feature map whose coordinates get noised.
#[derive(Debug, Clone)]
pub enum Features {
    /// Dual functions `e_k` of one spline level.
    Spline(Arc<BSplineBasis>),
    /// Normalized base B-splines followed by the wavelets of every level.
    Wavelet(Arc<MultiresolutionLadder>),
}

impl Features {
    pub fn kind(&self) -> MechanismKind {
        match self {
            Features::Spline(_) => MechanismKind::Spline,
            Features::Wavelet(_) => MechanismKind::Wavelet,
        }
    }

    pub fn degree(&self) -> usize {
        match self {
            Features::Spline(b) => b.degree(),
            Features::Wavelet(l) => l.degree(),
        }
    }

    /// Levels carried, lowest first: the spline level, or `j0 - 1..=j_max`.
    pub fn levels(&self) -> Vec<u32> {
        match self {
            Features::Spline(b) => vec![b.level()],
            Features::Wavelet(l) => (l.first_level()..=l.j_max()).collect(),
        }
    }

    /// Coordinates per level, in [`levels`](Self::levels) order.
    pub fn level_dims(&self) -> Vec<usize> {
        match self {
            Features::Spline(b) => vec![b.dim()],
            Features::Wavelet(l) => (l.first_level()..=l.j_max()).map(|j| l.level_dim(j)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.level_dims().iter().sum()
    }

    /// Calls `visit(level_slot, position, value)` for every nonzero feature
    /// at `x`.
    pub fn for_each_nonzero(&self, x: f64, buf: &mut Vec<(usize, f64)>, mut visit: impl FnMut(usize, usize, f64)) {
        match self {
            Features::Spline(b) => {
                let cell = b.cell_of(x);
                for &k in b.duals_on_cell(cell) {
                    visit(0, k, b.dual_function_value(k, x));
                }
            }
            Features::Wavelet(l) => {
                for (slot, j) in (l.first_level()..=l.j_max()).enumerate() {
                    l.eval_level(j, x, 0, buf);
                    for &(p, v) in buf.iter() {
                        visit(slot, p, v);
                    }
                }
            }
        }
    }

    /// Dense clean feature vector, flattened level by level.
    pub fn dense(&self, x: f64) -> Vec<f64> {
        let offsets = offsets(&self.level_dims());
        let mut out = vec![0.0; self.dim()];
        let mut buf = Vec::new();
        self.for_each_nonzero(x, &mut buf, |slot, p, v| out[offsets[slot] + p] = v);
        out
    }
}

fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut o = Vec::with_capacity(dims.len());
    let mut acc = 0;
    for &d in dims {
        o.push(acc);
        acc += d;
    }
    o
}

/// Noise calibration for one mechanism.
#[derive(Debug, Clone)]
pub struct NoisePlan {
    features: Features,
    alpha: f64,
    level_weight: Option<f64>,
    /// Laplace scale per level, lowest level first.
    scales: Vec<f64>,
    /// Maximum number of simultaneously nonzero features per level.
    overlaps: Vec<usize>,
    /// Largest sup-norm of a feature per level.
    sups: Vec<f64>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidBudget(alpha))
    }
}

/// `sigma = 2 (d + 1) max_k sup |e_k| / alpha`.
pub fn plan_spline_noise(basis: &Arc<BSplineBasis>, alpha: f64) -> Result<NoisePlan> {
    check_alpha(alpha)?;
    let d = basis.degree();
    let sup = basis.max_dual_sup();
    Ok(NoisePlan {
        features: Features::Spline(Arc::clone(basis)),
        alpha,
        level_weight: None,
        scales: vec![2.0 * (d + 1) as f64 * sup / alpha],
        overlaps: vec![d + 1],
        sups: vec![sup],
    })
}

/// Half the budget to the base level and the rest split over detail levels
/// with weights `j^{-a} (a - 1) / a`.
pub fn plan_wavelet_noise(ladder: &Arc<MultiresolutionLadder>, alpha: f64, a: f64) -> Result<NoisePlan> {
    check_alpha(alpha)?;
    if !(a.is_finite() && a > 1.0) {
        return Err(Error::DivergentWeight(a));
    }
    let mut scales = Vec::new();
    let mut overlaps = Vec::new();
    let mut sups = Vec::new();
    for j in ladder.first_level()..=ladder.j_max() {
        let n_j = ladder.level_overlap(j);
        let sup = ladder.level_sup(j);
        let sigma = if j == ladder.first_level() {
            4.0 * n_j as f64 * sup / alpha
        } else {
            4.0 * n_j as f64 * sup * (a / (a - 1.0)) * (j as f64).powf(a) / alpha
        };
        scales.push(sigma);
        overlaps.push(n_j);
        sups.push(sup);
    }
    Ok(NoisePlan {
        features: Features::Wavelet(Arc::clone(ladder)),
        alpha,
        level_weight: Some(a),
        scales,
        overlaps,
        sups,
    })
}

impl NoisePlan {
    pub fn kind(&self) -> MechanismKind {
        self.features.kind()
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn level_weight(&self) -> Option<f64> {
        self.level_weight
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn overlaps(&self) -> &[usize] {
        &self.overlaps
    }

    pub fn sups(&self) -> &[f64] {
        &self.sups
    }

    /// `sum_levels 2 N_j sup_j / sigma_j`, the budget the calibration
    /// guarantees.
    pub fn budget_bound(&self) -> f64 {
        self.scales
            .iter()
            .zip(&self.overlaps)
            .zip(&self.sups)
            .map(|((s, n), m)| 2.0 * *n as f64 * m / s)
            .sum()
    }

    /// Same plan with every scale set to zero. Records then equal the clean
    /// features; for tests only.
    pub fn without_noise(&self) -> NoisePlan {
        let mut p = self.clone();
        p.scales.iter_mut().for_each(|s| *s = 0.0);
        p
    }

    /// `(j0, j_max)` as written into bundles; a spline plan reports its
    /// level twice.
    pub fn level_span(&self) -> (u32, u32) {
        match &self.features {
            Features::Spline(b) => (b.level(), b.level()),
            Features::Wavelet(l) => (l.j0(), l.j_max()),
        }
    }

    fn scale_per_coordinate(&self) -> Vec<f64> {
        self.features
            .level_dims()
            .iter()
            .zip(&self.scales)
            .flat_map(|(&n, &s)| std::iter::repeat_n(s, n))
            .collect()
    }
}

/// One sanitized observation, coordinates flattened level by level.
#[derive(Debug, Clone, PartialEq)]
pub struct SanitizedRecord {
    pub values: Vec<f64>,
}

/// Uniform in the open interval `(0, 1)` from the top 53 bits.
#[inline]
fn open_uniform(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard Laplace draw by inverting its CDF at one uniform.
#[inline]
pub fn laplace(rng: &mut impl RngCore) -> f64 {
    let u = open_uniform(rng);
    if u < 0.5 {
        (2.0 * u).ln()
    } else {
        -(2.0 * (1.0 - u)).ln()
    }
}

/// Stream for record `index` under `master_seed`.
pub fn record_rng(master_seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// `Z = features(x) + sigma * Y` with independent unit Laplace `Y`.
pub fn sanitize(x: f64, plan: &NoisePlan, rng: &mut impl RngCore) -> Result<SanitizedRecord> {
    check_domain(x)?;
    let mut values = plan.features.dense(x);
    for (v, s) in values.iter_mut().zip(plan.scale_per_coordinate()) {
        let y = laplace(rng);
        if s != 0.0 {
            *v += s * y;
        }
    }
    Ok(SanitizedRecord { values })
}

/// Sanitizes every sample with its own stream `(master_seed, index)`.
pub fn sanitize_all(samples: &[f64], plan: &NoisePlan, master_seed: u64) -> Result<Vec<SanitizedRecord>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, &x)| sanitize(x, plan, &mut record_rng(master_seed, i as u64)))
        .collect()
}

/// Neumaier compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn split_levels(flat: Vec<f64>, dims: &[usize]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(dims.len());
    let mut it = flat.into_iter();
    for &d in dims {
        out.push(it.by_ref().take(d).collect());
    }
    out
}

fn bundle_from_means(plan: &NoisePlan, n: u64, means: Vec<f64>, records: Option<Vec<Vec<f64>>>) -> ReleaseBundle {
    let (j0, j_max) = plan.level_span();
    ReleaseBundle {
        mechanism: plan.kind(),
        degree: plan.features.degree(),
        j0,
        j_max,
        alpha: plan.alpha,
        level_weight: plan.level_weight,
        n,
        levels: split_levels(means, &plan.features.level_dims()),
        records,
    }
}

/// Coordinate-wise means of `records` in index order with compensated
/// summation. The plan supplies the bundle metadata.
pub fn aggregate(records: &[SanitizedRecord], plan: &NoisePlan, keep_records: bool) -> Result<ReleaseBundle> {
    let first = records.first().ok_or(Error::EmptyAggregate)?;
    let dim = plan.features.dim();
    if first.values.len() != dim {
        return Err(Error::Shape { expected: dim, found: first.values.len() });
    }
    let mut acc = vec![CompensatedSum::default(); dim];
    for r in records {
        if r.values.len() != dim {
            return Err(Error::Shape { expected: dim, found: r.values.len() });
        }
        for (a, &v) in acc.iter_mut().zip(&r.values) {
            a.add(v);
        }
    }
    let n = records.len() as f64;
    let means = acc.iter().map(|a| a.value() / n).collect();
    let kept = keep_records.then(|| records.iter().map(|r| r.values.clone()).collect());
    Ok(bundle_from_means(plan, records.len() as u64, means, kept))
}

const CHUNK: usize = 4096;

/// Sanitizes and aggregates in chunks so memory stays bounded. Identical to
/// `aggregate(sanitize_all(..))` bit for bit.
pub fn release(samples: &[f64], plan: &NoisePlan, master_seed: u64, keep_records: bool) -> Result<ReleaseBundle> {
    if samples.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    let dim = plan.features.dim();
    let mut acc = vec![CompensatedSum::default(); dim];
    let mut kept = keep_records.then(Vec::new);
    for (c, chunk) in samples.chunks(CHUNK).enumerate() {
        let base = (c * CHUNK) as u64;
        let recs: Vec<SanitizedRecord> = chunk
            .par_iter()
            .enumerate()
            .map(|(i, &x)| sanitize(x, plan, &mut record_rng(master_seed, base + i as u64)))
            .collect::<Result<_>>()?;
        for r in recs {
            for (a, &v) in acc.iter_mut().zip(&r.values) {
                a.add(v);
            }
            if let Some(k) = kept.as_mut() {
                k.push(r.values);
            }
        }
    }
    let n = samples.len() as f64;
    let means = acc.iter().map(|a| a.value() / n).collect();
    Ok(bundle_from_means(plan, samples.len() as u64, means, kept))
}

/// Aggregate with the same law as [`release`] without per-record draws:
/// clean feature means plus, per coordinate, `sigma (G1 - G2) / n` with
/// `G1, G2 ~ Gamma(n, 1)`, the law of a mean of `n` unit Laplace draws
/// times `sigma`. Used by simulations.
pub fn simulate_release(samples: &[f64], plan: &NoisePlan, rng: &mut impl RngCore) -> Result<ReleaseBundle> {
    if samples.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    let dims = plan.features.level_dims();
    let offs = offsets(&dims);
    let mut acc = vec![CompensatedSum::default(); plan.features.dim()];
    let mut buf = Vec::new();
    for &x in samples {
        check_domain(x)?;
        plan.features.for_each_nonzero(x, &mut buf, |slot, p, v| acc[offs[slot] + p].add(v));
    }
    let n = samples.len() as f64;
    let gamma = Gamma::new(n, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let means = acc
        .iter()
        .zip(plan.scale_per_coordinate())
        .map(|(a, s)| {
            let noise = gamma.sample(rng) - gamma.sample(rng);
            a.value() / n + s * noise / n
        })
        .collect();
    Ok(bundle_from_means(plan, samples.len() as u64, means, None))
}

/// Clean feature means (no noise), e.g. for bias-only studies.
pub fn clean_release(samples: &[f64], plan: &NoisePlan) -> Result<ReleaseBundle> {
    let zero = plan.without_noise();
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let mut b = simulate_release(samples, &zero, &mut rng)?;
    b.alpha = plan.alpha;
    Ok(b)
}

/// Largest value over grid pairs `(x, x')` of
/// `sum_c (|g_c(x)| + |g_c(x')|) / sigma_c`, which bounds the log-likelihood
/// ratio of the mechanism. Grid points are `t / (grid_size - 1)`.
pub fn audit_privacy(plan: &NoisePlan, grid_size: usize) -> f64 {
    let grid_size = grid_size.max(2);
    let scales = &plan.scales;
    let worst = (0..grid_size)
        .into_par_iter()
        .map_init(Vec::new, |buf, t| {
            let x = t as f64 / (grid_size - 1) as f64;
            let mut s = 0.0;
            plan.features.for_each_nonzero(x, buf, |slot, _, v| s += v.abs() / scales[slot]);
            s
        })
        .reduce(|| 0.0, f64::max);
    2.0 * worst
}
