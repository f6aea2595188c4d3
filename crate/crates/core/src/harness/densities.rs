//! Test densities with exact derivatives, oracle functional values and an
//! inverse-CDF sampler.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rand::{Rng, RngCore};

use super::jet::{Jet, JET_LEN};
use crate::error::{Error, Result};
use crate::functionals::FunctionalSpec;
use crate::quadrature::GaussLegendre;

/// Cells of the numeric CDF behind the sampler.
pub const SAMPLER_CELLS: usize = 1 << 16;

/// Cells used for oracle quadrature.
pub const ORACLE_CELLS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Uniform,
    /// `1 + amplitude sin(2 pi k x)`.
    SineMix { amplitude: f64, k: u32 },
    /// `sum_i c_i x^i`, rescaled to unit mass.
    Poly { coeffs: Vec<f64> },
    /// `base + eta delta^p bump((x - x0) / delta)` with a two-lobe bump of
    /// zero mass.
    BumpPerturbed { base: Box<Shape>, x0: f64, eta: f64, delta: f64, p: u32 },
}

/// `exp(-1 / (1 - 4 v^2))` on `|v| < 1/2`, zero elsewhere.
fn smooth_bump(v: Jet) -> Jet {
    let x = v.value();
    if x.abs() >= 0.5 {
        return Jet::constant(0.0);
    }
    let w = (v * v).scale(-4.0) + 1.0;
    (-w.recip()).exp()
}

impl Shape {
    fn jet(&self, x: f64) -> Jet {
        match self {
            Shape::Uniform => Jet::constant(1.0),
            Shape::SineMix { amplitude, k } => {
                let (s, _) = Jet::variable(x).scale(2.0 * PI * *k as f64).sin_cos();
                s.scale(*amplitude) + 1.0
            }
            Shape::Poly { coeffs } => {
                let t = Jet::variable(x);
                coeffs.iter().rev().fold(Jet::constant(0.0), |acc, &c| acc * t + c)
            }
            Shape::BumpPerturbed { base, x0, eta, delta, p } => {
                let u = (Jet::variable(x) + -x0).scale(1.0 / delta);
                let lobe = smooth_bump(u - Jet::constant(1.0)) - smooth_bump(u);
                base.jet(x) + lobe.scale(eta * delta.powi(*p as i32))
            }
        }
    }
}

/// A density on `[0, 1]` with declared smoothness `p`.
#[derive(Debug)]
pub struct TestDensity {
    id: String,
    smoothness: u32,
    shape: Shape,
    sampler: OnceLock<Arc<InverseCdf>>,
}

impl Clone for TestDensity {
    fn clone(&self) -> Self {
        let sampler = OnceLock::new();
        if let Some(s) = self.sampler.get() {
            let _ = sampler.set(Arc::clone(s));
        }
        Self { id: self.id.clone(), smoothness: self.smoothness, shape: self.shape.clone(), sampler }
    }
}

fn params(args: &str) -> Result<Vec<(&str, &str)>> {
    args.split(',')
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value in '{p}'")))
        })
        .collect()
}

fn parse_num(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| Error::InvalidParameter(format!("{key}: not a number: {v}")))
}

impl TestDensity {
    pub fn new(id: impl Into<String>, shape: Shape, smoothness: u32) -> Result<Self> {
        let shape = match shape {
            Shape::Poly { coeffs } => {
                let mass: f64 = coeffs.iter().enumerate().map(|(i, c)| c / (i + 1) as f64).sum();
                if !(mass > 0.0) {
                    return Err(Error::InvalidParameter("polynomial has no positive mass".into()));
                }
                Shape::Poly { coeffs: coeffs.iter().map(|c| c / mass).collect() }
            }
            Shape::BumpPerturbed { base, x0, eta, delta, p } => {
                if !(delta > 0.0 && x0 - 0.5 * delta > 0.0 && x0 + 1.5 * delta < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "bump support [{}, {}] leaves the unit interval",
                        x0 - 0.5 * delta,
                        x0 + 1.5 * delta
                    )));
                }
                Shape::BumpPerturbed { base, x0, eta, delta, p }
            }
            s => s,
        };
        if let Shape::SineMix { amplitude, k } = shape {
            if k == 0 || amplitude.abs() >= 1.0 {
                return Err(Error::InvalidParameter("sine-mix needs k >= 1 and |amplitude| < 1".into()));
            }
        }
        let d = Self { id: id.into(), smoothness, shape, sampler: OnceLock::new() };
        let min = (0..=100_000).map(|t| d.value(t as f64 / 100_000.0)).fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::InvalidParameter(format!("density {} is not positive (min {min})", d.id)));
        }
        Ok(d)
    }

    /// Parses `uniform`, `sine-mix[:amp=..,k=..]`, `poly-density[:c=c0;c1;..]`
    /// or `bump-perturbed[:base=..,x0=..,eta=..,delta=..]`, each accepting
    /// `p=..` for the declared smoothness.
    pub fn parse(id: &str) -> Result<Self> {
        let (name, args) = id.split_once(':').unwrap_or((id, ""));
        let ps = params(args)?;
        let get = |k: &str| ps.iter().find(|(key, _)| *key == k).map(|(_, v)| *v);
        let num = |k: &str, default: f64| get(k).map_or(Ok(default), |v| parse_num(k, v));
        let p = num("p", 3.0)?;
        if p < 0.0 || p.fract() != 0.0 {
            return Err(Error::InvalidParameter(format!("p must be a non-negative integer, got {p}")));
        }
        let p = p as u32;
        let allowed: &[&str] = match name {
            "uniform" => &["p"],
            "sine-mix" => &["p", "amp", "k"],
            "poly-density" => &["p", "c"],
            "bump-perturbed" => &["p", "base", "x0", "eta", "delta"],
            _ => return Err(Error::InvalidParameter(format!("unknown density '{name}'"))),
        };
        if let Some((k, _)) = ps.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(Error::InvalidParameter(format!("{name} does not take '{k}'")));
        }
        let shape = match name {
            "uniform" => Shape::Uniform,
            "sine-mix" => Shape::SineMix { amplitude: num("amp", 0.5)?, k: num("k", 1.0)? as u32 },
            "poly-density" => {
                let coeffs = match get("c") {
                    Some(list) => list.split(';').map(|v| parse_num("c", v)).collect::<Result<_>>()?,
                    None => vec![0.75, 1.5, -1.5],
                };
                Shape::Poly { coeffs }
            }
            _ => {
                let base = match get("base").unwrap_or("uniform") {
                    "uniform" => Shape::Uniform,
                    "sine-mix" => Shape::SineMix { amplitude: 0.5, k: 1 },
                    "poly-density" => Shape::Poly { coeffs: vec![0.75, 1.5, -1.5] },
                    other => return Err(Error::InvalidParameter(format!("unknown base density '{other}'"))),
                };
                Shape::BumpPerturbed {
                    base: Box::new(base),
                    x0: num("x0", 0.5)?,
                    eta: num("eta", 0.5)?,
                    delta: num("delta", 0.2)?,
                    p,
                }
            }
        };
        Self::new(id, shape, p)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn smoothness(&self) -> u32 {
        self.smoothness
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn value(&self, x: f64) -> f64 {
        self.shape.jet(x).value()
    }

    /// `f^{(q)}(x)` for `q < 8`.
    pub fn derivative(&self, x: f64, q: usize) -> f64 {
        assert!(q < JET_LEN, "derivative order {q} beyond the jet length");
        self.shape.jet(x).derivative(q)
    }

    /// Closure form suitable for functionals and projections.
    pub fn derivatives(&self) -> impl Fn(f64, usize) -> f64 + Sync + '_ {
        move |x, q| self.derivative(x, q)
    }

    /// `Lambda(f)` by composite Gauss quadrature.
    pub fn oracle(&self, spec: &FunctionalSpec) -> Result<f64> {
        Ok(spec.evaluate_function(&self.derivatives(), ORACLE_CELLS)?.value)
    }

    pub fn sampler(&self) -> Arc<InverseCdf> {
        Arc::clone(self.sampler.get_or_init(|| Arc::new(InverseCdf::new(|x| self.value(x), SAMPLER_CELLS))))
    }

    pub fn sample(&self, n: usize, rng: &mut impl RngCore) -> Vec<f64> {
        let s = self.sampler();
        (0..n).map(|_| s.sample(rng)).collect()
    }
}

/// Piecewise-linear CDF on a uniform grid, inverted by bisection.
#[derive(Debug, Clone)]
pub struct InverseCdf {
    cdf: Vec<f64>,
}

impl InverseCdf {
    pub fn new(f: impl Fn(f64) -> f64, cells: usize) -> Self {
        let gl = GaussLegendre::new(4);
        let h = 1.0 / cells as f64;
        let mut cdf = Vec::with_capacity(cells + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for i in 0..cells {
            let a = i as f64 * h;
            acc += gl.integrate(a, a + h, |x| f(x).max(0.0));
            cdf.push(acc);
        }
        let total = acc;
        cdf.iter_mut().for_each(|v| *v /= total);
        Self { cdf }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let cells = self.cdf.len() - 1;
        let t = (x.clamp(0.0, 1.0) * cells as f64).min(cells as f64);
        let i = (t.floor() as usize).min(cells - 1);
        let w = t - i as f64;
        self.cdf[i] * (1.0 - w) + self.cdf[i + 1] * w
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let cells = self.cdf.len() - 1;
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, cells) - 1;
        let (lo, hi) = (self.cdf[i], self.cdf[i + 1]);
        let t = if hi > lo { ((u - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
        (i as f64 + t) / cells as f64
    }

    pub fn sample(&self, rng: &mut impl RngCore) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// Kolmogorov-Smirnov distance between `samples` and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::FunctionalSpec;
    use crate::privacy::record_rng;
    use approx::assert_abs_diff_eq;

    fn mass(d: &TestDensity) -> f64 {
        GaussLegendre::new(16).integrate_cells(&crate::quadrature::uniform_breaks(256), |x| d.value(x))
    }

    #[test]
    fn catalog_members_are_densities() {
        for id in ["uniform", "sine-mix", "poly-density", "bump-perturbed:p=2", "bump-perturbed:base=sine-mix,x0=0.3,delta=0.1"]
        {
            let d = TestDensity::parse(id).unwrap();
            assert_abs_diff_eq!(mass(&d), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn sine_mix_square_integral() {
        let d = TestDensity::parse("sine-mix").unwrap();
        assert_abs_diff_eq!(d.oracle(&FunctionalSpec::power(0, 2.0)).unwrap(), 1.125, epsilon = 1e-12);
        let u = TestDensity::parse("uniform").unwrap();
        assert_eq!(u.oracle(&FunctionalSpec::entropy()).unwrap(), 0.0);
        assert_eq!(u.oracle(&FunctionalSpec::fisher()).unwrap(), 0.0);
    }

    #[test]
    fn zero_bump_is_base() {
        let b = TestDensity::parse("bump-perturbed:base=sine-mix,eta=0").unwrap();
        let s = TestDensity::parse("sine-mix").unwrap();
        for t in 0..100 {
            let x = t as f64 / 99.0;
            assert_eq!(b.value(x), s.value(x));
        }
    }

    #[test]
    fn jets_match_finite_differences() {
        let d = TestDensity::parse("bump-perturbed:base=poly-density,eta=3,delta=0.25,p=2").unwrap();
        let h = 1e-5;
        for &x in &[0.45, 0.5, 0.61, 0.7] {
            for q in 0..4 {
                let fd = (d.derivative(x + h, q) - d.derivative(x - h, q)) / (2.0 * h);
                let exact = d.derivative(x, q + 1);
                assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0), "q={q} x={x}: {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn rejects_invalid() {
        assert!(TestDensity::parse("bump-perturbed:x0=0.9,delta=0.2").is_err());
        assert!(TestDensity::parse("bump-perturbed:eta=1e6,delta=0.2,p=0").is_err());
        assert!(TestDensity::parse("poly-density:c=0;1;-2").is_err());
        assert!(TestDensity::parse("gauss").is_err());
    }

    #[test]
    fn sampler_passes_ks() {
        let d = TestDensity::parse("sine-mix").unwrap();
        let mut rng = record_rng(11, 0);
        let xs = d.sample(100_000, &mut rng);
        let s = d.sampler();
        let ks = ks_statistic(&xs, |x| s.cdf(x));
        assert!(ks < 1.628 / (xs.len() as f64).sqrt(), "ks = {ks}");
        assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
    }
}
