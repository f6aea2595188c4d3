//! Plug-in density estimates built from release bundles, and the resolution
//! rules that pick the truncation level.

use std::io::Write;
use std::sync::Arc;

use crate::bundle::ReleaseBundle;
use crate::error::{Error, Result};
use crate::poly::PiecewisePolynomial;
use crate::privacy::MechanismKind;
use crate::splines::{check_domain, BSplineBasis, SplineFunction};
use crate::wavelets::{MultiresolutionLadder, WaveletCoefficients};

#[derive(Debug, Clone)]
pub enum EstimateSource {
    Spline(SplineFunction),
    Wavelet { ladder: Arc<MultiresolutionLadder>, coeffs: WaveletCoefficients },
    /// Built directly from a piecewise polynomial (projections, test input).
    Piecewise,
}

/// A density estimate `f_n`, kept both in its native coefficients and as a
/// piecewise polynomial for fast evaluation and exact quadrature.
#[derive(Debug, Clone)]
pub struct DensityEstimate {
    source: EstimateSource,
    degree: usize,
    resolution: u32,
    piecewise: PiecewisePolynomial,
}

impl DensityEstimate {
    pub fn from_spline(s: SplineFunction) -> Self {
        let piecewise = s.to_piecewise();
        Self {
            degree: s.basis().degree(),
            resolution: s.basis().level(),
            piecewise,
            source: EstimateSource::Spline(s),
        }
    }

    pub fn from_wavelet(ladder: Arc<MultiresolutionLadder>, coeffs: WaveletCoefficients) -> Result<Self> {
        let piecewise = ladder.synthesize_piecewise(&coeffs)?;
        Ok(Self {
            degree: ladder.degree(),
            resolution: coeffs.top_level(),
            piecewise,
            source: EstimateSource::Wavelet { ladder, coeffs },
        })
    }

    /// Wraps an arbitrary piecewise polynomial, e.g. an exact projection.
    pub fn from_piecewise(piecewise: PiecewisePolynomial, degree: usize, resolution: u32) -> Self {
        Self {
            source: EstimateSource::Piecewise,
            degree,
            resolution,
            piecewise,
        }
    }

    pub fn kind(&self) -> Option<MechanismKind> {
        match self.source {
            EstimateSource::Spline(_) => Some(MechanismKind::Spline),
            EstimateSource::Wavelet { .. } => Some(MechanismKind::Wavelet),
            EstimateSource::Piecewise => None,
        }
    }

    pub fn source(&self) -> &EstimateSource {
        &self.source
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `j_n`: the spline level, or the top wavelet level kept.
    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn piecewise(&self) -> &PiecewisePolynomial {
        &self.piecewise
    }

    pub fn max_order(&self) -> usize {
        self.degree.saturating_sub(1)
    }

    /// `f_n^{(q)}(x)` for `q <= d - 1`.
    pub fn value(&self, x: f64, q: usize) -> Result<f64> {
        if q > self.max_order() {
            return Err(Error::UnsupportedDerivative { order: q, degree: self.degree, max: self.max_order() });
        }
        check_domain(x)?;
        Ok(self.piecewise.eval(x, q))
    }

    #[inline]
    pub fn value_unchecked(&self, x: f64, q: usize) -> f64 {
        self.piecewise.eval(x, q)
    }

    pub fn integral(&self) -> f64 {
        let nodes = self.degree / 2 + 1;
        self.piecewise.integrate_over(&self.piecewise.breaks(), nodes, 0, |_, v| v[0])
    }

    /// Positive part rescaled to unit mass. Off the default path.
    pub fn normalized_clipped(&self) -> Result<ClippedDensity<'_>> {
        let mass = self.piecewise.integrate_over(&self.piecewise.sign_breaks(), self.degree / 2 + 1, 0, |_, v| {
            v[0].max(0.0)
        });
        if !(mass > 0.0) {
            return Err(Error::InvalidParameter("estimate has no positive mass".into()));
        }
        Ok(ClippedDensity { est: self, mass })
    }

    /// Writes `x, f, f', ..., f^{(max_q)}` at `points` equispaced points.
    pub fn write_curve_csv(&self, mut out: impl Write, points: usize, max_q: usize) -> Result<()> {
        if max_q > self.max_order() {
            return Err(Error::UnsupportedDerivative { order: max_q, degree: self.degree, max: self.max_order() });
        }
        let mut header = String::from("x,f");
        for q in 1..=max_q {
            header.push_str(&format!(",d{q}f"));
        }
        writeln!(out, "{header}")?;
        let points = points.max(2);
        for t in 0..points {
            let x = t as f64 / (points - 1) as f64;
            let mut line = format!("{x}");
            for q in 0..=max_q {
                line.push_str(&format!(",{}", self.piecewise.eval(x, q)));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// `max(f_n, 0) / int max(f_n, 0)`.
#[derive(Debug, Clone, Copy)]
pub struct ClippedDensity<'a> {
    est: &'a DensityEstimate,
    mass: f64,
}

impl ClippedDensity<'_> {
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        Ok(self.est.value(x, 0)?.max(0.0) / self.mass)
    }
}

/// `f_n = sum_k Zbar_k B_k / ||B_k||`.
pub fn spline_estimate(bundle: &ReleaseBundle, basis: &Arc<BSplineBasis>) -> Result<DensityEstimate> {
    if bundle.mechanism != MechanismKind::Spline {
        return Err(Error::Mismatch("spline estimate needs a spline bundle".into()));
    }
    if bundle.j0 != basis.level() || bundle.degree != basis.degree() {
        return Err(Error::Mismatch(format!(
            "bundle is level {} degree {}, basis is level {} degree {}",
            bundle.j0,
            bundle.degree,
            basis.level(),
            basis.degree()
        )));
    }
    let coeffs = bundle.levels.first().cloned().ok_or_else(|| Error::Mismatch("bundle has no levels".into()))?;
    Ok(DensityEstimate::from_spline(SplineFunction::new(Arc::clone(basis), coeffs)?))
}

/// `f_n = sum_{j <= j_n} sum_k Zbar_{jk} dual_{jk}`.
pub fn wavelet_estimate(bundle: &ReleaseBundle, ladder: &Arc<MultiresolutionLadder>, j_n: u32) -> Result<DensityEstimate> {
    if bundle.mechanism != MechanismKind::Wavelet {
        return Err(Error::Mismatch("wavelet estimate needs a wavelet bundle".into()));
    }
    if bundle.degree != ladder.degree() || bundle.j0 != ladder.j0() {
        return Err(Error::Mismatch(format!(
            "bundle degree {} / j0 {}, ladder degree {} / j0 {}",
            bundle.degree,
            bundle.j0,
            ladder.degree(),
            ladder.j0()
        )));
    }
    let lo = ladder.first_level();
    let hi = bundle.j_max.min(ladder.j_max());
    if j_n < lo || j_n > hi {
        return Err(Error::ResolutionOutOfRange { level: j_n as i64, lo: lo as i64, hi: hi as i64 });
    }
    let coeffs = WaveletCoefficients { base_level: lo, levels: bundle.levels.clone() }.truncated(j_n);
    DensityEstimate::from_wavelet(Arc::clone(ladder), coeffs)
}

/// How `j_n` is tied to `n` and `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolutionRule {
    /// `2^j <= (n alpha^2)^{1/(2p+2)} ^ n^{1/(2p+1)}`.
    AtomicSpline { p: f64 },
    /// `2^j <= (n alpha^2 ln^{-2a} n)^{1/(2p+2)} ^ n^{1/(2p+1)}`.
    AtomicWavelet { p: f64, a: f64 },
    /// Two-sided window for smooth functionals of order `m`.
    SmoothWavelet { p: f64, m: u32, a: f64, a_prime: f64 },
}

fn log2_floor(log2_bound: f64) -> u32 {
    // Exact powers of two should land on their own exponent.
    let j = (log2_bound + 1e-12).floor();
    if j < 0.0 {
        0
    } else {
        j as u32
    }
}

/// `(lower, upper)` for `2^{j_n}` under `rule`, in log2 units. Atomic rules
/// have no lower side (reported as `-inf`).
pub fn resolution_window(rule: ResolutionRule, n: u64, alpha: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2, got {n}")));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidBudget(alpha));
    }
    let nf = n as f64;
    let l2n = nf.log2();
    let l2na = l2n + 2.0 * alpha.log2();
    let ln = |l2: f64| l2 * std::f64::consts::LN_2;
    match rule {
        ResolutionRule::AtomicSpline { p } => {
            check_p(p)?;
            Ok((f64::NEG_INFINITY, (l2na / (2.0 * p + 2.0)).min(l2n / (2.0 * p + 1.0))))
        }
        ResolutionRule::AtomicWavelet { p, a } => {
            check_p(p)?;
            let priv_side = (l2na - 2.0 * a * ln(l2n).log2()) / (2.0 * p + 2.0);
            Ok((f64::NEG_INFINITY, priv_side.min(l2n / (2.0 * p + 1.0))))
        }
        ResolutionRule::SmoothWavelet { p, m, a, a_prime } => {
            check_p(p)?;
            let lower = l2n.min(l2na) / (2.0 * p);
            let ln_na = ln(l2na);
            if ln_na <= 0.0 {
                return Err(Error::InfeasibleResolution { lower: lower.exp2(), upper: 0.0 });
            }
            let mf = m as f64;
            let upper = if m == 0 {
                let a_side = -a * ln_na.log2() + l2na / 4.0;
                let b_side = -a_prime * ln(l2n).log2() + l2n / 4.0;
                a_side.min(b_side)
            } else {
                let a_side = -a / (mf + 1.0) * ln_na.log2() + l2na / (4.0 * mf + 4.0);
                a_side.min(l2n / (4.0 * mf + 3.0))
            };
            Ok((lower, upper))
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("smoothness p must be >= 1, got {p}")))
    }
}

/// Largest `j` with `2^j` inside the rule's window. Atomic rules floor at 0.
pub fn choose_resolution(rule: ResolutionRule, n: u64, alpha: f64) -> Result<u32> {
    let (lower, upper) = resolution_window(rule, n, alpha)?;
    let j = log2_floor(upper);
    if lower.is_finite() && (upper < 0.0 || (j as f64) < lower - 1e-12) {
        return Err(Error::InfeasibleResolution { lower: lower.exp2(), upper: upper.exp2() });
    }
    Ok(j)
}

/// [`choose_resolution`] clamped to `[floor, ceiling]`; an infeasible window
/// falls back to `floor`. The flag reports whether the rule was overridden.
pub fn resolve_clamped(rule: ResolutionRule, n: u64, alpha: f64, floor: u32, ceiling: u32) -> Result<(u32, bool)> {
    match choose_resolution(rule, n, alpha) {
        Ok(j) if j < floor => Ok((floor, true)),
        Ok(j) if j > ceiling => Ok((ceiling, true)),
        Ok(j) => Ok((j, false)),
        Err(Error::InfeasibleResolution { .. }) => Ok((floor, true)),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::privacy::{plan_spline_noise, plan_wavelet_noise, release};
    use crate::splines::quasi_project;
    use approx::assert_abs_diff_eq;

    #[test]
    fn atomic_spline_example() {
        let j = choose_resolution(ResolutionRule::AtomicSpline { p: 2.0 }, 1 << 20, 1.0).unwrap();
        assert_eq!(j, 3);
        // Large alpha saturates at the n^{1/(2p+1)} branch: 2^{20/5} = 16.
        let j = choose_resolution(ResolutionRule::AtomicSpline { p: 2.0 }, 1 << 20, 1e9).unwrap();
        assert_eq!(j, 4);
    }

    #[test]
    fn rules_monotone_in_n() {
        let rules = [
            ResolutionRule::AtomicSpline { p: 2.0 },
            ResolutionRule::AtomicWavelet { p: 2.0, a: 2.0 },
            ResolutionRule::AtomicWavelet { p: 1.0, a: 1.5 },
        ];
        for rule in rules {
            let mut prev = 0;
            for e in 1..40 {
                let j = choose_resolution(rule, 1u64 << e, 0.5).unwrap();
                assert!(j >= prev);
                prev = j;
            }
        }
    }

    #[test]
    fn smooth_rule_infeasible_at_small_n() {
        let rule = ResolutionRule::SmoothWavelet { p: 3.0, m: 0, a: 2.0, a_prime: 0.3 };
        assert!(matches!(choose_resolution(rule, 1 << 10, 1.0), Err(Error::InfeasibleResolution { .. })));
        assert_eq!(resolve_clamped(rule, 1 << 10, 1.0, 3, 10).unwrap(), (3, true));
    }

    #[test]
    fn zero_noise_spline_bundle_reproduces_spline() {
        let basis = Arc::new(BSplineBasis::new(4, 3).unwrap());
        let f = |x: f64| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin();
        let exact = quasi_project(f, &basis);
        let plan = plan_spline_noise(&basis, 1.0).unwrap();
        let mut bundle = release(&[0.5], &plan, 1, false).unwrap();
        bundle.levels[0] = exact.coeffs().to_vec();
        let est = spline_estimate(&bundle, &basis).unwrap();
        for t in 0..=50 {
            let x = t as f64 / 50.0;
            assert_abs_diff_eq!(est.value(x, 0).unwrap(), exact.value(x, 0).unwrap(), epsilon = 1e-12);
        }
        bundle.levels[0].iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(spline_estimate(&bundle, &basis).unwrap().value(0.3, 1).unwrap(), 0.0);
    }

    #[test]
    fn wavelet_estimate_levels_and_errors() {
        let ladder = Arc::new(MultiresolutionLadder::new(2, 6).unwrap());
        let plan = plan_wavelet_noise(&ladder, 1.0, 2.0).unwrap().without_noise();
        let bundle = release(&[0.25, 0.75], &plan, 3, false).unwrap();
        let base = wavelet_estimate(&bundle, &ladder, 2).unwrap();
        assert_eq!(base.piecewise().cells(), 8);
        assert!(matches!(wavelet_estimate(&bundle, &ladder, 7), Err(Error::ResolutionOutOfRange { .. })));
        assert!(matches!(wavelet_estimate(&bundle, &ladder, 1), Err(Error::ResolutionOutOfRange { .. })));
        let basis = Arc::new(BSplineBasis::new(3, 2).unwrap());
        assert!(matches!(spline_estimate(&bundle, &basis), Err(Error::Mismatch(_))));
        assert!(matches!(base.value(0.5, 2), Err(Error::UnsupportedDerivative { .. })));
    }

    #[test]
    fn exact_coefficients_give_projection_with_unit_mass() {
        let ladder = Arc::new(MultiresolutionLadder::new(3, 6).unwrap());
        let f = |x: f64| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin();
        let coeffs = ladder.analyze(f, 6).unwrap();
        let est = DensityEstimate::from_wavelet(Arc::clone(&ladder), coeffs).unwrap();
        assert_abs_diff_eq!(est.integral(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(est.value(0.3, 0).unwrap(), f(0.3), epsilon = 1e-5);
        let clipped = est.normalized_clipped().unwrap();
        assert_abs_diff_eq!(clipped.mass(), 1.0, epsilon = 1e-10);
    }
}
