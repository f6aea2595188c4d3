//! Plug-in functionals of a density estimate and their first-order
//! derivative representations.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimators::DensityEstimate;
use crate::poly::PiecewisePolynomial;
use crate::quadrature::{uniform_breaks, GaussLegendre};

pub const DEFAULT_FLOOR: f64 = 1e-6;

/// Gauss nodes per interval for non-polynomial integrands.
const NODES: usize = 16;

/// A function and its derivatives: `f(x, q) = f^{(q)}(x)`.
pub type Derivatives<'a> = &'a (dyn Fn(f64, usize) -> f64 + Sync);

/// Positive reference density for the affinity functional.
#[derive(Clone)]
pub struct ReferenceDensity {
    label: String,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for ReferenceDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReferenceDensity").field("label", &self.label).finish()
    }
}

impl ReferenceDensity {
    pub fn new(label: impl Into<String>, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), eval: Arc::new(eval) }
    }

    /// Values on an equispaced grid of `[0, 1]` (first at 0, last at 1),
    /// linearly interpolated.
    pub fn from_grid(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParameter("reference density needs at least two grid values".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParameter(format!("reference density must be positive, found {v}")));
        }
        let m = values.len() - 1;
        Ok(Self::new(label, move |x: f64| {
            let t = (x.clamp(0.0, 1.0) * m as f64).min(m as f64);
            let i = (t.floor() as usize).min(m - 1);
            let w = t - i as f64;
            values[i] * (1.0 - w) + values[i + 1] * w
        }))
    }

    /// Reads one value per line (blank lines and `#` comments skipped).
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("{}:{}: not a number: {line}", path.display(), i + 1)))?;
            values.push(v);
        }
        Self::from_grid(path.display().to_string(), values)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        (self.eval)(x)
    }
}

#[derive(Debug, Clone)]
pub enum FunctionalKind {
    /// `f^{(r)}(x0)`.
    Point { r: usize, x0: f64 },
    /// `int |f^{(m)}|^q`.
    Power { m: usize, q: f64 },
    /// `2 int f g / (f + g)`.
    Affinity { reference: ReferenceDensity },
    /// `int f log f`.
    Entropy,
    /// `int (f')^2 / f`.
    Fisher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalClass {
    Smooth,
    Atomic { index: usize },
}

/// A catalog functional with its positivity floor.
#[derive(Debug, Clone)]
pub struct FunctionalSpec {
    pub kind: FunctionalKind,
    pub floor: f64,
}

/// A plug-in value and whether the positivity floor changed the integrand
/// anywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub floor_active: bool,
}

/// Point mass of a derivative measure: `mass * h^{(order)}(at)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub order: usize,
    pub at: f64,
    pub mass: f64,
}

impl FunctionalSpec {
    pub fn new(kind: FunctionalKind) -> Self {
        Self { kind, floor: DEFAULT_FLOOR }
    }

    pub fn point(r: usize, x0: f64) -> Self {
        Self::new(FunctionalKind::Point { r, x0 })
    }

    pub fn power(m: usize, q: f64) -> Self {
        Self::new(FunctionalKind::Power { m, q })
    }

    pub fn affinity(reference: ReferenceDensity) -> Self {
        Self::new(FunctionalKind::Affinity { reference })
    }

    pub fn entropy() -> Self {
        Self::new(FunctionalKind::Entropy)
    }

    pub fn fisher() -> Self {
        Self::new(FunctionalKind::Fisher)
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    /// Parses `point:r=1,x0=0.5`, `power:m=0,q=2`, `entropy`, `fisher` or
    /// `affinity:g=<file>`.
    pub fn parse(id: &str) -> Result<Self> {
        let (name, args) = id.split_once(':').unwrap_or((id, ""));
        let mut params = Vec::new();
        for part in args.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value in '{part}'")))?;
            params.push((k.trim(), v.trim()));
        }
        let get = |key: &str| params.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let num = |key: &str, default: Option<f64>| -> Result<f64> {
            match get(key) {
                Some(v) => v.parse().map_err(|_| Error::InvalidParameter(format!("{key}: not a number: {v}"))),
                None => default.ok_or_else(|| Error::InvalidParameter(format!("{name} needs {key}"))),
            }
        };
        let known: &[&str] = match name {
            "point" => &["r", "x0", "floor"],
            "power" => &["m", "q", "floor"],
            "affinity" => &["g", "floor"],
            "entropy" | "fisher" => &["floor"],
            _ => return Err(Error::InvalidParameter(format!("unknown functional '{name}'"))),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !known.contains(k)) {
            return Err(Error::InvalidParameter(format!("{name} does not take '{k}'")));
        }
        let spec = match name {
            "point" => {
                let r = num("r", Some(0.0))?;
                if r < 0.0 || r.fract() != 0.0 {
                    return Err(Error::InvalidParameter(format!("r must be a non-negative integer, got {r}")));
                }
                let x0 = num("x0", None)?;
                if !(0.0..=1.0).contains(&x0) {
                    return Err(Error::Domain(x0));
                }
                Self::point(r as usize, x0)
            }
            "power" => {
                let m = num("m", Some(0.0))?;
                if m < 0.0 || m.fract() != 0.0 {
                    return Err(Error::InvalidParameter(format!("m must be a non-negative integer, got {m}")));
                }
                let q = num("q", Some(2.0))?;
                if !(q >= 2.0 && q.is_finite()) {
                    return Err(Error::InvalidParameter(format!("q must be at least 2, got {q}")));
                }
                Self::power(m as usize, q)
            }
            "affinity" => {
                let path = get("g").ok_or_else(|| Error::InvalidParameter("affinity needs g=<file>".into()))?;
                Self::affinity(ReferenceDensity::from_file(path)?)
            }
            "entropy" => Self::entropy(),
            _ => Self::fisher(),
        };
        let floor = num("floor", Some(DEFAULT_FLOOR))?;
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::InvalidParameter(format!("floor must be positive, got {floor}")));
        }
        Ok(spec.with_floor(floor))
    }

    /// Order `m` of the remainder norm.
    pub fn order(&self) -> usize {
        match &self.kind {
            FunctionalKind::Point { .. } => 0,
            FunctionalKind::Power { m, .. } => *m,
            FunctionalKind::Affinity { .. } | FunctionalKind::Entropy => 0,
            FunctionalKind::Fisher => 1,
        }
    }

    pub fn class(&self) -> FunctionalClass {
        match &self.kind {
            FunctionalKind::Point { r, .. } => FunctionalClass::Atomic { index: *r },
            FunctionalKind::Power { m: 0, .. } => FunctionalClass::Smooth,
            FunctionalKind::Power { m, .. } => FunctionalClass::Atomic { index: m - 1 },
            FunctionalKind::Affinity { .. } | FunctionalKind::Entropy => FunctionalClass::Smooth,
            FunctionalKind::Fisher => FunctionalClass::Atomic { index: 0 },
        }
    }

    /// Highest derivative of `f` the value needs.
    pub fn needed_order(&self) -> usize {
        match &self.kind {
            FunctionalKind::Point { r, .. } => *r,
            FunctionalKind::Power { m, .. } => *m,
            FunctionalKind::Affinity { .. } | FunctionalKind::Entropy => 0,
            FunctionalKind::Fisher => 1,
        }
    }

    pub fn id(&self) -> String {
        match &self.kind {
            FunctionalKind::Point { r, x0 } => format!("point:r={r},x0={x0}"),
            FunctionalKind::Power { m, q } => format!("power:m={m},q={q}"),
            FunctionalKind::Affinity { reference } => format!("affinity:g={}", reference.label()),
            FunctionalKind::Entropy => "entropy".into(),
            FunctionalKind::Fisher => "fisher".into(),
        }
    }

    /// Integrand at `x` given `vals = [f, f', ...]`, and whether the floor
    /// was hit.
    fn integrand(&self, x: f64, vals: &[f64]) -> (f64, bool) {
        let eps = self.floor;
        match &self.kind {
            FunctionalKind::Point { .. } => unreachable!("point evaluation has no integrand"),
            FunctionalKind::Power { m, q } => {
                let v = vals[*m].abs();
                (if *q == 2.0 { v * v } else { v.powf(*q) }, false)
            }
            FunctionalKind::Affinity { reference } => {
                let g = reference.value(x);
                let den = vals[0] + g;
                (2.0 * vals[0] * g / den.max(eps), den < eps)
            }
            FunctionalKind::Entropy => {
                let f = vals[0].max(eps);
                (f * f.ln(), vals[0] < eps)
            }
            FunctionalKind::Fisher => {
                let f = vals[0].max(eps);
                (vals[1] * vals[1] / f, vals[0] < eps)
            }
        }
    }

    fn check_estimate(&self, est: &DensityEstimate) -> Result<()> {
        let need = match &self.kind {
            FunctionalKind::Fisher => 1,
            _ => self.needed_order(),
        };
        if need > est.max_order() {
            return Err(Error::UnsupportedDerivative { order: need, degree: est.degree(), max: est.max_order() });
        }
        Ok(())
    }

    /// Breaks at which the integrand of the estimate loses smoothness: cell
    /// boundaries, sign changes of `f^{(m)}` for powers, and floor crossings.
    fn estimate_breaks(&self, pw: &PiecewisePolynomial) -> Vec<f64> {
        match &self.kind {
            FunctionalKind::Power { m, .. } => pw.derivative(*m).sign_breaks(),
            FunctionalKind::Entropy | FunctionalKind::Fisher => pw.shifted(-self.floor).sign_breaks(),
            _ => pw.breaks(),
        }
    }

    /// `Lambda(f_n)`.
    pub fn evaluate(&self, est: &DensityEstimate) -> Result<Evaluation> {
        self.check_estimate(est)?;
        let pw = est.piecewise();
        match &self.kind {
            FunctionalKind::Point { r, x0 } => Ok(Evaluation { value: est.value(*x0, *r)?, floor_active: false }),
            FunctionalKind::Affinity { reference } => {
                check_reference(reference, &pw.breaks())?;
                Ok(self.integrate_piecewise(pw, &pw.breaks()))
            }
            _ => Ok(self.integrate_piecewise(pw, &self.estimate_breaks(pw))),
        }
    }

    fn integrate_piecewise(&self, pw: &PiecewisePolynomial, breaks: &[f64]) -> Evaluation {
        let nd = self.needed_order();
        let mut floored = false;
        let value = pw.integrate_over(breaks, NODES, nd, |x, v| {
            let (val, hit) = self.integrand(x, v);
            floored |= hit;
            val
        });
        Evaluation { value, floor_active: floored }
    }

    /// `Lambda(f)` for a function given by its derivatives, integrated over
    /// `cells` uniform cells. Used for oracle values.
    pub fn evaluate_function(&self, f: Derivatives<'_>, cells: usize) -> Result<Evaluation> {
        let breaks = uniform_breaks(cells);
        match &self.kind {
            FunctionalKind::Point { r, x0 } => Ok(Evaluation { value: f(*x0, *r), floor_active: false }),
            kind => {
                if let FunctionalKind::Affinity { reference } = kind {
                    check_reference(reference, &breaks)?;
                }
                let nd = self.needed_order();
                let gl = GaussLegendre::new(NODES);
                let mut vals = vec![0.0; nd + 1];
                let mut floored = false;
                let mut total = 0.0;
                for w in breaks.windows(2) {
                    for (x, wt) in gl.mapped(w[0], w[1]) {
                        for (q, v) in vals.iter_mut().enumerate() {
                            *v = f(x, q);
                        }
                        let (val, hit) = self.integrand(x, &vals);
                        floored |= hit;
                        total += wt * val;
                    }
                }
                Ok(Evaluation { value: total, floor_active: floored })
            }
        }
    }

    /// Point masses of the derivative measures at `f`.
    pub fn atoms(&self, f: Derivatives<'_>) -> Vec<Atom> {
        match &self.kind {
            FunctionalKind::Point { r, x0 } => vec![Atom { order: *r, at: *x0, mass: 1.0 }],
            FunctionalKind::Fisher => {
                let eps = self.floor;
                vec![
                    Atom { order: 0, at: 1.0, mass: 2.0 * f(1.0, 1) / f(1.0, 0).max(eps) },
                    Atom { order: 0, at: 0.0, mass: -2.0 * f(0.0, 1) / f(0.0, 0).max(eps) },
                ]
            }
            _ => Vec::new(),
        }
    }

    /// Densities of the absolutely continuous parts: `(order, weight(x))`
    /// with `T_f(h) = sum int h^{(order)} weight + atoms`.
    fn continuous_weights(&self, x: f64, f: Derivatives<'_>) -> Vec<(usize, f64)> {
        let eps = self.floor;
        match &self.kind {
            FunctionalKind::Point { .. } => Vec::new(),
            FunctionalKind::Power { m, q } => {
                let v = f(x, *m);
                vec![(*m, q * v.abs().powf(q - 1.0) * v.signum())]
            }
            FunctionalKind::Affinity { reference } => {
                let g = reference.value(x);
                let den = (f(x, 0) + g).max(eps);
                vec![(0, 2.0 * g * g / (den * den))]
            }
            FunctionalKind::Entropy => vec![(0, 1.0 + f(x, 0).max(eps).ln())],
            FunctionalKind::Fisher => {
                // Integrated by parts: (f'/f)^2 - 2 f''/f plus boundary atoms.
                let v = f(x, 0).max(eps);
                let d1 = f(x, 1);
                vec![(0, d1 * d1 / (v * v) - 2.0 * f(x, 2) / v)]
            }
        }
    }

    /// First-order term `T_f(h)`.
    pub fn derivative_apply(&self, f: Derivatives<'_>, h: Derivatives<'_>, cells: usize) -> f64 {
        let gl = GaussLegendre::new(NODES);
        let mut total = 0.0;
        if !matches!(self.kind, FunctionalKind::Point { .. }) {
            for w in uniform_breaks(cells).windows(2) {
                for (x, wt) in gl.mapped(w[0], w[1]) {
                    for (order, weight) in self.continuous_weights(x, f) {
                        total += wt * weight * h(x, order);
                    }
                }
            }
        }
        for a in self.atoms(f) {
            total += a.mass * h(a.at, a.order);
        }
        total
    }

    /// Total-variation mass `sum_j |mu_j|([0, 1])` of the derivative at `f`.
    pub fn derivative_mass(&self, f: Derivatives<'_>, cells: usize) -> f64 {
        let gl = GaussLegendre::new(NODES);
        let mut total = 0.0;
        if !matches!(self.kind, FunctionalKind::Point { .. }) {
            for w in uniform_breaks(cells).windows(2) {
                for (x, wt) in gl.mapped(w[0], w[1]) {
                    total += self.continuous_weights(x, f).iter().map(|(_, v)| wt * v.abs()).sum::<f64>();
                }
            }
        }
        total + self.atoms(f).iter().map(|a| a.mass.abs()).sum::<f64>()
    }
}

fn check_reference(reference: &ReferenceDensity, breaks: &[f64]) -> Result<()> {
    let gl = GaussLegendre::new(NODES);
    for w in breaks.windows(2) {
        for (x, _) in gl.mapped(w[0], w[1]) {
            let g = reference.value(x);
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "reference density {} is not positive at {x}: {g}",
                    reference.label()
                )));
            }
        }
    }
    Ok(())
}

/// Total-variation mass of the derivative of `spec` at the estimate.
pub fn functional_derivative_bound(spec: &FunctionalSpec, est: &DensityEstimate) -> Result<f64> {
    spec.check_estimate(est)?;
    let pw = est.piecewise();
    let f = |x: f64, q: usize| pw.eval(x, q);
    Ok(spec.derivative_mass(&f, pw.cells().max(64)))
}

/// Values of every catalog functional on one estimate.
pub fn evaluate_all(specs: &[FunctionalSpec], est: &DensityEstimate) -> Vec<Result<Evaluation>> {
    specs.iter().map(|s| s.evaluate(est)).collect()
}
