//! Equispaced clamped B-spline bases, their derivatives and norms, and the
//! local dual system behind the quasi-interpolant.
//!
//! Basis functions are indexed from 0: `B_0, ..., B_{N-1}` with
//! `N = 2^j + d`, and `B_k` is supported on `[t_k, t_{k+d+1})`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::poly::{self, PiecewisePolynomial};
use crate::quadrature::GaussLegendre;

/// Largest supported spline degree.
pub const MAX_DEGREE: usize = 8;

const W: usize = MAX_DEGREE + 1;

/// Clamped knot vector on `[0, 1]` with `2^j` equal cells.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotSequence {
    degree: usize,
    level: u32,
    knots: Vec<f64>,
}

impl KnotSequence {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of non-degenerate knot intervals, `2^j`.
    pub fn cells(&self) -> usize {
        1usize << self.level
    }
}

/// Knots `0 (d+1 times), 1/2^j, ..., (2^j - 1)/2^j, 1 (d+1 times)`.
pub fn make_uniform_knots(level: u32, degree: usize) -> KnotSequence {
    let cells = 1usize << level;
    let len = cells + 2 * degree + 1;
    let knots = (0..len)
        .map(|i| {
            if i <= degree {
                0.0
            } else if i >= cells + degree {
                1.0
            } else {
                (i - degree) as f64 / cells as f64
            }
        })
        .collect();
    KnotSequence { degree, level, knots }
}

/// Values (and derivatives) of the `d + 1` B-splines that are nonzero on one
/// cell, evaluated at a single point.
#[derive(Debug, Clone, Copy)]
pub struct LocalBasis {
    /// Index of the first nonzero basis function.
    pub first: usize,
    /// `ders[q][r]` is the `q`-th derivative of `B_{first + r}`.
    pub ders: [[f64; W]; W],
}

/// Cox-de Boor values with derivatives up to `nd` for the knot span `span`
/// (`t[span] <= x < t[span + 1]`, nonempty).
fn basis_derivatives(t: &[f64], p: usize, span: usize, x: f64, nd: usize) -> [[f64; W]; W] {
    let mut ndu = [[0.0f64; W]; W];
    let mut left = [0.0f64; W];
    let mut right = [0.0f64; W];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = x - t[span + 1 - j];
        right[j] = t[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = [[0.0f64; W]; W];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    let nd = nd.min(p);
    let mut a = [[0.0f64; W]; 2];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=nd {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                let rk = rk as usize;
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            let j1: usize = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2: usize = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = p as f64;
    for k in 1..=nd {
        for j in 0..=p {
            ders[k][j] *= factor;
        }
        factor *= (p - k) as f64;
    }
    ders
}

/// Local dual functional of one basis function: a polynomial weight on a
/// single knot interval, `L_k(f) = (1/h) * int_{I} f(x) sum_i a_i u^i dx`
/// with `u = (x - t_m) / h`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFunctional {
    /// Knot index `m` of the chosen interval `[t_m, t_{m+1})`.
    pub interval: usize,
    /// Polynomial coefficients `a_0, ..., a_d`.
    pub coeffs: Vec<f64>,
}

/// B-spline basis of degree `d` on the equispaced knots of level `j`, with
/// L2 norms and the quasi-interpolant dual table.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    knots: KnotSequence,
    norms: Vec<f64>,
    duals: Vec<DualFunctional>,
    dual_sups: Vec<f64>,
    /// Basis indices whose dual lives on each cell.
    hosted: Vec<Vec<usize>>,
}

impl BSplineBasis {
    pub fn new(level: u32, degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::InvalidParameter(format!(
                "degree {degree} exceeds the supported maximum {MAX_DEGREE}"
            )));
        }
        if level > 24 {
            return Err(Error::InvalidParameter(format!("level {level} is too fine")));
        }
        let knots = make_uniform_knots(level, degree);
        let mut basis = Self {
            knots,
            norms: Vec::new(),
            duals: Vec::new(),
            dual_sups: Vec::new(),
            hosted: Vec::new(),
        };
        basis.norms = basis.compute_norms();
        basis.build_quasi_interpolant()?;
        Ok(basis)
    }

    pub fn degree(&self) -> usize {
        self.knots.degree
    }

    pub fn level(&self) -> u32 {
        self.knots.level
    }

    pub fn knots(&self) -> &KnotSequence {
        &self.knots
    }

    /// Number of basis functions, `2^j + d`.
    pub fn dim(&self) -> usize {
        self.knots.cells() + self.knots.degree
    }

    pub fn cells(&self) -> usize {
        self.knots.cells()
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.cells() as f64
    }

    /// Cell containing `x`; `x = 1` maps to the last cell.
    #[inline]
    pub fn cell_of(&self, x: f64) -> usize {
        let c = (x * self.cells() as f64).floor();
        if c <= 0.0 {
            0
        } else {
            (c as usize).min(self.cells() - 1)
        }
    }

    pub fn support(&self, k: usize) -> (f64, f64) {
        let t = &self.knots.knots;
        (t[k], t[k + self.degree() + 1])
    }

    /// Nonzero basis functions at `x` with derivatives up to `nd` (at most
    /// `d`, the last being the piecewise-constant top derivative).
    #[inline]
    pub fn local(&self, x: f64, nd: usize) -> LocalBasis {
        let cell = self.cell_of(x);
        self.local_in_cell(cell, x, nd)
    }

    /// As [`local`](Self::local) but using the polynomial piece of `cell`.
    #[inline]
    pub fn local_in_cell(&self, cell: usize, x: f64, nd: usize) -> LocalBasis {
        let d = self.degree();
        LocalBasis { first: cell, ders: basis_derivatives(&self.knots.knots, d, cell + d, x, nd) }
    }

    fn check_order(&self, q: usize) -> Result<()> {
        let d = self.degree();
        if q > 0 && q + 1 > d {
            return Err(Error::UnsupportedDerivative { order: q, degree: d, max: d.saturating_sub(1) });
        }
        Ok(())
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.dim() {
            return Err(Error::IndexOutOfRange { index: k as i64, lo: 0, hi: self.dim() as i64 - 1 });
        }
        Ok(())
    }

    /// `B_k^{(q)}(x)` for `q <= d - 1`.
    pub fn value(&self, k: usize, x: f64, q: usize) -> Result<f64> {
        self.check_index(k)?;
        self.check_order(q)?;
        check_domain(x)?;
        Ok(self.value_unchecked(k, x, q))
    }

    #[inline]
    pub fn value_unchecked(&self, k: usize, x: f64, q: usize) -> f64 {
        let loc = self.local(x, q);
        if k < loc.first || k > loc.first + self.degree() {
            0.0
        } else {
            loc.ders[q][k - loc.first]
        }
    }

    /// `||B_k||_{L2}`.
    pub fn norm(&self, k: usize) -> f64 {
        self.norms[k]
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    fn compute_norms(&self) -> Vec<f64> {
        let d = self.degree();
        let gl = GaussLegendre::new(d + 3);
        let h = self.cell_width();
        let mut sq = vec![0.0; self.dim()];
        for cell in 0..self.cells() {
            let a = cell as f64 * h;
            for (x, w) in gl.mapped(a, a + h) {
                let loc = self.local_in_cell(cell, x, 0);
                for r in 0..=d {
                    sq[cell + r] += w * loc.ders[0][r] * loc.ders[0][r];
                }
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    /// Widest interval among `k..=k+d` (smallest index on ties), then the
    /// local biorthogonal system on it.
    fn build_quasi_interpolant(&mut self) -> Result<()> {
        let d = self.degree();
        let t = self.knots.knots.clone();
        let gl = GaussLegendre::new(d + 3);
        let mut duals = Vec::with_capacity(self.dim());
        let mut sups = Vec::with_capacity(self.dim());
        let mut hosted = vec![Vec::new(); self.cells()];
        for k in 0..self.dim() {
            let m = widest_interval(t.as_slice(), k, d);
            let h = t[m + 1] - t[m];
            let cell = m - d;
            // M[l][r] = int_0^1 u^r B_{m-d+l}(t_m + u h) du
            let mut mat = DMatrix::<f64>::zeros(d + 1, d + 1);
            for (u, w) in gl.mapped(0.0, 1.0) {
                let loc = self.local_in_cell(cell, t[m] + u * h, 0);
                let mut up = 1.0;
                for r in 0..=d {
                    for l in 0..=d {
                        mat[(l, r)] += w * up * loc.ders[0][l];
                    }
                    up *= u;
                }
            }
            let mut rhs = DVector::<f64>::zeros(d + 1);
            rhs[k + d - m] = 1.0;
            let lu = mat.clone().lu();
            let mut a = lu
                .solve(&rhs)
                .filter(|v| v.iter().all(|x| x.is_finite()))
                .ok_or(Error::SingularDualSystem { index: k })?;
            // The monomial system is ill-conditioned for larger d; two
            // refinement steps bring the residual back to rounding level.
            for _ in 0..2 {
                let resid = &rhs - &mat * &a;
                if let Some(delta) = lu.solve(&resid) {
                    a += delta;
                }
            }
            let coeffs: Vec<f64> = a.iter().copied().collect();
            sups.push(self.norms[k] / h * poly::abs_max_on_unit(&coeffs));
            hosted[cell].push(k);
            duals.push(DualFunctional { interval: m, coeffs });
        }
        self.duals = duals;
        self.dual_sups = sups;
        self.hosted = hosted;
        Ok(())
    }

    pub fn dual(&self, k: usize) -> &DualFunctional {
        &self.duals[k]
    }

    /// Cell index of the interval carrying the dual of `B_k`.
    pub fn dual_cell(&self, k: usize) -> usize {
        self.duals[k].interval - self.degree()
    }

    /// Basis indices whose dual function is supported on `cell`.
    pub fn duals_on_cell(&self, cell: usize) -> &[usize] {
        &self.hosted[cell]
    }

    /// `e_k(x) = ||B_k|| / h * 1[x in I_m] * sum_i a_i u^i`, the feature whose
    /// expectation under a density `f` is `||B_k|| L_k(f)`.
    pub fn dual_function_value(&self, k: usize, x: f64) -> f64 {
        let cell = self.cell_of(x);
        if cell != self.dual_cell(k) {
            return 0.0;
        }
        let h = self.cell_width();
        let u = (x - cell as f64 * h) / h;
        self.norms[k] / h * poly::eval(&self.duals[k].coeffs, u)
    }

    /// `sup_x |e_k(x)|`.
    pub fn dual_sup(&self, k: usize) -> f64 {
        self.dual_sups[k]
    }

    /// `max_k sup_x |e_k(x)|`.
    pub fn max_dual_sup(&self) -> f64 {
        self.dual_sups.iter().copied().fold(0.0, f64::max)
    }

    /// `L_k(f)` by Gauss-Legendre quadrature with `nodes` points.
    pub fn apply_dual(&self, k: usize, f: impl Fn(f64) -> f64, nodes: usize) -> f64 {
        let gl = GaussLegendre::new(nodes);
        self.apply_dual_with(k, &f, &gl)
    }

    fn apply_dual_with(&self, k: usize, f: &dyn Fn(f64) -> f64, gl: &GaussLegendre) -> f64 {
        let t = &self.knots.knots;
        let m = self.duals[k].interval;
        let (a, b) = (t[m], t[m + 1]);
        let h = b - a;
        gl.mapped(a, b)
            .map(|(x, w)| w * f(x) * poly::eval(&self.duals[k].coeffs, (x - a) / h))
            .sum::<f64>()
            / h
    }

    /// Gram matrix of the normalized basis (bandwidth `d`).
    pub fn gram(&self) -> BandMatrix {
        let d = self.degree();
        let gl = GaussLegendre::new(d + 3);
        let h = self.cell_width();
        let mut g = BandMatrix::zeros(self.dim(), d);
        for cell in 0..self.cells() {
            let a = cell as f64 * h;
            for (x, w) in gl.mapped(a, a + h) {
                let loc = self.local_in_cell(cell, x, 0);
                for r in 0..=d {
                    let vr = loc.ders[0][r] / self.norms[cell + r];
                    for s in 0..=r {
                        let vs = loc.ders[0][s] / self.norms[cell + s];
                        g.add(cell + r, cell + s, w * vr * vs);
                    }
                }
            }
        }
        g
    }
}

/// Widest knot interval among `k..=k+d`; ties go to the interval nearest
/// the middle of the support, then to the smaller index.
fn widest_interval(t: &[f64], k: usize, d: usize) -> usize {
    let width = |m: usize| t[m + 1] - t[m];
    let centre2 = 2 * k + d;
    let mut best = k;
    for cand in k..=k + d {
        let (wc, wb) = (width(cand), width(best));
        let closer = (2 * cand).abs_diff(centre2) < (2 * best).abs_diff(centre2);
        if wc > wb || (wc == wb && closer) {
            best = cand;
        }
    }
    best
}

#[inline]
pub(crate) fn check_domain(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(x))
    }
}

/// Default Gauss nodes per cell used by [`quasi_project`].
pub fn default_projection_nodes(degree: usize) -> usize {
    (degree + 3).max(8)
}

/// Quasi-interpolant `S f = sum_k L_k(f) B_k`, returned in the normalized
/// basis (coefficients `L_k(f) ||B_k||`).
pub fn quasi_project(f: impl Fn(f64) -> f64, basis: &Arc<BSplineBasis>) -> SplineFunction {
    quasi_project_with_nodes(f, basis, default_projection_nodes(basis.degree()))
}

pub fn quasi_project_with_nodes(
    f: impl Fn(f64) -> f64,
    basis: &Arc<BSplineBasis>,
    nodes: usize,
) -> SplineFunction {
    let gl = GaussLegendre::new(nodes);
    let coeffs = (0..basis.dim())
        .map(|k| basis.apply_dual_with(k, &f, &gl) * basis.norm(k))
        .collect();
    SplineFunction { basis: Arc::clone(basis), coeffs }
}

/// Orthogonal projection of `f` onto the spline space, integrating with
/// `nodes` Gauss points per cell.
pub fn l2_project(f: impl Fn(f64) -> f64, basis: &Arc<BSplineBasis>, nodes: usize) -> Result<SplineFunction> {
    let rhs = inner_products(f, basis, nodes);
    let coeffs = basis.gram().cholesky()?.solve(&rhs);
    SplineFunction::new(Arc::clone(basis), coeffs)
}

/// `<f, B_k / ||B_k||>` for every `k`, with `nodes` Gauss points per cell.
pub fn inner_products(f: impl Fn(f64) -> f64, basis: &BSplineBasis, nodes: usize) -> Vec<f64> {
    let d = basis.degree();
    let gl = GaussLegendre::new(nodes);
    let h = basis.cell_width();
    let mut out = vec![0.0; basis.dim()];
    for cell in 0..basis.cells() {
        let a = cell as f64 * h;
        for (x, w) in gl.mapped(a, a + h) {
            let fx = w * f(x);
            let loc = basis.local_in_cell(cell, x, 0);
            for r in 0..=d {
                out[cell + r] += fx * loc.ders[0][r] / basis.norms[cell + r];
            }
        }
    }
    out
}

/// A spline `sum_k c_k B_k / ||B_k||` in the normalized basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineFunction {
    basis: Arc<BSplineBasis>,
    coeffs: Vec<f64>,
}

impl SplineFunction {
    pub fn new(basis: Arc<BSplineBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.dim() {
            return Err(Error::Shape { expected: basis.dim(), found: coeffs.len() });
        }
        Ok(Self { basis, coeffs })
    }

    pub fn zero(basis: Arc<BSplineBasis>) -> Self {
        let n = basis.dim();
        Self { basis, coeffs: vec![0.0; n] }
    }

    pub fn basis(&self) -> &Arc<BSplineBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `s^{(q)}(x)` for `q <= d - 1`.
    pub fn value(&self, x: f64, q: usize) -> Result<f64> {
        self.basis.check_order(q)?;
        check_domain(x)?;
        Ok(self.value_unchecked(x, q))
    }

    /// Evaluation without order or domain checks (`q <= d` allowed; the top
    /// derivative is the piecewise constant of the containing cell).
    #[inline]
    pub fn value_unchecked(&self, x: f64, q: usize) -> f64 {
        let loc = self.basis.local(x, q);
        let d = self.basis.degree();
        (0..=d)
            .map(|r| {
                let k = loc.first + r;
                self.coeffs[k] / self.basis.norms[k] * loc.ders[q][r]
            })
            .sum()
    }

    /// Cellwise power-basis form on the level's mesh.
    pub fn to_piecewise(&self) -> PiecewisePolynomial {
        let b = &self.basis;
        let d = b.degree();
        let h = b.cell_width();
        let mut out = Vec::with_capacity(b.cells() * (d + 1));
        for cell in 0..b.cells() {
            let a = cell as f64 * h;
            let loc = b.local_in_cell(cell, a, d);
            let mut hq = 1.0;
            let mut fact = 1.0;
            for q in 0..=d {
                if q > 0 {
                    hq *= h;
                    fact *= q as f64;
                }
                let v: f64 = (0..=d)
                    .map(|r| self.coeffs[cell + r] / b.norms[cell + r] * loc.ders[q][r])
                    .sum();
                out.push(v * hq / fact);
            }
        }
        PiecewisePolynomial::new(b.cells(), d + 1, out)
    }
}
