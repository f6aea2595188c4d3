//! Boundary-corrected spline wavelets on `[0, 1]`.
//!
//! Level `j` of the ladder spans the orthogonal complement `U_j` of `V_j` in
//! `V_{j+1}`. Its `2^j` wavelets are indexed by `k = -d, ..., 2^j - d - 1`:
//! `d` left boundary wavelets, `2^j - 2d` dyadic translates of one mother
//! wavelet, and `d` right boundary wavelets obtained by reflection. The base
//! level `j0 - 1` holds the normalized B-splines of `V_{j0}`, indexed
//! `1, ..., 2^{j0} + d`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{BandCholesky, BandMatrix};
use crate::poly::{self, PiecewisePolynomial};
use crate::quadrature::GaussLegendre;
use crate::splines::{BSplineBasis, SplineFunction};

/// Smallest `j >= 1` with `2^j >= 2d + 1`.
pub fn base_level(degree: usize) -> u32 {
    let mut j = 1;
    while (1usize << j) < 2 * degree + 1 {
        j += 1;
    }
    j
}

/// A linear combination of consecutive normalized B-splines of `V_{j+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FineCombination {
    /// Index of the first fine basis function involved.
    pub first: usize,
    pub coeffs: Vec<f64>,
}

impl FineCombination {
    pub fn last(&self) -> usize {
        self.first + self.coeffs.len() - 1
    }

    /// `<a, b>` through the Gram matrix of the fine normalized basis.
    fn inner(&self, other: &FineCombination, gram: &BandMatrix) -> f64 {
        let bw = gram.bandwidth();
        let mut s = 0.0;
        for (i, &ca) in self.coeffs.iter().enumerate() {
            let p = self.first + i;
            let lo = p.saturating_sub(bw).max(other.first);
            let hi = (p + bw).min(other.last());
            if lo > hi {
                continue;
            }
            for q in lo..=hi {
                s += ca * gram.get(p, q) * other.coeffs[q - other.first];
            }
        }
        s
    }

    /// Cellwise polynomial pieces on the fine mesh, returned as
    /// `(cell, local power-basis coefficients)`.
    fn pieces(&self, fine: &BSplineBasis) -> Vec<(usize, Vec<f64>)> {
        let d = fine.degree();
        let h = fine.cell_width();
        let lo = self.first.saturating_sub(d);
        let hi = self.last().min(fine.cells() - 1);
        let mut out = Vec::with_capacity(hi + 1 - lo);
        for cell in lo..=hi {
            let a = cell as f64 * h;
            let loc = fine.local_in_cell(cell, a, d);
            let mut coeffs = Vec::with_capacity(d + 1);
            let (mut hq, mut fact) = (1.0, 1.0);
            for q in 0..=d {
                if q > 0 {
                    hq *= h;
                    fact *= q as f64;
                }
                let mut v = 0.0;
                for r in 0..=d {
                    let p = cell + r;
                    if p >= self.first && p <= self.last() {
                        v += self.coeffs[p - self.first] / fine.norm(p) * loc.ders[q][r];
                    }
                }
                coeffs.push(v * hq / fact);
            }
            out.push((cell, coeffs));
        }
        out
    }

    fn sup(&self, fine: &BSplineBasis) -> f64 {
        self.pieces(fine).iter().map(|(_, c)| poly::abs_max_on_unit(c)).fold(0.0, f64::max)
    }
}

/// One detail level `U_j`.
#[derive(Debug, Clone)]
pub struct WaveletLevel {
    level: u32,
    fine: Arc<BSplineBasis>,
    wavelets: Vec<FineCombination>,
    gram: BandMatrix,
    chol: BandCholesky,
    /// For each fine basis index: `(position, coefficient / ||B_p||)`.
    touching: Vec<Vec<(u32, f64)>>,
    sups: Vec<f64>,
    max_overlap: usize,
}

impl WaveletLevel {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.wavelets.len()
    }

    /// Basis of `V_{j+1}` in which the wavelets are expressed.
    pub fn fine_basis(&self) -> &Arc<BSplineBasis> {
        &self.fine
    }

    /// Wavelet at position `pos` (index `k = pos - d`).
    pub fn wavelet(&self, pos: usize) -> &FineCombination {
        &self.wavelets[pos]
    }

    /// Wavelet at position `pos` as an element of `V_{j+1}`.
    pub fn wavelet_spline(&self, pos: usize) -> SplineFunction {
        let w = &self.wavelets[pos];
        let mut c = vec![0.0; self.fine.dim()];
        c[w.first..=w.last()].copy_from_slice(&w.coeffs);
        SplineFunction::new(Arc::clone(&self.fine), c).expect("dimension matches")
    }

    pub fn gram(&self) -> &BandMatrix {
        &self.gram
    }

    pub fn sup(&self, pos: usize) -> f64 {
        self.sups[pos]
    }
}

/// Null space of `m` as orthonormal columns, using singular values below
/// `tol * max(sigma)`.
fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let cols = m.ncols();
    let mut sq = DMatrix::<f64>::zeros(cols.max(m.nrows()), cols);
    sq.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let null: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] <= tol * smax).collect();
    let mut out = DMatrix::<f64>::zeros(cols, null.len());
    for (c, &i) in null.iter().enumerate() {
        for r in 0..cols {
            out[(r, c)] = vt[(i, r)];
        }
    }
    out
}

const NULL_TOL: f64 = 1e-9;

/// Cross Gram `<B^coarse_r, B^fine_p>` (normalized bases) for fine columns
/// `c0..c1`, integrating only over the cells those columns live on. Returns
/// the first coarse row and the matrix.
fn cross_gram_window(coarse: &BSplineBasis, fine: &BSplineBasis, c0: usize, c1: usize) -> (usize, DMatrix<f64>) {
    let d = fine.degree();
    let cell_lo = c0.saturating_sub(d);
    let cell_hi = (c1 - 1).min(fine.cells() - 1);
    let row_lo = cell_lo / 2;
    let row_hi = (cell_hi / 2 + d).min(coarse.dim() - 1);
    let mut m = DMatrix::<f64>::zeros(row_hi + 1 - row_lo, c1 - c0);
    let gl = GaussLegendre::new(d + 3);
    let h = fine.cell_width();
    for cell in cell_lo..=cell_hi {
        let a = cell as f64 * h;
        for (x, w) in gl.mapped(a, a + h) {
            let lf = fine.local_in_cell(cell, x, 0);
            let lc = coarse.local_in_cell(cell / 2, x, 0);
            for rf in 0..=d {
                let p = lf.first + rf;
                if p < c0 || p >= c1 {
                    continue;
                }
                let vf = lf.ders[0][rf] / fine.norm(p);
                for rc in 0..=d {
                    let r = lc.first + rc;
                    m[(r - row_lo, p - c0)] += w * vf * lc.ders[0][rc] / coarse.norm(r);
                }
            }
        }
    }
    (row_lo, m)
}

fn build_level(j: u32, degree: usize) -> Result<WaveletLevel> {
    let d = degree;
    let fail = |reason: String| Error::WaveletConstruction { level: j, degree: d, reason };
    let coarse = BSplineBasis::new(j, d)?;
    let fine = Arc::new(BSplineBasis::new(j + 1, d)?);
    let nf = fine.dim();
    let count = 1usize << j;
    let fine_gram = fine.gram();

    // Mother wavelet: fine columns d..=4d+1 cover 2d+1 coarse cells.
    let (_, cm) = cross_gram_window(&coarse, &fine, d, 4 * d + 2);
    let ns = null_space(&cm, NULL_TOL);
    if ns.ncols() != 1 {
        return Err(fail(format!("mother null space has dimension {}", ns.ncols())));
    }
    let mut mother: Vec<f64> = ns.column(0).iter().copied().collect();
    if mother[0] < 0.0 {
        mother.iter_mut().for_each(|v| *v = -*v);
    }
    let mut mother = FineCombination { first: d, coeffs: mother };
    let mn = mother.inner(&mother, &fine_gram).sqrt();
    mother.coeffs.iter_mut().for_each(|v| *v /= mn);

    // Left boundary wavelets: grow the window from the left edge and keep the
    // new direction each time the null space gains a dimension.
    let mut left: Vec<FineCombination> = Vec::with_capacity(d);
    let mut prev = DMatrix::<f64>::zeros(0, 0);
    for w in 1..=(4 * d + 1) {
        if left.len() == d {
            break;
        }
        let (_, cw) = cross_gram_window(&coarse, &fine, 0, w);
        let ns = null_space(&cw, NULL_TOL);
        if ns.ncols() < prev.ncols() || ns.ncols() > prev.ncols() + 1 {
            return Err(fail(format!("null space jumped from {} to {} at width {w}", prev.ncols(), ns.ncols())));
        }
        if ns.ncols() == prev.ncols() + 1 {
            let mut padded = DMatrix::<f64>::zeros(w, prev.ncols());
            if prev.ncols() > 0 {
                padded.view_mut((0, 0), (w - 1, prev.ncols())).copy_from(&prev);
            }
            let resid = &ns - &padded * (padded.transpose() * &ns);
            // The residual has rank one: any nonzero column spans it.
            let best = (0..resid.ncols())
                .max_by(|&a, &b| resid.column(a).norm().total_cmp(&resid.column(b).norm()))
                .expect("nonempty");
            let mut v: Vec<f64> = resid.column(best).iter().copied().collect();
            if v[w - 1] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            let mut comb = FineCombination { first: 0, coeffs: v };
            let n = comb.inner(&comb, &fine_gram).sqrt();
            comb.coeffs.iter_mut().for_each(|x| *x /= n);
            left.push(comb);
        }
        prev = ns;
    }
    if left.len() != d {
        return Err(fail(format!("found {} left boundary wavelets, expected {d}", left.len())));
    }

    let mut wavelets = Vec::with_capacity(count);
    wavelets.extend(left.iter().cloned());
    for i in 0..(count - 2 * d) {
        wavelets.push(FineCombination { first: d + 2 * i, coeffs: mother.coeffs.clone() });
    }
    for t in (0..d).rev() {
        let l = &left[t];
        let coeffs: Vec<f64> = l.coeffs.iter().rev().copied().collect();
        wavelets.push(FineCombination { first: nf - l.coeffs.len(), coeffs });
    }

    // Gram of the level.
    let mut bw = 0;
    for a in 0..count {
        for b in (a + 1)..count {
            if ranges_close(&wavelets[a], &wavelets[b], d) {
                bw = bw.max(b - a);
            }
        }
    }
    let mut gram = BandMatrix::zeros(count, bw);
    for a in 0..count {
        for b in a..(a + bw + 1).min(count) {
            if ranges_close(&wavelets[a], &wavelets[b], d) {
                gram.set(b, a, wavelets[a].inner(&wavelets[b], &fine_gram));
            }
        }
    }
    let chol = gram.cholesky().map_err(|e| fail(format!("wavelet Gram: {e}")))?;

    let mut touching = vec![Vec::new(); nf];
    for (pos, w) in wavelets.iter().enumerate() {
        for (i, &c) in w.coeffs.iter().enumerate() {
            let p = w.first + i;
            touching[p].push((pos as u32, c / fine.norm(p)));
        }
    }

    let mother_sup = mother.sup(&fine);
    let left_sups: Vec<f64> = left.iter().map(|l| l.sup(&fine)).collect();
    let mut sups = Vec::with_capacity(count);
    sups.extend(left_sups.iter().copied());
    sups.extend(std::iter::repeat_n(mother_sup, count - 2 * d));
    sups.extend(left_sups.iter().rev().copied());

    let mut cover = vec![0usize; fine.cells()];
    for w in &wavelets {
        let lo = w.first.saturating_sub(d);
        let hi = w.last().min(fine.cells() - 1);
        for c in &mut cover[lo..=hi] {
            *c += 1;
        }
    }
    let max_overlap = cover.into_iter().max().unwrap_or(0);

    Ok(WaveletLevel { level: j, fine, wavelets, gram, chol, touching, sups, max_overlap })
}

fn ranges_close(a: &FineCombination, b: &FineCombination, bw: usize) -> bool {
    a.first <= b.last() + bw && b.first <= a.last() + bw
}

/// Coefficient vectors per level, from the base level `j0 - 1` upwards.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoefficients {
    pub base_level: u32,
    pub levels: Vec<Vec<f64>>,
}

impl WaveletCoefficients {
    /// Highest level present.
    pub fn top_level(&self) -> u32 {
        self.base_level + self.levels.len() as u32 - 1
    }

    pub fn level(&self, j: u32) -> Option<&[f64]> {
        j.checked_sub(self.base_level).and_then(|i| self.levels.get(i as usize)).map(|v| v.as_slice())
    }

    /// Keeps levels up to `j_n`.
    pub fn truncated(&self, j_n: u32) -> WaveletCoefficients {
        let keep = (j_n + 1).saturating_sub(self.base_level) as usize;
        WaveletCoefficients {
            base_level: self.base_level,
            levels: self.levels.iter().take(keep).cloned().collect(),
        }
    }
}

/// `V_{j0}` plus detail levels `U_{j0}, ..., U_{j_max}`.
#[derive(Debug, Clone)]
pub struct MultiresolutionLadder {
    degree: usize,
    j0: u32,
    j_max: u32,
    base: Arc<BSplineBasis>,
    base_gram: BandMatrix,
    base_chol: BandCholesky,
    base_sups: Vec<f64>,
    levels: Vec<WaveletLevel>,
}

/// Builds the ladder for degree `d >= 1` up to level `j_max >= j0 - 1`.
pub fn build_ladder(degree: usize, j_max: u32) -> Result<MultiresolutionLadder> {
    MultiresolutionLadder::new(degree, j_max)
}

impl MultiresolutionLadder {
    pub fn new(degree: usize, j_max: u32) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidParameter("wavelet ladder needs degree >= 1".into()));
        }
        let j0 = base_level(degree);
        if j_max + 1 < j0 {
            return Err(Error::ResolutionOutOfRange { level: j_max as i64, lo: j0 as i64 - 1, hi: 24 });
        }
        let base = Arc::new(BSplineBasis::new(j0, degree)?);
        let base_gram = base.gram();
        let base_chol = base_gram.cholesky()?;
        let base_sups = (0..base.dim())
            .map(|k| {
                let mut c = vec![0.0; base.dim()];
                c[k] = 1.0;
                let s = SplineFunction::new(Arc::clone(&base), c).expect("dimension matches");
                s.to_piecewise().abs_max(0)
            })
            .collect();
        let levels = (j0..=j_max).map(|j| build_level(j, degree)).collect::<Result<Vec<_>>>()?;
        Ok(Self { degree, j0, j_max, base, base_gram, base_chol, base_sups, levels })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn j0(&self) -> u32 {
        self.j0
    }

    pub fn j_max(&self) -> u32 {
        self.j_max
    }

    /// Normalized B-spline basis of `V_{j0}`.
    pub fn base(&self) -> &Arc<BSplineBasis> {
        &self.base
    }

    /// Lowest level index, `j0 - 1`.
    pub fn first_level(&self) -> u32 {
        self.j0 - 1
    }

    pub fn detail(&self, j: u32) -> Option<&WaveletLevel> {
        j.checked_sub(self.j0).and_then(|i| self.levels.get(i as usize))
    }

    fn check_level(&self, j: u32) -> Result<()> {
        if j + 1 < self.j0 || j > self.j_max {
            return Err(Error::ResolutionOutOfRange {
                level: j as i64,
                lo: self.j0 as i64 - 1,
                hi: self.j_max as i64,
            });
        }
        Ok(())
    }

    fn check_order(&self, q: usize) -> Result<()> {
        if q > 0 && q + 1 > self.degree {
            return Err(Error::UnsupportedDerivative {
                order: q,
                degree: self.degree,
                max: self.degree - 1,
            });
        }
        Ok(())
    }

    /// Number of functions at level `j`.
    pub fn level_dim(&self, j: u32) -> usize {
        if j + 1 == self.j0 {
            self.base.dim()
        } else {
            1usize << j
        }
    }

    /// Inclusive index range: `1..=2^{j0}+d` at the base level and
    /// `-d..=2^j-d-1` above.
    pub fn index_range(&self, j: u32) -> (i64, i64) {
        if j + 1 == self.j0 {
            (1, self.base.dim() as i64)
        } else {
            let d = self.degree as i64;
            (-d, (1i64 << j) - d - 1)
        }
    }

    /// Storage position of index `k` at level `j`.
    pub fn position(&self, j: u32, k: i64) -> Result<usize> {
        self.check_level(j)?;
        let (lo, hi) = self.index_range(j);
        if k < lo || k > hi {
            return Err(Error::IndexOutOfRange { index: k, lo, hi });
        }
        Ok((k - lo) as usize)
    }

    /// `max_k ||psi_{j,k}||_inf`.
    pub fn level_sup(&self, j: u32) -> f64 {
        let sups = if j + 1 == self.j0 { &self.base_sups } else { &self.levels[(j - self.j0) as usize].sups };
        sups.iter().copied().fold(0.0, f64::max)
    }

    /// Largest number of functions of level `j` whose supports share a
    /// point (counting closed cell supports).
    pub fn level_overlap(&self, j: u32) -> usize {
        if j + 1 == self.j0 {
            self.degree + 1
        } else {
            self.levels[(j - self.j0) as usize].max_overlap
        }
    }

    pub fn level_gram(&self, j: u32) -> &BandMatrix {
        if j + 1 == self.j0 {
            &self.base_gram
        } else {
            &self.levels[(j - self.j0) as usize].gram
        }
    }

    fn level_chol(&self, j: u32) -> &BandCholesky {
        if j + 1 == self.j0 {
            &self.base_chol
        } else {
            &self.levels[(j - self.j0) as usize].chol
        }
    }

    /// `G_j^{-1} c`: primal coefficients of `sum_k c_k psi~_{j,k}`.
    pub fn solve_gram(&self, j: u32, c: &[f64]) -> Vec<f64> {
        self.level_chol(j).solve(c)
    }

    /// Appends `(position, psi^{(q)}(x))` for every function of level `j`
    /// that is nonzero at `x`. No checks; `q <= d`.
    pub fn eval_level(&self, j: u32, x: f64, q: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        if j + 1 == self.j0 {
            let loc = self.base.local(x, q);
            for r in 0..=self.degree {
                let k = loc.first + r;
                out.push((k, loc.ders[q][r] / self.base.norm(k)));
            }
            return;
        }
        let level = &self.levels[(j - self.j0) as usize];
        let loc = level.fine.local(x, q);
        for r in 0..=self.degree {
            let v = loc.ders[q][r];
            for &(pos, c) in &level.touching[loc.first + r] {
                let pos = pos as usize;
                match out.iter_mut().find(|(p, _)| *p == pos) {
                    Some(slot) => slot.1 += c * v,
                    None => out.push((pos, c * v)),
                }
            }
        }
    }

    /// `psi_{j,k}^{(q)}(x)`.
    pub fn wavelet_value(&self, j: u32, k: i64, x: f64, q: usize) -> Result<f64> {
        let pos = self.position(j, k)?;
        self.check_order(q)?;
        crate::splines::check_domain(x)?;
        let mut buf = Vec::new();
        self.eval_level(j, x, q, &mut buf);
        Ok(buf.iter().find(|(p, _)| *p == pos).map_or(0.0, |(_, v)| *v))
    }

    /// `psi~_{j,k}^{(q)}(x) = sum_l (G_j^{-1})_{kl} psi_{j,l}^{(q)}(x)`.
    pub fn dual_value(&self, j: u32, k: i64, x: f64, q: usize) -> Result<f64> {
        let pos = self.position(j, k)?;
        self.check_order(q)?;
        crate::splines::check_domain(x)?;
        let col = self.level_chol(j).inverse_column(pos);
        let mut buf = Vec::new();
        self.eval_level(j, x, q, &mut buf);
        Ok(buf.iter().map(|&(p, v)| col[p] * v).sum())
    }

    /// Extreme eigenvalues `(A, B)` of the level Gram matrix. Dense
    /// eigen-solve, so intended for moderate levels.
    pub fn frame_bounds(&self, j: u32) -> Result<(f64, f64)> {
        self.check_level(j)?;
        Ok(self.level_gram(j).extreme_eigenvalues())
    }

    /// Level `j` function at position `pos` as a spline (in `V_{j0}` for the
    /// base level, in `V_{j+1}` otherwise).
    pub fn function_spline(&self, j: u32, pos: usize) -> SplineFunction {
        if j + 1 == self.j0 {
            let mut c = vec![0.0; self.base.dim()];
            c[pos] = 1.0;
            SplineFunction::new(Arc::clone(&self.base), c).expect("dimension matches")
        } else {
            self.levels[(j - self.j0) as usize].wavelet_spline(pos)
        }
    }

    /// `beta_{jk} = <f, psi_{jk}>` for all levels up to `j_n`, integrating
    /// over the mesh of level `j_n + 1` with `d + 4` Gauss nodes per cell.
    /// Exact for piecewise polynomials of degree `<= d + 3` on that mesh.
    pub fn analyze(&self, f: impl Fn(f64) -> f64, j_n: u32) -> Result<WaveletCoefficients> {
        self.analyze_with(f, j_n, j_n + 1, self.degree + 4)
    }

    pub fn analyze_with(
        &self,
        f: impl Fn(f64) -> f64,
        j_n: u32,
        mesh_level: u32,
        nodes: usize,
    ) -> Result<WaveletCoefficients> {
        self.check_level(j_n)?;
        let gl = GaussLegendre::new(nodes);
        let cells = 1usize << mesh_level.max(j_n + 1);
        let h = 1.0 / cells as f64;
        let first = self.first_level();
        let mut levels: Vec<Vec<f64>> = (first..=j_n).map(|j| vec![0.0; self.level_dim(j)]).collect();
        let mut buf = Vec::new();
        for cell in 0..cells {
            let a = cell as f64 * h;
            for (x, w) in gl.mapped(a, a + h) {
                let fx = w * f(x);
                for (i, j) in (first..=j_n).enumerate() {
                    self.eval_level(j, x, 0, &mut buf);
                    for &(p, v) in &buf {
                        levels[i][p] += fx * v;
                    }
                }
            }
        }
        Ok(WaveletCoefficients { base_level: first, levels })
    }

    /// Primal spline coefficients of `sum_{j,k} c_{jk} psi~_{jk}` on each
    /// level's own B-spline basis, as piecewise polynomials summed on the
    /// mesh of the top level plus one.
    pub fn synthesize_piecewise(&self, coeffs: &WaveletCoefficients) -> Result<PiecewisePolynomial> {
        let top = coeffs.top_level();
        self.check_level(top)?;
        if coeffs.base_level != self.first_level() {
            return Err(Error::Mismatch(format!(
                "coefficients start at level {}, ladder at {}",
                coeffs.base_level,
                self.first_level()
            )));
        }
        let mut total = PiecewisePolynomial::zero(1 << (top + 1).max(self.j0), self.degree + 1);
        for (i, c) in coeffs.levels.iter().enumerate() {
            let j = self.first_level() + i as u32;
            if c.len() != self.level_dim(j) {
                return Err(Error::Shape { expected: self.level_dim(j), found: c.len() });
            }
            let y = self.solve_gram(j, c);
            let spline = if j + 1 == self.j0 {
                SplineFunction::new(Arc::clone(&self.base), y)?
            } else {
                let level = &self.levels[(j - self.j0) as usize];
                let mut s = vec![0.0; level.fine.dim()];
                for (w, &yw) in level.wavelets.iter().zip(&y) {
                    for (t, &cw) in w.coeffs.iter().enumerate() {
                        s[w.first + t] += yw * cw;
                    }
                }
                SplineFunction::new(Arc::clone(&level.fine), s)?
            };
            total = total.add(&spline.to_piecewise());
        }
        Ok(total)
    }

    /// `sum_{j,k} c_{jk} psi~_{jk}^{(q)}(x)` evaluated term by term.
    pub fn synthesize(&self, coeffs: &WaveletCoefficients, x: f64, q: usize) -> Result<f64> {
        self.check_order(q)?;
        crate::splines::check_domain(x)?;
        let mut buf = Vec::new();
        let mut total = 0.0;
        for (i, c) in coeffs.levels.iter().enumerate() {
            let j = coeffs.base_level + i as u32;
            self.check_level(j)?;
            let y = self.solve_gram(j, c);
            self.eval_level(j, x, q, &mut buf);
            total += buf.iter().map(|&(p, v)| y[p] * v).sum::<f64>();
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn base_levels() {
        assert_eq!(base_level(1), 2);
        assert_eq!(base_level(2), 3);
        assert_eq!(base_level(3), 3);
        assert_eq!(base_level(7), 4);
    }

    #[test]
    fn counts_and_indices() {
        let l = build_ladder(3, 5).unwrap();
        assert_eq!(l.j0(), 3);
        for j in 3..=5 {
            assert_eq!(l.detail(j).unwrap().dim(), 1 << j);
            assert_eq!(l.index_range(j), (-3, (1 << j) - 4));
        }
        assert_eq!(l.index_range(2), (1, 11));
        assert!(l.level_overlap(5) <= 3 * 3 + 1);
    }

    #[test]
    fn inner_translates_shift() {
        let l = build_ladder(2, 5).unwrap();
        let j = 5;
        let h = 0.5f64.powi(j as i32);
        for t in 0..50 {
            let x = 0.05 + 0.4 * t as f64 / 50.0;
            let a = l.wavelet_value(j, 0, x, 0).unwrap();
            let b = l.wavelet_value(j, 1, x + h, 0).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn unit_norm_and_orthogonal_to_coarse() {
        for d in 1..=4 {
            let j0 = base_level(d);
            let l = build_ladder(d, j0 + 1).unwrap();
            for j in j0..=j0 + 1 {
                let level = l.detail(j).unwrap();
                let coarse = BSplineBasis::new(j, d).unwrap();
                let fine = level.fine_basis();
                let gl = GaussLegendre::new(d + 3);
                for pos in 0..level.dim() {
                    let w = level.wavelet_spline(pos);
                    let n2 = gl.integrate_cells(&crate::quadrature::uniform_breaks(fine.cells()), |x| {
                        w.value_unchecked(x, 0).powi(2)
                    });
                    assert_abs_diff_eq!(n2, 1.0, epsilon = 1e-9);
                    for k in 0..coarse.dim() {
                        let ip = gl.integrate_cells(&crate::quadrature::uniform_breaks(fine.cells()), |x| {
                            w.value_unchecked(x, 0) * coarse.value_unchecked(k, x, 0)
                        });
                        assert!(ip.abs() < 1e-9, "d={d} j={j} pos={pos} k={k} ip={ip}");
                    }
                }
            }
        }
    }

    #[test]
    fn reconstruction_of_fine_spline() {
        let l = build_ladder(3, 4).unwrap();
        let fine = Arc::new(BSplineBasis::new(5, 3).unwrap());
        let c: Vec<f64> = (0..fine.dim()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let g = SplineFunction::new(Arc::clone(&fine), c).unwrap();
        let coeffs = l.analyze(|x| g.value_unchecked(x, 0), 4).unwrap();
        let pp = l.synthesize_piecewise(&coeffs).unwrap();
        for t in 0..=200 {
            let x = t as f64 / 200.0;
            assert_abs_diff_eq!(pp.eval(x, 0), g.value_unchecked(x, 0), epsilon = 1e-8);
            assert_abs_diff_eq!(l.synthesize(&coeffs, x, 0).unwrap(), g.value_unchecked(x, 0), epsilon = 1e-8);
        }
    }
}
