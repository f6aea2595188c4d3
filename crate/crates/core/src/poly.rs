//! Power-basis polynomials on the unit interval and piecewise polynomials
//! on uniform dyadic meshes of `[0, 1]`.

/// Horner evaluation of `sum c[i] u^i`.
#[inline]
pub fn eval(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * u + ci)
}

/// Coefficients of the `q`-th derivative with respect to `u`.
pub fn derivative(c: &[f64], q: usize) -> Vec<f64> {
    if q >= c.len() {
        return vec![0.0];
    }
    (q..c.len())
        .map(|i| {
            let falling: f64 = (0..q).map(|k| (i - k) as f64).product();
            c[i] * falling
        })
        .collect()
}

/// Evaluates the `q`-th derivative (in `u`) without allocating.
#[inline]
pub fn eval_derivative(c: &[f64], q: usize, u: f64) -> f64 {
    let mut acc = 0.0;
    for i in (q..c.len()).rev() {
        let mut falling = 1.0;
        for k in 0..q {
            falling *= (i - k) as f64;
        }
        acc = acc * u + c[i] * falling;
    }
    acc
}

const SAMPLES: usize = 256;

/// Roots of `p` in `[0, 1]` located by sign changes on a dense sample and
/// refined by bisection. Even-multiplicity roots are only found when they
/// coincide with a sample.
pub fn roots_on_unit(c: &[f64]) -> Vec<f64> {
    let mut roots = Vec::new();
    if c.iter().all(|&v| v == 0.0) {
        return roots;
    }
    let mut prev_u = 0.0;
    let mut prev = eval(c, 0.0);
    if prev == 0.0 {
        roots.push(0.0);
    }
    for i in 1..=SAMPLES {
        let u = i as f64 / SAMPLES as f64;
        let v = eval(c, u);
        if v == 0.0 {
            roots.push(u);
        } else if prev != 0.0 && (prev < 0.0) != (v < 0.0) {
            roots.push(bisect(c, prev_u, u, prev));
        }
        prev_u = u;
        prev = v;
    }
    roots
}

fn bisect(c: &[f64], mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    let lo_neg = f_lo < 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let v = eval(c, mid);
        if v == 0.0 {
            return mid;
        }
        if (v < 0.0) == lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `max |p(u)|` over `u in [0, 1]`: endpoints, a dense sample, and the
/// refined critical points.
pub fn abs_max_on_unit(c: &[f64]) -> f64 {
    let mut best = eval(c, 0.0).abs().max(eval(c, 1.0).abs());
    for i in 1..SAMPLES {
        best = best.max(eval(c, i as f64 / SAMPLES as f64).abs());
    }
    if c.len() > 2 {
        let dc = derivative(c, 1);
        for r in roots_on_unit(&dc) {
            best = best.max(eval(c, r).abs());
        }
    }
    best
}

/// A piecewise polynomial on `cells` uniform cells of `[0, 1]`. Each piece is
/// stored in the local variable `u = (x - a) / h` of its cell `[a, a + h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePolynomial {
    cells: usize,
    order: usize,
    coeffs: Vec<f64>,
}

impl PiecewisePolynomial {
    /// `coeffs` holds `cells * order` values, `order = degree + 1` per cell.
    pub fn new(cells: usize, order: usize, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), cells * order);
        Self { cells, order, coeffs }
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn degree(&self) -> usize {
        self.order - 1
    }

    pub fn width(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn piece(&self, cell: usize) -> &[f64] {
        &self.coeffs[cell * self.order..(cell + 1) * self.order]
    }

    /// Cell holding `x`; `x = 1` belongs to the last cell.
    #[inline]
    pub fn cell_of(&self, x: f64) -> usize {
        let c = (x * self.cells as f64).floor();
        if c < 0.0 {
            0
        } else {
            (c as usize).min(self.cells - 1)
        }
    }

    /// `q`-th derivative at `x`.
    #[inline]
    pub fn eval(&self, x: f64, q: usize) -> f64 {
        let cell = self.cell_of(x);
        let h = self.width();
        let u = x * self.cells as f64 - cell as f64;
        eval_derivative(self.piece(cell), q, u) / h.powi(q as i32)
    }

    /// The `q`-th derivative as a new piecewise polynomial.
    pub fn derivative(&self, q: usize) -> PiecewisePolynomial {
        let order = self.order.saturating_sub(q).max(1);
        let scale = (self.cells as f64).powi(q as i32);
        let mut coeffs = Vec::with_capacity(self.cells * order);
        for cell in 0..self.cells {
            let d = derivative(self.piece(cell), q);
            for i in 0..order {
                coeffs.push(d.get(i).copied().unwrap_or(0.0) * scale);
            }
        }
        PiecewisePolynomial::new(self.cells, order, coeffs)
    }

    /// Sub-intervals of `[0, 1]` on which the function keeps a constant sign:
    /// cell boundaries plus interior roots.
    pub fn sign_breaks(&self) -> Vec<f64> {
        let h = self.width();
        let mut breaks = vec![0.0];
        for cell in 0..self.cells {
            let a = cell as f64 * h;
            for r in roots_on_unit(self.piece(cell)) {
                if r > 1e-12 && r < 1.0 - 1e-12 {
                    breaks.push(a + r * h);
                }
            }
            breaks.push(if cell + 1 == self.cells { 1.0 } else { (cell + 1) as f64 * h });
        }
        breaks
    }

    /// The same function on a finer uniform mesh (`cells` a multiple of
    /// the current count).
    pub fn refine(&self, cells: usize) -> PiecewisePolynomial {
        assert!(cells.is_multiple_of(self.cells), "refinement must nest");
        let r = cells / self.cells;
        if r == 1 {
            return self.clone();
        }
        let mut coeffs = Vec::with_capacity(cells * self.order);
        for cell in 0..self.cells {
            let piece = self.piece(cell);
            for sub in 0..r {
                let u0 = sub as f64 / r as f64;
                let mut scale = 1.0;
                let mut fact = 1.0;
                for k in 0..self.order {
                    if k > 0 {
                        scale /= r as f64;
                        fact *= k as f64;
                    }
                    coeffs.push(eval_derivative(piece, k, u0) * scale / fact);
                }
            }
        }
        PiecewisePolynomial::new(cells, self.order, coeffs)
    }

    /// Adds `other`, refining either side to the finer mesh. Both meshes are
    /// dyadic so one always nests in the other.
    pub fn add(&self, other: &PiecewisePolynomial) -> PiecewisePolynomial {
        let cells = self.cells.max(other.cells);
        let order = self.order.max(other.order);
        let a = self.refine(cells);
        let b = other.refine(cells);
        let mut coeffs = vec![0.0; cells * order];
        for cell in 0..cells {
            for (i, v) in a.piece(cell).iter().enumerate() {
                coeffs[cell * order + i] += v;
            }
            for (i, v) in b.piece(cell).iter().enumerate() {
                coeffs[cell * order + i] += v;
            }
        }
        PiecewisePolynomial::new(cells, order, coeffs)
    }

    pub fn scale(&mut self, c: f64) {
        self.coeffs.iter_mut().for_each(|v| *v *= c);
    }

    /// `p + c`.
    pub fn shifted(&self, c: f64) -> PiecewisePolynomial {
        let mut out = self.clone();
        for cell in 0..self.cells {
            out.coeffs[cell * self.order] += c;
        }
        out
    }

    pub fn zero(cells: usize, order: usize) -> Self {
        Self::new(cells, order, vec![0.0; cells * order])
    }

    /// `int_0^1 g(p(x), p'(x), ...)` style integrals: applies `integrand` to
    /// the derivative values `[p, p', ..., p^(nd)]` at Gauss nodes of every
    /// interval in `breaks` (sorted, covering `[0, 1]`).
    pub fn integrate_over<F>(&self, breaks: &[f64], nodes: usize, nd: usize, mut integrand: F) -> f64
    where
        F: FnMut(f64, &[f64]) -> f64,
    {
        let gl = crate::quadrature::GaussLegendre::new(nodes);
        let mut vals = vec![0.0; nd + 1];
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            // Pieces are polynomials, so pin the cell by the interval midpoint.
            let cell = self.cell_of(0.5 * (a + b));
            let h = self.width();
            let left = cell as f64 * h;
            let piece = self.piece(cell);
            for (x, wt) in gl.mapped(a, b) {
                let u = (x - left) / h;
                let mut hq = 1.0;
                for (q, v) in vals.iter_mut().enumerate() {
                    *v = eval_derivative(piece, q, u) / hq;
                    hq *= h;
                }
                total += wt * integrand(x, &vals);
            }
        }
        total
    }

    /// Cell boundaries of the mesh.
    pub fn breaks(&self) -> Vec<f64> {
        crate::quadrature::uniform_breaks(self.cells)
    }

    /// `max |p^(q)|` over `[0, 1]`.
    pub fn abs_max(&self, q: usize) -> f64 {
        let d = self.derivative(q);
        (0..d.cells).map(|c| abs_max_on_unit(d.piece(c))).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn derivative_coefficients() {
        // p(u) = 1 + 2u + 3u^2 + 4u^3
        let c = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(derivative(&c, 1), vec![2.0, 6.0, 12.0]);
        assert_eq!(derivative(&c, 2), vec![6.0, 24.0]);
        assert_abs_diff_eq!(eval_derivative(&c, 2, 0.5), 6.0 + 12.0, epsilon = 1e-14);
        assert_eq!(derivative(&c, 4), vec![0.0]);
    }

    #[test]
    fn roots_of_quadratic() {
        // (u - 0.25)(u - 0.7)
        let c = [0.175, -0.95, 1.0];
        let r = roots_on_unit(&c);
        assert_eq!(r.len(), 2);
        assert_abs_diff_eq!(r[0], 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(r[1], 0.7, epsilon = 1e-14);
    }

    #[test]
    fn abs_max_finds_interior_extremum() {
        // 4u(1-u) peaks at 1 in u = 0.5; shift the peak off-grid.
        let c = [0.0, 3.0, -2.3];
        let umax: f64 = 3.0 / 4.6;
        assert_abs_diff_eq!(abs_max_on_unit(&c), 3.0 * umax - 2.3 * umax * umax, epsilon = 1e-14);
    }

    #[test]
    fn piecewise_eval_and_derivative() {
        // Two cells: x^2 on both, stored in local variables.
        // On [0, .5): u = 2x -> x^2 = u^2 / 4. On [.5, 1): x = .5 + u/2 -> .25 + .5u + .25u^2.
        let pp = PiecewisePolynomial::new(2, 3, vec![0.0, 0.0, 0.25, 0.25, 0.5, 0.25]);
        for &x in &[0.1, 0.3, 0.6, 0.99, 1.0] {
            assert_abs_diff_eq!(pp.eval(x, 0), x * x, epsilon = 1e-14);
            assert_abs_diff_eq!(pp.eval(x, 1), 2.0 * x, epsilon = 1e-13);
            assert_abs_diff_eq!(pp.eval(x, 2), 2.0, epsilon = 1e-12);
        }
        let fine = pp.refine(8);
        for &x in &[0.1, 0.3, 0.6, 0.99, 1.0] {
            assert_abs_diff_eq!(fine.eval(x, 0), x * x, epsilon = 1e-14);
            assert_abs_diff_eq!(fine.eval(x, 1), 2.0 * x, epsilon = 1e-12);
        }
        let sum = pp.add(&fine);
        assert_abs_diff_eq!(sum.eval(0.4, 0), 0.32, epsilon = 1e-14);
        let int = pp.integrate_over(&pp.breaks(), 3, 1, |_, v| v[0] * v[1]);
        assert_abs_diff_eq!(int, 0.5, epsilon = 1e-13);
        let d = pp.derivative(1);
        assert_abs_diff_eq!(d.eval(0.7, 0), 1.4, epsilon = 1e-13);
        assert_abs_diff_eq!(pp.abs_max(1), 2.0, epsilon = 1e-13);
    }
}
