//! Truncated Taylor series for exact derivatives of closed-form densities.

use std::ops::{Add, Mul, Neg, Sub};

/// Number of Taylor coefficients carried (derivatives `0..JET_LEN`).
pub const JET_LEN: usize = 8;

/// `c[k] = f^{(k)}(x0) / k!`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub c: [f64; JET_LEN],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; JET_LEN];
        c[0] = v;
        Self { c }
    }

    /// The identity function expanded at `x`.
    pub fn variable(x: f64) -> Self {
        let mut c = [0.0; JET_LEN];
        c[0] = x;
        c[1] = 1.0;
        Self { c }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// `q`-th derivative, `q < JET_LEN`.
    pub fn derivative(&self, q: usize) -> f64 {
        let fact: f64 = (1..=q).map(|i| i as f64).product();
        self.c[q] * fact
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.c.iter_mut().for_each(|v| *v *= s);
        self
    }

    pub fn recip(&self) -> Self {
        let a0 = self.c[0];
        let mut r = [0.0; JET_LEN];
        r[0] = 1.0 / a0;
        for k in 1..JET_LEN {
            let s: f64 = (1..=k).map(|i| self.c[i] * r[k - i]).sum();
            r[k] = -s / a0;
        }
        Self { c: r }
    }

    pub fn exp(&self) -> Self {
        let mut e = [0.0; JET_LEN];
        e[0] = self.c[0].exp();
        for k in 1..JET_LEN {
            let s: f64 = (1..=k).map(|i| i as f64 * self.c[i] * e[k - i]).sum();
            e[k] = s / k as f64;
        }
        Self { c: e }
    }

    pub fn sin_cos(&self) -> (Self, Self) {
        let mut s = [0.0; JET_LEN];
        let mut co = [0.0; JET_LEN];
        s[0] = self.c[0].sin();
        co[0] = self.c[0].cos();
        for k in 1..JET_LEN {
            let mut ss = 0.0;
            let mut cc = 0.0;
            for i in 1..=k {
                let w = i as f64 * self.c[i];
                ss += w * co[k - i];
                cc -= w * s[k - i];
            }
            s[k] = ss / k as f64;
            co[k] = cc / k as f64;
        }
        (Self { c: s }, Self { c: co })
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        self.c.iter_mut().zip(o.c).for_each(|(a, b)| *a += b);
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, o: Jet) -> Jet {
        self.c.iter_mut().zip(o.c).for_each(|(a, b)| *a -= b);
        self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut c = [0.0; JET_LEN];
        for (k, ck) in c.iter_mut().enumerate() {
            *ck = (0..=k).map(|i| self.c[i] * o.c[k - i]).sum();
        }
        Jet { c }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, v: f64) -> Jet {
        self.c[0] += v;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn derivatives_of_elementary_functions() {
        let x = Jet::variable(0.3);
        let e = (x * x).exp();
        // d/dx exp(x^2) = 2x exp(x^2); second = (2 + 4x^2) exp(x^2)
        let v = (0.09f64).exp();
        assert_abs_diff_eq!(e.derivative(1), 0.6 * v, epsilon = 1e-14);
        assert_abs_diff_eq!(e.derivative(2), (2.0 + 4.0 * 0.09) * v, epsilon = 1e-13);
        let r = (x + 1.0).recip();
        assert_abs_diff_eq!(r.derivative(3), -6.0 / 1.3f64.powi(4), epsilon = 1e-12);
        let (s, c) = x.sin_cos();
        assert_abs_diff_eq!(s.derivative(5), 0.3f64.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(c.derivative(2), -0.3f64.cos(), epsilon = 1e-12);
    }
}
