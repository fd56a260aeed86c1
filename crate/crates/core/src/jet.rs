//! Third-order truncated Taylor arithmetic, used to evaluate removable
//! singularities of the sampling closed forms by their series expansion.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value and first three derivatives of a univariate function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet(pub [f64; 4]);

impl Jet {
    pub fn constant(c: f64) -> Self {
        Jet([c, 0.0, 0.0, 0.0])
    }

    /// The independent variable at `x`.
    pub fn var(x: f64) -> Self {
        Jet([x, 1.0, 0.0, 0.0])
    }

    pub fn value(self) -> f64 {
        self.0[0]
    }

    pub fn d(self, k: usize) -> f64 {
        self.0[k]
    }

    pub fn recip(self) -> Self {
        let [g, g1, g2, g3] = self.0;
        let g_2 = g * g;
        Jet([1.0 / g, -g1 / g_2, (2.0 * g1 * g1 - g * g2) / (g_2 * g), (-6.0 * g1 * g1 * g1 + 6.0 * g * g1 * g2 - g_2 * g3) / (g_2 * g_2)])
    }

    pub fn exp(self) -> Self {
        let [f, f1, f2, f3] = self.0;
        let e = f.exp();
        Jet([e, f1 * e, (f2 + f1 * f1) * e, (f3 + 3.0 * f1 * f2 + f1 * f1 * f1) * e])
    }

    pub fn powi(self, n: u32) -> Self {
        (0..n).fold(Jet::constant(1.0), |acc, _| acc * self)
    }

    pub fn scale(self, s: f64) -> Self {
        Jet(self.0.map(|v| v * s))
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2], self.0[3] + o.0[3]])
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.0[0] += c;
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let [f, f1, f2, f3] = self.0;
        let [g, g1, g2, g3] = o.0;
        Jet([f * g, f1 * g + f * g1, f2 * g + 2.0 * f1 * g1 + f * g2, f3 * g + 3.0 * f2 * g1 + 3.0 * f1 * g2 + f * g3])
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

/// Relative half-width of the window in which divided differences switch to
/// their Taylor expansion.
const SERIES_WINDOW: f64 = 1e-4;

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= SERIES_WINDOW * a.abs().max(b.abs())
}

fn value_at<F: Fn(Jet) -> Jet>(f: &F, x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        f(Jet::constant(x)).value()
    }
}

/// First divided difference `f[a, b]`.
///
/// `f` must be smooth on `(0, ∞)` with `f(x) → 0` as `x → 0⁺`; the origin is
/// only ever evaluated through that limit, and `f[0, 0]` is taken as 0. The
/// expansion point for nearby arguments is `b`.
pub fn divided_difference<F: Fn(Jet) -> Jet>(f: F, a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        return 0.0;
    }
    if near(a, b) {
        let j = f(Jet::var(b));
        let h = a - b;
        j.d(1) + j.d(2) * h / 2.0 + j.d(3) * h * h / 6.0
    } else {
        (value_at(&f, a) - value_at(&f, b)) / (a - b)
    }
}

/// `∂/∂a f[a, b] = f[a, a, b]`, same assumptions as [`divided_difference`].
pub fn divided_difference_da<F: Fn(Jet) -> Jet>(f: F, a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        return 0.0;
    }
    if near(a, b) {
        let j = f(Jet::var(b));
        j.d(2) / 2.0 + j.d(3) * (a - b) / 3.0
    } else {
        let fa = if a == 0.0 { Jet::constant(0.0) } else { f(Jet::var(a)) };
        let first = (fa.value() - value_at(&f, b)) / (a - b);
        (fa.d(1) - first) / (a - b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_composite_match_hand_formula() {
        // f(x) = x^2 e^{-1/x} / (x + 1) at x = 0.7, against central differences
        let f = |x: Jet| x.powi(2) * (Jet::constant(-1.0) / x).exp() / (x + 1.0);
        let x0 = 0.7;
        let j = f(Jet::var(x0));
        let h = 1e-3;
        let v = |x: f64| f(Jet::constant(x)).value();
        let d1 = (v(x0 + h) - v(x0 - h)) / (2.0 * h);
        let d2 = (v(x0 + h) - 2.0 * v(x0) + v(x0 - h)) / (h * h);
        let d3 = (v(x0 + 2.0 * h) - 2.0 * v(x0 + h) + 2.0 * v(x0 - h) - v(x0 - 2.0 * h)) / (2.0 * h * h * h);
        assert!((j.d(1) - d1).abs() < 1e-6);
        assert!((j.d(2) - d2).abs() < 1e-5);
        assert!((j.d(3) - d3).abs() < 1e-3);
    }

    #[test]
    fn divided_difference_is_continuous_across_the_window() {
        let f = |x: Jet| (Jet::constant(-2.0) / x).exp();
        let b = 1.3;
        for k in [0.5e-4, 0.99e-4, 1.01e-4, 1e-3] {
            let a = b * (1.0 + k);
            let dd = divided_difference(f, a, b);
            let exact = ((-2.0 / a).exp() - (-2.0 / b).exp()) / (a - b);
            assert!((dd - exact).abs() <= 1e-9 * exact.abs(), "k={k}: {dd} vs {exact}");
        }
    }

    #[test]
    fn second_divided_difference_matches_derivative_of_first() {
        let f = |x: Jet| x.powi(3) * (Jet::constant(-0.5) / x).exp();
        let (a, b) = (0.9, 1.0);
        let h = 1e-6;
        let fd = (divided_difference(f, a + h, b) - divided_difference(f, a - h, b)) / (2.0 * h);
        assert!((divided_difference_da(f, a, b) - fd).abs() < 1e-7);
        let a = 1.0 + 3e-5;
        let fd = (divided_difference(f, a + 1e-7, b) - divided_difference(f, a - 1e-7, b)) / 2e-7;
        assert!((divided_difference_da(f, a, b) - fd).abs() < 1e-5);
    }
}
