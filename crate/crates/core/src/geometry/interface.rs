//! Analytic interface graphs `x^d = h(x')` with exact derivatives up to order 3.

use serde::{Deserialize, Serialize};

/// One monomial `coef * x1^p1 * x2^p2` of a tangential polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: [u32; 2],
}

/// Interface shape as a closed-form function of the tangential variables.
///
/// In two dimensions `x'` is a scalar; in three dimensions the parabola uses
/// `|x'|^2` and the cosine depends on the first tangential coordinate only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InterfaceShape {
    /// `h = c`
    Flat { c: f64 },
    /// `h = a |x'|^2 + b x'_1 + c`
    Parabola { a: f64, b: f64, c: f64 },
    /// `h = amp * cos(omega x'_1 + phase)`
    Cosine { amp: f64, omega: f64, phase: f64 },
    /// Sum of monomials in `(x'_1, x'_2)`.
    Polynomial { terms: Vec<Monomial> },
}

/// Value and derivative tensors of an interface at one tangential point.
///
/// Slots beyond the tangential dimension (and beyond the requested order)
/// are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InterfaceJet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
    pub third: [[[f64; 2]; 2]; 2],
}

impl InterfaceJet {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            ..Default::default()
        }
    }
}

/// `d^k/dx^k x^p` evaluated at `x`.
fn power_derivative(x: f64, p: u32, k: u32) -> f64 {
    if k > p {
        return 0.0;
    }
    let mut falling = 1.0;
    for i in 0..k {
        falling *= (p - i) as f64;
    }
    falling * x.powi((p - k) as i32)
}

impl InterfaceShape {
    pub fn flat(c: f64) -> Self {
        Self::Flat { c }
    }

    pub fn parabola(a: f64, b: f64, c: f64) -> Self {
        Self::Parabola { a, b, c }
    }

    pub fn cosine(amp: f64, omega: f64, phase: f64) -> Self {
        Self::Cosine { amp, omega, phase }
    }

    /// Univariate polynomial from ascending coefficients `c0 + c1 x + c2 x^2 + ...`.
    pub fn polynomial_1d(coeffs: &[f64]) -> Self {
        let terms = coeffs
            .iter()
            .enumerate()
            .map(|(p, &coef)| Monomial {
                coef,
                powers: [p as u32, 0],
            })
            .collect();
        Self::Polynomial { terms }
    }

    /// Evaluates the interface and its derivatives up to `order` (clamped to 3)
    /// at the tangential point `xp` (length 1 or 2).
    pub fn jet(&self, xp: &[f64], order: usize) -> InterfaceJet {
        let tdim = xp.len().min(2);
        let x1 = xp[0];
        let x2 = if tdim > 1 { xp[1] } else { 0.0 };
        let mut jet = InterfaceJet::default();
        match *self {
            Self::Flat { c } => jet.value = c,
            Self::Parabola { a, b, c } => {
                jet.value = a * (x1 * x1 + x2 * x2) + b * x1 + c;
                if order >= 1 {
                    jet.grad[0] = 2.0 * a * x1 + b;
                    if tdim > 1 {
                        jet.grad[1] = 2.0 * a * x2;
                    }
                }
                if order >= 2 {
                    jet.hess[0][0] = 2.0 * a;
                    if tdim > 1 {
                        jet.hess[1][1] = 2.0 * a;
                    }
                }
            }
            Self::Cosine { amp, omega, phase } => {
                let arg = omega * x1 + phase;
                let (s, c) = arg.sin_cos();
                jet.value = amp * c;
                if order >= 1 {
                    jet.grad[0] = -amp * omega * s;
                }
                if order >= 2 {
                    jet.hess[0][0] = -amp * omega * omega * c;
                }
                if order >= 3 {
                    jet.third[0][0][0] = amp * omega.powi(3) * s;
                }
            }
            Self::Polynomial { ref terms } => {
                for term in terms {
                    let [p1, p2] = term.powers;
                    if tdim == 1 && p2 > 0 {
                        continue;
                    }
                    let d = |k1: u32, k2: u32| {
                        term.coef * power_derivative(x1, p1, k1) * power_derivative(x2, p2, k2)
                    };
                    jet.value += d(0, 0);
                    if order >= 1 {
                        jet.grad[0] += d(1, 0);
                        jet.grad[1] += d(0, 1);
                    }
                    if order >= 2 {
                        for a in 0..2u32 {
                            for b in 0..2u32 {
                                let k1 = (a == 0) as u32 + (b == 0) as u32;
                                jet.hess[a as usize][b as usize] += d(k1, 2 - k1);
                            }
                        }
                    }
                    if order >= 3 {
                        for a in 0..2u32 {
                            for b in 0..2u32 {
                                for c in 0..2u32 {
                                    let k1 =
                                        (a == 0) as u32 + (b == 0) as u32 + (c == 0) as u32;
                                    jet.third[a as usize][b as usize][c as usize] +=
                                        d(k1, 3 - k1);
                                }
                            }
                        }
                    }
                }
                if tdim == 1 {
                    jet.grad[1] = 0.0;
                    jet.hess[0][1] = 0.0;
                    jet.hess[1][0] = 0.0;
                    jet.hess[1][1] = 0.0;
                    let keep = jet.third[0][0][0];
                    jet.third = Default::default();
                    jet.third[0][0][0] = keep;
                }
            }
        }
        jet
    }

    pub fn value(&self, xp: &[f64]) -> f64 {
        self.jet(xp, 0).value
    }

    /// Largest `|h''|` bound known in closed form, used for the interface-fit
    /// estimate of straight-edge meshes. Polynomials are bounded by sampling.
    pub fn curvature_bound(&self) -> f64 {
        match *self {
            Self::Flat { .. } => 0.0,
            Self::Parabola { a, .. } => 2.0 * a.abs(),
            Self::Cosine { amp, omega, .. } => (amp * omega * omega).abs(),
            Self::Polynomial { .. } => (0..=400)
                .map(|i| {
                    let x = -1.0 + 2.0 * i as f64 / 400.0;
                    self.jet(&[x], 2).hess[0][0].abs()
                })
                .fold(0.0, f64::max),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn parabola_jet() {
        let h = InterfaceShape::parabola(1.0, 0.0, 0.0);
        let j = h.jet(&[0.5], 2);
        assert_eq!((j.value, j.grad[0], j.hess[0][0]), (0.25, 1.0, 2.0));
    }

    #[test]
    fn flat_jet() {
        let j = InterfaceShape::flat(0.0).jet(&[0.3], 1);
        assert_eq!((j.value, j.grad[0]), (0.0, 0.0));
    }

    #[test]
    fn cosine_jet() {
        let j = InterfaceShape::cosine(0.1, 2.0, 0.0).jet(&[0.0], 3);
        assert_abs_diff_eq!(j.value, 0.1);
        assert_abs_diff_eq!(j.grad[0], 0.0);
        assert_abs_diff_eq!(j.hess[0][0], -0.4);
        assert_abs_diff_eq!(j.third[0][0][0], 0.0);
    }

    #[test]
    fn polynomial_matches_parabola_in_two_variables() {
        let poly = InterfaceShape::Polynomial {
            terms: vec![
                Monomial { coef: 0.3, powers: [2, 0] },
                Monomial { coef: 0.3, powers: [0, 2] },
                Monomial { coef: -0.1, powers: [1, 0] },
                Monomial { coef: 0.05, powers: [0, 0] },
            ],
        };
        let para = InterfaceShape::parabola(0.3, -0.1, 0.05);
        let x = [0.2, -0.4];
        let (a, b) = (poly.jet(&x, 3), para.jet(&x, 3));
        assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-15);
        for i in 0..2 {
            assert_abs_diff_eq!(a.grad[i], b.grad[i], epsilon = 1e-15);
            for k in 0..2 {
                assert_abs_diff_eq!(a.hess[i][k], b.hess[i][k], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn polynomial_cubic_mixed_derivatives() {
        // h = x1^2 x2
        let h = InterfaceShape::Polynomial {
            terms: vec![Monomial { coef: 1.0, powers: [2, 1] }],
        };
        let j = h.jet(&[0.5, 2.0], 3);
        assert_abs_diff_eq!(j.value, 0.5);
        assert_abs_diff_eq!(j.grad[0], 2.0);
        assert_abs_diff_eq!(j.grad[1], 0.25);
        assert_abs_diff_eq!(j.hess[0][0], 4.0);
        assert_abs_diff_eq!(j.hess[0][1], 1.0);
        assert_abs_diff_eq!(j.hess[1][1], 0.0);
        assert_abs_diff_eq!(j.third[0][0][1], 2.0);
        assert_abs_diff_eq!(j.third[1][0][0], 2.0);
        assert_abs_diff_eq!(j.third[0][0][0], 0.0);
    }
}
