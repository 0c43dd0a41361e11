//! Coefficient and data models with analytic derivatives.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{InterfaceStack, Monomial};

pub type Mat2 = [[f64; 2]; 2];

/// Bivariate polynomial in `(x, y)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly2 {
    pub terms: Vec<Monomial>,
}

fn dpow(x: f64, p: u32, k: u32) -> f64 {
    if k > p {
        return 0.0;
    }
    let mut c = 1.0;
    for i in 0..k {
        c *= (p - i) as f64;
    }
    c * x.powi((p - k) as i32)
}

impl Poly2 {
    pub fn constant(c: f64) -> Self {
        Self { terms: vec![Monomial { coef: c, powers: [0, 0] }] }
    }

    /// `c0 + cx x + cy y`.
    pub fn affine(c0: f64, cx: f64, cy: f64) -> Self {
        Self {
            terms: vec![
                Monomial { coef: c0, powers: [0, 0] },
                Monomial { coef: cx, powers: [1, 0] },
                Monomial { coef: cy, powers: [0, 1] },
            ],
        }
    }

    pub fn from_terms(terms: &[(f64, u32, u32)]) -> Self {
        Self {
            terms: terms.iter().map(|&(coef, a, b)| Monomial { coef, powers: [a, b] }).collect(),
        }
    }

    /// Mixed derivative `∂_x^kx ∂_y^ky`.
    pub fn derivative(&self, x: [f64; 2], kx: u32, ky: u32) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * dpow(x[0], t.powers[0], kx) * dpow(x[1], t.powers[1], ky))
            .sum()
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.derivative(x, 0, 0)
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        [self.derivative(x, 1, 0), self.derivative(x, 0, 1)]
    }

    pub fn hessian(&self, x: [f64; 2]) -> Mat2 {
        let xy = self.derivative(x, 1, 1);
        [[self.derivative(x, 2, 0), xy], [xy, self.derivative(x, 0, 2)]]
    }

    /// `∫_{-1}^{y} p(x, s) ds` and its x-derivative.
    pub fn y_antiderivative(&self, x: [f64; 2]) -> (f64, f64) {
        let mut v = 0.0;
        let mut dx = 0.0;
        for t in &self.terms {
            let [a, b] = t.powers;
            let col = (x[1].powi(b as i32 + 1) - (-1f64).powi(b as i32 + 1)) / (b as f64 + 1.0);
            v += t.coef * x[0].powi(a as i32) * col;
            dx += t.coef * dpow(x[0], a, 1) * col;
        }
        (v, dx)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coef == 0.0)
    }
}

/// Per-region symmetric coefficient matrices `A_j(t, x)`.
pub trait CoefficientModel: Send + Sync {
    fn matrix(&self, region: usize, t: f64, x: [f64; 2]) -> Mat2;

    /// `∂_b A_j`, indexed `[b][row][col]`.
    fn gradient(&self, _region: usize, _t: f64, _x: [f64; 2]) -> [Mat2; 2] {
        [[[0.0; 2]; 2]; 2]
    }

    fn time_derivative(&self, _region: usize, _t: f64, _x: [f64; 2]) -> Mat2 {
        [[0.0; 2]; 2]
    }

    /// Declared ellipticity constant `ν`.
    fn ellipticity(&self) -> f64;

    fn time_dependent(&self) -> bool {
        false
    }
}

/// Per-region flux data `f_j`, Dirichlet trace and initial datum.
pub trait ForcingModel: Send + Sync {
    fn flux(&self, region: usize, t: f64, x: [f64; 2]) -> [f64; 2];

    /// `∂_b f^a`, indexed `[a][b]`.
    fn flux_gradient(&self, region: usize, t: f64, x: [f64; 2]) -> Mat2;

    fn flux_time_derivative(&self, _region: usize, _t: f64, _x: [f64; 2]) -> [f64; 2] {
        [0.0; 2]
    }

    fn dirichlet(&self, t: f64, x: [f64; 2]) -> f64;

    /// Initial datum at the start time `t0` of a parabolic run.
    fn initial(&self, t0: f64, x: [f64; 2]) -> f64;
}

/// One region's coefficient: a constant matrix or a polynomial times the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegionCoefficient {
    Constant { matrix: Mat2 },
    Scalar { poly: Poly2 },
}

impl RegionCoefficient {
    pub fn isotropic(a: f64) -> Self {
        Self::Constant { matrix: [[a, 0.0], [0.0, a]] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseCoefficients {
    pub regions: Vec<RegionCoefficient>,
    pub nu: f64,
}

impl PiecewiseCoefficients {
    /// Isotropic constants per region with `ν` taken from the extreme values.
    pub fn constants(values: &[f64]) -> Self {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(0.0, f64::max);
        Self {
            regions: values.iter().map(|&a| RegionCoefficient::isotropic(a)).collect(),
            nu: lo.min(1.0 / hi),
        }
    }

    fn region(&self, j: usize) -> &RegionCoefficient {
        &self.regions[(j - 1).min(self.regions.len() - 1)]
    }
}

impl CoefficientModel for PiecewiseCoefficients {
    fn matrix(&self, region: usize, _t: f64, x: [f64; 2]) -> Mat2 {
        match self.region(region) {
            RegionCoefficient::Constant { matrix } => *matrix,
            RegionCoefficient::Scalar { poly } => {
                let a = poly.value(x);
                [[a, 0.0], [0.0, a]]
            }
        }
    }

    fn gradient(&self, region: usize, _t: f64, x: [f64; 2]) -> [Mat2; 2] {
        match self.region(region) {
            RegionCoefficient::Constant { .. } => [[[0.0; 2]; 2]; 2],
            RegionCoefficient::Scalar { poly } => {
                let g = poly.gradient(x);
                [[[g[0], 0.0], [0.0, g[0]]], [[g[1], 0.0], [0.0, g[1]]]]
            }
        }
    }

    fn ellipticity(&self) -> f64 {
        self.nu
    }
}

/// Polynomial flux per region (missing regions are zero) with polynomial
/// boundary and initial data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PolynomialForcing {
    pub flux: Vec<[Poly2; 2]>,
    pub boundary: Poly2,
    pub initial: Poly2,
}

impl PolynomialForcing {
    /// Zero flux with the given boundary (also used as initial datum).
    pub fn zero_flux(boundary: Poly2) -> Self {
        Self { flux: Vec::new(), initial: boundary.clone(), boundary }
    }
}

impl ForcingModel for PolynomialForcing {
    fn flux(&self, region: usize, _t: f64, x: [f64; 2]) -> [f64; 2] {
        match self.flux.get(region - 1) {
            Some(f) => [f[0].value(x), f[1].value(x)],
            None => [0.0; 2],
        }
    }

    fn flux_gradient(&self, region: usize, _t: f64, x: [f64; 2]) -> Mat2 {
        match self.flux.get(region - 1) {
            Some(f) => [f[0].gradient(x), f[1].gradient(x)],
            None => [[0.0; 2]; 2],
        }
    }

    fn dirichlet(&self, _t: f64, x: [f64; 2]) -> f64 {
        self.boundary.value(x)
    }

    fn initial(&self, _t0: f64, x: [f64; 2]) -> f64 {
        self.initial.value(x)
    }
}

/// Time factor `φ(t)` of a separable manufactured solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TimeProfile {
    Constant,
    /// `exp(rate * t)`
    Exponential { rate: f64 },
    /// `1 + amp * sin(omega * t)`
    Oscillating { amp: f64, omega: f64 },
}

impl TimeProfile {
    /// `(φ, φ', φ'')`
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        match *self {
            Self::Constant => (1.0, 0.0, 0.0),
            Self::Exponential { rate } => {
                let e = (rate * t).exp();
                (e, rate * e, rate * rate * e)
            }
            Self::Oscillating { amp, omega } => {
                let (s, c) = (omega * t).sin_cos();
                (1.0 + amp * s, amp * omega * c, -amp * omega * omega * s)
            }
        }
    }
}

/// Continuous, piecewise-smooth `u*_j = φ(t) [P(x, y) + Σ_{i<j} κ_i (y - h_i(x))]`
/// with its flux data `f = A∇u* - F`, `F = (0, ∫_{-1}^{y} u*_t ds)`, so that
/// `u*` solves `-u_t + div(A∇u) = div f` and the conormal flux is continuous.
#[derive(Clone)]
pub struct Manufactured {
    pub stack: InterfaceStack,
    pub base: Poly2,
    /// Kink strength per interface (length `m`).
    pub kinks: Vec<f64>,
    pub profile: TimeProfile,
    pub coefficients: Arc<dyn CoefficientModel>,
}

/// Value, gradient and Hessian of the manufactured field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldJet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: Mat2,
}

impl Manufactured {
    /// Spatial part (without `φ`) in region `j`.
    fn spatial(&self, j: usize, x: [f64; 2]) -> FieldJet {
        let mut value = self.base.value(x);
        let mut grad = self.base.gradient(x);
        let mut hess = self.base.hessian(x);
        for i in 1..j.min(self.kinks.len() + 1) {
            let k = self.kinks[i - 1];
            let h = self.stack.jet(i, &[x[0]], 2);
            value += k * (x[1] - h.value);
            grad[0] -= k * h.grad[0];
            grad[1] += k;
            hess[0][0] -= k * h.hess[0][0];
        }
        FieldJet { value, grad, hess }
    }

    pub fn exact(&self, j: usize, t: f64, x: [f64; 2]) -> FieldJet {
        let (p, _, _) = self.profile.eval(t);
        let s = self.spatial(j, x);
        FieldJet {
            value: p * s.value,
            grad: [p * s.grad[0], p * s.grad[1]],
            hess: [[p * s.hess[0][0], p * s.hess[0][1]], [p * s.hess[1][0], p * s.hess[1][1]]],
        }
    }

    pub fn time_derivative(&self, j: usize, t: f64, x: [f64; 2]) -> f64 {
        let (_, dp, _) = self.profile.eval(t);
        dp * self.spatial(j, x).value
    }

    /// `(∫_{-1}^{y} S ds, ∂_x of it)` for the spatial part `S` of region `j`.
    fn column_integral(&self, j: usize, x: [f64; 2]) -> (f64, f64) {
        let (mut v, mut dx) = self.base.y_antiderivative(x);
        for i in 1..j.min(self.kinks.len() + 1) {
            let k = self.kinks[i - 1];
            let h = self.stack.jet(i, &[x[0]], 1);
            let r = x[1] - h.value;
            v += 0.5 * k * r * r;
            dx -= k * h.grad[0] * r;
        }
        (v, dx)
    }
}

impl ForcingModel for Manufactured {
    fn flux(&self, region: usize, t: f64, x: [f64; 2]) -> [f64; 2] {
        let a = self.coefficients.matrix(region, t, x);
        let u = self.exact(region, t, x);
        let (_, dp, _) = self.profile.eval(t);
        let f2 = dp * self.column_integral(region, x).0;
        [
            a[0][0] * u.grad[0] + a[0][1] * u.grad[1],
            a[1][0] * u.grad[0] + a[1][1] * u.grad[1] - f2,
        ]
    }

    fn flux_gradient(&self, region: usize, t: f64, x: [f64; 2]) -> Mat2 {
        let a = self.coefficients.matrix(region, t, x);
        let da = self.coefficients.gradient(region, t, x);
        let u = self.exact(region, t, x);
        let (_, dp, _) = self.profile.eval(t);
        let (_, col_dx) = self.column_integral(region, x);
        let ut = dp * self.spatial(region, x).value;
        let mut out = [[0.0; 2]; 2];
        for alpha in 0..2 {
            for b in 0..2 {
                let mut s = 0.0;
                for beta in 0..2 {
                    s += da[b][alpha][beta] * u.grad[beta] + a[alpha][beta] * u.hess[beta][b];
                }
                out[alpha][b] = s;
            }
        }
        out[1][0] -= dp * col_dx;
        out[1][1] -= ut;
        out
    }

    fn flux_time_derivative(&self, region: usize, t: f64, x: [f64; 2]) -> [f64; 2] {
        let a = self.coefficients.matrix(region, t, x);
        let dat = self.coefficients.time_derivative(region, t, x);
        let (p, dp, ddp) = self.profile.eval(t);
        let s = self.spatial(region, x);
        let mut out = [0.0; 2];
        for alpha in 0..2 {
            for beta in 0..2 {
                out[alpha] += dat[alpha][beta] * p * s.grad[beta] + a[alpha][beta] * dp * s.grad[beta];
            }
        }
        out[1] -= ddp * self.column_integral(region, x).0;
        out
    }

    fn dirichlet(&self, t: f64, x: [f64; 2]) -> f64 {
        let j = self.stack.region_of(&x);
        self.exact(j, t, x).value
    }

    fn initial(&self, t0: f64, x: [f64; 2]) -> f64 {
        self.dirichlet(t0, x)
    }
}
