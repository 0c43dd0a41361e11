//! Ordered stacks of graph interfaces and the subdomains between them.

use serde::{Deserialize, Serialize};

use super::interface::{InterfaceJet, InterfaceShape};
use super::GeometryError;

/// Default tolerance for classifying a point as lying on an interface.
pub const TOL_IFACE: f64 = 1e-13;

/// Samples per tangential axis used to validate interface ordering.
const ORDER_SAMPLES_2D: usize = 801;
const ORDER_SAMPLES_3D: usize = 81;

/// `m` interior interfaces `h_1 <= ... <= h_m` inside `(-1, 1)`, with the implicit
/// sentinels `h_0 = -1` and `h_{m+1} = 1`. Region `j` lies between `h_{j-1}` and `h_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceStack {
    dim: usize,
    interfaces: Vec<InterfaceShape>,
}

/// How a point sits relative to the stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IncidenceKind {
    Interior,
    OnInterface,
    OnOuterBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionIncidence {
    pub kind: IncidenceKind,
    /// Region index for `Interior`, interface index for `OnInterface`,
    /// and the adjacent region for `OnOuterBoundary`.
    pub index: usize,
    /// Euclidean distance to the nearest interior interface (infinite when `m = 0`).
    pub interface_distance: f64,
}

/// Closest point on an interface.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub foot: Vec<f64>,
    pub distance: f64,
}

impl InterfaceStack {
    /// Builds a stack, checking ordering and the `(-1, 1)` range on a sample grid.
    /// Equality of neighbouring interfaces is accepted only at isolated samples.
    pub fn new(dim: usize, interfaces: Vec<InterfaceShape>) -> Result<Self, GeometryError> {
        if !(dim == 2 || dim == 3) {
            return Err(GeometryError::UnsupportedDimension(dim));
        }
        let stack = Self { dim, interfaces };
        stack.validate()?;
        Ok(stack)
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let samples = self.order_samples();
        let m = self.m();
        for j in 1..=m {
            let mut prev_touch = false;
            for xp in &samples {
                let h = self.height(j, xp);
                if !h.is_finite() || h <= -1.0 || h >= 1.0 {
                    return Err(GeometryError::OutOfRange { interface: j, at: xp.clone() });
                }
                if j > 1 {
                    let below = self.height(j - 1, xp);
                    if h < below {
                        return Err(GeometryError::OrderingViolation {
                            lower: j - 1,
                            upper: j,
                            at: xp.clone(),
                        });
                    }
                    let touch = h - below <= 1e-14;
                    // in 3-D the grid is not a path, so only 2-D adjacency is checked
                    if touch && prev_touch && self.dim == 2 {
                        return Err(GeometryError::OrderingViolation {
                            lower: j - 1,
                            upper: j,
                            at: xp.clone(),
                        });
                    }
                    prev_touch = touch;
                }
            }
        }
        Ok(())
    }

    fn order_samples(&self) -> Vec<Vec<f64>> {
        if self.dim == 2 {
            (0..ORDER_SAMPLES_2D)
                .map(|i| vec![-1.0 + 2.0 * (i as f64 + 0.5) / ORDER_SAMPLES_2D as f64])
                .collect()
        } else {
            let mut out = Vec::new();
            for i in 0..ORDER_SAMPLES_3D {
                for k in 0..ORDER_SAMPLES_3D {
                    let a = -1.0 + 2.0 * (i as f64 + 0.5) / ORDER_SAMPLES_3D as f64;
                    let b = -1.0 + 2.0 * (k as f64 + 0.5) / ORDER_SAMPLES_3D as f64;
                    if a * a + b * b < 1.0 {
                        out.push(vec![a, b]);
                    }
                }
            }
            out
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of interior interfaces.
    pub fn m(&self) -> usize {
        self.interfaces.len()
    }

    pub fn regions(&self) -> usize {
        self.interfaces.len() + 1
    }

    pub fn interfaces(&self) -> &[InterfaceShape] {
        &self.interfaces
    }

    /// `h_j(x')` including the sentinels `j = 0` and `j = m + 1`.
    pub fn height(&self, j: usize, xp: &[f64]) -> f64 {
        if j == 0 {
            -1.0
        } else if j > self.m() {
            1.0
        } else {
            self.interfaces[j - 1].value(xp)
        }
    }

    /// Jet of `h_j` including sentinels (constant jets).
    pub fn jet(&self, j: usize, xp: &[f64], order: usize) -> InterfaceJet {
        if j == 0 {
            InterfaceJet::constant(-1.0)
        } else if j > self.m() {
            InterfaceJet::constant(1.0)
        } else {
            self.interfaces[j - 1].jet(xp, order)
        }
    }

    /// Jets of all interfaces `h_0 .. h_{m+1}` at one column.
    pub fn column(&self, xp: &[f64], order: usize) -> Vec<InterfaceJet> {
        (0..=self.m() + 1).map(|j| self.jet(j, xp, order)).collect()
    }

    /// Checked evaluation of an interior interface and its derivatives.
    pub fn eval_interface(
        &self,
        j: usize,
        xp: &[f64],
        order: usize,
    ) -> Result<InterfaceJet, GeometryError> {
        if j == 0 || j > self.m() {
            return Err(GeometryError::InterfaceIndex { index: j, m: self.m() });
        }
        self.check_tangential(xp)?;
        Ok(self.interfaces[j - 1].jet(xp, order.min(3)))
    }

    fn check_tangential(&self, xp: &[f64]) -> Result<(), GeometryError> {
        if xp.len() != self.dim - 1 {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim - 1,
                got: xp.len(),
            });
        }
        if xp.iter().map(|v| v * v).sum::<f64>() >= 1.0 {
            return Err(GeometryError::OutsideDomain(xp.to_vec()));
        }
        Ok(())
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<(), GeometryError> {
        if x.len() != self.dim {
            return Err(GeometryError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// Region index `j` with `h_{j-1} <= x^d < h_j`, clamped to `1..=m+1`.
    /// Never fails; used on hot paths where the point is known to be inside.
    pub fn region_of(&self, x: &[f64]) -> usize {
        let d = self.dim;
        let (xp, xd) = (&x[..d - 1], x[d - 1]);
        let mut j = 1;
        for i in 1..=self.m() {
            if xd >= self.height(i, xp) {
                j = i + 1;
            }
        }
        j
    }

    pub fn classify_point(&self, x: &[f64]) -> Result<RegionIncidence, GeometryError> {
        self.classify_point_with_tol(x, TOL_IFACE)
    }

    pub fn classify_point_with_tol(
        &self,
        x: &[f64],
        tol: f64,
    ) -> Result<RegionIncidence, GeometryError> {
        self.check_point(x)?;
        let d = self.dim;
        let (xp, xd) = (&x[..d - 1], x[d - 1]);
        if xp.iter().map(|v| v * v).sum::<f64>() >= 1.0 || xd.abs() > 1.0 {
            return Err(GeometryError::OutsideDomain(x.to_vec()));
        }
        let interface_distance = (1..=self.m())
            .map(|j| self.projection_distance(j, x))
            .fold(f64::INFINITY, f64::min);
        if (xd.abs() - 1.0).abs() <= tol {
            let index = if xd > 0.0 { self.regions() } else { 1 };
            return Ok(RegionIncidence {
                kind: IncidenceKind::OnOuterBoundary,
                index,
                interface_distance,
            });
        }
        for j in 1..=self.m() {
            if (xd - self.height(j, xp)).abs() <= tol {
                return Ok(RegionIncidence {
                    kind: IncidenceKind::OnInterface,
                    index: j,
                    interface_distance,
                });
            }
        }
        Ok(RegionIncidence {
            kind: IncidenceKind::Interior,
            index: self.region_of(x),
            interface_distance,
        })
    }

    /// Unit normal of `Γ_j` at `x'`, last component positive.
    pub fn interface_normal(&self, j: usize, xp: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let jet = self.eval_interface(j, xp, 1)?;
        Ok(normal_from_gradient(&jet.grad[..self.dim - 1]))
    }

    /// Anchor points `P_1 x0, ..., P_{m+1} x0` used to freeze the tangential
    /// correction at a base point.
    pub fn anchor_points(&self, x0: &[f64], j0: usize) -> Result<Vec<Vec<f64>>, GeometryError> {
        self.check_point(x0)?;
        if j0 == 0 || j0 > self.regions() {
            return Err(GeometryError::RegionIndex { index: j0, regions: self.regions() });
        }
        let d = self.dim;
        let xp = &x0[..d - 1];
        Ok((1..=self.regions())
            .map(|j| {
                if j == j0 {
                    x0.to_vec()
                } else {
                    let h = if j < j0 { self.height(j, xp) } else { self.height(j - 1, xp) };
                    let mut p = xp.to_vec();
                    p.push(h);
                    p
                }
            })
            .collect())
    }

    /// Closest point on `Γ_j` to `x`, searched over `x' ± 0.5`.
    pub fn nearest_projection(&self, j: usize, x: &[f64]) -> Result<Projection, GeometryError> {
        if j == 0 || j > self.m() {
            return Err(GeometryError::InterfaceIndex { index: j, m: self.m() });
        }
        self.check_point(x)?;
        let (foot, distance, on_edge) = self.project(j, x);
        if on_edge {
            return Err(GeometryError::BracketFailure { interface: j, point: x.to_vec() });
        }
        Ok(Projection { foot, distance })
    }

    fn projection_distance(&self, j: usize, x: &[f64]) -> f64 {
        self.project(j, x).1
    }

    /// Returns (foot point, distance, minimum found on the bracket edge).
    fn project(&self, j: usize, x: &[f64]) -> (Vec<f64>, f64, bool) {
        const HALF: f64 = 0.5;
        let d = self.dim;
        let h = &self.interfaces[j - 1];
        let dist2 = |sp: &[f64]| {
            let mut s = 0.0;
            for i in 0..d - 1 {
                s += (x[i] - sp[i]).powi(2);
            }
            s + (x[d - 1] - h.value(sp)).powi(2)
        };
        let lo: Vec<f64> = x[..d - 1].iter().map(|v| v - HALF).collect();
        let hi: Vec<f64> = x[..d - 1].iter().map(|v| v + HALF).collect();
        let mut s: Vec<f64> = x[..d - 1].to_vec();
        // coordinate-wise golden section (a single pass is exact in 2-D)
        let sweeps = if d == 2 { 1 } else { 30 };
        for _ in 0..sweeps {
            for axis in 0..d - 1 {
                let f = |t: f64| {
                    let mut p = s.clone();
                    p[axis] = t;
                    dist2(&p)
                };
                s[axis] = golden_section(f, lo[axis], hi[axis], 1e-12);
            }
        }
        // Newton polish on the stationarity condition
        for _ in 0..20 {
            let jet = h.jet(&s, 2);
            let r = jet.value - x[d - 1];
            let n = d - 1;
            let mut g = [0.0; 2];
            let mut hm = [[0.0; 2]; 2];
            for a in 0..n {
                g[a] = (s[a] - x[a]) + r * jet.grad[a];
                for b in 0..n {
                    hm[a][b] = (a == b) as u8 as f64 + jet.grad[a] * jet.grad[b] + r * jet.hess[a][b];
                }
            }
            let step: Vec<f64> = if n == 1 {
                if hm[0][0] <= 0.0 {
                    break;
                }
                vec![g[0] / hm[0][0]]
            } else {
                let det = hm[0][0] * hm[1][1] - hm[0][1] * hm[1][0];
                if det <= 0.0 || hm[0][0] <= 0.0 {
                    break;
                }
                vec![
                    (hm[1][1] * g[0] - hm[0][1] * g[1]) / det,
                    (hm[0][0] * g[1] - hm[1][0] * g[0]) / det,
                ]
            };
            let trial: Vec<f64> = s.iter().zip(&step).map(|(a, b)| a - b).collect();
            if trial.iter().zip(lo.iter().zip(&hi)).any(|(t, (l, u))| t < l || t > u) {
                break;
            }
            if dist2(&trial) > dist2(&s) {
                break;
            }
            let size = step.iter().map(|v| v.abs()).fold(0.0, f64::max);
            s = trial;
            if size < 1e-15 {
                break;
            }
        }
        let on_edge = s
            .iter()
            .zip(lo.iter().zip(&hi))
            .any(|(t, (l, u))| (t - l).abs() < 1e-9 || (u - t).abs() < 1e-9);
        let mut foot = s.clone();
        foot.push(h.value(&s));
        (foot, dist2(&s).sqrt(), on_edge)
    }
}

/// `(1 + |g|^2)^{-1/2} (-g, 1)`.
pub fn normal_from_gradient(grad: &[f64]) -> Vec<f64> {
    let scale = (1.0 + grad.iter().map(|g| g * g).sum::<f64>()).sqrt().recip();
    let mut n: Vec<f64> = grad.iter().map(|g| -g * scale).collect();
    n.push(scale);
    n
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single(h: InterfaceShape) -> InterfaceStack {
        InterfaceStack::new(2, vec![h]).unwrap()
    }

    #[test]
    fn classify_examples() {
        let s = single(InterfaceShape::flat(0.0));
        let a = s.classify_point(&[0.3, -0.5]).unwrap();
        assert_eq!((a.kind, a.index), (IncidenceKind::Interior, 1));
        let b = s.classify_point(&[0.0, 0.2]).unwrap();
        assert_eq!((b.kind, b.index), (IncidenceKind::Interior, 2));
        let c = s.classify_point(&[0.1, 0.0]).unwrap();
        assert_eq!((c.kind, c.index), (IncidenceKind::OnInterface, 1));
        let e = s.classify_point(&[0.1, 1.0]).unwrap();
        assert_eq!(e.kind, IncidenceKind::OnOuterBoundary);
        assert!(s.classify_point(&[1.0, 0.3]).is_err());
        assert!(s.classify_point(&[0.0, 1.5]).is_err());
        assert_abs_diff_eq!(a.interface_distance, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ordering_violation_rejected() {
        let err = InterfaceStack::new(
            2,
            vec![InterfaceShape::flat(0.5), InterfaceShape::flat(-0.5)],
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::OrderingViolation { .. }));
        assert!(InterfaceStack::new(2, vec![InterfaceShape::flat(1.0)]).is_err());
        // touching at the isolated point x' = 0 is admitted
        InterfaceStack::new(
            2,
            vec![InterfaceShape::parabola(-1.0, 0.0, 0.0), InterfaceShape::parabola(0.5, 0.0, 0.0)],
        )
        .unwrap();
        // coincident interfaces are not
        assert!(InterfaceStack::new(
            2,
            vec![InterfaceShape::flat(0.1), InterfaceShape::flat(0.1)]
        )
        .is_err());
    }

    #[test]
    fn eval_interface_errors() {
        let s = single(InterfaceShape::flat(0.0));
        assert!(matches!(s.eval_interface(2, &[0.0], 0), Err(GeometryError::InterfaceIndex { .. })));
        assert!(matches!(s.eval_interface(1, &[1.0], 0), Err(GeometryError::OutsideDomain(_))));
    }

    #[test]
    fn normals() {
        let s = single(InterfaceShape::flat(0.2));
        assert_eq!(s.interface_normal(1, &[0.4]).unwrap(), vec![0.0, 1.0]);
        let s = single(InterfaceShape::polynomial_1d(&[0.0, 1.0]));
        let n = s.interface_normal(1, &[0.0]).unwrap();
        let r = 0.5f64.sqrt();
        assert_abs_diff_eq!(n[0], -r, epsilon = 1e-15);
        assert_abs_diff_eq!(n[1], r, epsilon = 1e-15);
        let s = single(InterfaceShape::parabola(1.0, 0.0, 0.0));
        let n = s.interface_normal(1, &[0.5]).unwrap();
        assert_abs_diff_eq!(n[0], -r, epsilon = 1e-15);
        assert_abs_diff_eq!(n[1], r, epsilon = 1e-15);
    }

    #[test]
    fn anchor_point_examples() {
        let s = single(InterfaceShape::flat(0.0));
        assert_eq!(
            s.anchor_points(&[0.0, -0.5], 1).unwrap(),
            vec![vec![0.0, -0.5], vec![0.0, 0.0]]
        );
        let s = InterfaceStack::new(2, vec![InterfaceShape::flat(-0.2), InterfaceShape::flat(0.3)])
            .unwrap();
        assert_eq!(
            s.anchor_points(&[0.1, 0.0], 2).unwrap(),
            vec![vec![0.1, -0.2], vec![0.1, 0.0], vec![0.1, 0.3]]
        );
        let s = single(InterfaceShape::parabola(1.0, 0.0, 0.0));
        assert_eq!(
            s.anchor_points(&[0.5, 0.5], 2).unwrap(),
            vec![vec![0.5, 0.25], vec![0.5, 0.5]]
        );
    }

    #[test]
    fn projection_examples() {
        let s = single(InterfaceShape::flat(0.0));
        let p = s.nearest_projection(1, &[0.3, 0.4]).unwrap();
        assert_abs_diff_eq!(p.foot[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(p.distance, 0.4, epsilon = 1e-12);

        // projection onto the line y = x: closed form foot ((x+y)/2, (x+y)/2)
        let s = single(InterfaceShape::polynomial_1d(&[0.0, 1.0]));
        let p = s.nearest_projection(1, &[0.0, 0.2]).unwrap();
        assert_abs_diff_eq!(p.foot[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(p.foot[1], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(p.distance, 0.2 / 2f64.sqrt(), epsilon = 1e-12);

        let s = single(InterfaceShape::parabola(1.0, 0.0, 0.0));
        let p = s.nearest_projection(1, &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p.distance, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_bracket_failure() {
        // foot of (0, 5) on y = 0.9 x' sits at x' ~ 2.49, outside x' +- 0.5
        let s = single(InterfaceShape::polynomial_1d(&[0.0, 0.9]));
        assert!(matches!(
            s.nearest_projection(1, &[0.0, 5.0]),
            Err(GeometryError::BracketFailure { .. })
        ));
    }

    #[test]
    fn projection_in_three_dimensions() {
        let s = InterfaceStack::new(3, vec![InterfaceShape::parabola(0.5, 0.0, 0.0)]).unwrap();
        let x = [0.2, -0.1, 0.4];
        let p = s.nearest_projection(1, &x).unwrap();
        // foot satisfies the stationarity condition: x - foot parallel to the normal
        let n = s.interface_normal(1, &p.foot[..2]).unwrap();
        let diff: Vec<f64> = x.iter().zip(&p.foot).map(|(a, b)| a - b).collect();
        let along: f64 = diff.iter().zip(&n).map(|(a, b)| a * b).sum();
        for i in 0..3 {
            assert_abs_diff_eq!(diff[i], along * n[i], epsilon = 1e-10);
        }
        assert_abs_diff_eq!(p.distance, along.abs(), epsilon = 1e-12);
    }
}
