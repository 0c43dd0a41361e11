//! Interface-adapted frame fields.
//!
//! The raw tangent `ℓ^{k,0}` has a unit `k`-th component and a last component
//! that interpolates the interface slopes `D_k h_j` affinely in `x^d` between
//! neighbouring interfaces (constant above the top and below the bottom
//! interface). Gram–Schmidt turns the raw fields into orthonormal tangents;
//! the normal is built directly from the raw slopes. Every field comes with
//! its exact spatial Jacobian so no numerical differentiation is needed.

use serde::{Deserialize, Serialize};

use super::stack::{normal_from_gradient, IncidenceKind, InterfaceStack};
use super::GeometryError;

/// Orthonormal tangents, normal and the frame matrix whose rows are
/// `(ℓ^1, ..., ℓ^{d-1}, n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAtPoint {
    pub tangents: Vec<Vec<f64>>,
    pub normal: Vec<f64>,
    pub lambda: Vec<Vec<f64>>,
    pub region: usize,
}

/// Frame plus Jacobians: `d_tangents[k][i][b] = ∂_b ℓ^k_i`, `d_normal[i][b] = ∂_b n_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameJet {
    pub frame: FrameAtPoint,
    pub d_tangents: Vec<Vec<Vec<f64>>>,
    pub d_normal: Vec<Vec<f64>>,
    /// Raw slopes `ℓ^{k,0}_d` and their gradients.
    pub raw_slopes: Vec<f64>,
    pub d_raw_slopes: Vec<Vec<f64>>,
}

/// Which interpolation formula defines the raw field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawRule {
    /// The formula of the strip containing the point.
    Auto,
    /// The formula of strip `j` regardless of where the point lies
    /// (the smooth extension of the field restricted to `D_j`).
    Strip(usize),
}

/// Frame attached to a base point through its nearest interface point.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorFrame {
    pub frame: FrameAtPoint,
    /// Nearest point `y0` on the boundary of the base point's region.
    pub foot: Vec<f64>,
    /// Interface carrying `y0` (0 when the stack has no interfaces).
    pub interface: usize,
    pub distance: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Raw slopes `a_k = ℓ^{k,0}_d(x)` and `∂_b a_k` for `k < d-1`.
pub fn raw_slopes(
    stack: &InterfaceStack,
    x: &[f64],
    rule: RawRule,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), GeometryError> {
    stack.check_point(x)?;
    let d = stack.dim();
    let t = d - 1;
    let m = stack.m();
    let xp = &x[..t];
    let xd = x[d - 1];
    let mut a = vec![0.0; t];
    let mut da = vec![vec![0.0; d]; t];
    if m == 0 {
        return Ok((a, da));
    }
    let strip = match rule {
        RawRule::Auto => stack.region_of(x),
        RawRule::Strip(j) => {
            if j == 0 || j > stack.regions() {
                return Err(GeometryError::RegionIndex { index: j, regions: stack.regions() });
            }
            j
        }
    };
    if strip == 1 || strip == m + 1 {
        let iface = if strip == 1 { 1 } else { m };
        let jet = stack.jet(iface, xp, 2);
        for k in 0..t {
            a[k] = jet.grad[k];
            for b in 0..t {
                da[k][b] = jet.hess[b][k];
            }
        }
        return Ok((a, da));
    }
    let lo = stack.jet(strip - 1, xp, 2);
    let hi = stack.jet(strip, xp, 2);
    let gap = hi.value - lo.value;
    if gap <= 0.0 {
        if rule == RawRule::Auto {
            // touching column: the interpolation degenerates to the common slope
            for k in 0..t {
                a[k] = hi.grad[k];
                for b in 0..t {
                    da[k][b] = hi.hess[b][k];
                }
            }
            return Ok((a, da));
        }
        return Err(GeometryError::TouchingGap { strip, at: xp.to_vec() });
    }
    let theta = (xd - lo.value) / gap;
    for k in 0..t {
        let dg_k = hi.grad[k] - lo.grad[k];
        a[k] = theta * hi.grad[k] + (1.0 - theta) * lo.grad[k];
        for b in 0..t {
            let dg_b = hi.grad[b] - lo.grad[b];
            let dtheta_b = (-lo.grad[b] - theta * dg_b) / gap;
            let ddg = hi.hess[b][k] - lo.hess[b][k];
            da[k][b] = lo.hess[b][k] + theta * ddg + dtheta_b * dg_k;
        }
        da[k][d - 1] = dg_k / gap;
    }
    Ok((a, da))
}

/// `ℓ^{k,0}(x)` for `k` in `1..d` (one-based as in the usual notation).
pub fn raw_tangent(stack: &InterfaceStack, k: usize, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let d = stack.dim();
    if k == 0 || k >= d {
        return Err(GeometryError::TangentIndex { index: k, dim: d });
    }
    let (a, _) = raw_slopes(stack, x, RawRule::Auto)?;
    let mut v = vec![0.0; d];
    v[k - 1] = 1.0;
    v[d - 1] = a[k - 1];
    Ok(v)
}

/// Gram–Schmidt frame and exact Jacobians for the given raw rule.
pub fn frame_jet(stack: &InterfaceStack, x: &[f64], rule: RawRule) -> Result<FrameJet, GeometryError> {
    let (a, da) = raw_slopes(stack, x, rule)?;
    let region = match rule {
        RawRule::Auto => stack.region_of(x),
        RawRule::Strip(j) => j,
    };
    frame_from_slopes(&a, &da, region).ok_or_else(|| GeometryError::DegenerateFrame(x.to_vec()))
}

/// Gram–Schmidt frame from raw slopes `a_k` and their gradients `da[k][b]`.
/// Returns `None` if the raw tangents are linearly dependent.
pub fn frame_from_slopes(a: &[f64], da: &[Vec<f64>], region: usize) -> Option<FrameJet> {
    let t = a.len();
    let d = t + 1;

    let raw: Vec<Vec<f64>> = (0..t)
        .map(|k| {
            let mut v = vec![0.0; d];
            v[k] = 1.0;
            v[d - 1] = a[k];
            v
        })
        .collect();
    // d_raw[k][b] is the derivative of the raw vector in direction b
    let d_raw: Vec<Vec<Vec<f64>>> = (0..t)
        .map(|k| {
            (0..d)
                .map(|b| {
                    let mut v = vec![0.0; d];
                    v[d - 1] = da[k][b];
                    v
                })
                .collect()
        })
        .collect();

    let mut units: Vec<Vec<f64>> = Vec::with_capacity(t);
    let mut d_units: Vec<Vec<Vec<f64>>> = Vec::with_capacity(t); // [k][b][i]
    for k in 0..t {
        let mut w = raw[k].clone();
        for u in &units {
            let c = dot(u, &raw[k]);
            for i in 0..d {
                w[i] -= c * u[i];
            }
        }
        let norm = dot(&w, &w).sqrt();
        if !(norm > 1e-300) {
            return None;
        }
        let u: Vec<f64> = w.iter().map(|v| v / norm).collect();
        let mut du_dirs = Vec::with_capacity(d);
        for b in 0..d {
            let mut dw = d_raw[k][b].clone();
            for (ui, dui) in units.iter().zip(&d_units) {
                let c = dot(ui, &raw[k]);
                let dc = dot(&dui[b], &raw[k]) + dot(ui, &d_raw[k][b]);
                for i in 0..d {
                    dw[i] -= dc * ui[i] + c * dui[b][i];
                }
            }
            let along = dot(&u, &dw);
            du_dirs.push((0..d).map(|i| (dw[i] - along * u[i]) / norm).collect::<Vec<f64>>());
        }
        units.push(u);
        d_units.push(du_dirs);
    }

    let normal = normal_from_gradient(a);
    let nu_norm = normal[d - 1].recip();
    let mut d_normal = vec![vec![0.0; d]; d];
    for b in 0..d {
        let mut dnu = vec![0.0; d];
        for k in 0..t {
            dnu[k] = -da[k][b];
        }
        let along = dot(&normal, &dnu);
        for i in 0..d {
            d_normal[i][b] = (dnu[i] - along * normal[i]) / nu_norm;
        }
    }
    let d_tangents = (0..t)
        .map(|k| (0..d).map(|i| (0..d).map(|b| d_units[k][b][i]).collect()).collect())
        .collect();

    let mut lambda = units.clone();
    lambda.push(normal.clone());
    Some(FrameJet {
        frame: FrameAtPoint { tangents: units, normal, lambda, region },
        d_tangents,
        d_normal,
        raw_slopes: a.to_vec(),
        d_raw_slopes: da.to_vec(),
    })
}

/// Orthonormal frame at `x`.
pub fn orthonormal_frame(stack: &InterfaceStack, x: &[f64]) -> Result<FrameAtPoint, GeometryError> {
    Ok(frame_jet(stack, x, RawRule::Auto)?.frame)
}

/// Smooth extension of `ℓ^k` restricted to `D_j`, evaluated anywhere.
pub fn extended_tangent(
    stack: &InterfaceStack,
    j: usize,
    k: usize,
    x: &[f64],
) -> Result<Vec<f64>, GeometryError> {
    let d = stack.dim();
    if k == 0 || k >= d {
        return Err(GeometryError::TangentIndex { index: k, dim: d });
    }
    let jet = frame_jet(stack, x, RawRule::Strip(j))?;
    Ok(jet.frame.tangents[k - 1].clone())
}

/// Frame of the coordinate system attached to `x0`: tangents are `ℓ^k(y0)` and
/// the normal is the interface normal at the nearest boundary point `y0`.
pub fn frame_at_anchor(stack: &InterfaceStack, x0: &[f64]) -> Result<AnchorFrame, GeometryError> {
    let d = stack.dim();
    let inc = stack.classify_point(x0)?;
    let m = stack.m();
    if m == 0 {
        let mut lambda = vec![vec![0.0; d]; d];
        for (i, row) in lambda.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let normal = lambda[d - 1].clone();
        return Ok(AnchorFrame {
            frame: FrameAtPoint {
                tangents: lambda[..d - 1].to_vec(),
                normal,
                lambda,
                region: 1,
            },
            foot: x0.to_vec(),
            interface: 0,
            distance: 0.0,
        });
    }
    let candidates: Vec<usize> = match inc.kind {
        IncidenceKind::OnInterface => vec![inc.index],
        _ => {
            let j0 = stack.region_of(x0);
            let mut c = Vec::new();
            if j0 >= 2 {
                c.push(j0 - 1);
            }
            if j0 <= m {
                c.push(j0);
            }
            c
        }
    };
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    let mut last_err = None;
    for j in candidates {
        match stack.nearest_projection(j, x0) {
            Ok(p) => {
                if best.as_ref().is_none_or(|b| p.distance < b.2) {
                    best = Some((j, p.foot, p.distance));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (iface, foot, distance) = match best {
        Some(b) => b,
        None => return Err(last_err.unwrap_or(GeometryError::DegenerateFrame(x0.to_vec()))),
    };
    let on_surface = frame_jet(stack, &foot, RawRule::Auto)?.frame;
    let grad = stack.jet(iface, &foot[..d - 1], 1).grad;
    let normal = normal_from_gradient(&grad[..d - 1]);
    let mut lambda = on_surface.tangents.clone();
    lambda.push(normal.clone());
    Ok(AnchorFrame {
        frame: FrameAtPoint {
            tangents: on_surface.tangents,
            normal,
            lambda,
            region: stack.region_of(x0),
        },
        foot,
        interface: iface,
        distance,
    })
}

/// Flat strips of the anchor coordinate system: slabs orthogonal to the anchor
/// normal, bounded where the normal line through `y0` meets each interface.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorStrips {
    pub anchor: AnchorFrame,
    /// Signed offsets along the anchor normal, one per interior interface.
    pub offsets: Vec<f64>,
}

impl AnchorStrips {
    pub fn new(stack: &InterfaceStack, x0: &[f64]) -> Result<Self, GeometryError> {
        let anchor = frame_at_anchor(stack, x0)?;
        let d = stack.dim();
        let n = anchor.frame.normal.clone();
        let y0 = anchor.foot.clone();
        let point = |t: f64| -> Vec<f64> { y0.iter().zip(&n).map(|(a, b)| a + t * b).collect() };
        let phi = |j: usize, t: f64| {
            let p = point(t);
            p[d - 1] - stack.height(j, &p[..d - 1])
        };
        let offsets = (1..=stack.m())
            .map(|j| {
                if j == anchor.interface {
                    return 0.0;
                }
                // nearest sign change along the normal line
                let f0 = phi(j, 0.0);
                let step = 1e-3;
                let mut found = None;
                for s in 1..=3000 {
                    for dir in [1.0, -1.0] {
                        let (ta, tb) = (dir * (s - 1) as f64 * step, dir * s as f64 * step);
                        if found.is_none() && phi(j, ta).signum() != phi(j, tb).signum() {
                            found = Some((ta, tb));
                        }
                    }
                    if found.is_some() {
                        break;
                    }
                }
                match found {
                    Some((mut ta, mut tb)) => {
                        let fa0 = phi(j, ta);
                        for _ in 0..200 {
                            let mid = 0.5 * (ta + tb);
                            if phi(j, mid).signum() == fa0.signum() {
                                ta = mid;
                            } else {
                                tb = mid;
                            }
                        }
                        0.5 * (ta + tb)
                    }
                    None => {
                        if f0 > 0.0 {
                            f64::NEG_INFINITY
                        } else {
                            f64::INFINITY
                        }
                    }
                }
            })
            .collect();
        Ok(Self { anchor, offsets })
    }

    /// Normal coordinate of `x` relative to `y0`.
    pub fn normal_coordinate(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.anchor.foot)
            .zip(&self.anchor.frame.normal)
            .map(|((a, b), n)| (a - b) * n)
            .sum()
    }

    /// Strip index `1..=m+1` of `x`.
    pub fn strip_of(&self, x: &[f64]) -> usize {
        let s = self.normal_coordinate(x);
        1 + self.offsets.iter().filter(|&&t| s >= t).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::InterfaceShape;
    use approx::assert_abs_diff_eq;

    fn single(h: InterfaceShape) -> InterfaceStack {
        InterfaceStack::new(2, vec![h]).unwrap()
    }

    #[test]
    fn raw_tangent_top_case() {
        let s = single(InterfaceShape::parabola(1.0, 0.0, 0.0));
        assert_eq!(raw_tangent(&s, 1, &[0.5, 0.5]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn raw_tangent_bottom_case_is_constant_slope() {
        // below the lowest interface the raw slope is D h_1, not an interpolation
        let s = single(InterfaceShape::parabola(1.0, 0.0, 0.0));
        assert_eq!(raw_tangent(&s, 1, &[0.5, 0.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(raw_tangent(&s, 1, &[0.5, -0.9]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn raw_tangent_middle_interpolation() {
        // h1 = -0.5 (slope 0), h2 = x'^2 (slope 1 at 0.5): at x^d = 0, theta = 0.5/0.75
        let s = InterfaceStack::new(
            2,
            vec![InterfaceShape::flat(-0.5), InterfaceShape::parabola(1.0, 0.0, 0.0)],
        )
        .unwrap();
        let v = raw_tangent(&s, 1, &[0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(v[1], (0.5 / 0.75) * 1.0, epsilon = 1e-15);
    }

    #[test]
    fn raw_tangent_flat_stack() {
        let s = InterfaceStack::new(
            3,
            vec![InterfaceShape::flat(-0.3), InterfaceShape::flat(0.4)],
        )
        .unwrap();
        assert_eq!(raw_tangent(&s, 2, &[0.1, 0.2, 0.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(raw_tangent(&s, 3, &[0.1, 0.2, 0.0]).is_err());
    }

    #[test]
    fn raw_tangent_touching_column() {
        let s = InterfaceStack::new(
            2,
            vec![InterfaceShape::parabola(-1.0, 0.0, 0.0), InterfaceShape::parabola(1.0, 0.0, 0.0)],
        )
        .unwrap();
        let v = raw_tangent(&s, 1, &[0.0, 0.0]).unwrap();
        assert_eq!(v, vec![1.0, 0.0]);
        assert!(extended_tangent(&s, 2, 1, &[0.0, 0.3]).is_err());
    }

    #[test]
    fn two_d_frame_single_step() {
        let s = single(InterfaceShape::cosine(0.2, 3.0, 0.1));
        let x = [0.3, 0.5];
        let raw = raw_tangent(&s, 1, &x).unwrap();
        let f = orthonormal_frame(&s, &x).unwrap();
        let norm = (raw[0] * raw[0] + raw[1] * raw[1]).sqrt();
        assert_abs_diff_eq!(f.tangents[0][0], raw[0] / norm, epsilon = 1e-15);
        assert_abs_diff_eq!(f.tangents[0][1], raw[1] / norm, epsilon = 1e-15);
        assert_abs_diff_eq!(f.normal[0], -raw[1] / norm, epsilon = 1e-15);
        assert_abs_diff_eq!(f.normal[1], 1.0 / norm, epsilon = 1e-15);
    }

    #[test]
    fn three_d_gram_schmidt_example() {
        let da = vec![vec![0.0; 3]; 2];
        let f = frame_from_slopes(&[1.0, 1.0], &da, 1).unwrap().frame;
        let (r2, r3, r6) = (2f64.sqrt(), 3f64.sqrt(), 6f64.sqrt());
        let expected = [
            [1.0 / r2, 0.0, 1.0 / r2],
            [-1.0 / r6, 2.0 / r6, 1.0 / r6],
            [-1.0 / r3, -1.0 / r3, 1.0 / r3],
        ];
        for (row, exp) in f.lambda.iter().zip(&expected) {
            for (a, b) in row.iter().zip(exp) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-15);
            }
        }
        for i in 0..3 {
            for k in 0..3 {
                let g = dot(&f.lambda[i], &f.lambda[k]);
                assert_abs_diff_eq!(g, if i == k { 1.0 } else { 0.0 }, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn flat_three_d_frame_is_identity() {
        let s = InterfaceStack::new(3, vec![InterfaceShape::flat(0.1)]).unwrap();
        let f = orthonormal_frame(&s, &[0.2, -0.3, 0.5]).unwrap();
        assert_eq!(f.tangents, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        assert_eq!(f.normal, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn frame_jacobian_matches_finite_differences() {
        let s = InterfaceStack::new(
            3,
            vec![
                InterfaceShape::parabola(-0.3, 0.1, -0.2),
                InterfaceShape::cosine(0.1, 2.0, 0.3),
            ],
        )
        .unwrap();
        let x = [0.2, -0.25, -0.05];
        let jet = frame_jet(&s, &x, RawRule::Auto).unwrap();
        let h = 1e-6;
        for b in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[b] += h;
            xm[b] -= h;
            let fp = orthonormal_frame(&s, &xp).unwrap();
            let fm = orthonormal_frame(&s, &xm).unwrap();
            for k in 0..2 {
                for i in 0..3 {
                    let fd = (fp.tangents[k][i] - fm.tangents[k][i]) / (2.0 * h);
                    assert_abs_diff_eq!(jet.d_tangents[k][i][b], fd, epsilon = 1e-7);
                }
            }
            for i in 0..3 {
                let fd = (fp.normal[i] - fm.normal[i]) / (2.0 * h);
                assert_abs_diff_eq!(jet.d_normal[i][b], fd, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn anchor_frame_examples() {
        let s = single(InterfaceShape::flat(0.0));
        let a = frame_at_anchor(&s, &[0.2, -0.5]).unwrap();
        assert_eq!(a.frame.lambda, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);

        let s = single(InterfaceShape::polynomial_1d(&[0.0, 1.0]));
        let a = frame_at_anchor(&s, &[0.1, 0.05]).unwrap();
        let r = 0.5f64.sqrt();
        let expected = [[r, r], [-r, r]];
        for i in 0..2 {
            for k in 0..2 {
                assert_abs_diff_eq!(a.frame.lambda[i][k], expected[i][k], epsilon = 1e-12);
            }
        }
        // Λ n_{y0} = e_d
        let n = &a.frame.normal;
        let ln: Vec<f64> = a.frame.lambda.iter().map(|row| dot(row, n)).collect();
        assert_abs_diff_eq!(ln[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ln[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn extended_tangent_examples() {
        let s = InterfaceStack::new(2, vec![InterfaceShape::flat(0.2)]).unwrap();
        assert_eq!(extended_tangent(&s, 1, 1, &[0.3, 0.7]).unwrap(), vec![1.0, 0.0]);

        let s = single(InterfaceShape::parabola(1.0, 0.0, 0.0));
        let v = extended_tangent(&s, 2, 1, &[0.5, -0.9]).unwrap();
        let r = 0.5f64.sqrt();
        assert_abs_diff_eq!(v[0], r, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], r, epsilon = 1e-15);
    }

    #[test]
    fn extended_tangent_agrees_on_shared_interface() {
        let s = InterfaceStack::new(
            2,
            vec![InterfaceShape::parabola(-0.4, 0.1, -0.3), InterfaceShape::cosine(0.1, 2.0, 0.5)],
        )
        .unwrap();
        for &xp in &[-0.6, 0.0, 0.35] {
            let h1 = s.height(1, &[xp]);
            let on = [xp, h1];
            let ext = extended_tangent(&s, 2, 1, &on).unwrap();
            let own = orthonormal_frame(&s, &on).unwrap().tangents[0].clone();
            let below = orthonormal_frame(&s, &[xp, h1 - 1e-9]).unwrap().tangents[0].clone();
            for i in 0..2 {
                assert_abs_diff_eq!(ext[i], own[i], epsilon = 1e-12);
                assert_abs_diff_eq!(ext[i], below[i], epsilon = 1e-8);
            }
            // the extension continues smoothly into D_1
            let inside = extended_tangent(&s, 2, 1, &[xp, h1 - 1e-7]).unwrap();
            assert_abs_diff_eq!(inside[1], ext[1], epsilon = 1e-5);
        }
    }

    #[test]
    fn anchor_strips_flat() {
        let s = InterfaceStack::new(2, vec![InterfaceShape::flat(-0.2), InterfaceShape::flat(0.3)])
            .unwrap();
        let st = AnchorStrips::new(&s, &[0.1, 0.0]).unwrap();
        assert_eq!(st.anchor.interface, 1);
        assert_abs_diff_eq!(st.offsets[1], 0.5, epsilon = 1e-12);
        assert_eq!(st.strip_of(&[0.0, -0.5]), 1);
        assert_eq!(st.strip_of(&[0.0, 0.1]), 2);
        assert_eq!(st.strip_of(&[0.0, 0.5]), 3);
    }
}
