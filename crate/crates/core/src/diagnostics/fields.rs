//! Tangential derivatives, conormal flux and the corrected flux data of the
//! differentiated problem.

use serde::{Deserialize, Serialize};

use super::{DiagnosticsError, ParabolicPoint};
use crate::geometry::{frame_jet, orthonormal_frame, InterfaceStack, RawRule};
use crate::solver::{default_recovery_radius, recover_derivatives, CoefficientModel, FieldSolution, ForcingModel, Mat2};

/// One-sided gradient of a field: `∇u` restricted to region `region`,
/// extended to the closure (and slightly beyond) for traces.
pub trait GradientSource: Sync {
    fn gradient(&self, region: usize, t: f64, x: [f64; 2]) -> Option<[f64; 2]>;
}

/// Per-element P1 gradients at the time level nearest to `t`.
impl GradientSource for FieldSolution {
    fn gradient(&self, region: usize, t: f64, x: [f64; 2]) -> Option<[f64; 2]> {
        self.gradient_at(self.slab_at(t), x, Some(region)).map(|g| g.0)
    }
}

/// Gradient given by a closure `(region, t, x) -> ∇u`.
pub struct FnGradient<F>(pub F);

impl<F> GradientSource for FnGradient<F>
where
    F: Fn(usize, f64, [f64; 2]) -> Option<[f64; 2]> + Sync,
{
    fn gradient(&self, region: usize, t: f64, x: [f64; 2]) -> Option<[f64; 2]> {
        (self.0)(region, t, x)
    }
}

/// Least-squares recovered gradients and Hessians of a discrete solution.
pub struct RecoveredGradient<'a> {
    pub solution: &'a FieldSolution,
    radii: Vec<f64>,
}

impl<'a> RecoveredGradient<'a> {
    /// `radius: None` uses [`default_recovery_radius`] per region.
    pub fn new(solution: &'a FieldSolution, radius: Option<f64>) -> Self {
        let mesh = &solution.mesh;
        let radii = (1..=mesh.regions_count())
            .map(|j| radius.unwrap_or_else(|| default_recovery_radius(mesh, j)))
            .collect();
        Self { solution, radii }
    }

    pub fn radius(&self, region: usize) -> f64 {
        self.radii[region - 1]
    }

    pub fn hessian(&self, region: usize, t: f64, x: [f64; 2]) -> Option<Mat2> {
        let slab = self.solution.slab_at(t);
        let r = recover_derivatives(&self.solution.mesh, &self.solution.values[slab], region, &[x], self.radius(region)).ok()?;
        Some(r[0].hess)
    }
}

impl GradientSource for RecoveredGradient<'_> {
    fn gradient(&self, region: usize, t: f64, x: [f64; 2]) -> Option<[f64; 2]> {
        let slab = self.solution.slab_at(t);
        let r = recover_derivatives(&self.solution.mesh, &self.solution.values[slab], region, &[x], self.radius(region)).ok()?;
        Some(r[0].grad)
    }
}

fn mat_vec(a: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

fn dot(a: [f64; 2], b: &[f64]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Largest cross-interface jumps of `D_ℓ u` and `U`, sampled along each interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldJumps {
    pub d_ell_sup: f64,
    pub conormal_sup: f64,
    /// `(d_ell, conormal)` sup per interface.
    pub per_interface: Vec<(f64, f64)>,
}

/// `D_ℓ u = ℓ·∇u` and `U = n·(A∇u - f)` built from the global frame field.
pub struct DirectionalFields<'a, G: GradientSource + ?Sized> {
    pub stack: &'a InterfaceStack,
    pub coeff: &'a dyn CoefficientModel,
    pub forcing: &'a dyn ForcingModel,
    pub grad: &'a G,
}

impl<G: GradientSource + ?Sized> DirectionalFields<'_, G> {
    /// `(ℓ·∇u, n·(A∇u - f))` using the gradient of `region` at `x`.
    pub fn in_region(&self, region: usize, t: f64, x: [f64; 2]) -> Option<(f64, f64)> {
        let frame = orthonormal_frame(self.stack, &x).ok()?;
        let g = self.grad.gradient(region, t, x)?;
        let a = self.coeff.matrix(region, t, x);
        let f = self.forcing.flux(region, t, x);
        let ag = mat_vec(&a, g);
        Some((dot(g, &frame.tangents[0]), dot([ag[0] - f[0], ag[1] - f[1]], &frame.normal)))
    }

    pub fn d_ell(&self, t: f64, x: [f64; 2]) -> Option<f64> {
        self.pair(&ParabolicPoint { t, x }).map(|p| p.0)
    }

    pub fn conormal(&self, t: f64, x: [f64; 2]) -> Option<f64> {
        self.pair(&ParabolicPoint { t, x }).map(|p| p.1)
    }

    /// Both fields at `z`, taken from the region containing `z`.
    pub fn pair(&self, z: &ParabolicPoint) -> Option<(f64, f64)> {
        self.in_region(self.stack.region_of(&z.x), z.t, z.x)
    }

    /// Two-sided comparison at `columns` midpoints along every interface.
    pub fn jumps(&self, t: f64, columns: usize) -> FieldJumps {
        let per_interface: Vec<(f64, f64)> = (1..=self.stack.m())
            .map(|j| {
                let mut sup = (0.0f64, 0.0f64);
                for i in 0..columns {
                    let x = -1.0 + 2.0 * (i as f64 + 0.5) / columns as f64;
                    let p = [x, self.stack.height(j, &[x])];
                    if let (Some(lo), Some(hi)) = (self.in_region(j, t, p), self.in_region(j + 1, t, p)) {
                        sup.0 = sup.0.max((hi.0 - lo.0).abs());
                        sup.1 = sup.1.max((hi.1 - lo.1).abs());
                    }
                }
                sup
            })
            .collect();
        FieldJumps {
            d_ell_sup: per_interface.iter().map(|p| p.0).fold(0.0, f64::max),
            conormal_sup: per_interface.iter().map(|p| p.1).fold(0.0, f64::max),
            per_interface,
        }
    }
}

/// Right-hand side data of the problem satisfied by `D_ℓ u` after the
/// tangential correction anchored at `anchor` is subtracted.
pub struct CorrectedFlux<'a, G: GradientSource + ?Sized> {
    pub stack: &'a InterfaceStack,
    pub coeff: &'a dyn CoefficientModel,
    pub forcing: &'a dyn ForcingModel,
    pub grad: &'a G,
    pub anchor: ParabolicPoint,
    pub anchor_region: usize,
    /// Projections `P_j x0` onto the closure of each region.
    pub anchor_points: Vec<[f64; 2]>,
    /// `∇u_j(t0, P_j x0)`.
    pub anchor_gradients: Vec<[f64; 2]>,
}

pub fn corrected_flux_data<'a, G: GradientSource + ?Sized>(
    stack: &'a InterfaceStack,
    coeff: &'a dyn CoefficientModel,
    forcing: &'a dyn ForcingModel,
    grad: &'a G,
    anchor: ParabolicPoint,
) -> Result<CorrectedFlux<'a, G>, DiagnosticsError> {
    let j0 = stack.region_of(&anchor.x);
    let anchor_points: Vec<[f64; 2]> =
        stack.anchor_points(&anchor.x, j0)?.into_iter().map(|p| [p[0], p[1]]).collect();
    let anchor_gradients = anchor_points
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            grad.gradient(k + 1, anchor.t, p)
                .ok_or_else(|| DiagnosticsError::InvalidRequest(format!("no region-{} gradient at {p:?}", k + 1)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorrectedFlux { stack, coeff, forcing, grad, anchor, anchor_region: j0, anchor_points, anchor_gradients })
}

impl<G: GradientSource + ?Sized> CorrectedFlux<'_, G> {
    fn gradient(&self, region: usize, t: f64, x: [f64; 2]) -> Result<[f64; 2], DiagnosticsError> {
        self.grad
            .gradient(region, t, x)
            .ok_or_else(|| DiagnosticsError::InvalidRequest(format!("no region-{region} gradient at {x:?}")))
    }

    /// `D_ℓ f + A (Dℓ)ᵀ∇u - (D_ℓ A)∇u`.
    pub fn f1(&self, t: f64, x: [f64; 2]) -> Result<[f64; 2], DiagnosticsError> {
        let region = self.stack.region_of(&x);
        let jet = frame_jet(self.stack, &x, RawRule::Auto)?;
        let ell = &jet.frame.tangents[0];
        let d_ell = &jet.d_tangents[0];
        let g = self.gradient(region, t, x)?;
        let a = self.coeff.matrix(region, t, x);
        let da = self.coeff.gradient(region, t, x);
        let df = self.forcing.flux_gradient(region, t, x);
        let w: [f64; 2] = std::array::from_fn(|b| d_ell[0][b] * g[0] + d_ell[1][b] * g[1]);
        let aw = mat_vec(&a, w);
        let mut out = [0.0; 2];
        for al in 0..2 {
            let dl_f = ell[0] * df[al][0] + ell[1] * df[al][1];
            let dl_a_g: f64 = (0..2).map(|be| (ell[0] * da[0][al][be] + ell[1] * da[1][al][be]) * g[be]).sum();
            out[al] = dl_f + aw[al] - dl_a_g;
        }
        Ok(out)
    }

    /// Jump across `Γ_j` of `(D_ℓ n_j)·(f - A∇u)` at abscissa `x1`.
    pub fn h_tilde(&self, j: usize, t: f64, x1: f64) -> Result<f64, DiagnosticsError> {
        let jet = self.stack.jet(j, &[x1], 2);
        let (s, s2) = (jet.grad[0], jet.hess[0][0]);
        let w = (1.0 + s * s).powf(-1.5);
        let dn = [-s2 * w, -s * s2 * w];
        let p = [x1, jet.value];
        let ell = orthonormal_frame(self.stack, &p)?.tangents[0].clone();
        let dl_n = [ell[0] * dn[0], ell[0] * dn[1]];
        let side = |region: usize| -> Result<f64, DiagnosticsError> {
            let g = self.gradient(region, t, p)?;
            let ag = mat_vec(&self.coeff.matrix(region, t, p), g);
            let f = self.forcing.flux(region, t, p);
            Ok(dl_n[0] * (f[0] - ag[0]) + dl_n[1] * (f[1] - ag[1]))
        };
        Ok(side(j + 1)? - side(j)?)
    }

    /// `f1 - A Σ_j (Dℓ̃_j)ᵀ ∇u_j(t0, P_j x0)` plus the vertical lift of the
    /// interface jumps `h̃_i / n_i^d` above each `Γ_i`.
    pub fn f3(&self, t: f64, x: [f64; 2]) -> Result<[f64; 2], DiagnosticsError> {
        let region = self.stack.region_of(&x);
        let mut out = self.f1(t, x)?;
        let mut w = [0.0; 2];
        for (k, g) in self.anchor_gradients.iter().enumerate() {
            let jet = frame_jet(self.stack, &x, RawRule::Strip(k + 1))?;
            let d = &jet.d_tangents[0];
            for b in 0..2 {
                w[b] += d[0][b] * g[0] + d[1][b] * g[1];
            }
        }
        let aw = mat_vec(&self.coeff.matrix(region, t, x), w);
        out[0] -= aw[0];
        out[1] -= aw[1];
        for i in 1..=self.stack.m() {
            let jet = self.stack.jet(i, &[x[0]], 1);
            if x[1] > jet.value {
                let nd = 1.0 / (1.0 + jet.grad[0] * jet.grad[0]).sqrt();
                out[1] += self.h_tilde(i, t, x[0])? / nd;
            }
        }
        Ok(out)
    }
}
