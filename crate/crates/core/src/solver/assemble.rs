//! P1 assembly and the elliptic / backward-Euler parabolic solves.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{CoefficientModel, ForcingModel, Mat2};
use super::sparse::{pcg, CgReport, Csr};
use super::SolverError;
use crate::geometry::InterfaceStack;
use crate::mesh::{build_strip_mesh, MeshParams, StripMesh};

/// Symmetric order-2 rule: barycentric points and weights (summing to 1).
pub const QUAD3: [([f64; 3], f64); 3] = [
    ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
];

const Q6_A: f64 = 0.445_948_490_915_965;
const Q6_B: f64 = 0.091_576_213_509_771;
const Q6_WA: f64 = 0.223_381_589_678_011;
const Q6_WB: f64 = 0.109_951_743_655_322;

/// Six-point rule exact for degree-4 polynomials.
pub const QUAD6: [([f64; 3], f64); 6] = [
    ([Q6_A, Q6_A, 1.0 - 2.0 * Q6_A], Q6_WA),
    ([Q6_A, 1.0 - 2.0 * Q6_A, Q6_A], Q6_WA),
    ([1.0 - 2.0 * Q6_A, Q6_A, Q6_A], Q6_WA),
    ([Q6_B, Q6_B, 1.0 - 2.0 * Q6_B], Q6_WB),
    ([Q6_B, 1.0 - 2.0 * Q6_B, Q6_B], Q6_WB),
    ([1.0 - 2.0 * Q6_B, Q6_B, Q6_B], Q6_WB),
];

pub(crate) fn map_point(c: &[[f64; 2]; 3], bary: &[f64; 3]) -> [f64; 2] {
    [
        bary[0] * c[0][0] + bary[1] * c[1][0] + bary[2] * c[2][0],
        bary[0] * c[0][1] + bary[1] * c[1][1] + bary[2] * c[2][1],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 200_000 }
    }
}

/// Stiffness matrix and load vector over all vertices with the Dirichlet split.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystemSPD {
    pub matrix: Csr,
    pub rhs: Vec<f64>,
    pub free: Vec<usize>,
    pub constrained: Vec<usize>,
}

fn check_ellipticity(a: &Mat2, nu: f64, element: usize, x: [f64; 2]) -> Result<(), SolverError> {
    let bad = || SolverError::EllipticityViolation { element, point: x };
    if a.iter().flatten().any(|v| !v.is_finite()) || (a[0][1] - a[1][0]).abs() > 1e-14 * (a[0][0].abs() + a[1][1].abs()) {
        return Err(bad());
    }
    let tr = 0.5 * (a[0][0] + a[1][1]);
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (tr * tr - det).max(0.0).sqrt();
    let (lo, hi) = (tr - disc, tr + disc);
    let slack = 1e-12;
    if lo < nu * (1.0 - slack) || hi > (1.0 + slack) / nu {
        return Err(bad());
    }
    Ok(())
}

/// Assembles `∫ A∇u·∇φ` and `∫ f·∇φ` with the three-point rule.
pub fn assemble_system(
    mesh: &StripMesh,
    coeff: &dyn CoefficientModel,
    forcing: &dyn ForcingModel,
    t: f64,
) -> Result<LinearSystemSPD, SolverError> {
    let nu = coeff.ellipticity();
    let local: Vec<([[f64; 3]; 3], [f64; 3])> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| {
            let corners = mesh.corners(e);
            let region = mesh.regions[e];
            let area = mesh.area(e);
            let g = mesh.shape_gradients(e);
            let mut abar = [[0.0; 2]; 2];
            let mut fbar = [0.0; 2];
            for (bary, w) in QUAD3.iter() {
                let x = map_point(&corners, bary);
                let a = coeff.matrix(region, t, x);
                check_ellipticity(&a, nu, e, x)?;
                let f = forcing.flux(region, t, x);
                if !(f[0].is_finite() && f[1].is_finite()) {
                    return Err(SolverError::InvalidData(format!("non-finite flux at {x:?}")));
                }
                for i in 0..2 {
                    fbar[i] += w * f[i];
                    for k in 0..2 {
                        abar[i][k] += w * a[i][k];
                    }
                }
            }
            let mut k = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in a..3 {
                    let mut s = 0.0;
                    for i in 0..2 {
                        for l in 0..2 {
                            s += g[a][i] * abar[i][l] * g[b][l];
                        }
                    }
                    k[a][b] = area * s;
                    k[b][a] = k[a][b];
                }
            }
            let load = [0, 1, 2].map(|a| area * (fbar[0] * g[a][0] + fbar[1] * g[a][1]));
            Ok((k, load))
        })
        .collect::<Result<_, SolverError>>()?;

    let n = mesh.num_vertices();
    let mut triplets = Vec::with_capacity(9 * local.len());
    let mut rhs = vec![0.0; n];
    for (e, (k, load)) in local.iter().enumerate() {
        let tri = mesh.triangles[e];
        for a in 0..3 {
            rhs[tri[a]] += load[a];
            for b in 0..3 {
                triplets.push((tri[a], tri[b], k[a][b]));
            }
        }
    }
    let matrix = Csr::from_triplets(n, triplets);
    let mut is_fixed = vec![false; n];
    for &d in &mesh.dirichlet {
        is_fixed[d] = true;
    }
    let free = (0..n).filter(|&i| !is_fixed[i]).collect();
    Ok(LinearSystemSPD { matrix, rhs, free, constrained: mesh.dirichlet.clone() })
}

/// Lumped P1 mass: one third of the adjacent element areas per vertex.
pub fn lumped_mass(mesh: &StripMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_vertices()];
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.area(e) / 3.0;
        for &v in tri {
            m[v] += a;
        }
    }
    m
}

/// Solves `(K + diag(shift)) u = rhs` with `u = g` on the constrained set.
fn solve_reduced(
    matrix: &Csr,
    rhs: &[f64],
    free: &[usize],
    boundary: &[(usize, f64)],
    guess: &[f64],
    params: &SolveParams,
) -> Result<(Vec<f64>, CgReport), SolverError> {
    let n = matrix.n;
    let mut u = guess.to_vec();
    let mut is_fixed = vec![false; n];
    for &(i, g) in boundary {
        u[i] = g;
        is_fixed[i] = true;
    }
    let mut b_f = Vec::with_capacity(free.len());
    for &i in free {
        let mut s = rhs[i];
        for (j, v) in matrix.row(i) {
            if is_fixed[j] {
                s -= v * u[j];
            }
        }
        b_f.push(s);
    }
    let a_ff = matrix.principal(free);
    let mut x: Vec<f64> = free.iter().map(|&i| u[i]).collect();
    let report = pcg(&a_ff, &b_f, &mut x, params.tol, params.max_iter)?;
    for (k, &i) in free.iter().enumerate() {
        u[i] = x[k];
    }
    Ok((u, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverMeta {
    /// CG iterations summed over all solves.
    pub iterations: usize,
    pub max_iterations: usize,
    /// Largest certified relative residual over all solves.
    pub residual: f64,
    pub solves: usize,
    pub restarts: usize,
    pub unknowns: usize,
    /// Strip cells widened by the mesh clamp.
    pub clamped: usize,
}

impl SolverMeta {
    fn record(&mut self, r: &CgReport) {
        self.iterations += r.iterations;
        self.max_iterations = self.max_iterations.max(r.iterations);
        self.residual = self.residual.max(r.residual);
        self.solves += 1;
        self.restarts += r.restarts;
    }
}

/// Nodal values per time level with per-element gradients.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub mesh: Arc<StripMesh>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub gradients: Vec<Vec<[f64; 2]>>,
    pub meta: SolverMeta,
}

pub fn element_gradients(mesh: &StripMesh, values: &[f64]) -> Vec<[f64; 2]> {
    (0..mesh.num_triangles())
        .map(|e| {
            let g = mesh.shape_gradients(e);
            let tri = mesh.triangles[e];
            let mut out = [0.0; 2];
            for a in 0..3 {
                out[0] += values[tri[a]] * g[a][0];
                out[1] += values[tri[a]] * g[a][1];
            }
            out
        })
        .collect()
}

impl FieldSolution {
    pub fn new(mesh: Arc<StripMesh>, times: Vec<f64>, values: Vec<Vec<f64>>, meta: SolverMeta) -> Self {
        let gradients = values.iter().map(|v| element_gradients(&mesh, v)).collect();
        Self { mesh, times, values, gradients, meta }
    }

    pub fn last(&self) -> usize {
        self.times.len() - 1
    }

    /// Interpolated value at `p` on time level `slab`.
    pub fn value_at(&self, slab: usize, p: [f64; 2]) -> Option<f64> {
        let loc = self.mesh.locate(p)?;
        let tri = self.mesh.triangles[loc.element];
        Some((0..3).map(|a| loc.bary[a] * self.values[slab][tri[a]]).sum())
    }

    /// Gradient at `p`, optionally from the element of region `region` nearest to `p`.
    pub fn gradient_at(&self, slab: usize, p: [f64; 2], region: Option<usize>) -> Option<([f64; 2], usize)> {
        let loc = match region {
            Some(j) => self.mesh.locate_in_region(p, j)?,
            None => self.mesh.locate(p)?,
        };
        Some((self.gradients[slab][loc.element], loc.element))
    }

    /// Index of the time level closest to `t`.
    pub fn slab_at(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, &tk) in self.times.iter().enumerate() {
            if (tk - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }
}

pub fn solve_elliptic(
    stack: &InterfaceStack,
    coeff: &dyn CoefficientModel,
    forcing: &dyn ForcingModel,
    mesh_params: &MeshParams,
    params: &SolveParams,
) -> Result<FieldSolution, SolverError> {
    let mesh = Arc::new(build_strip_mesh(stack, mesh_params)?);
    solve_elliptic_on(mesh, coeff, forcing, params)
}

pub fn solve_elliptic_on(
    mesh: Arc<StripMesh>,
    coeff: &dyn CoefficientModel,
    forcing: &dyn ForcingModel,
    params: &SolveParams,
) -> Result<FieldSolution, SolverError> {
    let sys = assemble_system(&mesh, coeff, forcing, 0.0)?;
    let boundary: Vec<(usize, f64)> = sys
        .constrained
        .iter()
        .map(|&i| (i, forcing.dirichlet(0.0, mesh.vertices[i])))
        .collect();
    let guess = vec![0.0; mesh.num_vertices()];
    let (u, report) = solve_reduced(&sys.matrix, &sys.rhs, &sys.free, &boundary, &guess, params)?;
    let mut meta = SolverMeta { unknowns: sys.free.len(), clamped: mesh.clamped, ..Default::default() };
    meta.record(&report);
    Ok(FieldSolution::new(mesh, vec![0.0], vec![u], meta))
}

/// Uniform time grid from `start` to `end` in `steps` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn dt(&self) -> f64 {
        (self.end - self.start) / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.start + k as f64 * self.dt()).collect()
    }
}

pub fn solve_parabolic(
    stack: &InterfaceStack,
    coeff: &dyn CoefficientModel,
    forcing: &dyn ForcingModel,
    grid: &TimeGrid,
    mesh_params: &MeshParams,
    params: &SolveParams,
) -> Result<FieldSolution, SolverError> {
    let mesh = Arc::new(build_strip_mesh(stack, mesh_params)?);
    solve_parabolic_on(mesh, coeff, forcing, grid, params)
}

/// Backward Euler with lumped mass: `(M/Δt + K) u^{n+1} = M u^n / Δt + b(t_{n+1})`.
pub fn solve_parabolic_on(
    mesh: Arc<StripMesh>,
    coeff: &dyn CoefficientModel,
    forcing: &dyn ForcingModel,
    grid: &TimeGrid,
    params: &SolveParams,
) -> Result<FieldSolution, SolverError> {
    let dt = grid.dt();
    if grid.steps == 0 || !(dt > 0.0) {
        return Err(SolverError::InvalidTimeGrid(format!(
            "start {} end {} steps {}",
            grid.start, grid.end, grid.steps
        )));
    }
    let times = grid.times();
    let mass = lumped_mass(&mesh);
    let u0: Vec<f64> = mesh.vertices.iter().map(|&x| forcing.initial(grid.start, x)).collect();
    let mut values = vec![u0];
    let mut meta = SolverMeta { clamped: mesh.clamped, ..Default::default() };
    let shifted = |sys: &LinearSystemSPD| {
        let mut m = sys.matrix.clone();
        for i in 0..m.n {
            for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                if m.cols[k] == i {
                    m.vals[k] += mass[i] / dt;
                }
            }
        }
        m
    };
    let mut cached: Option<(LinearSystemSPD, Csr)> = None;
    for step in 1..=grid.steps {
        let t = times[step];
        let sys = assemble_system(&mesh, coeff, forcing, t)?;
        let matrix = match &cached {
            Some((_, m)) if !coeff.time_dependent() => m.clone(),
            _ => shifted(&sys),
        };
        let prev = values.last().expect("initial level");
        let rhs: Vec<f64> = (0..mesh.num_vertices()).map(|i| sys.rhs[i] + mass[i] / dt * prev[i]).collect();
        let boundary: Vec<(usize, f64)> = sys
            .constrained
            .iter()
            .map(|&i| (i, forcing.dirichlet(t, mesh.vertices[i])))
            .collect();
        let (u, report) = solve_reduced(&matrix, &rhs, &sys.free, &boundary, prev, params)?;
        meta.record(&report);
        meta.unknowns = sys.free.len();
        values.push(u);
        if cached.is_none() {
            cached = Some((sys, matrix));
        }
    }
    Ok(FieldSolution::new(mesh, times, values, meta))
}

/// `L²` error, `H¹` seminorm error and energy error `(∫ A∇e·∇e)^{1/2}` against
/// an exact field given per region as `(value, gradient)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1: f64,
    pub energy: f64,
}

pub fn error_norms(
    mesh: &StripMesh,
    values: &[f64],
    coeff: &dyn CoefficientModel,
    t: f64,
    exact: &(dyn Fn(usize, [f64; 2]) -> (f64, [f64; 2]) + Sync),
) -> ErrorNorms {
    let grads = element_gradients(mesh, values);
    let parts: Vec<(f64, f64, f64)> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| {
            let corners = mesh.corners(e);
            let tri = mesh.triangles[e];
            let region = mesh.regions[e];
            let area = mesh.area(e);
            let (mut l2, mut h1, mut en) = (0.0, 0.0, 0.0);
            for (bary, w) in QUAD6.iter() {
                let x = map_point(&corners, bary);
                let uh: f64 = (0..3).map(|a| bary[a] * values[tri[a]]).sum();
                let (u, g) = exact(region, x);
                let de = [grads[e][0] - g[0], grads[e][1] - g[1]];
                let a = coeff.matrix(region, t, x);
                l2 += w * area * (uh - u).powi(2);
                h1 += w * area * (de[0] * de[0] + de[1] * de[1]);
                en += w
                    * area
                    * (de[0] * (a[0][0] * de[0] + a[0][1] * de[1]) + de[1] * (a[1][0] * de[0] + a[1][1] * de[1]));
            }
            (l2, h1, en)
        })
        .collect();
    let (l2, h1, en) = parts.iter().fold((0.0, 0.0, 0.0), |s, p| (s.0 + p.0, s.1 + p.1, s.2 + p.2));
    ErrorNorms { l2: l2.sqrt(), h1: h1.sqrt(), energy: en.sqrt() }
}

/// `a(u, φ) - ℓ(φ)` for a full nodal test vector `φ` (zero on Dirichlet nodes).
pub fn weak_residual(sys: &LinearSystemSPD, u: &[f64], phi: &[f64]) -> f64 {
    let au = sys.matrix.mul(u);
    au.iter().zip(&sys.rhs).zip(phi).map(|((a, b), p)| (a - b) * p).sum()
}

/// `(φᵀ K φ)^{1/2}`.
pub fn energy_norm(sys: &LinearSystemSPD, phi: &[f64]) -> f64 {
    let kp = sys.matrix.mul(phi);
    kp.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}
