//! Per-region derivative recovery and interface flux jumps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::assemble::FieldSolution;
use super::model::{CoefficientModel, ForcingModel, Mat2};
use super::SolverError;
use crate::geometry::{normal_from_gradient, InterfaceStack};
use crate::mesh::StripMesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recovered {
    pub grad: [f64; 2],
    pub hess: Mat2,
    /// Radius actually used after enlargement.
    pub radius: f64,
}

fn wendland(q: f64) -> f64 {
    if q >= 1.0 {
        0.0
    } else {
        (1.0 - q).powi(4) * (4.0 * q + 1.0)
    }
}

/// Vertices in the closure of region `j` within `radius` of `p`.
fn stencil(mesh: &StripMesh, j: usize, p: [f64; 2], radius: f64) -> Vec<usize> {
    let nx = mesh.params.nx;
    let ny = mesh.params.ny;
    let dx = 2.0 / nx as f64;
    let i_lo = (((p[0] - radius + 1.0) / dx).floor().max(0.0)) as usize;
    let i_hi = ((((p[0] + radius + 1.0) / dx).ceil()) as usize).min(nx);
    let (r_lo, r_hi) = ((j - 1) * ny, j * ny);
    let mut out = Vec::new();
    for i in i_lo..=i_hi {
        for r in r_lo..=r_hi {
            let v = mesh.node(i, r);
            let q = mesh.vertices[v];
            if (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) <= radius * radius {
                out.push(v);
            }
        }
    }
    out
}

/// Weighted quadratic least-squares fit around `p`; `None` when the stencil
/// cannot determine all six coefficients.
fn fit(mesh: &StripMesh, values: &[f64], nodes: &[usize], p: [f64; 2], radius: f64) -> Option<([f64; 2], Mat2)> {
    if nodes.len() < 6 {
        return None;
    }
    let sx = radius;
    let sy = nodes
        .iter()
        .map(|&v| (mesh.vertices[v][1] - p[1]).abs())
        .fold(0.0, f64::max);
    if !(sy > 0.0) {
        return None;
    }
    let rows: Vec<(f64, [f64; 6], f64)> = nodes
        .iter()
        .filter_map(|&v| {
            let q = mesh.vertices[v];
            let d = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
            let w = wendland(d / radius);
            let (xi, eta) = ((q[0] - p[0]) / sx, (q[1] - p[1]) / sy);
            (w > 0.0).then(|| (w.sqrt(), [1.0, xi, eta, xi * xi, xi * eta, eta * eta], values[v]))
        })
        .collect();
    if rows.len() < 6 {
        return None;
    }
    let design = DMatrix::from_fn(rows.len(), 6, |i, k| rows[i].0 * rows[i].1[k]);
    let rhs = DVector::from_fn(rows.len(), |i, _| rows[i].0 * rows[i].2);
    let sv = design.clone().singular_values();
    if !(sv.min() > 1e-8 * sv.max()) {
        return None;
    }
    // Householder QR: the SVD solve loses digits on strongly graded weights
    let qr = design.qr();
    let c = qr.r().solve_upper_triangular(&(qr.q().transpose() * rhs))?;
    let grad = [c[1] / sx, c[2] / sy];
    let hxy = c[4] / (sx * sy);
    let hess = [[2.0 * c[3] / (sx * sx), hxy], [hxy, 2.0 * c[5] / (sy * sy)]];
    Some((grad, hess))
}

/// Four times the coarser of the column width and the tallest cell of region
/// `j`, so that every stencil spans several node rows.
pub fn default_recovery_radius(mesh: &StripMesh, j: usize) -> f64 {
    let ny = mesh.params.ny;
    let tallest = (0..=mesh.params.nx)
        .flat_map(|i| ((j - 1) * ny..j * ny).map(move |r| (i, r)))
        .map(|(i, r)| mesh.vertices[mesh.node(i, r + 1)][1] - mesh.vertices[mesh.node(i, r)][1])
        .fold(0.0, f64::max);
    4.0 * tallest.max(2.0 / mesh.params.nx as f64)
}

/// Moving least-squares quadratic recovery of `∇u` and `∇²u` from the nodal
/// values of region `j`, enlarging the radius by 2 up to three times.
pub fn recover_derivatives(
    mesh: &StripMesh,
    values: &[f64],
    j: usize,
    points: &[[f64; 2]],
    radius: f64,
) -> Result<Vec<Recovered>, SolverError> {
    points
        .iter()
        .map(|&p| {
            let mut r = radius;
            for _ in 0..4 {
                let nodes = stencil(mesh, j, p, r);
                if let Some((grad, hess)) = fit(mesh, values, &nodes, p, r) {
                    return Ok(Recovered { grad, hess, radius: r });
                }
                r *= 2.0;
            }
            Err(SolverError::InsufficientStencil { point: p, region: j })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeFlux {
    pub edge: usize,
    pub interface: usize,
    pub midpoint: [f64; 2],
    pub lower: f64,
    pub upper: f64,
    /// `upper - lower`.
    pub jump: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxJumpReport {
    pub edges: Vec<EdgeFlux>,
    pub sup: f64,
}

/// `n_j·(A∇u_h - f)` at each interface edge midpoint from both adjacent elements.
pub fn interface_flux_jump(
    solution: &FieldSolution,
    slab: usize,
    stack: &InterfaceStack,
    coeff: &dyn CoefficientModel,
    forcing: &dyn ForcingModel,
) -> FluxJumpReport {
    let mesh = &solution.mesh;
    let t = solution.times[slab];
    let conormal = |e: usize, n: &[f64], x: [f64; 2]| {
        let region = mesh.regions[e];
        let a = coeff.matrix(region, t, x);
        let f = forcing.flux(region, t, x);
        let g = solution.gradients[slab][e];
        let q = [a[0][0] * g[0] + a[0][1] * g[1] - f[0], a[1][0] * g[0] + a[1][1] * g[1] - f[1]];
        n[0] * q[0] + n[1] * q[1]
    };
    let edges: Vec<EdgeFlux> = mesh
        .interface_edges
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let (a, b) = (mesh.vertices[e.nodes[0]], mesh.vertices[e.nodes[1]]);
            let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let slope = stack.jet(e.interface, &[mid[0]], 1).grad[0];
            let n = normal_from_gradient(&[slope]);
            let lower = conormal(e.lower, &n, mid);
            let upper = conormal(e.upper, &n, mid);
            EdgeFlux { edge: k, interface: e.interface, midpoint: mid, lower, upper, jump: upper - lower }
        })
        .collect();
    let sup = edges.iter().map(|e| e.jump.abs()).fold(0.0, f64::max);
    FluxJumpReport { edges, sup }
}
