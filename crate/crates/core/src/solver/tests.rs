use std::sync::Arc;

use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::{InterfaceShape, InterfaceStack};
use crate::mesh::{build_strip_mesh, DirichletSides, MeshParams};

fn empty_stack() -> InterfaceStack {
    InterfaceStack::new(2, vec![]).unwrap()
}

fn flat(levels: &[f64]) -> InterfaceStack {
    InterfaceStack::new(2, levels.iter().map(|&c| InterfaceShape::flat(c)).collect()).unwrap()
}

fn zero() -> PolynomialForcing {
    PolynomialForcing::zero_flux(Poly2::default())
}

#[test]
fn laplacian_rows_sum_to_zero() {
    let mesh = build_strip_mesh(&empty_stack(), &MeshParams::new(6, 6)).unwrap();
    let sys = assemble_system(&mesh, &PiecewiseCoefficients::constants(&[1.0]), &zero(), 0.0).unwrap();
    for i in 0..sys.matrix.n {
        let s: f64 = sys.matrix.row(i).map(|(_, v)| v).sum();
        assert_abs_diff_eq!(s, 0.0, epsilon = 1e-14);
    }
    assert_eq!(sys.matrix.asymmetry(), 0.0);
}

#[test]
fn stiffness_is_linear_in_coefficient() {
    let mesh = build_strip_mesh(&flat(&[0.1]), &MeshParams::new(5, 3)).unwrap();
    let one = assemble_system(&mesh, &PiecewiseCoefficients::constants(&[1.0, 1.0]), &zero(), 0.0).unwrap();
    let two = assemble_system(&mesh, &PiecewiseCoefficients::constants(&[2.0, 2.0]), &zero(), 0.0).unwrap();
    for (a, b) in one.matrix.vals.iter().zip(&two.matrix.vals) {
        assert_eq!(2.0 * a, *b);
    }
}

#[test]
fn constant_flux_load_vanishes_inside() {
    let mesh = build_strip_mesh(&empty_stack(), &MeshParams::new(4, 4)).unwrap();
    let forcing = PolynomialForcing {
        flux: vec![[Poly2::constant(0.7), Poly2::constant(-1.3)]],
        ..Default::default()
    };
    let sys = assemble_system(&mesh, &PiecewiseCoefficients::constants(&[1.0]), &forcing, 0.0).unwrap();
    for &i in &sys.free {
        assert_abs_diff_eq!(sys.rhs[i], 0.0, epsilon = 1e-15);
    }
}

#[test]
fn ellipticity_violation_detected() {
    let mesh = build_strip_mesh(&empty_stack(), &MeshParams::new(2, 2)).unwrap();
    let coeff = PiecewiseCoefficients { regions: vec![RegionCoefficient::isotropic(5.0)], nu: 0.5 };
    assert!(matches!(
        assemble_system(&mesh, &coeff, &zero(), 0.0),
        Err(SolverError::EllipticityViolation { .. })
    ));
}

/// Piecewise-linear 1-D solution of `(a u')' = 0` across flat layers.
fn layered_oracle(levels: &[f64], a: &[f64], bottom: f64, top: f64) -> (impl Fn(f64) -> f64, f64) {
    let mut bounds = vec![-1.0];
    bounds.extend_from_slice(levels);
    bounds.push(1.0);
    let resistance: f64 = (0..a.len()).map(|j| (bounds[j + 1] - bounds[j]) / a[j]).sum();
    let flux = (top - bottom) / resistance;
    let (bounds, a) = (bounds.clone(), a.to_vec());
    let u = move |y: f64| {
        let mut v = bottom;
        for j in 0..a.len() {
            let hi = bounds[j + 1].min(y);
            if hi > bounds[j] {
                v += flux / a[j] * (hi - bounds[j]);
            }
        }
        v
    };
    (u, flux)
}

#[test]
fn two_layer_flux_balance() {
    let stack = flat(&[0.0]);
    let coeff = PiecewiseCoefficients::constants(&[1.0, 2.0]);
    let forcing = PolynomialForcing::zero_flux(Poly2::affine(0.5, 0.0, 0.5));
    let params = MeshParams { dirichlet_sides: DirichletSides::TOP_BOTTOM, ..MeshParams::new(8, 4) };
    let sol = solve_elliptic(&stack, &coeff, &forcing, &params, &SolveParams::default()).unwrap();
    let (u, flux) = layered_oracle(&[0.0], &[1.0, 2.0], 0.0, 1.0);
    assert_abs_diff_eq!(u(0.0), 2.0 / 3.0, epsilon = 1e-15);
    for e in &sol.mesh.interface_edges {
        for &n in &e.nodes {
            assert_abs_diff_eq!(sol.values[0][n], 2.0 / 3.0, epsilon = 1e-9);
        }
    }
    let jumps = interface_flux_jump(&sol, 0, &stack, &coeff, &forcing);
    assert!(jumps.sup < 1e-10);
    for e in &jumps.edges {
        assert_abs_diff_eq!(e.lower, flux, epsilon = 1e-9);
    }
    let rec = recover_derivatives(&sol.mesh, &sol.values[0], 1, &[[0.1, -0.5]], 0.3).unwrap();
    assert_abs_diff_eq!(rec[0].grad[0], 0.0, epsilon = 1e-8);
    assert_abs_diff_eq!(rec[0].grad[1], 2.0 / 3.0, epsilon = 1e-8);
    assert!(rec[0].hess.iter().flatten().all(|v| v.abs() < 1e-6));
}

#[test]
fn kinked_linear_field_is_reproduced() {
    let stack = flat(&[-0.3, 0.25]);
    let coeff = Arc::new(PiecewiseCoefficients::constants(&[1.0, 3.0, 0.5]));
    let man = Manufactured {
        stack: stack.clone(),
        base: Poly2::affine(0.2, 0.4, -0.7),
        kinks: vec![1.1, -0.6],
        profile: TimeProfile::Constant,
        coefficients: coeff.clone(),
    };
    let sol = solve_elliptic(&stack, coeff.as_ref(), &man, &MeshParams::new(6, 3), &SolveParams::default()).unwrap();
    for (v, x) in sol.mesh.vertices.iter().enumerate() {
        let exact = man.exact(stack.region_of(x), 0.0, *x).value;
        assert_abs_diff_eq!(sol.values[0][v], exact, epsilon = 1e-10);
    }
    let jumps = interface_flux_jump(&sol, 0, &stack, coeff.as_ref(), &man);
    assert!(jumps.sup < 1e-10, "{}", jumps.sup);
}

#[test]
fn constant_boundary_gives_constant_solution() {
    let stack = InterfaceStack::new(2, vec![InterfaceShape::cosine(0.2, 3.0, 0.0)]).unwrap();
    let coeff = PiecewiseCoefficients::constants(&[1.0, 7.0]);
    let forcing = PolynomialForcing::zero_flux(Poly2::constant(2.5));
    let sol = solve_elliptic(&stack, &coeff, &forcing, &MeshParams::new(10, 3), &SolveParams::default()).unwrap();
    assert!(sol.values[0].iter().all(|&v| (v - 2.5).abs() < 1e-12));
}

#[test]
fn scaling_coefficients_and_flux_keeps_solution() {
    let stack = InterfaceStack::new(2, vec![InterfaceShape::parabola(0.3, 0.0, -0.1)]).unwrap();
    let flux = |s: f64| PolynomialForcing {
        flux: vec![
            [Poly2::from_terms(&[(s, 1, 1)]), Poly2::constant(0.3 * s)],
            [Poly2::constant(-0.2 * s), Poly2::from_terms(&[(0.5 * s, 2, 0)])],
        ],
        boundary: Poly2::affine(0.1, 0.2, 0.3),
        initial: Poly2::default(),
    };
    let params = MeshParams::new(12, 4);
    let base = solve_elliptic(&stack, &PiecewiseCoefficients::constants(&[1.0, 4.0]), &flux(1.0), &params, &SolveParams::default()).unwrap();
    let lambda = 3.7;
    let scaled = PiecewiseCoefficients { nu: 0.05, ..PiecewiseCoefficients::constants(&[lambda, 4.0 * lambda]) };
    let other = solve_elliptic(&stack, &scaled, &flux(lambda), &params, &SolveParams::default()).unwrap();
    for (a, b) in base.values[0].iter().zip(&other.values[0]) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn weak_form_residual_is_small_for_random_tests() {
    let stack = InterfaceStack::new(2, vec![InterfaceShape::parabola(-0.4, 0.1, 0.2)]).unwrap();
    let coeff = PiecewiseCoefficients::constants(&[1.0, 10.0]);
    let forcing = PolynomialForcing {
        flux: vec![[Poly2::constant(1.0), Poly2::from_terms(&[(1.0, 1, 0)])]],
        boundary: Poly2::affine(0.0, 1.0, 0.5),
        initial: Poly2::default(),
    };
    let mesh = Arc::new(build_strip_mesh(&stack, &MeshParams::new(16, 4)).unwrap());
    let sol = solve_elliptic_on(mesh.clone(), &coeff, &forcing, &SolveParams::default()).unwrap();
    let sys = assemble_system(&mesh, &coeff, &forcing, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let mut phi: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect();
        for &d in &mesh.dirichlet {
            phi[d] = 0.0;
        }
        let r = weak_residual(&sys, &sol.values[0], &phi);
        assert!(r.abs() <= 1e-9 * energy_norm(&sys, &phi), "{r}");
    }
}

#[test]
fn manufactured_rates_on_small_meshes() {
    let stack = InterfaceStack::new(
        2,
        vec![InterfaceShape::parabola(0.3, 0.0, -0.5), InterfaceShape::cosine(0.1, 2.0, 0.0)],
    )
    .unwrap();
    let coeff = Arc::new(PiecewiseCoefficients::constants(&[1.0, 5.0, 0.5]));
    let man = Manufactured {
        stack: stack.clone(),
        base: Poly2::from_terms(&[(1.0, 2, 0), (0.5, 1, 1), (-0.3, 0, 2), (0.2, 3, 0)]),
        kinks: vec![0.8, -0.5],
        profile: TimeProfile::Constant,
        coefficients: coeff.clone(),
    };
    let mut prev: Option<ErrorNorms> = None;
    for nx in [8, 16, 32] {
        let sol = solve_elliptic(&stack, coeff.as_ref(), &man, &MeshParams::new(nx, nx / 4), &SolveParams::default()).unwrap();
        let exact = |j: usize, x: [f64; 2]| {
            let u = man.exact(j, 0.0, x);
            (u.value, u.grad)
        };
        let err = error_norms(&sol.mesh, &sol.values[0], coeff.as_ref(), 0.0, &exact);
        if let Some(p) = prev {
            assert!((p.l2 / err.l2).log2() > 1.8, "{p:?} {err:?}");
            assert!((p.energy / err.energy).log2() > 0.85, "{p:?} {err:?}");
        }
        prev = Some(err);
    }
}

#[test]
fn parabolic_preserves_constants_exactly() {
    let stack = flat(&[0.0]);
    let coeff = PiecewiseCoefficients::constants(&[1.0, 3.0]);
    let forcing = PolynomialForcing::zero_flux(Poly2::constant(1.25));
    let grid = TimeGrid { start: -1.0, end: 0.0, steps: 10 };
    let sol = solve_parabolic(&stack, &coeff, &forcing, &grid, &MeshParams::new(8, 2), &SolveParams::default()).unwrap();
    assert_eq!(sol.values.len(), 11);
    assert!(sol.values.iter().flatten().all(|&v| v == 1.25));
}

#[test]
fn parabolic_relaxes_to_elliptic() {
    let stack = flat(&[0.2]);
    let coeff = PiecewiseCoefficients::constants(&[1.0, 2.0]);
    let forcing = PolynomialForcing {
        flux: vec![],
        boundary: Poly2::affine(0.0, 0.5, 1.0),
        initial: Poly2::default(),
    };
    let params = MeshParams::new(8, 3);
    let ell = solve_elliptic(&stack, &coeff, &forcing, &params, &SolveParams::default()).unwrap();
    let grid = TimeGrid { start: -25.0, end: 0.0, steps: 100 };
    let par = solve_parabolic(&stack, &coeff, &forcing, &grid, &params, &SolveParams::default()).unwrap();
    let diff = par.values[grid.steps]
        .iter()
        .zip(&ell.values[0])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff}");
}

#[test]
fn invalid_time_grid_rejected() {
    let grid = TimeGrid { start: 0.0, end: -1.0, steps: 4 };
    let r = solve_parabolic(
        &empty_stack(),
        &PiecewiseCoefficients::constants(&[1.0]),
        &zero(),
        &grid,
        &MeshParams::new(2, 2),
        &SolveParams::default(),
    );
    assert!(matches!(r, Err(SolverError::InvalidTimeGrid(_))));
}

#[test]
fn recovery_reproduces_quadratics() {
    let stack = InterfaceStack::new(2, vec![InterfaceShape::parabola(0.2, 0.0, 0.0)]).unwrap();
    let mesh = build_strip_mesh(&stack, &MeshParams::new(16, 4)).unwrap();
    let q: Vec<f64> = mesh.vertices.iter().map(|v| v[0] * v[0] + v[1] * v[1]).collect();
    let lin: Vec<f64> = mesh.vertices.iter().map(|v| 0.3 - 2.0 * v[0] + 0.5 * v[1]).collect();
    let pts = [[0.1, -0.4], [-0.5, 0.5], [0.7, 0.2]];
    for &p in &pts {
        let j = stack.region_of(&p);
        let r = recover_derivatives(&mesh, &q, j, &[p], 0.25).unwrap()[0];
        assert_abs_diff_eq!(r.hess[0][0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.hess[1][1], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.hess[0][1], 0.0, epsilon = 1e-10);
        let l = recover_derivatives(&mesh, &lin, j, &[p], 0.25).unwrap()[0];
        assert_abs_diff_eq!(l.grad[0], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l.grad[1], 0.5, epsilon = 1e-12);
        assert!(l.hess.iter().flatten().all(|v| v.abs() < 1e-10));
    }
}

#[test]
fn recovery_enlarges_then_fails() {
    let mesh = build_strip_mesh(&empty_stack(), &MeshParams::new(4, 4)).unwrap();
    let vals = vec![0.0; mesh.num_vertices()];
    let ok = recover_derivatives(&mesh, &vals, 1, &[[0.0, 0.0]], 0.3).unwrap();
    assert!(ok[0].radius > 0.3);
    let stack = flat(&[0.0]);
    let mesh = build_strip_mesh(&stack, &MeshParams::new(2, 1)).unwrap();
    let vals = vec![0.0; mesh.num_vertices()];
    assert!(matches!(
        recover_derivatives(&mesh, &vals, 1, &[[0.0, -0.5]], 1e-3),
        Err(SolverError::InsufficientStencil { .. })
    ));
}
