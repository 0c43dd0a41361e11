use std::sync::Arc;

use lamlab::diagnostics::{
    decay_fit, phi_from_samples, time_quotient, DirectionalFields, FnGradient, Metric, ParabolicPoint, SeminormEstimate,
};
use lamlab::geometry::{frame_at_anchor, neck_stack, orthonormal_frame, InterfaceShape, InterfaceStack};
use lamlab::lab::scenario_hash;
use lamlab::mesh::{build_strip_mesh, MeshParams};
use lamlab::solver::{
    assemble_system, energy_norm, solve_elliptic_on, weak_residual, CoefficientModel, ForcingModel,
    PiecewiseCoefficients, Poly2, PolynomialForcing, SolveParams,
};
use proptest::prelude::*;

/// Interface `k` of `m` wobbles by at most 0.05 around a level spaced 0.4 apart,
/// so neighbours never meet.
fn shape(level: f64, kind: u8, a: f64, omega: f64) -> InterfaceShape {
    match kind % 3 {
        0 => InterfaceShape::flat(level),
        1 => InterfaceShape::parabola(0.05 * a, 0.0, level),
        _ => InterfaceShape::Polynomial {
            terms: vec![
                lamlab::geometry::Monomial { coef: level, powers: [0, 0] },
                lamlab::geometry::Monomial { coef: 0.025 * a, powers: [1, 0] },
                lamlab::geometry::Monomial { coef: 0.025 * omega / 3.0, powers: [3, 0] },
            ],
        },
    }
}

fn stacks() -> impl Strategy<Value = InterfaceStack> {
    (1usize..=3, -0.1f64..0.1, prop::collection::vec((0u8..3, -1.0f64..1.0, 0.0f64..3.0), 3)).prop_map(
        |(m, shift, specs)| {
            let shapes = (0..m)
                .map(|k| {
                    let level = shift + 0.4 * (k as f64 - (m - 1) as f64 / 2.0);
                    let (kind, a, omega) = specs[k];
                    shape(level, kind, a, omega)
                })
                .collect();
            InterfaceStack::new(2, shapes).expect("separated interfaces")
        },
    )
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frames_are_orthonormal(stack in stacks(), x in -0.99f64..0.99, y in -0.99f64..0.99) {
        let f = orthonormal_frame(&stack, &[x, y]).unwrap();
        let l = &f.tangents[0];
        prop_assert!((dot(l, l) - 1.0).abs() < 1e-12);
        prop_assert!((dot(&f.normal, &f.normal) - 1.0).abs() < 1e-12);
        prop_assert!(dot(l, &f.normal).abs() < 1e-12);
    }

    #[test]
    fn frames_are_tangent_on_interfaces(stack in stacks(), x in -0.99f64..0.99, pick in 0usize..3) {
        let j = 1 + pick % stack.m();
        let p = [x, stack.height(j, &[x])];
        let f = orthonormal_frame(&stack, &p).unwrap();
        let nj = stack.interface_normal(j, &[x]).unwrap();
        prop_assert!(dot(&f.tangents[0], &nj).abs() < 1e-12);
        prop_assert!(f.normal.iter().zip(&nj).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn anchor_frames_are_orthogonal(stack in stacks(), x in -0.95f64..0.95, y in -0.95f64..0.95) {
        let a = frame_at_anchor(&stack, &[x, y]).unwrap();
        let lam = &a.frame.lambda;
        for i in 0..2 {
            for k in 0..2 {
                let target = if i == k { 1.0 } else { 0.0 };
                prop_assert!((dot(&lam[i], &lam[k]) - target).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn neck_slope_gap_is_bounded(eps in 1e-4f64..0.1, x in -0.99f64..0.99) {
        let s = neck_stack(2, eps).unwrap();
        let slope = (s.jet(2, &[x], 1).grad[0] - s.jet(1, &[x], 1).grad[0]).abs();
        let gap = s.height(2, &[x]) - s.height(1, &[x]);
        prop_assert!(slope <= 2.0 * gap.sqrt() * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn element_tags_match_classification(stack in stacks(), nx in 8usize..24, ny in 1usize..4) {
        let mesh = build_strip_mesh(&stack, &MeshParams::new(nx, ny)).unwrap();
        for e in 0..mesh.num_triangles() {
            prop_assert_eq!(stack.region_of(&mesh.centroid(e)), mesh.regions[e]);
        }
    }

    #[test]
    fn interface_edges_follow_the_curves(stack in stacks(), nx in 4usize..32) {
        let mesh = build_strip_mesh(&stack, &MeshParams::new(nx, 2)).unwrap();
        let dx = 2.0 / nx as f64;
        for (j, err) in mesh.interface_fit_error(&stack).into_iter().enumerate() {
            let bound = stack.interfaces()[j].curvature_bound() * dx * dx;
            prop_assert!(err <= bound + 1e-15, "interface {}: {} > {}", j + 1, err, bound);
        }
    }

    #[test]
    fn stiffness_is_exactly_symmetric(stack in stacks(), values in prop::collection::vec(0.1f64..10.0, 4)) {
        let mesh = build_strip_mesh(&stack, &MeshParams::new(8, 2)).unwrap();
        let coeff = PiecewiseCoefficients::constants(&values[..stack.regions()]);
        let forcing = PolynomialForcing::zero_flux(Poly2::affine(0.0, 0.0, 1.0));
        let sys = assemble_system(&mesh, &coeff, &forcing, 0.0).unwrap();
        prop_assert_eq!(sys.matrix.asymmetry(), 0.0);
    }

    #[test]
    fn scaling_coefficients_and_flux_keeps_the_solution(
        stack in stacks(),
        values in prop::collection::vec(0.2f64..5.0, 4),
        flux in prop::collection::vec(-1.0f64..1.0, 4),
        lambda in 0.1f64..10.0,
    ) {
        let mesh = Arc::new(build_strip_mesh(&stack, &MeshParams::new(8, 2)).unwrap());
        let regions = stack.regions();
        let forcing = |s: f64| PolynomialForcing {
            flux: (0..regions)
                .map(|j| [Poly2::constant(s * flux[j]), Poly2::from_terms(&[(s * flux[(j + 1) % 4], 1, 0)])])
                .collect(),
            boundary: Poly2::affine(0.1, 0.3, 0.7),
            initial: Poly2::default(),
        };
        let base = PiecewiseCoefficients::constants(&values[..regions]);
        let scaled_values: Vec<f64> = values[..regions].iter().map(|a| lambda * a).collect();
        let scaled = PiecewiseCoefficients::constants(&scaled_values);
        let params = SolveParams { tol: 1e-14, ..Default::default() };
        let u = solve_elliptic_on(mesh.clone(), &base, &forcing(1.0), &params).unwrap();
        let v = solve_elliptic_on(mesh, &scaled, &forcing(lambda), &params).unwrap();
        for (a, b) in u.values[0].iter().zip(&v.values[0]) {
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn discrete_solution_satisfies_the_weak_form(
        stack in stacks(),
        values in prop::collection::vec(0.2f64..5.0, 4),
        phi_seed in prop::collection::vec(-1.0f64..1.0, 200),
    ) {
        let mesh = Arc::new(build_strip_mesh(&stack, &MeshParams::new(10, 2)).unwrap());
        let coeff = PiecewiseCoefficients::constants(&values[..stack.regions()]);
        let forcing = PolynomialForcing {
            flux: vec![[Poly2::constant(0.5), Poly2::from_terms(&[(1.0, 0, 2)])]],
            boundary: Poly2::affine(0.0, 1.0, 0.5),
            initial: Poly2::default(),
        };
        let sol = solve_elliptic_on(mesh.clone(), &coeff, &forcing, &SolveParams::default()).unwrap();
        let sys = assemble_system(&mesh, &coeff, &forcing, 0.0).unwrap();
        let mut phi: Vec<f64> = (0..mesh.num_vertices()).map(|i| phi_seed[i % phi_seed.len()]).collect();
        for &d in &mesh.dirichlet {
            phi[d] = 0.0;
        }
        let r = weak_residual(&sys, &sol.values[0], &phi);
        prop_assert!(r.abs() <= 1e-9 * energy_norm(&sys, &phi), "{}", r);
    }
}

fn pairs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn phi_ignores_constant_shifts(data in pairs(), c1 in -5.0f64..5.0, c2 in -5.0f64..5.0) {
        let shifted: Vec<(f64, f64)> = data.iter().map(|&(a, b)| (a + c1, b + c2)).collect();
        let (p, q) = (phi_from_samples(&data), phi_from_samples(&shifted));
        prop_assert!((p - q).abs() <= 1e-9 * p.max(1.0), "{} vs {}", p, q);
    }

    #[test]
    fn phi_is_positively_homogeneous(data in pairs(), alpha in -20.0f64..20.0) {
        let scaled: Vec<(f64, f64)> = data.iter().map(|&(a, b)| (alpha * a, alpha * b)).collect();
        let (p, q) = (phi_from_samples(&data), phi_from_samples(&scaled));
        prop_assert!((q - alpha.abs() * p).abs() <= 1e-10 * q.abs().max(1e-300), "{} vs {}", q, alpha.abs() * p);
    }

    #[test]
    fn seminorm_grows_with_the_sample(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -3.0f64..3.0), 2..40),
        keep in 2usize..40,
        gamma in 0.1f64..1.0,
    ) {
        let samples: Vec<(ParabolicPoint, Vec<f64>)> =
            pts.iter().map(|&(x, y, v)| (ParabolicPoint::new(0.0, [x, y]), vec![v])).collect();
        let keep = keep.min(samples.len());
        let sub = SeminormEstimate::from_samples(&samples[..keep], gamma, Metric::Spatial);
        let all = SeminormEstimate::from_samples(&samples, gamma, Metric::Spatial);
        prop_assert!(sub.value <= all.value);
    }

    #[test]
    fn decay_fit_recovers_power_laws(p in -3.0f64..3.0, c in 0.01f64..100.0) {
        let records: Vec<(f64, f64)> = [0.2, 0.1, 0.05, 0.025].iter().map(|&r: &f64| (r, c * r.powf(p))).collect();
        let fit = decay_fit(&records).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-12, "{}", fit.slope - p);
    }

    #[test]
    fn time_quotient_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, gamma in 0.5f64..1.0, h in 0.01f64..0.5) {
        let f = |z: &ParabolicPoint| Some(vec![(z.t * 3.0).sin() + z.x[0], z.t * z.t * z.x[1]]);
        let g = |z: &ParabolicPoint| Some(vec![(z.t).exp() * z.x[1], z.t - z.x[0]]);
        let comb = |z: &ParabolicPoint| {
            let (u, v) = (f(z)?, g(z)?);
            Some(u.iter().zip(&v).map(|(p, q)| a * p + b * q).collect())
        };
        let pts: Vec<ParabolicPoint> = (0..8).map(|k| ParabolicPoint::new(0.6 + 0.05 * k as f64, [0.1 * k as f64 - 0.4, 0.3])).collect();
        let qf = time_quotient(&f, gamma, h, 0.0, &pts).unwrap();
        let qg = time_quotient(&g, gamma, h, 0.0, &pts).unwrap();
        let qc = time_quotient(&comb, gamma, h, 0.0, &pts).unwrap();
        for i in 0..pts.len() {
            let (u, v, w) = (qf.values[i].as_ref().unwrap(), qg.values[i].as_ref().unwrap(), qc.values[i].as_ref().unwrap());
            for k in 0..2 {
                let expected = a * u[k] + b * v[k];
                prop_assert!((w[k] - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
            }
        }
    }

    #[test]
    fn flat_frames_reduce_to_coordinates(
        levels in prop::collection::vec(-0.6f64..0.6, 1..3),
        x in -0.99f64..0.99,
        y in -0.99f64..0.99,
        g in prop::collection::vec(-2.0f64..2.0, 8),
    ) {
        let mut levels = levels;
        levels.sort_by(f64::total_cmp);
        levels.dedup_by(|a, b| (*a - *b).abs() < 0.05);
        let stack = InterfaceStack::new(2, levels.iter().map(|&c| InterfaceShape::flat(c)).collect()).unwrap();
        let coeff = PiecewiseCoefficients::constants(&[1.0, 3.0, 0.5, 2.0][..stack.regions()]);
        let forcing = PolynomialForcing {
            flux: vec![[Poly2::constant(0.3), Poly2::from_terms(&[(0.7, 1, 1)])]; stack.regions()],
            boundary: Poly2::default(),
            initial: Poly2::default(),
        };
        let grad = FnGradient(|j: usize, _t: f64, _x: [f64; 2]| Some([g[2 * (j - 1)], g[2 * (j - 1) + 1]]));
        let fields = DirectionalFields { stack: &stack, coeff: &coeff, forcing: &forcing, grad: &grad };
        let p = [x, y];
        let j = stack.region_of(&p);
        let (d_ell, u) = fields.pair(&ParabolicPoint::new(0.0, p)).unwrap();
        let gj = [g[2 * (j - 1)], g[2 * (j - 1) + 1]];
        let a = coeff.matrix(j, 0.0, p);
        let f = forcing.flux(j, 0.0, p);
        prop_assert_eq!(d_ell, gj[0]);
        prop_assert_eq!(u, a[1][0] * gj[0] + a[1][1] * gj[1] - f[1]);
    }

    #[test]
    fn scenario_hash_ignores_key_order(
        entries in prop::collection::btree_map("[a-z]{1,6}", -1000i64..1000, 1..8),
        rotate in 0usize..8,
    ) {
        let lines: Vec<String> = entries.iter().map(|(k, v)| format!("{k} = {v}")).collect();
        let mut rotated = lines.clone();
        rotated.rotate_left(rotate % lines.len());
        rotated.reverse();
        let a = format!("[table]\n{}\n", lines.join("\n"));
        let b = format!("[table]\n{}\n", rotated.join("\n"));
        prop_assert_eq!(scenario_hash(&a).unwrap(), scenario_hash(&b).unwrap());
    }
}
