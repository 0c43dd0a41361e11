//! Sampled checks of the frame-field regularity properties over a family of
//! stacks indexed by a gap parameter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::frame::{frame_at_anchor, frame_jet, FrameJet, RawRule};
use super::interface::InterfaceShape;
use super::stack::InterfaceStack;
use super::GeometryError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestOptions {
    /// Number of random sample points (also the number of random pairs).
    pub samples: usize,
    pub seed: u64,
    /// Offsets at which one-sided limits across each interface are taken.
    pub offsets: Vec<f64>,
    /// Columns of the stratified grid (2-D) or per axis (3-D).
    pub columns: usize,
    /// Anchor frames checked for orthogonality.
    pub anchor_samples: usize,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0xC0FFEE,
            offsets: vec![1e-2, 1e-3, 1e-4],
            columns: 2001,
            anchor_samples: 400,
        }
    }
}

/// Metrics for one stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapMetrics {
    pub eps: f64,
    /// Sampled sup of `|ℓ^k(x1) - ℓ^k(x2)| / |x1 - x2|^{1/2}`.
    pub holder_half: f64,
    /// Sampled sup of `|Dℓ^k| * gap^{1/2}` with the gap of the containing strip.
    pub deriv_gap_sup: f64,
    /// `(offset, sup jump of D_{ℓ^a} ℓ^b across interfaces)`.
    pub jumps: Vec<(f64, f64)>,
    /// Max deviation of the frame Gram matrix from the identity.
    pub orthonormality_residual: f64,
    /// Max `|<ℓ^k, n_j>|` and `|n - n_j|` on interfaces.
    pub tangency_residual: f64,
    /// Max `|ΛΛ^T - I|` over anchor frames.
    pub anchor_residual: f64,
    /// Sup of `|D h_j - D h_{j-1}| / (h_j - h_{j-1})^{1/2}` over interior strips.
    pub slope_bound: f64,
    /// Sup of `|∂_d ℓ^{k,0}_d|` (raw field, not normalized).
    pub raw_normal_derivative_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySelftestReport {
    pub metrics: Vec<GapMetrics>,
    pub samples: usize,
    pub seed: u64,
}

/// Symmetric parabolic neck `h_1 = -ε/2 - |x'|²/2`, `h_2 = ε/2 + |x'|²/2`.
pub fn neck_stack(dim: usize, eps: f64) -> Result<InterfaceStack, GeometryError> {
    InterfaceStack::new(
        dim,
        vec![
            InterfaceShape::parabola(-0.5, 0.0, -0.5 * eps),
            InterfaceShape::parabola(0.5, 0.0, 0.5 * eps),
        ],
    )
}

/// Runs the sampled checks for every gap parameter, rebuilding the stack
/// with `family(eps)` each time.
pub fn geometry_selftest(
    family: &(dyn Fn(f64) -> Result<InterfaceStack, GeometryError> + Sync),
    eps_list: &[f64],
    opts: &SelftestOptions,
) -> Result<GeometrySelftestReport, GeometryError> {
    let metrics = eps_list
        .iter()
        .map(|&eps| {
            let stack = family(eps)?;
            stack_metrics(&stack, eps, opts)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GeometrySelftestReport { metrics, samples: opts.samples, seed: opts.seed })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn max_of(it: impl ParallelIterator<Item = f64>) -> f64 {
    it.reduce(|| 0.0, f64::max)
}

/// Tangential sample points on a grid (2-D: a line, 3-D: a disk).
fn column_grid(dim: usize, columns: usize) -> Vec<Vec<f64>> {
    const REACH: f64 = 0.999;
    if dim == 2 {
        (0..columns)
            .map(|i| vec![-REACH + 2.0 * REACH * i as f64 / (columns - 1) as f64])
            .collect()
    } else {
        let n = ((columns as f64).sqrt().ceil() as usize).max(3);
        let mut out = Vec::new();
        for i in 0..n {
            for k in 0..n {
                let a = -REACH + 2.0 * REACH * i as f64 / (n - 1) as f64;
                let b = -REACH + 2.0 * REACH * k as f64 / (n - 1) as f64;
                if a * a + b * b < REACH * REACH {
                    out.push(vec![a, b]);
                }
            }
        }
        out
    }
}

fn random_point(stack: &InterfaceStack, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = stack.dim();
    let mut x: Vec<f64> = loop {
        let xp: Vec<f64> = (0..d - 1).map(|_| rng.random_range(-0.999..0.999)).collect();
        if norm(&xp) < 0.999 {
            break xp;
        }
    };
    // half of the points are drawn inside a random strip so thin strips are hit
    if rng.random_bool(0.5) {
        let j = rng.random_range(1..=stack.regions());
        let lo = stack.height(j - 1, &x);
        let hi = stack.height(j, &x);
        x.push(lo + rng.random::<f64>() * (hi - lo));
    } else {
        x.push(rng.random_range(-1.0..1.0));
    }
    x
}

fn jacobian_norm(jet: &FrameJet, k: usize) -> f64 {
    jet.d_tangents[k].iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// `D_{ℓ^a} ℓ^b` for all tangent pairs, flattened.
fn directional_self_derivatives(jet: &FrameJet) -> Vec<f64> {
    let t = jet.frame.tangents.len();
    let d = t + 1;
    let mut out = Vec::with_capacity(t * t * d);
    for a in 0..t {
        for b in 0..t {
            for i in 0..d {
                let s: f64 = (0..d).map(|c| jet.frame.tangents[a][c] * jet.d_tangents[b][i][c]).sum();
                out.push(s);
            }
        }
    }
    out
}

fn gram_residual(rows: &[Vec<f64>]) -> f64 {
    let mut r: f64 = 0.0;
    for i in 0..rows.len() {
        for k in 0..rows.len() {
            let g: f64 = rows[i].iter().zip(&rows[k]).map(|(a, b)| a * b).sum();
            r = r.max((g - if i == k { 1.0 } else { 0.0 }).abs());
        }
    }
    r
}

fn stack_metrics(stack: &InterfaceStack, eps: f64, opts: &SelftestOptions) -> Result<GapMetrics, GeometryError> {
    let d = stack.dim();
    let m = stack.m();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let points: Vec<Vec<f64>> = (0..opts.samples).map(|_| random_point(stack, &mut rng)).collect();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..opts.samples)
        .filter_map(|_| {
            let x1 = random_point(stack, &mut rng);
            let r = 10f64.powf(rng.random_range(-5.0..-0.5));
            let dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let len = norm(&dir);
            if len < 1e-3 {
                return None;
            }
            let x2: Vec<f64> = x1.iter().zip(&dir).map(|(a, b)| a + r * b / len).collect();
            let inside = norm(&x2[..d - 1]) < 0.999 && x2[d - 1].abs() < 1.0;
            inside.then_some((x1, x2))
        })
        .collect();
    let columns = column_grid(d, opts.columns);

    // stratified points inside every strip of every column
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut strata: Vec<Vec<f64>> = Vec::new();
    for xp in &columns {
        for j in 1..=stack.regions() {
            let lo = stack.height(j - 1, xp);
            let hi = stack.height(j, xp);
            for &th in &levels {
                let mut x = xp.clone();
                x.push(lo + th * (hi - lo));
                strata.push(x);
            }
        }
    }

    let all: Vec<&Vec<f64>> = points.iter().chain(&strata).collect();
    let evals: Vec<(FrameJet, usize)> = all
        .par_iter()
        .map(|x| Ok((frame_jet(stack, x, RawRule::Auto)?, stack.region_of(x))))
        .collect::<Result<_, GeometryError>>()?;

    let orthonormality_residual = max_of(evals.par_iter().map(|(jet, _)| gram_residual(&jet.frame.lambda)));

    let deriv_gap_sup = max_of(all.par_iter().zip(&evals).map(|(x, (jet, j))| {
        let xp = &x[..d - 1];
        let gap = stack.height(*j, xp) - stack.height(*j - 1, xp);
        (0..d - 1).map(|k| jacobian_norm(jet, k)).fold(0.0, f64::max) * gap.max(0.0).sqrt()
    }));

    let raw_normal_derivative_sup = max_of(
        evals
            .par_iter()
            .map(|(jet, _)| jet.d_raw_slopes.iter().map(|g| g[d - 1].abs()).fold(0.0, f64::max)),
    );

    // vertical pairs spanning each strip catch the worst Hölder quotients
    let mut vertical: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for xp in &columns {
        for j in 1..=stack.regions() {
            let lo = stack.height(j - 1, xp);
            let hi = stack.height(j, xp);
            if hi > lo {
                let mut a = xp.clone();
                let mut b = xp.clone();
                a.push(lo);
                b.push(hi);
                vertical.push((a, b));
            }
        }
    }
    let holder_half = max_of(pairs.par_iter().chain(vertical.par_iter()).map(|(a, b)| {
        let fa = frame_jet(stack, a, RawRule::Auto).expect("sample inside domain").frame;
        let fb = frame_jet(stack, b, RawRule::Auto).expect("sample inside domain").frame;
        let dist = diff_norm(a, b).sqrt();
        fa.tangents
            .iter()
            .zip(&fb.tangents)
            .map(|(u, v)| diff_norm(u, v) / dist)
            .fold(0.0, f64::max)
    }));

    let tangency_residual = max_of(columns.par_iter().map(|xp| {
        let mut r: f64 = 0.0;
        for j in 1..=m {
            let jet = stack.jet(j, xp, 1);
            let nj = super::normal_from_gradient(&jet.grad[..d - 1]);
            let mut x = xp.clone();
            x.push(jet.value);
            let f = frame_jet(stack, &x, RawRule::Auto).expect("interface point").frame;
            for t in &f.tangents {
                let ip: f64 = t.iter().zip(&nj).map(|(a, b)| a * b).sum();
                r = r.max(ip.abs());
            }
            r = r.max(diff_norm(&f.normal, &nj));
        }
        r
    }));

    let jumps = opts
        .offsets
        .iter()
        .map(|&delta| {
            let jump = max_of(columns.par_iter().map(|xp| {
                let mut r: f64 = 0.0;
                for j in 1..=m {
                    let h = stack.height(j, xp);
                    let up = (h + delta).min(1.0);
                    let down = (h - delta).max(-1.0);
                    let mut a = xp.clone();
                    a.push(up);
                    let mut b = xp.clone();
                    b.push(down);
                    let fa = directional_self_derivatives(&frame_jet(stack, &a, RawRule::Auto).expect("inside"));
                    let fb = directional_self_derivatives(&frame_jet(stack, &b, RawRule::Auto).expect("inside"));
                    r = r.max(diff_norm(&fa, &fb));
                }
                r
            }));
            (delta, jump)
        })
        .collect();

    let slope_bound = max_of(columns.par_iter().map(|xp| {
        let mut r: f64 = 0.0;
        for j in 2..=m {
            let hi = stack.jet(j, xp, 1);
            let lo = stack.jet(j - 1, xp, 1);
            let gap = hi.value - lo.value;
            let dg = (0..d - 1).map(|k| (hi.grad[k] - lo.grad[k]).powi(2)).sum::<f64>().sqrt();
            if gap > 0.0 {
                r = r.max(dg / gap.sqrt());
            }
        }
        r
    }));

    let anchor_residual = max_of(points.par_iter().take(opts.anchor_samples).map(|x| {
        match frame_at_anchor(stack, x) {
            Ok(a) => gram_residual(&a.frame.lambda),
            Err(_) => 0.0,
        }
    }));

    let metrics = GapMetrics {
        eps,
        holder_half,
        deriv_gap_sup,
        jumps,
        orthonormality_residual,
        tangency_residual,
        anchor_residual,
        slope_bound,
        raw_normal_derivative_sup,
    };
    let finite = [
        holder_half,
        deriv_gap_sup,
        orthonormality_residual,
        tangency_residual,
        anchor_residual,
        slope_bound,
        raw_normal_derivative_sup,
    ]
    .iter()
    .chain(metrics.jumps.iter().map(|(_, j)| j))
    .all(|v| v.is_finite());
    assert!(finite, "geometry self-test produced a non-finite metric: {metrics:?}");
    Ok(metrics)
}
