//! Half-power oscillation functional, power-law fits and piecewise-constant
//! projection onto anchor strips.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DiagnosticsError, ParabolicPoint};
use crate::geometry::{AnchorStrips, InterfaceStack};

/// `min_q mean |v - q|^{1/2}` and the minimizing `q`.
///
/// The objective is concave between consecutive data values, so the minimum
/// is attained at one of them; all are tried.
pub fn half_power_deviation(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let n = values.len() as f64;
    let (m, q) = sorted
        .par_iter()
        .map(|&q| (values.iter().map(|v| (v - q).abs().sqrt()).sum::<f64>() / n, q))
        .reduce(|| (f64::INFINITY, 0.0), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    (q, m)
}

/// `(mean |g1 - q|^{1/2} + mean |g2 - Q|^{1/2})^2` minimized over `q, Q`.
pub fn phi_from_samples(pairs: &[(f64, f64)]) -> f64 {
    let g1: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let g2: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let s = half_power_deviation(&g1).1 + half_power_deviation(&g2).1;
    s * s
}

/// Roughly `budget` points filling `B_r(x0)`, or the cylinder
/// `(t0 - r^2, t0] × B_r(x0)` when `parabolic`. The layout scales with `r`.
pub fn ball_samples(z0: &ParabolicPoint, r: f64, budget: usize, parabolic: bool) -> Vec<ParabolicPoint> {
    let layers = if parabolic { ((budget as f64).cbrt().round() as usize).max(2) } else { 1 };
    let per_layer = (budget / layers).max(1);
    let s = r * (std::f64::consts::PI / per_layer as f64).sqrt();
    let k = (r / s).floor() as i64;
    let mut out = Vec::new();
    for l in 0..layers {
        let t = if parabolic { z0.t - r * r * l as f64 / layers as f64 } else { z0.t };
        for i in -k..=k {
            for j in -k..=k {
                let (dx, dy) = (i as f64 * s, j as f64 * s);
                if dx * dx + dy * dy <= r * r {
                    out.push(ParabolicPoint { t, x: [z0.x[0] + dx, z0.x[1] + dy] });
                }
            }
        }
    }
    out
}

/// Oscillation functional of the field pair over the ball (elliptic) or
/// backward cylinder (parabolic) of radius `r` around `z0`.
pub fn campanato_phi(
    pair: &(dyn Fn(&ParabolicPoint) -> Option<(f64, f64)> + Sync),
    z0: &ParabolicPoint,
    r: f64,
    budget: usize,
    parabolic: bool,
) -> Result<f64, DiagnosticsError> {
    if !(r > 0.0) {
        return Err(DiagnosticsError::InvalidRequest(format!("radius {r} is not positive")));
    }
    let pts = ball_samples(z0, r, budget, parabolic);
    let vals: Vec<(f64, f64)> = pts.par_iter().filter_map(pair).collect();
    if vals.is_empty() {
        return Err(DiagnosticsError::EmptySample);
    }
    Ok(phi_from_samples(&vals))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Least-squares slope of `log Φ` against `log r`.
    pub slope: f64,
    pub intercept: f64,
    pub used: usize,
    /// Records dropped for a non-positive or non-finite value.
    pub dropped: usize,
}

pub fn decay_fit(records: &[(f64, f64)]) -> Result<DecayFit, DiagnosticsError> {
    let usable: Vec<(f64, f64)> = records
        .iter()
        .filter(|(r, v)| *r > 0.0 && *v > 0.0 && r.is_finite() && v.is_finite())
        .map(|(r, v)| (r.ln(), v.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(DiagnosticsError::TooFewRecords { usable: usable.len() });
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if !(sxx > 0.0) {
        return Err(DiagnosticsError::InvalidRequest("decay records share a single radius".into()));
    }
    let slope = sxy / sxx;
    Ok(DecayFit { slope, intercept: my - slope * mx, used: usable.len(), dropped: records.len() - usable.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseProjection {
    /// Mean of the field over the samples of each region (`None` if empty).
    pub means: Vec<Option<f64>>,
    /// Sample average of `|f - f̄|`, with `f̄` taken from the anchor strip.
    pub deviation: f64,
    /// Strips containing samples but no region mean; their samples are ignored.
    pub skipped: Vec<usize>,
    pub samples: usize,
}

/// Replaces the field by per-region means over the ball/cylinder and measures
/// the average deviation when each sample gets the mean of its anchor strip.
pub fn piecewise_const_project(
    field: &(dyn Fn(&ParabolicPoint) -> Option<f64> + Sync),
    stack: &InterfaceStack,
    strips: &AnchorStrips,
    z0: &ParabolicPoint,
    r: f64,
    budget: usize,
    parabolic: bool,
) -> Result<PiecewiseProjection, DiagnosticsError> {
    let pts = ball_samples(z0, r, budget, parabolic);
    let vals: Vec<(ParabolicPoint, f64)> = pts.par_iter().filter_map(|z| field(z).map(|v| (*z, v))).collect();
    if vals.is_empty() {
        return Err(DiagnosticsError::EmptySample);
    }
    let regions = stack.regions();
    let mut sums = vec![(0.0, 0usize); regions];
    for (z, v) in &vals {
        let j = stack.region_of(&z.x);
        sums[j - 1].0 += v;
        sums[j - 1].1 += 1;
    }
    let means: Vec<Option<f64>> = sums.iter().map(|&(s, c)| (c > 0).then(|| s / c as f64)).collect();
    let mut skipped = Vec::new();
    let (mut total, mut count) = (0.0, 0usize);
    for (z, v) in &vals {
        let strip = strips.strip_of(&z.x);
        match means[strip - 1] {
            Some(m) => {
                total += (v - m).abs();
                count += 1;
            }
            None => {
                if !skipped.contains(&strip) {
                    skipped.push(strip);
                }
            }
        }
    }
    skipped.sort_unstable();
    if count == 0 {
        return Err(DiagnosticsError::EmptySample);
    }
    Ok(PiecewiseProjection { means, deviation: total / count as f64, skipped, samples: vals.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDecay {
    pub records: Vec<(f64, f64)>,
    /// Fit of the deviation against `r`; absent when fewer than three radii
    /// gave a positive deviation.
    pub fit: Option<DecayFit>,
}

pub fn projection_decay(
    field: &(dyn Fn(&ParabolicPoint) -> Option<f64> + Sync),
    stack: &InterfaceStack,
    z0: &ParabolicPoint,
    radii: &[f64],
    budget: usize,
    parabolic: bool,
) -> Result<ProjectionDecay, DiagnosticsError> {
    let strips = AnchorStrips::new(stack, &z0.x)?;
    let records = radii
        .iter()
        .map(|&r| Ok((r, piecewise_const_project(field, stack, &strips, z0, r, budget, parabolic)?.deviation)))
        .collect::<Result<Vec<_>, DiagnosticsError>>()?;
    let fit = decay_fit(&records).ok();
    Ok(ProjectionDecay { records, fit })
}
