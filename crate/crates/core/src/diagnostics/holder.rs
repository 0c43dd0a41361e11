//! Sampled Hölder seminorms and time-difference quotients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DiagnosticsError;
use crate::geometry::InterfaceStack;

/// Space-time point `z = (t, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicPoint {
    pub t: f64,
    pub x: [f64; 2],
}

impl ParabolicPoint {
    pub fn new(t: f64, x: [f64; 2]) -> Self {
        Self { t, x }
    }
}

/// `max(|t1 - t2|^{1/2}, |x1 - x2|)`.
pub fn parabolic_distance(a: &ParabolicPoint, b: &ParabolicPoint) -> f64 {
    let dt = (a.t - b.t).abs().sqrt();
    let dx = (a.x[0] - b.x[0]).hypot(a.x[1] - b.x[1]);
    dt.max(dx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Spatial,
    Parabolic,
}

/// Field evaluated at a space-time point; `None` where it is undefined.
pub type VectorSampler<'a> = dyn Fn(&ParabolicPoint) -> Option<Vec<f64>> + Sync + 'a;

/// Set the sample points are drawn from. Ranges are closed; a zero-width
/// range pins that coordinate.
#[derive(Debug, Clone, Copy)]
pub enum SampleDomain<'a> {
    Box { t: [f64; 2], x: [f64; 2], y: [f64; 2] },
    /// Closure of region `region`, clipped to the box. Points are laid out in
    /// strip coordinates so thin regions are covered as densely as thick ones.
    Region {
        stack: &'a InterfaceStack,
        region: usize,
        t: [f64; 2],
        x: [f64; 2],
        y: [f64; 2],
    },
}

pub struct SeminormRequest<'a> {
    pub sampler: &'a VectorSampler<'a>,
    pub domain: SampleDomain<'a>,
    /// Distance kept from the outer boundary of `[-1, 1]^2` and from the first time.
    pub margin: f64,
    pub gamma: f64,
    pub metric: Metric,
    /// Number of sample points; every pair of them is compared.
    pub budget: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormEstimate {
    pub value: f64,
    pub points: usize,
    /// Pair attaining the sup, if any pair had a nonzero difference.
    pub argmax: Option<(ParabolicPoint, ParabolicPoint)>,
}

impl SeminormEstimate {
    /// Sup of the difference quotient over all pairs of `samples`.
    pub fn from_samples(samples: &[(ParabolicPoint, Vec<f64>)], gamma: f64, metric: Metric) -> Self {
        let best = (0..samples.len())
            .into_par_iter()
            .map(|i| {
                let (zi, ui) = &samples[i];
                let mut best: (f64, usize, usize) = (0.0, i, i);
                for (j, (zj, uj)) in samples.iter().enumerate().skip(i + 1) {
                    let num = ui.iter().zip(uj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    if num == 0.0 {
                        continue;
                    }
                    let dx = (zi.x[0] - zj.x[0]).hypot(zi.x[1] - zj.x[1]);
                    let den = match metric {
                        Metric::Spatial => dx.powf(gamma),
                        Metric::Parabolic => (zi.t - zj.t).abs().powf(0.5 * gamma) + dx.powf(gamma),
                    };
                    if den > 0.0 && num / den > best.0 {
                        best = (num / den, i, j);
                    }
                }
                best
            })
            // ties resolved by pair index so the reported argmax is reproducible
            .reduce(|| (0.0, 0, 0), |a, b| if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) { b } else { a });
        let argmax = (best.0 > 0.0).then(|| (samples[best.1].0, samples[best.2].0));
        Self { value: best.0, points: samples.len(), argmax }
    }
}

fn clip(r: [f64; 2], lo: f64, hi: f64) -> [f64; 2] {
    [r[0].max(lo), r[1].min(hi)]
}

fn grid_count(total: usize, dims: usize) -> usize {
    if dims == 0 {
        return 1;
    }
    let k = (total as f64).powf(1.0 / dims as f64).floor().max(1.0) as usize;
    // odd counts put a node at the centre of symmetric ranges
    if k.is_multiple_of(2) {
        k + 1
    } else {
        k
    }
}

fn linspace(r: [f64; 2], k: usize, i: usize) -> f64 {
    if k == 1 {
        0.5 * (r[0] + r[1])
    } else {
        r[0] + (r[1] - r[0]) * i as f64 / (k - 1) as f64
    }
}

/// Stratified grid (half the budget) plus seeded uniform points, all inside
/// the domain after the margin is applied.
pub(crate) fn domain_points(domain: &SampleDomain, margin: f64, budget: usize, seed: u64) -> Vec<ParabolicPoint> {
    let (t, x, y, region) = match *domain {
        SampleDomain::Box { t, x, y } => (t, x, y, None),
        SampleDomain::Region { stack, region, t, x, y } => (t, x, y, Some((stack, region))),
    };
    let t = [t[0] + margin, t[1]].map(|v| v.min(t[1]));
    let x = clip(x, -1.0 + margin, 1.0 - margin);
    let y = clip(y, -1.0 + margin, 1.0 - margin);
    if t[0] > t[1] || x[0] > x[1] || y[0] > y[1] {
        return Vec::new();
    }
    // third parameter is y itself or the relative height inside the region
    let third = if region.is_some() { [0.0, 1.0] } else { y };
    let ranges = [t, x, third];
    let place = |s: [f64; 3]| -> Option<ParabolicPoint> {
        let py = match region {
            None => s[2],
            Some((stack, j)) => {
                let lo = stack.height(j - 1, &[s[1]]);
                let hi = stack.height(j, &[s[1]]);
                lo + s[2] * (hi - lo)
            }
        };
        (py >= y[0] && py <= y[1]).then_some(ParabolicPoint { t: s[0], x: [s[1], py] })
    };
    let active: Vec<usize> = (0..3).filter(|&d| ranges[d][1] > ranges[d][0]).collect();
    let k = grid_count(budget.div_ceil(2), active.len());
    let counts: [usize; 3] = std::array::from_fn(|d| if active.contains(&d) { k } else { 1 });
    let mut out = Vec::with_capacity(budget);
    for a in 0..counts[0] {
        for b in 0..counts[1] {
            for c in 0..counts[2] {
                let s = [linspace(ranges[0], counts[0], a), linspace(ranges[1], counts[1], b), linspace(ranges[2], counts[2], c)];
                out.extend(place(s));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = budget.saturating_sub(counts.iter().product());
    for _ in 0..random {
        let s: [f64; 3] = std::array::from_fn(|d| {
            let u: f64 = rng.random();
            ranges[d][0] + u * (ranges[d][1] - ranges[d][0])
        });
        out.extend(place(s));
    }
    out
}

/// Lower bound for the Hölder seminorm of the sampled field.
pub fn holder_seminorm(req: &SeminormRequest) -> Result<SeminormEstimate, DiagnosticsError> {
    if !(req.gamma > 0.0 && req.gamma <= 1.0) {
        return Err(DiagnosticsError::InvalidRequest(format!("exponent {} outside (0, 1]", req.gamma)));
    }
    if req.budget < 2 {
        return Err(DiagnosticsError::InvalidRequest("sample budget below 2".into()));
    }
    let points = domain_points(&req.domain, req.margin, req.budget, req.seed);
    let samples: Vec<(ParabolicPoint, Vec<f64>)> = points
        .par_iter()
        .filter_map(|z| (req.sampler)(z).map(|v| (*z, v)))
        .collect();
    if samples.is_empty() {
        return Err(DiagnosticsError::EmptySample);
    }
    Ok(SeminormEstimate::from_samples(&samples, req.gamma, req.metric))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeQuotient {
    /// `(f(t, x) - f(t - h, x)) / h^γ` per requested point.
    pub values: Vec<Option<Vec<f64>>>,
    /// Largest Euclidean norm among the defined quotients.
    pub sup: f64,
}

/// Time-difference quotient of `field` with step `h`; `start` is the first
/// time at which the field is available.
pub fn time_quotient(
    field: &VectorSampler,
    gamma: f64,
    h: f64,
    start: f64,
    points: &[ParabolicPoint],
) -> Result<TimeQuotient, DiagnosticsError> {
    if !(h > 0.0) {
        return Err(DiagnosticsError::InvalidRequest(format!("time step {h} is not positive")));
    }
    if let Some(z) = points.iter().find(|z| z.t - h < start - 1e-12) {
        return Err(DiagnosticsError::TimeOutOfRange { t: z.t, h, start });
    }
    let scale = h.powf(gamma);
    let values: Vec<Option<Vec<f64>>> = points
        .par_iter()
        .map(|z| {
            let now = field(z)?;
            let before = field(&ParabolicPoint { t: z.t - h, x: z.x })?;
            Some(now.iter().zip(&before).map(|(a, b)| (a - b) / scale).collect())
        })
        .collect();
    let sup = values
        .iter()
        .flatten()
        .map(|q| q.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    Ok(TimeQuotient { values, sup })
}
