//! TOML scenario files.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LabError;
use crate::diagnostics::{neck_layers, GapSweepSpec, NormTableOptions, Window};
use crate::geometry::{neck_stack, InterfaceShape, InterfaceStack};
use crate::mesh::{DirichletSides, MeshParams};
use crate::solver::{
    CoefficientModel, ForcingModel, Manufactured, PiecewiseCoefficients, Poly2, PolynomialForcing,
    RegionCoefficient, SolveParams, TimeGrid, TimeProfile,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Elliptic,
    Parabolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StackPreset {
    /// `h_1 = -ε/2 - x²/2`, `h_2 = ε/2 + x²/2`.
    Neck,
    /// Two inclusions of thickness `width` around a neck of width `ε`.
    NeckLayers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<StackPreset>,
    /// Gap parameter of a preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shapes: Vec<InterfaceShape>,
    /// Optional check on the number of interfaces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

fn default_width() -> f64 {
    0.3
}

/// Exactly one of `a0`, `values`, `regions`; all ones when none is given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    /// Contrast shorthand: even-numbered regions get `a0`, odd ones 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<Vec<RegionCoefficient>>,
    /// Declared ellipticity; required with polynomial entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "lowercase", deny_unknown_fields)]
pub enum ForcingSpec {
    /// No flux data, polynomial boundary and initial datum (default `u = y`).
    Zero {
        #[serde(default = "default_boundary")]
        boundary: Poly2,
    },
    /// Continuous piecewise-smooth exact solution with matching flux data.
    Manufactured {
        #[serde(default = "default_base")]
        base: Poly2,
        /// Kink strength per interface; defaults to 0.5 each.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kinks: Option<Vec<f64>>,
        #[serde(default = "default_profile")]
        profile: TimeProfile,
    },
    Polynomial {
        /// `[f^1, f^2]` per region; missing regions are zero.
        #[serde(default)]
        flux: Vec<[Poly2; 2]>,
        #[serde(default = "default_boundary")]
        boundary: Poly2,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<Poly2>,
    },
}

fn default_boundary() -> Poly2 {
    Poly2::affine(0.0, 0.0, 1.0)
}

fn default_base() -> Poly2 {
    Poly2::from_terms(&[(0.1, 0, 0), (0.5, 0, 1), (0.25, 2, 0), (0.1, 1, 1)])
}

fn default_profile() -> TimeProfile {
    TimeProfile::Constant
}

impl Default for ForcingSpec {
    fn default() -> Self {
        Self::Zero { boundary: default_boundary() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bottom,
    Top,
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    /// Sides with Dirichlet data; the rest are natural.
    pub dirichlet: Vec<Side>,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self { dirichlet: vec![Side::Bottom, Side::Top, Side::Left, Side::Right] }
    }
}

impl BoundarySpec {
    pub fn sides(&self) -> DirichletSides {
        let has = |s| self.dirichlet.contains(&s);
        DirichletSides { bottom: has(Side::Bottom), top: has(Side::Top), left: has(Side::Left), right: has(Side::Right) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_ny")]
    pub ny: usize,
    #[serde(default = "default_eta_min")]
    pub eta_min: f64,
}

fn default_nx() -> usize {
    64
}

fn default_ny() -> usize {
    8
}

fn default_eta_min() -> f64 {
    1e-12
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self { nx: default_nx(), ny: default_ny(), eta_min: default_eta_min() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-12
}

fn default_max_iter() -> usize {
    200_000
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { tol: default_tol(), max_iter: default_max_iter() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// Derivative level of the norm table (0 or 1).
    #[serde(default = "default_s_level")]
    pub s_level: usize,
    /// Base points of the oscillation decay; defaults to each interface at
    /// `x = 0`. An empty list disables the decay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_phi_budget")]
    pub phi_budget: usize,
    #[serde(default = "default_hessian_points")]
    pub hessian_points: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_step: Option<f64>,
    /// Random samples of the geometry self-test.
    #[serde(default = "default_geometry_samples")]
    pub geometry_samples: usize,
}

fn default_seed() -> u64 {
    0xC0FFEE
}

fn default_delta() -> f64 {
    0.75
}

fn default_mu() -> f64 {
    1.0
}

fn default_s_level() -> usize {
    1
}

fn default_radii() -> Vec<f64> {
    vec![0.2, 0.1, 0.05, 0.025]
}

fn default_budget() -> usize {
    400
}

fn default_phi_budget() -> usize {
    600
}

fn default_hessian_points() -> usize {
    300
}

fn default_margin() -> f64 {
    0.1
}

fn default_geometry_samples() -> usize {
    10_000
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            delta: default_delta(),
            mu: default_mu(),
            s_level: default_s_level(),
            probes: None,
            radii: default_radii(),
            budget: default_budget(),
            phi_budget: default_phi_budget(),
            hessian_points: default_hessian_points(),
            margin: default_margin(),
            radius: None,
            window: None,
            time_step: None,
            geometry_samples: default_geometry_samples(),
        }
    }
}

impl DiagnosticsSpec {
    /// `μ' = min(1/2, μ)`.
    pub fn mu_prime(&self) -> f64 {
        self.mu.min(0.5)
    }

    pub fn norm_options(&self) -> NormTableOptions {
        NormTableOptions {
            budget: self.budget,
            hessian_points: self.hessian_points,
            seed: self.seed,
            margin: self.margin,
            radius: self.radius,
            window: self.window.unwrap_or_else(Window::full),
            time_step: self.time_step,
        }
    }
}

/// Gap sweep over the neck-layers family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Swept parameter; only `"eps"` is supported.
    pub parameter: String,
    pub values: Vec<f64>,
    /// Defaults to the coefficient shorthand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mode: Mode,
    pub interfaces: InterfaceSpec,
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub mesh: MeshSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeGrid>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    /// File text the config was parsed from.
    #[serde(skip)]
    pub source: Option<String>,
}

fn invalid(key: &str, reason: impl Into<String>) -> LabError {
    LabError::Validation { key: key.into(), reason: reason.into() }
}

/// Parses, applies defaults and validates.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, LabError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| LabError::Parse(e.to_string()))?;
    for key in ["mode", "interfaces"] {
        if !table.contains_key(key) {
            return Err(invalid(key, "missing"));
        }
    }
    let mut config: ScenarioConfig = toml::from_str(text).map_err(|e| LabError::Parse(e.to_string()))?;
    config.source = Some(text.to_string());
    config.validate()?;
    Ok(config)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, LabError> {
    let text = std::fs::read_to_string(path).map_err(|source| LabError::Io { path: path.into(), source })?;
    parse_scenario(&text)
}

/// SHA-256 of the scenario content with keys sorted, hex encoded.
pub fn scenario_hash(text: &str) -> Result<String, LabError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| LabError::Parse(e.to_string()))?;
    let canonical = serde_json::to_value(&table).map_err(|e| LabError::Parse(e.to_string()))?;
    // serde_json maps are ordered by key
    let bytes = serde_json::to_vec(&canonical).map_err(|e| LabError::Parse(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn positive(key: &str, v: f64) -> Result<(), LabError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("{v} is not a positive number")))
    }
}

impl ScenarioConfig {
    /// Original file text, or a TOML rendering of the config.
    pub fn text(&self) -> Result<String, LabError> {
        match &self.source {
            Some(s) => Ok(s.clone()),
            None => toml::to_string(self).map_err(|e| LabError::Parse(e.to_string())),
        }
    }

    pub fn hash(&self) -> Result<String, LabError> {
        scenario_hash(&self.text()?)
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let d = &self.diagnostics;
        if !(d.delta > 0.5 && d.delta < 1.0) {
            return Err(invalid("diagnostics.delta", format!("{} is outside (1/2, 1)", d.delta)));
        }
        if !(d.mu > 0.0 && d.mu <= 1.0) {
            return Err(invalid("diagnostics.mu", format!("{} is outside (0, 1]", d.mu)));
        }
        if d.s_level > 1 {
            return Err(invalid("diagnostics.s_level", "only levels 0 and 1 are supported"));
        }
        for &r in &d.radii {
            positive("diagnostics.radii", r)?;
        }
        if d.budget < 2 || d.phi_budget < 1 || d.hessian_points < 1 {
            return Err(invalid("diagnostics.budget", "sample budgets must be positive"));
        }
        if let Some(r) = d.radius {
            positive("diagnostics.radius", r)?;
        }
        if let Some(h) = d.time_step {
            positive("diagnostics.time_step", h)?;
        }
        if !(d.margin >= 0.0 && d.margin < 1.0) {
            return Err(invalid("diagnostics.margin", format!("{} is outside [0, 1)", d.margin)));
        }
        let i = &self.interfaces;
        match (i.preset, i.shapes.is_empty()) {
            (Some(_), false) => return Err(invalid("interfaces", "give either a preset or shapes, not both")),
            (Some(_), true) => positive("interfaces.eps", i.eps.unwrap_or(f64::NAN))?,
            (None, _) => {
                if i.eps.is_some() {
                    return Err(invalid("interfaces.eps", "only used with a preset"));
                }
            }
        }
        positive("interfaces.width", i.width)?;
        let stack = self.stack()?;
        if let Some(m) = i.m {
            if m != stack.m() {
                return Err(invalid("interfaces.m", format!("declared {m}, found {}", stack.m())));
            }
        }
        let regions = stack.regions();
        let c = &self.coefficients;
        let given = [c.a0.is_some(), c.values.is_some(), c.regions.is_some()].iter().filter(|&&b| b).count();
        if given > 1 {
            return Err(invalid("coefficients", "give one of a0, values, regions"));
        }
        if let Some(a0) = c.a0 {
            positive("coefficients.a0", a0)?;
        }
        if let Some(v) = &c.values {
            if v.len() != regions {
                return Err(invalid("coefficients.values", format!("expected {regions} entries, got {}", v.len())));
            }
            for &a in v {
                positive("coefficients.values", a)?;
            }
        }
        if let Some(r) = &c.regions {
            if r.len() != regions {
                return Err(invalid("coefficients.regions", format!("expected {regions} entries, got {}", r.len())));
            }
            let poly = r.iter().any(|x| matches!(x, RegionCoefficient::Scalar { .. }));
            if poly && c.nu.is_none() {
                return Err(invalid("coefficients.nu", "required with polynomial entries"));
            }
            for x in r {
                if let RegionCoefficient::Constant { matrix } = x {
                    if matrix[0][1] != matrix[1][0] {
                        return Err(invalid("coefficients.regions", "matrices must be symmetric"));
                    }
                }
            }
        }
        if let Some(nu) = c.nu {
            if !(nu > 0.0 && nu <= 1.0) {
                return Err(invalid("coefficients.nu", format!("{nu} is outside (0, 1]")));
            }
        }
        if let ForcingSpec::Manufactured { kinks: Some(k), .. } = &self.forcing {
            if k.len() != stack.m() {
                return Err(invalid("forcing.kinks", format!("expected {} entries, got {}", stack.m(), k.len())));
            }
        }
        if let ForcingSpec::Polynomial { flux, .. } = &self.forcing {
            if flux.len() > regions {
                return Err(invalid("forcing.flux", format!("more than {regions} regions")));
            }
        }
        self.mesh_params()
            .validate()
            .map_err(|e| invalid("mesh", e.to_string()))?;
        positive("solver.tol", self.solver.tol)?;
        if self.solver.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be positive"));
        }
        match (self.mode, &self.time) {
            (Mode::Parabolic, None) => return Err(invalid("time", "required in parabolic mode")),
            (Mode::Parabolic, Some(t)) => {
                if t.steps == 0 || !(t.end > t.start) {
                    return Err(invalid("time", "needs end > start and steps > 0"));
                }
            }
            (Mode::Elliptic, Some(_)) => return Err(invalid("time", "only used in parabolic mode")),
            (Mode::Elliptic, None) => {}
        }
        if let Some(s) = &self.sweep {
            if s.parameter != "eps" {
                return Err(invalid("sweep.parameter", format!("unknown parameter `{}`", s.parameter)));
            }
            if s.values.len() < 3 {
                return Err(invalid("sweep.values", "need at least three values for a fit"));
            }
            for &v in &s.values {
                positive("sweep.values", v)?;
            }
            match s.a0.or(c.a0) {
                Some(a) => positive("sweep.a0", a)?,
                None => return Err(invalid("sweep.a0", "set sweep.a0 or coefficients.a0")),
            }
            if let Some(t) = s.tol {
                positive("sweep.tol", t)?;
            }
        }
        Ok(())
    }

    pub fn stack(&self) -> Result<InterfaceStack, LabError> {
        let i = &self.interfaces;
        let stack = match i.preset {
            Some(StackPreset::Neck) => neck_stack(2, i.eps.unwrap_or_default())?,
            Some(StackPreset::NeckLayers) => neck_layers(i.eps.unwrap_or_default(), i.width)?,
            None => InterfaceStack::new(2, i.shapes.clone())?,
        };
        Ok(stack)
    }

    pub fn coefficients(&self) -> Result<PiecewiseCoefficients, LabError> {
        let regions = self.stack()?.regions();
        let c = &self.coefficients;
        let mut coeff = if let Some(r) = &c.regions {
            let nu = r
                .iter()
                .map(|x| match x {
                    RegionCoefficient::Constant { matrix } => {
                        let (lo, hi) = sym_eigen(matrix);
                        lo.min(1.0 / hi)
                    }
                    RegionCoefficient::Scalar { .. } => f64::INFINITY,
                })
                .fold(1.0, f64::min);
            PiecewiseCoefficients { regions: r.clone(), nu }
        } else {
            let values: Vec<f64> = match (&c.values, c.a0) {
                (Some(v), _) => v.clone(),
                (None, Some(a0)) => (1..=regions).map(|j| if j % 2 == 0 { a0 } else { 1.0 }).collect(),
                (None, None) => vec![1.0; regions],
            };
            PiecewiseCoefficients::constants(&values)
        };
        if let Some(nu) = c.nu {
            coeff.nu = nu;
        }
        Ok(coeff)
    }

    pub fn forcing(&self, coeff: Arc<dyn CoefficientModel>) -> Result<Box<dyn ForcingModel>, LabError> {
        Ok(match &self.forcing {
            ForcingSpec::Zero { boundary } => Box::new(PolynomialForcing::zero_flux(boundary.clone())),
            ForcingSpec::Manufactured { .. } => Box::new(self.manufactured(coeff)?.expect("manufactured preset")),
            ForcingSpec::Polynomial { flux, boundary, initial } => Box::new(PolynomialForcing {
                flux: flux.clone(),
                boundary: boundary.clone(),
                initial: initial.clone().unwrap_or_else(|| boundary.clone()),
            }),
        })
    }

    /// The exact solution when the forcing preset is manufactured.
    pub fn manufactured(&self, coeff: Arc<dyn CoefficientModel>) -> Result<Option<Manufactured>, LabError> {
        let ForcingSpec::Manufactured { base, kinks, profile } = &self.forcing else {
            return Ok(None);
        };
        let stack = self.stack()?;
        let kinks = kinks.clone().unwrap_or_else(|| vec![0.5; stack.m()]);
        Ok(Some(Manufactured { stack, base: base.clone(), kinks, profile: *profile, coefficients: coeff }))
    }

    pub fn mesh_params(&self) -> MeshParams {
        MeshParams {
            nx: self.mesh.nx,
            ny: self.mesh.ny,
            eta_min: self.mesh.eta_min,
            dirichlet_sides: self.boundary.sides(),
        }
    }

    pub fn solve_params(&self) -> SolveParams {
        SolveParams { tol: self.solver.tol, max_iter: self.solver.max_iter }
    }

    pub fn sweep_spec(&self) -> Option<GapSweepSpec> {
        let s = self.sweep.as_ref()?;
        let defaults = GapSweepSpec::default();
        Some(GapSweepSpec {
            eps: s.values.clone(),
            a0: s.a0.or(self.coefficients.a0).unwrap_or(defaults.a0),
            width: self.interfaces.width,
            nx: s.nx.unwrap_or(defaults.nx),
            ny: s.ny.unwrap_or(defaults.ny),
            seed: self.diagnostics.seed,
            tol: s.tol.unwrap_or(defaults.tol),
            ..defaults
        })
    }
}

/// Eigenvalues `(min, max)` of a symmetric 2×2 matrix.
fn sym_eigen(a: &[[f64; 2]; 2]) -> (f64, f64) {
    let mean = 0.5 * (a[0][0] + a[1][1]);
    let r = (0.5 * (a[0][0] - a[1][1])).hypot(a[0][1]);
    (mean - r, mean + r)
}
