//! Pipeline stages and their artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use super::config::{Mode, ScenarioConfig};
use super::LabError;
use crate::diagnostics::{
    campanato_phi, decay_fit, gap_sweep, neck_layers, piecewise_norm_table, DecayRecord, DirectionalFields, ParabolicPoint,
    Provenance, RecoveredGradient, RegularityReport, SweepTable,
};
use crate::geometry::{geometry_selftest, GeometrySelftestReport, InterfaceStack, SelftestOptions};
use crate::mesh::{build_strip_mesh, mesh_quality, MeshJson, MeshQuality, StripMesh};
use crate::solver::{
    error_norms, interface_flux_jump, solve_elliptic_on, solve_parabolic_on, CoefficientModel, ErrorNorms,
    FieldSolution, ForcingModel, Manufactured, PiecewiseCoefficients, SolverMeta,
};

pub const TOOL_VERSION: &str = concat!("lamlab ", env!("CARGO_PKG_VERSION"));

/// Files a run may write; `--force` removes exactly these.
pub const ARTIFACTS: [&str; 9] = [
    "scenario.toml",
    "manifest.json",
    "report.json",
    "geometry.json",
    "mesh.json",
    "solution.csv",
    "decay.csv",
    "sweep.csv",
    "convergence.csv",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    VerifyGeometry,
    Mesh,
    Solve,
    Diagnose,
    Sweep,
    /// Mesh, solve, diagnostics and the sweep when one is configured.
    Run,
    Convergence { refine: usize },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub force: bool,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_hash: String,
    pub tool_version: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub stage: Stage,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mode: Mode,
    pub hash: String,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub vertices: usize,
    pub triangles: usize,
    pub interface_edges: usize,
    pub quality: MeshQuality,
    /// Smallest strip height per region.
    pub min_strip_gap: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub tol: f64,
    #[serde(flatten)]
    pub meta: SolverMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceFlux {
    pub interface: usize,
    /// Mean of the two one-sided conormal fluxes over the interface edges.
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub jump_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSummary {
    pub interfaces: Vec<InterfaceFlux>,
    pub jump_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLevel {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorNorms>,
    pub flux_jump_sup: f64,
    pub residual: f64,
}

/// Fitted slopes of each error against `h`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvergenceRates {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flux_jump: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub levels: Vec<ConvergenceLevel>,
    pub rates: ConvergenceRates,
}

/// Contents of `report.json`. No value is ever `null`: absent measurements
/// are omitted and non-finite ones abort the write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: ScenarioSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySelftestReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux: Option<FluxSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_norms: Option<ErrorNorms>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceTable>,
    pub regularity: RegularityReport,
    pub errors: Vec<String>,
    pub timing: BTreeMap<String, f64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LabError + '_ {
    move |source| LabError::Io { path: path.to_path_buf(), source }
}

/// JSON text of `value`, refusing anything that would serialize as `null`.
pub fn finite_json<T: Serialize>(value: &T) -> Result<String, LabError> {
    let v = serde_json::to_value(value).map_err(|e| LabError::NonFinite(e.to_string()))?;
    check_no_null(&v, "$")?;
    let mut text = serde_json::to_string_pretty(&v).map_err(|e| LabError::NonFinite(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn check_no_null(v: &serde_json::Value, path: &str) -> Result<(), LabError> {
    match v {
        serde_json::Value::Null => Err(LabError::NonFinite(path.to_string())),
        serde_json::Value::Array(a) => {
            a.iter().enumerate().try_for_each(|(i, x)| check_no_null(x, &format!("{path}[{i}]")))
        }
        serde_json::Value::Object(o) => o.iter().try_for_each(|(k, x)| check_no_null(x, &format!("{path}.{k}"))),
        _ => Ok(()),
    }
}

/// Writes a CSV whose numeric cells must all be finite.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), LabError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| LabError::Csv(e.to_string()))?;
    w.write_record(header).map_err(|e| LabError::Csv(e.to_string()))?;
    for (i, row) in rows.iter().enumerate() {
        if let Some(k) = row.iter().position(|v| !v.is_finite()) {
            return Err(LabError::NonFinite(format!("{}: row {i}, column {}", path.display(), header[k])));
        }
        w.write_record(row.iter().map(|&v| fmt_num(v))).map_err(|e| LabError::Csv(e.to_string()))?;
    }
    w.flush().map_err(io_err(path))
}

/// Shortest round-trip text; exponent form outside `[1e-4, 1e15)`.
fn fmt_num(v: f64) -> String {
    if v != 0.0 && !(1e-4..1e15).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

pub fn write_mesh_json(path: &Path, mesh: &StripMesh) -> Result<(), LabError> {
    fs::write(path, finite_json(&mesh.to_json())?).map_err(io_err(path))
}

pub fn read_mesh_json(path: &Path) -> Result<MeshJson, LabError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| LabError::Parse(e.to_string()))
}

/// Refuses a directory holding an earlier run unless `force`, in which case
/// only the known artifacts are removed.
fn prepare_dir(out_dir: &Path, force: bool) -> Result<(), LabError> {
    if out_dir.exists() {
        let existing: Vec<PathBuf> =
            ARTIFACTS.iter().map(|f| out_dir.join(f)).filter(|p| p.exists()).collect();
        if !existing.is_empty() {
            if !force {
                return Err(LabError::OutputExists(out_dir.to_path_buf()));
            }
            for p in existing {
                fs::remove_file(&p).map_err(io_err(&p))?;
            }
        }
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))
}

pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path) -> Result<RunManifest, LabError> {
    run_stage(config, out_dir, Stage::Run, &RunOptions::default())
}

/// Runs `stage`, always leaving `scenario.toml`, `report.json` and
/// `manifest.json` behind. Errors are listed in the report and returned.
pub fn run_stage(
    config: &ScenarioConfig,
    out_dir: &Path,
    stage: Stage,
    opts: &RunOptions,
) -> Result<RunManifest, LabError> {
    let mut config = config.clone();
    if let Some(seed) = opts.seed {
        config.diagnostics.seed = seed;
    }
    config.validate()?;
    let text = config.text()?;
    let hash = super::config::scenario_hash(&text)?;
    prepare_dir(out_dir, opts.force)?;
    let scenario_path = out_dir.join("scenario.toml");
    fs::write(&scenario_path, &text).map_err(io_err(&scenario_path))?;
    let mut run = Run::new(&config, out_dir, stage, hash);
    let result = run.execute(stage);
    if let Err(e) = &result {
        run.report.errors.push(e.to_string());
    }
    let emitted = run.emit_report();
    let manifest = run.manifest(stage);
    let manifest_path = out_dir.join("manifest.json");
    fs::write(&manifest_path, finite_json(&manifest)?).map_err(io_err(&manifest_path))?;
    result?;
    emitted?;
    if !run.report.errors.is_empty() {
        return Err(LabError::RunFailed(run.report.errors.clone()));
    }
    Ok(manifest)
}

struct Run<'a> {
    config: &'a ScenarioConfig,
    out_dir: &'a Path,
    report: RunReport,
    files: Vec<String>,
}

struct Solved {
    stack: InterfaceStack,
    coeff: Arc<PiecewiseCoefficients>,
    forcing: Box<dyn ForcingModel>,
    exact: Option<Manufactured>,
    solution: FieldSolution,
}

impl<'a> Run<'a> {
    fn new(config: &'a ScenarioConfig, out_dir: &'a Path, stage: Stage, hash: String) -> Self {
        let provenance = Provenance {
            scenario_hash: hash.clone(),
            seed: config.diagnostics.seed,
            nx: config.mesh.nx,
            ny: config.mesh.ny,
            tool_version: TOOL_VERSION.into(),
        };
        let report = RunReport {
            scenario: ScenarioSummary { name: config.name.clone(), mode: config.mode, hash, stage },
            geometry: None,
            mesh: None,
            solver: None,
            flux: None,
            error_norms: None,
            convergence: None,
            regularity: RegularityReport { provenance, ..Default::default() },
            errors: Vec::new(),
            timing: BTreeMap::new(),
        };
        Self { config, out_dir, report, files: vec!["scenario.toml".into()] }
    }

    fn timed<T>(&mut self, phase: &str, f: impl FnOnce(&mut Self) -> Result<T, LabError>) -> Result<T, LabError> {
        info!("{phase}");
        let start = Instant::now();
        let out = f(self);
        self.report.timing.insert(phase.into(), start.elapsed().as_secs_f64());
        out
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.into());
        self.out_dir.join(name)
    }

    fn execute(&mut self, stage: Stage) -> Result<(), LabError> {
        match stage {
            Stage::VerifyGeometry => self.timed("geometry", Self::geometry),
            Stage::Mesh => self.timed("mesh", Self::mesh).map(|_| ()),
            Stage::Solve => self.solve_all().map(|_| ()),
            Stage::Diagnose => {
                let solved = self.solve_all()?;
                self.timed("diagnostics", |r| r.diagnose(&solved))
            }
            Stage::Sweep => self.timed("sweep", Self::sweep),
            Stage::Run => {
                let solved = self.solve_all()?;
                self.timed("diagnostics", |r| r.diagnose(&solved))?;
                if self.config.sweep.is_some() {
                    self.timed("sweep", Self::sweep)?;
                }
                Ok(())
            }
            Stage::Convergence { refine } => self.timed("convergence", |r| r.convergence(refine)),
        }
    }

    fn geometry(&mut self) -> Result<(), LabError> {
        let c = self.config;
        let opts = SelftestOptions {
            samples: c.diagnostics.geometry_samples,
            seed: c.diagnostics.seed,
            ..Default::default()
        };
        let report = match c.interfaces.preset {
            Some(_) => {
                let eps_list = match &c.sweep {
                    Some(s) => s.values.clone(),
                    None => vec![c.interfaces.eps.unwrap_or_default()],
                };
                let family = |eps: f64| {
                    let mut cc = c.clone();
                    cc.interfaces.eps = Some(eps);
                    cc.stack().map_err(|e| match e {
                        LabError::Geometry(g) => g,
                        other => unreachable!("preset stacks only fail in geometry: {other}"),
                    })
                };
                geometry_selftest(&family, &eps_list, &opts)?
            }
            None => {
                let stack = c.stack()?;
                geometry_selftest(&|_| Ok(stack.clone()), &[0.0], &opts)?
            }
        };
        let path = self.path("geometry.json");
        fs::write(&path, finite_json(&report)?).map_err(io_err(&path))?;
        self.report.geometry = Some(report);
        Ok(())
    }

    fn mesh(&mut self) -> Result<Arc<StripMesh>, LabError> {
        let stack = self.config.stack()?;
        let mesh = build_strip_mesh(&stack, &self.config.mesh_params())?;
        self.report.mesh = Some(MeshSummary {
            vertices: mesh.num_vertices(),
            triangles: mesh.num_triangles(),
            interface_edges: mesh.interface_edges.len(),
            quality: mesh_quality(&mesh),
            min_strip_gap: mesh.min_strip_gap(),
        });
        let path = self.path("mesh.json");
        write_mesh_json(&path, &mesh)?;
        Ok(Arc::new(mesh))
    }

    fn solve_all(&mut self) -> Result<Solved, LabError> {
        let mesh = self.timed("mesh", Self::mesh)?;
        self.timed("solve", |r| r.solve(mesh))
    }

    fn solve_on(&self, mesh: Arc<StripMesh>, steps_scale: usize) -> Result<Solved, LabError> {
        let c = self.config;
        let stack = c.stack()?;
        let coeff = Arc::new(c.coefficients()?);
        let dyn_coeff: Arc<dyn CoefficientModel> = coeff.clone();
        let forcing = c.forcing(dyn_coeff.clone())?;
        let exact = c.manufactured(dyn_coeff)?;
        let params = c.solve_params();
        let solution = match (c.mode, &c.time) {
            (Mode::Parabolic, Some(grid)) => {
                let grid = crate::solver::TimeGrid { steps: grid.steps * steps_scale, ..*grid };
                solve_parabolic_on(mesh, coeff.as_ref(), forcing.as_ref(), &grid, &params)?
            }
            _ => solve_elliptic_on(mesh, coeff.as_ref(), forcing.as_ref(), &params)?,
        };
        Ok(Solved { stack, coeff, forcing, exact, solution })
    }

    fn solve(&mut self, mesh: Arc<StripMesh>) -> Result<Solved, LabError> {
        let solved = self.solve_on(mesh, 1)?;
        let sol = &solved.solution;
        self.report.solver = Some(SolverSummary { tol: self.config.solver.tol, meta: sol.meta });
        self.report.flux = Some(flux_summary(&solved));
        self.report.error_norms = solved_errors(&solved);
        let mut rows = Vec::with_capacity(sol.times.len() * sol.mesh.num_vertices());
        for (slab, &t) in sol.times.iter().enumerate() {
            for (v, x) in sol.mesh.vertices.iter().enumerate() {
                rows.push(vec![v as f64, x[0], x[1], t, sol.values[slab][v]]);
            }
        }
        let path = self.path("solution.csv");
        write_csv(&path, &header(&["node", "x", "y", "t", "u"]), &rows)?;
        Ok(solved)
    }

    fn diagnose(&mut self, solved: &Solved) -> Result<(), LabError> {
        let c = self.config;
        let d = &c.diagnostics;
        let sol = &solved.solution;
        let norms = piecewise_norm_table(sol, &solved.stack, d.s_level, d.mu_prime(), d.delta, &d.norm_options())?;
        self.report.regularity.norms = Some(norms);
        self.report.regularity.flux_jump_sup = self.report.flux.as_ref().map(|f| f.jump_sup);
        let rec = RecoveredGradient::new(sol, d.radius);
        let fields = DirectionalFields {
            stack: &solved.stack,
            coeff: solved.coeff.as_ref(),
            forcing: solved.forcing.as_ref(),
            grad: &rec,
        };
        let t0 = sol.times[sol.last()];
        let probes = match &d.probes {
            Some(p) => p.clone(),
            None => (1..=solved.stack.m()).map(|j| [0.0, solved.stack.height(j, &[0.0])]).collect(),
        };
        let parabolic = c.mode == Mode::Parabolic;
        let mut rows = Vec::new();
        for x in probes {
            let z0 = ParabolicPoint::new(t0, x);
            let mut records = Vec::new();
            for &r in &d.radii {
                let phi = campanato_phi(&|z| fields.pair(z), &z0, r, d.phi_budget, parabolic)?;
                rows.push(vec![z0.t, z0.x[0], z0.x[1], r, phi]);
                records.push((r, phi));
            }
            let fit = decay_fit(&records).ok();
            self.report.regularity.decay.push(DecayRecord { z0, records, fit });
        }
        let path = self.path("decay.csv");
        write_csv(&path, &header(&["z0_t", "z0_x", "z0_y", "r", "phi"]), &rows)?;
        self.report.regularity.notes = vec![
            "suprema and seminorms are sampled lower bounds".into(),
            "pass/fail thresholds on these quantities are empirical".into(),
        ];
        Ok(())
    }

    fn sweep(&mut self) -> Result<(), LabError> {
        let spec = self
            .config
            .sweep_spec()
            .ok_or_else(|| LabError::Validation { key: "sweep".into(), reason: "no [sweep] table".into() })?;
        let table = gap_sweep(&spec);
        let regions = neck_regions(self.config);
        for r in &table.rows {
            if let Some(e) = &r.error {
                self.report.errors.push(format!("sweep eps = {}: {e}", r.eps));
            }
        }
        let path = self.path("sweep.csv");
        write_csv(&path, &sweep_header(regions), &sweep_rows(&table, regions))?;
        self.report.regularity.sweep = Some(table);
        Ok(())
    }

    fn convergence(&mut self, refine: usize) -> Result<(), LabError> {
        let c = self.config;
        let stack = c.stack()?;
        let mut levels = Vec::new();
        for k in 0..=refine {
            let mut params = c.mesh_params();
            params.nx <<= k;
            params.ny <<= k;
            let mesh = Arc::new(build_strip_mesh(&stack, &params)?);
            let solved = self.solve_on(mesh, 1 << k)?;
            levels.push(ConvergenceLevel {
                nx: params.nx,
                ny: params.ny,
                h: 2.0 / params.nx as f64,
                errors: solved_errors(&solved),
                flux_jump_sup: flux_summary(&solved).jump_sup,
                residual: solved.solution.meta.residual,
            });
        }
        let rate = |f: &dyn Fn(&ConvergenceLevel) -> Option<f64>| {
            let pts: Vec<(f64, f64)> = levels.iter().filter_map(|l| f(l).map(|v| (l.h, v))).collect();
            fitted_rate(&pts)
        };
        let rates = ConvergenceRates {
            l2: rate(&|l| l.errors.map(|e| e.l2)),
            h1: rate(&|l| l.errors.map(|e| e.h1)),
            energy: rate(&|l| l.errors.map(|e| e.energy)),
            flux_jump: rate(&|l| Some(l.flux_jump_sup)),
        };
        let with_errors = levels.iter().all(|l| l.errors.is_some());
        let mut cols = vec!["level", "nx", "ny", "h"];
        if with_errors {
            cols.extend(["l2", "h1", "energy"]);
        }
        cols.push("flux_jump_sup");
        let rows: Vec<Vec<f64>> = levels
            .iter()
            .enumerate()
            .map(|(k, l)| {
                let mut row = vec![k as f64, l.nx as f64, l.ny as f64, l.h];
                if let Some(e) = l.errors.filter(|_| with_errors) {
                    row.extend([e.l2, e.h1, e.energy]);
                }
                row.push(l.flux_jump_sup);
                row
            })
            .collect();
        let path = self.path("convergence.csv");
        write_csv(&path, &header(&cols), &rows)?;
        self.report.convergence = Some(ConvergenceTable { levels, rates });
        Ok(())
    }

    fn emit_report(&mut self) -> Result<(), LabError> {
        let path = self.path("report.json");
        match finite_json(&self.report) {
            Ok(text) => fs::write(&path, text).map_err(io_err(&path)),
            Err(e) => {
                // keep a readable record of the failure without the offending values
                let bare = RunReport {
                    scenario: self.report.scenario.clone(),
                    geometry: None,
                    mesh: None,
                    solver: None,
                    flux: None,
                    error_norms: None,
                    convergence: None,
                    regularity: RegularityReport {
                        provenance: self.report.regularity.provenance.clone(),
                        ..Default::default()
                    },
                    errors: self.report.errors.iter().cloned().chain([e.to_string()]).collect(),
                    timing: self.report.timing.clone(),
                };
                let text = finite_json(&bare)?;
                fs::write(&path, text).map_err(io_err(&path))?;
                Err(e)
            }
        }
    }

    fn manifest(&self, stage: Stage) -> RunManifest {
        RunManifest {
            scenario_hash: self.report.scenario.hash.clone(),
            tool_version: TOOL_VERSION.into(),
            seed: self.config.diagnostics.seed,
            out_dir: self.out_dir.to_path_buf(),
            stage,
            timings: self.report.timing.clone(),
            files: self.files.iter().cloned().chain(["manifest.json".to_string()]).collect(),
        }
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// The sweep always runs on the neck-layers family.
fn neck_regions(config: &ScenarioConfig) -> usize {
    config
        .sweep_spec()
        .and_then(|s| neck_layers(s.eps[0], s.width).ok())
        .map_or(5, |s| s.regions())
}

fn sweep_header(regions: usize) -> Vec<String> {
    let mut h = header(&["eps", "a0", "sup_Du"]);
    h.extend((1..=regions).map(|j| format!("sup_D2u_region{j}")));
    h.extend(header(&["seminorm_Du", "phi_exponent"]));
    h
}

/// One row per successful gap; failed gaps appear only in the report.
fn sweep_rows(table: &SweepTable, regions: usize) -> Vec<Vec<f64>> {
    table
        .rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| {
            let mut row = vec![r.eps, r.a0, r.sup_du];
            row.extend((0..regions).map(|j| r.sup_d2u.get(j).copied().unwrap_or(0.0)));
            row.extend([r.seminorm_du, r.phi_exponent]);
            row
        })
        .collect()
}

fn flux_summary(solved: &Solved) -> FluxSummary {
    let sol = &solved.solution;
    let report = interface_flux_jump(sol, sol.last(), &solved.stack, solved.coeff.as_ref(), solved.forcing.as_ref());
    let interfaces = (1..=solved.stack.m())
        .map(|j| {
            let edges: Vec<_> = report.edges.iter().filter(|e| e.interface == j).collect();
            let sides: Vec<f64> = edges.iter().map(|e| 0.5 * (e.lower + e.upper)).collect();
            let (mut min, mut max) = (0.0, 0.0);
            if let Some(&first) = sides.first() {
                (min, max) = sides.iter().fold((first, first), |(a, b), &v| (a.min(v), b.max(v)));
            }
            InterfaceFlux {
                interface: j,
                mean: sides.iter().sum::<f64>() / sides.len().max(1) as f64,
                min,
                max,
                jump_sup: edges.iter().map(|e| e.jump.abs()).fold(0.0, f64::max),
            }
        })
        .collect();
    FluxSummary { interfaces, jump_sup: report.sup }
}

fn solved_errors(solved: &Solved) -> Option<ErrorNorms> {
    let man = solved.exact.as_ref()?;
    let sol = &solved.solution;
    let t = sol.times[sol.last()];
    let exact = |j: usize, x: [f64; 2]| {
        let u = man.exact(j, t, x);
        (u.value, u.grad)
    };
    Some(error_norms(&sol.mesh, &sol.values[sol.last()], solved.coeff.as_ref(), t, &exact))
}

/// Least-squares log-log slope, or the two-point slope for two levels.
pub fn fitted_rate(pts: &[(f64, f64)]) -> Option<f64> {
    match pts.len() {
        0 | 1 => None,
        2 => {
            let ((h0, e0), (h1, e1)) = (pts[0], pts[1]);
            let s = (e1 / e0).ln() / (h1 / h0).ln();
            s.is_finite().then_some(s)
        }
        _ => decay_fit(pts).ok().map(|f| f.slope),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::parse_scenario;

    #[test]
    fn null_anywhere_is_rejected() {
        #[derive(Serialize)]
        struct Bad {
            a: Vec<f64>,
        }
        let err = finite_json(&Bad { a: vec![1.0, f64::NAN] }).unwrap_err();
        assert!(matches!(err, LabError::NonFinite(ref p) if p == "$.a[1]"), "{err}");
        assert!(finite_json(&Bad { a: vec![1.0] }).is_ok());
    }

    #[test]
    fn csv_refuses_non_finite_cells() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        assert!(matches!(
            write_csv(&p, &header(&["a", "b"]), &[vec![1.0, f64::INFINITY]]),
            Err(LabError::NonFinite(_))
        ));
        write_csv(&p, &header(&["a", "b"]), &[]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a,b\n");
    }

    #[test]
    fn mesh_json_round_trips_exactly() {
        let c = parse_scenario(
            "mode = \"elliptic\"\n[interfaces]\nshapes = [{ kind = \"cosine\", amp = 0.13, omega = 2.7, phase = 0.1 }]\n[mesh]\nnx = 12\nny = 3\n",
        )
        .unwrap();
        let mesh = build_strip_mesh(&c.stack().unwrap(), &c.mesh_params()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mesh.json");
        write_mesh_json(&p, &mesh).unwrap();
        assert_eq!(read_mesh_json(&p).unwrap(), mesh.to_json());
    }

    #[test]
    fn csv_numbers_round_trip() {
        for v in [0.0, 1.0, -2.5e-15, 3.0e20, 0.1 + 0.2, 12345.678] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_num(2.5e-15), "2.5e-15");
        assert_eq!(fmt_num(7.0), "7");
    }

    #[test]
    fn two_point_rate() {
        assert!((fitted_rate(&[(0.1, 0.01), (0.05, 0.0025)]).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fitted_rate(&[(0.1, 1.0)]), None);
    }
}
