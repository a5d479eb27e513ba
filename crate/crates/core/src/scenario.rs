//! Scenario files: scene, chain, primitive, recipe and thresholds in one place.
//!
//! ```toml
//! name = "clusters"
//! seed = 7
//! chain = "builtin:panda7"        # or a path to a chain file, relative to this file
//! output = "out/clusters"         # optional, relative to this file
//!
//! [scene]                         # scene schema, see `SceneFile`
//! epsilon_s = 0.01
//! [scene.goal]
//! position = [0.55, 0.0, 0.55]
//! r_gripper = 0.02
//!
//! [promp]
//! psi = 5
//! h = 4.0
//! steps = 60
//! ridge = 1e-6                    # optional
//! demos = ["demos/a.csv"]         # optional; otherwise [promp.synthetic] is used
//!
//! [promp.synthetic]
//! count = 12
//! start = [0.0, -0.8, 0.0, -2.4, 0.0, 1.6, 0.8]
//! end_position = [0.55, 0.0, 0.55]   # or `end` in joint space
//! jitter = 0.05
//! bump = 0.15
//!
//! [[promp.via]]
//! role = "initial"                # initial | camera | pushable | target | other
//! t = 0
//! joints = [0.0, -0.8, 0.0, -2.4, 0.0, 1.6, 0.8]   # or `position = [x, y, z]`
//! noise = 0.0                     # optional
//! hold = false                    # optional: keep this waypoint fixed while optimizing
//!
//! [weights]                       # all optional
//! alpha = [1.0, 1.0, 1.0, 0.0]
//! drift = 1.0
//! crossing = 10.0
//! smoothness = 1.0
//! delta_tol = 0.005
//! push_axes = [1.0, 1.0, 1.0]
//! literal_velocity = false
//! duration = 1.0
//!
//! [[recipe]]                      # may be empty: primitive only
//! objective = "push"              # push | collision | velocity | combined
//! method = "trust-region"         # trust-region | gradient-descent | bounded-quasi-newton
//! iterations = 10
//! radius = 0.05                   # optional: gamma, tolerance, radius, history, pin_final
//! min_clearance = 0.04            # optional: hard clearance to static obstacles (m)
//!
//! [thresholds]
//! m_c_min = 0.1
//! push_sign = true
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Vector3};
use serde::Deserialize;

use crate::costs::{CostWeights, Objective, PenaltyConfig};
use crate::demos::{load_demo_csv, synthesize_demos, SyntheticDemos};
use crate::error::{Error, Result};
use crate::kinematics::{ik_position, ChainFile, IkConfig, KinematicChain};
use crate::metrics::{evaluate_scenario, MetricsReport, Thresholds};
use crate::optimizer::{
    initialize, run_pipeline, Initialization, Method, OptimizationReport, PipelineConfig, StageSpec, ViaSpec,
    ViaTarget,
};
use crate::promp::{learn_promp, BasisConfig, DEFAULT_RIDGE};
use crate::scene::{Scene, SceneFile};
use crate::trajectory::JointTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViaRole {
    Initial,
    Camera,
    Pushable,
    Target,
    Other,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViaEntry {
    name: Option<String>,
    role: ViaRole,
    t: usize,
    joints: Option<Vec<f64>>,
    position: Option<[f64; 3]>,
    #[serde(default)]
    noise: f64,
    #[serde(default)]
    hold: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SyntheticEntry {
    count: usize,
    start: Vec<f64>,
    end: Option<Vec<f64>>,
    end_position: Option<[f64; 3]>,
    #[serde(default)]
    jitter: f64,
    #[serde(default)]
    bump: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrompEntry {
    psi: usize,
    h: f64,
    steps: usize,
    ridge: Option<f64>,
    demos: Option<Vec<PathBuf>>,
    synthetic: Option<SyntheticEntry>,
    #[serde(default)]
    via: Vec<ViaEntry>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsEntry {
    alpha: Option<[f64; 4]>,
    drift: Option<f64>,
    crossing: Option<f64>,
    smoothness: Option<f64>,
    delta_tol: Option<f64>,
    push_axes: Option<[f64; 3]>,
    #[serde(default)]
    literal_velocity: bool,
    duration: Option<f64>,
    t1: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ObjectiveEntry {
    Push,
    Collision,
    Velocity,
    Combined,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum MethodEntry {
    GradientDescent,
    #[serde(alias = "lbfgsb")]
    BoundedQuasiNewton,
    TrustRegion,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageEntry {
    objective: ObjectiveEntry,
    method: MethodEntry,
    iterations: usize,
    gamma: Option<f64>,
    tolerance: Option<f64>,
    radius: Option<f64>,
    history: Option<usize>,
    pin_final: Option<bool>,
    min_clearance: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdsEntry {
    m_c_min: Option<f64>,
    #[serde(default)]
    push_sign: bool,
}

/// A scenario as written on disk, before references are resolved.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    name: String,
    #[serde(default)]
    seed: u64,
    chain: String,
    output: Option<PathBuf>,
    scene: SceneFile,
    promp: PrompEntry,
    #[serde(default)]
    weights: WeightsEntry,
    #[serde(default)]
    recipe: Vec<StageEntry>,
    #[serde(default)]
    thresholds: ThresholdsEntry,
}

/// Where demonstrations come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DemoSource {
    Files(Vec<PathBuf>),
    Synthetic { start: DVector<f64>, end: ViaTarget, count: usize, jitter: f64, bump: f64 },
}

/// A fully resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub chain: KinematicChain,
    pub scene: Scene,
    pub basis: BasisConfig,
    pub ridge: f64,
    pub demos: DemoSource,
    pub vias: Vec<ViaSpec>,
    pub roles: Vec<ViaRole>,
    pub recipe: Vec<StageSpec>,
    pub config: PipelineConfig,
    pub thresholds: Thresholds,
    pub output: Option<PathBuf>,
}

fn vec3(a: &[f64; 3]) -> Vector3<f64> {
    Vector3::from_row_slice(a)
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::from_toml(text, e))
    }

    fn resolve_chain(&self, base: &Path) -> Result<KinematicChain> {
        match self.chain.strip_prefix("builtin:") {
            Some(name) => ChainFile::builtin(name),
            None => ChainFile::load(&base.join(&self.chain)),
        }
    }

    /// Resolves references relative to `base` and checks every section.
    pub fn resolve(&self, base: &Path) -> Result<Scenario> {
        let chain = self.resolve_chain(base)?;
        let scene = self.scene.build()?;
        let p = &self.promp;
        let basis = BasisConfig::new(p.psi, p.h, p.steps)?;
        let ridge = p.ridge.unwrap_or(DEFAULT_RIDGE);
        let dof = chain.dof();
        let joints = |v: &[f64], what: &str| -> Result<DVector<f64>> {
            if v.len() != dof || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("{what} needs {dof} finite joint values, got {}", v.len())));
            }
            Ok(DVector::from_column_slice(v))
        };

        let demos = match (&p.demos, &p.synthetic) {
            (Some(files), None) => DemoSource::Files(files.iter().map(|f| base.join(f)).collect()),
            (None, Some(s)) => {
                let end = match (&s.end, &s.end_position) {
                    (Some(e), None) => ViaTarget::Joints(joints(e, "synthetic end")?),
                    (None, Some(pos)) => ViaTarget::Position(vec3(pos)),
                    _ => return Err(Error::Config("[promp.synthetic] needs exactly one of end, end_position".into())),
                };
                DemoSource::Synthetic { start: joints(&s.start, "synthetic start")?, end, count: s.count, jitter: s.jitter, bump: s.bump }
            }
            _ => return Err(Error::Config("[promp] needs exactly one of demos, [promp.synthetic]".into())),
        };

        let held: Vec<usize> = p.via.iter().filter(|v| v.hold).map(|v| v.t).collect();
        let mut vias = Vec::with_capacity(p.via.len());
        let mut roles = Vec::with_capacity(p.via.len());
        for (i, v) in p.via.iter().enumerate() {
            let name = v.name.clone().unwrap_or_else(|| format!("{:?}-{i}", v.role).to_lowercase());
            if v.t >= p.steps {
                return Err(Error::Config(format!("via-point '{name}' has t = {} outside 0..{}", v.t, p.steps)));
            }
            if !(v.noise >= 0.0 && v.noise.is_finite()) {
                return Err(Error::Config(format!("via-point '{name}' noise must be >= 0")));
            }
            let target = match (&v.joints, &v.position) {
                (Some(q), None) => ViaTarget::Joints(joints(q, &format!("via-point '{name}'"))?),
                (None, Some(pos)) if pos.iter().all(|x| x.is_finite()) => ViaTarget::Position(vec3(pos)),
                _ => return Err(Error::Config(format!("via-point '{name}' needs exactly one finite joints or position"))),
            };
            vias.push(ViaSpec { name, t_index: v.t, target, noise: v.noise });
            roles.push(v.role);
        }

        let w = &self.weights;
        let alpha = w.alpha.unwrap_or([1.0, 1.0, 1.0, 0.0]);
        let weights = CostWeights { alpha1: alpha[0], alpha2: alpha[1], alpha3: alpha[2], alpha4: alpha[3] };
        weights.validate()?;
        let defaults = PenaltyConfig::default();
        let drift = w.drift.unwrap_or(defaults.drift);
        let penalties = PenaltyConfig {
            drift,
            crossing: w.crossing.unwrap_or(10.0 * drift),
            smoothness: w.smoothness.unwrap_or(defaults.smoothness),
            delta_tol: w.delta_tol.unwrap_or(defaults.delta_tol),
            duration: w.duration.unwrap_or(defaults.duration),
        };
        penalties.validate()?;
        let camera = vias.iter().zip(&roles).find(|(_, r)| **r == ViaRole::Camera).map(|(v, _)| v.t_index);
        let t1 = match (w.t1, camera) {
            (Some(t), _) => t,
            (None, Some(t)) => t,
            (None, None) => 0,
        };
        if t1 >= p.steps {
            return Err(Error::Config(format!("t1 = {t1} outside 0..{}", p.steps)));
        }
        let push_axes = vec3(&w.push_axes.unwrap_or([1.0, 1.0, 1.0]));
        if push_axes.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::Config("push_axes must be finite and >= 0".into()));
        }

        let recipe = self
            .recipe
            .iter()
            .map(|s| {
                let objective = match s.objective {
                    ObjectiveEntry::Push => Objective::Push,
                    ObjectiveEntry::Collision => Objective::Collision,
                    ObjectiveEntry::Velocity => Objective::Velocity,
                    ObjectiveEntry::Combined => Objective::Combined,
                };
                let method = match s.method {
                    MethodEntry::GradientDescent => Method::GradientDescent,
                    MethodEntry::BoundedQuasiNewton => Method::BoundedQuasiNewton,
                    MethodEntry::TrustRegion => Method::TrustRegion,
                };
                let d = StageSpec::new(objective, method, s.iterations);
                let spec = StageSpec {
                    gamma: s.gamma.unwrap_or(d.gamma),
                    tolerance: s.tolerance.unwrap_or(d.tolerance),
                    radius: s.radius.unwrap_or(d.radius),
                    history: s.history.unwrap_or(d.history),
                    pin_final: s.pin_final,
                    min_clearance: s.min_clearance,
                    ..d
                };
                spec.validate()?;
                Ok(spec)
            })
            .collect::<Result<Vec<_>>>()?;

        if let Some(m) = self.thresholds.m_c_min {
            if !m.is_finite() {
                return Err(Error::Config("m_c_min must be finite".into()));
            }
            if scene.statics.is_empty() {
                return Err(Error::Config("m_c_min set but the scene has no static obstacles".into()));
            }
        }

        Ok(Scenario {
            name: self.name.clone(),
            seed: self.seed,
            chain,
            scene,
            basis,
            ridge,
            demos,
            vias,
            roles,
            recipe,
            config: PipelineConfig { t1, weights, penalties, push_axes, literal_velocity: w.literal_velocity, held, ik: IkConfig::default() },
            thresholds: Thresholds { m_c_min: self.thresholds.m_c_min, push_sign: self.thresholds.push_sign },
            output: self.output.as_ref().map(|o| base.join(o)),
        })
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario> {
        let text = read(path)?;
        ScenarioFile::parse(&text).map_err(|e| e.with_path(path))?.resolve(&base_dir(path))
    }

    /// Demonstrations for the primitive; synthetic ones depend on `seed`.
    pub fn demonstrations(&self, seed: u64) -> Result<Vec<JointTrajectory>> {
        match &self.demos {
            DemoSource::Files(files) => files
                .iter()
                .map(|f| {
                    let d = load_demo_csv(f)?;
                    if d.trajectory.dof() != self.chain.dof() {
                        return Err(Error::Shape(format!("{}: {} joints, chain has {}", f.display(), d.trajectory.dof(), self.chain.dof())));
                    }
                    Ok(d.trajectory)
                })
                .collect(),
            DemoSource::Synthetic { start, end, count, jitter, bump } => {
                let end = match end {
                    ViaTarget::Joints(q) => q.clone(),
                    ViaTarget::Position(p) => ik_position(&self.chain, p, start, &self.config.ik)
                        .map_err(|e| Error::Initialization { via: "synthetic end".into(), source: Box::new(e) })?,
                };
                let cfg = SyntheticDemos { count: *count, steps: self.basis.steps, jitter: *jitter, bump: *bump, seed };
                synthesize_demos(start, &end, cfg)
            }
        }
    }

    /// Executes the scenario. An empty recipe yields the primitive's trajectory only.
    pub fn run(&self, seed: u64) -> Result<RunOutcome> {
        let demos = self.demonstrations(seed)?;
        let model = learn_promp(&demos, self.basis, self.ridge)?;
        let (init, report) = if self.recipe.is_empty() {
            (initialize(&self.chain, &model, &self.vias, &self.config.ik)?, None)
        } else {
            let (i, r) = run_pipeline(&self.scene, &self.chain, &model, &self.vias, &self.recipe, &self.config)?;
            (i, Some(r))
        };
        let final_trajectory = report.as_ref().map_or_else(|| init.trajectory.clone(), |r| r.final_trajectory.clone());
        let metrics = evaluate_scenario(&final_trajectory, &self.chain, &self.scene, self.config.t1, self.thresholds)?;
        Ok(RunOutcome { seed, init, report, final_trajectory, metrics })
    }

    /// Problems that would stop a run, without running the optimizer.
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        for via in &self.vias {
            if let ViaTarget::Position(p) = &via.target {
                let dist = (p - self.chain.shoulder()).norm();
                if dist > self.chain.reach() {
                    out.push(format!("via-point '{}' is beyond reach ({dist:.3} m > {:.3} m)", via.name, self.chain.reach()));
                    continue;
                }
                let mut solved = false;
                let mut seeds = vec![self.chain.clamp(&DVector::zeros(self.chain.dof()))];
                if let DemoSource::Synthetic { start, .. } = &self.demos {
                    seeds.insert(0, start.clone());
                }
                for seed in &seeds {
                    if ik_position(&self.chain, p, seed, &self.config.ik).is_ok() {
                        solved = true;
                        break;
                    }
                }
                if !solved {
                    out.push(format!("via-point '{}' has no inverse-kinematics solution", via.name));
                }
            }
        }
        out
    }
}

/// Schema and sanity check of a scenario file; an empty list means valid.
pub fn validate_file(path: &Path) -> Vec<String> {
    let text = match read(path) {
        Ok(t) => t,
        Err(e) => return vec![e.to_string()],
    };
    let file = match ScenarioFile::parse(&text) {
        Ok(f) => f,
        Err(e) => return vec![e.with_path(path).to_string()],
    };
    match file.resolve(&base_dir(path)) {
        Ok(s) => s.issues(),
        Err(Error::Config(m)) => vec![m],
        Err(e) => vec![e.to_string()],
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub init: Initialization,
    /// `None` for primitive-only scenarios.
    pub report: Option<OptimizationReport>,
    pub final_trajectory: JointTrajectory,
    pub metrics: MetricsReport,
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Config(format!("csv write failed: {e}"))
}

/// `t, q1..qn, ee_x, ee_y, ee_z`.
pub fn write_trajectory_csv<W: Write>(out: W, chain: &KinematicChain, traj: &JointTrajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.dof()).map(|j| format!("q{j}")));
    header.extend(["ee_x", "ee_y", "ee_z"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for t in 0..traj.steps() {
        let q = traj.row(t);
        let ee = chain.fk(&q)?.position;
        let mut row = vec![t.to_string()];
        row.extend(q.iter().map(|v| v.to_string()));
        row.extend(ee.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

/// `stage, objective, iteration, f_obs_s, f_obs_d, f_push, f_vel, penalties, total`.
pub fn write_costs_csv<W: Write>(out: W, report: Option<&OptimizationReport>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stage", "objective", "iteration", "f_obs_s", "f_obs_d", "f_push", "f_vel", "penalties", "total"])
        .map_err(csv_err)?;
    for (k, stage) in report.map(|r| r.stages.as_slice()).unwrap_or_default().iter().enumerate() {
        for e in &stage.entries {
            let c = &e.costs;
            w.write_record([
                k.to_string(),
                stage.spec.objective.name().to_string(),
                e.iteration.to_string(),
                c.f_obs_s.to_string(),
                c.f_obs_d.to_string(),
                c.f_push.to_string(),
                c.f_vel.to_string(),
                c.penalties.to_string(),
                c.total.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}

/// `metric, object, value, reference, pass`.
pub fn write_metrics_csv<W: Write>(out: W, m: &MetricsReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "object", "value", "reference", "pass"]).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let flag = |v: Option<bool>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record(["M_c".into(), String::new(), opt(m.m_c), opt(m.thresholds.m_c_min), flag(m.collision_pass)])
        .map_err(csv_err)?;
    for (p, pass) in m.pushes.iter().zip(&m.push_pass) {
        w.write_record([
            "M_p".into(),
            p.object.to_string(),
            p.m_p.to_string(),
            p.stem_projection.to_string(),
            flag(*pass),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Writes `trajectory.csv`, `costs.csv` and `metrics.csv` into `dir`.
pub fn write_outputs(dir: &Path, scenario: &Scenario, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    write_trajectory_csv(create(&dir.join("trajectory.csv"))?, &scenario.chain, &outcome.final_trajectory)?;
    write_costs_csv(create(&dir.join("costs.csv"))?, outcome.report.as_ref())?;
    write_metrics_csv(create(&dir.join("metrics.csv"))?, &outcome.metrics)
}
