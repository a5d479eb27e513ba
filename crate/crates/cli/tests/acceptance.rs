//! Acceptance checks. Run with `cargo test -p optipromp-cli --test acceptance`;
//! prints one PASS/FAIL line per criterion and fails if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::*;
use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};
use optipromp::costs::{constraint_penalties, f_obs, f_push, f_vel, obstacle_cost_pointwise, CostContext, CostWeights, Objective};
use optipromp::demos::{synthesize_demos, SyntheticDemos};
use optipromp::kinematics::BodyPointKind;
use optipromp::metrics::push_measure;
use optipromp::optimizer::StageTrace;
use optipromp::promp::{learn_promp, BasisConfig, ViaPoint};
use optipromp::scenario::{RunOutcome, Scenario};
use optipromp::scene::{ClassFilter, PushableObject, Scene, Shape};
use optipromp::JointTrajectory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run_scenario(file: &str) -> Result<(Scenario, RunOutcome, Duration), String> {
    let started = Instant::now();
    let s = Scenario::load(&scenarios().join(file)).map_err(|e| e.to_string())?;
    let out = s.run(s.seed).map_err(|e| e.to_string())?;
    Ok((s, out, started.elapsed()))
}

fn monotone(trace: &StageTrace) -> bool {
    trace.entries.windows(2).all(|w| w[1].objective <= w[0].objective)
}

fn gradient_correctness() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let chains = [panda(), scara()];
    let (mut cases, mut worst) = (0, 0.0f64);
    let mut record = |name: &str, g: &DMatrix<f64>, fd: &DMatrix<f64>| -> Result<(), String> {
        let e = relative_error(g, fd);
        worst = worst.max(e);
        ensure(e < 1e-4, || format!("{name}: relative error {e:e}"))
    };
    while cases < 20 {
        let chain = &chains[cases % 2];
        let steps = rng.random_range(8..14);
        let traj = random_trajectory(chain, steps, &mut rng);
        let t1 = rng.random_range(1..steps / 2);
        let scene = scene_around(chain, &traj, t1, &mut rng);
        let mut ctx = CostContext::new(chain, &scene, t1);
        ctx.weights = CostWeights { alpha1: 1.0, alpha2: 1.0, alpha3: 1.0, alpha4: 0.01 };
        // Redirected drift steps are deliberately not a derivative.
        if constraint_penalties(&ctx, &traj).unwrap().0.redirected_steps > 0 {
            continue;
        }
        cases += 1;
        let h = 1e-6;
        for (kind, filter, name) in [
            (BodyPointKind::FullWithEE, ClassFilter::STATIC, "f_obs_s"),
            (BodyPointKind::BodyMinusLastLink, ClassFilter::DYNAMIC, "f_obs_d"),
        ] {
            let set = chain.body_point_set(kind);
            let g = f_obs(&traj, chain, &scene, &set, filter).unwrap().1;
            record(name, &g, &fd_gradient(&traj, h, |t| f_obs(t, chain, &scene, &set, filter).unwrap().0))?;
        }
        let axes = Vector3::new(1.0, 1.0, 1.0);
        let g = f_push(&traj, chain, &scene, t1, &axes).unwrap().1;
        record("f_push", &g, &fd_gradient(&traj, h, |t| f_push(t, chain, &scene, t1, &axes).unwrap().0))?;
        let mut g = DMatrix::zeros(steps, chain.dof());
        f_vel(&traj, Some(&mut g));
        record("f_vel", &g, &fd_gradient(&traj, h, |t| f_vel(t, None)))?;
        let g = constraint_penalties(&ctx, &traj).unwrap().1;
        let penalties = |t: &JointTrajectory| {
            let d = constraint_penalties(&ctx, t).unwrap().0;
            d.drift + d.crossing + d.smoothness
        };
        record("penalties", &g, &fd_gradient(&traj, h, penalties))?;
        let g = ctx.evaluate(&traj, Objective::Combined, true).unwrap().2.unwrap();
        record("combined", &g, &fd_gradient(&traj, h, |t| ctx.evaluate(t, Objective::Combined, false).unwrap().0.total))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:.1?}"))?;
    Ok(format!("20 cases, worst relative error {worst:.1e}, {elapsed:.1?}"))
}

fn obstacle_cost_branches() -> Outcome {
    let eps = 0.01;
    let c = |d: f64| obstacle_cost_pointwise(d, eps);
    ensure((c(0.0) - eps / 2.0).abs() <= 1e-12, || format!("c(0) = {}", c(0.0)))?;
    ensure(c(eps).abs() <= 1e-12, || format!("c(eps) = {}", c(eps)))?;
    ensure((c(-0.02) - 0.025).abs() <= 1e-12, || format!("c(-0.02) = {}", c(-0.02)))?;
    let delta = 1e-9;
    for d in [0.0, eps] {
        let jump = (c(d + delta) - c(d - delta)).abs();
        ensure(jump <= 2.0 * delta + 1e-12, || format!("jump {jump:e} at {d}"))?;
    }
    Ok("c(0)=0.005, c(0.01)=0, c(-0.02)=0.025, continuous at both branch points".into())
}

fn promp_conditioning() -> Outcome {
    let steps = 50;
    let start = DVector::from_vec(vec![0.0, 0.3, -0.2]);
    let end = DVector::from_vec(vec![1.0, -0.4, 0.5]);
    let demos = synthesize_demos(&start, &end, SyntheticDemos { count: 12, steps, jitter: 0.05, bump: 0.1, seed: 7 }).unwrap();
    let model = learn_promp(&demos, BasisConfig::new(10, 4.0, steps).unwrap(), 1e-6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let vias: Vec<ViaPoint> = [0, 16, 33, 49]
        .iter()
        .map(|&t| ViaPoint::new(t, model.mean_at(t).unwrap().map(|v| v + rng.random_range(-0.1..0.1)), 0.0))
        .collect();
    let post = model.condition_all(&vias).unwrap();
    let mean = post.mean_trajectory();
    let mut worst = 0.0f64;
    for v in &vias {
        let r = (mean.row(v.t_index) - &v.value).amax();
        worst = worst.max(r);
        ensure(r < 1e-3, || format!("residual {r:e} at t = {}", v.t_index))?;
    }
    let mut lowest = f64::INFINITY;
    for seq in 0..10 {
        let mut m = model.clone();
        for _ in 0..rng.random_range(3..10) {
            let q = DVector::from_fn(3, |_, _| rng.random_range(-1.5..1.5));
            let noise = if rng.random_bool(0.3) { 0.0 } else { 10f64.powf(rng.random_range(-8.0..0.0)) };
            m = m.condition(&ViaPoint::new(rng.random_range(0..steps), q, noise)).unwrap();
            for c in &m.cov {
                let e = SymmetricEigen::new(c.clone()).eigenvalues.min();
                lowest = lowest.min(e / c.amax());
                ensure(e >= -1e-9 * c.amax(), || format!("sequence {seq}: eigenvalue {e:e}"))?;
            }
        }
    }
    Ok(format!("max via residual {worst:.1e}; smallest relative eigenvalue {lowest:.1e}"))
}

fn stage(out: &RunOutcome, i: usize) -> Result<&StageTrace, String> {
    out.report.as_ref().and_then(|r| r.stages.get(i)).ok_or_else(|| format!("missing stage {i}"))
}

fn cluster_replica() -> Outcome {
    let (s, out, took) = run_scenario("scenario3.toml")?;
    let spheres = s.scene.statics.iter().filter(|o| matches!(o.shape, Shape::Sphere { radius, .. } if radius == 0.10)).count();
    ensure(s.chain.dof() == 7 && spheres == 2, || "scene is not a 7-dof arm between two 0.10 m clusters".into())?;
    let (push, collide) = (stage(&out, 0)?, stage(&out, 1)?);
    ensure(push.spec.objective == Objective::Push && push.spec.max_iters == 10, || "first stage is not Push(10)".into())?;
    ensure(collide.spec.objective == Objective::Collision && collide.spec.max_iters == 15, || "second stage is not Collision(15)".into())?;
    ensure(monotone(push) && monotone(collide), || "a stage trace increases".into())?;
    let ratio = push.first().costs.f_push / push.last().costs.f_push;
    ensure(ratio >= 5.0, || format!("pushing cost reduced only {ratio:.2}x"))?;
    let m = &out.metrics;
    let m_c = m.m_c.ok_or("no M_c")?;
    ensure(m_c > 0.1, || format!("M_c = {m_c}"))?;
    let (p1, p2) = (m.pushes[0].m_p, m.pushes[1].m_p);
    ensure(p1 < 0.0 && p2 > 0.0, || format!("M_p = ({p1}, {p2})"))?;
    ensure(took < Duration::from_secs(120), || format!("took {took:.1?}"))?;
    Ok(format!("f_push {ratio:.1}x lower, M_c {m_c:.4}, M_p ({p1:.4}, {p2:.4}), {took:.1?}"))
}

fn table_replica() -> Outcome {
    let (s, out, took) = run_scenario("scenario4.toml")?;
    let depth_ok = s.scene.statics.iter().any(|o| matches!(o.shape, Shape::Box { half_extents, .. } if (2.0 * half_extents.z - 0.03).abs() < 1e-12));
    ensure(depth_ok, || "no 0.03 m deep table box".into())?;
    let (collide, push) = (stage(&out, 0)?, stage(&out, 1)?);
    ensure(collide.spec.objective == Objective::Collision && collide.spec.max_iters == 3, || "first stage is not Collision(3)".into())?;
    ensure(push.spec.objective == Objective::Push && push.spec.max_iters == 15, || "second stage is not Push(15)".into())?;
    ensure(monotone(collide), || "collision trace increases".into())?;
    let m_c = out.metrics.m_c.ok_or("no M_c")?;
    ensure(m_c > 0.03, || format!("M_c = {m_c}"))?;
    for k in 0..s.scene.pushables.len() {
        let signs: Vec<f64> = push
            .entries
            .iter()
            .map(|e| push_measure(&e.trajectory, &s.chain, &s.scene, k, s.config.t1).map(|p| p.m_p.signum()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        ensure(signs.iter().all(|x| *x == signs[0] && *x != 0.0), || format!("M_p(n{}) flips sign: {signs:?}", k + 1))?;
    }
    ensure(took < Duration::from_secs(120), || format!("took {took:.1?}"))?;
    Ok(format!(
        "M_c {m_c:.4}, collision trace {} entries, M_p sign fixed over {} push entries, {took:.1?}",
        collide.entries.len(),
        push.entries.len()
    ))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("optipromp-acceptance-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn cli(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_optipromp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn scara_failures() -> Outcome {
    let mut notes = Vec::new();
    for file in ["scenario1.toml", "scenario2.toml"] {
        let (_, out, _) = run_scenario(file)?;
        let m_c = out.metrics.m_c.ok_or("no M_c")?;
        ensure(m_c <= 0.0, || format!("{file}: M_c = {m_c}"))?;
        let dir = temp_dir(file);
        let path = scenarios().join(file);
        let status = cli(&["run", path.to_str().unwrap()], &dir).status.code();
        let _ = std::fs::remove_dir_all(&dir);
        ensure(status == Some(2), || format!("{file}: exit code {status:?}"))?;
        notes.push(format!("{file} M_c {m_c:.4} exit 2"));
    }
    Ok(notes.join(", "))
}

fn sdf_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    let origin = Vector3::zeros();
    for kind in ["sphere", "capsule", "box"] {
        for _ in 0..1000 {
            let shape = loop {
                let s = shape_near(&origin, &mut rng);
                if s_name(&s) == kind {
                    break s;
                }
            };
            let x = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            let d = shape.signed_distance(&x);
            ensure((d < 0.0) == shape.contains(&x), || format!("{kind}: sign {d} disagrees with containment at {x:?}"))?;
        }
        let shape = loop {
            let s = shape_near(&origin, &mut rng);
            if s_name(&s) == kind {
                break s;
            }
        };
        for _ in 0..1000 {
            let a = unit_vector(&mut rng) * rng.random_range(0.0..0.5);
            let b = unit_vector(&mut rng) * rng.random_range(0.0..0.5);
            let lhs = (shape.signed_distance(&a) - shape.signed_distance(&b)).abs();
            ensure(lhs <= (a - b).norm() * (1.0 + 1e-12), || format!("{kind}: Lipschitz violated"))?;
        }
    }
    Ok("1000 sign checks and 1000 Lipschitz pairs per primitive".into())
}

fn s_name(s: &Shape) -> &'static str {
    match s {
        Shape::Sphere { .. } => "sphere",
        Shape::Capsule { .. } => "capsule",
        Shape::Box { .. } => "box",
    }
}

fn stem_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1008);
    let mut hits = 0;
    for i in 0..50 {
        let mut scene = Scene::empty(Vector3::new(0.0, 0.0, 1.0), 0.02, 0.01);
        for _ in 0..rng.random_range(1..5) {
            let center = unit_vector(&mut rng) * rng.random_range(0.0..0.3);
            let anchor = center + unit_vector(&mut rng) * rng.random_range(0.05..0.3);
            scene.pushables.push(PushableObject { center, radius: 0.02, anchor, stem_radius: rng.random_range(0.003..0.02) });
        }
        let stems = scene.connections();
        let Shape::Capsule { p0, p1, radius } = stems[rng.random_range(0..stems.len())] else { unreachable!() };
        let through = p0 + (p1 - p0) * rng.random_range(0.0..1.0) + unit_vector(&mut rng) * rng.random_range(0.0..3.0 * radius);
        let dir = unit_vector(&mut rng);
        let (a, b) = (through - dir * 0.3, through + dir * 0.3);
        let oracle = stems
            .iter()
            .filter(|s| {
                let Shape::Capsule { p0, p1, radius } = s else { unreachable!() };
                (0..10_000).any(|k| {
                    let x = a + (b - a) * (k as f64 / 9_999.0);
                    let d = p1 - p0;
                    let t = ((x - p0).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
                    (x - (p0 + d * t)).norm() <= *radius
                })
            })
            .count();
        let got = scene.segment_stem_intersections(&a, &b).len();
        ensure(got == oracle, || format!("scene {i}: {got} intersections, oracle {oracle}"))?;
        hits += oracle;
    }
    Ok(format!("50 scenes agree exactly ({hits} stem hits in total)"))
}

fn determinism() -> Outcome {
    let files: Vec<PathBuf> = (1..=4).map(|k| scenarios().join(format!("scenario{k}.toml"))).collect();
    let args: Vec<&str> = std::iter::once("run").chain(files.iter().map(|p| p.to_str().unwrap())).collect();
    let (a, b) = (temp_dir("det-a"), temp_dir("det-b"));
    let mut args_b = args.clone();
    args_b.extend(["--jobs", "4"]);
    cli(&args, &a);
    cli(&args_b, &b);
    let mut compared = 0;
    for f in &files {
        let name = Scenario::load(f).map_err(|e| e.to_string())?.name;
        for csv in ["trajectory.csv", "costs.csv", "metrics.csv"] {
            let x = std::fs::read(a.join(&name).join(csv)).map_err(|e| format!("{name}/{csv}: {e}"))?;
            let y = std::fs::read(b.join(&name).join(csv)).map_err(|e| format!("{name}/{csv}: {e}"))?;
            ensure(x == y, || format!("{name}/{csv} differs between runs"))?;
            compared += 1;
        }
    }
    let _ = std::fs::remove_dir_all(&a);
    let _ = std::fs::remove_dir_all(&b);
    Ok(format!("{compared} CSV files identical across a serial and a 4-job run"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient correctness", gradient_correctness),
        ("obstacle cost branch values", obstacle_cost_branches),
        ("primitive conditioning", promp_conditioning),
        ("cluster scene, push then collide", cluster_replica),
        ("table scene, collide then push", table_replica),
        ("SCARA primitive-only runs collide", scara_failures),
        ("SDF oracle equivalence", sdf_oracle),
        ("stem intersection oracle", stem_oracle),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
