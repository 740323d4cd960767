//! Acceptance suite. Each test prints one PASS/FAIL line for its criterion
//! straight to stderr so the lines show up without `--nocapture`.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Isometry3, Matrix4, Quaternion, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tending_core::config::WorkbenchConfig;
use tending_core::eval::{
    compare_action_sets, free_teaching_shift, pressed_teaching_shift, run_execution_benchmark, BenchmarkSpec,
    ExecutionSetup, Group, Method,
};
use tending_core::rrrl::{train, ActionSet, PrioritizedReplay, QNetwork, SumTree, TrainOptions, Transition};
use tending_core::servo::{
    dvsp_from_dgp, fiducial_square, interaction_matrix, pick_and_place_script, FeatureSet, TeachSession,
};
use tending_core::transforms::{compute_dfp, inverse, relative_object_pose, rotation_distance, translation_distance};
use tending_core::workflow::{default_demo_script, insertion_task, object_rest_pose, teach, teach_rig};
use tending_core::Pose;

fn verdict(id: &str, what: &str, pass: bool, detail: String) {
    let line = format!("{id} {what}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{id} {what} failed: {detail}");
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let p = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let q = Quaternion::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    Pose::from_parts(p, UnitQuaternion::from_quaternion(q))
}

fn isometry(p: &Pose) -> Isometry3<f64> {
    let t = p.position();
    Isometry3::from_parts(Translation3::new(t.x, t.y, t.z), *p.orientation())
}

/// Wilson score interval at 95 %, written out from the formula.
fn wilson(k: usize, n: usize) -> (f64, f64) {
    let z = 1.959963984540054_f64;
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    (centre - half, centre + half)
}

#[test]
fn p1_transform_round_trip() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_t, mut worst_r, mut worst_m) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (c_x_e, dvsp, dgp) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
        let rp = relative_object_pose(&c_x_e, &dvsp, &dgp);
        let oracle: Matrix4<f64> = (isometry(&c_x_e) * isometry(&dvsp).inverse() * isometry(&dgp)).to_homogeneous();
        worst_m = worst_m.max((rp.to_homogeneous() - oracle).abs().max());
        let dfp = compute_dfp(&dvsp, &inverse(&c_x_e), &rp);
        worst_t = worst_t.max(translation_distance(&dfp, &dgp));
        worst_r = worst_r.max(rotation_distance(&dfp, &dgp));
    }
    let elapsed = start.elapsed();
    verdict(
        "P1",
        "transform round trip",
        worst_t < 1e-9 && worst_r < 1e-9 && worst_m < 1e-9 && elapsed < Duration::from_secs(1),
        format!("max {worst_t:.1e} m, {worst_r:.1e} rad, relative pose vs matrix {worst_m:.1e}, {elapsed:.2?}"),
    );
}

#[test]
fn p2_demonstration_reaches_the_moved_object() {
    let start = Instant::now();
    let config = WorkbenchConfig::default();
    let dgp = object_rest_pose(&config);
    let delta = Vector3::new(0.02, 0.0, 0.0);
    let script = pick_and_place_script(&dgp, &dgp.translated(&delta), 0.02, 2.0);
    let (_, traj) = teach(&config, &script, 0).unwrap();
    let clean_err = (traj.footer.dfp.position() - (dgp.position() + delta)).norm();

    let mut noisy = config.clone();
    noisy.teach.feature_noise_px = 0.5;
    let mut errs: Vec<f64> = (0..100)
        .map(|seed| {
            let (_, t) = teach(&noisy, &script, seed).unwrap();
            (t.footer.dfp.position() - (dgp.position() + delta)).norm()
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    let median = 0.5 * (errs[49] + errs[50]);
    let elapsed = start.elapsed();
    verdict(
        "P2",
        "demonstration teaching",
        clean_err <= 2e-4 && median <= 2e-3 && elapsed < Duration::from_secs(60),
        format!(
            "noise-free error {:.3} mm, noisy median {:.3} mm over 100 runs, {elapsed:.1?}",
            clean_err * 1e3,
            median * 1e3
        ),
    );
}

#[test]
fn p3_visual_servo_converges() {
    let config = WorkbenchConfig::default();
    let cam = config.camera.clone();

    // interaction matrix against differentiated projections
    let model = fiducial_square(config.teach.fiducial_side);
    let c_x_o = Pose::from_parts(Vector3::new(0.01, -0.02, 0.35), UnitQuaternion::from_euler_angles(0.1, -0.05, 0.3));
    let f = FeatureSet::render(&cam, &c_x_o, &model).unwrap();
    let l = interaction_matrix(&cam, &f).unwrap();
    let h = 1e-6;
    let mut num = l.clone() * 0.0;
    for j in 0..6 {
        let moved = |sign: f64| {
            let mut xi = [0.0; 6];
            xi[j] = h * sign;
            let step = Pose::from_parts(
                Vector3::new(xi[0], xi[1], xi[2]),
                UnitQuaternion::from_scaled_axis(Vector3::new(xi[3], xi[4], xi[5])),
            );
            FeatureSet::render(&cam, &step.inverse().compose(&c_x_o), &model).unwrap()
        };
        let (fp, fm) = (moved(1.0), moved(-1.0));
        for i in 0..f.len() {
            for r in 0..2 {
                num[(2 * i + r, j)] = (cam.normalized(&fp.image[i])[r] - cam.normalized(&fm.image[i])[r]) / (2.0 * h);
            }
        }
    }
    let jac_rel = (&num - &l).norm() / l.norm();

    // servo from a perturbed visual-servoing pose
    let mut rig = teach_rig(&config, 0);
    let obj = object_rest_pose(&config);
    rig.ee_pose = obj;
    let mut s = TeachSession::new();
    s.capture_dgp(&rig).unwrap();
    let dvsp = dvsp_from_dgp(&obj, config.teach.dvsp_height);
    rig.ee_pose = dvsp;
    s.capture_dvsp(&mut rig, &obj).unwrap();
    let tilt = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 5f64.to_radians());
    rig.ee_pose = Pose::from_parts(dvsp.position() + Vector3::new(0.005, 0.0, 0.0), dvsp.orientation() * tilt);
    let mut errs = vec![s.feature_error(&rig, &obj).unwrap()];
    for _ in 0..300 {
        s.follow_step(&mut rig, &obj, config.teach.servo_dt).unwrap();
        errs.push(s.feature_error(&rig, &obj).unwrap());
    }
    let reached = errs.iter().position(|e| *e < 0.5);
    let monotone = errs[10..].windows(2).all(|w| w[1] <= w[0] + 1e-9);
    verdict(
        "P3",
        "visual servo convergence",
        reached.is_some() && monotone && jac_rel < 1e-4,
        format!(
            "{:.2} px -> below 0.5 px at iteration {:?}, monotone after 10: {monotone}, interaction matrix relative error {jac_rel:.1e}",
            errs[0], reached
        ),
    );
}

fn objective(net: &QNetwork, x: &[f64], c: &[f64]) -> f64 {
    net.forward(x).unwrap().iter().zip(c).map(|(q, c)| q * c).sum()
}

#[test]
fn p4_network_gradients() {
    let config = WorkbenchConfig::default();
    let sizes = config.rrrl.layer_sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut net = QNetwork::random(&sizes, &mut rng);
        for b in net.biases.iter_mut().flatten() {
            *b = rng.random_range(-0.1..0.1);
        }
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut grads = QNetwork::zeros(&sizes);
        net.backward(&net.forward_cached(&x).unwrap(), &c, &mut grads);
        let analytic: Vec<f64> = grads.params().copied().collect();
        let h = 1e-6;
        let mut diff = 0.0;
        let mut scale_a = 0.0;
        let mut scale_n = 0.0;
        for (i, a) in analytic.iter().enumerate() {
            let orig = *net.params().nth(i).unwrap();
            *net.params_mut().nth(i).unwrap() = orig + h;
            let up = objective(&net, &x, &c);
            *net.params_mut().nth(i).unwrap() = orig - h;
            let down = objective(&net, &x, &c);
            *net.params_mut().nth(i).unwrap() = orig;
            let n = (up - down) / (2.0 * h);
            diff += (a - n) * (a - n);
            scale_a += a * a;
            scale_n += n * n;
        }
        worst = worst.max(diff.sqrt() / (scale_a.sqrt() + scale_n.sqrt()));
    }
    verdict(
        "P4",
        "gradient check",
        worst < 1e-4,
        format!("worst relative error {worst:.1e} over 20 networks {sizes:?}"),
    );
}

#[test]
fn p5_prioritized_replay() {
    let t = |a| Transition {
        s: [0.0; 6],
        a,
        r: 0.0,
        s_next: [0.0; 6],
        terminal: false,
    };
    let mut memory = PrioritizedReplay::new(2, 1.0);
    memory.push(t(0));
    memory.push(t(1));
    memory.update_priorities(&[0, 1], &[3.0, 1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 100_000;
    let first = (0..draws)
        .filter(|_| memory.sample(1, 1.0, &mut rng).unwrap().transitions[0].a == 0)
        .count();
    let f = first as f64 / draws as f64;
    let proportional = (f - 0.75).abs() <= 0.02 * 0.75 && ((1.0 - f) - 0.25).abs() <= 0.02 * 0.25;

    // randomized operation sequences on the tree and on the memory
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let cap = rng.random_range(1..64);
        let mut tree = SumTree::new(cap);
        let mut leaves = vec![0.0; cap];
        let mut mem = PrioritizedReplay::new(cap, 0.6);
        for _ in 0..300 {
            let i = rng.random_range(0..cap);
            let v = rng.random_range(0.0..50.0);
            tree.set(i, v);
            leaves[i] = v;
            worst = worst.max((tree.total() - leaves.iter().sum::<f64>()).abs());
            if rng.random_bool(0.5) {
                mem.push(t(0));
            } else if !mem.is_empty() {
                mem.update_priorities(&[i % mem.len()], &[v + 1e-6]);
            }
            worst = worst.max((mem.total() - mem.leaf_sum()).abs());
        }
    }
    verdict(
        "P5",
        "prioritized replay",
        proportional && worst <= 1e-6,
        format!("sampled {f:.4}/{:.4} for priorities 3:1, worst root mismatch {worst:.1e}", 1.0 - f),
    );
}

#[test]
fn p6_action_set_ordering() {
    let start = Instant::now();
    let config = WorkbenchConfig::default();
    let (_, traj) = teach(&config, &default_demo_script(&config), 0).unwrap();
    let task = insertion_task(&config, &traj.footer.dfp);
    let study = compare_action_sets(&task, &config.rrrl, 1).unwrap();
    let row = |s| study.row(s).unwrap();
    let (s1, s2, s3) = (row(ActionSet::Operational), row(ActionSet::SingleAxis), row(ActionSet::Diagonal));
    let (w1, w2, w3) = (
        wilson(s1.successes, s1.trials),
        wilson(s2.successes, s2.trials),
        wilson(s3.successes, s3.trials),
    );
    let rate = |k: usize, n: usize| 100.0 * k as f64 / n as f64;
    let gap = rate(s3.successes, s3.trials) - rate(s1.successes, s1.trials);
    let elapsed = start.elapsed();
    let pass = s3.successes > s2.successes
        && s2.successes > s1.successes
        && w3.0 > w2.1
        && w2.0 > w1.1
        && gap >= 15.0
        && [s1, s2, s3].iter().all(|r| r.trials == 200)
        && elapsed < Duration::from_secs(300);
    verdict(
        "P6",
        "action-set ordering",
        pass,
        format!(
            "set3 {}/200 [{:.3}, {:.3}], set2 {}/200 [{:.3}, {:.3}], set1 {}/200 [{:.3}, {:.3}], gap {gap:.1} points, {elapsed:.1?}",
            s3.successes, w3.0, w3.1, s2.successes, w2.0, w2.1, s1.successes, w1.0, w1.1
        ),
    );
}

#[test]
fn p7_p8_learned_insertion_and_force_safety() {
    let start = Instant::now();
    let config = WorkbenchConfig::default();
    let r = &config.rrrl;
    let configured = r.episodes == 200
        && r.replay_capacity == 20_000
        && r.batch_size == 64
        && r.discount == 0.5
        && r.k_max == 50
        && r.delta_p_range == [0.002, 0.004];
    let (_, traj) = teach(&config, &default_demo_script(&config), 0).unwrap();
    let task = insertion_task(&config, &traj.footer.dfp);
    let policy = train(&task, r, 1, &mut TrainOptions::default()).unwrap().policy;
    let setup = ExecutionSetup {
        task,
        rrrl: r.clone(),
        policy: Some(policy),
    };
    let run = |method| {
        let spec = BenchmarkSpec {
            method,
            group: Group::Uncertainty,
            trials: 100,
            seed: 0,
        };
        run_execution_benchmark(&spec, &setup).unwrap()
    };
    let (rrrl, spiral, pure) = (run(Method::Rrrl), run(Method::Spiral), run(Method::PureReplay));
    let elapsed = start.elapsed();
    verdict(
        "P7",
        "learned insertion",
        configured
            && rrrl.successes >= 80
            && rrrl.successes > spiral.successes
            && spiral.successes > pure.successes
            && elapsed < Duration::from_secs(900),
        format!(
            "rrrl {}/100, spiral {}/100, pure replay {}/100 under pose uncertainty, configured as specified: {configured}, {elapsed:.1?}",
            rrrl.successes, spiral.successes, pure.successes
        ),
    );

    let commanded = rrrl.records.iter().map(|t| t.max_commanded_force).fold(0.0, f64::max);
    let sensed = rrrl.records.iter().map(|t| t.max_force).fold(0.0, f64::max);
    let spiral_sensed = spiral.records.iter().map(|t| t.max_force).fold(0.0, f64::max);
    verdict(
        "P8",
        "force safety",
        commanded <= 10.0 && sensed <= 15.0 && spiral_sensed > sensed,
        format!("rrrl commanded max {commanded:.3} N, sensed max {sensed:.2} N; spiral sensed max {spiral_sensed:.2} N"),
    );
}

#[test]
fn p9_suction_cup_shift() {
    let config = WorkbenchConfig::default();
    let task = insertion_task(&config, &config.scene.pose_above_hole(0.001));
    let k = config.scene.cup_lateral_stiffness;
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for (dir, over) in [([1.0, 0.0], 0.001), ([0.0, 1.0], 0.002), ([-0.6, 0.8], 0.0015)] {
        let s = pressed_teaching_shift(&task, dir, over, 1.0).unwrap();
        let predicted = s.force / k;
        let rel = (s.shift - predicted).abs() / predicted;
        worst = worst.max(rel);
        detail.push(format!("F {:.2} N shift {:.4} mm", s.force, s.shift * 1e3));
    }
    let free = free_teaching_shift(&task, &object_rest_pose(&config), 1.0).unwrap();
    verdict(
        "P9",
        "suction-cup shift",
        worst <= 0.02 && free.shift == 0.0,
        format!("{}; worst deviation from F/k {:.2} %, free-space shift {:e} m", detail.join(", "), worst * 100.0, free.shift),
    );
}

fn tending(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_tending"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn p10_cli_artifacts_are_reproducible() {
    let samples = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../samples");
    let script = samples.join("demo_script.jsonl");
    let script = script.to_str().unwrap();
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for dir in &runs {
        // short training keeps this quick; learning updates still run
        std::fs::write(dir.path().join("c.json"), r#"{"rrrl":{"episodes":8,"warmup":64}}"#).unwrap();
        let d = dir.path();
        tending(d, &["teach", "--config", "c.json", "--demo-script", script, "--out", "traj.jsonl", "--seed", "3"]);
        tending(d, &["train", "--config", "c.json", "--traj", "traj.jsonl", "--out", "policy.json", "--seed", "3", "--log", "log.jsonl"]);
        for m in ["pure", "spiral", "rrrl"] {
            let out = format!("{m}.json");
            tending(
                d,
                &[
                    "execute", "--config", "c.json", "--traj", "traj.jsonl", "--policy", "policy.json", "--method", m,
                    "--group", "uncertainty", "--trials", "8", "--out", &out, "--seed", "3",
                ],
            );
        }
        tending(d, &["compare-actions", "--config", "c.json", "--seed", "3", "--out", "actions.json"]);
    }
    let files = [
        "traj.jsonl",
        "policy.json",
        "log.jsonl",
        "pure.json",
        "pure.md",
        "spiral.json",
        "spiral.md",
        "rrrl.json",
        "rrrl.md",
        "actions.json",
        "actions.md",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(runs[0].path().join(f)).unwrap() != std::fs::read(runs[1].path().join(f)).unwrap())
        .collect();
    verdict(
        "P10",
        "CLI determinism",
        differing.is_empty(),
        format!("{} artifacts compared, differing: {differing:?}", files.len()),
    );
}
