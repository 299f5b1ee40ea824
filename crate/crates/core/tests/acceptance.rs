//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::io::Cursor;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use aerotrack::controller::{desired_force, desired_rotation, pitch_accel_step, thrust, ControllerGains, PixelErrors};
use aerotrack::detection::log;
use aerotrack::geometry::{iou, BoundingBox, CameraModel, PixelPoint, Rotation};
use aerotrack::harness::metrics::frame_tracked;
use aerotrack::harness::{self, compute_metrics, corpus, format_table, output, run_ablation, AblationSpec, MetricsConfig};
use aerotrack::sim::{self, GroundTruthRecord, GyroSample, Scenario};
use aerotrack::tracker::ekf::{ekf_predict, ekf_update, process_jacobian, propagate_mean, EkfConfig, EkfState, StateVector};
use aerotrack::tracker::{TrackStatus, TrackerConfig, TrackerTraceRecord};
use nalgebra::{SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn scenario(name: &str) -> Scenario {
    corpus::bundled(name).expect("bundled scenario").expect("valid scenario")
}

fn center(b: &[f64; 4]) -> PixelPoint {
    PixelPoint::new(b[0] + 0.5 * b[2], b[1] + 0.5 * b[3])
}

fn random_box(rng: &mut ChaCha8Rng) -> BoundingBox {
    BoundingBox { x: rng.random_range(-50.0..900.0), y: rng.random_range(-50.0..500.0), w: rng.random_range(1.0..200.0), h: rng.random_range(1.0..200.0) }
}

fn ac1() -> Verdict {
    let cam = CameraModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = StateVector::from([
            rng.random_range(0.0..960.0),
            rng.random_range(0.0..544.0),
            rng.random_range(5.0..200.0),
            rng.random_range(5.0..200.0),
            rng.random_range(-100.0..100.0),
            rng.random_range(-100.0..100.0),
        ]);
        let omega = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let dt = rng.random_range(0.001..0.1);
        let analytic = process_jacobian(&x, &omega, dt, &cam);
        for j in 0..6 {
            let h = 1e-6 * x[j].abs().max(1.0);
            let (mut xp, mut xm) = (x, x);
            xp[j] += h;
            xm[j] -= h;
            let column = (propagate_mean(&xp, &omega, dt, &cam) - propagate_mean(&xm, &omega, dt, &cam)) / (2.0 * h);
            for i in 0..6 {
                let err = (column[i] - analytic[(i, j)]).abs() / analytic[(i, j)].abs().max(1.0);
                worst = worst.max(err);
            }
        }
    }

    let cfg = EkfConfig::default();
    let mut s = EkfState::new(&BoundingBox { x: 400.0, y: 200.0, w: 60.0, h: 120.0 }, 0.0, &cfg);
    let mut t = 0.0;
    let mut min_eig = f64::INFINITY;
    let mut asym: f64 = 0.0;
    for step in 0..10_000 {
        t += rng.random_range(0.001..0.02);
        let omega = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        s = ekf_predict(&s, &GyroSample { timestamp: t, omega }, &cfg).expect("predict").state;
        if step % 3 == 0 {
            let z = BoundingBox { x: rng.random_range(300.0..600.0), y: rng.random_range(150.0..350.0), w: rng.random_range(20.0..100.0), h: rng.random_range(40.0..200.0) };
            s = ekf_update(&s, &z, &cfg).expect("update");
        }
        // Keep the box near the image so the pinhole flow stays well defined.
        s.mean[0] = s.mean[0].clamp(0.0, 900.0);
        s.mean[1] = s.mean[1].clamp(0.0, 500.0);
        asym = asym.max((s.cov - s.cov.transpose()).abs().max());
        min_eig = min_eig.min(SymmetricEigen::new(s.cov).eigenvalues.min());
    }
    verdict(
        worst <= 1e-5 && min_eig >= -1e-9 && asym <= 1e-9,
        format!("jacobian max rel err {worst:.2e} over 1000 cases; covariance min eig {min_eig:.3e}, asymmetry {asym:.1e} after 10^4 steps"),
    )
}

fn max_center_error(sc: &Scenario) -> (f64, usize) {
    let art = sim::run(sc).expect("run");
    let mut worst: f64 = 0.0;
    let mut frames = 0;
    for r in art.tracker.iter().skip(1) {
        let g = art.ground_truth.iter().find(|g| (g.t - r.t).abs() < 1e-9).expect("aligned");
        if let Some(b) = g.target {
            worst = worst.max(center(&r.predicted).distance(&center(&b)));
            frames += 1;
        }
    }
    (worst, frames)
}

fn ac2() -> Verdict {
    let sc = scenario("rotation_only");
    let (with, frames) = max_center_error(&sc);
    let mut off = sc.clone();
    off.tracker.ekf.gyro_compensation = false;
    let (without, _) = max_center_error(&off);
    verdict(
        frames > 0 && with < 5.0 && without >= 5.0 * with,
        format!("max predicted-center error {with:.2} px with compensation, {without:.2} px without ({:.1}x) over {frames} frames", without / with),
    )
}

fn ac3() -> Verdict {
    let spec = AblationSpec { repetitions: 5, ..AblationSpec::table2() };
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["occlusion_decoy", "false_positive_storm"] {
        let table = run_ablation(&scenario(name), &spec, true).expect("ablation");
        let per_row: Vec<Vec<f64>> = table.rows.chunks(5).map(|c| c.iter().map(|r| r.metrics.tracked_pct).collect()).collect();
        for seed in 0..5 {
            let v: Vec<f64> = per_row.iter().map(|row| row[seed]).collect();
            ok &= v[0] <= v[1] && v[1] <= v[2] && v[2] <= v[3] && v[3] == 100.0 && v[0] < 50.0;
        }
        let fmt = |row: &Vec<f64>| row.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join("/");
        parts.push(format!("{name}: {}", per_row.iter().map(fmt).collect::<Vec<_>>().join(" | ")));
    }
    verdict(ok, format!("tracked % per row over 5 seeds, rows (3,0,0) | (3,3,0) | (3,0,4) | (3,3,4); {}", parts.join("; ")))
}

fn ac4() -> Verdict {
    let gains = ControllerGains::default();
    let r = Rotation::identity();
    let f = desired_force(&PixelErrors::default(), &r, 0.0, &gains, false);
    let tau = thrust(&f, &r);
    let rd = desired_rotation(&f, 0.0).expect("rotation");
    let hover_err = (tau - 1.3 * 9.81).abs();
    let rot_err = (rd.matrix() - nalgebra::Matrix3::identity()).abs().max();

    let mut a = 0.0;
    let mut geo_err: f64 = 0.0;
    for n in 1..=200 {
        a = pitch_accel_step(a, &gains);
        geo_err = geo_err.max((a - gains.pitch_accel * (1.0 - gains.beta.powi(n))).abs());
    }
    verdict(
        hover_err <= 1e-9 && rot_err <= 1e-9 && geo_err <= 1e-12,
        format!("hover thrust error {hover_err:.1e} N, R_d deviation {rot_err:.1e}, pitch-accel series error {geo_err:.1e} over 200 ticks"),
    )
}

fn ac5() -> Verdict {
    let sc = scenario("static_target");
    let art = sim::run(&sc).expect("run");
    let lock = art.locked_at.unwrap_or(f64::INFINITY);
    let closed_at = art.ground_truth.iter().find(|g| g.horizontal_distance < 2.0).map(|g| g.t);
    let after: Vec<&GroundTruthRecord> = art.ground_truth.iter().filter(|g| g.t >= lock).collect();
    let in_image = after.iter().filter(|g| g.in_image).count() as f64 / after.len().max(1) as f64;
    let end = art.commands.last().map_or(0.0, |c| c.t);
    let tail: Vec<f64> = art.commands.iter().filter(|c| c.tracking && c.t > end - 0.5).map(|c| c.e_w.hypot(c.e_h)).collect();
    let final_err = if tail.is_empty() { f64::INFINITY } else { tail.iter().sum::<f64>() / tail.len() as f64 };
    verdict(
        closed_at.is_some_and(|t| t <= 15.0) && in_image >= 0.99 && final_err < 30.0,
        format!(
            "closed to < 2 m at {}; target in image for {:.1}% of frames after lock; final pixel error {final_err:.1} px (mean over last 0.5 s)",
            closed_at.map_or("never".into(), |t| format!("{t:.2} s")),
            100.0 * in_image
        ),
    )
}

fn ac6() -> Verdict {
    let mut sc = scenario("static_target");
    sc.duration = 10.0;
    sc.capture_distance = None;
    let art = sim::run(&sc).expect("run");
    let frames: Vec<f64> = art.ground_truth.iter().map(|g| g.t).collect();
    let (mut gaps, mut changed) = (0, 0);
    for w in frames.windows(2) {
        let ticks: Vec<usize> = (0..art.commands.len()).filter(|&i| art.commands[i].t > w[0] && art.commands[i].t < w[1]).collect();
        let active = ticks.iter().all(|&i| art.commands[i].tracking && (art.commands[i].e_w != 0.0 || art.commands[i].e_h != 0.0));
        if ticks.is_empty() || ticks[0] == 0 || !active {
            continue;
        }
        gaps += 1;
        let differs = |i: usize| {
            let (a, b) = (&art.commands[i - 1], &art.commands[i]);
            a.thrust != b.thrust || a.q_d != b.q_d
        };
        if ticks.iter().any(|&i| differs(i)) {
            changed += 1;
        }
    }
    verdict(
        art.counts.control == 1000 && art.counts.camera == 600 && gaps > 0 && changed == gaps,
        format!("{} control and {} camera events in 10 s; command changed inside {changed} of {gaps} active inter-frame gaps", art.counts.control, art.counts.camera),
    )
}

fn ac7() -> Verdict {
    let mut ok = true;
    let mut frames = 0;
    for name in ["static_target", "occlusion_decoy", "false_positive_storm"] {
        let sc = scenario(name);
        let art = sim::run(&sc).expect("run");
        let mut bytes = Vec::new();
        log::record(&mut bytes, &art.detections).expect("record");
        let lock = art.locked_at.expect("locked");
        let first = art.ground_truth.iter().find(|g| (g.t - lock).abs() < 1e-9).and_then(|g| g.target).expect("target at lock");
        let replay = |c: f64| {
            let mut cfg = TrackerConfig { weights: sc.tracker.weights.scaled(c), ..sc.tracker.clone() };
            cfg.ekf.camera = sc.camera;
            harness::track_log(Cursor::new(&bytes), center(&first), cfg).expect("replay")
        };
        let selections = |trace: &[TrackerTraceRecord]| trace.iter().map(|r| r.selected).collect::<Vec<_>>();
        let base = selections(&replay(1.0));
        frames += base.len();
        for c in [0.1, 10.0] {
            ok &= selections(&replay(c)) == base;
        }
    }
    verdict(ok, format!("identical selections under weight scaling by 0.1 and 10 on 3 recorded logs ({frames} frames)"))
}

fn dir_digest(dir: &std::path::Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = fs::read_dir(dir)
        .expect("read dir")
        .map(|e| {
            let e = e.expect("entry");
            (e.file_name().to_string_lossy().into_owned(), hex::encode(Sha256::digest(fs::read(e.path()).expect("read"))))
        })
        .collect();
    out.sort();
    out
}

fn ac8() -> Verdict {
    let sc = scenario("occlusion_decoy");
    let tmp = tempfile::tempdir().expect("tempdir");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    output::write_run(&a, &sc, &sim::run(&sc).expect("run")).expect("write");
    output::write_run(&b, &sc, &sim::run(&sc).expect("run")).expect("write");
    let (da, db) = (dir_digest(&a), dir_digest(&b));
    let spec = AblationSpec { repetitions: 2, ..AblationSpec::table2() };
    let par = run_ablation(&sc, &spec, true).expect("ablation");
    let seq = run_ablation(&sc, &spec, false).expect("ablation");
    verdict(
        da == db && da.len() == 5 && par == seq && format_table(&par) == format_table(&seq),
        format!("{} output files hash-identical across two runs; parallel and sequential ablation tables identical ({} rows)", da.len(), par.rows.len()),
    )
}

/// Independent scorer used to cross-check the metrics module.
fn reference_score(trace: &[TrackerTraceRecord], truth: &[GroundTruthRecord], cfg: &MetricsConfig) -> (f64, f64, f64, Option<f64>) {
    let start = truth.iter().position(|g| (g.t - trace[0].t).abs() < 1e-9).unwrap();
    let (mut tracked, mut n_track, mut n_overlap, mut sum_iou, mut lost) = (0.0, 0.0, 0.0, 0.0, None);
    for g in &truth[start..] {
        let r = trace.iter().find(|r| (r.t - g.t).abs() < 1e-9);
        let gt = g.target.map(|b| BoundingBox { x: b[0], y: b[1], w: b[2], h: b[3] });
        let to_box = |b: [f64; 4]| BoundingBox { x: b[0], y: b[1], w: b[2], h: b[3] };
        let ok = match r {
            None => false,
            Some(r) if r.status == TrackStatus::Tracking => matches!((r.selected, gt), (Some(s), Some(g)) if iou(&to_box(s), &g) >= cfg.iou_threshold),
            Some(r) => r.coast_frames <= cfg.max_coast_frames && gt.is_none_or(|g| iou(&to_box(r.predicted), &g) >= cfg.iou_threshold),
        };
        if ok {
            tracked += 1.0;
        } else if lost.is_none() {
            lost = Some(g.t);
        }
        if let Some(r) = r.filter(|r| r.status == TrackStatus::Tracking) {
            n_track += 1.0;
            let v = match (r.selected, gt) {
                (Some(s), Some(g)) => iou(&to_box(s), &g),
                _ => 0.0,
            };
            sum_iou += v;
            if v > 0.0 {
                n_overlap += 1.0;
            }
        }
    }
    let frames = (truth.len() - start) as f64;
    let pct = |a: f64, b: f64| if b == 0.0 { 0.0 } else { 100.0 * a / b };
    (pct(sum_iou, n_track), pct(n_overlap, n_track), pct(tracked, frames), lost)
}

fn random_trace(rng: &mut ChaCha8Rng) -> (Vec<TrackerTraceRecord>, Vec<GroundTruthRecord>) {
    let n = rng.random_range(5..120);
    let mut truth = Vec::new();
    let mut trace = Vec::new();
    let start = rng.random_range(0..n / 2);
    let mut coast = 0;
    for k in 0..n {
        let t = k as f64 / 60.0;
        let target = rng.random_bool(0.85).then(|| {
            let b = random_box(rng);
            [b.x, b.y, b.w, b.h]
        });
        truth.push(GroundTruthRecord {
            t,
            target,
            in_image: target.is_some(),
            occlusion: 0.0,
            position: [0.0; 3],
            attitude: [1.0, 0.0, 0.0, 0.0],
            target_position: [0.0; 3],
            horizontal_distance: 0.0,
        });
        if k < start || (k > start && rng.random_bool(0.05)) {
            continue;
        }
        let jitter = |rng: &mut ChaCha8Rng, b: Option<[f64; 4]>| match b {
            Some(b) if rng.random_bool(0.7) => [b[0] + rng.random_range(-20.0..20.0), b[1] + rng.random_range(-20.0..20.0), b[2] * rng.random_range(0.7..1.3), b[3] * rng.random_range(0.7..1.3)],
            _ => {
                let b = random_box(rng);
                [b.x, b.y, b.w, b.h]
            }
        };
        let coasting = k > start && rng.random_bool(0.3);
        coast = if coasting { coast + rng.random_range(1..40) } else { 0 };
        trace.push(TrackerTraceRecord {
            t,
            status: if coasting { TrackStatus::Coasting } else { TrackStatus::Tracking },
            selected: (!coasting).then(|| jitter(rng, target)),
            scores: None,
            predicted: jitter(rng, target),
            ekf_mean: [0.0; 6],
            memory_similarity: None,
            coast_frames: coast,
        });
    }
    (trace, truth)
}

fn ac9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut iou_ok = true;
    for _ in 0..100_000 {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        let (ab, ba) = (iou(&a, &b), iou(&b, &a));
        iou_ok &= ab == ba && (0.0..=1.0).contains(&ab) && (iou(&a, &a) - 1.0).abs() <= 1e-12;
    }
    let mut agree = 0;
    let cfg = MetricsConfig::default();
    for _ in 0..1000 {
        let (trace, truth) = random_trace(&mut rng);
        let m = compute_metrics(&trace, &truth, &cfg).expect("metrics");
        let (i, o, t, lost) = reference_score(&trace, &truth, &cfg);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
        if close(m.iou_pct, i) && close(m.overlap_pct, o) && close(m.tracked_pct, t) && m.lock_lost_at == lost {
            agree += 1;
        }
    }
    // The per-frame rule is also exposed on its own; spot-check a missing record.
    let missing_is_untracked = !frame_tracked(None, Some(&[0.0, 0.0, 10.0, 10.0]), &cfg);
    verdict(
        iou_ok && agree == 1000 && missing_is_untracked,
        format!("IOU symmetry, bounds and identity hold on 10^5 pairs: {iou_ok}; metrics agree with reference scorer on {agree}/1000 traces"),
    )
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Verdict, Duration); 9] = [
        ("AC-1", ac1, Duration::from_secs(5)),
        ("AC-2", ac2, Duration::from_secs(10)),
        ("AC-3", ac3, Duration::from_secs(120)),
        ("AC-4", ac4, Duration::from_secs(1)),
        ("AC-5", ac5, Duration::from_secs(30)),
        ("AC-6", ac6, Duration::from_secs(60)),
        ("AC-7", ac7, Duration::from_secs(60)),
        ("AC-8", ac8, Duration::from_secs(60)),
        ("AC-9", ac9, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (name, check, budget) in checks {
        let start = Instant::now();
        let v = check();
        let took = start.elapsed();
        let pass = v.pass && took <= budget;
        if !pass {
            failed += 1;
        }
        println!("{name} {} {} [{:.2} s, budget {} s]", if pass { "PASS" } else { "FAIL" }, v.detail, took.as_secs_f64(), budget.as_secs());
    }
    println!("{} of 9 acceptance criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
