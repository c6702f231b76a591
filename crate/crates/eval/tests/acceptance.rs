//! End-to-end acceptance suite. Runs every criterion in turn, prints one
//! PASS/FAIL line each and exits non-zero if any failed.

use std::thread;
use std::time::{Duration, Instant};

use irtrack_core::calibration::{compute_calibration, resolve_render_pose, update_calibration, CalibrationState, DeviceKind, DeviceObservation, DEFAULT_PAIRING_WINDOW_US};
use irtrack_core::depth::CameraModel;
use irtrack_core::geometry::{compose, pose_error, RigidTransform, Vec3};
use irtrack_core::registration::{match_tool, register_point_sets, sum_squared_residual, ToolGeometry, DEFAULT_MATCH_TOLERANCE_MM};
use irtrack_core::tracking::{ToolTracker, TrackerParams};
use irtrack_eval::guidance::guidance_signal;
use irtrack_eval::relative::run_relative_tracking;
use irtrack_eval::stats::{summarize, ErrorSample};
use irtrack_eval::task::{run_task_experiment, TaskConfig};
use irtrack_protocol::wire::{decode_packet, encode_packet, PoseObservation, TrackingPacket};
use irtrack_protocol::{subscribe, Backoff, PacketServer, StreamDecoder};
use irtrack_sim::presets::{receding_tool_scene, relative_tracking_scene, standard_tools, task_scene, PROBE_ID, REFERENCE_ID};
use irtrack_sim::{project_markers, render_frame, simulate_tracker_packets, NoiseModel, Scene};
use nalgebra::{Rotation3, UnitQuaternion};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_transform(rng: &mut impl Rng, reach_mm: f64) -> RigidTransform {
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ));
    let t = Vec3::from_fn(|_, _| rng.random_range(-reach_mm..reach_mm));
    RigidTransform::new(q, t)
}

fn tracker_for(scene: &Scene) -> ToolTracker {
    ToolTracker::new(scene.geometries(), CameraModel::new(scene.camera.intrinsics), TrackerParams::default())
}

fn hmd_observations(tracker: &mut ToolTracker, scene: &Scene, t: f64, noise: &NoiseModel) -> Vec<DeviceObservation> {
    let frame = render_frame(scene, t, noise);
    tracker
        .detect_tools(&frame)
        .into_iter()
        .map(|(id, pose)| DeviceObservation::new(DeviceKind::Hmd, id, pose, frame.timestamp_us))
        .collect()
}

fn zero_noise_pipeline() -> Outcome {
    let start = Instant::now();
    let scene = relative_tracking_scene();
    let noise = NoiseModel::zero();
    let mut tracker = tracker_for(&scene);
    let mut state = CalibrationState::new();
    let mut worst = (0.0f64, 0.0f64);
    for k in 0..100 {
        let t = scene.frame_time(k);
        let hmd = hmd_observations(&mut tracker, &scene, t, &noise);
        let trk = simulate_tracker_packets(&scene, t, &noise);
        state = update_calibration(&state, &hmd, &trk, DEFAULT_PAIRING_WINDOW_US);
        for (id, truth) in scene.tool_poses(t) {
            let via_hmd = resolve_render_pose(id, &hmd, &trk, &state).ok_or(format!("frame {k}: tool {id} unresolved"))?;
            let via_tracker = resolve_render_pose(id, &[], &trk, &state).ok_or(format!("frame {k}: tool {id} not via tracker"))?;
            ensure(hmd.iter().any(|o| o.tool_id == id), || format!("frame {k}: headset lost tool {id}"))?;
            for e in [pose_error(&via_hmd, &truth), pose_error(&via_tracker, &truth)] {
                worst = (worst.0.max(e.translation_mm), worst.1.max(e.rotation_deg));
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(worst.0 < 0.1 && worst.1 < 0.05, || format!("worst error {:.4} mm / {:.4} deg", worst.0, worst.1))?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("worst {:.2e} mm / {:.2e} deg over 100 frames in {elapsed:.2?}", worst.0, worst.1))
}

/// Best rotation found by a 2-degree yaw/pitch/roll grid followed by a
/// shrinking pattern search; the translation is the centroid offset.
fn grid_search_residual(src: &[Vec3], dst: &[Vec3]) -> f64 {
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let a: Vec<Vec3> = src.iter().map(|p| p - cs).collect();
    let b: Vec<Vec3> = dst.iter().map(|p| p - cd).collect();
    let cost = |r: &Rotation3<f64>| a.iter().zip(&b).map(|(p, q)| (r * p - q).norm_squared()).sum::<f64>();

    let step = 2f64.to_radians();
    let mut best = (f64::INFINITY, Rotation3::identity());
    for i in 0..180 {
        for j in 0..=90 {
            for k in 0..180 {
                let r = Rotation3::from_euler_angles(i as f64 * step, -std::f64::consts::FRAC_PI_2 + j as f64 * step, k as f64 * step);
                let c = cost(&r);
                if c < best.0 {
                    best = (c, r);
                }
            }
        }
    }
    let (mut c, mut r) = best;
    let mut delta = step;
    while delta > 1e-10 {
        let mut improved = false;
        for axis in [Vec3::x_axis(), Vec3::y_axis(), Vec3::z_axis()] {
            for sign in [-1.0, 1.0] {
                let candidate = Rotation3::from_axis_angle(&axis, sign * delta) * r;
                let cc = cost(&candidate);
                if cc < c {
                    (c, r, improved) = (cc, candidate, true);
                }
            }
        }
        if !improved {
            delta *= 0.5;
        }
    }
    c
}

fn registration_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x2e6);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut worst_gap = f64::NEG_INFINITY;
    for i in 0..100 {
        let src: Vec<Vec3> = (0..4).map(|_| Vec3::from_fn(|_, _| rng.random_range(-60.0..60.0))).collect();
        let truth = random_transform(&mut rng, 500.0);
        let dst: Vec<Vec3> = src.iter().map(|p| truth.transform_point(p) + Vec3::from_fn(|_, _| noise.sample(&mut rng))).collect();
        let fit = register_point_sets(&src, &dst).map_err(|e| format!("instance {i}: {e}"))?;
        let ours = sum_squared_residual(&fit.transform, &src, &dst);
        let oracle = grid_search_residual(&src, &dst);
        worst_gap = worst_gap.max(ours - oracle);
        ensure(ours <= oracle + 1e-6, || format!("instance {i}: residual {ours} > oracle {oracle}"))?;
        ensure(ours <= sum_squared_residual(&truth, &src, &dst) + 1e-9, || format!("instance {i}: worse than generating transform"))?;
    }
    let mut worst_exact = 0.0f64;
    for i in 0..100 {
        let src: Vec<Vec3> = (0..4).map(|_| Vec3::from_fn(|_, _| rng.random_range(-60.0..60.0))).collect();
        let truth = random_transform(&mut rng, 500.0);
        let dst: Vec<Vec3> = src.iter().map(|p| truth.transform_point(p)).collect();
        let fit = register_point_sets(&src, &dst).map_err(|e| format!("noiseless {i}: {e}"))?;
        let dr = (fit.transform.rotation_matrix() - truth.rotation_matrix()).abs().max();
        let dt = (fit.transform.translation() - truth.translation()).abs().max();
        worst_exact = worst_exact.max(dr).max(dt);
    }
    ensure(worst_exact < 1e-9, || format!("noiseless recovery off by {worst_exact:e}"))?;
    Ok(format!("100 noisy instances, max (ours - oracle) {worst_gap:.2e}; noiseless max deviation {worst_exact:.1e}"))
}

/// Every injective marker-to-point assignment, keeping the consistent one
/// with the smallest summed squared distance mismatch.
fn exhaustive_match(points: &[Vec3], geometry: &ToolGeometry, tol: f64) -> Option<Vec<usize>> {
    let k = geometry.markers.len();
    let n = points.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut assignment = vec![0usize; k];
    let total = n.pow(k as u32);
    'outer: for code in 0..total {
        let mut c = code;
        for slot in assignment.iter_mut() {
            *slot = c % n;
            c /= n;
        }
        let mut sum = 0.0;
        for a in 0..k {
            for b in a + 1..k {
                if assignment[a] == assignment[b] {
                    continue 'outer;
                }
                let d = (points[assignment[a]] - points[assignment[b]]).norm() - (geometry.markers[a] - geometry.markers[b]).norm();
                if d.abs() > tol {
                    continue 'outer;
                }
                sum += d * d;
            }
        }
        if best.as_ref().is_none_or(|(s, _)| sum < *s) {
            best = Some((sum, assignment.clone()));
        }
    }
    best.map(|(_, a)| a)
}

fn correspondence_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let tools = standard_tools();
    let jitter = Normal::new(0.0, 0.4).unwrap();
    let (mut matched, mut unmatched) = (0, 0);
    for scene in 0..200 {
        let geometry = &tools[scene % tools.len()];
        let pose = random_transform(&mut rng, 300.0);
        let mut points: Vec<Vec3> = geometry.markers.iter().map(|m| pose.transform_point(m) + Vec3::from_fn(|_, _| jitter.sample(&mut rng))).collect();
        // Drop a marker in some scenes so no complete match exists.
        if rng.random_bool(0.3) {
            points.remove(rng.random_range(0..points.len()));
        }
        // Clutter, sometimes another tool's markers.
        if rng.random_bool(0.3) {
            let other = &tools[(scene + 1) % tools.len()];
            let p = random_transform(&mut rng, 300.0);
            points.extend(other.markers.iter().take(8 - points.len()).map(|m| p.transform_point(m)));
        }
        while points.len() < 8 && rng.random_bool(0.5) {
            points.push(pose.transform_point(&Vec3::from_fn(|_, _| rng.random_range(-80.0..80.0))));
        }
        points.shuffle(&mut rng);
        let ours = match_tool(&points, geometry, DEFAULT_MATCH_TOLERANCE_MM).map(|c| c.observed_indices);
        let oracle = exhaustive_match(&points, geometry, DEFAULT_MATCH_TOLERANCE_MM);
        ensure(ours == oracle, || format!("scene {scene}: match_tool {ours:?}, exhaustive {oracle:?}"))?;
        if oracle.is_some() {
            matched += 1;
        } else {
            unmatched += 1;
        }
    }
    ensure(matched > 0 && unmatched > 0, || format!("degenerate sample: {matched} matched, {unmatched} unmatched"))?;
    Ok(format!("200 scenes agree ({matched} matches, {unmatched} no-match)"))
}

fn relative_tracking_regime() -> Outcome {
    let scene = relative_tracking_scene();
    let noise = NoiseModel::default();
    let start = Instant::now();
    let run = run_relative_tracking(&scene, &noise, 7000).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let s = &run.summary;
    ensure(s.count == 7000, || format!("{} pairs", s.count))?;
    ensure((0.5..=4.0).contains(&s.translation_mm.mean), || format!("translation MAE {:.3} mm", s.translation_mm.mean))?;
    ensure((0.3..=2.5).contains(&s.rotation_deg.mean), || format!("rotation MAE {:.3} deg", s.rotation_deg.mean))?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    let again = run_relative_tracking(&scene, &noise, 500).map_err(|e| e.to_string())?;
    ensure(again.samples[..] == run.samples[..500], || "rerun with same seed differs".into())?;
    Ok(format!(
        "MAE {:.3} mm / {:.3} deg (SD {:.3} / {:.3}, median {:.3} / {:.3}), {} frames skipped, {elapsed:.1?}",
        s.translation_mm.mean, s.rotation_deg.mean, s.translation_mm.sd, s.rotation_deg.sd, s.translation_mm.median, s.rotation_deg.median, run.skipped
    ))
}

fn task_structure() -> Outcome {
    let run = run_task_experiment(&task_scene(), &NoiseModel::default(), &TaskConfig::default()).map_err(|e| e.to_string())?;
    let s = &run.summary;
    ensure(run.samples.len() == 512, || format!("{} samples", run.samples.len()))?;
    for sample in &run.samples {
        ensure(sample.translation_mm < 5.0 && sample.rotation_deg < 5.0, || format!("sample over threshold: {sample:?}"))?;
    }
    ensure((0.5..=4.0).contains(&s.translation_mm.mean), || format!("translation MAE {:.3} mm", s.translation_mm.mean))?;
    ensure((0.3..=3.0).contains(&s.rotation_deg.mean), || format!("rotation MAE {:.3} deg", s.rotation_deg.mean))?;
    Ok(format!(
        "512 samples, max {:.3} mm / {:.3} deg, MAE {:.3} mm / {:.3} deg",
        s.translation_mm.max, s.rotation_deg.max, s.translation_mm.mean, s.rotation_deg.mean
    ))
}

fn one_metre_transition() -> Outcome {
    let mut report = Vec::new();
    for (label, noise) in [("zero noise", NoiseModel::zero()), ("default noise", NoiseModel::default())] {
        let scene = receding_tool_scene(900.0, 1100.0, 4.0);
        let mut tracker = tracker_for(&scene);
        let mut state = CalibrationState::new();
        let (mut near_tracked, mut near, mut far_tracked, mut far) = (0, 0, 0, 0);
        let mut worst_resolved = 0.0f64;
        for k in 0..=180 {
            let t = scene.frame_time(k);
            let hmd = hmd_observations(&mut tracker, &scene, t, &noise);
            let trk = simulate_tracker_packets(&scene, t, &noise);
            ensure(trk.iter().any(|o| o.tool_id == PROBE_ID), || format!("{label}: tracker lost the probe at t = {t:.2}"))?;
            let hmd_ref: Vec<_> = hmd.iter().copied().filter(|o| o.tool_id == REFERENCE_ID).collect();
            state = update_calibration(&state, &hmd_ref, &trk, DEFAULT_PAIRING_WINDOW_US);
            let ranges: Vec<f64> = project_markers(&scene, t).iter().filter(|m| m.tool_id == PROBE_ID).map(|m| m.range_mm).collect();
            let seen = hmd.iter().any(|o| o.tool_id == PROBE_ID);
            if ranges.iter().all(|r| *r < 1000.0) {
                near += 1;
                near_tracked += usize::from(seen);
            } else if ranges.iter().all(|r| *r > 1000.0) {
                far += 1;
                far_tracked += usize::from(seen);
                let resolved = resolve_render_pose(PROBE_ID, &hmd, &trk, &state).ok_or(format!("{label}: probe unresolvable at t = {t:.2}"))?;
                let truth = scene.tool(PROBE_ID).unwrap().trajectory.pose_at(t);
                worst_resolved = worst_resolved.max(pose_error(&resolved, &truth).translation_mm);
            }
        }
        ensure(near > 0 && far > 0, || format!("{label}: {near} near frames, {far} far frames"))?;
        ensure(far_tracked == 0, || format!("{label}: headset tracked the probe in {far_tracked} frames beyond 1 m"))?;
        let needed = if label == "zero noise" { near } else { near * 8 / 10 };
        ensure(near_tracked >= needed, || format!("{label}: tracked only {near_tracked} of {near} frames inside 1 m"))?;
        if label == "zero noise" {
            ensure(worst_resolved < 0.1, || format!("resolved through calibration off by {worst_resolved:.3} mm"))?;
        }
        report.push(format!("{label}: tracked {near_tracked}/{near} inside, {far_tracked}/{far} beyond, resolved within {worst_resolved:.2} mm"));
    }
    Ok(report.join("; "))
}

const GOLDEN: &[u8] = include_bytes!("../../protocol/tests/fixtures/tool7_identity.bin");

fn protocol_correctness() -> Outcome {
    let golden = TrackingPacket::new(1_000_000, vec![PoseObservation::visible(7, &RigidTransform::identity())]);
    ensure(decode_packet(GOLDEN).as_ref() == Ok(&golden), || "golden fixture decodes differently".into())?;
    ensure(encode_packet(&golden).map_err(|e| e.to_string())? == GOLDEN, || "golden fixture encodes differently".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100_000 {
        let mut bytes = GOLDEN.to_vec();
        match rng.random_range(0..3) {
            0 => bytes = (0..rng.random_range(0..160)).map(|_| rng.random()).collect(),
            1 => {
                let at = rng.random_range(0..bytes.len());
                bytes[at] = rng.random();
            }
            _ => bytes.truncate(rng.random_range(0..bytes.len())),
        }
        let _ = decode_packet(&bytes);
    }

    let sent: Vec<TrackingPacket> = (0..1000u64)
        .map(|i| {
            let obs = (0..(i % 4) as u16).map(|id| PoseObservation::visible(id, &random_transform(&mut rng, 2000.0))).collect();
            TrackingPacket::new(i * 22_222, obs)
        })
        .collect();
    let server = PacketServer::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = server.local_addr().to_string();
    let reader = thread::spawn(move || subscribe(&addr, &Backoff::default()).map(|s| s.collect::<Vec<_>>()));
    ensure(server.wait_for_clients(1, Duration::from_secs(5)), || "subscriber never connected".into())?;
    server.serve(sent.clone(), None).map_err(|e| e.to_string())?;
    server.shutdown();
    let received = reader.join().map_err(|_| "reader panicked".to_string())?.map_err(|e| e.to_string())?;
    ensure(received.len() == 1000, || format!("received {} packets", received.len()))?;
    for (i, (a, b)) in sent.iter().zip(&received).enumerate() {
        let b = b.as_ref().map_err(|e| format!("packet {i}: {e}"))?;
        ensure(encode_packet(a).unwrap() == encode_packet(b).unwrap(), || format!("packet {i} differs"))?;
    }

    let stream: Vec<u8> = sent[..50].iter().flat_map(|p| encode_packet(p).unwrap()).collect();
    for trial in 0..200 {
        let mut cuts: Vec<usize> = (0..rng.random_range(0..20)).map(|_| rng.random_range(0..=stream.len())).collect();
        cuts.extend([0, stream.len()]);
        cuts.sort_unstable();
        let mut decoder = StreamDecoder::new();
        let mut out = Vec::new();
        for w in cuts.windows(2) {
            out.extend(decoder.feed(&stream[w[0]..w[1]]));
        }
        let out: Vec<TrackingPacket> = out.into_iter().collect::<Result<_, _>>().map_err(|e| format!("split trial {trial}: {e}"))?;
        ensure(out[..] == sent[..50], || format!("split trial {trial} decoded differently"))?;
    }
    Ok("golden fixture exact, 1e5 fuzz cases without panic, 1000 packets lossless, 200 split streams identical".into())
}

fn calibration_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a = random_transform(&mut rng, 2000.0);
        let b = random_transform(&mut rng, 2000.0);
        let back = compose(&compute_calibration(&a, &b), &b);
        let dr = (back.rotation_matrix() - a.rotation_matrix()).abs().max();
        let dt = (back.translation() - a.translation()).abs().max();
        worst = worst.max(dr).max(dt);
    }
    ensure(worst < 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("1000 pairs, max deviation {worst:.1e}"))
}

fn guidance_law() -> Outcome {
    let g = guidance_signal(0.0, 0.0, 5.0, 5.0);
    ensure(g.sphere_green_fraction == 1.0 && g.cylinder_green_fraction == 1.0, || format!("zero error gives {g:?}"))?;
    ensure(guidance_signal(5.0, 0.0, 5.0, 5.0).sphere_green_fraction == 0.0, || "5 mm is not fully red".into())?;
    ensure(guidance_signal(2.5, 0.0, 5.0, 5.0).sphere_green_fraction == 0.5, || "2.5 mm is not half green".into())?;
    let sweep: Vec<f64> = (0..100).map(|i| i as f64 * 0.08).collect();
    for w in sweep.windows(2) {
        let (a, b) = (guidance_signal(w[0], 1.0, 5.0, 5.0), guidance_signal(w[1], 1.0, 5.0, 5.0));
        ensure(b.sphere_green_fraction <= a.sphere_green_fraction, || format!("sphere rises between {} and {} mm", w[0], w[1]))?;
        let (a, b) = (guidance_signal(1.0, w[0], 5.0, 5.0), guidance_signal(1.0, w[1], 5.0, 5.0));
        ensure(b.cylinder_green_fraction <= a.cylinder_green_fraction, || format!("cylinder rises between {} and {} deg", w[0], w[1]))?;
    }
    Ok("three examples exact, both channels monotone over 100 points".into())
}

fn statistics() -> Outcome {
    let fixture: Vec<ErrorSample> = [1.0, 2.0, 3.0]
        .iter()
        .map(|&v| ErrorSample {
            translation_mm: v,
            rotation_deg: v,
            ..Default::default()
        })
        .collect();
    let s = summarize(&fixture).map_err(|e| e.to_string())?;
    let t = s.translation_mm;
    ensure((t.mean, t.sd, t.median) == (2.0, 1.0, 2.0), || format!("{{1,2,3}} gives {t:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let samples: Vec<ErrorSample> = (0..1000)
        .map(|_| ErrorSample {
            translation_mm: rng.random_range(0.0..10.0),
            rotation_deg: rng.random::<f64>().powi(3) * 4.0,
            ..Default::default()
        })
        .collect();
    let s = summarize(&samples).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (values, ours) in [
        (samples.iter().map(|x| x.translation_mm).collect::<Vec<_>>(), s.translation_mm),
        (samples.iter().map(|x| x.rotation_deg).collect(), s.rotation_deg),
    ] {
        // Two-pass reference: mean first, then squared deviations.
        let n = values.len() as f64;
        let mut mean = 0.0;
        for v in &values {
            mean += v.abs();
        }
        mean /= n;
        let mut ss = 0.0;
        for v in &values {
            ss += (v.abs() - mean) * (v.abs() - mean);
        }
        let sd = (ss / (n - 1.0)).sqrt();
        let mut sorted: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = (sorted[499] + sorted[500]) / 2.0;
        worst = worst.max((ours.mean - mean).abs()).max((ours.sd - sd).abs()).max((ours.median - median).abs());
    }
    ensure(worst < 1e-9, || format!("differs from two-pass oracle by {worst:e}"))?;
    Ok(format!("{{1,2,3}} exact, 1000 samples within {worst:.1e} of two-pass oracle"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("zero-noise pipeline exactness", zero_noise_pipeline),
        ("registration matches grid-search oracle", registration_oracle),
        ("correspondence matches exhaustive oracle", correspondence_oracle),
        ("relative tracking error regime", relative_tracking_regime),
        ("guided task structure", task_structure),
        ("one-metre headset range", one_metre_transition),
        ("protocol correctness", protocol_correctness),
        ("calibration round trip", calibration_algebra),
        ("guidance law", guidance_law),
        ("summary statistics", statistics),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:2} PASS  {name}: {detail} [{:.1?}]", i + 1, start.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("criterion {:2} FAIL  {name}: {detail} [{:.1?}]", i + 1, start.elapsed());
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
