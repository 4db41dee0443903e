use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::Mutex;

use chatcam_core::camera::{axis_angle, geodesic_angle, CameraFrame, Trajectory};
use chatcam_core::planner::{
    compose, llm_plan, parse_query, plan_query, repair_plan, AnchorRole, ChatClient, ChatMessage, HttpChatClient, Plan, PlanStep,
};
use chatcam_core::{Error, Result};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn atomic(p: &str) -> PlanStep {
    PlanStep::Atomic { prompt: p.into(), duration_hint: None }
}

fn anchor(p: &str, role: AnchorRole, attaches_to: usize) -> PlanStep {
    PlanStep::Anchor { prompt: p.into(), role, attaches_to }
}

// ---- grammar ----

#[test]
fn single_motion_is_one_atomic_step() {
    assert_eq!(parse_query("pan left slowly").unwrap(), Plan::new(vec![atomic("pan left slowly")]));
}

#[test]
fn leading_start_anchor_binds_to_next_motion() {
    let plan = parse_query("starting from the red chair, dolly forward, then pan right").unwrap();
    assert_eq!(
        plan,
        Plan::new(vec![atomic("dolly forward"), anchor("red chair", AnchorRole::Start, 0), atomic("pan right")])
    );
}

#[test]
fn grammar_derivations() {
    let cases: Vec<(&str, Vec<PlanStep>)> = vec![
        (
            "starting above the fountain, orbit right, then dolly in",
            vec![atomic("orbit right"), anchor("fountain", AnchorRole::Start, 0), atomic("dolly in")],
        ),
        ("dolly in, ending at the door", vec![atomic("dolly in"), anchor("door", AnchorRole::End, 0)]),
        (
            "orbit right from the fountain to the old bench",
            vec![atomic("orbit right"), anchor("fountain", AnchorRole::Start, 0), anchor("old bench", AnchorRole::End, 0)],
        ),
        (
            "pan left after that tilt up ending above the tower",
            vec![atomic("pan left"), atomic("tilt up"), anchor("tower", AnchorRole::End, 1)],
        ),
        (
            "truck right; pedestal up and then zoom in",
            vec![atomic("truck right"), atomic("pedestal up"), atomic("zoom in")],
        ),
        (
            "orbit left starting near a statue, then pan right, ending on the gate",
            vec![atomic("orbit left"), anchor("statue", AnchorRole::Start, 0), atomic("pan right"), anchor("gate", AnchorRole::End, 1)],
        ),
    ];
    for (q, steps) in cases {
        assert_eq!(parse_query(q).unwrap(), Plan::new(steps), "query: {q}");
    }
}

#[test]
fn duration_phrases_become_hints() {
    let plan = parse_query("pan left for 3 seconds, then dolly in for 1.5 s").unwrap();
    assert_eq!(
        plan.steps,
        vec![
            PlanStep::Atomic { prompt: "pan left".into(), duration_hint: Some(3.0) },
            PlanStep::Atomic { prompt: "dolly in".into(), duration_hint: Some(1.5) },
        ]
    );
}

#[test]
fn unparsable_queries_report_the_span() {
    assert!(matches!(parse_query(""), Err(Error::UnparsableQuery { .. })));
    assert!(matches!(parse_query("   "), Err(Error::UnparsableQuery { .. })));
    match parse_query("pan left, then make me a sandwich") {
        Err(Error::UnparsableQuery { span }) => assert_eq!(span, "make me a sandwich"),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(parse_query("starting from the chair"), Err(Error::UnparsableQuery { .. })));
}

#[test]
fn duplicate_anchor_roles_are_rejected() {
    assert!(matches!(
        parse_query("starting at the door, starting at the window, pan left"),
        Err(Error::UnparsableQuery { .. })
    ));
}

#[test]
fn parse_is_deterministic_and_round_trips() {
    let queries = [
        "pan left slowly",
        "starting from the red chair, dolly forward, then pan right",
        "orbit right from the fountain to the old bench for 4 seconds",
        "tilt up, then roll clockwise, after that zoom out quickly, ending at the clock",
    ];
    for q in queries {
        let a = parse_query(q).unwrap();
        assert_eq!(a, parse_query(q).unwrap());
        let json = a.to_json();
        assert_eq!(Plan::from_json(&json).unwrap(), a);
        assert!(json.contains("\"type\":\"atomic\""));
        assert!(json.contains("\"version\":1"));
    }
}

#[test]
fn plan_invariants() {
    assert!(Plan::new(vec![]).validate().is_err());
    assert!(Plan::new(vec![anchor("x", AnchorRole::Start, 0)]).validate().is_err());
    assert!(Plan::new(vec![atomic("pan left"), anchor("x", AnchorRole::Start, 1)]).validate().is_err());
    assert!(Plan::new(vec![atomic("pan left"), anchor("x", AnchorRole::End, 0), anchor("y", AnchorRole::End, 0)])
        .validate()
        .is_err());
    assert!(Plan::new(vec![atomic("pan left"), anchor("x", AnchorRole::End, 0), anchor("y", AnchorRole::Start, 0)])
        .validate()
        .is_ok());
    let bad_version = Plan { version: 2, steps: vec![atomic("pan")] };
    assert!(matches!(bad_version.validate(), Err(Error::PlanValidationFailed(_))));
}

// ---- chat planner ----

struct Scripted {
    replies: Mutex<Vec<Result<String>>>,
    seen: Mutex<Vec<Vec<ChatMessage>>>,
}

impl Scripted {
    fn new(replies: Vec<Result<String>>) -> Self {
        Self { replies: Mutex::new(replies.into_iter().rev().collect()), seen: Mutex::new(vec![]) }
    }
}

impl ChatClient for Scripted {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        self.seen.lock().unwrap().push(messages.to_vec());
        self.replies.lock().unwrap().pop().expect("unexpected extra call")
    }
}

fn sample_plan() -> Plan {
    Plan::new(vec![atomic("orbit right"), anchor("fountain", AnchorRole::Start, 0), atomic("dolly in")])
}

#[test]
fn valid_reply_passes_through_verbatim() {
    let client = Scripted::new(vec![Ok(format!("Here you go:\n```json\n{}\n```", sample_plan().to_json()))]);
    let p = llm_plan("whatever", &client).unwrap();
    assert_eq!(p.plan, sample_plan());
    assert_eq!((p.attempts, p.repaired), (1, false));
    let seen = client.seen.lock().unwrap();
    assert_eq!(seen[0][0].role, "system");
    assert_eq!(seen[0][1].content, "whatever");
}

#[test]
fn malformed_twice_fails_validation() {
    let client = Scripted::new(vec![Ok("no idea".into()), Ok("{not json".into())]);
    assert!(matches!(llm_plan("q", &client), Err(Error::PlanValidationFailed(_))));
    let seen = client.seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert!(seen[1].last().unwrap().content.contains("invalid"));
}

#[test]
fn retry_recovers_from_one_bad_reply() {
    let client = Scripted::new(vec![Ok("[]".into()), Ok(sample_plan().to_json())]);
    let p = llm_plan("q", &client).unwrap();
    assert_eq!((p.plan, p.attempts), (sample_plan(), 2));
}

#[test]
fn out_of_range_anchor_is_repaired() {
    let reply = r#"{"version":1,"steps":[{"type":"atomic","prompt":"pan left"},{"type":"anchor","prompt":"tree","role":"start","attaches_to":5}]}"#;
    let client = Scripted::new(vec![Ok(reply.into())]);
    let p = llm_plan("q", &client).unwrap();
    assert!(p.repaired);
    assert_eq!(p.plan, Plan::new(vec![atomic("pan left")]));
}

#[test]
fn unreachable_planner_falls_back_to_grammar() {
    let client = Scripted::new(vec![Err(Error::RemotePlannerUnavailable("down".into()))]);
    assert!(matches!(llm_plan("pan left", &client), Err(Error::RemotePlannerUnavailable(_))));
    let client = Scripted::new(vec![Err(Error::RemotePlannerUnavailable("down".into()))]);
    let (plan, warning) = plan_query("pan left", Some(&client)).unwrap();
    assert_eq!(plan, parse_query("pan left").unwrap());
    assert!(warning.unwrap().contains("RemotePlannerUnavailable"));
}

fn mutate(rng: &mut ChaCha8Rng, v: &mut serde_json::Value) {
    let steps = v["steps"].as_array_mut().unwrap();
    match rng.gen_range(0..9) {
        0 => {
            let i = rng.gen_range(0..steps.len());
            steps[i]["attaches_to"] = serde_json::json!(rng.gen_range(0..10));
        }
        1 => {
            let i = rng.gen_range(0..steps.len());
            steps[i].as_object_mut().unwrap().remove("role");
        }
        2 => {
            let i = rng.gen_range(0..steps.len());
            steps[i]["type"] = serde_json::json!(["atomic", "anchor", "bogus", 3])[rng.gen_range(0..4)].clone();
        }
        3 => {
            let i = rng.gen_range(0..steps.len());
            steps[i]["prompt"] = serde_json::json!(["", "  ", null, 7])[rng.gen_range(0..4)].clone();
        }
        4 => {
            let i = rng.gen_range(0..steps.len());
            steps.remove(i);
        }
        5 => {
            let i = rng.gen_range(0..steps.len());
            let s = steps[i].clone();
            steps.push(s);
        }
        6 => v["version"] = serde_json::json!(rng.gen_range(0..4)),
        7 => {
            let i = rng.gen_range(0..steps.len());
            steps[i]["duration_hint"] = serde_json::json!([-1.0, 0.0, 2.5][rng.gen_range(0..3)]);
        }
        _ => {
            let i = rng.gen_range(0..steps.len());
            steps[i]["role"] = serde_json::json!("middle");
        }
    }
}

#[test]
fn mutated_replies_are_repaired_or_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let base: serde_json::Value = serde_json::from_str(
        &Plan::new(vec![
            atomic("orbit right"),
            anchor("fountain", AnchorRole::Start, 0),
            atomic("dolly in"),
            anchor("door", AnchorRole::End, 1),
        ])
        .to_json(),
    )
    .unwrap();
    let (mut ok, mut rejected) = (0, 0);
    for _ in 0..100 {
        let mut v = base.clone();
        for _ in 0..rng.gen_range(1..4) {
            if v["steps"].as_array().unwrap().is_empty() {
                break;
            }
            mutate(&mut rng, &mut v);
        }
        let client = Scripted::new(vec![Ok(v.to_string()), Ok(v.to_string())]);
        match llm_plan("q", &client) {
            Ok(p) => {
                p.plan.validate().unwrap();
                ok += 1;
            }
            Err(Error::PlanValidationFailed(_)) => rejected += 1,
            Err(e) => panic!("unexpected error {e}"),
        }
        if let Some(p) = repair_plan(&v) {
            p.validate().unwrap();
        }
    }
    assert_eq!(ok + rejected, 100);
    assert!(ok > 0);
}

#[test]
fn http_chat_client_reads_first_choice() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let content = serde_json::to_string(&sample_plan().to_json()).unwrap();
    let body = format!(r#"{{"choices":[{{"message":{{"role":"assistant","content":{content}}}}}]}}"#);
    let handle = std::thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        let mut buf = vec![0u8; 65536];
        let mut got = Vec::new();
        loop {
            let n = s.read(&mut buf).unwrap();
            got.extend_from_slice(&buf[..n]);
            let t = String::from_utf8_lossy(&got).to_string();
            if let Some(end) = t.find("\r\n\r\n") {
                let len: usize = t
                    .lines()
                    .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse().unwrap()))
                    .unwrap_or(0);
                let chunked = t.to_ascii_lowercase().contains("transfer-encoding: chunked");
                let done = if chunked { t.ends_with("0\r\n\r\n") } else { got.len() >= end + 4 + len };
                if done || n == 0 {
                    break;
                }
            }
        }
        let resp = format!("HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}", body.len());
        s.write_all(resp.as_bytes()).unwrap();
        String::from_utf8_lossy(&got).to_string()
    });
    let client = HttpChatClient { endpoint: format!("http://{addr}/v1/chat/completions"), model: "m".into(), api_key: None };
    let p = llm_plan("orbit then dolly", &client).unwrap();
    assert_eq!(p.plan, sample_plan());
    let req = handle.join().unwrap();
    assert!(req.starts_with("POST /v1/chat/completions"));
    let body: serde_json::Value = serde_json::from_str(&req[req.find("\r\n\r\n").unwrap() + 4..]).unwrap();
    assert_eq!(body["model"], "m");
    assert_eq!(body["messages"][1]["content"], "orbit then dolly");
}

// ---- composition ----

fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
    axis_angle(axis, rng.gen_range(-3.0..3.0))
}

fn random_frame(rng: &mut impl Rng) -> CameraFrame {
    let t = Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
    CameraFrame::from_matrix(&random_rotation(rng), t, rng.gen_range(0.5..1.5))
}

fn random_traj(rng: &mut impl Rng) -> Trajectory {
    let m = rng.gen_range(4..12);
    let step = Vector3::new(rng.gen_range(0.1..0.5), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
    let spin = axis_angle(Vector3::new(rng.gen_range(-1.0..1.0), 1.0, 0.3).normalize(), rng.gen_range(-0.2..0.2));
    let mut r = random_rotation(rng);
    let mut t = Vector3::new(rng.gen_range(-1.0..1.0), 0.0, 0.0);
    let f0 = rng.gen_range(0.6..1.2);
    let frames = (0..m)
        .map(|i| {
            let f = CameraFrame::from_matrix(&r, t, f0 * (1.0 + 0.02 * i as f64));
            r = spin * r;
            t += r * step;
            f
        })
        .collect();
    Trajectory::new(frames, rng.gen_range(1.0..5.0)).unwrap()
}

fn max_abs(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).amax()
}

#[test]
fn single_unanchored_atomic_is_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = random_traj(&mut rng);
    let c = compose(&Plan::new(vec![atomic("pan left")]), &[t.clone()], &[]).unwrap();
    assert_eq!(c.trajectory, t);
}

#[test]
fn start_anchor_sets_first_pose() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = random_traj(&mut rng);
    let p = random_frame(&mut rng);
    let plan = Plan::new(vec![atomic("pan left"), anchor("a", AnchorRole::Start, 0)]);
    let c = compose(&plan, &[t], &[p]).unwrap();
    let first = c.trajectory.first();
    assert_eq!(first.trans, p.trans);
    assert!(geodesic_angle(&first.rotation(), &p.rotation()) < 1e-9);
    assert_eq!(c.anchor_frames, vec![0]);
}

#[test]
fn two_atomics_between_start_and_end_anchors_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (t0, t1) = (random_traj(&mut rng), random_traj(&mut rng));
    let (a, b) = (random_frame(&mut rng), random_frame(&mut rng));
    let plan = Plan::new(vec![atomic("x"), anchor("A", AnchorRole::Start, 0), atomic("y"), anchor("B", AnchorRole::End, 1)]);
    let c = compose(&plan, &[t0.clone(), t1.clone()], &[a, b]).unwrap();

    // oracle for the first segment: rigid motion taking its first pose onto A
    let r0 = a.rotation() * t0.first().rotation().transpose();
    let off0 = a.trans - r0 * t0.first().trans;
    for (k, f) in t0.frames().iter().enumerate() {
        let got = &c.trajectory.frames()[k];
        assert!(max_abs(&got.trans, &(r0 * f.trans + off0)) < 1e-9);
        assert!(geodesic_angle(&got.rotation(), &(r0 * f.rotation())) < 1e-9);
    }
    // oracle for the second: chained rigidly, then scaled and rotated (Rodrigues) about its start
    let s = (r0 * t0.last().trans + off0, r0 * t0.last().rotation());
    let r1 = s.1 * t1.first().rotation().transpose();
    let rel: Vec<Vector3<f64>> = t1.frames().iter().map(|f| r1 * (f.trans - t1.first().trans)).collect();
    let v = *rel.last().unwrap();
    let w = b.trans - s.0;
    let scale = w.norm() / v.norm();
    let (vh, wh) = (v.normalize(), w.normalize());
    let axis = vh.cross(&wh);
    let (sin, cos) = (axis.norm(), vh.dot(&wh));
    let k = axis / sin;
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    let rod = Matrix3::identity() + kx * sin + kx * kx * (1.0 - cos);
    let off = t0.len() - 1;
    for (i, r) in rel.iter().enumerate() {
        let got = c.trajectory.frames()[off + i].trans;
        assert!(max_abs(&got, &(s.0 + rod * r * scale)) < 1e-9, "frame {i}");
    }
    assert!(c.max_junction_gap() < 1e-9);
    assert!(max_abs(&c.trajectory.last().trans, &b.trans) < 1e-6);
    assert!(geodesic_angle(&c.trajectory.last().rotation(), &b.rotation()) < 1e-9);
    assert_eq!(c.trajectory.len(), t0.len() + t1.len() - 1);
    assert!((c.trajectory.duration_s() - t0.duration_s() - t1.duration_s()).abs() < 1e-12);
}

#[test]
fn random_plans_are_continuous_and_pass_through_anchors() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..100 {
        let n = rng.gen_range(1..5);
        let trajs: Vec<Trajectory> = (0..n).map(|_| random_traj(&mut rng)).collect();
        let before = trajs.clone();
        let mut steps = Vec::new();
        let mut anchors = Vec::new();
        let mut pinned = vec![false; n + 1];
        for i in 0..n {
            steps.push(atomic(&format!("motion {i}")));
            for (role, j) in [(AnchorRole::Start, i), (AnchorRole::End, i + 1)] {
                if !pinned[j] && rng.gen_bool(0.35) {
                    pinned[j] = true;
                    steps.push(anchor("somewhere", role, i));
                    anchors.push(random_frame(&mut rng));
                }
            }
        }
        let plan = Plan::new(steps);
        let c = compose(&plan, &trajs, &anchors).unwrap_or_else(|e| panic!("case {case}: {e}"));
        assert_eq!(trajs, before, "inputs must not change");
        assert!(c.max_junction_gap() < 1e-9, "case {case}");
        for (a, &idx) in anchors.iter().zip(&c.anchor_frames) {
            assert!(max_abs(&c.trajectory.frames()[idx].trans, &a.trans) < 1e-6, "case {case}");
        }
        let total: usize = trajs.iter().map(|t| t.len()).sum();
        assert_eq!(c.trajectory.len(), total - (n - 1));
        let dur: f64 = trajs.iter().map(|t| t.duration_s()).sum();
        assert!((c.trajectory.duration_s() - dur).abs() < 1e-9);
        for (seg, &start) in c.segments.iter().zip(&c.segment_starts) {
            for (k, f) in seg.frames().iter().enumerate() {
                assert_eq!(&c.trajectory.frames()[start + k].trans, &f.trans);
            }
        }
    }
}

#[test]
fn coincident_anchors_on_moving_segment_are_infeasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = random_traj(&mut rng);
    let a = random_frame(&mut rng);
    let b = CameraFrame::from_matrix(&random_rotation(&mut rng), a.trans, 1.0);
    let plan = Plan::new(vec![atomic("x"), anchor("A", AnchorRole::Start, 0), anchor("B", AnchorRole::End, 0)]);
    assert!(matches!(compose(&plan, &[t], &[a, b]), Err(Error::InfeasibleComposition(_))));
}

#[test]
fn conflicting_junction_pins_are_infeasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ts = [random_traj(&mut rng), random_traj(&mut rng)];
    let plan = Plan::new(vec![atomic("x"), anchor("A", AnchorRole::End, 0), atomic("y"), anchor("B", AnchorRole::Start, 1)]);
    let (a, b) = (random_frame(&mut rng), random_frame(&mut rng));
    assert!(matches!(compose(&plan, &ts, &[a, b]), Err(Error::InfeasibleComposition(_))));
    // the same pose twice is fine
    assert!(compose(&plan, &ts, &[a, a]).is_ok());
}

#[test]
fn mismatched_inputs_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t = random_traj(&mut rng);
    let plan = Plan::new(vec![atomic("x"), anchor("A", AnchorRole::Start, 0)]);
    assert!(matches!(compose(&plan, &[t.clone(), t.clone()], &[CameraFrame::canonical()]), Err(Error::LengthMismatch(2, 1))));
    assert!(matches!(compose(&plan, &[t], &[]), Err(Error::LengthMismatch(0, 1))));
}

#[test]
fn duration_hints_override_generated_durations() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ts = [random_traj(&mut rng), random_traj(&mut rng)];
    let plan = Plan::new(vec![PlanStep::Atomic { prompt: "x".into(), duration_hint: Some(2.0) }, atomic("y")]);
    let c = compose(&plan, &ts, &[]).unwrap();
    assert!((c.trajectory.duration_s() - (2.0 + ts[1].duration_s())).abs() < 1e-12);
}

#[test]
fn chained_segments_keep_focal_continuous() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ts = [random_traj(&mut rng), random_traj(&mut rng)];
    let c = compose(&Plan::new(vec![atomic("x"), atomic("y")]), &ts, &[]).unwrap();
    assert_eq!(c.segments[0].last().focal, c.segments[1].first().focal);
}
