use std::collections::BTreeMap;
use std::io::{pipe, Write};
use std::thread;

use seriescomp_core::cosim::{read_frame, serve_controller, write_frame, DeviceLink, Frame, FrameKind, LockstepLink};
use seriescomp_core::io::{calibrate_static, CalibrationTargets, GcmCase, GcmTopology};
use seriescomp_core::scenario::{MemorySink, ScenarioSpec, Simulation};

fn case3(t_end: f64) -> ScenarioSpec {
    let cal = calibrate_static(&GcmTopology::default(), &CalibrationTargets::default()).unwrap();
    let mut s = GcmCase::Case3.scenario(&cal);
    s.t_end_s = t_end;
    s
}

/// Link to a controller thread over in-memory pipes.
fn threaded_link(spec: &ScenarioSpec, deployment: &str) -> (Box<dyn DeviceLink>, thread::JoinHandle<()>) {
    let (to_ctrl_r, to_ctrl_w) = pipe().unwrap();
    let (from_ctrl_r, from_ctrl_w) = pipe().unwrap();
    let cfg = spec.deployment(deployment).unwrap().clone();
    let dt = spec.dt_s;
    let h = thread::spawn(move || {
        let _ = serve_controller(to_ctrl_r, from_ctrl_w, &cfg, dt);
    });
    let link = LockstepLink::connect(from_ctrl_r, to_ctrl_w, 5000).unwrap();
    (Box::new(link), h)
}

#[test]
fn remote_devices_give_the_same_trace() {
    let local = case3(2.2);
    let mut remote = local.clone();
    for d in &mut remote.deployments {
        d.remote = true;
    }
    let mut a = MemorySink::default();
    Simulation::new(local, BTreeMap::new()).unwrap().run_with(&mut a).unwrap();

    let mut links = BTreeMap::new();
    let mut handles = Vec::new();
    for d in &remote.deployments {
        let (l, h) = threaded_link(&remote, &d.id);
        links.insert(d.id.clone(), l);
        handles.push(h);
    }
    let mut b = MemorySink::default();
    let summary = Simulation::new(remote, links).unwrap().run_with(&mut b).unwrap();
    for h in handles {
        h.join().unwrap();
    }
    assert!(summary.completed);
    assert_eq!(a.columns, b.columns);
    assert!(a.rows == b.rows, "traces differ");
}

#[test]
fn controller_hangup_aborts_the_run_cleanly() {
    let mut spec = case3(0.5);
    spec.deployments[1].remote = true;
    let (to_ctrl_r, to_ctrl_w) = pipe().unwrap();
    let (from_ctrl_r, mut from_ctrl_w) = pipe().unwrap();
    // answers the handshake and a few samples, then goes away
    let h = thread::spawn(move || {
        let mut r = to_ctrl_r;
        let hello = read_frame(&mut r).unwrap().unwrap();
        write_frame(&mut from_ctrl_w, &Frame::new(FrameKind::Hello, hello.seq, 0, hello.channels)).unwrap();
        for _ in 0..3 {
            let req = read_frame(&mut r).unwrap().unwrap();
            let reply = vec![num_complex::Complex64::new(0.0, 0.0); 6];
            write_frame(&mut from_ctrl_w, &Frame::new(FrameKind::CommandReply, req.seq, req.t_ns, reply)).unwrap();
        }
        from_ctrl_w.flush().unwrap();
    });
    let link = LockstepLink::connect(from_ctrl_r, to_ctrl_w, 2000).unwrap();
    let mut links: BTreeMap<String, Box<dyn DeviceLink>> = BTreeMap::new();
    links.insert(spec.deployments[1].id.clone(), Box::new(link));
    let mut sink = MemorySink::default();
    let summary = Simulation::new(spec, links).unwrap().run_with(&mut sink).unwrap();
    h.join().unwrap();
    assert!(!summary.completed);
    assert!(summary.abort_reason.is_some());
    assert_eq!(sink.rows.len(), 3);
    assert!(sink.events.iter().any(|e| e.source == "cosim"));
}
