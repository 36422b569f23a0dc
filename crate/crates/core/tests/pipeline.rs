use driftwatch::imgcore::AffineTransform;
use driftwatch::motion::Stability;
use driftwatch::pipeline::{
    run_scenario, Analyzer, AnalyzerConfig, FrameReport, Input, RunConfig, RunRequest,
};
use driftwatch::simulator::presets::{drift_scenario, static_stack};
use driftwatch::simulator::{Renderer, Scenario};
use driftwatch::Error;

fn request(dir: &std::path::Path) -> RunRequest {
    RunRequest {
        config: RunConfig::default(),
        input: Input::Scenario("in-memory".into()),
        out_dir: dir.to_path_buf(),
        annotate: false,
    }
}

fn reports(sc: &Scenario) -> (Vec<FrameReport>, driftwatch::pipeline::RunSummary) {
    let dir = tempfile::tempdir().unwrap();
    let mut seen = Vec::new();
    let summary = run_scenario(&request(dir.path()), sc, &mut |r: &FrameReport| {
        seen.push(r.clone())
    })
    .unwrap();
    (seen, summary)
}

#[test]
fn static_stack_is_quiet() {
    let (seen, summary) = reports(&static_stack(20, 6, AffineTransform::IDENTITY, 2.0, 8));
    assert_eq!(summary.frames, 20);
    assert_eq!(summary.alerts, 0);
    assert_eq!(summary.confirmed_tracks, 6);
    assert_eq!(summary.tracks_created, 6);
    assert_eq!(summary.degraded_frames, 0);
    let last = seen.last().unwrap();
    assert_eq!(last.n_containers, 6);
    for r in &last.residuals {
        assert!(r.sample.v_rel.abs() < 0.1, "{r:?}");
        assert_eq!(r.verdict.stability, Stability::Stable);
    }
}

#[test]
fn one_drifting_container_raises_one_alert() {
    let (sc, label) = drift_scenario(4, 0.8, 12, 40);
    let (seen, summary) = reports(&sc);
    assert_eq!(summary.alerts, 1, "{:?}", summary.alert_track_ids);
    let (frame, alert) = seen
        .iter()
        .find_map(|r| r.alerts.first().map(|a| (r, a.clone())))
        .expect("an alert was raised");
    let row = frame
        .residuals
        .iter()
        .find(|r| r.track_id == alert.track_id)
        .unwrap();
    assert_eq!(row.mask_label, label);
    assert!(alert.frame_index > 12 && alert.frame_index <= 32);
    assert_eq!(alert.time_s, alert.frame_index as f64 / 10.0);
    assert!(alert.sustained_frames >= 10);
    // the drifting track stays unstable while the others stay stable
    let last = seen.last().unwrap();
    for r in &last.residuals {
        let expected = if r.mask_label == label {
            Stability::Unstable
        } else {
            Stability::Stable
        };
        assert_eq!(r.verdict.stability, expected, "label {}", r.mask_label);
    }
}

#[test]
fn analyzer_rejects_out_of_order_and_resized_frames() {
    let sc = static_stack(3, 4, AffineTransform::IDENTITY, 0.0, 1);
    let r = Renderer::new(&sc).unwrap();
    let mut a = Analyzer::new(AnalyzerConfig {
        fps: 10.0,
        ..Default::default()
    })
    .unwrap();
    let f0 = r.render(0).unwrap();
    a.push_frame(3, f0.frame.clone(), f0.masks.clone()).unwrap();
    assert!(matches!(
        a.push_frame(3, f0.frame.clone(), vec![]),
        Err(Error::Contract(_))
    ));
    let small = driftwatch::GrayFrame::filled(64, 64, 1).unwrap();
    assert!(matches!(
        a.push_frame(4, small, vec![]),
        Err(Error::Data { frame: 4, .. })
    ));
    // a gap in indices is allowed
    let f1 = r.render(1).unwrap();
    assert!(a.push_frame(10, f1.frame, f1.masks).is_ok());
}

#[test]
fn frames_without_masks_produce_no_samples() {
    let sc = static_stack(6, 4, AffineTransform::IDENTITY, 1.0, 2);
    let r = Renderer::new(&sc).unwrap();
    let mut a = Analyzer::new(AnalyzerConfig {
        fps: 10.0,
        ..Default::default()
    })
    .unwrap();
    for t in 0..sc.duration {
        let rep = a
            .push_frame(t as u64, r.render(t).unwrap().frame, vec![])
            .unwrap();
        assert!(rep.residuals.is_empty() && rep.alerts.is_empty());
        if t > 0 {
            let g = rep.gmc.unwrap();
            assert!(!g.degraded);
            assert!(g.interior_mean_abs_u < 0.1);
        }
    }
}
