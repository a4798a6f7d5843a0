use tdpa_core::metrics::{identity_accuracy, PredictionRecord};
use tdpa_core::oracle::{cosine, OracleKind, SyntheticIdentityParams};
use tdpa_core::simulator::{generate, preset, DetectorNoise, ObjectSpec, ScenarioSpec, Waypoint, PRESET_NAMES};
use tdpa_core::tracker::{TdpaConfig, TdpaTracker};
use tdpa_core::Scenario;

#[test]
fn truth_frames_contain_target_unless_missed() {
    for name in PRESET_NAMES {
        for seed in 0..5 {
            let mut spec = preset(name).unwrap();
            spec.seed = seed;
            let sc: Scenario<f64> = generate(&spec).unwrap();
            assert_eq!(sc.stream.len(), spec.n_frames);
            for (t, (frame, truth)) in sc.stream.iter().zip(&sc.truth).enumerate() {
                let has = frame.iter().any(|d| d.object_id == Some(sc.target_id));
                let missed = sc.misses.contains(&(t, sc.target_id));
                if truth.is_some() {
                    assert!(has ^ missed, "{name} seed {seed} t {t}");
                } else {
                    assert!(!has);
                }
            }
            let mut ids: Vec<u64> = sc.stream.iter().flatten().map(|d| d.det_id).collect();
            let n = ids.len();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), n);
        }
    }
}

#[test]
fn noise_free_embeddings_separate_identities() {
    for name in PRESET_NAMES {
        let mut spec = preset(name).unwrap();
        for o in &mut spec.objects {
            o.embedding_noise_sd = 0.0;
        }
        spec.detector.clutter_rate = 0.0;
        let sc: Scenario<f64> = generate(&spec).unwrap();
        let dets: Vec<_> = sc.stream.iter().flatten().take(200).collect();
        for a in &dets {
            for b in &dets {
                for c in &dets {
                    if a.object_id == b.object_id && a.object_id != c.object_id {
                        assert!(cosine(&a.embedding, &b.embedding) > cosine(&a.embedding, &c.embedding), "{name}");
                    }
                }
            }
        }
    }
}

#[test]
fn tdpa_follows_a_lone_noise_free_target() {
    let spec = ScenarioSpec {
        n_frames: 60,
        frame_w: 640.0,
        frame_h: 480.0,
        objects: vec![ObjectSpec {
            id: 3,
            is_target: true,
            waypoints: vec![
                Waypoint { t: 0, x: 0.2, y: 0.2, w: 0.1, h: 0.1 },
                Waypoint { t: 59, x: 0.7, y: 0.6, w: 0.1, h: 0.1 },
            ],
            visibility: vec![[0, 60]],
            embedding_prototype: vec![1.0, 0.0, 0.0, 0.0],
            embedding_noise_sd: 0.0,
            ff_score: 0.9,
        }],
        detector: DetectorNoise::default(),
        seed: 1,
    };
    let sc: Scenario<f64> = generate(&spec).unwrap();
    let oracle = OracleKind::SyntheticIdentity(SyntheticIdentityParams::new(1.0, 0.0));
    let mut tr = TdpaTracker::new(sc.template().clone(), oracle, TdpaConfig::default()).unwrap();
    let mut preds = vec![PredictionRecord { t: 0, bbox: sc.template().bbox, confidence: 1.0, present: true, object_id: Some(3) }];
    for frame in &sc.stream[1..] {
        preds.push(tr.step(frame.clone()).unwrap().into());
    }
    let sel: Vec<_> = preds.iter().map(|p| p.object_id).collect();
    assert_eq!(identity_accuracy::<f64>(&sel, &sc.truth_ids()).unwrap(), 1.0);
    assert_eq!(tr.store().len(), 1);
}
