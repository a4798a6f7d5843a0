use proptest::prelude::*;
use tdpa_core::geometry::spatial_distance;
use tdpa_core::oracle::{pairwise_gated_scores, OracleKind, PairwiseScores, SyntheticIdentityParams};
use tdpa_core::tracklet::{BuilderParams, TrackletStore};
use tdpa_core::{BBox, Detection};
use tdpa_testkit::{check_builder_decisions, gated_scores, random_stream};

fn noisy_oracle() -> OracleKind<f64> {
    let mut p = SyntheticIdentityParams::new(0.9, 0.35);
    p.cross_id_mean = 0.2;
    OracleKind::SyntheticIdentity(p)
}

#[test]
fn builder_decisions_match_condition_recheck() {
    let params = BuilderParams { alpha: 0.5, beta: 0.1, gamma: 0.3 };
    let oracle = noisy_oracle();
    let mut frames_checked = 0;
    let (mut ext, mut spawn) = (0, 0);
    for seed in 0..5u64 {
        let stream = random_stream(77 + seed, 101, 5);
        let mut store = TrackletStore::new();
        store.init_tracklets(stream[0][0].clone(), 1.0).unwrap();
        let mut frozen_before: Vec<bool> = vec![false];
        for frame in &stream[1..] {
            let prev = store.prev_dets().to_vec();
            let prev_ids: Vec<u64> = prev.iter().map(|d| d.det_id).collect();
            let expected = gated_scores(&oracle, frame, &prev, params.gamma, seed);
            let pairwise = pairwise_gated_scores(&oracle, frame, &prev, params.gamma, seed).unwrap();
            for (i, row) in expected.iter().enumerate() {
                assert_eq!(pairwise.row(i), &row[..]);
            }
            let zeros = vec![0.0; frame.len()];
            let before: Vec<usize> = store.tracklets().iter().map(|t| t.len()).collect();
            let update = store.update_tracklets(frame.clone(), &zeros, &pairwise, &params).unwrap();
            check_builder_decisions(&expected, &prev_ids, &update.decisions, &params).unwrap();
            frames_checked += 1;
            ext += update.extended.len();
            spawn += update.created.len();

            // Every detection lands in exactly one tracklet, one per tracklet per frame.
            let t = update.t;
            let mut owners = 0;
            for (id, tr) in store.tracklets().iter().enumerate() {
                let here = tr.detections.iter().filter(|d| d.t == t).count();
                assert!(here <= 1);
                owners += here;
                for w in tr.detections.windows(2) {
                    assert_eq!(w[1].t, w[0].t + 1, "gap inside tracklet {id}");
                }
                if id < frozen_before.len() && frozen_before[id] {
                    assert!(tr.frozen);
                    assert_eq!(tr.len(), before[id]);
                }
            }
            assert_eq!(owners, frame.len());
            assert_eq!(store.tracklets().iter().filter(|t| t.is_ff).count(), 1);
            frozen_before = store.tracklets().iter().map(|t| t.frozen).collect();
        }
    }
    assert_eq!(frames_checked, 500);
    assert!(ext > 100 && spawn > 100, "ext {ext} spawn {spawn}");
}

fn det(t: usize, id: u64, x: f64, y: f64, obj: i64) -> Detection<f64> {
    Detection::new(t, BBox::new(x, y, 0.1, 0.1).unwrap(), 0.5, vec![1.0], id).with_object(obj)
}

prop_compose! {
    fn frame(t: usize, base: u64, max: usize)(pts in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0i64..3), 0..max)) -> Vec<Detection<f64>> {
        pts.into_iter().enumerate().map(|(k, (x, y, o))| det(t, base + k as u64, x, y, o)).collect()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn larger_beta_never_adds_extensions(
        prev in frame(1, 100, 5),
        cur in frame(2, 200, 5),
        scores in prop::collection::vec(-1.0..2.0f64, 25),
        b1 in 0.0..0.5f64,
        db in 0.0..0.5f64,
    ) {
        let mut store = TrackletStore::new();
        store.init_tracklets(det(0, 0, 0.5, 0.5, 0), 1.0).unwrap();
        let empty = PairwiseScores::filled(prev.len(), 1, f64::NEG_INFINITY);
        store.update_tracklets(prev.clone(), &vec![0.0; prev.len()], &empty, &BuilderParams::default()).unwrap();
        let rows: Vec<Vec<f64>> = (0..cur.len()).map(|i| (0..prev.len()).map(|j| scores[i * 5 + j]).collect()).collect();
        let pairwise = if cur.is_empty() { PairwiseScores::filled(0, prev.len(), 0.0) } else { PairwiseScores::from_rows(rows).unwrap() };
        let zeros = vec![0.0; cur.len()];
        let lo = BuilderParams { alpha: 0.0, beta: b1, gamma: 0.3 };
        let hi = BuilderParams { beta: b1 + db, ..lo };
        let a = store.clone().update_tracklets(cur.clone(), &zeros, &pairwise, &lo).unwrap();
        let b = store.clone().update_tracklets(cur.clone(), &zeros, &pairwise, &hi).unwrap();
        for (x, y) in a.decisions.iter().zip(&b.decisions) {
            prop_assert!(!y.extended || x.extended);
        }
    }

    #[test]
    fn gating_is_sound(
        prev in frame(1, 100, 6),
        cur in frame(2, 200, 6),
        gamma in 0.01..0.6f64,
    ) {
        let oracle = OracleKind::SyntheticIdentity(SyntheticIdentityParams::new(1.0, 0.2));
        let m = pairwise_gated_scores(&oracle, &cur, &prev, gamma, 3).unwrap();
        for (i, c) in cur.iter().enumerate() {
            for (j, p) in prev.iter().enumerate() {
                let d = spatial_distance(&c.bbox, &p.bbox);
                if m.get(i, j).is_finite() {
                    prop_assert!(d <= gamma);
                } else {
                    prop_assert!(d > gamma);
                }
            }
        }
    }
}
