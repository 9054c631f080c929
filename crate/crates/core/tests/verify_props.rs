mod common;

use common::sort_rank;
use proptest::prelude::*;
use uttver_core::acoustic::{AcousticModel, Gmm, ScoreTable};
use uttver_core::align::{Alignment, Segment};
use uttver_core::features::{FeatureMatrix, Frames};
use uttver_core::lexicon::{PhoneId, PhoneInventory};
use uttver_core::verify::{
    compute_apr, compute_llr, compute_two_stage, decide, phone_rank, rank_of, Decision, Evidence,
    Method, VerifierConfig,
};
use uttver_core::Error;

fn inventory(n: usize) -> PhoneInventory {
    let names: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
    PhoneInventory::new(names, Some("sil")).unwrap()
}

/// `n` phones plus silence, phone `i` centred at `i * 0.7` with unit variance.
fn model(n: usize) -> AcousticModel {
    let g = |m: f64| Gmm::new(vec![1.0], vec![vec![m; 13]], vec![vec![1.0; 13]]).unwrap();
    let mut gmms: Vec<Gmm> = (0..n).map(|i| g(i as f64 * 0.7)).collect();
    gmms.push(g(-3.0));
    AcousticModel::new(inventory(n), gmms, g(1.0), "t").unwrap()
}

fn frames_strategy(max_frames: usize) -> impl Strategy<Value = Vec<f64>> {
    (1..=max_frames).prop_flat_map(|t| prop::collection::vec(-2.0f64..6.0, t * 13))
}

proptest! {
    #[test]
    fn rank_matches_full_sort(data in frames_strategy(6), target in 0usize..8) {
        let m = model(8);
        let seg = Frames::new(&data, 13);
        let scores: Vec<f64> = (0..8).map(|q| m.score_segment(PhoneId(q), seg).unwrap()).collect();
        prop_assert_eq!(phone_rank(&m, PhoneId(target), seg).unwrap(), sort_rank(&scores, target));
    }

    #[test]
    fn rank_of_matches_full_sort_with_ties(scores in prop::collection::vec(-3i32..=3, 1..12), pick in any::<prop::sample::Index>()) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let target = pick.index(scores.len());
        prop_assert_eq!(rank_of(&scores, target), sort_rank(&scores, target));
    }

    #[test]
    fn ranks_survive_monotone_maps_but_llr_does_not(
        data in prop::collection::vec(-2.0f64..6.0, 10 * 13),
        cut in 3usize..8,
        a in 0usize..6,
        b in 0usize..6,
    ) {
        let m = model(6);
        let feat = FeatureMatrix::from_flat(data, 13, 10.0, "t").unwrap();
        let seg = |p, s, e| Segment { phone: PhoneId(p), start: s, end: e, silence: false };
        let al = Alignment::from_truth(vec![seg(a, 0, cut), seg(b, cut, 10)], &m, &feat).unwrap();
        let ev = Evidence::collect(&m, &al, &feat).unwrap();
        for f in [|x: f64| 0.5 * x - 3.0, |x: f64| x.powi(3)] {
            let mapped = ev.map_scores(f);
            prop_assert_eq!(mapped.ranks(), ev.ranks());
            prop_assert_eq!(mapped.apr().to_bits(), ev.apr().to_bits());
        }
        let affine = ev.map_scores(|x| 0.5 * x - 3.0);
        if ev.llr() != 0.0 {
            prop_assert_ne!(affine.llr(), ev.llr());
        }
        prop_assert!(ev.apr() >= 1.0 && ev.apr() <= 6.0);
    }
}

#[test]
fn constant_model_ranks_everything_first() {
    let g = Gmm::new(vec![1.0], vec![vec![0.0; 13]], vec![vec![1.0; 13]]).unwrap();
    let m = AcousticModel::new(inventory(5), vec![g.clone(); 6], g, "").unwrap();
    let data = vec![0.3; 4 * 13];
    for p in 0..5 {
        assert_eq!(
            phone_rank(&m, PhoneId(p), Frames::new(&data, 13)).unwrap(),
            1
        );
    }
}

#[test]
fn rank_errors() {
    let m = model(4);
    let data = vec![0.0; 13];
    assert!(matches!(
        phone_rank(&m, PhoneId(4), Frames::new(&data, 13)),
        Err(Error::NotRankable(_))
    ));
    assert!(matches!(
        phone_rank(&m, PhoneId(9), Frames::new(&data, 13)),
        Err(Error::UnknownPhone { .. })
    ));
    assert!(matches!(
        phone_rank(&m, PhoneId(0), Frames::new(&[], 13)),
        Err(Error::EmptySegment)
    ));
}

#[test]
fn anti_equal_to_every_phone_gives_zero_llr() {
    let g = Gmm::new(
        vec![0.4, 0.6],
        vec![vec![0.0; 13], vec![1.0; 13]],
        vec![vec![1.0; 13]; 2],
    )
    .unwrap();
    let m = AcousticModel::new(inventory(3), vec![g.clone(); 4], g, "").unwrap();
    let data: Vec<f64> = (0..9 * 13).map(|i| (i % 11) as f64 * 0.2 - 1.0).collect();
    let feat = FeatureMatrix::from_flat(data, 13, 10.0, "").unwrap();
    let seg = |p, s, e, silence| Segment {
        phone: PhoneId(p),
        start: s,
        end: e,
        silence,
    };
    let al = Alignment::from_truth(
        vec![seg(3, 0, 2, true), seg(0, 2, 5, false), seg(2, 5, 9, false)],
        &m,
        &feat,
    )
    .unwrap();
    assert_eq!(compute_llr(&m, &al, &feat).unwrap(), 0.0);
    assert_eq!(compute_apr(&m, &al, &feat).unwrap(), 1.0);
}

fn table(rows: Vec<Vec<f64>>, anti: Vec<f64>) -> ScoreTable {
    ScoreTable::from_scores(&rows, anti).unwrap()
}

#[test]
fn adding_a_constant_to_target_scores_moves_llr_by_that_constant() {
    // Dyadic values keep every sum exact.
    let rows = vec![
        vec![-1.5, -2.0, -8.0],
        vec![-2.5, -2.0, -8.0],
        vec![-4.0, -0.5, -8.0],
        vec![-4.0, -1.0, -8.0],
        vec![-4.0, -1.25, -8.0],
    ];
    let anti = vec![-3.0, -3.0, -2.0, -2.0, -2.5];
    let inv = PhoneInventory::new(["a", "b"], Some("sil")).unwrap();
    let seg = |p, s, e| Segment {
        phone: PhoneId(p),
        start: s,
        end: e,
        silence: false,
    };
    let segments = vec![seg(0, 0, 2), seg(1, 2, 5)];
    let t = table(rows.clone(), anti.clone());
    let al = Alignment::from_segments(segments.clone(), &t).unwrap();
    let base = Evidence::from_table(&t, &al, &inv).unwrap().llr();
    // g = (-4 + -2.75)/5 = -1.35, G = -12.5/5 = -2.5
    assert!((base - 1.15).abs() < 1e-12);

    let c = 0.75;
    let shifted: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|v| v + c).collect())
        .collect();
    let t2 = table(shifted, anti);
    let al2 = Alignment::from_segments(segments, &t2).unwrap();
    let moved = Evidence::from_table(&t2, &al2, &inv).unwrap().llr();
    assert_eq!(moved - base, c);
}

#[test]
fn two_stage_gates_on_llr() {
    let m = model(40);
    let data: Vec<f64> = (0..6 * 13).map(|i| (i % 3) as f64).collect();
    let feat = FeatureMatrix::from_flat(data, 13, 10.0, "t").unwrap();
    let seg = |p, s, e| Segment {
        phone: PhoneId(p),
        start: s,
        end: e,
        silence: false,
    };
    let al = Alignment::from_truth(vec![seg(1, 0, 3), seg(2, 3, 6)], &m, &feat).unwrap();
    let llr = compute_llr(&m, &al, &feat).unwrap();
    let apr = compute_apr(&m, &al, &feat).unwrap();
    let at = |tau| VerifierConfig::new(tau, 4.0, Method::Apr2Stage, 40).unwrap();
    assert_eq!(compute_two_stage(&m, &al, &feat, &at(llr)).unwrap(), 40.0);
    assert_eq!(
        compute_two_stage(&m, &al, &feat, &at(f64::INFINITY)).unwrap(),
        40.0
    );
    assert_eq!(
        compute_two_stage(&m, &al, &feat, &at(llr - 1e-9)).unwrap(),
        apr
    );
    assert_eq!(decide(40.0, &at(llr)), Decision::Mismatch);
}

#[test]
fn apr_is_the_plain_mean_of_ranks() {
    // Ranks 3 and 5 for two segments of very different lengths.
    let inv = PhoneInventory::new(["a", "b", "c", "d", "e"], None::<&str>).unwrap();
    let row = vec![-1.0, -2.0, -3.0, -4.0, -5.0];
    let t = table(vec![row; 10], vec![0.0; 10]);
    let seg = |p, s, e| Segment {
        phone: PhoneId(p),
        start: s,
        end: e,
        silence: false,
    };
    let al = Alignment::from_segments(vec![seg(2, 0, 1), seg(4, 1, 10)], &t).unwrap();
    let ev = Evidence::from_table(&t, &al, &inv).unwrap();
    assert_eq!(ev.ranks(), [3, 5]);
    assert_eq!(ev.apr(), 4.0);
}
