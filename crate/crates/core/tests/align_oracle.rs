mod common;

use common::{brute_force_align, lattice_from, small_inventory, table_from};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uttver_core::acoustic::{AcousticModel, Gmm};
use uttver_core::align::{align_table, segment_features, viterbi_align, AlignOptions, Alignment};
use uttver_core::features::FeatureMatrix;
use uttver_core::lexicon::{
    LatticeWord, PhoneId, PhoneInventory, Pronunciation, PronunciationLattice,
};
use uttver_core::Error;

#[derive(Debug, Clone)]
struct Case {
    phones: Vec<usize>,
    cuts: Vec<bool>,
    silence: bool,
    min_duration: usize,
    frames: usize,
    scores: Vec<f64>,
}

fn case(integer_scores: bool) -> impl Strategy<Value = Case> {
    (1usize..=3, 1usize..=10, 1usize..=3, any::<bool>()).prop_flat_map(
        move |(n, frames, m, silence)| {
            let score = if integer_scores {
                (-3i32..=3).prop_map(f64::from).boxed()
            } else {
                (-20.0f64..5.0).boxed()
            };
            (
                prop::collection::vec(0usize..3, n),
                prop::collection::vec(any::<bool>(), n - 1),
                prop::collection::vec(score, frames * 4),
            )
                .prop_map(move |(phones, cuts, scores)| Case {
                    phones,
                    cuts,
                    silence,
                    min_duration: m,
                    frames,
                    scores,
                })
        },
    )
}

fn opts(c: &Case) -> AlignOptions {
    AlignOptions {
        min_duration: c.min_duration,
        silence: c.silence,
        max_expansions: 16,
    }
}

fn check_against_oracle(c: &Case) -> Result<(), TestCaseError> {
    let inv = small_inventory();
    let table = table_from(&c.scores, 4);
    let lattice = lattice_from(&c.phones, &c.cuts);
    let got = align_table(&table, &lattice, &inv, &opts(c));
    match brute_force_align(&table, &lattice, &inv, &opts(c)) {
        None => {
            let too_short = matches!(got, Err(Error::UtteranceTooShort { .. }));
            prop_assert!(too_short);
        }
        Some((segments, total, expansion)) => {
            let a = got.unwrap();
            prop_assert_eq!(a.total_loglik(), total);
            prop_assert_eq!(a.segments(), segments.as_slice());
            prop_assert_eq!(a.expansion(), expansion);
            check_invariants(&a, c)?;
        }
    }
    Ok(())
}

fn check_invariants(a: &Alignment, c: &Case) -> Result<(), TestCaseError> {
    let mut cursor = 0;
    for s in a.segments() {
        prop_assert_eq!(s.start, cursor);
        prop_assert!(s.len() >= c.min_duration);
        cursor = s.end;
    }
    prop_assert_eq!(cursor, c.frames);
    prop_assert_eq!(a.num_phones(), c.phones.len());
    prop_assert_eq!(
        a.phones(),
        c.phones.iter().map(|&p| PhoneId(p)).collect::<Vec<_>>()
    );
    Ok(())
}

proptest! {
    #[test]
    fn matches_exhaustive_search_with_ties(c in case(true)) {
        check_against_oracle(&c)?;
    }

    #[test]
    fn matches_exhaustive_search_with_real_scores(c in case(false)) {
        check_against_oracle(&c)?;
    }

    #[test]
    fn constant_score_shift_keeps_the_segmentation(c in case(true), shift in -5i32..=5) {
        let inv = small_inventory();
        let lattice = lattice_from(&c.phones, &c.cuts);
        let base = align_table(&table_from(&c.scores, 4), &lattice, &inv, &opts(&c));
        let moved: Vec<f64> = c.scores.iter().map(|v| v + f64::from(shift)).collect();
        let shifted = align_table(&table_from(&moved, 4), &lattice, &inv, &opts(&c));
        match (base, shifted) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.segments(), b.segments()),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "feasibility changed under a score shift"),
        }
    }

    #[test]
    fn alternative_pronunciations_match_the_oracle(
        first in prop::collection::vec(0usize..3, 1..=2),
        second in prop::collection::vec(0usize..3, 1..=2),
        tail in 0usize..3,
        scores in prop::collection::vec(-3i32..=3, 40),
        frames in 2usize..=10,
    ) {
        let inv = small_inventory();
        let pron = |v: &[usize]| Pronunciation::new(v.iter().map(|&p| PhoneId(p)).collect()).unwrap();
        let lattice = PronunciationLattice::new(vec![
            LatticeWord { word: "x".into(), variants: vec![pron(&first), pron(&second)], oov: false },
            LatticeWord { word: "y".into(), variants: vec![pron(&[tail])], oov: false },
        ]).unwrap();
        let values: Vec<f64> = scores[..frames * 4].iter().map(|&v| f64::from(v)).collect();
        let table = table_from(&values, 4);
        let o = AlignOptions { min_duration: 1, silence: true, max_expansions: 8 };
        let got = align_table(&table, &lattice, &inv, &o);
        match brute_force_align(&table, &lattice, &inv, &o) {
            None => prop_assert!(got.is_err()),
            Some((segments, total, expansion)) => {
                let a = got.unwrap();
                prop_assert_eq!(a.total_loglik(), total);
                prop_assert_eq!(a.segments(), segments.as_slice());
                prop_assert_eq!(a.expansion(), expansion);
            }
        }
    }
}

fn two_phone_model() -> AcousticModel {
    let inv = PhoneInventory::new(["a", "b"], Some("sil")).unwrap();
    let g = |m: f64| Gmm::new(vec![1.0], vec![vec![m; 13]], vec![vec![1.0; 13]]).unwrap();
    AcousticModel::new(inv, vec![g(0.0), g(5.0), g(-5.0)], g(0.0), "").unwrap()
}

#[test]
fn recovers_a_generated_boundary() {
    let model = two_phone_model();
    let lattice = PronunciationLattice::from_pronunciations(vec![Pronunciation::new(vec![
        PhoneId(0),
        PhoneId(1),
    ])
    .unwrap()])
    .unwrap();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        for t in 0..20 {
            let mean = if t < 10 { 0.0 } else { 5.0 };
            for _ in 0..13 {
                data.push(mean + rng.random_range(-1.0..1.0));
            }
        }
        let feat = FeatureMatrix::from_flat(data, 13, 10.0, "").unwrap();
        let a = viterbi_align(&feat, &lattice, &model, &AlignOptions::default()).unwrap();
        let boundary = a.phone_segments().next().unwrap().end;
        assert!(
            boundary.abs_diff(10) <= 1,
            "seed {seed}: boundary {boundary}"
        );
    }
}

#[test]
fn single_phone_covers_everything_with_the_frame_sum() {
    let model = two_phone_model();
    let lattice = PronunciationLattice::from_pronunciations(vec![Pronunciation::new(vec![
        PhoneId(1),
    ])
    .unwrap()])
    .unwrap();
    let data: Vec<f64> = (0..7 * 13).map(|i| (i % 5) as f64 - 2.0).collect();
    let feat = FeatureMatrix::from_flat(data, 13, 10.0, "").unwrap();
    let o = AlignOptions {
        silence: false,
        ..Default::default()
    };
    let a = viterbi_align(&feat, &lattice, &model, &o).unwrap();
    assert_eq!(a.segments().len(), 1);
    assert_eq!((a.segments()[0].start, a.segments()[0].end), (0, 7));
    let mut sum = 0.0;
    for t in 0..7 {
        sum += model.score_frame(PhoneId(1), feat.frame(t)).unwrap();
    }
    assert_eq!(a.total_loglik(), sum);

    let pairs = segment_features(&feat, &a).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].1.as_flat(), feat.as_flat());
}

#[test]
fn dimension_mismatch_is_reported() {
    let model = two_phone_model();
    let lattice = PronunciationLattice::from_pronunciations(vec![Pronunciation::new(vec![
        PhoneId(0),
    ])
    .unwrap()])
    .unwrap();
    let feat = FeatureMatrix::from_flat(vec![0.0; 39 * 5], 39, 10.0, "").unwrap();
    assert!(matches!(
        viterbi_align(&feat, &lattice, &model, &AlignOptions::default()),
        Err(Error::DimensionMismatch {
            expected: 13,
            actual: 39
        })
    ));
}

#[test]
fn dump_lists_every_segment() {
    let model = two_phone_model();
    let lattice = PronunciationLattice::from_pronunciations(vec![Pronunciation::new(vec![
        PhoneId(0),
        PhoneId(1),
    ])
    .unwrap()])
    .unwrap();
    let mut data = vec![-5.0; 4 * 13];
    data.extend(vec![0.0; 5 * 13]);
    data.extend(vec![5.0; 5 * 13]);
    let feat = FeatureMatrix::from_flat(data, 13, 10.0, "").unwrap();
    let a = viterbi_align(&feat, &lattice, &model, &AlignOptions::default()).unwrap();
    let dump = a.to_dump(model.inventory());
    let mut lines = dump.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("# N=2 T=14 total_loglik="));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(' ').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][..3], ["sil", "0", "4"]);
    assert_eq!(rows[1][..3], ["a", "4", "9"]);
    assert_eq!(rows[2][..3], ["b", "9", "14"]);
}
