#![allow(dead_code)]

use uttver_core::acoustic::{AcousticModel, EmConfig, ScoreTable, TrainConfig};
use uttver_core::align::{AlignOptions, Segment};
use uttver_core::corpus::{
    generate_corpus, score_corpus, CorpusConfig, GeneratorConfig, GeneratorSpec, Label, PairScores,
    StyleShift,
};
use uttver_core::lexicon::{Lexicon, PhoneId, PhoneInventory, Pronunciation, PronunciationLattice};

/// Every way to give each chain element a duration: mandatory elements take
/// at least `m` frames, optional ones 0 or at least `m`. Visited in
/// lexicographic order of the element end frames.
fn enumerate(
    optional: &[bool],
    m: usize,
    frames: usize,
    start: usize,
    ends: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]),
) {
    let i = ends.len();
    if i == optional.len() {
        if start == frames {
            visit(ends);
        }
        return;
    }
    let mut lengths: Vec<usize> = Vec::new();
    if optional[i] {
        lengths.push(0);
    }
    lengths.extend(m..=frames.saturating_sub(start));
    for len in lengths {
        if start + len > frames {
            break;
        }
        ends.push(start + len);
        enumerate(optional, m, frames, start + len, ends, visit);
        ends.pop();
    }
}

/// Exhaustive forced alignment: the best total over every expansion and
/// every segmentation, ties to the smallest end-frame vector, then to the
/// earliest expansion. Returns the non-empty segments, the total and the
/// winning expansion.
pub fn brute_force_align(
    table: &ScoreTable,
    lattice: &PronunciationLattice,
    inventory: &PhoneInventory,
    opts: &AlignOptions,
) -> Option<(Vec<Segment>, f64, usize)> {
    let silence = if opts.silence {
        inventory.silence()
    } else {
        None
    };
    let frames = table.num_frames();
    let mut best: Option<(Vec<Segment>, f64, usize)> = None;
    for (x, words) in lattice.expansions(opts.max_expansions).iter().enumerate() {
        let mut chain: Vec<(PhoneId, bool)> = Vec::new();
        if let Some(s) = silence {
            chain.push((s, true));
        }
        for w in words {
            chain.extend(w.phones().iter().map(|&p| (p, false)));
            if let Some(s) = silence {
                chain.push((s, true));
            }
        }
        let optional: Vec<bool> = chain.iter().map(|c| c.1).collect();
        let mut local: Option<(Vec<usize>, f64)> = None;
        enumerate(
            &optional,
            opts.min_duration,
            frames,
            0,
            &mut Vec::new(),
            &mut |ends| {
                let mut total = 0.0;
                let mut start = 0;
                for (e, &end) in ends.iter().enumerate() {
                    for t in start..end {
                        total += table.get(t, chain[e].0);
                    }
                    start = end;
                }
                // Enumeration is in lexicographic order, so only a strictly
                // better total replaces the incumbent.
                if local.as_ref().is_none_or(|(_, b)| total > *b) {
                    local = Some((ends.to_vec(), total));
                }
            },
        );
        let Some((ends, total)) = local else { continue };
        if best.as_ref().is_some_and(|(_, b, _)| total <= *b) {
            continue;
        }
        let mut segments = Vec::new();
        let mut start = 0;
        for (e, &end) in ends.iter().enumerate() {
            if end > start {
                segments.push(Segment {
                    phone: chain[e].0,
                    start,
                    end,
                    silence: chain[e].1,
                });
            }
            start = end;
        }
        best = Some((segments, total, x));
    }
    best
}

/// Rank by full descending sort: one plus the position of the first entry
/// scoring the same as the target.
pub fn sort_rank(scores: &[f64], target: usize) -> usize {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    1 + sorted.iter().position(|&v| v == scores[target]).unwrap()
}

pub fn small_inventory() -> PhoneInventory {
    PhoneInventory::new(["a", "b", "c"], Some("sil")).unwrap()
}

pub fn table_from(values: &[f64], width: usize) -> ScoreTable {
    let rows: Vec<Vec<f64>> = values.chunks(width).map(<[f64]>::to_vec).collect();
    let n = rows.len();
    ScoreTable::from_scores(&rows, vec![0.0; n]).unwrap()
}

/// Splits `phones` into words at the given cut flags.
pub fn lattice_from(phones: &[usize], cuts: &[bool]) -> PronunciationLattice {
    let mut words: Vec<Vec<PhoneId>> = vec![Vec::new()];
    for (i, &p) in phones.iter().enumerate() {
        if i > 0 && cuts[i - 1] {
            words.push(Vec::new());
        }
        words.last_mut().unwrap().push(PhoneId(p));
    }
    PronunciationLattice::from_pronunciations(
        words
            .into_iter()
            .map(|w| Pronunciation::new(w).unwrap())
            .collect(),
    )
    .unwrap()
}

/// Toy generator, lexicon and a model trained on read-style frames from it.
pub struct Bench {
    pub spec: GeneratorSpec,
    pub lexicon: Lexicon,
    pub model: AcousticModel,
    pub opts: AlignOptions,
}

impl Bench {
    pub fn new() -> Self {
        let spec =
            GeneratorSpec::synthetic(&PhoneInventory::toy(), GeneratorConfig::default()).unwrap();
        let train = TrainConfig {
            em: EmConfig {
                components: 2,
                ..Default::default()
            },
            seed: 3,
        };
        let (model, _) = spec.train_model(400, &train).unwrap();
        Self {
            spec,
            lexicon: Lexicon::toy(),
            model,
            opts: AlignOptions::default(),
        }
    }

    pub fn score(&self, cfg: &CorpusConfig) -> Vec<PairScores> {
        let c = generate_corpus(&self.spec, &self.lexicon, cfg).unwrap();
        score_corpus(
            &c.manifest,
            &c.source,
            &self.model,
            &self.lexicon,
            &self.opts,
        )
    }
}

pub fn read_corpus(pairs: usize, seed: u64) -> CorpusConfig {
    CorpusConfig {
        pairs,
        seed,
        ..Default::default()
    }
}

pub fn shifted_corpus(pairs: usize, seed: u64, shift: StyleShift, tag: &str) -> CorpusConfig {
    CorpusConfig {
        style: Some(shift),
        style_tag: tag.into(),
        ..read_corpus(pairs, seed)
    }
}

/// Global variance inflation by 3 plus a 0.5 offset in every coefficient.
pub fn strong_shift() -> StyleShift {
    StyleShift::new(3.0, vec![0.5; 13], 0.0).unwrap()
}

pub fn mean_where(scores: &[PairScores], label: Label, f: impl Fn(&PairScores) -> f64) -> f64 {
    let v: Vec<f64> = scores
        .iter()
        .filter(|p| p.label == label && p.error.is_none())
        .map(f)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}
