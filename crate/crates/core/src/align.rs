//! Forced alignment of a pronunciation lattice to a feature stream.
//!
//! Every expansion of the lattice becomes a linear chain of phones, with an
//! optional silence before the first word, between words and after the last
//! word. Each chain element must last at least `min_duration` frames (an
//! optional silence may also be skipped). The search is an exact
//! frame-synchronous Viterbi pass over `min_duration` sub-states per element,
//! so path scores accumulate frame by frame in time order and the reported
//! maximum is exactly the best `sum_t score(t, phone(t))` over all
//! segmentations.
//!
//! Ties between equally scoring segmentations go to the lexicographically
//! smallest vector of element end frames (skipped silences end where they
//! start), then to the earliest expansion.

use std::fmt::Write as _;

use crate::acoustic::{AcousticModel, ScoreTable};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Frames};
use crate::lexicon::{PhoneId, PhoneInventory, Pronunciation, PronunciationLattice};

#[derive(Debug, Clone, PartialEq)]
pub struct AlignOptions {
    /// Minimum frames per phone (and per inserted silence).
    pub min_duration: usize,
    /// Allow optional silence at the edges and between words.
    pub silence: bool,
    /// Upper bound on the lattice expansions searched.
    pub max_expansions: usize,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            min_duration: 3,
            silence: true,
            max_expansions: 64,
        }
    }
}

/// A run of frames `start..end` assigned to one phone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub phone: PhoneId,
    pub start: usize,
    pub end: usize,
    pub silence: bool,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// A segmentation of the whole utterance into phones.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    segments: Vec<Segment>,
    scores: Vec<f64>,
    total_loglik: f64,
    num_frames: usize,
    expansion: usize,
}

impl Alignment {
    /// Validates that `segments` partition `0..table.num_frames()` and
    /// contain at least one non-silence phone, scoring them from `table`.
    pub fn from_segments(segments: Vec<Segment>, table: &ScoreTable) -> Result<Self> {
        let num_frames = table.num_frames();
        let mut cursor = 0;
        for s in &segments {
            if s.start != cursor || s.end <= s.start || s.phone.0 >= table.num_phones() {
                return Err(Error::InvalidInput(format!(
                    "segment {}..{} does not continue a partition at frame {cursor}",
                    s.start, s.end
                )));
            }
            cursor = s.end;
        }
        if cursor != num_frames {
            return Err(Error::AlignmentMismatch {
                alignment: cursor,
                features: num_frames,
            });
        }
        if segments.iter().all(|s| s.silence) {
            return Err(Error::NoPhones);
        }
        let scores = segments
            .iter()
            .map(|s| table.segment_mean(s.phone, s.start, s.end))
            .collect();
        let mut total = 0.0;
        for s in &segments {
            for t in s.start..s.end {
                total += table.get(t, s.phone);
            }
        }
        Ok(Self {
            segments,
            scores,
            total_loglik: total,
            num_frames,
            expansion: 0,
        })
    }

    /// Scores a known segmentation (e.g. a generator's ground truth).
    pub fn from_truth(
        segments: Vec<Segment>,
        model: &AcousticModel,
        feat: &FeatureMatrix,
    ) -> Result<Self> {
        model.check_features(feat)?;
        let table = model.score_table(feat.frames())?;
        Self::from_segments(segments, &table)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Mean frame log-likelihood of each segment under its phone.
    pub fn segment_scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn total_loglik(&self) -> f64 {
        self.total_loglik
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    /// Index of the lattice expansion that won.
    pub fn expansion(&self) -> usize {
        self.expansion
    }

    /// Non-silence segments in order: the `(p_i, f_i)` ranges.
    pub fn phone_segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| !s.silence)
    }

    /// Number of non-silence phones `N`.
    pub fn num_phones(&self) -> usize {
        self.phone_segments().count()
    }

    pub fn phones(&self) -> Vec<PhoneId> {
        self.phone_segments().map(|s| s.phone).collect()
    }

    /// Debug dump: `# N=.. T=.. total_loglik=..` then `phone start end score` lines.
    pub fn to_dump(&self, inventory: &PhoneInventory) -> String {
        let mut out = format!(
            "# N={} T={} total_loglik={}\n",
            self.num_phones(),
            self.num_frames,
            self.total_loglik
        );
        for (s, score) in self.segments.iter().zip(&self.scores) {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                inventory.symbol(s.phone),
                s.start,
                s.end,
                score
            );
        }
        out
    }
}

/// The `(p_i, f_i)` pairs of an alignment, silence excluded.
pub fn segment_features<'a>(
    feat: &'a FeatureMatrix,
    alignment: &Alignment,
) -> Result<Vec<(PhoneId, Frames<'a>)>> {
    if feat.num_frames() != alignment.num_frames() {
        return Err(Error::AlignmentMismatch {
            alignment: alignment.num_frames(),
            features: feat.num_frames(),
        });
    }
    Ok(alignment
        .phone_segments()
        .map(|s| (s.phone, feat.slice(s.start..s.end)))
        .collect())
}

/// Aligns `lattice` to `feat` under `model`.
pub fn viterbi_align(
    feat: &FeatureMatrix,
    lattice: &PronunciationLattice,
    model: &AcousticModel,
    opts: &AlignOptions,
) -> Result<Alignment> {
    model.check_features(feat)?;
    let table = model.score_table(feat.frames())?;
    align_table(&table, lattice, model.inventory(), opts)
}

/// Aligns against precomputed frame scores.
pub fn align_table(
    table: &ScoreTable,
    lattice: &PronunciationLattice,
    inventory: &PhoneInventory,
    opts: &AlignOptions,
) -> Result<Alignment> {
    if opts.min_duration == 0 {
        return Err(Error::Config("minimum duration must be at least 1".into()));
    }
    if table.num_phones() != inventory.len() {
        return Err(Error::InventoryMismatch(format!(
            "score table has {} phones, inventory {}",
            table.num_phones(),
            inventory.len()
        )));
    }
    let silence = if opts.silence {
        inventory.silence()
    } else {
        None
    };
    let mut best: Option<(Alignment, f64)> = None;
    let mut needed = usize::MAX;
    for (idx, expansion) in lattice
        .expansions(opts.max_expansions.max(1))
        .iter()
        .enumerate()
    {
        let chain = build_chain(expansion, silence);
        needed = needed.min(chain.iter().filter(|e| !e.optional).count() * opts.min_duration);
        let Some((path, total)) = viterbi_chain(table, &chain, opts.min_duration) else {
            continue;
        };
        if best.as_ref().is_some_and(|(_, b)| total <= *b) {
            continue;
        }
        let segments = path_segments(&path, &chain);
        let mut alignment = Alignment::from_segments(segments, table)?;
        alignment.expansion = idx;
        best = Some((alignment, total));
    }
    best.map(|(a, _)| a).ok_or(Error::UtteranceTooShort {
        frames: table.num_frames(),
        needed,
    })
}

/// One element of an alignment chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainElement {
    pub phone: PhoneId,
    /// May be skipped entirely (inserted silence).
    pub optional: bool,
}

fn build_chain(words: &[&Pronunciation], silence: Option<PhoneId>) -> Vec<ChainElement> {
    let mut chain = Vec::new();
    let sil = |chain: &mut Vec<ChainElement>| {
        if let Some(phone) = silence {
            chain.push(ChainElement {
                phone,
                optional: true,
            });
        }
    };
    sil(&mut chain);
    for word in words {
        chain.extend(word.phones().iter().map(|&phone| ChainElement {
            phone,
            optional: false,
        }));
        sil(&mut chain);
    }
    chain
}

fn path_segments(path: &[usize], chain: &[ChainElement]) -> Vec<Segment> {
    let mut segments: Vec<Segment> = Vec::new();
    for (t, &e) in path.iter().enumerate() {
        match segments.last_mut() {
            Some(last) if last.end == t && path[t - 1] == e => last.end = t + 1,
            _ => segments.push(Segment {
                phone: chain[e].phone,
                start: t,
                end: t + 1,
                silence: chain[e].optional,
            }),
        }
    }
    segments
}

/// Exact Viterbi over one chain. Returns the element index of every frame
/// and the path score, or `None` if the chain cannot fit the frames.
pub fn viterbi_chain(
    table: &ScoreTable,
    chain: &[ChainElement],
    min_duration: usize,
) -> Option<(Vec<usize>, f64)> {
    let frames = table.num_frames();
    if chain.is_empty() || frames == 0 {
        return None;
    }
    let graph = SubStateGraph::new(chain, min_duration);
    let width = graph.element.len();

    // values[t * width + g]: best score of frames 0..=t ending in sub-state g.
    // ties[t * width + g]: bit i set if preds[g][i] attains that best.
    let mut values = vec![f64::NEG_INFINITY; frames * width];
    let mut ties = vec![0u8; frames * width];
    for &g in &graph.entries {
        values[g] = table.get(0, chain[graph.element[g]].phone);
    }
    for t in 1..frames {
        let (done, rest) = values.split_at_mut(t * width);
        let prev = &done[(t - 1) * width..];
        let row = &mut rest[..width];
        for g in 0..width {
            let mut best = f64::NEG_INFINITY;
            for &p in &graph.preds[g] {
                best = best.max(prev[p]);
            }
            if best == f64::NEG_INFINITY {
                continue;
            }
            let mut mask = 0u8;
            for (i, &p) in graph.preds[g].iter().enumerate() {
                if prev[p] == best {
                    mask |= 1 << i;
                }
            }
            ties[t * width + g] = mask;
            row[g] = best + table.get(t, chain[graph.element[g]].phone);
        }
    }

    let last = (frames - 1) * width;
    let best_end = graph
        .exits
        .iter()
        .map(|&g| values[last + g])
        .fold(f64::NEG_INFINITY, f64::max);
    if best_end == f64::NEG_INFINITY {
        return None;
    }

    // Mark every node lying on some optimal path.
    let mut good = vec![false; frames * width];
    for &g in &graph.exits {
        if values[last + g] == best_end {
            good[last + g] = true;
        }
    }
    for t in (1..frames).rev() {
        for g in 0..width {
            if !good[t * width + g] {
                continue;
            }
            let mask = ties[t * width + g];
            for (i, &p) in graph.preds[g].iter().enumerate() {
                if mask & (1 << i) != 0 {
                    good[(t - 1) * width + p] = true;
                }
            }
        }
    }

    // Walk forward taking the most advanced optimal sub-state each frame;
    // leaving an element as early as possible minimises its end frame.
    let mut state = *graph
        .entries
        .iter()
        .filter(|&&g| good[g])
        .max()
        .expect("an optimal path starts at an entry state");
    let mut path = Vec::with_capacity(frames);
    path.push(graph.element[state]);
    for t in 1..frames {
        state = graph.succs[state]
            .iter()
            .filter(|&&(g, i)| good[t * width + g] && ties[t * width + g] & (1 << i) != 0)
            .map(|&(g, _)| g)
            .max()
            .expect("an optimal path continues");
        path.push(graph.element[state]);
    }
    Some((path, best_end))
}

/// Sub-state expansion of a chain: element `e` becomes `min_duration`
/// consecutive states, the last of which loops on itself.
struct SubStateGraph {
    element: Vec<usize>,
    preds: Vec<Vec<usize>>,
    /// `(successor, index of this state in the successor's preds)`.
    succs: Vec<Vec<(usize, usize)>>,
    entries: Vec<usize>,
    exits: Vec<usize>,
}

impl SubStateGraph {
    fn new(chain: &[ChainElement], m: usize) -> Self {
        let n = chain.len() * m;
        let first = |e: usize| e * m;
        let last = |e: usize| e * m + m - 1;
        let element: Vec<usize> = (0..n).map(|g| g / m).collect();
        let mut preds = vec![Vec::new(); n];
        for (e, _) in chain.iter().enumerate() {
            for j in 0..m {
                let g = e * m + j;
                if j > 0 {
                    preds[g].push(g - 1);
                } else {
                    if e >= 1 {
                        preds[g].push(last(e - 1));
                    }
                    if e >= 2 && chain[e - 1].optional {
                        preds[g].push(last(e - 2));
                    }
                }
                if j == m - 1 {
                    preds[g].push(g);
                }
            }
        }
        let mut succs = vec![Vec::new(); n];
        for (g, ps) in preds.iter().enumerate() {
            for (i, &p) in ps.iter().enumerate() {
                succs[p].push((g, i));
            }
        }
        let mut entries = vec![first(0)];
        if chain[0].optional && chain.len() > 1 {
            entries.push(first(1));
        }
        let e_last = chain.len() - 1;
        let mut exits = vec![last(e_last)];
        if chain[e_last].optional && chain.len() > 1 {
            exits.push(last(e_last - 1));
        }
        Self {
            element,
            preds,
            succs,
            entries,
            exits,
        }
    }
}
