//! Synthetic evaluation corpora and the evaluation protocols run on them.

mod eval;
mod generator;
mod manifest;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;

pub use eval::{
    degradation_report, evaluate, evaluate_scores, score_corpus, score_pair, sweep_threshold,
    tau_grid, theta_grid, tune, Degradation, EvalResult, PairOutcome, PairScores, Sweep, Tuned,
};
pub use generator::{stream_rng, GeneratorConfig, GeneratorSpec, StyleShift, SynthUtterance};
pub use manifest::{
    derangement, edit_script, make_mismatch_set, CorpusManifest, DirSource, FeatureSource, Label,
    ManifestPair, MemorySource, MismatchMode, MANIFEST_HEADER,
};

use crate::align::Segment;
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    /// Number of correct pairs; the same number of incorrect ones is added.
    pub pairs: usize,
    /// Inclusive range of words per script.
    pub words: (usize, usize),
    pub style: Option<StyleShift>,
    pub style_tag: String,
    pub mode: MismatchMode,
    /// Word edits per script in the edit modes.
    pub edits: usize,
    /// Fraction of all pairs replaced by degenerate incorrect utterances.
    pub degenerate_fraction: f64,
    pub degenerate_lambda: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            pairs: 200,
            words: (3, 6),
            style: None,
            style_tag: "read".into(),
            mode: MismatchMode::Reassign,
            edits: 4,
            degenerate_fraction: 0.0,
            degenerate_lambda: 5.0,
            seed: 1,
        }
    }
}

/// A generated manifest with its features kept in memory.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub manifest: CorpusManifest,
    pub source: MemorySource,
    /// Ground-truth segmentation of every generated feature file.
    pub truth: HashMap<String, Vec<Segment>>,
}

impl SyntheticCorpus {
    /// Writes `manifest.tsv` and the feature dumps under `dir`; returns the
    /// manifest path.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let mut names: Vec<&String> = self.source.features.keys().collect();
        names.sort();
        for name in names {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            self.source.features[name].save(&path)?;
        }
        let path = dir.join("manifest.tsv");
        self.manifest.save(&path)?;
        Ok(path)
    }
}

/// Utterance seed for item `index` of a corpus seeded with `seed`.
pub fn item_seed(seed: u64, index: u64) -> u64 {
    seed ^ (index + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Draws `n` words uniformly (with replacement) from `vocabulary`.
pub fn random_script(vocabulary: &[&str], n: usize, rng: &mut impl Rng) -> String {
    (0..n)
        .map(|_| *vocabulary.choose(rng).expect("non-empty vocabulary"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Generates `cfg.pairs` correct pairs over random scripts and one incorrect
/// pair per correct pair using `cfg.mode`. With a degenerate fraction, that
/// share of all pairs is taken from the tail of the incorrect half and
/// replaced by degenerate utterances of their audio's own script.
pub fn generate_corpus(
    spec: &GeneratorSpec,
    lexicon: &Lexicon,
    cfg: &CorpusConfig,
) -> Result<SyntheticCorpus> {
    let (lo, hi) = cfg.words;
    if lo == 0 || lo > hi {
        return Err(Error::Config(
            "words per script must be a non-empty range from 1".into(),
        ));
    }
    let vocabulary: Vec<&str> = lexicon.words().collect();
    if vocabulary.is_empty() {
        return Err(Error::InvalidInput("lexicon has no words".into()));
    }
    let mut script_rng = stream_rng(cfg.seed, 1);
    let mut source = MemorySource::default();
    let mut truth = HashMap::new();
    let mut correct = Vec::with_capacity(cfg.pairs);
    for i in 0..cfg.pairs {
        let n = script_rng.random_range(lo..=hi);
        let script = random_script(&vocabulary, n, &mut script_rng);
        let utt = spec.synthesize(
            &script,
            lexicon,
            cfg.style.as_ref(),
            item_seed(cfg.seed, i as u64),
        )?;
        let pair_id = format!("p{i:04}");
        let feature_file = format!("feats/{pair_id}.feat");
        source.features.insert(feature_file.clone(), utt.features);
        truth.insert(feature_file.clone(), utt.segments);
        correct.push(ManifestPair {
            pair_id,
            script,
            feature_file,
            label: Label::Correct,
            style: cfg.style_tag.clone(),
            mode: MismatchMode::None,
        });
    }

    let mut mismatch_rng = stream_rng(cfg.seed, 2);
    let mut incorrect = make_mismatch_set(
        &correct,
        cfg.mode,
        cfg.edits,
        &vocabulary,
        &mut mismatch_rng,
    )?;

    if !(0.0..=0.5).contains(&cfg.degenerate_fraction) {
        return Err(Error::Config(
            "degenerate fraction must lie in [0, 0.5]".into(),
        ));
    }
    let n_degenerate = (cfg.degenerate_fraction * (2 * cfg.pairs) as f64).round() as usize;
    let first = incorrect.len() - n_degenerate.min(incorrect.len());
    for (j, slot) in incorrect.iter_mut().enumerate().skip(first) {
        let base = &correct[j];
        let utt = spec.synthesize_degenerate(
            &base.script,
            lexicon,
            cfg.degenerate_lambda,
            item_seed(cfg.seed ^ 0xDE6E, j as u64),
        )?;
        let pair_id = format!("{}-degenerate", base.pair_id);
        let feature_file = format!("feats/{pair_id}.feat");
        source.features.insert(feature_file.clone(), utt.features);
        truth.insert(feature_file.clone(), utt.segments);
        *slot = ManifestPair {
            pair_id,
            script: base.script.clone(),
            feature_file,
            label: Label::Incorrect,
            style: cfg.style_tag.clone(),
            mode: MismatchMode::Degenerate,
        };
    }

    correct.extend(incorrect);
    Ok(SyntheticCorpus {
        manifest: CorpusManifest::new(correct)?,
        source,
        truth,
    })
}
