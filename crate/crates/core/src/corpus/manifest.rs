//! Pair manifests, feature sources and mismatch construction.
//!
//! A manifest is tab-separated UTF-8 with a `#` header line naming the
//! columns `pair_id script feature_file label style mode`, for example
//! `p0000`, `the cat sat`, `feats/p0000.feat`, `correct`, `read`, `none`.
//!
//! Feature files are resolved relative to the manifest's directory. Files
//! ending in `.wav` go through the MFCC front end; anything else is read as
//! a feature dump.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::frontend::{compute_features, load_wav, FrontendConfig};
use crate::lexicon::tokenize;

pub const MANIFEST_HEADER: &str = "#pair_id\tscript\tfeature_file\tlabel\tstyle\tmode";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Correct,
    Incorrect,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Correct => "correct",
            Label::Incorrect => "incorrect",
        }
    }

    pub fn is_correct(self) -> bool {
        self == Label::Correct
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correct" => Ok(Label::Correct),
            "incorrect" => Ok(Label::Incorrect),
            _ => Err(Error::Config(format!("unknown label `{s}`"))),
        }
    }
}

/// How an incorrect pair was built (`None` for correct pairs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MismatchMode {
    None,
    Reassign,
    Delete,
    Insert,
    Substitute,
    Degenerate,
}

impl MismatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MismatchMode::None => "none",
            MismatchMode::Reassign => "reassign",
            MismatchMode::Delete => "delete",
            MismatchMode::Insert => "insert",
            MismatchMode::Substitute => "substitute",
            MismatchMode::Degenerate => "degenerate",
        }
    }
}

impl fmt::Display for MismatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MismatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "none" | "-" => MismatchMode::None,
            "reassign" => MismatchMode::Reassign,
            "delete" | "del" => MismatchMode::Delete,
            "insert" | "ins" => MismatchMode::Insert,
            "substitute" | "sub" => MismatchMode::Substitute,
            "degenerate" => MismatchMode::Degenerate,
            _ => return Err(Error::Config(format!("unknown mismatch mode `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestPair {
    pub pair_id: String,
    pub script: String,
    pub feature_file: String,
    pub label: Label,
    pub style: String,
    pub mode: MismatchMode,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusManifest {
    pub pairs: Vec<ManifestPair>,
}

impl CorpusManifest {
    pub fn new(pairs: Vec<ManifestPair>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for p in &pairs {
            for field in [&p.pair_id, &p.script, &p.feature_file, &p.style] {
                if field.contains(['\t', '\n', '\r']) {
                    return Err(Error::InvalidInput(format!(
                        "pair `{}` has a tab or newline in a field",
                        p.pair_id
                    )));
                }
            }
            if p.pair_id.is_empty() || !seen.insert(p.pair_id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "pair id `{}` is empty or repeated",
                    p.pair_id
                )));
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.pairs.iter().filter(|p| p.label == label).count()
    }

    pub fn is_balanced(&self) -> bool {
        self.count(Label::Correct) == self.count(Label::Incorrect)
    }

    pub fn correct_pairs(&self) -> Vec<ManifestPair> {
        self.pairs
            .iter()
            .filter(|p| p.label.is_correct())
            .cloned()
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for p in &self.pairs {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                p.pair_id, p.script, p.feature_file, p.label, p.style, p.mode
            ));
        }
        out
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 6 {
                return Err(Error::parse(
                    source_name,
                    i + 1,
                    format!("expected 6 tab-separated columns, found {}", cols.len()),
                ));
            }
            let at = |e: Error| Error::parse(source_name, i + 1, e.to_string());
            pairs.push(ManifestPair {
                pair_id: cols[0].to_string(),
                script: cols[1].to_string(),
                feature_file: cols[2].to_string(),
                label: cols[3].parse().map_err(at)?,
                style: cols[4].to_string(),
                mode: cols[5].parse().map_err(at)?,
            });
        }
        Self::new(pairs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Fails with `MissingFile` for the first feature file not under `root`.
    pub fn check_files(&self, root: impl AsRef<Path>) -> Result<()> {
        let root = root.as_ref();
        for p in &self.pairs {
            let path = root.join(&p.feature_file);
            if !path.is_file() {
                return Err(Error::MissingFile { path });
            }
        }
        Ok(())
    }
}

/// Somewhere to fetch a pair's features from.
pub trait FeatureSource: Sync {
    fn features(&self, feature_file: &str) -> Result<FeatureMatrix>;
}

/// Feature files on disk, relative to `root`.
#[derive(Debug, Clone)]
pub struct DirSource {
    pub root: PathBuf,
    pub frontend: FrontendConfig,
}

impl DirSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            frontend: FrontendConfig::default(),
        }
    }
}

impl FeatureSource for DirSource {
    fn features(&self, feature_file: &str) -> Result<FeatureMatrix> {
        let path = self.root.join(feature_file);
        let is_wav = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if is_wav {
            compute_features(&load_wav(&path)?, &self.frontend)
        } else {
            FeatureMatrix::load(&path)
        }
    }
}

/// Features held in memory, keyed by feature file name.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    pub features: HashMap<String, FeatureMatrix>,
}

impl FeatureSource for MemorySource {
    fn features(&self, feature_file: &str) -> Result<FeatureMatrix> {
        self.features
            .get(feature_file)
            .cloned()
            .ok_or_else(|| Error::MissingFile {
                path: PathBuf::from(feature_file),
            })
    }
}

/// A uniformly random permutation of `0..n` with no fixed points.
pub fn derangement(n: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::NotEnoughPairs(n));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Ok(perm);
        }
    }
}

/// Applies `k` random word edits of `mode` to a script. Positions are drawn
/// without replacement; new words come uniformly from `vocabulary`.
pub fn edit_script(
    script: &str,
    mode: MismatchMode,
    k: usize,
    vocabulary: &[&str],
    rng: &mut impl Rng,
) -> Result<String> {
    let mut words = tokenize(script);
    if words.len() <= k {
        return Err(Error::ScriptTooShort {
            words: words.len(),
            edits: k,
        });
    }
    if vocabulary.is_empty() && mode != MismatchMode::Delete {
        return Err(Error::InvalidInput(
            "empty vocabulary for word edits".into(),
        ));
    }
    let mut positions = sample(
        rng,
        words.len() + usize::from(mode == MismatchMode::Insert),
        k,
    )
    .into_vec();
    match mode {
        MismatchMode::Delete => {
            positions.sort_unstable_by(|a, b| b.cmp(a));
            for p in positions {
                words.remove(p);
            }
        }
        MismatchMode::Insert => {
            // Insert from the back so earlier gap indices stay valid.
            positions.sort_unstable_by(|a, b| b.cmp(a));
            for p in positions {
                let w = vocabulary.choose(rng).expect("non-empty vocabulary");
                words.insert(p, w.to_string());
            }
        }
        MismatchMode::Substitute => {
            for p in positions {
                let choices: Vec<&&str> = vocabulary.iter().filter(|w| **w != words[p]).collect();
                let w = choices
                    .choose(rng)
                    .ok_or_else(|| Error::InvalidInput("vocabulary has no substitute".into()))?;
                words[p] = w.to_string();
            }
        }
        other => {
            return Err(Error::Config(format!("`{other}` is not a word-edit mode")));
        }
    }
    Ok(words.join(" "))
}

/// Builds one incorrect pair per correct pair. Reassignment gives each
/// audio the script of another pair via a derangement; the edit modes
/// apply `k` word edits to the pair's own script.
pub fn make_mismatch_set(
    correct: &[ManifestPair],
    mode: MismatchMode,
    k: usize,
    vocabulary: &[&str],
    rng: &mut impl Rng,
) -> Result<Vec<ManifestPair>> {
    let tag = |p: &ManifestPair, script: String| ManifestPair {
        pair_id: format!("{}-{}", p.pair_id, mode),
        script,
        feature_file: p.feature_file.clone(),
        label: Label::Incorrect,
        style: p.style.clone(),
        mode,
    };
    match mode {
        MismatchMode::Reassign => {
            let perm = derangement(correct.len(), rng)?;
            Ok(correct
                .iter()
                .zip(perm)
                .map(|(p, j)| tag(p, correct[j].script.clone()))
                .collect())
        }
        MismatchMode::Delete | MismatchMode::Insert | MismatchMode::Substitute => correct
            .iter()
            .map(|p| Ok(tag(p, edit_script(&p.script, mode, k, vocabulary, rng)?)))
            .collect(),
        other => Err(Error::Config(format!(
            "cannot build mismatches with mode `{other}`"
        ))),
    }
}
