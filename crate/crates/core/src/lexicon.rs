//! Phone inventories, pronunciation dictionaries and script expansion.
//!
//! Inventory file: one phone symbol per line, `#` comments, and an optional
//! `:silence <sym>` line naming the silence phone. Lexicon file: one
//! `word phone phone ...` entry per line (tab or space separated); repeated
//! words add pronunciation variants.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frontend::short_hash;

const TOY_INVENTORY: &str = include_str!("../data/toy.inventory");
const TOY_LEXICON: &str = include_str!("../data/toy.lexicon");

/// Index of a phone within its [`PhoneInventory`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhoneId(pub usize);

impl PhoneId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The phone set `P`. The optional silence phone is modelled acoustically but
/// excluded from ranking, so `rank_size()` is `|P|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneInventory {
    phones: Vec<String>,
    index: HashMap<String, PhoneId>,
    silence: Option<PhoneId>,
}

impl PhoneInventory {
    /// Builds an inventory; a silence symbol missing from `phones` is appended.
    pub fn new<S: Into<String>>(
        phones: impl IntoIterator<Item = S>,
        silence: Option<&str>,
    ) -> Result<Self> {
        let mut list: Vec<String> = phones.into_iter().map(Into::into).collect();
        if let Some(sil) = silence {
            if !list.iter().any(|p| p == sil) {
                list.push(sil.to_string());
            }
        }
        let mut index = HashMap::with_capacity(list.len());
        for (i, sym) in list.iter().enumerate() {
            if sym.is_empty() || sym.chars().any(char::is_whitespace) || sym.starts_with([':', '#'])
            {
                return Err(Error::InvalidInput(format!("invalid phone symbol `{sym}`")));
            }
            if index.insert(sym.clone(), PhoneId(i)).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate phone symbol `{sym}`"
                )));
            }
        }
        let silence = silence.map(|s| index[s]);
        let inv = Self {
            phones: list,
            index,
            silence,
        };
        if inv.rank_size() < 2 {
            return Err(Error::InvalidInput(
                "inventory needs at least two non-silence phones".into(),
            ));
        }
        Ok(inv)
    }

    /// The bundled 39-phone toy inventory plus `sil`.
    pub fn toy() -> Self {
        Self::parse(TOY_INVENTORY, "toy.inventory").expect("bundled inventory is valid")
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut phones = Vec::new();
        let mut silence = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix(":silence") {
                let sym = rest.trim();
                if sym.is_empty() || sym.contains(char::is_whitespace) {
                    return Err(Error::parse(
                        source_name,
                        i + 1,
                        "`:silence` needs one symbol",
                    ));
                }
                silence = Some(sym.to_string());
                continue;
            }
            if line.contains(char::is_whitespace) {
                return Err(Error::parse(
                    source_name,
                    i + 1,
                    "one phone symbol per line",
                ));
            }
            phones.push(line.to_string());
        }
        Self::new(phones, silence.as_deref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.phones.iter().enumerate() {
            if self.silence != Some(PhoneId(i)) {
                out.push_str(p);
                out.push('\n');
            }
        }
        if let Some(sil) = self.silence {
            out.push_str(&format!(":silence {}\n", self.symbol(sil)));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Number of phones including silence.
    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    /// `|P|`: the number of rankable (non-silence) phones.
    pub fn rank_size(&self) -> usize {
        self.phones.len() - usize::from(self.silence.is_some())
    }

    pub fn get(&self, symbol: &str) -> Option<PhoneId> {
        self.index.get(symbol).copied()
    }

    pub fn id(&self, symbol: &str) -> Result<PhoneId> {
        self.get(symbol).ok_or_else(|| Error::UnknownPhone {
            phone: symbol.to_string(),
            line: None,
        })
    }

    pub fn symbol(&self, id: PhoneId) -> &str {
        &self.phones[id.0]
    }

    pub fn contains(&self, id: PhoneId) -> bool {
        id.0 < self.phones.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.phones
    }

    pub fn silence(&self) -> Option<PhoneId> {
        self.silence
    }

    pub fn is_silence(&self, id: PhoneId) -> bool {
        self.silence == Some(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = PhoneId> + '_ {
        (0..self.phones.len()).map(PhoneId)
    }

    /// Non-silence phones in inventory order.
    pub fn ranking_phones(&self) -> impl Iterator<Item = PhoneId> + '_ {
        self.ids().filter(move |&p| !self.is_silence(p))
    }

    /// Short stable hash of the phone list and silence designation.
    pub fn hash(&self) -> String {
        let mut canon = self.phones.join("\n");
        if let Some(sil) = self.silence {
            canon.push_str(&format!("\n:silence {}", self.symbol(sil)));
        }
        short_hash(canon.as_bytes())
    }
}

/// A non-empty phone sequence for one word.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pronunciation(Vec<PhoneId>);

impl Pronunciation {
    pub fn new(phones: Vec<PhoneId>) -> Result<Self> {
        if phones.is_empty() {
            return Err(Error::InvalidInput(
                "pronunciation must not be empty".into(),
            ));
        }
        Ok(Self(phones))
    }

    pub fn from_symbols(symbols: &[&str], inventory: &PhoneInventory) -> Result<Self> {
        let phones = symbols
            .iter()
            .map(|s| inventory.id(s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(phones)
    }

    pub fn phones(&self) -> &[PhoneId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn display<'a>(&'a self, inventory: &'a PhoneInventory) -> impl fmt::Display + 'a {
        DisplayPron(self, inventory)
    }
}

struct DisplayPron<'a>(&'a Pronunciation, &'a PhoneInventory);

impl fmt::Display for DisplayPron<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.0 .0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(self.1.symbol(*p))?;
        }
        Ok(())
    }
}

/// Letter-to-phone rewrite rules applied longest match first.
#[derive(Debug, Clone)]
pub struct G2p {
    rules: HashMap<String, Vec<String>>,
    max_len: usize,
    default_phone: String,
}

const TOY_RULES: &[(&str, &str)] = &[
    ("tch", "ch"),
    ("igh", "ay"),
    ("ch", "ch"),
    ("sh", "sh"),
    ("th", "th"),
    ("ng", "ng"),
    ("ph", "f"),
    ("ck", "k"),
    ("wh", "w"),
    ("qu", "k w"),
    ("ee", "iy"),
    ("ea", "iy"),
    ("oo", "uw"),
    ("ou", "aw"),
    ("ow", "ow"),
    ("ai", "ey"),
    ("ay", "ey"),
    ("oa", "ow"),
    ("oi", "oy"),
    ("oy", "oy"),
    ("au", "ao"),
    ("aw", "ao"),
    ("er", "er"),
    ("ir", "er"),
    ("ur", "er"),
    ("ar", "aa r"),
    ("or", "ao r"),
    ("ll", "l"),
    ("ss", "s"),
    ("tt", "t"),
    ("ff", "f"),
    ("pp", "p"),
    ("mm", "m"),
    ("nn", "n"),
    ("dd", "d"),
    ("bb", "b"),
    ("gg", "g"),
    ("rr", "r"),
    ("zz", "z"),
    ("cc", "k"),
    ("a", "ae"),
    ("b", "b"),
    ("c", "k"),
    ("d", "d"),
    ("e", "eh"),
    ("f", "f"),
    ("g", "g"),
    ("h", "hh"),
    ("i", "ih"),
    ("j", "jh"),
    ("k", "k"),
    ("l", "l"),
    ("m", "m"),
    ("n", "n"),
    ("o", "aa"),
    ("p", "p"),
    ("q", "k"),
    ("r", "r"),
    ("s", "s"),
    ("t", "t"),
    ("u", "ah"),
    ("v", "v"),
    ("w", "w"),
    ("x", "k s"),
    ("y", "y"),
    ("z", "z"),
];

impl G2p {
    pub fn new<'a>(
        rules: impl IntoIterator<Item = (&'a str, &'a str)>,
        default_phone: &str,
    ) -> Result<Self> {
        let mut map = HashMap::new();
        for (graphemes, phones) in rules {
            let phones: Vec<String> = phones.split_whitespace().map(str::to_string).collect();
            if graphemes.is_empty() || phones.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "G2P rule `{graphemes}` -> `{}` must be non-empty on both sides",
                    phones.join(" ")
                )));
            }
            map.insert(graphemes.to_lowercase(), phones);
        }
        let max_len = map.keys().map(|k| k.chars().count()).max().unwrap_or(1);
        Ok(Self {
            rules: map,
            max_len,
            default_phone: default_phone.to_string(),
        })
    }

    /// Rule table for the bundled toy inventory; unknown letters map to `ah`.
    pub fn toy() -> Self {
        Self::new(TOY_RULES.iter().copied(), "ah").expect("bundled rules are valid")
    }

    /// Converts a word; characters that are not alphabetic are dropped first.
    pub fn convert(&self, word: &str, inventory: &PhoneInventory) -> Result<Pronunciation> {
        let letters: Vec<char> = word
            .chars()
            .flat_map(char::to_lowercase)
            .filter(|c| c.is_alphabetic())
            .collect();
        if letters.is_empty() {
            return Err(Error::G2p(word.to_string()));
        }
        let mut phones = Vec::new();
        let mut i = 0;
        while i < letters.len() {
            let longest = self.max_len.min(letters.len() - i);
            let hit = (1..=longest).rev().find_map(|n| {
                let key: String = letters[i..i + n].iter().collect();
                self.rules.get(&key).map(|ph| (n, ph))
            });
            match hit {
                Some((n, ph)) => {
                    for sym in ph {
                        phones.push(inventory.id(sym)?);
                    }
                    i += n;
                }
                None => {
                    phones.push(inventory.id(&self.default_phone)?);
                    i += 1;
                }
            }
        }
        Pronunciation::new(phones)
    }
}

/// Splits a script into case-folded words, dropping punctuation.
pub fn tokenize(script: &str) -> Vec<String> {
    script
        .split_whitespace()
        .map(|tok| {
            tok.chars()
                .flat_map(char::to_lowercase)
                .filter(|c| c.is_alphanumeric())
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Word to pronunciation-variant dictionary over a fixed inventory.
#[derive(Debug, Clone)]
pub struct Lexicon {
    inventory: PhoneInventory,
    entries: BTreeMap<String, Vec<Pronunciation>>,
    g2p: G2p,
}

impl Lexicon {
    pub fn new(inventory: PhoneInventory) -> Self {
        Self {
            inventory,
            entries: BTreeMap::new(),
            g2p: G2p::toy(),
        }
    }

    pub fn with_g2p(mut self, g2p: G2p) -> Self {
        self.g2p = g2p;
        self
    }

    /// The bundled toy lexicon over [`PhoneInventory::toy`].
    pub fn toy() -> Self {
        Self::parse(TOY_LEXICON, PhoneInventory::toy()).expect("bundled lexicon is valid")
    }

    pub fn parse(text: &str, inventory: PhoneInventory) -> Result<Self> {
        let mut lex = Self::new(inventory);
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut toks = line.split_whitespace();
            let word = toks.next().expect("non-empty line").to_lowercase();
            let phones = toks
                .map(|sym| {
                    lex.inventory.get(sym).ok_or_else(|| Error::UnknownPhone {
                        phone: sym.to_string(),
                        line: Some(line_no),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if phones.is_empty() {
                return Err(Error::EmptyPronunciation {
                    word,
                    line: line_no,
                });
            }
            let variants = lex.entries.entry(word.clone()).or_default();
            let pron = Pronunciation(phones);
            if variants.contains(&pron) {
                return Err(Error::DuplicateEntry {
                    word,
                    line: line_no,
                });
            }
            variants.push(pron);
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>, inventory: PhoneInventory) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, inventory)
    }

    /// One `word phones...` line per variant, words in sorted order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (word, variants) in &self.entries {
            for pron in variants {
                out.push_str(&format!("{word} {}\n", pron.display(&self.inventory)));
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Adds a variant; identical duplicates are ignored.
    pub fn insert(&mut self, word: &str, pron: Pronunciation) -> Result<()> {
        if let Some(bad) = pron.phones().iter().find(|p| !self.inventory.contains(**p)) {
            return Err(Error::UnknownPhone {
                phone: format!("#{}", bad.0),
                line: None,
            });
        }
        let variants = self.entries.entry(word.to_lowercase()).or_default();
        if !variants.contains(&pron) {
            variants.push(pron);
        }
        Ok(())
    }

    pub fn inventory(&self) -> &PhoneInventory {
        &self.inventory
    }

    pub fn lookup(&self, word: &str) -> Option<&[Pronunciation]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn g2p_fallback(&self, word: &str) -> Result<Pronunciation> {
        self.g2p.convert(word, &self.inventory)
    }

    /// Resolves every script word, falling back to G2P for out-of-vocabulary words.
    pub fn script_to_lattice(&self, script: &str) -> Result<PronunciationLattice> {
        let words = tokenize(script);
        if words.is_empty() {
            return Err(Error::EmptyScript);
        }
        let words = words
            .into_iter()
            .map(|word| match self.lookup(&word) {
                Some(variants) => Ok(LatticeWord {
                    variants: variants.to_vec(),
                    word,
                    oov: false,
                }),
                None => Ok(LatticeWord {
                    variants: vec![self.g2p_fallback(&word)?],
                    word,
                    oov: true,
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PronunciationLattice { words })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeWord {
    pub word: String,
    pub variants: Vec<Pronunciation>,
    /// The word was not in the lexicon and its pronunciation came from G2P.
    pub oov: bool,
}

/// Per-word pronunciation alternatives in script order.
#[derive(Debug, Clone, PartialEq)]
pub struct PronunciationLattice {
    words: Vec<LatticeWord>,
}

impl PronunciationLattice {
    pub fn new(words: Vec<LatticeWord>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::EmptyScript);
        }
        if let Some(w) = words.iter().find(|w| w.variants.is_empty()) {
            return Err(Error::InvalidInput(format!(
                "word `{}` has no variants",
                w.word
            )));
        }
        Ok(Self { words })
    }

    /// A lattice with a single pronunciation per word.
    pub fn from_pronunciations(prons: Vec<Pronunciation>) -> Result<Self> {
        Self::new(
            prons
                .into_iter()
                .enumerate()
                .map(|(i, p)| LatticeWord {
                    word: format!("w{i}"),
                    variants: vec![p],
                    oov: false,
                })
                .collect(),
        )
    }

    pub fn words(&self) -> &[LatticeWord] {
        &self.words
    }

    /// Product of per-word variant counts (saturating).
    pub fn num_expansions(&self) -> u128 {
        self.words
            .iter()
            .fold(1u128, |acc, w| acc.saturating_mul(w.variants.len() as u128))
    }

    /// Up to `cap` expansions in odometer order: the last word's variant
    /// changes fastest, so expansion 0 takes every word's first variant.
    pub fn expansions(&self, cap: usize) -> Vec<Vec<&Pronunciation>> {
        let mut out = Vec::new();
        let mut choice = vec![0usize; self.words.len()];
        while out.len() < cap {
            out.push(
                self.words
                    .iter()
                    .zip(&choice)
                    .map(|(w, &c)| &w.variants[c])
                    .collect(),
            );
            let mut pos = self.words.len();
            loop {
                if pos == 0 {
                    return out;
                }
                pos -= 1;
                choice[pos] += 1;
                if choice[pos] < self.words[pos].variants.len() {
                    break;
                }
                choice[pos] = 0;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_inventory() -> PhoneInventory {
        PhoneInventory::new(["k", "ae", "t", "d", "g", "r", "iy", "eh"], Some("sil")).unwrap()
    }

    #[test]
    fn toy_data_loads() {
        let lex = Lexicon::toy();
        assert_eq!(lex.inventory().rank_size(), 39);
        assert_eq!(lex.inventory().len(), 40);
        assert!(lex.len() > 150);
    }

    #[test]
    fn parses_single_entry() {
        let lex = Lexicon::parse("cat k ae t\n", small_inventory()).unwrap();
        let inv = lex.inventory();
        assert_eq!(
            lex.lookup("cat").unwrap(),
            &[Pronunciation::from_symbols(&["k", "ae", "t"], inv).unwrap()]
        );
    }

    #[test]
    fn repeated_word_adds_variants() {
        let lex = Lexicon::parse("read r iy d\nread\tr eh d\n", small_inventory()).unwrap();
        assert_eq!(lex.lookup("read").unwrap().len(), 2);
    }

    #[test]
    fn unknown_phone_is_named() {
        let err = Lexicon::parse("dog d oh g\n", small_inventory()).unwrap_err();
        match err {
            Error::UnknownPhone { phone, line } => {
                assert_eq!(phone, "oh");
                assert_eq!(line, Some(1));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_empty_entries_are_rejected() {
        assert!(matches!(
            Lexicon::parse("cat k ae t\ncat k ae t\n", small_inventory()),
            Err(Error::DuplicateEntry { line: 2, .. })
        ));
        assert!(matches!(
            Lexicon::parse("cat\n", small_inventory()),
            Err(Error::EmptyPronunciation { line: 1, .. })
        ));
    }

    #[test]
    fn inventory_needs_two_rankable_phones() {
        assert!(PhoneInventory::new(["a"], Some("sil")).is_err());
        assert!(PhoneInventory::new(["a", "a"], None).is_err());
        let inv = PhoneInventory::new(["a", "b"], Some("sil")).unwrap();
        assert_eq!(inv.rank_size(), 2);
        assert!(inv.is_silence(inv.id("sil").unwrap()));
    }

    #[test]
    fn inventory_text_round_trips() {
        let inv = PhoneInventory::toy();
        let back = PhoneInventory::parse(&inv.to_text(), "mem").unwrap();
        assert_eq!(inv, back);
        assert_eq!(inv.hash(), back.hash());
    }

    #[test]
    fn g2p_single_letter_rule() {
        let inv = PhoneInventory::toy();
        let p = G2p::toy().convert("b", &inv).unwrap();
        assert_eq!(p.phones(), &[inv.id("b").unwrap()]);
    }

    #[test]
    fn g2p_prefers_digraphs() {
        // s-h-i-p: "sh" fires before "s" + "h", then "i", "p".
        let inv = PhoneInventory::toy();
        let p = G2p::toy().convert("Ship", &inv).unwrap();
        assert_eq!(p.display(&inv).to_string(), "sh ih p");
        // t-h-a-t-c-h: "th", "a", "tch".
        let p = G2p::toy().convert("thatch", &inv).unwrap();
        assert_eq!(p.display(&inv).to_string(), "th ae ch");
    }

    #[test]
    fn g2p_maps_unknown_letters_to_default() {
        let inv = PhoneInventory::toy();
        let p = G2p::toy().convert("bé", &inv).unwrap();
        assert_eq!(p.display(&inv).to_string(), "b ah");
    }

    #[test]
    fn g2p_rejects_numeric_tokens() {
        let inv = PhoneInventory::toy();
        assert!(matches!(
            G2p::toy().convert("1234", &inv),
            Err(Error::G2p(_))
        ));
        assert!(matches!(G2p::toy().convert("", &inv), Err(Error::G2p(_))));
    }

    #[test]
    fn tokenizer_folds_case_and_strips_punctuation() {
        assert_eq!(
            tokenize("  Hello, World!  don't -- x"),
            ["hello", "world", "dont", "x"]
        );
    }

    #[test]
    fn lattice_expansion_count_is_the_product() {
        let lex = Lexicon::toy();
        let lat = lex.script_to_lattice("read the").unwrap();
        assert_eq!(lat.num_expansions(), 4);
        let exps = lat.expansions(100);
        assert_eq!(exps.len(), 4);
        // Odometer order: last word fastest.
        assert_eq!(exps[0][0], exps[1][0]);
        assert_ne!(exps[0][1], exps[1][1]);
        assert_eq!(lat.expansions(3).len(), 3);
    }

    #[test]
    fn oov_words_are_flagged() {
        let lex = Lexicon::toy();
        let lat = lex.script_to_lattice("The zorbish king.").unwrap();
        let inv = lex.inventory();
        assert!(!lat.words()[0].oov);
        assert!(lat.words()[1].oov);
        // z-o-r-b-i-sh: "z", "or", "b", "i", "sh".
        assert_eq!(
            lat.words()[1].variants[0].display(inv).to_string(),
            "z ao r b ih sh"
        );
        assert!(!lat.words()[2].oov);
    }

    #[test]
    fn empty_and_unresolvable_scripts_fail() {
        let lex = Lexicon::toy();
        assert!(matches!(
            lex.script_to_lattice(" ... "),
            Err(Error::EmptyScript)
        ));
        assert!(matches!(
            lex.script_to_lattice("the 42"),
            Err(Error::G2p(_))
        ));
    }
}
