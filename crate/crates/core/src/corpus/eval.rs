//! Batch scoring, accuracy at a threshold, threshold sweeps and cross-style
//! degradation.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::manifest::{CorpusManifest, FeatureSource, Label, ManifestPair, MismatchMode};
use crate::acoustic::AcousticModel;
use crate::align::AlignOptions;
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::verify::{analyze, decide_at, Decision, Method, PhoneVerdict, VerifierConfig};

/// Method-independent scores of one pair. A pair whose pipeline failed
/// keeps the error text and is decided as a mismatch by every method.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScores {
    pub pair_id: String,
    pub label: Label,
    pub mode: MismatchMode,
    pub llr: f64,
    pub apr: f64,
    pub rank_size: usize,
    pub per_phone: Vec<PhoneVerdict>,
    pub error: Option<String>,
}

impl PairScores {
    pub fn two_stage(&self, tau: f64) -> f64 {
        if self.llr <= tau {
            self.rank_size as f64
        } else {
            self.apr
        }
    }

    pub fn score(&self, method: Method, tau: f64) -> Option<f64> {
        if self.error.is_some() {
            return None;
        }
        Some(match method {
            Method::Lrt => self.llr,
            Method::Apr => self.apr,
            Method::Apr2Stage => self.two_stage(tau),
        })
    }

    pub fn decision(&self, cfg: &VerifierConfig) -> Decision {
        self.score(cfg.method, cfg.tau)
            .map_or(Decision::Mismatch, |s| {
                decide_at(s, cfg.method, cfg.threshold())
            })
    }
}

pub fn score_pair(
    pair: &ManifestPair,
    source: &dyn FeatureSource,
    model: &AcousticModel,
    lexicon: &Lexicon,
    opts: &AlignOptions,
) -> PairScores {
    let run = || -> Result<_> {
        let feat = source.features(&pair.feature_file)?;
        let lattice = lexicon.script_to_lattice(&pair.script)?;
        let (_, ev) = analyze(model, &lattice, &feat, opts)?;
        let inv = model.inventory();
        let per_phone = ev
            .segments()
            .iter()
            .map(|s| PhoneVerdict {
                phone: inv.symbol(s.phone).to_string(),
                rank: s.rank(),
                h0: s.h0,
                anti: s.anti,
            })
            .collect();
        Ok((ev.llr(), ev.apr(), per_phone))
    };
    let (llr, apr, per_phone, error) = match run() {
        Ok((llr, apr, pp)) => (llr, apr, pp, None),
        Err(e) => (f64::NAN, f64::NAN, Vec::new(), Some(e.to_string())),
    };
    PairScores {
        pair_id: pair.pair_id.clone(),
        label: pair.label,
        mode: pair.mode,
        llr,
        apr,
        rank_size: model.inventory().rank_size(),
        per_phone,
        error,
    }
}

/// Scores every pair in parallel on the current rayon pool; output order
/// follows the manifest.
pub fn score_corpus(
    manifest: &CorpusManifest,
    source: &dyn FeatureSource,
    model: &AcousticModel,
    lexicon: &Lexicon,
    opts: &AlignOptions,
) -> Vec<PairScores> {
    manifest
        .pairs
        .par_iter()
        .map(|p| score_pair(p, source, model, lexicon, opts))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairOutcome {
    pub pair_id: String,
    pub label: Label,
    pub score: Option<f64>,
    pub decision: Decision,
}

/// Accuracy of one method at one operating point. Correct pairs are the
/// positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub config: VerifierConfig,
    pub accuracy: f64,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub errors: usize,
    pub outcomes: Vec<PairOutcome>,
}

impl EvalResult {
    pub fn method(&self) -> Method {
        self.config.method
    }

    pub fn threshold(&self) -> f64 {
        self.config.threshold()
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// `# key=value` summary lines.
    pub fn summary(&self) -> String {
        format!(
            "# method={} tau={} theta={} accuracy={} TP={} TN={} FP={} FN={} errors={}\n",
            self.config.method,
            self.config.tau,
            self.config.theta,
            self.accuracy,
            self.tp,
            self.tn,
            self.fp,
            self.fn_,
            self.errors
        )
    }

    /// Per-pair records in the verdict column layout, plus `label` and
    /// `error`, followed by the summary block.
    pub fn to_tsv(&self, scores: &[PairScores]) -> String {
        let mut out = String::from(
            "pair_id\tmethod\tllr\tapr\ttwo_stage\tdecision\ttau\ttheta\tN\tper_phone\tlabel\terror\n",
        );
        for (o, s) in self.outcomes.iter().zip(scores) {
            let per_phone: Vec<String> = s
                .per_phone
                .iter()
                .map(|p| format!("{}:{}:{}:{}", p.phone, p.rank, p.h0, p.anti))
                .collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                o.pair_id,
                self.config.method,
                s.llr,
                s.apr,
                s.two_stage(self.config.tau),
                o.decision,
                self.config.tau,
                self.config.theta,
                s.per_phone.len(),
                per_phone.join(","),
                o.label,
                s.error.as_deref().unwrap_or("-")
            );
        }
        out.push_str(&self.summary());
        out
    }
}

pub fn evaluate_scores(scores: &[PairScores], cfg: &VerifierConfig) -> EvalResult {
    let (mut tp, mut tn, mut fp, mut fn_, mut errors) = (0, 0, 0, 0, 0);
    let outcomes = scores
        .iter()
        .map(|s| {
            let decision = s.decision(cfg);
            errors += usize::from(s.error.is_some());
            match (s.label, decision) {
                (Label::Correct, Decision::Match) => tp += 1,
                (Label::Correct, Decision::Mismatch) => fn_ += 1,
                (Label::Incorrect, Decision::Match) => fp += 1,
                (Label::Incorrect, Decision::Mismatch) => tn += 1,
            }
            PairOutcome {
                pair_id: s.pair_id.clone(),
                label: s.label,
                score: s.score(cfg.method, cfg.tau),
                decision,
            }
        })
        .collect();
    let total = scores.len().max(1);
    EvalResult {
        config: *cfg,
        accuracy: (tp + tn) as f64 / total as f64,
        tp,
        tn,
        fp,
        fn_,
        errors,
        outcomes,
    }
}

/// Scores and evaluates a manifest in one call.
pub fn evaluate(
    manifest: &CorpusManifest,
    source: &dyn FeatureSource,
    model: &AcousticModel,
    lexicon: &Lexicon,
    opts: &AlignOptions,
    cfg: &VerifierConfig,
) -> EvalResult {
    evaluate_scores(&score_corpus(manifest, source, model, lexicon, opts), cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub best: EvalResult,
    pub curve: Vec<EvalResult>,
}

impl Sweep {
    /// `threshold<TAB>accuracy` lines.
    pub fn curve_tsv(&self) -> String {
        let mut out = String::from("threshold\taccuracy\n");
        for r in &self.curve {
            let _ = writeln!(out, "{}\t{}", r.threshold(), r.accuracy);
        }
        out
    }
}

/// Evaluates every grid point, varying `tau` for LRT and two-stage and
/// `theta` for APR; the rest of `base` is kept. The best point maximises
/// accuracy, ties going to the smallest threshold.
pub fn sweep_threshold(
    scores: &[PairScores],
    base: &VerifierConfig,
    grid: &[f64],
) -> Result<Sweep> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let curve: Vec<EvalResult> = grid
        .iter()
        .map(|&x| {
            let mut cfg = *base;
            match base.method {
                Method::Lrt | Method::Apr2Stage => cfg.tau = x,
                Method::Apr => cfg.theta = x,
            }
            evaluate_scores(scores, &cfg)
        })
        .collect();
    let best = curve
        .iter()
        .reduce(|a, b| {
            if b.accuracy > a.accuracy
                || (b.accuracy == a.accuracy && b.threshold() < a.threshold())
            {
                b
            } else {
                a
            }
        })
        .expect("non-empty grid")
        .clone();
    Ok(Sweep { best, curve })
}

/// `1, 1.5, .., rank_size`.
pub fn theta_grid(rank_size: usize) -> Vec<f64> {
    (2..=2 * rank_size).map(|i| i as f64 / 2.0).collect()
}

/// Thresholds separating every pair of adjacent distinct LLR values, plus
/// one below the smallest and one above the largest.
pub fn tau_grid(scores: &[PairScores]) -> Vec<f64> {
    let mut v: Vec<f64> = scores
        .iter()
        .filter(|s| s.error.is_none())
        .map(|s| s.llr)
        .collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let (Some(&lo), Some(&hi)) = (v.first(), v.last()) else {
        return vec![0.0];
    };
    let mut grid = vec![lo - 1.0];
    grid.extend(v.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    grid.push(hi + 1.0);
    grid
}

fn rank_size(scores: &[PairScores]) -> Result<usize> {
    scores
        .first()
        .map(|s| s.rank_size)
        .filter(|&n| n >= 2)
        .ok_or(Error::InvalidInput("no scored pairs".into()))
}

/// Swept-optimal operating points for all three methods. The two-stage
/// sweep varies `tau` with `theta` held at the APR optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuned {
    pub lrt: Sweep,
    pub apr: Sweep,
    pub two_stage: Sweep,
}

impl Tuned {
    pub fn get(&self, method: Method) -> &Sweep {
        match method {
            Method::Lrt => &self.lrt,
            Method::Apr => &self.apr,
            Method::Apr2Stage => &self.two_stage,
        }
    }
}

pub fn tune(scores: &[PairScores]) -> Result<Tuned> {
    let p = rank_size(scores)?;
    let taus = tau_grid(scores);
    let lrt = sweep_threshold(
        scores,
        &VerifierConfig {
            tau: 0.0,
            theta: p as f64,
            method: Method::Lrt,
        },
        &taus,
    )?;
    let apr = sweep_threshold(
        scores,
        &VerifierConfig {
            tau: lrt.best.config.tau,
            theta: p as f64,
            method: Method::Apr,
        },
        &theta_grid(p),
    )?;
    let two_stage = sweep_threshold(
        scores,
        &VerifierConfig {
            tau: 0.0,
            theta: apr.best.config.theta,
            method: Method::Apr2Stage,
        },
        &taus,
    )?;
    Ok(Tuned {
        lrt,
        apr,
        two_stage,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Degradation {
    pub method: Method,
    pub read: EvalResult,
    pub shifted: EvalResult,
}

impl Degradation {
    /// Shifted accuracy minus read accuracy.
    pub fn delta(&self) -> f64 {
        self.shifted.accuracy - self.read.accuracy
    }
}

/// Tunes every method on `read` and applies the same operating points to
/// `shifted`.
pub fn degradation_report(read: &[PairScores], shifted: &[PairScores]) -> Result<Vec<Degradation>> {
    let tuned = tune(read)?;
    Ok(Method::ALL
        .iter()
        .map(|&m| {
            let best = &tuned.get(m).best;
            Degradation {
                method: m,
                read: best.clone(),
                shifted: evaluate_scores(shifted, &best.config),
            }
        })
        .collect())
}
