//! Confidence measures and match decisions.
//!
//! * LLR: frame-weighted mean target score minus frame-weighted mean
//!   anti-model score over the non-silence segments.
//! * APR: unweighted mean, over segments, of the target phone's rank among
//!   all non-silence phones scored on that segment (1 = best).
//! * Two-stage: APR, replaced by the worst rank `|P|` when the LLR is at or
//!   below `tau`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::acoustic::{AcousticModel, ScoreTable};
use crate::align::{align_table, AlignOptions, Alignment};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Frames};
use crate::lexicon::{PhoneId, PhoneInventory, PronunciationLattice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Lrt,
    Apr,
    Apr2Stage,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lrt, Method::Apr, Method::Apr2Stage];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lrt => "LRT",
            Method::Apr => "APR",
            Method::Apr2Stage => "APR2STAGE",
        }
    }

    /// LRT matches on high scores, the rank methods on low ones.
    pub fn higher_is_match(self) -> bool {
        self == Method::Lrt
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(['-', '_'], "").as_str() {
            "LRT" | "LLR" => Ok(Method::Lrt),
            "APR" => Ok(Method::Apr),
            "APR2STAGE" | "TWOSTAGE" => Ok(Method::Apr2Stage),
            _ => Err(Error::Config(format!(
                "unknown method `{s}` (expected LRT, APR or APR2STAGE)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Match,
    Mismatch,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Match => "match",
            Decision::Mismatch => "mismatch",
        }
    }

    pub fn is_match(self) -> bool {
        self == Decision::Match
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "match" => Ok(Decision::Match),
            "mismatch" => Ok(Decision::Mismatch),
            _ => Err(Error::Config(format!("unknown decision `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifierConfig {
    pub tau: f64,
    pub theta: f64,
    pub method: Method,
}

impl VerifierConfig {
    /// Checks `theta` lies in `(1, rank_size]` and `tau` is not NaN.
    pub fn new(tau: f64, theta: f64, method: Method, rank_size: usize) -> Result<Self> {
        let cfg = Self { tau, theta, method };
        cfg.validate(rank_size)?;
        Ok(cfg)
    }

    pub fn validate(&self, rank_size: usize) -> Result<()> {
        if self.tau.is_nan() {
            return Err(Error::Config("tau must be a number".into()));
        }
        if !(self.theta > 1.0 && self.theta <= rank_size as f64) {
            return Err(Error::Config(format!(
                "theta must lie in (1, {rank_size}], got {}",
                self.theta
            )));
        }
        Ok(())
    }

    /// The threshold `method` compares against.
    pub fn threshold(&self) -> f64 {
        match self.method {
            Method::Lrt => self.tau,
            Method::Apr | Method::Apr2Stage => self.theta,
        }
    }
}

/// LRT matches when `score > tau`; the rank methods when `score < theta`.
pub fn decide(score: f64, cfg: &VerifierConfig) -> Decision {
    decide_at(score, cfg.method, cfg.threshold())
}

pub fn decide_at(score: f64, method: Method, threshold: f64) -> Decision {
    let hit = if method.higher_is_match() {
        score > threshold
    } else {
        score < threshold
    };
    if hit {
        Decision::Match
    } else {
        Decision::Mismatch
    }
}

/// `1 +` the number of competitors scoring strictly above `scores[target]`.
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let s = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(q, &v)| q != target && v > s)
        .count()
}

/// Rank of `phone` among every non-silence phone, by segment score.
pub fn phone_rank(model: &AcousticModel, phone: PhoneId, seg: Frames<'_>) -> Result<usize> {
    let inv = model.inventory();
    if !inv.contains(phone) {
        return Err(Error::UnknownPhone {
            phone: format!("#{}", phone.0),
            line: None,
        });
    }
    if inv.is_silence(phone) {
        return Err(Error::NotRankable(inv.symbol(phone).to_string()));
    }
    if seg.is_empty() {
        return Err(Error::EmptySegment);
    }
    let mut target = 0;
    let mut scores = Vec::with_capacity(inv.rank_size());
    for (i, q) in inv.ranking_phones().enumerate() {
        if q == phone {
            target = i;
        }
        scores.push(model.score_segment(q, seg)?);
    }
    Ok(rank_of(&scores, target))
}

/// Scores of one aligned non-silence segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEvidence {
    pub phone: PhoneId,
    pub frames: usize,
    /// Mean frame score under the segment's own phone.
    pub h0: f64,
    /// Mean frame score under the anti-model.
    pub anti: f64,
    /// Segment scores of every ranking phone, in inventory order.
    pub scores: Vec<f64>,
    /// Position of `phone` in `scores`.
    pub target: usize,
}

impl SegmentEvidence {
    pub fn rank(&self) -> usize {
        rank_of(&self.scores, self.target)
    }
}

/// Everything the three measures need from one aligned utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    segments: Vec<SegmentEvidence>,
    rank_size: usize,
}

impl Evidence {
    pub fn collect(
        model: &AcousticModel,
        alignment: &Alignment,
        feat: &FeatureMatrix,
    ) -> Result<Self> {
        model.check_features(feat)?;
        if feat.num_frames() != alignment.num_frames() {
            return Err(Error::AlignmentMismatch {
                alignment: alignment.num_frames(),
                features: feat.num_frames(),
            });
        }
        let table = model.score_table(feat.frames())?;
        Self::from_table(&table, alignment, model.inventory())
    }

    pub fn from_table(
        table: &ScoreTable,
        alignment: &Alignment,
        inventory: &PhoneInventory,
    ) -> Result<Self> {
        if table.num_frames() != alignment.num_frames() {
            return Err(Error::AlignmentMismatch {
                alignment: alignment.num_frames(),
                features: table.num_frames(),
            });
        }
        let ranking: Vec<PhoneId> = inventory.ranking_phones().collect();
        let mut segments = Vec::new();
        for seg in alignment.phone_segments() {
            if inventory.is_silence(seg.phone) {
                continue;
            }
            let target = ranking
                .iter()
                .position(|&q| q == seg.phone)
                .ok_or_else(|| Error::NotRankable(inventory.symbol(seg.phone).to_string()))?;
            let scores: Vec<f64> = ranking
                .iter()
                .map(|&q| table.segment_mean(q, seg.start, seg.end))
                .collect();
            segments.push(SegmentEvidence {
                phone: seg.phone,
                frames: seg.len(),
                h0: scores[target],
                anti: table.anti_mean(seg.start, seg.end),
                scores,
                target,
            });
        }
        if segments.is_empty() {
            return Err(Error::NoPhones);
        }
        Ok(Self {
            segments,
            rank_size: inventory.rank_size(),
        })
    }

    pub fn segments(&self) -> &[SegmentEvidence] {
        &self.segments
    }

    /// `|P|`, the worst possible rank.
    pub fn rank_size(&self) -> usize {
        self.rank_size
    }

    pub fn num_phones(&self) -> usize {
        self.segments.len()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.segments.iter().map(SegmentEvidence::rank).collect()
    }

    /// Frame-weighted target score `g`.
    pub fn g(&self) -> f64 {
        self.weighted(|s| s.h0)
    }

    /// Frame-weighted anti-model score `G`.
    pub fn big_g(&self) -> f64 {
        self.weighted(|s| s.anti)
    }

    fn weighted(&self, f: impl Fn(&SegmentEvidence) -> f64) -> f64 {
        let total: usize = self.segments.iter().map(|s| s.frames).sum();
        let sum: f64 = self.segments.iter().map(|s| s.frames as f64 * f(s)).sum();
        sum / total as f64
    }

    pub fn llr(&self) -> f64 {
        self.g() - self.big_g()
    }

    pub fn apr(&self) -> f64 {
        let sum: usize = self.ranks().iter().sum();
        sum as f64 / self.segments.len() as f64
    }

    pub fn two_stage(&self, tau: f64) -> f64 {
        if self.llr() <= tau {
            self.rank_size as f64
        } else {
            self.apr()
        }
    }

    pub fn score(&self, method: Method, tau: f64) -> f64 {
        match method {
            Method::Lrt => self.llr(),
            Method::Apr => self.apr(),
            Method::Apr2Stage => self.two_stage(tau),
        }
    }

    /// Applies `f` to every segment score, target, competitor and anti alike.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| SegmentEvidence {
                    h0: f(s.h0),
                    anti: f(s.anti),
                    scores: s.scores.iter().map(|&v| f(v)).collect(),
                    ..s.clone()
                })
                .collect(),
            rank_size: self.rank_size,
        }
    }
}

pub fn compute_llr(
    model: &AcousticModel,
    alignment: &Alignment,
    feat: &FeatureMatrix,
) -> Result<f64> {
    Ok(Evidence::collect(model, alignment, feat)?.llr())
}

pub fn compute_apr(
    model: &AcousticModel,
    alignment: &Alignment,
    feat: &FeatureMatrix,
) -> Result<f64> {
    Ok(Evidence::collect(model, alignment, feat)?.apr())
}

pub fn compute_two_stage(
    model: &AcousticModel,
    alignment: &Alignment,
    feat: &FeatureMatrix,
    cfg: &VerifierConfig,
) -> Result<f64> {
    Ok(Evidence::collect(model, alignment, feat)?.two_stage(cfg.tau))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhoneVerdict {
    pub phone: String,
    pub rank: usize,
    pub h0: f64,
    pub anti: f64,
}

/// One verified pair, serializable as a tab-separated record.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictReport {
    pub pair_id: String,
    pub method: Method,
    pub llr: f64,
    pub apr: f64,
    pub two_stage: f64,
    pub decision: Decision,
    pub tau: f64,
    pub theta: f64,
    pub num_phones: usize,
    pub per_phone: Vec<PhoneVerdict>,
}

pub const REPORT_HEADER: &str =
    "pair_id\tmethod\tllr\tapr\ttwo_stage\tdecision\ttau\ttheta\tN\tper_phone";

impl VerdictReport {
    pub fn new(
        pair_id: impl Into<String>,
        evidence: &Evidence,
        cfg: &VerifierConfig,
        inventory: &PhoneInventory,
    ) -> Self {
        let score = evidence.score(cfg.method, cfg.tau);
        Self {
            pair_id: pair_id.into(),
            method: cfg.method,
            llr: evidence.llr(),
            apr: evidence.apr(),
            two_stage: evidence.two_stage(cfg.tau),
            decision: decide(score, cfg),
            tau: cfg.tau,
            theta: cfg.theta,
            num_phones: evidence.num_phones(),
            per_phone: evidence
                .segments()
                .iter()
                .map(|s| PhoneVerdict {
                    phone: inventory.symbol(s.phone).to_string(),
                    rank: s.rank(),
                    h0: s.h0,
                    anti: s.anti,
                })
                .collect(),
        }
    }

    /// The score the configured method decided on.
    pub fn score(&self) -> f64 {
        match self.method {
            Method::Lrt => self.llr,
            Method::Apr => self.apr,
            Method::Apr2Stage => self.two_stage,
        }
    }

    /// Tab-separated record; `per_phone` is `phone:rank:h0:anti` joined by commas.
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t",
            self.pair_id,
            self.method,
            self.llr,
            self.apr,
            self.two_stage,
            self.decision,
            self.tau,
            self.theta,
            self.num_phones
        );
        for (i, p) in self.per_phone.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}:{}:{}:{}", p.phone, p.rank, p.h0, p.anti);
        }
        out
    }

    pub fn from_tsv(line: &str) -> Result<Self> {
        let bad = |what: &str| Error::parse("verdict record", 1, format!("bad {what}"));
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(bad("column count"));
        }
        let num = |i: usize, what: &str| cols[i].parse::<f64>().map_err(|_| bad(what));
        let mut per_phone = Vec::new();
        for item in cols[9].split(',').filter(|s| !s.is_empty()) {
            let f: Vec<&str> = item.split(':').collect();
            if f.len() != 4 {
                return Err(bad("per-phone entry"));
            }
            per_phone.push(PhoneVerdict {
                phone: f[0].to_string(),
                rank: f[1].parse().map_err(|_| bad("rank"))?,
                h0: f[2].parse().map_err(|_| bad("h0 score"))?,
                anti: f[3].parse().map_err(|_| bad("anti score"))?,
            });
        }
        Ok(Self {
            pair_id: cols[0].to_string(),
            method: cols[1].parse()?,
            llr: num(2, "llr")?,
            apr: num(3, "apr")?,
            two_stage: num(4, "two_stage")?,
            decision: cols[5].parse()?,
            tau: num(6, "tau")?,
            theta: num(7, "theta")?,
            num_phones: cols[8].parse().map_err(|_| bad("N"))?,
            per_phone,
        })
    }
}

/// Aligns a lattice to features and collects the evidence in one pass over
/// the frame scores.
pub fn analyze(
    model: &AcousticModel,
    lattice: &PronunciationLattice,
    feat: &FeatureMatrix,
    opts: &AlignOptions,
) -> Result<(Alignment, Evidence)> {
    model.check_features(feat)?;
    let table = model.score_table(feat.frames())?;
    let alignment = align_table(&table, lattice, model.inventory(), opts)?;
    let evidence = Evidence::from_table(&table, &alignment, model.inventory())?;
    Ok((alignment, evidence))
}

/// Full pipeline for one pair.
pub fn verify(
    pair_id: &str,
    model: &AcousticModel,
    lattice: &PronunciationLattice,
    feat: &FeatureMatrix,
    opts: &AlignOptions,
    cfg: &VerifierConfig,
) -> Result<VerdictReport> {
    cfg.validate(model.inventory().rank_size())?;
    let (_, evidence) = analyze(model, lattice, feat, opts)?;
    Ok(VerdictReport::new(
        pair_id,
        &evidence,
        cfg,
        model.inventory(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::Segment;

    fn inventory() -> PhoneInventory {
        PhoneInventory::new(["a", "b", "c"], Some("sil")).unwrap()
    }

    // Scores: a=0, b=1, c=2, sil=3, then the anti column.
    fn table(rows: &[[f64; 5]]) -> ScoreTable {
        let phone: Vec<Vec<f64>> = rows.iter().map(|r| r[..4].to_vec()).collect();
        let anti = rows.iter().map(|r| r[4]).collect();
        ScoreTable::from_scores(&phone, anti).unwrap()
    }

    fn seg(phone: usize, start: usize, end: usize, silence: bool) -> Segment {
        Segment {
            phone: PhoneId(phone),
            start,
            end,
            silence,
        }
    }

    #[test]
    fn rank_counts_strictly_greater_competitors() {
        assert_eq!(rank_of(&[1.0, 3.0, 2.0], 1), 1);
        assert_eq!(rank_of(&[1.0, 3.0, 2.0], 0), 3);
        assert_eq!(rank_of(&[2.0, 2.0, 2.0], 2), 1);
        assert_eq!(rank_of(&[5.0, 2.0, 5.0], 0), 1);
    }

    #[test]
    fn hand_computed_two_segment_case() {
        // Segment 1: phone a over 2 frames, segment 2: phone c over 3 frames,
        // plus one leading silence frame that must be ignored.
        let t = table(&[
            [-50.0, -50.0, -50.0, 0.0, -100.0],
            [-1.0, -2.0, -3.0, -9.0, -4.0],
            [-3.0, -2.0, -5.0, -9.0, -4.0],
            [-6.0, -1.0, -2.0, -9.0, -3.0],
            [-6.0, -1.0, -2.0, -9.0, -3.0],
            [-6.0, -4.0, -5.0, -9.0, -6.0],
        ]);
        let al = Alignment::from_segments(
            vec![seg(3, 0, 1, true), seg(0, 1, 3, false), seg(2, 3, 6, false)],
            &t,
        )
        .unwrap();
        let ev = Evidence::from_table(&t, &al, &inventory()).unwrap();
        // h0: a = -2, c = -3; anti: -4, -4.
        // g = (2*-2 + 3*-3)/5 = -13/5, G = -4.
        assert_eq!(ev.num_phones(), 2);
        assert!((ev.g() - (-13.0 / 5.0)).abs() < 1e-12);
        assert!((ev.big_g() + 4.0).abs() < 1e-12);
        assert!((ev.llr() - 1.4).abs() < 1e-12);
        // a: a=-2, b=-2, c=-4 -> rank 1 (tie shares). c: b=-2, a=-6 -> rank 2.
        assert_eq!(ev.ranks(), [1, 2]);
        assert_eq!(ev.apr(), 1.5);
        assert_eq!(ev.rank_size(), 3);
    }

    #[test]
    fn two_stage_boundary_is_inclusive() {
        let t = table(&[[0.0, -1.0, -1.0, -1.0, -1.5], [0.0, -1.0, -1.0, -1.0, -1.5]]);
        let al = Alignment::from_segments(vec![seg(0, 0, 2, false)], &t).unwrap();
        let ev = Evidence::from_table(&t, &al, &inventory()).unwrap();
        assert_eq!(ev.llr(), 1.5);
        assert_eq!(ev.two_stage(1.5), 3.0);
        assert_eq!(ev.two_stage(1.4), ev.apr());
        assert_eq!(ev.two_stage(f64::INFINITY), 3.0);
    }

    #[test]
    fn decisions_use_strict_inequalities() {
        let lrt = VerifierConfig::new(1.5, 4.0, Method::Lrt, 39).unwrap();
        assert_eq!(decide(1.6, &lrt), Decision::Match);
        assert_eq!(decide(1.5, &lrt), Decision::Mismatch);
        let apr = VerifierConfig::new(1.5, 4.0, Method::Apr, 39).unwrap();
        assert_eq!(decide(4.0, &apr), Decision::Mismatch);
        assert_eq!(decide(3.9, &apr), Decision::Match);
    }

    #[test]
    fn theta_range_is_enforced() {
        assert!(VerifierConfig::new(0.0, 1.0, Method::Apr, 39).is_err());
        assert!(VerifierConfig::new(0.0, 39.5, Method::Apr, 39).is_err());
        assert!(VerifierConfig::new(0.0, 39.0, Method::Apr, 39).is_ok());
        assert!(VerifierConfig::new(f64::NAN, 4.0, Method::Apr, 39).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("apr-2stage".parse::<Method>().unwrap(), Method::Apr2Stage);
        assert!("gop".parse::<Method>().is_err());
    }

    #[test]
    fn report_record_round_trips() {
        let t = table(&[[-1.0, -2.0, -0.5, -9.0, -1.25]; 4]);
        let al =
            Alignment::from_segments(vec![seg(0, 0, 2, false), seg(1, 2, 4, false)], &t).unwrap();
        let ev = Evidence::from_table(&t, &al, &inventory()).unwrap();
        let cfg = VerifierConfig::new(0.1, 2.5, Method::Apr2Stage, 3).unwrap();
        let report = VerdictReport::new("p7", &ev, &cfg, &inventory());
        assert_eq!(report.per_phone[1].rank, 3);
        let line = report.to_tsv();
        assert_eq!(line.split('\t').count(), REPORT_HEADER.split('\t').count());
        assert_eq!(VerdictReport::from_tsv(&line).unwrap(), report);
    }
}
