//! Per-phone GMM acoustic model with a pooled anti-model.

mod gmm;
mod io;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Frames};
use crate::lexicon::{PhoneId, PhoneInventory};

pub use gmm::{fit_em, EmConfig, EmFit, Gmm};
pub use io::{load_model, save_model, MODEL_VERSION};

/// Frames known to belong to one phone; the unit of training data.
#[derive(Debug, Clone, Copy)]
pub struct LabeledSegment<'a> {
    pub phone: PhoneId,
    pub frames: Frames<'a>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainConfig {
    pub em: EmConfig,
    pub seed: u64,
}

/// Per-mixture EM log-likelihood traces from a training run.
#[derive(Debug, Clone)]
pub struct TrainingReport {
    /// `(label, trace, iterations)` for every phone in inventory order, then `anti`.
    pub runs: Vec<(String, Vec<f64>, usize)>,
}

/// One GMM per inventory phone (silence included) plus an anti-model.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    inventory: PhoneInventory,
    gmms: Vec<Gmm>,
    anti: Gmm,
    dim: usize,
    frontend: String,
}

impl AcousticModel {
    pub fn new(
        inventory: PhoneInventory,
        gmms: Vec<Gmm>,
        anti: Gmm,
        frontend: impl Into<String>,
    ) -> Result<Self> {
        if gmms.len() != inventory.len() {
            return Err(Error::InventoryMismatch(format!(
                "{} mixtures for {} phones",
                gmms.len(),
                inventory.len()
            )));
        }
        let dim = anti.dim();
        if let Some(g) = gmms.iter().find(|g| g.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: g.dim(),
            });
        }
        Ok(Self {
            inventory,
            gmms,
            anti,
            dim,
            frontend: frontend.into(),
        })
    }

    pub fn inventory(&self) -> &PhoneInventory {
        &self.inventory
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Fingerprint of the front end the model was trained on.
    pub fn frontend(&self) -> &str {
        &self.frontend
    }

    pub fn gmm(&self, phone: PhoneId) -> Result<&Gmm> {
        self.gmms.get(phone.0).ok_or_else(|| Error::UnknownPhone {
            phone: format!("#{}", phone.0),
            line: None,
        })
    }

    pub fn anti(&self) -> &Gmm {
        &self.anti
    }

    /// Same model with the anti-model replaced.
    pub fn with_anti(mut self, anti: Gmm) -> Result<Self> {
        if anti.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: anti.dim(),
            });
        }
        self.anti = anti;
        Ok(self)
    }

    fn check_dim(&self, actual: usize) -> Result<()> {
        if actual != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual,
            });
        }
        Ok(())
    }

    /// Rejects features whose dimension or front-end fingerprint differ from
    /// the model's. Empty fingerprints on either side are not compared.
    pub fn check_features(&self, feat: &FeatureMatrix) -> Result<()> {
        self.check_dim(feat.dim())?;
        if !self.frontend.is_empty()
            && !feat.fingerprint().is_empty()
            && self.frontend != feat.fingerprint()
        {
            return Err(Error::FingerprintMismatch {
                model: self.frontend.clone(),
                features: feat.fingerprint().to_string(),
            });
        }
        Ok(())
    }

    pub fn score_frame(&self, phone: PhoneId, frame: &[f64]) -> Result<f64> {
        let gmm = self.gmm(phone)?;
        self.check_dim(frame.len())?;
        Ok(gmm.log_likelihood(frame))
    }

    /// Mean per-frame log-likelihood of `frames` under `phone`.
    pub fn score_segment(&self, phone: PhoneId, frames: Frames<'_>) -> Result<f64> {
        let gmm = self.gmm(phone)?;
        self.check_dim(frames.dim())?;
        if frames.is_empty() {
            return Err(Error::EmptySegment);
        }
        Ok(mean(frames.iter().map(|f| gmm.log_likelihood(f))))
    }

    /// Mean per-frame log-likelihood of `frames` under the anti-model.
    pub fn score_anti(&self, frames: Frames<'_>) -> Result<f64> {
        self.check_dim(frames.dim())?;
        if frames.is_empty() {
            return Err(Error::EmptySegment);
        }
        Ok(mean(frames.iter().map(|f| self.anti.log_likelihood(f))))
    }

    /// Every phone's and the anti-model's log-likelihood for every frame.
    pub fn score_table(&self, frames: Frames<'_>) -> Result<ScoreTable> {
        self.check_dim(frames.dim())?;
        let width = self.gmms.len();
        let mut phone = Vec::with_capacity(frames.len() * width);
        let mut anti = Vec::with_capacity(frames.len());
        for f in frames.iter() {
            phone.extend(self.gmms.iter().map(|g| g.log_likelihood(f)));
            anti.push(self.anti.log_likelihood(f));
        }
        Ok(ScoreTable {
            num_frames: frames.len(),
            width,
            phone,
            anti,
        })
    }
}

/// Frame-by-phone log-likelihood table (plus anti-model column).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    num_frames: usize,
    width: usize,
    phone: Vec<f64>,
    anti: Vec<f64>,
}

impl ScoreTable {
    /// Builds a table from explicit scores, `phone_scores[t][p]`.
    pub fn from_scores(phone_scores: &[Vec<f64>], anti: Vec<f64>) -> Result<Self> {
        let width = phone_scores.first().map_or(0, Vec::len);
        if phone_scores.iter().any(|r| r.len() != width) || anti.len() != phone_scores.len() {
            return Err(Error::InvalidInput("ragged score table".into()));
        }
        Ok(Self {
            num_frames: phone_scores.len(),
            width,
            phone: phone_scores.concat(),
            anti,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_phones(&self) -> usize {
        self.width
    }

    pub fn get(&self, t: usize, phone: PhoneId) -> f64 {
        self.phone[t * self.width + phone.0]
    }

    pub fn anti(&self, t: usize) -> f64 {
        self.anti[t]
    }

    /// Mean of `phone`'s frame scores over `start..end`; identical to
    /// [`AcousticModel::score_segment`] on the same frames.
    pub fn segment_mean(&self, phone: PhoneId, start: usize, end: usize) -> f64 {
        mean((start..end).map(|t| self.get(t, phone)))
    }

    pub fn anti_mean(&self, start: usize, end: usize) -> f64 {
        mean((start..end).map(|t| self.anti[t]))
    }

    /// Applies `f` to every score, anti-model included.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            num_frames: self.num_frames,
            width: self.width,
            phone: self.phone.iter().map(|&v| f(v)).collect(),
            anti: self.anti.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Left-to-right mean; every segment score in the crate goes through here
/// so table-based and direct scores agree bit for bit.
pub(crate) fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Trains one mixture per inventory phone, plus an anti-model on the pooled
/// frames of every non-silence phone.
///
/// Each phone needs at least `components * dim` frames. EM for phone `i`
/// draws from ChaCha stream `i + 1` of `cfg.seed`; the anti-model uses
/// stream 0.
pub fn train_em(
    segments: &[LabeledSegment<'_>],
    inventory: &PhoneInventory,
    frontend: &str,
    cfg: &TrainConfig,
) -> Result<(AcousticModel, TrainingReport)> {
    let dim = segments
        .first()
        .map(|s| s.frames.dim())
        .ok_or_else(|| Error::InsufficientData {
            phone: inventory.symbol(PhoneId(0)).to_string(),
            frames: 0,
            needed: cfg.em.components,
        })?;
    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); inventory.len()];
    for seg in segments {
        if !inventory.contains(seg.phone) {
            return Err(Error::UnknownPhone {
                phone: format!("#{}", seg.phone.0),
                line: None,
            });
        }
        if seg.frames.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: seg.frames.dim(),
            });
        }
        pooled[seg.phone.0].extend_from_slice(seg.frames.as_flat());
    }
    let needed = cfg.em.components.max(1) * dim;
    for phone in inventory.ids() {
        let frames = pooled[phone.0].len() / dim;
        if frames < needed {
            return Err(Error::InsufficientData {
                phone: inventory.symbol(phone).to_string(),
                frames,
                needed,
            });
        }
    }

    let mut runs = Vec::with_capacity(inventory.len() + 1);
    let mut gmms = Vec::with_capacity(inventory.len());
    for phone in inventory.ids() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(phone.0 as u64 + 1);
        let label = inventory.symbol(phone);
        let fit = fit_em(&pooled[phone.0], dim, &cfg.em, &mut rng, label)?;
        runs.push((label.to_string(), fit.trace, fit.iterations));
        gmms.push(fit.gmm);
    }

    let anti_data: Vec<f64> = inventory
        .ranking_phones()
        .flat_map(|p| pooled[p.0].iter().copied())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let anti = fit_em(&anti_data, dim, &cfg.em, &mut rng, "anti")?;
    runs.push(("anti".to_string(), anti.trace, anti.iterations));

    let model = AcousticModel::new(inventory.clone(), gmms, anti.gmm, frontend)?;
    Ok((model, TrainingReport { runs }))
}
