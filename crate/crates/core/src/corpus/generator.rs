//! Synthetic feature streams drawn from per-phone Gaussian mixtures.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::acoustic::{train_em, AcousticModel, Gmm, LabeledSegment, TrainConfig, TrainingReport};
use crate::align::Segment;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Frames, ALLOWED_DIMS};
use crate::lexicon::{Lexicon, PhoneId, PhoneInventory};

/// A ChaCha generator on its own stream of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub dim: usize,
    /// Standard deviation of phone-mean coordinates around the origin.
    pub separation: f64,
    /// Standard deviation of component means around their phone mean.
    pub component_spread: f64,
    /// Typical within-component standard deviation.
    pub within_std: f64,
    pub components: usize,
    /// Inclusive phone duration range in frames.
    pub duration: (usize, usize),
    /// Chance of a pause at the start, between words and at the end.
    pub silence_prob: f64,
    pub silence_duration: (usize, usize),
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            dim: 13,
            separation: 1.0,
            component_spread: 0.5,
            within_std: 1.0,
            components: 2,
            duration: (4, 9),
            silence_prob: 0.3,
            silence_duration: (3, 8),
            seed: 7,
        }
    }
}

/// A likelihood-degrading transform shared by every frame of an utterance:
/// component spread scaled by `sqrt(gamma)`, a fixed `offset`, and a random
/// per-utterance shift of the first coefficient drawn from `[-gain, gain]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleShift {
    pub gamma: f64,
    pub offset: Vec<f64>,
    pub gain: f64,
}

impl StyleShift {
    pub fn new(gamma: f64, offset: Vec<f64>, gain: f64) -> Result<Self> {
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(Error::Config(format!(
                "style gamma must be >= 1, got {gamma}"
            )));
        }
        if !(gain >= 0.0 && gain.is_finite()) || offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("style offset and gain must be finite".into()));
        }
        Ok(Self {
            gamma,
            offset,
            gain,
        })
    }

    /// Variance inflation only.
    pub fn inflate(gamma: f64, dim: usize) -> Result<Self> {
        Self::new(gamma, vec![0.0; dim], 0.0)
    }

    pub fn is_identity(&self) -> bool {
        self.gamma == 1.0 && self.gain == 0.0 && self.offset.iter().all(|&v| v == 0.0)
    }
}

/// Per-phone frame distributions plus duration and pause statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    inventory: PhoneInventory,
    dists: Vec<Gmm>,
    config: GeneratorConfig,
}

/// A generated utterance with its ground-truth segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthUtterance {
    pub features: FeatureMatrix,
    pub segments: Vec<Segment>,
}

impl GeneratorSpec {
    /// Random well-spread phone distributions over `inventory`.
    pub fn synthetic(inventory: &PhoneInventory, config: GeneratorConfig) -> Result<Self> {
        if !ALLOWED_DIMS.contains(&config.dim) {
            return Err(Error::Config(format!(
                "generator dim must be 13 or 39, got {}",
                config.dim
            )));
        }
        let (lo, hi) = config.duration;
        let (slo, shi) = config.silence_duration;
        if lo == 0 || lo > hi || slo == 0 || slo > shi {
            return Err(Error::Config(
                "duration ranges must be non-empty and start at 1 or more".into(),
            ));
        }
        if !(0.0..=1.0).contains(&config.silence_prob) {
            return Err(Error::Config(
                "silence probability must lie in [0, 1]".into(),
            ));
        }
        if !(config.within_std > 0.0 && config.separation >= 0.0 && config.component_spread >= 0.0)
            || config.components == 0
        {
            return Err(Error::Config("generator spreads must be positive".into()));
        }
        let mut rng = stream_rng(config.seed, 0);
        let d = config.dim;
        let k = config.components;
        let mut dists = Vec::with_capacity(inventory.len());
        for _ in inventory.ids() {
            let center: Vec<f64> = (0..d)
                .map(|_| config.separation * normal(&mut rng))
                .collect();
            let mut weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            let means = (0..k)
                .map(|_| {
                    center
                        .iter()
                        .map(|c| c + config.component_spread * normal(&mut rng))
                        .collect()
                })
                .collect();
            let sd2 = config.within_std * config.within_std;
            let vars = (0..k)
                .map(|_| (0..d).map(|_| sd2 * rng.random_range(0.7..1.3)).collect())
                .collect();
            dists.push(Gmm::new(weights, means, vars)?);
        }
        Ok(Self {
            inventory: inventory.clone(),
            dists,
            config,
        })
    }

    pub fn inventory(&self) -> &PhoneInventory {
        &self.inventory
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn dist(&self, phone: PhoneId) -> &Gmm {
        &self.dists[phone.0]
    }

    /// Identifier stamped on generated features and on models trained from them.
    pub fn fingerprint(&self) -> String {
        format!("synthetic-d{}", self.config.dim)
    }

    /// Weighted mean of a phone's distribution.
    pub fn phone_mean(&self, phone: PhoneId) -> Vec<f64> {
        let gmm = &self.dists[phone.0];
        let mut out = vec![0.0; self.dim()];
        for (k, w) in gmm.weights().enumerate() {
            for (o, m) in out.iter_mut().zip(gmm.mean(k)) {
                *o += w * m;
            }
        }
        out
    }

    /// Mean of the non-silence phone means.
    pub fn centroid(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let phones: Vec<PhoneId> = self.inventory.ranking_phones().collect();
        for &p in &phones {
            for (o, m) in out.iter_mut().zip(self.phone_mean(p)) {
                *o += m;
            }
        }
        out.iter_mut().for_each(|o| *o /= phones.len() as f64);
        out
    }

    fn sample_frame(
        &self,
        phone: PhoneId,
        shift: Option<&StyleShift>,
        gain: f64,
        rng: &mut impl Rng,
        out: &mut Vec<f64>,
    ) {
        let gmm = &self.dists[phone.0];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = gmm.num_components() - 1;
        for (i, w) in gmm.weights().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let scale = shift.map_or(1.0, |s| s.gamma.sqrt());
        for (d, (m, v)) in gmm.mean(k).iter().zip(gmm.variance(k)).enumerate() {
            let mut x = m + scale * v.sqrt() * normal(rng);
            if let Some(s) = shift {
                x += s.offset.get(d).copied().unwrap_or(0.0);
            }
            if d == 0 {
                x += gain;
            }
            out.push(x);
        }
    }

    /// Draws an utterance for `script`. Each word uses a uniformly chosen
    /// pronunciation variant; pauses are inserted with `silence_prob` when
    /// the inventory has a silence phone.
    pub fn synthesize(
        &self,
        script: &str,
        lexicon: &Lexicon,
        shift: Option<&StyleShift>,
        seed: u64,
    ) -> Result<SynthUtterance> {
        if lexicon.inventory() != &self.inventory {
            return Err(Error::InventoryMismatch(
                "lexicon and generator use different inventories".into(),
            ));
        }
        let lattice = lexicon.script_to_lattice(script)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = match shift {
            Some(s) if s.gain > 0.0 => rng.random_range(-s.gain..=s.gain),
            _ => 0.0,
        };
        let silence = self.inventory.silence();
        let mut data = Vec::new();
        let mut segments = Vec::new();
        let mut t = 0;
        let mut emit = |phone: PhoneId,
                        frames: usize,
                        is_sil: bool,
                        rng: &mut ChaCha8Rng,
                        data: &mut Vec<f64>| {
            for _ in 0..frames {
                self.sample_frame(phone, shift, gain, rng, data);
            }
            segments.push(Segment {
                phone,
                start: t,
                end: t + frames,
                silence: is_sil,
            });
            t += frames;
        };
        let words = lattice.words();
        for (i, word) in words.iter().enumerate() {
            if let Some(sil) = silence {
                if rng.random_bool(self.config.silence_prob) {
                    let (lo, hi) = self.config.silence_duration;
                    let n = rng.random_range(lo..=hi);
                    emit(sil, n, true, &mut rng, &mut data);
                }
            }
            let pron = word
                .variants
                .choose(&mut rng)
                .expect("lattice words have variants");
            for &p in pron.phones() {
                let (lo, hi) = self.config.duration;
                let n = rng.random_range(lo..=hi);
                emit(p, n, false, &mut rng, &mut data);
            }
            if i + 1 == words.len() {
                if let Some(sil) = silence {
                    if rng.random_bool(self.config.silence_prob) {
                        let (lo, hi) = self.config.silence_duration;
                        let n = rng.random_range(lo..=hi);
                        emit(sil, n, true, &mut rng, &mut data);
                    }
                }
            }
        }
        let features = FeatureMatrix::from_flat(data, self.dim(), 10.0, self.fingerprint())?;
        Ok(SynthUtterance { features, segments })
    }

    /// An utterance whose frames sit far out along each phone's direction
    /// from the centroid: `centroid + lambda * (mean_p - centroid)` plus
    /// unit-scale noise. Every phone model scores it terribly, yet the
    /// scripted phone tends to stay the least bad.
    pub fn synthesize_degenerate(
        &self,
        script: &str,
        lexicon: &Lexicon,
        lambda: f64,
        seed: u64,
    ) -> Result<SynthUtterance> {
        let lattice = lexicon.script_to_lattice(script)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centroid = self.centroid();
        let mut data = Vec::new();
        let mut segments = Vec::new();
        let mut t = 0;
        for word in lattice.words() {
            let pron = word
                .variants
                .choose(&mut rng)
                .expect("lattice words have variants");
            for &p in pron.phones() {
                let target: Vec<f64> = centroid
                    .iter()
                    .zip(self.phone_mean(p))
                    .map(|(c, m)| c + lambda * (m - c))
                    .collect();
                let (lo, hi) = self.config.duration;
                let n = rng.random_range(lo..=hi);
                for _ in 0..n {
                    data.extend(
                        target
                            .iter()
                            .map(|x| x + self.config.within_std * normal(&mut rng)),
                    );
                }
                segments.push(Segment {
                    phone: p,
                    start: t,
                    end: t + n,
                    silence: false,
                });
                t += n;
            }
        }
        let features = FeatureMatrix::from_flat(data, self.dim(), 10.0, self.fingerprint())?;
        Ok(SynthUtterance { features, segments })
    }

    /// Trains a model on `frames_per_phone` read-style frames of every
    /// inventory phone. Phone `i` samples from stream `i + 1` of the
    /// generator seed offset by `train.seed`.
    pub fn train_model(
        &self,
        frames_per_phone: usize,
        train: &TrainConfig,
    ) -> Result<(AcousticModel, TrainingReport)> {
        let data: Vec<Vec<f64>> = self
            .inventory
            .ids()
            .map(|p| {
                let mut rng = stream_rng(
                    self.config.seed ^ train.seed.rotate_left(32),
                    p.0 as u64 + 1,
                );
                let mut buf = Vec::with_capacity(frames_per_phone * self.dim());
                for _ in 0..frames_per_phone {
                    self.sample_frame(p, None, 0.0, &mut rng, &mut buf);
                }
                buf
            })
            .collect();
        let segments: Vec<LabeledSegment<'_>> = self
            .inventory
            .ids()
            .map(|p| LabeledSegment {
                phone: p,
                frames: Frames::new(&data[p.0], self.dim()),
            })
            .collect();
        train_em(&segments, &self.inventory, &self.fingerprint(), train)
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}
