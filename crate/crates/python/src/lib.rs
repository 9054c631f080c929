//! Python bindings: load a model and lexicon, then align and verify
//! scripts against WAV files, feature dumps or in-memory frames.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyFileNotFoundError, PyValueError};
use pyo3::prelude::*;
use uttver_core::acoustic::{load_model, save_model, AcousticModel, EmConfig, TrainConfig};
use uttver_core::align::{viterbi_align, AlignOptions};
use uttver_core::corpus::{
    generate_corpus, score_corpus, tune, CorpusConfig, CorpusManifest, DirSource, GeneratorConfig,
    GeneratorSpec, MismatchMode, StyleShift,
};
use uttver_core::features::FeatureMatrix;
use uttver_core::frontend::{compute_features, compute_mfcc, load_wav, FrontendConfig, Waveform};
use uttver_core::lexicon::{Lexicon, PhoneInventory};
use uttver_core::verify::{analyze, verify as run_verify, Method, VerifierConfig};
use uttver_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::MissingFile { .. } => PyFileNotFoundError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn read_input(path: &Path) -> Result<FeatureMatrix, Error> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
    {
        compute_features(&load_wav(path)?, &FrontendConfig::default())
    } else {
        FeatureMatrix::load(path)
    }
}

/// A trained model with its lexicon.
#[pyclass(frozen)]
struct Verifier {
    model: AcousticModel,
    lexicon: Lexicon,
    opts: AlignOptions,
}

#[pymethods]
impl Verifier {
    #[new]
    #[pyo3(signature = (model, lexicon, min_duration = 3, silence = true))]
    fn new(model: PathBuf, lexicon: PathBuf, min_duration: usize, silence: bool) -> PyResult<Self> {
        let model = load_model(&model).map_err(py_err)?;
        let lexicon = Lexicon::load(&lexicon, model.inventory().clone()).map_err(py_err)?;
        Ok(Self {
            model,
            lexicon,
            opts: AlignOptions {
                min_duration,
                silence,
                ..Default::default()
            },
        })
    }

    /// Phones eligible for ranking.
    #[getter]
    fn rank_size(&self) -> usize {
        self.model.inventory().rank_size()
    }

    /// `(phone, start, end, mean_loglik)` for every aligned segment.
    fn align(&self, script: &str, input: PathBuf) -> PyResult<Vec<(String, usize, usize, f64)>> {
        let feat = read_input(&input).map_err(py_err)?;
        let lattice = self.lexicon.script_to_lattice(script).map_err(py_err)?;
        let a = viterbi_align(&feat, &lattice, &self.model, &self.opts).map_err(py_err)?;
        let inv = self.model.inventory();
        Ok(a.segments()
            .iter()
            .zip(a.segment_scores())
            .map(|(s, &score)| (inv.symbol(s.phone).to_string(), s.start, s.end, score))
            .collect())
    }

    /// LLR, APR and per-phone ranks for a script against a list of frames.
    fn scores(
        &self,
        py: Python<'_>,
        script: &str,
        frames: Vec<Vec<f64>>,
    ) -> PyResult<HashMap<String, Py<PyAny>>> {
        let feat =
            FeatureMatrix::from_rows(&frames, 10.0, self.model.frontend()).map_err(py_err)?;
        let lattice = self.lexicon.script_to_lattice(script).map_err(py_err)?;
        let (_, ev) = analyze(&self.model, &lattice, &feat, &self.opts).map_err(py_err)?;
        let mut out = HashMap::new();
        out.insert(
            "llr".to_string(),
            ev.llr().into_pyobject(py)?.into_any().unbind(),
        );
        out.insert(
            "apr".to_string(),
            ev.apr().into_pyobject(py)?.into_any().unbind(),
        );
        out.insert(
            "ranks".to_string(),
            ev.ranks().into_pyobject(py)?.into_any().unbind(),
        );
        Ok(out)
    }

    /// `(is_match, record)`, the record being the tab-separated verdict line.
    #[pyo3(signature = (script, input, method = "APR", tau = None, theta = None, pair_id = "-"))]
    fn verify(
        &self,
        script: &str,
        input: PathBuf,
        method: &str,
        tau: Option<f64>,
        theta: Option<f64>,
        pair_id: &str,
    ) -> PyResult<(bool, String)> {
        let method: Method = method.parse().map_err(py_err)?;
        let p = self.rank_size();
        let cfg = VerifierConfig::new(
            tau.unwrap_or(f64::NEG_INFINITY),
            theta.unwrap_or(p as f64),
            method,
            p,
        )
        .map_err(py_err)?;
        let feat = read_input(&input).map_err(py_err)?;
        let lattice = self.lexicon.script_to_lattice(script).map_err(py_err)?;
        let report =
            run_verify(pair_id, &self.model, &lattice, &feat, &self.opts, &cfg).map_err(py_err)?;
        Ok((report.decision.is_match(), report.to_tsv()))
    }

    /// Swept-optimal `(threshold, accuracy)` per method on a manifest.
    fn tune(&self, py: Python<'_>, manifest: PathBuf) -> PyResult<HashMap<String, (f64, f64)>> {
        let m = CorpusManifest::load(&manifest).map_err(py_err)?;
        let root = manifest.parent().map(PathBuf::from).unwrap_or_default();
        let tuned = py
            .detach(|| {
                let scores = score_corpus(
                    &m,
                    &DirSource::new(root),
                    &self.model,
                    &self.lexicon,
                    &self.opts,
                );
                tune(&scores)
            })
            .map_err(py_err)?;
        Ok(Method::ALL
            .iter()
            .map(|&m| {
                let best = &tuned.get(m).best;
                (m.to_string(), (best.threshold(), best.accuracy))
            })
            .collect())
    }
}

/// 13 MFCCs per frame for mono samples in [-1, 1].
#[pyfunction]
fn mfcc(samples: Vec<f64>, sample_rate: u32) -> PyResult<Vec<Vec<f64>>> {
    let wave = Waveform::new(samples, sample_rate).map_err(py_err)?;
    let feat = compute_mfcc(&wave, &FrontendConfig::default()).map_err(py_err)?;
    Ok((0..feat.num_frames())
        .map(|t| feat.frame(t).to_vec())
        .collect())
}

/// Trains on synthetic frames of every inventory phone and writes a model.
#[pyfunction]
#[pyo3(signature = (inventory, out, components = 2, frames_per_phone = 400, seed = 0, generator_seed = 7))]
fn train_synthetic(
    py: Python<'_>,
    inventory: PathBuf,
    out: PathBuf,
    components: usize,
    frames_per_phone: usize,
    seed: u64,
    generator_seed: u64,
) -> PyResult<()> {
    let inv = PhoneInventory::load(&inventory).map_err(py_err)?;
    py.detach(|| {
        let spec = GeneratorSpec::synthetic(
            &inv,
            GeneratorConfig {
                seed: generator_seed,
                ..Default::default()
            },
        )?;
        let cfg = TrainConfig {
            em: EmConfig {
                components,
                ..Default::default()
            },
            seed,
        };
        let (model, _) = spec.train_model(frames_per_phone, &cfg)?;
        save_model(&model, &out)
    })
    .map_err(py_err)
}

/// Writes a synthetic corpus and returns the manifest path.
#[pyfunction]
#[pyo3(signature = (inventory, lexicon, out, pairs = 200, mode = "reassign", seed = 1, gamma = 1.0, offset = 0.0, generator_seed = 7))]
#[allow(clippy::too_many_arguments)]
fn gen_corpus(
    py: Python<'_>,
    inventory: PathBuf,
    lexicon: PathBuf,
    out: PathBuf,
    pairs: usize,
    mode: &str,
    seed: u64,
    gamma: f64,
    offset: f64,
    generator_seed: u64,
) -> PyResult<PathBuf> {
    let inv = PhoneInventory::load(&inventory).map_err(py_err)?;
    let lex = Lexicon::load(&lexicon, inv.clone()).map_err(py_err)?;
    let mode: MismatchMode = mode.parse().map_err(py_err)?;
    py.detach(|| {
        let spec = GeneratorSpec::synthetic(
            &inv,
            GeneratorConfig {
                seed: generator_seed,
                ..Default::default()
            },
        )?;
        let style = StyleShift::new(gamma, vec![offset; spec.dim()], 0.0)?;
        let cfg = CorpusConfig {
            pairs,
            mode,
            seed,
            style_tag: if style.is_identity() {
                "read"
            } else {
                "shifted"
            }
            .into(),
            style: (!style.is_identity()).then_some(style),
            ..Default::default()
        };
        generate_corpus(&spec, &lex, &cfg)?.save(&out)
    })
    .map_err(py_err)
}

#[pymodule]
fn uttver(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Verifier>()?;
    m.add_function(wrap_pyfunction!(mfcc, m)?)?;
    m.add_function(wrap_pyfunction!(train_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(gen_corpus, m)?)?;
    Ok(())
}
