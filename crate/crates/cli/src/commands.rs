use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use uttver_core::acoustic::{
    load_model, save_model, train_em, AcousticModel, EmConfig, LabeledSegment, TrainConfig,
    TrainingReport,
};
use uttver_core::align::{viterbi_align, AlignOptions};
use uttver_core::corpus::{
    evaluate_scores, generate_corpus, score_corpus, sweep_threshold, tau_grid, theta_grid, tune,
    CorpusConfig, CorpusManifest, DirSource, GeneratorConfig, GeneratorSpec, PairScores,
    StyleShift,
};
use uttver_core::features::FeatureMatrix;
use uttver_core::frontend::{compute_features, load_wav, FrontendConfig};
use uttver_core::lexicon::{Lexicon, PhoneInventory};
use uttver_core::verify::{self as verifier, Method, VerifierConfig, REPORT_HEADER};

use crate::settings::Settings;
use crate::{
    AlignArgs, AlignFlags, EvaluateArgs, FrontendFlags, GenCorpusArgs, GeneratorFlags, ModelFlags,
    SweepArgs, TrainArgs, VerifyArgs,
};

fn align_options(f: &AlignFlags, s: &Settings) -> Result<AlignOptions> {
    let d = AlignOptions::default();
    Ok(AlignOptions {
        min_duration: s.or(f.min_duration, "min-duration", d.min_duration)?,
        silence: s.or(f.silence, "silence", d.silence)?,
        max_expansions: s.or(f.max_expansions, "max-expansions", d.max_expansions)?,
    })
}

fn frontend_config(f: &FrontendFlags, s: &Settings) -> Result<FrontendConfig> {
    let d = FrontendConfig::default();
    let cfg = FrontendConfig {
        frame_length_ms: s.or(f.frame_length_ms, "frame-length-ms", d.frame_length_ms)?,
        frame_shift_ms: s.or(f.frame_shift_ms, "frame-shift-ms", d.frame_shift_ms)?,
        pre_emphasis: s.or(f.pre_emphasis, "pre-emphasis", d.pre_emphasis)?,
        num_mel_filters: s.or(f.mel_filters, "mel-filters", d.num_mel_filters)?,
        ..d
    };
    cfg.validate()?;
    Ok(cfg)
}

fn generator_spec(
    f: &GeneratorFlags,
    s: &Settings,
    inventory: &PhoneInventory,
) -> Result<GeneratorSpec> {
    let d = GeneratorConfig::default();
    let cfg = GeneratorConfig {
        seed: s.or(f.generator_seed, "generator-seed", d.seed)?,
        separation: s.or(f.separation, "separation", d.separation)?,
        ..d
    };
    Ok(GeneratorSpec::synthetic(inventory, cfg)?)
}

fn load_inventory(flag: &Option<PathBuf>, s: &Settings) -> Result<PhoneInventory> {
    let path: PathBuf = s.require(flag.clone(), "inventory")?;
    Ok(PhoneInventory::load(&path)?)
}

fn load_model_and_lexicon(f: &ModelFlags, s: &Settings) -> Result<(AcousticModel, Lexicon)> {
    let model = load_model(s.require::<PathBuf>(f.model.clone(), "model")?)?;
    let lexicon = Lexicon::load(
        s.require::<PathBuf>(f.lexicon.clone(), "lexicon")?,
        model.inventory().clone(),
    )?;
    Ok((model, lexicon))
}

fn method(flag: &Option<String>, s: &Settings, default: Method) -> Result<Method> {
    Ok(match s.get(flag.clone(), "method")? {
        Some(m) => m.parse()?,
        None => default,
    })
}

/// WAV files go through the front end; anything else is a feature dump.
fn read_input(path: &Path, frontend: &FrontendConfig) -> Result<FeatureMatrix> {
    let is_wav = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    Ok(if is_wav {
        compute_features(&load_wav(path)?, frontend)?
    } else {
        FeatureMatrix::load(path)?
    })
}

fn load_manifest(path: &Path, frontend: FrontendConfig) -> Result<(CorpusManifest, DirSource)> {
    let manifest = CorpusManifest::load(path)?;
    let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    manifest.check_files(&root)?;
    Ok((manifest, DirSource { root, frontend }))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn train(a: &TrainArgs, s: &Settings) -> Result<ExitCode> {
    let inventory = load_inventory(&a.inventory, s)?;
    let out: PathBuf = s.require(a.out.clone(), "out")?;
    let d = EmConfig::default();
    let cfg = TrainConfig {
        em: EmConfig {
            components: s.or(a.components, "components", d.components)?,
            max_iters: s.or(a.max_iters, "max-iters", d.max_iters)?,
            ..d
        },
        seed: s.or(a.seed, "seed", 0)?,
    };
    let (model, report) = match s.get(a.segments.clone(), "segments")? {
        Some(path) => train_on_segments(&path, &inventory, &cfg)?,
        None => {
            let spec = generator_spec(&a.generator, s, &inventory)?;
            spec.train_model(s.or(a.frames_per_phone, "frames-per-phone", 400)?, &cfg)?
        }
    };
    let mut log = String::from("#phone\titeration\tloglik\n");
    for (label, trace, _) in &report.runs {
        for (i, ll) in trace.iter().enumerate() {
            let _ = writeln!(log, "{label}\t{}\t{ll}", i + 1);
        }
    }
    print!("{log}");
    save_model(&model, &out)?;
    eprintln!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

/// Reads `feature_file phone start end` lines; feature paths are relative
/// to the segments file.
fn train_on_segments(
    path: &Path,
    inventory: &PhoneInventory,
    cfg: &TrainConfig,
) -> Result<(AcousticModel, TrainingReport)> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let root = path.parent().unwrap_or(Path::new("."));
    let mut features: HashMap<String, FeatureMatrix> = HashMap::new();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = || format!("{}:{}", path.display(), i + 1);
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [file, phone, start, end] = cols[..] else {
            bail!("{}: expected `feature_file phone start end`", at());
        };
        let phone = inventory.id(phone).with_context(at)?;
        let (start, end): (usize, usize) = (
            start
                .parse()
                .with_context(|| format!("{}: bad start frame", at()))?,
            end.parse()
                .with_context(|| format!("{}: bad end frame", at()))?,
        );
        if !features.contains_key(file) {
            let feat = FeatureMatrix::load(root.join(file)).with_context(at)?;
            features.insert(file.to_string(), feat);
        }
        if start >= end || end > features[file].num_frames() {
            bail!("{}: segment {start}..{end} outside {file}", at());
        }
        rows.push((file.to_string(), phone, start, end));
    }
    let first = rows
        .first()
        .ok_or_else(|| anyhow!("{}: no segments", path.display()))?;
    let frontend = features[&first.0].fingerprint().to_string();
    let segments: Vec<LabeledSegment<'_>> = rows
        .iter()
        .map(|(file, phone, start, end)| LabeledSegment {
            phone: *phone,
            frames: features[file].slice(*start..*end),
        })
        .collect();
    Ok(train_em(&segments, inventory, &frontend, cfg)?)
}

/// Thresholds the method needs must be given; the other one gets a valid
/// placeholder.
fn verifier_config(
    method: Method,
    tau: Option<f64>,
    theta: Option<f64>,
    rank_size: usize,
) -> Result<VerifierConfig> {
    let need =
        |v: Option<f64>, key: &str| v.ok_or_else(|| anyhow!("method {method} needs `--{key}`"));
    let (tau, theta) = match method {
        Method::Lrt => (need(tau, "tau")?, theta.unwrap_or(rank_size as f64)),
        Method::Apr => (tau.unwrap_or(f64::NEG_INFINITY), need(theta, "theta")?),
        Method::Apr2Stage => (need(tau, "tau")?, need(theta, "theta")?),
    };
    Ok(VerifierConfig::new(tau, theta, method, rank_size)?)
}

pub fn verify(a: &VerifyArgs, s: &Settings) -> Result<ExitCode> {
    let (model, lexicon) = load_model_and_lexicon(&a.model, s)?;
    let script: String = s.require(a.script.clone(), "script")?;
    let input: PathBuf = s.require(a.input.clone(), "input")?;
    let method = method(&a.method, s, Method::Apr)?;
    let cfg = verifier_config(
        method,
        s.get(a.thresholds.tau, "tau")?,
        s.get(a.thresholds.theta, "theta")?,
        model.inventory().rank_size(),
    )?;
    let opts = align_options(&a.align, s)?;
    let feat = read_input(&input, &frontend_config(&a.frontend, s)?)?;
    let lattice = lexicon.script_to_lattice(&script)?;
    let pair_id: String = s.or(a.pair_id.clone(), "pair-id", "-".to_string())?;
    let report = verifier::verify(&pair_id, &model, &lattice, &feat, &opts, &cfg)?;
    println!("{REPORT_HEADER}");
    println!("{}", report.to_tsv());
    Ok(if report.decision.is_match() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn parse_methods(text: &str) -> Result<Vec<Method>> {
    let methods = text
        .split(',')
        .map(|m| m.trim().parse::<Method>())
        .collect::<Result<Vec<_>, _>>()?;
    if methods.is_empty() {
        bail!("no methods given");
    }
    Ok(methods)
}

fn score_manifest(
    path: &Path,
    model: &AcousticModel,
    lexicon: &Lexicon,
    opts: &AlignOptions,
    frontend: &FrontendConfig,
) -> Result<Vec<PairScores>> {
    let (manifest, source) = load_manifest(path, frontend.clone())?;
    let scores = score_corpus(&manifest, &source, model, lexicon, opts);
    let failed = scores.iter().filter(|p| p.error.is_some()).count();
    if failed > 0 {
        eprintln!("warning: {failed} pairs failed and count as mismatches");
    }
    Ok(scores)
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "-".into()
    }
}

pub fn evaluate(a: &EvaluateArgs, s: &Settings) -> Result<ExitCode> {
    let (model, lexicon) = load_model_and_lexicon(&a.model, s)?;
    let manifest: PathBuf = s.require(a.manifest.clone(), "manifest")?;
    let methods = parse_methods(&s.or(a.methods.clone(), "methods", "LRT,APR".to_string())?)?;
    let opts = align_options(&a.align, s)?;
    let frontend = frontend_config(&a.frontend, s)?;
    let tau = s.get(a.thresholds.tau, "tau")?;
    let theta = s.get(a.thresholds.theta, "theta")?;
    let out: Option<PathBuf> = s.get(a.out.clone(), "out")?;

    let scores = score_manifest(&manifest, &model, &lexicon, &opts, &frontend)?;
    let reference = match s.get(a.reference.clone(), "reference")? {
        Some(p) => Some(score_manifest(&p, &model, &lexicon, &opts, &frontend)?),
        None => None,
    };
    let tuned = tune(reference.as_ref().unwrap_or(&scores))?;
    let p = model.inventory().rank_size();

    let mut table = String::new();
    if reference.is_some() {
        table.push_str(
            "# thresholds tuned on the reference manifest; Delta = ACC - reference ACC\n",
        );
    } else {
        table.push_str(&format!("# Delta = ACC - {} ACC\n", methods[0]));
    }
    table.push_str("method\ttau\ttheta\tACC\tDelta\n");
    let mut baseline = None;
    for &m in &methods {
        let best = tuned.get(m).best.config;
        let cfg = VerifierConfig::new(tau.unwrap_or(best.tau), theta.unwrap_or(best.theta), m, p)?;
        let result = evaluate_scores(&scores, &cfg);
        let delta = match &reference {
            Some(r) => Some(result.accuracy - evaluate_scores(r, &cfg).accuracy),
            None => baseline.map(|b: f64| result.accuracy - b),
        };
        baseline.get_or_insert(result.accuracy);
        let (shown_tau, shown_theta) = match m {
            Method::Lrt => (cell(cfg.tau), "-".into()),
            Method::Apr => ("-".into(), cell(cfg.theta)),
            Method::Apr2Stage => (cell(cfg.tau), cell(cfg.theta)),
        };
        let _ = writeln!(
            table,
            "{m}\t{shown_tau}\t{shown_theta}\t{:.4}\t{}",
            result.accuracy,
            delta.map_or("-".into(), |d| format!("{d:+.4}"))
        );
        if let Some(out) = &out {
            let mut name = out.clone().into_os_string();
            name.push(format!(".{}.tsv", m.as_str().to_ascii_lowercase()));
            write(Path::new(&name), &result.to_tsv(&scores))?;
        }
    }
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .with_context(|| format!("bad grid value `{v}`"))
    };
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts[..] {
        [start, step, stop] => {
            let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
            if step.is_nan() || step <= 0.0 || stop < start {
                bail!("grid `{text}` needs a positive step and start <= stop");
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| start + i as f64 * step).collect()
        }
        [_] => text.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => bail!("grid must be `a,b,c` or `start:step:stop`"),
    };
    Ok(grid)
}

pub fn sweep(a: &SweepArgs, s: &Settings) -> Result<ExitCode> {
    let (model, lexicon) = load_model_and_lexicon(&a.model, s)?;
    let manifest: PathBuf = s.require(a.manifest.clone(), "manifest")?;
    let method = method(&a.method, s, Method::Apr)?;
    let opts = align_options(&a.align, s)?;
    let scores = score_manifest(
        &manifest,
        &model,
        &lexicon,
        &opts,
        &frontend_config(&a.frontend, s)?,
    )?;
    let p = model.inventory().rank_size();
    let grid = match s.get(a.grid.clone(), "grid")? {
        Some(g) => parse_grid(&g)?,
        None if method == Method::Apr => theta_grid(p),
        None => tau_grid(&scores),
    };
    let tau = s.get(a.thresholds.tau, "tau")?;
    let theta = s.get(a.thresholds.theta, "theta")?;
    let base = match method {
        Method::Lrt => VerifierConfig::new(0.0, p as f64, method, p)?,
        Method::Apr => VerifierConfig::new(tau.unwrap_or(f64::NEG_INFINITY), p as f64, method, p)?,
        // Without an explicit theta, hold it at the APR optimum.
        Method::Apr2Stage => {
            let theta = match theta {
                Some(t) => t,
                None => tune(&scores)?.apr.best.config.theta,
            };
            VerifierConfig::new(0.0, theta, method, p)?
        }
    };
    let result = sweep_threshold(&scores, &base, &grid)?;
    let best = &result.best;
    println!(
        "best\tmethod={method}\tthreshold={}\taccuracy={}\tpoints={}",
        best.threshold(),
        best.accuracy,
        result.curve.len()
    );
    if method == Method::Apr2Stage {
        println!("fixed\ttheta={}", best.config.theta);
    }
    match s.get(a.curve.clone(), "curve")? {
        Some(path) => write(&path, &result.curve_tsv())?,
        None => print!("{}", result.curve_tsv()),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn gen_corpus(a: &GenCorpusArgs, s: &Settings) -> Result<ExitCode> {
    let inventory = load_inventory(&a.inventory, s)?;
    let lexicon = Lexicon::load(
        s.require::<PathBuf>(a.lexicon.clone(), "lexicon")?,
        inventory.clone(),
    )?;
    let out: PathBuf = s.require(a.out.clone(), "out")?;
    let spec = generator_spec(&a.generator, s, &inventory)?;
    let d = CorpusConfig::default();
    let gamma = s.or(a.gamma, "gamma", 1.0)?;
    let offset = s.or(a.offset, "offset", 0.0)?;
    let gain = s.or(a.gain, "gain", 0.0)?;
    let style = StyleShift::new(gamma, vec![offset; spec.dim()], gain)?;
    let style_tag = s.or(
        a.style.clone(),
        "style",
        if style.is_identity() {
            "read"
        } else {
            "shifted"
        }
        .to_string(),
    )?;
    let cfg = CorpusConfig {
        pairs: s.or(a.pairs, "pairs", d.pairs)?,
        words: (
            s.or(a.min_words, "min-words", d.words.0)?,
            s.or(a.max_words, "max-words", d.words.1)?,
        ),
        style: (!style.is_identity()).then_some(style),
        style_tag,
        mode: s.or(a.mode.clone(), "mode", d.mode.to_string())?.parse()?,
        edits: s.or(a.edits, "edits", d.edits)?,
        degenerate_fraction: s.or(
            a.degenerate_fraction,
            "degenerate-fraction",
            d.degenerate_fraction,
        )?,
        degenerate_lambda: s.or(
            a.degenerate_lambda,
            "degenerate-lambda",
            d.degenerate_lambda,
        )?,
        seed: s.or(a.seed, "seed", d.seed)?,
    };
    let corpus = generate_corpus(&spec, &lexicon, &cfg)?;
    let path = corpus.save(&out)?;
    println!(
        "wrote {} ({} correct, {} incorrect)",
        path.display(),
        corpus.manifest.count(uttver_core::corpus::Label::Correct),
        corpus.manifest.count(uttver_core::corpus::Label::Incorrect)
    );
    Ok(ExitCode::SUCCESS)
}

pub fn align(a: &AlignArgs, s: &Settings) -> Result<ExitCode> {
    let (model, lexicon) = load_model_and_lexicon(&a.model, s)?;
    let script: String = s.require(a.script.clone(), "script")?;
    let input: PathBuf = s.require(a.input.clone(), "input")?;
    let feat = read_input(&input, &frontend_config(&a.frontend, s)?)?;
    let lattice = lexicon.script_to_lattice(&script)?;
    let alignment = viterbi_align(&feat, &lattice, &model, &align_options(&a.align, s)?)?;
    print!("{}", alignment.to_dump(model.inventory()));
    Ok(ExitCode::SUCCESS)
}
