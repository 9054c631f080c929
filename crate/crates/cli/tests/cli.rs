use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uttver_core::acoustic::load_model;
use uttver_core::corpus::{CorpusManifest, Label};
use uttver_core::features::FeatureMatrix;

const BIN: &str = env!("CARGO_BIN_EXE_uttver");

fn data(name: &str) -> String {
    format!("{}/../core/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Trains the toy model and writes a reassignment corpus under `dir`.
fn setup(dir: &Path, pairs: &str) -> (PathBuf, PathBuf) {
    let model = dir.join("model.txt");
    let corpus = dir.join("corpus");
    let inv = data("toy.inventory");
    ok(&[
        "train",
        "--inventory",
        &inv,
        "--out",
        p(&model),
        "--components",
        "2",
        "--seed",
        "3",
    ]);
    ok(&[
        "gen-corpus",
        "--inventory",
        &inv,
        "--lexicon",
        &data("toy.lexicon"),
        "--out",
        p(&corpus),
        "--pairs",
        pairs,
        "--seed",
        "11",
    ]);
    (model, corpus.join("manifest.tsv"))
}

#[test]
fn training_is_reproducible_and_logs_every_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    let inv = data("toy.inventory");
    let args = |out: &Path| {
        vec![
            "train".to_string(),
            "--inventory".into(),
            inv.clone(),
            "--out".into(),
            p(out).into(),
            "--components".into(),
            "2".into(),
            "--frames-per-phone".into(),
            "200".into(),
            "--seed".into(),
            "5".into(),
        ]
    };
    let a_args = args(&a);
    let log = ok(&a_args.iter().map(String::as_str).collect::<Vec<_>>());
    let b_args = args(&b);
    ok(&b_args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(log.starts_with("#phone\titeration\tloglik\n"));
    assert!(log.lines().any(|l| l.starts_with("anti\t1\t")));
    assert!(load_model(&a).is_ok());
}

#[test]
fn missing_inventory_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["train", "--out", p(&dir.path().join("m.txt"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--inventory"));
}

#[test]
fn too_many_components_names_the_phone() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--inventory",
        &data("toy.inventory"),
        "--out",
        p(&dir.path().join("m.txt")),
        "--components",
        "8",
        "--frames-per-phone",
        "50",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("aa"), "{err}");
}

#[test]
fn reassigned_corpus_is_balanced_and_deranged() {
    let dir = tempfile::tempdir().unwrap();
    let (_, manifest) = setup(dir.path(), "30");
    let m = CorpusManifest::load(&manifest).unwrap();
    assert!(m.is_balanced());
    let correct: Vec<_> = m
        .pairs
        .iter()
        .filter(|p| p.label == Label::Correct)
        .collect();
    for bad in m.pairs.iter().filter(|p| p.label == Label::Incorrect) {
        let own = correct
            .iter()
            .find(|c| c.feature_file == bad.feature_file)
            .unwrap();
        assert!(correct
            .iter()
            .any(|c| c.pair_id != own.pair_id && c.script == bad.script));
    }

    let again = dir.path().join("again");
    ok(&[
        "gen-corpus",
        "--inventory",
        &data("toy.inventory"),
        "--lexicon",
        &data("toy.lexicon"),
        "--out",
        p(&again),
        "--pairs",
        "30",
        "--seed",
        "11",
    ]);
    assert_eq!(
        fs::read(&manifest).unwrap(),
        fs::read(again.join("manifest.tsv")).unwrap()
    );
    assert_eq!(
        fs::read(manifest.parent().unwrap().join("feats/p0007.feat")).unwrap(),
        fs::read(again.join("feats/p0007.feat")).unwrap()
    );
}

#[test]
fn sweep_verify_and_evaluate_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (model, manifest) = setup(dir.path(), "40");
    let lex = data("toy.lexicon");
    let common = ["--model", p(&model), "--lexicon", &lex];

    let curve = dir.path().join("curve.tsv");
    let out = ok(&[
        &["sweep"],
        &common[..],
        &[
            "--manifest",
            p(&manifest),
            "--method",
            "APR",
            "--curve",
            p(&curve),
        ],
    ]
    .concat());
    let best: f64 = out
        .split('\t')
        .find_map(|f| f.strip_prefix("threshold="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(best > 1.0 && best < 39.0, "{out}");
    let curve_text = fs::read_to_string(&curve).unwrap();
    assert_eq!(curve_text.lines().count(), 1 + 77);

    let m = CorpusManifest::load(&manifest).unwrap();
    let root = manifest.parent().unwrap();
    let theta = best.to_string();
    let verify = |pair: usize, extra: &[&str]| {
        let pr = &m.pairs[pair];
        let input = root.join(&pr.feature_file);
        let args = [
            &["verify"],
            &common[..],
            &[
                "--script",
                &pr.script,
                "--input",
                p(&input),
                "--pair-id",
                &pr.pair_id,
            ],
            extra,
        ]
        .concat();
        run(&args)
    };
    let matched = verify(0, &["--theta", &theta]);
    assert_eq!(
        matched.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&matched.stderr)
    );
    let record = String::from_utf8(matched.stdout).unwrap();
    assert!(record.starts_with("pair_id\tmethod\tllr\tapr\ttwo_stage\tdecision"));
    assert!(record.lines().nth(1).unwrap().contains("\tmatch\t"));

    let deranged = verify(40, &["--theta", &theta]);
    assert_eq!(deranged.status.code(), Some(1));

    let forced = verify(
        0,
        &["--method", "APR2STAGE", "--tau", "inf", "--theta", &theta],
    );
    assert_eq!(forced.status.code(), Some(1));
    let row = String::from_utf8(forced.stdout).unwrap();
    let cols: Vec<&str> = row.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!((cols[4], cols[5]), ("39", "mismatch"));

    let bad = verify(0, &["--method", "APR"]);
    assert_eq!(bad.status.code(), Some(2));

    let eval = |workers: &str| {
        ok(&[
            &["evaluate", "--workers", workers],
            &common[..],
            &["--manifest", p(&manifest), "--methods", "LRT,APR"],
        ]
        .concat())
    };
    let table = eval("1");
    let rows: Vec<Vec<&str>> = table
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows[0], ["method", "tau", "theta", "ACC", "Delta"]);
    assert_eq!(rows.len(), 3);
    assert_eq!((rows[1][0], rows[1][4]), ("LRT", "-"));
    assert_eq!(rows[2][0], "APR");
    assert!(rows[2][4].starts_with('+') || rows[2][4].starts_with('-'));
    assert_eq!(eval("4"), table);
}

#[test]
fn config_file_fills_in_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let (model, manifest) = setup(dir.path(), "20");
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "# sweep settings\nmodel = {}\nlexicon = {}\nmanifest = {}\nmethod = APR\ngrid = 2,3\n",
            p(&model),
            data("toy.lexicon"),
            p(&manifest)
        ),
    )
    .unwrap();
    let from_file = ok(&["sweep", "--config", p(&cfg)]);
    assert!(from_file.contains("points=2"), "{from_file}");
    let overridden = ok(&["sweep", "--config", p(&cfg), "--grid", "1.5:0.5:4"]);
    assert!(overridden.contains("points=6"), "{overridden}");
}

#[test]
fn align_dumps_segments() {
    let dir = tempfile::tempdir().unwrap();
    let (model, manifest) = setup(dir.path(), "5");
    let m = CorpusManifest::load(&manifest).unwrap();
    let pr = &m.pairs[0];
    let input = manifest.parent().unwrap().join(&pr.feature_file);
    let dump = ok(&[
        "align",
        "--model",
        p(&model),
        "--lexicon",
        &data("toy.lexicon"),
        "--script",
        &pr.script,
        "--input",
        p(&input),
    ]);
    let header = dump.lines().next().unwrap();
    assert!(header.starts_with("# N="), "{header}");
    let frames = FeatureMatrix::load(&input).unwrap().num_frames();
    let last_end: usize = dump
        .lines()
        .last()
        .unwrap()
        .split(' ')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(last_end, frames);
}

#[test]
fn trains_from_labeled_segments() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("inv"), "a\nb\n:silence sil\n").unwrap();
    let rows = |base: f64| -> Vec<Vec<f64>> {
        (0..30)
            .map(|t| {
                (0..13)
                    .map(|d| base + ((t * 7 + d * 3) % 11) as f64 * 0.1)
                    .collect()
            })
            .collect()
    };
    for (name, base) in [("one.feat", 0.0), ("two.feat", 4.0)] {
        FeatureMatrix::from_rows(&rows(base), 10.0, "toy-fp")
            .unwrap()
            .save(dir.path().join(name))
            .unwrap();
    }
    let seg = dir.path().join("segments.txt");
    fs::write(
        &seg,
        "# file phone start end\none.feat a 0 30\ntwo.feat b 0 15\ntwo.feat sil 15 30\n",
    )
    .unwrap();
    let model = dir.path().join("m.txt");
    ok(&[
        "train",
        "--inventory",
        p(&dir.path().join("inv")),
        "--segments",
        p(&seg),
        "--out",
        p(&model),
        "--components",
        "1",
    ]);
    let m = load_model(&model).unwrap();
    assert_eq!(m.frontend(), "toy-fp");
    assert_eq!(m.inventory().len(), 3);

    fs::write(&seg, "one.feat a 0 30\none.feat q 0 3\n").unwrap();
    let out = run(&[
        "train",
        "--inventory",
        p(&dir.path().join("inv")),
        "--segments",
        p(&seg),
        "--out",
        p(&model),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("segments.txt:2"));
}
