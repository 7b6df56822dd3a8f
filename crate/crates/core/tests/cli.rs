use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dhmm::cli::manifest::RunManifest;
use dhmm::data::{load_model, Corpus};

fn dhmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dhmm"))
        .args(args)
        .env_remove("DHMM_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dhmm(args);
    assert!(
        out.status.success(),
        "dhmm {} failed:\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn subdir(root: &Path, name: &str) -> PathBuf {
    let p = root.join(name);
    fs::create_dir(&p).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(root: &Path, seed: &str) -> PathBuf {
    let out = subdir(root, &format!("synth{seed}"));
    ok(&["synth", "--seed", seed, "--out", s(&out)]);
    out
}

#[test]
fn missing_output_directory_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    let out = dhmm(&["synth", "--out", s(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(dhmm(&["train"]).status.code(), Some(2));
    assert_eq!(dhmm(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dhmm"))
        .args(["synth", "--out", s(tmp.path())])
        .env("DHMM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DHMM_THREADS"));
}

#[test]
fn same_seed_gives_identical_digests() {
    let tmp = tempfile::tempdir().unwrap();
    let a = RunManifest::load(&synth(tmp.path(), "5").join("manifest.json")).unwrap();
    let b_dir = subdir(tmp.path(), "again");
    ok(&["synth", "--seed", "5", "--out", s(&b_dir)]);
    let b = RunManifest::load(&b_dir.join("manifest.json")).unwrap();
    assert_eq!(a.outputs, b.outputs);
    assert_eq!(a.dataset_digest, b.dataset_digest);
    let c = RunManifest::load(&synth(tmp.path(), "6").join("manifest.json")).unwrap();
    assert_ne!(a.dataset_digest, c.dataset_digest);
    assert_eq!(a.subcommand, "synth");
    assert_eq!(a.seed, 5);
}

#[test]
fn train_label_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "1");
    let corpus = data.join("corpus.json");
    let train = subdir(tmp.path(), "train");
    ok(&["train", "--corpus", s(&corpus), "--alpha", "1", "--seed", "2", "--out", s(&train)]);
    let model = load_model(&train.join("model.json")).unwrap();
    assert_eq!(model.k(), 5);
    let trace = fs::read_to_string(train.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,loglik_bound,logdet_term,objective,anchor_term\n"));
    assert!(trace.lines().count() > 2);

    let label = subdir(tmp.path(), "label");
    ok(&["label", "--model", s(&train.join("model.json")), "--corpus", s(&corpus), "--out", s(&label)]);
    let labels = fs::read_to_string(label.join("labels.txt")).unwrap();
    let gold = Corpus::load_json(&corpus).unwrap();
    assert_eq!(labels.lines().count(), gold.len());

    let eval = subdir(tmp.path(), "eval");
    ok(&[
        "eval",
        "--pred",
        s(&label.join("labels.txt")),
        "--gold",
        s(&corpus),
        "--model",
        s(&train.join("model.json")),
        "--out",
        s(&eval),
    ]);
    let metrics = fs::read_to_string(eval.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next(),
        Some("accuracy,positions,sigma_f,effective_states,gold_effective_states,diversity")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let acc: f64 = row[0].parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(row[1], gold.n_positions().to_string());
    assert!(row[5].parse::<f64>().unwrap() >= 0.0);
    let hist = fs::read_to_string(eval.join("histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 6);
}

#[test]
fn gold_against_itself_scores_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "1");
    let corpus = Corpus::load_json(&data.join("corpus.json")).unwrap();
    let gold: String = corpus
        .labels()
        .unwrap()
        .iter()
        .map(|l| l.iter().map(usize::to_string).collect::<Vec<_>>().join(" ") + "\n")
        .collect();
    let gold_file = tmp.path().join("gold.txt");
    fs::write(&gold_file, gold).unwrap();
    for align in ["hungarian", "none"] {
        let eval = subdir(tmp.path(), &format!("eval_{align}"));
        ok(&[
            "eval", "--pred", s(&gold_file), "--gold", s(&gold_file), "--k", "5", "--align", align, "--out", s(&eval),
        ]);
        let metrics = fs::read_to_string(eval.join("metrics.csv")).unwrap();
        assert!(metrics.lines().nth(1).unwrap().starts_with("1,"), "{metrics}");
    }
}

#[test]
fn label_rejects_a_model_of_another_family() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "1");
    let text = tmp.path().join("tagged.txt");
    fs::write(&text, "the/DT dog/NN ./.\n").unwrap();
    let out_dir = subdir(tmp.path(), "label");
    let out = dhmm(&[
        "label",
        "--model",
        s(&data.join("truth_model.json")),
        "--corpus",
        s(&text),
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("categorical"));
}

#[test]
fn tagged_text_round_trip_with_vocabulary() {
    let tmp = tempfile::tempdir().unwrap();
    let train_text = tmp.path().join("train.txt");
    fs::write(
        &train_text,
        "the/DT dog/NN runs/VBZ ./.\nthe/DT cat/NN sleeps/VBZ ./.\na/DT dog/NN sleeps/VBZ ./.\n",
    )
    .unwrap();
    // Unseen words need emission mass in the reserved unknown-word slot.
    let config = tmp.path().join("config.json");
    fs::write(&config, r#"{"train": {"pseudocount": 0.1}}"#).unwrap();
    let train = subdir(tmp.path(), "train");
    ok(&[
        "train",
        "--mode",
        "sup",
        "--corpus",
        s(&train_text),
        "--family",
        "categorical",
        "--config",
        s(&config),
        "--out",
        s(&train),
    ]);
    let vocab = fs::read_to_string(train.join("vocabulary.txt")).unwrap();
    assert_eq!(vocab.lines().next(), Some("."));
    let model = load_model(&train.join("model.json")).unwrap();
    assert_eq!(model.k(), 15);

    let test_text = tmp.path().join("test.txt");
    fs::write(&test_text, "the/DT bird/NN runs/VBZ ./.\n").unwrap();
    let label = subdir(tmp.path(), "label");
    ok(&[
        "label",
        "--model",
        s(&train.join("model.json")),
        "--corpus",
        s(&test_text),
        "--vocabulary",
        s(&train.join("vocabulary.txt")),
        "--out",
        s(&label),
    ]);
    let labels = fs::read_to_string(label.join("labels.txt")).unwrap();
    assert_eq!(labels.split_whitespace().count(), 4);

    // Without smoothing the unknown word has zero probability under every state.
    let bare = subdir(tmp.path(), "bare");
    ok(&["train", "--mode", "sup", "--corpus", s(&train_text), "--out", s(&bare)]);
    let out = dhmm(&[
        "label",
        "--model",
        s(&bare.join("model.json")),
        "--corpus",
        s(&test_text),
        "--vocabulary",
        s(&bare.join("vocabulary.txt")),
        "--out",
        s(&label),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sequence 0"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "1");
    let config = tmp.path().join("config.json");
    fs::write(&config, r#"{"train": {"alpha": 2.0, "max_em_iters": 3}}"#).unwrap();
    let train = subdir(tmp.path(), "train");
    ok(&[
        "train",
        "--corpus",
        s(&data.join("corpus.json")),
        "--config",
        s(&config),
        "--alpha",
        "0.5",
        "--out",
        s(&train),
    ]);
    let m = RunManifest::load(&train.join("manifest.json")).unwrap();
    assert_eq!(m.config.train.alpha, 0.5);
    assert_eq!(m.config.train.max_em_iters, 3);
    assert_eq!(m.inputs.len(), 1);
    assert_eq!(m.dataset_digest.as_deref(), Some(m.inputs[0].sha256.as_str()));

    fs::write(&config, r#"{"train": {"alpah": 2.0}}"#).unwrap();
    let out = dhmm(&["train", "--corpus", s(&data.join("corpus.json")), "--config", s(&config), "--out", s(&train)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn alpha_sweep_writes_long_format() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "1");
    let sweep = subdir(tmp.path(), "sweep");
    ok(&[
        "sweep",
        "--sweep",
        "alpha",
        "--values",
        "0,1",
        "--seeds",
        "2",
        "--seed",
        "10",
        "--corpus",
        s(&data.join("corpus.json")),
        "--out",
        s(&sweep),
    ]);
    let csv = fs::read_to_string(sweep.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("sweep_var,value,seed,metric,score,status"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // 2 values × 2 seeds × 4 metrics.
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r[0] == "alpha" && r[5] == "ok"));
    assert_eq!(rows[0][1], "0");
    assert_eq!(rows[0][2], "10");
    assert_eq!(rows[4][2], "11");
    assert_eq!(rows[8][1], "1");
    let metrics: Vec<&str> = rows[..4].iter().map(|r| r[3]).collect();
    assert_eq!(metrics, ["accuracy", "diversity", "states", "objective"]);
}

#[test]
fn supervised_alpha_sweep_cross_validates() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "1");
    let sweep = subdir(tmp.path(), "sweep");
    ok(&[
        "sweep",
        "--sweep",
        "alpha",
        "--mode",
        "sup",
        "--folds",
        "3",
        "--values",
        "0,10",
        "--seeds",
        "1",
        "--corpus",
        s(&data.join("corpus.json")),
        "--out",
        s(&sweep),
    ]);
    let csv = fs::read_to_string(sweep.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    for line in csv.lines().skip(1) {
        let score: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(score.is_finite() && score >= 0.0, "{line}");
    }
}

#[test]
fn replay_refuses_changed_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "1");
    let corpus = tmp.path().join("copy.json");
    fs::copy(data.join("corpus.json"), &corpus).unwrap();
    let train = subdir(tmp.path(), "train");
    ok(&["train", "--corpus", s(&corpus), "--alpha", "0", "--out", s(&train)]);

    let again = subdir(tmp.path(), "again");
    ok(&["replay", "--manifest", s(&train.join("manifest.json")), "--out", s(&again)]);
    assert_eq!(fs::read(train.join("model.json")).unwrap(), fs::read(again.join("model.json")).unwrap());

    let mut text = fs::read_to_string(&corpus).unwrap();
    text.push('\n');
    fs::write(&corpus, text).unwrap();
    let out = dhmm(&["replay", "--manifest", s(&train.join("manifest.json")), "--out", s(&again)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}

#[test]
fn ocr_records_train_supervised() {
    let tmp = tempfile::tempdir().unwrap();
    let mut text = String::new();
    // Two words: "ab" (ids 1, 2) and "ba" (ids 3, 4).
    for (id, letter, next, fold) in [(1, 'a', 2, 0), (2, 'b', -1, 0), (3, 'b', 4, 1), (4, 'a', -1, 1)] {
        let pixels: Vec<&str> = (0..128).map(|p| if (p % 2 == 0) == (letter == 'a') { "1" } else { "0" }).collect();
        text.push_str(&format!("{id}\t{letter}\t{next}\t0\t0\t{fold}\t{}\n", pixels.join("\t")));
    }
    let data = tmp.path().join("letter.data");
    fs::write(&data, text).unwrap();
    let train = subdir(tmp.path(), "train");
    ok(&["train", "--mode", "sup", "--corpus", s(&data), "--k", "2", "--alpha", "1", "--alpha-a", "10", "--out", s(&train)]);
    let model = load_model(&train.join("model.json")).unwrap();
    assert_eq!(model.k(), 2);
    assert_eq!(model.b.dim(), 128);
}
