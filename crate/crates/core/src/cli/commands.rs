use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::cli::args::{
    Align, CorpusArgs, CorpusFormat, EvalArgs, LabelArgs, Mode, ModelArgs, SweepArgs, SweepVar, TrainArgs,
};
use crate::cli::manifest::{digest_file, sha256_hex, FileDigest, RunConfig};
use crate::data::model_file::model_to_string;
use crate::data::toy::variance_sweep_configs;
use crate::data::{
    generate_toy_dataset, k_fold_split, load_model, read_ocr_dataset, read_pos_corpus, Corpus, TagMergeMap,
};
use crate::error::{DhmmError, Result};
use crate::eval::{effective_state_count, one_to_one_accuracy, state_histogram};
use crate::hmm::{viterbi, HmmParams};
use crate::kernel::mean_pairwise_diversity;
use crate::learning::{em_fit_unsupervised, fit_supervised, TrainConfig, TrainedModel};

/// Files produced by a subcommand, before they are written.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<(String, Vec<u8>)>,
    pub inputs: Vec<FileDigest>,
    pub dataset_digest: Option<String>,
    /// Work items that failed without aborting the run.
    pub failures: usize,
}

fn resolve_format(path: &Path, format: CorpusFormat) -> CorpusFormat {
    if format != CorpusFormat::Auto {
        return format;
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => CorpusFormat::Json,
        Some("data") | Some("tsv") => CorpusFormat::Ocr,
        _ => CorpusFormat::Pos,
    }
}

fn read_corpus(
    path: &Path,
    format: CorpusFormat,
    tag_map: Option<&Path>,
    vocabulary: Option<&Path>,
    inputs: &mut Vec<FileDigest>,
) -> Result<Corpus> {
    let digest = digest_file(path)?;
    inputs.push(digest);
    let corpus = match resolve_format(path, format) {
        CorpusFormat::Json => Corpus::load_json(path)?,
        CorpusFormat::Ocr => read_ocr_dataset(path)?,
        CorpusFormat::Pos | CorpusFormat::Auto => {
            let merge = match tag_map {
                Some(p) => {
                    inputs.push(digest_file(p)?);
                    TagMergeMap::from_file(p)?
                }
                None => TagMergeMap::default(),
            };
            match vocabulary {
                Some(v) => {
                    inputs.push(digest_file(v)?);
                    let text = fs::read_to_string(v).map_err(|e| DhmmError::io(v, e))?;
                    let words: Vec<String> = text.lines().map(str::to_string).collect();
                    crate::data::pos::read_pos_corpus_with_vocabulary(path, &merge, &words)?
                }
                None => read_pos_corpus(path, &merge)?,
            }
        }
    };
    Ok(corpus)
}

fn load_corpus(args: &CorpusArgs, inputs: &mut Vec<FileDigest>) -> Result<Corpus> {
    read_corpus(
        &args.corpus,
        args.format,
        args.tag_map.as_deref(),
        args.vocabulary.as_deref(),
        inputs,
    )
}

fn check_family(corpus: &Corpus, model: &ModelArgs) -> Result<()> {
    match model.family {
        Some(f) if f != corpus.family => Err(DhmmError::invalid(format!(
            "--family {f} but the corpus holds {} observations",
            corpus.family
        ))),
        _ => Ok(()),
    }
}

/// Explicit --k, else the size of the corpus label set.
fn state_count(corpus: &Corpus, model: &ModelArgs) -> Result<usize> {
    if let Some(k) = model.k {
        return Ok(k);
    }
    if !corpus.label_names.is_empty() {
        return Ok(corpus.label_names.len());
    }
    corpus
        .labels()
        .and_then(|l| l.iter().flatten().max().map(|m| m + 1))
        .ok_or_else(|| DhmmError::invalid("--k is required for an unlabeled corpus"))
}

fn csv_number(x: f64) -> String {
    format!("{x}")
}

fn fit(corpus: &Corpus, k: usize, mode: Mode, config: &TrainConfig) -> Result<TrainedModel> {
    if corpus.is_empty() {
        return Err(DhmmError::invalid("corpus has no sequences"));
    }
    let spec = corpus.emission_spec()?;
    match mode {
        Mode::Unsup => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            em_fit_unsupervised(&corpus.sequences, k, &spec, config, &mut rng)
        }
        Mode::Sup => {
            if !corpus.is_labeled() {
                return Err(DhmmError::invalid("supervised training needs gold labels on every sequence"));
            }
            fit_supervised(&corpus.sequences, k, &spec, config)
        }
    }
}

fn decode(params: &HmmParams, corpus: &Corpus) -> Result<Vec<Vec<usize>>> {
    corpus
        .sequences
        .par_iter()
        .enumerate()
        .map(|(n, s)| {
            params.check_sequence(s).map_err(|e| match e {
                DhmmError::InvalidInput(m) => DhmmError::invalid(format!("sequence {n}: {m}")),
                other => other,
            })?;
            Ok(viterbi(params, s).map_err(|e| e.in_sequence(n))?.0)
        })
        .collect()
}

fn labels_to_string(labels: &[Vec<usize>]) -> String {
    let mut out = String::new();
    for seq in labels {
        let line: Vec<String> = seq.iter().map(usize::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Reads a labels file: one sequence per line, whitespace-separated states.
pub fn read_labels(path: &Path) -> Result<Vec<Vec<usize>>> {
    let text = fs::read_to_string(path).map_err(|e| DhmmError::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            line.split_whitespace()
                .map(|tok| {
                    tok.parse::<usize>().map_err(|_| {
                        DhmmError::parse(format!("{}:{}", path.display(), i + 1), format!("bad label {tok:?}"))
                    })
                })
                .collect()
        })
        .collect()
}

pub fn synth(config: &RunConfig) -> Result<Outcome> {
    let (corpus, params) = generate_toy_dataset(&config.toy)?;
    let corpus_json = corpus.to_json()?;
    Ok(Outcome {
        dataset_digest: Some(sha256_hex(corpus_json.as_bytes())),
        outputs: vec![
            ("corpus.json".into(), corpus_json.into_bytes()),
            ("truth_model.json".into(), model_to_string(&params).into_bytes()),
        ],
        ..Outcome::default()
    })
}

pub fn train(args: &TrainArgs, config: &RunConfig) -> Result<Outcome> {
    let mut inputs = Vec::new();
    let corpus = load_corpus(&args.corpus, &mut inputs)?;
    check_family(&corpus, &args.model)?;
    let k = state_count(&corpus, &args.model)?;
    let model = fit(&corpus, k, args.mode, &config.train)?;
    if !model.converged {
        log::info!("training stopped at the iteration limit");
    }
    let mut outputs = vec![
        ("model.json".to_string(), model_to_string(&model.params).into_bytes()),
        ("trace.csv".to_string(), model.trace.to_csv().into_bytes()),
    ];
    if !corpus.vocabulary.is_empty() {
        let mut v = corpus.vocabulary.join("\n");
        v.push('\n');
        outputs.push(("vocabulary.txt".into(), v.into_bytes()));
    }
    if !model.trace.warnings.is_empty() {
        let mut w = model.trace.warnings.join("\n");
        w.push('\n');
        outputs.push(("warnings.txt".into(), w.into_bytes()));
    }
    Ok(Outcome {
        dataset_digest: inputs.first().map(|d| d.sha256.clone()),
        outputs,
        inputs,
        failures: 0,
    })
}

pub fn label(args: &LabelArgs) -> Result<Outcome> {
    let mut inputs = vec![digest_file(&args.model)?];
    let params = load_model(&args.model)?;
    let corpus = load_corpus(&args.corpus, &mut inputs)?;
    if corpus.family != params.b.family() {
        return Err(DhmmError::invalid(format!(
            "model emits {} observations but the corpus holds {}",
            params.b.family(),
            corpus.family
        )));
    }
    let labels = decode(&params, &corpus)?;
    Ok(Outcome {
        dataset_digest: inputs.get(1).map(|d| d.sha256.clone()),
        outputs: vec![("labels.txt".into(), labels_to_string(&labels).into_bytes())],
        inputs,
        failures: 0,
    })
}

fn direct_accuracy(pred: &[Vec<usize>], gold: &[Vec<usize>], k: usize) -> Result<f64> {
    // Reuse the shape and range checks of the aligned scorer.
    crate::eval::confusion_matrix(pred, gold, k)?;
    let total: usize = gold.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(DhmmError::invalid("no labeled positions to score"));
    }
    let hits: usize = pred
        .iter()
        .zip(gold)
        .map(|(p, g)| p.iter().zip(g).filter(|(a, b)| a == b).count())
        .sum();
    Ok(hits as f64 / total as f64)
}

pub fn eval(args: &EvalArgs) -> Result<Outcome> {
    let mut inputs = vec![digest_file(&args.pred)?];
    let pred = read_labels(&args.pred)?;
    let gold = if args.gold.extension().and_then(|e| e.to_str()) == Some("txt") {
        inputs.push(digest_file(&args.gold)?);
        read_labels(&args.gold)?
    } else {
        let corpus = read_corpus(&args.gold, args.gold_format, args.tag_map.as_deref(), None, &mut inputs)?;
        corpus
            .labels()
            .ok_or_else(|| DhmmError::invalid(format!("{} has unlabeled sequences", args.gold.display())))?
    };
    let model = match &args.model {
        Some(p) => {
            inputs.push(digest_file(p)?);
            Some(load_model(p)?)
        }
        None => None,
    };
    let k = args
        .k
        .or(model.as_ref().map(HmmParams::k))
        .ok_or_else(|| DhmmError::invalid("--k is required when no --model is given"))?;
    let accuracy = match args.align {
        Align::Hungarian => one_to_one_accuracy(&pred, &gold, k)?,
        Align::None => direct_accuracy(&pred, &gold, k)?,
    };
    let pred_hist = state_histogram(pred.iter().map(Vec::as_slice), k)?;
    let gold_hist = state_histogram(gold.iter().map(Vec::as_slice), k)?;
    let diversity = match &model {
        Some(m) => csv_number(mean_pairwise_diversity(&m.a)?.value),
        None => String::new(),
    };
    let metrics = format!(
        "accuracy,positions,sigma_f,effective_states,gold_effective_states,diversity\n{},{},{},{},{},{}\n",
        csv_number(accuracy),
        gold_hist.total,
        args.sigma_f,
        effective_state_count(&pred_hist, args.sigma_f),
        effective_state_count(&gold_hist, args.sigma_f),
        diversity
    );
    let mut histogram = String::from("state,predicted,gold\n");
    for s in 0..k {
        let _ = writeln!(histogram, "{s},{},{}", pred_hist.counts[s], gold_hist.counts[s]);
    }
    Ok(Outcome {
        dataset_digest: inputs.get(1).map(|d| d.sha256.clone()),
        outputs: vec![
            ("metrics.csv".into(), metrics.into_bytes()),
            ("histogram.csv".into(), histogram.into_bytes()),
        ],
        inputs,
        failures: 0,
    })
}

/// One (metric, score) result or the reason the work item failed.
type Scores = std::result::Result<Vec<(String, f64)>, String>;

/// Accuracy (when gold labels exist), diversity, identified states and the
/// final objective of one unsupervised fit.
fn unsup_scores(corpus: &Corpus, k: usize, config: &TrainConfig, sigma_f: u64, prefix: &str) -> Scores {
    let run = || -> Result<Vec<(String, f64)>> {
        let model = fit(corpus, k, Mode::Unsup, config)?;
        let pred = decode(&model.params, corpus)?;
        let mut scores = Vec::new();
        if let Some(gold) = corpus.labels() {
            scores.push((format!("{prefix}accuracy"), one_to_one_accuracy(&pred, &gold, k)?));
        }
        scores.push((format!("{prefix}diversity"), mean_pairwise_diversity(&model.params.a)?.value));
        let hist = state_histogram(pred.iter().map(Vec::as_slice), k)?;
        scores.push((format!("{prefix}states"), effective_state_count(&hist, sigma_f) as f64));
        let objective = model.trace.records.last().map_or(f64::NAN, |r| r.objective);
        scores.push((format!("{prefix}objective"), objective));
        Ok(scores)
    };
    run().map_err(|e| e.to_string())
}

/// Cross-validated accuracy of supervised fits, micro-averaged over all test
/// positions, and the mean transition diversity across folds.
fn sup_scores(corpus: &Corpus, k: usize, folds: usize, config: &TrainConfig) -> Scores {
    let run = || -> Result<Vec<(String, f64)>> {
        let splits = k_fold_split(corpus, folds, config.seed)?;
        let mut hits = 0usize;
        let mut total = 0usize;
        let mut diversity = 0.0;
        for split in &splits {
            let train = corpus.subset(&split.train);
            let test = corpus.subset(&split.test);
            let model = fit(&train, k, Mode::Sup, config)?;
            let pred = decode(&model.params, &test)?;
            let gold = test.labels().expect("labeled corpus");
            for (p, g) in pred.iter().zip(&gold) {
                hits += p.iter().zip(g).filter(|(a, b)| a == b).count();
                total += g.len();
            }
            diversity += mean_pairwise_diversity(&model.params.a)?.value / splits.len() as f64;
        }
        Ok(vec![
            ("accuracy".into(), hits as f64 / total as f64),
            ("diversity".into(), diversity),
        ])
    };
    run().map_err(|e| e.to_string())
}

struct SweepRow {
    value: f64,
    seed: u64,
    scores: Scores,
}

fn sweep_csv(var: &str, rows: &[SweepRow]) -> (String, usize) {
    let mut out = String::from("sweep_var,value,seed,metric,score,status\n");
    let mut failures = 0;
    for r in rows {
        match &r.scores {
            Ok(scores) => {
                for (metric, score) in scores {
                    let _ = writeln!(out, "{var},{},{},{metric},{},ok", csv_number(r.value), r.seed, csv_number(*score));
                }
            }
            Err(msg) => {
                failures += 1;
                let clean: String = msg.chars().map(|c| if c == ',' || c == '\n' { ';' } else { c }).collect();
                let _ = writeln!(out, "{var},{},{},,,error: {clean}", csv_number(r.value), r.seed);
            }
        }
    }
    (out, failures)
}

/// Default grid of prior weights.
pub const DEFAULT_ALPHAS: [f64; 5] = [0.0, 1.0, 10.0, 100.0, 1000.0];

pub fn sweep(args: &SweepArgs, config: &RunConfig) -> Result<Outcome> {
    if args.seeds == 0 {
        return Err(DhmmError::invalid("--seeds must be positive"));
    }
    let base_seed = config.train.seed;
    let seeds: Vec<u64> = (0..args.seeds).map(|i| base_seed.wrapping_add(i)).collect();
    match args.sweep {
        SweepVar::Variance => {
            let toys = match &args.values {
                Some(sigmas) => sigmas
                    .iter()
                    .map(|&s| crate::data::ToyConfig {
                        sigma_true: s,
                        ..config.toy.clone()
                    })
                    .collect(),
                None => variance_sweep_configs(&config.toy),
            };
            let corpora = toys
                .iter()
                .map(|t| generate_toy_dataset(t).map(|(c, _)| c))
                .collect::<Result<Vec<_>>>()?;
            let mut hasher = Sha256::new();
            for c in &corpora {
                hasher.update(c.to_json()?.as_bytes());
            }
            let digest: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
            let alpha = if config.train.alpha > 0.0 { config.train.alpha } else { 1.0 };
            let k = config.toy.k;
            let tasks: Vec<(usize, u64)> = (0..toys.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
            let rows: Vec<SweepRow> = tasks
                .par_iter()
                .map(|&(i, seed)| {
                    let plain = TrainConfig {
                        alpha: 0.0,
                        seed,
                        ..config.train.clone()
                    };
                    let diversified = TrainConfig { alpha, ..plain.clone() };
                    let scores = unsup_scores(&corpora[i], k, &plain, args.sigma_f, "hmm_").and_then(|mut h| {
                        h.extend(unsup_scores(&corpora[i], k, &diversified, args.sigma_f, "dhmm_")?);
                        Ok(h)
                    });
                    SweepRow {
                        value: toys[i].sigma_true,
                        seed,
                        scores,
                    }
                })
                .collect();
            let (csv, failures) = sweep_csv("variance", &rows);
            Ok(Outcome {
                outputs: vec![("sweep.csv".into(), csv.into_bytes())],
                inputs: Vec::new(),
                dataset_digest: Some(digest),
                failures,
            })
        }
        SweepVar::Alpha => {
            let path = args
                .corpus
                .as_deref()
                .ok_or_else(|| DhmmError::invalid("--corpus is required for an alpha sweep"))?;
            let mut inputs = Vec::new();
            let corpus = read_corpus(path, args.format, args.tag_map.as_deref(), None, &mut inputs)?;
            check_family(&corpus, &args.model)?;
            let k = state_count(&corpus, &args.model)?;
            let alphas = args.values.clone().unwrap_or_else(|| DEFAULT_ALPHAS.to_vec());
            let folds = args.folds.or(corpus.n_folds()).unwrap_or(10);
            let tasks: Vec<(f64, u64)> = alphas.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
            let rows: Vec<SweepRow> = tasks
                .par_iter()
                .map(|&(alpha, seed)| {
                    let cfg = TrainConfig {
                        alpha,
                        seed,
                        ..config.train.clone()
                    };
                    let scores = match args.mode {
                        Mode::Unsup => unsup_scores(&corpus, k, &cfg, args.sigma_f, ""),
                        Mode::Sup => sup_scores(&corpus, k, folds, &cfg),
                    };
                    SweepRow {
                        value: alpha,
                        seed,
                        scores,
                    }
                })
                .collect();
            let (csv, failures) = sweep_csv("alpha", &rows);
            Ok(Outcome {
                outputs: vec![("sweep.csv".into(), csv.into_bytes())],
                dataset_digest: inputs.first().map(|d| d.sha256.clone()),
                inputs,
                failures,
            })
        }
    }
}
