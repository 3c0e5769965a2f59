use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use biasattn::corpus::Vocab;
use biasattn::eval::perplexity;
use biasattn::model::{Architecture, BiasFlags, Model, ModelConfig};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_biasattn"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 output")
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).expect("utf-8 output")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const TOY: &str = "a b c\nb c d\nc d a\nd a b\na c\n";

/// A toy parallel corpus in `dir`: identical source and target sides.
fn toy_files(dir: &Path) {
    for name in ["train.src", "train.tgt", "dev.src", "dev.tgt"] {
        write(dir, name, TOY);
    }
}

const TINY_TRAIN: [&str; 18] = [
    "train",
    "--train-src",
    "train.src",
    "--train-tgt",
    "train.tgt",
    "--dev-src",
    "dev.src",
    "--dev-tgt",
    "dev.tgt",
    "--hidden",
    "4",
    "--embed",
    "4",
    "--align",
    "4",
    "--epochs",
    "2",
    "--timing",
];

/// Training flags without `--timing`, so logs are reproducible.
fn tiny_train(model: &str) -> Vec<&str> {
    let mut args: Vec<&str> = TINY_TRAIN[..17].to_vec();
    args.extend(["--biases", "align", "--model", model]);
    args
}

/// Saves a zero-parameter model with one real word per side (V = 4).
fn uniform_model(dir: &Path) -> PathBuf {
    let cfg = ModelConfig::new(Architecture::Attentional, 4, 4)
        .with_dims(3, 3, 3)
        .with_flags(BiasFlags::align());
    let model = Model::zeroed(cfg).unwrap();
    let path = dir.join("uniform.model");
    model.save(&path).unwrap();
    let vocab = Vocab::build([["x".to_string()].as_slice()], 1).unwrap();
    assert_eq!(vocab.len(), 4);
    vocab.save(dir.join("uniform.model.src.vocab")).unwrap();
    vocab.save(dir.join("uniform.model.tgt.vocab")).unwrap();
    path
}

#[test]
fn missing_dev_corpus_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    toy_files(dir.path());
    let o = run(
        dir.path(),
        &[
            "train",
            "--train-src",
            "train.src",
            "--train-tgt",
            "train.tgt",
            "--model",
            "m",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--dev-src"));
    assert!(!dir.path().join("m").exists());
}

#[test]
fn invalid_flags_are_rejected_before_reading_files() {
    let dir = TempDir::new().unwrap();
    let base = [
        "train",
        "--train-src",
        "nope",
        "--train-tgt",
        "nope",
        "--dev-src",
        "nope",
        "--dev-tgt",
        "nope",
        "--model",
        "m",
    ];
    for bad in [
        &["--lr", "0"][..],
        &["--hidden", "0"],
        &["--threads", "0"],
        &["--min-freq", "0"],
        &["--arch", "baseline", "--biases", "markov"],
    ] {
        let o = run(dir.path(), &[&base[..], bad].concat());
        assert_eq!(o.status.code(), Some(2), "{bad:?}: {}", stderr(&o));
    }
    let o = run(dir.path(), &[&base[..], &["--biases", "bogus"]].concat());
    assert_eq!(o.status.code(), Some(2));
    // Valid flags reach the missing files: a runtime failure.
    let o = run(dir.path(), &base);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn uniform_model_perplexity_is_the_vocabulary_size() {
    let dir = TempDir::new().unwrap();
    let model = uniform_model(dir.path());
    write(dir.path(), "s", "x x\nx\n");
    write(dir.path(), "t", "x\nx x x\n");
    let o = run(
        dir.path(),
        &[
            "ppl",
            "--model",
            model.to_str().unwrap(),
            "--src",
            "s",
            "--tgt",
            "t",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "4.0000\n");

    // Same number as the library call.
    let loaded = Model::load(&model).unwrap();
    let v = Vocab::load(dir.path().join("uniform.model.src.vocab")).unwrap();
    let raw = biasattn::corpus::load_parallel(dir.path().join("s"), dir.path().join("t")).unwrap();
    let pairs = biasattn::corpus::encode_corpus(&v, &v, &raw);
    let expected = perplexity(&loaded, &pairs, 1).unwrap();
    assert_eq!(stdout(&o).trim(), format!("{expected:.4}"));
    assert!(stdout(&o).trim().parse::<f64>().is_ok());
}

#[test]
fn perplexity_rejects_a_mismatched_vocabulary() {
    let dir = TempDir::new().unwrap();
    let model = uniform_model(dir.path());
    let big = Vocab::build([["x".to_string(), "y".to_string()].as_slice()], 1).unwrap();
    big.save(dir.path().join("uniform.model.tgt.vocab"))
        .unwrap();
    write(dir.path(), "s", "x\n");
    let o = run(
        dir.path(),
        &[
            "ppl",
            "--model",
            model.to_str().unwrap(),
            "--src",
            "s",
            "--tgt",
            "s",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("vocabularies"), "{}", stderr(&o));
}

#[test]
fn bleu_of_identical_files_is_one() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "h", "the cat sat on the mat\na b c d e\n");
    let o = run(dir.path(), &["bleu", "--hyp", "h", "--ref", "h"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "1.0000\n");

    write(dir.path(), "r", "the cat sat on the mat\n");
    let o = run(dir.path(), &["bleu", "--hyp", "h", "--ref", "r"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_nbest_line_is_named() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "nbest",
        "0 ||| a b ||| f=1 ||| 0\n0 ||| a b f=1 ||| 0\n",
    );
    write(dir.path(), "w", "f 1\n");
    let o = run(
        dir.path(),
        &["rerank", "--nbest", "nbest", "--weights", "w"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn uniform_model_attention_dump() {
    let dir = TempDir::new().unwrap();
    let model = uniform_model(dir.path());
    let o = run(
        dir.path(),
        &[
            "dump-attn",
            "--model",
            model.to_str().unwrap(),
            "--src-text",
            "x x x",
            "--tgt-text",
            "x y",
            "--pgm",
            "a.pgm",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.ends_with('\n'));
    let lines: Vec<&str> = text.lines().collect();
    // Header plus J − 1 = 3 predicted steps.
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], ",<s>,x,x,x,</s>");
    let targets: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(targets, ["x", "y", "</s>"]);
    for line in &lines[1..] {
        let values: Vec<&str> = line.split(',').skip(1).collect();
        assert_eq!(values, ["0.200000"; 5]);
    }
    let pgm = fs::read_to_string(dir.path().join("a.pgm")).unwrap();
    assert_eq!(
        pgm,
        "P2\n5 3\n255\n51 51 51 51 51\n51 51 51 51 51\n51 51 51 51 51\n"
    );

    // The same pair read from files by 1-based line number.
    write(dir.path(), "s", "x\nx x x\n");
    write(dir.path(), "t", "x\nx y\n");
    let o2 = run(
        dir.path(),
        &[
            "dump-attn",
            "--model",
            model.to_str().unwrap(),
            "--src",
            "s",
            "--tgt",
            "t",
            "--line",
            "2",
        ],
    );
    assert!(o2.status.success(), "{}", stderr(&o2));
    assert_eq!(stdout(&o2), text);

    let o3 = run(
        dir.path(),
        &["dump-attn", "--model", model.to_str().unwrap()],
    );
    assert_eq!(o3.status.code(), Some(2));
    let o4 = run(
        dir.path(),
        &[
            "dump-attn",
            "--model",
            "absent",
            "--src-text",
            "x",
            "--tgt-text",
            "x",
        ],
    );
    assert_eq!(o4.status.code(), Some(1));
}

#[test]
fn training_is_reproducible_and_round_trips() {
    let dir = TempDir::new().unwrap();
    toy_files(dir.path());
    for model in ["m1", "m2"] {
        let o = run(dir.path(), &tiny_train(model));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |name: &str| fs::read(dir.path().join(name)).unwrap();
    assert_eq!(read("m1"), read("m2"));
    assert_eq!(read("m1.log"), read("m2.log"));
    assert_eq!(read("m1.src.vocab"), read("m2.src.vocab"));

    let log = String::from_utf8(read("m1.log")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 2);
    for (n, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[0], (n + 1).to_string());
        assert_eq!(fields[4], "NA");
    }

    let model = Model::load(dir.path().join("m1")).unwrap();
    model.save(dir.path().join("copy")).unwrap();
    assert_eq!(read("m1"), read("copy"));
    assert_eq!(Model::load(dir.path().join("copy")).unwrap(), model);

    // --timing fills in seconds.
    let mut timed: Vec<&str> = TINY_TRAIN.to_vec();
    timed.extend(["--model", "t"]);
    let o = run(dir.path(), &timed);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = String::from_utf8(read("t.log")).unwrap();
    assert!(log
        .lines()
        .all(|l| l.split('\t').nth(4).unwrap().parse::<f64>().is_ok()));
}

#[test]
fn symmetric_training_writes_both_directions() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "train.src", "a b\nb a\nc a b\n");
    write(dir.path(), "train.tgt", "x y z\ny x\nz\n");
    write(dir.path(), "dev.src", "a b\n");
    write(dir.path(), "dev.tgt", "x y\n");
    let mut args: Vec<&str> = tiny_train("fwd");
    args[0] = "train-sym";
    args.extend(["--reverse-model", "rev", "--log", "sym.log"]);
    let o = run(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let fwd = Model::load(dir.path().join("fwd")).unwrap();
    let rev = Model::load(dir.path().join("rev")).unwrap();
    assert_eq!(fwd.config().src_vocab, rev.config().tgt_vocab);
    assert_eq!(
        fs::read(dir.path().join("fwd.src.vocab")).unwrap(),
        fs::read(dir.path().join("rev.tgt.vocab")).unwrap()
    );
    let log = fs::read_to_string(dir.path().join("sym.log")).unwrap();
    assert!(log
        .lines()
        .all(|l| l.split('\t').nth(3).unwrap().split(',').count() == 2));

    // Reverse perplexity is evaluated on the swapped corpus.
    let o = run(
        dir.path(),
        &[
            "ppl", "--model", "rev", "--src", "dev.tgt", "--tgt", "dev.src",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn nbest_scoring_tuning_and_reranking() {
    let dir = TempDir::new().unwrap();
    let model = uniform_model(dir.path());
    write(dir.path(), "src", "x\nx x\n");
    write(
        dir.path(),
        "nbest",
        "0 ||| a b c ||| lm=-1 ||| -1\n0 ||| x ||| lm=-3 ||| -3\n1 ||| x x ||| lm=-2 ||| -2\n1 ||| q ||| lm=-1 ||| -1\n",
    );
    write(dir.path(), "refs", "x\nx x\n");
    let m = model.to_str().unwrap();
    let o = run(
        dir.path(),
        &[
            "score-nbest",
            "--nbest",
            "nbest",
            "--src",
            "src",
            "--model",
            m,
            "--model",
            m,
            "--output",
            "scored",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let scored = fs::read_to_string(dir.path().join("scored")).unwrap();
    assert!(scored.ends_with('\n'));
    assert_eq!(scored.lines().count(), 4);
    // Uniform model: −NLL = −(tokens + 1)·ln 4 for both columns.
    let first = scored.lines().next().unwrap();
    assert!(
        first.contains("neural0=") && first.contains("neural1="),
        "{first}"
    );
    let entries = biasattn::eval::read_nbest(scored.as_bytes()).unwrap();
    let expected = -4.0 * 4f64.ln();
    assert!((entries[0].feature("neural0").unwrap() - expected).abs() <= 1e-12);

    let o = run(
        dir.path(),
        &[
            "tune",
            "--nbest",
            "scored",
            "--ref",
            "refs",
            "--features",
            "lm",
            "--output",
            "w",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let weights = fs::read_to_string(dir.path().join("w")).unwrap();
    assert_eq!(weights.lines().count(), 1);
    let o = run(
        dir.path(),
        &["rerank", "--nbest", "scored", "--weights", "w"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "x\nx x\n");

    let o = run(
        dir.path(),
        &[
            "tune", "--nbest", "scored", "--ref", "refs", "--passes", "0",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn decode_writes_one_line_per_source() {
    let dir = TempDir::new().unwrap();
    toy_files(dir.path());
    let o = run(dir.path(), &tiny_train("m"));
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(
        dir.path(),
        &[
            "decode",
            "--model",
            "m",
            "--input",
            "dev.src",
            "--max-len",
            "3",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), TOY.lines().count());
    assert!(text.lines().all(|l| l.split_whitespace().count() <= 3));
    let o = run(
        dir.path(),
        &[
            "decode",
            "--model",
            "m",
            "--input",
            "dev.src",
            "--max-len",
            "0",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_for_the_default_tiny_model() {
    let o = bin().arg("gradcheck").output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 10);
    for line in text.lines() {
        let err: f64 = line.split('\t').nth(1).unwrap().parse().unwrap();
        assert!(err <= 1e-3, "{line}");
    }
}

#[test]
fn help_lists_every_flag_with_its_default() {
    let o = bin().args(["train", "--help"]).output().unwrap();
    assert!(o.status.success());
    let help = stdout(&o);
    for (flag, default) in [
        ("--arch", "attentional"),
        ("--hidden", "512"),
        ("--embed", "512"),
        ("--align", "256"),
        ("--enc-layers", "1"),
        ("--dec-layers", "2"),
        ("--window", "1"),
        ("--biases", "none"),
        ("--gamma", "1"),
        ("--fertility-window", "symmetric"),
        ("--glofer-weight", "1"),
        ("--epochs", "20"),
        ("--lr", "0.1"),
        ("--decay", "0.5"),
        ("--clip", "5"),
        ("--pretrain-epochs", "10"),
        ("--glofer-finetune", "joint"),
        ("--min-freq", "1"),
        ("--seed", "0"),
        ("--threads", "1"),
    ] {
        // A flag's block runs from its own line to the next flag line.
        let lines: Vec<&str> = help.lines().collect();
        let start = lines
            .iter()
            .position(|l| l.trim_start().starts_with(&format!("{flag} ")))
            .unwrap_or_else(|| panic!("{flag} missing from help"));
        let end = lines[start + 1..]
            .iter()
            .position(|l| l.trim_start().starts_with('-'))
            .map_or(lines.len(), |n| start + 1 + n);
        let block = lines[start..end].join("\n");
        assert!(
            block.contains(&format!("[default: {default}]")),
            "{flag}: {block}"
        );
    }
    for sub in [
        "train-sym",
        "ppl",
        "bleu",
        "rerank",
        "tune",
        "score-nbest",
        "dump-attn",
        "decode",
        "gradcheck",
    ] {
        let o = bin().args([sub, "--help"]).output().unwrap();
        assert!(o.status.success(), "{sub}");
    }
}
