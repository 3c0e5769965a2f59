use std::collections::HashMap;

use approx::assert_abs_diff_eq;
use biasattn::corpus::{build_vocabs, encode_corpus, SentencePair, Tokens, Vocab};
use biasattn::eval::{
    corpus_bleu, perplexity, rerank, rerank_bleu, score_nbest, sentence_bleu_smoothed,
    tune_weights, GridSpec, NBestEntry, Scorer, Weights,
};
use biasattn::model::{Architecture, BiasFlags, Model, ModelConfig};
use biasattn::toy::{toy_corpus, ToyTask};
use biasattn::trainer::{train, TrainSchedule};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(s: &str) -> Tokens {
    s.split_whitespace().map(str::to_string).collect()
}

/// Straightforward BLEU-4: counts n-grams by scanning, with no shared code.
fn brute_force_bleu(cands: &[Tokens], refs: &[Tokens]) -> f64 {
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut c_len, mut r_len) = (0, 0);
    for (c, r) in cands.iter().zip(refs) {
        c_len += c.len();
        r_len += r.len();
        for n in 1..=4 {
            if c.len() < n {
                continue;
            }
            let grams = |s: &Tokens| -> Vec<String> {
                (0..=s.len() - n).map(|i| s[i..i + n].join(" ")).collect()
            };
            let cg = grams(c);
            let rg = if r.len() >= n { grams(r) } else { vec![] };
            totals[n - 1] += cg.len();
            let mut ref_counts: HashMap<&String, usize> = HashMap::new();
            for g in &rg {
                *ref_counts.entry(g).or_default() += 1;
            }
            let mut seen: HashMap<&String, usize> = HashMap::new();
            for g in &cg {
                let used = seen.entry(g).or_default();
                if *used < ref_counts.get(g).copied().unwrap_or(0) {
                    *used += 1;
                    matches[n - 1] += 1;
                }
            }
        }
    }
    if c_len == 0 {
        return 0.0;
    }
    let mut log_p = 0.0;
    for n in 0..4 {
        if totals[n] == 0 {
            continue;
        }
        if matches[n] == 0 {
            return 0.0;
        }
        log_p += (matches[n] as f64 / totals[n] as f64).ln() / 4.0;
    }
    let bp = if c_len >= r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    bp * log_p.exp()
}

fn random_sentence(rng: &mut ChaCha8Rng) -> Tokens {
    let len = rng.gen_range(1..9);
    (0..len)
        .map(|_| ["a", "b", "c", "d"][rng.gen_range(0..4)].to_string())
        .collect()
}

#[test]
fn bleu_matches_brute_force_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        let n = rng.gen_range(1..6);
        let refs: Vec<Tokens> = (0..n).map(|_| random_sentence(&mut rng)).collect();
        let cands: Vec<Tokens> = refs
            .iter()
            .map(|r| {
                if rng.gen_bool(0.3) {
                    r.clone()
                } else {
                    random_sentence(&mut rng)
                }
            })
            .collect();
        let ours = corpus_bleu(&cands, &refs).unwrap();
        assert!((ours - brute_force_bleu(&cands, &refs)).abs() <= 1e-9);
        assert!((0.0..=1.0).contains(&ours));
    }
}

fn uniform_model(vocab: usize) -> Model {
    Model::zeroed(ModelConfig::new(Architecture::Attentional, vocab, vocab).with_dims(4, 4, 4))
        .unwrap()
}

#[test]
fn uniform_perplexity_is_vocab_size() {
    let corpus = vec![
        SentencePair::new(vec![0, 2, 3, 1], vec![0, 3, 1]).unwrap(),
        SentencePair::new(vec![0, 1], vec![0, 2, 2, 3, 1]).unwrap(),
    ];
    let ppl = perplexity(&uniform_model(4), &corpus, 1).unwrap();
    assert_abs_diff_eq!(ppl, 4.0, epsilon = 1e-12);
    assert!(perplexity(&uniform_model(4), &[], 1).is_err());
}

#[test]
fn perplexity_is_order_and_thread_invariant() {
    let raw = toy_corpus(ToyTask::Copy, 8, 1, 6, 30, 4).unwrap();
    let (s, tv) = build_vocabs(&raw, 1).unwrap();
    let mut corpus = encode_corpus(&s, &tv, &raw);
    let cfg = ModelConfig::new(Architecture::Attentional, s.len(), tv.len())
        .with_dims(5, 5, 5)
        .with_flags(BiasFlags::align());
    let model = Model::new(cfg, 1).unwrap();
    let base = perplexity(&model, &corpus, 1).unwrap();
    assert!(base >= 1.0);
    assert_eq!(perplexity(&model, &corpus, 3).unwrap(), base);
    corpus.shuffle(&mut ChaCha8Rng::seed_from_u64(2));
    assert_abs_diff_eq!(
        perplexity(&model, &corpus, 1).unwrap(),
        base,
        epsilon = 1e-12
    );
}

fn entry(id: usize, hyp: &str, feats: &[(&str, f64)]) -> NBestEntry {
    NBestEntry {
        id,
        hypothesis: t(hyp),
        features: feats.iter().map(|(n, v)| (n.to_string(), *v)).collect(),
        score: 0.0,
    }
}

/// Twenty sentences, five hypotheses each, listed in a fixed "system" order
/// that is not by quality. Features: `tm` (weakly informative) and `noise`.
fn synthetic_nbest(seed: u64) -> (Vec<NBestEntry>, Vec<Tokens>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let mut refs = Vec::new();
    for id in 0..20 {
        let reference = random_sentence(&mut rng);
        let mut hyps = vec![reference.clone()];
        for _ in 0..4 {
            let mut h = reference.clone();
            for tok in h.iter_mut() {
                if rng.gen_bool(0.4) {
                    *tok = "z".to_string();
                }
            }
            if rng.gen_bool(0.5) {
                h.pop();
            }
            hyps.push(h);
        }
        hyps.shuffle(&mut rng);
        for h in hyps {
            let quality = sentence_bleu_smoothed(&h, &reference);
            let mut e = NBestEntry {
                id,
                hypothesis: h,
                features: vec![],
                score: 0.0,
            };
            e.set_feature("tm", quality + rng.gen_range(-0.3..0.3));
            e.set_feature("noise", rng.gen_range(-1.0..1.0));
            entries.push(e);
        }
        refs.push(reference);
    }
    (entries, refs)
}

#[test]
fn tuning_with_an_oracle_feature_never_loses_to_the_one_best() {
    let (mut entries, refs) = synthetic_nbest(3);
    for e in entries.iter_mut() {
        let oracle = sentence_bleu_smoothed(&e.hypothesis, &refs[e.id]);
        e.set_feature("oracle", oracle);
    }
    let first: Vec<Tokens> = biasattn::eval::group_by_sentence(&entries)
        .iter()
        .map(|(_, m)| entries[m[0]].hypothesis.clone())
        .collect();
    let one_best = corpus_bleu(&first, &refs).unwrap();
    let weights = tune_weights(&entries, &refs, &GridSpec::default()).unwrap();
    let tuned = rerank_bleu(&entries, &refs, &weights).unwrap();
    assert!(tuned >= one_best, "{tuned} < {one_best}");
    assert!(tuned > one_best);
}

/// Each sentence lists a damaged hypothesis first, then the reference, and
/// sometimes a damaged decoy between them. Which one wins depends on the
/// weights `(w1, w2)`:
///
/// * kind A: reference at `(1, 0)`, wins iff `w1 > 0`;
/// * kind B: reference at `(0, 1)`, wins iff `w2 > 0`;
/// * kind C: decoy `(0, 2)` before reference `(2, 0)`; the reference wins
///   iff `w1 > max(w2, 0)` (ties keep the earlier decoy).
///
/// On the grid below only `(1, 0.5)` satisfies all three.
fn designed_nbest() -> (Vec<NBestEntry>, Vec<Tokens>) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let kinds = "AABBBBCC";
    let mut entries = Vec::new();
    let mut refs = Vec::new();
    for (id, kind) in kinds.chars().enumerate() {
        let reference: Tokens = (0..6)
            .map(|_| ["a", "b", "c", "d"][rng.gen_range(0..4)].to_string())
            .collect();
        let damaged = |keep: usize| -> String {
            let mut h = reference[..keep].to_vec();
            h.push("z".into());
            h.join(" ")
        };
        let gold = reference.join(" ");
        entries.push(entry(id, &damaged(2), &[("f1", 0.0), ("f2", 0.0)]));
        match kind {
            'A' => entries.push(entry(id, &gold, &[("f1", 1.0), ("f2", 0.0)])),
            'B' => entries.push(entry(id, &gold, &[("f1", 0.0), ("f2", 1.0)])),
            _ => {
                entries.push(entry(id, &damaged(3), &[("f1", 0.0), ("f2", 2.0)]));
                entries.push(entry(id, &gold, &[("f1", 2.0), ("f2", 0.0)]));
            }
        }
        refs.push(reference);
    }
    (entries, refs)
}

#[test]
fn coordinate_ascent_finds_the_exhaustive_optimum() {
    let (entries, refs) = designed_nbest();
    let grid = GridSpec {
        features: Some(vec!["f1".into(), "f2".into()]),
        values: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
        max_passes: 10,
    };
    let mut cells = Vec::new();
    for &a in &grid.values {
        for &b in &grid.values {
            let w = Weights(vec![("f1".into(), a), ("f2".into(), b)]);
            cells.push(((a, b), rerank_bleu(&entries, &refs, &w).unwrap()));
        }
    }
    let best = cells.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let argmax: Vec<(f64, f64)> = cells.iter().filter(|c| c.1 == best).map(|c| c.0).collect();
    assert_eq!(argmax, vec![(1.0, 0.5)]);
    assert_abs_diff_eq!(best, 1.0, epsilon = 1e-12);

    let tuned = tune_weights(&entries, &refs, &grid).unwrap();
    assert_eq!(tuned, Weights(vec![("f1".into(), 1.0), ("f2".into(), 0.5)]));
}

#[test]
fn rerank_is_scale_invariant() {
    let (entries, _) = synthetic_nbest(5);
    let w = Weights(vec![("tm".into(), 0.7), ("noise".into(), -0.2)]);
    assert_eq!(
        rerank(&entries, &w).unwrap(),
        rerank(&entries, &w.scaled(2.0)).unwrap()
    );
}

fn trained_copy_model() -> (Model, Vocab, Vocab) {
    let raw = toy_corpus(ToyTask::Copy, 10, 3, 8, 1000, 0).unwrap();
    let dev_raw = toy_corpus(ToyTask::Copy, 10, 3, 8, 50, 1).unwrap();
    let (s, tv) = build_vocabs(&raw, 1).unwrap();
    let cfg = ModelConfig::new(Architecture::Attentional, s.len(), tv.len())
        .with_dims(16, 16, 16)
        .with_flags(BiasFlags::align());
    let schedule = TrainSchedule {
        max_epochs: 8,
        ..Default::default()
    };
    let report = train(
        Model::new(cfg, 0).unwrap(),
        &schedule,
        &encode_corpus(&s, &tv, &raw),
        &encode_corpus(&s, &tv, &dev_raw),
        |_| {},
    )
    .unwrap();
    (report.best.model, s, tv)
}

#[test]
fn neural_features_prefer_the_gold_translation() {
    let (model, s, tv) = trained_copy_model();
    let sources = vec![t("w1 w2 w3"), t("w4 w0 w2")];
    let mut entries = vec![
        entry(0, "w1 w2 w3 w3 w7 w1", &[("tm", 0.0)]),
        entry(0, "w1 w2 w3", &[("tm", 0.0)]),
        entry(0, "w1 w2 w3 w3 w7 w1", &[("tm", 0.0)]),
        entry(1, "w4 w0 w2", &[("tm", 1.0)]),
        entry(1, "w0 w4 w2", &[("tm", 2.0)]),
    ];
    let scorers = [Scorer {
        name: "neural0".into(),
        model: &model,
        src_vocab: &s,
        tgt_vocab: &tv,
    }];
    score_nbest(&mut entries, &sources, &scorers, false, 1).unwrap();
    let f = |i: usize| entries[i].feature("neural0").unwrap();
    assert_eq!(f(0), f(2));
    assert!(f(1) > f(0));
    assert!(f(0) < 0.0);

    let picks = rerank(&entries, &Weights(vec![("neural0".into(), 1.0)])).unwrap();
    assert_eq!(picks, vec![1, 3]);
    let picks = rerank(&entries, &Weights(vec![("tm".into(), 1.0)])).unwrap();
    assert_eq!(picks, vec![0, 4]);

    let mut normalized = entries.clone();
    score_nbest(&mut normalized, &sources, &scorers, true, 2).unwrap();
    assert_abs_diff_eq!(
        normalized[1].feature("neural0").unwrap(),
        f(1) / 4.0,
        epsilon = 1e-12
    );

    let mut bad = entries.clone();
    bad[0].id = 5;
    assert!(score_nbest(&mut bad, &sources, &scorers, false, 1).is_err());
}
