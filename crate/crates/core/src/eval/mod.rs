//! Evaluation: perplexity, corpus BLEU and n-best re-ranking.

mod bleu;
mod nbest;

pub use bleu::{corpus_bleu, corpus_stats, sentence_bleu_smoothed, BleuStats, MAX_ORDER};
pub use nbest::{
    group_by_sentence, read_nbest, rerank, rerank_bleu, tune_weights, write_nbest, GridSpec,
    NBestEntry, Weights,
};

use std::thread;

use crate::corpus::{SentencePair, Tokens, Vocab};
use crate::error::{Error, Result};
use crate::model::Model;

/// Applies `f` to every item on up to `threads` scoped workers. Results come
/// back in input order, so any later reduction is order-deterministic.
pub fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(f).collect::<Result<Vec<R>>>()))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("evaluation worker panicked")?);
        }
        Ok(out)
    })
}

/// Total negative log-likelihood and predicted-token count over a corpus.
pub fn corpus_nll(model: &Model, corpus: &[SentencePair], threads: usize) -> Result<(f64, usize)> {
    let per_sentence = parallel_map(corpus, threads, |p| {
        Ok((model.sentence_nll(p)?.0, p.predicted_len()))
    })?;
    Ok(per_sentence
        .into_iter()
        .fold((0.0, 0), |(nll, n), (x, m)| (nll + x, n + m)))
}

/// `exp(Σ NLL / Σ (J − 1))`; `</s>` counts as a predicted token.
pub fn perplexity(model: &Model, corpus: &[SentencePair], threads: usize) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (nll, tokens) = corpus_nll(model, corpus, threads)?;
    Ok((nll / tokens as f64).exp())
}

/// A model used to score n-best hypotheses, with its vocabularies.
pub struct Scorer<'a> {
    pub name: String,
    pub model: &'a Model,
    pub src_vocab: &'a Vocab,
    pub tgt_vocab: &'a Vocab,
}

/// Appends one `−NLL(hypothesis | source)` feature per scorer to every entry.
/// With `length_normalize` the value is divided by the number of predicted
/// tokens. Source sentences are indexed by entry id.
pub fn score_nbest(
    entries: &mut [NBestEntry],
    sources: &[Tokens],
    scorers: &[Scorer<'_>],
    length_normalize: bool,
    threads: usize,
) -> Result<()> {
    for e in entries.iter() {
        if e.id >= sources.len() {
            return Err(Error::CountMismatch(e.id + 1, sources.len()));
        }
    }
    for scorer in scorers {
        let values = parallel_map(entries, threads, |e| {
            let pair = SentencePair::encode(
                scorer.src_vocab,
                scorer.tgt_vocab,
                &sources[e.id],
                &e.hypothesis,
            );
            let nll = scorer.model.sentence_nll(&pair)?.0;
            Ok(if length_normalize {
                -nll / pair.predicted_len() as f64
            } else {
                -nll
            })
        })?;
        for (e, v) in entries.iter_mut().zip(values) {
            e.set_feature(&scorer.name, v);
        }
    }
    Ok(())
}
