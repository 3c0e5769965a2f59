use std::collections::HashMap;
use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics for BLEU-4. Additive across sentences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    /// Clipped n-gram matches for n = 1..=4.
    pub matches: [usize; MAX_ORDER],
    /// Candidate n-gram counts for n = 1..=4.
    pub totals: [usize; MAX_ORDER],
    pub candidate_len: usize,
    pub reference_len: usize,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let key: Vec<&str> = w.iter().map(AsRef::as_ref).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    pub fn sentence<S: AsRef<str>, R: AsRef<str>>(candidate: &[S], reference: &[R]) -> Self {
        let mut stats = BleuStats {
            candidate_len: candidate.len(),
            reference_len: reference.len(),
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let cand = ngram_counts(candidate, n);
            let refs = ngram_counts(reference, n);
            stats.totals[n - 1] = candidate.len().saturating_sub(n - 1);
            stats.matches[n - 1] = cand
                .iter()
                .map(|(g, c)| (*c).min(refs.get(g).copied().unwrap_or(0)))
                .sum();
        }
        stats
    }

    fn brevity_penalty(&self) -> f64 {
        if self.candidate_len == 0 {
            return 0.0;
        }
        (1.0 - self.reference_len as f64 / self.candidate_len as f64)
            .min(0.0)
            .exp()
    }

    /// Unsmoothed BLEU-4. An order with no candidate n-grams contributes a
    /// precision of 1; any order with candidates but no matches gives 0.
    pub fn bleu(&self) -> f64 {
        if self.candidate_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 0..MAX_ORDER {
            if self.totals[n] == 0 {
                continue;
            }
            if self.matches[n] == 0 {
                return 0.0;
            }
            log_sum += (self.matches[n] as f64 / self.totals[n] as f64).ln();
        }
        self.brevity_penalty() * (log_sum / MAX_ORDER as f64).exp()
    }

    /// Add-one smoothed BLEU for orders above one; meant for sentence-level
    /// scores where higher-order matches are often absent.
    pub fn smoothed_bleu(&self) -> f64 {
        if self.candidate_len == 0 || self.matches[0] == 0 {
            return 0.0;
        }
        let mut log_sum = (self.matches[0] as f64 / self.totals[0] as f64).ln();
        for n in 1..MAX_ORDER {
            log_sum += ((self.matches[n] + 1) as f64 / (self.totals[n] + 1) as f64).ln();
        }
        self.brevity_penalty() * (log_sum / MAX_ORDER as f64).exp()
    }
}

impl AddAssign for BleuStats {
    fn add_assign(&mut self, o: BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.candidate_len += o.candidate_len;
        self.reference_len += o.reference_len;
    }
}

impl Add for BleuStats {
    type Output = BleuStats;
    fn add(mut self, o: BleuStats) -> BleuStats {
        self += o;
        self
    }
}

pub fn corpus_stats<S: AsRef<str>, R: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<R>],
) -> Result<BleuStats> {
    if candidates.len() != references.len() {
        return Err(Error::CountMismatch(candidates.len(), references.len()));
    }
    Ok(candidates
        .iter()
        .zip(references)
        .map(|(c, r)| BleuStats::sentence(c, r))
        .fold(BleuStats::default(), Add::add))
}

/// Corpus-level BLEU-4 with brevity penalty, no smoothing.
pub fn corpus_bleu<S: AsRef<str>, R: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<R>],
) -> Result<f64> {
    Ok(corpus_stats(candidates, references)?.bleu())
}

/// Smoothed sentence-level BLEU, used for oracle features.
pub fn sentence_bleu_smoothed<S: AsRef<str>, R: AsRef<str>>(
    candidate: &[S],
    reference: &[R],
) -> f64 {
    BleuStats::sentence(candidate, reference).smoothed_bleu()
}
