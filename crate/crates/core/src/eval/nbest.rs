//! N-best lists, linear re-ranking and grid-based weight tuning.
//!
//! File format, one entry per line:
//!
//! ```text
//! id ||| hypothesis tokens ||| name=value name=value ||| score
//! ```
//!
//! `id` is the 0-based index of the source sentence; entries of one sentence
//! are contiguous and listed best-first by the system that produced them.

use std::fmt;
use std::io::{BufRead, Write};

use super::bleu::corpus_bleu;
use crate::corpus::Tokens;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct NBestEntry {
    pub id: usize,
    pub hypothesis: Tokens,
    pub features: Vec<(String, f64)>,
    pub score: f64,
}

impl NBestEntry {
    pub fn feature(&self, name: &str) -> Option<f64> {
        self.features
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn set_feature(&mut self, name: &str, value: f64) {
        match self.features.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.features.push((name.to_string(), value)),
        }
    }

    fn parse(line_no: usize, line: &str) -> Result<Self> {
        let bad = |msg: String| Error::NBestFormat { line: line_no, msg };
        let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
        if fields.len() != 4 {
            return Err(bad(format!(
                "expected 4 `|||`-separated fields, found {}",
                fields.len()
            )));
        }
        let id = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad sentence id `{}`", fields[0])))?;
        let hypothesis = fields[1].split_whitespace().map(str::to_string).collect();
        let features = fields[2]
            .split_whitespace()
            .map(|kv| {
                let (name, value) = kv
                    .split_once('=')
                    .ok_or_else(|| bad(format!("feature `{kv}` is not name=value")))?;
                let value: f64 = value
                    .parse()
                    .map_err(|_| bad(format!("feature `{name}` has bad value `{value}`")))?;
                if name.is_empty() || !value.is_finite() {
                    return Err(bad(format!("invalid feature `{kv}`")));
                }
                Ok((name.to_string(), value))
            })
            .collect::<Result<Vec<_>>>()?;
        let score: f64 = fields[3]
            .parse()
            .map_err(|_| bad(format!("bad score `{}`", fields[3])))?;
        Ok(NBestEntry {
            id,
            hypothesis,
            features,
            score,
        })
    }
}

impl fmt::Display for NBestEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let feats: Vec<String> = self
            .features
            .iter()
            .map(|(n, v)| format!("{n}={v}"))
            .collect();
        write!(
            f,
            "{} ||| {} ||| {} ||| {}",
            self.id,
            self.hypothesis.join(" "),
            feats.join(" "),
            self.score
        )
    }
}

pub fn read_nbest(r: impl BufRead) -> Result<Vec<NBestEntry>> {
    let mut entries: Vec<NBestEntry> = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = NBestEntry::parse(n + 1, &line)?;
        if let Some(prev) = entries.last() {
            if entry.id < prev.id {
                return Err(Error::NBestFormat {
                    line: n + 1,
                    msg: format!("sentence id {} after {}", entry.id, prev.id),
                });
            }
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn write_nbest(entries: &[NBestEntry], mut w: impl Write) -> Result<()> {
    for e in entries {
        writeln!(w, "{e}")?;
    }
    Ok(())
}

/// Groups entry indices by sentence id, in file order.
pub fn group_by_sentence(entries: &[NBestEntry]) -> Vec<(usize, Vec<usize>)> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        match groups.last_mut() {
            Some((id, members)) if *id == e.id => members.push(i),
            _ => groups.push((e.id, vec![i])),
        }
    }
    groups
}

/// Linear model weights, kept in a fixed feature order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Weights(pub Vec<(String, f64)>);

impl Weights {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn set(&mut self, name: &str, value: f64) {
        match self.0.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.0.push((name.to_string(), value)),
        }
    }

    pub fn scaled(&self, factor: f64) -> Weights {
        Weights(
            self.0
                .iter()
                .map(|(n, v)| (n.clone(), v * factor))
                .collect(),
        )
    }

    /// `name value` lines.
    pub fn read_from(r: impl BufRead) -> Result<Weights> {
        let mut w = Weights::default();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                [] => continue,
                [name, value] => {
                    let v: f64 = value.parse().map_err(|_| {
                        Error::InvalidConfig(format!("weights line {}: bad value `{value}`", n + 1))
                    })?;
                    w.set(name, v);
                }
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "weights line {}: expected `name value`",
                        n + 1
                    )))
                }
            }
        }
        Ok(w)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        for (n, v) in &self.0 {
            writeln!(w, "{n} {v}")?;
        }
        Ok(())
    }

    fn score(&self, entry: &NBestEntry) -> Result<f64> {
        let mut s = 0.0;
        for (name, w) in &self.0 {
            let v = entry.feature(name).ok_or_else(|| Error::MissingFeature {
                sentence: entry.id,
                name: name.clone(),
            })?;
            s += w * v;
        }
        Ok(s)
    }
}

/// Index of the highest-scoring entry for each sentence, in sentence order.
/// Ties keep the earlier (better-ranked) entry.
pub fn rerank(entries: &[NBestEntry], weights: &Weights) -> Result<Vec<usize>> {
    group_by_sentence(entries)
        .into_iter()
        .map(|(_, members)| {
            let mut best = members[0];
            let mut best_score = weights.score(&entries[best])?;
            for &i in &members[1..] {
                let s = weights.score(&entries[i])?;
                if s > best_score {
                    best = i;
                    best_score = s;
                }
            }
            Ok(best)
        })
        .collect()
}

/// Candidate values searched for each weight.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    /// Features to tune; `None` means every feature of the first entry.
    pub features: Option<Vec<String>>,
    pub values: Vec<f64>,
    /// Upper bound on coordinate-ascent sweeps.
    pub max_passes: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            features: None,
            values: vec![-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0],
            max_passes: 10,
        }
    }
}

/// Corpus BLEU of the re-ranked 1-best against `references[id]`.
pub fn rerank_bleu(
    entries: &[NBestEntry],
    references: &[Tokens],
    weights: &Weights,
) -> Result<f64> {
    let picks = rerank(entries, weights)?;
    let mut cands = Vec::with_capacity(picks.len());
    let mut refs = Vec::with_capacity(picks.len());
    for i in picks {
        let id = entries[i].id;
        let r = references
            .get(id)
            .ok_or(Error::CountMismatch(id + 1, references.len()))?;
        cands.push(entries[i].hypothesis.clone());
        refs.push(r.clone());
    }
    corpus_bleu(&cands, &refs)
}

/// Coordinate ascent over a grid, maximizing dev BLEU of the re-ranked output.
///
/// Every weight starts at the grid value closest to zero, so with `0.0` in
/// the grid the starting point reproduces the original 1-best and the result
/// never scores below it. Features are visited in a fixed order, values in
/// grid order, and only strict improvements are taken.
pub fn tune_weights(
    entries: &[NBestEntry],
    references: &[Tokens],
    grid: &GridSpec,
) -> Result<Weights> {
    if grid.values.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let names: Vec<String> = match &grid.features {
        Some(f) => f.clone(),
        None => entries
            .first()
            .map(|e| e.features.iter().map(|(n, _)| n.clone()).collect())
            .unwrap_or_default(),
    };
    let start = grid.values.iter().copied().fold(grid.values[0], |best, v| {
        if v.abs() < best.abs() {
            v
        } else {
            best
        }
    });
    let mut weights = Weights(names.iter().map(|n| (n.clone(), start)).collect());
    let mut best = rerank_bleu(entries, references, &weights)?;
    for _ in 0..grid.max_passes.max(1) {
        let mut improved = false;
        for name in &names {
            let current = weights.get(name).expect("tuned feature");
            let mut best_value = current;
            for &v in &grid.values {
                if v == current {
                    continue;
                }
                weights.set(name, v);
                let bleu = rerank_bleu(entries, references, &weights)?;
                if bleu > best {
                    best = bleu;
                    best_value = v;
                    improved = true;
                }
            }
            weights.set(name, best_value);
        }
        if !improved {
            break;
        }
    }
    Ok(weights)
}
