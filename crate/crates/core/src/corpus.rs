//! Parallel corpora, vocabularies and sentinel-wrapped id sequences.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// A sentence as whitespace-separated tokens.
pub type Tokens = Vec<String>;

/// Token/id mapping with reserved sentinel and unknown ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocab {
    pub const BOS_ID: usize = 0;
    pub const EOS_ID: usize = 1;
    pub const UNK_ID: usize = 2;
    const RESERVED: [&'static str; 3] = [BOS, EOS, UNK];

    /// Counts raw tokens, keeps those seen at least `min_freq` times.
    ///
    /// Ids after the reserved ones are assigned by descending count, then
    /// lexicographically, so the result does not depend on hash order.
    pub fn build<'a, I>(sequences: I, min_freq: usize) -> Result<Vocab>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        if min_freq == 0 {
            return Err(Error::InvalidConfig("min_freq must be at least 1".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut total = 0usize;
        for seq in sequences {
            for tok in seq {
                *counts.entry(tok.as_str()).or_default() += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::EmptyCorpus);
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq && !Self::RESERVED.contains(t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Ok(Self::from_tokens(
            Self::RESERVED
                .iter()
                .copied()
                .chain(kept.into_iter().map(|(t, _)| t))
                .map(str::to_string)
                .collect(),
        ))
    }

    fn from_tokens(tokens: Vec<String>) -> Vocab {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { index, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Wraps the sentence as `<s> tokens </s>`, mapping unknowns to `<unk>`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        let mut ids = Vec::with_capacity(tokens.len() + 2);
        ids.push(Self::BOS_ID);
        ids.extend(tokens.iter().map(|t| self.id(t.as_ref())));
        ids.push(Self::EOS_ID);
        ids
    }

    /// Inverse of [`Vocab::encode`]: drops the sentinels.
    pub fn decode(&self, ids: &[usize]) -> Tokens {
        ids.iter()
            .filter(|&&id| id != Self::BOS_ID && id != Self::EOS_ID)
            .map(|&id| self.token(id).unwrap_or(UNK).to_string())
            .collect()
    }

    /// One token per line; line number (from zero) is the id. The first
    /// three lines are the reserved tokens.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Vocab> {
        let mut tokens = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let tok = line.trim();
            if tok.is_empty() || tok.split_whitespace().count() != 1 {
                return Err(Error::VocabFormat {
                    line: n + 1,
                    msg: format!("expected one token, got {line:?}"),
                });
            }
            tokens.push(tok.to_string());
        }
        for (i, reserved) in Self::RESERVED.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*reserved) {
                return Err(Error::VocabFormat {
                    line: i + 1,
                    msg: format!("expected reserved token {reserved}"),
                });
            }
        }
        let vocab = Self::from_tokens(tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(Error::VocabFormat {
                line: 0,
                msg: "duplicate token".into(),
            });
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vocab> {
        let file = fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

/// Source and target ids, both wrapped in sentinels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl SentencePair {
    pub fn new(source: Vec<usize>, target: Vec<usize>) -> Result<Self> {
        if source.len() < 2 || target.len() < 2 {
            return Err(Error::InvalidConfig(
                "sentence pairs need at least the two sentinels per side".into(),
            ));
        }
        Ok(SentencePair { source, target })
    }

    pub fn encode(
        src_vocab: &Vocab,
        tgt_vocab: &Vocab,
        source: &[String],
        target: &[String],
    ) -> Self {
        SentencePair {
            source: src_vocab.encode(source),
            target: tgt_vocab.encode(target),
        }
    }

    /// The pair seen from the other translation direction.
    pub fn reversed(&self) -> SentencePair {
        SentencePair {
            source: self.target.clone(),
            target: self.source.clone(),
        }
    }

    /// Number of target tokens the decoder predicts (everything after `<s>`).
    pub fn predicted_len(&self) -> usize {
        self.target.len() - 1
    }
}

/// Encodes raw token pairs with the given vocabularies.
pub fn encode_corpus(
    src_vocab: &Vocab,
    tgt_vocab: &Vocab,
    raw: &[(Tokens, Tokens)],
) -> Vec<SentencePair> {
    raw.iter()
        .map(|(s, t)| SentencePair::encode(src_vocab, tgt_vocab, s, t))
        .collect()
}

/// Builds source and target vocabularies from a raw parallel corpus.
pub fn build_vocabs(raw: &[(Tokens, Tokens)], min_freq: usize) -> Result<(Vocab, Vocab)> {
    let src = Vocab::build(raw.iter().map(|(s, _)| s.as_slice()), min_freq)?;
    let tgt = Vocab::build(raw.iter().map(|(_, t)| t.as_slice()), min_freq)?;
    Ok((src, tgt))
}

/// Reads a whitespace-tokenized text file, one non-empty sentence per line.
pub fn load_sentences(path: impl AsRef<Path>) -> Result<Vec<Tokens>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let mut lines: Vec<&[u8]> = bytes.split(|b| *b == b'\n').collect();
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines
        .into_iter()
        .enumerate()
        .map(|(n, raw)| {
            let text = std::str::from_utf8(raw).map_err(|_| Error::InvalidUtf8 {
                path: path.to_path_buf(),
                line: n + 1,
            })?;
            let tokens: Tokens = text.split_whitespace().map(str::to_string).collect();
            if tokens.is_empty() {
                return Err(Error::EmptyLine {
                    path: path.to_path_buf(),
                    line: n + 1,
                });
            }
            Ok(tokens)
        })
        .collect()
}

/// Loads a sentence-aligned parallel corpus, pairs in file order.
pub fn load_parallel(
    src_path: impl AsRef<Path>,
    tgt_path: impl AsRef<Path>,
) -> Result<Vec<(Tokens, Tokens)>> {
    let src = load_sentences(src_path)?;
    let tgt = load_sentences(tgt_path)?;
    if src.len() != tgt.len() {
        return Err(Error::LineCountMismatch {
            source_lines: src.len(),
            target_lines: tgt.len(),
        });
    }
    Ok(src.into_iter().zip(tgt).collect())
}
