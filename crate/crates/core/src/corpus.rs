//! Parallel (stripped, diacritized) corpora with a per-word evaluation mask.
//!
//! Words here are whitespace-separated tokens, the unit of evaluation and of
//! the on-disk mask files. On disk a corpus is three aligned UTF-8 files:
//! `<prefix>.strip.txt`, `<prefix>.gold.txt` and optionally
//! `<prefix>.mask.txt` holding space-separated `0`/`1` flags.

use std::ffi::OsString;
use std::fs;
use std::ops::Add;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::marks::{compose_canonical, fold_case, normalize_romanian, skeleton, strip_diacritics};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("entry {entry}: {stripped} stripped words, {gold} gold words, {mask} mask flags")]
    WordCount {
        entry: usize,
        stripped: usize,
        gold: usize,
        mask: usize,
    },
    #[error("entry {entry}, word {word}: gold {gold:?} is not a diacritization of {stripped:?}")]
    NotAligned {
        entry: usize,
        word: usize,
        stripped: String,
        gold: String,
    },
    #[error("{path}: line {line}: bad mask flag {flag:?}")]
    MaskFlag {
        path: PathBuf,
        line: usize,
        flag: String,
    },
    #[error("{path} has {found} lines, expected {expected}")]
    LineCount {
        path: PathBuf,
        found: usize,
        expected: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelEntry {
    pub stripped: String,
    pub gold: String,
    /// `true` = evaluate this word.
    pub mask: Vec<bool>,
}

impl ParallelEntry {
    /// Entry with all words evaluated and the stripped side derived from gold.
    pub fn from_gold(gold: impl Into<String>) -> Self {
        let gold = gold.into();
        let mask = vec![true; words(&gold).count()];
        Self {
            stripped: strip_diacritics(&gold),
            gold,
            mask,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MaskedParallelCorpus {
    provenance: String,
    entries: Vec<ParallelEntry>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub sentences: usize,
    pub words: usize,
    pub evaluated: usize,
}

impl Add for CorpusStats {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            sentences: self.sentences + rhs.sentences,
            words: self.words + rhs.words,
            evaluated: self.evaluated + rhs.evaluated,
        }
    }
}

pub fn words(sentence: &str) -> std::str::SplitWhitespace<'_> {
    sentence.split_whitespace()
}

impl MaskedParallelCorpus {
    /// Validating constructor: word counts must agree and every evaluated
    /// gold word must be a diacritization of its stripped word.
    pub fn new(provenance: impl Into<String>, entries: Vec<ParallelEntry>) -> Result<Self, CorpusError> {
        for (index, entry) in entries.iter().enumerate() {
            let stripped: Vec<&str> = words(&entry.stripped).collect();
            let gold: Vec<&str> = words(&entry.gold).collect();
            if stripped.len() != gold.len() || gold.len() != entry.mask.len() {
                return Err(CorpusError::WordCount {
                    entry: index,
                    stripped: stripped.len(),
                    gold: gold.len(),
                    mask: entry.mask.len(),
                });
            }
            for (word, ((s, g), keep)) in stripped.iter().zip(&gold).zip(&entry.mask).enumerate() {
                if *keep && skeleton(g) != fold_case(s) {
                    return Err(CorpusError::NotAligned {
                        entry: index,
                        word,
                        stripped: (*s).to_owned(),
                        gold: (*g).to_owned(),
                    });
                }
            }
        }
        Ok(Self {
            provenance: provenance.into(),
            entries,
        })
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn entries(&self) -> &[ParallelEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn gold_sentences(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.gold.as_str())
    }

    pub fn stripped_sentences(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.stripped.as_str())
    }

    pub fn stats(&self) -> CorpusStats {
        corpus_stats(self)
    }

    /// Writes the three-file representation next to `prefix`.
    pub fn write(&self, prefix: &Path) -> Result<(), CorpusError> {
        let [strip, gold, mask] = corpus_paths(prefix);
        let join = |f: &dyn Fn(&ParallelEntry) -> String| -> String {
            self.entries.iter().map(|e| f(e) + "\n").collect()
        };
        write_file(&strip, &join(&|e| e.stripped.clone()))?;
        write_file(&gold, &join(&|e| e.gold.clone()))?;
        write_file(
            &mask,
            &join(&|e| {
                e.mask
                    .iter()
                    .map(|&m| if m { "1" } else { "0" })
                    .collect::<Vec<_>>()
                    .join(" ")
            }),
        )
    }

    /// Reads aligned gold, optional stripped and optional mask files. Missing
    /// stripped text is derived from gold; a missing mask evaluates every word.
    /// Blank lines are kept so line numbers stay aligned with other files.
    pub fn read(
        gold_path: &Path,
        strip_path: Option<&Path>,
        mask_path: Option<&Path>,
        options: &IngestOptions,
    ) -> Result<Self, CorpusError> {
        let gold: Vec<String> = read_lines(gold_path)?.iter().map(|l| options.ingest(l)).collect();
        let stripped = match strip_path {
            Some(path) => {
                let lines: Vec<String> = read_lines(path)?.iter().map(|l| options.ingest(l)).collect();
                check_lines(path, lines.len(), gold.len())?;
                lines
            }
            None => gold.iter().map(|g| strip_diacritics(g)).collect(),
        };
        let masks = match mask_path {
            Some(path) => {
                let masks = read_masks(path)?;
                check_lines(path, masks.len(), gold.len())?;
                masks
            }
            None => gold.iter().map(|g| vec![true; words(g).count()]).collect(),
        };
        let entries = gold
            .into_iter()
            .zip(stripped)
            .zip(masks)
            .map(|((gold, stripped), mask)| ParallelEntry { stripped, gold, mask })
            .collect();
        Self::new(gold_path.display().to_string(), entries)
    }
}

/// `<prefix>.strip.txt`, `<prefix>.gold.txt`, `<prefix>.mask.txt`.
pub fn corpus_paths(prefix: &Path) -> [PathBuf; 3] {
    ["strip", "gold", "mask"].map(|kind| {
        let mut name = OsString::from(prefix.as_os_str());
        name.push(format!(".{kind}.txt"));
        PathBuf::from(name)
    })
}

pub fn corpus_stats(corpus: &MaskedParallelCorpus) -> CorpusStats {
    corpus
        .entries
        .iter()
        .map(|e| CorpusStats {
            sentences: 1,
            words: e.mask.len(),
            evaluated: e.mask.iter().filter(|&&m| m).count(),
        })
        .fold(CorpusStats::default(), Add::add)
}

/// Normalization applied to every line read from disk.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Skip canonical composition (for inspecting raw input).
    pub keep_composition: bool,
    /// Replace cedilla S/T by comma-below S/T.
    pub romanian: bool,
}

impl IngestOptions {
    pub fn for_language(lang: Option<&str>) -> Self {
        Self {
            keep_composition: false,
            romanian: matches!(lang, Some("ro" | "ron" | "rum")),
        }
    }

    pub fn ingest(&self, line: &str) -> String {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let composed = if self.keep_composition {
            line.to_owned()
        } else {
            compose_canonical(line)
        };
        if self.romanian {
            normalize_romanian(&composed)
        } else {
            composed
        }
    }
}

/// One entry per non-blank line of diacritized text, all words evaluated.
pub fn build_parallel(text: &str, options: &IngestOptions) -> MaskedParallelCorpus {
    let entries = text
        .lines()
        .map(|l| options.ingest(l))
        .filter(|l| !l.trim().is_empty())
        .map(ParallelEntry::from_gold)
        .collect();
    MaskedParallelCorpus {
        provenance: String::new(),
        entries,
    }
}

pub fn read_text(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    Ok(read_text(path)?.lines().map(str::to_owned).collect())
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CorpusError> {
    fs::write(path, contents).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })
}

fn check_lines(path: &Path, found: usize, expected: usize) -> Result<(), CorpusError> {
    if found == expected {
        Ok(())
    } else {
        Err(CorpusError::LineCount {
            path: path.to_owned(),
            found,
            expected,
        })
    }
}

pub fn read_masks(path: &Path) -> Result<Vec<Vec<bool>>, CorpusError> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(n, line)| {
            line.split_whitespace()
                .map(|flag| match flag {
                    "1" => Ok(true),
                    "0" => Ok(false),
                    other => Err(CorpusError::MaskFlag {
                        path: path.to_owned(),
                        line: n + 1,
                        flag: other.to_owned(),
                    }),
                })
                .collect()
        })
        .collect()
}
