//! Diacritization instructions: which marks to add at which character
//! positions of a token.
//!
//! An instruction is a list of `index:MARK` tuples, serialized as
//! `1:ACUTE;3:CARON`. The empty instruction is `<KEEP>`. Applying an
//! instruction that cannot be realized (index out of range, or no letter
//! exists for the base and mark) leaves the whole token unchanged.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::marks::{self, fold_char, DiacriticalMark};
use crate::tokenize::Segmenter;

pub const KEEP_TEXT: &str = "<KEEP>";

/// Identifier of an instruction inside an [`InstructionSet`].
pub type InstructionId = u32;

/// `<KEEP>` always has this id.
pub const KEEP_ID: InstructionId = 0;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Instruction {
    edits: Vec<(usize, DiacriticalMark)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignmentError {
    #[error("length mismatch: {stripped:?} has {stripped_len} characters, {diacritized:?} has {diacritized_len}")]
    Length {
        stripped: String,
        diacritized: String,
        stripped_len: usize,
        diacritized_len: usize,
    },
    #[error("base mismatch at character {index}: {stripped:?} vs {diacritized:?}")]
    Base {
        stripped: String,
        diacritized: String,
        index: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse instruction at offset {offset}: {reason}")]
pub struct ParseError {
    pub offset: usize,
    pub reason: String,
}

impl ParseError {
    fn new(offset: usize, reason: impl Into<String>) -> Self {
        Self {
            offset,
            reason: reason.into(),
        }
    }
}

impl Instruction {
    pub fn keep() -> Self {
        Self::default()
    }

    /// Builds an instruction from tuples; indices must be strictly increasing.
    pub fn new(edits: Vec<(usize, DiacriticalMark)>) -> Result<Self, ParseError> {
        for pair in edits.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(ParseError::new(
                    0,
                    format!("indices not strictly increasing: {} then {}", pair[0].0, pair[1].0),
                ));
            }
        }
        Ok(Self { edits })
    }

    pub fn is_keep(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn edits(&self) -> &[(usize, DiacriticalMark)] {
        &self.edits
    }

    /// Moves every index by `offset`, as when a word-level instruction is
    /// split over subwords.
    pub fn shifted(&self, offset: isize) -> Option<Self> {
        let edits = self
            .edits
            .iter()
            .map(|(i, m)| Some((i.checked_add_signed(offset)?, m.clone())))
            .collect::<Option<Vec<_>>>()?;
        Some(Self { edits })
    }

    /// Applies the instruction, or returns `token` unchanged if any tuple is
    /// impossible.
    pub fn apply(&self, token: &str) -> String {
        if self.is_keep() {
            return token.to_owned();
        }
        let mut chars: Vec<char> = token.chars().collect();
        for (index, mark) in &self.edits {
            let Some(c) = chars.get(*index) else {
                return token.to_owned();
            };
            match marks::compose(*c, mark) {
                Some(composed) => chars[*index] = composed,
                None => return token.to_owned(),
            }
        }
        chars.into_iter().collect()
    }

    /// Instruction that turns `stripped` into `diacritized`, ignoring case.
    pub fn derive(stripped: &str, diacritized: &str) -> Result<Self, AlignmentError> {
        let s: Vec<char> = stripped.chars().collect();
        let d: Vec<char> = diacritized.chars().collect();
        if s.len() != d.len() {
            return Err(AlignmentError::Length {
                stripped: stripped.to_owned(),
                diacritized: diacritized.to_owned(),
                stripped_len: s.len(),
                diacritized_len: d.len(),
            });
        }
        let mut edits = Vec::new();
        for (index, (&sc, &dc)) in s.iter().zip(&d).enumerate() {
            let sc = fold_char(sc);
            if fold_char(dc) == sc {
                continue;
            }
            match marks::decompose(dc) {
                Some((base, mark)) if fold_char(base) == sc => edits.push((index, mark.clone())),
                _ => {
                    return Err(AlignmentError::Base {
                        stripped: stripped.to_owned(),
                        diacritized: diacritized.to_owned(),
                        index,
                    })
                }
            }
        }
        Ok(Self { edits })
    }
}

pub fn derive_instruction(stripped: &str, diacritized: &str) -> Result<Instruction, AlignmentError> {
    Instruction::derive(stripped, diacritized)
}

pub fn apply_instruction(token: &str, instruction: &Instruction) -> String {
    instruction.apply(token)
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_keep() {
            return f.write_str(KEEP_TEXT);
        }
        for (n, (index, mark)) in self.edits.iter().enumerate() {
            if n > 0 {
                f.write_str(";")?;
            }
            write!(f, "{index}:{mark}")?;
        }
        Ok(())
    }
}

impl FromStr for Instruction {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == KEEP_TEXT {
            return Ok(Self::keep());
        }
        if s.is_empty() {
            return Err(ParseError::new(0, "empty instruction"));
        }
        let mut edits: Vec<(usize, DiacriticalMark)> = Vec::new();
        let mut offset = 0;
        for group in s.split(';') {
            let (index, mark) = group
                .split_once(':')
                .ok_or_else(|| ParseError::new(offset, "expected `<index>:<MARK>`"))?;
            if index.is_empty() || !index.bytes().all(|b| b.is_ascii_digit()) {
                return Err(ParseError::new(offset, format!("bad index {index:?}")));
            }
            let index: usize = index
                .parse()
                .map_err(|_| ParseError::new(offset, format!("index {index:?} out of range")))?;
            let mark_offset = offset + group.len() - mark.len();
            if mark.is_empty() {
                return Err(ParseError::new(mark_offset, "missing mark name"));
            }
            let mark = DiacriticalMark::new(mark)
                .map_err(|e| ParseError::new(mark_offset, e.to_string()))?;
            if let Some((last, _)) = edits.last() {
                if *last >= index {
                    return Err(ParseError::new(offset, "indices not strictly increasing"));
                }
            }
            edits.push((index, mark));
            offset += group.len() + 1;
        }
        Ok(Self { edits })
    }
}

/// Occurrence counts of derived instructions. Merging is associative and
/// commutative, so counts may be gathered in parallel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InstructionCounts {
    counts: HashMap<Instruction, u64>,
}

impl InstructionCounts {
    pub fn add(&mut self, instruction: Instruction) {
        *self.counts.entry(instruction).or_insert(0) += 1;
    }

    pub fn merge(mut self, other: Self) -> Self {
        for (instruction, n) in other.counts {
            *self.counts.entry(instruction).or_insert(0) += n;
        }
        self
    }

    pub fn get(&self, instruction: &Instruction) -> u64 {
        self.counts.get(instruction).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Counts the instructions of every token of one diacritized sentence.
    pub fn add_sentence(
        &mut self,
        diacritized: &str,
        segmenter: &Segmenter,
    ) -> Result<(), AlignmentError> {
        let stripped = marks::strip_diacritics(diacritized);
        self.add_pair(&stripped, diacritized, segmenter)
    }

    /// Counts instructions of an aligned (stripped, diacritized) sentence pair.
    /// Nothing is counted when any token fails to align.
    pub fn add_pair(
        &mut self,
        stripped: &str,
        diacritized: &str,
        segmenter: &Segmenter,
    ) -> Result<(), AlignmentError> {
        let found = sentence_instructions(stripped, diacritized, segmenter)?;
        for instruction in found {
            self.add(instruction);
        }
        Ok(())
    }
}

/// Instruction of every token of the sentence pair, in token order.
pub fn sentence_instructions(
    stripped: &str,
    diacritized: &str,
    segmenter: &Segmenter,
) -> Result<Vec<Instruction>, AlignmentError> {
    let gold: Vec<char> = diacritized.chars().collect();
    let n_stripped = stripped.chars().count();
    if gold.len() != n_stripped {
        return Err(AlignmentError::Length {
            stripped: stripped.to_owned(),
            diacritized: diacritized.to_owned(),
            stripped_len: n_stripped,
            diacritized_len: gold.len(),
        });
    }
    segmenter
        .segment(stripped)
        .tokens
        .iter()
        .map(|token| {
            let target: String = gold[token.span.clone()].iter().collect();
            Instruction::derive(&token.surface, &target)
        })
        .collect()
}

/// Why one sentence was left out of extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedSentence {
    pub index: usize,
    pub error: AlignmentError,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractionReport {
    pub sentences: usize,
    pub tokens: u64,
    pub distinct_instructions: usize,
    pub skipped: Vec<SkippedSentence>,
}

/// The classifier's label vocabulary: instructions seen at least `min_count`
/// times, plus `<KEEP>`, with dense ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionSet {
    entries: Vec<(Instruction, u64)>,
    ids: HashMap<Instruction, InstructionId>,
    min_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("instruction set line {line}: {reason}")]
pub struct InstructionSetFormatError {
    pub line: usize,
    pub reason: String,
}

pub const INSTRUCTION_SET_MAGIC: &str = "#diacrit-instrset v1";

impl InstructionSet {
    /// Keeps `<KEEP>` and every instruction counted at least `min_count`
    /// times. `<KEEP>` gets id 0; the rest are ordered by descending count,
    /// ties broken by serialized form.
    pub fn from_counts(counts: &InstructionCounts, min_count: u64) -> Self {
        let keep = Instruction::keep();
        let mut retained: Vec<(String, &Instruction, u64)> = counts
            .counts
            .iter()
            .filter(|(i, &n)| !i.is_keep() && n >= min_count)
            .map(|(i, &n)| (i.to_string(), i, n))
            .collect();
        retained.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
        let mut entries = vec![(keep.clone(), counts.get(&keep))];
        entries.extend(retained.into_iter().map(|(_, i, n)| (i.clone(), n)));
        Self::from_entries(entries, min_count)
    }

    fn from_entries(entries: Vec<(Instruction, u64)>, min_count: u64) -> Self {
        let ids = entries
            .iter()
            .enumerate()
            .map(|(id, (i, _))| (i.clone(), id as InstructionId))
            .collect();
        Self {
            entries,
            ids,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn id_of(&self, instruction: &Instruction) -> Option<InstructionId> {
        self.ids.get(instruction).copied()
    }

    pub fn instruction(&self, id: InstructionId) -> Option<&Instruction> {
        self.entries.get(id as usize).map(|(i, _)| i)
    }

    pub fn count(&self, id: InstructionId) -> Option<u64> {
        self.entries.get(id as usize).map(|(_, n)| *n)
    }

    pub fn contains(&self, instruction: &Instruction) -> bool {
        self.ids.contains_key(instruction)
    }

    pub fn iter(&self) -> impl Iterator<Item = (InstructionId, &Instruction, u64)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(id, (i, n))| (id as InstructionId, i, *n))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{INSTRUCTION_SET_MAGIC} min_count={}\n", self.min_count);
        for (id, instruction, count) in self.iter() {
            out.push_str(&format!("{id}\t{instruction}\t{count}\n"));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, InstructionSetFormatError> {
        let err = |line: usize, reason: String| InstructionSetFormatError { line, reason };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let min_count = header
            .strip_prefix(INSTRUCTION_SET_MAGIC)
            .and_then(|rest| rest.strip_prefix(" min_count="))
            .and_then(|k| k.parse::<u64>().ok())
            .ok_or_else(|| err(1, format!("bad header {header:?}")))?;
        let mut entries = Vec::new();
        for (n, line) in lines {
            let line_no = n + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, instruction, count] = fields[..] else {
                return Err(err(line_no, format!("expected 3 fields, got {}", fields.len())));
            };
            let id: usize = id
                .parse()
                .map_err(|_| err(line_no, format!("bad id {id:?}")))?;
            if id != entries.len() {
                return Err(err(line_no, format!("id {id} out of sequence")));
            }
            let instruction: Instruction = instruction
                .parse()
                .map_err(|e: ParseError| err(line_no, e.to_string()))?;
            let count: u64 = count
                .parse()
                .map_err(|_| err(line_no, format!("bad count {count:?}")))?;
            entries.push((instruction, count));
        }
        match entries.first() {
            Some((first, _)) if first.is_keep() => {}
            _ => return Err(err(2, "first entry must be <KEEP>".into())),
        }
        let set = Self::from_entries(entries, min_count);
        if set.ids.len() != set.entries.len() {
            return Err(err(2, "duplicate instruction".into()));
        }
        Ok(set)
    }
}

/// Counts instructions over `corpus` (diacritized sentences) and keeps those
/// seen at least `min_count` times.
pub fn extract_instruction_set<S: AsRef<str> + Sync>(
    corpus: &[S],
    min_count: u64,
    segmenter: &Segmenter,
) -> (InstructionSet, ExtractionReport) {
    use rayon::prelude::*;

    let (counts, skipped, tokens) = corpus
        .par_iter()
        .enumerate()
        .fold(
            || (InstructionCounts::default(), Vec::new(), 0u64),
            |(mut counts, mut skipped, mut tokens), (index, sentence)| {
                let sentence = sentence.as_ref();
                let stripped = marks::strip_diacritics(sentence);
                match sentence_instructions(&stripped, sentence, segmenter) {
                    Ok(found) => {
                        tokens += found.len() as u64;
                        found.into_iter().for_each(|i| counts.add(i));
                    }
                    Err(error) => skipped.push(SkippedSentence { index, error }),
                }
                (counts, skipped, tokens)
            },
        )
        .reduce(
            || (InstructionCounts::default(), Vec::new(), 0u64),
            |(ca, mut sa, ta), (cb, sb, tb)| {
                sa.extend(sb);
                (ca.merge(cb), sa, ta + tb)
            },
        );
    let mut skipped = skipped;
    skipped.sort_by_key(|s| s.index);
    let set = InstructionSet::from_counts(&counts, min_count);
    let report = ExtractionReport {
        sentences: corpus.len(),
        tokens,
        distinct_instructions: counts.len(),
        skipped,
    };
    (set, report)
}
