//! M2 error-correction annotations and their conversion into diacritization
//! targets.
//!
//! Only edits that change diacritics or casing are applied to build the gold
//! side. Every other edit is left unapplied and the words it covers are
//! masked out of evaluation, so they still serve as (noisy) context.

use thiserror::Error;

use crate::corpus::{MaskedParallelCorpus, ParallelEntry};
use crate::marks::{skeleton, strip_diacritics};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("M2 line {line}: {reason}")]
pub struct M2FormatError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edit {
    /// Token range `[start, end)`; `None` for the `-1 -1` noop edit.
    pub span: Option<(usize, usize)>,
    pub kind: String,
    /// Replacement tokens; empty for deletions (`-NONE-` or blank).
    pub correction: Vec<String>,
    pub required: String,
    pub comment: String,
    pub annotator: u32,
    /// 1-based line of the `A` line in the source text.
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct M2Sentence {
    pub tokens: Vec<String>,
    pub edits: Vec<Edit>,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct M2Document {
    pub sentences: Vec<M2Sentence>,
}

impl M2Document {
    pub fn annotators(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .sentences
            .iter()
            .flat_map(|s| s.edits.iter().map(|e| e.annotator))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditClass {
    DiacriticOrCasing,
    Other,
}

fn format_error(line: usize, reason: impl Into<String>) -> M2FormatError {
    M2FormatError {
        line,
        reason: reason.into(),
    }
}

pub fn parse_m2(text: &str) -> Result<M2Document, M2FormatError> {
    let mut doc = M2Document::default();
    let mut current: Option<M2Sentence> = None;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            doc.sentences.extend(current.take());
            continue;
        }
        if let Some(rest) = line.strip_prefix("S ").or(if line == "S" { Some("") } else { None }) {
            doc.sentences.extend(current.take());
            current = Some(M2Sentence {
                tokens: rest.split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect(),
                edits: Vec::new(),
                line: line_no,
            });
        } else if let Some(rest) = line.strip_prefix("A ") {
            let sentence = current
                .as_mut()
                .ok_or_else(|| format_error(line_no, "annotation before any S line"))?;
            let edit = parse_edit(rest, line_no, sentence.tokens.len())?;
            sentence.edits.push(edit);
        } else {
            return Err(format_error(line_no, "expected an `S` or `A` line"));
        }
    }
    doc.sentences.extend(current);
    Ok(doc)
}

fn parse_edit(rest: &str, line: usize, n_tokens: usize) -> Result<Edit, M2FormatError> {
    let fields: Vec<&str> = rest.split("|||").collect();
    let [span, kind, correction, required, comment, annotator] = fields[..] else {
        return Err(format_error(line, format!("expected 6 `|||`-separated fields, got {}", fields.len())));
    };
    let (start, end) = span
        .split_once(' ')
        .ok_or_else(|| format_error(line, format!("bad span {span:?}")))?;
    let parse_index = |s: &str| {
        s.trim()
            .parse::<i64>()
            .map_err(|_| format_error(line, format!("non-numeric token index {s:?}")))
    };
    let (start, end) = (parse_index(start)?, parse_index(end)?);
    let span = match (start, end) {
        (-1, -1) => None,
        (s, e) if 0 <= s && s <= e && e as usize <= n_tokens => Some((s as usize, e as usize)),
        (s, e) => {
            return Err(format_error(
                line,
                format!("span {s} {e} outside sentence of {n_tokens} tokens"),
            ))
        }
    };
    let correction = match correction.trim() {
        "-NONE-" | "" => Vec::new(),
        c => c.split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect(),
    };
    let annotator = annotator
        .trim()
        .parse()
        .map_err(|_| format_error(line, format!("bad annotator id {annotator:?}")))?;
    Ok(Edit {
        span,
        kind: kind.to_owned(),
        correction,
        required: required.to_owned(),
        comment: comment.to_owned(),
        annotator,
        line,
    })
}

/// Diacritics/casing edits keep the token count and the case-folded,
/// diacritics-free form of every token. The M2 type label is not consulted.
pub fn classify_edit<S: AsRef<str>, T: AsRef<str>>(source: &[S], correction: &[T]) -> EditClass {
    let same = source.len() == correction.len()
        && source
            .iter()
            .zip(correction)
            .all(|(s, c)| skeleton(s.as_ref()) == skeleton(c.as_ref()));
    if same {
        EditClass::DiacriticOrCasing
    } else {
        EditClass::Other
    }
}

/// Builds gold targets from one annotator's edits. Sentences without edits
/// by that annotator pass through unchanged.
pub fn realize_targets(doc: &M2Document, annotator: u32) -> Result<MaskedParallelCorpus, M2FormatError> {
    let entries = doc
        .sentences
        .iter()
        .map(|s| realize_sentence(s, annotator))
        .collect::<Result<Vec<_>, _>>()?;
    MaskedParallelCorpus::new(format!("m2:annotator={annotator}"), entries)
        .map_err(|e| format_error(0, e.to_string()))
}

fn realize_sentence(sentence: &M2Sentence, annotator: u32) -> Result<ParallelEntry, M2FormatError> {
    let mut edits: Vec<(&Edit, (usize, usize))> = sentence
        .edits
        .iter()
        .filter(|e| e.annotator == annotator)
        .filter_map(|e| e.span.map(|span| (e, span)))
        .collect();
    edits.sort_by_key(|(_, span)| *span);
    for pair in edits.windows(2) {
        let ((_, first), (second, span)) = (pair[0], pair[1]);
        if span.0 < first.1 {
            return Err(format_error(
                second.line,
                format!(
                    "edit {}-{} overlaps edit {}-{} of annotator {annotator}",
                    span.0, span.1, first.0, first.1
                ),
            ));
        }
    }

    let mut gold = sentence.tokens.clone();
    let mut mask = vec![true; gold.len()];
    for (edit, (start, end)) in edits {
        let source = &sentence.tokens[start..end];
        match classify_edit(source, &edit.correction) {
            EditClass::DiacriticOrCasing => {
                gold[start..end].clone_from_slice(&edit.correction);
            }
            EditClass::Other if start == end => {
                // Insertion: mask the neighbours of the insertion point.
                for i in [start.checked_sub(1), Some(start)].into_iter().flatten() {
                    if let Some(m) = mask.get_mut(i) {
                        *m = false;
                    }
                }
            }
            EditClass::Other => mask[start..end].iter_mut().for_each(|m| *m = false),
        }
    }
    let gold = gold.join(" ");
    Ok(ParallelEntry {
        stripped: strip_diacritics(&gold),
        gold,
        mask,
    })
}
