//! Word tokenization, greedy longest-match subword segmentation and splicing
//! restored tokens back into running text.
//!
//! Spans are character offsets into the sentence, so whitespace and any text
//! between tokens survive a tokenize/detokenize round trip unchanged.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::ops::Range;

use thiserror::Error;

use crate::marks::{fold_char, strip_diacritics};

/// Marker written in front of continuation subwords in files and on the
/// external-scorer wire. Never part of a token's characters.
pub const CONTINUATION_MARKER: &str = "##";

pub const VOCAB_MAGIC: &str = "#diacrit-vocab v1";

pub const DEFAULT_VOCAB_SIZE: usize = 8000;

const DEFAULT_MAX_PIECE: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub is_continuation: bool,
    /// Character offsets into the source sentence.
    pub span: Range<usize>,
}

impl Token {
    /// Wire form: the surface, prefixed with `##` for continuations.
    pub fn display_form(&self) -> String {
        if self.is_continuation {
            format!("{CONTINUATION_MARKER}{}", self.surface)
        } else {
            self.surface.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenizedSentence {
    pub tokens: Vec<Token>,
}

impl TokenizedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpanError {
    #[error("span {second:?} overlaps preceding span {first:?}")]
    Overlap {
        first: Range<usize>,
        second: Range<usize>,
    },
    #[error("span {span:?} exceeds sentence length {len}")]
    OutOfBounds { span: Range<usize>, len: usize },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Alpha,
    Digit,
    Space,
    Other,
}

fn class_of(c: char) -> CharClass {
    if c.is_alphabetic() {
        CharClass::Alpha
    } else if c.is_numeric() {
        CharClass::Digit
    } else if c.is_whitespace() {
        CharClass::Space
    } else {
        CharClass::Other
    }
}

/// Splits into maximal alphabetic runs, maximal digit runs and single other
/// non-space characters.
pub fn word_tokenize(sentence: &str) -> TokenizedSentence {
    let chars: Vec<char> = sentence.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let class = class_of(chars[i]);
        let mut j = i + 1;
        match class {
            CharClass::Space => {
                i = j;
                continue;
            }
            CharClass::Alpha | CharClass::Digit => {
                while j < chars.len() && class_of(chars[j]) == class {
                    j += 1;
                }
            }
            CharClass::Other => {}
        }
        tokens.push(Token {
            surface: chars[i..j].iter().collect(),
            is_continuation: false,
            span: i..j,
        });
        i = j;
    }
    TokenizedSentence { tokens }
}

/// Subword inventory for greedy segmentation. Entries are stored case-folded
/// and diacritics-free; any single character is always a valid piece.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubwordVocabulary {
    initial: HashSet<String>,
    continuation: HashSet<String>,
    max_piece: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("vocabulary line {line}: {reason}")]
pub struct VocabFormatError {
    pub line: usize,
    pub reason: String,
}

fn normalize_piece(piece: &str) -> String {
    strip_diacritics(piece).chars().map(fold_char).collect()
}

impl SubwordVocabulary {
    pub fn new<I, J, S, T>(initial: I, continuation: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let initial: HashSet<String> = initial.into_iter().map(|s| normalize_piece(s.as_ref())).collect();
        let continuation: HashSet<String> =
            continuation.into_iter().map(|s| normalize_piece(s.as_ref())).collect();
        let max_piece = initial
            .iter()
            .chain(&continuation)
            .map(|s| s.chars().count())
            .max()
            .unwrap_or(1);
        Self {
            initial,
            continuation,
            max_piece,
        }
    }

    /// Learns the `size` most frequent character n-grams (2 to 10 characters)
    /// of the words in `sentences`. Word-initial n-grams become initial
    /// entries, all others continuation entries.
    pub fn learn<S: AsRef<str>>(sentences: &[S], size: usize) -> Self {
        let mut counts: HashMap<(bool, String), u64> = HashMap::new();
        for sentence in sentences {
            let stripped = normalize_piece(sentence.as_ref());
            for token in word_tokenize(&stripped).tokens {
                if class_of(token.surface.chars().next().unwrap_or(' ')) != CharClass::Alpha {
                    continue;
                }
                let chars: Vec<char> = token.surface.chars().collect();
                for start in 0..chars.len() {
                    for len in 2..=DEFAULT_MAX_PIECE.min(chars.len() - start) {
                        let piece: String = chars[start..start + len].iter().collect();
                        *counts.entry((start > 0, piece)).or_insert(0) += 1;
                    }
                }
            }
        }
        let mut ranked: Vec<_> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(size);
        let (cont, init): (Vec<_>, Vec<_>) = ranked.into_iter().map(|(k, _)| k).partition(|k| k.0);
        Self::new(
            init.into_iter().map(|k| k.1),
            cont.into_iter().map(|k| k.1),
        )
    }

    pub fn len(&self) -> usize {
        self.initial.len() + self.continuation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn contains(&self, piece: &str, continuation: bool) -> bool {
        if continuation {
            self.continuation.contains(piece)
        } else {
            self.initial.contains(piece)
        }
    }

    pub fn to_text(&self) -> String {
        let mut lines: Vec<String> = self
            .initial
            .iter()
            .cloned()
            .chain(self.continuation.iter().map(|c| format!("{CONTINUATION_MARKER}{c}")))
            .collect();
        lines.sort();
        let mut out = format!("{VOCAB_MAGIC}\n");
        for line in lines {
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, VocabFormatError> {
        let mut lines = text.lines();
        if lines.next() != Some(VOCAB_MAGIC) {
            return Err(VocabFormatError {
                line: 1,
                reason: format!("expected header {VOCAB_MAGIC:?}"),
            });
        }
        let mut initial = Vec::new();
        let mut continuation = Vec::new();
        for (n, line) in lines.enumerate() {
            let (target, piece) = match line.strip_prefix(CONTINUATION_MARKER) {
                Some(rest) => (&mut continuation, rest),
                None => (&mut initial, line),
            };
            if piece.is_empty() || piece.chars().any(char::is_whitespace) {
                return Err(VocabFormatError {
                    line: n + 2,
                    reason: format!("bad entry {line:?}"),
                });
            }
            target.push(piece.to_owned());
        }
        Ok(Self::new(initial, continuation))
    }
}

/// Greedy longest-match segmentation of one word. Pieces after the first are
/// continuations; spans are relative to the word.
pub fn subword_tokenize(word: &str, vocab: &SubwordVocabulary) -> Vec<Token> {
    let chars: Vec<char> = word.chars().collect();
    let folded: Vec<char> = normalize_piece(word).chars().collect();
    let mut tokens = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let longest = vocab.max_piece.min(chars.len() - start);
        let len = (2..=longest)
            .rev()
            .find(|&len| {
                let piece: String = folded[start..start + len].iter().collect();
                vocab.contains(&piece, start > 0)
            })
            .unwrap_or(1);
        tokens.push(Token {
            surface: chars[start..start + len].iter().collect(),
            is_continuation: start > 0,
            span: start..start + len,
        });
        start += len;
    }
    tokens
}

/// How stripped sentences are cut into classification units.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Segmenter {
    #[default]
    Word,
    Subword(SubwordVocabulary),
}

impl Segmenter {
    pub fn segment(&self, sentence: &str) -> TokenizedSentence {
        let words = word_tokenize(sentence);
        let Segmenter::Subword(vocab) = self else {
            return words;
        };
        let mut tokens = Vec::with_capacity(words.len());
        for word in words.tokens {
            let is_alpha = word.surface.chars().next().is_some_and(char::is_alphabetic);
            if !is_alpha {
                tokens.push(word);
                continue;
            }
            for piece in subword_tokenize(&word.surface, vocab) {
                tokens.push(Token {
                    span: word.span.start + piece.span.start..word.span.start + piece.span.end,
                    ..piece
                });
            }
        }
        TokenizedSentence { tokens }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Segmenter::Word => "word",
            Segmenter::Subword(_) => "subword",
        }
    }
}

/// Rebuilds `sentence` with each span replaced by its restored surface.
/// Spans must be in order and must not overlap.
pub fn detokenize<S: AsRef<str>>(
    sentence: &str,
    restored: &[(Range<usize>, S)],
) -> Result<String, SpanError> {
    let chars: Vec<char> = sentence.chars().collect();
    let mut out = String::with_capacity(sentence.len());
    let mut cursor = 0;
    let mut previous: Option<&Range<usize>> = None;
    for (span, surface) in restored {
        if span.end > chars.len() || span.start > span.end {
            return Err(SpanError::OutOfBounds {
                span: span.clone(),
                len: chars.len(),
            });
        }
        if let Some(prev) = previous {
            if span.start < prev.end {
                return Err(SpanError::Overlap {
                    first: prev.clone(),
                    second: span.clone(),
                });
            }
        }
        out.extend(&chars[cursor..span.start]);
        out.push_str(surface.as_ref());
        cursor = span.end;
        previous = Some(span);
    }
    out.extend(&chars[cursor..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instructions::Instruction;
    use crate::marks::strip_diacritics;
    use proptest::prelude::*;

    fn surfaces(t: &TokenizedSentence) -> Vec<&str> {
        t.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    #[test]
    fn word_tokenize_examples() {
        assert_eq!(surfaces(&word_tokenize("Zizka, 1423")), ["Zizka", ",", "1423"]);
        assert!(word_tokenize("").is_empty());
        assert_eq!(surfaces(&word_tokenize("okolo trati")), ["okolo", "trati"]);
        assert_eq!(surfaces(&word_tokenize("nemá-li  ...")), ["nemá", "-", "li", ".", ".", "."]);
        let t = word_tokenize("a  bc");
        assert_eq!(t.tokens[1].span, 3..5);
        assert!(t.tokens.iter().all(|t| !t.is_continuation));
    }

    #[test]
    fn subword_examples() {
        let vocab = SubwordVocabulary::new(["tra"], ["ti"]);
        let pieces = subword_tokenize("trati", &vocab);
        assert_eq!(pieces.len(), 2);
        assert_eq!(pieces[0].surface, "tra");
        assert!(!pieces[0].is_continuation);
        assert_eq!(pieces[1].surface, "ti");
        assert!(pieces[1].is_continuation);
        assert_eq!(pieces[1].display_form(), "##ti");

        let single = subword_tokenize("a", &vocab);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].surface, "a");

        let whole = SubwordVocabulary::new(["dite"], Vec::<String>::new());
        assert_eq!(subword_tokenize("dite", &whole).len(), 1);
        assert_eq!(subword_tokenize("Dite", &whole)[0].surface, "Dite");
    }

    #[test]
    fn continuation_entries_do_not_start_words() {
        let vocab = SubwordVocabulary::new(Vec::<String>::new(), ["ti"]);
        let pieces: Vec<String> = subword_tokenize("titi", &vocab).iter().map(|t| t.display_form()).collect();
        assert_eq!(pieces, ["t", "##i", "##ti"]);
    }

    #[test]
    fn segmenter_offsets_subwords_into_sentence() {
        let seg = Segmenter::Subword(SubwordVocabulary::new(["tra", "ok"], ["ti", "olo"]));
        let t = seg.segment("okolo trati .");
        let forms: Vec<String> = t.tokens.iter().map(|t| t.display_form()).collect();
        assert_eq!(forms, ["ok", "##olo", "tra", "##ti", "."]);
        assert_eq!(t.tokens[3].span, 9..11);
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let vocab = SubwordVocabulary::learn(&["okolo trati trati", "trasa"], 50);
        assert!(!vocab.is_empty());
        let text = vocab.to_text();
        assert!(text.starts_with("#diacrit-vocab v1\n"));
        assert!(text.contains("\n##"));
        assert_eq!(SubwordVocabulary::from_text(&text).unwrap(), vocab);
        assert!(SubwordVocabulary::from_text("tra\n").is_err());
        assert!(SubwordVocabulary::from_text("#diacrit-vocab v1\n##\n").is_err());
    }

    #[test]
    fn learned_vocab_is_top_k() {
        let vocab = SubwordVocabulary::learn(&["trati trati trati tram"], 1);
        assert_eq!(vocab.len(), 1);
        assert!(vocab.contains("tr", false));
    }

    #[test]
    fn detokenize_examples() {
        let t = word_tokenize("okolo trati");
        let same: Vec<_> = t.tokens.iter().map(|t| (t.span.clone(), t.surface.clone())).collect();
        assert_eq!(detokenize("okolo trati", &same).unwrap(), "okolo trati");
        assert_eq!(detokenize("dite .", &[(0..4, "dítě")]).unwrap(), "dítě .");
        assert!(matches!(
            detokenize("dite .", &[(0..4, "x"), (3..5, "y")]),
            Err(SpanError::Overlap { .. })
        ));
        assert!(matches!(
            detokenize("dite", &[(2..9, "x")]),
            Err(SpanError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn subword_instructions_compose_with_word_instruction() {
        let vocab = SubwordVocabulary::learn(&["přílišný příliš žluťoučký kůň úpěl ďábelské ódy"], 30);
        for word in ["příliš", "žluťoučký", "ďábelské", "úpěl"] {
            let stripped = strip_diacritics(word);
            let whole = Instruction::derive(&stripped, word).unwrap();
            let mut rebuilt = String::new();
            for piece in subword_tokenize(&stripped, &vocab) {
                let gold: String = word.chars().skip(piece.span.start).take(piece.span.len()).collect();
                let local = Instruction::derive(&piece.surface, &gold).unwrap();
                // The word-level tuples falling inside the piece, re-indexed.
                let expected: Vec<_> = whole
                    .edits()
                    .iter()
                    .filter(|(i, _)| piece.span.contains(i))
                    .map(|(i, m)| (i - piece.span.start, m.clone()))
                    .collect();
                assert_eq!(local.edits(), expected.as_slice());
                rebuilt.push_str(&local.apply(&piece.surface));
            }
            assert_eq!(rebuilt, whole.apply(&stripped));
            assert_eq!(rebuilt, word);
        }
    }

    proptest! {
        #[test]
        fn tokenize_detokenize_identity(s in "\\PC{0,60}") {
            let t = word_tokenize(&s);
            let spans: Vec<_> = t.tokens.iter().map(|t| (t.span.clone(), t.surface.clone())).collect();
            prop_assert_eq!(detokenize(&s, &spans).unwrap(), s);
        }

        #[test]
        fn subwords_concatenate_to_word(word in "[a-zA-Z]{1,20}") {
            let vocab = SubwordVocabulary::new(["ab", "tra", "x"], ["ti", "ab", "zzz"]);
            let joined: String = subword_tokenize(&word, &vocab).iter().map(|t| t.surface.as_str()).collect();
            prop_assert_eq!(joined, word);
        }
    }
}
