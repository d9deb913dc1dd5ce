//! Decomposition of precomposed Latin letters into a base letter and a named
//! diacritical mark.
//!
//! Marks are read off Unicode character names: a letter named
//! `LATIN SMALL LETTER E WITH CARON` decomposes into the letter named
//! `LATIN SMALL LETTER E` and the mark `CARON`. Everything after the first
//! `WITH ` is one compound mark, so `ế` carries `CIRCUMFLEX AND ACUTE`.
//! Name parsing also covers letters such as `đ` or `ł` that have no canonical
//! decomposition.

use std::borrow::Borrow;
use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Code point ranges scanned when building the registry: Basic Latin through
/// Latin Extended-B, plus Latin Extended Additional.
const LATIN_BLOCKS: [(u32, u32); 2] = [(0x0000, 0x024F), (0x1E00, 0x1EFF)];

const SMALL_PREFIX: &str = "LATIN SMALL LETTER ";
const CAPITAL_PREFIX: &str = "LATIN CAPITAL LETTER ";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid mark name {name:?}: {reason}")]
pub struct MarkNameError {
    pub name: String,
    pub reason: &'static str,
}

/// A diacritical mark identified by its Unicode-name suffix, e.g. `ACUTE` or
/// `RING ABOVE`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiacriticalMark(String);

impl DiacriticalMark {
    pub fn new(name: impl Into<String>) -> Result<Self, MarkNameError> {
        let name = name.into();
        let reason = if name.is_empty() {
            Some("empty")
        } else if !name.bytes().all(|b| b.is_ascii_uppercase() || b == b' ') {
            Some("only A-Z and spaces are allowed")
        } else if name.starts_with(' ') || name.ends_with(' ') {
            Some("leading or trailing space")
        } else if name.contains("  ") {
            Some("repeated space")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(MarkNameError { name, reason }),
            None => Ok(Self(name)),
        }
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DiacriticalMark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for DiacriticalMark {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Bidirectional table between precomposed letters and (base, mark) pairs.
#[derive(Debug, Clone, Default)]
pub struct MarkRegistry {
    decomposition: HashMap<char, (char, DiacriticalMark)>,
    composition: HashMap<char, HashMap<DiacriticalMark, char>>,
}

impl MarkRegistry {
    /// Builds the registry from the embedded Unicode name data.
    pub fn build() -> Self {
        let mut registry = Self::default();
        let chars = LATIN_BLOCKS
            .iter()
            .flat_map(|&(lo, hi)| (lo..=hi).filter_map(char::from_u32));
        for c in chars {
            let Some(name) = unicode_names2::name(c) else {
                continue;
            };
            if let Some((base, mark)) = split_letter_name(&name.to_string()) {
                registry.insert(c, base, mark);
            }
        }
        registry
    }

    /// The process-wide registry, built on first use.
    pub fn global() -> &'static MarkRegistry {
        static REGISTRY: OnceLock<MarkRegistry> = OnceLock::new();
        REGISTRY.get_or_init(MarkRegistry::build)
    }

    fn insert(&mut self, precomposed: char, base: char, mark: DiacriticalMark) {
        let by_mark = self.composition.entry(base).or_default();
        // Two letters sharing one (base, mark) would break the bijection; the
        // lower code point wins.
        if by_mark.contains_key(&mark) {
            return;
        }
        by_mark.insert(mark.clone(), precomposed);
        self.decomposition.insert(precomposed, (base, mark));
    }

    pub fn decompose(&self, c: char) -> Option<(char, &DiacriticalMark)> {
        self.decomposition.get(&c).map(|(b, m)| (*b, m))
    }

    pub fn compose(&self, base: char, mark: &str) -> Option<char> {
        self.composition.get(&base)?.get(mark).copied()
    }

    /// Base letter of `c`, or `c` itself when it carries no registered mark.
    pub fn base_of(&self, c: char) -> char {
        self.decomposition.get(&c).map_or(c, |(b, _)| *b)
    }

    pub fn len(&self) -> usize {
        self.decomposition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decomposition.is_empty()
    }

    /// All (precomposed, base, mark) triples in code point order.
    pub fn entries(&self) -> Vec<(char, char, &DiacriticalMark)> {
        let mut out: Vec<_> = self
            .decomposition
            .iter()
            .map(|(&c, (b, m))| (c, *b, m))
            .collect();
        out.sort_by_key(|e| e.0);
        out
    }

    /// Every mark the registry knows, sorted.
    pub fn marks(&self) -> Vec<&DiacriticalMark> {
        let mut marks: Vec<_> = self.decomposition.values().map(|(_, m)| m).collect();
        marks.sort();
        marks.dedup();
        marks
    }

    /// TSV dump with one `char\tbase\tmark` row per precomposed letter.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("char\tbase\tmark\n");
        for (c, b, m) in self.entries() {
            out.push_str(&format!("{c}\t{b}\t{m}\n"));
        }
        out
    }
}

/// Splits `LATIN (SMALL|CAPITAL) LETTER X WITH SUFFIX` into the base letter
/// and the mark named by the suffix.
fn split_letter_name(name: &str) -> Option<(char, DiacriticalMark)> {
    let prefix = if name.starts_with(SMALL_PREFIX) {
        SMALL_PREFIX
    } else if name.starts_with(CAPITAL_PREFIX) {
        CAPITAL_PREFIX
    } else {
        return None;
    };
    let (letter, suffix) = name[prefix.len()..].split_once(" WITH ")?;
    // Digraphs like "D WITH SMALL LETTER Z WITH CARON" are two letters.
    if suffix.contains("LETTER") {
        return None;
    }
    let mark = DiacriticalMark::new(suffix).ok()?;
    let base = unicode_names2::character(&format!("{prefix}{letter}"))?;
    // Bases such as DZ resolve to digraph letters.
    if base.to_string().nfkd().count() > 1 {
        return None;
    }
    Some((base, mark))
}

/// Replaces every registered precomposed letter by its base letter.
pub fn strip_diacritics(text: &str) -> String {
    let registry = MarkRegistry::global();
    text.chars().map(|c| registry.base_of(c)).collect()
}

pub fn compose(base: char, mark: &DiacriticalMark) -> Option<char> {
    MarkRegistry::global().compose(base, mark.name())
}

pub fn decompose(c: char) -> Option<(char, &'static DiacriticalMark)> {
    MarkRegistry::global().decompose(c)
}

/// Replaces S/T with cedilla by S/T with comma below.
pub fn normalize_romanian(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            'ş' => 'ș',
            'Ş' => 'Ș',
            'ţ' => 'ț',
            'Ţ' => 'Ț',
            other => other,
        })
        .collect()
}

/// Canonical composition (NFC).
pub fn compose_canonical(text: &str) -> String {
    text.nfc().collect()
}

/// Simple lowercase mapping that never changes the character count: letters
/// whose lowercase form is longer than one character are kept as is.
pub fn fold_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

pub fn fold_case(text: &str) -> String {
    text.chars().map(fold_char).collect()
}

/// Case-folded, diacritics-free form: the key under which variants of one
/// word coincide.
pub fn skeleton(text: &str) -> String {
    let registry = MarkRegistry::global();
    text.chars().map(|c| fold_char(registry.base_of(c))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mark(name: &str) -> DiacriticalMark {
        DiacriticalMark::new(name).unwrap()
    }

    #[test]
    fn decomposes_by_name() {
        assert_eq!(decompose('ě'), Some(('e', &mark("CARON"))));
        assert_eq!(decompose('ế'), Some(('e', &mark("CIRCUMFLEX AND ACUTE"))));
        assert_eq!(decompose('đ'), Some(('d', &mark("STROKE"))));
        assert_eq!(decompose('ł'), Some(('l', &mark("STROKE"))));
        assert_eq!(decompose('ș'), Some(('s', &mark("COMMA BELOW"))));
        assert_eq!(decompose('e'), None);
    }

    #[test]
    fn digraphs_are_not_marks() {
        assert_eq!(decompose('ǅ'), None);
        assert_eq!(decompose('ǆ'), None);
    }

    #[test]
    fn compose_examples() {
        assert_eq!(compose('i', &mark("ACUTE")), Some('í'));
        assert_eq!(compose('t', &mark("RING ABOVE")), None);
        assert_eq!(compose('Z', &mark("CARON")), Some('Ž'));
        assert_eq!(compose('í', &mark("ACUTE")), None);
    }

    #[test]
    fn strip_examples() {
        assert_eq!(strip_diacritics("dítě"), "dite");
        assert_eq!(strip_diacritics("dite"), "dite");
        assert_eq!(strip_diacritics("Žižka, 1423"), "Zizka, 1423");
        assert_eq!(strip_diacritics("Tiếng Việt đẹp"), "Tieng Viet dep");
    }

    #[test]
    fn strip_matches_name_lookup_oracle() {
        // Independent route: look each character's name up directly.
        let oracle = |c: char| -> char {
            let name = unicode_names2::name(c).unwrap().to_string();
            match name.split_once(" WITH ") {
                Some((base, _)) if name.starts_with("LATIN ") => {
                    unicode_names2::character(base).unwrap()
                }
                _ => c,
            }
        };
        let input = "Žižka, 1423";
        let expected: String = input.chars().map(oracle).collect();
        assert_eq!(expected, "Zizka, 1423");
        assert_eq!(strip_diacritics(input), expected);
    }

    #[test]
    fn registry_round_trips() {
        let registry = MarkRegistry::global();
        assert!(registry.len() > 500);
        for (c, base, m) in registry.entries() {
            assert_eq!(registry.compose(base, m.name()), Some(c), "{c}");
            assert_eq!(strip_diacritics(&c.to_string()), base.to_string());
            assert!(registry.decompose(base).is_none(), "base {base} of {c} is marked");
            let base_name = unicode_names2::name(base).unwrap().to_string();
            assert!(!base_name.contains(" WITH "), "{base_name}");
        }
    }

    #[test]
    fn registry_is_case_complete() {
        let registry = MarkRegistry::global();
        for (c, base, m) in registry.entries() {
            if !c.is_lowercase() {
                continue;
            }
            let upper: Vec<char> = c.to_uppercase().collect();
            let upper_base: Vec<char> = base.to_uppercase().collect();
            if let ([u], [ub]) = (upper.as_slice(), upper_base.as_slice()) {
                if *u != c && registry.decompose(*u).is_some() {
                    assert_eq!(registry.compose(*ub, m.name()), Some(*u), "{c} -> {u}");
                }
            }
        }
    }

    #[test]
    fn canonical_decomposition_agrees_where_defined() {
        use unicode_normalization::char::decompose_canonical;
        let registry = MarkRegistry::global();
        for (c, base, _) in registry.entries() {
            let mut parts = Vec::new();
            decompose_canonical(c, |p| parts.push(p));
            if parts.len() > 1 {
                assert_eq!(registry.base_of(parts[0]), base, "{c}");
            }
        }
    }

    #[test]
    fn every_mark_name_is_valid() {
        for m in MarkRegistry::global().marks() {
            assert!(DiacriticalMark::new(m.name()).is_ok());
        }
    }

    #[test]
    fn mark_name_validation() {
        assert!(DiacriticalMark::new("").is_err());
        assert!(DiacriticalMark::new("acute").is_err());
        assert!(DiacriticalMark::new(" ACUTE").is_err());
        assert!(DiacriticalMark::new("RING  ABOVE").is_err());
        assert!(DiacriticalMark::new("RING ABOVE").is_ok());
    }

    #[test]
    fn romanian_normalization() {
        assert_eq!(normalize_romanian("ş"), "ș");
        assert_eq!(normalize_romanian("ţara"), "țara");
        assert_eq!(normalize_romanian("ŞŢ"), "ȘȚ");
        assert_eq!(normalize_romanian("text"), "text");
    }

    #[test]
    fn fold_keeps_length() {
        assert_eq!(fold_char('İ'), 'İ');
        assert_eq!(fold_case("ŽIŽKA"), "žižka");
        assert_eq!(skeleton("İstanbul"), "istanbul");
        assert_eq!(skeleton("Dítě"), "dite");
    }

    proptest::proptest! {
        #[test]
        fn strip_is_idempotent_and_shape_preserving(s in "\\PC{0,40}") {
            let once = strip_diacritics(&s);
            proptest::prop_assert_eq!(strip_diacritics(&once), once.clone());
            proptest::prop_assert_eq!(once.chars().count(), s.chars().count());
            for (a, b) in s.chars().zip(once.chars()) {
                proptest::prop_assert_eq!(a.is_whitespace(), b.is_whitespace());
                proptest::prop_assert_eq!(a.is_uppercase(), b.is_uppercase());
            }
        }

        #[test]
        fn romanian_normalization_commutes_with_strip(s in "[a-zșşțţȘŞȚŢăâîĂÂÎ ]{0,30}") {
            let n = normalize_romanian(&s);
            proptest::prop_assert_eq!(normalize_romanian(&n), n.clone());
            proptest::prop_assert_eq!(
                strip_diacritics(&n),
                normalize_romanian(&strip_diacritics(&s))
            );
        }
    }
}
