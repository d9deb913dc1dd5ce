//! Error forensics over restored text: mispredictions with surrounding
//! context, confusion counts, annotation sheets for human judges, verdict
//! tallies, ambiguity of stripped forms and a lexicon-based pre-filter.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::corpus::{words, MaskedParallelCorpus};
use crate::evaluate::{is_alpha_word, words_match, EvalError};
use crate::marks::{fold_case, skeleton};
use crate::restore::FrequencyModel;
use crate::tokenize::CONTINUATION_MARKER;

/// Two sentences either side of the current one, plus the current sentence
/// split around the word under scrutiny. Missing neighbours are empty.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Context {
    pub before_previous: String,
    pub previous: String,
    pub current_start: String,
    pub current_end: String,
    pub next: String,
    pub after_next: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Misprediction {
    pub document: usize,
    pub sentence: usize,
    pub word: usize,
    /// Stripped input word.
    pub source: String,
    pub system: String,
    pub gold: String,
    pub context: Context,
}

impl Misprediction {
    /// Current sentence with the word bracketed.
    pub fn snippet(&self) -> String {
        let parts = [
            self.context.current_start.as_str(),
            &format!("[{}]", self.system),
            self.context.current_end.as_str(),
        ];
        parts.iter().filter(|p| !p.is_empty()).copied().collect::<Vec<_>>().join(" ")
    }
}

/// Every evaluated word whose hypothesis differs from gold. Blank gold lines
/// separate documents; context never crosses a document boundary and is taken
/// from the gold side. Mismatches that differ in more than diacritics or case
/// are not diacritization errors and are left out.
pub fn collect_mispredictions<S: AsRef<str>>(
    hypotheses: &[S],
    corpus: &MaskedParallelCorpus,
    case_sensitive: bool,
) -> Result<Vec<Misprediction>, EvalError> {
    // Validates sentence and word counts.
    crate::evaluate::score_sentences(hypotheses, corpus, case_sensitive)?;

    let entries = corpus.entries();
    let mut document = 0;
    let mut doc_of = Vec::with_capacity(entries.len());
    let mut documents: Vec<Vec<usize>> = vec![Vec::new()];
    for (i, entry) in entries.iter().enumerate() {
        if entry.gold.trim().is_empty() {
            if !documents[document].is_empty() {
                document += 1;
                documents.push(Vec::new());
            }
            doc_of.push(None);
        } else {
            doc_of.push(Some((document, documents[document].len())));
            documents[document].push(i);
        }
    }

    let mut out = Vec::new();
    for (i, (hyp, entry)) in hypotheses.iter().zip(entries).enumerate() {
        let Some((doc, pos)) = doc_of[i] else { continue };
        let members = &documents[doc];
        let neighbour = |offset: isize| -> String {
            pos.checked_add_signed(offset)
                .and_then(|p| members.get(p))
                .map_or_else(String::new, |&j| entries[j].gold.clone())
        };
        let hyp_words: Vec<&str> = words(hyp.as_ref()).collect();
        let gold_words: Vec<&str> = words(&entry.gold).collect();
        let source_words: Vec<&str> = words(&entry.stripped).collect();
        for (w, ((h, g), keep)) in hyp_words.iter().zip(&gold_words).zip(&entry.mask).enumerate() {
            if !*keep || !is_alpha_word(g) || words_match(h, g, case_sensitive) {
                continue;
            }
            let source = source_words.get(w).copied().unwrap_or_default();
            if skeleton(h) != skeleton(g) || skeleton(g) != fold_case(source) {
                continue;
            }
            out.push(Misprediction {
                document: doc,
                sentence: i,
                word: w,
                source: source.to_owned(),
                system: (*h).to_owned(),
                gold: (*g).to_owned(),
                context: Context {
                    before_previous: neighbour(-2),
                    previous: neighbour(-1),
                    current_start: gold_words[..w].join(" "),
                    current_end: gold_words[w + 1..].join(" "),
                    next: neighbour(1),
                    after_next: neighbour(2),
                },
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    pub system: String,
    pub gold: String,
    pub count: usize,
    /// Up to three examples, in corpus order.
    pub samples: Vec<Misprediction>,
}

pub const CONFUSION_SAMPLES: usize = 3;

/// Mispredictions grouped by (system, gold), most frequent first; ties in
/// lexicographic order.
pub fn confusion_report(mispredictions: &[Misprediction]) -> Vec<Confusion> {
    let mut groups: BTreeMap<(&str, &str), Confusion> = BTreeMap::new();
    for m in mispredictions {
        let entry = groups
            .entry((&m.system, &m.gold))
            .or_insert_with(|| Confusion {
                system: m.system.clone(),
                gold: m.gold.clone(),
                count: 0,
                samples: Vec::new(),
            });
        entry.count += 1;
        if entry.samples.len() < CONFUSION_SAMPLES {
            entry.samples.push(m.clone());
        }
    }
    let mut report: Vec<Confusion> = groups.into_values().collect();
    // Stable sort keeps the BTreeMap's lexicographic order among equal counts.
    report.sort_by_key(|c| std::cmp::Reverse(c.count));
    report
}

pub fn confusion_tsv(report: &[Confusion]) -> String {
    let mut out = String::from("system\tgold\tcount\tsamples\n");
    for c in report {
        let samples: Vec<String> = c.samples.iter().map(Misprediction::snippet).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            c.system,
            c.gold,
            c.count,
            clean_field(&samples.join(" | "))
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    System,
    Gold,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::System => "SYSTEM",
            Variant::Gold => "GOLD",
        })
    }
}

/// A judge's answers for one annotation row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub correct_in_sentence: bool,
    pub correct_in_context: bool,
    pub has_typo: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRow {
    pub item: usize,
    pub variant: Variant,
    pub word: String,
    pub context: Context,
    pub verdict: Option<Verdict>,
}

pub const ANNOTATION_HEADER: [&str; 12] = [
    "item_id",
    "variant",
    "before_previous",
    "previous",
    "current_start",
    "current_word",
    "current_end",
    "next",
    "after_next",
    "correct_in_sentence",
    "correct_in_context",
    "has_typo",
];

/// Tabs and line breaks are not allowed inside fields.
fn clean_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// Two rows per misprediction (system word, then gold word) with empty
/// verdict columns. Item ids start at 1.
pub fn annotation_rows(mispredictions: &[Misprediction]) -> Vec<AnnotationRow> {
    mispredictions
        .iter()
        .enumerate()
        .flat_map(|(i, m)| {
            [(Variant::System, &m.system), (Variant::Gold, &m.gold)].map(|(variant, word)| AnnotationRow {
                item: i + 1,
                variant,
                word: word.clone(),
                context: m.context.clone(),
                verdict: None,
            })
        })
        .collect()
}

pub fn export_annotation_items(mispredictions: &[Misprediction]) -> String {
    write_annotations(&annotation_rows(mispredictions))
}

pub fn write_annotations(rows: &[AnnotationRow]) -> String {
    let mut out = ANNOTATION_HEADER.join("\t");
    out.push('\n');
    for row in rows {
        let c = &row.context;
        let verdict = row.verdict.map_or([""; 3], |v| {
            [v.correct_in_sentence, v.correct_in_context, v.has_typo].map(|b| if b { "true" } else { "false" })
        });
        let fields = [
            row.item.to_string(),
            row.variant.to_string(),
            clean_field(&c.before_previous),
            clean_field(&c.previous),
            clean_field(&c.current_start),
            clean_field(&row.word),
            clean_field(&c.current_end),
            clean_field(&c.next),
            clean_field(&c.after_next),
            verdict[0].to_owned(),
            verdict[1].to_owned(),
            verdict[2].to_owned(),
        ];
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("annotation line {line}: {reason}")]
pub struct AnnotationFormatError {
    pub line: usize,
    pub reason: String,
}

/// Reads an annotation sheet. Verdict columns are either all empty or all
/// `true`/`false`.
pub fn read_annotations(text: &str) -> Result<Vec<AnnotationRow>, AnnotationFormatError> {
    let err = |line: usize, reason: String| AnnotationFormatError { line, reason };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == ANNOTATION_HEADER.join("\t") => {}
        _ => return Err(err(1, "missing or unexpected header".into())),
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        let line_no = n + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != ANNOTATION_HEADER.len() {
            return Err(err(line_no, format!("expected {} fields, got {}", ANNOTATION_HEADER.len(), f.len())));
        }
        let item = f[0].parse().map_err(|_| err(line_no, format!("bad item id {:?}", f[0])))?;
        let variant = match f[1] {
            "SYSTEM" => Variant::System,
            "GOLD" => Variant::Gold,
            other => return Err(err(line_no, format!("bad variant {other:?}"))),
        };
        let flags: Vec<Option<bool>> = f[9..]
            .iter()
            .map(|v| match v.trim().to_ascii_lowercase().as_str() {
                "" => Ok(None),
                "true" => Ok(Some(true)),
                "false" => Ok(Some(false)),
                other => Err(err(line_no, format!("bad verdict {other:?}"))),
            })
            .collect::<Result<_, _>>()?;
        let verdict = match flags[..] {
            [None, None, None] => None,
            [Some(s), Some(c), Some(t)] => Some(Verdict {
                correct_in_sentence: s,
                correct_in_context: c,
                has_typo: t,
            }),
            _ => return Err(err(line_no, "verdict columns partially filled".into())),
        };
        rows.push(AnnotationRow {
            item,
            variant,
            word: f[5].to_owned(),
            context: Context {
                before_previous: f[2].to_owned(),
                previous: f[3].to_owned(),
                current_start: f[4].to_owned(),
                current_end: f[6].to_owned(),
                next: f[7].to_owned(),
                after_next: f[8].to_owned(),
            },
            verdict,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PairingError {
    #[error("item {item}: no {variant} verdict")]
    Missing { item: usize, variant: Variant },
    #[error("item {item}: duplicate {variant} row")]
    Duplicate { item: usize, variant: Variant },
}

/// Outcome categories for a misprediction judged in context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    /// Both variants acceptable: a plausible variant.
    SystemCorrectGoldCorrect,
    /// The system fixed an error in the reference.
    SystemCorrectGoldWrong,
    SystemWrongGoldWrong,
    /// A real system error.
    SystemWrongGoldCorrect,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::SystemCorrectGoldCorrect,
        Category::SystemCorrectGoldWrong,
        Category::SystemWrongGoldWrong,
        Category::SystemWrongGoldCorrect,
    ];

    pub fn of(system_ok: bool, gold_ok: bool) -> Self {
        match (system_ok, gold_ok) {
            (true, true) => Category::SystemCorrectGoldCorrect,
            (true, false) => Category::SystemCorrectGoldWrong,
            (false, false) => Category::SystemWrongGoldWrong,
            (false, true) => Category::SystemWrongGoldCorrect,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::SystemCorrectGoldCorrect => "system correct, gold correct",
            Category::SystemCorrectGoldWrong => "system correct, gold wrong",
            Category::SystemWrongGoldWrong => "system wrong, gold wrong",
            Category::SystemWrongGoldCorrect => "system wrong, gold correct",
        }
    }

    fn index(self) -> usize {
        Category::ALL.iter().position(|&c| c == self).expect("listed")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerdictReport {
    pub items: usize,
    /// Items where either variant was flagged as containing a typo.
    pub typo_excluded: usize,
    pub analyzed: usize,
    /// Indexed like [`Category::ALL`].
    pub counts: [usize; 4],
    /// Whole percentages of `analyzed`, rounded half up.
    pub percentages: [u64; 4],
    /// Analyzed items whose system word is right for its sentence but wrong
    /// once the wider context is considered.
    pub system_sentence_only: usize,
    pub gold_sentence_only: usize,
}

impl VerdictReport {
    pub fn count(&self, category: Category) -> usize {
        self.counts[category.index()]
    }

    pub fn percentage(&self, category: Category) -> u64 {
        self.percentages[category.index()]
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("category\tcount\tpercent\n");
        for c in Category::ALL {
            out.push_str(&format!("{}\t{}\t{}\n", c.label(), self.count(c), self.percentage(c)));
        }
        out.push_str(&format!("items\t{}\t\n", self.items));
        out.push_str(&format!("typo_excluded\t{}\t\n", self.typo_excluded));
        out.push_str(&format!("analyzed\t{}\t\n", self.analyzed));
        out.push_str(&format!("system_sentence_only\t{}\t\n", self.system_sentence_only));
        out.push_str(&format!("gold_sentence_only\t{}\t\n", self.gold_sentence_only));
        out
    }
}

impl fmt::Display for VerdictReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} mispredicted words, {} with a non-diacritical error, {} analyzed",
            self.items, self.typo_excluded, self.analyzed
        )?;
        for c in Category::ALL {
            writeln!(f, "  {}: {}% ({} of {})", c.label(), self.percentage(c), self.count(c), self.analyzed)?;
        }
        write!(
            f,
            "  correct in sentence but not in context: system {}, gold {}",
            self.system_sentence_only, self.gold_sentence_only
        )
    }
}

/// `part / whole` as a whole percentage, rounded half up.
pub fn percent_half_up(part: usize, whole: usize) -> u64 {
    if whole == 0 {
        return 0;
    }
    ((200 * part as u128 + whole as u128) / (2 * whole as u128)) as u64
}

/// Pairs system and gold verdicts by item, drops items where either variant
/// has a typo and tallies the four categories by in-context correctness.
pub fn categorize_verdicts(rows: &[AnnotationRow]) -> Result<VerdictReport, PairingError> {
    let mut items: BTreeMap<usize, [Option<Verdict>; 2]> = BTreeMap::new();
    for row in rows {
        let slot = &mut items.entry(row.item).or_default()[row.variant as usize];
        if slot.is_some() {
            return Err(PairingError::Duplicate {
                item: row.item,
                variant: row.variant,
            });
        }
        *slot = Some(row.verdict.ok_or(PairingError::Missing {
            item: row.item,
            variant: row.variant,
        })?);
    }
    let mut report = VerdictReport {
        items: items.len(),
        typo_excluded: 0,
        analyzed: 0,
        counts: [0; 4],
        percentages: [0; 4],
        system_sentence_only: 0,
        gold_sentence_only: 0,
    };
    for (item, [system, gold]) in items {
        let system = system.ok_or(PairingError::Missing { item, variant: Variant::System })?;
        let gold = gold.ok_or(PairingError::Missing { item, variant: Variant::Gold })?;
        if system.has_typo || gold.has_typo {
            report.typo_excluded += 1;
            continue;
        }
        report.analyzed += 1;
        report.counts[Category::of(system.correct_in_context, gold.correct_in_context).index()] += 1;
        report.system_sentence_only += usize::from(system.correct_in_sentence && !system.correct_in_context);
        report.gold_sentence_only += usize::from(gold.correct_in_sentence && !gold.correct_in_context);
    }
    report.percentages = report.counts.map(|c| percent_half_up(c, report.analyzed));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmbiguousForm {
    pub form: String,
    pub occurrences: u64,
    /// Restored variants with their counts, most frequent first.
    pub candidates: Vec<(String, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityReport {
    pub forms: usize,
    pub ambiguous_forms: usize,
    pub occurrences: u64,
    pub ambiguous_occurrences: u64,
    /// Most ambiguous first: by candidate count, then occurrences, then form.
    pub ranked: Vec<AmbiguousForm>,
}

impl AmbiguityReport {
    pub fn form_fraction(&self) -> f64 {
        if self.forms == 0 {
            0.0
        } else {
            self.ambiguous_forms as f64 / self.forms as f64
        }
    }

    pub fn occurrence_fraction(&self) -> f64 {
        if self.occurrences == 0 {
            0.0
        } else {
            self.ambiguous_occurrences as f64 / self.occurrences as f64
        }
    }
}

/// Share of alphabetic forms (and of their occurrences) seen with two or more
/// distinct instructions in training.
pub fn ambiguity_stats(model: &FrequencyModel) -> AmbiguityReport {
    let set = model.instruction_set();
    let mut report = AmbiguityReport {
        forms: 0,
        ambiguous_forms: 0,
        occurrences: 0,
        ambiguous_occurrences: 0,
        ranked: Vec::new(),
    };
    for (form, counts) in model.forms() {
        if !form.chars().any(char::is_alphabetic) {
            continue;
        }
        let total: u64 = counts.values().sum();
        report.forms += 1;
        report.occurrences += total;
        if counts.len() < 2 {
            continue;
        }
        report.ambiguous_forms += 1;
        report.ambiguous_occurrences += total;
        let (marker, bare) = match form.strip_prefix(CONTINUATION_MARKER) {
            Some(rest) => (CONTINUATION_MARKER, rest),
            None => ("", form),
        };
        let mut candidates: Vec<(String, u64)> = counts
            .iter()
            .map(|(&id, &n)| {
                let restored = set.instruction(id).map_or_else(|| bare.to_owned(), |i| i.apply(bare));
                (format!("{marker}{restored}"), n)
            })
            .collect();
        candidates.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        report.ranked.push(AmbiguousForm {
            form: form.to_owned(),
            occurrences: total,
            candidates,
        });
    }
    report.ranked.sort_by(|a, b| {
        b.candidates
            .len()
            .cmp(&a.candidates.len())
            .then_with(|| b.occurrences.cmp(&a.occurrences))
            .then_with(|| a.form.cmp(&b.form))
    });
    report
}

/// Known word forms, optionally grouped into variant sets. Stands in for a
/// morphological analyzer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    forms: HashMap<String, Option<String>>,
}

impl Lexicon {
    /// One form per line, optionally followed by a tab and a variant-group id.
    pub fn parse(text: &str) -> Self {
        let forms = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.trim().is_empty())
            .map(|l| match l.split_once('\t') {
                Some((form, group)) if !group.trim().is_empty() => {
                    (fold_case(form.trim()), Some(group.trim().to_owned()))
                }
                _ => (fold_case(l.trim()), None),
            })
            .collect();
        Self { forms }
    }

    pub fn from_forms<I: IntoIterator<Item = S>, S: AsRef<str>>(forms: I) -> Self {
        Self {
            forms: forms.into_iter().map(|f| (fold_case(f.as_ref()), None)).collect(),
        }
    }

    pub fn contains(&self, form: &str) -> bool {
        self.forms.contains_key(&fold_case(form))
    }

    fn group(&self, form: &str) -> Option<&str> {
        self.forms.get(&fold_case(form))?.as_deref()
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexiconSplit {
    /// Both words are known variants of the same source: counted as correct.
    pub auto_correct: Vec<Misprediction>,
    /// Gold unknown but system known: left out of the analysis.
    pub dubious: Vec<Misprediction>,
    /// Everything else, to be annotated.
    pub remaining: Vec<Misprediction>,
}

pub fn lexicon_filter(mispredictions: &[Misprediction], lexicon: &Lexicon) -> LexiconSplit {
    let mut split = LexiconSplit::default();
    for m in mispredictions {
        let system_known = lexicon.contains(&m.system);
        let gold_known = lexicon.contains(&m.gold);
        let same_group = match (lexicon.group(&m.system), lexicon.group(&m.gold)) {
            (Some(a), Some(b)) => a == b,
            _ => true,
        };
        let bucket = if system_known && gold_known && same_group && skeleton(&m.system) == skeleton(&m.gold) {
            &mut split.auto_correct
        } else if system_known && !gold_known {
            &mut split.dubious
        } else {
            &mut split.remaining
        };
        bucket.push(m.clone());
    }
    split
}
