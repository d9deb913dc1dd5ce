//! Restoration engine: a per-token instruction classifier contract, two
//! count-based baselines, an external-process scorer and model files.
//!
//! A classifier maps a tokenized stripped sentence to one score vector over
//! instruction ids per token; the restorer takes the argmax (ties go to the
//! smaller id, i.e. the globally more frequent instruction) and applies it.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::str::FromStr;
use std::sync::Mutex;

use rayon::prelude::*;
use thiserror::Error;

use crate::instructions::{sentence_instructions, Instruction, InstructionId, InstructionSet, KEEP_ID};
use crate::marks::{fold_case, strip_diacritics};
use crate::tokenize::{detokenize, Segmenter, SubwordVocabulary, Token, TokenizedSentence};

pub const MODEL_MAGIC: &str = "#diacrit-model v1";
const SENTENCE_START: &str = "<s>";
const SENTENCE_END: &str = "</s>";

pub trait InstructionClassifier: Sync {
    /// Size of the label space the scores range over.
    fn num_instructions(&self) -> usize;

    /// One finite score vector of length [`num_instructions`] per token.
    ///
    /// [`num_instructions`]: InstructionClassifier::num_instructions
    fn scores(&self, sentence: &TokenizedSentence) -> Vec<Vec<f64>>;

    /// Argmax of each score vector, ties to the smaller id.
    fn classify(&self, sentence: &TokenizedSentence) -> Vec<InstructionId> {
        self.scores(sentence).iter().map(|s| argmax(s)).collect()
    }
}

fn argmax(scores: &[f64]) -> InstructionId {
    let mut best = KEEP_ID;
    let mut best_score = f64::NEG_INFINITY;
    for (id, &score) in scores.iter().enumerate() {
        if score > best_score {
            best = id as InstructionId;
            best_score = score;
        }
    }
    best
}

/// Always predicts `<KEEP>`.
#[derive(Debug, Clone, Copy)]
pub struct KeepClassifier {
    pub num_instructions: usize,
}

impl InstructionClassifier for KeepClassifier {
    fn num_instructions(&self) -> usize {
        self.num_instructions
    }

    fn scores(&self, sentence: &TokenizedSentence) -> Vec<Vec<f64>> {
        let mut one_hot = vec![0.0; self.num_instructions.max(1)];
        one_hot[KEEP_ID as usize] = 1.0;
        vec![one_hot; sentence.len()]
    }

    fn classify(&self, sentence: &TokenizedSentence) -> Vec<InstructionId> {
        vec![KEEP_ID; sentence.len()]
    }
}

type Counts = BTreeMap<InstructionId, u64>;
type ContextKey = (String, String, String);

fn add_counts(into: &mut Counts, from: Counts) {
    for (id, n) in from {
        *into.entry(id).or_insert(0) += n;
    }
}

/// Argmax over stored counts, ties to the smaller id.
fn best_of(counts: &Counts) -> InstructionId {
    let mut best = (KEEP_ID, 0);
    for (&id, &n) in counts {
        if n > best.1 {
            best = (id, n);
        }
    }
    best.0
}

/// Count tables keyed by case-folded stripped token forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyModel {
    set: InstructionSet,
    segmenter: Segmenter,
    prior: Vec<u64>,
    unigram: HashMap<String, Counts>,
    context: HashMap<ContextKey, Counts>,
}

fn form_of(token: &Token) -> String {
    fold_case(&token.display_form())
}

fn context_keys(sentence: &TokenizedSentence) -> Vec<(String, ContextKey)> {
    let forms: Vec<String> = sentence.tokens.iter().map(form_of).collect();
    (0..forms.len())
        .map(|i| {
            let prev = if i == 0 { SENTENCE_START } else { forms[i - 1].as_str() };
            let next = forms.get(i + 1).map_or(SENTENCE_END, String::as_str);
            (
                forms[i].clone(),
                (prev.to_owned(), forms[i].clone(), next.to_owned()),
            )
        })
        .collect()
}

impl FrequencyModel {
    fn empty(set: InstructionSet, segmenter: Segmenter) -> Self {
        Self {
            prior: vec![0; set.len()],
            set,
            segmenter,
            unigram: HashMap::new(),
            context: HashMap::new(),
        }
    }

    pub fn instruction_set(&self) -> &InstructionSet {
        &self.set
    }

    pub fn segmenter(&self) -> &Segmenter {
        &self.segmenter
    }

    pub fn prior(&self) -> &[u64] {
        &self.prior
    }

    /// Observed instruction counts for one form.
    pub fn form_counts(&self, form: &str) -> Option<&BTreeMap<InstructionId, u64>> {
        self.unigram.get(&fold_case(form))
    }

    pub fn forms(&self) -> impl Iterator<Item = (&str, &BTreeMap<InstructionId, u64>)> {
        self.unigram.iter().map(|(f, c)| (f.as_str(), c))
    }

    /// Adds every count of `other`. Associative and commutative.
    pub fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.prior.iter_mut().zip(&other.prior) {
            *a += b;
        }
        for (form, counts) in other.unigram {
            add_counts(self.unigram.entry(form).or_default(), counts);
        }
        for (key, counts) in other.context {
            add_counts(self.context.entry(key).or_default(), counts);
        }
        self
    }

    fn add_sentence(&mut self, diacritized: &str) -> bool {
        let stripped = strip_diacritics(diacritized);
        let Ok(found) = sentence_instructions(&stripped, diacritized, &self.segmenter) else {
            return false;
        };
        let tokens = self.segmenter.segment(&stripped);
        for ((form, key), instruction) in context_keys(&tokens).into_iter().zip(found) {
            let id = self.set.id_of(&instruction).unwrap_or(KEEP_ID);
            self.prior[id as usize] += 1;
            *self.unigram.entry(form).or_default().entry(id).or_insert(0) += 1;
            *self.context.entry(key).or_default().entry(id).or_insert(0) += 1;
        }
        true
    }

    pub fn classify_with(&self, kind: BaselineKind, sentence: &TokenizedSentence) -> Vec<InstructionId> {
        match kind {
            BaselineKind::Keep => vec![KEEP_ID; sentence.len()],
            BaselineKind::Unigram => sentence
                .tokens
                .iter()
                .map(|t| self.unigram.get(&form_of(t)).map_or(KEEP_ID, best_of))
                .collect(),
            BaselineKind::Trigram => context_keys(sentence)
                .into_iter()
                .map(|(form, key)| {
                    self.context
                        .get(&key)
                        .or_else(|| self.unigram.get(&form))
                        .map_or(KEEP_ID, best_of)
                })
                .collect(),
        }
    }

    fn counts_for(&self, kind: BaselineKind, sentence: &TokenizedSentence) -> Vec<Option<&Counts>> {
        match kind {
            BaselineKind::Keep => vec![None; sentence.len()],
            BaselineKind::Unigram => sentence.tokens.iter().map(|t| self.unigram.get(&form_of(t))).collect(),
            BaselineKind::Trigram => context_keys(sentence)
                .into_iter()
                .map(|(form, key)| self.context.get(&key).or_else(|| self.unigram.get(&form)))
                .collect(),
        }
    }

    pub fn baseline(&self, kind: BaselineKind) -> Baseline<'_> {
        Baseline { model: self, kind }
    }
}

/// Counts instructions over diacritized training sentences. Instructions
/// missing from `set` are counted as `<KEEP>`; sentences that fail to align
/// are skipped.
pub fn train_frequency_model<S: AsRef<str> + Sync>(
    sentences: &[S],
    set: &InstructionSet,
    segmenter: &Segmenter,
) -> FrequencyModel {
    let fresh = || FrequencyModel::empty(set.clone(), segmenter.clone());
    sentences
        .par_iter()
        .fold(fresh, |mut model, s| {
            model.add_sentence(s.as_ref());
            model
        })
        .reduce(fresh, FrequencyModel::merge)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselineKind {
    Keep,
    Unigram,
    /// (previous, form, next) counts, backing off to unigram, then `<KEEP>`.
    #[default]
    Trigram,
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "keep" => Ok(Self::Keep),
            "unigram" => Ok(Self::Unigram),
            "trigram" => Ok(Self::Trigram),
            other => Err(format!("unknown baseline {other:?} (keep, unigram, trigram)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Baseline<'a> {
    model: &'a FrequencyModel,
    kind: BaselineKind,
}

impl InstructionClassifier for Baseline<'_> {
    fn num_instructions(&self) -> usize {
        self.model.set.len()
    }

    fn scores(&self, sentence: &TokenizedSentence) -> Vec<Vec<f64>> {
        let n = self.num_instructions();
        self.model
            .counts_for(self.kind, sentence)
            .into_iter()
            .map(|counts| {
                let mut scores = vec![0.0; n];
                match counts {
                    Some(counts) => counts.iter().for_each(|(&id, &c)| scores[id as usize] = c as f64),
                    None => scores[KEEP_ID as usize] = 1.0,
                }
                scores
            })
            .collect()
    }

    fn classify(&self, sentence: &TokenizedSentence) -> Vec<InstructionId> {
        self.model.classify_with(self.kind, sentence)
    }
}

/// Restores one stripped sentence. Unknown ids and a wrong number of
/// predictions degrade to `<KEEP>`; impossible instructions are no-ops.
pub fn restore_sentence(
    classifier: &dyn InstructionClassifier,
    set: &InstructionSet,
    segmenter: &Segmenter,
    stripped: &str,
) -> String {
    let tokens = segmenter.segment(stripped);
    let mut ids = classifier.classify(&tokens);
    if ids.len() != tokens.len() {
        ids = vec![KEEP_ID; tokens.len()];
    }
    let keep = Instruction::keep();
    let restored: Vec<_> = tokens
        .tokens
        .iter()
        .zip(ids)
        .map(|(token, id)| {
            let instruction = set.instruction(id).unwrap_or(&keep);
            (token.span.clone(), instruction.apply(&token.surface))
        })
        .collect();
    detokenize(stripped, &restored).unwrap_or_else(|_| stripped.to_owned())
}

/// Restores sentences in parallel; output order matches input order.
pub fn restore_all<S: AsRef<str> + Sync>(
    classifier: &dyn InstructionClassifier,
    set: &InstructionSet,
    segmenter: &Segmenter,
    sentences: &[S],
) -> Vec<String> {
    sentences
        .par_iter()
        .map(|s| restore_sentence(classifier, set, segmenter, s.as_ref()))
        .collect()
}

/// Classifier backed by a subprocess speaking a line protocol: one line of
/// space-separated tokens in (continuations prefixed `##`), one line of
/// space-separated instruction ids out. Sentences without tokens are not
/// sent. Any protocol failure yields `<KEEP>` for the whole sentence.
pub struct ExternalScorer {
    num_instructions: usize,
    io: Mutex<(ChildStdin, BufReader<ChildStdout>)>,
    child: Child,
}

impl ExternalScorer {
    /// Starts `command` through `sh -c`.
    pub fn spawn(command: &str, num_instructions: usize) -> std::io::Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            num_instructions,
            io: Mutex::new((stdin, stdout)),
            child,
        })
    }

    fn query(&self, sentence: &TokenizedSentence) -> Option<Vec<InstructionId>> {
        let line: Vec<String> = sentence.tokens.iter().map(Token::display_form).collect();
        let mut io = self.io.lock().ok()?;
        let (stdin, stdout) = &mut *io;
        writeln!(stdin, "{}", line.join(" ")).ok()?;
        stdin.flush().ok()?;
        let mut reply = String::new();
        if stdout.read_line(&mut reply).ok()? == 0 {
            return None;
        }
        let ids: Vec<InstructionId> = reply
            .split_whitespace()
            .map(|id| id.parse().ok().filter(|&id: &InstructionId| (id as usize) < self.num_instructions))
            .collect::<Option<_>>()?;
        (ids.len() == sentence.len()).then_some(ids)
    }
}

impl InstructionClassifier for ExternalScorer {
    fn num_instructions(&self) -> usize {
        self.num_instructions
    }

    fn scores(&self, sentence: &TokenizedSentence) -> Vec<Vec<f64>> {
        self.classify(sentence)
            .into_iter()
            .map(|id| {
                let mut one_hot = vec![0.0; self.num_instructions.max(1)];
                one_hot[id as usize] = 1.0;
                one_hot
            })
            .collect()
    }

    fn classify(&self, sentence: &TokenizedSentence) -> Vec<InstructionId> {
        if sentence.is_empty() {
            return Vec::new();
        }
        self.query(sentence).unwrap_or_else(|| vec![KEEP_ID; sentence.len()])
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("model line {line}: {reason}")]
pub struct ModelFormatError {
    pub line: usize,
    pub reason: String,
}

fn model_error(line: usize, reason: impl Into<String>) -> ModelFormatError {
    ModelFormatError {
        line,
        reason: reason.into(),
    }
}

fn format_counts(counts: &Counts) -> String {
    counts
        .iter()
        .map(|(id, n)| format!("{id}:{n}"))
        .collect::<Vec<_>>()
        .join(" ")
}

impl FrequencyModel {
    /// Text serialization: header, embedded instruction set, count tables
    /// in sorted order, optional subword vocabulary, `#end` trailer.
    pub fn to_text(&self) -> String {
        let mut out = format!("{MODEL_MAGIC} segmenter={}\n", self.segmenter.name());
        out.push_str("@section instructions\n");
        out.push_str(&self.set.to_tsv());
        out.push_str("@section prior\n");
        for (id, n) in self.prior.iter().enumerate() {
            let _ = writeln!(out, "{id}\t{n}");
        }
        out.push_str("@section unigram\n");
        let mut forms: Vec<_> = self.unigram.iter().collect();
        forms.sort_by(|a, b| a.0.cmp(b.0));
        for (form, counts) in forms {
            let _ = writeln!(out, "{form}\t{}", format_counts(counts));
        }
        out.push_str("@section context\n");
        let mut keys: Vec<_> = self.context.iter().collect();
        keys.sort_by(|a, b| a.0.cmp(b.0));
        for ((prev, form, next), counts) in keys {
            let _ = writeln!(out, "{prev}\t{form}\t{next}\t{}", format_counts(counts));
        }
        if let Segmenter::Subword(vocab) = &self.segmenter {
            out.push_str("@section vocab\n");
            out.push_str(&vocab.to_text());
        }
        out.push_str("#end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ModelFormatError> {
        let lines: Vec<&str> = text.lines().collect();
        let header = lines.first().ok_or_else(|| model_error(1, "empty model file"))?;
        let segmenter_name = header
            .strip_prefix(MODEL_MAGIC)
            .and_then(|rest| rest.strip_prefix(" segmenter="))
            .ok_or_else(|| model_error(1, format!("unsupported model header {header:?}")))?;
        if lines.last() != Some(&"#end") {
            return Err(model_error(lines.len(), "missing #end trailer (truncated file?)"));
        }

        let mut sections: BTreeMap<&str, (usize, Vec<&str>)> = BTreeMap::new();
        let mut current: Option<&str> = None;
        for (n, line) in lines[1..lines.len() - 1].iter().enumerate() {
            if let Some(name) = line.strip_prefix("@section ") {
                if sections.insert(name, (n + 3, Vec::new())).is_some() {
                    return Err(model_error(n + 2, format!("duplicate section {name}")));
                }
                current = Some(name);
            } else {
                let name = current.ok_or_else(|| model_error(n + 2, "content before first section"))?;
                sections.get_mut(name).expect("section exists").1.push(line);
            }
        }
        let mut take = |name: &str| {
            sections
                .remove(name)
                .ok_or_else(|| model_error(lines.len(), format!("missing section {name}")))
        };

        let (first, body) = take("instructions")?;
        let set = InstructionSet::from_tsv(&(body.join("\n") + "\n"))
            .map_err(|e| model_error(first + e.line - 1, e.reason))?;
        let check_id = |line: usize, id: &str| -> Result<InstructionId, ModelFormatError> {
            id.parse::<InstructionId>()
                .ok()
                .filter(|&id| (id as usize) < set.len())
                .ok_or_else(|| model_error(line, format!("bad instruction id {id:?}")))
        };
        let parse_counts = |line: usize, field: &str| -> Result<Counts, ModelFormatError> {
            let mut counts = Counts::new();
            for pair in field.split(' ') {
                let (id, n) = pair
                    .split_once(':')
                    .ok_or_else(|| model_error(line, format!("bad count {pair:?}")))?;
                let n: u64 = n
                    .parse()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| model_error(line, format!("bad count {pair:?}")))?;
                counts.insert(check_id(line, id)?, n);
            }
            Ok(counts)
        };

        let (first, body) = take("prior")?;
        if body.len() != set.len() {
            return Err(model_error(first, "prior size differs from instruction set"));
        }
        let mut prior = Vec::with_capacity(body.len());
        for (n, line) in body.iter().enumerate() {
            let (id, count) = line
                .split_once('\t')
                .ok_or_else(|| model_error(first + n, "expected `id\\tcount`"))?;
            if check_id(first + n, id)? as usize != n {
                return Err(model_error(first + n, "prior ids out of sequence"));
            }
            prior.push(count.parse().map_err(|_| model_error(first + n, "bad prior count"))?);
        }

        let (first, body) = take("unigram")?;
        let mut unigram = HashMap::with_capacity(body.len());
        for (n, line) in body.iter().enumerate() {
            let (form, counts) = line
                .split_once('\t')
                .ok_or_else(|| model_error(first + n, "expected `form\\tcounts`"))?;
            unigram.insert(form.to_owned(), parse_counts(first + n, counts)?);
        }

        let (first, body) = take("context")?;
        let mut context = HashMap::with_capacity(body.len());
        for (n, line) in body.iter().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            let [prev, form, next, counts] = fields[..] else {
                return Err(model_error(first + n, "expected 4 fields"));
            };
            context.insert(
                (prev.to_owned(), form.to_owned(), next.to_owned()),
                parse_counts(first + n, counts)?,
            );
        }

        let segmenter = match (segmenter_name, take("vocab").ok()) {
            ("word", None) => Segmenter::Word,
            ("subword", Some((first, body))) => Segmenter::Subword(
                SubwordVocabulary::from_text(&(body.join("\n") + "\n"))
                    .map_err(|e| model_error(first + e.line - 1, e.reason))?,
            ),
            (name, _) => return Err(model_error(1, format!("segmenter {name:?} inconsistent with sections"))),
        };
        if let Some((name, (line, _))) = sections.into_iter().next() {
            return Err(model_error(line, format!("unknown section {name}")));
        }

        Ok(Self {
            set,
            segmenter,
            prior,
            unigram,
            context,
        })
    }
}
