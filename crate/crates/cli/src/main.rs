use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use diacrit::analysis::{
    ambiguity_stats, categorize_verdicts, collect_mispredictions, confusion_report, confusion_tsv,
    export_annotation_items, lexicon_filter, read_annotations, AnnotationFormatError, Lexicon, Misprediction,
    PairingError,
};
use diacrit::corpus::{corpus_paths, read_text, CorpusError, IngestOptions, MaskedParallelCorpus};
use diacrit::evaluate::{evaluate, EvalError, DEFAULT_RESAMPLES, DEFAULT_SEED};
use diacrit::instructions::{extract_instruction_set, InstructionSetFormatError};
use diacrit::m2::{parse_m2, realize_targets, M2FormatError};
use diacrit::marks::{normalize_romanian, strip_diacritics, MarkRegistry};
use diacrit::restore::{
    restore_all, train_frequency_model, BaselineKind, ExternalScorer, FrequencyModel, InstructionClassifier,
    ModelFormatError,
};
use diacrit::tokenize::{Segmenter, SubwordVocabulary, DEFAULT_VOCAB_SIZE};

#[derive(Parser)]
#[command(name = "diacrit", version, about = "Diacritics restoration toolkit")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, env = "DIACRIT_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Remove diacritics from text.
    Strip(Filter),
    /// Replace cedilla S/T by comma-below S/T.
    NormalizeRo(Filter),
    /// Print the precomposed-letter table as TSV.
    Registry,
    /// Count instructions in diacritized text and report the set size.
    ExtractInstructions(Extract),
    /// Train a frequency model on diacritized text.
    Train(Train),
    /// Restore diacritics in stripped text.
    Restore(Restore),
    /// Alpha-word accuracy with a bootstrap interval.
    Eval(Eval),
    /// Turn an M2 file into stripped, gold and mask files.
    M2Realize(M2Realize),
    /// Confusion counts of mispredicted words.
    ReportErrors(Errors),
    /// Annotation sheet with two rows per mispredicted word.
    ExportAnnotations(Export),
    /// Tally judged annotation sheets.
    CategorizeVerdicts(Verdicts),
    /// How often a stripped form admits several restorations.
    Ambiguity(Ambiguity),
}

#[derive(Args)]
struct Filter {
    /// Input file (standard input when omitted or `-`).
    input: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    ingest: Ingest,
}

#[derive(Args, Clone)]
struct Ingest {
    /// Language tag; `ro` turns on cedilla normalization.
    #[arg(long)]
    lang: Option<String>,
    /// Do not apply canonical composition to input lines.
    #[arg(long)]
    keep_composition: bool,
}

impl Ingest {
    fn options(&self) -> IngestOptions {
        IngestOptions {
            keep_composition: self.keep_composition,
            ..IngestOptions::for_language(self.lang.as_deref())
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Granularity {
    Word,
    Subword,
}

#[derive(Args)]
struct Segmentation {
    #[arg(long, value_enum, default_value_t = Granularity::Word)]
    granularity: Granularity,
    /// Subword vocabulary size.
    #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE)]
    vocab_size: usize,
}

impl Segmentation {
    fn segmenter(&self, sentences: &[String]) -> Segmenter {
        match self.granularity {
            Granularity::Word => Segmenter::Word,
            Granularity::Subword => Segmenter::Subword(SubwordVocabulary::learn(sentences, self.vocab_size)),
        }
    }
}

#[derive(Args)]
struct Extract {
    /// Diacritized training text, one sentence per line.
    train: PathBuf,
    #[arg(long, default_value_t = 2)]
    min_count: u64,
    #[command(flatten)]
    segmentation: Segmentation,
    /// Write the instruction set here.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    tsv: bool,
    #[command(flatten)]
    ingest: Ingest,
}

#[derive(Args)]
struct Train {
    train: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 2)]
    min_count: u64,
    #[command(flatten)]
    segmentation: Segmentation,
    #[command(flatten)]
    ingest: Ingest,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Keep,
    Unigram,
    Trigram,
}

impl From<BaselineArg> for BaselineKind {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::Keep => BaselineKind::Keep,
            BaselineArg::Unigram => BaselineKind::Unigram,
            BaselineArg::Trigram => BaselineKind::Trigram,
        }
    }
}

#[derive(Args)]
struct Restore {
    /// Stripped text (standard input when omitted or `-`).
    input: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BaselineArg::Trigram)]
    baseline: BaselineArg,
    /// External classifier command speaking the line protocol; replaces the
    /// frequency baseline.
    #[arg(long)]
    scorer: Option<String>,
    #[command(flatten)]
    ingest: Ingest,
}

#[derive(Args)]
struct GoldArgs {
    /// Restored text (`-` for standard input).
    #[arg(long = "hyp")]
    hypothesis: PathBuf,
    /// Reference text.
    #[arg(long)]
    gold: PathBuf,
    /// Stripped input aligned with gold (derived from gold when omitted).
    #[arg(long)]
    strip: Option<PathBuf>,
    /// Evaluation mask aligned with gold.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    case_sensitive: bool,
    #[command(flatten)]
    ingest: Ingest,
}

impl GoldArgs {
    fn paths(&self) -> Vec<&Path> {
        let mut paths = vec![self.hypothesis.as_path(), self.gold.as_path()];
        paths.extend(self.strip.as_deref());
        paths.extend(self.mask.as_deref());
        paths
    }

    fn load(&self) -> Result<(Vec<String>, MaskedParallelCorpus), Failure> {
        let options = self.ingest.options();
        let hypotheses = read_input(Some(&self.hypothesis))?.lines().map(|l| options.ingest(l)).collect();
        let corpus = MaskedParallelCorpus::read(&self.gold, self.strip.as_deref(), self.mask.as_deref(), &options)?;
        Ok((hypotheses, corpus))
    }
}

#[derive(Args)]
struct Eval {
    #[command(flatten)]
    gold: GoldArgs,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    resamples: usize,
    /// Only the TSV row; no summary on standard error.
    #[arg(long)]
    tsv: bool,
}

#[derive(Args)]
struct M2Realize {
    m2: PathBuf,
    /// Writes `<prefix>.strip.txt`, `<prefix>.gold.txt` and `<prefix>.mask.txt`.
    out_prefix: PathBuf,
    #[arg(long, default_value_t = 0)]
    annotator: u32,
    #[arg(long)]
    tsv: bool,
}

#[derive(Args)]
struct Errors {
    #[command(flatten)]
    gold: GoldArgs,
    /// Known word forms; see `export-annotations`.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    tsv: bool,
}

#[derive(Args)]
struct Export {
    #[command(flatten)]
    gold: GoldArgs,
    /// Known word forms, one per line with an optional tab-separated
    /// variant group. Pairs of known variants are left out of the sheet.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct Verdicts {
    sheet: PathBuf,
    #[arg(long)]
    tsv: bool,
}

#[derive(Args)]
struct Ambiguity {
    #[arg(long)]
    model: PathBuf,
    /// Number of ranked forms to list.
    #[arg(long, default_value_t = 20)]
    top: usize,
    #[arg(long)]
    tsv: bool,
}

enum Failure {
    Usage(String),
    Data { kind: &'static str, message: String },
}

macro_rules! data_error {
    ($($ty:ident),*) => {$(
        impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                Failure::Data { kind: stringify!($ty), message: e.to_string() }
            }
        }
    )*};
}

data_error!(
    CorpusError,
    EvalError,
    M2FormatError,
    ModelFormatError,
    InstructionSetFormatError,
    AnnotationFormatError,
    PairingError
);

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data {
            kind: "IoError",
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .expect("thread pool");
    match pool.install(|| run(cli.command, cli.seed)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("diacrit: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Data { kind, message }) => {
            eprintln!("diacrit: {kind}: {message}");
            ExitCode::from(1)
        }
    }
}

/// Every input must exist and every output must have an existing parent
/// before any work starts.
fn check_paths(inputs: &[&Path], outputs: &[&Path]) -> Result<(), Failure> {
    for path in inputs {
        if path != &Path::new("-") && !path.is_file() {
            return Err(Failure::Usage(format!("no such input file: {}", path.display())));
        }
    }
    for path in outputs {
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return Err(Failure::Usage(format!("no such output directory: {}", parent.display())));
        }
    }
    Ok(())
}

fn opt(path: &Option<PathBuf>) -> Vec<&Path> {
    path.as_deref().into_iter().collect()
}

fn read_input(path: Option<&Path>) -> Result<String, Failure> {
    match path {
        Some(p) if p != Path::new("-") => Ok(read_text(p)?),
        _ => {
            let mut text = String::new();
            io::stdin().read_to_string(&mut text)?;
            Ok(text)
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => Ok(diacrit::corpus::write_file(p, text)?),
        None => {
            let mut out = io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
                // A closed pipe (e.g. `| head`) is not an error.
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn map_lines(text: &str, f: impl Fn(&str) -> String) -> String {
    text.lines().map(|l| f(l) + "\n").collect()
}

fn load_model(path: &Path) -> Result<FrequencyModel, Failure> {
    let text = read_text(path)?;
    FrequencyModel::from_text(&text).map_err(|e| Failure::Data {
        kind: "ModelFormatError",
        message: format!("{}: {e}", path.display()),
    })
}

fn read_training(path: &Path, ingest: &Ingest) -> Result<Vec<String>, Failure> {
    let options = ingest.options();
    Ok(read_text(path)?
        .lines()
        .map(|l| options.ingest(l))
        .filter(|l| !l.trim().is_empty())
        .collect())
}

fn load_lexicon(path: Option<&Path>) -> Result<Option<Lexicon>, Failure> {
    path.map(|p| Ok(Lexicon::parse(&read_text(p)?))).transpose()
}

fn run(command: Command, seed: u64) -> Result<(), Failure> {
    match command {
        Command::Strip(f) => {
            check_paths(&opt(&f.input), &opt(&f.output))?;
            let options = f.ingest.options();
            let text = read_input(f.input.as_deref())?;
            write_output(f.output.as_deref(), &map_lines(&text, |l| strip_diacritics(&options.ingest(l))))
        }
        Command::NormalizeRo(f) => {
            check_paths(&opt(&f.input), &opt(&f.output))?;
            let options = f.ingest.options();
            let text = read_input(f.input.as_deref())?;
            write_output(f.output.as_deref(), &map_lines(&text, |l| normalize_romanian(&options.ingest(l))))
        }
        Command::Registry => write_output(None, &MarkRegistry::global().to_tsv()),
        Command::ExtractInstructions(a) => {
            check_paths(&[&a.train], &opt(&a.output))?;
            let sentences = read_training(&a.train, &a.ingest)?;
            let segmenter = a.segmentation.segmenter(&sentences);
            let (set, report) = extract_instruction_set(&sentences, a.min_count, &segmenter);
            if let Some(out) = &a.output {
                write_output(Some(out), &set.to_tsv())?;
            }
            let text = if a.tsv {
                format!(
                    "sentences\ttokens\tdistinct\tmin_count\tset_size\tskipped\n{}\t{}\t{}\t{}\t{}\t{}\n",
                    report.sentences,
                    report.tokens,
                    report.distinct_instructions,
                    a.min_count,
                    set.len(),
                    report.skipped.len()
                )
            } else {
                format!(
                    "instruction set size {} (min count {}, {} distinct, {} {} tokens in {} sentences, {} skipped)\n",
                    set.len(),
                    a.min_count,
                    report.distinct_instructions,
                    report.tokens,
                    segmenter.name(),
                    report.sentences,
                    report.skipped.len()
                )
            };
            write_output(None, &text)
        }
        Command::Train(a) => {
            check_paths(&[&a.train], &[&a.output])?;
            let sentences = read_training(&a.train, &a.ingest)?;
            let segmenter = a.segmentation.segmenter(&sentences);
            let (set, report) = extract_instruction_set(&sentences, a.min_count, &segmenter);
            let model = train_frequency_model(&sentences, &set, &segmenter);
            write_output(Some(&a.output), &model.to_text())?;
            eprintln!(
                "trained on {} sentences ({} skipped), {} instructions, {} forms",
                report.sentences,
                report.skipped.len(),
                set.len(),
                model.forms().count()
            );
            Ok(())
        }
        Command::Restore(a) => {
            let mut inputs = vec![a.model.as_path()];
            inputs.extend(a.input.as_deref());
            check_paths(&inputs, &opt(&a.output))?;
            let model = load_model(&a.model)?;
            let options = a.ingest.options();
            let text = read_input(a.input.as_deref())?;
            let lines: Vec<String> = text.lines().map(|l| options.ingest(l)).collect();
            let scorer;
            let baseline;
            let classifier: &dyn InstructionClassifier = match &a.scorer {
                Some(cmd) => {
                    scorer = ExternalScorer::spawn(cmd, model.instruction_set().len())?;
                    &scorer
                }
                None => {
                    baseline = model.baseline(a.baseline.into());
                    &baseline
                }
            };
            let restored = restore_all(classifier, model.instruction_set(), model.segmenter(), &lines);
            write_output(a.output.as_deref(), &restored.iter().map(|l| format!("{l}\n")).collect::<String>())
        }
        Command::Eval(a) => {
            check_paths(&a.gold.paths(), &[])?;
            if a.resamples == 0 {
                return Err(Failure::Usage("--resamples must be positive".into()));
            }
            let (hyp, corpus) = a.gold.load()?;
            let result = evaluate(&hyp, &corpus, a.gold.case_sensitive, a.resamples, seed)?;
            if !a.tsv {
                eprintln!("{}", result.summary());
            }
            write_output(None, &format!("{}\n", result.to_tsv()))
        }
        Command::M2Realize(a) => {
            let outputs = corpus_paths(&a.out_prefix);
            check_paths(&[&a.m2], &outputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
            let doc = parse_m2(&read_text(&a.m2)?)?;
            let corpus = realize_targets(&doc, a.annotator)?;
            corpus.write(&a.out_prefix)?;
            let stats = corpus.stats();
            let text = if a.tsv {
                format!(
                    "sentences\twords\tevaluated\n{}\t{}\t{}\n",
                    stats.sentences, stats.words, stats.evaluated
                )
            } else {
                format!(
                    "{} sentences, {} words, {} evaluated\n",
                    stats.sentences, stats.words, stats.evaluated
                )
            };
            write_output(None, &text)
        }
        Command::ReportErrors(a) => {
            let mut inputs = a.gold.paths();
            inputs.extend(a.lexicon.as_deref());
            check_paths(&inputs, &[])?;
            let (hyp, corpus) = a.gold.load()?;
            let found = collect_mispredictions(&hyp, &corpus, a.gold.case_sensitive)?;
            let found = match load_lexicon(a.lexicon.as_deref())? {
                Some(lexicon) => {
                    let split = lexicon_filter(&found, &lexicon);
                    eprintln!(
                        "lexicon: {} known variants, {} dubious gold, {} remaining",
                        split.auto_correct.len(),
                        split.dubious.len(),
                        split.remaining.len()
                    );
                    split.remaining
                }
                None => found,
            };
            let report = confusion_report(&found);
            let text = if a.tsv {
                confusion_tsv(&report)
            } else {
                let mut out = format!("{} mispredicted words\n", found.len());
                for c in &report {
                    out.push_str(&format!("{:>6}  {} -> {}\n", c.count, c.system, c.gold));
                    for s in &c.samples {
                        out.push_str(&format!("        {}\n", s.snippet()));
                    }
                }
                out
            };
            write_output(None, &text)
        }
        Command::ExportAnnotations(a) => {
            let mut inputs = a.gold.paths();
            inputs.extend(a.lexicon.as_deref());
            check_paths(&inputs, &opt(&a.output))?;
            let (hyp, corpus) = a.gold.load()?;
            let found = collect_mispredictions(&hyp, &corpus, a.gold.case_sensitive)?;
            let items: Vec<Misprediction> = match load_lexicon(a.lexicon.as_deref())? {
                Some(lexicon) => lexicon_filter(&found, &lexicon).remaining,
                None => found,
            };
            write_output(a.output.as_deref(), &export_annotation_items(&items))
        }
        Command::CategorizeVerdicts(a) => {
            check_paths(&[&a.sheet], &[])?;
            let rows = read_annotations(&read_text(&a.sheet)?)?;
            let report = categorize_verdicts(&rows)?;
            let text = if a.tsv { report.to_tsv() } else { format!("{report}\n") };
            write_output(None, &text)
        }
        Command::Ambiguity(a) => {
            check_paths(&[&a.model], &[])?;
            let report = ambiguity_stats(&load_model(&a.model)?);
            let mut text = if a.tsv {
                format!(
                    "forms\tambiguous_forms\tform_fraction\toccurrences\tambiguous_occurrences\toccurrence_fraction\n{}\t{}\t{:.6}\t{}\t{}\t{:.6}\n",
                    report.forms,
                    report.ambiguous_forms,
                    report.form_fraction(),
                    report.occurrences,
                    report.ambiguous_occurrences,
                    report.occurrence_fraction()
                )
            } else {
                format!(
                    "{} of {} forms ambiguous ({:.2}%), {} of {} occurrences ({:.2}%)\n",
                    report.ambiguous_forms,
                    report.forms,
                    report.form_fraction() * 100.0,
                    report.ambiguous_occurrences,
                    report.occurrences,
                    report.occurrence_fraction() * 100.0
                )
            };
            if a.tsv && a.top > 0 {
                text.push_str("form\toccurrences\tcandidates\n");
            }
            for form in report.ranked.iter().take(a.top) {
                let candidates: Vec<String> = form.candidates.iter().map(|(w, n)| format!("{w}:{n}")).collect();
                if a.tsv {
                    text.push_str(&format!("{}\t{}\t{}\n", form.form, form.occurrences, candidates.join(" ")));
                } else {
                    text.push_str(&format!("  {} ({}): {}\n", form.form, form.occurrences, candidates.join(", ")));
                }
            }
            write_output(None, &text)
        }
    }
}
