//! Alpha-word accuracy, sentence-level bootstrap confidence intervals and
//! relative error reduction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{words, MaskedParallelCorpus};
use crate::marks::fold_case;

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("hypothesis has {hypothesis} sentences, gold has {gold}")]
    SentenceCount { hypothesis: usize, gold: usize },
    #[error("sentence {sentence}: hypothesis has {hypothesis} words, gold has {gold}")]
    LengthMismatch {
        sentence: usize,
        hypothesis: usize,
        gold: usize,
    },
    #[error("no evaluated words")]
    EmptyEvaluation,
    #[error("error reduction is undefined for a perfect baseline")]
    PerfectBaseline,
}

/// Per-sentence word counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SentenceScore {
    pub correct: u64,
    pub evaluated: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub correct: u64,
    pub evaluated: u64,
    pub accuracy: f64,
    /// Bootstrap interval, once computed.
    pub ci: Option<(f64, f64)>,
    pub resamples: usize,
    pub seed: u64,
}

impl EvalResult {
    /// Half the interval width in percentage points.
    pub fn half_width_percent(&self) -> Option<f64> {
        self.ci.map(|(lo, hi)| (hi - lo) * 50.0)
    }

    /// Tab-separated `correct evaluated accuracy ci_low ci_high resamples seed`.
    pub fn to_tsv(&self) -> String {
        let (lo, hi) = self.ci.map_or((String::from("NA"), String::from("NA")), |(lo, hi)| {
            (format!("{lo:.6}"), format!("{hi:.6}"))
        });
        format!(
            "{}\t{}\t{:.6}\t{lo}\t{hi}\t{}\t{}",
            self.correct, self.evaluated, self.accuracy, self.resamples, self.seed
        )
    }

    /// `accuracy ±halfwidth` in percent, e.g. `99.22 ±0.046`.
    pub fn summary(&self) -> String {
        let mut s = format!("{:.2}", self.accuracy * 100.0);
        if let Some(hw) = self.half_width_percent() {
            s.push_str(&format!(" ±{hw:.3}"));
        }
        format!(
            "alpha-word accuracy {s} ({} of {} words; {} resamples, seed {})",
            self.correct, self.evaluated, self.resamples, self.seed
        )
    }
}

/// A word is evaluated when it contains at least one alphabetic character.
pub fn is_alpha_word(word: &str) -> bool {
    word.chars().any(char::is_alphabetic)
}

pub fn words_match(hypothesis: &str, gold: &str, case_sensitive: bool) -> bool {
    if case_sensitive {
        hypothesis == gold
    } else {
        hypothesis == gold || fold_case(hypothesis) == fold_case(gold)
    }
}

/// Per-sentence counts of correct and evaluated words.
pub fn score_sentences<S: AsRef<str>>(
    hypotheses: &[S],
    corpus: &MaskedParallelCorpus,
    case_sensitive: bool,
) -> Result<Vec<SentenceScore>, EvalError> {
    if hypotheses.len() != corpus.len() {
        return Err(EvalError::SentenceCount {
            hypothesis: hypotheses.len(),
            gold: corpus.len(),
        });
    }
    hypotheses
        .iter()
        .zip(corpus.entries())
        .enumerate()
        .map(|(sentence, (hyp, entry))| {
            let hyp: Vec<&str> = words(hyp.as_ref()).collect();
            let gold: Vec<&str> = words(&entry.gold).collect();
            if hyp.len() != gold.len() {
                return Err(EvalError::LengthMismatch {
                    sentence,
                    hypothesis: hyp.len(),
                    gold: gold.len(),
                });
            }
            let mut score = SentenceScore::default();
            for ((h, g), keep) in hyp.iter().zip(&gold).zip(&entry.mask) {
                if *keep && is_alpha_word(g) {
                    score.evaluated += 1;
                    if words_match(h, g, case_sensitive) {
                        score.correct += 1;
                    }
                }
            }
            Ok(score)
        })
        .collect()
}

pub fn pooled(scores: &[SentenceScore]) -> Result<EvalResult, EvalError> {
    let correct: u64 = scores.iter().map(|s| s.correct).sum();
    let evaluated: u64 = scores.iter().map(|s| s.evaluated).sum();
    if evaluated == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    Ok(EvalResult {
        correct,
        evaluated,
        accuracy: correct as f64 / evaluated as f64,
        ci: None,
        resamples: 0,
        seed: 0,
    })
}

/// Alpha-word accuracy; the confidence interval is left unset.
pub fn alpha_word_accuracy<S: AsRef<str>>(
    hypotheses: &[S],
    corpus: &MaskedParallelCorpus,
    case_sensitive: bool,
) -> Result<EvalResult, EvalError> {
    pooled(&score_sentences(hypotheses, corpus, case_sensitive)?)
}

/// Percentile bootstrap over sentences.
///
/// Each replicate draws sentences (those with at least one evaluated word)
/// with replacement and pools their counts. Replicate `r` uses its own
/// ChaCha stream `r` under `seed`, so results do not depend on how replicates
/// are spread over threads. Percentiles use linear interpolation between
/// order statistics.
pub fn bootstrap_ci(
    scores: &[SentenceScore],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64), EvalError> {
    let sample: Vec<SentenceScore> = scores.iter().copied().filter(|s| s.evaluated > 0).collect();
    if sample.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let n = sample.len();
    let mut replicates: Vec<f64> = (0..resamples.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let (mut correct, mut evaluated) = (0u64, 0u64);
            for _ in 0..n {
                let s = sample[rng.random_range(0..n)];
                correct += s.correct;
                evaluated += s.evaluated;
            }
            correct as f64 / evaluated as f64
        })
        .collect();
    replicates.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((percentile(&replicates, alpha), percentile(&replicates, 1.0 - alpha)))
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Accuracy with its bootstrap interval.
pub fn evaluate<S: AsRef<str>>(
    hypotheses: &[S],
    corpus: &MaskedParallelCorpus,
    case_sensitive: bool,
    resamples: usize,
    seed: u64,
) -> Result<EvalResult, EvalError> {
    let scores = score_sentences(hypotheses, corpus, case_sensitive)?;
    let mut result = pooled(&scores)?;
    result.ci = Some(bootstrap_ci(&scores, resamples, DEFAULT_LEVEL, seed)?);
    result.resamples = resamples;
    result.seed = seed;
    Ok(result)
}

/// Relative error reduction in percent, `(new - baseline) / (1 - baseline)`,
/// rounded to the nearest integer. Accuracies are fractions in [0, 1].
pub fn error_reduction(baseline: f64, new: f64) -> Result<i64, EvalError> {
    if baseline >= 1.0 {
        return Err(EvalError::PerfectBaseline);
    }
    Ok(((new - baseline) / (1.0 - baseline) * 100.0).round() as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ParallelEntry;
    use crate::marks::strip_diacritics;

    fn corpus(gold: &[&str]) -> MaskedParallelCorpus {
        MaskedParallelCorpus::new("t", gold.iter().map(|g| ParallelEntry::from_gold(*g)).collect()).unwrap()
    }

    fn scores(pairs: &[(u64, u64)]) -> Vec<SentenceScore> {
        pairs
            .iter()
            .map(|&(correct, evaluated)| SentenceScore { correct, evaluated })
            .collect()
    }

    #[test]
    fn accuracy_skips_non_alphabetic_words() {
        let c = corpus(&["dítě je , malá"]);
        let r = alpha_word_accuracy(&["dítě je , malé"], &c, false).unwrap();
        assert_eq!((r.correct, r.evaluated), (2, 3));
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert!(r.ci.is_none());
        let r = alpha_word_accuracy(&["dítě je , malá"], &c, false).unwrap();
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn mixed_words_are_evaluated() {
        let c = corpus(&["H2O 1423 ."]);
        let r = alpha_word_accuracy(&["H2O 1423 ."], &c, false).unwrap();
        assert_eq!(r.evaluated, 1);
    }

    #[test]
    fn case_sensitivity_flag() {
        let c = corpus(&["Praha je"]);
        assert_eq!(alpha_word_accuracy(&["praha je"], &c, false).unwrap().correct, 2);
        assert_eq!(alpha_word_accuracy(&["praha je"], &c, true).unwrap().correct, 1);
    }

    #[test]
    fn error_paths() {
        let masked = MaskedParallelCorpus::new(
            "t",
            vec![ParallelEntry {
                stripped: "a b".into(),
                gold: "a b".into(),
                mask: vec![false, false],
            }],
        )
        .unwrap();
        assert_eq!(alpha_word_accuracy(&["a b"], &masked, false), Err(EvalError::EmptyEvaluation));
        let c = corpus(&["a b", "c"]);
        assert_eq!(
            alpha_word_accuracy(&["a b", "c d"], &c, false),
            Err(EvalError::LengthMismatch { sentence: 1, hypothesis: 2, gold: 1 })
        );
        assert_eq!(
            alpha_word_accuracy(&["a b"], &c, false),
            Err(EvalError::SentenceCount { hypothesis: 1, gold: 2 })
        );
        assert_eq!(bootstrap_ci(&scores(&[(0, 0)]), 10, 0.95, 1), Err(EvalError::EmptyEvaluation));
    }

    #[test]
    fn bootstrap_degenerate_cases() {
        assert_eq!(bootstrap_ci(&scores(&[(3, 3), (5, 5)]), 200, 0.95, 7).unwrap(), (1.0, 1.0));
        assert_eq!(bootstrap_ci(&scores(&[(2, 3)]), 200, 0.95, 7).unwrap(), (2.0 / 3.0, 2.0 / 3.0));
    }

    #[test]
    fn bootstrap_is_deterministic_and_thread_independent() {
        let data = scores(&[(3, 5), (4, 4), (0, 2), (7, 9), (1, 1), (2, 6)]);
        let a = bootstrap_ci(&data, 500, 0.95, 42).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| bootstrap_ci(&data, 500, 0.95, 42).unwrap());
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
        assert_ne!(a, bootstrap_ci(&data, 500, 0.95, 43).unwrap());
        let point = pooled(&data).unwrap().accuracy;
        assert!(a.0 <= point && point <= a.1);
    }

    #[test]
    fn percentile_interpolates() {
        let data = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&data, 0.0), 0.0);
        assert_eq!(percentile(&data, 0.5), 2.0);
        assert!((percentile(&data, 0.975) - 3.9).abs() < 1e-12);
        assert!((percentile(&data, 0.025) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn error_reduction_examples() {
        assert_eq!(error_reduction(0.9906, 0.9922), Ok(17));
        assert_eq!(error_reduction(0.9749, 0.9863), Ok(45));
        assert_eq!(error_reduction(0.9965, 0.9962), Ok(-9));
        assert_eq!(error_reduction(1.0, 1.0), Err(EvalError::PerfectBaseline));
    }

    /// Naive reference: re-split everything and compare word by word.
    fn naive_accuracy(hyp: &[String], gold: &[String], masks: &[Vec<bool>]) -> Option<(u64, u64)> {
        let mut correct = 0;
        let mut total = 0;
        for i in 0..gold.len() {
            let h: Vec<&str> = hyp[i].split(' ').filter(|w| !w.is_empty()).collect();
            let g: Vec<&str> = gold[i].split(' ').filter(|w| !w.is_empty()).collect();
            for j in 0..g.len() {
                if !masks[i][j] || !g[j].chars().any(|c| c.is_alphabetic()) {
                    continue;
                }
                total += 1;
                if h[j].to_lowercase() == g[j].to_lowercase() {
                    correct += 1;
                }
            }
        }
        (total > 0).then_some((correct, total))
    }

    proptest::proptest! {
        #[test]
        fn matches_naive_reference(
            sentences in proptest::collection::vec(
                proptest::collection::vec(("[a-cáčA-C,.0-9]{1,4}", proptest::bool::ANY, proptest::bool::ANY), 0..8),
                1..6,
            )
        ) {
            let gold: Vec<String> = sentences.iter().map(|s| s.iter().map(|w| w.0.clone()).collect::<Vec<_>>().join(" ")).collect();
            let hyp: Vec<String> = sentences.iter().map(|s| s.iter().map(|w| if w.2 { strip_diacritics(&w.0) } else { w.0.clone() }).collect::<Vec<_>>().join(" ")).collect();
            let masks: Vec<Vec<bool>> = sentences.iter().map(|s| s.iter().map(|w| w.1).collect()).collect();
            let entries = gold.iter().zip(&masks).map(|(g, m)| ParallelEntry { stripped: strip_diacritics(g), gold: g.clone(), mask: m.clone() }).collect();
            let c = MaskedParallelCorpus::new("p", entries).unwrap();
            match (alpha_word_accuracy(&hyp, &c, false), naive_accuracy(&hyp, &gold, &masks)) {
                (Ok(r), Some((correct, total))) => {
                    proptest::prop_assert_eq!((r.correct, r.evaluated), (correct, total));
                }
                (Err(EvalError::EmptyEvaluation), None) => {}
                (got, want) => proptest::prop_assert!(false, "{:?} vs {:?}", got, want),
            }
        }

        #[test]
        fn error_reduction_of_equal_accuracies_is_zero(a in 0.0f64..0.9999) {
            proptest::prop_assert_eq!(error_reduction(a, a), Ok(0));
        }
    }
}
