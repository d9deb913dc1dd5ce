use proptest::prelude::*;

use diacrit::analysis::{
    annotation_rows, categorize_verdicts, confusion_report, export_annotation_items, read_annotations, Context,
    Misprediction, Verdict,
};
use diacrit::corpus::{build_parallel, corpus_stats, words, IngestOptions, MaskedParallelCorpus, ParallelEntry};
use diacrit::evaluate::alpha_word_accuracy;
use diacrit::instructions::{extract_instruction_set, Instruction};
use diacrit::m2::{parse_m2, realize_targets};
use diacrit::marks::{fold_case, skeleton, strip_diacritics};
use diacrit::restore::{restore_sentence, train_frequency_model, BaselineKind};
use diacrit::tokenize::Segmenter;

const WORDS: [&str; 16] = [
    "dítě", "malé", "kůň", "Žena", "řeka", "byl", "je", "a", ",", ".", "Šťastný", "město", "úl", "déšť", "2024", "x1",
];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(&WORDS[..]), 0..10).prop_map(|w| w.join(" "))
}

fn corpus_of(lines: &[String]) -> MaskedParallelCorpus {
    MaskedParallelCorpus::new("p", lines.iter().map(|g| ParallelEntry::from_gold(g.clone())).collect()).unwrap()
}

fn text() -> impl Strategy<Value = String> {
    "[a-zA-Záčéěíňóřšťúůýž ,.\n\t]{0,80}"
}

proptest! {
    #[test]
    fn keep_is_identity(token in "\\PC{0,20}") {
        prop_assert_eq!(Instruction::keep().apply(&token), token);
    }

    #[test]
    fn build_parallel_output_is_valid(text in text()) {
        let corpus = build_parallel(&text, &IngestOptions::default());
        prop_assert!(MaskedParallelCorpus::new("copy", corpus.entries().to_vec()).is_ok());
    }

    #[test]
    fn corpus_stats_add_over_concatenation(a in prop::collection::vec(sentence(), 0..6),
                                           b in prop::collection::vec(sentence(), 0..6)) {
        let joined: Vec<String> = a.iter().chain(&b).cloned().collect();
        prop_assert_eq!(corpus_stats(&corpus_of(&joined)), corpus_stats(&corpus_of(&a)) + corpus_stats(&corpus_of(&b)));
    }

    #[test]
    fn m2_targets_keep_shape(sentences in prop::collection::vec(
        (prop::collection::vec(prop::sample::select(&WORDS[..]), 1..8),
         prop::collection::vec((0usize..9, 0usize..3, prop::sample::select(&WORDS[..]), any::<bool>()), 0..4)),
        1..5)) {
        let mut text = String::new();
        for (tokens, edits) in &sentences {
            let source: Vec<String> = tokens.iter().map(|t| strip_diacritics(t)).collect();
            text.push_str(&format!("S {}\n", source.join(" ")));
            let mut taken = 0;
            for (start, len, word, diacritic) in edits {
                let start = (*start).max(taken);
                let end = start + len;
                if end > source.len() {
                    break;
                }
                let correction = if *diacritic && *len == 1 {
                    // Same base letters, possibly different marks.
                    let pick = WORDS.iter().find(|w| skeleton(w) == fold_case(&source[start])).unwrap_or(word);
                    (*pick).to_owned()
                } else {
                    (*word).to_owned()
                };
                text.push_str(&format!("A {start} {end}|||X|||{correction}|||REQUIRED|||-NONE-|||0\n"));
                taken = end.max(start + 1);
            }
            text.push('\n');
        }
        let doc = parse_m2(&text).unwrap();
        let corpus = realize_targets(&doc, 0).unwrap();
        for (entry, sentence) in corpus.entries().iter().zip(&doc.sentences) {
            prop_assert_eq!(words(&entry.gold).count(), sentence.tokens.len());
            for ((g, s), keep) in words(&entry.gold).zip(words(&entry.stripped)).zip(&entry.mask) {
                if *keep {
                    prop_assert_eq!(strip_diacritics(&fold_case(g)), fold_case(s));
                }
            }
        }
    }

    #[test]
    fn restores_its_own_training_sentence(picks in prop::collection::vec(0usize..WORDS.len(), 0..12)) {
        // Every word in WORDS has a distinct skeleton, so counts never conflict.
        let sentence: Vec<&str> = picks.iter().map(|&i| WORDS[i]).collect();
        let sentence = sentence.join(" ");
        let seg = Segmenter::Word;
        let (set, _) = extract_instruction_set(&[&sentence], 1, &seg);
        let model = train_frequency_model(&[&sentence], &set, &seg);
        for kind in [BaselineKind::Unigram, BaselineKind::Trigram] {
            let out = restore_sentence(&model.baseline(kind), &set, &seg, &strip_diacritics(&sentence));
            prop_assert_eq!(&out, &sentence);
        }
    }

    #[test]
    fn restoration_preserves_length_and_whitespace(train in prop::collection::vec(sentence(), 1..5), input in text()) {
        let seg = Segmenter::Word;
        let (set, _) = extract_instruction_set(&train, 1, &seg);
        let model = train_frequency_model(&train, &set, &seg);
        let out = restore_sentence(&model.baseline(BaselineKind::Trigram), &set, &seg, &input);
        prop_assert_eq!(out.chars().count(), input.chars().count());
        for (a, b) in out.chars().zip(input.chars()) {
            prop_assert_eq!(a.is_whitespace(), b.is_whitespace());
        }
        prop_assert_eq!(strip_diacritics(&out), strip_diacritics(&input));
    }

    #[test]
    fn accuracy_ignores_sentence_order(gold in prop::collection::vec(sentence(), 1..8), seed in any::<u64>()) {
        let hyp: Vec<String> = gold.iter().enumerate()
            .map(|(i, g)| if (seed >> (i % 64)) & 1 == 1 { strip_diacritics(g) } else { g.clone() })
            .collect();
        let mut order: Vec<usize> = (0..gold.len()).collect();
        order.rotate_left((seed % gold.len() as u64) as usize);
        order.reverse();
        let permute = |v: &[String]| order.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
        let a = alpha_word_accuracy(&hyp, &corpus_of(&gold), false);
        let b = alpha_word_accuracy(&permute(&hyp), &corpus_of(&permute(&gold)), false);
        prop_assert_eq!(a.map(|r| (r.correct, r.evaluated)), b.map(|r| (r.correct, r.evaluated)));
    }

    #[test]
    fn verdict_counts_add_up(items in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>()), 1..60)) {
        let mispredictions: Vec<Misprediction> = (0..items.len()).map(|i| misprediction(i, Context::default())).collect();
        let mut rows = annotation_rows(&mispredictions);
        for (row, (sys, gold, typo, in_sentence)) in rows.chunks_mut(2).zip(&items) {
            for (r, ok) in row.iter_mut().zip([sys, gold]) {
                r.verdict = Some(Verdict { correct_in_sentence: *in_sentence, correct_in_context: *ok, has_typo: *typo });
            }
        }
        let report = categorize_verdicts(&rows).unwrap();
        prop_assert_eq!(report.items, items.len());
        prop_assert_eq!(report.typo_excluded + report.analyzed, items.len());
        prop_assert_eq!(report.counts.iter().sum::<usize>(), report.analyzed);
        if report.analyzed > 0 {
            let total: u64 = report.percentages.iter().sum();
            prop_assert!((98..=102).contains(&total), "{:?}", report.percentages);
        }
    }

    #[test]
    fn confusion_counts_sum(pairs in prop::collection::vec((0usize..4, 0usize..4), 0..40)) {
        let input: Vec<Misprediction> = pairs.iter().map(|&(a, b)| {
            let mut m = misprediction(0, Context::default());
            m.system = WORDS[a].to_owned();
            m.gold = WORDS[b].to_owned();
            m
        }).collect();
        let report = confusion_report(&input);
        prop_assert_eq!(report.iter().map(|c| c.count).sum::<usize>(), input.len());
    }

    #[test]
    fn export_is_loss_free(contexts in prop::collection::vec(
        prop::collection::vec("[a-zA-Zčř ,.]{0,20}", 6), 0..10)) {
        let items: Vec<Misprediction> = contexts.iter().enumerate().map(|(i, c)| misprediction(i, Context {
            before_previous: c[0].clone(),
            previous: c[1].clone(),
            current_start: c[2].clone(),
            current_end: c[3].clone(),
            next: c[4].clone(),
            after_next: c[5].clone(),
        })).collect();
        let read = read_annotations(&export_annotation_items(&items)).unwrap();
        prop_assert_eq!(read, annotation_rows(&items));
    }
}

fn misprediction(i: usize, context: Context) -> Misprediction {
    Misprediction {
        document: 0,
        sentence: i,
        word: 0,
        source: "dite".into(),
        system: "díte".into(),
        gold: "dítě".into(),
        context,
    }
}
