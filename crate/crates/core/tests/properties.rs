use approx::assert_relative_eq;
use itar_core::corpus::{build_cooccurrence, read_corpus, read_sequences, unigram_distribution, write_corpus, Corpus};
use itar_core::itar::{BankEntry, BankLabel, TopicBank};
use itar_core::metrics::{
    coherence_toptoken, diversity, model_perplexity, percentile, ppmi, word_topic_assignment, TopicPrior,
};
use itar_core::model::{em_fit, em_fit_observed, init_model, EmOptions};
use itar_core::regularizers::{Decorrelation, Regularizer, SmoothSparse};
use ndarray::Array2;
use proptest::prelude::*;

fn corpus_text(docs: &[Vec<u8>]) -> String {
    docs.iter()
        .enumerate()
        .map(|(d, toks)| {
            let words: Vec<String> = toks.iter().map(|t| format!("w{t}")).collect();
            format!("d{d}\t{}\n", words.join(" "))
        })
        .collect()
}

fn corpora() -> impl Strategy<Value = Corpus> {
    prop::collection::vec(prop::collection::vec(0u8..8, 1..15), 1..7)
        .prop_map(|docs| read_sequences(corpus_text(&docs).as_bytes()).unwrap())
}

fn stochastic(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(0.01f64..1.0, rows * cols).prop_map(move |v| {
        let mut m = Array2::from_shape_vec((rows, cols), v).unwrap();
        for mut c in m.columns_mut() {
            let s = c.sum();
            c /= s;
        }
        m
    })
}

fn columns_ok(m: &Array2<f64>) -> bool {
    m.columns().into_iter().all(|c| {
        let s: f64 = c.sum();
        c.iter().all(|&v| v >= 0.0) && ((s - 1.0).abs() < 1e-9 || s == 0.0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_format_round_trips(corpus in corpora()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        write_corpus(&corpus, &path).unwrap();
        prop_assert_eq!(read_corpus(&path).unwrap(), corpus);
    }

    #[test]
    fn vocabulary_filter_is_idempotent(corpus in corpora(), df_min in 1u32..3, df_max in 0.3f64..=1.0) {
        if let Ok(once) = corpus.filter_vocabulary(df_min, df_max) {
            prop_assert_eq!(once.filter_vocabulary(df_min, df_max).unwrap(), once);
        }
    }

    #[test]
    fn cooccurrence_counts_are_symmetric_and_bounded(corpus in corpora()) {
        let cooc = build_cooccurrence(&corpus);
        let w = corpus.num_tokens() as u32;
        for a in 0..w {
            let df = corpus.documents().iter().filter(|d| d.bow.iter().any(|&(t, _)| t == a)).count() as u32;
            prop_assert_eq!(cooc.token_doc_freq(a), df);
            for b in 0..w {
                let pair = cooc.pair_doc_freq(a, b);
                prop_assert_eq!(pair, cooc.pair_doc_freq(b, a));
                prop_assert!(pair <= cooc.token_doc_freq(a).min(cooc.token_doc_freq(b)));
                prop_assert!(ppmi(&cooc, a, b) >= 0.0);
            }
        }
        let top: Vec<u32> = (0..w).collect();
        prop_assert!(coherence_toptoken(&top, &cooc, top.len()) >= 0.0);
    }

    #[test]
    fn unigram_distribution_sums_to_one(corpus in corpora()) {
        let p = unigram_distribution::<f64>(&corpus).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn plsa_stays_stochastic_and_never_loses_likelihood(corpus in corpora(), topics in 1usize..5, seed in 0u64..1000) {
        let mut model = init_model::<f64>(corpus.num_tokens(), topics, corpus.num_documents(), seed, vec![]).unwrap();
        let mut ok = true;
        let stats = em_fit_observed(&mut model, &corpus, &[], EmOptions { iterations: 15, workers: 1 }, |_, m| {
            ok &= columns_ok(&m.phi) && columns_ok(&m.theta);
        }).unwrap();
        prop_assert!(ok);
        let mut prev = stats.initial_log_likelihood;
        for &ll in &stats.log_likelihood {
            prop_assert!(ll >= prev - 1e-9 * prev.abs(), "{} < {}", ll, prev);
            prev = ll;
        }
    }

    #[test]
    fn regularized_em_keeps_columns_stochastic_or_zero(
        corpus in corpora(),
        beta in -2.0f64..2.0,
        alpha in -2.0f64..2.0,
        tau in 0.0f64..5.0,
        seed in 0u64..100,
    ) {
        let topics = 3;
        let mut model = init_model::<f64>(corpus.num_tokens(), topics, corpus.num_documents(), seed, vec![]).unwrap();
        let regs: Vec<Box<dyn Regularizer<f64>>> = vec![
            Box::new(SmoothSparse::uniform(vec![0, 1, 2], beta, alpha)),
            Box::new(Decorrelation::new(vec![0, 1, 2], tau)),
        ];
        let mut ok = true;
        em_fit_observed(&mut model, &corpus, &regs, EmOptions { iterations: 10, workers: 1 }, |_, m| {
            ok &= columns_ok(&m.phi) && columns_ok(&m.theta);
        }).unwrap();
        prop_assert!(ok);
    }

    #[test]
    fn worker_count_does_not_change_the_fit(corpus in corpora(), workers in 2usize..5) {
        let fit = |w| {
            let mut m = init_model::<f64>(corpus.num_tokens(), 3, corpus.num_documents(), 1, vec![]).unwrap();
            em_fit(&mut m, &corpus, &[], EmOptions { iterations: 5, workers: w }).unwrap();
            m
        };
        let (a, b) = (fit(1), fit(workers));
        for (x, y) in a.phi.iter().zip(b.phi.iter()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn diversity_ignores_topic_order(phi in stochastic(6, 4), perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle()) {
        let mut permuted = phi.clone();
        for (to, &from) in perm.iter().enumerate() {
            permuted.column_mut(to).assign(&phi.column(from));
        }
        let a = diversity(&phi, &[0, 1, 2, 3]).unwrap();
        let b = diversity(&permuted, &[0, 1, 2, 3]).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn assignment_ignores_common_rescaling_of_sizes(
        phi in stochastic(7, 3),
        sizes in prop::collection::vec(0.1f64..100.0, 3),
        scale in 0.01f64..100.0,
    ) {
        let scaled: Vec<f64> = sizes.iter().map(|s| s * scale).collect();
        prop_assert_eq!(
            word_topic_assignment(&phi, &sizes, TopicPrior::TopicSize),
            word_topic_assignment(&phi, &scaled, TopicPrior::TopicSize)
        );
    }

    #[test]
    fn percentile_is_monotone(values in prop::collection::vec(-10.0f64..10.0, 1..30), q1 in 0.0f64..=1.0, q2 in 0.0f64..=1.0) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(percentile(&values, lo).unwrap() <= percentile(&values, hi).unwrap());
    }

    #[test]
    fn bank_round_trips_through_jsonl(corpus in corpora(), phi_seed in 0u64..100) {
        let mut model = init_model::<f64>(corpus.num_tokens(), 2, corpus.num_documents(), phi_seed, vec![]).unwrap();
        em_fit(&mut model, &corpus, &[], EmOptions { iterations: 3, workers: 1 }).unwrap();
        let mut bank = TopicBank::new();
        for (t, label) in [(0, BankLabel::Good), (1, BankLabel::Bad)] {
            bank.push(BankEntry {
                id: TopicBank::make_id(label, 0, t),
                label,
                source_iteration: 0,
                coherence: 0.5,
                column: model.phi.column(t).to_vec(),
            }).unwrap();
        }
        let text = bank.to_jsonl(corpus.vocabulary());
        let back = TopicBank::read_jsonl(text.as_bytes(), corpus.vocabulary()).unwrap();
        prop_assert_eq!(back.len(), 2);
        for (a, b) in bank.entries().iter().zip(back.entries()) {
            prop_assert_eq!(&a.id, &b.id);
            for (x, y) in a.column.iter().zip(&b.column) {
                prop_assert!((x - y).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn single_and_double_precision_agree() {
    let synth = itar_core::harness::synth::synth_corpus(&itar_core::harness::synth::SynthConfig::small(9)).unwrap();
    let corpus = &synth.corpus;
    let mut a = init_model::<f64>(corpus.num_tokens(), 5, corpus.num_documents(), 4, vec![]).unwrap();
    let mut b = init_model::<f32>(corpus.num_tokens(), 5, corpus.num_documents(), 4, vec![]).unwrap();
    em_fit(&mut a, corpus, &[], EmOptions::default()).unwrap();
    em_fit(&mut b, corpus, &[], EmOptions::default()).unwrap();
    assert_relative_eq!(model_perplexity(&a, corpus).unwrap(), model_perplexity(&b, corpus).unwrap(), max_relative = 1e-3);
}
