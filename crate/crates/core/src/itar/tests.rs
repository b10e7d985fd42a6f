use super::*;
use crate::corpus::build_cooccurrence;
use crate::harness::synth::{synth_corpus, SynthConfig};
use crate::model::{em_fit, init_model};
use ndarray::Array2;

fn quality(topic: usize, coherence: f64, degenerate: bool) -> TopicQuality {
    TopicQuality {
        topic,
        coherence_toptoken: coherence,
        coherence_intra: Some(coherence),
        top_words: vec![],
        size: 1.0,
        degenerate,
    }
}

fn plain_model(topics: usize) -> TopicModel<f64> {
    init_model(4, topics, 2, 0, vec![]).unwrap()
}

#[test]
fn thresholds_from_pool() {
    let pool: Vec<f64> = (1..=10).map(f64::from).collect();
    let th = compute_thresholds(&pool).unwrap();
    assert!((th.theta_good - 8.2).abs() < 1e-12);
    assert!((th.theta_bad - 2.8).abs() < 1e-12);
    let th = compute_thresholds(&[3.5; 7]).unwrap();
    assert_eq!((th.theta_good, th.theta_bad), (3.5, 3.5));
    assert!(compute_thresholds(&[]).is_err());
}

#[test]
fn threshold_rule_and_overrides() {
    let mut model = plain_model(5);
    model.roles[0] = TopicRole::Fixed { bank_ref: "g".into() };
    model.phi.column_mut(4).fill(0.0);
    let q = vec![quality(0, 9.0, false), quality(1, 9.0, false), quality(2, 5.0, false), quality(3, 1.0, false), quality(4, 9.0, true)];
    let th = Thresholds::new(8.0, 2.0);
    let labels = classify_topics(&model, &q, &th, QualityCriterion::Toptoken, &BTreeMap::new());
    assert_eq!(
        labels,
        vec![(1, TopicLabel::Good), (2, TopicLabel::Neutral), (3, TopicLabel::Bad), (4, TopicLabel::Neutral)]
    );
    let overrides = BTreeMap::from([(3, TopicLabel::Good)]);
    let relabeled = classify_topics(&model, &q, &th, QualityCriterion::Toptoken, &overrides);
    let changed: Vec<_> = labels.iter().zip(&relabeled).filter(|(a, b)| a != b).collect();
    assert_eq!(changed.len(), 1);
    assert_eq!(changed[0].1, &(3, TopicLabel::Good));
    assert_eq!(auto_label(8.0, &th), TopicLabel::Good);
    assert_eq!(auto_label(2.0, &th), TopicLabel::Bad);
}

#[test]
fn bank_grows_by_labeled_topics() {
    let model = plain_model(5);
    let q: Vec<_> = (0..5).map(|t| quality(t, t as f64, false)).collect();
    let mut bank = TopicBank::new();
    let labels = vec![
        (0, TopicLabel::Good),
        (1, TopicLabel::Good),
        (2, TopicLabel::Bad),
        (3, TopicLabel::Neutral),
        (4, TopicLabel::Neutral),
    ];
    let added = update_bank(&mut bank, &model, &labels, &q, QualityCriterion::Toptoken, 0).unwrap();
    assert_eq!(added.len(), 3);
    assert_eq!((bank.good_count(), bank.bad_count()), (2, 1));
    let before = bank.clone();
    let none: Vec<_> = (0..5).map(|t| (t, TopicLabel::Neutral)).collect();
    update_bank(&mut bank, &model, &none, &q, QualityCriterion::Toptoken, 1).unwrap();
    assert_eq!(bank, before);
    // a near copy of a banked topic is still appended
    update_bank(&mut bank, &model, &[(0, TopicLabel::Good)], &q, QualityCriterion::Toptoken, 2).unwrap();
    assert_eq!(bank.good_count(), 3);
}

#[test]
fn quota_and_stopping() {
    let th = Thresholds::new(1.0, 0.0);
    assert_eq!(ItarConfig::new(20, th.clone()).good_quota(), 18);
    assert_eq!(ItarConfig::new(50, th.clone()).good_quota(), 45);
    assert_eq!(ItarConfig::new(10, th.clone()).good_quota(), 9);

    let cfg = ItarConfig::new(20, th.clone());
    let model = plain_model(20);
    let q: Vec<_> = (0..20).map(|t| quality(t, 1.0, false)).collect();
    let mut bank = TopicBank::new();
    for i in 0..18 {
        if i == 17 {
            assert_eq!(check_stopping(&bank, &model, &q, &cfg), StopDecision::Continue);
        }
        let e = BankEntry {
            id: format!("g{i}"),
            label: BankLabel::Good,
            source_iteration: 0,
            coherence: 1.0,
            column: vec![0.25; 4],
        };
        bank.push(e).unwrap();
    }
    assert_eq!(check_stopping(&bank, &model, &q, &cfg), StopDecision::Stop(StopReason::GoodQuota));

    let mut intra_cfg = ItarConfig::new(20, th);
    intra_cfg.quality_criterion = QualityCriterion::Intratext;
    let mut q0 = q.clone();
    q0[5].coherence_intra = Some(0.0);
    let empty = TopicBank::new();
    assert_eq!(check_stopping(&empty, &model, &q0, &cfg), StopDecision::Continue);
    assert_eq!(check_stopping(&empty, &model, &q0, &intra_cfg), StopDecision::Stop(StopReason::ZeroIntra));

    let mut dead = plain_model(3);
    dead.phi.fill(0.0);
    let q3: Vec<_> = (0..3).map(|t| quality(t, 0.0, true)).collect();
    assert_eq!(check_stopping(&empty, &dead, &q3, &cfg), StopDecision::Stop(StopReason::DegenerateFree));
}

#[test]
fn ablation_names() {
    let all = Ablation::all();
    assert_eq!(all.len(), 8);
    let names: Vec<_> = all.iter().map(Ablation::model_name).collect();
    assert_eq!(names[0], "itar_0-0-0");
    assert_eq!(names[7], "itar_1-1-1");
    for a in &all {
        assert_eq!(a.to_string().parse::<Ablation>().unwrap(), *a);
    }
    assert!("1-1".parse::<Ablation>().is_err());
    assert!("1-2-1".parse::<Ablation>().is_err());
}

#[test]
fn config_json_defaults() {
    let cfg: ItarConfig = serde_json::from_str(r#"{"T": 20, "thresholds": {"theta_good": 1.0, "theta_bad": 0.5}}"#).unwrap();
    assert_eq!(cfg, ItarConfig::new(20, Thresholds::new(1.0, 0.5)));
    let mut bad = cfg.clone();
    bad.stop_good_fraction = 0.0;
    assert!(bad.validate().is_err());
    bad.stop_good_fraction = 1.0;
    bad.tau_fix = -1.0;
    assert!(bad.validate().is_err());
}

fn small_setup() -> (Corpus, CooccurrenceStats, ItarConfig) {
    let synth = synth_corpus(&SynthConfig::small(1)).unwrap();
    let cooc = build_cooccurrence(&synth.corpus);
    let mut cfg = ItarConfig::new(8, Thresholds::new(0.7, 0.3));
    cfg.em_iterations = 15;
    cfg.max_iterations = 4;
    cfg.top_words = 5;
    (synth.corpus, cooc, cfg)
}

#[test]
fn first_iteration_is_plain_base_model() {
    let (corpus, cooc, cfg) = small_setup();
    let trained = train_iteration::<f64>(&TopicBank::new(), &cfg, &corpus, &cooc, 0).unwrap();
    assert!(trained.stats.regularizer_names.iter().all(|n| !n.starts_with("fix") && !n.starts_with("sift")));

    let mut base = init_model::<f64>(corpus.num_tokens(), 8, corpus.num_documents(), 0, vec![]).unwrap();
    let roles = base.roles.clone();
    let ctx = ResolveContext::<f64>::new(corpus.num_tokens(), corpus.num_documents(), corpus.total_tokens(), &roles);
    let regs = build_all(&cfg.base.regularizers(0), &ctx).unwrap();
    em_fit(&mut base, &corpus, &regs, EmOptions { iterations: 15, workers: 1 }).unwrap();
    assert_eq!(base.phi, trained.model.phi);
}

#[test]
fn fixed_topics_start_from_bank_and_stay() {
    let (corpus, cooc, cfg) = small_setup();
    let mut bank = TopicBank::new();
    let (first, _) = run_iteration::<f64>(&mut bank, &cfg, &corpus, &cooc, 0).unwrap();
    assert!(bank.good_count() > 0, "thresholds too strict for the fixture");
    let trained = train_iteration::<f64>(&bank, &cfg, &corpus, &cooc, 1).unwrap();
    for (t, entry) in bank.with_label(BankLabel::Good).enumerate() {
        assert!(trained.model.roles[t].is_fixed());
        let col: Vec<f64> = trained.model.phi.column(t).to_vec();
        assert!(cosine(&col, &entry.column) > 0.999);
    }
    assert_eq!(trained.model.free_topics().len(), 8 - bank.good_count());
    assert_ne!(first.model.seed, trained.model.seed);
}

#[test]
fn itar_run_is_monotone_and_reproducible() {
    let (corpus, cooc, cfg) = small_setup();
    let a = run_itar::<f64>(&cfg, &corpus, &cooc).unwrap();
    let b = run_itar::<f64>(&cfg, &corpus, &cooc).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.bank, b.bank);
    for pair in a.history.windows(2) {
        assert!(pair[1].bank_good >= pair[0].bank_good);
    }
    for (i, r) in a.history.iter().enumerate() {
        assert_eq!(r.seed, i as u64);
        assert_eq!(r.fixed_topics + r.labels.len(), 8);
    }
    match a.stop_reason {
        StopReason::MaxIterations => assert_eq!(a.history.len(), cfg.max_iterations),
        _ => assert!(matches!(a.history.last().unwrap().stop, StopDecision::Stop(_))),
    }
}

#[test]
fn bank_larger_than_model_is_rejected() {
    let (corpus, cooc, cfg) = small_setup();
    let mut bank = TopicBank::new();
    let w = corpus.num_tokens();
    for i in 0..8 {
        let mut column = vec![0.0; w];
        column[i] = 1.0;
        bank.push(BankEntry { id: format!("g{i}"), label: BankLabel::Good, source_iteration: 0, coherence: 1.0, column })
            .unwrap();
    }
    assert!(matches!(
        train_iteration::<f64>(&bank, &cfg, &corpus, &cooc, 1),
        Err(ItarError::BankTooLarge { good: 8, topics: 8 })
    ));
}

#[test]
fn metrics_count_fixed_topics_as_good() {
    let corpus = crate::corpus::read_bow("d1 a:1 b:1 c:1 d:1\n".as_bytes()).unwrap();
    let mut model = plain_model(3);
    model.theta = Array2::from_elem((3, 1), 1.0 / 3.0);
    model.roles[0] = TopicRole::Fixed { bank_ref: "g".into() };
    let q: Vec<_> = (0..3).map(|t| quality(t, 1.0 + t as f64, false)).collect();
    let th = Thresholds::new(2.5, 0.5);
    let labels = classify_topics(&model, &q, &th, QualityCriterion::Toptoken, &BTreeMap::new());
    let m = model_metrics(&model, &corpus, &q, &th, QualityCriterion::Toptoken, Some(&labels)).unwrap();
    assert_eq!(m.good_topics, 2);
    assert!((m.coherence - 2.0).abs() < 1e-12);
    let unlabeled = model_metrics(&model, &corpus, &q, &th, QualityCriterion::Toptoken, None).unwrap();
    assert_eq!(unlabeled.good_topics, 1);
}
