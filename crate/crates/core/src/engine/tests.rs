use super::*;
use crate::dataset::{synth_dataset, Exemplar};

fn record(id: &str, vec: Vec<f64>, label: &str) -> ExampleRecord {
    ExampleRecord {
        id: id.to_string(),
        vec,
        label: Some(label.to_string()),
        text: None,
    }
}

fn exemplar(class: &str, vec: Vec<f64>) -> Exemplar {
    Exemplar {
        class_id: class.to_string(),
        vec,
        text: None,
    }
}

/// `n` examples of class A; class B has an exemplar but no pool examples.
fn absent_b_pool(n: usize) -> Arc<Dataset> {
    let examples = (0..n)
        .map(|i| record(&format!("a{i:03}"), vec![i as f64 * 0.01, 0.0], "A"))
        .collect();
    let exemplars = vec![exemplar("A", vec![0.0, 0.0]), exemplar("B", vec![5.0, 5.0])];
    Arc::new(Dataset::new(examples, exemplars).unwrap())
}

fn synth(seed: u64) -> Arc<Dataset> {
    Arc::new(synth_dataset(3, 4, &[40, 40, 40], 4.0, seed).unwrap())
}

fn oracle(r: &ExampleRecord) -> Option<String> {
    r.label.clone()
}

#[test]
fn new_session_starts_searching_every_class() {
    let data = synth(1);
    let s = Session::new(RunConfig::default(), data.clone()).unwrap();
    assert_eq!(s.lifecycles().len(), 3);
    assert!(s.lifecycles().iter().all(|lc| lc.status == ClassStatus::Searching));
    assert_eq!(s.phase(), Phase::Search);
    assert_eq!(s.spent(), 0);
    assert!(s.model().is_none());

    let again = Session::new(RunConfig::default(), data).unwrap();
    let lambdas = |s: &Session| s.lifecycles().iter().map(|lc| lc.lambda).collect::<Vec<_>>();
    assert_eq!(lambdas(&s), lambdas(&again));
    assert!(lambdas(&s).iter().all(|l| l.is_some_and(|l| l > 0.0)));
}

#[test]
fn invalid_config_is_rejected() {
    let err = Session::new(
        RunConfig {
            gamma: 1.0,
            ..Default::default()
        },
        synth(1),
    )
    .unwrap_err();
    assert!(matches!(err, EngineError::Config(ref e) if e.field == "gamma"));
}

#[test]
fn fresh_session_searches() {
    let mut s = Session::new(RunConfig::default(), synth(2)).unwrap();
    let t = s.next_query().unwrap();
    // Fewest draws, then lexicographic.
    assert_eq!(
        t.mode,
        QueryMode::ExemplarSearch {
            class_id: "class_0".into()
        }
    );
    assert!(t.prob_at_draw > 0.0 && t.prob_at_draw <= 1.0);
    assert!(!t.free_lookup);
}

#[test]
fn tickets_must_alternate() {
    let mut s = Session::new(RunConfig::default(), synth(3)).unwrap();
    let t = s.next_query().unwrap();
    assert!(matches!(s.next_query(), Err(EngineError::TicketOutstanding(id)) if id == t.ticket_id));
    assert!(matches!(
        s.submit_label(t.ticket_id + 1, "class_0"),
        Err(EngineError::StaleTicket(_))
    ));
    assert!(matches!(s.submit_label(t.ticket_id, "  "), Err(EngineError::EmptyLabel)));
    s.submit_label(t.ticket_id, "class_0").unwrap();
    assert!(matches!(
        s.submit_label(t.ticket_id, "class_0"),
        Err(EngineError::StaleTicket(_))
    ));
}

#[test]
fn first_label_finds_class_and_stops_its_search() {
    let mut s = Session::new(RunConfig::default(), synth(4)).unwrap();
    let t = s.next_query().unwrap();
    let events = s.submit_label(t.ticket_id, "class_1").unwrap();
    assert!(events.contains(&Event::ClassFound {
        class_id: "class_1".into()
    }));
    assert_eq!(s.lifecycle("class_1").unwrap().status, ClassStatus::Found);
    for _ in 0..30 {
        let t = s.next_query().unwrap();
        assert_ne!(
            t.mode,
            QueryMode::ExemplarSearch {
                class_id: "class_1".into()
            }
        );
        let label = s.dataset().examples[t.example_index].label.clone().unwrap();
        s.submit_label(t.ticket_id, &label).unwrap();
    }
}

#[test]
fn absent_class_is_ruled_out_at_the_closed_form_draw() {
    // With p_hat = 0 the upper bound is 1 - delta^(1/n); for gamma = delta = 0.05
    // it first drops below gamma at n = ceil(ln 20 / -ln 0.95) = 59.
    let config = RunConfig {
        gamma: 0.05,
        delta: 0.05,
        budget: 200,
        batch_size: 200,
        strategy: Strategy::EpsilonGreedy,
        epsilon: 1.0,
        ..Default::default()
    };
    let mut s = Session::new(config, absent_b_pool(200)).unwrap();
    let mut ruled_out_at = None;
    while ruled_out_at.is_none() {
        let t = s.next_query().unwrap();
        assert!(t.uniform_step);
        let events = s.submit_label(t.ticket_id, "A").unwrap();
        if events.contains(&Event::ClassRuledOut {
            class_id: "B".into(),
            p_hat: 0.0,
            sigma: s.lifecycle("B").unwrap().uniform.sigma,
        }) {
            ruled_out_at = Some(s.draws());
        }
        assert!(s.draws() <= 59);
    }
    assert_eq!(ruled_out_at, Some(59));
    assert_eq!(s.lifecycle("A").unwrap().status, ClassStatus::Found);
    assert_eq!(s.phase(), Phase::ActiveLearning);
}

#[test]
fn novel_label_creates_a_tracked_class() {
    let mut s = Session::new(RunConfig::default(), synth(5)).unwrap();
    for _ in 0..3 {
        let t = s.next_query().unwrap();
        s.submit_label(t.ticket_id, "class_0").unwrap();
    }
    let mut t = s.next_query().unwrap();
    while t.free_lookup {
        s.submit_label(t.ticket_id, "class_0").unwrap();
        t = s.next_query().unwrap();
    }
    let draws = s.draws() as u64;
    let events = s.submit_label(t.ticket_id, "sense_new").unwrap();
    assert!(events.contains(&Event::UnknownClassDiscovered {
        class_id: "sense_new".into()
    }));
    assert_eq!(s.lifecycles().len(), 4);
    let lc = s.lifecycle("sense_new").unwrap();
    assert!(!lc.known);
    assert_eq!(lc.status, ClassStatus::UnknownDiscovered);
    assert_eq!(lc.observations, 1);
    // The estimate covers every importance draw so far, not just the last.
    assert_eq!(lc.importance.n_draws, draws);
}

#[test]
fn repeated_draw_is_a_free_lookup() {
    let config = RunConfig {
        budget: 3,
        batch_size: 3,
        strategy: Strategy::Random,
        ..Default::default()
    };
    let examples = vec![
        record("x", vec![0.0], "A"),
        record("y", vec![1.0], "A"),
        record("z", vec![2.0], "A"),
    ];
    let data = Arc::new(Dataset::new(examples, vec![exemplar("A", vec![0.0])]).unwrap());
    let mut s = Session::new(config, data).unwrap();
    let mut seen_free = false;
    while s.phase() != Phase::Exhausted {
        let t = s.next_query().unwrap();
        let before = s.spent();
        if t.free_lookup {
            assert!(s.labeled().contains_key(&t.example_id));
            // The stored label wins over whatever is submitted.
            s.submit_label(t.ticket_id, "ignored").unwrap();
            assert_eq!(s.spent(), before);
            seen_free = true;
        } else {
            s.submit_label(t.ticket_id, "A").unwrap();
            assert_eq!(s.spent(), before + 1);
        }
        assert_eq!(s.spent(), s.labeled().len());
    }
    assert!(seen_free);
    assert_eq!(s.lifecycles().len(), 1);
    assert!(matches!(s.next_query(), Err(EngineError::Exhausted)));
}

#[test]
fn greedy_active_learning_picks_the_most_uncertain_unlabeled_point() {
    let examples = vec![
        record("p0", vec![-2.0], "A"),
        record("p1", vec![-1.0], "A"),
        record("p2", vec![0.1], "B"),
        record("p3", vec![1.0], "B"),
        record("p4", vec![2.0], "B"),
    ];
    let exemplars = vec![exemplar("A", vec![-2.0]), exemplar("B", vec![2.0])];
    let data = Arc::new(Dataset::new(examples, exemplars).unwrap());
    let config = RunConfig {
        budget: 4,
        batch_size: 2,
        epsilon: 0.0,
        ..Default::default()
    };
    let mut s = Session::new(config, data).unwrap();
    for (i, label) in [(0, "A"), (4, "B")] {
        let t = s.next_directed_query(i).unwrap();
        s.submit_label(t.ticket_id, label).unwrap();
    }
    assert_eq!(s.phase(), Phase::ActiveLearning);
    let model = s.model().unwrap().clone();

    let entropy = |x: f64| {
        let p = model.predict_proba(&[x]).unwrap().0;
        -p.iter().map(|q| q * q.ln()).sum::<f64>()
    };
    let expected = [1usize, 2, 3]
        .into_iter()
        .max_by(|&a, &b| entropy(s.dataset().examples[a].vec[0]).total_cmp(&entropy(s.dataset().examples[b].vec[0])))
        .unwrap();
    assert_eq!(expected, 2);
    let t = s.next_query().unwrap();
    assert_eq!(t.mode, QueryMode::Uncertainty);
    assert_eq!(t.example_index, expected);
    assert_eq!(t.prob_at_draw, 1.0);
}

#[test]
fn budget_zero_gives_an_empty_trajectory() {
    let mut s = Session::new(
        RunConfig {
            budget: 0,
            ..Default::default()
        },
        synth(6),
    )
    .unwrap();
    let steps = s.run_to_budget(oracle, |_| ()).unwrap();
    assert!(steps.is_empty());
    assert_eq!(s.termination(), Some(Termination::BudgetExhausted));
}

#[test]
fn missing_oracle_label_is_an_error() {
    let mut s = Session::new(RunConfig::default(), synth(7)).unwrap();
    let err = s.run_to_budget(|_| None, |_| ()).unwrap_err();
    assert!(matches!(err, EngineError::MissingLabel(_)));
}

fn run_all(strategy: Strategy, seed: u64) -> (Vec<TrajectoryStep<usize>>, Session) {
    let config = RunConfig {
        strategy,
        seed,
        budget: 60,
        batch_size: 10,
        gamma: 0.05,
        ..Default::default()
    };
    let mut s = Session::new(config, synth(8)).unwrap();
    let steps = s
        .run_to_budget(oracle, |s| s.model().map_or(0, |m| m.num_classes()))
        .unwrap();
    (steps, s)
}

#[test]
fn runs_are_deterministic_for_every_strategy() {
    for strategy in [
        Strategy::IwBoltzmann,
        Strategy::Hybrid,
        Strategy::EpsilonGreedy,
        Strategy::Random,
        Strategy::Uncertainty,
    ] {
        let (a, sa) = run_all(strategy, 11);
        let (b, _) = run_all(strategy, 11);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap(),
            "{strategy:?}"
        );
        assert!(sa.spent() <= 60);
        assert_eq!(sa.spent(), sa.labeled().len());
        assert_eq!(a.iter().filter(|s| s.metrics.is_some()).count(), 6, "{strategy:?}");
    }
}

#[test]
fn ruled_out_classes_are_not_classifier_targets() {
    let config = RunConfig {
        gamma: 0.05,
        delta: 0.05,
        budget: 200,
        batch_size: 20,
        strategy: Strategy::EpsilonGreedy,
        epsilon: 1.0,
        ..Default::default()
    };
    let mut s = Session::new(config, absent_b_pool(200)).unwrap();
    s.run_to_budget(oracle, |_| ()).unwrap();
    assert_eq!(s.lifecycle("B").unwrap().status, ClassStatus::RuledOut);
    assert_eq!(s.model().unwrap().class_ids, vec!["A".to_string()]);
}

#[test]
fn snapshot_resumes_the_same_trajectory() {
    let config = RunConfig {
        strategy: Strategy::Hybrid,
        seed: 5,
        budget: 50,
        batch_size: 10,
        ..Default::default()
    };
    let data = synth(9);
    let mut a = Session::new(config, data.clone()).unwrap();
    for _ in 0..23 {
        let t = a.next_query().unwrap();
        let label = oracle(&data.examples[t.example_index]).unwrap();
        a.submit_label(t.ticket_id, &label).unwrap();
    }
    // Snapshot with a ticket outstanding.
    let pending = a.next_query().unwrap();
    let json = a.snapshot().to_json().unwrap();
    let mut b = Session::restore(SessionSnapshot::from_json(&json).unwrap(), data.clone()).unwrap();
    assert_eq!(b.outstanding(), Some(&pending));
    for s in [&mut a, &mut b] {
        let label = oracle(&data.examples[pending.example_index]).unwrap();
        s.submit_label(pending.ticket_id, &label).unwrap();
    }
    let rest_a = a.run_to_budget(oracle, |_| ()).unwrap();
    let rest_b = b.run_to_budget(oracle, |_| ()).unwrap();
    assert_eq!(rest_a, rest_b);
    assert_eq!(a.snapshot(), b.snapshot());
}

#[test]
fn snapshot_rejects_another_dataset() {
    let s = Session::new(RunConfig::default(), synth(10)).unwrap();
    let snap = s.snapshot();
    let err = Session::restore(snap, synth(11)).unwrap_err();
    assert!(matches!(err, EngineError::SnapshotMismatch(_)));
}
