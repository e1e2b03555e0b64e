use matchrep_core::allocsim::{
    build_stream, policy_select, run_policy, DonorArrival, EventStream, Fate, Oracle, Policy,
    RecipientArrival, Rule, Scorer, SimConfig, WaitlistEntry,
};
use matchrep_core::synthgen::{sample_dataset, SyntheticConfig};
use matchrep_core::ErrorKind;

fn typed(potentials: Vec<Vec<f64>>, donor_types: Vec<usize>) -> Scorer<'static> {
    Scorer::Typed { name: "test".into(), potentials, donor_types }
}

fn entry(recipient: usize, remaining: f64) -> WaitlistEntry {
    WaitlistEntry { recipient, arrival: recipient, remaining }
}

fn donor(id: usize) -> DonorArrival {
    DonorArrival { id, step: 0, features: Vec::new() }
}

fn dataset(n: usize, seed: u64) -> matchrep_core::datamodel::Dataset {
    sample_dataset(&SyntheticConfig { n, seed, ..SyntheticConfig::biased_preset() }).unwrap()
}

#[test]
fn utility_first_picks_the_higher_score() {
    let scorer = typed(vec![vec![10.0], vec![20.0]], vec![0]);
    let waitlist = [entry(0, 500.0), entry(1, 500.0)];
    let pick = policy_select(Policy::Plain(Rule::Uf), &waitlist, &donor(0), Some(&scorer), None).unwrap();
    assert_eq!(pick, Some(1));
}

#[test]
fn benefit_first_subtracts_remaining_untreated_survival() {
    let scorer = typed(vec![vec![1000.0], vec![900.0]], vec![0]);
    let waitlist = [entry(0, 950.0), entry(1, 100.0)];
    let select = |rule| policy_select(Policy::Plain(rule), &waitlist, &donor(0), Some(&scorer), None).unwrap();
    assert_eq!(select(Rule::Uf), Some(0));
    assert_eq!(select(Rule::Bf), Some(1));
    assert_eq!(select(Rule::Fcfs), Some(0));
}

#[test]
fn ties_go_to_the_earliest_arrival() {
    let scorer = typed(vec![vec![5.0]; 3], vec![0]);
    let waitlist = [entry(2, 10.0), entry(0, 10.0), entry(1, 10.0)];
    for rule in [Rule::Uf, Rule::Bf] {
        let pick = policy_select(Policy::Plain(rule), &waitlist, &donor(0), Some(&scorer), None).unwrap();
        assert_eq!(pick, Some(0));
    }
}

#[test]
fn guided_policies_restrict_to_recipients_whose_best_type_matches() {
    // Recipient 0 prefers type 0, recipient 1 prefers type 1.
    let scorer = typed(vec![vec![50.0, 30.0], vec![1.0, 20.0]], vec![1, 0]);
    let waitlist = [entry(0, 100.0), entry(1, 100.0)];
    let select = |d: usize| policy_select(Policy::Guided(Rule::Uf), &waitlist, &donor(d), Some(&scorer), None).unwrap();
    // Donor 0 has type 1: recipient 0 scores higher but only recipient 1 qualifies.
    assert_eq!(select(0), Some(1));
    assert_eq!(select(1), Some(0));
    let fcfs = policy_select(Policy::Guided(Rule::Fcfs), &waitlist, &donor(0), Some(&scorer), None).unwrap();
    assert_eq!(fcfs, Some(1));
    // Nobody prefers type 1 here, so everyone stays eligible.
    let only_first = [entry(0, 100.0)];
    let fallback = policy_select(Policy::Guided(Rule::Fcfs), &only_first, &donor(0), Some(&scorer), None).unwrap();
    assert_eq!(fallback, Some(0));
}

#[test]
fn empty_waitlist_discards_the_donor() {
    let scorer = typed(vec![vec![1.0]], vec![0]);
    for policy in Policy::TABLE {
        let pick = policy_select(policy, &[], &donor(0), Some(&scorer), Some(&[0])).unwrap();
        assert_eq!(pick, None);
    }
}

#[test]
fn zero_window_fcfs_replays_the_factual_pairing() {
    let ds = dataset(300, 4);
    let stream = build_stream(&ds, 0, 4).unwrap();
    assert_eq!(stream.len(), 2 * ds.len());
    let oracle = Oracle::from_dataset(&ds).unwrap();
    let cfg = SimConfig { window: 0, ..Default::default() };
    for policy in [Policy::Real, Policy::Plain(Rule::Fcfs)] {
        let report = run_policy(&stream, policy, None, &oracle, &cfg).unwrap();
        assert_eq!(report.transplanted, ds.len());
        for row in &report.ledger {
            assert_eq!(row.donor_id, Some(row.recipient_id));
            assert_eq!(row.realized_survival, Some(ds.records[row.recipient_id].outcome));
        }
    }
}

#[test]
fn identical_outcomes_make_utility_first_equal_first_come() {
    let mut ds = dataset(250, 5);
    for r in &mut ds.records {
        r.true_potentials = Some(vec![700.0; 3]);
    }
    let scorer = Scorer::oracle(&ds).unwrap();
    let oracle = Oracle::from_dataset(&ds).unwrap();
    let cfg = SimConfig::default();
    let stream = build_stream(&ds, cfg.window, 5).unwrap();
    let uf = run_policy(&stream, Policy::Plain(Rule::Uf), Some(&scorer), &oracle, &cfg).unwrap();
    let fcfs = run_policy(&stream, Policy::Plain(Rule::Fcfs), None, &oracle, &cfg).unwrap();
    assert_eq!(uf.ledger, fcfs.ledger);
}

#[test]
fn the_waitlist_clock_kills_recipients_after_their_untreated_survival() {
    let stream = EventStream {
        recipients: vec![
            RecipientArrival { id: 0, step: 0, features: Vec::new(), untreated_survival: 25.0 },
            RecipientArrival { id: 1, step: 1, features: Vec::new(), untreated_survival: 1000.0 },
        ],
        donors: vec![DonorArrival { id: 0, step: 4, features: Vec::new() }],
        factual: None,
    };
    let oracle = Oracle { potentials: vec![vec![300.0], vec![400.0]], donor_types: vec![0], recipient_types: None };
    let cfg = SimConfig { days_per_step: 10.0, ..Default::default() };
    let report = run_policy(&stream, Policy::Plain(Rule::Fcfs), None, &oracle, &cfg).unwrap();
    assert_eq!(report.ledger[0].fate, Fate::Dead);
    assert_eq!(report.ledger[0].step_of_fate, Some(2));
    assert_eq!(report.ledger[1].fate, Fate::Transplanted);
    assert_eq!(report.ledger[1].donor_id, Some(0));
    // Three clock ticks (steps 1, 2, 3) elapsed before the step-4 transplant.
    assert_eq!(report.ledger[1].benefit, Some(400.0 - 970.0));
    assert_eq!((report.dead, report.transplanted, report.waiting), (1, 1, 0));
    assert_eq!(report.death_rate, 0.5);
    assert_eq!(report.flipped_ratio, None);
}

#[test]
fn configuration_errors() {
    let ds = dataset(50, 6);
    let oracle = Oracle::from_dataset(&ds).unwrap();
    let cfg = SimConfig::default();
    let mut stream = build_stream(&ds, cfg.window, 6).unwrap();
    stream.factual = None;
    let err = run_policy(&stream, Policy::Real, None, &oracle, &cfg).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
    let err = run_policy(&stream, Policy::Plain(Rule::Bf), None, &oracle, &cfg).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
    let bad = SimConfig { days_per_step: -1.0, ..Default::default() };
    assert!(run_policy(&stream, Policy::Plain(Rule::Fcfs), None, &oracle, &bad).is_err());
    let mut unlabeled = ds.clone();
    unlabeled.records[3].untreated_survival = None;
    assert!(build_stream(&unlabeled, 10, 0).is_err());
}

#[test]
fn policy_names_round_trip() {
    for p in Policy::TABLE {
        assert_eq!(p.name().parse::<Policy>().unwrap(), p);
        assert_eq!(p.to_string(), p.name());
    }
    assert!("best".parse::<Policy>().is_err());
}
