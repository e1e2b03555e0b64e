use matchrep_core::numkit::argmax;
use matchrep_core::synthgen::{sample_dataset, true_potential_means, SyntheticConfig};

fn preset(seed: u64) -> matchrep_core::datamodel::Dataset {
    sample_dataset(&SyntheticConfig { seed, ..SyntheticConfig::biased_preset() }).unwrap()
}

#[test]
fn empirical_frequencies_follow_the_match_table() {
    let config = SyntheticConfig::biased_preset();
    let ds = preset(1);
    let m = ds.true_recipient_types().unwrap();
    let k = ds.true_donor_types().unwrap();
    let n = ds.len() as f64;
    let type0 = m.iter().filter(|&&v| v == 0).count() as f64;
    assert!((type0 / n - 0.5).abs() < 0.03);
    for (mi, row) in config.match_table.iter().enumerate() {
        let total = m.iter().filter(|&&v| v == mi).count() as f64;
        for (ki, &p) in row.iter().enumerate() {
            let hits = m.iter().zip(&k).filter(|&(&a, &b)| a == mi && b == ki).count() as f64;
            assert!((hits / total - p).abs() < 0.03, "P(k={ki}|m={mi}) = {}", hits / total);
        }
    }
    // The second recipient type rarely receives the first donor type.
    let m1 = m.iter().filter(|&&v| v == 1).count() as f64;
    let m1k0 = m.iter().zip(&k).filter(|&(&a, &b)| a == 1 && b == 0).count() as f64;
    assert!(m1k0 / m1 < 0.15);
}

#[test]
fn potentials_have_the_configured_moments() {
    let config = SyntheticConfig::biased_preset();
    let ds = preset(2);
    let m = ds.true_recipient_types().unwrap();
    let y = ds.true_potentials().unwrap();
    for mi in 0..2 {
        let rows: Vec<&Vec<f64>> = y.iter().zip(&m).filter(|(_, &t)| t == mi).map(|(r, _)| r).collect();
        let n = rows.len() as f64;
        for j in 0..3 {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = config.outcome_vars[mi][j].sqrt();
            assert!((mean - config.outcome_means[mi][j]).abs() < 5.0 * sd / n.sqrt());
            assert!((var / config.outcome_vars[mi][j] - 1.0).abs() < 0.15);
        }
    }
    let u: Vec<f64> = ds.records.iter().map(|r| r.untreated_survival.unwrap()).collect();
    assert!(u.iter().all(|&v| v >= 1.0));
}

#[test]
fn the_best_donor_type_is_the_third_for_both_recipient_types() {
    let config = SyntheticConfig::biased_preset();
    for m in 1..=2 {
        assert_eq!(argmax(&true_potential_means(&config, m).unwrap()), 2);
    }
    let ds = preset(3);
    let y = ds.true_potentials().unwrap();
    let best3 = y.iter().filter(|r| argmax(r) == 2).count() as f64 / y.len() as f64;
    assert!(best3 > 0.99, "share with best type 3: {best3}");
}

#[test]
fn sampling_is_deterministic_in_the_seed() {
    let small = |seed| sample_dataset(&SyntheticConfig { n: 300, seed, ..SyntheticConfig::biased_preset() }).unwrap();
    assert_eq!(small(9), small(9));
    assert_ne!(small(9), small(10));
    // Frozen first record of seed 0; a change here means the sampling order moved.
    let first = &small(0).records[0];
    assert_eq!(first.recipient, [2.0337588704544904, 0.016926298210198885]);
    assert_eq!(first.donor, [2.500631887843741, 0.12344370171277252]);
    assert_eq!(first.true_recipient_type, Some(1));
    assert_eq!(first.true_donor_type, Some(2));
    assert_eq!(first.outcome, 888.0805972371686);
    assert_eq!(first.untreated_survival, Some(361.97175291597426));
}
