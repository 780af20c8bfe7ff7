//! The fast construction against the direct estimator and the averaging
//! identity behind the method of conditional expectations.

use freeorder::derandomizer::*;
use freeorder::events::{onesec_family, Bucketing, PositiveEvent};
use freeorder::perm_core::{all_permutations, SemiRandomPermutation};
use num_rational::BigRational;
use num_traits::ToPrimitive;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn small_family() -> (Bucketing, Vec<PositiveEvent>) {
    onesec_family(5, 2).unwrap()
}

#[test]
fn averaging_identity_holds_for_every_prefix() {
    let (b, events) = small_family();
    let cfg = DerandomizerConfig::new(q(1, 3), 40).unwrap();
    let fixed: Vec<_> = all_permutations(5).step_by(17).take(3).collect();
    let state = EstimatorState::from_fixed(&events, &b, &fixed).unwrap();
    for order in all_permutations(5).step_by(7) {
        let order = order.to_vec();
        for r in 0..5 {
            let sp = SemiRandomPermutation::new(5, order[..r].to_vec()).unwrap();
            let here = estimator_value(&state, &sp, &events, &b, &cfg).unwrap();
            let unused = sp.unused();
            let mut sum = BigRational::from_integer(0.into());
            for &tau in &unused {
                sum += estimator_value(&state, &sp.extended(tau).unwrap(), &events, &b, &cfg).unwrap();
            }
            assert_eq!(here, sum / BigRational::from_integer((unused.len() as i64).into()), "prefix {:?}", &order[..r]);
        }
    }
}

#[test]
fn trace_matches_direct_estimator() {
    let (b, events) = small_family();
    let cfg = DerandomizerConfig::for_events(&events, q(1, 2)).unwrap();
    let out = construct_distribution(&events, &b, &cfg).unwrap();
    let entries = out.multiset.entries();
    for t in out.trace.iter().filter(|t| t.s >= 1 && t.s <= 4) {
        let state = EstimatorState::from_fixed(&events, &b, &entries[..t.s]).unwrap();
        let prefix = entries[t.s].to_vec()[..t.r].to_vec();
        let sp = SemiRandomPermutation::new(5, prefix).unwrap();
        let direct = estimator_value(&state, &sp, &events, &b, &cfg).unwrap().to_f64().unwrap();
        assert!((direct - t.phi).abs() <= 1e-12 * direct.abs().max(1e-300), "s={} r={}: {direct} vs {}", t.s, t.r, t.phi);
    }
    let first = &out.trace.iter().find(|t| t.s == 1 && t.r == 0).unwrap();
    assert!((first.phi / out.phi_initial.to_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn estimator_is_monotone_and_guarantee_holds() {
    let (b, events) = onesec_family(6, 2).unwrap();
    let cfg = DerandomizerConfig::for_events(&events, q(1, 4)).unwrap();
    let out = construct_distribution(&events, &b, &cfg).unwrap();
    let steps: Vec<f64> = out.trace.iter().filter(|t| t.s >= 1).map(|t| t.phi).collect();
    assert!(steps.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    assert!(out.phi_initial < BigRational::from_integer(1.into()));
    let counts = event_frequencies(&out.multiset, &events, &b).unwrap();
    verify_frequencies(&counts, &events, &cfg.delta, cfg.ell).unwrap();
}

#[test]
fn construction_is_deterministic() {
    let (b, events) = small_family();
    let cfg = DerandomizerConfig::for_events(&events, q(1, 2)).unwrap();
    let a = construct_distribution(&events, &b, &cfg).unwrap();
    let c = construct_distribution(&events, &b, &cfg).unwrap();
    assert_eq!(a.multiset, c.multiset);
    assert_eq!(a.trace_jsonl(), c.trace_jsonl());
}
