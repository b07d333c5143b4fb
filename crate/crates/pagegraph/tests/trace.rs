//! Cache policies replayed on synthetic page traces.

use pagegraph::trace::{make_policy, parse_trace, replay, replay_navis, scan_trace, skewed_trace, NavisReplay, PolicyKind};

#[test]
fn one_page_repeated_is_all_hits_after_the_first_miss() {
    let trace = vec![9u64; 1000];
    for kind in PolicyKind::ALL {
        let mut p = make_policy(kind, 8).unwrap();
        assert_eq!(replay(p.as_mut(), &trace).hits, 999, "{}", kind.name());
    }
}

#[test]
fn cyclic_scan_one_past_capacity_defeats_lru_but_not_navis() {
    let cap = 100;
    // Pages touched twice in a row get promoted; then the loop starts.
    let warm: Vec<u64> = (0..40).flat_map(|p| [p, p]).collect();
    let first = scan_trace(0, cap as u64 + 1, 1);
    let steady = scan_trace(0, cap as u64 + 1, 30);

    let mut lru = make_policy(PolicyKind::Lru, cap).unwrap();
    replay(lru.as_mut(), &warm);
    replay(lru.as_mut(), &first);
    assert_eq!(replay(lru.as_mut(), &steady).hits, 0);

    let mut navis = NavisReplay::new(cap).unwrap();
    replay(&mut navis, &warm);
    replay(&mut navis, &first);
    let r = replay(&mut navis, &steady);
    let frozen = navis.cache().frozen_len();
    assert!(frozen > 0);
    assert_eq!(r.hits, 30 * frozen as u64, "every frozen page hits once per round");
    assert_eq!(navis.cache().stats().frozen_evictions, 0);
}

#[test]
fn navis_beats_lru_on_a_skewed_trace() {
    let cap = 1000;
    let trace = skewed_trace(20_000, 800, 0.8, 200_000, 7);
    let mut lru = make_policy(PolicyKind::Lru, cap).unwrap();
    let lru_rate = replay(lru.as_mut(), &trace).hit_rate();
    let (navis, _) = replay_navis(cap, &trace).unwrap();
    assert!(navis.hit_rate() >= lru_rate + 0.05, "navis {} lru {lru_rate}", navis.hit_rate());
}

#[test]
fn one_shot_scan_leaves_the_frozen_region_alone() {
    let cap = 500;
    let warm = skewed_trace(10_000, 300, 0.9, 50_000, 3);
    let mut navis = NavisReplay::new(cap).unwrap();
    replay(&mut navis, &warm);
    let before = navis.cache().stats();
    let frozen_before = navis.cache().frozen_len();
    assert!(frozen_before > 0);

    replay(&mut navis, &scan_trace(1_000_000, 20_000, 1));
    let after = navis.cache().stats();
    assert_eq!(after.frozen_evictions, before.frozen_evictions);
    assert_eq!(navis.cache().frozen_len(), frozen_before);

    let hot: Vec<u64> = (0..300).collect();
    let mut lru = make_policy(PolicyKind::Lru, cap).unwrap();
    replay(lru.as_mut(), &warm);
    replay(lru.as_mut(), &scan_trace(1_000_000, 20_000, 1));
    assert_eq!(replay(lru.as_mut(), &hot).hits, 0);
    assert!(replay(&mut navis, &hot).hit_rate() > 0.5);
    navis.cache().audit().unwrap();
}

#[test]
fn lfu_evicts_the_least_frequent() {
    let mut p = make_policy(PolicyKind::Lfu, 2).unwrap();
    let r = replay(p.as_mut(), &[1, 1, 1, 2, 3, 1, 3, 2]);
    // 1 miss, 1 hit, 1 hit, 2 miss, 3 miss (evicts 2), 1 hit, 3 hit, 2 miss
    assert_eq!(r.hits, 4);
}

#[test]
fn zero_capacity_and_bad_traces_are_rejected() {
    assert!(make_policy(PolicyKind::Lru, 0).is_err());
    assert!(PolicyKind::parse("fifo").is_err());
    assert_eq!(parse_trace("# pages\n1\n\n 2 \n3").unwrap(), vec![1, 2, 3]);
    assert!(parse_trace("1\nx").is_err());
}
