mod common;

use abrsim::engine::run_session;
use common::{conservation, random_scenario};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sessions_conserve_time_and_data(seed in any::<u64>()) {
        let s = random_scenario(seed);
        let log = run_session(&s.trace, &s.ladder, &s.table, &s.config, seed).unwrap();
        prop_assert!(conservation(&log, &s.table, s.config.b_max).is_ok(), "{:?}", conservation(&log, &s.table, s.config.b_max));
    }

    #[test]
    fn downloads_follow_the_trace(seed in any::<u64>()) {
        let s = random_scenario(seed);
        let log = run_session(&s.trace, &s.ladder, &s.table, &s.config, seed).unwrap();
        for r in log.records.iter().filter(|r| r.complete) {
            // independent integration of the piecewise-constant rate
            let want = common_download(&s.trace, r.start, r.bits as f64);
            prop_assert!((r.end - r.start - want).abs() <= 1e-6 * want.max(1.0), "segment {}", r.k);
        }
    }

    #[test]
    fn sessions_are_deterministic(seed in any::<u64>()) {
        let s = random_scenario(seed);
        let a = run_session(&s.trace, &s.ladder, &s.table, &s.config, seed).unwrap();
        let b = run_session(&s.trace, &s.ladder, &s.table, &s.config, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}

fn common_download(trace: &abrsim::trace::ThroughputTrace, start: f64, bits: f64) -> f64 {
    let s = trace.samples();
    let mut got = 0.0;
    for (i, p) in s.iter().enumerate() {
        let end = s.get(i + 1).map_or(f64::INFINITY, |n| n.t);
        if end <= start {
            continue;
        }
        let from = p.t.max(start);
        let cap = p.rate * (end - from);
        if got + cap >= bits {
            return from + (bits - got) / p.rate - start;
        }
        got += cap;
    }
    unreachable!("hold rule guarantees completion")
}
