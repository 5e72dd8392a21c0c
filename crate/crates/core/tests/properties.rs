mod common;

use common::checks::{check_propagation, check_replay, random_session};
use common::*;
use proptest::prelude::*;
use stagewise_core::session::replay;

#[test]
fn golden_log_replays_to_live_state() {
    let p = pipeline();
    let s = golden_session(p.clone());
    let replayed = replay(&p, s.log().records()).unwrap();
    assert_eq!(serde_json::to_string(&replayed).unwrap(), serde_json::to_string(s.state()).unwrap());
    for cut in 0..10 {
        check_replay(&p, &s, cut).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn random_logs_replay_identically(seed in any::<u64>(), cut in any::<u64>()) {
        let p = pipeline();
        let s = random_session(&p, seed, 12);
        prop_assert_eq!(check_replay(&p, &s, cut), Ok(()));
    }

    #[test]
    fn submissions_respect_stage_order(seed in any::<u64>()) {
        let p = pipeline();
        prop_assert_eq!(check_propagation(&p, seed, 15), Ok(15));
    }
}

/// A pin pushed past the end of a shrunken list once stole an in-range
/// pin's slot.
#[test]
fn overflowing_pin_regression() {
    assert_eq!(check_propagation(&pipeline(), 2714240491166937878, 15), Ok(15));
}
