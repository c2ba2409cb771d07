use proptest::prelude::*;
use sleepy_tob::types::{compatible, is_prefix, longest_common_prefix, Log, ProcessId, Value};

fn arb_log() -> impl Strategy<Value = Log> {
    // two ids per depth keep conflicts frequent
    prop::collection::vec(0u64..2, 0..6).prop_map(|bits| {
        Log::new(
            bits.iter()
                .enumerate()
                .map(|(d, b)| Value {
                    id: 2 * d as u64 + b,
                    proposer: ProcessId(0),
                    view: d as u64,
                })
                .collect(),
        )
    })
}

proptest! {
    #[test]
    fn prefix_is_a_partial_order(a in arb_log(), b in arb_log(), c in arb_log()) {
        prop_assert!(is_prefix(&a, &a));
        if is_prefix(&a, &b) && is_prefix(&b, &a) {
            prop_assert_eq!(&a, &b);
        }
        if is_prefix(&a, &b) && is_prefix(&b, &c) {
            prop_assert!(is_prefix(&a, &c));
        }
    }

    #[test]
    fn compatible_means_one_extends_the_other(a in arb_log(), b in arb_log()) {
        prop_assert_eq!(compatible(&a, &b), compatible(&b, &a));
        prop_assert_eq!(compatible(&a, &b), is_prefix(&a, &b) || is_prefix(&b, &a));
        prop_assert_eq!(a.conflicts_with(&b), !compatible(&a, &b));
    }

    #[test]
    fn prefixes_of_a_log_are_pairwise_compatible(a in arb_log(), i in 0usize..7, j in 0usize..7) {
        let x = a.truncated(i.min(a.len()));
        let y = a.truncated(j.min(a.len()));
        prop_assert!(compatible(&x, &y));
        prop_assert!(is_prefix(&x, &a));
    }

    #[test]
    fn common_prefix_is_the_greatest_lower_bound(logs in prop::collection::vec(arb_log(), 1..5)) {
        let l = longest_common_prefix(logs.iter()).unwrap();
        for x in &logs {
            prop_assert!(is_prefix(&l, x));
        }
        // one value longer is no longer common
        if let Some(first) = logs.first() {
            if first.len() > l.len() {
                let longer = first.truncated(l.len() + 1);
                prop_assert!(logs.iter().any(|x| !is_prefix(&longer, x)));
            }
        }
    }

    #[test]
    fn extending_keeps_the_prefix(a in arb_log(), extra in 100u64..200) {
        let v = Value { id: extra, proposer: ProcessId(1), view: 99 };
        let b = a.extended(v);
        prop_assert!(is_prefix(&a, &b));
        prop_assert!(!is_prefix(&b, &a));
        prop_assert_eq!(b.len(), a.len() + 1);
    }
}

#[test]
fn empty_input_has_no_common_prefix() {
    assert!(longest_common_prefix(std::iter::empty::<&Log>()).is_none());
}
