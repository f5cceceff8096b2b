mod common;

use proptest::prelude::*;

use common::random_trace;
use mrlfd::sim::TaskName;
use mrlfd::trace::{parse_jsonl, script_demo, to_jsonl, validate};

fn arb_task() -> impl Strategy<Value = TaskName> {
    prop::sample::select(TaskName::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn scripted_demos_validate_and_round_trip(task in arb_task(), seed in 0u64..1000) {
        let trace = script_demo(task, seed, &Default::default()).unwrap();
        prop_assert!(validate(&trace).is_empty(), "{:?}", validate(&trace));
        let text = to_jsonl(&trace).unwrap();
        prop_assert_eq!(&parse_jsonl(&text).unwrap(), &trace);
        prop_assert_eq!(to_jsonl(&parse_jsonl(&text).unwrap()).unwrap(), text);
    }

    #[test]
    fn scripted_demos_are_deterministic(task in arb_task(), seed in 0u64..1000) {
        let a = script_demo(task, seed, &Default::default()).unwrap();
        let b = script_demo(task, seed, &Default::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn random_traces_round_trip(seed in any::<u64>()) {
        let trace = random_trace(seed);
        prop_assert_eq!(parse_jsonl(&to_jsonl(&trace).unwrap()).unwrap(), trace);
    }
}
