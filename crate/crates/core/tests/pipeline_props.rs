mod common;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn pipeline_invariants(s in common::checks::script()) {
        common::checks::check_invariants(&s)?;
    }
}
