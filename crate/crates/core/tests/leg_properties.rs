mod common;

use proptest::prelude::*;
use stormleg_core::registry::Registry;

use common::{check_architect_rejected, check_plan, features, plans};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rewritten_plans_compile_to_valid_legs(plan in plans(), feats in features()) {
        let reg = Registry::builtin();
        if let Err(e) = check_plan(&plan, &feats, &reg) {
            prop_assert!(false, "{e}");
        }
    }

    #[test]
    fn architect_is_never_schedulable(plan in plans(), t in 0usize..8, l in 0usize..8) {
        let reg = Registry::builtin();
        if let Err(e) = check_architect_rejected(&plan, t, l, &reg) {
            prop_assert!(false, "{e}");
        }
    }
}
