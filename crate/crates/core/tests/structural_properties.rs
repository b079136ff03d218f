mod common;

use common::{random_instance, relative_gap, Instance};
use gas_storage::contract::{ContractTerms, RateFn, StorageContract, TerminalReward};
use gas_storage::valuation::{backward_induct, Backend, InvariantMonitor, NoObserver, PolicyMode};
use proptest::prelude::*;

const TREE: Backend = Backend::Lattice { substeps: 1 };

fn value(inst: &Instance) -> f64 {
    backward_induct(&inst.problem(), &TREE, PolicyMode::Threshold, &mut NoObserver)
        .unwrap()
        .value
}

fn terms_of(c: &StorageContract) -> ContractTerms {
    ContractTerms {
        b_min: c.b_min(),
        b_max: c.b_max(),
        x0: c.x0(),
        rate_min: *c.rate_min(),
        rate_max: *c.rate_max(),
        fees: *c.fees(),
        terminal: *c.terminal(),
        horizon: c.horizon(),
        discount: c.discount(),
        price_range: (0.5, 200.0),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn values_are_concave_and_thresholds_ordered(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let mut monitor = InvariantMonitor::new(&inst.grid);
        backward_induct(&inst.problem(), &TREE, PolicyMode::Threshold, &mut monitor).unwrap();
        prop_assert!(monitor.max_concavity_violation <= 1e-9, "concavity {}", monitor.max_concavity_violation);
        prop_assert_eq!(monitor.bound_order_violations, 0);
        prop_assert_eq!(monitor.bounds_outside_capacity, 0);
        prop_assert_eq!(monitor.non_finite, 0);
        prop_assert_eq!(monitor.stages_seen, inst.contract.horizon() + 1);
    }

    #[test]
    fn value_is_monotone_in_discount_for_nonnegative_rewards(seed in any::<u64>(), low in 0.5f64..0.99) {
        let base = random_instance(seed);
        let mut terms = terms_of(&base.contract);
        terms.terminal = TerminalReward::SellAll;
        terms.discount = low;
        let lo = base.with_contract(StorageContract::new(terms.clone()).unwrap());
        terms.discount = 1.0;
        let hi = base.with_contract(StorageContract::new(terms).unwrap());
        let (v_lo, v_hi) = (value(&lo), value(&hi));
        prop_assert!(v_lo >= 0.0);
        prop_assert!(v_lo <= v_hi + 1e-9 * v_hi.abs().max(1.0), "{} > {}", v_lo, v_hi);
    }

    #[test]
    fn wider_rates_never_lower_the_value(seed in any::<u64>(), factor in 1.0f64..3.0) {
        let base = random_instance(seed);
        let mut terms = terms_of(&base.contract);
        terms.rate_min = terms.rate_min.scaled(factor);
        terms.rate_max = terms.rate_max.scaled(factor);
        let wide = base.with_contract(StorageContract::new(terms).unwrap());
        let (v, w) = (value(&base), value(&wide));
        prop_assert!(w >= v - 1e-9 * v.abs().max(1.0), "{} < {}", w, v);
    }

    #[test]
    fn fast_storage_values_are_affine_and_bangbang_is_optimal(seed in any::<u64>()) {
        let base = random_instance(seed);
        let mut terms = terms_of(&base.contract);
        terms.rate_min = RateFn::Affine { slope: -1.0, intercept: terms.b_min };
        terms.rate_max = RateFn::Affine { slope: -1.0, intercept: terms.b_max };
        terms.terminal = TerminalReward::SellAll;
        let fast = base.with_contract(StorageContract::new(terms).unwrap());
        let mut monitor = InvariantMonitor::new(&fast.grid);
        let opt = backward_induct(&fast.problem(), &TREE, PolicyMode::Threshold, &mut monitor).unwrap();
        prop_assert!(monitor.max_affine_deviation <= 1e-8, "affine deviation {}", monitor.max_affine_deviation);
        let bb = backward_induct(&fast.problem(), &TREE, PolicyMode::BangBang, &mut NoObserver).unwrap();
        prop_assert!(relative_gap(opt.value, bb.value) <= 1e-8, "{} vs {}", opt.value, bb.value);
    }
}
