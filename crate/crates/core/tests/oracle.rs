mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use sysscope::phases::{back_propagate, determinize, merge_phases};
use sysscope::report::score;
use sysscope::symexec::{Sym, SymValue};
use sysscope::syscall_id::identify_site;

use common::*;

fn sym_value() -> impl Strategy<Value = SymValue> {
    prop_oneof![
        proptest::collection::btree_set(0u64..20, 1..5).prop_map(SymValue::Consts),
        Just(SymValue::Unknown(Sym::Opaque)),
        Just(SymValue::Unknown(Sym::Mixed)),
        (0i64..4).prop_map(|o| SymValue::Unknown(Sym::EntrySlot(o * 8))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn acyclic_programs_match_path_enumeration(seed in any::<u64>()) {
        let s = gen_acyclic(&mut rng(seed), 12);
        let site = identify_site(&s.cfg(), s.site(), &oracle_options());
        prop_assert!(agrees_exactly(&site.resolved, &s).is_ok(), "{}", agrees_exactly(&site.resolved, &s).unwrap_err());
    }

    #[test]
    fn single_block_width_semantics(seed in any::<u64>()) {
        // One block: the analyzer is a straight interpreter here.
        let s = gen_acyclic(&mut rng(seed), 2);
        let site = identify_site(&s.cfg(), s.site(), &oracle_options());
        prop_assert!(agrees_exactly(&site.resolved, &s).is_ok());
    }

    #[test]
    fn loops_never_lose_values(seed in any::<u64>()) {
        let s = gen_looping(&mut rng(seed), 12);
        let site = identify_site(&s.cfg(), s.site(), &oracle_options());
        prop_assert!(covers(&site.resolved, &s).is_ok(), "{}", covers(&site.resolved, &s).unwrap_err());
    }

    #[test]
    fn determinize_matches_subset_oracle(seed in any::<u64>()) {
        let nfa = gen_nfa(&mut rng(seed), 6, 3);
        let alphabet: Vec<u64> = (0..3).collect();
        let dfa = determinize(&nfa, 10_000).unwrap();
        let oracle = OracleDfa::build(&nfa, &alphabet);
        for w in all_words(&alphabet, 5) {
            prop_assert_eq!(dfa.accepts(&w), oracle.accepts(&w), "word {:?}", w);
        }
    }

    #[test]
    fn back_propagation_is_monotone_on_every_dfa_edge(seed in any::<u64>(), tau in 0.0f64..=1.0) {
        let nfa = gen_nfa(&mut rng(seed), 6, 3);
        let dfa = determinize(&nfa, 10_000).unwrap();
        let before = merge_phases(&dfa, tau);
        let after = back_propagate(before.clone());
        for (s, row) in dfa.trans.iter().enumerate() {
            for &t in row.values() {
                let (p, q) = (after.phase_of[s], after.phase_of[t]);
                prop_assert!(after.phases[p].allowed.is_superset(&after.phases[q].allowed));
            }
        }
        // Only widening, never narrowing.
        for (a, b) in before.phases.iter().zip(&after.phases) {
            prop_assert!(b.allowed.is_superset(&a.allowed));
        }
    }

    #[test]
    fn merged_phases_keep_language(seed in any::<u64>(), tau in 0.0f64..=1.0) {
        // A back-propagated phase filter never blocks a word the DFA accepts.
        let nfa = gen_nfa(&mut rng(seed), 6, 3);
        let dfa = determinize(&nfa, 10_000).unwrap();
        let phases = back_propagate(merge_phases(&dfa, tau));
        for w in all_words(&[0, 1, 2], 4) {
            if dfa.run(&w).is_some() {
                prop_assert!(phases.permits(&dfa, &w), "word {:?}", w);
            }
        }
    }

    #[test]
    fn join_is_commutative_idempotent_associative(a in sym_value(), b in sym_value(), c in sym_value()) {
        let bound = 64;
        prop_assert_eq!(a.join(&b, bound), b.join(&a, bound));
        prop_assert_eq!(a.join(&a, bound), a.clone());
        prop_assert_eq!(a.join(&b, bound).join(&c, bound), a.join(&b.join(&c, bound), bound));
    }

    #[test]
    fn join_overflow_goes_unknown(a in proptest::collection::btree_set(0u64..100, 1..10),
                                  b in proptest::collection::btree_set(0u64..100, 1..10)) {
        let bound = 8;
        let u: BTreeSet<u64> = a.union(&b).copied().collect();
        let j = SymValue::Consts(a).join(&SymValue::Consts(b), bound);
        if u.len() > bound {
            prop_assert_eq!(j, SymValue::Unknown(Sym::Mixed));
        } else {
            prop_assert_eq!(j, SymValue::Consts(u));
        }
    }

    #[test]
    fn f1_is_symmetric_and_matches_formula(a in proptest::collection::btree_set(0u64..40, 0..20),
                                           t in proptest::collection::btree_set(0u64..40, 0..20)) {
        let s = score(&a, &t);
        prop_assert_eq!(s.f1, score(&t, &a).f1);
        let tp = a.intersection(&t).count() as u64;
        let denom = (a.len() + t.len()) as u64;
        // f1 = 2 tp / (|A| + |T|), compared by cross multiplication.
        if tp == 0 {
            prop_assert_eq!(*s.f1.numer(), 0);
        } else {
            prop_assert_eq!(s.f1.numer() * denom, s.f1.denom() * 2 * tp);
        }
        prop_assert_eq!(s.true_positives.len() as u64 + s.false_negatives.len() as u64, t.len() as u64);
    }
}
