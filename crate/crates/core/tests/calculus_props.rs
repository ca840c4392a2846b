use lucid_core::calculus::*;
use proptest::prelude::*;

fn ints(n: u32) -> Vec<CoreType> {
    vec![CoreType::Int; n as usize]
}

fn initial(n: u32, e: CoreExpr) -> MachineState {
    MachineState {
        g: (0..n).map(|i| CoreExpr::int(i as i64 * 3)).collect(),
        n: 0,
        e,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn generated_terms_are_well_typed(seed in any::<u64>(), depth in 1u32..=8, globals in 1u32..=4) {
        let e = generate_well_typed_term(seed, depth, globals);
        prop_assert!(core_typecheck(&ints(globals), &vec![], 0, &e).is_ok(), "{}", e);
    }

    #[test]
    fn progress_and_preservation(seed in any::<u64>(), depth in 1u32..=8, globals in 1u32..=4) {
        let e = generate_well_typed_term(seed, depth, globals);
        let (ty, mut exit) = core_typecheck(&ints(globals), &vec![], 0, &e).unwrap();
        let mut s = initial(globals, e);
        for _ in 0..10_000 {
            match core_step(&s) {
                StepOutcome::Finished(v) => {
                    prop_assert!(v.is_value());
                    return Ok(());
                }
                StepOutcome::Stuck(r) => prop_assert!(false, "stuck: {} in {}", r, s.e),
                StepOutcome::Next(next) => {
                    let (t, j) = core_typecheck(&ints(globals), &vec![], next.n, &next.e)
                        .map_err(|err| TestCaseError::fail(format!("{err} after step to {}", next.e)))?;
                    prop_assert_eq!(&t, &ty);
                    prop_assert!(j <= exit);
                    exit = j;
                    s = next;
                }
            }
        }
        prop_assert!(false, "no value within the step budget");
    }

    #[test]
    fn weakening(seed in any::<u64>(), depth in 1u32..=6) {
        // Typing at an earlier stage still succeeds when the term is
        // well typed at a later one.
        let e = generate_well_typed_term(seed, depth, 4);
        let globals = ints(4);
        for start in 0..=4u32 {
            if let Ok((t, j)) = core_typecheck(&globals, &vec![], start, &e) {
                for earlier in 0..start {
                    let (t2, j2) = core_typecheck(&globals, &vec![], earlier, &e).unwrap();
                    prop_assert_eq!(&t2, &t);
                    prop_assert!(j2 <= j);
                }
            }
        }
    }

    #[test]
    fn canonical_forms(n in any::<i64>(), stage in 0u32..5) {
        let globals = ints(3);
        prop_assert_eq!(core_typecheck(&globals, &vec![], stage, &CoreExpr::int(n)).unwrap(), (CoreType::Int, stage));
        prop_assert_eq!(core_typecheck(&globals, &vec![], stage, &CoreExpr::Unit).unwrap(), (CoreType::Unit, stage));
        let f = CoreExpr::fun("x", CoreType::Int, 2, CoreExpr::deref(CoreExpr::GlobalRef(2)));
        let (t, j) = core_typecheck(&globals, &vec![], stage, &f).unwrap();
        prop_assert_eq!(j, stage);
        let ok = matches!(t, CoreType::Arrow { ein: 2, eout: 3, .. });
        prop_assert!(ok);
    }
}

#[test]
fn thousand_seeds_at_depth_eight() {
    let s = core_fuzz(1000, 8, 4);
    assert_eq!(s.checked, 1000);
    assert_eq!(s.stuck, 0);
    assert_eq!(s.preservation_failures, 0);
    assert!(s.stepped > 1000);
}

