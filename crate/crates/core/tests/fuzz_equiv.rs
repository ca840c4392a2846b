use lucid_core::fuzz::*;

#[test]
fn generated_programs_mostly_pass_the_checker() {
    let s = equivalence_campaign(0..60);
    assert!(s.rejected * 10 <= 60, "{:#?}", s);
}

#[test]
fn forms_agree_on_generated_programs() {
    let s = equivalence_campaign(100..220);
    assert!(s.mismatches.is_empty(), "{:?}", s.mismatches);
    assert_eq!(s.order_violations, 0);
    assert!(s.programs >= 100);
}

#[test]
fn generation_is_deterministic() {
    assert_eq!(generate_program(5).source, generate_program(5).source);
    assert_ne!(generate_program(5).source, generate_program(6).source);
}
