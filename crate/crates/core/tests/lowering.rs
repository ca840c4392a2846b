use lucid_core::driver::check_source;
use lucid_core::lower::*;
use lucid_core::memop::CmpOp;

fn lower(src: &str) -> (ProgramIr, TableGraph) {
    let fe = check_source("t.lucid", src).unwrap_or_else(|d| panic!("{d:?}"));
    let ir = lower_program(&fe.checked.resolved, &LowerConfig::default()).unwrap();
    let g = build_table_graph(&ir);
    (ir, g)
}

fn count_pkt() -> String {
    std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../programs/count_pkt.lucid")).unwrap()
}

#[test]
fn count_pkt_has_eight_atomic_statements() {
    let (ir, g) = lower(&count_pkt());
    assert_eq!(ir.handlers[0].count_atomic(), 8);
    assert_eq!(g.count_kind("memop"), 3);
    assert_eq!(g.count_kind("branch"), 3);
    assert_eq!(g.count_kind("op"), 2);
    assert_eq!(g.longest_path(), 7);
    let names: Vec<&str> = g.nodes.iter().map(|n| n.name.as_str()).collect();
    assert_eq!(
        names,
        ["dispatch", "nexthops_get", "if_0", "if_1", "idx_add", "idx_add_1", "pcts_setm", "if_2", "hcts_setm"]
    );
}

#[test]
fn count_pkt_branch_keeps_source_test() {
    let (_, g) = lower(&count_pkt());
    let AtomicStmt::Branch(t) = &g.nodes[2].stmt else { panic!() };
    assert_eq!((t.var.as_str(), t.cmp, t.value), ("proto", CmpOp::Ne, 6));
}

#[test]
fn sum_of_three_splits_once() {
    let (ir, _) = lower(
        "event e(int a, int b, int c); handle e(int a, int b, int c) { int x = a + b + c; }",
    );
    let body: Vec<String> = ir.handlers[0]
        .body
        .iter()
        .map(|s| match s {
            IrStmt::Atomic(a) => a.to_string(),
            _ => panic!(),
        })
        .collect();
    assert_eq!(body, ["%t0 = a + b", "x = %t0 + c"]);
}

#[test]
fn var_var_compare_becomes_difference() {
    let (ir, g) = lower(
        "global a = new Array<<8>>(4); event e(int<8> x, int<8> y); handle e(int<8> x, int<8> y) { if (x > y) { Array.set(a, 0, x); } }",
    );
    assert!(ir.warnings.is_empty());
    let AtomicStmt::Op { dst, .. } = &g.nodes[1].stmt else { panic!() };
    assert_eq!(ir.handlers[0].vars[dst], 9);
    let AtomicStmt::Branch(t) = &g.nodes[2].stmt else { panic!() };
    assert!(t.signed && t.value == 0 && t.cmp == CmpOp::Gt);
}

#[test]
fn wide_compare_is_reported() {
    let (ir, _) = lower(
        "global a = new Array<<32>>(4); event e(int x, int y); handle e(int x, int y) { if (x < y) { Array.set(a, 0, x); } }",
    );
    assert_eq!(ir.warnings.len(), 1);
}

#[test]
fn difference_test_agrees_with_comparison_on_all_8_bit_pairs() {
    for cmp in [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Gt, CmpOp::Le, CmpOp::Ge] {
        let t = Test {
            var: "t".into(),
            cmp,
            value: 0,
            signed: true,
            label: None,
        };
        for x in 0u64..256 {
            for y in 0u64..256 {
                let d = x.wrapping_sub(y) & 0x1ff;
                assert_eq!(t.eval(d, 9), cmp.eval(x, y), "{x} {cmp:?} {y}");
            }
        }
    }
}

#[test]
fn same_width_wraparound_would_be_wrong() {
    let t = Test {
        var: "t".into(),
        cmp: CmpOp::Gt,
        value: 0,
        signed: true,
        label: None,
    };
    let (x, y) = (200u64, 10u64);
    assert!(!t.eval(x.wrapping_sub(y) & 0xff, 8));
    assert!(t.eval(x.wrapping_sub(y) & 0x1ff, 9));
}

#[test]
fn empty_handler_is_one_noop() {
    let (_, g) = lower("event e(); handle e() { }");
    assert_eq!(g.nodes.len(), 2);
    assert_eq!(g.nodes[1].stmt, AtomicStmt::Noop);
    assert_eq!(g.longest_path(), 1);
}

#[test]
fn straight_line_path_is_statement_count() {
    let (_, g) = lower("event e(int a); handle e(int a) { int x = a + 1; int y = x + 2; int z = y ^ a; }");
    assert_eq!(g.longest_path(), 3);
}

#[test]
fn inlining_copies_each_call_site() {
    let src = "global a = new Array<<32>>(8);
event e(int i);
fun int get(int k) { return Array.get(a, k); }
handle e(int i) { int x = get(i); int y = get(x); }";
    let fe = check_source("t.lucid", src);
    // second access to `a` is out of order
    assert!(fe.is_err());
    let src = "global a = new Array<<32>>(8);
global b = new Array<<32>>(8);
event e(int i);
fun int get(Array<<32>> arr, int k) { return Array.get(arr, k); }
handle e(int i) { int x = get(a, i); int y = get(b, x); }";
    let (ir, g) = lower(src);
    assert_eq!(g.count_kind("memop"), 2);
    let arrays: Vec<&str> = g.nodes.iter().filter_map(|n| n.stmt.array()).collect();
    assert_eq!(arrays, ["a", "b"]);
    let vars = &ir.handlers[0].vars;
    assert!(vars.keys().any(|k| k.starts_with("%get0")));
    assert!(vars.keys().any(|k| k.starts_with("%get1")));
}

#[test]
fn program_without_functions_is_unchanged_by_inlining() {
    let fe = check_source("t.lucid", &count_pkt()).unwrap();
    let r = &fe.checked.resolved;
    assert_eq!(inline_calls(r).unwrap().program, r.program);
}

#[test]
fn short_circuit_and_nests_branches() {
    let (_, g) = lower(
        "global a = new Array<<32>>(4); event e(int x, int y); handle e(int x, int y) { if (x == 1 && y == 2) { Array.set(a, 0, x); } }",
    );
    assert_eq!(g.count_kind("branch"), 2);
    assert_eq!(g.longest_path(), 3);
}

#[test]
fn emit_ir_json_shape() {
    let (_, g) = lower(&count_pkt());
    let j = g.to_json();
    assert_eq!(j["nodes"].as_array().unwrap().len(), 9);
    assert_eq!(j["edges"][0]["label"], "count_pkt");
    assert!(j["nodes"][1]["detail"].as_str().unwrap().contains("nexthops"));
}
