use std::collections::{BTreeMap, BTreeSet};

use lucid_core::driver::check_source;
use lucid_core::emit::*;
use lucid_core::layout::*;
use lucid_core::lower::*;
use lucid_core::memop::{AluOp, CmpOp};

fn compile(src: &str, opt: bool) -> String {
    let fe = check_source("t.lucid", src).unwrap_or_else(|d| panic!("{d:?}"));
    let ir = lower_program(&fe.checked.resolved, &LowerConfig::default()).unwrap();
    let g = build_table_graph(&ir);
    let cfg = PipelineConfig::default();
    let l = if opt { layout_graph(&g, &cfg) } else { no_opt_layout(&g, &cfg) }.unwrap();
    emit_pipeline(&l, &g, &EmitContext::new(&fe.checked.resolved, &fe.memops))
}

fn count_pkt() -> String {
    std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../programs/count_pkt.lucid")).unwrap()
}

fn plus_context() -> EmitContext {
    let fe = check_source("t.lucid", &count_pkt()).unwrap();
    let mut cx = EmitContext::new(&fe.checked.resolved, &fe.memops);
    cx.arrays.insert("tcp_cts".into(), (32, 16));
    cx
}

#[test]
fn operation_table_template() {
    let stmt = AtomicStmt::Op {
        dst: "idx".into(),
        op: OpKind::Alu(AluOp::Add, Operand::Var("idx".into()), Operand::Named("NUM_PORTS".into(), 64)),
    };
    let text = emit_table("idx_add", &stmt, &BTreeMap::new(), &EmitContext::default());
    assert_eq!(
        text,
        "action do_idx_add {idx = idx + NUM_PORTS;}
table tbl_idx_add {
  actions = {do_idx_add;}
  const default_action = {do_idx_add;}
}
"
    );
}

#[test]
fn memory_operation_template() {
    let stmt = AtomicStmt::MemOp(MemAccess {
        array: "tcp_cts".into(),
        method: "setm".into(),
        index: Operand::Var("port".into()),
        read: None,
        write: Some(MemWrite::Memop {
            name: "plus".into(),
            arg: Operand::Const(1),
        }),
        result: None,
    });
    let text = emit_table("setm_1", &stmt, &BTreeMap::new(), &plus_context());
    assert!(text.starts_with("RegisterAction<bit<32>,bit<32>,bit<32>>(tcp_cts) ra_setm_1 = {\n"));
    assert!(text.contains("  void apply(inout bit<32> mem, out bit<32> ret) {\n    mem = mem + 1;\n  }\n};\n"));
    assert!(text.contains("action do_setm_1 {ra_setm_1.execute(port);}\n"));
    assert!(text.contains("table tbl_setm_1 {\n  actions = {do_setm_1;}\n  const default_action = {do_setm_1;}\n}\n"));
}

#[test]
fn branch_table_template() {
    let stmt = AtomicStmt::Branch(Test {
        var: "proto".into(),
        cmp: CmpOp::Ne,
        value: 6,
        signed: false,
        label: Some("TCP".into()),
    });
    let text = emit_table("if_0", &stmt, &BTreeMap::new(), &EmitContext::default());
    assert_eq!(
        text,
        "action if_0_true(); action if_0_false();
table if_0 {
  keys = {proto : ternary;}
  actions = {if_0_true; if_0_false;}
  entries = {
    (TCP) : if_0_false;
    (_)   : if_0_true;
  }
}
"
    );
}

#[test]
fn range_branch_uses_range_match() {
    let stmt = AtomicStmt::Branch(Test {
        var: "x".into(),
        cmp: CmpOp::Lt,
        value: 10,
        signed: false,
        label: None,
    });
    let vars = BTreeMap::from([("x".to_string(), 8)]);
    let text = emit_table("if_3", &stmt, &vars, &EmitContext::default());
    assert!(text.contains("keys = {x : range;}"));
    assert!(text.contains("(0 .. 9) : if_3_true;"));
}

fn stages(text: &str) -> Vec<usize> {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix("@stage(")?.strip_suffix(')')?.parse().ok())
        .collect()
}

#[test]
fn count_pkt_pipeline_has_four_stages() {
    let text = compile(&count_pkt(), true);
    let s = stages(&text);
    assert_eq!(s.iter().collect::<BTreeSet<_>>().len(), 4);
    assert!(s.windows(2).all(|w| w[0] <= w[1]));
    assert!(text.contains("Register<bit<32>, bit<32>>(192) pcts;"));
    assert!(text.contains("//   0 count_pkt(dst: bit<32>, proto: bit<32>)"));
}

#[test]
fn apply_block_lists_every_table_once_in_stage_order() {
    let text = compile(&count_pkt(), true);
    let declared: Vec<String> = text
        .lines()
        .filter_map(|l| l.trim().strip_prefix("table ")?.strip_suffix(" {").map(str::to_string))
        .collect();
    let applied: Vec<String> = text
        .lines()
        .filter_map(|l| l.trim().strip_suffix(".apply();").map(str::to_string))
        .collect();
    assert_eq!(declared, applied);
}

#[test]
fn unoptimized_pipeline_has_seven_stages() {
    let text = compile(&count_pkt(), false);
    assert_eq!(stages(&text).iter().collect::<BTreeSet<_>>().len(), 7);
    assert!(text.contains("(TCP) : if_0_false;"));
}

#[test]
fn empty_program_has_empty_apply() {
    let text = compile("", true);
    assert!(text.contains("  apply {\n  }\n"));
}

#[test]
fn emission_is_deterministic() {
    assert_eq!(compile(&count_pkt(), true), compile(&count_pkt(), true));
}
