//! Random handler programs for differential testing of the execution forms.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::driver::{check_source, compile};
use crate::interp::{run, ExecForm, SimSpec, TraceEvent};
use crate::layout::PipelineConfig;

const N_ARRAYS: usize = 4;
const OUT_EVENTS: [(&str, usize); 3] = [("out1", 1), ("out2", 2), ("out3", 1)];

/// A generated program with a trace of handler invocations.
#[derive(Clone, Debug, Serialize)]
pub struct FuzzProgram {
    pub seed: u64,
    pub source: String,
    pub trace: Vec<TraceEvent>,
}

#[derive(Clone)]
struct Var {
    name: String,
    width: u32,
    mutable: bool,
}

struct Gen {
    rng: ChaCha8Rng,
    out: String,
    indent: usize,
    fresh: usize,
    scopes: Vec<Vec<Var>>,
    /// Next array that may be accessed on the current path.
    cursor: usize,
    /// Output events already generated on the current path.
    sent: BTreeSet<&'static str>,
    budget: usize,
}

impl Gen {
    fn line(&mut self, s: &str) {
        for _ in 0..self.indent {
            self.out.push_str("    ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn vars(&self, width: u32) -> Vec<&Var> {
        self.scopes.iter().flatten().filter(|v| v.width == width).collect()
    }

    fn lit(&mut self, width: u32) -> String {
        let v: u64 = match self.rng.gen_range(0..4) {
            0 => self.rng.gen_range(0..4),
            1 => self.rng.gen_range(0..300),
            2 => self.rng.gen::<u32>() as u64,
            _ => [1, 15, 16, 255, 256, 0xFFFF_FFFF][self.rng.gen_range(0..6)],
        };
        if width == 32 {
            (v & 0xFFFF_FFFF).to_string()
        } else {
            format!("{}<{width}>", v & ((1 << width) - 1))
        }
    }

    fn atom(&mut self, width: u32) -> String {
        let vs: Vec<String> = self.vars(width).iter().map(|v| v.name.clone()).collect();
        if !vs.is_empty() && self.rng.gen_bool(0.7) {
            vs.choose(&mut self.rng).unwrap().clone()
        } else if width == 32 && self.rng.gen_bool(0.2) {
            ["K_SMALL", "K_MASK"][self.rng.gen_range(0..2)].to_string()
        } else {
            self.lit(width)
        }
    }

    fn expr(&mut self, width: u32, depth: u32) -> String {
        if depth == 0 {
            return self.atom(width);
        }
        match self.rng.gen_range(0..10) {
            0..=2 => self.atom(width),
            3..=6 => {
                let op = ["+", "-", "&", "|", "^"][self.rng.gen_range(0..5)];
                let a = self.expr(width, depth - 1);
                let b = self.expr(width, depth - 1);
                format!("({a} {op} {b})")
            }
            7 if width == 32 => {
                let a = self.expr(32, depth - 1);
                format!("bump({a})")
            }
            7 => {
                let a = self.expr(width, depth - 1);
                let b = self.expr(width, depth - 1);
                format!("mix{width}({a}, {b})")
            }
            8 => {
                let n = self.rng.gen_range(1..3);
                let args: Vec<String> = (0..n)
                    .map(|_| {
                        let w = if self.rng.gen_bool(0.5) { 32 } else { 8 };
                        self.atom(w)
                    })
                    .collect();
                let poly = [0x07, 0x1021, 0x04C1_1DB7][self.rng.gen_range(0..3)];
                format!("hash<{width}>({poly}, {})", args.join(", "))
            }
            _ if width == 32 => "Sys.time()".to_string(),
            _ => self.atom(width),
        }
    }

    fn cond(&mut self, depth: u32) -> String {
        if depth > 0 && self.rng.gen_bool(0.25) {
            let op = if self.rng.gen_bool(0.5) { "&&" } else { "||" };
            let a = self.cond(depth - 1);
            let b = self.cond(depth - 1);
            return format!("({a} {op} {b})");
        }
        let w = if self.rng.gen_bool(0.7) { 32 } else { 8 };
        let cmp = ["==", "!=", "<", ">", "<=", ">="][self.rng.gen_range(0..6)];
        let a = self.atom(w);
        let b = if self.rng.gen_bool(0.6) { self.lit(w) } else { self.atom(w) };
        format!("{a} {cmp} {b}")
    }

    fn index(&mut self) -> String {
        let e = self.expr(32, 1);
        format!("({e} & 15)")
    }

    fn declare(&mut self, width: u32) -> String {
        self.fresh += 1;
        let name = format!("v{}", self.fresh);
        self.scopes.last_mut().unwrap().push(Var {
            name: name.clone(),
            width,
            mutable: true,
        });
        name
    }

    fn array_stmt(&mut self) {
        let k = self.rng.gen_range(self.cursor..N_ARRAYS);
        self.cursor = k + 1;
        let a = format!("arr{k}");
        let i = self.index();
        match self.rng.gen_range(0..5) {
            0 => {
                let v = self.expr(32, 2);
                self.line(&format!("Array.set({a}, {i}, {v});"));
            }
            1 => {
                let v = self.declare(32);
                self.line(&format!("int<32> {v} = Array.get({a}, {i});"));
            }
            2 => {
                let m = ["plus", "keep_max", "sub_floor"][self.rng.gen_range(0..3)];
                let v = self.expr(32, 1);
                self.line(&format!("Array.set({a}, {i}, {m}, {v});"));
            }
            3 => {
                let m = ["plus", "keep_max", "sub_floor"][self.rng.gen_range(0..3)];
                let x = self.expr(32, 1);
                let v = self.declare(32);
                self.line(&format!("int<32> {v} = Array.get({a}, {i}, {m}, {x});"));
            }
            _ => {
                let g = ["plus", "keep_max", "sub_floor"][self.rng.gen_range(0..3)];
                let s = ["plus", "keep_max", "sub_floor"][self.rng.gen_range(0..3)];
                let x = self.expr(32, 1);
                let y = self.expr(32, 1);
                let v = self.declare(32);
                self.line(&format!("int<32> {v} = Array.update({a}, {i}, {g}, {x}, {s}, {y});"));
            }
        }
    }

    fn generate_stmt(&mut self) -> bool {
        let free: Vec<_> = OUT_EVENTS.iter().filter(|(e, _)| !self.sent.contains(e)).collect();
        let Some(&&(e, n)) = free.choose(&mut self.rng) else {
            return false;
        };
        self.sent.insert(e);
        let args: Vec<String> = (0..n).map(|_| self.expr(32, 1)).collect();
        let mut ev = format!("{e}({})", args.join(", "));
        if self.rng.gen_bool(0.3) {
            let d = self.rng.gen_range(1..500_000);
            ev = format!("Event.delay({ev}, {d})");
        }
        if self.rng.gen_bool(0.2) {
            ev = format!("Event.locate({ev}, 1)");
        }
        self.line(&format!("generate {ev};"));
        true
    }

    fn block(&mut self, depth: u32) {
        let n = self.rng.gen_range(1..5);
        for _ in 0..n {
            if self.budget == 0 {
                return;
            }
            self.budget -= 1;
            self.stmt(depth);
        }
    }

    fn stmt(&mut self, depth: u32) {
        match self.rng.gen_range(0..10) {
            0 | 1 => {
                let w = if self.rng.gen_bool(0.75) { 32 } else { 8 };
                let e = self.expr(w, 2);
                let v = self.declare(w);
                self.line(&format!("int<{w}> {v} = {e};"));
            }
            2 => {
                let targets: Vec<Var> = self.scopes.iter().flatten().filter(|v| v.mutable).cloned().collect();
                match targets.choose(&mut self.rng) {
                    Some(t) => {
                        let e = self.expr(t.width, 2);
                        self.line(&format!("{} = {e};", t.name));
                    }
                    None => self.array_or_skip(),
                }
            }
            3..=5 => self.array_or_skip(),
            6 => {
                if !self.generate_stmt() {
                    self.array_or_skip();
                }
            }
            _ if depth > 0 => self.if_stmt(depth),
            _ => self.array_or_skip(),
        }
    }

    fn array_or_skip(&mut self) {
        if self.cursor < N_ARRAYS {
            self.array_stmt();
        } else {
            let e = self.expr(32, 1);
            let v = self.declare(32);
            self.line(&format!("int<32> {v} = {e};"));
        }
    }

    fn if_stmt(&mut self, depth: u32) {
        let c = self.cond(2);
        let (cursor, sent) = (self.cursor, self.sent.clone());
        self.line(&format!("if ({c}) {{"));
        self.indent += 1;
        self.scopes.push(Vec::new());
        self.block(depth - 1);
        self.scopes.pop();
        self.indent -= 1;
        let (c1, s1) = (self.cursor, std::mem::replace(&mut self.sent, sent));
        self.cursor = cursor;
        if self.rng.gen_bool(0.6) {
            self.line("} else {");
            self.indent += 1;
            self.scopes.push(Vec::new());
            self.block(depth - 1);
            self.scopes.pop();
            self.indent -= 1;
        }
        self.line("}");
        self.cursor = self.cursor.max(c1);
        self.sent.extend(s1);
    }
}

const PRELUDE: &str = "const int K_SMALL = 7;
const int K_MASK = 4095;
global arr0 = new Array<<32>>(16);
global arr1 = new Array<<32>>(16);
global arr2 = new Array<<32>>(16);
global arr3 = new Array<<32>>(16);
memop plus(int cur, int x) { return cur + x; }
memop keep_max(int cur, int x) { if (cur > x) { return cur; } else { return x; } }
memop sub_floor(int cur, int x) { if (cur < x) { return 0; } else { return cur - x; } }
fun int<32> bump(int<32> p) { return p + K_SMALL; }
fun int<32> mix32(int<32> p, int<32> q) { int<32> t = p ^ q; return t & K_MASK; }
fun int<8> mix8(int<8> p, int<8> q) { int<8> t = p + q; return t ^ 90<8>; }
event go(int<32> a, int<32> b, int<8> c);
event tick(int<32> a);
event out1(int<32> x);
event out2(int<32> x, int<32> y);
event out3(int<32> x);
handle out1(int<32> x) {}
handle out3(int<32> x) { Array.set(arr3, x & 15, plus, 1); }
";

fn handler(g: &mut Gen, head: &str, params: Vec<Var>) {
    g.scopes = vec![params];
    g.cursor = 0;
    g.sent.clear();
    g.budget = 12;
    g.line(&format!("{head} {{"));
    g.indent = 1;
    g.block(3);
    g.indent = 0;
    g.line("}");
}

pub fn generate_program(seed: u64) -> FuzzProgram {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        out: PRELUDE.to_string(),
        indent: 0,
        fresh: 0,
        scopes: Vec::new(),
        cursor: 0,
        sent: BTreeSet::new(),
        budget: 0,
    };
    let p = |n: &str, w| Var {
        name: n.to_string(),
        width: w,
        mutable: false,
    };
    handler(
        &mut g,
        "handle go(int<32> a, int<32> b, int<8> c)",
        vec![p("a", 32), p("b", 32), p("c", 8)],
    );
    handler(&mut g, "handle tick(int<32> a)", vec![p("a", 32)]);
    let n = g.rng.gen_range(3..9);
    let mut time = 0;
    let mut trace = Vec::new();
    for _ in 0..n {
        time += g.rng.gen_range(1..200_000);
        let small = |r: &mut ChaCha8Rng| -> u64 {
            if r.gen_bool(0.5) {
                r.gen_range(0..20)
            } else {
                r.gen::<u32>() as u64
            }
        };
        let ev = if g.rng.gen_bool(0.7) {
            TraceEvent {
                time_ns: time,
                switch: 1,
                name: "go".into(),
                args: vec![small(&mut g.rng), small(&mut g.rng), g.rng.gen::<u8>() as u64],
            }
        } else {
            TraceEvent {
                time_ns: time,
                switch: 1,
                name: "tick".into(),
                args: vec![small(&mut g.rng)],
            }
        };
        trace.push(ev);
    }
    FuzzProgram {
        seed,
        source: g.out,
        trace,
    }
}

/// Layout budget large enough that generated programs always fit.
pub fn roomy_config() -> PipelineConfig {
    PipelineConfig {
        stages: 64,
        tables_per_stage: 64,
        salus_per_stage: 4,
        max_actions: 4096,
        max_key_bits: 1024,
        max_entries: 4096,
        max_compare_bits: 64,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EquivSummary {
    pub programs: usize,
    pub rejected: usize,
    pub executions: usize,
    /// Seeds whose forms disagreed.
    pub mismatches: Vec<u64>,
    pub order_violations: usize,
    /// Rejection messages of the first few rejected seeds.
    pub rejections: Vec<String>,
}

/// Runs every generated program in all three forms on the same trace and
/// compares logs and final array state.
pub fn equivalence_campaign(seeds: std::ops::Range<u64>) -> EquivSummary {
    let mut s = EquivSummary::default();
    let cfg = roomy_config();
    for seed in seeds {
        let p = generate_program(seed);
        let fe = match check_source("fuzz.lucid", &p.source) {
            Ok(fe) => fe,
            Err(d) => {
                s.rejected += 1;
                if s.rejections.len() < 5 {
                    s.rejections.push(format!("seed {seed}: {}", d[0].message));
                }
                continue;
            }
        };
        let c = match compile(&fe, &cfg, true) {
            Ok(c) => c,
            Err(e) => {
                s.rejected += 1;
                if s.rejections.len() < 5 {
                    s.rejections.push(format!("seed {seed}: {e}"));
                }
                continue;
            }
        };
        s.programs += 1;
        let mut spec = SimSpec::default();
        spec.topology.switches = vec![1];
        spec.events = p.trace.clone();
        let outs: Vec<_> = [ExecForm::Surface, ExecForm::Ir, ExecForm::Layout]
            .into_iter()
            .map(|f| run(&c.exe, f, &spec, true))
            .collect();
        s.executions += outs[0].summary.events_handled as usize;
        s.order_violations += outs.iter().map(|o| o.violations.len()).sum::<usize>();
        let same = outs[1..]
            .iter()
            .all(|o| o.to_jsonl() == outs[0].to_jsonl() && o.state == outs[0].state);
        if !same {
            s.mismatches.push(seed);
        }
    }
    s
}
