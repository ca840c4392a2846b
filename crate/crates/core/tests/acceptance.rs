use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lucid_core::capacity::{recirc_rate, RecircParams};
use lucid_core::driver::{check_source, compile, Compiled};
use lucid_core::fuzz::{equivalence_campaign, generate_program, roomy_config, EquivSummary};
use lucid_core::interp::*;
use lucid_core::layout::PipelineConfig;

type Outcome = Result<String, String>;

fn program(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../../programs/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn compile_count_pkt(optimize: bool) -> Result<Compiled, String> {
    let fe = check_source("count_pkt.lucid", &program("count_pkt.lucid")).map_err(|d| format!("{d:?}"))?;
    compile(&fe, &PipelineConfig::default(), optimize).map_err(|e| e.to_string())
}

fn count_pkt_artifacts() -> Result<String, String> {
    let mut out = String::new();
    for opt in [false, true] {
        let c = compile_count_pkt(opt)?;
        out.push_str(&c.p4);
        out.push_str(&c.layout_json().to_string());
    }
    Ok(out)
}

fn pipeline_depth() -> Outcome {
    let t = Instant::now();
    let plain = compile_count_pkt(false)?.report.stages_used;
    let opt = compile_count_pkt(true)?.report.stages_used;
    let el = t.elapsed();
    ensure(plain == 7 && opt == 4, format!("unoptimized {plain}, optimized {opt}"))?;
    ensure(el < Duration::from_secs(1), format!("took {el:?}"))?;
    Ok(format!("7 -> 4 stages in {el:?}"))
}

fn branch_elimination_savings() -> Outcome {
    let plain = compile_count_pkt(false)?.report.stages_used;
    let opt = compile_count_pkt(true)?.report.stages_used;
    ensure(plain - opt == 3, format!("saved {}", plain as i64 - opt as i64))?;
    Ok("saves 3 stages".into())
}

fn sig3(x: f64) -> f64 {
    let e = x.abs().log10().floor() as i32 - 2;
    (x / 10f64.powi(e)).round() * 10f64.powi(e)
}

fn capacity_cells() -> Outcome {
    let cells = [(1e4, 815_360.0, 0.08), (1e5, 2_255_360.0, 0.22), (1e6, 16_655_360.0, 1.66)];
    for (f, rate, pct) in cells {
        let r = recirc_rate(&RecircParams::new(1 << 16, 0.1, f)).map_err(|e| e.to_string())?;
        ensure(sig3(r.rate_pps) == sig3(rate), format!("f={f}: rate {}", r.rate_pps))?;
        let got = r.utilization * 100.0;
        ensure(sig3(got) == sig3(pct) || (got * 100.0).floor() / 100.0 == pct, format!("f={f}: {got}%"))?;
    }
    Ok("815,360 / 2,255,360 / 16,655,360 pps".into())
}

fn capacity_artifacts() -> Result<String, String> {
    let mut out = String::new();
    for f in [1e4, 1e5, 1e6] {
        let r = recirc_rate(&RecircParams::new(1 << 16, 0.1, f)).map_err(|e| e.to_string())?;
        out.push_str(&serde_json::to_string(&r).unwrap());
    }
    Ok(out)
}

fn disordered_program() -> Outcome {
    let ds = match check_source("badordering.lucid", &program("badordering.lucid")) {
        Ok(_) => return Err("accepted".into()),
        Err(ds) => ds,
    };
    ensure(ds.len() == 1, format!("{} diagnostics", ds.len()))?;
    let d = &ds[0];
    ensure(d.kind == "OrderError", format!("kind {}", d.kind))?;
    ensure(d.handler.as_deref() == Some("setArr1"), format!("handler {:?}", d.handler))?;
    ensure(d.message.contains("arr1") && d.message.contains("arr2"), d.message.clone())?;
    ensure(d.spans.len() >= 2, format!("{} spans", d.spans.len()))?;
    Ok(d.message.clone())
}

fn memop_gate() -> Outcome {
    let prelude = "const int N = 10;\n";
    let bad = [
        (
            "memop compoundCondition(int memval, int y){ if (memval == 1 || memval == 2) { return memval; } else { return y; } }",
            "MemopViolation::CompoundCondition",
        ),
        (
            "memop twoLocalArgs(int memval, int y, int z){ if (memval == 1) { return y; } else { return z; } }",
            "MemopViolation::TooManyParams",
        ),
        (
            "memop multipy(int memval, int x){ return (N * memval) + x; }",
            "MemopViolation::BadOperator",
        ),
    ];
    for (src, kind) in bad {
        let ds = match check_source("m.lucid", &format!("{prelude}{src}")) {
            Ok(_) => return Err(format!("accepted: {src}")),
            Err(ds) => ds,
        };
        let kinds: Vec<&str> = ds.iter().map(|d| d.kind.as_str()).collect();
        ensure(kinds == [kind], format!("expected {kind}, got {kinds:?}"))?;
    }
    let good = [
        "memop incr(int memval, int x){ return memval + 1; }",
        "memop plus(int memval, int x){ return memval + x; }",
        "memop mn(int memval, int x){ if (memval < x) { return memval; } else { return x; } }",
    ];
    for src in good {
        check_source("m.lucid", src).map_err(|d| format!("rejected {src}: {d:?}"))?;
    }
    Ok("3 rejected with the right class, 3 accepted".into())
}

fn core_fuzz() -> Outcome {
    let t = Instant::now();
    let s = lucid_core::calculus::core_fuzz(1000, 8, 4);
    let el = t.elapsed();
    ensure(s.checked >= 1000, format!("{s:?}"))?;
    ensure(s.stuck == 0 && s.preservation_failures == 0 && s.ill_typed == 0, format!("{s:?}"))?;
    ensure(el < Duration::from_secs(60), format!("took {el:?}"))?;
    Ok(format!("{} terms, {} steps, {el:?}", s.checked, s.stepped))
}

const EQUIV_SEEDS: std::ops::Range<u64> = 1000..1240;

fn equivalence() -> Result<(EquivSummary, Duration), String> {
    let t = Instant::now();
    let s = equivalence_campaign(EQUIV_SEEDS);
    Ok((s, t.elapsed()))
}

fn semantic_equivalence() -> Outcome {
    let (s, el) = equivalence()?;
    ensure(s.programs >= 200, format!("only {} programs ({} rejected)", s.programs, s.rejected))?;
    ensure(s.mismatches.is_empty(), format!("mismatching seeds {:?}", s.mismatches))?;
    ensure(el < Duration::from_secs(120), format!("took {el:?}"))?;
    Ok(format!("{} programs, {} executions, {el:?}", s.programs, s.executions))
}

fn ordered_access_bridge() -> Outcome {
    let (s, _) = equivalence()?;
    ensure(s.order_violations == 0, format!("{} violations", s.order_violations))?;
    Ok(format!("0 violations over {} programs", s.programs))
}

/// Logs and final state of every accepted equivalence program.
fn equivalence_artifacts() -> Result<String, String> {
    let (s, _) = equivalence()?;
    let mut out = serde_json::to_string(&s).unwrap();
    for seed in EQUIV_SEEDS {
        let p = generate_program(seed);
        let Ok(fe) = check_source("fuzz.lucid", &p.source) else { continue };
        let Ok(c) = compile(&fe, &roomy_config(), true) else { continue };
        let mut spec = SimSpec::default();
        spec.topology.switches = vec![1];
        spec.events = p.trace.clone();
        let o = run(&c.exe, ExecForm::Layout, &spec, true);
        out.push_str(&o.to_jsonl());
        out.push_str(&serde_json::to_string(&o.state).unwrap());
    }
    Ok(out)
}

fn build(src: &str) -> Result<Executable, String> {
    let fe = check_source("t.lucid", src).map_err(|d| format!("{d:?}"))?;
    Ok(compile(&fe, &PipelineConfig::default(), true).map_err(|e| e.to_string())?.exe)
}

fn scan_throughput() -> Outcome {
    let exe = build(&program("scan.lucid"))?;
    let spec = parse_spec(&program("scan.spec.json")).map_err(|e| e.to_string())?;
    let out = run(&exe, ExecForm::Layout, &spec, false);
    ensure(out.summary.events_handled == 65536, format!("{} passes", out.summary.events_handled))?;
    ensure(out.end_time_ns < 1_000_000, format!("ended at {} ns", out.end_time_ns))?;
    Ok(format!("65,536 entries in {} ns", out.end_time_ns))
}

fn delay_bound() -> Outcome {
    let exe = build(
        "event kick(int<32> d, int<32> tag); event late(int<32> tag);
        handle kick(int<32> d, int<32> tag) { generate Event.delay(late(tag), d); }
        handle late(int<32> tag) {}",
    )?;
    let mut spec = SimSpec::default();
    spec.topology.switches = vec![1];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut due = Vec::new();
    let mut t = 0;
    for tag in 0..500u64 {
        t += rng.gen_range(1..20_000);
        let d = rng.gen_range(1..2_000_000);
        spec.events.push(TraceEvent {
            time_ns: t,
            switch: 1,
            name: "kick".into(),
            args: vec![d, tag],
        });
        due.push(t + d);
    }
    let r = spec.config.delay_release_interval_ns;
    let recirc = spec.config.recirc_delay_ns;
    ensure(r == 100_000, format!("release interval {r}"))?;
    let out = run(&exe, ExecForm::Layout, &spec, false);
    let mut seen = 0;
    let mut worst = 0;
    for rec in &out.log {
        if let LogRecord::Exec { event, args, time_ns, .. } = rec {
            if event == "late" {
                let d = due[args[0] as usize];
                if *time_ns < d {
                    return Err(format!("tag {} ran {} ns early", args[0], d - time_ns));
                }
                let late = time_ns - d;
                ensure(late < r + recirc, format!("tag {} ran {late} ns late", args[0]))?;
                worst = worst.max(late);
                seen += 1;
            }
        }
    }
    ensure(seen == 500, format!("{seen} delayed events ran"))?;
    Ok(format!("500 events, worst lateness {worst} ns"))
}

fn determinism() -> Outcome {
    ensure(count_pkt_artifacts()? == count_pkt_artifacts()?, "compile artifacts differ")?;
    ensure(capacity_artifacts()? == capacity_artifacts()?, "capacity output differs")?;
    ensure(equivalence_artifacts()? == equivalence_artifacts()?, "simulation logs differ")?;
    Ok("compile, capacity and simulation artifacts identical".into())
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("count_pkt pipeline depth", pipeline_depth),
        ("branch elimination savings", branch_elimination_savings),
        ("recirculation model", capacity_cells),
        ("disordered program diagnosis", disordered_program),
        ("memop gate", memop_gate),
        ("core calculus soundness fuzz", core_fuzz),
        ("end-to-end semantic equivalence", semantic_equivalence),
        ("ordered access bridge", ordered_access_bridge),
        ("scan throughput", scan_throughput),
        ("delay bound", delay_bound),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
