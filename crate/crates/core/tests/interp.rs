use lucid_core::driver::{check_source, compile};
use lucid_core::interp::*;
use lucid_core::layout::PipelineConfig;

fn program(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../../programs/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn build(src: &str) -> Executable {
    let fe = check_source("t.lucid", src).unwrap_or_else(|d| panic!("{d:?}"));
    compile(&fe, &PipelineConfig::default(), true).unwrap().exe
}

fn execs(out: &SimOutput) -> Vec<(u64, u32, String)> {
    out.log
        .iter()
        .filter_map(|r| match r {
            LogRecord::Exec {
                time_ns, switch, event, ..
            } => Some((*time_ns, *switch, event.clone())),
            _ => None,
        })
        .collect()
}

#[test]
fn evprog_trace() {
    let exe = build(&program("evprog.lucid"));
    let spec = parse_spec(&program("evprog.spec.json")).unwrap();
    spec.check_against(&exe.resolved).unwrap();
    let out = run(&exe, ExecForm::Surface, &spec, false);
    let e = execs(&out);
    assert_eq!(e[0], (0, 1, "a".into()));
    assert_eq!(e[1], (600, 1, "b".into()));
    let cs: Vec<_> = e.iter().filter(|x| x.2 == "c").collect();
    assert_eq!(cs.len(), 2);
    assert_eq!(cs.iter().map(|x| x.1).collect::<Vec<_>>(), vec![2, 3]);
    for c in cs {
        let late = c.0 - (1000 + 10_000_000);
        assert!(late < 100_000 + 600, "lateness {late}");
    }
    assert_eq!(out.summary.events_handled, 4);
    assert_eq!(out.summary.faults, 0);
}

#[test]
fn handler_generates_b_locally_and_c_to_group() {
    let exe = build(&program("evprog.lucid"));
    let mut store = ArrayStore::new(&exe.resolved);
    for form in [ExecForm::Surface, ExecForm::Ir, ExecForm::Layout] {
        let r = exe.exec(form, &mut store, "a", &[], 0);
        assert_eq!(r.generated.len(), 2);
        assert_eq!(r.generated[0].event, "b");
        assert_eq!(r.generated[0].dest, GenDest::Local);
        assert_eq!(r.generated[0].delay, 0);
        assert_eq!(r.generated[1].event, "c");
        assert_eq!(r.generated[1].dest, GenDest::Group("GRP".into()));
        assert_eq!(r.generated[1].delay, 10_000_000);
        assert!(r.generated[1].multicast);
    }
}

#[test]
fn update_reads_and_writes_the_same_old_value() {
    let src = "global a = new Array<<32>>(4);
        memop ident(int cur, int x) { return cur; }
        memop incr(int cur, int x) { return cur + x; }
        event seed(int v);
        event go();
        event out(int v);
        handle seed(int v) { Array.set(a, 0, v); }
        handle go() {
            int r = Array.update(a, 0, ident, 0, incr, 1);
            generate out(r);
        }";
    let exe = build(src);
    for form in [ExecForm::Surface, ExecForm::Ir, ExecForm::Layout] {
        let mut store = ArrayStore::new(&exe.resolved);
        exe.exec(form, &mut store, "seed", &[5], 0);
        let r = exe.exec(form, &mut store, "go", &[], 0);
        assert_eq!(r.generated[0].args, vec![5], "{form:?}");
        assert_eq!(store.get("a").cells[0], 6, "{form:?}");
    }
}

#[test]
fn duplicate_generate_faults_after_first() {
    let src = "global a = new Array<<32>>(4);
        event go(int x);
        event e();
        handle go(int x) {
            generate e();
            Array.set(a, 0, 7);
            if (x == 1) { generate e(); }
        }";
    let exe = build(src);
    for form in [ExecForm::Surface, ExecForm::Ir] {
        let mut store = ArrayStore::new(&exe.resolved);
        let r = exe.exec(form, &mut store, "go", &[1], 0);
        assert_eq!(r.fault, Some(Fault::DuplicateGenerate { event: "e".into() }));
        assert_eq!(store.get("a").cells[0], 7);
        let r = exe.exec(form, &mut store, "go", &[0], 0);
        assert_eq!(r.fault, None);
    }
}

#[test]
fn out_of_range_index_keeps_earlier_writes() {
    let src = "global a = new Array<<32>>(4);
        global b = new Array<<32>>(4);
        event go(int i);
        handle go(int i) {
            Array.set(a, 0, 1);
            Array.set(b, i, 2);
        }";
    let exe = build(src);
    for form in [ExecForm::Surface, ExecForm::Ir, ExecForm::Layout] {
        let mut store = ArrayStore::new(&exe.resolved);
        let r = exe.exec(form, &mut store, "go", &[9], 0);
        assert_eq!(
            r.fault,
            Some(Fault::IndexOutOfRange {
                array: "b".into(),
                index: 9
            })
        );
        assert_eq!(store.get("a").cells[0], 1);
    }
}

#[test]
fn count_pkt_forms_agree() {
    let exe = build(&program("count_pkt.lucid"));
    let mut stores: Vec<ArrayStore> = (0..3).map(|_| ArrayStore::new(&exe.resolved)).collect();
    let forms = [ExecForm::Surface, ExecForm::Ir, ExecForm::Layout];
    for k in 0..300u64 {
        let dst = (k * 37) % 256;
        let proto = [6, 17, 1][(k % 3) as usize];
        let rs: Vec<ExecResult> = forms
            .iter()
            .zip(stores.iter_mut())
            .map(|(f, s)| exe.exec(*f, s, "count_pkt", &[dst, proto], k))
            .collect();
        assert_eq!(rs[0], rs[1]);
        assert_eq!(rs[0], rs[2]);
    }
    assert_eq!(stores[0], stores[1]);
    assert_eq!(stores[0], stores[2]);
    assert_eq!(stores[0].get("hcts").cells.iter().sum::<u64>(), 100);
    assert_eq!(stores[0].get("pcts").cells[..64].iter().sum::<u64>(), 100);
}

#[test]
fn delayed_events_respect_the_bound() {
    let src = "event kick(int<32> d); event late();
        handle kick(int<32> d) { generate Event.delay(late(), d); }
        handle late() {}";
    let exe = build(src);
    let mut spec = SimSpec::default();
    spec.topology.switches = vec![1];
    let delays = [1u64, 99_999, 100_000, 100_001, 10_000_000, 1234567];
    for (i, d) in delays.iter().enumerate() {
        spec.events.push(TraceEvent {
            time_ns: i as u64 * 7_777,
            switch: 1,
            name: "kick".into(),
            args: vec![*d],
        });
    }
    let out = run(&exe, ExecForm::Surface, &spec, false);
    let e = execs(&out);
    let kicks: Vec<_> = e.iter().filter(|x| x.2 == "kick").map(|x| x.0).collect();
    let mut lates: Vec<_> = e.iter().filter(|x| x.2 == "late").map(|x| x.0).collect();
    assert_eq!(lates.len(), delays.len());
    let mut due: Vec<u64> = kicks.iter().zip(delays).map(|(k, d)| k + d).collect();
    due.sort();
    lates.sort();
    for (d, l) in due.iter().zip(&lates) {
        assert!(*l >= *d && l - d < 100_000 + 600, "due {d} ran {l}");
    }
}

#[test]
fn same_tick_releases_in_fifo_order() {
    let src = "event kick(int<32> d, int<32> tag); event late(int<32> tag);
        handle kick(int<32> d, int<32> tag) { generate Event.delay(late(tag), d); }
        handle late(int<32> tag) {}";
    let exe = build(src);
    let mut spec = SimSpec::default();
    spec.topology.switches = vec![1];
    for tag in 0..5 {
        spec.events.push(TraceEvent {
            time_ns: 10 + tag,
            switch: 1,
            name: "kick".into(),
            args: vec![50_000, tag],
        });
    }
    let out = run(&exe, ExecForm::Surface, &spec, false);
    let tags: Vec<u64> = out
        .log
        .iter()
        .filter_map(|r| match r {
            LogRecord::Exec { event, args, time_ns, .. } if event == "late" => {
                assert_eq!(*time_ns, 100_600);
                Some(args[0])
            }
            _ => None,
        })
        .collect();
    assert_eq!(tags, vec![0, 1, 2, 3, 4]);
}

#[test]
fn scan_finishes_within_a_millisecond() {
    let exe = build(&program("scan.lucid"));
    let spec = parse_spec(&program("scan.spec.json")).unwrap();
    let out = run(&exe, ExecForm::Surface, &spec, false);
    assert_eq!(out.summary.events_handled, 65536);
    assert_eq!(out.state[&1].get("failed").cells[0], 65536);
    assert!(out.end_time_ns < 1_000_000, "{}", out.end_time_ns);
}

#[test]
fn missing_link_and_missing_handler_are_logged() {
    let src = "event a(); event b(); event orphan();
        handle a() { generate Event.locate(b(), 2); generate orphan(); }
        handle b() {}";
    let exe = build(src);
    let spec = parse_spec(r#"{"switches":[1,2],"events":[{"time_ns":0,"switch":1,"name":"a"}]}"#).unwrap();
    let out = run(&exe, ExecForm::Ir, &spec, false);
    let faults: Vec<&Fault> = out
        .log
        .iter()
        .filter_map(|r| match r {
            LogRecord::Fault { fault, .. } => Some(fault),
            _ => None,
        })
        .collect();
    assert_eq!(faults.len(), 2);
    assert!(matches!(faults[0], Fault::NoRoute { from: 1, .. }));
    assert!(matches!(faults[1], Fault::NoHandler { .. }));
}

#[test]
fn recirculation_cap_spaces_passes() {
    let exe = build(&program("scan.lucid"));
    let mut spec = parse_spec(&program("scan.spec.json")).unwrap();
    spec.config.max_sim_time_ns = 1_000_000;
    spec.config.recirc_cap_pps = Some(10_000_000);
    let out = run(&exe, ExecForm::Surface, &spec, false);
    assert!(out.summary.events_handled <= 10_001);
    assert!(out.summary.recirc_pps_peak <= 10_000_000);
}

#[test]
fn trace_state_logs_cell_writes() {
    let exe = build(&program("count_pkt.lucid"));
    let spec = parse_spec(r#"{"switches":[1],"events":[{"time_ns":5,"switch":1,"name":"count_pkt","args":[3,6]}]}"#).unwrap();
    let out = run(&exe, ExecForm::Layout, &spec, true);
    let writes = out
        .log
        .iter()
        .filter(|r| matches!(r, LogRecord::CellWrite { .. }))
        .count();
    assert_eq!(writes, 2);
}

#[test]
fn identical_runs_give_identical_logs() {
    let exe = build(&program("evprog.lucid"));
    let spec = parse_spec(&program("evprog.spec.json")).unwrap();
    let a = run(&exe, ExecForm::Layout, &spec, true).to_jsonl();
    let b = run(&exe, ExecForm::Layout, &spec, true).to_jsonl();
    assert_eq!(a, b);
    assert!(a.lines().last().unwrap().contains("\"type\":\"summary\""));
}

#[test]
fn empty_trace_gives_empty_log() {
    let exe = build(&program("evprog.lucid"));
    let spec = parse_spec(r#"{"switches":[1]}"#).unwrap();
    let out = run(&exe, ExecForm::Surface, &spec, false);
    assert!(out.log.is_empty());
}

#[test]
fn monitor_flags_disorder() {
    assert!(ordered_access_monitor(&[0, 2, 5]));
    assert!(ordered_access_monitor(&[3]));
    assert!(!ordered_access_monitor(&[1, 0]));
    assert!(!ordered_access_monitor(&[1, 1]));
}

#[test]
fn disordered_program_trips_the_monitor_when_checking_is_bypassed() {
    use lucid_core::frontend::{parse_source, resolve_names};
    let r = resolve_names(&parse_source("b.lucid", &program("badordering.lucid")).unwrap()).unwrap();
    let mut store = ArrayStore::new(&r);
    let res = exec_surface(&r, &mut store, "setArr1", &[1, 2], 0);
    assert!(!ordered_access_monitor(&res.accesses));
}

#[test]
fn spec_errors_carry_pointers() {
    let cases = [
        (r#"{"links":[]}"#, "/"),
        (r#"{"switches":[1],"links":[{"a":1,"b":9,"latency_ns":1}]}"#, "/links/0/b"),
        (r#"{"switches":[1],"events":[{"time_ns":-1,"switch":1,"name":"a"}]}"#, "/events/0/time_ns"),
        (r#"{"switches":[1],"config":{"recirc_delay_ns":0}}"#, "/config/recirc_delay_ns"),
        (r#"{"switches":[1],"config":{"bogus":1}}"#, "/config/bogus"),
        (r#"{"switches":[1],"groups":{"G":[]}}"#, "/groups/G"),
        ("not json", "/"),
    ];
    for (text, ptr) in cases {
        assert_eq!(parse_spec(text).unwrap_err().pointer, ptr, "{text}");
    }
    let exe = build(&program("evprog.lucid"));
    let spec = parse_spec(r#"{"switches":[1],"events":[{"time_ns":0,"switch":1,"name":"zz"}]}"#).unwrap();
    assert_eq!(spec.check_against(&exe.resolved).unwrap_err().pointer, "/events/0/name");
}

#[test]
fn wire_round_trip() {
    use lucid_core::interp::wire::{decode, encode, WireEvent};
    let exe = build("event e(int<8> a, int<32> b, int<12> c); const group G = {4, 5}; handle e(int<8> a, int<32> b, int<12> c) {}");
    let w = WireEvent {
        event: "e".into(),
        delay: 77,
        dest: GenDest::Group("G".into()),
        args: vec![0xAB, 0xDEADBEEF, 0xFFF],
    };
    let bytes = encode(&exe.resolved, &w);
    assert_eq!(bytes.len(), 10 + 1 + 4 + 2);
    assert_eq!(&bytes[..2], &[0, 0]);
    assert_eq!(&bytes[6..10], &[0x80, 0, 0, 0]);
    assert_eq!(decode(&exe.resolved, &bytes).unwrap(), w);
    assert!(decode(&exe.resolved, &bytes[..12]).is_err());
}
