//! Discrete-event simulation of switches running one program.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::spec::SimSpec;
use super::wire::{decode, encode, WireEvent};
use super::{ArrayStore, ExecForm, Executable, Fault, GenDest, Generated};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub recirc_delay_ns: u64,
    pub delay_release_interval_ns: u64,
    pub max_sim_time_ns: u64,
    pub generate_limit: usize,
    /// Recirculations per second per switch; unlimited when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recirc_cap_pps: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            recirc_delay_ns: 600,
            delay_release_interval_ns: 100_000,
            max_sim_time_ns: 10_000_000_000,
            generate_limit: 16,
            recirc_cap_pps: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Exec {
        time_ns: u64,
        switch: u32,
        event: String,
        args: Vec<u64>,
        generated: Vec<Generated>,
        #[serde(skip_serializing_if = "Option::is_none")]
        fault: Option<Fault>,
    },
    Fault {
        time_ns: u64,
        switch: u32,
        fault: Fault,
    },
    CellWrite {
        time_ns: u64,
        switch: u32,
        array: String,
        index: u64,
        old: u64,
        new: u64,
    },
    Summary(Summary),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub events_handled: u64,
    pub recirculations: u64,
    /// Largest number of recirculations in any 1 ms window, scaled to a
    /// per-second rate.
    pub recirc_pps_peak: u64,
    pub faults: u64,
}

/// A handler execution that touched arrays out of declaration order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrderViolation {
    pub time_ns: u64,
    pub switch: u32,
    pub event: String,
    pub accesses: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SimOutput {
    pub log: Vec<LogRecord>,
    pub summary: Summary,
    pub violations: Vec<OrderViolation>,
    /// Final array contents per switch.
    pub state: BTreeMap<u32, ArrayStore>,
    /// Simulated time of the last processed item.
    pub end_time_ns: u64,
}

impl SimOutput {
    /// The log as JSON Lines, summary last.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.log {
            s.push_str(&serde_json::to_string(r).expect("serializable"));
            s.push('\n');
        }
        s.push_str(&serde_json::to_string(&LogRecord::Summary(self.summary.clone())).expect("serializable"));
        s.push('\n');
        s
    }
}

/// True when the declaration indices strictly increase.
pub fn ordered_access_monitor(accesses: &[usize]) -> bool {
    accesses.windows(2).all(|w| w[0] < w[1])
}

enum Item {
    /// Packet arriving on a link, or generated locally, to be dispatched.
    Dispatch { switch: u32, packet: Vec<u8>, from_link: bool },
    Execute { switch: u32, packet: Vec<u8> },
    ReleaseTick { switch: u32 },
}

struct Queued {
    packet: Vec<u8>,
    remaining: i128,
    since: u64,
}

#[derive(Default)]
struct SwitchState {
    queue: VecDeque<Queued>,
    tick_at: Option<u64>,
    next_recirc: u64,
}

struct Sim<'a> {
    exe: &'a Executable,
    form: ExecForm,
    spec: &'a SimSpec,
    trace_state: bool,
    items: BTreeMap<(u64, u64), Item>,
    seq: u64,
    switches: BTreeMap<u32, SwitchState>,
    stores: BTreeMap<u32, ArrayStore>,
    log: Vec<LogRecord>,
    summary: Summary,
    recirc_times: Vec<u64>,
    violations: Vec<OrderViolation>,
}

pub fn run(exe: &Executable, form: ExecForm, spec: &SimSpec, trace_state: bool) -> SimOutput {
    let mut sim = Sim {
        exe,
        form,
        spec,
        trace_state,
        items: BTreeMap::new(),
        seq: 0,
        switches: spec.topology.switches.iter().map(|s| (*s, SwitchState::default())).collect(),
        stores: spec
            .topology
            .switches
            .iter()
            .map(|s| (*s, ArrayStore::new(&exe.resolved)))
            .collect(),
        log: Vec::new(),
        summary: Summary::default(),
        recirc_times: Vec::new(),
        violations: Vec::new(),
    };
    for e in &spec.events {
        let w = WireEvent {
            event: e.name.clone(),
            delay: 0,
            dest: GenDest::Local,
            args: e.args.clone(),
        };
        sim.push(
            e.time_ns,
            Item::Execute {
                switch: e.switch,
                packet: encode(&exe.resolved, &w),
            },
        );
    }
    let mut end = 0;
    while let Some(((t, _), item)) = sim.items.pop_first() {
        if t > spec.config.max_sim_time_ns {
            break;
        }
        end = t;
        match item {
            Item::Dispatch {
                switch,
                packet,
                from_link,
            } => sim.dispatch(t, switch, packet, from_link),
            Item::Execute { switch, packet } => sim.execute(t, switch, &packet),
            Item::ReleaseTick { switch } => sim.release(t, switch),
        }
    }
    sim.summary.recirc_pps_peak = peak_rate(&sim.recirc_times);
    SimOutput {
        log: sim.log,
        summary: sim.summary,
        violations: sim.violations,
        state: sim.stores,
        end_time_ns: end,
    }
}

fn peak_rate(times: &[u64]) -> u64 {
    let mut buckets: BTreeMap<u64, u64> = BTreeMap::new();
    for t in times {
        *buckets.entry(t / 1_000_000).or_default() += 1;
    }
    buckets.values().max().copied().unwrap_or(0) * 1000
}

impl Sim<'_> {
    fn push(&mut self, t: u64, item: Item) {
        self.items.insert((t, self.seq), item);
        self.seq += 1;
    }

    fn fault(&mut self, t: u64, switch: u32, fault: Fault) {
        self.summary.faults += 1;
        self.log.push(LogRecord::Fault {
            time_ns: t,
            switch,
            fault,
        });
    }

    fn execute(&mut self, t: u64, switch: u32, packet: &[u8]) {
        let r = &self.exe.resolved;
        let ev = decode(r, packet).expect("packets are produced by the encoder");
        if !self.exe.has_handler(&ev.event) {
            self.fault(t, switch, Fault::NoHandler { event: ev.event });
            return;
        }
        let store = self.stores.get_mut(&switch).expect("known switch");
        let mut res = self.exe.exec(self.form, store, &ev.event, &ev.args, t);
        self.summary.events_handled += 1;
        if res.fault.is_none() && res.generated.len() > self.spec.config.generate_limit {
            res.generated.truncate(self.spec.config.generate_limit);
            res.fault = Some(Fault::GenerateLimit {
                limit: self.spec.config.generate_limit,
            });
        }
        if res.fault.is_some() {
            self.summary.faults += 1;
        }
        if !ordered_access_monitor(&res.accesses) {
            self.violations.push(OrderViolation {
                time_ns: t,
                switch,
                event: ev.event.clone(),
                accesses: res.accesses.clone(),
            });
        }
        let packets: Vec<Vec<u8>> = res
            .generated
            .iter()
            .map(|g| {
                encode(
                    r,
                    &WireEvent {
                        event: g.event.clone(),
                        delay: g.delay,
                        dest: g.dest.clone(),
                        args: g.args.clone(),
                    },
                )
            })
            .collect();
        let generated = res
            .generated
            .iter()
            .zip(&packets)
            .map(|(g, p)| {
                let w = decode(r, p).expect("round trip");
                Generated {
                    event: w.event,
                    args: w.args,
                    delay: w.delay,
                    dest: w.dest,
                    multicast: g.multicast,
                }
            })
            .collect();
        self.log.push(LogRecord::Exec {
            time_ns: t,
            switch,
            event: ev.event,
            args: ev.args,
            generated,
            fault: res.fault,
        });
        if self.trace_state {
            for w in res.writes {
                self.log.push(LogRecord::CellWrite {
                    time_ns: t,
                    switch,
                    array: w.array,
                    index: w.index,
                    old: w.old,
                    new: w.new,
                });
            }
        }
        for p in packets {
            self.dispatch(t, switch, p, false);
        }
    }

    fn forward(&mut self, t: u64, from: u32, to: u32, ev: &WireEvent) {
        let to_name = to.to_string();
        match self.spec.topology.latency(from, to) {
            Some(lat) => {
                let w = WireEvent {
                    dest: GenDest::Switch(to as u64),
                    ..ev.clone()
                };
                let packet = encode(&self.exe.resolved, &w);
                self.push(
                    t + lat,
                    Item::Dispatch {
                        switch: to,
                        packet,
                        from_link: true,
                    },
                );
            }
            None => self.fault(t, from, Fault::NoRoute { from, to: to_name }),
        }
    }

    fn group(&self, name: &str) -> Option<Vec<u32>> {
        self.spec
            .topology
            .groups
            .get(name)
            .or_else(|| self.exe.resolved.groups.get(name))
            .cloned()
    }

    fn dispatch(&mut self, t: u64, switch: u32, packet: Vec<u8>, from_link: bool) {
        let ev = decode(&self.exe.resolved, &packet).expect("packets are produced by the encoder");
        match &ev.dest {
            GenDest::Switch(d) if *d != switch as u64 => {
                if !self.switches.contains_key(&(*d as u32)) || *d > u32::MAX as u64 {
                    self.fault(
                        t,
                        switch,
                        Fault::NoRoute {
                            from: switch,
                            to: d.to_string(),
                        },
                    );
                } else {
                    self.forward(t, switch, *d as u32, &ev);
                }
            }
            GenDest::Group(g) => {
                let Some(members) = self.group(g) else {
                    self.fault(
                        t,
                        switch,
                        Fault::NoRoute {
                            from: switch,
                            to: g.clone(),
                        },
                    );
                    return;
                };
                for m in members {
                    if m == switch {
                        let local = WireEvent {
                            dest: GenDest::Local,
                            ..ev.clone()
                        };
                        let p = encode(&self.exe.resolved, &local);
                        self.local(t, switch, p, ev.delay, from_link);
                    } else {
                        self.forward(t, switch, m, &ev);
                    }
                }
            }
            _ => self.local(t, switch, packet, ev.delay, from_link),
        }
    }

    fn local(&mut self, t: u64, switch: u32, packet: Vec<u8>, delay: u64, from_link: bool) {
        if delay > 0 {
            let st = self.switches.get_mut(&switch).expect("known switch");
            st.queue.push_back(Queued {
                packet,
                remaining: delay as i128,
                since: t,
            });
            self.schedule_tick(t, switch);
        } else if from_link {
            self.push(t, Item::Execute { switch, packet });
        } else {
            self.recirculate(t, switch, packet);
        }
    }

    fn recirculate(&mut self, t: u64, switch: u32, packet: Vec<u8>) {
        let st = self.switches.get_mut(&switch).expect("known switch");
        let start = match self.spec.config.recirc_cap_pps {
            Some(cap) => {
                let s = t.max(st.next_recirc);
                st.next_recirc = s + 1_000_000_000 / cap;
                s
            }
            None => t,
        };
        let at = start + self.spec.config.recirc_delay_ns;
        self.summary.recirculations += 1;
        self.recirc_times.push(at);
        self.push(at, Item::Execute { switch, packet });
    }

    /// Schedules the first release tick at which some queued event is due.
    fn schedule_tick(&mut self, t: u64, switch: u32) {
        let r = self.spec.config.delay_release_interval_ns;
        let st = self.switches.get_mut(&switch).expect("known switch");
        let due = st
            .queue
            .iter()
            .map(|q| q.since as i128 + q.remaining)
            .min()
            .expect("non-empty queue")
            .max(t as i128 + 1) as u64;
        let tick = due.div_ceil(r) * r;
        if st.tick_at.is_some_and(|x| x <= tick) {
            return;
        }
        st.tick_at = Some(tick);
        self.push(tick, Item::ReleaseTick { switch });
    }

    fn release(&mut self, t: u64, switch: u32) {
        let st = self.switches.get_mut(&switch).expect("known switch");
        if st.tick_at != Some(t) {
            return;
        }
        st.tick_at = None;
        let mut due = Vec::new();
        let mut keep = VecDeque::new();
        for mut q in st.queue.drain(..) {
            q.remaining -= (t - q.since) as i128;
            q.since = t;
            if q.remaining <= 0 {
                due.push(q.packet);
            } else {
                keep.push_back(q);
            }
        }
        st.queue = keep;
        let pending = !st.queue.is_empty();
        for p in due {
            let ev = decode(&self.exe.resolved, &p).expect("packets are produced by the encoder");
            let local = encode(
                &self.exe.resolved,
                &WireEvent {
                    delay: 0,
                    dest: GenDest::Local,
                    ..ev
                },
            );
            self.recirculate(t, switch, local);
        }
        if pending {
            self.schedule_tick(t, switch);
        }
    }
}
