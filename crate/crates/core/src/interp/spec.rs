//! Topology and trace input for the simulator.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::frontend::resolve::Resolved;

use super::SimConfig;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Link {
    pub a: u32,
    pub b: u32,
    pub latency_ns: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Topology {
    pub switches: Vec<u32>,
    pub links: Vec<Link>,
    pub groups: BTreeMap<String, Vec<u32>>,
}

impl Topology {
    /// Latency of the direct link between two switches, in either direction.
    pub fn latency(&self, from: u32, to: u32) -> Option<u64> {
        self.links
            .iter()
            .find(|l| (l.a == from && l.b == to) || (l.a == to && l.b == from))
            .map(|l| l.latency_ns)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub time_ns: u64,
    pub switch: u32,
    pub name: String,
    pub args: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SimSpec {
    pub topology: Topology,
    pub events: Vec<TraceEvent>,
    pub config: SimConfig,
}

/// Invalid input, located by a JSON pointer.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error, Serialize)]
#[error("{pointer}: {message}")]
pub struct SpecError {
    pub pointer: String,
    pub message: String,
}

fn err(pointer: impl Into<String>, message: impl Into<String>) -> SpecError {
    let pointer = pointer.into();
    SpecError {
        pointer: if pointer.is_empty() { "/".into() } else { pointer },
        message: message.into(),
    }
}

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn object<'a>(v: &'a Value, at: &str, allowed: &[&str]) -> Result<&'a Map<String, Value>, SpecError> {
    let m = v.as_object().ok_or_else(|| err(at, "expected an object"))?;
    for k in m.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(err(format!("{at}/{}", escape(k)), "unknown field"));
        }
    }
    Ok(m)
}

fn array<'a>(v: &'a Value, at: &str) -> Result<&'a Vec<Value>, SpecError> {
    v.as_array().ok_or_else(|| err(at, "expected an array"))
}

fn uint(v: &Value, at: &str) -> Result<u64, SpecError> {
    v.as_u64().ok_or_else(|| err(at, "expected a non-negative integer"))
}

fn switch_id(v: &Value, at: &str) -> Result<u32, SpecError> {
    let x = uint(v, at)?;
    u32::try_from(x)
        .ok()
        .filter(|x| *x < 0x8000_0000)
        .ok_or_else(|| err(at, "switch id out of range"))
}

fn required<'a>(m: &'a Map<String, Value>, key: &str, at: &str) -> Result<&'a Value, SpecError> {
    m.get(key).ok_or_else(|| err(at, format!("missing field `{key}`")))
}

fn parse_config(v: &Value, at: &str) -> Result<SimConfig, SpecError> {
    let m = object(
        v,
        at,
        &[
            "recirc_delay_ns",
            "delay_release_interval_ns",
            "max_sim_time_ns",
            "generate_limit",
            "recirc_cap_pps",
        ],
    )?;
    let mut c = SimConfig::default();
    let positive = |k: &str| -> Result<Option<u64>, SpecError> {
        match m.get(k) {
            None => Ok(None),
            Some(v) => {
                let p = format!("{at}/{k}");
                let x = uint(v, &p)?;
                if x == 0 {
                    return Err(err(p, "must be positive"));
                }
                Ok(Some(x))
            }
        }
    };
    if let Some(x) = positive("recirc_delay_ns")? {
        c.recirc_delay_ns = x;
    }
    if let Some(x) = positive("delay_release_interval_ns")? {
        c.delay_release_interval_ns = x;
    }
    if let Some(x) = positive("max_sim_time_ns")? {
        c.max_sim_time_ns = x;
    }
    if let Some(x) = positive("generate_limit")? {
        c.generate_limit = x as usize;
    }
    if let Some(x) = positive("recirc_cap_pps")? {
        c.recirc_cap_pps = Some(x);
    }
    Ok(c)
}

/// Parses and structurally validates a spec document.
pub fn parse_spec(text: &str) -> Result<SimSpec, SpecError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| err("", format!("invalid JSON: {e}")))?;
    let root = object(&doc, "", &["switches", "links", "groups", "events", "config"])?;
    let mut spec = SimSpec::default();

    let mut ids = BTreeSet::new();
    for (i, s) in array(required(root, "switches", "")?, "/switches")?.iter().enumerate() {
        let at = format!("/switches/{i}");
        let id = switch_id(s, &at)?;
        if !ids.insert(id) {
            return Err(err(at, format!("duplicate switch {id}")));
        }
        spec.topology.switches.push(id);
    }
    let known = |id: u32, at: &str| -> Result<u32, SpecError> {
        if ids.contains(&id) {
            Ok(id)
        } else {
            Err(err(at, format!("unknown switch {id}")))
        }
    };

    if let Some(links) = root.get("links") {
        for (i, l) in array(links, "/links")?.iter().enumerate() {
            let at = format!("/links/{i}");
            let m = object(l, &at, &["a", "b", "latency_ns"])?;
            let a = known(switch_id(required(m, "a", &at)?, &format!("{at}/a"))?, &format!("{at}/a"))?;
            let b = known(switch_id(required(m, "b", &at)?, &format!("{at}/b"))?, &format!("{at}/b"))?;
            if a == b {
                return Err(err(format!("{at}/b"), "link endpoints must differ"));
            }
            let latency_ns = uint(required(m, "latency_ns", &at)?, &format!("{at}/latency_ns"))?;
            spec.topology.links.push(Link { a, b, latency_ns });
        }
    }

    if let Some(groups) = root.get("groups") {
        let m = groups.as_object().ok_or_else(|| err("/groups", "expected an object"))?;
        for (name, members) in m {
            let at = format!("/groups/{}", escape(name));
            let mut ms = Vec::new();
            for (i, s) in array(members, &at)?.iter().enumerate() {
                let p = format!("{at}/{i}");
                ms.push(known(switch_id(s, &p)?, &p)?);
            }
            if ms.is_empty() {
                return Err(err(at, "group must not be empty"));
            }
            spec.topology.groups.insert(name.clone(), ms);
        }
    }

    if let Some(events) = root.get("events") {
        for (i, e) in array(events, "/events")?.iter().enumerate() {
            let at = format!("/events/{i}");
            let m = object(e, &at, &["time_ns", "switch", "name", "args"])?;
            let time_ns = uint(required(m, "time_ns", &at)?, &format!("{at}/time_ns"))?;
            let sw = format!("{at}/switch");
            let switch = known(switch_id(required(m, "switch", &at)?, &sw)?, &sw)?;
            let name = required(m, "name", &at)?
                .as_str()
                .ok_or_else(|| err(format!("{at}/name"), "expected a string"))?
                .to_string();
            let mut args = Vec::new();
            if let Some(a) = m.get("args") {
                for (j, x) in array(a, &format!("{at}/args"))?.iter().enumerate() {
                    args.push(uint(x, &format!("{at}/args/{j}"))?);
                }
            }
            spec.events.push(TraceEvent {
                time_ns,
                switch,
                name,
                args,
            });
        }
    }

    if let Some(c) = root.get("config") {
        spec.config = parse_config(c, "/config")?;
    }
    Ok(spec)
}

impl SimSpec {
    /// Checks trace events against the program's event declarations.
    pub fn check_against(&self, r: &Resolved) -> Result<(), SpecError> {
        for (i, e) in self.events.iter().enumerate() {
            let Some(info) = r.event(&e.name) else {
                return Err(err(format!("/events/{i}/name"), format!("undeclared event `{}`", e.name)));
            };
            if info.params.len() != e.args.len() {
                return Err(err(
                    format!("/events/{i}/args"),
                    format!("`{}` takes {} arguments, got {}", e.name, info.params.len(), e.args.len()),
                ));
            }
        }
        Ok(())
    }
}
