//! Handler execution in three forms and a discrete-event network simulator.

mod graph_exec;
mod hash;
mod layout_exec;
pub mod sim;
pub mod spec;
mod surface;
pub mod wire;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::frontend::resolve::{mask, Resolved};

pub use graph_exec::exec_graph;
pub use hash::crc_hash;
pub use layout_exec::exec_layout;
pub use sim::{ordered_access_monitor, run, LogRecord, OrderViolation, SimConfig, SimOutput, Summary};
pub use spec::{parse_spec, Link, SimSpec, SpecError, Topology, TraceEvent};
pub use surface::exec_surface;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ArrayData {
    pub name: String,
    pub width: u32,
    pub cells: Vec<u64>,
}

/// Persistent arrays of one switch, in declaration order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ArrayStore {
    pub arrays: Vec<ArrayData>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl ArrayStore {
    pub fn new(r: &Resolved) -> Self {
        let arrays: Vec<ArrayData> = r
            .globals
            .iter()
            .map(|g| ArrayData {
                name: g.name.clone(),
                width: g.cell_width,
                cells: vec![0; g.length as usize],
            })
            .collect();
        let index = arrays.iter().enumerate().map(|(i, a)| (a.name.clone(), i)).collect();
        ArrayStore { arrays, index }
    }

    pub fn decl_index(&self, name: &str) -> usize {
        self.index[name]
    }

    pub fn get(&self, name: &str) -> &ArrayData {
        &self.arrays[self.index[name]]
    }

    /// Bounds-checked access used by every executor.
    pub(crate) fn cell(&mut self, name: &str, idx: u64) -> Result<(usize, &mut u64, u32), Fault> {
        let d = self.index[name];
        let a = &mut self.arrays[d];
        let w = a.width;
        if idx >= a.cells.len() as u64 {
            return Err(Fault::IndexOutOfRange {
                array: name.to_string(),
                index: idx,
            });
        }
        Ok((d, &mut a.cells[idx as usize], w))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GenDest {
    Local,
    Switch(u64),
    Group(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Generated {
    pub event: String,
    pub args: Vec<u64>,
    pub delay: u64,
    pub dest: GenDest,
    pub multicast: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind")]
pub enum Fault {
    IndexOutOfRange { array: String, index: u64 },
    DuplicateGenerate { event: String },
    NoRoute { from: u32, to: String },
    NoHandler { event: String },
    GenerateLimit { limit: usize },
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::IndexOutOfRange { array, index } => write!(f, "index {index} out of range for `{array}`"),
            Fault::DuplicateGenerate { event } => write!(f, "`{event}` generated twice in one execution"),
            Fault::NoRoute { from, to } => write!(f, "no link from switch {from} to {to}"),
            Fault::NoHandler { event } => write!(f, "no handler for `{event}`; dropped"),
            Fault::GenerateLimit { limit } => write!(f, "more than {limit} events generated in one execution"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CellWrite {
    pub array: String,
    pub index: u64,
    pub old: u64,
    pub new: u64,
}

/// Outcome of one handler execution. On a fault, mutations made before it
/// stay applied.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ExecResult {
    pub generated: Vec<Generated>,
    pub fault: Option<Fault>,
    /// Declaration indices of the arrays accessed, in execution order.
    pub accesses: Vec<usize>,
    pub writes: Vec<CellWrite>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecForm {
    Surface,
    Ir,
    Layout,
}

impl std::str::FromStr for ExecForm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "surface" => Ok(ExecForm::Surface),
            "ir" => Ok(ExecForm::Ir),
            "layout" => Ok(ExecForm::Layout),
            _ => Err(format!("unknown execution form `{s}` (surface, ir, layout)")),
        }
    }
}

/// Shared bookkeeping for generate statements.
#[derive(Default)]
pub(crate) struct GenSet {
    seen: BTreeSet<String>,
}

impl GenSet {
    pub(crate) fn add(&mut self, g: &Generated) -> Result<(), Fault> {
        if !self.seen.insert(g.event.clone()) {
            return Err(Fault::DuplicateGenerate {
                event: g.event.clone(),
            });
        }
        Ok(())
    }
}

/// Arguments masked to the event's parameter widths.
pub(crate) fn mask_args(r: &Resolved, event: &str, args: &[u64]) -> Vec<u64> {
    let widths = event_widths(r, event);
    args.iter()
        .zip(widths.iter().chain(std::iter::repeat(&32)))
        .map(|(a, w)| a & mask(*w))
        .collect()
}

pub fn event_widths(r: &Resolved, event: &str) -> Vec<u32> {
    r.event(event)
        .map(|e| {
            e.params
                .iter()
                .map(|(_, t)| match t {
                    crate::frontend::ValTy::Int(w) => *w,
                    _ => 1,
                })
                .collect()
        })
        .unwrap_or_default()
}

/// Everything needed to execute handlers in any form.
#[derive(Clone, Debug)]
pub struct Executable {
    /// Checked program, functions not inlined.
    pub resolved: Resolved,
    pub memops: BTreeMap<String, crate::memop::MemopShape>,
    pub graph: crate::lower::TableGraph,
    pub layout: crate::layout::PipelineLayout,
}

impl Executable {
    pub fn exec(
        &self,
        form: ExecForm,
        store: &mut ArrayStore,
        event: &str,
        args: &[u64],
        now: u64,
    ) -> ExecResult {
        let args = mask_args(&self.resolved, event, args);
        match form {
            ExecForm::Surface => exec_surface(&self.resolved, store, event, &args, now),
            ExecForm::Ir => exec_graph(&self.graph, &self.memops, store, event, &args, now),
            ExecForm::Layout => exec_layout(&self.layout, &self.graph, &self.memops, store, event, &args, now),
        }
    }

    pub fn has_handler(&self, event: &str) -> bool {
        self.resolved.handler(event).is_some()
    }
}
