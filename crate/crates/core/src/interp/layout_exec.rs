//! Execution of a pipeline layout: each stage reads the variables as they
//! were when the packet entered it.

use std::collections::{BTreeMap, HashMap};

use crate::frontend::resolve::mask;
use crate::layout::{qualify, PipelineLayout, EVENT_VAR};
use crate::lower::TableGraph;
use crate::memop::MemopShape;

use super::graph_exec::Step;
use super::{ArrayStore, ExecResult, Fault, GenSet};

pub fn exec_layout(
    l: &PipelineLayout,
    g: &TableGraph,
    memops: &BTreeMap<String, MemopShape>,
    store: &mut ArrayStore,
    event: &str,
    args: &[u64],
    now: u64,
) -> ExecResult {
    let Some(h) = g.handler(event) else {
        return ExecResult {
            fault: Some(Fault::NoHandler {
                event: event.to_string(),
            }),
            ..ExecResult::default()
        };
    };
    let mut env: HashMap<String, u64> = h.vars.keys().map(|v| (v.clone(), 0)).collect();
    for (p, a) in h.params.iter().zip(args) {
        env.insert(p.clone(), a & mask(h.vars[p]));
    }
    let prefix = qualify(event, "");
    let mut step = Step {
        memops,
        widths: &h.vars,
        now,
        out: ExecResult::default(),
        gens: GenSet::default(),
    };
    let mut origin = Vec::new();
    for stage in &l.stages {
        // Stateful ALUs of one stage run side by side; report them in
        // declaration order.
        let (a0, w0) = (step.out.accesses.len(), step.out.writes.len());
        let snap = env.clone();
        let key = |k: &str| -> u64 {
            if k == EVENT_VAR {
                h.id as u64
            } else {
                // Variables of other handlers never match this handler's rules.
                k.strip_prefix(&prefix).and_then(|v| snap.get(v)).copied().unwrap_or(u64::MAX)
            }
        };
        for t in stage {
            for id in t.select(key) {
                let node = &g.nodes[*id];
                if node.handler.as_deref() != Some(event) {
                    continue;
                }
                let before = step.out.generated.len();
                let r = step.run(&node.stmt, &|v| snap[v], store);
                origin.extend(std::iter::repeat_n(*id, step.out.generated.len() - before));
                match r {
                    Ok(Some((v, x))) => {
                        env.insert(v, x);
                    }
                    Ok(None) => {}
                    Err(f) => {
                        step.out.fault = Some(f);
                        return sorted(step.out, origin);
                    }
                }
            }
        }
        step.out.accesses[a0..].sort();
        step.out.writes[w0..].sort_by_key(|w| store.decl_index(&w.array));
    }
    sorted(step.out, origin)
}

/// Generated events in program order, whatever stage produced them.
fn sorted(mut out: ExecResult, origin: Vec<usize>) -> ExecResult {
    let mut tagged: Vec<_> = origin.into_iter().zip(out.generated).collect();
    tagged.sort_by_key(|(id, _)| *id);
    out.generated = tagged.into_iter().map(|(_, g)| g).collect();
    out
}
