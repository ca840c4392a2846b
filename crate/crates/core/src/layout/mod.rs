//! Placement of the table graph onto a staged pipeline: branch elimination
//! through guards, dataflow leveling and greedy table merging.

pub mod guard;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lower::{AtomicStmt, TableGraph};

pub use guard::{Conj, Guard, IntervalSet};

/// Reserved key carrying the event id when several handlers share a pipeline.
pub const EVENT_VAR: &str = "%event";
pub const EVENT_BITS: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub stages: usize,
    pub tables_per_stage: usize,
    pub salus_per_stage: usize,
    pub max_actions: usize,
    pub max_key_bits: u32,
    pub max_entries: usize,
    pub max_compare_bits: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stages: 12,
            tables_per_stage: 16,
            salus_per_stage: 4,
            max_actions: 32,
            max_key_bits: 64,
            max_entries: 256,
            max_compare_bits: 32,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), LayoutError> {
        let fields = [
            ("stages", self.stages as u64),
            ("tables_per_stage", self.tables_per_stage as u64),
            ("salus_per_stage", self.salus_per_stage as u64),
            ("max_actions", self.max_actions as u64),
            ("max_key_bits", self.max_key_bits as u64),
            ("max_entries", self.max_entries as u64),
            ("max_compare_bits", self.max_compare_bits as u64),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(LayoutError::BadConfig(format!("`{name}` must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize)]
pub enum LayoutError {
    #[error("guard of table `{table}` needs {entries} entries (limit {limit})")]
    GuardExplosion {
        table: String,
        entries: usize,
        limit: usize,
    },
    #[error("cannot place table `{table}`: {reason}")]
    Placement { table: String, node: usize, reason: String },
    #[error("invalid pipeline configuration: {0}")]
    BadConfig(String),
    #[error("array stage constraints do not converge")]
    ArrayCycle,
}

impl LayoutError {
    pub fn kind(&self) -> &'static str {
        match self {
            LayoutError::GuardExplosion { .. } => "GuardExplosion",
            LayoutError::Placement { .. } => "PlacementError",
            LayoutError::BadConfig(_) => "ConfigError",
            LayoutError::ArrayCycle => "PlacementError",
        }
    }
}

pub fn qualify(handler: &str, var: &str) -> String {
    format!("{handler}.{var}")
}

// ----------------------------------------------------------------- guards

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GuardedNode {
    pub id: usize,
    pub name: String,
    pub handler: String,
    pub stmt: AtomicStmt,
    pub guard: Guard,
    /// Qualified variables read, guard variables included.
    pub reads: BTreeSet<String>,
    pub writes: Option<String>,
    pub array: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DataEdge {
    pub from: usize,
    pub to: usize,
    /// Strict edges need a later stage; the others allow the same stage.
    pub strict: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GuardedGraph {
    pub nodes: Vec<GuardedNode>,
    pub edges: Vec<DataEdge>,
    /// Qualified variable widths.
    pub vars: BTreeMap<String, u32>,
    /// Global arrays in declaration order.
    pub arrays: Vec<String>,
}

impl GuardedGraph {
    pub fn node(&self, id: usize) -> &GuardedNode {
        self.nodes.iter().find(|n| n.id == id).expect("node id")
    }
}

/// Replaces branch tables by per-node guards and derives data edges.
pub fn eliminate_branches(g: &TableGraph, cfg: &PipelineConfig) -> Result<GuardedGraph, LayoutError> {
    let multi = g.handlers.len() > 1;
    let mut vars = BTreeMap::new();
    if multi {
        vars.insert(EVENT_VAR.to_string(), EVENT_BITS);
    }
    for h in &g.handlers {
        for (v, w) in &h.vars {
            vars.insert(qualify(&h.event, v), *w);
        }
    }
    let mut nodes = Vec::new();
    for n in &g.nodes {
        let Some(h) = &n.handler else { continue };
        if matches!(n.stmt, AtomicStmt::Branch(_)) {
            continue;
        }
        let meta = g.handler(h).expect("handler meta");
        let mut conj = Conj::default();
        let mut sat = true;
        if multi {
            sat &= conj.and(EVENT_VAR, IntervalSet(vec![(meta.id as u64, meta.id as u64)]), EVENT_BITS);
        }
        for (t, outcome) in &n.path {
            let w = meta.vars[&t.var];
            let mut set = IntervalSet::from_test(t, w);
            if !outcome {
                let neg = crate::lower::Test {
                    cmp: t.cmp.negate(),
                    ..t.clone()
                };
                set = IntervalSet::from_test(&neg, w);
            }
            sat &= conj.and(&qualify(h, &t.var), set, w);
        }
        let guard = if sat { Guard(vec![conj]) } else { Guard(Vec::new()) }.canonical();
        if guard.box_count() > cfg.max_entries {
            return Err(LayoutError::GuardExplosion {
                table: n.name.clone(),
                entries: guard.box_count(),
                limit: cfg.max_entries,
            });
        }
        let mut reads: BTreeSet<String> = n.stmt.reads().iter().map(|v| qualify(h, v)).collect();
        reads.extend(guard.vars().filter(|v| v.as_str() != EVENT_VAR).cloned());
        nodes.push(GuardedNode {
            id: n.id,
            name: n.name.clone(),
            handler: h.clone(),
            stmt: n.stmt.clone(),
            writes: n.stmt.writes().map(|v| qualify(h, v)),
            array: n.stmt.array().map(str::to_string),
            guard,
            reads,
        });
    }
    let mut edges = Vec::new();
    for (j, v) in nodes.iter().enumerate() {
        for u in &nodes[..j] {
            if u.handler != v.handler {
                continue;
            }
            // A field keeps a single writer per stage even across exclusive
            // arms; reads only depend on writes that can precede them.
            let excl = g.nodes[u.id].exclusive_with(&g.nodes[v.id]);
            let raw = !excl && u.writes.as_ref().is_some_and(|w| v.reads.contains(w));
            let waw = u.writes.is_some() && u.writes == v.writes;
            let war = !excl && v.writes.as_ref().is_some_and(|w| u.reads.contains(w));
            if raw || waw {
                edges.push(DataEdge {
                    from: u.id,
                    to: v.id,
                    strict: true,
                });
            } else if war {
                edges.push(DataEdge {
                    from: u.id,
                    to: v.id,
                    strict: false,
                });
            }
        }
    }
    Ok(GuardedGraph {
        nodes,
        edges,
        vars,
        arrays: g.arrays.clone(),
    })
}

// --------------------------------------------------------------- leveling

/// Earliest stage of every node given its data edges, with all accesses to
/// one array lifted to a common level and arrays leveled in declaration
/// order.
pub fn reorder_by_dataflow(g: &GuardedGraph) -> Result<BTreeMap<usize, usize>, LayoutError> {
    let mut level: BTreeMap<usize, usize> = g.nodes.iter().map(|n| (n.id, 0)).collect();
    for _ in 0..=g.nodes.len() + 1 {
        let mut changed = false;
        for n in &g.nodes {
            let lb = g
                .edges
                .iter()
                .filter(|e| e.to == n.id)
                .map(|e| level[&e.from] + e.strict as usize)
                .max()
                .unwrap_or(0);
            if lb > level[&n.id] {
                level.insert(n.id, lb);
                changed = true;
            }
        }
        let mut by_array: BTreeMap<&str, usize> = BTreeMap::new();
        for n in &g.nodes {
            if let Some(a) = &n.array {
                let e = by_array.entry(a).or_insert(0);
                *e = (*e).max(level[&n.id]);
            }
        }
        let mut floor = 0;
        for a in &g.arrays {
            if let Some(l) = by_array.get_mut(a.as_str()) {
                floor = floor.max(*l);
                *l = floor;
            }
        }
        for n in &g.nodes {
            if let Some(a) = &n.array {
                if level[&n.id] < by_array[a.as_str()] {
                    level.insert(n.id, by_array[a.as_str()]);
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(level);
        }
    }
    Err(LayoutError::ArrayCycle)
}

// ------------------------------------------------------------ merged tables

/// One entry: every listed variable inside its range, then run `action`
/// (member node ids, in order).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Rule {
    pub pattern: BTreeMap<String, (u64, u64)>,
    pub action: Vec<usize>,
}

impl Rule {
    pub fn matches(&self, value: impl Fn(&str) -> u64) -> bool {
        self.pattern.iter().all(|(v, &(a, b))| {
            let x = value(v);
            a <= x && x <= b
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MergedTable {
    pub name: String,
    pub stage: usize,
    pub members: Vec<usize>,
    pub keys: Vec<(String, u32)>,
    /// First match wins; the last rule always matches.
    pub rules: Vec<Rule>,
}

impl MergedTable {
    pub fn action_count(&self) -> usize {
        self.rules.iter().map(|r| &r.action).collect::<BTreeSet<_>>().len()
    }

    pub fn key_bits(&self) -> u32 {
        self.keys.iter().map(|(_, w)| w).sum()
    }

    /// The member ids selected for a packet.
    pub fn select(&self, value: impl Fn(&str) -> u64 + Copy) -> &[usize] {
        self.rules
            .iter()
            .find(|r| r.matches(value))
            .map(|r| r.action.as_slice())
            .unwrap_or(&[])
    }
}

fn single_rules(n: &GuardedNode) -> Vec<Rule> {
    let mut rules = Vec::new();
    for c in &n.guard.0 {
        for b in c.boxes() {
            rules.push(Rule {
                pattern: b,
                action: vec![n.id],
            });
        }
    }
    finish_rules(rules)
}

/// Drops rules after a catch-all and appends a catch-all no-op if needed.
fn finish_rules(mut rules: Vec<Rule>) -> Vec<Rule> {
    if let Some(k) = rules.iter().position(|r| r.pattern.is_empty()) {
        rules.truncate(k + 1);
    } else {
        rules.push(Rule {
            pattern: BTreeMap::new(),
            action: Vec::new(),
        });
    }
    rules
}

fn intersect(a: &BTreeMap<String, (u64, u64)>, b: &BTreeMap<String, (u64, u64)>) -> Option<BTreeMap<String, (u64, u64)>> {
    let mut out = a.clone();
    for (v, &(c, d)) in b {
        match out.get(v) {
            Some(&(x, y)) => {
                let (lo, hi) = (x.max(c), y.min(d));
                if lo > hi {
                    return None;
                }
                out.insert(v.clone(), (lo, hi));
            }
            None => {
                out.insert(v.clone(), (c, d));
            }
        }
    }
    Some(out)
}

/// Lexicographic cross product of two first-match rule lists.
fn cross(m: &[Rule], t: &[Rule]) -> Vec<Rule> {
    let mut out = Vec::new();
    for r1 in m {
        for r2 in t {
            if let Some(p) = intersect(&r1.pattern, &r2.pattern) {
                let mut action = r1.action.clone();
                action.extend(&r2.action);
                out.push(Rule { pattern: p, action });
            }
        }
    }
    finish_rules(out)
}

fn keys_of(rules: &[Rule], vars: &BTreeMap<String, u32>) -> Vec<(String, u32)> {
    let names: BTreeSet<&String> = rules.iter().flat_map(|r| r.pattern.keys()).collect();
    names.into_iter().map(|v| (v.clone(), vars[v])).collect()
}

// ----------------------------------------------------------------- layout

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PipelineLayout {
    pub optimized: bool,
    pub config: PipelineConfig,
    pub stages: Vec<Vec<MergedTable>>,
    /// Node id to (stage, table index within the stage).
    pub placement: BTreeMap<usize, (usize, usize)>,
    pub guarded: GuardedGraph,
    pub levels: BTreeMap<usize, usize>,
    pub longest_path_before: usize,
    pub warnings: Vec<String>,
}

impl PipelineLayout {
    pub fn stages_used(&self) -> usize {
        self.stages.iter().filter(|s| !s.is_empty()).count()
    }

    pub fn tables(&self) -> impl Iterator<Item = &MergedTable> {
        self.stages.iter().flatten()
    }
}

#[derive(Default)]
struct StageState {
    tables: Vec<MergedTable>,
    arrays: BTreeSet<String>,
}

/// Greedy placement in program order. A table goes to the earliest stage
/// after its strict predecessors (and not before its weak ones or its
/// level); within the stage it joins the first table whose merged key,
/// action set and entries stay within budget, or opens a new table.
pub fn greedy_merge(
    g: &GuardedGraph,
    levels: &BTreeMap<usize, usize>,
    cfg: &PipelineConfig,
) -> Result<(Vec<Vec<MergedTable>>, BTreeMap<usize, (usize, usize)>), LayoutError> {
    cfg.validate()?;
    let mut stages: Vec<StageState> = (0..cfg.stages).map(|_| StageState::default()).collect();
    let mut placement: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut array_stage: BTreeMap<String, usize> = BTreeMap::new();
    let decl: BTreeMap<&str, usize> = g.arrays.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();

    for n in &g.nodes {
        let fail = |reason: String| LayoutError::Placement {
            table: n.name.clone(),
            node: n.id,
            reason,
        };
        let mut lb = levels.get(&n.id).copied().unwrap_or(0);
        for e in g.edges.iter().filter(|e| e.to == n.id) {
            lb = lb.max(placement[&e.from].0 + e.strict as usize);
        }
        let mut ub = cfg.stages;
        if let Some(k) = n.array.as_ref().and_then(|a| decl.get(a.as_str())) {
            for (a, &s) in &array_stage {
                match decl[a.as_str()].cmp(k) {
                    std::cmp::Ordering::Less => lb = lb.max(s),
                    std::cmp::Ordering::Greater => ub = ub.min(s + 1),
                    std::cmp::Ordering::Equal => {}
                }
            }
        }
        let own = single_rules(n);
        let own_keys = keys_of(&own, &g.vars);
        let own_bits: u32 = own_keys.iter().map(|(_, w)| w).sum();
        if own_bits > cfg.max_key_bits {
            return Err(fail(format!(
                "its match key needs {own_bits} bits (limit {})",
                cfg.max_key_bits
            )));
        }
        let candidates: Vec<usize> = match n.array.as_ref().and_then(|a| array_stage.get(a)) {
            Some(&s) if s < lb => {
                return Err(fail(format!(
                    "array `{}` is already in stage {s} but this access must run in stage {lb} or later",
                    n.array.as_ref().unwrap()
                )))
            }
            Some(&s) => vec![s],
            None if lb >= ub && ub < cfg.stages => {
                return Err(fail(format!(
                    "array `{}` must sit no later than stage {} to keep declaration order, but this access needs stage {lb}",
                    n.array.as_ref().unwrap(),
                    ub - 1
                )))
            }
            None => (lb..ub).collect(),
        };
        let mut reason = format!(
            "needs stage {lb} or later but the pipeline has {} stages",
            cfg.stages
        );
        let mut placed = None;
        'stages: for s in candidates {
            let st = &mut stages[s];
            if let Some(a) = &n.array {
                if !st.arrays.contains(a) && st.arrays.len() >= cfg.salus_per_stage {
                    reason = format!(
                        "stage {s} has no free stateful ALU (limit {})",
                        cfg.salus_per_stage
                    );
                    continue;
                }
            }
            for (ti, t) in st.tables.iter_mut().enumerate() {
                let rules = cross(&t.rules, &own);
                let keys = keys_of(&rules, &g.vars);
                let bits: u32 = keys.iter().map(|(_, w)| w).sum();
                let actions = rules.iter().map(|r| &r.action).collect::<BTreeSet<_>>().len();
                if bits <= cfg.max_key_bits && actions <= cfg.max_actions && rules.len() <= cfg.max_entries {
                    t.rules = rules;
                    t.keys = keys;
                    t.members.push(n.id);
                    placed = Some((s, ti));
                    break 'stages;
                }
            }
            if st.tables.len() < cfg.tables_per_stage {
                st.tables.push(MergedTable {
                    name: String::new(),
                    stage: s,
                    members: vec![n.id],
                    keys: own_keys.clone(),
                    rules: own.clone(),
                });
                placed = Some((s, st.tables.len() - 1));
                break;
            }
            reason = format!(
                "stage {s} already holds {} tables and merging exceeds the table budget",
                cfg.tables_per_stage
            );
        }
        let Some((s, ti)) = placed else {
            return Err(fail(reason));
        };
        if let Some(a) = &n.array {
            stages[s].arrays.insert(a.clone());
            array_stage.insert(a.clone(), s);
        }
        placement.insert(n.id, (s, ti));
    }
    let mut out: Vec<Vec<MergedTable>> = stages.into_iter().map(|s| s.tables).collect();
    while out.last().is_some_and(|s| s.is_empty()) {
        out.pop();
    }
    for (s, tables) in out.iter_mut().enumerate() {
        for (ti, t) in tables.iter_mut().enumerate() {
            t.name = format!("stage{s}_t{ti}");
        }
    }
    Ok((out, placement))
}

/// Full optimizing layout of a table graph.
pub fn layout_graph(g: &TableGraph, cfg: &PipelineConfig) -> Result<PipelineLayout, LayoutError> {
    cfg.validate()?;
    let guarded = eliminate_branches(g, cfg)?;
    let levels = reorder_by_dataflow(&guarded)?;
    let (stages, placement) = greedy_merge(&guarded, &levels, cfg)?;
    Ok(PipelineLayout {
        optimized: true,
        config: *cfg,
        stages,
        placement,
        guarded,
        levels,
        longest_path_before: g.longest_path(),
        warnings: Vec::new(),
    })
}

/// One table per graph node, branch tables included, each at its control
/// depth.
pub fn no_opt_layout(g: &TableGraph, cfg: &PipelineConfig) -> Result<PipelineLayout, LayoutError> {
    cfg.validate()?;
    let depth = g.control_depth();
    let guarded = eliminate_branches(g, cfg)?;
    let mut stages: Vec<Vec<MergedTable>> = Vec::new();
    let mut placement = BTreeMap::new();
    for n in g.nodes.iter().filter(|n| n.id != g.root) {
        let s = depth[n.id];
        let fail = |reason: String| LayoutError::Placement {
            table: n.name.clone(),
            node: n.id,
            reason,
        };
        if s >= cfg.stages {
            return Err(fail(format!(
                "needs stage {s} but the pipeline has {} stages",
                cfg.stages
            )));
        }
        if stages.len() <= s {
            stages.resize(s + 1, Vec::new());
        }
        if stages[s].len() >= cfg.tables_per_stage {
            return Err(fail(format!("stage {s} already holds {} tables", cfg.tables_per_stage)));
        }
        stages[s].push(MergedTable {
            name: n.name.clone(),
            stage: s,
            members: vec![n.id],
            keys: Vec::new(),
            rules: vec![Rule {
                pattern: BTreeMap::new(),
                action: vec![n.id],
            }],
        });
        placement.insert(n.id, (s, stages[s].len() - 1));
    }
    Ok(PipelineLayout {
        optimized: false,
        config: *cfg,
        stages,
        placement,
        guarded,
        levels: BTreeMap::new(),
        longest_path_before: g.longest_path(),
        warnings: Vec::new(),
    })
}

// ----------------------------------------------------------------- report

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: usize,
    pub tables: usize,
    pub ops: usize,
    pub memops: usize,
    pub branches: usize,
    pub statements: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayoutReport {
    pub optimized: bool,
    pub stages_used: usize,
    pub tables: usize,
    pub longest_path_before: usize,
    pub longest_path_after: usize,
    pub compression_ratio: f64,
    pub per_stage: Vec<StageReport>,
    pub warnings: Vec<String>,
}

pub fn layout_report(l: &PipelineLayout, g: &TableGraph) -> LayoutReport {
    let per_stage: Vec<StageReport> = l
        .stages
        .iter()
        .enumerate()
        .map(|(s, tables)| {
            let mut r = StageReport {
                stage: s,
                tables: tables.len(),
                ops: 0,
                memops: 0,
                branches: 0,
                statements: 0,
            };
            for id in tables.iter().flat_map(|t| &t.members) {
                r.statements += 1;
                match g.nodes[*id].stmt {
                    AtomicStmt::Op { .. } => r.ops += 1,
                    AtomicStmt::MemOp(_) => r.memops += 1,
                    AtomicStmt::Branch(_) => r.branches += 1,
                    _ => {}
                }
            }
            r
        })
        .collect();
    let stages_used = l.stages_used();
    LayoutReport {
        optimized: l.optimized,
        stages_used,
        tables: l.tables().count(),
        longest_path_before: l.longest_path_before,
        longest_path_after: stages_used,
        compression_ratio: if stages_used == 0 {
            0.0
        } else {
            l.longest_path_before as f64 / stages_used as f64
        },
        per_stage,
        warnings: l.warnings.clone(),
    }
}
