//! Pass sequencing shared by the command-line tool and the tests.

use std::collections::BTreeMap;

use crate::diag::Diagnostic;
use crate::effects::{check_program_with, CheckOptions, Checked};
use crate::frontend::ast::DeclKind;
use crate::frontend::{parse_source, resolve_names};
use crate::memop::{validate_memop, MemopShape};

/// A program that passed every front-end check.
#[derive(Clone, Debug)]
pub struct Frontend {
    pub checked: Checked,
    pub memops: BTreeMap<String, MemopShape>,
}

pub fn check_source(file: &str, source: &str) -> Result<Frontend, Vec<Diagnostic>> {
    check_source_with(file, source, CheckOptions::default())
}

/// parse, resolve, memop validation, effect check.
pub fn check_source_with(
    file: &str,
    source: &str,
    opts: CheckOptions,
) -> Result<Frontend, Vec<Diagnostic>> {
    let program = parse_source(file, source).map_err(|e| vec![e.to_diagnostic()])?;
    let resolved = resolve_names(&program).map_err(|e| vec![e.to_diagnostic()])?;
    let mut diags = Vec::new();
    let mut memops = BTreeMap::new();
    for d in resolved.memops() {
        let DeclKind::Memop { name, .. } = &d.kind else {
            continue;
        };
        match validate_memop(d, &resolved.consts) {
            Ok(shape) => {
                memops.insert(name.name.clone(), shape);
            }
            Err(vs) => diags.extend(vs.iter().map(|v| v.to_diagnostic())),
        }
    }
    match check_program_with(&resolved, opts) {
        Ok(checked) if diags.is_empty() => Ok(Frontend { checked, memops }),
        Ok(_) => Err(diags),
        Err(errs) => {
            diags.extend(errs.iter().map(|e| e.to_diagnostic()));
            Err(diags)
        }
    }
}

/// Failure after the front end.
#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error(transparent)]
    Lower(#[from] crate::lower::LowerError),
    #[error(transparent)]
    Layout(#[from] crate::layout::LayoutError),
}

/// Every artifact of one compilation.
#[derive(Clone, Debug)]
pub struct Compiled {
    pub exe: crate::interp::Executable,
    pub ir: crate::lower::ProgramIr,
    pub report: crate::layout::LayoutReport,
    pub p4: String,
}

/// Lowering, layout and emission of a checked program.
pub fn compile(fe: &Frontend, cfg: &crate::layout::PipelineConfig, optimize: bool) -> Result<Compiled, CompileError> {
    use crate::layout::{layout_graph, layout_report, no_opt_layout};
    use crate::lower::{build_table_graph, lower_program, LowerConfig};

    cfg.validate()?;
    let r = &fe.checked.resolved;
    let lcfg = LowerConfig {
        max_compare_bits: cfg.max_compare_bits,
    };
    let ir = lower_program(r, &lcfg)?;
    let graph = build_table_graph(&ir);
    let layout = if optimize {
        layout_graph(&graph, cfg)?
    } else {
        no_opt_layout(&graph, cfg)?
    };
    let report = layout_report(&layout, &graph);
    let p4 = crate::emit::emit_pipeline(&layout, &graph, &crate::emit::EmitContext::new(r, &fe.memops));
    Ok(Compiled {
        exe: crate::interp::Executable {
            resolved: r.clone(),
            memops: fe.memops.clone(),
            graph,
            layout,
        },
        ir,
        report,
        p4,
    })
}

impl Compiled {
    /// Stage-by-stage table contents plus the layout report.
    pub fn layout_json(&self) -> serde_json::Value {
        use serde_json::json;
        let g = &self.exe.graph;
        let stages: Vec<serde_json::Value> = self
            .exe
            .layout
            .stages
            .iter()
            .enumerate()
            .map(|(s, tables)| {
                let tables: Vec<serde_json::Value> = tables
                    .iter()
                    .map(|t| {
                        let rules: Vec<serde_json::Value> = t
                            .rules
                            .iter()
                            .map(|r| {
                                let pattern: serde_json::Map<String, serde_json::Value> = r
                                    .pattern
                                    .iter()
                                    .map(|(k, (lo, hi))| (k.clone(), json!([lo, hi])))
                                    .collect();
                                let actions: Vec<&str> = r.action.iter().map(|id| g.nodes[*id].name.as_str()).collect();
                                json!({"match": pattern, "actions": actions})
                            })
                            .collect();
                        json!({
                            "name": t.name,
                            "members": t.members.iter().map(|id| g.nodes[*id].name.as_str()).collect::<Vec<_>>(),
                            "keys": t.keys.iter().map(|(k, w)| json!({"var": k, "bits": w})).collect::<Vec<_>>(),
                            "rules": rules,
                        })
                    })
                    .collect();
                json!({"stage": s, "tables": tables})
            })
            .collect();
        json!({
            "report": self.report,
            "config": self.exe.layout.config,
            "stages": stages,
        })
    }
}
