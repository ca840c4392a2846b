use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use lucid_core::capacity::{naive_min_pkt_bytes, recirc_rate, RecircParams};
use lucid_core::diag::Diagnostic;
use lucid_core::driver::{check_source, compile, CompileError, Frontend};
use lucid_core::interp::{parse_spec, run, ExecForm};
use lucid_core::layout::{LayoutError, PipelineConfig};

#[derive(Parser)]
#[command(name = "lucidc", about = "Compiler and simulator for event-driven data-plane programs")]
#[command(disable_version_flag = true, args_conflicts_with_subcommands = true)]
struct Cli {
    /// Print the version and the default pipeline configuration.
    #[arg(long)]
    version: bool,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse, resolve, validate memops and check access order.
    Check {
        file: PathBuf,
        /// Print diagnostics as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Compile to P4 and a layout description.
    Compile(CompileArgs),
    /// Simulate a program on a topology and event trace.
    Interp(InterpArgs),
    /// Worst-case recirculation rate of a scanning firewall.
    Model(ModelArgs),
    /// Type-soundness fuzzing of the core calculus.
    CoreFuzz {
        #[arg(long, default_value_t = 1000)]
        seeds: u64,
        #[arg(long, default_value_t = 8)]
        depth: u32,
        #[arg(long, default_value_t = 4)]
        globals: u32,
    },
}

#[derive(Args)]
struct CompileArgs {
    file: PathBuf,
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the atomic table graph to `<out>.ir.json`.
    #[arg(long)]
    emit_ir: bool,
    /// One table per statement, no branch elimination or merging.
    #[arg(long)]
    no_opt: bool,
    /// Output path prefix; defaults to the input without its extension.
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InterpArgs {
    program: PathBuf,
    spec: PathBuf,
    /// Execution form: surface, ir or layout.
    #[arg(long, default_value = "layout")]
    exec: ExecForm,
    /// Log every array cell write.
    #[arg(long)]
    trace_state: bool,
    /// Limit recirculations per second per switch.
    #[arg(long)]
    recirc_cap: Option<u64>,
    /// Pipeline configuration (JSON) used for the layout.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    /// Table entries (power of two).
    #[arg(long)]
    entries: u64,
    /// Scan interval in seconds.
    #[arg(long)]
    interval: f64,
    /// Flow arrivals per second.
    #[arg(long)]
    flows: f64,
    /// Pipeline packets per second.
    #[arg(long, default_value_t = 1e9)]
    pipeline_rate: f64,
    /// Also report a minimum packet size; only `naive` is available.
    #[arg(long)]
    min_pkt_model: Option<MinPktModel>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MinPktModel {
    Naive,
}

/// Failure with its exit code.
struct Fail(u8, String);

type Res = Result<(), Fail>;

fn usage(e: impl std::fmt::Display) -> Fail {
    Fail(2, format!("error: {e}"))
}

fn read(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(|e| usage(format!("{e:#}")))
}

fn write(path: &Path, text: &str) -> Res {
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(|e| usage(format!("{e:#}")))
}

fn render(d: &Diagnostic) -> String {
    let mut s = format!("error[{}]: {}", d.kind, d.message);
    if let Some(h) = &d.handler {
        s.push_str(&format!("\n  in handler {h}"));
    }
    for sp in &d.spans {
        s.push_str(&format!("\n  --> {sp}"));
    }
    s
}

fn front(path: &Path, json_out: bool) -> Result<Frontend, Fail> {
    let src = read(path)?;
    check_source(&path.display().to_string(), &src).map_err(|ds| {
        let text = if json_out {
            serde_json::to_string_pretty(&json!({ "diagnostics": ds })).expect("serializable")
        } else {
            ds.iter().map(render).collect::<Vec<_>>().join("\n")
        };
        Fail(1, text)
    })
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Fail> {
    let Some(p) = path else {
        return Ok(PipelineConfig::default());
    };
    let cfg: PipelineConfig =
        serde_json::from_str(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?;
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn compile_error(e: CompileError) -> Fail {
    match e {
        CompileError::Layout(LayoutError::BadConfig(_)) => usage(e),
        e => Fail(1, format!("error: {e}")),
    }
}

fn cmd_check(file: &Path, json_out: bool) -> Res {
    front(file, json_out)?;
    if json_out {
        println!("{}", json!({ "diagnostics": [] }));
    }
    Ok(())
}

fn cmd_compile(a: &CompileArgs) -> Res {
    let cfg = load_config(a.config.as_deref())?;
    let fe = front(&a.file, a.json)?;
    let c = compile(&fe, &cfg, !a.no_opt).map_err(compile_error)?;
    let out = a.output.clone().unwrap_or_else(|| a.file.with_extension(""));
    let with = |ext: &str| {
        let mut p = out.clone().into_os_string();
        p.push(ext);
        PathBuf::from(p)
    };
    write(&with(".p4"), &c.p4)?;
    let layout = serde_json::to_string_pretty(&c.layout_json()).expect("serializable");
    write(&with(".layout.json"), &(layout + "\n"))?;
    if a.emit_ir {
        let ir = serde_json::to_string_pretty(&c.exe.graph.to_json()).expect("serializable");
        write(&with(".ir.json"), &(ir + "\n"))?;
    }
    for w in c.ir.warnings.iter().chain(&c.report.warnings) {
        eprintln!("warning: {w}");
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&c.report).expect("serializable"));
    } else {
        println!("stages: {}", c.report.stages_used);
        println!("compression ratio: {:.2}", c.report.compression_ratio);
    }
    Ok(())
}

fn cmd_interp(a: &InterpArgs) -> Res {
    let cfg = load_config(a.config.as_deref())?;
    let fe = front(&a.program, false)?;
    let text = read(&a.spec)?;
    let mut spec = parse_spec(&text).map_err(|e| usage(format!("{}: {e}", a.spec.display())))?;
    spec.check_against(&fe.checked.resolved)
        .map_err(|e| usage(format!("{}: {e}", a.spec.display())))?;
    if let Some(cap) = a.recirc_cap {
        if cap == 0 {
            return Err(usage("--recirc-cap must be positive"));
        }
        spec.config.recirc_cap_pps = Some(cap);
    }
    let c = compile(&fe, &cfg, true).map_err(compile_error)?;
    let out = run(&c.exe, a.exec, &spec, a.trace_state);
    print!("{}", out.to_jsonl());
    Ok(())
}

fn cmd_model(a: &ModelArgs) -> Res {
    let p = RecircParams {
        entries: a.entries,
        interval_s: a.interval,
        flows_per_s: a.flows,
        pipeline_rate_pps: a.pipeline_rate,
    };
    let mut r = recirc_rate(&p).map_err(usage)?;
    if a.min_pkt_model.is_some() {
        r.min_pkt_bytes = Some(naive_min_pkt_bytes(&r, &p));
    }
    println!("{}", serde_json::to_string_pretty(&r).expect("serializable"));
    Ok(())
}

fn cmd_core_fuzz(seeds: u64, depth: u32, globals: u32) -> Res {
    if depth == 0 {
        return Err(usage("--depth must be at least 1"));
    }
    let s = lucid_core::calculus::core_fuzz(seeds, depth, globals);
    println!("{}", serde_json::to_string_pretty(&s).expect("serializable"));
    if s.stuck > 0 || s.preservation_failures > 0 {
        return Err(Fail(1, "error: soundness property violated".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        _ if cli.version => {
            println!("lucidc {}", env!("CARGO_PKG_VERSION"));
            println!(
                "default pipeline config: {}",
                serde_json::to_string(&PipelineConfig::default()).expect("serializable")
            );
            Ok(())
        }
        None => Err(usage("a subcommand is required; see --help")),
        Some(Cmd::Check { file, json }) => cmd_check(file, *json),
        Some(Cmd::Compile(a)) => cmd_compile(a),
        Some(Cmd::Interp(a)) => cmd_interp(a),
        Some(Cmd::Model(a)) => cmd_model(a),
        Some(Cmd::CoreFuzz { seeds, depth, globals }) => cmd_core_fuzz(*seeds, *depth, *globals),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            if code == 1 && msg.starts_with('{') {
                println!("{msg}");
            } else {
                eprintln!("{msg}");
            }
            ExitCode::from(code)
        }
    }
}
