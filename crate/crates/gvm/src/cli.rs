//! Command-line interface.
//!
//! Exit codes: 0 no error found, 1 an error state was reached, 2 a budget
//! was exhausted before the search finished, 3 usage or input problems.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::explorer::{self, Search, Verdict, VerifyOptions};
use crate::gir::{instrument, link, parse_program, validate, InstrumentationPolicy, Program};
use crate::mos;
use crate::vm::{boot, lower, transition, EvalOptions, Image, Outcome, ZeroOracle};

#[derive(Parser)]
#[command(name = "gvm", version, about = "Safety model checker for GIR programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Explore the whole state space and report errors.
    Verify(VerifyArgs),
    /// Execute the canonical (all zero choices) run and print its traces.
    Run(RunArgs),
    /// Re-execute a recorded counterexample and print its traces.
    Replay(ReplayArgs),
    /// Print the linked program, or its boot heap, and exit.
    Dump(DumpArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// GIR source files, linked together in order after the OS prelude.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Entry function started as the first thread.
    #[arg(long, default_value = "main")]
    entry: String,
    /// Let malloc nondeterministically return null.
    #[arg(long)]
    malloc_can_fail: bool,
    /// Skip automatic interrupt instrumentation of the inputs.
    #[arg(long)]
    no_instrument: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Fire every control-flow interrupt instead of loop re-entries only.
    #[arg(long)]
    no_tau_cfl: bool,
    /// Fire every shared-memory interrupt instead of the visible subset.
    #[arg(long)]
    no_tau_mem: bool,
    /// Instruction limit per transition.
    #[arg(long, default_value_t = 1_000_000)]
    step_budget: usize,
}

impl EvalArgs {
    fn options(&self) -> EvalOptions {
        EvalOptions {
            tau_cfl: !self.no_tau_cfl,
            tau_mem: !self.no_tau_mem,
            step_budget: self.step_budget,
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    build: BuildArgs,
    #[command(flatten)]
    eval: EvalArgs,
    /// Deduplicate states by identity instead of up to heap symmetry.
    #[arg(long)]
    no_symmetry: bool,
    #[arg(long, value_parser = parse_search, default_value = "bfs")]
    search: Search,
    #[arg(long, default_value_t = 1_000_000)]
    max_states: usize,
    /// Worker threads for successor generation.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Write the explored state space as DOT to this file.
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Print search statistics.
    #[arg(long)]
    stats: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    build: BuildArgs,
    #[command(flatten)]
    eval: EvalArgs,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    build: BuildArgs,
    #[command(flatten)]
    eval: EvalArgs,
    /// Counterexample file; defaults to <first input>.cex.
    #[arg(long)]
    cex: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    build: BuildArgs,
    /// Dump the boot-state heap graph as DOT instead of the program.
    #[arg(long)]
    heap_dot: bool,
}

fn parse_search(s: &str) -> Result<Search, String> {
    match s {
        "bfs" => Ok(Search::Bfs),
        "dfs" => Ok(Search::Dfs),
        _ => Err("expected bfs or dfs".to_string()),
    }
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version are not usage errors
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Cmd::Verify(args) => cmd_verify(args),
        Cmd::Run(args) => cmd_run(args),
        Cmd::Replay(args) => cmd_replay(args),
        Cmd::Dump(args) => cmd_dump(args),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("gvm: {msg}");
            3
        }
    }
}

fn load_units(args: &BuildArgs) -> Result<(Program, Vec<Program>), String> {
    let prelude = if args.malloc_can_fail {
        mos::prelude_with_failing_malloc()
    } else {
        mos::prelude()
    };
    let mut units = Vec::new();
    for path in &args.inputs {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let unit = parse_program(&text).map_err(|diags| {
            diags
                .iter()
                .map(|d| format!("{}:{d}", path.display()))
                .collect::<Vec<_>>()
                .join("\n")
        })?;
        let unit = if args.no_instrument {
            unit
        } else {
            instrument(&unit, &InstrumentationPolicy::default())
        };
        units.push(unit);
    }
    Ok((prelude, units))
}

fn build(args: &BuildArgs) -> Result<Image, String> {
    let (prelude, units) = load_units(args)?;
    let mut all = vec![prelude];
    all.extend(units);
    let linked = link(&all)
        .map_err(|diags| diags.iter().map(|d| d.message.clone()).collect::<Vec<_>>().join("\n"))?;
    let diags = validate(&linked);
    if !diags.is_empty() {
        return Err(diags.iter().map(|d| d.message.clone()).collect::<Vec<_>>().join("\n"));
    }
    if linked.function(&args.entry).is_none() {
        return Err(format!("entry function {} not defined", args.entry));
    }
    Ok(lower(&linked))
}

fn cex_path(args: &BuildArgs) -> PathBuf {
    let first = &args.inputs[0];
    let mut os = first.as_os_str().to_owned();
    os.push(".cex");
    PathBuf::from(os)
}

fn print_stats(stats: &explorer::Stats) {
    println!("states={}", stats.states);
    println!("transitions={}", stats.transitions);
    println!("steps={}", stats.steps);
    println!("interrupts-fired={}", stats.interrupts_fired);
    println!("interrupts-suppressed={}", stats.interrupts_suppressed);
}

fn cmd_verify(args: VerifyArgs) -> Result<i32, String> {
    let image = build(&args.build)?;
    let opts = VerifyOptions {
        eval: args.eval.options(),
        symmetry: !args.no_symmetry,
        search: args.search,
        max_states: args.max_states,
        workers: args.workers.max(1),
        collect_dot: args.dot.is_some(),
    };
    let out = explorer::verify(&image, &args.build.entry, &opts)?;
    if let (Some(path), Some(dot)) = (&args.dot, &out.dot) {
        std::fs::write(path, dot).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if args.stats {
        print_stats(&out.stats);
    }
    match out.verdict {
        Verdict::Safe => {
            println!("verdict: safe");
            Ok(0)
        }
        Verdict::Budget => {
            println!("verdict: budget exhausted");
            Ok(2)
        }
        Verdict::Error(cex) => {
            println!("verdict: error");
            let path = cex_path(&args.build);
            std::fs::write(&path, cex.to_string())
                .map_err(|e| format!("{}: {e}", path.display()))?;
            println!("counterexample: {}", path.display());
            // replaying our own counterexample is a self-check; a failure
            // here is a bug worth surfacing loudly
            let traces = explorer::replay(&image, &args.build.entry, &cex, &opts.eval)
                .map_err(|e| format!("counterexample failed to replay: {e}"))?;
            for t in &traces {
                println!("trace: {t}");
            }
            if let Some((kind, at, _)) = cex.edges.last().and_then(|e| e.faults.first()) {
                println!("error: {kind} at {at}");
            } else {
                println!("error: flag");
            }
            Ok(1)
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<i32, String> {
    let image = build(&args.build)?;
    let opts = args.eval.options();
    let mut r = boot(&image, &args.build.entry, &mut ZeroOracle, &opts)?;
    loop {
        for t in &r.traces {
            println!("trace: {t}");
        }
        if r.snapshot.error {
            println!("result: error");
            return Ok(1);
        }
        match r.outcome {
            Outcome::Exit => {
                println!("result: exit");
                return Ok(0);
            }
            Outcome::Budget => {
                println!("result: budget exhausted");
                return Ok(2);
            }
            Outcome::Step => r = transition(&image, &r.snapshot, &mut ZeroOracle, &opts),
        }
    }
}

fn cmd_replay(args: ReplayArgs) -> Result<i32, String> {
    let image = build(&args.build)?;
    let path = args.cex.clone().unwrap_or_else(|| cex_path(&args.build));
    let text =
        std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let cex = explorer::parse_counterexample(&text)?;
    let traces = explorer::replay(&image, &args.build.entry, &cex, &args.eval.options())?;
    for t in &traces {
        println!("trace: {t}");
    }
    println!("replay: ok");
    Ok(1)
}

fn cmd_dump(args: DumpArgs) -> Result<i32, String> {
    let image = build(&args.build)?;
    if args.heap_dot {
        let r = boot(&image, &args.build.entry, &mut ZeroOracle, &EvalOptions::default())?;
        print!("{}", r.snapshot.to_dot());
        return Ok(0);
    }
    // reprint the linked program from the source units
    let (prelude, units) = load_units(&args.build)?;
    let mut all = vec![prelude];
    all.extend(units);
    let linked = link(&all).map_err(|d| format!("{d:?}"))?;
    print!("{linked}");
    println!("; program-hash {}", image.hash_hex());
    Ok(0)
}
