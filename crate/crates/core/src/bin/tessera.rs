use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use tessera::circuit::{self, statevector, Circuit};
use tessera::config::{EngineConfig, Strategy, StrategyChoice, DEFAULT_BLOCK_THRESHOLD};
use tessera::dense::{tensordot, DenseTensor};
use tessera::planner::{BlockLayout, PlanError};
use tessera::runtime::{aggregate, execute_contraction, read_trace};
use tessera::store::encode_block;
use tessera::{Engine, Error};

const EXIT_FAILURE: u8 = 1;
const EXIT_PLAN: u8 = 2;
const EXIT_INVALID: u8 = 3;
const EXIT_TRACE: u8 = 4;

#[derive(Parser)]
#[command(name = "tessera", version, about = "Out-of-core block tensor contraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Contract two seeded random matrices U[m,k] and V[n,k] over k.
    Contract(ContractArgs),
    /// Compute one amplitude <out|C|in> of a quantum circuit.
    Circuit(CircuitArgs),
    /// Compare reduction strategies over a list of B_k values (CSV output).
    BenchReduction(BenchArgs),
    /// Summarize a trace file by operation.
    TraceReport(TraceArgs),
}

#[derive(Args, Clone)]
struct EngineArgs {
    /// Simulated nodes.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    nodes: u64,
    /// Cores per node.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    cores: u64,
    /// Memory per node in bytes; accepts K, M, G (and KiB, MiB, GiB) suffixes.
    #[arg(long, default_value = "4GiB", value_parser = parse_size)]
    mem: u64,
    /// Worker threads executing tasks.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    workers: u64,
    /// auto, sequential, tree or commutative.
    #[arg(long, default_value = "auto")]
    strategy: StrategyChoice,
    /// Largest B_k for which auto picks sequential reduction.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    bk_threshold: u64,
    /// Block store directory; defaults to $TESSERA_STORE_ROOT, else a temporary directory.
    #[arg(long)]
    store_root: Option<PathBuf>,
    /// Write an NDJSON task trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EngineArgs {
    fn config(&self) -> EngineConfig {
        EngineConfig {
            nodes: self.nodes as usize,
            cores_per_node: self.cores as usize,
            memory_bytes_per_node: self.mem,
            workers: self.workers as usize,
            seed: self.seed,
            strategy: self.strategy,
            bk_threshold: self.bk_threshold as usize,
            store_root: self.store_root.clone(),
            trace_path: self.trace.clone(),
            ..EngineConfig::default()
        }
    }
}

#[derive(Args)]
struct ContractArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    m: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    mb: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    nb: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    kb: u64,
    /// Print the plan as JSON before running.
    #[arg(long)]
    dump_plan: bool,
    /// Compare against a dense contraction (at most 2^20 elements in total).
    #[arg(long)]
    verify: bool,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct CircuitArgs {
    /// Circuit JSON file.
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    circuit: Option<PathBuf>,
    /// Random circuit as qubits,depth,seed.
    #[arg(long, value_parser = parse_random)]
    random: Option<(usize, usize, u64)>,
    /// Input bitstring, qubit 0 first. Defaults to all zeros.
    #[arg(long = "in")]
    input: Option<String>,
    /// Output bitstring, qubit 0 first. Defaults to all zeros.
    #[arg(long = "out")]
    output: Option<String>,
    /// Check against a state-vector simulation (up to 20 qubits).
    #[arg(long)]
    verify: bool,
    /// Result block size that triggers splitting an index in two.
    #[arg(long, default_value_t = DEFAULT_BLOCK_THRESHOLD as u64, value_parser = clap::value_parser!(u64).range(1..))]
    block_threshold: u64,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated B_k values.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
    bk_list: Vec<u64>,
    /// Comma-separated strategies to compare.
    #[arg(long, value_delimiter = ',', default_value = "sequential,commutative")]
    strategies: Vec<Strategy>,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    mb: u64,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    nb: u64,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    kb: u64,
    /// Output blocks along m and along n.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    out_grid: u64,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    trace: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Plan(PlanError::Store(_)) => EXIT_FAILURE,
            Error::Plan(_) => EXIT_PLAN,
            Error::Circuit(_) | Error::Config(_) => EXIT_INVALID,
            Error::Trace(_) => EXIT_TRACE,
            Error::Tensor(_) | Error::Store(_) | Error::Runtime(_) => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INVALID,
        message: message.into(),
    }
}

fn parse_size(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (digits, unit) = s.split_at(split);
    let value: u64 = digits.parse().map_err(|_| format!("invalid size {s:?}"))?;
    let scale: u64 = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kib" | "kb" => 1 << 10,
        "m" | "mib" | "mb" => 1 << 20,
        "g" | "gib" | "gb" => 1 << 30,
        other => return Err(format!("unknown size unit {other:?}")),
    };
    match value.checked_mul(scale) {
        Some(0) => Err("size must be positive".into()),
        Some(v) => Ok(v),
        None => Err(format!("size {s:?} overflows")),
    }
}

fn parse_random(s: &str) -> Result<(usize, usize, u64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err("expected qubits,depth,seed".into());
    }
    let n: usize = parts[0].parse().map_err(|_| format!("bad qubit count {:?}", parts[0]))?;
    let depth: usize = parts[1].parse().map_err(|_| format!("bad depth {:?}", parts[1]))?;
    let seed: u64 = parts[2].parse().map_err(|_| format!("bad seed {:?}", parts[2]))?;
    if n == 0 || depth == 0 {
        return Err("qubits and depth must be positive".into());
    }
    Ok((n, depth, seed))
}

/// `x` rounded to `digits` significant digits, in positional notation.
fn significant(x: f64, digits: i32) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.prec$}", prec = (digits - 1) as usize);
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn checksum(t: &DenseTensor) -> String {
    let digest = Sha256::digest(encode_block(t));
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn matrix_layouts(a: &ContractArgs) -> Result<(BlockLayout, BlockLayout), Failure> {
    let (m, n, k) = (a.m as usize, a.n as usize, a.k as usize);
    let (mb, nb, kb) = (a.mb as usize, a.nb as usize, a.kb as usize);
    let u = BlockLayout::new(vec!["m".into(), "k".into()], vec![m, k], vec![mb, kb]).map_err(|e| invalid(e.to_string()))?;
    let v = BlockLayout::new(vec!["n".into(), "k".into()], vec![n, k], vec![nb, kb]).map_err(|e| invalid(e.to_string()))?;
    Ok((u, v))
}

fn cmd_contract(args: ContractArgs) -> Result<(), Failure> {
    let (lu, lv) = matrix_layouts(&args)?;
    let config = args.engine.config();
    config.validate().map_err(|e| invalid(e.to_string()))?;
    let engine = Engine::new(config)?;
    let plan = engine.plan(&lu, &lv)?;
    if args.dump_plan {
        println!("{}", serde_json::to_string_pretty(&plan.summary()).expect("plans serialize"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(args.engine.seed);
    let u = DenseTensor::random(lu.global_extents(), &mut rng);
    let v = DenseTensor::random(lv.global_extents(), &mut rng);
    let bu = engine.scatter(lu, &u)?;
    let bv = engine.scatter(lv, &v)?;

    let started = Instant::now();
    let run = execute_contraction(engine.runtime(), &plan, &bu, &bv)?;
    let wall = started.elapsed();
    if let Some(path) = &args.engine.trace {
        tessera::runtime::export_trace(&run.report.trace, path).map_err(Error::from)?;
    }
    let result = engine.gather(&run.output)?;

    println!("strategy: {}", plan.effective_strategy());
    println!("b_k: {}", plan.b_k());
    println!("cores_per_task: {}", plan.cores_per_task);
    println!("tasks: {}", plan.task_count());
    println!("graph_tasks: {}", run.report.trace.len());
    println!("serializations: {}", run.report.metrics.serializations);
    println!("deserializations: {}", run.report.metrics.deserializations);
    println!("peak_declared_bytes: {}", run.report.peak_declared());
    println!("checksum: {}", checksum(&result));
    println!("wall_ms: {:.3}", wall.as_secs_f64() * 1e3);

    if args.verify {
        let total = u.len() + v.len() + result.len();
        if total > 1 << 20 {
            println!("verify: skipped ({total} elements exceed 2^20)");
        } else {
            let want = tensordot(&u, &v, &[(1, 1)]).map_err(Error::from)?;
            let scale = want.max_abs().max(f32::MIN_POSITIVE) as f64;
            let err = result
                .data()
                .iter()
                .zip(want.data())
                .map(|(a, b)| (a - b).norm() as f64)
                .fold(0.0, f64::max)
                / scale;
            if err <= 1e-4 {
                println!("verify: VERIFIED (relative error {err:.3e})");
            } else {
                return Err(Failure {
                    code: EXIT_FAILURE,
                    message: format!("verify: MISMATCH (relative error {err:.3e})"),
                });
            }
        }
    }
    Ok(())
}

fn cmd_circuit(args: CircuitArgs) -> Result<(), Failure> {
    let circuit = match (&args.circuit, args.random) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            Circuit::from_json(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?
        }
        (None, Some((n, depth, seed))) => circuit::random_circuit(n, depth, seed).map_err(Error::from)?,
        (None, None) => return Err(invalid("either --circuit or --random is required")),
    };
    let n = circuit.num_qubits;
    let zeros = "0".repeat(n);
    let input = circuit::parse_bitstring(args.input.as_deref().unwrap_or(&zeros), n).map_err(Error::from)?;
    let output = circuit::parse_bitstring(args.output.as_deref().unwrap_or(&zeros), n).map_err(Error::from)?;
    if args.verify && n > 20 {
        return Err(invalid(format!("--verify supports at most 20 qubits, circuit has {n}")));
    }
    let config = EngineConfig {
        block_threshold_elements: args.block_threshold as usize,
        ..args.engine.config()
    };
    config.validate().map_err(|e| invalid(e.to_string()))?;

    let network = circuit::build_network(&circuit, &input, &output).map_err(Error::from)?;
    let engine = Engine::new(config)?;
    let started = Instant::now();
    let result = circuit::contract_network(&network, &engine)?;
    let wall = started.elapsed();
    let amp = result.tensor.first();

    println!("qubits: {n}");
    println!("gates: {}", circuit.gates.len());
    println!("tensors: {}", network.tensors.len());
    println!("steps: {}", result.steps);
    println!("tasks: {}", result.tasks);
    println!("largest_intermediate: {}", result.largest_intermediate);
    println!("amplitude: ({}, {})", significant(amp.re as f64, 9), significant(amp.im as f64, 9));
    println!("wall_ms: {:.3}", wall.as_secs_f64() * 1e3);
    if args.verify {
        let want = statevector::amplitude(&circuit, &input, &output);
        let diff = ((amp.re as f64 - want.re).powi(2) + (amp.im as f64 - want.im).powi(2)).sqrt();
        let ok = diff <= 1e-4 * want.norm() || diff <= 1e-6;
        let reference = format!("({}, {})", significant(want.re, 9), significant(want.im, 9));
        if ok {
            println!("VERIFIED against state vector {reference}, |diff| = {diff:.3e}");
        } else {
            return Err(Failure {
                code: EXIT_FAILURE,
                message: format!("MISMATCH: state vector gives {reference}, |diff| = {diff:.3e}"),
            });
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    if let Some(bad) = args.bk_list.iter().find(|&&b| b == 0) {
        return Err(invalid(format!("B_k values must be positive, got {bad}")));
    }
    let base = args.engine.config();
    base.validate().map_err(|e| invalid(e.to_string()))?;
    let (mb, nb, kb) = (args.mb as usize, args.nb as usize, args.kb as usize);
    let g = args.out_grid as usize;

    println!("strategy,bk,wall_ms,tasks,ser,deser,peak_bytes,outcome");
    for &bk in &args.bk_list {
        let bk = bk as usize;
        let lu = BlockLayout::new(vec!["m".into(), "k".into()], vec![g * mb, bk * kb], vec![mb, kb]).map_err(|e| invalid(e.to_string()))?;
        let lv = BlockLayout::new(vec!["n".into(), "k".into()], vec![g * nb, bk * kb], vec![nb, kb]).map_err(|e| invalid(e.to_string()))?;
        for &strategy in &args.strategies {
            let engine = Engine::new(EngineConfig {
                strategy: StrategyChoice::from(strategy),
                ..base.clone()
            })?;
            let plan = match engine.plan(&lu, &lv) {
                Ok(p) => p,
                Err(Error::Plan(e @ PlanError::Infeasible { .. })) => {
                    eprintln!("{strategy} bk={bk}: {e}");
                    println!("{strategy},{bk},0.000,0,0,0,0,oom");
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(args.engine.seed);
            let u = engine.scatter(lu.clone(), &DenseTensor::random(lu.global_extents(), &mut rng))?;
            let v = engine.scatter(lv.clone(), &DenseTensor::random(lv.global_extents(), &mut rng))?;
            let started = Instant::now();
            match execute_contraction(engine.runtime(), &plan, &u, &v) {
                Ok(run) => {
                    let r = &run.report;
                    println!(
                        "{strategy},{bk},{:.3},{},{},{},{},ok",
                        started.elapsed().as_secs_f64() * 1e3,
                        r.trace.len(),
                        r.metrics.serializations,
                        r.metrics.deserializations,
                        r.peak_declared()
                    );
                }
                Err(e) => {
                    eprintln!("{strategy} bk={bk}: {e}");
                    println!("{strategy},{bk},{:.3},0,0,0,0,fail", started.elapsed().as_secs_f64() * 1e3);
                }
            }
        }
    }
    Ok(())
}

fn cmd_trace_report(args: TraceArgs) -> Result<(), Failure> {
    let events = read_trace(&args.trace).map_err(|e| Failure {
        code: EXIT_TRACE,
        message: e.to_string(),
    })?;
    if events.is_empty() {
        println!("no tasks");
        return Ok(());
    }
    let shares = aggregate(&events);
    let width = shares.iter().map(|s| s.op_name.len()).max().unwrap_or(0).max("op".len());
    println!(
        "{:<width$}  {:>7}  {:>14}  {:>14}  {:>14}  {:>7}",
        "op", "count", "user_ns", "ser_ns", "deser_ns", "percent"
    );
    for s in &shares {
        println!(
            "{:<width$}  {:>7}  {:>14}  {:>14}  {:>14}  {:>7.2}",
            s.op_name, s.count, s.user_ns, s.ser_ns, s.deser_ns, s.percent
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INVALID)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Contract(a) => cmd_contract(a),
        Command::Circuit(a) => cmd_circuit(a),
        Command::BenchReduction(a) => cmd_bench(a),
        Command::TraceReport(a) => cmd_trace_report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
