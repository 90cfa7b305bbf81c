//! C interface to the tessera engine.
//!
//! Every function returns a [`TesseraStatus`]. On failure the message is
//! kept per thread and read back with [`tessera_last_error`]. Objects are
//! opaque handles released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use tessera::circuit::{amplitude, build_network, parse_bitstring, Circuit};
use tessera::planner::{BlockLayout, Label, PlanError};
use tessera::{tensordot, DenseTensor, Engine, EngineConfig, Error, StrategyChoice, C32};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TesseraStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Tensor = 3,
    Store = 4,
    Plan = 5,
    /// No node can hold a single task at the requested block size.
    Infeasible = 6,
    Runtime = 7,
    Config = 8,
    Circuit = 9,
    Panic = 10,
}

/// Reduction strategy selector. `Auto` lets the tuner choose.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TesseraStrategy {
    Auto = 0,
    Sequential = 1,
    Tree = 2,
    Commutative = 3,
}

/// Engine settings. Obtain defaults from [`tessera_engine_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TesseraEngineOptions {
    pub nodes: usize,
    pub cores_per_node: usize,
    pub memory_bytes_per_node: u64,
    pub workers: usize,
    pub strategy: TesseraStrategy,
    pub bk_threshold: usize,
    /// Block store directory; null for a temporary one.
    pub store_root: *const c_char,
}

/// Figures of a finished block contraction.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TesseraContractInfo {
    pub strategy: TesseraStrategy,
    pub b_k: usize,
    pub cores_per_task: usize,
    pub tasks: usize,
    pub serializations: u64,
    pub deserializations: u64,
    pub peak_declared_bytes: u64,
}

/// Dense complex64 tensor.
pub struct TesseraTensor(DenseTensor);

/// Engine with its block store and runtime.
pub struct TesseraEngine(Engine);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(TesseraStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Tensor(_) => TesseraStatus::Tensor,
            Error::Store(_) | Error::Trace(_) => TesseraStatus::Store,
            Error::Plan(PlanError::Infeasible { .. }) => TesseraStatus::Infeasible,
            Error::Plan(_) => TesseraStatus::Plan,
            Error::Runtime(_) => TesseraStatus::Runtime,
            Error::Config(_) => TesseraStatus::Config,
            Error::Circuit(_) => TesseraStatus::Circuit,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(TesseraStatus::InvalidArgument, msg.into())
}

fn null(name: &str) -> Failure {
    Failure(TesseraStatus::NullPointer, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TesseraStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TesseraStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TesseraStatus::Panic
        }
    }
}

unsafe fn array<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn tessera_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates a tensor. `data` holds `2 * product(extents)` floats as
/// interleaved real and imaginary parts in row-major order; null yields zeros.
///
/// # Safety
/// `extents` must point to `order` values and `data`, when not null, to the
/// full element buffer.
#[no_mangle]
pub unsafe extern "C" fn tessera_tensor_new(
    order: usize,
    extents: *const usize,
    data: *const f32,
    out: *mut *mut TesseraTensor,
) -> TesseraStatus {
    guard(|| {
        let extents = array(extents, order, "extents")?.to_vec();
        let len = extents
            .iter()
            .try_fold(1usize, |n, &e| n.checked_mul(e))
            .ok_or_else(|| invalid("tensor size overflows"))?;
        let tensor = if data.is_null() {
            DenseTensor::zeros(&extents)
        } else {
            let raw = array(data, 2 * len, "data")?;
            let values = raw.chunks_exact(2).map(|c| C32::new(c[0], c[1])).collect();
            DenseTensor::new(extents, values).map_err(Error::from)?
        };
        put(out, TesseraTensor(tensor))
    })
}

/// # Safety
/// `tensor` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tessera_tensor_free(tensor: *mut TesseraTensor) {
    if !tensor.is_null() {
        drop(Box::from_raw(tensor));
    }
}

/// Order of the tensor, 0 for a null handle.
///
/// # Safety
/// `tensor` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tessera_tensor_order(tensor: *const TesseraTensor) -> usize {
    tensor.as_ref().map_or(0, |t| t.0.order())
}

/// Number of complex elements, 0 for a null handle.
///
/// # Safety
/// `tensor` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tessera_tensor_len(tensor: *const TesseraTensor) -> usize {
    tensor.as_ref().map_or(0, |t| t.0.len())
}

/// Copies the extents into `out`, which must hold `capacity >= order` values.
///
/// # Safety
/// `tensor` must be a live handle and `out` writable for `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn tessera_tensor_extents(
    tensor: *const TesseraTensor,
    out: *mut usize,
    capacity: usize,
) -> TesseraStatus {
    guard(|| {
        let t = handle(tensor, "tensor")?;
        let extents = t.0.extents();
        if capacity < extents.len() {
            return Err(invalid(format!("need room for {} extents, got {capacity}", extents.len())));
        }
        if !extents.is_empty() {
            if out.is_null() {
                return Err(null("out"));
            }
            ptr::copy_nonoverlapping(extents.as_ptr(), out, extents.len());
        }
        Ok(())
    })
}

/// Copies the elements as interleaved floats into `out`, which must hold
/// `capacity >= 2 * len` floats.
///
/// # Safety
/// `tensor` must be a live handle and `out` writable for `capacity` floats.
#[no_mangle]
pub unsafe extern "C" fn tessera_tensor_copy_data(
    tensor: *const TesseraTensor,
    out: *mut f32,
    capacity: usize,
) -> TesseraStatus {
    guard(|| {
        let t = handle(tensor, "tensor")?;
        let data = t.0.data();
        if capacity < 2 * data.len() {
            return Err(invalid(format!("need room for {} floats, got {capacity}", 2 * data.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let dst = slice::from_raw_parts_mut(out, 2 * data.len());
        for (pair, v) in dst.chunks_exact_mut(2).zip(data) {
            pair[0] = v.re;
            pair[1] = v.im;
        }
        Ok(())
    })
}

/// Contracts dimension `axes_a[i]` of `a` with `axes_b[i]` of `b` in memory.
/// The result holds the free dimensions of `a`, then those of `b`.
///
/// # Safety
/// `a` and `b` must be live handles and the axis arrays hold `n_axes` values.
#[no_mangle]
pub unsafe extern "C" fn tessera_tensordot(
    a: *const TesseraTensor,
    b: *const TesseraTensor,
    n_axes: usize,
    axes_a: *const usize,
    axes_b: *const usize,
    out: *mut *mut TesseraTensor,
) -> TesseraStatus {
    guard(|| {
        let (a, b) = (handle(a, "a")?, handle(b, "b")?);
        let axes: Vec<(usize, usize)> = array(axes_a, n_axes, "axes_a")?
            .iter()
            .copied()
            .zip(array(axes_b, n_axes, "axes_b")?.iter().copied())
            .collect();
        let c = tensordot(&a.0, &b.0, &axes).map_err(Error::from)?;
        put(out, TesseraTensor(c))
    })
}

/// Defaults: one node with 4 cores and 4 GiB, one worker, automatic strategy.
#[no_mangle]
pub extern "C" fn tessera_engine_options_default() -> TesseraEngineOptions {
    let d = EngineConfig::default();
    TesseraEngineOptions {
        nodes: d.nodes,
        cores_per_node: d.cores_per_node,
        memory_bytes_per_node: d.memory_bytes_per_node,
        workers: 1,
        strategy: TesseraStrategy::Auto,
        bk_threshold: d.bk_threshold,
        store_root: ptr::null(),
    }
}

/// # Safety
/// `options` must be null (defaults) or point to valid options.
#[no_mangle]
pub unsafe extern "C" fn tessera_engine_new(
    options: *const TesseraEngineOptions,
    out: *mut *mut TesseraEngine,
) -> TesseraStatus {
    guard(|| {
        let o = options.as_ref().copied().unwrap_or_else(|| tessera_engine_options_default());
        let store_root = if o.store_root.is_null() {
            None
        } else {
            Some(PathBuf::from(string(o.store_root, "store_root")?))
        };
        let config = EngineConfig {
            nodes: o.nodes,
            cores_per_node: o.cores_per_node,
            memory_bytes_per_node: o.memory_bytes_per_node,
            workers: o.workers,
            strategy: match o.strategy {
                TesseraStrategy::Auto => StrategyChoice::Auto,
                TesseraStrategy::Sequential => StrategyChoice::Sequential,
                TesseraStrategy::Tree => StrategyChoice::Tree,
                TesseraStrategy::Commutative => StrategyChoice::Commutative,
            },
            bk_threshold: o.bk_threshold,
            store_root,
            ..EngineConfig::default()
        };
        put(out, TesseraEngine(Engine::new(config)?))
    })
}

/// # Safety
/// `engine` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tessera_engine_free(engine: *mut TesseraEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

unsafe fn layout(
    tensor: &DenseTensor,
    names: *const *const c_char,
    block_extents: *const usize,
    which: &str,
) -> Result<BlockLayout, Failure> {
    let order = tensor.order();
    let labels = array(names, order, which)?
        .iter()
        .map(|&p| string(p, which).map(Label::new))
        .collect::<Result<Vec<_>, _>>()?;
    let blocks = array(block_extents, order, which)?.to_vec();
    Ok(BlockLayout::new(labels, tensor.extents().to_vec(), blocks).map_err(Error::from)?)
}

/// Splits `a` and `b` into blocks, contracts every label they share through
/// the task runtime and gathers the result. `a_labels` and `a_blocks` name
/// and block each dimension of `a`, likewise for `b`. The result holds the
/// free dimensions of `a`, then those of `b`. `info` may be null.
///
/// # Safety
/// Handles must be live; label and block arrays must hold one entry per
/// dimension of their tensor.
#[no_mangle]
pub unsafe extern "C" fn tessera_engine_contract(
    engine: *const TesseraEngine,
    a: *const TesseraTensor,
    a_labels: *const *const c_char,
    a_blocks: *const usize,
    b: *const TesseraTensor,
    b_labels: *const *const c_char,
    b_blocks: *const usize,
    out: *mut *mut TesseraTensor,
    info: *mut TesseraContractInfo,
) -> TesseraStatus {
    guard(|| {
        let engine = &handle(engine, "engine")?.0;
        let (a, b) = (&handle(a, "a")?.0, &handle(b, "b")?.0);
        if out.is_null() {
            return Err(null("out"));
        }
        let la = layout(a, a_labels, a_blocks, "a_labels")?;
        let lb = layout(b, b_labels, b_blocks, "b_labels")?;
        let plan = engine.plan(&la, &lb)?;
        let ba = engine.scatter(la, a)?;
        let bb = engine.scatter(lb, b)?;
        let run = engine.contract(&ba, &bb);
        ba.delete(engine.store()).map_err(Error::from)?;
        bb.delete(engine.store()).map_err(Error::from)?;
        let run = run?;
        let result = engine.gather(&run.output);
        run.output.delete(engine.store()).map_err(Error::from)?;
        if let Some(info) = info.as_mut() {
            *info = TesseraContractInfo {
                strategy: match plan.strategy {
                    tessera::Strategy::Sequential => TesseraStrategy::Sequential,
                    tessera::Strategy::Tree => TesseraStrategy::Tree,
                    tessera::Strategy::Commutative => TesseraStrategy::Commutative,
                },
                b_k: plan.b_k(),
                cores_per_task: plan.cores_per_task,
                tasks: plan.task_count(),
                serializations: run.report.metrics.serializations,
                deserializations: run.report.metrics.deserializations,
                peak_declared_bytes: run.report.peak_declared(),
            };
        }
        put(out, TesseraTensor(result?))
    })
}

/// Amplitude `<output|C|input>` of a circuit given as JSON. Bitstrings hold
/// one character per qubit, qubit 0 first.
///
/// # Safety
/// `engine` must be a live handle, the strings NUL-terminated, and the
/// result pointers writable.
#[no_mangle]
pub unsafe extern "C" fn tessera_circuit_amplitude(
    engine: *const TesseraEngine,
    circuit_json: *const c_char,
    input_bits: *const c_char,
    output_bits: *const c_char,
    re: *mut f32,
    im: *mut f32,
) -> TesseraStatus {
    guard(|| {
        let engine = &handle(engine, "engine")?.0;
        let circuit = Circuit::from_json(string(circuit_json, "circuit_json")?).map_err(Error::from)?;
        let n = circuit.num_qubits;
        let input = parse_bitstring(string(input_bits, "input_bits")?, n).map_err(Error::from)?;
        let output = parse_bitstring(string(output_bits, "output_bits")?, n).map_err(Error::from)?;
        if re.is_null() || im.is_null() {
            return Err(null("re/im"));
        }
        let network = build_network(&circuit, &input, &output).map_err(Error::from)?;
        let value = amplitude(&network, engine)?;
        *re = value.re;
        *im = value.im;
        Ok(())
    })
}
