#ifndef TESSERA_H
#define TESSERA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum TesseraStatus {
  TESSERA_STATUS_OK = 0,
  TESSERA_STATUS_NULL_POINTER = 1,
  TESSERA_STATUS_INVALID_ARGUMENT = 2,
  TESSERA_STATUS_TENSOR = 3,
  TESSERA_STATUS_STORE = 4,
  TESSERA_STATUS_PLAN = 5,
  // No node can hold a single task at the requested block size.
  TESSERA_STATUS_INFEASIBLE = 6,
  TESSERA_STATUS_RUNTIME = 7,
  TESSERA_STATUS_CONFIG = 8,
  TESSERA_STATUS_CIRCUIT = 9,
  TESSERA_STATUS_PANIC = 10,
} TesseraStatus;

// Reduction strategy selector. `Auto` lets the tuner choose.
typedef enum TesseraStrategy {
  TESSERA_STRATEGY_AUTO = 0,
  TESSERA_STRATEGY_SEQUENTIAL = 1,
  TESSERA_STRATEGY_TREE = 2,
  TESSERA_STRATEGY_COMMUTATIVE = 3,
} TesseraStrategy;

// Engine with its block store and runtime.
typedef struct TesseraEngine TesseraEngine;

// Dense complex64 tensor.
typedef struct TesseraTensor TesseraTensor;

// Engine settings. Obtain defaults from [`tessera_engine_options_default`].
typedef struct TesseraEngineOptions {
  size_t nodes;
  size_t cores_per_node;
  uint64_t memory_bytes_per_node;
  size_t workers;
  enum TesseraStrategy strategy;
  size_t bk_threshold;
  // Block store directory; null for a temporary one.
  const char *store_root;
} TesseraEngineOptions;

// Figures of a finished block contraction.
typedef struct TesseraContractInfo {
  enum TesseraStrategy strategy;
  size_t b_k;
  size_t cores_per_task;
  size_t tasks;
  uint64_t serializations;
  uint64_t deserializations;
  uint64_t peak_declared_bytes;
} TesseraContractInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until
// the next call on the same thread.
const char *tessera_last_error(void);

// Creates a tensor. `data` holds `2 * product(extents)` floats as
// interleaved real and imaginary parts in row-major order; null yields zeros.
//
// # Safety
// `extents` must point to `order` values and `data`, when not null, to the
// full element buffer.
enum TesseraStatus tessera_tensor_new(size_t order,
                                      const size_t *extents,
                                      const float *data,
                                      struct TesseraTensor **out);

// # Safety
// `tensor` must come from this library and not be freed twice.
void tessera_tensor_free(struct TesseraTensor *tensor);

// Order of the tensor, 0 for a null handle.
//
// # Safety
// `tensor` must be null or a live handle.
size_t tessera_tensor_order(const struct TesseraTensor *tensor);

// Number of complex elements, 0 for a null handle.
//
// # Safety
// `tensor` must be null or a live handle.
size_t tessera_tensor_len(const struct TesseraTensor *tensor);

// Copies the extents into `out`, which must hold `capacity >= order` values.
//
// # Safety
// `tensor` must be a live handle and `out` writable for `capacity` values.
enum TesseraStatus tessera_tensor_extents(const struct TesseraTensor *tensor,
                                          size_t *out,
                                          size_t capacity);

// Copies the elements as interleaved floats into `out`, which must hold
// `capacity >= 2 * len` floats.
//
// # Safety
// `tensor` must be a live handle and `out` writable for `capacity` floats.
enum TesseraStatus tessera_tensor_copy_data(const struct TesseraTensor *tensor,
                                            float *out,
                                            size_t capacity);

// Contracts dimension `axes_a[i]` of `a` with `axes_b[i]` of `b` in memory.
// The result holds the free dimensions of `a`, then those of `b`.
//
// # Safety
// `a` and `b` must be live handles and the axis arrays hold `n_axes` values.
enum TesseraStatus tessera_tensordot(const struct TesseraTensor *a,
                                     const struct TesseraTensor *b,
                                     size_t n_axes,
                                     const size_t *axes_a,
                                     const size_t *axes_b,
                                     struct TesseraTensor **out);

// Defaults: one node with 4 cores and 4 GiB, one worker, automatic strategy.
struct TesseraEngineOptions tessera_engine_options_default(void);

// # Safety
// `options` must be null (defaults) or point to valid options.
enum TesseraStatus tessera_engine_new(const struct TesseraEngineOptions *options,
                                      struct TesseraEngine **out);

// # Safety
// `engine` must come from this library and not be freed twice.
void tessera_engine_free(struct TesseraEngine *engine);

// Splits `a` and `b` into blocks, contracts every label they share through
// the task runtime and gathers the result. `a_labels` and `a_blocks` name
// and block each dimension of `a`, likewise for `b`. The result holds the
// free dimensions of `a`, then those of `b`. `info` may be null.
//
// # Safety
// Handles must be live; label and block arrays must hold one entry per
// dimension of their tensor.
enum TesseraStatus tessera_engine_contract(const struct TesseraEngine *engine,
                                           const struct TesseraTensor *a,
                                           const char *const *a_labels,
                                           const size_t *a_blocks,
                                           const struct TesseraTensor *b,
                                           const char *const *b_labels,
                                           const size_t *b_blocks,
                                           struct TesseraTensor **out,
                                           struct TesseraContractInfo *info);

// Amplitude `<output|C|input>` of a circuit given as JSON. Bitstrings hold
// one character per qubit, qubit 0 first.
//
// # Safety
// `engine` must be a live handle, the strings NUL-terminated, and the
// result pointers writable.
enum TesseraStatus tessera_circuit_amplitude(const struct TesseraEngine *engine,
                                             const char *circuit_json,
                                             const char *input_bits,
                                             const char *output_bits,
                                             float *re,
                                             float *im);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TESSERA_H */
