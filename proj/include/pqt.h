/* C API for the pqt library: opaque handles, integer status codes, and
 * thread-local error messages. All functions return pqt_status unless noted;
 * outputs are written through pointers. */
#ifndef PQT_H_
#define PQT_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define PQT_API __declspec(dllexport)
#else
#define PQT_API __attribute__((visibility("default")))
#endif

typedef enum pqt_status {
  PQT_OK = 0,
  PQT_ERR_INVALID_ARGUMENT = 1,
  PQT_ERR_IO = 2,
  PQT_ERR_NUMERIC = 3,
  PQT_ERR_INTERNAL = 4
} pqt_status;

/* Message for the most recent failure on this thread; empty string if none. */
PQT_API const char* pqt_last_error(void);

PQT_API const char* pqt_version(void);

/* ---- floating-point format emulation ---- */

typedef struct pqt_format {
  int exponent_bits;
  int mantissa_bits;
} pqt_format;

/* Parses "e<E>m<M>", e.g. "e8m7". */
PQT_API pqt_status pqt_format_parse(const char* spec, pqt_format* out);
PQT_API pqt_status pqt_cast(double x, pqt_format fmt, double* out);
PQT_API pqt_status pqt_ulp(double x, pqt_format fmt, double* out);
/* Exclusive upper bound on b_t for underflow-free noise. */
PQT_API pqt_status pqt_max_bt_bound(pqt_format fmt, int tau, int* out);
PQT_API pqt_status pqt_exponent_cutoff(double b_t, int tau, int* w_exponent_bits,
                                       int* what_exponent_bits);
PQT_API pqt_status pqt_small_w_threshold(double max_abs_w, double b_t, int tau, pqt_format fmt,
                                         double* out);

/* ---- packed noise ---- */

typedef struct pqt_noise pqt_noise; /* opaque */

/* kind: "gauss-bitwise" (packed) only; count symbols from (seed, layer, step). */
PQT_API pqt_status pqt_noise_generate(const char* kind, uint64_t count, uint64_t seed,
                                      uint32_t layer, uint64_t step, pqt_noise** out);
PQT_API pqt_status pqt_noise_count(const pqt_noise* n, uint64_t* out);
/* Decodes symbols [start, start+len) into out (int8 in {-2..2}). */
PQT_API pqt_status pqt_noise_unpack(const pqt_noise* n, uint64_t start, uint64_t len,
                                    int8_t* out);
PQT_API pqt_status pqt_noise_save(const pqt_noise* n, const char* path);
PQT_API pqt_status pqt_noise_load(const char* path, pqt_noise** out);
PQT_API void pqt_noise_free(pqt_noise* n);

/* ---- commands ---- */

/* method_override / apply_override may be NULL to use the config file values. */
PQT_API pqt_status pqt_train(const char* config_path, uint64_t seed, const char* out_dir,
                             const char* method_override, const char* apply_override);

/* Writes table to stdout and bench.csv under out_dir (NULL: no CSV). */
PQT_API pqt_status pqt_bench_noise(uint64_t elements, size_t iters, size_t threads, uint64_t seed,
                                   const char* out_dir);

/* Prints the per-claim report; PQT_ERR_NUMERIC if any claim fails. */
PQT_API pqt_status pqt_verify_lemmas(const char* format_spec, size_t trials, uint64_t seed);

PQT_API pqt_status pqt_demo_consistency(size_t size, size_t block, int int_bits, uint64_t seed);

/* Reads b_i grids from a checkpoint; writes bitwidth CSV (out_csv may be NULL
 * for stdout-only) and prints the tier summary. */
PQT_API pqt_status pqt_analyze_bitwidth(const char* checkpoint_path, const char* out_csv);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* PQT_H_ */
