#ifndef SCOREOPT_H
#define SCOREOPT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(SCOREOPT_BUILDING)
#    define SCO_API __declspec(dllexport)
#  else
#    define SCO_API __declspec(dllimport)
#  endif
#else
#  define SCO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sco_status {
  SCO_OK = 0,
  SCO_ERR_INVALID_ARGUMENT = 1,
  SCO_ERR_DEGENERATE_KERNEL = 2,
  SCO_ERR_SINGULAR_SCALE = 3,
  SCO_ERR_EMPTY_FEASIBLE = 4,
  SCO_ERR_DIVERGENT = 5,
  SCO_ERR_NON_FINITE = 6,
  SCO_ERR_CONFIG = 7,
  SCO_ERR_IO = 8,
  SCO_ERR_INTERNAL = 100
} sco_status;

typedef struct sco_config sco_config;
typedef struct sco_result sco_result;
typedef struct sco_bench sco_bench;

/* Message of the last failed call on this thread ("" if none). */
SCO_API const char* sco_last_error(void);
/* Config errors: 1-based line (0 if not tied to a line) and key ("" if none). */
SCO_API size_t sco_last_error_line(void);
SCO_API const char* sco_last_error_field(void);

SCO_API int sco_format_version(void);

/* Problem registry. Indices run from 0 to count-1; out-of-range gives NULL. */
SCO_API size_t sco_problem_count(void);
SCO_API const char* sco_problem_id(size_t index);
SCO_API const char* sco_problem_description(size_t index);

SCO_API size_t sco_preset_count(void);
SCO_API const char* sco_preset_name(size_t index);

/* Config handles hold unresolved key/value pairs until a run.
   `source` is a file path or "preset:<name>". */
SCO_API sco_status sco_config_load(const char* source, sco_config** out);
SCO_API sco_status sco_config_parse(const char* text, sco_config** out);
/* Sets one fully qualified key, e.g. ("train.steps", "600"). */
SCO_API sco_status sco_config_set(sco_config* config, const char* key, const char* value);
/* Resolved config text. Writes at most `capacity` bytes including the
   terminator; `needed` (optional) receives the full size. */
SCO_API sco_status sco_config_text(const sco_config* config, char* buffer, size_t capacity, size_t* needed);
SCO_API void sco_config_free(sco_config* config);

/* Runs the configured optimization. When the run aborts after starting,
   *out is still set (partial result, sco_result_aborted() = 1) and the
   abort's status is returned. Artifacts go to out_dir unless it is NULL
   or empty. */
SCO_API sco_status sco_run(const sco_config* config, const char* out_dir, sco_result** out);
SCO_API int sco_result_aborted(const sco_result* result);
SCO_API size_t sco_result_dim(const sco_result* result);
SCO_API size_t sco_result_solution_count(const sco_result* result);
/* Solution `index` (0 = best). `native` must hold sco_result_dim() values;
   any output pointer may be NULL. */
SCO_API sco_status sco_result_solution(const sco_result* result, size_t index, double* native, double* objective,
                                       double* fitness);
SCO_API const char* sco_result_config_hash(const sco_result* result);
SCO_API void sco_result_free(sco_result* result);

/* Oracle self-checks. The callback (optional) sees each check as it
   finishes; *all_passed is 1 iff every check passed. `mutation` is NULL or
   a deliberate corruption used as a negative control. */
typedef void (*sco_check_callback)(const char* name, int passed, const char* detail, void* user);
SCO_API sco_status sco_oracle_check(const char* mutation, sco_check_callback callback, void* user, int* all_passed);

/* Benchmark suites. seeds == NULL with seed_count == 0 runs an empty
   table; use sco_bench_default_seeds for the registered seed list. */
SCO_API size_t sco_bench_suite_count(void);
SCO_API const char* sco_bench_suite_name(size_t index);
SCO_API size_t sco_bench_default_seeds(const char* suite, uint64_t* seeds, size_t capacity);

typedef void (*sco_bench_callback)(uint64_t seed, int completed, double objective, const char* error, void* user);
/* `overrides` holds `override_count` "key=value" strings applied to the
   suite preset. */
SCO_API sco_status sco_bench_run(const char* suite, const uint64_t* seeds, size_t seed_count, const char* out_dir,
                                 const char* const* overrides, size_t override_count, sco_bench_callback callback,
                                 void* user, sco_bench** out);
SCO_API size_t sco_bench_row_count(const sco_bench* bench);
SCO_API size_t sco_bench_criterion_count(const sco_bench* bench);
SCO_API const char* sco_bench_criterion(const sco_bench* bench, size_t criterion);
SCO_API size_t sco_bench_successes(const sco_bench* bench, size_t criterion);
SCO_API size_t sco_bench_required(const sco_bench* bench, size_t criterion);
SCO_API int sco_bench_passed(const sco_bench* bench);
/* Resulting table as CSV text (same content as results.csv). */
SCO_API sco_status sco_bench_table(const sco_bench* bench, char* buffer, size_t capacity, size_t* needed);
SCO_API void sco_bench_free(sco_bench* bench);

#ifdef __cplusplus
}
#endif

#endif
