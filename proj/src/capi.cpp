#include "scoreopt/scoreopt.h"

#include "scoreopt/config.hpp"
#include "scoreopt/runner.hpp"

#include <cstring>
#include <new>
#include <string>
#include <vector>

using namespace scoreopt;

struct sco_config {
  ConfigMap map;
};

struct sco_result {
  RunOutcome outcome;
  std::string hash;
  std::size_t dim = 0;
};

struct sco_bench {
  BenchReport report;
};

namespace {

thread_local std::string g_error;
thread_local std::size_t g_error_line = 0;
thread_local std::string g_error_field;

sco_status status_of(ErrorCode c) { return static_cast<sco_status>(static_cast<int>(c)); }

void clear_error() {
  g_error.clear();
  g_error_line = 0;
  g_error_field.clear();
}

sco_status fail(sco_status s, const std::string& msg) {
  g_error = msg;
  return s;
}

// Runs `body`, translating exceptions into status codes.
template <class F>
sco_status guarded(F&& body) {
  clear_error();
  try {
    return body();
  } catch (const ConfigError& e) {
    g_error_line = e.line();
    g_error_field = e.field();
    return fail(SCO_ERR_CONFIG, e.what());
  } catch (const Error& e) {
    return fail(status_of(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(SCO_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(SCO_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SCO_ERR_INTERNAL, "unknown error");
  }
}

sco_status copy_text(const std::string& text, char* buffer, std::size_t capacity, std::size_t* needed) {
  if (needed) *needed = text.size() + 1;
  if (!buffer || capacity == 0) return SCO_OK;
  const std::size_t n = std::min(capacity - 1, text.size());
  std::memcpy(buffer, text.data(), n);
  buffer[n] = '\0';
  return SCO_OK;
}

const std::vector<ProblemInfo>& problems() {
  static const std::vector<ProblemInfo> list = list_problems();
  return list;
}

const std::vector<std::string>& presets() {
  static const std::vector<std::string> list = preset_names();
  return list;
}

const std::vector<std::string>& suites_list() {
  static const std::vector<std::string> list = bench_suites();
  return list;
}

}  // namespace

extern "C" {

const char* sco_last_error(void) { return g_error.c_str(); }
size_t sco_last_error_line(void) { return g_error_line; }
const char* sco_last_error_field(void) { return g_error_field.c_str(); }
int sco_format_version(void) { return kFormatVersion; }

size_t sco_problem_count(void) { return problems().size(); }
const char* sco_problem_id(size_t index) { return index < problems().size() ? problems()[index].id.c_str() : nullptr; }
const char* sco_problem_description(size_t index) {
  return index < problems().size() ? problems()[index].description.c_str() : nullptr;
}

size_t sco_preset_count(void) { return presets().size(); }
const char* sco_preset_name(size_t index) { return index < presets().size() ? presets()[index].c_str() : nullptr; }

sco_status sco_config_load(const char* source, sco_config** out) {
  return guarded([&] {
    if (!source || !out) return fail(SCO_ERR_INVALID_ARGUMENT, "source and out must not be NULL");
    *out = new sco_config{load_config(source)};
    return SCO_OK;
  });
}

sco_status sco_config_parse(const char* text, sco_config** out) {
  return guarded([&] {
    if (!text || !out) return fail(SCO_ERR_INVALID_ARGUMENT, "text and out must not be NULL");
    *out = new sco_config{parse_config_text(text)};
    return SCO_OK;
  });
}

sco_status sco_config_set(sco_config* config, const char* key, const char* value) {
  return guarded([&] {
    if (!config || !key || !value) return fail(SCO_ERR_INVALID_ARGUMENT, "config, key and value must not be NULL");
    apply_override(config->map, std::string(key) + "=" + value);
    return SCO_OK;
  });
}

sco_status sco_config_text(const sco_config* config, char* buffer, size_t capacity, size_t* needed) {
  return guarded([&] {
    if (!config) return fail(SCO_ERR_INVALID_ARGUMENT, "config must not be NULL");
    return copy_text(resolve_config(config->map, false).to_text(), buffer, capacity, needed);
  });
}

void sco_config_free(sco_config* config) { delete config; }

sco_status sco_run(const sco_config* config, const char* out_dir, sco_result** out) {
  return guarded([&] {
    if (!config || !out) return fail(SCO_ERR_INVALID_ARGUMENT, "config and out must not be NULL");
    *out = nullptr;
    const RunConfig cfg = resolve_config(config->map);
    auto* r = new sco_result;
    r->outcome = execute_run(cfg, out_dir ? out_dir : "");
    r->hash = cfg.hash();
    r->dim = make_problem(cfg.problem, cfg.params).dim;
    *out = r;
    if (r->outcome.aborted) return fail(status_of(r->outcome.error_code), r->outcome.error);
    return SCO_OK;
  });
}

int sco_result_aborted(const sco_result* result) { return result && result->outcome.aborted ? 1 : 0; }
size_t sco_result_dim(const sco_result* result) { return result ? result->dim : 0; }
size_t sco_result_solution_count(const sco_result* result) { return result ? result->outcome.solutions().size() : 0; }

sco_status sco_result_solution(const sco_result* result, size_t index, double* native, double* objective,
                               double* fitness) {
  return guarded([&] {
    if (!result) return fail(SCO_ERR_INVALID_ARGUMENT, "result must not be NULL");
    const auto& sols = result->outcome.solutions();
    if (index >= sols.size()) return fail(SCO_ERR_INVALID_ARGUMENT, "solution index out of range");
    const auto& s = sols[index];
    if (native)
      for (Eigen::Index i = 0; i < s.native.size(); ++i) native[i] = s.native[i];
    if (objective) *objective = s.objective;
    if (fitness) *fitness = s.fitness;
    return SCO_OK;
  });
}

const char* sco_result_config_hash(const sco_result* result) { return result ? result->hash.c_str() : ""; }
void sco_result_free(sco_result* result) { delete result; }

sco_status sco_oracle_check(const char* mutation, sco_check_callback callback, void* user, int* all_passed) {
  return guarded([&] {
    const auto results = run_oracle_checks(mutation ? mutation : "", [&](const CheckResult& r) {
      if (callback) callback(r.name.c_str(), r.passed ? 1 : 0, r.detail.c_str(), user);
    });
    bool ok = true;
    for (const auto& r : results) ok = ok && r.passed;
    if (all_passed) *all_passed = ok ? 1 : 0;
    return SCO_OK;
  });
}

size_t sco_bench_suite_count(void) { return suites_list().size(); }
const char* sco_bench_suite_name(size_t index) {
  return index < suites_list().size() ? suites_list()[index].c_str() : nullptr;
}

size_t sco_bench_default_seeds(const char* suite, uint64_t* seeds, size_t capacity) {
  clear_error();
  try {
    const auto list = default_bench_seeds(suite ? suite : "");
    for (std::size_t i = 0; i < list.size() && i < capacity && seeds; ++i) seeds[i] = list[i];
    return list.size();
  } catch (const std::exception& e) {
    g_error = e.what();
    return 0;
  }
}

sco_status sco_bench_run(const char* suite, const uint64_t* seeds, size_t seed_count, const char* out_dir,
                         const char* const* overrides, size_t override_count, sco_bench_callback callback,
                         void* user, sco_bench** out) {
  return guarded([&] {
    if (!suite || !out || (seed_count > 0 && !seeds) || (override_count > 0 && !overrides))
      return fail(SCO_ERR_INVALID_ARGUMENT, "suite, out, seeds and overrides must not be NULL");
    *out = nullptr;
    std::vector<std::string> ov(overrides, overrides + override_count);
    auto* b = new sco_bench;
    try {
      b->report = run_bench(suite, std::vector<std::uint64_t>(seeds, seeds + seed_count), out_dir ? out_dir : "", ov,
                            [&](const BenchRow& row) {
                              if (callback)
                                callback(row.seed, row.completed ? 1 : 0, row.objective, row.error.c_str(), user);
                            });
    } catch (...) {
      delete b;
      throw;
    }
    *out = b;
    return SCO_OK;
  });
}

size_t sco_bench_row_count(const sco_bench* bench) { return bench ? bench->report.rows.size() : 0; }
size_t sco_bench_criterion_count(const sco_bench* bench) { return bench ? bench->report.criteria.size() : 0; }
const char* sco_bench_criterion(const sco_bench* bench, size_t criterion) {
  return bench && criterion < bench->report.criteria.size() ? bench->report.criteria[criterion].c_str() : nullptr;
}
size_t sco_bench_successes(const sco_bench* bench, size_t criterion) {
  return bench && criterion < bench->report.criteria.size() ? bench->report.successes(criterion) : 0;
}
size_t sco_bench_required(const sco_bench* bench, size_t criterion) {
  return bench && criterion < bench->report.criteria.size() ? bench->report.required(criterion) : 0;
}
int sco_bench_passed(const sco_bench* bench) { return bench && bench->report.passed() ? 1 : 0; }

sco_status sco_bench_table(const sco_bench* bench, char* buffer, size_t capacity, size_t* needed) {
  return guarded([&] {
    if (!bench) return fail(SCO_ERR_INVALID_ARGUMENT, "bench must not be NULL");
    return copy_text(format_bench_table(bench->report), buffer, capacity, needed);
  });
}

void sco_bench_free(sco_bench* bench) { delete bench; }

}  // extern "C"
