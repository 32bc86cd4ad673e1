#include "scoreopt/scoreopt.h"

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

int report(sco_status s) {
  if (s == SCO_OK) return 0;
  if (s == SCO_ERR_CONFIG) {
    std::fprintf(stderr, "config error: %s\n", sco_last_error());
    return kExitConfig;
  }
  std::fprintf(stderr, "error: %s\n", sco_last_error());
  return kExitRuntime;
}

std::string text_of(const sco_config* cfg) {
  std::size_t needed = 0;
  sco_config_text(cfg, nullptr, 0, &needed);
  std::string out(needed, '\0');
  sco_config_text(cfg, out.data(), out.size(), nullptr);
  out.resize(needed ? needed - 1 : 0);
  return out;
}

struct RunArgs {
  std::string config;
  std::string out = "scoreopt-run";
  std::string seed;
  std::string local_prior;
  std::string explore;
  std::vector<std::string> overrides;
  bool print_config = false;
};

sco_status apply_overrides(sco_config* cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      // Let the library produce the standard message.
      if (auto s = sco_config_set(cfg, o.c_str(), ""); s != SCO_OK) return s;
      continue;
    }
    if (auto s = sco_config_set(cfg, o.substr(0, eq).c_str(), o.substr(eq + 1).c_str()); s != SCO_OK) return s;
  }
  return SCO_OK;
}

int cmd_run(const RunArgs& a) {
  sco_config* cfg = nullptr;
  if (auto s = sco_config_load(a.config.c_str(), &cfg); s != SCO_OK) return report(s);
  sco_status s = apply_overrides(cfg, a.overrides);
  if (s == SCO_OK && !a.seed.empty()) s = sco_config_set(cfg, "run.seed", a.seed.c_str());
  if (s == SCO_OK && !a.local_prior.empty()) s = sco_config_set(cfg, "prior.local", a.local_prior.c_str());
  if (s == SCO_OK && !a.explore.empty()) s = sco_config_set(cfg, "explore.enabled", a.explore.c_str());
  if (s != SCO_OK) {
    sco_config_free(cfg);
    return report(s);
  }
  if (a.print_config) {
    std::string text = text_of(cfg);
    if (text.empty()) {
      sco_config_free(cfg);
      return report(SCO_ERR_CONFIG);
    }
    std::fputs(text.c_str(), stdout);
    sco_config_free(cfg);
    return 0;
  }

  sco_result* res = nullptr;
  s = sco_run(cfg, a.out.c_str(), &res);
  sco_config_free(cfg);
  if (!res) return report(s);
  const std::size_t dim = sco_result_dim(res);
  const std::size_t count = sco_result_solution_count(res);
  std::printf("config hash %s, %zu solution(s), artifacts in %s\n", sco_result_config_hash(res), count, a.out.c_str());
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < count; ++i) {
    double objective = 0.0, fitness = 0.0;
    sco_result_solution(res, i, x.data(), &objective, &fitness);
    std::printf("  #%zu objective %.10g  x =", i, objective);
    for (double v : x) std::printf(" %.10g", v);
    std::printf("\n");
  }
  const bool aborted = sco_result_aborted(res);
  sco_result_free(res);
  if (aborted) {
    std::fprintf(stderr, "run aborted: %s (trace flushed to %s/trace.csv)\n", sco_last_error(), a.out.c_str());
    return kExitRuntime;
  }
  return 0;
}

struct BenchArgs {
  std::string suite;
  std::string seeds = "default";
  std::string out;
  std::vector<std::string> overrides;
};

int cmd_bench(const BenchArgs& a) {
  std::vector<std::uint64_t> seeds;
  if (a.seeds == "default") {
    const std::size_t n = sco_bench_default_seeds(a.suite.c_str(), nullptr, 0);
    if (n == 0 && *sco_last_error()) return report(SCO_ERR_CONFIG);
    seeds.resize(n);
    sco_bench_default_seeds(a.suite.c_str(), seeds.data(), n);
  } else {
    std::stringstream ss(a.seeds);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      try {
        std::size_t used = 0;
        seeds.push_back(std::stoull(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        std::fprintf(stderr, "config error: --seeds: '%s' is not a seed\n", item.c_str());
        return kExitConfig;
      }
    }
  }
  std::vector<const char*> ov;
  for (const auto& o : a.overrides) ov.push_back(o.c_str());
  sco_bench* bench = nullptr;
  const auto progress = [](std::uint64_t seed, int completed, double objective, const char* error, void*) {
    if (completed)
      std::printf("seed %" PRIu64 ": objective %.10g\n", seed, objective);
    else
      std::printf("seed %" PRIu64 ": aborted (%s)\n", seed, error);
    std::fflush(stdout);
  };
  const sco_status s = sco_bench_run(a.suite.c_str(), seeds.data(), seeds.size(), a.out.c_str(), ov.data(), ov.size(),
                                     progress, nullptr, &bench);
  if (s != SCO_OK) return report(s);
  std::size_t needed = 0;
  sco_bench_table(bench, nullptr, 0, &needed);
  std::string table(needed, '\0');
  sco_bench_table(bench, table.data(), table.size(), nullptr);
  std::fputs(table.c_str(), stdout);
  const bool passed = sco_bench_passed(bench);
  std::printf("suite %s: %s\n", a.suite.c_str(), passed ? "PASS" : "FAIL");
  sco_bench_free(bench);
  return passed ? 0 : kExitRuntime;
}

int cmd_oracle_check(const std::string& mutation) {
  std::vector<std::string> failed;
  const auto cb = [](const char* name, int passed, const char* detail, void* user) {
    std::printf("%-28s %s  %s\n", name, passed ? "PASS" : "FAIL", detail);
    std::fflush(stdout);
    if (!passed) static_cast<std::vector<std::string>*>(user)->push_back(name);
  };
  int all = 0;
  const sco_status s = sco_oracle_check(mutation.empty() ? nullptr : mutation.c_str(), cb, &failed, &all);
  if (s != SCO_OK) return report(s);
  for (const auto& f : failed) std::fprintf(stderr, "failed check: %s\n", f.c_str());
  return all ? 0 : kExitRuntime;
}

int cmd_list() {
  std::printf("problems:\n");
  for (std::size_t i = 0; i < sco_problem_count(); ++i)
    std::printf("  %-12s %s\n", sco_problem_id(i), sco_problem_description(i));
  std::printf("presets (use --config preset:<name>):\n");
  for (std::size_t i = 0; i < sco_preset_count(); ++i) std::printf("  %s\n", sco_preset_name(i));
  std::printf("bench suites:\n");
  for (std::size_t i = 0; i < sco_bench_suite_count(); ++i) std::printf("  %s\n", sco_bench_suite_name(i));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Score-based global optimization"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run one optimization and write its artifacts");
  run_cmd->add_option("--config", run.config, "Config file or preset:<name>")->required();
  run_cmd->add_option("--seed", run.seed, "Master seed (sets run.seed)");
  run_cmd->add_option("--out", run.out, "Output directory")->capture_default_str();
  run_cmd->add_option("--override", run.overrides, "key=value, repeatable")->allow_extra_args(false);
  run_cmd->add_option("--local-prior", run.local_prior, "on/off");
  run_cmd->add_option("--explore", run.explore, "on/off");
  run_cmd->add_flag("--print-config", run.print_config, "Print the resolved config and exit");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Run a benchmark suite over several seeds");
  bench_cmd->add_option("suite", bench.suite, "Suite name (see list-problems)")->required();
  bench_cmd->add_option("--seeds", bench.seeds, "Comma-separated seeds, or 'default'")->capture_default_str();
  bench_cmd->add_option("--out", bench.out, "Output directory for per-seed artifacts and results.csv");
  bench_cmd->add_option("--override", bench.overrides, "key=value, repeatable")->allow_extra_args(false);

  std::string mutation;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "Run the cross-oracle self-check suite");
  oracle_cmd->add_option("--mutate", mutation, "Corrupt one identity on purpose (negative control)");

  auto* list_cmd = app.add_subcommand("list-problems", "List problems, presets and bench suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (run_cmd->parsed()) return cmd_run(run);
  if (bench_cmd->parsed()) return cmd_bench(bench);
  if (oracle_cmd->parsed()) return cmd_oracle_check(mutation);
  if (list_cmd->parsed()) return cmd_list();
  return kExitConfig;
}
