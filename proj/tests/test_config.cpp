#include "scoreopt/config.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace scoreopt;
namespace fs = std::filesystem;

namespace {

// Returns the ConfigError raised by `f`, or a blank one if nothing was thrown.
template <class F>
ConfigError config_error(F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e;
  }
  return ConfigError(999, "<none>", "no error");
}

}  // namespace

TEST_CASE("sections prefix keys and comments are stripped") {
  const ConfigMap m = parse_config_text("# header\n[problem]\nid = f4-2017 ; trailing\n\n[run]\nseed=7\n");
  REQUIRE(m.size() == 2);
  CHECK(m.at("problem.id").value == "f4-2017");
  CHECK(m.at("problem.id").line == 3);
  CHECK(m.at("run.seed").value == "7");
  CHECK(m.at("run.seed").line == 6);
}

TEST_CASE("parse errors carry line and field") {
  auto e = config_error([] { parse_config_text("[problem]\nid = fractal\nbogus = 1\n"); });
  CHECK(e.line() == 3);
  CHECK(e.field() == "problem.bogus");
  CHECK(e.code() == ErrorCode::config);
  CHECK(std::string(e.what()).find("line 3") != std::string::npos);

  e = config_error([] { parse_config_text("[run]\nseed = 1\nseed = 2\n"); });
  CHECK(e.line() == 3);
  CHECK(e.field() == "run.seed");

  e = config_error([] { parse_config_text("[run\nseed = 1\n"); });
  CHECK(e.line() == 1);
  e = config_error([] { parse_config_text("[run]\nseed 1\n"); });
  CHECK(e.line() == 2);
  e = config_error([] { parse_config_text("[]\n"); });
  CHECK(e.line() == 1);
}

TEST_CASE("value errors point at the offending key") {
  ConfigMap m = parse_config_text("[train]\nsteps = abc\n[run]\nseed = 1\n");
  auto e = config_error([&] { resolve_config(m); });
  CHECK(e.line() == 2);
  CHECK(e.field() == "train.steps");

  m = parse_config_text("[prior]\nlocal = maybe\n[run]\nseed = 1\n");
  CHECK(config_error([&] { resolve_config(m); }).field() == "prior.local");

  m = parse_config_text("[schedule]\nt_end = 2\n[run]\nseed = 1\n");
  e = config_error([&] { resolve_config(m); });
  CHECK(e.field() == "schedule.t_end");
  CHECK(e.line() == 2);

  m = parse_config_text("[grad]\nmonte_size = 7\n[run]\nseed = 1\n");
  CHECK(config_error([&] { resolve_config(m); }).field() == "grad.monte_size");

  m = parse_config_text("[problem]\nid = sphere\n[run]\nseed = 1\n");
  CHECK(config_error([&] { resolve_config(m); }).field() == "problem.id");

  m = parse_config_text("[train]\nhidden = 64,,64\n[run]\nseed = 1\n");
  CHECK(config_error([&] { resolve_config(m); }).field() == "train.hidden");
}

TEST_CASE("a seed is required unless waived") {
  const ConfigMap m = parse_config_text("[problem]\nid = fractal\n");
  CHECK(config_error([&] { resolve_config(m); }).field() == "run.seed");
  CHECK_NOTHROW(resolve_config(m, false));
}

TEST_CASE("overrides") {
  ConfigMap m = load_config("preset:fractal");
  apply_override(m, "run.seed=12");
  apply_override(m, "train.steps = 5");
  const RunConfig r = resolve_config(m);
  CHECK(r.settings.seed == 12);
  CHECK(r.settings.train.steps == 5);
  CHECK(m.at("train.steps").line == 0);
  CHECK(config_error([&] { apply_override(m, "train.steps"); }).code() == ErrorCode::config);
  CHECK(config_error([&] { apply_override(m, "steps=5"); }).field() == "steps");
}

TEST_CASE("resolved text round-trips and hashes stably") {
  for (const auto& name : preset_names()) {
    ConfigMap m = load_config("preset:" + name);
    apply_override(m, "run.seed=3");
    const RunConfig a = resolve_config(m);
    const RunConfig b = resolve_config(parse_config_text(a.to_text()));
    CHECK(a.to_text() == b.to_text());
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);
  }
  ConfigMap m = load_config("preset:fractal");
  apply_override(m, "run.seed=3");
  const std::string h3 = resolve_config(m).hash();
  apply_override(m, "run.seed=4");
  CHECK(resolve_config(m).hash() != h3);
}

TEST_CASE("presets resolve to the intended settings") {
  auto get = [](const std::string& name) {
    ConfigMap m = load_config("preset:" + name);
    apply_override(m, "run.seed=1");
    return resolve_config(m);
  };
  const RunConfig fr = get("fractal");
  CHECK(fr.problem == "fractal");
  CHECK(fr.params.depth == 21);
  CHECK_FALSE(fr.settings.explore.has_value());
  const RunConfig mm = get("fractal-mm");
  REQUIRE(mm.settings.explore.has_value());
  CHECK(mm.settings.explore->keep_from == 4);
  CHECK(mm.settings.explore->keep_to == 8);
  CHECK(mm.settings.explore->explore_from == 4);
  CHECK(mm.settings.explore->explore_to == 2);
  const RunConfig f4 = get("f4-2d");
  CHECK(f4.problem == "f4-2017");
  CHECK(f4.params.dim == 2);
  CHECK_FALSE(f4.params.rotate);
  CHECK(f4.refine.stages == 1);
  const RunConfig c2 = get("circles-2");
  CHECK(c2.problem == "circles-n2");
  CHECK(c2.refine.stages == 1);
  CHECK(c2.refine.shrink == 0.1);
  CHECK(get("f1-2d").problem == "f1-2017");
  CHECK_THROWS_AS(load_config("preset:nope"), Error);
  CHECK_THROWS_AS(load_config("/nonexistent/file.ini"), Error);
}

TEST_CASE("preset files under configs/ mirror the built-in presets") {
  for (const auto& name : preset_names()) {
    const fs::path p = fs::path(SCOREOPT_SOURCE_DIR) / "configs" / (name + ".ini");
    REQUIRE_MESSAGE(fs::exists(p), p.string());
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    CHECK(s.str() == preset_text(name));
    CHECK(parse_config_file(p.string()) == load_config("preset:" + name));
  }
}
