#include "scoreopt/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace scoreopt {

ConfigError::ConfigError(std::size_t line, std::string field, const std::string& what)
    : Error(ErrorCode::config,
            (line ? "line " + std::to_string(line) + ": " : std::string()) + (field.empty() ? "" : field + ": ") + what),
      line_(line),
      field_(std::move(field)) {}

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// --- value parsers --------------------------------------------------------

struct Ctx {
  const std::string& key;
  const ConfigEntry& entry;
  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(entry.line, key, what); }
};

double as_double(const Ctx& c) {
  const std::string& s = c.entry.value;
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
    c.fail("expected a number, got '" + s + "'");
  return v;
}

std::uint64_t as_u64(const Ctx& c) {
  const std::string& s = c.entry.value;
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty())
    c.fail("expected a non-negative integer, got '" + s + "'");
  return v;
}

std::size_t as_size(const Ctx& c) { return static_cast<std::size_t>(as_u64(c)); }

bool as_bool(const Ctx& c) {
  const std::string s = lower(c.entry.value);
  if (s == "true" || s == "on" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "off" || s == "no" || s == "0") return false;
  c.fail("expected on/off, got '" + c.entry.value + "'");
}

std::vector<std::size_t> as_size_list(const Ctx& c) {
  std::vector<std::size_t> out;
  std::stringstream ss(c.entry.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string v = trim(item);
    std::size_t n = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), n);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size() || v.empty() || n == 0)
      c.fail("expected a comma-separated list of positive integers, got '" + c.entry.value + "'");
    out.push_back(n);
  }
  return out;
}

std::string on_off(bool b) { return b ? "on" : "off"; }

// --- key table ------------------------------------------------------------

struct Field {
  const char* key;
  std::function<void(RunConfig&, const Ctx&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_FIELD(name, member)                                          \
  Field {                                                                 \
    name, [](RunConfig& r, const Ctx& c) { r.member = as_size(c); },     \
        [](const RunConfig& r) { return std::to_string(r.member); }      \
  }
#define DOUBLE_FIELD(name, member)                                        \
  Field {                                                                 \
    name, [](RunConfig& r, const Ctx& c) { r.member = as_double(c); },   \
        [](const RunConfig& r) { return format_double(r.member); }       \
  }
#define BOOL_FIELD(name, member)                                          \
  Field {                                                                 \
    name, [](RunConfig& r, const Ctx& c) { r.member = as_bool(c); },     \
        [](const RunConfig& r) { return on_off(r.member); }              \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"problem.id", [](RunConfig& r, const Ctx& c) { r.problem = c.entry.value; },
       [](const RunConfig& r) { return r.problem; }},
      SIZE_FIELD("problem.dim", params.dim),
      SIZE_FIELD("problem.depth", params.depth),
      BOOL_FIELD("problem.rotate", params.rotate),
      BOOL_FIELD("problem.shift", params.shift),
      {"problem.instance_seed", [](RunConfig& r, const Ctx& c) { r.params.seed = as_u64(c); },
       [](const RunConfig& r) { return std::to_string(r.params.seed); }},

      SIZE_FIELD("schedule.tn", settings.tn),
      DOUBLE_FIELD("schedule.t_end", settings.t_end),
      SIZE_FIELD("schedule.pn", settings.pn),
      {"schedule.interpolant", [](RunConfig& r, const Ctx& c) { r.settings.interpolant = c.entry.value; },
       [](const RunConfig& r) { return r.settings.interpolant; }},

      SIZE_FIELD("pool.size", settings.pool.pool_size),
      DOUBLE_FIELD("pool.c_pstd", settings.pool.c_pstd),
      BOOL_FIELD("pool.debias", settings.pool.debias),

      BOOL_FIELD("prior.local", settings.local_prior),
      DOUBLE_FIELD("prior.mass", settings.mass),

      SIZE_FIELD("train.steps", settings.train.steps),
      SIZE_FIELD("train.first_steps", settings.first_steps),
      SIZE_FIELD("train.batch", settings.train.batch),
      DOUBLE_FIELD("train.lr", settings.train.lr),
      DOUBLE_FIELD("train.lr_final", settings.train.lr_final),
      BOOL_FIELD("train.warm_start", settings.train.warm_start),
      BOOL_FIELD("train.loss_weights", settings.train.use_loss_weights),
      DOUBLE_FIELD("train.holdout", settings.train.holdout),
      SIZE_FIELD("train.eval_every", settings.train.eval_every),
      DOUBLE_FIELD("train.clip_norm", settings.train.clip_norm),
      {"train.hidden", [](RunConfig& r, const Ctx& c) { r.settings.train.arch.hidden = as_size_list(c); },
       [](const RunConfig& r) {
         std::string s;
         for (std::size_t w : r.settings.train.arch.hidden) s += (s.empty() ? "" : ",") + std::to_string(w);
         return s;
       }},
      SIZE_FIELD("train.time_embed", settings.train.arch.time_embed),
      {"train.activation",
       [](RunConfig& r, const Ctx& c) {
         const std::string v = lower(c.entry.value);
         if (v == "silu") r.settings.train.arch.activation = Activation::silu;
         else if (v == "tanh") r.settings.train.arch.activation = Activation::tanh;
         else c.fail("expected silu or tanh, got '" + c.entry.value + "'");
       },
       [](const RunConfig& r) {
         return std::string(r.settings.train.arch.activation == Activation::silu ? "silu" : "tanh");
       }},

      SIZE_FIELD("grad.monte_size", settings.grad.monte_size),
      DOUBLE_FIELD("grad.lr", settings.grad.lr),
      SIZE_FIELD("grad.max_steps", settings.grad.max_steps),
      DOUBLE_FIELD("grad.tolerance", settings.grad.tolerance),
      SIZE_FIELD("grad.patience", settings.grad.patience),
      DOUBLE_FIELD("grad.max_step", settings.grad.max_step),
      DOUBLE_FIELD("grad.max_gain", settings.grad.max_gain),

      {"explore.enabled", [](RunConfig& r, const Ctx& c) { r.settings.explore = as_bool(c) ? std::optional<ExploreConfig>(r.explore) : std::nullopt; },
       [](const RunConfig& r) { return on_off(r.settings.explore.has_value()); }},
      SIZE_FIELD("explore.keep_from", explore.keep_from),
      SIZE_FIELD("explore.keep_to", explore.keep_to),
      SIZE_FIELD("explore.explore_from", explore.explore_from),
      SIZE_FIELD("explore.explore_to", explore.explore_to),
      DOUBLE_FIELD("explore.kappa", explore.kappa),

      SIZE_FIELD("refine.stages", refine.stages),
      DOUBLE_FIELD("refine.shrink", refine.shrink),

      {"run.seed",
       [](RunConfig& r, const Ctx& c) {
         r.settings.seed = as_u64(c);
         r.seed_set = true;
       },
       [](const RunConfig& r) { return std::to_string(r.settings.seed); }},
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (key == f.key) return &f;
  return nullptr;
}

void check_key(const std::string& key, std::size_t line) {
  if (!find_field(key)) throw ConfigError(line, key, "unknown key");
}

// Desk-scale network and training budget shared by every preset.
constexpr const char* kDeskTraining = R"([train]
steps = 600
first_steps = 2400
batch = 256
lr = 0.002
lr_final = 0.0002
hidden = 64,64
time_embed = 16
)";

}  // namespace

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap map;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    const std::size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line_no, "", "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(line_no, "", "empty section name");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line_no, "", "expected key = value");
    const std::string name = trim(std::string_view(line).substr(0, eq));
    if (name.empty()) throw ConfigError(line_no, "", "missing key before '='");
    const std::string key = section.empty() ? name : section + "." + name;
    check_key(key, line_no);
    if (map.count(key)) throw ConfigError(line_no, key, "duplicate key (first set on line " + std::to_string(map[key].line) + ")");
    map[key] = {trim(std::string_view(line).substr(eq + 1)), line_no};
    if (end == text.size()) break;
  }
  return map;
}

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_override(ConfigMap& map, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError(0, std::string(assignment), "override must look like key=value");
  const std::string key = trim(assignment.substr(0, eq));
  check_key(key, 0);
  map[key] = {trim(assignment.substr(eq + 1)), 0};
}

RunConfig resolve_config(const ConfigMap& map, bool require_seed) {
  RunConfig r;
  // explore.* parameters first, so explore.enabled copies their final values.
  std::vector<std::pair<const std::string*, const ConfigEntry*>> ordered;
  for (const auto& [k, v] : map) ordered.emplace_back(&k, &v);
  std::stable_partition(ordered.begin(), ordered.end(), [](const auto& kv) { return *kv.first != "explore.enabled"; });
  for (const auto& [k, v] : ordered) {
    const Field* f = find_field(*k);
    if (!f) throw ConfigError(v->line, *k, "unknown key");
    f->set(r, Ctx{*k, *v});
  }
  if (r.settings.explore) r.settings.explore = r.explore;

  if (require_seed && !r.seed_set)
    throw ConfigError(0, "run.seed", "a seed is required (set run.seed or pass --seed)");
  auto line_of = [&](const char* key) {
    auto it = map.find(key);
    return it == map.end() ? std::size_t{0} : it->second.line;
  };
  // Delegate range checks to the library validators, reporting the key.
  auto guard = [&](const char* key, const std::function<void()>& check) {
    try {
      check();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(line_of(key), key, e.what());
    }
  };
  guard("problem.id", [&] { make_problem(r.problem, r.params); });
  guard("schedule.t_end", [&] { build_t_sequence(r.settings.tn, r.settings.t_end); });
  guard("schedule.interpolant", [&] { interpolant_by_name(r.settings.interpolant); });
  guard("train.steps", [&] { r.settings.train.validate(); });
  guard("grad.monte_size", [&] { r.settings.grad.validate(); });
  guard("explore.keep_from", [&] { r.explore.validate(); });
  guard("prior.mass", [&] { r.settings.validate(); });
  if (!(r.refine.shrink > 0.0 && r.refine.shrink <= 1.0))
    throw ConfigError(line_of("refine.shrink"), "refine.shrink", "must lie in (0, 1]");
  if (!(r.settings.pool.c_pstd > 0.0)) throw ConfigError(line_of("pool.c_pstd"), "pool.c_pstd", "must be positive");
  return r;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "# scoreopt run config, format v" << kFormatVersion << "\n";
  std::string section;
  for (const auto& f : fields()) {
    const std::string key = f.key;
    const std::size_t dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      out << (section.empty() ? "" : "\n") << "[" << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << f.get(*this) << "\n";
  }
  return out.str();
}

std::string RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> preset_names() { return {"fractal", "fractal-mm", "f4-2d", "f1-2d", "circles-2"}; }

std::string preset_text(const std::string& name) {
  std::string body;
  if (name == "fractal") {
    body = "[problem]\nid = fractal\ndepth = 21\n";
  } else if (name == "fractal-mm") {
    body = "[problem]\nid = fractal-mm\ndepth = 21\n\n[explore]\nenabled = on\n";
  } else if (name == "f4-2d") {
    body = "[problem]\nid = f4-2017\ndim = 2\n\n[pool]\nc_pstd = 1\n\n[refine]\nstages = 1\nshrink = 0.02\n";
  } else if (name == "f1-2d") {
    body = "[problem]\nid = f1-2017\ndim = 2\n";
  } else if (name == "circles-2") {
    body = "[problem]\nid = circles-n2\n\n[refine]\nstages = 1\nshrink = 0.1\n";
  } else {
    throw Error(ErrorCode::config, "unknown preset '" + name + "'");
  }
  return "# preset: " + name + "\n" + body + "\n[pool]\nsize = 16384\n\n" + kDeskTraining;
}

ConfigMap load_config(const std::string& source) {
  constexpr std::string_view kPrefix = "preset:";
  if (source.rfind(kPrefix, 0) == 0) return parse_config_text(preset_text(source.substr(kPrefix.size())));
  return parse_config_file(source);
}

}  // namespace scoreopt
