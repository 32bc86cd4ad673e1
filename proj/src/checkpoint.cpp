#include "scoreopt/error.hpp"
#include "scoreopt/scorefield.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace scoreopt {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'C', 'O', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b.data(), 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b.data(), 4);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_vec(std::ostream& out, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v[i]);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), 8);
  if (!in) throw Error(ErrorCode::io, "truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) throw Error(ErrorCode::io, "truncated checkpoint");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

Vec get_vec(std::istream& in, std::size_t n) {
  Vec v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = get_f64(in);
  return v;
}

}  // namespace

void save_checkpoint(const VectorFieldModel& model, std::ostream& out) {
  const MlpSpec& spec = model.spec();
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kVersion);
  const std::string& name = model.interpolant().name;
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u64(out, spec.dim);
  put_u64(out, spec.time_embed);
  put_u32(out, static_cast<std::uint32_t>(spec.activation));
  put_u64(out, spec.hidden.size());
  for (std::size_t h : spec.hidden) put_u64(out, h);
  const Standardizer& s = model.standardizer();
  put_vec(out, s.in_shift);
  put_vec(out, s.in_scale);
  put_vec(out, s.out_shift);
  put_vec(out, s.out_scale);
  put_u64(out, static_cast<std::uint64_t>(model.params().size()));
  put_vec(out, model.params());
  if (!out) throw Error(ErrorCode::io, "failed writing checkpoint");
}

VectorFieldModel load_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error(ErrorCode::io, "not a scoreopt checkpoint");
  const std::uint32_t version = get_u32(in);
  if (version != kVersion) throw Error(ErrorCode::io, "unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t name_len = get_u32(in);
  if (name_len > 64) throw Error(ErrorCode::io, "corrupt checkpoint header");
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  MlpSpec spec;
  spec.dim = get_u64(in);
  spec.time_embed = get_u64(in);
  const std::uint32_t act = get_u32(in);
  if (act != static_cast<std::uint32_t>(Activation::silu) && act != static_cast<std::uint32_t>(Activation::tanh))
    throw Error(ErrorCode::io, "unknown activation in checkpoint");
  spec.activation = static_cast<Activation>(act);
  const std::uint64_t layers = get_u64(in);
  if (layers > 1024 || spec.dim == 0 || spec.dim > (1u << 20)) throw Error(ErrorCode::io, "corrupt checkpoint header");
  spec.hidden.resize(layers);
  for (auto& h : spec.hidden) h = get_u64(in);
  Standardizer s;
  s.in_shift = get_vec(in, spec.dim);
  s.in_scale = get_vec(in, spec.dim);
  s.out_shift = get_vec(in, spec.dim);
  s.out_scale = get_vec(in, spec.dim);
  const std::uint64_t count = get_u64(in);
  if (count != spec.parameter_count()) throw Error(ErrorCode::io, "checkpoint parameter count mismatch");
  Vec params = get_vec(in, count);
  return VectorFieldModel(std::move(spec), interpolant_by_name(name), std::move(params), std::move(s));
}

void save_checkpoint(const VectorFieldModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path + "' for writing");
  save_checkpoint(model, out);
}

VectorFieldModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace scoreopt
