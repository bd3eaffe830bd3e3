#pragma once

// Binary checkpoint format shared by teacher and student:
//   magic "S2PD" | u16 version | u8 model kind | config block (u32 fields)
//   | u32 section count | sections
// Each section: u32 name length | name bytes | u32 rank | u32 dims
// | FP32 payload. All integers and floats little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "s2p/student.hpp"
#include "s2p/teacher.hpp"

namespace s2p {

enum class ModelKind : std::uint8_t { teacher = 1, student = 2 };

inline constexpr char kCheckpointMagic[4] = {'S', '2', 'P', 'D'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

inline void put_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline void put_f32(std::ostream& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline std::uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline float get_f32(std::istream& in) {
  return std::bit_cast<float>(get_u32(in));
}

inline void put_section(std::ostream& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i)
    put_u32(out, static_cast<std::uint32_t>(t.dim(i)));
  for (std::size_t i = 0; i < t.size(); ++i) put_f32(out, t.at(i));
}

struct Section {
  std::string name;
  std::vector<int> dims;
  std::vector<float> data;
};

inline Section get_section(std::istream& in) {
  Section s;
  const auto name_len = get_u32(in);
  s.name.resize(name_len);
  in.read(s.name.data(), static_cast<std::streamsize>(name_len));
  if (!in) throw std::runtime_error("checkpoint: truncated section name");
  const auto rank = get_u32(in);
  std::size_t total = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    s.dims.push_back(static_cast<int>(get_u32(in)));
    total *= static_cast<std::size_t>(s.dims.back());
  }
  s.data.resize(total);
  for (auto& v : s.data) v = get_f32(in);
  return s;
}

inline void load_into(const Section& s, Tensor& t) {
  if (s.dims != t.shape())
    throw std::runtime_error("checkpoint: shape mismatch for section '" + s.name + "'");
  std::copy(s.data.begin(), s.data.end(), t.data().begin());
}

}  // namespace detail

inline std::vector<std::pair<std::string, Tensor>> named_parameters(
    const TeacherModel& m) {
  std::vector<std::pair<std::string, Tensor>> out{{"w_in", m.w_in}, {"b_in", m.b_in}};
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    for (std::size_t k = 0; k < layer.wq.size(); ++k) {
      out.emplace_back(p + "wq" + std::to_string(k), layer.wq[k]);
      out.emplace_back(p + "wk" + std::to_string(k), layer.wk[k]);
      out.emplace_back(p + "wv" + std::to_string(k), layer.wv[k]);
    }
    out.emplace_back(p + "wo", layer.wo);
    out.emplace_back(p + "ln1_gain", layer.ln1_gain);
    out.emplace_back(p + "ln1_bias", layer.ln1_bias);
    out.emplace_back(p + "ln2_gain", layer.ln2_gain);
    out.emplace_back(p + "ln2_bias", layer.ln2_bias);
    out.emplace_back(p + "w1", layer.w1);
    out.emplace_back(p + "b1", layer.b1);
    out.emplace_back(p + "w2", layer.w2);
    out.emplace_back(p + "b2", layer.b2);
  }
  out.emplace_back("w_pool", m.w_pool);
  out.emplace_back("w_out", m.w_out);
  out.emplace_back("b_out", m.b_out);
  return out;
}

inline std::vector<std::pair<std::string, Tensor>> named_parameters(
    const StudentModel& m) {
  std::vector<std::pair<std::string, Tensor>> out{
      {"w1", m.w1}, {"b1", m.b1}, {"w2", m.w2}, {"b2", m.b2},
      {"wy", m.wy}, {"by", m.by}};
  if (m.has_embed_head()) {
    out.emplace_back("wz", m.wz);
    out.emplace_back("bz", m.bz);
  }
  return out;
}

namespace detail {

inline void write_header(std::ostream& out, ModelKind kind) {
  out.write(kCheckpointMagic, 4);
  put_u16(out, kCheckpointVersion);
  out.put(static_cast<char>(kind));
}

inline ModelKind read_header(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic bytes");
  const auto version = get_u16(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  const int kind = in.get();
  if (kind != static_cast<int>(ModelKind::teacher) &&
      kind != static_cast<int>(ModelKind::student))
    throw std::runtime_error("checkpoint: unknown model kind");
  return static_cast<ModelKind>(kind);
}

}  // namespace detail

inline void save_checkpoint(const TeacherModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  detail::write_header(out, ModelKind::teacher);
  for (int v : {m.cfg.L, m.cfg.H, m.cfg.d_u, m.cfg.d_m, m.cfg.n_layers,
                m.cfg.n_heads, m.cfg.d_ff})
    detail::put_u32(out, static_cast<std::uint32_t>(v));
  const auto named = named_parameters(m);
  detail::put_u32(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) detail::put_section(out, name, t);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline void save_checkpoint(const StudentModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  detail::write_header(out, ModelKind::student);
  for (int v : {m.cfg.d_u, m.cfg.d_h, m.cfg.d_z})
    detail::put_u32(out, static_cast<std::uint32_t>(v));
  const auto named = named_parameters(m);
  detail::put_u32(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) detail::put_section(out, name, t);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline ModelKind checkpoint_kind(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  return detail::read_header(in);
}

inline TeacherModel load_teacher(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  if (detail::read_header(in) != ModelKind::teacher)
    throw std::runtime_error("checkpoint: not a teacher checkpoint: " + path);
  TeacherConfig cfg;
  cfg.L = static_cast<int>(detail::get_u32(in));
  cfg.H = static_cast<int>(detail::get_u32(in));
  cfg.d_u = static_cast<int>(detail::get_u32(in));
  cfg.d_m = static_cast<int>(detail::get_u32(in));
  cfg.n_layers = static_cast<int>(detail::get_u32(in));
  cfg.n_heads = static_cast<int>(detail::get_u32(in));
  cfg.d_ff = static_cast<int>(detail::get_u32(in));
  RngState rng(0);
  TeacherModel m = TeacherModel::init(cfg, rng);
  auto named = named_parameters(m);
  const auto count = detail::get_u32(in);
  if (count != named.size())
    throw std::runtime_error("checkpoint: unexpected section count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto s = detail::get_section(in);
    bool matched = false;
    for (auto& [name, t] : named) {
      if (name == s.name) {
        detail::load_into(s, t);
        matched = true;
        break;
      }
    }
    if (!matched)
      throw std::runtime_error("checkpoint: unknown section '" + s.name + "'");
  }
  return m;
}

inline StudentModel load_student(const std::string& path,
                                 bool skip_embed_head = false) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  if (detail::read_header(in) != ModelKind::student)
    throw std::runtime_error("checkpoint: not a student checkpoint: " + path);
  StudentConfig cfg;
  cfg.d_u = static_cast<int>(detail::get_u32(in));
  cfg.d_h = static_cast<int>(detail::get_u32(in));
  cfg.d_z = static_cast<int>(detail::get_u32(in));
  RngState rng(0);
  StudentModel m = StudentModel::init(cfg, rng);
  if (skip_embed_head) {
    m.wz = Tensor();
    m.bz = Tensor();
  }
  auto named = named_parameters(m);
  const auto count = detail::get_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto s = detail::get_section(in);
    if (skip_embed_head && (s.name == "wz" || s.name == "bz")) continue;
    bool matched = false;
    for (auto& [name, t] : named) {
      if (name == s.name) {
        detail::load_into(s, t);
        matched = true;
        break;
      }
    }
    if (!matched)
      throw std::runtime_error("checkpoint: unknown section '" + s.name + "'");
  }
  return m;
}

}  // namespace s2p
