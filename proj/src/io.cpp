#include "meshode/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "meshode/config.hpp"
#include "meshode/errors.hpp"

namespace meshode {

namespace {

constexpr std::size_t kMaxText = 1 << 20;
constexpr std::size_t kMaxCount = std::size_t{1} << 32;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void raw(std::string_view s) { buf_.append(s); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) buf_.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) buf_.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> v) {
    for (double x : v) f64(x);
  }
  void text(std::string_view s) {
    u64(s.size());
    raw(s);
  }
  // Appends the checksum of everything written so far.
  std::string finish() {
    u64(fnv1a(buf_));
    return std::move(buf_);
  }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string_view bytes, const char* what) : what_(what) {
    if (bytes.size() < 16) fail("file is too short");
    const std::string_view body = bytes.substr(0, bytes.size() - 8);
    data_ = bytes;
    end_ = bytes.size();
    pos_ = body.size();
    if (u64() != fnv1a(body)) fail("checksum mismatch (corrupted or truncated file)");
    end_ = body.size();
    pos_ = 0;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(std::string(what_) + ": " + msg);
  }

  void need(std::size_t n) const {
    if (n > end_ - pos_) fail("unexpected end of data at byte " + std::to_string(pos_));
  }
  std::string_view raw(std::size_t n) {
    need(n);
    const std::string_view s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(raw(1)[0]); }
  std::uint32_t u32() {
    const std::string_view s = raw(4);
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(s[k]);
    return v;
  }
  std::uint64_t u64() {
    const std::string_view s = raw(8);
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(s[k]);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  // Reads a count and checks that `elem_bytes` per item fit in the rest.
  std::size_t count(std::size_t elem_bytes, const char* field) {
    const std::uint64_t n = u64();
    if (n > kMaxCount || (elem_bytes > 0 && n > (end_ - pos_) / elem_bytes)) {
      fail(std::string("implausible ") + field + " count " + std::to_string(n));
    }
    return static_cast<std::size_t>(n);
  }
  std::vector<double> f64s(std::size_t n) {
    need(n * 8);
    std::vector<double> v(n);
    for (double& x : v) x = f64();
    return v;
  }
  std::string text(const char* field) {
    const std::size_t n = count(1, field);
    if (n > kMaxText) fail(std::string(field) + " is too long");
    return std::string(raw(n));
  }
  void expect_magic(std::string_view magic, std::uint32_t version) {
    if (raw(4) != magic) fail("bad magic (expected " + std::string(magic) + ")");
    const std::uint32_t v = u32();
    if (v != version) fail("unsupported format version " + std::to_string(v));
  }
  void expect_end() const {
    if (pos_ != end_) fail(std::to_string(end_ - pos_) + " trailing bytes");
  }

 private:
  const char* what_;
  std::string_view data_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * 8) == 0);
}

CaseConfig parse_echo(Reader& r, const std::string& echo, CaseKind kind) {
  try {
    const KeyValues kv = KeyValues::parse(echo, "config echo");
    const CaseConfig cfg = case_config_from(kv, kind);
    kv.require_all_used();
    if (case_config_text(cfg) != echo) r.fail("config echo is not in canonical form");
    return cfg;
  } catch (const ConfigError& e) {
    r.fail(std::string("bad config echo: ") + e.what());
  }
}

// Fixed small graph used to verify checkpoints on load.
struct SelfCheck {
  std::vector<Index> senders, receivers;
  Tensor node, edge;
};

SelfCheck self_check_input(const GnnConfig& cfg) {
  SelfCheck s;
  const std::size_t n = 4;
  for (Index i = 0; i + 1 < static_cast<Index>(n); ++i) {
    s.senders.insert(s.senders.end(), {i, i + 1});
    s.receivers.insert(s.receivers.end(), {i + 1, i});
  }
  std::vector<double> node(n * static_cast<std::size_t>(cfg.node_in));
  for (std::size_t k = 0; k < node.size(); ++k) node[k] = std::sin(0.7 * static_cast<double>(k) + 0.3);
  std::vector<double> edge(s.senders.size() * static_cast<std::size_t>(cfg.edge_in));
  for (std::size_t k = 0; k < edge.size(); ++k) edge[k] = std::cos(0.45 * static_cast<double>(k) - 0.2);
  s.node = Tensor({n, static_cast<std::size_t>(cfg.node_in)}, std::move(node));
  s.edge = Tensor({s.senders.size(), static_cast<std::size_t>(cfg.edge_in)}, std::move(edge));
  return s;
}

void write_stats(Writer& w, const FeatureStats& s) {
  w.u64(s.mean.size());
  w.f64s(s.mean);
  w.f64s(s.std);
}

FeatureStats read_stats(Reader& r, std::size_t expected, const char* field) {
  const std::size_t n = r.count(16, field);
  if (n != expected) {
    r.fail(std::string(field) + " statistics have width " + std::to_string(n) + ", expected " +
           std::to_string(expected));
  }
  FeatureStats s;
  s.mean = r.f64s(n);
  s.std = r.f64s(n);
  for (double x : s.std) {
    if (!(x > 0.0) || !std::isfinite(x)) r.fail(std::string(field) + " has a non-positive std");
  }
  return s;
}

}  // namespace

std::string encode_trajectory(const Trajectory& traj) {
  const std::size_t n = traj.n_nodes();
  const std::size_t dim = static_cast<std::size_t>(traj.dim());
  const double dt = traj.dt_sample();
  Writer w;
  w.raw("MSHT");
  w.u32(kTrajectoryFormatVersion);
  w.u32(static_cast<std::uint32_t>(traj.kind()));
  w.u64(n);
  w.u32(static_cast<std::uint32_t>(dim));
  w.u64(traj.states.size());
  w.f64(dt);
  w.f64(youngs_modulus(traj.config));
  w.text(case_config_text(traj.config));
  w.f64s(traj.rest.positions);
  w.u64(traj.rest.edges.size());
  for (const auto& e : traj.rest.edges) {
    w.u32(static_cast<std::uint32_t>(e[0]));
    w.u32(static_cast<std::uint32_t>(e[1]));
  }
  w.f64s(traj.rest.masses);
  for (NodeType t : traj.rest.node_types) w.u8(static_cast<std::uint8_t>(t));
  // Only the rod carries node radii.
  w.u64(traj.rest.radii.size());
  w.f64s(traj.rest.radii);
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const MeshState& s = traj.states[k];
    if (s.x.size() != n * dim || s.v.size() != n * dim) {
      throw ContractError("encode_trajectory: sample " + std::to_string(k) + " has wrong size");
    }
    if (s.t != static_cast<double>(k) * dt) {
      throw ContractError("encode_trajectory: sample " + std::to_string(k) +
                          " is off the k * dt grid");
    }
    w.f64s(s.x);
    w.f64s(s.v);
  }
  return w.finish();
}

Trajectory decode_trajectory(std::string_view bytes) {
  Reader r(bytes, "trajectory file");
  r.expect_magic("MSHT", kTrajectoryFormatVersion);
  const std::uint32_t kind_raw = r.u32();
  if (kind_raw > 1) r.fail("unknown case kind " + std::to_string(kind_raw));
  const CaseKind kind = static_cast<CaseKind>(kind_raw);
  const std::size_t n = r.count(8, "node");
  const std::uint32_t dim = r.u32();
  if (static_cast<int>(dim) != spatial_dim(kind)) r.fail("dimension does not match case kind");
  const std::size_t n_samples = r.count(16 * dim * std::max<std::size_t>(n, 1), "sample");
  const double dt = r.f64();
  const double youngs = r.f64();
  const std::string echo = r.text("config echo");
  const CaseConfig config = parse_echo(r, echo, kind);
  if (dt_sample(config) != dt || youngs_modulus(config) != youngs) {
    r.fail("header disagrees with config echo");
  }
  RestGeometry rest;
  try {
    rest = build_rest(config);
  } catch (const std::exception& e) {
    r.fail(std::string("config echo does not build a mesh: ") + e.what());
  }
  if (rest.n_nodes() != n) r.fail("node count disagrees with config echo");

  const std::vector<double> positions = r.f64s(n * dim);
  const std::size_t n_edges = r.count(8, "edge");
  std::vector<std::array<Index, 2>> edges(n_edges);
  for (auto& e : edges) {
    e[0] = static_cast<Index>(r.u32());
    e[1] = static_cast<Index>(r.u32());
  }
  const std::vector<double> masses = r.f64s(n);
  std::vector<NodeType> types(n);
  for (NodeType& t : types) t = static_cast<NodeType>(r.u8());
  const std::size_t n_radii = r.count(8, "radius");
  if (n_radii != 0 && n_radii != n) r.fail("radius count is neither 0 nor the node count");
  const std::vector<double> radii = r.f64s(n_radii);
  if (!same_bits(positions, rest.positions) || edges != rest.edges ||
      !same_bits(masses, rest.masses) || types != rest.node_types || !same_bits(radii, rest.radii)) {
    r.fail("rest block disagrees with the mesh built from the config echo");
  }

  Trajectory traj{config, std::move(rest), {}};
  traj.states.reserve(n_samples);
  for (std::size_t k = 0; k < n_samples; ++k) {
    MeshState s;
    s.t = static_cast<double>(k) * dt;
    s.x = r.f64s(n * dim);
    s.v = r.f64s(n * dim);
    traj.states.push_back(std::move(s));
  }
  r.expect_end();
  return traj;
}

std::string encode_checkpoint(const Checkpoint& ck) {
  const GnnParams& p = ck.model.params;
  const GnnConfig& g = p.config;
  Writer w;
  w.raw("MSHC");
  w.u32(kCheckpointFormatVersion);
  w.u32(ck.model.kind == ModelKind::kMeshOde ? 0 : 1);
  w.i32(g.node_in);
  w.i32(g.edge_in);
  w.i32(g.out_dim);
  w.i32(g.hidden);
  w.i32(g.layers);
  w.u8(g.residual ? 1 : 0);
  w.i32(ck.model.substeps);
  write_stats(w, ck.model.norm.node);
  write_stats(w, ck.model.norm.edge);
  write_stats(w, ck.model.norm.target);
  w.u64(p.tensors.size());
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    w.text(p.names[i]);
    const Shape& shape = p.tensors[i].shape();
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) w.u64(d);
    w.f64s(p.tensors[i].data());
  }
  const bool has_adam = ck.adam.m.size() == p.tensors.size();
  w.u8(has_adam ? 1 : 0);
  if (has_adam) {
    w.i64(ck.adam.step);
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
      w.f64s(ck.adam.m[i]);
      w.f64s(ck.adam.v[i]);
    }
  }
  w.text(train_config_text(ck.train));
  w.u64(ck.train.seed);
  w.i32(ck.epochs_completed);
  const SelfCheck sc = self_check_input(g);
  const Tensor out = gnn_apply(sc.node, sc.edge, sc.senders, sc.receivers, g, p.tensors);
  w.f64s(out.data());
  return w.finish();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes, "checkpoint file");
  r.expect_magic("MSHC", kCheckpointFormatVersion);
  Checkpoint ck;
  const std::uint32_t kind = r.u32();
  if (kind > 1) r.fail("unknown model kind " + std::to_string(kind));
  ck.model.kind = kind == 0 ? ModelKind::kMeshOde : ModelKind::kMgn;
  GnnConfig g;
  g.node_in = r.i32();
  g.edge_in = r.i32();
  g.out_dim = r.i32();
  g.hidden = r.i32();
  g.layers = r.i32();
  g.residual = r.u8() != 0;
  if (g.hidden > 4096 || g.layers > 1024 || g.node_in > 1024 || g.edge_in > 1024 ||
      g.out_dim > 16) {
    r.fail("implausible architecture");
  }
  try {
    g.validate();
  } catch (const ConfigError& e) {
    r.fail(std::string("bad architecture: ") + e.what());
  }
  ck.model.substeps = r.i32();
  if (ck.model.substeps < 1) r.fail("substeps must be >= 1");
  ck.model.norm.node = read_stats(r, static_cast<std::size_t>(g.node_in), "node");
  ck.model.norm.edge = read_stats(r, static_cast<std::size_t>(g.edge_in), "edge");
  ck.model.norm.target = read_stats(r, static_cast<std::size_t>(g.out_dim), "target");

  GnnParams p = GnnParams::zeros(g);
  const std::size_t n_tensors = r.count(8, "tensor");
  if (n_tensors != p.tensors.size()) r.fail("tensor count does not match the architecture");
  for (std::size_t i = 0; i < n_tensors; ++i) {
    const std::string name = r.text("tensor name");
    if (name != p.names[i]) r.fail("unexpected tensor '" + name + "', expected '" + p.names[i] + "'");
    const std::uint32_t rank = r.u32();
    Shape shape;
    for (std::uint32_t d = 0; d < rank && d < 8; ++d) shape.push_back(static_cast<std::size_t>(r.u64()));
    if (shape != p.tensors[i].shape()) r.fail("tensor '" + name + "' has the wrong shape");
    p.tensors[i] = Tensor(shape, r.f64s(shape_numel(shape)));
  }
  if (r.u8() != 0) {
    ck.adam.step = r.i64();
    for (const Tensor& t : p.tensors) {
      ck.adam.m.push_back(r.f64s(t.numel()));
      ck.adam.v.push_back(r.f64s(t.numel()));
    }
  }
  const std::string echo = r.text("training config echo");
  try {
    const KeyValues kv = KeyValues::parse(echo, "training config echo");
    ck.train = train_config_from(kv);
    kv.require_all_used();
  } catch (const ConfigError& e) {
    r.fail(std::string("bad training config echo: ") + e.what());
  }
  if (r.u64() != ck.train.seed) r.fail("seed disagrees with the training config echo");
  ck.epochs_completed = r.i32();
  ck.model.params = std::move(p);
  const SelfCheck sc = self_check_input(g);
  const Tensor out = gnn_apply(sc.node, sc.edge, sc.senders, sc.receivers, g,
                               ck.model.params.tensors);
  const std::vector<double> stored = r.f64s(out.numel());
  if (!same_bits(stored, out.data())) r.fail("self-check output not reproduced");
  r.expect_end();
  return ck;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write to '" + path + "' failed");
}

void save_trajectory(const std::string& path, const Trajectory& traj) {
  write_file(path, encode_trajectory(traj));
}

Trajectory load_trajectory(const std::string& path) {
  return decode_trajectory(read_file(path));
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  write_file(path, encode_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace meshode
