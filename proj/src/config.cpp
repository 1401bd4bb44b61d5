#include "meshode/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "meshode/errors.hpp"

namespace meshode {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  if (!value.empty() && value[0] == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || first == last) {
    throw ConfigError("config key '" + key + "': cannot read '" + value + "' as a number");
  }
  return out;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
  KeyValues kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (kv.entries_.count(key) != 0) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    kv.entries_[key] = value;
  }
  return kv;
}

KeyValues KeyValues::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void KeyValues::set(const std::string& key, const std::string& value) { entries_[key] = value; }

bool KeyValues::has(const std::string& key) const { return entries_.count(key) != 0; }

const std::string* KeyValues::find(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

std::string KeyValues::get(const std::string& key, const std::string& fallback) const {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

double KeyValues::get(const std::string& key, double fallback) const {
  const std::string* v = find(key);
  return v ? parse_number<double>(key, *v) : fallback;
}

int KeyValues::get(const std::string& key, int fallback) const {
  const std::string* v = find(key);
  return v ? parse_number<int>(key, *v) : fallback;
}

std::uint64_t KeyValues::get(const std::string& key, std::uint64_t fallback) const {
  const std::string* v = find(key);
  return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

bool KeyValues::get(const std::string& key, bool fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError("config key '" + key + "': cannot read '" + *v + "' as a boolean");
}

std::vector<int> KeyValues::get(const std::string& key, const std::vector<int>& fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  std::vector<int> out;
  std::stringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<int>(key, item));
  }
  return out;
}

void KeyValues::require_all_used() const {
  std::string unknown;
  for (const auto& [k, v] : entries_) {
    if (used_.count(k) == 0) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw ConfigError(origin_ + ": unknown keys: " + unknown);
}

std::string case_config_text(const CaseConfig& cfg) {
  std::ostringstream os;
  auto put = [&](const char* key, double v) { os << key << " = " << format_double(v) << '\n'; };
  auto put_int = [&](const char* key, long long v) { os << key << " = " << v << '\n'; };
  if (const auto* r = std::get_if<RodConfig>(&cfg)) {
    os << "case = rod\n";
    put("length", r->length);
    put_int("n_vertices", r->n_vertices);
    put("rod_radius", r->rod_radius);
    put("youngs_modulus", r->youngs_modulus);
    put("metal_density", r->metal_density);
    put("fluid_density", r->fluid_density);
    put("viscosity", r->viscosity);
    put("node_radius", r->node_radius);
    put("mid_node_radius", r->mid_node_radius);
    put("gravity_x", r->gravity.x());
    put("gravity_y", r->gravity.y());
    put("natural_curvature", r->natural_curvature);
    put("dt_sample", r->dt_sample);
    put("t_end", r->t_end);
    put_int("substeps", r->substeps);
  } else {
    const auto& p = std::get<PlateConfig>(cfg);
    os << "case = plate\n";
    put("length", p.length);
    put("width", p.width);
    put("thickness", p.thickness);
    put("density", p.density);
    put("youngs_modulus", p.youngs_modulus);
    put("damping", p.damping);
    put_int("nx", p.nx);
    put_int("ny", p.ny);
    put("gravity_x", p.gravity.x());
    put("gravity_y", p.gravity.y());
    put("gravity_z", p.gravity.z());
    put("dt_sample", p.dt_sample);
    put_int("n_steps", p.n_steps);
    put_int("substeps", p.substeps);
  }
  return os.str();
}

CaseConfig case_config_from(const KeyValues& kv) {
  return case_config_from(kv, parse_case(kv.get("case", std::string("rod"))));
}

CaseConfig case_config_from(const KeyValues& kv, CaseKind kind) {
  (void)kv.get("case", std::string());
  if (kind == CaseKind::kRod) {
    RodConfig r;
    r.length = kv.get("length", r.length);
    r.n_vertices = kv.get("n_vertices", r.n_vertices);
    r.rod_radius = kv.get("rod_radius", r.rod_radius);
    r.youngs_modulus = kv.get("youngs_modulus", r.youngs_modulus);
    r.metal_density = kv.get("metal_density", r.metal_density);
    r.fluid_density = kv.get("fluid_density", r.fluid_density);
    r.viscosity = kv.get("viscosity", r.viscosity);
    r.node_radius = kv.get("node_radius", r.node_radius);
    r.mid_node_radius = kv.get("mid_node_radius", r.mid_node_radius);
    r.gravity.x() = kv.get("gravity_x", r.gravity.x());
    r.gravity.y() = kv.get("gravity_y", r.gravity.y());
    r.natural_curvature = kv.get("natural_curvature", r.natural_curvature);
    r.dt_sample = kv.get("dt_sample", r.dt_sample);
    r.t_end = kv.get("t_end", r.t_end);
    r.substeps = kv.get("substeps", r.substeps);
    r.validate();
    return r;
  }
  PlateConfig p;
  p.length = kv.get("length", p.length);
  p.width = kv.get("width", p.width);
  p.thickness = kv.get("thickness", p.thickness);
  p.density = kv.get("density", p.density);
  p.youngs_modulus = kv.get("youngs_modulus", p.youngs_modulus);
  p.damping = kv.get("damping", p.damping);
  p.nx = kv.get("nx", p.nx);
  p.ny = kv.get("ny", p.ny);
  p.gravity.x() = kv.get("gravity_x", p.gravity.x());
  p.gravity.y() = kv.get("gravity_y", p.gravity.y());
  p.gravity.z() = kv.get("gravity_z", p.gravity.z());
  p.dt_sample = kv.get("dt_sample", p.dt_sample);
  p.n_steps = kv.get("n_steps", p.n_steps);
  p.substeps = kv.get("substeps", p.substeps);
  p.validate();
  return p;
}

std::string train_config_text(const TrainConfig& c) {
  std::ostringstream os;
  os << "model = " << to_string(c.model) << '\n';
  os << "case = " << case_name(c.case_kind) << '\n';
  os << "epochs = " << c.epochs << '\n';
  os << "lr0 = " << format_double(c.lr0) << '\n';
  os << "lr_decay_factor = " << format_double(c.lr_decay_factor) << '\n';
  os << "lr_decay_epochs = ";
  for (std::size_t i = 0; i < c.lr_decay_epochs.size(); ++i) {
    os << (i ? "," : "") << c.lr_decay_epochs[i];
  }
  os << '\n';
  os << "weight_decay = " << format_double(c.weight_decay) << '\n';
  os << "adam_beta1 = " << format_double(c.adam_beta1) << '\n';
  os << "adam_beta2 = " << format_double(c.adam_beta2) << '\n';
  os << "adam_eps = " << format_double(c.adam_eps) << '\n';
  os << "batch_size = " << c.batch_size << '\n';
  os << "rollout_length = " << c.rollout_length << '\n';
  os << "substeps = " << c.substeps << '\n';
  os << "seed = " << c.seed << '\n';
  os << "hidden = " << c.hidden << '\n';
  os << "layers = " << c.layers << '\n';
  os << "residual = " << (c.residual ? "true" : "false") << '\n';
  os << "loss_mode = " << (c.loss_mode == LossMode::kRawSum ? "raw_sum" : "per_node_mean") << '\n';
  os << "noise_std = " << format_double(c.noise_std) << '\n';
  os << "eval_every = " << c.eval_every << '\n';
  os << "max_skip_fraction = " << format_double(c.max_skip_fraction) << '\n';
  return os.str();
}

TrainConfig train_config_from(const KeyValues& kv) {
  const ModelKind model = parse_model_kind(kv.get("model", std::string("meshode")));
  const CaseKind kind = parse_case(kv.get("case", std::string("rod")));
  TrainConfig c = default_train_config(model, kind);
  c.epochs = kv.get("epochs", c.epochs);
  c.lr0 = kv.get("lr0", c.lr0);
  c.lr_decay_factor = kv.get("lr_decay_factor", c.lr_decay_factor);
  c.lr_decay_epochs = kv.get("lr_decay_epochs", c.lr_decay_epochs);
  c.weight_decay = kv.get("weight_decay", c.weight_decay);
  c.adam_beta1 = kv.get("adam_beta1", c.adam_beta1);
  c.adam_beta2 = kv.get("adam_beta2", c.adam_beta2);
  c.adam_eps = kv.get("adam_eps", c.adam_eps);
  c.batch_size = kv.get("batch_size", c.batch_size);
  c.rollout_length = kv.get("rollout_length", static_cast<std::uint64_t>(c.rollout_length));
  c.substeps = kv.get("substeps", c.substeps);
  c.seed = kv.get("seed", c.seed);
  c.hidden = kv.get("hidden", c.hidden);
  c.layers = kv.get("layers", c.layers);
  c.residual = kv.get("residual", c.residual);
  const std::string mode = kv.get("loss_mode", std::string("per_node_mean"));
  if (mode == "per_node_mean") {
    c.loss_mode = LossMode::kPerNodeMean;
  } else if (mode == "raw_sum") {
    c.loss_mode = LossMode::kRawSum;
  } else {
    throw ConfigError("config key 'loss_mode': expected per_node_mean or raw_sum, got '" + mode +
                      "'");
  }
  c.noise_std = kv.get("noise_std", c.noise_std);
  c.eval_every = kv.get("eval_every", c.eval_every);
  c.max_skip_fraction = kv.get("max_skip_fraction", c.max_skip_fraction);
  c.validate();
  return c;
}

}  // namespace meshode
