#include "fedgr/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fedgr {

bool operator==(const RunConfig& a, const RunConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double parse_double(const std::string& v, int line) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'", line);
  }
  if (used != v.size()) throw ConfigError("trailing junk in number '" + v + "'", line);
  return out;
}

int parse_int(const std::string& v, int line) {
  std::size_t used = 0;
  long out = 0;
  try {
    out = std::stol(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected an integer, got '" + v + "'", line);
  }
  if (used != v.size()) throw ConfigError("trailing junk in integer '" + v + "'", line);
  return static_cast<int>(out);
}

bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true/false, got '" + v + "'", line);
}

std::vector<std::string> split(const std::string& v, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(trim(item));
  return parts;
}

Method parse_method(const std::string& v, int line) {
  if (v == "fedgr") return Method::fedgr;
  if (v == "fedavg") return Method::fedavg;
  throw ConfigError("method must be fedgr or fedavg, got '" + v + "'", line);
}

NoiseKind parse_noise_kind(const std::string& v, int line) {
  if (v == "sym") return NoiseKind::symmetric;
  if (v == "asym") return NoiseKind::asymmetric;
  if (v == "mixed") return NoiseKind::mixed;
  throw ConfigError("noise type must be sym, asym or mixed, got '" + v + "'", line);
}

PartitionKind parse_partition(const std::string& v, int line) {
  if (v == "iid") return PartitionKind::iid;
  if (v == "dirichlet") return PartitionKind::dirichlet;
  throw ConfigError("partition must be iid or dirichlet, got '" + v + "'", line);
}

void apply_key(RunConfig& c, const std::string& section, const std::string& key,
               const std::string& value, int line) {
  auto unknown = [&]() -> ConfigError {
    return ConfigError("unknown key '" + key + "' in section [" + section + "]", line);
  };
  if (section == "run") {
    if (key == "method") c.method = parse_method(value, line);
    else if (key == "seeds") {
      c.seeds.clear();
      for (const std::string& s : split(value, ',')) {
        if (s.empty()) throw ConfigError("empty seed entry", line);
        const int v = parse_int(s, line);
        if (v < 0) throw ConfigError("seeds must be non-negative", line);
        c.seeds.push_back(static_cast<std::uint64_t>(v));
      }
    } else if (key == "out_dir") c.out_dir = value;
    else throw unknown();
  } else if (section == "model") {
    if (key == "hidden") {
      c.hidden.clear();
      for (const std::string& s : split(value, ','))
        if (!s.empty()) c.hidden.push_back(parse_int(s, line));
    } else throw unknown();
  } else if (section == "data") {
    if (key == "n_classes") c.data.n_classes = parse_int(value, line);
    else if (key == "n_train") c.data.n_train = parse_int(value, line);
    else if (key == "n_test") c.data.n_test = parse_int(value, line);
    else if (key == "d_in") c.data.d_in = parse_int(value, line);
    else if (key == "class_separation") c.data.class_separation = parse_double(value, line);
    else if (key == "partition") c.partition = parse_partition(value, line);
    else if (key == "alpha_dirichlet") c.alpha_dirichlet = parse_double(value, line);
    else throw unknown();
  } else if (section == "noise") {
    if (key == "type") c.noise.kind = parse_noise_kind(value, line);
    else if (key == "phi") c.noise.phi = parse_double(value, line);
    else if (key == "rho_min") c.noise.rho_min = parse_double(value, line);
    else if (key == "rho_max") c.noise.rho_max = parse_double(value, line);
    else throw unknown();
  } else if (section == "protocol") {
    if (key == "clients") c.protocol.n_clients = parse_int(value, line);
    else if (key == "sample_ratio") c.protocol.sample_ratio = parse_double(value, line);
    else if (key == "rounds") c.protocol.rounds = parse_int(value, line);
    else if (key == "alpha") c.protocol.sniff_rounds = parse_int(value, line);
    else if (key == "delta") c.protocol.distill_start = parse_int(value, line);
    else if (key == "drop_probability") c.protocol.drop_probability = parse_double(value, line);
    else throw unknown();
  } else if (section == "trainer") {
    if (key == "lambda_b") c.trainer.lambda_b = parse_double(value, line);
    else if (key == "lambda_r") c.trainer.lambda_r = parse_double(value, line);
    else if (key == "epsilon") c.trainer.epsilon = parse_double(value, line);
    else if (key == "beta") c.trainer.beta = parse_double(value, line);
    else if (key == "tau") c.trainer.tau = parse_double(value, line);
    else if (key == "gamma_l") c.trainer.gamma_l = parse_double(value, line);
    else if (key == "kappa") c.trainer.kappa = parse_double(value, line);
    else if (key == "mu") c.trainer.mu = parse_double(value, line);
    else if (key == "lr") c.trainer.lr = parse_double(value, line);
    else if (key == "momentum") c.trainer.momentum = parse_double(value, line);
    else if (key == "weight_decay") c.trainer.weight_decay = parse_double(value, line);
    else if (key == "batch_size") c.trainer.batch_size = parse_int(value, line);
    else if (key == "local_epochs") c.trainer.local_epochs = parse_int(value, line);
    else if (key == "sigma_weak") c.trainer.aug.sigma_weak = parse_double(value, line);
    else if (key == "sigma_strong") c.trainer.aug.sigma_strong = parse_double(value, line);
    else throw unknown();
  } else if (section == "ablation") {
    if (key == "disable_cs") c.ablation.disable_cs = parse_bool(value, line);
    else if (key == "disable_lr") c.ablation.disable_lr = parse_bool(value, line);
    else if (key == "disable_b") c.ablation.disable_b = parse_bool(value, line);
    else if (key == "disable_r") c.ablation.disable_r = parse_bool(value, line);
    else if (key == "disable_strong_aug") c.ablation.disable_strong_aug = parse_bool(value, line);
    else throw unknown();
  } else {
    throw ConfigError("unknown section [" + section + "]", line);
  }
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(ss, raw)) {
    ++line_no;
    // strip comments, then whitespace
    const std::size_t hash = raw.find_first_of("#;");
    std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ConfigError("malformed section header '" + line + "'", line_no);
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key = value, got '" + line + "'", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", line_no);
    if (section.empty())
      throw ConfigError("key '" + key + "' appears before any [section]", line_no);
    apply_key(cfg, section, key, value, line_no);
  }
  cfg.noise.n_classes = cfg.data.n_classes;
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* fmt(bool v) { return v ? "true" : "false"; }

}  // namespace

std::string serialize_config(const RunConfig& c) {
  std::ostringstream o;
  o << "[run]\n";
  o << "method = " << (c.method == Method::fedgr ? "fedgr" : "fedavg") << "\n";
  o << "seeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) o << (i ? "," : "") << c.seeds[i];
  o << "\n";
  o << "out_dir = " << c.out_dir << "\n";
  o << "[model]\n";
  o << "hidden = ";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) o << (i ? "," : "") << c.hidden[i];
  o << "\n";
  o << "[data]\n";
  o << "n_classes = " << c.data.n_classes << "\n";
  o << "n_train = " << c.data.n_train << "\n";
  o << "n_test = " << c.data.n_test << "\n";
  o << "d_in = " << c.data.d_in << "\n";
  o << "class_separation = " << fmt(c.data.class_separation) << "\n";
  o << "partition = " << (c.partition == PartitionKind::iid ? "iid" : "dirichlet") << "\n";
  o << "alpha_dirichlet = " << fmt(c.alpha_dirichlet) << "\n";
  o << "[noise]\n";
  o << "type = "
    << (c.noise.kind == NoiseKind::symmetric
            ? "sym"
            : c.noise.kind == NoiseKind::asymmetric ? "asym" : "mixed")
    << "\n";
  o << "phi = " << fmt(c.noise.phi) << "\n";
  o << "rho_min = " << fmt(c.noise.rho_min) << "\n";
  o << "rho_max = " << fmt(c.noise.rho_max) << "\n";
  o << "[protocol]\n";
  o << "clients = " << c.protocol.n_clients << "\n";
  o << "sample_ratio = " << fmt(c.protocol.sample_ratio) << "\n";
  o << "rounds = " << c.protocol.rounds << "\n";
  o << "alpha = " << c.protocol.sniff_rounds << "\n";
  o << "delta = " << c.protocol.distill_start << "\n";
  o << "drop_probability = " << fmt(c.protocol.drop_probability) << "\n";
  o << "[trainer]\n";
  o << "lambda_b = " << fmt(c.trainer.lambda_b) << "\n";
  o << "lambda_r = " << fmt(c.trainer.lambda_r) << "\n";
  o << "epsilon = " << fmt(c.trainer.epsilon) << "\n";
  o << "beta = " << fmt(c.trainer.beta) << "\n";
  o << "tau = " << fmt(c.trainer.tau) << "\n";
  o << "gamma_l = " << fmt(c.trainer.gamma_l) << "\n";
  o << "kappa = " << fmt(c.trainer.kappa) << "\n";
  o << "mu = " << fmt(c.trainer.mu) << "\n";
  o << "lr = " << fmt(c.trainer.lr) << "\n";
  o << "momentum = " << fmt(c.trainer.momentum) << "\n";
  o << "weight_decay = " << fmt(c.trainer.weight_decay) << "\n";
  o << "batch_size = " << c.trainer.batch_size << "\n";
  o << "local_epochs = " << c.trainer.local_epochs << "\n";
  o << "sigma_weak = " << fmt(c.trainer.aug.sigma_weak) << "\n";
  o << "sigma_strong = " << fmt(c.trainer.aug.sigma_strong) << "\n";
  o << "[ablation]\n";
  o << "disable_cs = " << fmt(c.ablation.disable_cs) << "\n";
  o << "disable_lr = " << fmt(c.ablation.disable_lr) << "\n";
  o << "disable_b = " << fmt(c.ablation.disable_b) << "\n";
  o << "disable_r = " << fmt(c.ablation.disable_r) << "\n";
  o << "disable_strong_aug = " << fmt(c.ablation.disable_strong_aug) << "\n";
  return o.str();
}

namespace {

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError("invalid " + field + ": " + why);
}

}  // namespace

void validate_config(const RunConfig& c) {
  require(!c.seeds.empty(), "run.seeds", "need at least one seed");
  require(!c.out_dir.empty(), "run.out_dir", "must not be empty");
  for (int h : c.hidden) require(h > 0, "model.hidden", "widths must be positive");
  require(c.data.n_classes >= 2, "data.n_classes", "need at least two classes");
  require(c.data.d_in >= 1, "data.d_in", "need at least one feature");
  require(c.data.n_train >= c.data.n_classes, "data.n_train", "too few samples");
  require(c.data.n_train >= c.protocol.n_clients, "data.n_train",
          "fewer samples than clients");
  require(c.data.n_test >= 1, "data.n_test", "need at least one test sample");
  require(c.data.class_separation > 0.0, "data.class_separation", "must be positive");
  require(c.alpha_dirichlet > 0.0, "data.alpha_dirichlet", "must be positive");
  require(c.noise.phi >= 0.0 && c.noise.phi <= 1.0, "noise.phi", "must be in [0, 1]");
  require(c.noise.rho_min >= 0.0, "noise.rho_min", "must be >= 0");
  require(c.noise.rho_max <= 1.0, "noise.rho_max", "must be <= 1");
  require(c.noise.rho_min <= c.noise.rho_max, "noise.rho_min", "exceeds rho_max");
  require(c.protocol.n_clients >= 1, "protocol.clients", "need at least one client");
  require(c.protocol.sample_ratio > 0.0 && c.protocol.sample_ratio <= 1.0,
          "protocol.sample_ratio", "must be in (0, 1]");
  require(c.protocol.rounds >= 1, "protocol.rounds", "need at least one round");
  require(c.protocol.sniff_rounds >= 1, "protocol.alpha", "must be >= 1");
  require(c.protocol.sniff_rounds <= c.protocol.rounds, "protocol.alpha",
          "exceeds total rounds");
  require(c.protocol.distill_start >= 0, "protocol.delta", "must be >= 0");
  require(c.protocol.distill_start <= c.protocol.rounds, "protocol.delta",
          "exceeds total rounds");
  require(c.protocol.drop_probability >= 0.0 && c.protocol.drop_probability < 1.0,
          "protocol.drop_probability", "must be in [0, 1)");
  require(c.trainer.lambda_b >= 0.0, "trainer.lambda_b", "must be >= 0");
  require(c.trainer.lambda_r >= 0.0, "trainer.lambda_r", "must be >= 0");
  require(c.trainer.epsilon > 0.0 && c.trainer.epsilon <= 1.0, "trainer.epsilon",
          "must be in (0, 1]");
  require(c.trainer.beta > 0.0 && c.trainer.beta < 1.0, "trainer.beta",
          "must be in (0, 1)");
  require(c.trainer.tau > 0.0, "trainer.tau", "must be positive");
  require(c.trainer.gamma_l >= 0.0 && c.trainer.gamma_l <= 1.0, "trainer.gamma_l",
          "must be in [0, 1]");
  require(c.trainer.kappa >= 0.0 && c.trainer.kappa <= 1.0, "trainer.kappa",
          "must be in [0, 1]");
  require(c.trainer.mu >= 0.0 && c.trainer.mu <= 1.0, "trainer.mu", "must be in [0, 1]");
  require(c.trainer.lr > 0.0, "trainer.lr", "must be positive");
  require(c.trainer.momentum >= 0.0 && c.trainer.momentum < 1.0, "trainer.momentum",
          "must be in [0, 1)");
  require(c.trainer.weight_decay >= 0.0, "trainer.weight_decay", "must be >= 0");
  require(c.trainer.batch_size >= 1, "trainer.batch_size", "must be >= 1");
  require(c.trainer.local_epochs >= 0, "trainer.local_epochs", "must be >= 0");
  require(c.trainer.aug.sigma_weak >= 0.0, "trainer.sigma_weak", "must be >= 0");
  require(c.trainer.aug.sigma_strong >= 0.0, "trainer.sigma_strong", "must be >= 0");
}

std::string config_hash(const RunConfig& cfg) {
  const std::string s = serialize_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<int> model_dims(const RunConfig& cfg) {
  std::vector<int> dims;
  dims.push_back(cfg.data.d_in);
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(cfg.data.n_classes);
  return dims;
}

}  // namespace fedgr
