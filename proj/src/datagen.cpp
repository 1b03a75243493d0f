#include "fedgr/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fedgr/errors.hpp"

namespace fedgr {

namespace {

std::vector<int> balanced_counts(int total, int buckets) {
  std::vector<int> counts(static_cast<std::size_t>(buckets), total / buckets);
  for (int c = 0; c < total % buckets; ++c) counts[static_cast<std::size_t>(c)]++;
  return counts;
}

void append_class_samples(std::vector<Sample>& out,
                          const std::vector<std::vector<double>>& centers,
                          const std::vector<int>& counts, int d_in, Rng& rng) {
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (int i = 0; i < counts[c]; ++i) {
      Sample s;
      s.features.resize(static_cast<std::size_t>(d_in));
      for (int j = 0; j < d_in; ++j)
        s.features[static_cast<std::size_t>(j)] = centers[c][static_cast<std::size_t>(j)] + rng.normal();
      s.true_label = static_cast<int>(c);
      s.given_label = s.true_label;
      out.push_back(std::move(s));
    }
  }
}

}  // namespace

SyntheticData generate_dataset(const DataConfig& cfg, std::uint64_t seed) {
  if (cfg.n_classes < 2) throw std::invalid_argument("n_classes must be >= 2");
  if (cfg.d_in < 1) throw std::invalid_argument("d_in must be >= 1");
  if (cfg.n_train < cfg.n_classes || cfg.n_test < 1)
    throw std::invalid_argument("dataset sizes too small");
  if (cfg.class_separation <= 0.0)
    throw std::invalid_argument("class_separation must be positive");

  Rng rng(derive_seed(seed, StreamPurpose::data));
  // class centers: unit directions scaled to the requested separation
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(cfg.n_classes));
  for (auto& c : centers) {
    c.resize(static_cast<std::size_t>(cfg.d_in));
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (auto& v : c) {
        v = rng.normal();
        norm2 += v * v;
      }
    } while (norm2 < 1e-12);
    const double scale = cfg.class_separation / std::sqrt(norm2);
    for (auto& v : c) v *= scale;
  }

  SyntheticData data;
  data.n_classes = cfg.n_classes;
  data.d_in = cfg.d_in;
  append_class_samples(data.train, centers, balanced_counts(cfg.n_train, cfg.n_classes),
                       cfg.d_in, rng);
  append_class_samples(data.test, centers, balanced_counts(cfg.n_test, cfg.n_classes),
                       cfg.d_in, rng);
  return data;
}

std::vector<ClientDataset> partition_iid(const std::vector<Sample>& samples,
                                         int n_clients, std::uint64_t seed) {
  if (n_clients < 1) throw std::invalid_argument("n_clients must be >= 1");
  if (static_cast<int>(samples.size()) < n_clients)
    throw std::invalid_argument("fewer samples than clients");
  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, StreamPurpose::partition));
  rng.shuffle(order);

  const std::vector<int> counts = balanced_counts(static_cast<int>(samples.size()), n_clients);
  std::vector<ClientDataset> clients(static_cast<std::size_t>(n_clients));
  std::size_t pos = 0;
  for (int k = 0; k < n_clients; ++k) {
    auto& c = clients[static_cast<std::size_t>(k)];
    c.client_id = k;
    c.samples.reserve(static_cast<std::size_t>(counts[static_cast<std::size_t>(k)]));
    for (int i = 0; i < counts[static_cast<std::size_t>(k)]; ++i)
      c.samples.push_back(samples[static_cast<std::size_t>(order[pos++])]);
  }
  return clients;
}

namespace {

// round proportions to integer counts summing to total (largest remainder)
std::vector<int> apportion(const std::vector<double>& props, int total) {
  const std::size_t k = props.size();
  std::vector<int> counts(k, 0);
  std::vector<std::pair<double, std::size_t>> rema(k);
  int assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = props[i] * total;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    rema[i] = {exact - std::floor(exact), i};
  }
  std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;  // deterministic tie-break
  });
  for (int i = 0; i < total - assigned; ++i) counts[rema[static_cast<std::size_t>(i)].second]++;
  return counts;
}

}  // namespace

std::vector<ClientDataset> partition_dirichlet(const std::vector<Sample>& samples,
                                               int n_clients, int n_classes,
                                               double alpha, std::uint64_t seed) {
  if (n_clients < 1) throw std::invalid_argument("n_clients must be >= 1");
  if (alpha <= 0.0) throw std::invalid_argument("dirichlet alpha must be positive");

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int c = samples[i].true_label;
    if (c < 0 || c >= n_classes)
      throw std::invalid_argument("sample label outside [0, n_classes)");
    by_class[static_cast<std::size_t>(c)].push_back(static_cast<int>(i));
  }

  for (int attempt = 0; attempt < 100; ++attempt) {
    Rng rng(derive_seed(seed + static_cast<std::uint64_t>(attempt), StreamPurpose::partition));
    std::vector<ClientDataset> clients(static_cast<std::size_t>(n_clients));
    for (int k = 0; k < n_clients; ++k) clients[static_cast<std::size_t>(k)].client_id = k;

    for (auto indices : by_class) {
      if (indices.empty()) continue;
      rng.shuffle(indices);
      std::vector<double> props(static_cast<std::size_t>(n_clients));
      double sum = 0.0;
      for (auto& p : props) {
        p = rng.gamma(alpha);
        sum += p;
      }
      for (auto& p : props) p /= sum;
      const std::vector<int> counts = apportion(props, static_cast<int>(indices.size()));
      std::size_t pos = 0;
      for (int k = 0; k < n_clients; ++k) {
        for (int i = 0; i < counts[static_cast<std::size_t>(k)]; ++i)
          clients[static_cast<std::size_t>(k)].samples.push_back(
              samples[static_cast<std::size_t>(indices[pos++])]);
      }
    }

    const bool any_empty = std::any_of(clients.begin(), clients.end(),
                                       [](const ClientDataset& c) { return c.samples.empty(); });
    if (!any_empty) return clients;
  }
  throw std::runtime_error("partition_dirichlet: could not avoid empty clients in 100 attempts");
}

void inject_noise(std::vector<ClientDataset>& clients, const NoiseSpec& spec,
                  std::uint64_t seed) {
  if (spec.phi < 0.0 || spec.phi > 1.0) throw std::invalid_argument("phi must be in [0, 1]");
  if (spec.rho_min < 0.0 || spec.rho_max > 1.0 || spec.rho_min > spec.rho_max)
    throw std::invalid_argument("need 0 <= rho_min <= rho_max <= 1");
  if (spec.n_classes < 2) throw std::invalid_argument("n_classes must be >= 2");

  const int k = static_cast<int>(clients.size());
  const int n_noisy = static_cast<int>(std::llround(spec.phi * k));

  std::vector<int> ids(static_cast<std::size_t>(k));
  std::iota(ids.begin(), ids.end(), 0);
  Rng select_rng(derive_seed(seed, StreamPurpose::noise));
  select_rng.shuffle(ids);
  std::vector<bool> noisy(static_cast<std::size_t>(k), false);
  for (int i = 0; i < n_noisy; ++i) noisy[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])] = true;

  for (int idx = 0; idx < k; ++idx) {
    ClientDataset& client = clients[static_cast<std::size_t>(idx)];
    client.true_noise_ratio = 0.0;
    client.noise_type = ClientNoiseType::clean;
    if (!noisy[static_cast<std::size_t>(idx)]) continue;

    // per-client stream keyed by id, so iteration order is irrelevant
    Rng rng(derive_seed(seed, StreamPurpose::noise, static_cast<std::uint64_t>(client.client_id) + 1));
    const double rho = rng.uniform(spec.rho_min, spec.rho_max);
    const int n = client.size();
    const int n_corrupt = static_cast<int>(std::llround(rho * n));

    NoiseKind kind = spec.kind;
    if (kind == NoiseKind::mixed)
      kind = rng.uniform() < 0.5 ? NoiseKind::symmetric : NoiseKind::asymmetric;
    client.noise_type = kind == NoiseKind::symmetric ? ClientNoiseType::symmetric
                                                     : ClientNoiseType::asymmetric;

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (int i = 0; i < n_corrupt; ++i) {
      Sample& s = client.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
      if (kind == NoiseKind::symmetric) {
        // uniform over the C-1 wrong classes
        const int r = rng.uniform_int(spec.n_classes - 1);
        s.given_label = r >= s.true_label ? r + 1 : r;
      } else {
        s.given_label = (s.true_label + 1) % spec.n_classes;
      }
    }

    int mismatches = 0;
    for (const Sample& s : client.samples)
      if (s.given_label != s.true_label) mismatches++;
    client.true_noise_ratio = n > 0 ? static_cast<double>(mismatches) / n : 0.0;
  }
}

std::vector<double> augment(const std::vector<double>& x, AugmentStrength strength,
                            const AugmentParams& params, Rng& rng) {
  std::vector<double> out = x;
  const int d = static_cast<int>(x.size());
  if (strength == AugmentStrength::weak) {
    for (auto& v : out) v += params.sigma_weak * rng.normal();
    return out;
  }
  // strong: elementwise rescale of a random 30% subset, then additive noise
  const int m = std::min(d, static_cast<int>(std::llround(0.3 * d)));
  std::vector<int> idx(static_cast<std::size_t>(d));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < m; ++i) {
    const int j = i + rng.uniform_int(d - i);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  for (int i = 0; i < m; ++i)
    out[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] *= rng.uniform(0.5, 1.5);
  for (auto& v : out) v += params.sigma_strong * rng.normal();
  return out;
}

void dump_csv(const std::vector<ClientDataset>& clients, const std::string& path) {
  if (clients.empty()) throw std::invalid_argument("dump_csv: no clients");
  const std::size_t d = clients.front().samples.empty()
                            ? 0
                            : clients.front().samples.front().features.size();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("dump_csv: cannot open " + path);
  out << "client_id,sample_id,true_label,given_label";
  for (std::size_t j = 0; j < d; ++j) out << ",f_" << j;
  out << "\n";
  char buf[40];
  for (const ClientDataset& c : clients) {
    for (std::size_t i = 0; i < c.samples.size(); ++i) {
      const Sample& s = c.samples[i];
      out << c.client_id << ',' << i << ',' << s.true_label << ',' << s.given_label;
      for (double v : s.features) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
      }
      out << "\n";
    }
  }
  if (!out) throw std::runtime_error("dump_csv: write failed for " + path);
}

std::vector<ClientDataset> load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file");

  std::map<int, ClientDataset> by_id;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 4)
      throw std::runtime_error("load_csv: malformed row at line " + std::to_string(line_no));
    Sample s;
    const int client_id = std::stoi(cells[0]);
    s.true_label = std::stoi(cells[2]);
    s.given_label = std::stoi(cells[3]);
    for (std::size_t j = 4; j < cells.size(); ++j)
      s.features.push_back(std::strtod(cells[j].c_str(), nullptr));
    ClientDataset& c = by_id[client_id];
    c.client_id = client_id;
    c.samples.push_back(std::move(s));
  }

  std::vector<ClientDataset> clients;
  clients.reserve(by_id.size());
  for (auto& [id, c] : by_id) {
    int mismatches = 0;
    for (const Sample& s : c.samples)
      if (s.given_label != s.true_label) mismatches++;
    c.true_noise_ratio = c.samples.empty() ? 0.0 : static_cast<double>(mismatches) / c.size();
    clients.push_back(std::move(c));
  }
  return clients;
}

}  // namespace fedgr
