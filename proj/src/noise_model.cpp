#include "fedgr/noise_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fedgr {

void LossLedger::register_client(int client_id, int n_samples) {
  if (n_samples <= 0)
    throw std::invalid_argument("register_client: n_samples must be positive");
  if (entries_.count(client_id))
    throw ProtocolError("client " + std::to_string(client_id) + " already registered");
  Entry e;
  e.n = n_samples;
  e.sums.assign(static_cast<std::size_t>(n_samples), 0.0);
  entries_.emplace(client_id, std::move(e));
}

bool LossLedger::has_client(int client_id) const { return entries_.count(client_id) != 0; }

const LossLedger::Entry& LossLedger::find(int client_id, const char* op) const {
  auto it = entries_.find(client_id);
  if (it == entries_.end())
    throw ProtocolError(std::string(op) + ": unknown client " + std::to_string(client_id));
  return it->second;
}

void LossLedger::record(int client_id, const std::vector<double>& losses) {
  const Entry& found = find(client_id, "record");
  if (static_cast<int>(losses.size()) != found.n)
    throw ProtocolError("record: loss vector length " + std::to_string(losses.size()) +
                        " does not match client size " + std::to_string(found.n));
  Entry& e = entries_[client_id];
  for (std::size_t i = 0; i < losses.size(); ++i) e.sums[i] += losses[i];
  e.t++;
}

int LossLedger::participations(int client_id) const {
  return find(client_id, "participations").t;
}

std::vector<double> LossLedger::mean_losses(int client_id) const {
  const Entry& e = find(client_id, "mean_losses");
  if (e.t == 0)
    throw ProtocolError("mean_losses: client " + std::to_string(client_id) +
                        " has no recorded losses");
  std::vector<double> out(e.sums);
  for (double& v : out) v /= e.t;
  return out;
}

std::vector<int> LossLedger::ledgered_clients() const {
  std::vector<int> ids;
  for (const auto& [id, e] : entries_)
    if (e.t > 0) ids.push_back(id);
  return ids;
}

namespace {

constexpr double kVarFloor = 1e-6;

double percentile(std::vector<double> sorted, double p) {
  // sorted must be ascending; linear interpolation between ranks
  const double idx = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(idx));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = idx - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

inline double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * 3.141592653589793238462643383279502884 * var) + d * d / var);
}

// log(w0*N0 + w1*N1) and the posterior of component 0, shared by fit/score
struct ComponentEval {
  double log_density;
  double posterior0;
};

ComponentEval eval_point(const GmmFit& f, double x) {
  const double l0 = std::log(f.weight[0]) + log_normal_pdf(x, f.mean[0], f.var[0]);
  const double l1 = std::log(f.weight[1]) + log_normal_pdf(x, f.mean[1], f.var[1]);
  const double m = std::max(l0, l1);
  const double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
  return {lse, std::exp(l0 - lse)};
}

}  // namespace

GmmFit fit_gmm_1d(const std::vector<double>& values, int max_iters, double tol,
                  std::uint64_t seed) {
  (void)seed;  // init is deterministic (percentile moments); kept for interface
  const std::size_t n = values.size();
  if (n < 2) throw std::invalid_argument("fit_gmm_1d: need at least two values");
  if (max_iters < 1) throw std::invalid_argument("fit_gmm_1d: max_iters must be >= 1");

  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  if (*mn == *mx) throw DegenerateFitError("fit_gmm_1d: all values identical");

  std::vector<double> sorted(values);
  std::sort(sorted.begin(), sorted.end());

  GmmFit f;
  f.mean[0] = percentile(sorted, 0.10);
  f.mean[1] = percentile(sorted, 0.90);
  double mean_all = 0.0;
  for (double v : values) mean_all += v;
  mean_all /= static_cast<double>(n);
  double var_all = 0.0;
  for (double v : values) var_all += (v - mean_all) * (v - mean_all);
  var_all = std::max(var_all / static_cast<double>(n), kVarFloor);
  f.var[0] = f.var[1] = var_all;
  f.weight[0] = f.weight[1] = 0.5;

  std::vector<double> resp0(n);
  double prev_mean_ll = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iters; ++it) {
    // E step (also evaluates the likelihood under the current parameters)
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const ComponentEval ev = eval_point(f, values[i]);
      ll += ev.log_density;
      resp0[i] = ev.posterior0;
    }
    const double mean_ll = ll / static_cast<double>(n);
    f.loglik_trace.push_back(mean_ll);
    f.iterations = it + 1;
    if (it > 0 && mean_ll - prev_mean_ll < tol) {
      f.converged = true;
      break;
    }
    prev_mean_ll = mean_ll;

    // M step
    double n0 = 0.0;
    for (double r : resp0) n0 += r;
    const double n1 = static_cast<double>(n) - n0;
    for (int j = 0; j < 2; ++j) {
      const double nj = j == 0 ? n0 : n1;
      if (nj < 1e-12) continue;  // starved component keeps its parameters
      double mu = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = j == 0 ? resp0[i] : 1.0 - resp0[i];
        mu += r * values[i];
      }
      mu /= nj;
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = j == 0 ? resp0[i] : 1.0 - resp0[i];
        const double d = values[i] - mu;
        var += r * d * d;
      }
      f.mean[j] = mu;
      f.var[j] = std::max(var / nj, kVarFloor);
    }
    f.weight[0] = std::clamp(n0 / static_cast<double>(n), 1e-12, 1.0 - 1e-12);
    f.weight[1] = 1.0 - f.weight[0];
  }

  if (f.mean[0] > f.mean[1]) {
    std::swap(f.mean[0], f.mean[1]);
    std::swap(f.var[0], f.var[1]);
    std::swap(f.weight[0], f.weight[1]);
  }
  return f;
}

double clean_posterior(const GmmFit& fit, double x) {
  // Evaluate at x clamped into [mean0, mean1]: the raw two-Gaussian posterior
  // flips back in the far tails when the variances differ (the wider component
  // dominates both extremes), and the sieve's contract is that lower loss is
  // never less likely to be clean. Between the means the posterior is monotone
  // non-increasing for every valid fit.
  return eval_point(fit, std::clamp(x, fit.mean[0], fit.mean[1])).posterior0;
}

SieveResult sieve(const GmmFit& fit,
                  const std::map<int, std::vector<double>>& mean_losses) {
  SieveResult out;
  for (const auto& [id, losses] : mean_losses) {
    if (losses.empty()) throw std::invalid_argument("sieve: client with no losses");
    ClientSieve cs;
    cs.q.reserve(losses.size());
    cs.is_clean.reserve(losses.size());
    int flagged = 0;
    for (double v : losses) {
      const double q = clean_posterior(fit, v);
      cs.q.push_back(q);
      const bool clean = q >= 0.5;
      cs.is_clean.push_back(clean ? 1 : 0);
      if (!clean) flagged++;
    }
    cs.estimated_noise_ratio = static_cast<double>(flagged) / static_cast<double>(losses.size());
    out.clients.emplace(id, std::move(cs));
  }
  return out;
}

}  // namespace fedgr
