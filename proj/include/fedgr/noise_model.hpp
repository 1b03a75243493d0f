#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "fedgr/errors.hpp"

namespace fedgr {

// Server-side record of per-sample losses reported during the sniffing phase.
// Each recorded vector is a full pass over the client's local data evaluated
// with the freshly broadcast global model.
class LossLedger {
 public:
  void register_client(int client_id, int n_samples);
  bool has_client(int client_id) const;
  // Throws ProtocolError if the client is unknown or the length is wrong.
  void record(int client_id, const std::vector<double>& losses);
  // T_k: how many loss vectors this client has reported.
  int participations(int client_id) const;
  // Per-sample mean over the T_k recorded passes; throws ProtocolError if
  // the client never reported.
  std::vector<double> mean_losses(int client_id) const;
  // ids with at least one record, ascending
  std::vector<int> ledgered_clients() const;

 private:
  struct Entry {
    int n = 0;
    int t = 0;
    std::vector<double> sums;
  };
  std::map<int, Entry> entries_;
  const Entry& find(int client_id, const char* op) const;
};

// Two-component 1-D Gaussian mixture; component 0 is the lower-mean (clean)
// one after fitting.
struct GmmFit {
  double mean[2] = {0.0, 0.0};
  double var[2] = {1.0, 1.0};
  double weight[2] = {0.5, 0.5};
  bool converged = false;
  int iterations = 0;
  // mean log-likelihood after each EM iteration (diagnostics / tests)
  std::vector<double> loglik_trace;
};

// EM with deterministic moment init (means at the 10th/90th percentiles,
// shared variance, equal weights); the seed parameter is accepted for
// interface stability but unused. Variances are floored at 1e-6. Throws
// DegenerateFitError when all values are identical.
GmmFit fit_gmm_1d(const std::vector<double>& values, int max_iters, double tol,
                  std::uint64_t seed);

// P(component 0 | x): probability the observation is clean. Monotone
// non-increasing in x (the evaluation point is clamped into [mean0, mean1],
// where that holds for every valid fit; the raw posterior would flip back in
// the far tails whenever the component variances differ).
double clean_posterior(const GmmFit& fit, double x);

struct ClientSieve {
  std::vector<double> q;            // per-sample clean posterior
  std::vector<std::uint8_t> is_clean;  // q >= 0.5
  double estimated_noise_ratio = 0.0;  // r_k: flagged-noisy fraction
};

struct SieveResult {
  std::map<int, ClientSieve> clients;
  bool has(int client_id) const { return clients.count(client_id) != 0; }
};

// Scores every client's mean losses against one fitted mixture. Scoring is
// decoupled from fitting: the fit may come from pooled losses of a different
// (e.g. larger) client set.
SieveResult sieve(const GmmFit& fit,
                  const std::map<int, std::vector<double>>& mean_losses);

}  // namespace fedgr
