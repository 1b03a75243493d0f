#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedgr/datagen.hpp"
#include "fedgr/nn.hpp"
#include "fedgr/noise_model.hpp"

namespace fedgr {

// Per-client diagnostics for one round. NaN marks "not available" (client not
// sieved yet, baseline method, no refinement so far); the CSV writers emit the
// literal string "nan" for those cells.
struct ClientRoundStats {
  int client_id = -1;
  double r_est = 0.0;      // sieve's estimated noise ratio
  double rho_true = 0.0;   // realized corruption fraction (ground truth)
  double precision = 0.0;  // clean-sample selection quality vs ground truth
  double recall = 0.0;
  double f1 = 0.0;
  double refined_fraction = 0.0;
};

struct RoundReport {
  int round = 0;
  double test_accuracy = 0.0;
  double memorization_fraction = 0.0;
  std::vector<int> participants;
  std::vector<ClientRoundStats> client_stats;  // every client, ascending id
};

// fraction of test samples whose argmax prediction equals the true label
double test_accuracy(const ModelParams& params, const std::vector<Sample>& test_set);

// Of all corrupted training samples (given != true) across clients, the
// fraction the model predicts as the corrupted given label; 0 when there are
// no corrupted samples.
double memorization_fraction(const ModelParams& params,
                             const std::vector<ClientDataset>& clients);

struct SelectionScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Clean is the positive class: precision/recall of is_clean against
// given == true. Empty denominators give 0.
SelectionScore selection_f1(const ClientSieve& sieve, const ClientDataset& client);

// Sample Pearson correlation; NaN when either side is constant or n < 2.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

// mean test accuracy over the last min(10, n) rounds
double last10_mean_accuracy(const std::vector<RoundReport>& reports);

struct SeedSummary {
  std::uint64_t seed = 0;
  double last10_mean_acc = 0.0;
  double pearson_r = 0.0;  // frozen sieve estimates vs true ratios
  double final_memorization_fraction = 0.0;
  std::string config_hash;
};

// Deterministic CSVs ("%.10g" floats, "nan" sentinels, "\n" endings).
void write_rounds_csv(const std::string& path, const std::vector<RoundReport>& reports);
void write_clients_csv(const std::string& path, const std::vector<RoundReport>& reports);
void write_summary_csv(const std::string& path, const SeedSummary& summary);
void write_aggregate_csv(const std::string& path, const std::vector<SeedSummary>& seeds);

std::string format_double(double v);

}  // namespace fedgr
