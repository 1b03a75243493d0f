#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedgr/config.hpp"
#include "fedgr/metrics.hpp"
#include "fedgr/protocol.hpp"

namespace fedgr {

struct SeedRunResult {
  std::uint64_t seed = 0;
  std::vector<RoundReport> reports;
  SeedSummary summary;
  // frozen-sieve noise-ratio estimates paired with the realized ratios, one
  // entry per sieved client (what the summary's Pearson is computed from)
  std::vector<double> estimated_ratios;
  std::vector<double> true_ratios;
  ModelParams final_global;
};

// Data built once per seed: generate -> partition -> corrupt.
std::vector<ClientDataset> build_clients(const RunConfig& cfg, std::uint64_t seed,
                                         SyntheticData& data_out);

// One full federated run for one seed (no file output).
SeedRunResult run_single_seed(const RunConfig& cfg, std::uint64_t seed);

struct ExperimentResult {
  std::vector<SeedRunResult> per_seed;
  double mean_last10 = 0.0;
  double std_last10 = 0.0;
  double mean_final_memorization = 0.0;
};

// Runs every seed in cfg.seeds. When write_outputs is set, produces
//   <out_dir>/seed_<s>/rounds.csv, clients.csv, summary.csv
//   <out_dir>/summary.csv          (across-seed aggregate)
//   <out_dir>/status.txt           ("ok" or the error, plus completed seeds)
// and optionally <out_dir>/seed_<s>/dataset.csv. progress may be null.
ExperimentResult run_experiment(const RunConfig& cfg, bool write_outputs,
                                std::ostream* progress, bool dump_data = false);

}  // namespace fedgr
