#include "fedgr/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>

namespace fedgr {

namespace fs = std::filesystem;

std::vector<ClientDataset> build_clients(const RunConfig& cfg, std::uint64_t seed,
                                         SyntheticData& data_out) {
  data_out = generate_dataset(cfg.data, seed);
  std::vector<ClientDataset> clients =
      cfg.partition == PartitionKind::iid
          ? partition_iid(data_out.train, cfg.protocol.n_clients, seed)
          : partition_dirichlet(data_out.train, cfg.protocol.n_clients,
                                cfg.data.n_classes, cfg.alpha_dirichlet, seed);
  NoiseSpec noise = cfg.noise;
  noise.n_classes = cfg.data.n_classes;
  inject_noise(clients, noise, seed);
  return clients;
}

SeedRunResult run_single_seed(const RunConfig& cfg, std::uint64_t seed) {
  SyntheticData data;
  std::vector<ClientDataset> clients = build_clients(cfg, seed, data);

  ModelParams initial =
      make_mlp(model_dims(cfg), derive_seed(seed, StreamPurpose::model_init));
  Federation fed(std::move(initial), std::move(clients), &data.test, cfg.protocol,
                 cfg.trainer, cfg.method, cfg.ablation, seed);

  SeedRunResult result;
  result.seed = seed;
  result.reports = fed.run();
  result.final_global = fed.global();

  // noise-ratio recovery: frozen sieve if the run got that far, else the last
  // sniffing-phase sieve
  const std::optional<SieveResult>& sieve =
      fed.frozen_sieve() ? fed.frozen_sieve() : fed.current_sieve();
  if (sieve) {
    for (const ClientState& cs : fed.clients()) {
      if (!sieve->has(cs.client_id)) continue;
      result.estimated_ratios.push_back(
          sieve->clients.at(cs.client_id).estimated_noise_ratio);
      result.true_ratios.push_back(cs.data.true_noise_ratio);
    }
  }

  result.summary.seed = seed;
  result.summary.last10_mean_acc = last10_mean_accuracy(result.reports);
  result.summary.pearson_r = result.estimated_ratios.empty()
                                 ? std::numeric_limits<double>::quiet_NaN()
                                 : pearson(result.estimated_ratios, result.true_ratios);
  result.summary.final_memorization_fraction =
      result.reports.back().memorization_fraction;
  result.summary.config_hash = config_hash(cfg);
  return result;
}

namespace {

void write_status(const std::string& out_dir, const std::string& status,
                  const std::vector<std::uint64_t>& done) {
  std::ofstream out(out_dir + "/status.txt");
  out << "status = " << status << "\n";
  out << "seeds_completed = ";
  for (std::size_t i = 0; i < done.size(); ++i) out << (i ? "," : "") << done[i];
  out << "\n";
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& cfg, bool write_outputs,
                                std::ostream* progress, bool dump_data) {
  validate_config(cfg);
  if (write_outputs) fs::create_directories(cfg.out_dir);

  ExperimentResult result;
  std::vector<std::uint64_t> done;
  std::vector<SeedSummary> summaries;
  for (std::uint64_t seed : cfg.seeds) {
    if (progress)
      *progress << "seed " << seed << ": running " << cfg.protocol.rounds
                << " rounds\n";
    try {
      SeedRunResult run = run_single_seed(cfg, seed);
      if (write_outputs) {
        const std::string dir = cfg.out_dir + "/seed_" + std::to_string(seed);
        fs::create_directories(dir);
        write_rounds_csv(dir + "/rounds.csv", run.reports);
        write_clients_csv(dir + "/clients.csv", run.reports);
        write_summary_csv(dir + "/summary.csv", run.summary);
        if (dump_data) {
          SyntheticData data;
          dump_csv(build_clients(cfg, seed, data), dir + "/dataset.csv");
        }
      }
      if (progress)
        *progress << "seed " << seed
                  << ": last10 acc = " << format_double(run.summary.last10_mean_acc)
                  << ", final memorization = "
                  << format_double(run.summary.final_memorization_fraction) << "\n";
      summaries.push_back(run.summary);
      result.per_seed.push_back(std::move(run));
      done.push_back(seed);
    } catch (...) {
      if (write_outputs) write_status(cfg.out_dir, "error", done);
      throw;
    }
  }

  double acc = 0.0, mem = 0.0;
  for (const SeedSummary& s : summaries) {
    acc += s.last10_mean_acc;
    mem += s.final_memorization_fraction;
  }
  result.mean_last10 = acc / static_cast<double>(summaries.size());
  result.mean_final_memorization = mem / static_cast<double>(summaries.size());
  if (summaries.size() >= 2) {
    double ss = 0.0;
    for (const SeedSummary& s : summaries) {
      const double d = s.last10_mean_acc - result.mean_last10;
      ss += d * d;
    }
    result.std_last10 = std::sqrt(ss / static_cast<double>(summaries.size() - 1));
  } else {
    result.std_last10 = std::numeric_limits<double>::quiet_NaN();
  }

  if (write_outputs) {
    write_aggregate_csv(cfg.out_dir + "/summary.csv", summaries);
    write_status(cfg.out_dir, "ok", done);
  }
  return result;
}

}  // namespace fedgr
