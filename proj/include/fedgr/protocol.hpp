#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedgr/client_trainer.hpp"
#include "fedgr/metrics.hpp"

namespace fedgr {

struct ProtocolConfig {
  int n_clients = 20;
  double sample_ratio = 0.2;
  int rounds = 150;
  int sniff_rounds = 30;   // alpha: sieving happens while t < alpha
  int distill_start = 30;  // delta: EMA teacher activates at t >= delta
  double drop_probability = 0.0;
};

struct ClientUpdate {
  ModelParams params;
  int n_samples = 0;
};

// One federated run: owns the global model, per-client state, the loss
// ledger and the sieves. The global model changes only through aggregate().
class Federation {
 public:
  Federation(ModelParams initial_global, std::vector<ClientDataset> client_data,
             const std::vector<Sample>* test_set, const ProtocolConfig& pcfg,
             const TrainerConfig& tcfg, Method method, AblationFlags ablation,
             std::uint64_t run_seed);

  // Participants for the current round, ascending ids, after drop filtering
  // (an unlucky round can be empty). Phase I cycles through all clients
  // without replacement so everyone is sniffed equally often; phase II draws
  // a uniform subset.
  std::vector<int> sample_clients();

  // Sample-count-weighted parameter average; throws on an empty list or
  // mismatched shapes.
  static ModelParams aggregate(const std::vector<ClientUpdate>& updates);

  // Sample, locally train, aggregate, sieve (phase I), evaluate.
  // An empty participant set skips training and leaves the global model
  // untouched; the report is still produced.
  RoundReport run_round();

  std::vector<RoundReport> run();

  const ModelParams& global() const { return global_; }
  int round() const { return round_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  const LossLedger& ledger() const { return ledger_; }
  const std::optional<SieveResult>& current_sieve() const { return current_sieve_; }
  // The sieve in force for the whole refinement phase: the last one fitted
  // before t reached sniff_rounds.
  const std::optional<SieveResult>& frozen_sieve() const { return frozen_sieve_; }

 private:
  void update_sieve_view(ClientState& client) const;
  void run_sieve_update(const std::vector<int>& participant_ids);
  RoundReport make_report(const std::vector<int>& participants) const;

  ModelParams global_;
  std::vector<ClientState> clients_;
  const std::vector<Sample>* test_set_;
  ProtocolConfig pcfg_;
  TrainerConfig tcfg_;
  Method method_;
  AblationFlags ablation_;
  std::uint64_t run_seed_;

  int round_ = 0;
  std::vector<int> sniff_cycle_;  // ids not yet visited in the current pass
  Rng sampling_rng_;
  LossLedger ledger_;
  std::optional<SieveResult> current_sieve_;
  std::optional<SieveResult> frozen_sieve_;
};

// Convenience wrapper: same engine with every robustness mechanism off.
std::vector<RoundReport> run_fedavg_baseline(ModelParams initial_global,
                                             std::vector<ClientDataset> client_data,
                                             const std::vector<Sample>* test_set,
                                             const ProtocolConfig& pcfg,
                                             const TrainerConfig& tcfg,
                                             std::uint64_t run_seed);

}  // namespace fedgr
