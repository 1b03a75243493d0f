#include "fedgr/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace fedgr {

namespace {

constexpr int kGmmMaxIters = 200;
constexpr double kGmmTol = 1e-6;

int participants_per_round(double ratio, int n_clients) {
  // ceil with a nudge so e.g. 0.2 * 20 doesn't round up to 5
  const int m = static_cast<int>(std::ceil(ratio * n_clients - 1e-9));
  return std::clamp(m, 1, n_clients);
}

// Every ledgered sample scores as fully clean; used when the mixture fit is
// impossible (all losses identical).
SieveResult all_clean_sieve(const std::map<int, std::vector<double>>& mean_losses) {
  SieveResult out;
  for (const auto& [id, losses] : mean_losses) {
    ClientSieve cs;
    cs.q.assign(losses.size(), 1.0);
    cs.is_clean.assign(losses.size(), 1);
    cs.estimated_noise_ratio = 0.0;
    out.clients.emplace(id, std::move(cs));
  }
  return out;
}

}  // namespace

Federation::Federation(ModelParams initial_global, std::vector<ClientDataset> client_data,
                       const std::vector<Sample>* test_set, const ProtocolConfig& pcfg,
                       const TrainerConfig& tcfg, Method method, AblationFlags ablation,
                       std::uint64_t run_seed)
    : global_(std::move(initial_global)),
      test_set_(test_set),
      pcfg_(pcfg),
      tcfg_(tcfg),
      method_(method),
      ablation_(ablation),
      run_seed_(run_seed),
      sampling_rng_(derive_seed(run_seed, StreamPurpose::sampling)) {
  if (static_cast<int>(client_data.size()) != pcfg.n_clients)
    throw std::invalid_argument("client data does not match n_clients");
  if (test_set_ == nullptr || test_set_->empty())
    throw std::invalid_argument("federation needs a non-empty test set");
  clients_.resize(client_data.size());
  for (std::size_t k = 0; k < client_data.size(); ++k) {
    ClientState& cs = clients_[k];
    cs.client_id = static_cast<int>(k);
    cs.data = std::move(client_data[k]);
    if (cs.data.client_id != cs.client_id)
      throw std::invalid_argument("client ids must be 0..K-1 in order");
    if (cs.data.size() == 0) throw std::invalid_argument("empty client dataset");
    ledger_.register_client(cs.client_id, cs.data.size());
  }
}

std::vector<int> Federation::sample_clients() {
  const int k = pcfg_.n_clients;
  const int m = participants_per_round(pcfg_.sample_ratio, k);
  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(m));

  if (round_ < pcfg_.sniff_rounds) {
    // without-replacement cycling so every client is sniffed equally often
    while (static_cast<int>(picked.size()) < m) {
      if (sniff_cycle_.empty()) {
        for (int id = 0; id < k; ++id) {
          if (std::find(picked.begin(), picked.end(), id) == picked.end())
            sniff_cycle_.push_back(id);
        }
      }
      const int j = sampling_rng_.uniform_int(static_cast<int>(sniff_cycle_.size()));
      picked.push_back(sniff_cycle_[static_cast<std::size_t>(j)]);
      sniff_cycle_[static_cast<std::size_t>(j)] = sniff_cycle_.back();
      sniff_cycle_.pop_back();
    }
  } else {
    // uniform subset without replacement (partial Fisher-Yates)
    std::vector<int> ids(static_cast<std::size_t>(k));
    std::iota(ids.begin(), ids.end(), 0);
    for (int i = 0; i < m; ++i) {
      const int j = i + sampling_rng_.uniform_int(k - i);
      std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
    }
    picked.assign(ids.begin(), ids.begin() + m);
  }

  std::sort(picked.begin(), picked.end());
  if (pcfg_.drop_probability > 0.0) {
    std::vector<int> kept;
    for (int id : picked) {
      if (sampling_rng_.uniform() >= pcfg_.drop_probability) kept.push_back(id);
    }
    picked = std::move(kept);
  }
  return picked;
}

ModelParams Federation::aggregate(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw std::invalid_argument("aggregate: no updates");
  long long total = 0;
  for (const ClientUpdate& u : updates) {
    if (u.n_samples <= 0) throw std::invalid_argument("aggregate: non-positive weight");
    total += u.n_samples;
  }
  ModelParams out = zeros_like(updates.front().params);
  double weight_sum = 0.0;
  for (const ClientUpdate& u : updates) {
    const double a = static_cast<double>(u.n_samples) / static_cast<double>(total);
    add_scaled(out, u.params, a);
    weight_sum += a;
  }
  if (std::abs(weight_sum - 1.0) > 1e-12)
    throw std::logic_error("aggregate: weights do not sum to 1");
  return out;
}

void Federation::update_sieve_view(ClientState& client) const {
  const bool phase1 = round_ < pcfg_.sniff_rounds;
  if (phase1) {
    if (current_sieve_ && current_sieve_->has(client.client_id)) {
      const ClientSieve& cs = current_sieve_->clients.at(client.client_id);
      client.sieve_view = SieveView{cs.estimated_noise_ratio, cs.q, cs.is_clean};
    }
    return;
  }
  // refinement phase: the frozen sieve is the only authority
  if (frozen_sieve_ && frozen_sieve_->has(client.client_id)) {
    const ClientSieve& cs = frozen_sieve_->clients.at(client.client_id);
    client.sieve_view = SieveView{cs.estimated_noise_ratio, cs.q, cs.is_clean};
  } else {
    // never sniffed: trust nothing it was given (pseudo-labels only)
    client.sieve_view = SieveView{1.0, {}, {}};
  }
}

void Federation::run_sieve_update(const std::vector<int>& participant_ids) {
  if (participant_ids.empty()) return;

  std::map<int, std::vector<double>> round_means;
  for (int id : participant_ids) round_means.emplace(id, ledger_.mean_losses(id));

  SieveResult fresh;
  if (ablation_.disable_cs) {
    // isolated fits: each participant sieves itself on its own losses
    for (const auto& [id, losses] : round_means) {
      std::map<int, std::vector<double>> one;
      one.emplace(id, losses);
      try {
        const GmmFit fit = fit_gmm_1d(losses, kGmmMaxIters, kGmmTol, 0);
        SieveResult r = sieve(fit, one);
        fresh.clients.merge(r.clients);
      } catch (const DegenerateFitError&) {
        SieveResult r = all_clean_sieve(one);
        fresh.clients.merge(r.clients);
      }
    }
  } else {
    // pooled fit over this round's participants, scored for those same
    // participants; a client's assignment refreshes only on rounds it takes
    // part in, so the retained result is always per-client latest
    std::vector<double> pooled;
    for (const auto& [id, m] : round_means) pooled.insert(pooled.end(), m.begin(), m.end());
    try {
      const GmmFit fit = fit_gmm_1d(pooled, kGmmMaxIters, kGmmTol, 0);
      fresh = sieve(fit, round_means);
    } catch (const DegenerateFitError&) {
      fresh = all_clean_sieve(round_means);
    }
  }

  if (!current_sieve_) current_sieve_ = SieveResult{};
  for (auto& [id, cs] : fresh.clients) current_sieve_->clients.insert_or_assign(id, std::move(cs));
}

RoundReport Federation::make_report(const std::vector<int>& participants) const {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  RoundReport report;
  report.round = round_;
  report.participants = participants;
  report.test_accuracy = test_accuracy(global_, *test_set_);
  std::vector<ClientDataset> datasets;
  datasets.reserve(clients_.size());
  for (const ClientState& cs : clients_) datasets.push_back(cs.data);
  report.memorization_fraction = memorization_fraction(global_, datasets);

  const bool phase1 = round_ < pcfg_.sniff_rounds;
  const std::optional<SieveResult>& active = phase1 ? current_sieve_ : frozen_sieve_;
  for (const ClientState& cs : clients_) {
    ClientRoundStats stats;
    stats.client_id = cs.client_id;
    stats.rho_true = cs.data.true_noise_ratio;
    stats.r_est = nan;
    stats.precision = stats.recall = stats.f1 = nan;
    stats.refined_fraction = cs.has_refined ? cs.refined_fraction : nan;
    if (active && active->has(cs.client_id)) {
      const ClientSieve& sv = active->clients.at(cs.client_id);
      stats.r_est = sv.estimated_noise_ratio;
      const SelectionScore score = selection_f1(sv, cs.data);
      stats.precision = score.precision;
      stats.recall = score.recall;
      stats.f1 = score.f1;
    }
    report.client_stats.push_back(stats);
  }
  return report;
}

RoundReport Federation::run_round() {
  if (round_ >= pcfg_.rounds) throw ProtocolError("run_round: run already finished");
  const bool phase1 = round_ < pcfg_.sniff_rounds;
  // entering the refinement phase pins whatever the sniffing phase last fitted
  if (!phase1 && !frozen_sieve_ && current_sieve_) frozen_sieve_ = current_sieve_;
  const std::vector<int> participants = sample_clients();

  if (!participants.empty()) {
    std::vector<ClientUpdate> updates;
    updates.reserve(participants.size());
    LocalContext ctx;
    ctx.round = round_;
    ctx.sniff_rounds = pcfg_.sniff_rounds;
    ctx.distill_start = pcfg_.distill_start;
    ctx.method = method_;
    ctx.ablation = ablation_;
    ctx.run_seed = run_seed_;

    for (int id : participants) {
      ClientState& client = clients_[static_cast<std::size_t>(id)];
      update_sieve_view(client);
      LocalUpdateResult res = local_update(client, global_, tcfg_, ctx);
      if (method_ == Method::fedgr && phase1)
        ledger_.record(id, res.ledger_losses);
      updates.push_back(ClientUpdate{std::move(res.params), client.data.size()});
    }
    global_ = aggregate(updates);

    if (method_ == Method::fedgr && phase1) run_sieve_update(participants);
  }

  RoundReport report = make_report(participants);
  round_++;
  return report;
}

std::vector<RoundReport> Federation::run() {
  std::vector<RoundReport> reports;
  reports.reserve(static_cast<std::size_t>(pcfg_.rounds));
  while (round_ < pcfg_.rounds) reports.push_back(run_round());
  return reports;
}

std::vector<RoundReport> run_fedavg_baseline(ModelParams initial_global,
                                             std::vector<ClientDataset> client_data,
                                             const std::vector<Sample>* test_set,
                                             const ProtocolConfig& pcfg,
                                             const TrainerConfig& tcfg,
                                             std::uint64_t run_seed) {
  Federation fed(std::move(initial_global), std::move(client_data), test_set, pcfg,
                 tcfg, Method::fedavg, AblationFlags{}, run_seed);
  return fed.run();
}

}  // namespace fedgr
