#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "fedgr/datagen.hpp"
#include "fedgr/errors.hpp"
#include "fedgr/protocol.hpp"

using namespace fedgr;

namespace {

void fill_params(ModelParams& p, double v) {
  for (auto& w : p.weights) w.fill(v);
  for (auto& b : p.biases) std::fill(b.begin(), b.end(), v);
}

struct TestBed {
  SyntheticData data;
  std::vector<ClientDataset> clients;
  ModelParams model;
};

TestBed make_bed(int n_clients, int n_train = 240, int n_classes = 3,
                 std::uint64_t seed = 5) {
  DataConfig dcfg;
  dcfg.n_classes = n_classes;
  dcfg.n_train = n_train;
  dcfg.n_test = 60;
  dcfg.d_in = 4;
  dcfg.class_separation = 8.0;
  TestBed bed;
  bed.data = generate_dataset(dcfg, seed);
  bed.clients = partition_iid(bed.data.train, n_clients, seed + 1);
  bed.model = make_mlp({4, 16, n_classes}, seed + 2);
  return bed;
}

TrainerConfig quick_trainer() {
  TrainerConfig t;
  t.local_epochs = 2;
  t.lr = 0.05;
  return t;
}

}  // namespace

TEST_CASE("aggregation is the sample-weighted parameter mean") {
  ModelParams p1 = make_mlp({2, 3, 2}, 1);
  ModelParams p2 = p1;
  fill_params(p1, 1.0);
  fill_params(p2, 5.0);

  const ModelParams avg =
      Federation::aggregate({ClientUpdate{p1, 1}, ClientUpdate{p2, 3}});
  // weights 0.25 / 0.75
  CHECK(avg.weights[0](0, 0) == doctest::Approx(4.0));
  CHECK(avg.weights[1](1, 2) == doctest::Approx(4.0));
  CHECK(avg.biases[0][1] == doctest::Approx(4.0));

  const ModelParams solo = Federation::aggregate({ClientUpdate{p2, 7}});
  CHECK(solo == p2);

  CHECK_THROWS_AS(Federation::aggregate({}), std::invalid_argument);
  CHECK_THROWS_AS(Federation::aggregate({ClientUpdate{p1, 0}}), std::invalid_argument);
}

TEST_CASE("federation constructor validates its inputs") {
  TestBed bed = make_bed(4);
  ProtocolConfig pcfg;
  pcfg.n_clients = 4;
  TrainerConfig tcfg = quick_trainer();

  SUBCASE("client count must match") {
    auto three = std::vector<ClientDataset>(bed.clients.begin(), bed.clients.end() - 1);
    CHECK_THROWS_AS(Federation(bed.model, three, &bed.data.test, pcfg, tcfg,
                               Method::fedgr, AblationFlags{}, 1),
                    std::invalid_argument);
  }
  SUBCASE("ids must be 0..K-1 in order") {
    auto swapped = bed.clients;
    std::swap(swapped[0], swapped[1]);
    CHECK_THROWS_AS(Federation(bed.model, swapped, &bed.data.test, pcfg, tcfg,
                               Method::fedgr, AblationFlags{}, 1),
                    std::invalid_argument);
  }
  SUBCASE("empty shard is rejected") {
    auto gutted = bed.clients;
    gutted[2].samples.clear();
    CHECK_THROWS_AS(Federation(bed.model, gutted, &bed.data.test, pcfg, tcfg,
                               Method::fedgr, AblationFlags{}, 1),
                    std::invalid_argument);
  }
  SUBCASE("test set must exist") {
    std::vector<Sample> empty;
    CHECK_THROWS_AS(Federation(bed.model, bed.clients, &empty, pcfg, tcfg,
                               Method::fedgr, AblationFlags{}, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(Federation(bed.model, bed.clients, nullptr, pcfg, tcfg,
                               Method::fedgr, AblationFlags{}, 1),
                    std::invalid_argument);
  }
}

TEST_CASE("sniffing-phase sampling cycles through every client evenly") {
  TestBed bed = make_bed(6, 120);
  ProtocolConfig pcfg;
  pcfg.n_clients = 6;
  pcfg.sample_ratio = 1.0 / 3.0;  // m = 2
  pcfg.rounds = 100;
  pcfg.sniff_rounds = 100;  // stay in phase I
  Federation fed(bed.model, bed.clients, &bed.data.test, pcfg, quick_trainer(),
                 Method::fedgr, AblationFlags{}, 11);

  std::map<int, int> counts;
  for (int call = 0; call < 9; ++call) {
    const std::vector<int> picked = fed.sample_clients();
    REQUIRE(picked.size() == 2);
    CHECK(std::is_sorted(picked.begin(), picked.end()));
    CHECK(picked[0] != picked[1]);
    for (int id : picked) counts[id]++;
    if (call == 2) {
      // one full pass: everyone exactly once
      for (int id = 0; id < 6; ++id) CHECK(counts[id] == 1);
    }
  }
  for (int id = 0; id < 6; ++id) CHECK(counts[id] == 3);
}

TEST_CASE("cycle refills never duplicate a participant within a round") {
  TestBed bed = make_bed(3, 90, 3, 8);
  ProtocolConfig pcfg;
  pcfg.n_clients = 3;
  // m = 2 of 3: the cycle drains mid-round every round, forcing refills that
  // must exclude the id already picked
  pcfg.sample_ratio = 2.0 / 3.0;
  pcfg.sniff_rounds = 100;
  pcfg.rounds = 100;
  Federation fed(bed.model, bed.clients, &bed.data.test, pcfg, quick_trainer(),
                 Method::fedgr, AblationFlags{}, 3);

  std::map<int, int> counts;
  for (int call = 0; call < 3; ++call) {
    const std::vector<int> picked = fed.sample_clients();
    REQUIRE(picked.size() == 2);
    CHECK(picked[0] != picked[1]);
    for (int id : picked) counts[id]++;
  }
  // 6 slots over 3 clients; two full cycles consumed, so nobody is skipped
  // (refills may transiently favor a client when m does not divide K)
  int total = 0;
  for (int id = 0; id < 3; ++id) {
    total += counts[id];
    CHECK(counts[id] >= 1);
  }
  CHECK(total == 6);
}

TEST_CASE("participant count rounds up without float overshoot") {
  TestBed bed = make_bed(20, 200);
  ProtocolConfig pcfg;
  pcfg.n_clients = 20;
  pcfg.sniff_rounds = 10;
  pcfg.rounds = 10;

  pcfg.sample_ratio = 0.2;  // exactly 4, not ceil(4.0000000001)
  Federation f1(bed.model, bed.clients, &bed.data.test, pcfg, quick_trainer(),
                Method::fedgr, AblationFlags{}, 2);
  CHECK(f1.sample_clients().size() == 4);

  pcfg.sample_ratio = 0.21;  // genuine fraction: ceil(4.2) = 5
  Federation f2(bed.model, bed.clients, &bed.data.test, pcfg, quick_trainer(),
                Method::fedgr, AblationFlags{}, 2);
  CHECK(f2.sample_clients().size() == 5);

  pcfg.sample_ratio = 0.001;  // clamped to at least one participant
  Federation f3(bed.model, bed.clients, &bed.data.test, pcfg, quick_trainer(),
                Method::fedgr, AblationFlags{}, 2);
  CHECK(f3.sample_clients().size() == 1);
}

TEST_CASE("client drops thin rounds and can empty one") {
  TestBed bed = make_bed(4, 120);
  ProtocolConfig pcfg;
  pcfg.n_clients = 4;
  pcfg.sample_ratio = 0.5;
  pcfg.rounds = 30;
  pcfg.sniff_rounds = 5;
  pcfg.distill_start = 5;
  pcfg.drop_probability = 0.5;
  TrainerConfig tcfg = quick_trainer();
  tcfg.local_epochs = 1;

  Federation a(bed.model, bed.clients, &bed.data.test, pcfg, tcfg, Method::fedavg,
               AblationFlags{}, 21);
  Federation b(bed.model, bed.clients, &bed.data.test, pcfg, tcfg, Method::fedavg,
               AblationFlags{}, 21);
  int kept_total = 0;
  for (int r = 0; r < 30; ++r) {
    const RoundReport ra = a.run_round();
    const RoundReport rb = b.run_round();
    CHECK(ra.participants == rb.participants);  // drops come from the run seed
    CHECK(static_cast<int>(ra.participants.size()) <= 2);
    kept_total += static_cast<int>(ra.participants.size());
  }
  CHECK(kept_total < 60);  // half the coin flips land on drop
  CHECK(kept_total > 0);

  SUBCASE("an all-dropped round leaves the global model untouched") {
    ProtocolConfig dead = pcfg;
    dead.drop_probability = 1.0;  // bypasses config validation on purpose
    dead.rounds = 2;
    Federation f(bed.model, bed.clients, &bed.data.test, dead, tcfg, Method::fedgr,
                 AblationFlags{}, 4);
    const RoundReport r0 = f.run_round();
    CHECK(r0.participants.empty());
    CHECK(f.global() == bed.model);
    CHECK(r0.test_accuracy >= 0.0);
    REQUIRE(r0.client_stats.size() == 4);
    for (const auto& cs : r0.client_stats) {
      CHECK(std::isnan(cs.r_est));  // never sieved
      CHECK(std::isnan(cs.refined_fraction));
    }
    f.run_round();
    CHECK_THROWS_AS(f.run_round(), ProtocolError);  // run finished
  }
}

TEST_CASE("baseline federated averaging learns separable blobs") {
  TestBed bed = make_bed(4);
  ProtocolConfig pcfg;
  pcfg.n_clients = 4;
  pcfg.sample_ratio = 1.0;
  pcfg.rounds = 10;
  pcfg.sniff_rounds = 10;
  pcfg.distill_start = 10;

  const double untrained = test_accuracy(bed.model, bed.data.test);
  const auto reports = run_fedavg_baseline(bed.model, bed.clients, &bed.data.test,
                                           pcfg, quick_trainer(), 31);
  REQUIRE(reports.size() == 10);
  CHECK(reports.back().test_accuracy > 0.9);
  CHECK(reports.back().test_accuracy > untrained);
  // clean data: nothing to memorize
  CHECK(reports.back().memorization_fraction == 0.0);
  for (const auto& r : reports) {
    CHECK(static_cast<int>(r.participants.size()) == 4);
  }
}

TEST_CASE("robust pipeline with every mechanism neutral matches the baseline bitwise") {
  TestBed bed = make_bed(4, 160);
  NoiseSpec spec;
  spec.kind = NoiseKind::symmetric;
  spec.phi = 0.5;
  spec.rho_min = 0.4;
  spec.rho_max = 0.8;
  spec.n_classes = 3;
  inject_noise(bed.clients, spec, 77);

  ProtocolConfig pcfg;
  pcfg.n_clients = 4;
  pcfg.sample_ratio = 0.5;
  pcfg.rounds = 6;
  pcfg.sniff_rounds = 6;   // sniffing never ends
  pcfg.distill_start = 6;  // EMA never activates
  TrainerConfig tcfg = quick_trainer();
  tcfg.lambda_b = 0.0;
  tcfg.lambda_r = 0.0;
  tcfg.epsilon = 1.0;  // pseudo-labels can never fire

  Federation robust(bed.model, bed.clients, &bed.data.test, pcfg, tcfg,
                    Method::fedgr, AblationFlags{}, 123);
  const auto r_rob = robust.run();
  const auto r_base = run_fedavg_baseline(bed.model, bed.clients, &bed.data.test,
                                          pcfg, tcfg, 123);

  REQUIRE(r_rob.size() == r_base.size());
  for (std::size_t i = 0; i < r_rob.size(); ++i) {
    CHECK(r_rob[i].participants == r_base[i].participants);
    CHECK(r_rob[i].test_accuracy == r_base[i].test_accuracy);  // bitwise
    CHECK(r_rob[i].memorization_fraction == r_base[i].memorization_fraction);
  }

  Federation base2(bed.model, bed.clients, &bed.data.test, pcfg, tcfg,
                   Method::fedavg, AblationFlags{}, 123);
  base2.run();
  CHECK(robust.global() == base2.global());  // identical parameters, bit for bit
}

TEST_CASE("sieve freezes when sniffing ends and the ledger stops growing") {
  TestBed bed = make_bed(4, 160);
  NoiseSpec spec;
  spec.kind = NoiseKind::symmetric;
  spec.phi = 0.5;
  spec.rho_min = 0.5;
  spec.rho_max = 0.9;
  spec.n_classes = 3;
  inject_noise(bed.clients, spec, 13);

  ProtocolConfig pcfg;
  pcfg.n_clients = 4;
  pcfg.sample_ratio = 0.5;  // m = 2
  pcfg.rounds = 8;
  pcfg.sniff_rounds = 3;
  pcfg.distill_start = 3;
  TrainerConfig tcfg = quick_trainer();
  tcfg.local_epochs = 1;

  Federation fed(bed.model, bed.clients, &bed.data.test, pcfg, tcfg, Method::fedgr,
                 AblationFlags{}, 19);

  for (int r = 0; r < 3; ++r) fed.run_round();
  // 3 sniffing rounds * 2 slots, cycled: everyone at least once
  int total_participations = 0;
  for (int id = 0; id < 4; ++id) {
    const int t = fed.ledger().participations(id);
    CHECK(t >= 1);
    total_participations += t;
  }
  CHECK(total_participations == 6);
  CHECK(fed.current_sieve().has_value());
  CHECK_FALSE(fed.frozen_sieve().has_value());  // pinned lazily on entry

  fed.run_round();  // first refinement round
  REQUIRE(fed.frozen_sieve().has_value());

  // frozen copy == last sniffing-phase sieve
  const SieveResult& frozen = *fed.frozen_sieve();
  const SieveResult& current = *fed.current_sieve();
  REQUIRE(frozen.clients.size() == current.clients.size());
  for (const auto& [id, cs] : frozen.clients) {
    REQUIRE(current.has(id));
    CHECK(cs.estimated_noise_ratio == current.clients.at(id).estimated_noise_ratio);
    CHECK(cs.q == current.clients.at(id).q);
  }

  const auto before = [&] {
    std::map<int, int> t;
    for (int id = 0; id < 4; ++id) t[id] = fed.ledger().participations(id);
    return t;
  }();
  while (fed.round() < pcfg.rounds) fed.run_round();
  for (int id = 0; id < 4; ++id)
    CHECK(fed.ledger().participations(id) == before.at(id));  // no phase-II records

  // every ledgered client is scored by the frozen sieve
  for (int id : fed.ledger().ledgered_clients()) CHECK(frozen.has(id));
}

TEST_CASE("clients missed by the sniffing phase are treated as untrusted") {
  TestBed bed = make_bed(4, 160, 3, 23);
  ProtocolConfig pcfg;
  pcfg.n_clients = 4;
  pcfg.sample_ratio = 0.5;
  pcfg.rounds = 8;
  pcfg.sniff_rounds = 1;  // only one sniffing round: two clients never ledgered
  pcfg.distill_start = 1;
  TrainerConfig tcfg = quick_trainer();
  tcfg.local_epochs = 1;

  Federation fed(bed.model, bed.clients, &bed.data.test, pcfg, tcfg, Method::fedgr,
                 AblationFlags{}, 29);
  const auto reports = fed.run();

  const std::vector<int> ledgered = fed.ledger().ledgered_clients();
  REQUIRE(ledgered.size() == 2);

  int unseen_participants = 0;
  for (const ClientState& cs : fed.clients()) {
    const bool was_ledgered =
        std::find(ledgered.begin(), ledgered.end(), cs.client_id) != ledgered.end();
    if (was_ledgered || !cs.sieve_view) continue;
    unseen_participants++;
    // synthesized view: fully untrusted, no per-sample posteriors
    CHECK(cs.sieve_view->estimated_noise_ratio == 1.0);
    CHECK(cs.sieve_view->q.empty());
  }
  CHECK(unseen_participants > 0);  // deterministic under this seed

  // reports never show sieve stats for unseen clients
  for (const auto& stats : reports.back().client_stats) {
    const bool was_ledgered =
        std::find(ledgered.begin(), ledgered.end(), stats.client_id) != ledgered.end();
    if (!was_ledgered) CHECK(std::isnan(stats.r_est));
  }
}
