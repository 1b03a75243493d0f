#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fedgr/experiment.hpp"

using namespace fedgr;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config(const std::string& out_dir) {
  RunConfig c;
  c.seeds = {5};
  c.out_dir = out_dir;
  c.hidden = {8};
  c.data.n_classes = 3;
  c.data.n_train = 120;
  c.data.n_test = 30;
  c.data.d_in = 4;
  c.noise.phi = 0.5;
  c.noise.rho_min = 0.5;
  c.noise.rho_max = 0.9;
  c.protocol.n_clients = 4;
  c.protocol.sample_ratio = 0.5;
  c.protocol.rounds = 6;
  c.protocol.sniff_rounds = 2;
  c.protocol.distill_start = 2;
  c.trainer.local_epochs = 1;
  c.trainer.batch_size = 16;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int line_count(const std::string& text) {
  return static_cast<int>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("client building: generate, shard, corrupt") {
  const RunConfig cfg = tiny_config("unused");
  SyntheticData data;
  const auto clients = build_clients(cfg, 5, data);
  REQUIRE(clients.size() == 4);
  int noisy = 0;
  for (const auto& c : clients) {
    CHECK(c.size() == 30);
    if (c.noise_type != ClientNoiseType::clean) noisy++;
  }
  CHECK(noisy == 2);  // round(phi * K)
  CHECK(static_cast<int>(data.test.size()) == 30);
}

TEST_CASE("experiment runner writes the full output tree") {
  const std::string out = "test_experiment_out";
  fs::remove_all(out);
  const RunConfig cfg = tiny_config(out);

  const ExperimentResult res = run_experiment(cfg, true, nullptr, true);

  REQUIRE(res.per_seed.size() == 1);
  const SeedRunResult& run = res.per_seed[0];
  CHECK(run.seed == 5);
  REQUIRE(run.reports.size() == 6);

  // summary invariants
  double acc = 0.0;
  for (const auto& r : run.reports) acc += r.test_accuracy;
  CHECK(run.summary.last10_mean_acc == doctest::Approx(acc / 6.0));  // < 10 rounds
  CHECK(run.summary.config_hash == config_hash(cfg));
  CHECK(run.estimated_ratios.size() == run.true_ratios.size());
  CHECK(!run.estimated_ratios.empty());  // sniffing covered at least one client
  if (!std::isnan(run.summary.pearson_r)) {
    CHECK(run.summary.pearson_r >= -1.0);
    CHECK(run.summary.pearson_r <= 1.0);
  }

  // across-seed aggregate with one seed
  CHECK(res.mean_last10 == run.summary.last10_mean_acc);
  CHECK(std::isnan(res.std_last10));

  // file tree
  CHECK(slurp(out + "/status.txt") == "status = ok\nseeds_completed = 5\n");
  const std::string rounds = slurp(out + "/seed_5/rounds.csv");
  CHECK(line_count(rounds) == 7);  // header + 6 rounds
  const std::string clients = slurp(out + "/seed_5/clients.csv");
  CHECK(line_count(clients) == 1 + 6 * 4);
  CHECK(line_count(slurp(out + "/seed_5/summary.csv")) == 2);
  CHECK(line_count(slurp(out + "/summary.csv")) == 2);
  const std::string dataset = slurp(out + "/seed_5/dataset.csv");
  CHECK(line_count(dataset) == 1 + 120);

  SUBCASE("same config, byte-identical outputs") {
    const std::string summary = slurp(out + "/seed_5/summary.csv");
    const std::string aggregate = slurp(out + "/summary.csv");
    run_experiment(cfg, true, nullptr, true);
    CHECK(slurp(out + "/seed_5/rounds.csv") == rounds);
    CHECK(slurp(out + "/seed_5/clients.csv") == clients);
    CHECK(slurp(out + "/seed_5/summary.csv") == summary);
    CHECK(slurp(out + "/summary.csv") == aggregate);
    CHECK(slurp(out + "/seed_5/dataset.csv") == dataset);
  }

  fs::remove_all(out);
}

TEST_CASE("experiment runner refuses invalid configs before writing anything") {
  RunConfig cfg = tiny_config("test_experiment_invalid");
  cfg.protocol.sample_ratio = 0.0;
  CHECK_THROWS_AS(run_experiment(cfg, true, nullptr), ConfigError);
  CHECK_FALSE(fs::exists("test_experiment_invalid"));
}

TEST_CASE("progress stream narrates per-seed results") {
  RunConfig cfg = tiny_config("unused2");
  cfg.protocol.rounds = 2;
  cfg.protocol.sniff_rounds = 1;
  cfg.protocol.distill_start = 1;
  std::ostringstream progress;
  run_experiment(cfg, false, &progress);
  const std::string text = progress.str();
  CHECK(text.find("seed 5: running 2 rounds") != std::string::npos);
  CHECK(text.find("last10 acc = ") != std::string::npos);
}
