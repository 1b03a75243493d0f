#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "fedgr/metrics.hpp"
#include "fedgr/nn.hpp"

using namespace fedgr;

namespace {

ModelParams diag_net(double s) {
  ModelParams p = make_mlp({2, 2}, 0);
  p.weights[0](0, 0) = s;
  p.weights[0](0, 1) = 0.0;
  p.weights[0](1, 0) = 0.0;
  p.weights[0](1, 1) = s;
  p.biases[0] = {0.0, 0.0};
  return p;
}

Sample make_sample(std::vector<double> x, int given, int truth) {
  Sample s;
  s.features = std::move(x);
  s.given_label = given;
  s.true_label = truth;
  return s;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("test accuracy counts argmax hits against the true labels") {
  const ModelParams net = diag_net(3.0);
  std::vector<Sample> tests = {
      make_sample({3.0, 0.0}, 0, 0),   // right
      make_sample({0.0, 3.0}, 1, 1),   // right
      make_sample({0.0, 3.0}, 0, 0),   // model says 1: wrong
      make_sample({-1.0, -2.0}, 0, 0), // logits (-3, -6): argmax 0, right
  };
  CHECK(test_accuracy(net, tests) == doctest::Approx(0.75));
  CHECK_THROWS_AS(test_accuracy(net, {}), std::invalid_argument);
}

TEST_CASE("memorization counts corrupted samples predicted as their wrong label") {
  const ModelParams net = diag_net(3.0);
  ClientDataset a;
  a.client_id = 0;
  a.samples = {
      make_sample({0.0, 3.0}, 1, 0),  // corrupted, predicted 1 == given: memorized
      make_sample({3.0, 0.0}, 1, 0),  // corrupted, predicted 0 != given
      make_sample({3.0, 0.0}, 0, 0),  // clean: not counted at all
  };
  ClientDataset b;
  b.client_id = 1;
  b.samples = {
      make_sample({0.0, 5.0}, 1, 0),  // corrupted, memorized
  };
  CHECK(memorization_fraction(net, {a, b}) == doctest::Approx(2.0 / 3.0));

  ClientDataset clean;
  clean.client_id = 0;
  clean.samples = {make_sample({3.0, 0.0}, 0, 0)};
  CHECK(memorization_fraction(net, {clean}) == 0.0);
  CHECK(memorization_fraction(net, {}) == 0.0);
}

TEST_CASE("selection quality against ground-truth cleanliness") {
  ClientDataset data;
  data.client_id = 0;
  data.samples = {
      make_sample({0.0, 0.0}, 0, 0),  // clean, flagged clean  -> tp
      make_sample({0.0, 0.0}, 1, 0),  // noisy, flagged clean  -> fp
      make_sample({0.0, 0.0}, 0, 0),  // clean, flagged noisy  -> fn
      make_sample({0.0, 0.0}, 1, 0),  // noisy, flagged noisy  -> tn
  };
  ClientSieve sieve;
  sieve.q = {0.9, 0.9, 0.1, 0.1};
  sieve.is_clean = {1, 1, 0, 0};

  const SelectionScore s = selection_f1(sieve, data);
  CHECK(s.precision == doctest::Approx(0.5));
  CHECK(s.recall == doctest::Approx(0.5));
  CHECK(s.f1 == doctest::Approx(0.5));

  SUBCASE("empty denominators give zeros, not NaN") {
    ClientSieve none;
    none.q = {0.1, 0.1};
    none.is_clean = {0, 0};
    ClientDataset all_noisy;
    all_noisy.client_id = 0;
    all_noisy.samples = {make_sample({0.0, 0.0}, 1, 0), make_sample({0.0, 0.0}, 1, 0)};
    const SelectionScore z = selection_f1(none, all_noisy);
    CHECK(z.precision == 0.0);
    CHECK(z.recall == 0.0);
    CHECK(z.f1 == 0.0);
  }

  SUBCASE("size mismatch throws") {
    ClientSieve wrong;
    wrong.is_clean = {1};
    CHECK_THROWS_AS(selection_f1(wrong, data), std::invalid_argument);
  }
}

TEST_CASE("pearson correlation") {
  CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3}, {-2, -4, -6}) == doctest::Approx(-1.0));
  CHECK(pearson({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(0.8));
  CHECK(std::isnan(pearson({1.0}, {2.0})));
  CHECK(std::isnan(pearson({}, {})));
  CHECK(std::isnan(pearson({1, 1, 1}, {1, 2, 3})));  // constant side
  CHECK_THROWS_AS(pearson({1, 2}, {1}), std::invalid_argument);
}

TEST_CASE("last-10 accuracy window") {
  std::vector<RoundReport> reports;
  for (int t = 0; t < 15; ++t) {
    RoundReport r;
    r.round = t;
    r.test_accuracy = t / 100.0;
    reports.push_back(r);
  }
  CHECK(last10_mean_accuracy(reports) == doctest::Approx(0.095));  // rounds 5..14

  reports.resize(4);
  CHECK(last10_mean_accuracy(reports) == doctest::Approx(0.015));  // all four
  CHECK_THROWS_AS(last10_mean_accuracy({}), std::invalid_argument);
}

TEST_CASE("csv cell formatting") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(2.0) == "2");
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0 / 3.0) == "0.3333333333");  // ten significant digits
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("csv writers: exact layout, nan sentinels, byte determinism") {
  const double nan = std::numeric_limits<double>::quiet_NaN();

  RoundReport r0;
  r0.round = 0;
  r0.test_accuracy = 0.25;
  r0.memorization_fraction = 0.0;
  r0.participants = {1, 3};
  ClientRoundStats c0;
  c0.client_id = 0;
  c0.r_est = nan;
  c0.rho_true = 0.5;
  c0.precision = c0.recall = c0.f1 = nan;
  c0.refined_fraction = nan;
  ClientRoundStats c1;
  c1.client_id = 1;
  c1.r_est = 0.4;
  c1.rho_true = 0.5;
  c1.precision = 0.9;
  c1.recall = 1.0;
  c1.f1 = 2.0 * 0.9 / 1.9;
  c1.refined_fraction = 0.75;
  r0.client_stats = {c0, c1};

  RoundReport r1 = r0;
  r1.round = 1;
  r1.test_accuracy = 0.625;
  r1.participants = {0};

  SUBCASE("rounds file") {
    const std::string path = "test_metrics_rounds.csv";
    write_rounds_csv(path, {r0, r1});
    CHECK(slurp(path) ==
          "t,test_accuracy,memorization_fraction,n_participants\n"
          "0,0.25,0,2\n"
          "1,0.625,0,1\n");
    std::remove(path.c_str());
  }

  SUBCASE("clients file carries nan sentinels") {
    const std::string path = "test_metrics_clients.csv";
    write_clients_csv(path, {r0});
    CHECK(slurp(path) ==
          "t,client_id,r_k_est,rho_true,precision,recall,f1,refined_fraction\n"
          "0,0,nan,0.5,nan,nan,nan,nan\n"
          "0,1,0.4,0.5,0.9,1,0.9473684211,0.75\n");
    std::remove(path.c_str());
  }

  SUBCASE("summary file") {
    SeedSummary s;
    s.seed = 42;
    s.last10_mean_acc = 0.875;
    s.pearson_r = 0.9375;
    s.final_memorization_fraction = 0.125;
    s.config_hash = "00c0ffee00c0ffee";
    const std::string path = "test_metrics_summary.csv";
    write_summary_csv(path, s);
    CHECK(slurp(path) ==
          "last10_mean_acc,pearson,final_memorization_fraction,seed,config_hash\n"
          "0.875,0.9375,0.125,42,00c0ffee00c0ffee\n");
    std::remove(path.c_str());
  }

  SUBCASE("aggregate file: mean, sample std, seed list") {
    SeedSummary s1;
    s1.seed = 1;
    s1.last10_mean_acc = 0.8;
    s1.pearson_r = 0.9;
    s1.final_memorization_fraction = 0.2;
    s1.config_hash = "beef";
    SeedSummary s2 = s1;
    s2.seed = 13;
    s2.last10_mean_acc = 0.9;
    s2.pearson_r = 1.0;
    s2.final_memorization_fraction = 0.1;

    const std::string path = "test_metrics_aggregate.csv";
    write_aggregate_csv(path, {s1, s2});
    const std::string text = slurp(path);
    CHECK(text ==
          "n_seeds,seeds,last10_mean_acc_mean,last10_mean_acc_std,pearson_mean,"
          "final_memorization_fraction_mean,config_hash\n"
          "2,1;13,0.85,0.07071067812,0.95,0.15,beef\n");

    // one seed: no sample std
    write_aggregate_csv(path, {s1});
    CHECK(slurp(path) ==
          "n_seeds,seeds,last10_mean_acc_mean,last10_mean_acc_std,pearson_mean,"
          "final_memorization_fraction_mean,config_hash\n"
          "1,1,0.8,nan,0.9,0.2,beef\n");

    CHECK_THROWS_AS(write_aggregate_csv(path, {}), std::invalid_argument);
    std::remove(path.c_str());
  }

  SUBCASE("same inputs, identical bytes") {
    const std::string pa = "test_metrics_a.csv", pb = "test_metrics_b.csv";
    write_clients_csv(pa, {r0, r1});
    write_clients_csv(pb, {r0, r1});
    CHECK(slurp(pa) == slurp(pb));
    std::remove(pa.c_str());
    std::remove(pb.c_str());
  }
}
