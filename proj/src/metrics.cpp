#include "fedgr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace fedgr {

namespace {

Mat stack_features(const std::vector<const Sample*>& samples, int d) {
  Mat m(static_cast<int>(samples.size()), d);
  for (std::size_t i = 0; i < samples.size(); ++i)
    std::copy(samples[i]->features.begin(), samples[i]->features.end(),
              m.row(static_cast<int>(i)));
  return m;
}

int row_argmax(const Mat& m, int r) {
  const double* v = m.row(r);
  int best = 0;
  for (int c = 1; c < m.cols; ++c)
    if (v[c] > v[best]) best = c;
  return best;
}

}  // namespace

double test_accuracy(const ModelParams& params, const std::vector<Sample>& test_set) {
  if (test_set.empty()) throw std::invalid_argument("test_accuracy: empty test set");
  std::vector<const Sample*> ptrs;
  ptrs.reserve(test_set.size());
  for (const Sample& s : test_set) ptrs.push_back(&s);
  const Mat logits = forward_logits(params, stack_features(ptrs, params.input_dim()));
  int correct = 0;
  for (int i = 0; i < logits.rows; ++i)
    if (row_argmax(logits, i) == test_set[static_cast<std::size_t>(i)].true_label) correct++;
  return static_cast<double>(correct) / static_cast<double>(test_set.size());
}

double memorization_fraction(const ModelParams& params,
                             const std::vector<ClientDataset>& clients) {
  std::vector<const Sample*> noisy;
  for (const ClientDataset& c : clients)
    for (const Sample& s : c.samples)
      if (s.given_label != s.true_label) noisy.push_back(&s);
  if (noisy.empty()) return 0.0;
  const Mat logits = forward_logits(params, stack_features(noisy, params.input_dim()));
  int memorized = 0;
  for (int i = 0; i < logits.rows; ++i)
    if (row_argmax(logits, i) == noisy[static_cast<std::size_t>(i)]->given_label) memorized++;
  return static_cast<double>(memorized) / static_cast<double>(noisy.size());
}

SelectionScore selection_f1(const ClientSieve& sieve, const ClientDataset& client) {
  if (static_cast<int>(sieve.is_clean.size()) != client.size())
    throw std::invalid_argument("selection_f1: sieve/client size mismatch");
  int tp = 0, fp = 0, fn = 0;
  for (int i = 0; i < client.size(); ++i) {
    const Sample& s = client.samples[static_cast<std::size_t>(i)];
    const bool truly_clean = s.given_label == s.true_label;
    const bool flagged_clean = sieve.is_clean[static_cast<std::size_t>(i)] != 0;
    if (flagged_clean && truly_clean) tp++;
    else if (flagged_clean && !truly_clean) fp++;
    else if (!flagged_clean && truly_clean) fn++;
  }
  SelectionScore s;
  s.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  s.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  s.f1 = s.precision + s.recall > 0.0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (a.size() != b.size()) throw std::invalid_argument("pearson: size mismatch");
  const std::size_t n = a.size();
  if (n < 2) return nan;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return nan;
  return sab / std::sqrt(saa * sbb);
}

double last10_mean_accuracy(const std::vector<RoundReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("last10_mean_accuracy: no reports");
  const std::size_t take = std::min<std::size_t>(10, reports.size());
  double sum = 0.0;
  for (std::size_t i = reports.size() - take; i < reports.size(); ++i)
    sum += reports[i].test_accuracy;
  return sum / static_cast<double>(take);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

namespace {

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

}  // namespace

void write_rounds_csv(const std::string& path, const std::vector<RoundReport>& reports) {
  std::ofstream out = open_csv(path);
  out << "t,test_accuracy,memorization_fraction,n_participants\n";
  for (const RoundReport& r : reports) {
    out << r.round << ',' << format_double(r.test_accuracy) << ','
        << format_double(r.memorization_fraction) << ',' << r.participants.size()
        << "\n";
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

void write_clients_csv(const std::string& path, const std::vector<RoundReport>& reports) {
  std::ofstream out = open_csv(path);
  out << "t,client_id,r_k_est,rho_true,precision,recall,f1,refined_fraction\n";
  for (const RoundReport& r : reports) {
    for (const ClientRoundStats& c : r.client_stats) {
      out << r.round << ',' << c.client_id << ',' << format_double(c.r_est) << ','
          << format_double(c.rho_true) << ',' << format_double(c.precision) << ','
          << format_double(c.recall) << ',' << format_double(c.f1) << ','
          << format_double(c.refined_fraction) << "\n";
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

void write_summary_csv(const std::string& path, const SeedSummary& s) {
  std::ofstream out = open_csv(path);
  out << "last10_mean_acc,pearson,final_memorization_fraction,seed,config_hash\n";
  out << format_double(s.last10_mean_acc) << ',' << format_double(s.pearson_r) << ','
      << format_double(s.final_memorization_fraction) << ',' << s.seed << ','
      << s.config_hash << "\n";
  if (!out) throw std::runtime_error("write failed for " + path);
}

void write_aggregate_csv(const std::string& path, const std::vector<SeedSummary>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("write_aggregate_csv: no seeds");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto mean_of = [&](auto get) {
    double s = 0.0;
    for (const SeedSummary& x : seeds) s += get(x);
    return s / static_cast<double>(seeds.size());
  };
  const double acc_mean = mean_of([](const SeedSummary& s) { return s.last10_mean_acc; });
  double acc_std = nan;
  if (seeds.size() >= 2) {
    double ss = 0.0;
    for (const SeedSummary& s : seeds) {
      const double d = s.last10_mean_acc - acc_mean;
      ss += d * d;
    }
    acc_std = std::sqrt(ss / static_cast<double>(seeds.size() - 1));
  }
  const double mem_mean =
      mean_of([](const SeedSummary& s) { return s.final_memorization_fraction; });
  const double pear_mean = mean_of([](const SeedSummary& s) { return s.pearson_r; });

  std::ofstream out = open_csv(path);
  out << "n_seeds,seeds,last10_mean_acc_mean,last10_mean_acc_std,pearson_mean,"
         "final_memorization_fraction_mean,config_hash\n";
  out << seeds.size() << ',';
  for (std::size_t i = 0; i < seeds.size(); ++i)
    out << (i ? ";" : "") << seeds[i].seed;
  out << ',' << format_double(acc_mean) << ',' << format_double(acc_std) << ','
      << format_double(pear_mean) << ',' << format_double(mem_mean) << ','
      << seeds.front().config_hash << "\n";
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace fedgr
