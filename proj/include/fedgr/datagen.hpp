#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedgr/rng.hpp"

namespace fedgr {

struct Sample {
  std::vector<double> features;
  int given_label = 0;  // possibly corrupted; what clients train on
  int true_label = 0;   // ground truth; evaluation only
};

enum class ClientNoiseType { clean, symmetric, asymmetric };

struct ClientDataset {
  int client_id = -1;
  std::vector<Sample> samples;
  // Realized corruption fraction and type. Evaluation-only: the training path
  // never reads these.
  double true_noise_ratio = 0.0;
  ClientNoiseType noise_type = ClientNoiseType::clean;

  int size() const { return static_cast<int>(samples.size()); }
};

struct DataConfig {
  int n_classes = 10;
  int n_train = 5000;
  int n_test = 1000;
  int d_in = 16;
  double class_separation = 8.0;
};

struct SyntheticData {
  std::vector<Sample> train;
  std::vector<Sample> test;
  int n_classes = 0;
  int d_in = 0;
};

// Gaussian blobs: one unit-norm direction per class scaled by
// class_separation, unit isotropic noise around it. Class counts are balanced
// (first n mod C classes get the extra sample). Labels start clean
// (given == true).
SyntheticData generate_dataset(const DataConfig& cfg, std::uint64_t seed);

// Shuffle and deal into contiguous shards of size n/K, the first n mod K
// shards one larger.
std::vector<ClientDataset> partition_iid(const std::vector<Sample>& samples,
                                         int n_clients, std::uint64_t seed);

// Per class, split its samples across clients by proportions drawn from
// Dirichlet(alpha * 1_K) (largest-remainder rounding so counts are exact).
// If any client ends up empty the whole partition is redrawn with seed+1,
// up to 100 attempts.
std::vector<ClientDataset> partition_dirichlet(const std::vector<Sample>& samples,
                                               int n_clients, int n_classes,
                                               double alpha, std::uint64_t seed);

enum class NoiseKind { symmetric, asymmetric, mixed };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double phi = 1.0;      // fraction of clients made noisy
  double rho_min = 0.5;  // per-client corruption rate ~ U(rho_min, rho_max)
  double rho_max = 1.0;
  int n_classes = 10;
};

// Marks round(phi*K) clients (uniform without replacement) noisy and corrupts
// exactly round(rho_k * n_k) of each one's given labels. Symmetric noise picks
// a uniform wrong class; asymmetric maps true -> (true+1) mod C; mixed flips a
// fair coin per noisy client. Features and true labels are never touched.
void inject_noise(std::vector<ClientDataset>& clients, const NoiseSpec& spec,
                  std::uint64_t seed);

enum class AugmentStrength { weak, strong };

struct AugmentParams {
  double sigma_weak = 0.05;
  double sigma_strong = 0.15;
};

// weak: x + sigma_weak * N(0, I).
// strong: rescale a random 30% feature subset elementwise by U(0.5, 1.5),
// then add sigma_strong * N(0, I).
std::vector<double> augment(const std::vector<double>& x, AugmentStrength strength,
                            const AugmentParams& params, Rng& rng);

// Flat CSV: client_id,sample_id,true_label,given_label,f_0..f_{d-1}.
// noise_type / true_noise_ratio are not serialized; load_csv recomputes the
// realized ratio from the labels and leaves noise_type at clean.
void dump_csv(const std::vector<ClientDataset>& clients, const std::string& path);
std::vector<ClientDataset> load_csv(const std::string& path);

}  // namespace fedgr
