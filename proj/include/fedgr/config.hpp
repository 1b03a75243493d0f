#pragma once

#include <string>
#include <vector>

#include "fedgr/client_trainer.hpp"
#include "fedgr/datagen.hpp"
#include "fedgr/errors.hpp"
#include "fedgr/protocol.hpp"

namespace fedgr {

enum class PartitionKind { iid, dirichlet };

// Everything a run needs, INI-style on disk:
//
//   [run]      method, seeds, out_dir
//   [model]    hidden
//   [data]     n_classes, n_train, n_test, d_in, class_separation,
//              partition, alpha_dirichlet
//   [noise]    type, phi, rho_min, rho_max
//   [protocol] clients, sample_ratio, rounds, alpha, delta, drop_probability
//   [trainer]  lambda_b, lambda_r, epsilon, beta, tau, gamma_l, kappa, mu,
//              lr, momentum, weight_decay, batch_size, local_epochs,
//              sigma_weak, sigma_strong
//   [ablation] disable_cs, disable_lr, disable_b, disable_r,
//              disable_strong_aug
//
// Unknown sections/keys are errors; omitted keys keep these defaults.
struct RunConfig {
  Method method = Method::fedgr;
  std::vector<std::uint64_t> seeds = {1, 13, 42};
  std::string out_dir = "out";
  std::vector<int> hidden = {64, 64};
  PartitionKind partition = PartitionKind::iid;
  double alpha_dirichlet = 0.3;
  DataConfig data;
  NoiseSpec noise;
  ProtocolConfig protocol;
  TrainerConfig trainer;
  AblationFlags ablation;

  friend bool operator==(const RunConfig& a, const RunConfig& b);
};

// Throw ConfigError with a 1-based line number on parse problems.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Canonical form: every section and key in fixed order, doubles at full
// precision. parse_config_text(serialize_config(c)) reproduces c exactly.
std::string serialize_config(const RunConfig& cfg);

// Throws ConfigError naming the offending field.
void validate_config(const RunConfig& cfg);

// FNV-1a over the canonical serialization, 16 hex digits.
std::string config_hash(const RunConfig& cfg);

// [d_in, hidden..., n_classes]
std::vector<int> model_dims(const RunConfig& cfg);

}  // namespace fedgr
