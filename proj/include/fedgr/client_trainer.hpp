#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedgr/datagen.hpp"
#include "fedgr/nn.hpp"
#include "fedgr/noise_model.hpp"

namespace fedgr {

enum class Method { fedgr, fedavg };

// Each flag removes exactly one ingredient; everything else stays identical.
struct AblationFlags {
  bool disable_cs = false;          // per-client mixture fits instead of pooled
  bool disable_lr = false;          // phase II trains only the estimated clean set
  bool disable_b = false;           // no EMA-teacher distillation term
  bool disable_r = false;           // no representation alignment term
  bool disable_strong_aug = false;  // student sees weak-strength views
};

struct TrainerConfig {
  double lambda_b = 1.0;  // weight of the EMA-teacher distillation term
  double lambda_r = 0.1;  // weight of the representation alignment term
  double epsilon = 0.9;   // pseudo-label confidence threshold (strict >)
  double beta = 0.8;      // estimated-noise-ratio threshold for trusting a client
  double tau = 0.5;       // softening temperature for both KL terms
  double gamma_l = 0.99;  // per-step EMA decay toward the local model
  double kappa = 0.9;     // EMA retention when revising from the global model
  double mu = 0.5;        // refined-fraction gate for untrusted clients
  double lr = 0.01;
  double momentum = 0.5;
  double weight_decay = 5e-4;
  int batch_size = 32;
  int local_epochs = 10;
  AugmentParams aug;
};

// The slice of a server sieve a client acts on. q/is_clean may be empty when
// the server knows nothing about this client's samples (then only the
// estimated_noise_ratio is meaningful).
struct SieveView {
  double estimated_noise_ratio = 0.0;
  std::vector<double> q;
  std::vector<std::uint8_t> is_clean;
};

struct ClientState {
  int client_id = -1;
  ClientDataset data;
  std::optional<ModelParams> ema_params;
  std::optional<SieveView> sieve_view;
  // fraction of samples with a usable (nonzero) target in the most recent
  // refinement; drives the EMA revise rule for untrusted clients
  double refined_fraction = 0.0;
  bool has_refined = false;
};

enum class LabelProvenance { given, blended, pseudo, masked };

struct RefinedLabel {
  std::vector<double> label;  // soft label, sum in [0, 1]; all-zero = masked
  LabelProvenance provenance = LabelProvenance::masked;
};

// Per-sample losses of the broadcast global model on the raw (unaugmented)
// inputs against the given labels; what the sniffing-phase ledger records.
std::vector<double> compute_ledger_losses(const ClientDataset& data,
                                          const ModelParams& global);

// One-hot argmax of the global model's prediction on a weak view if its
// confidence strictly exceeds epsilon, else an all-zero (masked) label.
RefinedLabel pseudo_label(const ModelParams& global, const std::vector<double>& x_weak,
                          double epsilon);

// The pure three-branch rule:
//   trusted client (r_k < beta), clean sample   -> keep the given label
//   trusted client, flagged sample              -> q * given + (1-q) * pseudo
//   untrusted client (r_k >= beta)              -> pseudo label (or masked)
RefinedLabel refine_one(const std::vector<double>& given_onehot,
                        const RefinedLabel& pseudo, double q, bool is_clean,
                        double r_k, double beta);

struct BranchCounts {
  int given = 0;    // trusted + clean
  int blended = 0;  // trusted + flagged, nonzero target
  int pseudo = 0;   // untrusted, confident pseudo-label
  int masked = 0;   // all-zero target (dropped from the loss)
};

struct RefinementResult {
  std::vector<RefinedLabel> labels;
  double refined_fraction = 0.0;  // share with a nonzero target
  BranchCounts branches;
};

// Applies the rule to every sample, drawing one weak view per sample from
// pseudo_rng for the pseudo-label pass. Requires a sieve view; per-sample
// posteriors are only required when the client is trusted (r_k < beta).
// Throws ProtocolError when the needed sieve information is missing.
RefinementResult refine_labels(const ClientState& client, const ModelParams& global,
                               const TrainerConfig& cfg, Rng& pseudo_rng);

// EMA revise at model download, active from round delta on: bootstrap the EMA
// to the global model on first activation, after that
//   w_ema <- gamma_g * w_ema + (1 - gamma_g) * w_g
// with gamma_g = kappa for trusted clients, kappa for untrusted clients whose
// last refined fraction reached mu, and 0 otherwise (full overwrite). A client
// with no sieve information counts as gamma_g = 0.
void revise_ema(ClientState& client, const ModelParams& global, int round,
                int distill_start, const TrainerConfig& cfg);

// w_ema <- gamma_l * w_ema + (1 - gamma_l) * w_local
void ema_step(ModelParams& ema, const ModelParams& local, double gamma_l);

struct LocalContext {
  int round = 0;          // t, 0-based
  int sniff_rounds = 30;  // alpha: rounds [0, alpha) are the sniffing phase
  int distill_start = 30; // delta: EMA teacher activates at t >= delta
  Method method = Method::fedgr;
  AblationFlags ablation;
  std::uint64_t run_seed = 0;
};

struct LocalUpdateResult {
  ModelParams params;
  // present (non-empty) only when the sniffing phase recorded losses
  std::vector<double> ledger_losses;
  double refined_fraction = 0.0;
  bool refinement_ran = false;
  BranchCounts branches;
  double mean_train_loss = 0.0;
};

// One full local round: ledger losses (phase I), EMA revise, target building
// (given labels in phase I, refinement in phase II), then local_epochs of
// mini-batch SGD from a copy of the global model. The baseline method trains
// plain cross-entropy on the given labels and skips every robustness step.
LocalUpdateResult local_update(ClientState& client, const ModelParams& global,
                               const TrainerConfig& cfg, const LocalContext& ctx);

}  // namespace fedgr
