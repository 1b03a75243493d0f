#include "fedgr/client_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fedgr/errors.hpp"

namespace fedgr {

std::vector<double> compute_ledger_losses(const ClientDataset& data,
                                          const ModelParams& global) {
  const int n = data.size();
  if (n == 0) throw std::invalid_argument("compute_ledger_losses: empty client");
  const int d = global.input_dim();
  Mat inputs(n, d);
  for (int i = 0; i < n; ++i) {
    const auto& f = data.samples[static_cast<std::size_t>(i)].features;
    if (static_cast<int>(f.size()) != d)
      throw std::invalid_argument("compute_ledger_losses: feature width mismatch");
    std::copy(f.begin(), f.end(), inputs.row(i));
  }
  const Mat logits = forward_logits(global, inputs);
  std::vector<double> losses(static_cast<std::size_t>(n));
  std::vector<double> row(static_cast<std::size_t>(logits.cols));
  for (int i = 0; i < n; ++i) {
    std::copy(logits.row(i), logits.row(i) + logits.cols, row.begin());
    losses[static_cast<std::size_t>(i)] =
        cross_entropy_onehot(row, data.samples[static_cast<std::size_t>(i)].given_label);
  }
  return losses;
}

RefinedLabel pseudo_label(const ModelParams& global, const std::vector<double>& x_weak,
                          double epsilon) {
  const ForwardOutput out = forward(global, x_weak);
  const std::vector<double> probs = softmax(out.logits);
  const int j = argmax(probs);
  RefinedLabel r;
  r.label.assign(probs.size(), 0.0);
  if (probs[static_cast<std::size_t>(j)] > epsilon) {
    r.label[static_cast<std::size_t>(j)] = 1.0;
    r.provenance = LabelProvenance::pseudo;
  } else {
    r.provenance = LabelProvenance::masked;
  }
  return r;
}

RefinedLabel refine_one(const std::vector<double>& given_onehot,
                        const RefinedLabel& pseudo, double q, bool is_clean,
                        double r_k, double beta) {
  if (pseudo.label.size() != given_onehot.size())
    throw std::invalid_argument("refine_one: label width mismatch");
  RefinedLabel out;
  if (r_k < beta) {
    if (is_clean) {
      out.label = given_onehot;
      out.provenance = LabelProvenance::given;
      return out;
    }
    out.label.resize(given_onehot.size());
    for (std::size_t c = 0; c < given_onehot.size(); ++c)
      out.label[c] = q * given_onehot[c] + (1.0 - q) * pseudo.label[c];
    double sum = 0.0;
    for (double v : out.label) sum += v;
    out.provenance = sum > 0.0 ? LabelProvenance::blended : LabelProvenance::masked;
    return out;
  }
  // untrusted client: nothing it reported is taken at face value
  out.label = pseudo.label;
  out.provenance = pseudo.provenance;
  return out;
}

RefinementResult refine_labels(const ClientState& client, const ModelParams& global,
                               const TrainerConfig& cfg, Rng& pseudo_rng) {
  if (!client.sieve_view)
    throw ProtocolError("refine_labels: client " + std::to_string(client.client_id) +
                        " has no sieve");
  const SieveView& view = *client.sieve_view;
  const int n = client.data.size();
  const bool trusted = view.estimated_noise_ratio < cfg.beta;
  if (trusted && static_cast<int>(view.q.size()) != n)
    throw ProtocolError("refine_labels: trusted client " +
                        std::to_string(client.client_id) +
                        " lacks per-sample posteriors");

  const int n_classes = global.output_dim();
  RefinementResult res;
  res.labels.reserve(static_cast<std::size_t>(n));
  int usable = 0;
  std::vector<double> onehot(static_cast<std::size_t>(n_classes), 0.0);
  for (int i = 0; i < n; ++i) {
    const Sample& s = client.data.samples[static_cast<std::size_t>(i)];
    const std::vector<double> x_weak =
        augment(s.features, AugmentStrength::weak, cfg.aug, pseudo_rng);
    const RefinedLabel pse = pseudo_label(global, x_weak, cfg.epsilon);
    std::fill(onehot.begin(), onehot.end(), 0.0);
    onehot[static_cast<std::size_t>(s.given_label)] = 1.0;
    const double q = trusted ? view.q[static_cast<std::size_t>(i)] : 0.0;
    const bool clean = trusted && view.is_clean[static_cast<std::size_t>(i)] != 0;
    RefinedLabel ref = refine_one(onehot, pse, q, clean, view.estimated_noise_ratio,
                                  cfg.beta);
    switch (ref.provenance) {
      case LabelProvenance::given: res.branches.given++; break;
      case LabelProvenance::blended: res.branches.blended++; break;
      case LabelProvenance::pseudo: res.branches.pseudo++; break;
      case LabelProvenance::masked: res.branches.masked++; break;
    }
    if (ref.provenance != LabelProvenance::masked) usable++;
    res.labels.push_back(std::move(ref));
  }
  res.refined_fraction = n > 0 ? static_cast<double>(usable) / n : 0.0;
  return res;
}

void revise_ema(ClientState& client, const ModelParams& global, int round,
                int distill_start, const TrainerConfig& cfg) {
  if (round < distill_start) return;
  if (!client.ema_params) {
    client.ema_params = global;  // bootstrap on first activation
    return;
  }
  double gamma_g = 0.0;
  if (client.sieve_view) {
    if (client.sieve_view->estimated_noise_ratio < cfg.beta) {
      gamma_g = cfg.kappa;
    } else if (client.refined_fraction >= cfg.mu) {
      gamma_g = cfg.kappa;
    }
  }
  blend(*client.ema_params, global, gamma_g);
}

void ema_step(ModelParams& ema, const ModelParams& local, double gamma_l) {
  blend(ema, local, gamma_l);
}

namespace {

// Targets plus bookkeeping for one local round.
struct TargetPlan {
  Mat targets;  // [n x C]
  double refined_fraction = 0.0;
  bool refinement_ran = false;
  BranchCounts branches;
};

TargetPlan build_targets(ClientState& client, const ModelParams& global,
                         const TrainerConfig& cfg, const LocalContext& ctx) {
  const int n = client.data.size();
  const int n_classes = global.output_dim();
  TargetPlan plan;
  plan.targets = Mat(n, n_classes);

  const bool phase1 = ctx.round < ctx.sniff_rounds;
  if (ctx.method == Method::fedavg || phase1) {
    for (int i = 0; i < n; ++i) {
      plan.targets(i, client.data.samples[static_cast<std::size_t>(i)].given_label) = 1.0;
    }
    plan.branches.given = n;
    return plan;
  }

  plan.refinement_ran = true;
  if (ctx.ablation.disable_lr) {
    // clean-set training: keep given labels where the sieve says clean, drop
    // the rest (no pseudo-labels, no blending)
    const SieveView* view = client.sieve_view ? &*client.sieve_view : nullptr;
    int kept = 0;
    for (int i = 0; i < n; ++i) {
      const bool clean = view && static_cast<int>(view->is_clean.size()) == n &&
                         view->is_clean[static_cast<std::size_t>(i)] != 0;
      if (clean) {
        plan.targets(i, client.data.samples[static_cast<std::size_t>(i)].given_label) = 1.0;
        kept++;
      }
    }
    plan.branches.given = kept;
    plan.branches.masked = n - kept;
    plan.refined_fraction = n > 0 ? static_cast<double>(kept) / n : 0.0;
  } else {
    Rng pseudo_rng(derive_seed(ctx.run_seed, StreamPurpose::pseudo,
                               static_cast<std::uint64_t>(client.client_id),
                               static_cast<std::uint64_t>(ctx.round)));
    RefinementResult res = refine_labels(client, global, cfg, pseudo_rng);
    for (int i = 0; i < n; ++i) {
      const auto& label = res.labels[static_cast<std::size_t>(i)].label;
      std::copy(label.begin(), label.end(), plan.targets.row(i));
    }
    plan.branches = res.branches;
    plan.refined_fraction = res.refined_fraction;
  }
  client.refined_fraction = plan.refined_fraction;
  client.has_refined = true;
  return plan;
}

}  // namespace

LocalUpdateResult local_update(ClientState& client, const ModelParams& global,
                               const TrainerConfig& cfg, const LocalContext& ctx) {
  const int n = client.data.size();
  if (n == 0) throw std::invalid_argument("local_update: empty client");
  const bool fedgr = ctx.method == Method::fedgr;
  const bool phase1 = ctx.round < ctx.sniff_rounds;

  LocalUpdateResult result;

  // 1. sniffing-phase loss report, evaluated with the broadcast model.
  // With sieving decentralized (disable_cs) the observations come from the
  // client's own trained model instead, so this moves after the local epochs.
  const bool local_observer = ctx.ablation.disable_cs;
  if (fedgr && phase1 && !local_observer)
    result.ledger_losses = compute_ledger_losses(client.data, global);

  // 2. EMA maintenance at model download
  if (fedgr) revise_ema(client, global, ctx.round, ctx.distill_start, cfg);

  // 3. training targets
  TargetPlan plan = build_targets(client, global, cfg, ctx);
  result.refined_fraction = plan.refined_fraction;
  result.refinement_ran = plan.refinement_ran;
  result.branches = plan.branches;

  // 4. local epochs of mini-batch SGD from a copy of the global model
  result.params = global;
  const bool ema_active = fedgr && ctx.round >= ctx.distill_start;
  const bool use_b = ema_active && !ctx.ablation.disable_b && cfg.lambda_b != 0.0;
  const bool use_r = fedgr && !ctx.ablation.disable_r && cfg.lambda_r != 0.0;
  const AugmentStrength student_strength = ctx.ablation.disable_strong_aug
                                               ? AugmentStrength::weak
                                               : AugmentStrength::strong;

  Rng shuffle_rng(derive_seed(ctx.run_seed, StreamPurpose::shuffle,
                              static_cast<std::uint64_t>(client.client_id),
                              static_cast<std::uint64_t>(ctx.round)));
  Rng weak_rng(derive_seed(ctx.run_seed, StreamPurpose::weak_aug,
                           static_cast<std::uint64_t>(client.client_id),
                           static_cast<std::uint64_t>(ctx.round)));
  Rng strong_rng(derive_seed(ctx.run_seed, StreamPurpose::strong_aug,
                             static_cast<std::uint64_t>(client.client_id),
                             static_cast<std::uint64_t>(ctx.round)));

  const int d = global.input_dim();
  const int n_classes = global.output_dim();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  GradientBuffer velocity = zeros_like(global);
  GradientBuffer grads = zeros_like(global);
  LossWeights lw;
  lw.lambda_distill = use_b ? cfg.lambda_b : 0.0;
  lw.lambda_repr = use_r ? cfg.lambda_r : 0.0;
  lw.tau = cfg.tau;

  double loss_sum = 0.0;
  int steps = 0;
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bs = std::min(cfg.batch_size, n - start);
      TrainBatch batch;
      batch.inputs = Mat(bs, d);
      batch.targets = Mat(bs, n_classes);
      Mat weak_inputs;
      if (use_b || use_r) weak_inputs = Mat(bs, d);
      for (int b = 0; b < bs; ++b) {
        const int i = order[static_cast<std::size_t>(start + b)];
        const Sample& s = client.data.samples[static_cast<std::size_t>(i)];
        const std::vector<double> xs = augment(s.features, student_strength, cfg.aug, strong_rng);
        std::copy(xs.begin(), xs.end(), batch.inputs.row(b));
        std::copy(plan.targets.row(i), plan.targets.row(i) + n_classes,
                  batch.targets.row(b));
        if (use_b || use_r) {
          // one weak view per sample per step, shared by both teachers
          const std::vector<double> xw =
              augment(s.features, AugmentStrength::weak, cfg.aug, weak_rng);
          std::copy(xw.begin(), xw.end(), weak_inputs.row(b));
        }
      }
      if (use_b) batch.teacher_logits = forward_logits(*client.ema_params, weak_inputs);
      if (use_r) batch.teacher_repr = forward_repr(global, weak_inputs);

      const LossBreakdown loss = backward(result.params, batch, lw, grads);
      sgd_step(result.params, grads, velocity, cfg.lr, cfg.momentum, cfg.weight_decay);
      if (ema_active) ema_step(*client.ema_params, result.params, cfg.gamma_l);
      loss_sum += loss.total;
      steps++;
    }
  }
  result.mean_train_loss = steps > 0 ? loss_sum / steps : 0.0;

  if (fedgr && phase1 && local_observer)
    result.ledger_losses = compute_ledger_losses(client.data, result.params);

  return result;
}

}  // namespace fedgr
