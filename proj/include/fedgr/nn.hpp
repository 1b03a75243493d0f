#pragma once

#include <cstdint>
#include <vector>

#include "fedgr/mat.hpp"

namespace fedgr {

// Fully-connected ReLU network. dims = [d_in, hidden..., n_classes];
// weights[l] is [dims[l+1] x dims[l]], biases[l] is [dims[l+1]]. The final
// layer is linear (logits). The "representation" of an input is the vector fed
// into the final layer, i.e. the post-ReLU output of the penultimate layer,
// or the input itself for a single-layer net.
struct ModelParams {
  std::vector<int> dims;
  std::vector<Mat> weights;
  std::vector<std::vector<double>> biases;

  int layer_count() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return dims.front(); }
  int output_dim() const { return dims.back(); }
  int repr_dim() const { return dims[dims.size() - 2]; }
  int param_count() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.dims == b.dims && a.weights == b.weights && a.biases == b.biases;
  }
};

// Gradients and SGD velocity share the parameter layout.
using GradientBuffer = ModelParams;

// He-normal weights (std = sqrt(2/fan_in)), zero biases. Draw order is fixed
// (layer, then row, then column) so a seed pins every weight.
ModelParams make_mlp(const std::vector<int>& dims, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& p);

// dst += alpha * src (shapes must match)
void add_scaled(ModelParams& dst, const ModelParams& src, double alpha);
// dst = gamma * dst + (1 - gamma) * src
void blend(ModelParams& dst, const ModelParams& src, double gamma);
void scale(ModelParams& p, double alpha);

struct ForwardOutput {
  std::vector<double> representation;
  std::vector<double> logits;
};

ForwardOutput forward(const ModelParams& p, const std::vector<double>& x);

// Batch forward keeping every post-activation (acts[0] = inputs,
// acts[layer_count] = logits); what backward needs to re-walk the net.
struct BatchTrace {
  std::vector<Mat> acts;
  const Mat& logits() const { return acts.back(); }
  const Mat& repr() const { return acts[acts.size() - 2]; }
};

BatchTrace forward_batch(const ModelParams& p, const Mat& inputs);
// Teacher-side helpers: no trace kept.
Mat forward_logits(const ModelParams& p, const Mat& inputs);
Mat forward_repr(const ModelParams& p, const Mat& inputs);

std::vector<double> softmax(const std::vector<double>& logits);
// softmax(logits / tau); tau must be positive
std::vector<double> softened_softmax(const std::vector<double>& logits, double tau);

// -sum_c target[c] * log softmax(logits)[c]; an all-zero target gives 0
double cross_entropy(const std::vector<double>& logits,
                     const std::vector<double>& soft_target);
double cross_entropy_onehot(const std::vector<double>& logits, int label);

// KL(softmax(teacher/tau) || softmax(student/tau)), temperature applied to
// logits before the softmax
double kl_divergence_softened(const std::vector<double>& teacher_logits,
                              const std::vector<double>& student_logits,
                              double tau);

// One training batch. targets rows are soft labels with sums in [0, 1]
// (all-zero rows are masked samples). teacher_logits / teacher_repr are
// optional (empty Mat = term absent); they are plain numbers, so no gradient
// ever flows into a teacher.
struct TrainBatch {
  Mat inputs;
  Mat targets;
  Mat teacher_logits;
  Mat teacher_repr;
};

struct LossWeights {
  double lambda_distill = 0.0;  // weight on teacher-logit KL
  double lambda_repr = 0.0;     // weight on representation KL
  double tau = 1.0;
};

struct LossBreakdown {
  double total = 0.0;
  double supervised = 0.0;
  double distill = 0.0;
  double repr = 0.0;
};

// Batch-mean composite loss, forward only (finite-difference oracle target).
LossBreakdown composite_loss(const ModelParams& p, const TrainBatch& batch,
                             const LossWeights& w);
// Same loss, plus exact gradients written into grads (overwritten, not
// accumulated).
LossBreakdown backward(const ModelParams& p, const TrainBatch& batch,
                       const LossWeights& w, GradientBuffer& grads);

// v <- momentum * v + g + weight_decay * p;  p <- p - lr * v
void sgd_step(ModelParams& p, const GradientBuffer& grads, GradientBuffer& velocity,
              double lr, double momentum, double weight_decay);

// argmax with ties broken toward the lowest index
int argmax(const std::vector<double>& v);

}  // namespace fedgr
