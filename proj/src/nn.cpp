#include "fedgr/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fedgr/rng.hpp"

namespace fedgr {

namespace {

void check_dims(const std::vector<int>& dims) {
  if (dims.size() < 2) throw std::invalid_argument("model needs at least one layer");
  for (int d : dims) {
    if (d <= 0) throw std::invalid_argument("layer widths must be positive");
  }
}

// log-softmax into out (out may alias nothing); returns logsumexp offset-free
void log_softmax(const double* v, int n, double* out) {
  double mx = v[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, v[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::exp(v[i] - mx);
  const double lse = mx + std::log(sum);
  for (int i = 0; i < n; ++i) out[i] = v[i] - lse;
}

void softmax_into(const double* v, int n, double* out) {
  log_softmax(v, n, out);
  for (int i = 0; i < n; ++i) out[i] = std::exp(out[i]);
}

}  // namespace

int ModelParams::param_count() const {
  int n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += weights[l].rows * weights[l].cols;
    n += static_cast<int>(biases[l].size());
  }
  return n;
}

ModelParams make_mlp(const std::vector<int>& dims, std::uint64_t seed) {
  check_dims(dims);
  ModelParams p;
  p.dims = dims;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const bool head = l + 2 == dims.size();
    Mat w(fan_out, fan_in);
    // He-normal hidden layers; zero head so the untrained model emits zero
    // logits (uniform softmax) regardless of input scale — first-contact
    // losses are then ln(C) for every sample instead of init-lottery noise
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (int r = 0; r < fan_out; ++r) {
      double* row = w.row(r);
      for (int c = 0; c < fan_in; ++c) row[c] = head ? 0.0 : rng.normal(0.0, std_dev);
    }
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(fan_out, 0.0);
  }
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z;
  z.dims = p.dims;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    z.weights.emplace_back(p.weights[l].rows, p.weights[l].cols);
    z.biases.emplace_back(p.biases[l].size(), 0.0);
  }
  return z;
}

namespace {
void check_same_shape(const ModelParams& a, const ModelParams& b, const char* op) {
  if (a.dims != b.dims)
    throw std::invalid_argument(std::string(op) + ": parameter shapes differ");
}
}  // namespace

void add_scaled(ModelParams& dst, const ModelParams& src, double alpha) {
  check_same_shape(dst, src, "add_scaled");
  for (std::size_t l = 0; l < dst.weights.size(); ++l) {
    axpy(alpha, src.weights[l].data.data(), dst.weights[l].data.data(),
         static_cast<int>(dst.weights[l].data.size()));
    axpy(alpha, src.biases[l].data(), dst.biases[l].data(),
         static_cast<int>(dst.biases[l].size()));
  }
}

void blend(ModelParams& dst, const ModelParams& src, double gamma) {
  check_same_shape(dst, src, "blend");
  for (std::size_t l = 0; l < dst.weights.size(); ++l) {
    auto& dw = dst.weights[l].data;
    const auto& sw = src.weights[l].data;
    for (std::size_t i = 0; i < dw.size(); ++i)
      dw[i] = gamma * dw[i] + (1.0 - gamma) * sw[i];
    auto& db = dst.biases[l];
    const auto& sb = src.biases[l];
    for (std::size_t i = 0; i < db.size(); ++i)
      db[i] = gamma * db[i] + (1.0 - gamma) * sb[i];
  }
}

void scale(ModelParams& p, double alpha) {
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    for (double& v : p.weights[l].data) v *= alpha;
    for (double& v : p.biases[l]) v *= alpha;
  }
}

namespace {

// out = act(in * W^T + b); relu toggles rectification
void layer_forward(const Mat& in, const Mat& w, const std::vector<double>& b,
                   bool relu, Mat& out) {
  out = Mat(in.rows, w.rows);
  for (int i = 0; i < in.rows; ++i) {
    const double* x = in.row(i);
    double* o = out.row(i);
    for (int r = 0; r < w.rows; ++r) {
      double v = b[r] + dot(w.row(r), x, w.cols);
      o[r] = relu && v < 0.0 ? 0.0 : v;
    }
  }
}

void check_input(const ModelParams& p, const Mat& inputs) {
  if (inputs.cols != p.input_dim())
    throw std::invalid_argument("forward: input width does not match model");
}

}  // namespace

BatchTrace forward_batch(const ModelParams& p, const Mat& inputs) {
  check_input(p, inputs);
  BatchTrace t;
  const int layers = p.layer_count();
  t.acts.resize(layers + 1);
  t.acts[0] = inputs;
  for (int l = 0; l < layers; ++l) {
    layer_forward(t.acts[l], p.weights[l], p.biases[l], l + 1 < layers,
                  t.acts[l + 1]);
  }
  return t;
}

Mat forward_logits(const ModelParams& p, const Mat& inputs) {
  check_input(p, inputs);
  Mat cur = inputs;
  Mat next;
  const int layers = p.layer_count();
  for (int l = 0; l < layers; ++l) {
    layer_forward(cur, p.weights[l], p.biases[l], l + 1 < layers, next);
    std::swap(cur, next);
  }
  return cur;
}

Mat forward_repr(const ModelParams& p, const Mat& inputs) {
  check_input(p, inputs);
  Mat cur = inputs;
  Mat next;
  const int layers = p.layer_count();
  for (int l = 0; l + 1 < layers; ++l) {
    layer_forward(cur, p.weights[l], p.biases[l], true, next);
    std::swap(cur, next);
  }
  return cur;
}

ForwardOutput forward(const ModelParams& p, const std::vector<double>& x) {
  Mat in(1, static_cast<int>(x.size()));
  std::copy(x.begin(), x.end(), in.row(0));
  BatchTrace t = forward_batch(p, in);
  ForwardOutput out;
  const Mat& r = t.repr();
  out.representation.assign(r.row(0), r.row(0) + r.cols);
  const Mat& z = t.logits();
  out.logits.assign(z.row(0), z.row(0) + z.cols);
  return out;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  std::vector<double> out(logits.size());
  softmax_into(logits.data(), static_cast<int>(logits.size()), out.data());
  return out;
}

std::vector<double> softened_softmax(const std::vector<double>& logits, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("softened_softmax: tau must be positive");
  std::vector<double> scaled(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / tau;
  return softmax(scaled);
}

double cross_entropy(const std::vector<double>& logits,
                     const std::vector<double>& soft_target) {
  if (logits.size() != soft_target.size() || logits.empty())
    throw std::invalid_argument("cross_entropy: size mismatch");
  std::vector<double> ls(logits.size());
  log_softmax(logits.data(), static_cast<int>(logits.size()), ls.data());
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) loss -= soft_target[i] * ls[i];
  return loss;
}

double cross_entropy_onehot(const std::vector<double>& logits, int label) {
  if (label < 0 || label >= static_cast<int>(logits.size()))
    throw std::invalid_argument("cross_entropy_onehot: label out of range");
  std::vector<double> ls(logits.size());
  log_softmax(logits.data(), static_cast<int>(logits.size()), ls.data());
  return -ls[static_cast<std::size_t>(label)];
}

double kl_divergence_softened(const std::vector<double>& teacher_logits,
                              const std::vector<double>& student_logits,
                              double tau) {
  if (tau <= 0.0)
    throw std::invalid_argument("kl_divergence_softened: tau must be positive");
  if (teacher_logits.size() != student_logits.size() || teacher_logits.empty())
    throw std::invalid_argument("kl_divergence_softened: size mismatch");
  const int n = static_cast<int>(teacher_logits.size());
  std::vector<double> lt(n), ls(n), scaled(n);
  for (int i = 0; i < n; ++i) scaled[i] = teacher_logits[i] / tau;
  log_softmax(scaled.data(), n, lt.data());
  for (int i = 0; i < n; ++i) scaled[i] = student_logits[i] / tau;
  log_softmax(scaled.data(), n, ls.data());
  double kl = 0.0;
  for (int i = 0; i < n; ++i) kl += std::exp(lt[i]) * (lt[i] - ls[i]);
  return std::max(kl, 0.0);  // clamp the odd -1e-17 from rounding
}

namespace {

void check_batch(const ModelParams& p, const TrainBatch& batch,
                 const LossWeights& w) {
  if (batch.inputs.rows <= 0) throw std::invalid_argument("empty batch");
  check_input(p, batch.inputs);
  if (batch.targets.rows != batch.inputs.rows ||
      batch.targets.cols != p.output_dim())
    throw std::invalid_argument("target shape does not match batch/model");
  if (w.lambda_distill != 0.0 &&
      (batch.teacher_logits.rows != batch.inputs.rows ||
       batch.teacher_logits.cols != p.output_dim()))
    throw std::invalid_argument("teacher logits shape does not match batch");
  if (w.lambda_repr != 0.0 &&
      (batch.teacher_repr.rows != batch.inputs.rows ||
       batch.teacher_repr.cols != p.repr_dim()))
    throw std::invalid_argument("teacher representation shape does not match batch");
  if (w.tau <= 0.0) throw std::invalid_argument("tau must be positive");
}

// Shared forward + loss; when grads != nullptr also runs the backward pass.
LossBreakdown evaluate(const ModelParams& p, const TrainBatch& batch,
                       const LossWeights& w, GradientBuffer* grads) {
  check_batch(p, batch, w);
  const int B = batch.inputs.rows;
  const int C = p.output_dim();
  const int L = p.layer_count();
  const double inv_b = 1.0 / B;

  BatchTrace trace = forward_batch(p, batch.inputs);
  const Mat& logits = trace.logits();

  LossBreakdown loss;
  // delta = dL/d(logits); filled per sample below
  Mat delta(B, C);
  std::vector<double> buf(static_cast<std::size_t>(C)), buf2(static_cast<std::size_t>(C));

  for (int i = 0; i < B; ++i) {
    const double* z = logits.row(i);
    const double* t = batch.targets.row(i);
    double tsum = 0.0;
    for (int c = 0; c < C; ++c) tsum += t[c];

    log_softmax(z, C, buf.data());
    for (int c = 0; c < C; ++c) loss.supervised -= t[c] * buf[c];
    double* d = delta.row(i);
    for (int c = 0; c < C; ++c) d[c] = inv_b * (std::exp(buf[c]) * tsum - t[c]);

    if (w.lambda_distill != 0.0) {
      const double* tz = batch.teacher_logits.row(i);
      for (int c = 0; c < C; ++c) buf[c] = z[c] / w.tau;
      log_softmax(buf.data(), C, buf.data());
      for (int c = 0; c < C; ++c) buf2[c] = tz[c] / w.tau;
      log_softmax(buf2.data(), C, buf2.data());
      const double coef = inv_b * w.lambda_distill / w.tau;
      for (int c = 0; c < C; ++c) {
        const double pt = std::exp(buf2[c]);
        loss.distill += pt * (buf2[c] - buf[c]) * inv_b;
        d[c] += coef * (std::exp(buf[c]) - pt);
      }
    }
  }
  loss.supervised *= inv_b;

  // Representation KL is evaluated on the input of the final layer.
  Mat repr_grad;
  if (w.lambda_repr != 0.0) {
    const Mat& r = trace.repr();
    const int D = r.cols;
    repr_grad = Mat(B, D);
    std::vector<double> rb(static_cast<std::size_t>(D)), rb2(static_cast<std::size_t>(D));
    const double coef = inv_b * w.lambda_repr / w.tau;
    for (int i = 0; i < B; ++i) {
      const double* rv = r.row(i);
      const double* tv = batch.teacher_repr.row(i);
      for (int c = 0; c < D; ++c) rb[c] = rv[c] / w.tau;
      log_softmax(rb.data(), D, rb.data());
      for (int c = 0; c < D; ++c) rb2[c] = tv[c] / w.tau;
      log_softmax(rb2.data(), D, rb2.data());
      double* g = repr_grad.row(i);
      for (int c = 0; c < D; ++c) {
        const double pt = std::exp(rb2[c]);
        loss.repr += pt * (rb2[c] - rb[c]) * inv_b;
        g[c] = coef * (std::exp(rb[c]) - pt);
      }
    }
  }

  loss.total = loss.supervised + w.lambda_distill * loss.distill +
               w.lambda_repr * loss.repr;

  if (grads == nullptr) return loss;

  *grads = zeros_like(p);
  Mat cur = std::move(delta);
  for (int l = L - 1; l >= 0; --l) {
    const Mat& a = trace.acts[static_cast<std::size_t>(l)];
    Mat& gw = grads->weights[static_cast<std::size_t>(l)];
    std::vector<double>& gb = grads->biases[static_cast<std::size_t>(l)];
    for (int i = 0; i < B; ++i) {
      const double* d = cur.row(i);
      const double* av = a.row(i);
      for (int r = 0; r < gw.rows; ++r) {
        if (d[r] != 0.0) axpy(d[r], av, gw.row(r), gw.cols);
        gb[static_cast<std::size_t>(r)] += d[r];
      }
    }
    if (l == 0) break;

    // propagate to the post-activation of layer l-1
    const Mat& wmat = p.weights[static_cast<std::size_t>(l)];
    Mat prev(B, wmat.cols);
    for (int i = 0; i < B; ++i) {
      const double* d = cur.row(i);
      double* pv = prev.row(i);
      for (int r = 0; r < wmat.rows; ++r) {
        if (d[r] != 0.0) axpy(d[r], wmat.row(r), pv, wmat.cols);
      }
    }
    if (l == L - 1 && !repr_grad.empty()) {
      for (std::size_t i = 0; i < prev.data.size(); ++i)
        prev.data[i] += repr_grad.data[i];
    }
    // ReLU mask: a > 0 iff the pre-activation was positive
    const Mat& mask = trace.acts[static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < prev.data.size(); ++i) {
      if (mask.data[i] <= 0.0) prev.data[i] = 0.0;
    }
    cur = std::move(prev);
  }
  return loss;
}

}  // namespace

LossBreakdown composite_loss(const ModelParams& p, const TrainBatch& batch,
                             const LossWeights& w) {
  return evaluate(p, batch, w, nullptr);
}

LossBreakdown backward(const ModelParams& p, const TrainBatch& batch,
                       const LossWeights& w, GradientBuffer& grads) {
  return evaluate(p, batch, w, &grads);
}

void sgd_step(ModelParams& p, const GradientBuffer& grads, GradientBuffer& velocity,
              double lr, double momentum, double weight_decay) {
  check_same_shape(p, grads, "sgd_step");
  check_same_shape(p, velocity, "sgd_step");
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    auto& pw = p.weights[l].data;
    const auto& gw = grads.weights[l].data;
    auto& vw = velocity.weights[l].data;
    for (std::size_t i = 0; i < pw.size(); ++i) {
      vw[i] = momentum * vw[i] + gw[i] + weight_decay * pw[i];
      pw[i] -= lr * vw[i];
    }
    auto& pb = p.biases[l];
    const auto& gb = grads.biases[l];
    auto& vb = velocity.biases[l];
    for (std::size_t i = 0; i < pb.size(); ++i) {
      vb[i] = momentum * vb[i] + gb[i] + weight_decay * pb[i];
      pb[i] -= lr * vb[i];
    }
  }
}

int argmax(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("argmax: empty input");
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

}  // namespace fedgr
