#include "otzsl/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace otzsl::model {

namespace {

struct MlpCache {
  Matrix pre;     // rows x hidden, before ReLU
  Matrix hidden;  // rows x hidden, after ReLU
  Matrix out;     // rows x output
};

MlpCache forward_cached(const MlpParams& net, const Matrix& x) {
  if (x.rows() > 0 && x.cols() != net.input_dim)
    throw std::invalid_argument("mlp_forward: input has " + std::to_string(x.cols()) +
                                " columns, network expects " + std::to_string(net.input_dim));
  const std::size_t n = x.rows();
  MlpCache c{Matrix(n, net.hidden_dim), Matrix(n, net.hidden_dim), Matrix(n, net.output_dim)};
  for (std::size_t r = 0; r < n; ++r) {
    const auto in = x.row(r);
    auto pre = c.pre.row(r);
    auto h = c.hidden.row(r);
    for (std::size_t j = 0; j < net.hidden_dim; ++j) {
      pre[j] = dot(net.w1.row(j), in) + net.b1[j];
      h[j] = pre[j] > 0.0 ? pre[j] : 0.0;
    }
    auto out = c.out.row(r);
    for (std::size_t k = 0; k < net.output_dim; ++k) out[k] = dot(net.w2.row(k), h) + net.b2[k];
  }
  return c;
}

// Accumulates parameter gradients into `grad` and, when requested, writes the
// gradient with respect to the inputs. ReLU'(0) is taken as 0.
void backward_cached(const MlpParams& net, const Matrix& x, const MlpCache& c,
                     const Matrix& d_out, MlpParams& grad, Matrix* d_in) {
  const std::size_t n = x.rows();
  if (d_in) *d_in = Matrix(n, net.input_dim);
  Vector d_pre(net.hidden_dim);
  for (std::size_t r = 0; r < n; ++r) {
    const auto dy = d_out.row(r);
    const auto h = c.hidden.row(r);
    for (std::size_t k = 0; k < net.output_dim; ++k) {
      if (dy[k] == 0.0) continue;
      auto gw = grad.w2.row(k);
      for (std::size_t j = 0; j < net.hidden_dim; ++j) gw[j] += dy[k] * h[j];
      grad.b2[k] += dy[k];
    }
    const auto pre = c.pre.row(r);
    for (std::size_t j = 0; j < net.hidden_dim; ++j) {
      double s = 0.0;
      if (pre[j] > 0.0)
        for (std::size_t k = 0; k < net.output_dim; ++k) s += dy[k] * net.w2(k, j);
      d_pre[j] = s;
    }
    const auto in = x.row(r);
    for (std::size_t j = 0; j < net.hidden_dim; ++j) {
      if (d_pre[j] == 0.0) continue;
      auto gw = grad.w1.row(j);
      for (std::size_t i = 0; i < net.input_dim; ++i) gw[i] += d_pre[j] * in[i];
      grad.b1[j] += d_pre[j];
    }
    if (d_in) {
      auto di = d_in->row(r);
      for (std::size_t j = 0; j < net.hidden_dim; ++j) {
        if (d_pre[j] == 0.0) continue;
        const auto w = net.w1.row(j);
        for (std::size_t i = 0; i < net.input_dim; ++i) di[i] += d_pre[j] * w[i];
      }
    }
  }
}

Matrix generator_inputs(const GeneratorParams& g, const AttributeMatrix& attributes,
                        const SynthInputs& inputs) {
  const std::size_t d = attributes.dim();
  if (g.attribute_dim() != d || g.net.input_dim != 2 * d)
    throw std::invalid_argument("generator input does not match attribute dimension");
  if (inputs.noise.rows() != inputs.size() || (inputs.size() > 0 && inputs.noise.cols() != d))
    throw std::invalid_argument("synthetic noise shape does not match the class list");
  Matrix x(inputs.size(), 2 * d);
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    const std::size_t cls = inputs.classes[r];
    if (cls >= attributes.class_count())
      throw std::invalid_argument("synthetic class index " + std::to_string(cls) +
                                  " outside the attribute table");
    const auto a = attributes.attribute(cls);
    const auto z = inputs.noise.row(r);
    auto row = x.row(r);
    std::copy(a.begin(), a.end(), row.begin());
    std::copy(z.begin(), z.end(), row.begin() + static_cast<std::ptrdiff_t>(d));
  }
  return x;
}

// Unit-norm copy of every class attribute.
Matrix normalized_attributes(const AttributeMatrix& attributes) {
  Matrix out = attributes.values();
  for (std::size_t c = 0; c < out.rows(); ++c) {
    auto r = out.row(c);
    const double nr = norm(r);
    for (double& v : r) v /= nr;
  }
  return out;
}

struct SampleNll {
  double loss = 0.0;
  bool clamped = false;
};

// -log p(target | y) under the NCA softmax; writes d loss / d y into grad_y
// when non-null.
SampleNll nca_nll(std::span<const double> y, const Matrix& unit_attrs, std::size_t target,
                  double gamma_sq, std::span<double> grad_y) {
  const double ny = norm(y);
  if (!(ny > 0.0)) throw std::invalid_argument("NCA: predicted attribute vector has zero norm");
  const std::size_t classes = unit_attrs.rows();
  Vector cosines(classes), logits(classes);
  for (std::size_t i = 0; i < classes; ++i) {
    cosines[i] = dot(y, unit_attrs.row(i)) / ny;
    logits[i] = -gamma_sq * (1.0 - cosines[i]);
  }
  const double lse = log_sum_exp(logits);
  const double log_p = logits[target] - lse;
  SampleNll out;
  if (log_p < std::log(kProbabilityFloor)) {
    out.loss = -std::log(kProbabilityFloor);
    out.clamped = true;
    std::fill(grad_y.begin(), grad_y.end(), 0.0);
    return out;
  }
  out.loss = -log_p;
  if (grad_y.empty()) return out;
  std::fill(grad_y.begin(), grad_y.end(), 0.0);
  for (std::size_t i = 0; i < classes; ++i) {
    const double coeff =
        (std::exp(logits[i] - lse) - (i == target ? 1.0 : 0.0)) * gamma_sq / ny;
    if (coeff == 0.0) continue;
    const auto a = unit_attrs.row(i);
    for (std::size_t k = 0; k < y.size(); ++k) grad_y[k] += coeff * (a[k] - cosines[i] * y[k] / ny);
  }
  return out;
}

void check_block(std::span<const double> v, const char* name) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericalError(std::string("backward: non-finite gradient in ") + name);
}

ObjectiveValue run_objective(const ObjectiveBatch& batch, const GeneratorParams& g,
                             const PredictorParams& f, const AttributeMatrix& attributes,
                             double beta, Gradients* grads) {
  const LabeledFeatures& real = batch.real;
  const SynthInputs& synth = batch.synth;
  const Matrix& plan = batch.plan;
  g.validate();
  f.validate();
  if (!(beta >= 0.0)) throw std::invalid_argument("objective: beta must be non-negative");
  if (synth.size() == 0) throw std::invalid_argument("objective: empty synthetic batch");
  if (real.features.rows() != real.labels.size())
    throw std::invalid_argument("objective: real features and labels differ in length");
  if (plan.rows() != real.size() || plan.cols() > synth.size())
    throw std::invalid_argument("objective: plan shape does not match the batches");
  if (f.net.input_dim != g.feature_dim() || f.net.output_dim != attributes.dim())
    throw std::invalid_argument("objective: predictor shape does not match generator/attributes");

  const bool want_grad = grads != nullptr;
  if (want_grad) {
    grads->generator = MlpParams(g.net.input_dim, g.net.hidden_dim, g.net.output_dim);
    grads->predictor = MlpParams(f.net.input_dim, f.net.hidden_dim, f.net.output_dim);
  }

  const Matrix g_in = generator_inputs(g, attributes, synth);
  const MlpCache g_cache = forward_cached(g.net, g_in);
  const Matrix& generated = g_cache.out;
  Matrix d_generated(generated.rows(), generated.cols());

  ObjectiveValue value;

  // Transport term over the coupled prefix of the synthetic batch.
  const std::size_t coupled = plan.cols();
  if (coupled > 0 && real.size() > 0) {
    Matrix prefix(coupled, generated.cols());
    std::copy_n(generated.values().begin(), coupled * generated.cols(), prefix.values().begin());
    const ot::CostMatrix cost = ot::build_cost_matrix(real.features, prefix);
    value.transport_cost = ot::transport_cost(plan, cost);
    if (want_grad) {
      Vector real_norm(real.size());
      for (std::size_t n = 0; n < real.size(); ++n) real_norm[n] = norm(real.features.row(n));
      for (std::size_t m = 0; m < coupled; ++m) {
        const auto xm = generated.row(m);
        const double nm = norm(xm);
        auto dx = d_generated.row(m);
        for (std::size_t n = 0; n < real.size(); ++n) {
          const double t = plan(n, m);
          if (t == 0.0) continue;
          const double cs = 1.0 - cost(n, m);
          const auto xn = real.features.row(n);
          for (std::size_t k = 0; k < dx.size(); ++k)
            dx[k] -= t * (xn[k] / real_norm[n] - cs * xm[k] / nm) / nm;
        }
      }
    }
  }

  const Matrix unit_attrs = normalized_attributes(attributes);
  std::size_t labeled = 0;
  for (auto l : real.labels) labeled += l != kUnlabeled ? 1 : 0;

  // Real term: predictor only.
  double real_term = 0.0;
  if (labeled > 0) {
    const MlpCache f_cache = forward_cached(f.net, real.features);
    Matrix d_out(real.size(), f.net.output_dim);
    const double w = 1.0 / static_cast<double>(labeled);
    for (std::size_t n = 0; n < real.size(); ++n) {
      const std::size_t cls = real.labels[n];
      if (cls == kUnlabeled) continue;
      if (cls >= attributes.class_count())
        throw std::invalid_argument("objective: real label outside the attribute table");
      auto dy = d_out.row(n);
      const auto r = nca_nll(f_cache.out.row(n), unit_attrs, cls, f.gamma_sq,
                             want_grad ? dy : std::span<double>{});
      real_term += w * r.loss;
      value.clamped += r.clamped ? 1 : 0;
      for (double& v : dy) v *= beta * w;
    }
    if (want_grad) backward_cached(f.net, real.features, f_cache, d_out, grads->predictor, nullptr);
  }

  // Synthetic term: predictor and, through its input, the generator.
  double synth_term = 0.0;
  {
    const MlpCache f_cache = forward_cached(f.net, generated);
    Matrix d_out(synth.size(), f.net.output_dim);
    const double w = 1.0 / static_cast<double>(synth.size());
    for (std::size_t m = 0; m < synth.size(); ++m) {
      auto dy = d_out.row(m);
      const auto r = nca_nll(f_cache.out.row(m), unit_attrs, synth.classes[m], f.gamma_sq,
                             want_grad ? dy : std::span<double>{});
      synth_term += w * r.loss;
      value.clamped += r.clamped ? 1 : 0;
      for (double& v : dy) v *= beta * w;
    }
    if (want_grad) {
      Matrix d_in;
      backward_cached(f.net, generated, f_cache, d_out, grads->predictor, &d_in);
      auto acc = d_generated.values();
      const auto add = d_in.values();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += add[i];
    }
  }

  if (want_grad) {
    backward_cached(g.net, g_in, g_cache, d_generated, grads->generator, nullptr);
    static constexpr const char* kNames[2][4] = {
        {"generator.W1", "generator.b1", "generator.W2", "generator.b2"},
        {"predictor.W1", "predictor.b1", "predictor.W2", "predictor.b2"}};
    const auto gb = std::as_const(grads->generator).blocks();
    const auto fb = std::as_const(grads->predictor).blocks();
    for (std::size_t i = 0; i < 4; ++i) {
      check_block(gb[i], kNames[0][i]);
      check_block(fb[i], kNames[1][i]);
    }
  }

  value.regularizer = real_term + synth_term;
  value.total = value.transport_cost + beta * value.regularizer;
  return value;
}

// Little-endian byte stream helpers for checkpoints.
class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> v) {
    for (double x : v) f64(x);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}
  std::uint64_t uint(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint(8)); }
  void f64s(std::span<double> v) {
    for (double& x : v) x = f64();
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw std::runtime_error("checkpoint: truncated data");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kMagic = "OTZSLCKP";
constexpr std::uint32_t kVersion = 1;
// Guards allocation when reading untrusted dimensions.
constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 24;

}  // namespace

MlpParams::MlpParams(std::size_t input, std::size_t hidden, std::size_t output)
    : input_dim(input),
      hidden_dim(hidden),
      output_dim(output),
      w1(hidden, input),
      b1(hidden, 0.0),
      w2(output, hidden),
      b2(output, 0.0) {}

void MlpParams::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || output_dim == 0)
    throw std::invalid_argument("MlpParams: dimensions must be positive");
  if (w1.rows() != hidden_dim || w1.cols() != input_dim || b1.size() != hidden_dim ||
      w2.rows() != output_dim || w2.cols() != hidden_dim || b2.size() != output_dim)
    throw std::invalid_argument("MlpParams: inconsistent shapes");
  for (auto b : blocks())
    for (double v : b)
      if (!std::isfinite(v)) throw NumericalError("MlpParams: non-finite weight");
}

std::size_t MlpParams::parameter_count() const {
  return w1.size() + b1.size() + w2.size() + b2.size();
}

std::array<std::span<double>, 4> MlpParams::blocks() {
  return {w1.values(), std::span<double>(b1), w2.values(), std::span<double>(b2)};
}

std::array<std::span<const double>, 4> MlpParams::blocks() const {
  return {w1.values(), std::span<const double>(b1), w2.values(), std::span<const double>(b2)};
}

void GeneratorParams::validate() const {
  net.validate();
  if (net.input_dim % 2 != 0)
    throw std::invalid_argument("GeneratorParams: input must be [attribute; noise] of equal halves");
}

void PredictorParams::validate() const {
  net.validate();
  if (!(gamma_sq > 0.0) || !std::isfinite(gamma_sq))
    throw std::invalid_argument("PredictorParams: gamma_sq must be positive");
}

AdamState::AdamState(std::size_t parameter_count, double lr)
    : learning_rate(lr), first_moment(parameter_count, 0.0), second_moment(parameter_count, 0.0) {}

MlpParams init_params(std::size_t input, std::size_t hidden, std::size_t output, SeededRng& rng) {
  if (input == 0 || hidden == 0 || output == 0)
    throw std::invalid_argument("init_params: dimensions must be positive");
  MlpParams p(input, hidden, output);
  auto fill = [&](Matrix& w, std::size_t fan_in, std::size_t fan_out) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : w.values()) v = s * (2.0 * rng.uniform_open() - 1.0);
  };
  fill(p.w1, input, hidden);
  fill(p.w2, hidden, output);
  return p;
}

GeneratorParams init_generator(std::size_t attribute_dim, std::size_t hidden_dim,
                               std::size_t feature_dim, SeededRng& rng) {
  return GeneratorParams{init_params(2 * attribute_dim, hidden_dim, feature_dim, rng)};
}

PredictorParams init_predictor(std::size_t feature_dim, std::size_t hidden_dim,
                               std::size_t attribute_dim, double gamma_sq, SeededRng& rng) {
  PredictorParams f{init_params(feature_dim, hidden_dim, attribute_dim, rng), gamma_sq};
  f.validate();
  return f;
}

Matrix mlp_forward(const MlpParams& net, const Matrix& inputs) {
  return forward_cached(net, inputs).out;
}

Vector generator_forward(const GeneratorParams& g, std::span<const double> attribute,
                         std::span<const double> noise) {
  if (attribute.size() != noise.size() || 2 * attribute.size() != g.net.input_dim)
    throw std::invalid_argument("generator_forward: attribute/noise dimensions do not match g");
  Matrix x(1, g.net.input_dim);
  auto row = x.row(0);
  std::copy(attribute.begin(), attribute.end(), row.begin());
  std::copy(noise.begin(), noise.end(), row.begin() + static_cast<std::ptrdiff_t>(attribute.size()));
  const Matrix out = mlp_forward(g.net, x);
  return Vector(out.values().begin(), out.values().end());
}

Matrix generate(const GeneratorParams& g, const AttributeMatrix& attributes,
                const SynthInputs& inputs) {
  return mlp_forward(g.net, generator_inputs(g, attributes, inputs));
}

Vector nca_probabilities(std::span<const double> f_out, const AttributeMatrix& attributes,
                         double gamma_sq) {
  if (f_out.size() != attributes.dim())
    throw std::invalid_argument("nca_probabilities: predicted vector has the wrong dimension");
  Matrix logits(1, attributes.class_count());
  for (std::size_t i = 0; i < attributes.class_count(); ++i)
    logits(0, i) = -gamma_sq * cosine_distance(f_out, attributes.attribute(i));
  const Matrix p = softmax_rows(logits);
  return Vector(p.values().begin(), p.values().end());
}

double nca_probability(std::span<const double> f_out, const AttributeMatrix& attributes,
                       std::size_t target_class, double gamma_sq) {
  if (target_class >= attributes.class_count())
    throw std::invalid_argument("nca_probability: class index out of range");
  return nca_probabilities(f_out, attributes, gamma_sq)[target_class];
}

RegularizerValue regularizer_loss(const LabeledFeatures& real, const LabeledFeatures& synth,
                                  const PredictorParams& f, const AttributeMatrix& attributes) {
  f.validate();
  const Matrix unit_attrs = normalized_attributes(attributes);
  RegularizerValue out;
  auto term = [&](const LabeledFeatures& batch) {
    if (batch.features.rows() != batch.labels.size())
      throw std::invalid_argument("regularizer_loss: features and labels differ in length");
    const Matrix pred = mlp_forward(f.net, batch.features);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const std::size_t cls = batch.labels[i];
      if (cls == kUnlabeled) continue;
      if (cls >= attributes.class_count())
        throw std::invalid_argument("regularizer_loss: class index out of range");
      const auto r = nca_nll(pred.row(i), unit_attrs, cls, f.gamma_sq, {});
      sum += r.loss;
      out.clamped += r.clamped ? 1 : 0;
      ++count;
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
  };
  if (real.size() == 0 && synth.size() == 0)
    throw std::invalid_argument("regularizer_loss: both batches are empty");
  out.loss = term(real) + term(synth);
  return out;
}

double total_loss(const Matrix& plan, const ot::CostMatrix& synth_cost, double regularizer,
                  double beta) {
  if (!(beta >= 0.0)) throw std::invalid_argument("total_loss: beta must be non-negative");
  return ot::transport_cost(plan, synth_cost) + beta * regularizer;
}

ObjectiveValue objective(const ObjectiveBatch& batch, const GeneratorParams& g,
                         const PredictorParams& f, const AttributeMatrix& attributes,
                         double beta) {
  return run_objective(batch, g, f, attributes, beta, nullptr);
}

ObjectiveValue backward(const ObjectiveBatch& batch, const GeneratorParams& g,
                        const PredictorParams& f, const AttributeMatrix& attributes, double beta,
                        Gradients& grads) {
  return run_objective(batch, g, f, attributes, beta, &grads);
}

void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: block count mismatch");
  std::size_t total = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size())
      throw std::invalid_argument("adam_step: block " + std::to_string(b) + " size mismatch");
    total += params[b].size();
  }
  if (state.first_moment.size() != total || state.second_moment.size() != total)
    throw std::invalid_argument("adam_step: optimizer state does not match parameter count");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  std::size_t k = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    const auto g = grads[b];
    for (std::size_t i = 0; i < p.size(); ++i, ++k) {
      double& m = state.first_moment[k];
      double& v = state.second_moment[k];
      m = state.beta1 * m + (1.0 - state.beta1) * g[i];
      v = state.beta2 * v + (1.0 - state.beta2) * g[i] * g[i];
      p[i] -= state.learning_rate * (m / c1) / (std::sqrt(v / c2) + state.epsilon);
    }
  }
}

void adam_step(GeneratorParams& g, PredictorParams& f, const Gradients& grads, AdamState& state) {
  std::vector<std::span<double>> params;
  std::vector<std::span<const double>> gs;
  for (auto b : g.net.blocks()) params.push_back(b);
  for (auto b : f.net.blocks()) params.push_back(b);
  for (auto b : grads.generator.blocks()) gs.push_back(b);
  for (auto b : grads.predictor.blocks()) gs.push_back(b);
  adam_step(params, gs, state);
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kVersion);
  const MlpParams& g = ckpt.generator.net;
  const MlpParams& f = ckpt.predictor.net;
  for (std::size_t d : {g.input_dim, g.hidden_dim, g.output_dim, f.input_dim, f.hidden_dim,
                        f.output_dim})
    w.u64(d);
  for (auto b : g.blocks()) w.f64s(b);
  for (auto b : f.blocks()) w.f64s(b);
  w.f64(ckpt.predictor.gamma_sq);
  const AdamState& a = ckpt.adam;
  w.f64(a.learning_rate);
  w.f64(a.beta1);
  w.f64(a.beta2);
  w.f64(a.epsilon);
  w.u64(a.step);
  w.u64(a.first_moment.size());
  w.f64s(a.first_moment);
  w.f64s(a.second_moment);
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.raw(kMagic.size()) != kMagic) throw std::runtime_error("checkpoint: bad magic");
  const auto version = r.uint(4);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  std::uint64_t dims[6];
  for (auto& d : dims) {
    d = r.uint(8);
    if (d == 0 || d > kMaxDim) throw std::runtime_error("checkpoint: implausible dimension");
  }
  Checkpoint c;
  c.generator.net = MlpParams(dims[0], dims[1], dims[2]);
  c.predictor.net = MlpParams(dims[3], dims[4], dims[5]);
  for (auto b : c.generator.net.blocks()) r.f64s(b);
  for (auto b : c.predictor.net.blocks()) r.f64s(b);
  c.predictor.gamma_sq = r.f64();
  c.adam.learning_rate = r.f64();
  c.adam.beta1 = r.f64();
  c.adam.beta2 = r.f64();
  c.adam.epsilon = r.f64();
  c.adam.step = r.uint(8);
  const auto moments = r.uint(8);
  if (moments != c.generator.net.parameter_count() + c.predictor.net.parameter_count())
    throw std::runtime_error("checkpoint: optimizer state size does not match the networks");
  c.adam.first_moment.resize(moments);
  c.adam.second_moment.resize(moments);
  r.f64s(c.adam.first_moment);
  r.f64s(c.adam.second_moment);
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
  c.generator.validate();
  c.predictor.validate();
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const std::string bytes = encode_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace otzsl::model
