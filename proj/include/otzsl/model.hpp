#ifndef OTZSL_MODEL_HPP
#define OTZSL_MODEL_HPP

// Conditional feature generator g([a; z]) and attribute predictor f(x), both
// one-hidden-layer ReLU MLPs, together with the training objective
//
//   tr(T^T C_g) + beta * (NLL of real samples + NLL of synthetic samples)
//
// where C_g is the cosine cost between real features and generated ones and
// the NLL is the NCA softmax over cosine distances to every class attribute.
// Gradients are analytic; the plan T is a constant.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "otzsl/core.hpp"
#include "otzsl/dataset.hpp"
#include "otzsl/ot.hpp"

namespace otzsl::model {

struct MlpParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  Matrix w1;  // hidden x input
  Vector b1;  // hidden
  Matrix w2;  // output x hidden
  Vector b2;  // output

  MlpParams() = default;
  // Zero-filled parameters of the given shape.
  MlpParams(std::size_t input, std::size_t hidden, std::size_t output);

  void validate() const;
  std::size_t parameter_count() const;
  // Parameter blocks in serialization order: W1, b1, W2, b2.
  std::array<std::span<double>, 4> blocks();
  std::array<std::span<const double>, 4> blocks() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

// Generator: input is [attribute; noise] with noise dimension == attribute
// dimension, output is a feature vector.
struct GeneratorParams {
  MlpParams net;

  std::size_t attribute_dim() const { return net.input_dim / 2; }
  std::size_t feature_dim() const { return net.output_dim; }
  void validate() const;
  friend bool operator==(const GeneratorParams&, const GeneratorParams&) = default;
};

// Predictor: feature -> attribute estimate, with the NCA sharpness gamma^2.
struct PredictorParams {
  MlpParams net;
  double gamma_sq = 0.5;

  void validate() const;
  friend bool operator==(const PredictorParams&, const PredictorParams&) = default;
};

struct Gradients {
  MlpParams generator;
  MlpParams predictor;
};

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  Vector first_moment;
  Vector second_moment;

  AdamState() = default;
  explicit AdamState(std::size_t parameter_count, double lr = 1e-3);

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Glorot-uniform weights in (-s, s), s = sqrt(6 / (fan_in + fan_out)); zero
// biases.
MlpParams init_params(std::size_t input, std::size_t hidden, std::size_t output, SeededRng& rng);
GeneratorParams init_generator(std::size_t attribute_dim, std::size_t hidden_dim,
                               std::size_t feature_dim, SeededRng& rng);
PredictorParams init_predictor(std::size_t feature_dim, std::size_t hidden_dim,
                               std::size_t attribute_dim, double gamma_sq, SeededRng& rng);

// Row-wise forward pass: out = W2 relu(W1 x + b1) + b2 for each row x.
Matrix mlp_forward(const MlpParams& net, const Matrix& inputs);

Vector generator_forward(const GeneratorParams& g, std::span<const double> attribute,
                         std::span<const double> noise);

// Synthetic samples described by their class and noise draw. Noise rows have
// the attribute dimension.
struct SynthInputs {
  std::vector<std::size_t> classes;
  Matrix noise;

  std::size_t size() const { return classes.size(); }
};

// Generator outputs for every synthetic input.
Matrix generate(const GeneratorParams& g, const AttributeMatrix& attributes,
                const SynthInputs& inputs);

// NCA class distribution for a predicted attribute vector:
// p_i proportional to exp(-gamma^2 * (1 - cos(f_out, a_i))).
Vector nca_probabilities(std::span<const double> f_out, const AttributeMatrix& attributes,
                         double gamma_sq);
double nca_probability(std::span<const double> f_out, const AttributeMatrix& attributes,
                       std::size_t target_class, double gamma_sq);

// Probabilities are clamped at this floor before taking logs.
inline constexpr double kProbabilityFloor = 1e-300;

struct RegularizerValue {
  double loss = 0.0;
  // Samples whose probability hit kProbabilityFloor.
  std::size_t clamped = 0;
};

// Mean NLL over labeled real samples plus mean NLL over synthetic samples.
// Real samples labeled kUnlabeled contribute nothing.
RegularizerValue regularizer_loss(const LabeledFeatures& real, const LabeledFeatures& synth,
                                  const PredictorParams& f, const AttributeMatrix& attributes);

double total_loss(const Matrix& plan, const ot::CostMatrix& synth_cost, double regularizer,
                  double beta);

struct ObjectiveValue {
  double transport_cost = 0.0;
  double regularizer = 0.0;
  double total = 0.0;
  std::size_t clamped = 0;
};

// One optimization step's worth of data. The plan couples `real` (rows) with
// the first plan.cols() synthetic samples; the remaining synthetic samples
// enter only the regularizer.
struct ObjectiveBatch {
  const LabeledFeatures& real;
  const SynthInputs& synth;
  const Matrix& plan;
};

ObjectiveValue objective(const ObjectiveBatch& batch, const GeneratorParams& g,
                         const PredictorParams& f, const AttributeMatrix& attributes,
                         double beta);

// Objective value plus exact gradients for every parameter of g and f.
// Throws NumericalError naming the block if a gradient is non-finite.
ObjectiveValue backward(const ObjectiveBatch& batch, const GeneratorParams& g,
                        const PredictorParams& f, const AttributeMatrix& attributes, double beta,
                        Gradients& grads);

// Bias-corrected Adam over an ordered list of parameter blocks.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state);
void adam_step(GeneratorParams& g, PredictorParams& f, const Gradients& grads, AdamState& state);

// Binary checkpoint: "OTZSLCKP", u32 version, six u64 network dims, then
// little-endian f64 blocks W1 b1 W2 b2 of g, the same for f, gamma^2, and the
// Adam state (lr, beta1, beta2, epsilon as f64, step and moment length as
// u64, first then second moments).
struct Checkpoint {
  GeneratorParams generator;
  PredictorParams predictor;
  AdamState adam;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
// Throws std::runtime_error on a bad magic, version, truncation or size.
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace otzsl::model

#endif  // OTZSL_MODEL_HPP
