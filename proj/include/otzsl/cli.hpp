#ifndef OTZSL_CLI_HPP
#define OTZSL_CLI_HPP

// The `otzsl` command line: a JSON run configuration with flag overrides and
// the six subcommands. Exit codes: 0 success, 1 runtime failure, 2 usage,
// configuration or malformed-input error.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "otzsl/data_io.hpp"
#include "otzsl/eval.hpp"
#include "otzsl/ot.hpp"
#include "otzsl/training.hpp"

namespace otzsl::cli {

// Bad flags, bad configuration or unreadable input; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolverOptions {
  std::string name = "ipot";  // ipot | sinkhorn
  double lambda = 0.5;
  // IPOT: maximum outer steps. Sinkhorn: scaling pairs.
  std::size_t iterations = 5000;
};

struct CompareOptions {
  std::size_t instances = 20;
  std::size_t size = 32;
  // Gaussian feature dimension of the random real/generated samples.
  std::size_t feature_dim = 16;
  std::size_t iterations = 300;
};

struct RunConfig {
  // Shared by data generation, training, evaluation and the comparison.
  std::uint64_t seed = 0;
  training::Mode mode = training::Mode::standard;
  // "desk" (synthetic-scale settings) or "paper" (full-width settings); the
  // explicit train keys are applied on top.
  std::string train_preset = "desk";
  io::SyntheticSpec synthetic;
  training::TrainConfig train = training::TrainConfig::desk_scale();
  eval::EvalConfig eval;
  SolverOptions solver;
  CompareOptions compare;
  std::string dataset;
  std::string checkpoint;
  std::string out;

  // Copies seed and mode into the per-module configs.
  void resolve();
  // Throws UsageError describing the first invalid field.
  void validate() const;
};

nlohmann::json config_to_json(const RunConfig& config);
// Missing keys keep their defaults; unknown keys and wrongly typed values
// throw UsageError.
RunConfig config_from_json(const nlohmann::json& j);

struct InstanceComparison {
  ot::CostMatrix cost;
  double oracle_cost = 0.0;
  ot::SolverTrace ipot;         // lambda 0.5
  ot::SolverTrace sinkhorn_01;  // lambda 0.1
  ot::SolverTrace sinkhorn_05;  // lambda 0.5
  // First iteration within 1% (IPOT) / 5% (Sinkhorn 0.1) of the oracle.
  std::optional<std::size_t> ipot_within_1pct;
  std::optional<std::size_t> sinkhorn_01_within_5pct;
};

// First iterate whose cost is within `rel` relative error of `reference`.
std::optional<std::size_t> first_within(const ot::SolverTrace& trace, double reference, double rel);

// Random square cosine-cost instances with uniform marginals; every solver
// runs the full iteration budget and the Hungarian optimum is the reference.
std::vector<InstanceComparison> compare_solvers(const CompareOptions& options, std::uint64_t seed);

// argv[0] is the program name. Never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace otzsl::cli

#endif  // OTZSL_CLI_HPP
