#include "otzsl/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <set>

#include <CLI11.hpp>

#include "otzsl/model.hpp"

namespace otzsl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::resolve() {
  synthetic.seed = seed;
  train.seed = seed;
  train.mode = mode;
  eval.seed = seed;
}

void RunConfig::validate() const {
  try {
    synthetic.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  if (eval.synth_per_class < 1) throw UsageError("config: eval.synth_per_class must be >= 1");
  if (eval.classifier.epochs < 1 || eval.classifier.batch_size < 1)
    throw UsageError("config: eval.classifier epochs and batch_size must be >= 1");
  if (!(eval.classifier.learning_rate >= 0.0) || !std::isfinite(eval.classifier.learning_rate))
    throw UsageError("config: eval.classifier.learning_rate must be non-negative");
  if (solver.name != "ipot" && solver.name != "sinkhorn")
    throw UsageError("config: solver.name must be 'ipot' or 'sinkhorn', got '" + solver.name + "'");
  if (!(solver.lambda > 0.0) || !std::isfinite(solver.lambda))
    throw UsageError("config: solver.lambda must be positive");
  if (solver.iterations < 1) throw UsageError("config: solver.iterations must be >= 1");
  if (compare.instances < 1 || compare.size < 1 || compare.feature_dim < 1 || compare.iterations < 1)
    throw UsageError("config: compare fields must be >= 1");
  if (train_preset != "desk" && train_preset != "paper")
    throw UsageError("config: train.preset must be 'desk' or 'paper'");
}

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw UsageError("config: '" + label() + "' must be an object");
  }

  const json* find(const char* key) {
    used_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void read(const char* key, double& dst) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw wrong_type(key, "a number");
      dst = v->get<double>();
    }
  }
  void read(const char* key, std::size_t& dst) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw wrong_type(key, "a non-negative integer");
      dst = v->get<std::size_t>();
    }
  }
  void read(const char* key, bool& dst) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw wrong_type(key, "true or false");
      dst = v->get<bool>();
    }
  }
  void read(const char* key, std::string& dst) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw wrong_type(key, "a string");
      dst = v->get<std::string>();
    }
  }

  std::string path(const char* key) const { return name_.empty() ? key : name_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!used_.count(key)) throw UsageError("config: unknown key '" + path(key.c_str()) + "'");
  }

 private:
  std::string label() const { return name_.empty() ? "<root>" : name_; }
  UsageError wrong_type(const char* key, const char* what) const {
    return UsageError("config: '" + path(key) + "' must be " + what);
  }

  const json& j_;
  std::string name_;
  std::set<std::string> used_;
};

training::Mode mode_from(const std::string& name) {
  try {
    return training::parse_mode(name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

}  // namespace

json config_to_json(const RunConfig& c) {
  const auto& t = c.train;
  const auto& e = c.eval;
  return {
      {"seed", c.seed},
      {"mode", std::string(training::to_string(c.mode))},
      {"dataset", c.dataset},
      {"checkpoint", c.checkpoint},
      {"out", c.out},
      {"synthetic",
       {{"seen_classes", c.synthetic.seen_classes},
        {"unseen_classes", c.synthetic.unseen_classes},
        {"attribute_dim", c.synthetic.attribute_dim},
        {"feature_dim", c.synthetic.feature_dim},
        {"samples_per_class", c.synthetic.samples_per_class},
        {"noise_sigma", c.synthetic.noise_sigma}}},
      {"train",
       {{"preset", c.train_preset},
        {"p", t.p},
        {"beta", t.beta},
        {"gamma_sq", t.gamma_sq},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"epochs", t.epochs},
        {"hidden_dim", t.hidden_dim},
        {"ipot",
         {{"lambda", t.ipot.lambda},
          {"inner_iterations", t.ipot.inner_iterations},
          {"max_outer_iterations", t.ipot.max_outer_iterations},
          {"stop_tolerance", t.ipot.stop_tolerance},
          {"feasibility_tolerance", t.ipot.feasibility_tolerance}}}}},
      {"eval",
       {{"synth_per_class", e.synth_per_class},
        {"top_k", e.top_k},
        {"include_real_seen", e.include_real_seen},
        {"normalize_features", e.normalize_features},
        {"classifier",
         {{"learning_rate", e.classifier.learning_rate},
          {"epochs", e.classifier.epochs},
          {"batch_size", e.classifier.batch_size}}}}},
      {"solver", {{"name", c.solver.name}, {"lambda", c.solver.lambda}, {"iterations", c.solver.iterations}}},
      {"compare",
       {{"instances", c.compare.instances},
        {"size", c.compare.size},
        {"feature_dim", c.compare.feature_dim},
        {"iterations", c.compare.iterations}}},
  };
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  if (const json* v = root.find("seed")) {
    if (!v->is_number_unsigned()) throw UsageError("config: 'seed' must be a non-negative integer");
    c.seed = v->get<std::uint64_t>();
  }
  std::string mode = std::string(training::to_string(c.mode));
  root.read("mode", mode);
  c.mode = mode_from(mode);
  root.read("dataset", c.dataset);
  root.read("checkpoint", c.checkpoint);
  root.read("out", c.out);

  if (const json* v = root.find("synthetic")) {
    Section s(*v, "synthetic");
    s.read("seen_classes", c.synthetic.seen_classes);
    s.read("unseen_classes", c.synthetic.unseen_classes);
    s.read("attribute_dim", c.synthetic.attribute_dim);
    s.read("feature_dim", c.synthetic.feature_dim);
    s.read("samples_per_class", c.synthetic.samples_per_class);
    s.read("noise_sigma", c.synthetic.noise_sigma);
    s.finish();
  }
  if (const json* v = root.find("train")) {
    Section s(*v, "train");
    s.read("preset", c.train_preset);
    if (c.train_preset == "paper") c.train = training::TrainConfig{};
    else if (c.train_preset != "desk") throw UsageError("config: train.preset must be 'desk' or 'paper'");
    auto& t = c.train;
    s.read("p", t.p);
    s.read("beta", t.beta);
    s.read("gamma_sq", t.gamma_sq);
    s.read("batch_size", t.batch_size);
    s.read("learning_rate", t.learning_rate);
    s.read("epochs", t.epochs);
    s.read("hidden_dim", t.hidden_dim);
    if (const json* iv = s.find("ipot")) {
      Section ip(*iv, "train.ipot");
      ip.read("lambda", t.ipot.lambda);
      ip.read("inner_iterations", t.ipot.inner_iterations);
      ip.read("max_outer_iterations", t.ipot.max_outer_iterations);
      ip.read("stop_tolerance", t.ipot.stop_tolerance);
      ip.read("feasibility_tolerance", t.ipot.feasibility_tolerance);
      ip.finish();
    }
    s.finish();
  }
  if (const json* v = root.find("eval")) {
    Section s(*v, "eval");
    auto& e = c.eval;
    s.read("synth_per_class", e.synth_per_class);
    s.read("top_k", e.top_k);
    s.read("include_real_seen", e.include_real_seen);
    s.read("normalize_features", e.normalize_features);
    if (const json* cv = s.find("classifier")) {
      Section cl(*cv, "eval.classifier");
      cl.read("learning_rate", e.classifier.learning_rate);
      cl.read("epochs", e.classifier.epochs);
      cl.read("batch_size", e.classifier.batch_size);
      cl.finish();
    }
    s.finish();
  }
  if (const json* v = root.find("solver")) {
    Section s(*v, "solver");
    s.read("name", c.solver.name);
    s.read("lambda", c.solver.lambda);
    s.read("iterations", c.solver.iterations);
    s.finish();
  }
  if (const json* v = root.find("compare")) {
    Section s(*v, "compare");
    s.read("instances", c.compare.instances);
    s.read("size", c.compare.size);
    s.read("feature_dim", c.compare.feature_dim);
    s.read("iterations", c.compare.iterations);
    s.finish();
  }
  root.finish();
  return c;
}

std::optional<std::size_t> first_within(const ot::SolverTrace& trace, double reference, double rel) {
  for (const auto& it : trace)
    if (std::abs(it.transport_cost - reference) <= rel * std::abs(reference)) return it.iteration;
  return std::nullopt;
}

std::vector<InstanceComparison> compare_solvers(const CompareOptions& options, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<InstanceComparison> out;
  const std::size_t n = options.size;
  const ot::Marginals marg = ot::Marginals::uniform(n, n);
  ot::IpotConfig ipot;
  ipot.max_outer_iterations = options.iterations;
  ipot.stop_tolerance = 0.0;  // full curve
  for (std::size_t i = 0; i < options.instances; ++i) {
    Matrix real(n, options.feature_dim), synth(n, options.feature_dim);
    for (double& v : real.values()) v = rng.gaussian();
    for (double& v : synth.values()) v = rng.gaussian();
    InstanceComparison r;
    r.cost = ot::build_cost_matrix(real, synth);
    const ot::CostMatrix& cost = r.cost;
    r.oracle_cost = ot::hungarian_assignment(cost).second;
    ot::ipot_solve(cost, marg, ipot, &r.ipot);
    ot::sinkhorn_solve(cost, marg, 0.1, options.iterations, &r.sinkhorn_01);
    ot::sinkhorn_solve(cost, marg, 0.5, options.iterations, &r.sinkhorn_05);
    r.ipot_within_1pct = first_within(r.ipot, r.oracle_cost, 0.01);
    r.sinkhorn_01_within_5pct = first_within(r.sinkhorn_01, r.oracle_cost, 0.05);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

using io::format_double;

// Shortest round-trip form, for console output.
std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, mode, dataset, checkpoint, solver;
  std::optional<std::size_t> epochs, iters;
  std::optional<double> lambda;
  std::string cost_path;
};

RunConfig load_config(const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) {
    json j;
    try {
      j = json::parse(io::read_text_file(f.config));
    } catch (const json::parse_error& e) {
      throw UsageError("config " + f.config + ": " + e.what());
    } catch (const io::FormatError& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
    c = config_from_json(j);
  }
  if (f.seed) c.seed = *f.seed;
  if (f.mode) c.mode = mode_from(*f.mode);
  if (f.out) c.out = *f.out;
  if (f.dataset) c.dataset = *f.dataset;
  if (f.checkpoint) c.checkpoint = *f.checkpoint;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.solver) c.solver.name = *f.solver;
  if (f.lambda) c.solver.lambda = *f.lambda;
  if (f.iters) c.solver.iterations = *f.iters;
  c.resolve();
  c.validate();
  return c;
}

fs::path require_out(const RunConfig& c) {
  if (c.out.empty()) throw UsageError("an output directory is required (--out DIR)");
  fs::create_directories(c.out);
  io::write_text_file(fs::path(c.out) / "config.json", config_to_json(c).dump(2) + "\n");
  return c.out;
}

io::Dataset require_dataset(const RunConfig& c) {
  if (c.dataset.empty()) throw UsageError("a dataset directory is required (--dataset DIR)");
  if (!fs::is_directory(c.dataset)) throw UsageError("dataset directory not found: " + c.dataset);
  return io::load_dataset(c.dataset);
}

model::Checkpoint require_checkpoint(const RunConfig& c, const io::Dataset& data) {
  if (c.checkpoint.empty()) throw UsageError("a checkpoint file is required (--checkpoint FILE)");
  model::Checkpoint ck;
  try {
    ck = model::load_checkpoint(c.checkpoint);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (ck.generator.attribute_dim() != data.attributes.dim() ||
      ck.generator.feature_dim() != data.features.feature_dim)
    throw UsageError("checkpoint dimensions (d=" + std::to_string(ck.generator.attribute_dim()) +
                     ", D=" + std::to_string(ck.generator.feature_dim()) +
                     ") do not match the dataset (d=" + std::to_string(data.attributes.dim()) +
                     ", D=" + std::to_string(data.features.feature_dim) + ")");
  return ck;
}

void cmd_gen_data(const RunConfig& c, std::ostream& out) {
  const fs::path dir = require_out(c);
  const auto data = io::make_synthetic_dataset(c.synthetic).first;
  io::save_dataset(dir, data);
  const auto& F = data.features;
  out << "wrote " << dir.string() << ": " << data.attributes.seen().size() << " seen / "
      << data.attributes.unseen().size() << " unseen classes, d=" << data.attributes.dim()
      << ", D=" << F.feature_dim << ", " << F.seen_train.size() << " train, " << F.seen_test.size()
      << " seen test, " << F.unseen_test.size() << " unseen test, " << F.unseen_unlabeled.rows()
      << " unlabeled\n";
}

void cmd_train(const RunConfig& c, std::ostream& out) {
  const io::Dataset data = require_dataset(c);
  const fs::path dir = require_out(c);
  const auto result = training::train(data.features, data.attributes, c.train);
  model::save_checkpoint((dir / "checkpoint.bin").string(), result.checkpoint);

  std::string csv = "iteration,branch,transport_cost,reg_loss,total_loss\n";
  for (const auto& r : result.trace.iterations) {
    csv += std::to_string(r.iteration) + "," + std::string(training::to_string(r.branch)) + "," +
           format_double(r.transport_cost) + "," + format_double(r.reg_loss) + "," +
           format_double(r.total_loss) + "\n";
  }
  io::write_text_file(dir / "trace.csv", csv);

  const auto& trace = result.trace;
  out << std::fixed << std::setprecision(4);
  for (std::size_t e = 0; e < trace.epoch_seconds.size(); ++e)
    out << "epoch " << e + 1 << "/" << trace.epoch_seconds.size()
        << "  mean loss " << trace.epoch_mean_loss(e) << "  (" << std::setprecision(2)
        << trace.epoch_seconds[e] << " s)\n" << std::setprecision(4);
  const auto& last = trace.iterations.back();
  out << "final: transport " << last.transport_cost << ", regularizer " << last.reg_loss
      << ", total " << last.total_loss << "\n"
      << trace.iterations.size() << " iterations, " << trace.transition_count()
      << " on the transition branch, " << trace.clamped_probabilities << " clamped probabilities\n"
      << "checkpoint: " << (dir / "checkpoint.bin").string() << "\n";
}

void cmd_eval(const RunConfig& c, std::ostream& out) {
  const io::Dataset data = require_dataset(c);
  const model::Checkpoint ck = require_checkpoint(c, data);
  const fs::path dir = require_out(c);
  const auto report = eval::evaluate(c.mode, ck.generator, data.attributes, data.features, c.eval);
  io::write_text_file(dir / "report.json", eval::report_to_json(report).dump(2) + "\n");

  out << std::fixed << std::setprecision(4);
  out << "mode  " << training::to_string(report.mode) << "\n";
  if (report.seen_accuracy) out << "A_s   " << *report.seen_accuracy << "\n";
  out << "A_u   " << report.unseen_accuracy << "\n";
  if (report.harmonic) out << "H     " << *report.harmonic << "\n";
  if (report.top_k_accuracy) out << "top-" << report.top_k << " " << *report.top_k_accuracy << "\n";
}

void cmd_solve_ot(const RunConfig& c, const std::string& cost_path, std::ostream& out) {
  if (cost_path.empty()) throw UsageError("a cost matrix CSV is required");
  Matrix values = io::read_matrix_csv(cost_path);
  ot::CostMatrix cost;
  try {
    cost = ot::CostMatrix(std::move(values));
  } catch (const std::invalid_argument& e) {
    throw UsageError(cost_path + ": " + e.what());
  }
  const fs::path dir = require_out(c);
  const auto marg = ot::Marginals::uniform(cost.rows(), cost.cols());
  ot::SolverTrace trace;
  ot::TransportPlan plan;
  if (c.solver.name == "ipot") {
    ot::IpotConfig cfg;
    cfg.lambda = c.solver.lambda;
    cfg.max_outer_iterations = c.solver.iterations;
    plan = ot::ipot_solve(cost, marg, cfg, &trace);
  } else {
    plan = ot::sinkhorn_solve(cost, marg, c.solver.lambda, c.solver.iterations, &trace);
  }
  io::write_matrix_csv(plan.values, dir / "plan.csv");
  std::string csv = "iteration,transport_cost,feasibility_error\n";
  for (const auto& it : trace)
    csv += std::to_string(it.iteration) + "," + format_double(it.transport_cost) + "," +
           format_double(it.feasibility_error) + "\n";
  io::write_text_file(dir / "trace.csv", csv);

  const auto rep = ot::check_marginals(plan, marg, 1e-6);
  out << c.solver.name << " (lambda " << shortest(c.solver.lambda) << "): cost "
      << shortest(ot::transport_cost(plan, cost)) << ", feasibility error "
      << shortest(rep.max_deviation()) << ", " << plan.outer_iterations_used << " iterations"
      << (plan.converged ? ", converged" : "") << "\n";
}

void cmd_compare_solvers(const RunConfig& c, std::ostream& out) {
  const fs::path dir = require_out(c);
  const auto results = compare_solvers(c.compare, c.seed);

  std::string curves = "instance,solver,lambda,iteration,transport_cost,feasibility_error\n";
  std::string summary =
      "instance,oracle_cost,ipot_final,sinkhorn_0.1_final,sinkhorn_0.5_final,"
      "ipot_iters_within_1pct,sinkhorn_0.1_iters_within_5pct\n";
  const auto opt = [](const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string(); };
  std::size_t dominated = 0, faster = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const auto emit = [&](const char* name, const char* lambda, const ot::SolverTrace& t) {
      for (const auto& it : t)
        curves += std::to_string(i) + "," + name + "," + lambda + "," + std::to_string(it.iteration) + "," +
                  format_double(it.transport_cost) + "," + format_double(it.feasibility_error) + "\n";
    };
    emit("ipot", "0.5", r.ipot);
    emit("sinkhorn", "0.1", r.sinkhorn_01);
    emit("sinkhorn", "0.5", r.sinkhorn_05);
    const double ipot = r.ipot.back().transport_cost;
    summary += std::to_string(i) + "," + format_double(r.oracle_cost) + "," + format_double(ipot) + "," +
               format_double(r.sinkhorn_01.back().transport_cost) + "," +
               format_double(r.sinkhorn_05.back().transport_cost) + "," + opt(r.ipot_within_1pct) + "," +
               opt(r.sinkhorn_01_within_5pct) + "\n";
    if (ipot <= r.sinkhorn_05.back().transport_cost + 1e-6) ++dominated;
    if (r.ipot_within_1pct && (!r.sinkhorn_01_within_5pct || *r.ipot_within_1pct <= *r.sinkhorn_01_within_5pct))
      ++faster;
  }
  io::write_text_file(dir / "curves.csv", curves);
  io::write_text_file(dir / "summary.csv", summary);
  out << results.size() << " instances of size " << c.compare.size << ", " << c.compare.iterations
      << " iterations each\n"
      << "IPOT final cost <= Sinkhorn(0.5) final cost: " << dominated << "/" << results.size() << "\n"
      << "IPOT within 1% no later than Sinkhorn(0.1) within 5%: " << faster << "/" << results.size() << "\n";
}

void cmd_export(const RunConfig& c, std::ostream& out) {
  const io::Dataset data = require_dataset(c);
  std::optional<model::Checkpoint> ck;
  if (!c.checkpoint.empty()) ck = require_checkpoint(c, data);
  const fs::path dir = require_out(c);

  const auto& A = data.attributes;
  const auto& F = data.features;
  std::vector<double> values;
  std::vector<std::int64_t> ids;
  const auto append = [&](const Matrix& m, const std::vector<std::size_t>* labels) {
    values.insert(values.end(), m.values().begin(), m.values().end());
    for (std::size_t r = 0; r < m.rows(); ++r) ids.push_back(labels ? A.id((*labels)[r]) : -1);
  };
  append(F.seen_train.features, &F.seen_train.labels);
  append(F.seen_test.features, &F.seen_test.labels);
  append(F.unseen_test.features, &F.unseen_test.labels);
  append(F.unseen_unlabeled, nullptr);
  const std::size_t rows = ids.size();
  io::export_features_csv(Matrix(rows, F.feature_dim, std::move(values)), ids, dir / "real_features.csv");
  out << "wrote " << rows << " real samples to " << (dir / "real_features.csv").string() << "\n";

  if (ck) {
    std::vector<std::size_t> classes(A.class_count());
    for (std::size_t i = 0; i < classes.size(); ++i) classes[i] = i;
    SeededRng rng(c.seed);
    const auto synth =
        training::synthesize_class_features(ck->generator, A, classes, c.eval.synth_per_class, rng);
    std::vector<std::int64_t> synth_ids;
    for (auto l : synth.labels) synth_ids.push_back(A.id(l));
    io::export_features_csv(synth.features, synth_ids, dir / "synthetic_features.csv");
    out << "wrote " << synth.size() << " generated samples to "
        << (dir / "synthetic_features.csv").string() << "\n";
  }
}

void apply_thread_env() {
  const char* env = std::getenv("OTZSL_THREADS");
  if (!env || !*env) {
    set_worker_count(1);
    return;
  }
  std::size_t n = 0;
  const char* end = env + std::char_traits<char>::length(env);
  const auto [ptr, ec] = std::from_chars(env, end, n);
  if (ec != std::errc() || ptr != end || n == 0)
    throw UsageError(std::string("OTZSL_THREADS must be a positive integer, got '") + env + "'");
  set_worker_count(n);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal-transport feature generation for zero-shot learning", "otzsl"};
  app.require_subcommand(1);
  Flags f;

  const auto common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON run configuration");
    sub->add_option("--seed", f.seed, "Seed for every random draw");
    sub->add_option("--out", f.out, "Output directory");
  };
  const auto data_flags = [&f](CLI::App* sub) {
    sub->add_option("--dataset", f.dataset, "Dataset directory");
    sub->add_option("--mode", f.mode, "standard | generalized | transductive");
  };

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic benchmark dataset");
  common(gen);
  auto* train = app.add_subcommand("train", "Train the feature generator");
  common(train);
  data_flags(train);
  train->add_option("--epochs", f.epochs, "Epoch budget");
  auto* ev = app.add_subcommand("eval", "Train a classifier on generated features and score it");
  common(ev);
  data_flags(ev);
  ev->add_option("--checkpoint", f.checkpoint, "Checkpoint written by train");
  auto* solve = app.add_subcommand("solve-ot", "Solve one transport problem from a cost CSV");
  common(solve);
  solve->add_option("cost", f.cost_path, "Cost matrix CSV (header rows=N,cols=M)");
  solve->add_option("--solver", f.solver, "ipot | sinkhorn");
  solve->add_option("--lambda", f.lambda, "Proximal / entropic weight");
  solve->add_option("--iters", f.iters, "IPOT outer steps or Sinkhorn iterations");
  auto* compare = app.add_subcommand("compare-solvers", "Convergence curves of IPOT and Sinkhorn");
  common(compare);
  auto* exp = app.add_subcommand("export", "Write real (and generated) features for plotting");
  common(exp);
  exp->add_option("--dataset", f.dataset, "Dataset directory");
  exp->add_option("--checkpoint", f.checkpoint, "Checkpoint; adds generated features when given");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    app.exit(e, out, err);
    return 2;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    apply_thread_env();
    const RunConfig config = load_config(f);
    if (active == gen) cmd_gen_data(config, out);
    else if (active == train) cmd_train(config, out);
    else if (active == ev) cmd_eval(config, out);
    else if (active == solve) cmd_solve_ot(config, f.cost_path, out);
    else if (active == compare) cmd_compare_solvers(config, out);
    else cmd_export(config, out);
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << active->help();
    return 2;
  } catch (const io::FormatError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace otzsl::cli
