// cppgen: simulate, score and fit coalescent point process genealogies.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cppgen/cppgen.hpp"

namespace {

using namespace cppgen;

constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

SamplingScheme scheme_arg(const std::string& text) {
  try {
    return parse_scheme(text);
  } catch (const ParseError& e) {
    throw UsageError(std::string("--scheme: ") + e.what());
  }
}

std::size_t worker_count(std::size_t flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("CPPGEN_THREADS")) {
    char* end = nullptr;
    const unsigned long n = std::strtoul(env, &end, 10);
    if (end == env || *end != '\0' || n == 0) throw UsageError("CPPGEN_THREADS must be a positive integer");
    return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Writes to the file at `path`, or stdout when empty.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw Error("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string model, scheme = "full", format = "newick", method = "cpp", output;
  std::size_t reps = 1, threads = 0;
  std::uint64_t seed = 0;
  double step = 1e-3;
  bool no_stem = false;
};

std::optional<OrientedUltrametricTree> simulate_one(const RateModel& model, const InverseTail& F,
                                                    const SamplingScheme& scheme, const std::string& method,
                                                    RandomStream& rng) {
  auto base = [&]() {
    return method == "forward" ? simulate_forward(model, rng) : simulate_cpp(F, rng);
  };
  if (std::holds_alternative<FullSampling>(scheme)) return base();
  if (const auto* b = std::get_if<BernoulliSampling>(&scheme)) return bernoulli_thin(base(), b->y, rng);
  const std::size_t k = std::get<UniformKSampling>(scheme).k;
  if (method == "definetti") return definetti_sample(F, k, rng).tree;
  for (;;) {
    const auto tree = base();
    if (tree.tip_count() >= k) return uniform_k_sample(tree, k, rng);
  }
}

int run_simulate(const SimulateArgs& args) {
  const RateModel model = read_model(args.model);
  const SamplingScheme scheme = scheme_arg(args.scheme);
  if (args.method == "definetti" && !std::holds_alternative<UniformKSampling>(scheme))
    throw UsageError("--method definetti needs a k:<int> scheme");
  const InverseTail F = inverse_tail_for(model, args.step);
  if (std::holds_alternative<UniformKSampling>(scheme) && !(F.a() > 0.0))
    throw DomainError("a = 0: trees never have more than one tip");

  const RandomStream master(args.seed);
  std::vector<std::optional<OrientedUltrametricTree>> results(args.reps);
  const std::size_t workers = std::min(worker_count(args.threads), std::max<std::size_t>(args.reps, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t rep; (rep = next.fetch_add(1)) < args.reps;) {
      try {
        RandomStream rng = master.split(rep);
        results[rep] = simulate_one(model, F, scheme, args.method, rng);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = args.reps;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < workers; ++i) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  Output out(args.output);
  auto& os = out.stream();
  if (args.format == "csv") {
    write_depths_csv_header(os);
    for (std::size_t rep = 0; rep < results.size(); ++rep)
      if (results[rep]) write_depths_csv_rows(os, rep, *results[rep]);
  } else {
    // An empty Bernoulli sample is written as an empty line.
    for (const auto& tree : results) os << (tree ? tree_to_newick(*tree, !args.no_stem) : "") << "\n";
  }
  return 0;
}

// ---- likelihood ---------------------------------------------------------------

struct LikelihoodArgs {
  std::string tree, model, scheme = "full", output;
  std::size_t quad_nodes = 64;
  double step = 1e-3;
  bool unoriented = false;
};

int run_likelihood(const LikelihoodArgs& args) {
  const RateModel model = read_model(args.model);
  const SamplingScheme scheme = scheme_arg(args.scheme);
  const auto trees = read_newick_file(args.tree, model.horizon());
  const InverseTail F = inverse_tail_for(model, args.step);
  Json per_tree = Json::array();
  double total = 0.0;
  std::size_t nodes = 0;
  for (const auto& tree : trees) {
    const Likelihood l = std::visit(
        [&](const auto& s) -> Likelihood {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, FullSampling>)
            return full_likelihood(tree, F, !args.unoriented);
          else if constexpr (std::is_same_v<S, BernoulliSampling>)
            return bernoulli_likelihood(tree, F, s.y, !args.unoriented);
          else
            return ksample_likelihood(tree, F, s.k, !args.unoriented, args.quad_nodes);
        },
        scheme);
    total += l.log_value;
    nodes = std::max(nodes, l.quad_nodes);
    per_tree.push_back(l.log_value);
  }
  Json j{{"logL", total},
         {"scheme", to_string(scheme)},
         {"quad_nodes", std::holds_alternative<UniformKSampling>(scheme) ? nodes : 0},
         {"oriented", !args.unoriented},
         {"trees", trees.size()},
         {"per_tree", per_tree},
         {"F_T", F.value(F.horizon())},
         {"a", F.a()}};
  Output out(args.output);
  out.stream() << j.dump(2) << "\n";
  return 0;
}

// ---- fit ------------------------------------------------------------------------

struct FitArgs {
  std::string tree, scheme = "full", bounds, output;
  std::optional<double> height;
  std::size_t quad_nodes = 64;
  bool unoriented = false;
};

int run_fit(const FitArgs& args) {
  const SamplingScheme scheme = scheme_arg(args.scheme);
  const auto trees = read_newick_file(args.tree, args.height);
  if (trees.empty()) throw Error("no trees in " + args.tree);
  FitConfig config;
  if (!args.bounds.empty()) config = fit_config_from_json(read_json_file(args.bounds));
  FitOptions options;
  options.likelihood.oriented = !args.unoriented;
  options.likelihood.quad_nodes = args.quad_nodes;
  const FitResult r = fit_mle(trees, scheme, config.bounds, config.init, options);
  Json j{{"lambda", r.lambda},
         {"mu", r.mu},
         {"y", r.y ? Json(*r.y) : Json(nullptr)},
         {"logL", r.log_likelihood},
         {"iterations", r.iterations},
         {"evaluations", r.evaluations},
         {"converged", r.converged},
         {"at_bound", {{"lambda", r.lambda_at_bound}, {"mu", r.mu_at_bound}, {"y", r.y_at_bound}}},
         {"scheme", to_string(scheme)},
         {"trees", trees.size()},
         {"T", trees.front().height()}};
  Output out(args.output);
  out.stream() << j.dump(2) << "\n";
  return 0;
}

// ---- dump-f ---------------------------------------------------------------------

struct DumpArgs {
  std::string model, output;
  double step = 1e-3;
  std::size_t points = 0;
};

int run_dump(const DumpArgs& args) {
  const RateModel model = read_model(args.model);
  const InverseTail F = inverse_tail_for(model, args.step);
  std::size_t points = args.points;
  if (points == 0) points = static_cast<std::size_t>(std::llround(model.horizon() / args.step));
  Output out(args.output);
  write_f_grid_csv(out.stream(), F, std::max<std::size_t>(points, 1));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate and score coalescent point process genealogies under full, Bernoulli and k-sampling"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "simulate reduced trees");
  simulate->add_option("--model", sim.model, "model JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--scheme", sim.scheme, "full | bernoulli:<y> | k:<int>");
  simulate->add_option("--reps", sim.reps, "number of replicates")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim.seed, "64-bit seed")->required();
  simulate->add_option("--format", sim.format)->check(CLI::IsMember({"newick", "csv"}));
  simulate->add_option("--method", sim.method, "cpp | forward | definetti")
      ->check(CLI::IsMember({"cpp", "forward", "definetti"}));
  simulate->add_option("--step", sim.step, "solver step for non-constant models")->check(CLI::PositiveNumber);
  simulate->add_option("--output,-o", sim.output);
  simulate->add_option("--threads", sim.threads, "worker threads (default: CPPGEN_THREADS or all cores)");
  simulate->add_flag("--no-stem", sim.no_stem, "omit the root edge in Newick output");

  LikelihoodArgs lik;
  auto* likelihood = app.add_subcommand("likelihood", "log-likelihood of trees under a model");
  likelihood->add_option("--tree", lik.tree, "Newick file, one tree per line")->required()->check(CLI::ExistingFile);
  likelihood->add_option("--model", lik.model, "model JSON")->required()->check(CLI::ExistingFile);
  likelihood->add_option("--scheme", lik.scheme, "full | bernoulli:<y> | k:<int>");
  likelihood->add_option("--quad-nodes", lik.quad_nodes)->check(CLI::PositiveNumber);
  likelihood->add_option("--step", lik.step)->check(CLI::PositiveNumber);
  likelihood->add_flag("--unoriented", lik.unoriented, "include the 2^(n-1-cherries) factor");
  likelihood->add_option("--output,-o", lik.output);

  FitArgs fit;
  auto* fitcmd = app.add_subcommand("fit", "maximum-likelihood constant rates");
  fitcmd->add_option("--tree", fit.tree, "Newick file, one tree per line")->required()->check(CLI::ExistingFile);
  fitcmd->add_option("--scheme", fit.scheme, "full | bernoulli:<y> | k:<int>");
  fitcmd->add_option("--bounds", fit.bounds, "bounds JSON")->check(CLI::ExistingFile);
  fitcmd->add_option("--quad-nodes", fit.quad_nodes)->check(CLI::PositiveNumber);
  fitcmd->add_flag("--unoriented", fit.unoriented);
  fitcmd->add_option("--height", fit.height, "tree height for trees written without a root edge");
  fitcmd->add_option("--output,-o", fit.output);

  bool quick = false, full = false;
  std::uint64_t validate_seed = 20261014;
  auto* validate = app.add_subcommand("validate", "run the self-check suites (TAP output)");
  auto* quick_flag = validate->add_flag("--quick", quick, "arithmetic oracles only");
  validate->add_flag("--full", full, "add Monte Carlo suites")->excludes(quick_flag);
  validate->add_option("--seed", validate_seed);

  DumpArgs dump;
  auto* dumpf = app.add_subcommand("dump-f", "write the F grid as CSV t,F");
  dumpf->add_option("--model", dump.model, "model JSON")->required()->check(CLI::ExistingFile);
  dumpf->add_option("--step", dump.step)->check(CLI::PositiveNumber);
  dumpf->add_option("--points", dump.points, "output intervals (default T/step)");
  dumpf->add_option("--output,-o", dump.output);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*likelihood) return run_likelihood(lik);
    if (*fitcmd) return run_fit(fit);
    if (*dumpf) return run_dump(dump);
    const auto suite = full ? validate::full_suite(validate_seed) : validate::quick_suite(validate_seed);
    return validate::run_tap(suite, std::cout) == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
