// Benchmark objectives, GP-sampled within-model objectives, the experiment
// runner with immediate-regret aggregation, and result persistence.
#pragma once

#include "pes/acquisition.hpp"
#include "pes/types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace pes {

struct BenchmarkFn {
  std::string name;
  Domain domain;
  std::function<double(const Vec&)> eval;  // maximization form on the unit cube
  Vec known_maximizer;
  double known_max = 0.0;
  double noise_variance = 1e-3;  // injected on queries
};

BenchmarkFn make_branin();
BenchmarkFn make_cosines();
BenchmarkFn make_hartmann6();

// Re-finds the optimum with a dense grid (d = 2) or multistart (d > 2)
// oracle; throws when the registered optimum is off by more than tol.
void certify_benchmark(const BenchmarkFn& fn, double tol = 1e-6);

// Certified registry lookup; certification runs once per function.
const BenchmarkFn& benchmark_by_name(const std::string& name);

// Objective drawn from the GP prior itself: latent function values sampled
// jointly on a fixed grid, with the induced posterior mean as the objective.
class WithinModelObjective {
 public:
  WithinModelObjective(const Hyperparams& hp, const Domain& domain, Mat latent_inputs,
                       Vec latent_values);

  double operator()(const Vec& x) const;
  Vec maximizer() const { return maximizer_; }
  double max_value() const { return max_value_; }
  const Vec& latent_values() const { return latent_values_; }
  const Mat& latent_inputs() const { return latent_inputs_; }

 private:
  Hyperparams hp_;
  Mat latent_inputs_;
  Vec latent_values_;
  Mat scaled_inputs_;
  Vec weights_;
  Vec maximizer_;
  double max_value_;
};

class WithinModelFactory {
 public:
  // latent grid is per_dim^d points over the domain
  WithinModelFactory(const Hyperparams& hp, const Domain& domain, int per_dim = 32);
  WithinModelObjective make(std::uint64_t seed) const;

 private:
  Hyperparams hp_;
  Domain domain_;
  Mat grid_;
  Mat chol_lower_;  // prior factor, shared across draws
};

WithinModelObjective gen_within_model_objective(const Hyperparams& hp,
                                                const Domain& domain, int per_dim,
                                                std::uint64_t seed);

double median(std::vector<double> values);

struct RegretCurve {
  Mat regrets;  // restarts x budget
  Vec median_curve;
  Vec band_lo;
  Vec band_hi;
};

// Median curve plus a one-standard-deviation bootstrap band around it
// (resampling restarts with replacement).
RegretCurve make_regret_curve(Mat regrets, int bootstrap_replicates, std::uint64_t seed);

// 90% bootstrap interval of median(a) - median(b), paired over run indices.
std::pair<double, double> bootstrap_median_diff_interval(const std::vector<double>& a,
                                                         const std::vector<double>& b,
                                                         int replicates,
                                                         std::uint64_t seed);

struct ExperimentConfig {
  std::string function = "branin";  // branin | cosines | hartmann6 | within-model
  std::vector<Method> methods = {Method::PES, Method::EI};
  int restarts = 50;
  int budget = 50;
  int num_slots = 16;    // M
  int num_features = 320;  // m
  int init_count = 3;
  std::uint64_t seed = 20140609;
  std::string mode = "bayes";  // bayes | fixed-psi
  std::optional<Hyperparams> known_psi;
  double hyperprior_shape = 1.0;
  double hyperprior_rate = 0.1;
  std::optional<double> noise_variance;  // query noise override
  int within_model_grid = 32;
  int bootstrap_replicates = 1000;
  PathOptOptions path;
  AcqOptOptions acq;
  SliceOptions slice;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

struct MethodRuns {
  Method method = Method::PES;
  Mat regrets;          // restarts x budget (failed runs excluded)
  std::vector<Mat> recommendations;  // per run, budget x d
  std::vector<std::uint64_t> run_seeds;
  int failures = 0;
  RegretCurve curve;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<MethodRuns> methods;
  nlohmann::json summary;
};

// Runs every (method, restart) pair, persists one CSV per method plus a JSON
// summary under out_dir, and returns the aggregates. The summary is computed
// from the persisted CSVs so that reloading reproduces it bit for bit.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

// Raw-curve persistence: columns run_id, iteration, recommendation
// coordinates, regret.
void write_runs_csv(const std::string& path, const std::vector<Mat>& recommendations,
                    const Mat& regrets);
struct LoadedRuns {
  Mat regrets;
  std::vector<Mat> recommendations;
};
LoadedRuns load_runs_csv(const std::string& path);

nlohmann::json summarize_experiment(const ExperimentConfig& cfg,
                                    const std::vector<MethodRuns>& methods);

// Spearman rank correlation with midranks for ties.
double spearman(const Vec& a, const Vec& b);

// Acquisition-fidelity study: a GP-sampled 2-D objective, a handful of
// random observations, then the rejection-sampling surface against the
// approximated one on a shared grid.
struct FidelityConfig {
  int grid_res = 30;
  int n_obs = 10;
  int num_slots = 200;      // M
  int num_features = 1000;  // m
  int rs_budget = 60000;
  std::uint64_t seed = 7;
  Hyperparams psi{1.0, Vec::Constant(2, std::sqrt(0.1)), 1e-6};
  PathOptOptions path;
};

struct FidelityResult {
  Mat centers;
  Vec rs_alpha;
  Vec pes_alpha;
  double spearman_rank = 0.0;
  bool argmax_in_top_decile = false;
  double seconds = 0.0;
  int ep_unconverged = 0;
};

// Writes rs_surface.csv, pes_surface.csv and report.json under out_dir when
// it is nonempty.
FidelityResult run_fidelity_study(const FidelityConfig& cfg, const std::string& out_dir);

}  // namespace pes
