#include "pes/bench.hpp"

#include "pes/oracle.hpp"
#include "pes/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

namespace pes {

namespace {

constexpr double kPi = std::numbers::pi;

// Coordinate pattern search used by the certification oracles.
struct PolishResult {
  Vec x;
  double value;
};

PolishResult polish(const std::function<double(const Vec&)>& f, const Domain& domain,
                    Vec x, double init_step, double final_step) {
  const int d = domain.dim();
  const Vec range = domain.range();
  x = domain.clip(x);
  double fx = f(x);
  double step = init_step;
  while (step >= final_step) {
    bool improved = false;
    for (int j = 0; j < d; ++j) {
      for (double sign : {1.0, -1.0}) {
        Vec cand = x;
        cand(j) = std::min(std::max(cand(j) + sign * step * range(j), domain.lower(j)),
                           domain.upper(j));
        if (cand(j) == x(j)) continue;
        const double fc = f(cand);
        if (fc > fx) {
          x = cand;
          fx = fc;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return {x, fx};
}

}  // namespace

BenchmarkFn make_branin() {
  BenchmarkFn fn;
  fn.name = "branin";
  fn.domain = Domain::unit_cube(2);
  fn.eval = [](const Vec& x) {
    // Native domain [-5, 10] x [0, 15]; negated to a maximization problem.
    const double u = 15.0 * x(0) - 5.0;
    const double v = 15.0 * x(1);
    const double b = 5.1 / (4.0 * kPi * kPi);
    const double c = 5.0 / kPi;
    const double t = 1.0 / (8.0 * kPi);
    const double inner = v - b * u * u + c * u - 6.0;
    return -(inner * inner + 10.0 * (1.0 - t) * std::cos(u) + 10.0);
  };
  fn.known_maximizer = Vec(2);
  fn.known_maximizer << (kPi + 5.0) / 15.0, 2.275 / 15.0;
  fn.known_max = -0.39788735772973816;
  fn.noise_variance = 1e-3;
  return fn;
}

BenchmarkFn make_cosines() {
  BenchmarkFn fn;
  fn.name = "cosines";
  fn.domain = Domain::unit_cube(2);
  fn.eval = [](const Vec& x) {
    double acc = 1.0;
    for (int j = 0; j < 2; ++j) {
      const double u = 1.6 * x(j) - 0.5;
      acc -= u * u - 0.3 * std::cos(3.0 * kPi * u);
    }
    return acc;
  };
  fn.known_maximizer = Vec(2);
  fn.known_maximizer << 0.3125, 0.3125;
  fn.known_max = 1.6;
  fn.noise_variance = 1e-3;
  return fn;
}

BenchmarkFn make_hartmann6() {
  BenchmarkFn fn;
  fn.name = "hartmann6";
  fn.domain = Domain::unit_cube(6);
  static const double A[4][6] = {{10, 3, 17, 3.5, 1.7, 8},
                                 {0.05, 10, 17, 0.1, 8, 14},
                                 {3, 3.5, 1.7, 10, 17, 8},
                                 {17, 8, 0.05, 10, 0.1, 14}};
  static const double C[4] = {1.0, 1.2, 3.0, 3.2};
  static const double P[4][6] = {{0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886},
                                 {0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991},
                                 {0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650},
                                 {0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381}};
  fn.eval = [](const Vec& x) {
    double acc = 0.0;
    for (int i = 0; i < 4; ++i) {
      double expo = 0.0;
      for (int j = 0; j < 6; ++j) {
        const double diff = x(j) - P[i][j];
        expo += A[i][j] * diff * diff;
      }
      acc += C[i] * std::exp(-expo);
    }
    return acc;  // already a maximization problem once negated from the usual form
  };
  fn.known_maximizer = Vec(6);
  fn.known_maximizer << 0.20168951, 0.15001069, 0.47687397, 0.27533243, 0.31165162,
      0.65730053;
  fn.known_max = 3.322368011415515;
  fn.noise_variance = 1e-3;
  return fn;
}

void certify_benchmark(const BenchmarkFn& fn, double tol) {
  const int d = fn.domain.dim();
  PolishResult best{fn.known_maximizer, fn.eval(fn.known_maximizer)};

  std::vector<Vec> starts;
  if (d == 2) {
    const int res = 400;
    Vec grid_best(2);
    double best_val = -std::numeric_limits<double>::infinity();
    Vec x(2);
    for (int i = 0; i < res; ++i) {
      x(0) = fn.domain.lower(0) + (i + 0.5) * fn.domain.range()(0) / res;
      for (int j = 0; j < res; ++j) {
        x(1) = fn.domain.lower(1) + (j + 0.5) * fn.domain.range()(1) / res;
        const double v = fn.eval(x);
        if (v > best_val) {
          best_val = v;
          grid_best = x;
        }
      }
    }
    starts.push_back(grid_best);
  } else {
    Rng rng = make_rng(0xbe9c4u);
    starts = latin_hypercube(fn.domain, 60 * d, rng);
  }
  starts.push_back(fn.known_maximizer);

  for (const Vec& s : starts) {
    const PolishResult res = polish(fn.eval, fn.domain, s, 0.1, 1e-9);
    if (res.value > best.value) best = res;
  }
  if (std::abs(best.value - fn.known_max) > tol)
    throw std::logic_error(fn.name + ": certified optimum " + std::to_string(best.value) +
                           " disagrees with the registered value");
}

const BenchmarkFn& benchmark_by_name(const std::string& name) {
  static std::map<std::string, BenchmarkFn> registry;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = registry.find(name);
  if (it != registry.end()) return it->second;

  BenchmarkFn fn;
  if (name == "branin")
    fn = make_branin();
  else if (name == "cosines")
    fn = make_cosines();
  else if (name == "hartmann6")
    fn = make_hartmann6();
  else
    throw std::invalid_argument("unknown benchmark: " + name);
  certify_benchmark(fn);
  return registry.emplace(name, std::move(fn)).first->second;
}

WithinModelObjective::WithinModelObjective(const Hyperparams& hp, const Domain& domain,
                                           Mat latent_inputs, Vec latent_values)
    : hp_(hp),
      latent_inputs_(std::move(latent_inputs)),
      latent_values_(std::move(latent_values)) {
  const int n = static_cast<int>(latent_inputs_.rows());
  Mat k = kernel_se_matrix(latent_inputs_, hp_, true);
  const CholResult chol = chol_with_jitter(k, hp_.amplitude);
  weights_ = chol.llt.solve(latent_values_);
  scaled_inputs_ = latent_inputs_;
  scaled_inputs_.array().rowwise() /= hp_.lengthscales.transpose().array();

  // Certify the maximum: coarse dense grid, then a local polish.
  const int res = 200;
  const int d = domain.dim();
  const int total = static_cast<int>(std::pow(res, d));
  Vec best_x(d);
  double best_val = -std::numeric_limits<double>::infinity();
  const int chunk = 4096;
  Mat pts(chunk, d);
  for (int start = 0; start < total; start += chunk) {
    const int b = std::min(chunk, total - start);
    for (int r = 0; r < b; ++r) {
      int rem = start + r;
      for (int j = d - 1; j >= 0; --j) {
        const int idx = rem % res;
        rem /= res;
        pts(r, j) = domain.lower(j) + (idx + 0.5) * (domain.upper(j) - domain.lower(j)) / res;
      }
    }
    Mat scaled = pts.topRows(b);
    scaled.array().rowwise() /= hp_.lengthscales.transpose().array();
    const Vec sq_g = scaled.rowwise().squaredNorm();
    const Vec sq_d = scaled_inputs_.rowwise().squaredNorm();
    Mat dist2 = sq_g.replicate(1, n) + sq_d.transpose().replicate(b, 1) -
                2.0 * (scaled * scaled_inputs_.transpose());
    const Vec means =
        (hp_.amplitude * (-0.5 * dist2.array().cwiseMax(0.0)).exp()).matrix() * weights_;
    for (int r = 0; r < b; ++r) {
      if (means(r) > best_val) {
        best_val = means(r);
        best_x = pts.row(r).transpose();
      }
    }
  }
  auto eval = [this](const Vec& x) { return (*this)(x); };
  const PolishResult res2 = polish(eval, domain, best_x, 2.0 / res, 1e-9);
  maximizer_ = res2.x;
  max_value_ = res2.value;
}

double WithinModelObjective::operator()(const Vec& x) const {
  const Vec k = kernel_se_row(latent_inputs_, x, hp_);
  return k.dot(weights_);
}

WithinModelFactory::WithinModelFactory(const Hyperparams& hp, const Domain& domain,
                                       int per_dim)
    : hp_(hp), domain_(domain) {
  const int d = domain.dim();
  const int total = static_cast<int>(std::pow(per_dim, d));
  grid_.resize(total, d);
  for (int c = 0; c < total; ++c) {
    int rem = c;
    for (int j = d - 1; j >= 0; --j) {
      const int idx = rem % per_dim;
      rem /= per_dim;
      grid_(c, j) =
          domain.lower(j) + (idx + 0.5) * (domain.upper(j) - domain.lower(j)) / per_dim;
    }
  }
  const Mat k = kernel_se_matrix(grid_, hp_, false);
  const CholResult chol = chol_with_jitter(k, hp_.amplitude);
  chol_lower_ = Mat(chol.llt.matrixL());
}

WithinModelObjective WithinModelFactory::make(std::uint64_t seed) const {
  Rng rng = make_rng(split_seed(seed, StreamTag::Objective));
  const Vec xi = normal_vector(static_cast<int>(grid_.rows()), rng);
  const Vec values = chol_lower_ * xi;
  return WithinModelObjective(hp_, domain_, grid_, values);
}

WithinModelObjective gen_within_model_objective(const Hyperparams& hp,
                                                const Domain& domain, int per_dim,
                                                std::uint64_t seed) {
  return WithinModelFactory(hp, domain, per_dim).make(seed);
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

RegretCurve make_regret_curve(Mat regrets, int bootstrap_replicates, std::uint64_t seed) {
  RegretCurve curve;
  curve.regrets = std::move(regrets);
  const int runs = static_cast<int>(curve.regrets.rows());
  const int budget = static_cast<int>(curve.regrets.cols());
  curve.median_curve.resize(budget);
  curve.band_lo.resize(budget);
  curve.band_hi.resize(budget);

  std::vector<double> column(runs);
  Rng rng = make_rng(split_seed(seed, StreamTag::Bootstrap));
  std::uniform_int_distribution<int> pick(0, runs - 1);

  // One shared resampling plan across iterations keeps the bands coherent.
  Mat boot_medians(bootstrap_replicates, budget);
  std::vector<std::vector<int>> plans(bootstrap_replicates, std::vector<int>(runs));
  for (auto& plan : plans)
    for (int& idx : plan) idx = pick(rng);

  for (int t = 0; t < budget; ++t) {
    for (int r = 0; r < runs; ++r) column[r] = curve.regrets(r, t);
    curve.median_curve(t) = median(column);
    std::vector<double> resampled(runs);
    for (int b = 0; b < bootstrap_replicates; ++b) {
      for (int r = 0; r < runs; ++r) resampled[r] = column[plans[b][r]];
      boot_medians(b, t) = median(resampled);
    }
    const double mean = boot_medians.col(t).mean();
    const double sd = std::sqrt(
        (boot_medians.col(t).array() - mean).square().sum() /
        std::max(1, bootstrap_replicates - 1));
    curve.band_lo(t) = curve.median_curve(t) - sd;
    curve.band_hi(t) = curve.median_curve(t) + sd;
  }
  return curve;
}

std::pair<double, double> bootstrap_median_diff_interval(const std::vector<double>& a,
                                                         const std::vector<double>& b,
                                                         int replicates,
                                                         std::uint64_t seed) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("paired bootstrap needs matching nonempty samples");
  const int n = static_cast<int>(a.size());
  Rng rng = make_rng(split_seed(seed, StreamTag::Bootstrap, 1));
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<double> diffs(replicates);
  std::vector<double> ra(n), rb(n);
  for (int r = 0; r < replicates; ++r) {
    for (int i = 0; i < n; ++i) {
      const int j = pick(rng);
      ra[i] = a[j];
      rb[i] = b[j];
    }
    diffs[r] = median(ra) - median(rb);
  }
  std::sort(diffs.begin(), diffs.end());
  auto quantile = [&](double q) {
    const double pos = q * (replicates - 1);
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = std::min(lo + 1, replicates - 1);
    const double w = pos - lo;
    return (1.0 - w) * diffs[lo] + w * diffs[hi];
  };
  return {quantile(0.05), quantile(0.95)};
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.function = j.value("function", cfg.function);
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& name : j.at("methods")) cfg.methods.push_back(method_from_name(name));
  }
  cfg.restarts = j.value("restarts", cfg.restarts);
  cfg.budget = j.value("budget", cfg.budget);
  cfg.num_slots = j.value("M", cfg.num_slots);
  cfg.num_features = j.value("m", cfg.num_features);
  cfg.init_count = j.value("init_count", cfg.init_count);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.mode = j.value("mode", cfg.mode);
  if (cfg.mode != "bayes" && cfg.mode != "fixed-psi")
    throw std::invalid_argument("mode must be 'bayes' or 'fixed-psi'");
  if (j.contains("known_psi")) {
    const auto& k = j.at("known_psi");
    std::vector<double> ls = k.at("lengthscales").get<std::vector<double>>();
    cfg.known_psi = Hyperparams(
        k.at("amplitude").get<double>(),
        Eigen::Map<const Vec>(ls.data(), static_cast<int>(ls.size())),
        k.at("noise_variance").get<double>());
  }
  if (j.contains("hyperprior")) {
    cfg.hyperprior_shape = j.at("hyperprior").value("shape", cfg.hyperprior_shape);
    cfg.hyperprior_rate = j.at("hyperprior").value("rate", cfg.hyperprior_rate);
  }
  if (j.contains("noise_variance")) cfg.noise_variance = j.at("noise_variance").get<double>();
  cfg.within_model_grid = j.value("within_model_grid", cfg.within_model_grid);
  cfg.bootstrap_replicates = j.value("bootstrap_replicates", cfg.bootstrap_replicates);
  if (j.contains("opt")) {
    const auto& o = j.at("opt");
    cfg.path.lhs_starts_per_dim = o.value("path_lhs_starts_per_dim", cfg.path.lhs_starts_per_dim);
    cfg.path.max_observed_starts = o.value("path_max_observed_starts", cfg.path.max_observed_starts);
    cfg.acq.lhs_starts_per_dim = o.value("acq_lhs_starts_per_dim", cfg.acq.lhs_starts_per_dim);
    cfg.acq.extra_starts = o.value("acq_extra_starts", cfg.acq.extra_starts);
    cfg.acq.final_step = o.value("acq_final_step", cfg.acq.final_step);
    cfg.slice.burn_in = o.value("slice_burn_in", cfg.slice.burn_in);
    cfg.slice.thin = o.value("slice_thin", cfg.slice.thin);
  }
  return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["function"] = cfg.function;
  std::vector<std::string> names;
  for (Method m : cfg.methods) names.push_back(method_name(m));
  j["methods"] = names;
  j["restarts"] = cfg.restarts;
  j["budget"] = cfg.budget;
  j["M"] = cfg.num_slots;
  j["m"] = cfg.num_features;
  j["init_count"] = cfg.init_count;
  j["seed"] = cfg.seed;
  j["mode"] = cfg.mode;
  if (cfg.known_psi) {
    nlohmann::json k;
    k["amplitude"] = cfg.known_psi->amplitude;
    k["lengthscales"] = std::vector<double>(
        cfg.known_psi->lengthscales.data(),
        cfg.known_psi->lengthscales.data() + cfg.known_psi->lengthscales.size());
    k["noise_variance"] = cfg.known_psi->noise_variance;
    j["known_psi"] = k;
  }
  j["hyperprior"] = {{"shape", cfg.hyperprior_shape}, {"rate", cfg.hyperprior_rate}};
  if (cfg.noise_variance) j["noise_variance"] = *cfg.noise_variance;
  j["within_model_grid"] = cfg.within_model_grid;
  j["bootstrap_replicates"] = cfg.bootstrap_replicates;
  j["opt"] = {{"path_lhs_starts_per_dim", cfg.path.lhs_starts_per_dim},
              {"path_max_observed_starts", cfg.path.max_observed_starts},
              {"acq_lhs_starts_per_dim", cfg.acq.lhs_starts_per_dim},
              {"acq_extra_starts", cfg.acq.extra_starts},
              {"acq_final_step", cfg.acq.final_step},
              {"slice_burn_in", cfg.slice.burn_in},
              {"slice_thin", cfg.slice.thin}};
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  in >> j;
  return config_from_json(j);
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_runs_csv(const std::string& path, const std::vector<Mat>& recommendations,
                    const Mat& regrets) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const int d = recommendations.empty() ? 0 : static_cast<int>(recommendations[0].cols());
  out << "run_id,iteration";
  for (int j = 0; j < d; ++j) out << ",x" << j;
  out << ",regret\n";
  for (std::size_t r = 0; r < recommendations.size(); ++r) {
    for (int t = 0; t < recommendations[r].rows(); ++t) {
      out << r << ',' << (t + 1);
      for (int j = 0; j < d; ++j) out << ',' << format_double(recommendations[r](t, j));
      out << ',' << format_double(regrets(static_cast<int>(r), t)) << '\n';
    }
  }
}

LoadedRuns load_runs_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  std::getline(in, line);  // header
  std::stringstream header(line);
  std::string field;
  int columns = 0;
  while (std::getline(header, field, ',')) ++columns;
  const int d = columns - 3;

  std::vector<std::vector<Vec>> recs;
  std::vector<std::vector<double>> regs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> vals;
    while (std::getline(ss, field, ',')) vals.push_back(std::strtod(field.c_str(), nullptr));
    const int run = static_cast<int>(vals[0]);
    if (run >= static_cast<int>(recs.size())) {
      recs.resize(run + 1);
      regs.resize(run + 1);
    }
    Vec x(d);
    for (int j = 0; j < d; ++j) x(j) = vals[2 + j];
    recs[run].push_back(x);
    regs[run].push_back(vals[2 + d]);
  }

  LoadedRuns out;
  const int runs = static_cast<int>(recs.size());
  const int budget = runs > 0 ? static_cast<int>(regs[0].size()) : 0;
  out.regrets.resize(runs, budget);
  for (int r = 0; r < runs; ++r) {
    Mat rec(budget, d);
    for (int t = 0; t < budget; ++t) {
      rec.row(t) = recs[r][t].transpose();
      out.regrets(r, t) = regs[r][t];
    }
    out.recommendations.push_back(std::move(rec));
  }
  return out;
}

nlohmann::json summarize_experiment(const ExperimentConfig& cfg,
                                    const std::vector<MethodRuns>& methods) {
  nlohmann::json summary;
  summary["config"] = config_to_json(cfg);
  nlohmann::json per_method;
  for (const MethodRuns& mr : methods) {
    nlohmann::json m;
    m["runs"] = mr.regrets.rows();
    m["failures"] = mr.failures;
    m["run_seeds"] = mr.run_seeds;
    auto to_vec = [](const Vec& v) {
      return std::vector<double>(v.data(), v.data() + v.size());
    };
    m["median_regret"] = to_vec(mr.curve.median_curve);
    m["band_lo"] = to_vec(mr.curve.band_lo);
    m["band_hi"] = to_vec(mr.curve.band_hi);
    per_method[method_name(mr.method)] = m;
  }
  summary["methods"] = per_method;
  return summary;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  if (cfg.restarts < 1 || cfg.budget < 1)
    throw std::invalid_argument("experiment needs restarts >= 1 and budget >= 1");
  for (Method m : cfg.methods) (void)method_name(m);

  const bool within_model = cfg.function == "within-model";
  Domain domain = Domain::unit_cube(2);
  double noise_var = 1e-3;
  std::optional<WithinModelFactory> factory;
  const BenchmarkFn* bench = nullptr;
  Hyperparams wm_psi;
  if (within_model) {
    wm_psi = cfg.known_psi ? *cfg.known_psi
                           : Hyperparams(1.0, Vec::Constant(2, std::sqrt(0.1)), 1e-6);
    domain = Domain::unit_cube(wm_psi.dim());
    factory.emplace(wm_psi, domain, cfg.within_model_grid);
    noise_var = wm_psi.noise_variance;
  } else {
    bench = &benchmark_by_name(cfg.function);
    domain = bench->domain;
    noise_var = bench->noise_variance;
  }
  if (cfg.noise_variance) noise_var = *cfg.noise_variance;

  ExperimentResult result;
  result.config = cfg;

  struct RunOutcome {
    Mat recommendations;
    Vec regrets;
    bool failed = false;
    std::uint64_t seed = 0;
  };

  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const Method method = cfg.methods[mi];
    auto outcomes = parallel_map<RunOutcome>(cfg.restarts, [&](int restart) {
      RunOutcome outcome;
      outcome.seed = split_seed(cfg.seed, 0x72756eULL, static_cast<std::uint64_t>(mi),
                                static_cast<std::uint64_t>(restart));

      std::function<double(const Vec&)> objective;
      double true_max = 0.0;
      std::optional<WithinModelObjective> wm;
      if (within_model) {
        wm.emplace(factory->make(split_seed(cfg.seed, 0x6f626aULL, restart)));
        objective = [&wm](const Vec& x) { return (*wm)(x); };
        true_max = wm->max_value();
      } else {
        objective = bench->eval;
        true_max = bench->known_max;
      }

      BoOptions opts;
      opts.method = method;
      opts.budget = cfg.budget;
      opts.init_count = cfg.init_count;
      opts.num_slots = cfg.num_slots;
      opts.num_features = cfg.num_features;
      opts.prior = HyperPrior::broad(domain.dim(), cfg.hyperprior_shape, cfg.hyperprior_rate);
      opts.known_psi = within_model ? std::optional<Hyperparams>(wm_psi) : cfg.known_psi;
      opts.force_fixed_psi = cfg.mode == "fixed-psi";
      opts.query_noise_sd = std::sqrt(noise_var);
      opts.path = cfg.path;
      opts.acq = cfg.acq;
      opts.slice = cfg.slice;

      const BoRunState state = bo_loop(objective, domain, opts, outcome.seed);
      if (state.aborted || state.iterations_done < cfg.budget) {
        outcome.failed = true;
        return outcome;
      }
      outcome.recommendations = state.recommendations;
      outcome.regrets.resize(cfg.budget);
      for (int t = 0; t < cfg.budget; ++t) {
        const double val = objective(state.recommendations.row(t).transpose());
        outcome.regrets(t) = std::abs(val - true_max);
      }
      return outcome;
    });

    MethodRuns runs;
    runs.method = method;
    std::vector<Mat> recs;
    std::vector<Vec> regs;
    for (const RunOutcome& o : outcomes) {
      if (o.failed) {
        ++runs.failures;
        continue;
      }
      recs.push_back(o.recommendations);
      regs.push_back(o.regrets);
      runs.run_seeds.push_back(o.seed);
    }
    if (regs.empty()) throw std::runtime_error("all runs failed for " + method_name(method));
    Mat regrets(regs.size(), cfg.budget);
    for (std::size_t r = 0; r < regs.size(); ++r) regrets.row(r) = regs[r].transpose();

    const std::string csv_path =
        out_dir + "/" + cfg.function + "_" + method_name(method) + ".csv";
    write_runs_csv(csv_path, recs, regrets);

    // Aggregate from the persisted file so a reload reproduces the summary
    // bit for bit.
    const LoadedRuns loaded = load_runs_csv(csv_path);
    runs.regrets = loaded.regrets;
    runs.recommendations = loaded.recommendations;
    runs.curve = make_regret_curve(loaded.regrets, cfg.bootstrap_replicates,
                                   split_seed(cfg.seed, StreamTag::Bootstrap, mi));
    result.methods.push_back(std::move(runs));
  }

  result.summary = summarize_experiment(cfg, result.methods);
  std::ofstream out(out_dir + "/summary.json");
  out << result.summary.dump(2) << '\n';
  return result;
}

double spearman(const Vec& a, const Vec& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman needs two equal-length vectors");
  const int n = static_cast<int>(a.size());
  auto ranks = [n](const Vec& v) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) { return v(x) < v(y); });
    Vec r(n);
    int i = 0;
    while (i < n) {
      int j = i;
      while (j + 1 < n && v(order[j + 1]) == v(order[i])) ++j;
      const double mid = 0.5 * (i + j) + 1.0;
      for (int k = i; k <= j; ++k) r(order[k]) = mid;
      i = j + 1;
    }
    return r;
  };
  const Vec ra = ranks(a);
  const Vec rb = ranks(b);
  const double ma = ra.mean();
  const double mb = rb.mean();
  const double cov = ((ra.array() - ma) * (rb.array() - mb)).sum();
  const double sa = std::sqrt((ra.array() - ma).square().sum());
  const double sb = std::sqrt((rb.array() - mb).square().sum());
  return cov / (sa * sb);
}

FidelityResult run_fidelity_study(const FidelityConfig& cfg, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const int d = cfg.psi.dim();
  const Domain domain = Domain::unit_cube(d);

  // Objective drawn from the assumed prior; observations at uniform inputs.
  const WithinModelObjective objective =
      gen_within_model_objective(cfg.psi, domain, 32, split_seed(cfg.seed, 0x66ULL));
  Dataset data(domain);
  Rng obs_rng = make_rng(split_seed(cfg.seed, 0x6fULL));
  const double noise_sd = std::sqrt(cfg.psi.noise_variance);
  for (int i = 0; i < cfg.n_obs; ++i) {
    Vec x(d);
    for (int j = 0; j < d; ++j) x(j) = uniform01(obs_rng);
    data.append(x, objective(x) + noise_sd * normal01(obs_rng));
  }

  const GpPosterior gp(data, cfg.psi);
  const GridSpec grid(domain, Eigen::VectorXi::Constant(d, cfg.grid_res));
  const Mat centers = grid.centers();

  const RsEstimate rs =
      rs_acquisition(gp, grid, centers, cfg.psi.noise_variance, cfg.rs_budget,
                     split_seed(cfg.seed, 0x7273ULL));

  PrecomputeOptions pre;
  pre.mode = HyperMode::FixedPsi;
  pre.known_psi = cfg.psi;
  pre.path = cfg.path;
  const AcquisitionContext ctx =
      pes_precompute(data, HyperPrior::broad(d), cfg.num_slots, cfg.num_features,
                     split_seed(cfg.seed, 0x706573ULL), pre);

  FidelityResult out;
  out.centers = centers;
  out.rs_alpha = rs.alpha;
  out.ep_unconverged = ctx.stats.ep_unconverged;
  out.pes_alpha.resize(centers.rows());
  parallel_for(0, static_cast<int>(centers.rows()), [&](int i) {
    out.pes_alpha(i) = pes_acquisition(ctx, centers.row(i).transpose());
  });

  out.spearman_rank = spearman(out.rs_alpha, out.pes_alpha);
  int pes_argmax = 0;
  out.pes_alpha.maxCoeff(&pes_argmax);
  std::vector<double> sorted_rs(out.rs_alpha.data(), out.rs_alpha.data() + out.rs_alpha.size());
  std::sort(sorted_rs.begin(), sorted_rs.end());
  const double decile =
      sorted_rs[static_cast<std::size_t>(0.9 * (sorted_rs.size() - 1))];
  out.argmax_in_top_decile = out.rs_alpha(pes_argmax) >= decile;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (!out_dir.empty()) {
    auto write_surface = [&](const std::string& name, const Vec& alpha) {
      std::ofstream f(out_dir + "/" + name);
      for (int j = 0; j < d; ++j) f << 'x' << j << ',';
      f << "alpha\n";
      for (int i = 0; i < centers.rows(); ++i) {
        for (int j = 0; j < d; ++j) f << format_double(centers(i, j)) << ',';
        f << format_double(alpha(i)) << '\n';
      }
    };
    write_surface("rs_surface.csv", out.rs_alpha);
    write_surface("pes_surface.csv", out.pes_alpha);
    nlohmann::json report;
    report["spearman"] = out.spearman_rank;
    report["argmax_in_top_decile"] = out.argmax_in_top_decile;
    report["seconds"] = out.seconds;
    report["ep_unconverged"] = out.ep_unconverged;
    report["grid_res"] = cfg.grid_res;
    report["n_obs"] = cfg.n_obs;
    report["M"] = cfg.num_slots;
    report["m"] = cfg.num_features;
    report["rs_budget"] = cfg.rs_budget;
    report["seed"] = cfg.seed;
    std::ofstream rf(out_dir + "/report.json");
    rf << report.dump(2) << '\n';
  }
  return out;
}

}  // namespace pes
