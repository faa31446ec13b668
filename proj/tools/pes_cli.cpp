// Command-line harness: experiment runs, the acquisition-fidelity study, a
// quick single-function run, and an invariant self-test.
#include "pes/bench.hpp"
#include "pes/ep.hpp"
#include "pes/normal.hpp"
#include "pes/oracle.hpp"
#include "pes/parallel.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace {

using namespace pes;

int run_selftest() {
  int failures = 0;
  auto check = [&](bool ok, const std::string& what) {
    std::cout << (ok ? "[ ok ] " : "[FAIL] ") << what << '\n';
    if (!ok) ++failures;
  };

  const Hyperparams hp(1.0, Vec::Constant(2, std::sqrt(0.1)), 1e-6);

  {
    Vec a(2), b(2);
    a << 0.0, 0.0;
    b << 0.1, 0.0;
    const double k = kernel_se(a, b, hp);
    check(std::abs(k - std::exp(-0.05)) < 1e-12, "SE kernel closed form");
    check(std::abs(kernel_se(a, b, hp) - kernel_se(b, a, hp)) == 0.0, "SE kernel symmetry");
  }

  {
    // Derivative covariance against central finite differences.
    Vec a(2), b(2);
    a << 0.31, 0.72;
    b << 0.44, 0.58;
    const double eps = 1e-5;
    Vec bp = b, bm = b;
    bp(1) += eps;
    bm(1) -= eps;
    const double fd = (kernel_se(a, bp, hp) - kernel_se(a, bm, hp)) / (2.0 * eps);
    const double an = observable_cov(Observable::value(a), Observable::gradient(b, 1), hp);
    check(std::abs(fd - an) < 1e-6, "derivative covariance matches finite differences");
  }

  {
    const SiteUpdate upd = ep_site_trunc_negative(0.0, 1.0);
    check(std::abs(upd.tilted_mean + std::sqrt(2.0 / M_PI)) < 1e-12 &&
              std::abs(upd.tilted_var - (1.0 - 2.0 / M_PI)) < 1e-12,
          "truncation site tilted moments");
  }

  {
    Vec mf = Vec::Zero(2);
    Mat vf = Mat::Identity(2, 2);
    const ConditionedPrediction pred = truncated_variance(mf, vf);
    check(std::abs(pred.variance - (1.0 - 1.0 / M_PI)) < 1e-12,
          "truncated variance worked example");
  }

  Dataset data(Domain::unit_cube(2));
  Rng rng = make_rng(11);
  const auto fn = [](const Vec& x) {
    return std::exp(-8.0 * (x.array() - 0.4).square().sum());
  };
  for (int i = 0; i < 6; ++i) {
    Vec x(2);
    x << uniform01(rng), uniform01(rng);
    data.append(x, fn(x) + 1e-3 * normal01(rng));
  }

  {
    const auto s1 = sample_maximizers(data, hp, 4, 128, 99);
    const auto s2 = sample_maximizers(data, hp, 4, 128, 99);
    bool same = true;
    for (int i = 0; i < 4; ++i) same = same && s1[i].x == s2[i].x;
    check(same, "maximizer sampling is deterministic under a fixed seed");
  }

  {
    PrecomputeOptions pre;
    pre.mode = HyperMode::FixedPsi;
    pre.known_psi = hp;
    const AcquisitionContext ctx = pes_precompute(data, HyperPrior::broad(2), 8, 256, 5, pre);
    bool nonneg = true;
    bool bounded = true;
    for (int i = 0; i < 225; ++i) {
      Vec x(2);
      x << (i % 15 + 0.5) / 15.0, (i / 15 + 0.5) / 15.0;
      nonneg = nonneg && pes_acquisition(ctx, x) >= -1e-6;
      const ConditionedPrediction p = ctx.slots[0].pred.predict(x);
      bounded = bounded && p.variance >= 0.0 && p.variance <= p.vf(0, 0) + 1e-15;
    }
    check(nonneg, "acquisition nonnegative on a grid");
    check(bounded, "conditioned variance within [0, Vf(0,0)]");
  }

  {
    const GpPosterior gp(data, hp);
    Vec x = Vec::Constant(2, 0.21);
    Dataset grown = data;
    grown.append(Vec::Constant(2, 0.8), 0.3);
    const GpPosterior gp2(grown, hp);
    check(gp2.predict(x).variance <= gp.predict(x).variance + 1e-8,
          "posterior variance shrinks as data grow");
  }

  std::cout << (failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predictive entropy search optimization harness"};
  app.require_subcommand(1);

  int threads = 1;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  std::string out_dir = "pes_out";
  app.add_option("--threads", threads, "worker threads (1 = serial)");
  app.add_option("--seed", seed_override, "override the config seed")
      ->each([&](const std::string&) { seed_set = true; });
  app.add_option("--out", out_dir, "output directory");

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "run an experiment config");
  run_cmd->add_option("config", config_path, "JSON config file")->required();

  std::string va_config_path;
  auto* va_cmd = app.add_subcommand("validate-acquisition",
                                    "rejection-sampling fidelity study");
  va_cmd->add_option("config", va_config_path, "JSON config file")->required();

  std::string bench_name = "branin";
  std::string bench_method = "PES";
  int bench_budget = 20;
  int bench_restarts = 1;
  int bench_M = 16;
  int bench_m = 320;
  auto* bench_cmd = app.add_subcommand("bench", "single-method single-function run");
  bench_cmd->add_option("name", bench_name, "branin | cosines | hartmann6 | within-model")
      ->required();
  bench_cmd->add_option("--method", bench_method, "PES | PES-NB | EI");
  bench_cmd->add_option("--budget", bench_budget, "iterations");
  bench_cmd->add_option("--restarts", bench_restarts, "independent restarts");
  bench_cmd->add_option("--M", bench_M, "marginalization slots");
  bench_cmd->add_option("--m", bench_m, "random features");

  auto* selftest_cmd = app.add_subcommand("selftest", "run the quick invariant suite");

  CLI11_PARSE(app, argc, argv);
  pes::set_num_threads(threads);

  try {
    if (*selftest_cmd) return run_selftest();

    std::filesystem::create_directories(out_dir);

    if (*run_cmd) {
      ExperimentConfig cfg = load_config(config_path);
      if (seed_set) cfg.seed = seed_override;
      const ExperimentResult result = run_experiment(cfg, out_dir);
      for (const MethodRuns& mr : result.methods) {
        std::cout << method_name(mr.method) << ": final median regret "
                  << mr.curve.median_curve(cfg.budget - 1) << " (" << mr.failures
                  << " failed runs)\n";
      }
      std::cout << "results written to " << out_dir << '\n';
      return 0;
    }

    if (*va_cmd) {
      std::ifstream in(va_config_path);
      if (!in) throw std::runtime_error("cannot open config: " + va_config_path);
      nlohmann::json j;
      in >> j;
      FidelityConfig cfg;
      cfg.grid_res = j.value("grid_res", cfg.grid_res);
      cfg.n_obs = j.value("n_obs", cfg.n_obs);
      cfg.num_slots = j.value("M", cfg.num_slots);
      cfg.num_features = j.value("m", cfg.num_features);
      cfg.rs_budget = j.value("rs_budget", cfg.rs_budget);
      cfg.seed = j.value("seed", cfg.seed);
      if (seed_set) cfg.seed = seed_override;
      if (j.contains("known_psi")) {
        const auto& k = j.at("known_psi");
        std::vector<double> ls = k.at("lengthscales").get<std::vector<double>>();
        cfg.psi = Hyperparams(k.at("amplitude").get<double>(),
                              Eigen::Map<const Vec>(ls.data(), static_cast<int>(ls.size())),
                              k.at("noise_variance").get<double>());
      }
      const FidelityResult res = run_fidelity_study(cfg, out_dir);
      std::cout << "spearman " << res.spearman_rank << ", argmax in RS top decile: "
                << (res.argmax_in_top_decile ? "yes" : "no") << ", " << res.seconds
                << " s\n";
      std::cout << "surfaces written to " << out_dir << '\n';
      return 0;
    }

    if (*bench_cmd) {
      ExperimentConfig cfg;
      cfg.function = bench_name;
      cfg.methods = {method_from_name(bench_method)};
      cfg.budget = bench_budget;
      cfg.restarts = bench_restarts;
      cfg.num_slots = bench_M;
      cfg.num_features = bench_m;
      if (seed_set) cfg.seed = seed_override;
      if (bench_name == "within-model")
        cfg.known_psi = Hyperparams(1.0, Vec::Constant(2, std::sqrt(0.1)), 1e-6);
      const ExperimentResult result = run_experiment(cfg, out_dir);
      std::cout << bench_method << " on " << bench_name << ": final median regret "
                << result.methods[0].curve.median_curve(cfg.budget - 1) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
