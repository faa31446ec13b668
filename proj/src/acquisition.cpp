#include "pes/acquisition.hpp"

#include "pes/normal.hpp"
#include "pes/parallel.hpp"

#include <chrono>
#include <cmath>

namespace pes {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Hyperparams> draw_psi_slots(const Dataset& data, const HyperPrior& prior,
                                        int count, std::uint64_t seed,
                                        const PrecomputeOptions& opts) {
  if (opts.mode == HyperMode::FixedPsi && opts.known_psi) {
    return std::vector<Hyperparams>(count, *opts.known_psi);
  }
  Rng rng = make_rng(split_seed(seed, StreamTag::HyperChain));
  HyperPosteriorSamples chain =
      slice_sample_hypers(data, prior, count, rng, opts.slice);
  if (opts.mode == HyperMode::FixedPsi) {
    const Hyperparams mean = posterior_mean_hypers(chain.samples);
    return std::vector<Hyperparams>(count, mean);
  }
  return chain.samples;
}

}  // namespace

Slot build_slot(const Dataset& data, const Hyperparams& psi, int m, std::uint64_t seed,
                const PrecomputeOptions& opts, PrecomputeStats* stats) {
  auto t0 = std::chrono::steady_clock::now();
  MaximizerSample xstar = draw_maximizer(data, psi, m, seed, opts.path);
  const double t_sample = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  GpPosterior gp(data, psi);
  ZPrior prior = build_z_prior(data, xstar, psi);
  EPCache ep = ep_refine(prior, data.y_max(), psi.noise_variance, opts.ep);
  ConditionedPredictor pred(data, xstar, psi, ep);
  const double t_cond = seconds_since(t0);

  if (stats) {
    stats->seconds_sampling += t_sample;
    stats->seconds_conditioning += t_cond;
    if (!ep.converged) ++stats->ep_unconverged;
  }
  return Slot{psi, std::move(gp), std::move(xstar), std::move(ep), std::move(pred)};
}

AcquisitionContext pes_precompute(const Dataset& data, const HyperPrior& prior, int count,
                                  int m, std::uint64_t seed,
                                  const PrecomputeOptions& opts) {
  if (data.empty()) throw std::invalid_argument("precompute needs a nonempty dataset");
  if (count < 1) throw std::invalid_argument("slot count must be >= 1");

  AcquisitionContext ctx;
  ctx.data_size = data.size();
  ctx.seed = seed;

  const std::vector<Hyperparams> psis = draw_psi_slots(data, prior, count, seed, opts);

  std::vector<PrecomputeStats> stats(count);
  ctx.slots = parallel_map<Slot>(count, [&](int i) {
    return build_slot(data, psis[i], m, split_seed(seed, 0x6d61780aULL, i), opts,
                      &stats[i]);
  });
  for (const auto& s : stats) {
    ctx.stats.seconds_sampling += s.seconds_sampling;
    ctx.stats.seconds_conditioning += s.seconds_conditioning;
    ctx.stats.ep_unconverged += s.ep_unconverged;
  }
  return ctx;
}

double pes_acquisition(const AcquisitionContext& ctx, const Vec& x) {
  double acc = 0.0;
  for (const Slot& slot : ctx.slots) {
    const double s2 = slot.psi.noise_variance;
    const double v = slot.gp.predict(x).variance;
    const double vc = slot.pred.predict(x).variance;
    acc += 0.5 * std::log(v + s2) - 0.5 * std::log(vc + s2);
  }
  return acc / static_cast<double>(ctx.slots.size());
}

double ei_acquisition(const GpPosterior& gp, const Vec& x, double incumbent) {
  const Prediction p = gp.predict(x);
  const double delta = p.mean - incumbent;
  if (p.variance <= 0.0) return std::max(delta, 0.0);
  const double sd = std::sqrt(p.variance);
  const double z = delta / sd;
  return delta * norm_cdf(z) + sd * norm_pdf(z);
}

double ei_acquisition(const std::vector<GpPosterior>& slots, const Vec& x,
                      double incumbent) {
  double acc = 0.0;
  for (const GpPosterior& gp : slots) acc += ei_acquisition(gp, x, incumbent);
  return acc / static_cast<double>(slots.size());
}

double ei_incumbent(const std::vector<GpPosterior>& slots, const Dataset& data) {
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < data.size(); ++i) {
    const Vec x = data.input(i);
    double mean = 0.0;
    for (const GpPosterior& gp : slots) mean += gp.predict(x).mean;
    best = std::max(best, mean / static_cast<double>(slots.size()));
  }
  return best;
}

namespace {

struct SearchResult {
  Vec x;
  double value;
};

SearchResult pattern_search(const std::function<double(const Vec&)>& f,
                            const Domain& domain, Vec x, const AcqOptOptions& opts) {
  const int d = domain.dim();
  const Vec range = domain.range();
  x = domain.clip(x);
  double fx = f(x);
  double step = opts.init_step;
  while (step >= opts.final_step) {
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

Vec optimize_acquisition(const std::function<double(const Vec&)>& acq,
                         const Domain& domain, Rng& rng,
                         const std::vector<Vec>& extra_starts,
                         const AcqOptOptions& opts) {
  const int d = domain.dim();
  std::vector<Vec> starts = latin_hypercube(domain, opts.lhs_starts_per_dim * d, rng);
  for (const Vec& s : extra_starts) starts.push_back(domain.clip(s));

  SearchResult best{Vec(), -std::numeric_limits<double>::infinity()};
  for (const Vec& s : starts) {
    const SearchResult res = pattern_search(acq, domain, s, opts);
    if (res.value > best.value) best = res;
  }
  return best.x;
}

Vec recommend(const std::vector<GpPosterior>& slots, const Domain& domain, Rng& rng,
              const AcqOptOptions& opts) {
  if (slots.empty() || slots.front().size() == 0)
    throw std::invalid_argument("recommendation needs a nonempty dataset");
  auto mean = [&](const Vec& x) {
    double acc = 0.0;
    for (const GpPosterior& gp : slots) acc += gp.predict(x).mean;
    return acc / static_cast<double>(slots.size());
  };
  // Observed inputs are natural candidates for the posterior-mean maximum.
  std::vector<Vec> starts;
  const Mat& inputs = slots.front().inputs();
  for (int i = 0; i < inputs.rows(); ++i) starts.push_back(inputs.row(i).transpose());
  return optimize_acquisition(mean, domain, rng, starts, opts);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::PES:
      return "PES";
    case Method::PESNB:
      return "PES-NB";
    case Method::EI:
      return "EI";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "PES") return Method::PES;
  if (name == "PES-NB" || name == "PESNB") return Method::PESNB;
  if (name == "EI") return Method::EI;
  throw std::invalid_argument("unknown method: " + name);
}

BoRunState bo_loop(const std::function<double(const Vec&)>& objective,
                   const Domain& domain, const BoOptions& opts, std::uint64_t seed) {
  if (opts.budget < 1) throw std::invalid_argument("budget must be >= 1");
  if (opts.init_count < 1) throw std::invalid_argument("init_count must be >= 1");
  const int d = domain.dim();

  HyperPrior prior = opts.prior;
  if (prior.shapes.size() == 0) prior = HyperPrior::broad(d);

  BoRunState state;
  state.method = opts.method;
  state.seed = seed;
  state.queries.resize(0, d);
  state.observations.resize(0);
  state.recommendations.resize(opts.budget, d);

  Dataset data(domain);
  Rng noise_rng = make_rng(split_seed(seed, StreamTag::QueryNoise));

  auto query = [&](const Vec& x) {
    const double y = objective(x) + opts.query_noise_sd * normal01(noise_rng);
    data.append(x, y);
    state.queries.conservativeResize(state.queries.rows() + 1, d);
    state.queries.row(state.queries.rows() - 1) = x.transpose();
    state.observations.conservativeResize(state.observations.size() + 1);
    state.observations(state.observations.size() - 1) = y;
    return y;
  };

  PrecomputeOptions pre;
  pre.known_psi = opts.known_psi;
  pre.path = opts.path;
  pre.slice = opts.slice;
  pre.ep = opts.ep;
  if (opts.method == Method::PESNB || opts.known_psi || opts.force_fixed_psi)
    pre.mode = HyperMode::FixedPsi;
  else
    pre.mode = HyperMode::Bayes;

  try {
    Rng init_rng = make_rng(split_seed(seed, StreamTag::Init));
    for (const Vec& x : latin_hypercube(domain, opts.init_count, init_rng)) query(x);

    for (int iter = 0; iter < opts.budget; ++iter) {
      const std::uint64_t iter_seed = split_seed(seed, 0x626f5f69ULL, iter);
      Rng acq_rng = make_rng(split_seed(iter_seed, StreamTag::AcqOptimize));

      std::vector<Hyperparams> psis;  // reused for the recommendation
      Vec x_next(d);

      if (opts.method == Method::EI) {
        psis = draw_psi_slots(data, prior, opts.num_slots, iter_seed, pre);
        if (pre.mode == HyperMode::FixedPsi) psis.resize(1);
        std::vector<GpPosterior> gps;
        gps.reserve(psis.size());
        for (const Hyperparams& psi : psis) gps.emplace_back(data, psi);
        const double eta = ei_incumbent(gps, data);
        auto acq = [&](const Vec& x) { return ei_acquisition(gps, x, eta); };
        std::vector<Vec> extra;
        for (int i = 0; i < data.size(); ++i) extra.push_back(data.input(i));
        x_next = optimize_acquisition(acq, domain, acq_rng, extra, opts.acq);
      } else {
        AcquisitionContext ctx =
            pes_precompute(data, prior, opts.num_slots, opts.num_features, iter_seed, pre);
        state.ep_unconverged += ctx.stats.ep_unconverged;
        psis.reserve(ctx.slots.size());
        for (const Slot& s : ctx.slots) psis.push_back(s.psi);
        auto acq = [&](const Vec& x) { return pes_acquisition(ctx, x); };
        std::vector<Vec> extra;
        Rng perturb_rng = make_rng(split_seed(iter_seed, StreamTag::AcqOptimize, 1));
        const Vec range = domain.range();
        const int n_extra = std::min<int>(opts.acq.extra_starts, ctx.slots.size());
        for (int i = 0; i < n_extra; ++i) {
          Vec p = ctx.slots[i].xstar.x;
          for (int j = 0; j < d; ++j)
            p(j) += opts.acq.perturb_scale * range(j) * normal01(perturb_rng);
          extra.push_back(domain.clip(p));
        }
        x_next = optimize_acquisition(acq, domain, acq_rng, extra, opts.acq);
      }

      query(x_next);

      // Recommendation on the grown dataset, marginalizing over the
      // iteration's hyperparameter draws (one posterior per distinct psi).
      std::vector<GpPosterior> rec_gps;
      if (pre.mode == HyperMode::FixedPsi && !psis.empty()) {
        rec_gps.emplace_back(data, psis.front());
      } else {
        for (const Hyperparams& psi : psis) rec_gps.emplace_back(data, psi);
      }
      Rng rec_rng = make_rng(split_seed(iter_seed, StreamTag::Recommend));
      state.recommendations.row(iter) =
          recommend(rec_gps, domain, rec_rng, opts.acq).transpose();
      state.iterations_done = iter + 1;
    }
  } catch (const std::exception& e) {
    state.aborted = true;
    state.error = e.what();
  }
  return state;
}

}  // namespace pes
