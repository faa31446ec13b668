// Times the data-parallel kernels (slot precompute, acquisition sweeps,
// joint grid sampling) on the serial reference path and with OpenMP workers.
#include "pes/acquisition.hpp"
#include "pes/bench.hpp"
#include "pes/oracle.hpp"
#include "pes/parallel.hpp"

#include <chrono>
#include <cstdio>
#include <omp.h>

using namespace pes;

namespace {

double time_once(const std::function<void()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  body();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  int threads = omp_get_max_threads();
  if (argc > 1) threads = std::max(1, std::atoi(argv[1]));

  const Hyperparams hp(1.0, Vec::Constant(2, std::sqrt(0.1)), 1e-6);
  Dataset data(Domain::unit_cube(2));
  Rng rng = make_rng(3);
  for (int i = 0; i < 20; ++i) {
    Vec x(2);
    x << uniform01(rng), uniform01(rng);
    data.append(x, std::sin(6.0 * x(0)) * std::cos(4.0 * x(1)) + 1e-2 * normal01(rng));
  }

  PrecomputeOptions pre;
  pre.mode = HyperMode::FixedPsi;
  pre.known_psi = hp;

  std::printf("%-28s %10s %10s %8s\n", "kernel", "serial(s)", "omp(s)", "speedup");

  {
    set_num_threads(1);
    const double t_serial =
        time_once([&] { pes_precompute(data, HyperPrior::broad(2), 64, 512, 17, pre); });
    set_num_threads(threads);
    const double t_par =
        time_once([&] { pes_precompute(data, HyperPrior::broad(2), 64, 512, 17, pre); });
    std::printf("%-28s %10.3f %10.3f %8.2f\n", "precompute (64 slots)", t_serial, t_par,
                t_serial / t_par);
  }

  {
    set_num_threads(1);
    AcquisitionContext ctx = pes_precompute(data, HyperPrior::broad(2), 32, 512, 17, pre);
    GridSpec grid(Domain::unit_cube(2), Eigen::VectorXi::Constant(2, 40));
    const Mat centers = grid.centers();
    Vec out(centers.rows());
    auto sweep = [&] {
      parallel_for(0, static_cast<int>(centers.rows()), [&](int i) {
        out(i) = pes_acquisition(ctx, centers.row(i).transpose());
      });
    };
    const double t_serial = time_once(sweep);
    set_num_threads(threads);
    const double t_par = time_once(sweep);
    std::printf("%-28s %10.3f %10.3f %8.2f\n", "acquisition sweep (1600 x)", t_serial,
                t_par, t_serial / t_par);
  }

  {
    const GpPosterior gp(data, hp);
    GridSpec grid(Domain::unit_cube(2), Eigen::VectorXi::Constant(2, 25));
    set_num_threads(1);
    const double t_serial = time_once([&] {
      rs_acquisition(gp, grid, grid.centers(), hp.noise_variance, 20000, 23);
    });
    set_num_threads(threads);
    const double t_par = time_once([&] {
      rs_acquisition(gp, grid, grid.centers(), hp.noise_variance, 20000, 23);
    });
    std::printf("%-28s %10.3f %10.3f %8.2f\n", "rejection oracle", t_serial, t_par,
                t_serial / t_par);
  }

  std::printf("threads used for the parallel path: %d\n", threads);
  return 0;
}
