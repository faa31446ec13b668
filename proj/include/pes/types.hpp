// Core domain types shared across the library.
#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace pes {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class FactorizationError : public std::runtime_error {
 public:
  explicit FactorizationError(const std::string& what) : std::runtime_error(what) {}
};

// Squared-exponential model hyperparameters: signal variance, per-dimension
// lengthscales (input units) and observation noise variance.
struct Hyperparams {
  double amplitude = 1.0;  // gamma^2
  Vec lengthscales;        // ell_1..ell_d
  double noise_variance = 1e-6;

  Hyperparams() = default;
  Hyperparams(double amp, Vec ls, double noise)
      : amplitude(amp), lengthscales(std::move(ls)), noise_variance(noise) {
    validate();
  }

  int dim() const { return static_cast<int>(lengthscales.size()); }

  void validate() const {
    if (!(amplitude > 0.0) || !(noise_variance > 0.0))
      throw std::invalid_argument("hyperparameters must be strictly positive");
    if (lengthscales.size() < 1 || (lengthscales.array() <= 0.0).any())
      throw std::invalid_argument("lengthscales must be strictly positive");
  }

  // Packs as [amplitude, ell_1..ell_d, noise_variance].
  Vec to_vector() const {
    Vec v(dim() + 2);
    v(0) = amplitude;
    v.segment(1, dim()) = lengthscales;
    v(dim() + 1) = noise_variance;
    return v;
  }
  static Hyperparams from_vector(const Vec& v) {
    if (v.size() < 3) throw std::invalid_argument("hyperparameter vector too short");
    return Hyperparams(v(0), v.segment(1, v.size() - 2), v(v.size() - 1));
  }
};

// Axis-aligned box domain.
struct Domain {
  Vec lower;
  Vec upper;

  Domain() = default;
  Domain(Vec lo, Vec hi) : lower(std::move(lo)), upper(std::move(hi)) {
    if (lower.size() != upper.size() || lower.size() < 1)
      throw std::invalid_argument("domain bounds must have matching dimension >= 1");
    if ((lower.array() >= upper.array()).any())
      throw std::invalid_argument("domain requires lower < upper elementwise");
  }
  static Domain unit_cube(int d) { return Domain(Vec::Zero(d), Vec::Ones(d)); }

  int dim() const { return static_cast<int>(lower.size()); }
  Vec range() const { return upper - lower; }
  Vec center() const { return 0.5 * (lower + upper); }

  bool contains(const Vec& x, double tol = 0.0) const {
    return x.size() == lower.size() &&
           (x.array() >= lower.array() - tol).all() &&
           (x.array() <= upper.array() + tol).all();
  }
  Vec clip(const Vec& x) const {
    return x.cwiseMax(lower).cwiseMin(upper);
  }
};

// Ordered observation pairs over a box domain. Inputs are stored row-wise.
class Dataset {
 public:
  explicit Dataset(Domain domain) : domain_(std::move(domain)) {}

  void append(const Vec& x, double y) {
    if (!domain_.contains(x, 1e-12))
      throw std::invalid_argument("dataset input outside the domain");
    inputs_.conservativeResize(inputs_.rows() + 1, domain_.dim());
    inputs_.row(inputs_.rows() - 1) = x.transpose();
    outputs_.conservativeResize(outputs_.size() + 1);
    outputs_(outputs_.size() - 1) = y;
    y_max_ = (outputs_.size() == 1) ? y : std::max(y_max_, y);
  }

  const Domain& domain() const { return domain_; }
  int size() const { return static_cast<int>(outputs_.size()); }
  bool empty() const { return outputs_.size() == 0; }
  const Mat& inputs() const { return inputs_; }
  const Vec& outputs() const { return outputs_; }
  Vec input(int i) const { return inputs_.row(i).transpose(); }

  double y_max() const {
    if (empty()) throw std::logic_error("y_max undefined on an empty dataset");
    return y_max_;
  }

 private:
  Domain domain_;
  Mat inputs_{0, 0};
  Vec outputs_{0};
  double y_max_ = 0.0;
};

}  // namespace pes
