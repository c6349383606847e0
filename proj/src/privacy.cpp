#include "fedrap/privacy.hpp"

#include <random>
#include <stdexcept>

namespace fedrap {

void PrivacyConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  if (!(z >= 0.0)) throw std::invalid_argument("z must be >= 0");
}

Matrix clip_gradient(const Matrix& g, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("clip_gradient: tau must be > 0");
  const double norm = g.norm();
  if (norm <= tau) return g;
  return g * (tau / norm);
}

void add_gaussian_noise_inplace(Matrix& update, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  if (sigma == 0.0) return;
  std::normal_distribution<double> noise(0.0, sigma);
  for (Eigen::Index i = 0; i < update.size(); ++i) update.data()[i] += noise(rng);
}

Matrix add_gaussian_noise(const Matrix& update, double sigma, Rng& rng) {
  Matrix out = update;
  add_gaussian_noise_inplace(out, sigma, rng);
  return out;
}

double sensitivity_bound(double eta, double tau, int n_s) {
  if (!(eta > 0.0) || !(tau > 0.0) || n_s < 1) {
    throw std::invalid_argument("sensitivity_bound: eta, tau and n_s must be positive");
  }
  return 2.0 * eta * tau / static_cast<double>(n_s);
}

double noise_sigma(double z, double eta, double tau, int n_s) {
  return z * sensitivity_bound(eta, tau, n_s);
}

Matrix recover_gradient(const Matrix& c_prev, const Matrix& c_next, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("recover_gradient: eta must be > 0");
  if (c_prev.rows() != c_next.rows() || c_prev.cols() != c_next.cols()) {
    throw ShapeError("recover_gradient: shape mismatch");
  }
  return (c_prev - c_next) / eta;
}

}  // namespace fedrap
