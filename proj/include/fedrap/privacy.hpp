#pragma once

#include "fedrap/model.hpp"
#include "fedrap/rng.hpp"

namespace fedrap {

struct PrivacyConfig {
  bool enabled = false;
  double tau = 0.1;  // clipping threshold on the C gradient (Frobenius norm)
  double z = 1.0;    // noise multiplier

  void validate() const;
};

/// g * min(1, tau / ||g||_F).
Matrix clip_gradient(const Matrix& g, double tau);

/// Adds i.i.d. N(0, sigma^2) to every entry; sigma == 0 returns the input.
Matrix add_gaussian_noise(const Matrix& update, double sigma, Rng& rng);
void add_gaussian_noise_inplace(Matrix& update, double sigma, Rng& rng);

/// Bound on ||C - C'||_F for neighbouring datasets after one clipped step:
/// 2 * eta * tau / n_s.
double sensitivity_bound(double eta, double tau, int n_s);

/// Noise standard deviation z * sensitivity_bound(eta, tau, n_s).
double noise_sigma(double z, double eta, double tau, int n_s);

/// (c_prev - c_next) / eta. When c_next came from one clean step
/// c_next = c_prev - eta * g, this is g.
Matrix recover_gradient(const Matrix& c_prev, const Matrix& c_next, double eta);

}  // namespace fedrap
