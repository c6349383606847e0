#pragma once

#include <Eigen/Core>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "fedrap/data.hpp"

namespace fedrap {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::RowVectorXd;
using RowRef = Eigen::Ref<const Vector>;

/// Direction of the ||D - C||_F^2 term. `encourage_difference` subtracts it
/// from the loss (pushes the local and global item embeddings apart);
/// `penalize_difference` adds it.
enum class RegSign { encourage_difference, penalize_difference };

RegSign parse_reg_sign(std::string_view name);
std::string_view to_string(RegSign sign);

struct HyperParams {
  int k = 32;
  double eta = 0.05;
  double v1 = 0.1;
  double v2 = 0.1;
  int t1 = 100;
  int t2 = 10;
  int batch_size = 2048;
  RegSign reg_sign = RegSign::encourage_difference;

  void validate() const;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kProbabilityFloor = 1e-12;

double sigmoid(double logit);
double logit(RowRef u, RowRef c_row, RowRef d_row);

/// sigma(<u, c_row + d_row>). Throws std::domain_error on non-finite input.
double predict(RowRef u, RowRef c_row, RowRef d_row);

/// Binary cross-entropy with the probability clamped to [1e-12, 1 - 1e-12].
double bce_loss(double label, double probability);

struct ObjectiveValue {
  double bce = 0.0;
  double difference = 0.0;  // signed lambda * ||D - C||_F^2 as it enters the loss
  double l1 = 0.0;          // mu * ||C||_1, handled by the proximal step

  double smooth() const { return bce + difference; }
  double total() const { return bce + difference + l1; }
};

ObjectiveValue client_objective(const Vector& u, const Matrix& c, const Matrix& d,
                                const TrainingBatch& batch, double lambda, double mu,
                                RegSign sign);

struct Gradients {
  Vector u;
  Matrix c;
  Matrix d;
};

/// Exact gradients of client_objective(...).smooth().
Gradients gradients(const Vector& u, const Matrix& c, const Matrix& d, const TrainingBatch& batch,
                    double lambda, RegSign sign);

/// Elementwise shrinkage max(v - theta, 0) - max(-v - theta, 0).
Matrix soft_threshold(const Matrix& m, double theta);
double soft_threshold(double v, double theta);

struct ModelState {
  Vector u;
  Matrix c;
  Matrix d;
};

/// One simultaneous gradient step on (u, C, D) followed by the L1 proximal
/// step on C with threshold eta * mu.
ModelState sgd_step_with_prox(const Vector& u, const Matrix& c, const Matrix& d,
                              const TrainingBatch& batch, double lambda, double mu, double eta,
                              RegSign sign);

enum class GlobalPenalty {
  l1_prox,         // soft-threshold C after the step
  frobenius,       // add 2 * mu * C to the C gradient
  none,
};

// Options for the in-place training step used by the runtime. An empty
// matrix stands for an embedding the variant does not have (treated as zero
// and left untouched).
struct StepOptions {
  double lambda = 0.0;
  double mu = 0.0;
  double eta = 0.05;
  RegSign sign = RegSign::encourage_difference;
  GlobalPenalty penalty = GlobalPenalty::l1_prox;
  double clip_tau = 0.0;  // > 0 clips the C gradient to this Frobenius norm
};

struct StepStats {
  double bce = 0.0;
  double difference = 0.0;
  double c_grad_norm = 0.0;  // before clipping
};

// Reusable buffers for train_step.
struct StepScratch {
  std::vector<double> coef;  // per-item sum of (r_hat - r)
  std::vector<int> touched;
  std::vector<unsigned char> mark;
  std::vector<double> lane;
};

/// In-place version of sgd_step_with_prox. `c` or `d` may be empty (0 x 0).
StepStats train_step(Vector& u, Matrix& c, Matrix& d, std::span<const Interaction> batch,
                     const StepOptions& opts, StepScratch& scratch);

}  // namespace fedrap
