#include "fedrap/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fedrap {
namespace {

double sign_factor(RegSign sign) { return sign == RegSign::encourage_difference ? -1.0 : 1.0; }

void check_shapes(const Vector& u, const Matrix& c, const Matrix& d, const TrainingBatch& batch) {
  const auto k = u.size();
  if (c.cols() != k || d.cols() != k) throw ShapeError("embedding width does not match u");
  if (c.rows() != d.rows()) throw ShapeError("global and local item embeddings differ in rows");
  for (const auto& e : batch) {
    if (e.item < 0 || e.item >= c.rows()) {
      throw ShapeError("batch item " + std::to_string(e.item) + " out of range");
    }
  }
}

}  // namespace

RegSign parse_reg_sign(std::string_view name) {
  if (name == "encourage-difference") return RegSign::encourage_difference;
  if (name == "penalize-difference") return RegSign::penalize_difference;
  throw std::invalid_argument("unknown reg_sign '" + std::string(name) + "'");
}

std::string_view to_string(RegSign sign) {
  return sign == RegSign::encourage_difference ? "encourage-difference" : "penalize-difference";
}

void HyperParams::validate() const {
  if (k < 1) throw std::invalid_argument("dim must be >= 1");
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be > 0");
  if (!(v1 >= 0.0) || !(v2 >= 0.0)) throw std::invalid_argument("v1 and v2 must be >= 0");
  if (t1 < 0 || t2 < 0) throw std::invalid_argument("rounds and local epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(RowRef u, RowRef c_row, RowRef d_row) { return u.dot(c_row + d_row); }

double predict(RowRef u, RowRef c_row, RowRef d_row) {
  if (u.size() != c_row.size() || u.size() != d_row.size()) {
    throw ShapeError("predict: vectors differ in length");
  }
  if (!u.allFinite() || !c_row.allFinite() || !d_row.allFinite()) {
    throw std::domain_error("predict: non-finite input");
  }
  return sigmoid(logit(u, c_row, d_row));
}

double bce_loss(double label, double probability) {
  const double p = std::clamp(probability, kProbabilityFloor, 1.0 - kProbabilityFloor);
  return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

ObjectiveValue client_objective(const Vector& u, const Matrix& c, const Matrix& d,
                                const TrainingBatch& batch, double lambda, double mu,
                                RegSign sign) {
  check_shapes(u, c, d, batch);
  ObjectiveValue v;
  for (const auto& e : batch) v.bce += bce_loss(e.label, predict(u, c.row(e.item), d.row(e.item)));
  v.difference = sign_factor(sign) * lambda * (d - c).squaredNorm();
  v.l1 = mu * c.cwiseAbs().sum();
  return v;
}

Gradients gradients(const Vector& u, const Matrix& c, const Matrix& d, const TrainingBatch& batch,
                    double lambda, RegSign sign) {
  check_shapes(u, c, d, batch);
  Gradients g{Vector::Zero(u.size()), Matrix::Zero(c.rows(), c.cols()),
              Matrix::Zero(d.rows(), d.cols())};
  for (const auto& e : batch) {
    const Vector x = c.row(e.item) + d.row(e.item);
    const double residual = sigmoid(u.dot(x)) - e.label;
    g.u += residual * x;
    g.c.row(e.item) += residual * u;
    g.d.row(e.item) += residual * u;
  }
  const double s = sign_factor(sign) * 2.0 * lambda;
  g.c += s * (c - d);
  g.d += s * (d - c);
  return g;
}

double soft_threshold(double v, double theta) {
  return std::max(v - theta, 0.0) - std::max(-v - theta, 0.0);
}

Matrix soft_threshold(const Matrix& m, double theta) {
  if (!(theta >= 0.0)) throw std::invalid_argument("soft_threshold: theta must be >= 0");
  return m.unaryExpr([theta](double v) { return soft_threshold(v, theta); });
}

ModelState sgd_step_with_prox(const Vector& u, const Matrix& c, const Matrix& d,
                              const TrainingBatch& batch, double lambda, double mu, double eta,
                              RegSign sign) {
  auto g = gradients(u, c, d, batch, lambda, sign);
  return {u - eta * g.u, soft_threshold(c - eta * g.c, eta * mu), d - eta * g.d};
}

StepStats train_step(Vector& u, Matrix& c, Matrix& d, std::span<const Interaction> batch,
                     const StepOptions& opts, StepScratch& scratch) {
  const bool has_c = c.size() > 0;
  const bool has_d = d.size() > 0;
  if (!has_c && !has_d) throw ShapeError("train_step needs at least one item embedding");
  const Eigen::Index m = has_c ? c.rows() : d.rows();
  const Eigen::Index k = u.size();
  if ((has_c && c.cols() != k) || (has_d && d.cols() != k) ||
      (has_c && has_d && c.rows() != d.rows())) {
    throw ShapeError("train_step: inconsistent embedding shapes");
  }

  scratch.coef.assign(static_cast<std::size_t>(m), 0.0);
  scratch.mark.assign(static_cast<std::size_t>(m), 0);
  scratch.touched.clear();

  StepStats stats;
  Vector grad_u = Vector::Zero(k);
  Vector x(k);
  for (const auto& e : batch) {
    if (e.item < 0 || e.item >= m) throw ShapeError("batch item out of range");
    if (has_c && has_d) {
      x = c.row(e.item) + d.row(e.item);
    } else if (has_c) {
      x = c.row(e.item);
    } else {
      x = d.row(e.item);
    }
    const double p = sigmoid(u.dot(x));
    stats.bce += bce_loss(e.label, p);
    const double residual = p - e.label;
    grad_u += residual * x;
    scratch.coef[e.item] += residual;
    if (!scratch.mark[e.item]) {
      scratch.mark[e.item] = 1;
      scratch.touched.push_back(e.item);
    }
  }

  const bool coupled = has_c && has_d && opts.lambda != 0.0;
  const double reg = coupled ? sign_factor(opts.sign) * 2.0 * opts.lambda : 0.0;
  const double l2 =
      has_c && opts.penalty == GlobalPenalty::frobenius ? 2.0 * opts.mu : 0.0;
  const double theta =
      has_c && opts.penalty == GlobalPenalty::l1_prox ? opts.eta * opts.mu : 0.0;
  const bool dense = coupled || l2 != 0.0 || theta > 0.0;

  double* cp = has_c ? c.data() : nullptr;
  double* dp = has_d ? d.data() : nullptr;
  const double* up = u.data();
  const double* coef = scratch.coef.data();

  // Visits every row when a dense term is active, otherwise only batch rows.
  auto for_rows = [&](auto&& fn) {
    if (dense) {
      for (Eigen::Index j = 0; j < m; ++j) fn(j);
    } else {
      for (int j : scratch.touched) fn(j);
    }
  };

  // C gradient entry at the pre-step point.
  auto c_grad = [&](double a, double cv, double dv, Eigen::Index t) {
    return a * up[t] - reg * (dv - cv) + l2 * cv;
  };

  double clip_scale = 1.0;
  if (has_c && opts.clip_tau > 0.0) {
    double sq = 0.0;
    for_rows([&](Eigen::Index j) {
      const double* cr = cp + j * k;
      const double* dr = has_d ? dp + j * k : nullptr;
      for (Eigen::Index t = 0; t < k; ++t) {
        const double g = c_grad(coef[j], cr[t], dr ? dr[t] : 0.0, t);
        sq += g * g;
      }
    });
    stats.c_grad_norm = std::sqrt(sq);
    if (stats.c_grad_norm > opts.clip_tau) clip_scale = opts.clip_tau / stats.c_grad_norm;
  }

  const double eta = opts.eta;
  const double c_step = eta * clip_scale;
  // Per-lane sums keep the inner loop free of a serial reduction.
  scratch.lane.assign(static_cast<std::size_t>(k), 0.0);
  double* lane = scratch.lane.data();
  for_rows([&](Eigen::Index j) {
    const double a = coef[j];
    if (has_c && has_d) {
      double* __restrict cr = cp + j * k;
      double* __restrict dr = dp + j * k;
      const double* __restrict uv = up;
      double* __restrict lv = lane;
      for (Eigen::Index t = 0; t < k; ++t) {
        const double cv = cr[t], dv = dr[t];
        const double diff = dv - cv;
        lv[t] += diff * diff;
        const double gc = a * uv[t] - reg * diff + l2 * cv;
        const double gd = a * uv[t] + reg * diff;
        const double next = cv - c_step * gc;
        cr[t] = std::max(next - theta, 0.0) - std::max(-next - theta, 0.0);
        dr[t] = dv - eta * gd;
      }
    } else if (has_c) {
      double* cr = cp + j * k;
      for (Eigen::Index t = 0; t < k; ++t) {
        const double cv = cr[t];
        const double next = cv - c_step * (a * up[t] + l2 * cv);
        cr[t] = std::max(next - theta, 0.0) - std::max(-next - theta, 0.0);
      }
    } else {
      double* dr = dp + j * k;
      for (Eigen::Index t = 0; t < k; ++t) dr[t] -= eta * a * up[t];
    }
  });
  if (coupled) {
    double diff_sq = 0.0;
    for (Eigen::Index t = 0; t < k; ++t) diff_sq += lane[t];
    stats.difference = 0.5 * reg * diff_sq;
  }

  u -= opts.eta * grad_u;
  return stats;
}

}  // namespace fedrap
