#include "debris/classifiers/logistic.hpp"

#include <fmt/format.h>

#include <cmath>
#include <deque>

#include "debris/error.hpp"

namespace debris {

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double LogisticModel::probability(const Eigen::Ref<const Vector>& x) const {
  const double z = decision(x);
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double logistic_objective(const Matrix& X, std::span<const int> y, double reg, const Vector& w,
                          double b, Vector* grad_w, double* grad_b) {
  const auto n = static_cast<double>(X.rows());
  const Vector z = (X * w).array() + b;
  double loss = 0.0;
  Vector r(X.rows());  // d loss_i / d z_i
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double m = y[i] * z[i];
    loss += softplus(-m);
    // -y * sigmoid(-m), computed stably.
    const double s = m >= 0 ? std::exp(-m) / (1.0 + std::exp(-m)) : 1.0 / (1.0 + std::exp(m));
    r[i] = -y[i] * s;
  }
  if (grad_w) *grad_w = X.transpose() * r / n + reg * w;
  if (grad_b) *grad_b = r.sum() / n;
  return loss / n + 0.5 * reg * w.squaredNorm();
}

LogisticFit fit_logreg_binary(const Matrix& X, std::span<const int> y, double reg,
                              const LogisticOptions& options) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) {
    fail(ErrorKind::DimensionError, fmt::format("{} rows but {} labels", X.rows(), y.size()));
  }
  if (!(reg >= 0.0) || !std::isfinite(reg)) fail(ErrorKind::ConfigError, "reg must be >= 0");
  bool pos = false, neg = false;
  for (int v : y) {
    if (v == 1) pos = true;
    else if (v == -1) neg = true;
    else fail(ErrorKind::DimensionError, fmt::format("binary labels must be +1/-1, got {}", v));
  }
  if (!pos || !neg) fail(ErrorKind::DegenerateBinaryProblem, "logistic problem needs both labels");

  const auto d = X.cols();
  // Parameters packed as theta = [w; b].
  Vector theta = Vector::Zero(d + 1);
  auto eval = [&](const Vector& th, Vector& g) {
    Vector gw;
    double gb = 0.0;
    const double f = logistic_objective(X, y, reg, th.head(d), th[d], &gw, &gb);
    g.resize(d + 1);
    g.head(d) = gw;
    g[d] = gb;
    return f;
  };

  Vector g;
  double f = eval(theta, g);
  std::deque<std::pair<Vector, Vector>> memory;  // (s, y) pairs
  LogisticFit fit;
  int it = 0;
  for (; it < options.max_iterations && g.norm() >= options.gradient_tolerance; ++it) {
    // Two-loop recursion.
    Vector q = g;
    std::vector<double> alphas(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
      const auto& [s, yk] = memory[k];
      alphas[k] = s.dot(q) / yk.dot(s);
      q -= alphas[k] * yk;
    }
    if (!memory.empty()) {
      const auto& [s, yk] = memory.back();
      q *= s.dot(yk) / yk.dot(yk);
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const auto& [s, yk] = memory[k];
      const double beta = yk.dot(q) / yk.dot(s);
      q += (alphas[k] - beta) * s;
    }
    Vector dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0)) {
      memory.clear();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double step = memory.empty() ? std::min(1.0, 1.0 / g.norm()) : 1.0;
    Vector next, g_next;
    double f_next = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      next = theta + step * dir;
      f_next = eval(next, g_next);
      if (f_next <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (memory.empty()) break;  // no descent possible at working precision
      memory.clear();
      continue;
    }
    Vector s = next - theta;
    Vector yk = g_next - g;
    if (s.dot(yk) > 1e-12 * yk.squaredNorm()) {
      memory.emplace_back(std::move(s), std::move(yk));
      if (static_cast<int>(memory.size()) > options.history) memory.pop_front();
    }
    theta = std::move(next);
    g = std::move(g_next);
    f = f_next;
  }
  fit.model.w = theta.head(d);
  fit.model.b = theta[d];
  fit.objective = f;
  fit.gradient_norm = g.norm();
  fit.iterations = it;
  return fit;
}

LogisticModel train_logreg_binary(const Matrix& X, std::span<const int> y, double reg,
                                  const LogisticOptions& options) {
  return fit_logreg_binary(X, y, reg, options).model;
}

}  // namespace debris
