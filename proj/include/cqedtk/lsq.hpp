#pragma once

// Damped least squares (Levenberg-Marquardt) with central-difference Jacobian.
// Callers are expected to pass parameters scaled to O(1).

#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace cqedtk::lsq {

using Residual = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct Options {
  int max_iterations = 200;
  double step_tolerance = 1e-10;  // on max |dx_i| / (|x_i| + 1)
  double jacobian_step = 1e-6;
};

struct Result {
  Eigen::VectorXd x;
  Eigen::VectorXd residual;
  Eigen::MatrixXd jacobian;
  double cost = 0.0;  // 1/2 |r|^2
  int iterations = 0;
  bool converged = false;
};

inline Eigen::MatrixXd numeric_jacobian(const Residual& f, const Eigen::VectorXd& x, double step) {
  Eigen::MatrixXd j;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(x[i]));
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const Eigen::VectorXd d = (f(xp) - f(xm)) / (2.0 * h);
    if (j.size() == 0) j.resize(d.size(), x.size());
    j.col(i) = d;
  }
  return j;
}

inline Result levenberg_marquardt(const Residual& f, Eigen::VectorXd x, const Options& opt = {}) {
  Result out;
  Eigen::VectorXd r = f(x);
  double cost = 0.5 * r.squaredNorm();
  Eigen::MatrixXd J = numeric_jacobian(f, x, opt.jacobian_step);
  Eigen::MatrixXd A = J.transpose() * J;
  Eigen::VectorXd g = J.transpose() * r;
  double mu = 1e-3 * A.diagonal().maxCoeff();
  double nu = 2.0;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (!std::isfinite(cost)) break;
    if (cost == 0.0 || g.cwiseAbs().maxCoeff() == 0.0) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd d = A.diagonal().cwiseMax(1e-30 * A.diagonal().maxCoeff());
    Eigen::MatrixXd damped = A;
    damped.diagonal() += mu * d;
    const Eigen::VectorXd step = damped.ldlt().solve(-g);
    const double rel = (step.array().abs() / (x.array().abs() + 1.0)).maxCoeff();
    if (!std::isfinite(rel)) break;
    if (rel < opt.step_tolerance) {
      out.converged = true;
      break;
    }
    const Eigen::VectorXd xn = x + step;
    const Eigen::VectorXd rn = f(xn);
    const double cn = 0.5 * rn.squaredNorm();
    const double predicted = 0.5 * step.dot(mu * d.cwiseProduct(step) - g);
    const double rho = predicted > 0 ? (cost - cn) / predicted : -1.0;
    if (std::isfinite(cn) && rho > 0) {
      x = xn;
      r = rn;
      cost = cn;
      J = numeric_jacobian(f, x, opt.jacobian_step);
      A = J.transpose() * J;
      g = J.transpose() * r;
      mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
    } else {
      mu *= nu;
      nu *= 2.0;
      if (!std::isfinite(mu)) break;
    }
  }
  out.x = x;
  out.residual = r;
  out.jacobian = J;
  out.cost = cost;
  out.iterations = it;
  return out;
}

/// Golden-section minimum of a unimodal f on [a, b].
template <class F>
double golden_min(F&& f, double a, double b, int iterations = 80) {
  const double k = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - k * (b - a), d = a + k * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iterations; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - k * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + k * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace cqedtk::lsq
