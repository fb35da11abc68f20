#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <vector>

#include "pairwfs/error.hpp"
#include "pairwfs/field.hpp"

namespace pairwfs {

struct WidthMeasurement {
  double width = 0.0;
  double stderr_width = 0.0;
};

/// a * exp(-2 (q - center)^2 / half_width^2)
struct GaussianFit {
  double amplitude = 0.0;
  double center = 0.0;
  double half_width = 0.0;  // 1/e^2 intensity half-width
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
  int iterations = 0;

  WidthMeasurement width_measurement() const {
    return {half_width, std::sqrt(std::max(0.0, covariance(2, 2)))};
  }
};

/// Levenberg-Marquardt least-squares Gaussian fit to samples (x, y).
inline GaussianFit fit_gaussian(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 4, ErrorCode::fit_failed,
          "gaussian fit needs at least 4 samples");
  const std::size_t m = x.size();
  double s0 = 0.0, s1 = 0.0, ymax = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    s0 += y[k];
    s1 += y[k] * x[k];
    ymax = std::max(ymax, y[k]);
  }
  require(s0 > 0.0 && ymax > 0.0, ErrorCode::fit_failed, "gaussian fit of a non-positive pattern");
  const double mu = s1 / s0;
  double s2 = 0.0;
  for (std::size_t k = 0; k < m; ++k) s2 += y[k] * (x[k] - mu) * (x[k] - mu);
  Eigen::Vector3d p(ymax, mu, 2.0 * std::sqrt(s2 / s0));

  auto residuals = [&](const Eigen::Vector3d& par, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
    r.resize(Eigen::Index(m));
    if (J) J->resize(Eigen::Index(m), 3);
    for (std::size_t k = 0; k < m; ++k) {
      const double dx = x[k] - par(1);
      const double e = std::exp(-2.0 * dx * dx / (par(2) * par(2)));
      const auto kk = Eigen::Index(k);
      r(kk) = par(0) * e - y[k];
      if (J) {
        (*J)(kk, 0) = e;
        (*J)(kk, 1) = par(0) * e * 4.0 * dx / (par(2) * par(2));
        (*J)(kk, 2) = par(0) * e * 4.0 * dx * dx / (par(2) * par(2) * par(2));
      }
    }
  };

  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  residuals(p, r, &J);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  int it = 0;
  bool converged = false;
  for (; it < 500; ++it) {
    const Eigen::Matrix3d A = J.transpose() * J;
    const Eigen::Vector3d g = J.transpose() * r;
    Eigen::Matrix3d Ad = A;
    for (int d = 0; d < 3; ++d) Ad(d, d) += lambda * std::max(A(d, d), 1e-300);
    const Eigen::Vector3d step = Ad.ldlt().solve(-g);
    const Eigen::Vector3d trial = p + step;
    Eigen::VectorXd rt;
    residuals(trial, rt, nullptr);
    const double ct = rt.squaredNorm();
    if (std::isfinite(ct) && ct <= cost) {
      const double rel = step.cwiseAbs().cwiseQuotient(p.cwiseAbs().cwiseMax(1e-300)).maxCoeff();
      const double drop = cost - ct;
      p = trial;
      cost = ct;
      residuals(p, r, &J);
      lambda = std::max(lambda / 10.0, 1e-12);
      if (rel < 1e-10 || cost == 0.0 || drop <= 1e-14 * cost) {
        converged = true;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) {
        converged = true;  // no further decrease possible: at a minimum
        break;
      }
    }
  }
  require(converged && std::isfinite(p(2)) && p(2) != 0.0, ErrorCode::fit_failed,
          "gaussian fit did not converge");
  GaussianFit f;
  f.amplitude = p(0);
  f.center = p(1);
  f.half_width = std::abs(p(2));
  f.iterations = it;
  const double dof = double(m) - 3.0;
  const Eigen::Matrix3d A = J.transpose() * J;
  f.covariance = A.inverse() * (cost / dof);
  return f;
}

inline GaussianFit fit_gaussian(const RealField& pattern) {
  require(pattern.rank == 1, ErrorCode::fit_failed, "gaussian fit needs a rank-1 pattern");
  const auto x = pattern.grid.coords();
  return fit_gaussian(std::span<const double>(x), std::span<const double>(pattern.values));
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_stderr = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorCode::fit_failed,
          "line fit needs at least 2 points");
  const double n = double(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  require(sxx > 0.0, ErrorCode::fit_failed, "line fit with constant abscissa");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double e = y[k] - (f.slope * x[k] + f.intercept);
    rss += e * e;
  }
  f.r_squared = syy > 0.0 ? 1.0 - rss / syy : 1.0;
  if (x.size() > 2) f.slope_stderr = std::sqrt(rss / (n - 2.0) / sxx);
  return f;
}

/// y = c x^exponent fitted on log-log axes; returns slope = exponent.
inline LinearFit fit_power_law(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < x.size(); ++k)
    if (x[k] > 0.0 && y[k] > 0.0) {
      lx.push_back(std::log(x[k]));
      ly.push_back(std::log(y[k]));
    }
  return fit_line(lx, ly);
}

}  // namespace pairwfs
