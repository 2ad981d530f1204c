#include "sqsn/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sqsn {

double huber_eval(double eps, double t) {
  const double e = std::abs(eps);
  if (t <= 0.0) return 0.0;
  const double half = 0.5 * e;
  double h = t >= e ? t - half : t * t / (2.0 * e);
  // Rounding can push t - h an ulp past |eps|/2; keep the bound exact.
  if (t - h > half) {
    h = std::max(h, t - half);
    while (t - h > half) h = std::nextafter(h, t);
  }
  return h;
}

double huber_dt(double eps, double t) {
  if (eps == 0.0) throw std::domain_error("huber_dt: eps must be nonzero");
  const double e = std::abs(eps);
  if (t <= 0.0) return 0.0;
  if (t >= e) return 1.0;
  return t / e;
}

double huber_deps(double eps, double t) {
  if (eps == 0.0) throw std::domain_error("huber_deps: eps must be nonzero");
  const double e = std::abs(eps);
  const double sign = eps > 0.0 ? 1.0 : -1.0;
  if (t <= 0.0) return 0.0;
  if (t >= e) return -0.5 * sign;
  return -(t * t) / (2.0 * eps * eps) * sign;
}

Eigen::VectorXd phi_map(double eps, const Eigen::VectorXd& w) {
  Eigen::VectorXd out(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) out[i] = huber_eval(eps, w[i]);
  return out;
}

HuberJacobians phi_jacobians(double eps, const Eigen::VectorXd& w) {
  if (!(eps > 0.0)) throw std::domain_error("phi_jacobians: eps must be positive");
  HuberJacobians jac{Eigen::VectorXd(w.size()), Eigen::VectorXd(w.size())};
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double t = w[i];
    if (t <= 0.0) {
      jac.v1[i] = 0.0;
      jac.v2[i] = 0.0;
    } else if (t >= eps) {
      jac.v1[i] = -0.5;
      jac.v2[i] = 1.0;
    } else {
      const double ratio = t / eps;
      jac.v1[i] = -0.5 * ratio * ratio;
      jac.v2[i] = ratio;
    }
  }
  return jac;
}

}  // namespace sqsn
