#include "nsd/geometry.hpp"

#include <stdexcept>

namespace nsd {

NormGeometry NormGeometry::fromString(const std::string& name) {
  if (name == "l2") return l2();
  if (name == "linf") return linf();
  throw std::invalid_argument("unknown geometry '" + name + "' (expected l2 or linf)");
}

double NormGeometry::norm(const Eigen::VectorXd& x) const {
  if (x.size() == 0) return 0.0;
  return kind_ == Kind::L2 ? x.norm() : x.lpNorm<Eigen::Infinity>();
}

double NormGeometry::dualNorm(const Eigen::VectorXd& g) const {
  if (g.size() == 0) return 0.0;
  return kind_ == Kind::L2 ? g.norm() : g.lpNorm<1>();
}

std::optional<Eigen::VectorXd> NormGeometry::steepestDirection(const Eigen::VectorXd& g) const {
  if (g.size() == 0 || g.lpNorm<Eigen::Infinity>() < kStationaryGradient) return std::nullopt;
  if (kind_ == Kind::L2) return Eigen::VectorXd(g / g.norm());
  return Eigen::VectorXd(g.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }));
}

}  // namespace nsd
