#pragma once

#include <optional>
#include <string>

#include <Eigen/Core>

namespace nsd {

// Below this sup-norm a gradient is treated as exactly stationary.
inline constexpr double kStationaryGradient = 1e-14;

/// Norm choice for normalized steepest descent: l2 yields normalized GD,
/// l-infinity yields sign descent.
class NormGeometry {
 public:
  enum class Kind { L2, Linf };

  constexpr explicit NormGeometry(Kind kind) noexcept : kind_(kind) {}
  static constexpr NormGeometry l2() noexcept { return NormGeometry(Kind::L2); }
  static constexpr NormGeometry linf() noexcept { return NormGeometry(Kind::Linf); }
  static NormGeometry fromString(const std::string& name);

  constexpr Kind kind() const noexcept { return kind_; }
  const char* name() const noexcept { return kind_ == Kind::L2 ? "l2" : "linf"; }

  double norm(const Eigen::VectorXd& x) const;
  // l2 for L2, l1 for Linf.
  double dualNorm(const Eigen::VectorXd& g) const;

  /// Unit-norm maximizer of <g, delta>: g/|g|_2 or sign(g) with sign(0) = 0.
  /// Empty when g is stationary (|g|_inf < kStationaryGradient).
  std::optional<Eigen::VectorXd> steepestDirection(const Eigen::VectorXd& g) const;

  friend constexpr bool operator==(NormGeometry a, NormGeometry b) { return a.kind_ == b.kind_; }

 private:
  Kind kind_;
};

}  // namespace nsd
