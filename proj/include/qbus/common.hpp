#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace qbus {

using cx = std::complex<double>;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<cx>;
using Triplet = Eigen::Triplet<cx>;

inline constexpr double pi = std::numbers::pi;

// All config files carry linear frequencies (omega / 2pi) in MHz and times in
// ns.  Internally Hamiltonians are angular, rad/ns.
inline constexpr double ang_per_mhz = 2.0 * pi * 1e-3;

// Config-class problems: unreadable files, schema violations, inconsistent
// parameters.  CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Physics preconditions: leakage past the Fock cutoff, dimension caps,
// detuning-separation rules.  Exit code 3.
struct PhysicsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failures in reconstruction/evolution: non-convergence,
// rank-deficient systems, step-size rejection.  Exit code 4.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Warnings = std::vector<std::string>;

inline void warn(Warnings* w, const std::string& msg) {
  if (w) w->push_back(msg);
}

inline long long dim_product(const std::vector<int>& dims) {
  long long d = 1;
  for (int x : dims) {
    if (x < 1) throw ConfigError("subsystem dimension must be >= 1");
    d *= x;
  }
  return d;
}

}  // namespace qbus
