#pragma once

#include <utility>
#include <vector>

#include "qbus/common.hpp"

namespace qbus {

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

// Normalized ket over a list of subsystem dimensions.  Subsystem 0 is the
// most significant index (qubit 1 first, resonator last by convention).
class PureState {
 public:
  PureState(Vec amps, std::vector<int> dims);
  static PureState ground(std::vector<int> dims);
  static PureState basis_state(std::vector<int> dims, long long index);

  const Vec& amps() const { return amps_; }
  const std::vector<int>& dims() const { return dims_; }
  long long dim() const { return amps_.size(); }

 private:
  Vec amps_;
  std::vector<int> dims_;
};

// Hermitian, unit-trace, (numerically) positive matrix.  The constructor
// enforces hermiticity and trace; positivity is the business of psd_project
// and of the evolution monitors.
class DensityMatrix {
 public:
  DensityMatrix(Mat m, std::vector<int> dims);
  static DensityMatrix from_pure(const PureState& psi);

  const Mat& mat() const { return m_; }
  const std::vector<int>& dims() const { return dims_; }
  long long dim() const { return m_.rows(); }
  double purity() const;
  double min_eigenvalue() const;

 private:
  Mat m_;
  std::vector<int> dims_;
};

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

// Linear operator over a dims list.  Compressed-column storage is canonical;
// dense views are materialized on demand (small systems: propagators,
// oracles).  Hamiltonian builders mark hermitian=true.
class Operator {
 public:
  Operator() = default;
  static Operator from_triplets(std::vector<int> dims,
                                const std::vector<Triplet>& t, bool hermitian);
  static Operator from_dense(std::vector<int> dims, const Mat& m,
                             bool hermitian);
  static Operator identity(std::vector<int> dims);

  const std::vector<int>& dims() const { return dims_; }
  long long dim() const { return sp_.rows(); }
  bool hermitian() const { return hermitian_; }
  const SpMat& sparse() const { return sp_; }
  Mat dense() const;
  Vec apply(const Vec& v) const { return sp_ * v; }

  Operator& operator+=(const Operator& o);
  Operator& operator*=(cx s);

 private:
  SpMat sp_;
  std::vector<int> dims_;
  bool hermitian_ = true;
};

// ---------------------------------------------------------------------------
// Tensor algebra
// ---------------------------------------------------------------------------

PureState tensor_compose(const std::vector<PureState>& factors);
Operator tensor_compose(const std::vector<Operator>& factors);

// Reduced state over `keep` (0-based subsystem positions, strictly
// ascending, original order preserved).
DensityMatrix partial_trace(const DensityMatrix& rho,
                            const std::vector<int>& keep);
DensityMatrix partial_trace(const PureState& psi, const std::vector<int>& keep);

// In-place v <- (I x ... x u x ... x I) v with u acting on subsystem `slot`.
void apply_local(Vec& v, const Mat& u, int slot, const std::vector<int>& dims);
// In-place rho <- U rho U^H with the same embedding.
void conjugate_local(Mat& rho, const Mat& u, int slot,
                     const std::vector<int>& dims);

// ---------------------------------------------------------------------------
// Gates / single-qubit helpers
// ---------------------------------------------------------------------------

Mat pauli_x();
Mat pauli_y();
Mat pauli_z();
// exp(-i theta/2 (cos(kappa) X + sin(kappa) Y)): in-plane axis at azimuth
// kappa (x-axis: kappa = 0, y-axis: kappa = pi/2).
Mat rot_inplane(double kappa, double theta);
Mat rot_z(double theta);
// Pre-measurement rotation mapping the requested basis onto z: 'X' -> R_y(-pi/2),
// 'Y' -> R_x(pi/2), 'Z' -> identity.
Mat meas_prerotation(char basis);

// ---------------------------------------------------------------------------
// Metrics and canonical states
// ---------------------------------------------------------------------------

double state_fidelity(const PureState& a, const PureState& b);
double state_fidelity(const DensityMatrix& rho, const PureState& psi);
// Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
double state_fidelity(const DensityMatrix& rho, const DensityMatrix& sigma);

double expectation(const DensityMatrix& rho, const Operator& op);

// Wootters concurrence of a two-qubit state.
double concurrence(const DensityMatrix& rho);

enum class GhzBasis { computational, plus_minus };

// The two product branches of the GHZ superposition.  For plus_minus the
// single-qubit states are (|0> +/- i^n e^{i beta} |1>)/sqrt(2); beta rotates
// the branch axis around the equator and is ignored for computational.
std::pair<Vec, Vec> ghz_branches(int n, GhzBasis basis, double beta = 0.0);
// (|B0> + e^{i phi} |B1>)/sqrt(2) over n qubits.
PureState ghz_ideal(int n, GhzBasis basis, double phi = 0.0, double beta = 0.0);

struct PhasedFidelity {
  double fidelity = 0;
  double phi_star = 0;
  double beta_star = 0;
};
// Best overlap with the ideal GHZ family.  The relative phase phi is always
// optimized (closed form); for plus_minus the common single-qubit phase beta
// is optimized as well, since both are set by the phase reference of the
// control pulses rather than by the entangling dynamics.  Population and
// coherence-magnitude errors are never compensated.  Works on any Hermitian
// matrix (also pre-projection raw reconstructions).
PhasedFidelity ghz_fidelity_max_phase(const Mat& rho, int n, GhzBasis basis);
PhasedFidelity ghz_fidelity_max_phase(const DensityMatrix& rho, GhzBasis basis);

// Euclidean projection onto the PSD unit-trace cone: eigenvalues are
// projected onto the probability simplex, eigenvectors kept.  Idempotent.
DensityMatrix psd_project(const Mat& hermitian, const std::vector<int>& dims);

}  // namespace qbus
