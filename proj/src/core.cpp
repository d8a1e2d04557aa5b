#include "qbus/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

namespace qbus {
namespace {

constexpr long long kDenseLimit = 8192;

void check_dims_match(const std::vector<int>& dims, long long size,
                      const char* what) {
  if (dim_product(dims) != size)
    throw ConfigError(std::string(what) + ": dims product does not match size");
}

// Core axis worker shared by the Vec and column variants.
void apply_local_ptr(cx* v, long long n, const Mat& u, int slot,
                     const std::vector<int>& dims) {
  const int k = static_cast<int>(dims.size());
  if (slot < 0 || slot >= k) throw ConfigError("apply_local: slot out of range");
  const int d = dims[slot];
  if (u.rows() != d || u.cols() != d)
    throw ConfigError("apply_local: operator size does not match subsystem");
  long long stride = 1;
  for (int j = slot + 1; j < k; ++j) stride *= dims[j];
  const long long block = stride * d;
  const long long outer = n / block;

  if (d == 2) {
    const cx a = u(0, 0), b = u(0, 1), c = u(1, 0), e = u(1, 1);
    for (long long o = 0; o < outer; ++o) {
      cx* base = v + o * block;
      for (long long r = 0; r < stride; ++r) {
        const cx x0 = base[r], x1 = base[r + stride];
        base[r] = a * x0 + b * x1;
        base[r + stride] = c * x0 + e * x1;
      }
    }
    return;
  }

  std::vector<cx> x(d);
  for (long long o = 0; o < outer; ++o) {
    cx* base = v + o * block;
    for (long long r = 0; r < stride; ++r) {
      for (int i = 0; i < d; ++i) x[i] = base[r + i * stride];
      for (int i = 0; i < d; ++i) {
        cx acc = 0;
        for (int j = 0; j < d; ++j) acc += u(i, j) * x[j];
        base[r + i * stride] = acc;
      }
    }
  }
}

void left_apply_local(Mat& m, const Mat& u, int slot,
                      const std::vector<int>& dims) {
  for (long long c = 0; c < m.cols(); ++c)
    apply_local_ptr(m.col(c).data(), m.rows(), u, slot, dims);
}

// Index offset tables for partial traces: offsets of the kept / dropped
// digit groups in the full flattened index.
struct TraceTables {
  std::vector<long long> off_keep, off_drop;
  std::vector<int> dims_keep;
};

TraceTables trace_tables(const std::vector<int>& dims,
                         const std::vector<int>& keep) {
  const int k = static_cast<int>(dims.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i] < 0 || keep[i] >= k)
      throw ConfigError("partial_trace: keep index out of range");
    if (i > 0 && keep[i] <= keep[i - 1])
      throw ConfigError("partial_trace: keep indices must be ascending");
  }
  std::vector<long long> stride(k, 1);
  for (int j = k - 2; j >= 0; --j) stride[j] = stride[j + 1] * dims[j + 1];
  std::vector<char> kept(k, 0);
  for (int s : keep) kept[s] = 1;
  std::vector<int> drop;
  for (int j = 0; j < k; ++j)
    if (!kept[j]) drop.push_back(j);

  auto offsets = [&](const std::vector<int>& slots) {
    long long total = 1;
    for (int s : slots) total *= dims[s];
    std::vector<long long> off(total, 0);
    for (long long a = 0; a < total; ++a) {
      long long tmp = a, o = 0;
      for (int i = static_cast<int>(slots.size()) - 1; i >= 0; --i) {
        const int s = slots[i];
        o += (tmp % dims[s]) * stride[s];
        tmp /= dims[s];
      }
      off[a] = o;
    }
    return off;
  };

  TraceTables t;
  t.off_keep = offsets(keep);
  t.off_drop = offsets(drop);
  for (int s : keep) t.dims_keep.push_back(dims[s]);
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// PureState / DensityMatrix
// ---------------------------------------------------------------------------

PureState::PureState(Vec amps, std::vector<int> dims)
    : amps_(std::move(amps)), dims_(std::move(dims)) {
  check_dims_match(dims_, amps_.size(), "PureState");
  const double n = amps_.norm();
  if (std::abs(n - 1.0) > 1e-6)
    throw ConfigError("PureState: norm deviates from 1 by more than 1e-6");
  amps_ /= n;
}

PureState PureState::ground(std::vector<int> dims) {
  return basis_state(std::move(dims), 0);
}

PureState PureState::basis_state(std::vector<int> dims, long long index) {
  const long long d = dim_product(dims);
  if (index < 0 || index >= d)
    throw ConfigError("PureState: basis index out of range");
  Vec v = Vec::Zero(d);
  v[index] = 1.0;
  return PureState(std::move(v), std::move(dims));
}

DensityMatrix::DensityMatrix(Mat m, std::vector<int> dims)
    : m_(std::move(m)), dims_(std::move(dims)) {
  if (m_.rows() != m_.cols()) throw ConfigError("DensityMatrix: not square");
  check_dims_match(dims_, m_.rows(), "DensityMatrix");
  const double asym = (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
  if (asym > 1e-8)
    throw ConfigError("DensityMatrix: hermiticity violated beyond 1e-8");
  m_ = 0.5 * (m_ + m_.adjoint()).eval();
  const double tr = m_.trace().real();
  if (std::abs(tr - 1.0) > 1e-6)
    throw ConfigError("DensityMatrix: trace deviates from 1 by more than 1e-6");
  m_ /= tr;
}

DensityMatrix DensityMatrix::from_pure(const PureState& psi) {
  return DensityMatrix(psi.amps() * psi.amps().adjoint(), psi.dims());
}

double DensityMatrix::purity() const { return (m_ * m_).trace().real(); }

double DensityMatrix::min_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<Mat> es(m_, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// ---------------------------------------------------------------------------
// Operator
// ---------------------------------------------------------------------------

Operator Operator::from_triplets(std::vector<int> dims,
                                 const std::vector<Triplet>& t,
                                 bool hermitian) {
  Operator op;
  const long long d = dim_product(dims);
  op.sp_.resize(d, d);
  op.sp_.setFromTriplets(t.begin(), t.end());
  op.sp_.makeCompressed();
  op.dims_ = std::move(dims);
  op.hermitian_ = hermitian;
  return op;
}

Operator Operator::from_dense(std::vector<int> dims, const Mat& m,
                              bool hermitian) {
  if (m.rows() != m.cols()) throw ConfigError("Operator: not square");
  check_dims_match(dims, m.rows(), "Operator");
  std::vector<Triplet> t;
  for (long long c = 0; c < m.cols(); ++c)
    for (long long r = 0; r < m.rows(); ++r)
      if (m(r, c) != cx(0, 0)) t.emplace_back(r, c, m(r, c));
  return from_triplets(std::move(dims), t, hermitian);
}

Operator Operator::identity(std::vector<int> dims) {
  Operator op;
  const long long d = dim_product(dims);
  op.sp_.resize(d, d);
  op.sp_.setIdentity();
  op.dims_ = std::move(dims);
  op.hermitian_ = true;
  return op;
}

Mat Operator::dense() const {
  if (dim() > kDenseLimit)
    throw PhysicsError("Operator: refusing dense materialization beyond 8192");
  return Mat(sp_);
}

Operator& Operator::operator+=(const Operator& o) {
  if (dims_ != o.dims_) throw ConfigError("Operator +=: dims mismatch");
  sp_ = (sp_ + o.sp_).pruned();
  hermitian_ = hermitian_ && o.hermitian_;
  return *this;
}

Operator& Operator::operator*=(cx s) {
  sp_ *= s;
  hermitian_ = hermitian_ && std::abs(s.imag()) == 0.0;
  return *this;
}

// ---------------------------------------------------------------------------
// Tensor algebra
// ---------------------------------------------------------------------------

PureState tensor_compose(const std::vector<PureState>& factors) {
  if (factors.empty()) throw ConfigError("tensor_compose: empty factor list");
  Vec acc = factors[0].amps();
  std::vector<int> dims = factors[0].dims();
  for (std::size_t i = 1; i < factors.size(); ++i) {
    const Vec& b = factors[i].amps();
    Vec next(acc.size() * b.size());
    for (long long r = 0; r < acc.size(); ++r)
      next.segment(r * b.size(), b.size()) = acc[r] * b;
    acc = std::move(next);
    dims.insert(dims.end(), factors[i].dims().begin(), factors[i].dims().end());
  }
  return PureState(std::move(acc), std::move(dims));
}

Operator tensor_compose(const std::vector<Operator>& factors) {
  if (factors.empty()) throw ConfigError("tensor_compose: empty factor list");
  SpMat acc = factors[0].sparse();
  std::vector<int> dims = factors[0].dims();
  bool herm = factors[0].hermitian();
  for (std::size_t i = 1; i < factors.size(); ++i) {
    SpMat next = Eigen::kroneckerProduct(acc, factors[i].sparse()).eval();
    acc = std::move(next);
    dims.insert(dims.end(), factors[i].dims().begin(), factors[i].dims().end());
    herm = herm && factors[i].hermitian();
  }
  std::vector<Triplet> t;
  t.reserve(acc.nonZeros());
  for (int k = 0; k < acc.outerSize(); ++k)
    for (SpMat::InnerIterator it(acc, k); it; ++it)
      t.emplace_back(it.row(), it.col(), it.value());
  return Operator::from_triplets(std::move(dims), t, herm);
}

DensityMatrix partial_trace(const DensityMatrix& rho,
                            const std::vector<int>& keep) {
  const auto t = trace_tables(rho.dims(), keep);
  const long long dk = dim_product(t.dims_keep);
  Mat out = Mat::Zero(dk, dk);
  const Mat& m = rho.mat();
  for (long long e : t.off_drop)
    for (long long b = 0; b < dk; ++b)
      for (long long a = 0; a < dk; ++a)
        out(a, b) += m(t.off_keep[a] + e, t.off_keep[b] + e);
  return DensityMatrix(std::move(out), t.dims_keep);
}

DensityMatrix partial_trace(const PureState& psi,
                            const std::vector<int>& keep) {
  const auto t = trace_tables(psi.dims(), keep);
  const long long dk = dim_product(t.dims_keep);
  Mat out = Mat::Zero(dk, dk);
  const Vec& v = psi.amps();
  Vec slice(dk);
  for (long long e : t.off_drop) {
    for (long long a = 0; a < dk; ++a) slice[a] = v[t.off_keep[a] + e];
    out.noalias() += slice * slice.adjoint();
  }
  return DensityMatrix(std::move(out), t.dims_keep);
}

void apply_local(Vec& v, const Mat& u, int slot,
                 const std::vector<int>& dims) {
  check_dims_match(dims, v.size(), "apply_local");
  apply_local_ptr(v.data(), v.size(), u, slot, dims);
}

void conjugate_local(Mat& rho, const Mat& u, int slot,
                     const std::vector<int>& dims) {
  check_dims_match(dims, rho.rows(), "conjugate_local");
  left_apply_local(rho, u, slot, dims);   // rho <- U rho
  rho = rho.adjoint().eval();
  left_apply_local(rho, u, slot, dims);   // rho <- U (U rho)^H
  rho = rho.adjoint().eval();             // = U rho U^H
}

// ---------------------------------------------------------------------------
// Gates
// ---------------------------------------------------------------------------

Mat pauli_x() {
  Mat m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

Mat pauli_y() {
  Mat m(2, 2);
  m << cx(0, 0), cx(0, -1), cx(0, 1), cx(0, 0);
  return m;
}

Mat pauli_z() {
  Mat m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

Mat rot_inplane(double kappa, double theta) {
  const double c = std::cos(theta / 2), s = std::sin(theta / 2);
  const cx mi(0, -1);
  Mat m(2, 2);
  m << c, mi * s * std::exp(cx(0, -kappa)), mi * s * std::exp(cx(0, kappa)), c;
  return m;
}

Mat rot_z(double theta) {
  Mat m = Mat::Zero(2, 2);
  m(0, 0) = std::exp(cx(0, -theta / 2));
  m(1, 1) = std::exp(cx(0, theta / 2));
  return m;
}

Mat meas_prerotation(char basis) {
  switch (basis) {
    case 'X':
      return rot_inplane(pi / 2, -pi / 2);  // R_y(-pi/2)
    case 'Y':
      return rot_inplane(0, pi / 2);        // R_x(pi/2)
    case 'Z':
      return Mat::Identity(2, 2);
    default:
      throw ConfigError("meas_prerotation: basis must be X, Y or Z");
  }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

double state_fidelity(const PureState& a, const PureState& b) {
  if (a.dim() != b.dim()) throw ConfigError("state_fidelity: dim mismatch");
  return std::norm(a.amps().dot(b.amps()));
}

double state_fidelity(const DensityMatrix& rho, const PureState& psi) {
  if (rho.dim() != psi.dim()) throw ConfigError("state_fidelity: dim mismatch");
  const double f = (psi.amps().adjoint() * rho.mat() * psi.amps())(0, 0).real();
  return std::clamp(f, 0.0, 1.0);
}

double state_fidelity(const DensityMatrix& rho, const DensityMatrix& sigma) {
  if (rho.dim() != sigma.dim()) throw ConfigError("state_fidelity: dim mismatch");
  Eigen::SelfAdjointEigenSolver<Mat> es(rho.mat());
  RVec lam = es.eigenvalues().cwiseMax(0.0);
  Mat sq = es.eigenvectors() * lam.cwiseSqrt().asDiagonal() *
           es.eigenvectors().adjoint();
  Eigen::SelfAdjointEigenSolver<Mat> es2(sq * sigma.mat() * sq,
                                         Eigen::EigenvaluesOnly);
  double acc = 0;
  for (long long i = 0; i < es2.eigenvalues().size(); ++i)
    acc += std::sqrt(std::max(0.0, es2.eigenvalues()[i]));
  return std::clamp(acc * acc, 0.0, 1.0);
}

double expectation(const DensityMatrix& rho, const Operator& op) {
  if (rho.dim() != op.dim()) throw ConfigError("expectation: dim mismatch");
  const SpMat& a = op.sparse();
  cx acc = 0;
  for (int k = 0; k < a.outerSize(); ++k)
    for (SpMat::InnerIterator it(a, k); it; ++it)
      acc += it.value() * rho.mat()(it.col(), it.row());
  return acc.real();
}

double concurrence(const DensityMatrix& rho) {
  if (rho.dim() != 4 || rho.dims() != std::vector<int>{2, 2})
    throw ConfigError("concurrence: requires a two-qubit state");
  Mat yy = Mat::Zero(4, 4);
  yy(0, 3) = -1;
  yy(1, 2) = 1;
  yy(2, 1) = 1;
  yy(3, 0) = -1;
  Mat r = rho.mat() * yy * rho.mat().conjugate() * yy;
  Eigen::ComplexEigenSolver<Mat> es(r, false);
  std::vector<double> lam(4);
  for (int i = 0; i < 4; ++i)
    lam[i] = std::sqrt(std::max(0.0, es.eigenvalues()[i].real()));
  std::sort(lam.begin(), lam.end(), std::greater<>());
  return std::max(0.0, lam[0] - lam[1] - lam[2] - lam[3]);
}

std::pair<Vec, Vec> ghz_branches(int n, GhzBasis basis, double beta) {
  if (n < 2) throw ConfigError("ghz_branches: n must be >= 2");
  const long long d = 1LL << n;
  Vec b0 = Vec::Zero(d), b1 = Vec::Zero(d);
  if (basis == GhzBasis::computational) {
    b0[0] = 1.0;
    b1[d - 1] = 1.0;
    return {b0, b1};
  }
  // (|0> +/- i^n e^{i beta} |1>)/sqrt(2) per qubit.
  static const cx i_pow[4] = {cx(1, 0), cx(0, 1), cx(-1, 0), cx(0, -1)};
  const cx ph = i_pow[n % 4] * std::exp(cx(0, beta));
  const double scale = std::pow(2.0, -0.5 * n);
  for (long long k = 0; k < d; ++k) {
    const int pop = __builtin_popcountll(k);
    b0[k] = scale * std::pow(ph, pop);
    b1[k] = scale * std::pow(-ph, pop);
  }
  return {b0, b1};
}

PureState ghz_ideal(int n, GhzBasis basis, double phi, double beta) {
  auto [b0, b1] = ghz_branches(n, basis, beta);
  Vec v = (b0 + std::exp(cx(0, phi)) * b1) / std::sqrt(2.0);
  return PureState(std::move(v), std::vector<int>(n, 2));
}

PhasedFidelity ghz_fidelity_max_phase(const Mat& rho, int n, GhzBasis basis) {
  const long long d = 1LL << n;
  if (rho.rows() != d) throw ConfigError("ghz_fidelity_max_phase: dim mismatch");

  if (basis == GhzBasis::computational) {
    PhasedFidelity out;
    out.fidelity = 0.5 * (rho(0, 0).real() + rho(d - 1, d - 1).real()) +
                   std::abs(rho(0, d - 1));
    out.phi_star = -std::arg(rho(0, d - 1));
    return out;
  }

  // All branch overlaps depend on rho only through sums over pairs of
  // excitation-number classes, so fold the state down to (n+1)^2 entries
  // once and scan the branch axis on that.
  Mat S = Mat::Zero(n + 1, n + 1);
  std::vector<int> pop(d);
  for (long long k = 0; k < d; ++k) pop[k] = __builtin_popcountll(k);
  for (long long l = 0; l < d; ++l)
    for (long long k = 0; k < d; ++k) S(pop[k], pop[l]) += rho(k, l);

  static const cx i_pow[4] = {cx(1, 0), cx(0, 1), cx(-1, 0), cx(0, -1)};
  const double scale2 = std::pow(2.0, -n);
  auto eval = [&](double beta) {
    const cx ph = i_pow[n % 4] * std::exp(cx(0, beta));
    Vec w0(n + 1), w1(n + 1);
    for (int p = 0; p <= n; ++p) {
      w0[p] = std::pow(ph, p);
      w1[p] = std::pow(-ph, p);
    }
    const double pp = ((w0.adjoint() * S * w0)(0, 0)).real();
    const double mm = ((w1.adjoint() * S * w1)(0, 0)).real();
    const cx od = (w0.adjoint() * S * w1)(0, 0);
    return std::pair<double, cx>(scale2 * (0.5 * (pp + mm) + std::abs(od)),
                                 od);
  };

  // Swapping the branches maps beta -> beta + pi, so the objective has
  // period pi.  Coarse grid, then golden-section refinement.
  const int grid = 96;
  double best_b = 0, best_f = -1;
  for (int i = 0; i < grid; ++i) {
    const double b = pi * i / grid;
    const double f = eval(b).first;
    if (f > best_f) { best_f = f; best_b = b; }
  }
  double lo = best_b - pi / grid, hi = best_b + pi / grid;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = eval(x1).first, f2 = eval(x2).first;
  for (int it = 0; it < 80; ++it) {
    if (f1 < f2) {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + gr * (hi - lo); f2 = eval(x2).first;
    } else {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - gr * (hi - lo); f1 = eval(x1).first;
    }
  }
  PhasedFidelity out;
  out.beta_star = 0.5 * (lo + hi);
  auto [f, od] = eval(out.beta_star);
  out.fidelity = f;
  out.phi_star = -std::arg(od);
  return out;
}

PhasedFidelity ghz_fidelity_max_phase(const DensityMatrix& rho,
                                      GhzBasis basis) {
  const int n = static_cast<int>(rho.dims().size());
  for (int d : rho.dims())
    if (d != 2)
      throw ConfigError("ghz_fidelity_max_phase: state must be qubits only");
  return ghz_fidelity_max_phase(rho.mat(), n, basis);
}

DensityMatrix psd_project(const Mat& hermitian, const std::vector<int>& dims) {
  if (hermitian.rows() != hermitian.cols())
    throw ConfigError("psd_project: not square");
  Mat h = 0.5 * (hermitian + hermitian.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  RVec lam = es.eigenvalues();

  // Euclidean projection of the spectrum onto the probability simplex.
  const long long d = lam.size();
  std::vector<double> u(lam.data(), lam.data() + d);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0, tau = 0;
  long long k_max = 0;
  for (long long k = 0; k < d; ++k) {
    cum += u[k];
    const double t = (1.0 - cum) / static_cast<double>(k + 1);
    if (u[k] + t > 0) {
      k_max = k;
      tau = t;
    }
  }
  (void)k_max;
  RVec mu(d);
  for (long long i = 0; i < d; ++i) mu[i] = std::max(0.0, lam[i] + tau);
  Mat out = es.eigenvectors() * mu.asDiagonal() * es.eigenvectors().adjoint();
  return DensityMatrix(std::move(out), dims);
}

}  // namespace qbus
