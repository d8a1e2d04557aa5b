#include "qbus/tomography.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <Eigen/Cholesky>
#include <unsupported/Eigen/KroneckerProduct>

#include "qbus/threading.hpp"

namespace qbus {

namespace {

using SpMatD = Eigen::SparseMatrix<double>;
using SpMatDR = Eigen::SparseMatrix<double, Eigen::RowMajor>;

void check_setting(const std::string& s, int n) {
  if (static_cast<int>(s.size()) != n)
    throw ConfigError("setting '" + s + "' does not match n = " +
                      std::to_string(n));
  for (char c : s)
    if (c != 'X' && c != 'Y' && c != 'Z')
      throw ConfigError("setting '" + s + "': bases are X, Y or Z");
}

// Per-qubit measurement map in the pair index p = 2m + l:
// w(k, 2m+l) = u(k,l) conj(u(k,m)), so that P_k = sum_p w(k,p) rho~(p).
Mat basis_w(char b) {
  Mat u = meas_prerotation(b);
  Mat w(2, 4);
  for (int k = 0; k < 2; ++k)
    for (int m = 0; m < 2; ++m)
      for (int l = 0; l < 2; ++l)
        w(k, 2 * m + l) = u(k, l) * std::conj(u(k, m));
  return w;
}

// Normal kernel of one basis, g = w^H w.  Real for X, Y, Z.
RMat basis_g(char b) {
  Mat w = basis_w(b);
  Mat g = w.adjoint() * w;
  if (g.imag().cwiseAbs().maxCoeff() > 1e-14)
    throw SolverError("basis kernel unexpectedly complex");
  return g.real();
}

long long pow_ll(long long b, int e) {
  long long r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

void check_qubit_dims(const std::vector<int>& dims) {
  for (int d : dims)
    if (d != 2) throw ConfigError("tomography needs qubit-only states");
}

void check_readout(const ReadoutModel& m, int n) {
  if (m.f0.size() != m.f1.size())
    throw ConfigError("readout model: f0/f1 size mismatch");
  if (!m.f0.empty() && m.n() != n)
    throw ConfigError("readout model does not match qubit count");
  for (int j = 0; j < m.n(); ++j) {
    if (m.f0[j] <= 0 || m.f0[j] > 1 || m.f1[j] <= 0 || m.f1[j] > 1)
      throw ConfigError("readout fidelities must lie in (0, 1]");
  }
}

// out <- (I x m2 x I) v on the bit of `slot` (real 2x2 on a 2^n vector).
RVec contract_bit(const RVec& v, const RMat& m2, int slot, int n) {
  const long long rest = 1LL << (n - 1 - slot);
  const long long outer = 1LL << slot;
  RVec out(v.size());
  for (long long o = 0; o < outer; ++o)
    for (long long r = 0; r < rest; ++r) {
      const long long i0 = o * 2 * rest + r;
      const long long i1 = i0 + rest;
      out(i0) = m2(0, 0) * v(i0) + m2(0, 1) * v(i1);
      out(i1) = m2(1, 0) * v(i0) + m2(1, 1) * v(i1);
    }
  return out;
}

RMat confusion_2x2(const ReadoutModel& m, int j) {
  RMat c(2, 2);
  c << m.f0[j], 1.0 - m.f1[j], 1.0 - m.f0[j], m.f1[j];
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Settings / readout
// ---------------------------------------------------------------------------

std::vector<std::string> full_setting_family(int n) {
  if (n < 1 || n > 10) throw ConfigError("setting family: n out of range");
  const long long total = pow_ll(3, n);
  std::vector<std::string> out;
  out.reserve(total);
  const char* axes = "XYZ";
  for (long long idx = 0; idx < total; ++idx) {
    std::string s(n, 'Z');
    long long rem = idx;
    for (int j = n - 1; j >= 0; --j) {
      s[j] = axes[rem % 3];
      rem /= 3;
    }
    out.push_back(std::move(s));
  }
  return out;
}

bool ReadoutModel::is_perfect() const {
  for (double f : f0)
    if (f != 1.0) return false;
  for (double f : f1)
    if (f != 1.0) return false;
  return true;
}

ReadoutModel ReadoutModel::perfect(int n) {
  ReadoutModel m;
  m.f0.assign(n, 1.0);
  m.f1.assign(n, 1.0);
  return m;
}

ReadoutModel ReadoutModel::from_device(const DeviceConfig& dev,
                                       const std::vector<int>& roster) {
  ReadoutModel m;
  for (int q : roster) {
    const auto& p = dev.qubit(q);
    m.f0.push_back(p.f0);
    m.f1.push_back(p.f1);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Measurement probabilities
// ---------------------------------------------------------------------------

RVec measurement_probs(const PureState& psi, const std::string& setting) {
  check_qubit_dims(psi.dims());
  const int n = static_cast<int>(psi.dims().size());
  check_setting(setting, n);
  Vec v = psi.amps();
  for (int j = 0; j < n; ++j)
    if (setting[j] != 'Z')
      apply_local(v, meas_prerotation(setting[j]), j, psi.dims());
  return v.cwiseAbs2();
}

RVec measurement_probs(const DensityMatrix& rho, const std::string& setting) {
  check_qubit_dims(rho.dims());
  const int n = static_cast<int>(rho.dims().size());
  check_setting(setting, n);
  std::vector<Mat> pre;
  pre.reserve(n);
  for (int j = 0; j < n; ++j) pre.push_back(meas_prerotation(setting[j]));
  return measurement_probs(rho, pre);
}

RVec measurement_probs(const DensityMatrix& rho, const std::vector<Mat>& pre) {
  check_qubit_dims(rho.dims());
  const int n = static_cast<int>(rho.dims().size());
  if (static_cast<int>(pre.size()) != n)
    throw ConfigError("one pre-rotation per qubit required");
  Mat m = rho.mat();
  for (int j = 0; j < n; ++j)
    if (!pre[j].isIdentity(0.0)) conjugate_local(m, pre[j], j, rho.dims());
  return m.diagonal().real();
}

RVec apply_confusion(const RVec& probs, const ReadoutModel& m) {
  const int n = m.n();
  if (probs.size() != (1LL << n))
    throw ConfigError("probability vector does not match readout model");
  RVec p = probs;
  for (int j = 0; j < n; ++j) p = contract_bit(p, confusion_2x2(m, j), j, n);
  return p;
}

RVec correct_readout(const RVec& probs, const ReadoutModel& m) {
  const int n = m.n();
  if (probs.size() != (1LL << n))
    throw ConfigError("probability vector does not match readout model");
  if (std::abs(probs.sum() - 1.0) > 1e-9)
    throw ConfigError("probabilities must sum to 1 before correction");
  RVec p = probs;
  for (int j = 0; j < n; ++j) {
    const double det = m.f0[j] + m.f1[j] - 1.0;
    if (std::abs(det) < 1e-12)
      throw ConfigError("readout confusion is singular (f0 + f1 = 1)");
    RMat inv(2, 2);
    inv << m.f1[j], m.f1[j] - 1.0, m.f0[j] - 1.0, m.f0[j];
    inv /= det;
    p = contract_bit(p, inv, j, n);
  }
  return p;
}

std::vector<long long> sample_counts(const RVec& probs, long long shots,
                                     RngStream& rng) {
  if (shots <= 0) throw ConfigError("sample_counts: shots must be positive");
  std::vector<double> p(probs.size());
  double sum = 0;
  for (long long i = 0; i < probs.size(); ++i) {
    if (probs(i) < -1e-9)
      throw ConfigError("sample_counts: distinctly negative probability");
    p[i] = std::max(0.0, probs(i));
    sum += p[i];
  }
  if (sum <= 0) throw ConfigError("sample_counts: zero distribution");
  for (double& x : p) x /= sum;
  return multinomial(p, shots, rng);
}

// ---------------------------------------------------------------------------
// Dataset simulation
// ---------------------------------------------------------------------------

MeasRecord simulate_measurement(const DensityMatrix& rho,
                                const std::string& setting, long long shots,
                                const ReadoutModel& readout, RngStream& rng) {
  RVec p = measurement_probs(rho, setting);
  if (!readout.f0.empty()) {
    check_readout(readout, static_cast<int>(rho.dims().size()));
    if (!readout.is_perfect()) p = apply_confusion(p, readout);
  }
  MeasRecord rec;
  rec.setting = setting;
  if (shots > 0)
    rec.counts = sample_counts(p, shots, rng);
  else
    rec.probs = p;
  return rec;
}

TomoDataset simulate_tomography(const DensityMatrix& rho, long long shots,
                                std::uint64_t seed, const ReadoutModel& readout,
                                std::vector<std::string> settings,
                                int threads) {
  check_qubit_dims(rho.dims());
  const int n = static_cast<int>(rho.dims().size());
  if (!readout.f0.empty()) check_readout(readout, n);
  if (settings.empty()) settings = full_setting_family(n);
  for (const auto& s : settings) check_setting(s, n);

  TomoDataset ds;
  ds.n = n;
  ds.shots = shots > 0 ? shots : 0;
  ds.seed = seed;
  ds.corrected = false;
  ds.readout = readout.f0.empty() ? ReadoutModel::perfect(n) : readout;
  ds.records.resize(settings.size());
  parallel_for(
      static_cast<std::int64_t>(settings.size()),
      [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t i = b; i < e; ++i) {
          RngStream rng(seed, {static_cast<std::uint64_t>(i)});
          ds.records[i] =
              simulate_measurement(rho, settings[i], shots, ds.readout, rng);
        }
      },
      threads);
  return ds;
}

void TomoDataset::validate() const {
  if (n < 1) throw ConfigError("dataset: n must be >= 1");
  if (records.empty()) throw ConfigError("dataset: no records");
  if (!readout.f0.empty()) check_readout(readout, n);
  const long long dim = 1LL << n;
  for (const auto& r : records) {
    check_setting(r.setting, n);
    if (r.exact()) {
      if (r.probs.size() != dim)
        throw ConfigError("dataset: probability vector of wrong length");
      if (std::abs(r.probs.sum() - 1.0) > 1e-9)
        throw ConfigError("dataset: probabilities must sum to 1");
    } else {
      if (static_cast<long long>(r.counts.size()) != dim)
        throw ConfigError("dataset: counts vector of wrong length");
      long long total = 0;
      for (long long c : r.counts) {
        if (c < 0) throw ConfigError("dataset: negative count");
        total += c;
      }
      if (shots <= 0 || total != shots)
        throw ConfigError("dataset: counts must sum to the shot number");
    }
  }
}

// ---------------------------------------------------------------------------
// Normal system assembly
// ---------------------------------------------------------------------------

long long NormalSystem::max_row_nnz() const {
  long long m = 0;
  for (long long r = 0; r < dim; ++r)
    m = std::max(m, row_ptr[r + 1] - row_ptr[r]);
  return m;
}

RMat NormalSystem::dense() const {
  if (dim > 4096) throw ConfigError("normal system too large to densify");
  RMat a = RMat::Zero(dim, dim);
  for (long long r = 0; r < dim; ++r)
    for (long long k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      a(r, col[k]) = val[k];
  return a;
}

NormalSystem assemble_normal_system(int n,
                                    const std::vector<std::string>& settings) {
  if (n < 1 || n > 10) throw ConfigError("assemble: n out of range");
  if (settings.empty()) throw ConfigError("assemble: no settings");
  for (const auto& s : settings) check_setting(s, n);

  // Collapse duplicates; a repeated setting just weights its kernel.
  std::vector<std::string> uniq = settings;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  const bool weighted_family =
      static_cast<long long>(uniq.size()) == pow_ll(3, n) &&
      settings.size() % uniq.size() == 0;
  bool uniform = weighted_family;
  if (weighted_family && settings.size() != uniq.size()) {
    std::map<std::string, long long> mult;
    for (const auto& s : settings) ++mult[s];
    const long long m0 = mult.begin()->second;
    for (const auto& [s, m] : mult)
      if (m != m0) uniform = false;
  }

  SpMatD a;
  if (uniform) {
    // Full Pauli family: the sum over settings factorizes per qubit into
    // G1 = g_X + g_Y + g_Z, so A is just its Kronecker power.
    RMat g1 = basis_g('X') + basis_g('Y') + basis_g('Z');
    SpMatD k = g1.sparseView();
    SpMatD g1s = k;
    for (int j = 1; j < n; ++j) {
      SpMatD next = Eigen::kroneckerProduct(k, g1s).eval();
      k = std::move(next);
    }
    a = k * (static_cast<double>(settings.size()) / uniq.size());
  } else {
    std::map<char, SpMatD> gs;
    for (char c : {'X', 'Y', 'Z'}) gs[c] = basis_g(c).sparseView();
    std::map<std::string, long long> mult;
    for (const auto& s : settings) ++mult[s];
    for (const auto& [s, m] : mult) {
      SpMatD k = gs[s[0]];
      for (int j = 1; j < n; ++j) {
        SpMatD next = Eigen::kroneckerProduct(k, gs[s[j]]).eval();
        k = std::move(next);
      }
      if (a.rows() == 0)
        a = k * static_cast<double>(m);
      else
        a += k * static_cast<double>(m);
    }
  }

  // The kernels' analytic zeros carry ~1e-16 trig residue (cos(pi/4) and
  // sin(pi/4) round to different doubles); left in place it densifies the
  // pattern and welds the components together, so strip it relative to the
  // largest entry.
  a.makeCompressed();
  if (a.nonZeros() > 0) {
    const double amax =
        Eigen::Map<const Eigen::ArrayXd>(a.valuePtr(), a.nonZeros())
            .abs()
            .maxCoeff();
    a.prune(amax, 1e-12);
  }

  NormalSystem sys;
  sys.n = n;
  sys.dim = pow_ll(4, n);
  SpMatDR ar(a);
  ar.makeCompressed();
  sys.row_ptr.assign(ar.outerIndexPtr(), ar.outerIndexPtr() + sys.dim + 1);
  sys.col.assign(ar.innerIndexPtr(), ar.innerIndexPtr() + ar.nonZeros());
  sys.val.assign(ar.valuePtr(), ar.valuePtr() + ar.nonZeros());

  // Connected components of the sparsity graph: the symbolic structure the
  // direct solver factorizes block by block.
  std::vector<int> comp(sys.dim, -1);
  for (long long seed = 0; seed < sys.dim; ++seed) {
    if (comp[seed] >= 0) continue;
    const int id = static_cast<int>(sys.components.size());
    std::vector<int> members;
    std::vector<long long> stack{seed};
    comp[seed] = id;
    while (!stack.empty()) {
      const long long v = stack.back();
      stack.pop_back();
      members.push_back(static_cast<int>(v));
      for (long long k = sys.row_ptr[v]; k < sys.row_ptr[v + 1]; ++k) {
        const long long c = sys.col[k];
        if (comp[c] < 0) {
          comp[c] = id;
          stack.push_back(c);
        }
      }
    }
    std::sort(members.begin(), members.end());
    sys.components.push_back(std::move(members));
  }
  return sys;
}

Vec assemble_rhs(int n, const std::vector<std::string>& settings,
                 const std::vector<RVec>& probs, int threads) {
  if (settings.size() != probs.size())
    throw ConfigError("assemble_rhs: settings/probabilities mismatch");
  if (settings.empty()) throw ConfigError("assemble_rhs: no settings");
  const long long dim4 = pow_ll(4, n);
  const long long dim2 = 1LL << n;

  std::map<char, Mat> ws;
  for (char c : {'X', 'Y', 'Z'}) ws[c] = basis_w(c);

  const std::int64_t nrec = static_cast<std::int64_t>(settings.size());
  const std::int64_t block = 64;
  const std::int64_t nblocks = (nrec + block - 1) / block;
  std::vector<Vec> partial(nblocks);

  blocked_reduce(
      nrec, block,
      [&](std::int64_t bi, std::int64_t lo, std::int64_t hi) {
        Vec acc = Vec::Zero(dim4);
        Vec cur, next;
        for (std::int64_t i = lo; i < hi; ++i) {
          check_setting(settings[i], n);
          if (probs[i].size() != dim2)
            throw ConfigError("assemble_rhs: probability vector length");
          // b_s = W_s^H p_s, contracted one qubit axis at a time: axes to
          // the left are already pair indices (radix 4), the rest are still
          // outcome bits (radix 2).
          cur = probs[i].cast<cx>();
          for (int j = 0; j < n; ++j) {
            const Mat& w = ws[settings[i][j]];
            const long long outer = pow_ll(4, j);
            const long long rest = 1LL << (n - 1 - j);
            next.resize(outer * 4 * rest);
            for (long long o = 0; o < outer; ++o) {
              const long long src = o * 2 * rest;
              const long long dst = o * 4 * rest;
              for (int d = 0; d < 4; ++d) {
                const cx w0 = std::conj(w(0, d));
                const cx w1 = std::conj(w(1, d));
                for (long long r = 0; r < rest; ++r)
                  next(dst + d * rest + r) =
                      w0 * cur(src + r) + w1 * cur(src + rest + r);
              }
            }
            cur.swap(next);
          }
          acc += cur;
        }
        partial[bi] = std::move(acc);
      },
      [&](std::int64_t) {}, threads);

  Vec rhs = Vec::Zero(dim4);
  for (auto& p : partial) rhs += p;
  return rhs;
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

namespace {

Vec csr_mul(const NormalSystem& a, const Vec& x) {
  Vec y(a.dim);
  for (long long r = 0; r < a.dim; ++r) {
    cx s = 0;
    for (long long k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k)
      s += a.val[k] * x(a.col[k]);
    y(r) = s;
  }
  return y;
}

void solve_direct(const NormalSystem& a, const Vec& rhs, Vec& x) {
  std::vector<int> local(a.dim, -1);
  RMat block;
  RMat rb;
  for (const auto& comp : a.components) {
    const int k = static_cast<int>(comp.size());
    if (k == 1) {
      const int r = comp[0];
      double diag = 0;
      for (long long t = a.row_ptr[r]; t < a.row_ptr[r + 1]; ++t)
        if (a.col[t] == r) diag = a.val[t];
      if (diag <= 0)
        throw SolverError("rank-deficient setting subset (zero diagonal)");
      x(r) = rhs(r) / diag;
      continue;
    }
    for (int i = 0; i < k; ++i) local[comp[i]] = i;
    block.setZero(k, k);
    rb.resize(k, 2);
    for (int i = 0; i < k; ++i) {
      const long long r = comp[i];
      for (long long t = a.row_ptr[r]; t < a.row_ptr[r + 1]; ++t) {
        const int lc = local[a.col[t]];
        if (lc >= 0) block(i, lc) = a.val[t];
      }
      rb(i, 0) = rhs(r).real();
      rb(i, 1) = rhs(r).imag();
    }
    Eigen::LLT<RMat> llt(block);
    if (llt.info() != Eigen::Success)
      throw SolverError(
          "rank-deficient setting subset (component not positive definite)");
    RMat sol = llt.solve(rb);
    for (int i = 0; i < k; ++i) x(comp[i]) = cx(sol(i, 0), sol(i, 1));
    for (int i = 0; i < k; ++i) local[comp[i]] = -1;
  }
}

RVec csr_mul_real(const NormalSystem& a, const RVec& x) {
  RVec y(a.dim);
  for (long long r = 0; r < a.dim; ++r) {
    double s = 0;
    for (long long k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k)
      s += a.val[k] * x(a.col[k]);
    y(r) = s;
  }
  return y;
}

int cg_real(const NormalSystem& a, const RVec& b, const RVec& dinv, RVec& x,
            int maxit, double tol) {
  x.setZero(a.dim);
  const double bnorm = b.norm();
  if (bnorm == 0) return 0;
  RVec r = b;
  RVec z = dinv.cwiseProduct(r);
  RVec p = z;
  double rz = r.dot(z);
  for (int it = 1; it <= maxit; ++it) {
    RVec ap = csr_mul_real(a, p);
    const double pap = p.dot(ap);
    if (pap <= 0) throw SolverError("cg: operator not positive definite");
    const double alpha = rz / pap;
    x += alpha * p;
    r -= alpha * ap;
    if (r.norm() <= tol * bnorm) return it;
    z = dinv.cwiseProduct(r);
    const double rz2 = r.dot(z);
    p = z + (rz2 / rz) * p;
    rz = rz2;
  }
  throw SolverError("cg: no convergence within iteration budget");
}

}  // namespace

Vec solve_normal(const NormalSystem& a, const Vec& rhs, SolveMethod method,
                 SolveStats* stats) {
  if (rhs.size() != a.dim) throw ConfigError("solve_normal: rhs length");
  if (method == SolveMethod::automatic)
    method = a.n <= 6 ? SolveMethod::direct : SolveMethod::cg;

  const auto t0 = std::chrono::steady_clock::now();
  Vec x(a.dim);
  int iters = 0;
  if (method == SolveMethod::direct) {
    solve_direct(a, rhs, x);
  } else {
    RVec dinv(a.dim);
    for (long long r = 0; r < a.dim; ++r) {
      double diag = 0;
      for (long long k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k)
        if (a.col[k] == r) diag = a.val[k];
      if (diag <= 0)
        throw SolverError("rank-deficient setting subset (zero diagonal)");
      dinv(r) = 1.0 / diag;
    }
    const int maxit = 200 + 40 * a.n;
    RVec xr, xi;
    const int i1 = cg_real(a, rhs.real(), dinv, xr, maxit, 1e-12);
    const int i2 = cg_real(a, rhs.imag(), dinv, xi, maxit, 1e-12);
    iters = std::max(i1, i2);
    x.real() = xr;
    x.imag() = xi;
  }

  const double bnorm = std::max(rhs.norm(), 1e-300);
  const double res = (csr_mul(a, x) - rhs).norm() / bnorm;
  const auto t1 = std::chrono::steady_clock::now();
  if (res > 1e-10)
    throw SolverError("normal-equation residual " + std::to_string(res) +
                      " exceeds 1e-10");
  if (stats) {
    stats->method = method == SolveMethod::direct ? "direct" : "cg";
    stats->iterations = iters;
    stats->residual = res;
    stats->solve_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    stats->nnz = a.nnz();
  }
  return x;
}

// ---------------------------------------------------------------------------
// Reconstruction
// ---------------------------------------------------------------------------

ReconstructionResult reconstruct(const TomoDataset& data, SolveMethod method,
                                 int threads) {
  data.validate();
  if (data.n > 7)
    throw ConfigError(
        "full reconstruction is supported to n = 7; use the parity shortcut "
        "beyond");
  Warnings warnings;

  const long long dim2 = 1LL << data.n;
  std::vector<std::string> settings;
  std::vector<RVec> probs;
  settings.reserve(data.records.size());
  probs.reserve(data.records.size());
  const bool fix_readout = !data.corrected && !data.readout.f0.empty() &&
                           !data.readout.is_perfect();
  double min_prob = 0;
  for (const auto& rec : data.records) {
    RVec p;
    if (rec.exact()) {
      p = rec.probs;
    } else {
      p.resize(dim2);
      for (long long k = 0; k < dim2; ++k)
        p(k) = static_cast<double>(rec.counts[k]) / data.shots;
    }
    if (fix_readout) p = correct_readout(p, data.readout);
    min_prob = std::min(min_prob, p.minCoeff());
    settings.push_back(rec.setting);
    probs.push_back(std::move(p));
  }
  if (min_prob < 0)
    warn(&warnings, "corrected probabilities dip to " +
                        std::to_string(min_prob) +
                        "; retained for the linear solve");

  NormalSystem sys = assemble_normal_system(data.n, settings);
  Vec rhs = assemble_rhs(data.n, settings, probs, threads);
  SolveStats stats;
  Vec x = solve_normal(sys, rhs, method, &stats);

  // Pair index back to matrix entry: digit d_j = 2 m_j + l_j per qubit.
  Mat raw = Mat::Zero(dim2, dim2);
  for (long long v = 0; v < sys.dim; ++v) {
    long long l = 0, m = 0, rem = v;
    for (int j = data.n - 1; j >= 0; --j) {
      const long long d = rem & 3;
      rem >>= 2;
      l |= (d & 1) << (data.n - 1 - j);
      m |= (d >> 1) << (data.n - 1 - j);
    }
    raw(l, m) = x(v);
  }
  raw = 0.5 * (raw + raw.adjoint()).eval();
  const double tr = raw.trace().real();
  if (std::abs(tr) < 0.2)
    throw SolverError("reconstruction trace collapsed to " +
                      std::to_string(tr));
  raw /= tr;

  DensityMatrix rho = psd_project(raw, std::vector<int>(data.n, 2));
  return {std::move(rho), std::move(raw), stats, std::move(warnings)};
}

// ---------------------------------------------------------------------------
// Parity
// ---------------------------------------------------------------------------

namespace {

void fit_fringe(const RVec& gamma, const RVec& y, int n, ParityScan& out) {
  if (gamma.size() != y.size() || gamma.size() < 2 * n + 1)
    throw ConfigError("parity fit: need at least 2N+1 grid points");
  const int fmax = n + 2;
  std::vector<double> res(fmax + 1, 0.0);
  std::vector<double> af(fmax + 1, 0.0), bf(fmax + 1, 0.0);
  for (int f = 1; f <= fmax; ++f) {
    double scc = 0, scs = 0, sss = 0, scy = 0, ssy = 0;
    for (long long i = 0; i < gamma.size(); ++i) {
      const double c = std::cos(f * gamma(i));
      const double s = std::sin(f * gamma(i));
      scc += c * c;
      scs += c * s;
      sss += s * s;
      scy += c * y(i);
      ssy += s * y(i);
    }
    const double det = scc * sss - scs * scs;
    if (std::abs(det) < 1e-12) {
      res[f] = std::numeric_limits<double>::infinity();
      continue;
    }
    const double a = (sss * scy - scs * ssy) / det;
    const double b = (scc * ssy - scs * scy) / det;
    double r2 = 0;
    for (long long i = 0; i < gamma.size(); ++i) {
      const double fit =
          a * std::cos(f * gamma(i)) + b * std::sin(f * gamma(i));
      r2 += (y(i) - fit) * (y(i) - fit);
    }
    res[f] = std::sqrt(r2);
    af[f] = a;
    bf[f] = b;
  }
  int best = 1;
  for (int f = 2; f <= fmax; ++f)
    if (res[f] < res[best]) best = f;
  out.frequency = best;
  out.amplitude = std::hypot(af[best], bf[best]);
  out.phase = std::atan2(-bf[best], af[best]);
  out.residual = res[best];
  double alt = std::numeric_limits<double>::infinity();
  if (best - 1 >= 1) alt = std::min(alt, res[best - 1]);
  if (best + 1 <= fmax) alt = std::min(alt, res[best + 1]);
  out.alt_residual = alt;
}

}  // namespace

ParityScan parity_scan(const DensityMatrix& rho, const RVec& gamma) {
  check_qubit_dims(rho.dims());
  const int n = static_cast<int>(rho.dims().size());
  const long long dim = 1LL << n;
  // Only the anti-diagonal of rho enters <P(gamma)>; group it by excitation
  // number m, each class oscillating at exp(-i gamma (n - 2m)).
  Vec h = Vec::Zero(n + 1);
  const Mat& m = rho.mat();
  for (long long c = 0; c < dim; ++c) {
    const long long r = dim - 1 - c;  // bitwise complement of c on n bits
    h(static_cast<int>(__builtin_popcountll(c))) += m(r, c);
  }
  ParityScan scan;
  scan.gamma = gamma;
  scan.parity.resize(gamma.size());
  for (long long i = 0; i < gamma.size(); ++i) {
    cx v = 0;
    for (int k = 0; k <= n; ++k)
      v += h(k) * std::exp(cx(0, -gamma(i) * (n - 2 * k)));
    scan.parity(i) = v.real();
  }
  fit_fringe(gamma, scan.parity, n, scan);
  return scan;
}

ParityScan parity_scan_sampled(const DensityMatrix& rho, const RVec& gamma,
                               long long shots, std::uint64_t seed,
                               const ReadoutModel& readout, int threads) {
  check_qubit_dims(rho.dims());
  const int n = static_cast<int>(rho.dims().size());
  if (shots <= 0) throw ConfigError("parity scan: shots must be positive");
  if (!readout.f0.empty()) check_readout(readout, n);
  const bool fix = !readout.f0.empty() && !readout.is_perfect();
  const long long dim = 1LL << n;

  ParityScan scan;
  scan.gamma = gamma;
  scan.parity.resize(gamma.size());
  parallel_for(
      gamma.size(),
      [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
          const double b = gamma(i);
          // Maps the +1 eigenvector of cos(b) X + sin(b) Y onto |0>.
          Mat u(2, 2);
          u << 1.0, std::exp(cx(0, -b)), 1.0, -std::exp(cx(0, -b));
          u /= std::sqrt(2.0);
          RVec p = measurement_probs(rho, std::vector<Mat>(n, u));
          if (fix) p = apply_confusion(p, readout);
          RngStream rng(seed, {static_cast<std::uint64_t>(i)});
          std::vector<long long> counts = sample_counts(p, shots, rng);
          RVec freq(dim);
          for (long long k = 0; k < dim; ++k)
            freq(k) = static_cast<double>(counts[k]) / shots;
          if (fix) freq = correct_readout(freq, readout);
          double par = 0;
          for (long long k = 0; k < dim; ++k)
            par += (__builtin_popcountll(k) % 2 ? -1.0 : 1.0) * freq(k);
          scan.parity(i) = par;
        }
      },
      threads);
  fit_fringe(gamma, scan.parity, n, scan);
  return scan;
}

double ghz_fidelity_shortcut(double p_all0, double p_all1, double amplitude,
                             Warnings* w) {
  if (p_all0 < 0 || p_all0 > 1 || p_all1 < 0 || p_all1 > 1)
    throw ConfigError("fidelity shortcut: populations must lie in [0, 1]");
  if (amplitude < 0 || amplitude > 1 + 1e-9)
    throw ConfigError("fidelity shortcut: amplitude must lie in [0, 1]");
  const double f = 0.5 * (p_all0 + p_all1) + 0.5 * amplitude;
  if (f < 0 || f > 1 + 1e-6)
    warn(w, "shortcut fidelity " + std::to_string(f) + " outside [0, 1]");
  return f;
}

double ghz_significance(double fidelity, double sigma) {
  if (sigma <= 0)
    throw ConfigError("significance: sigma must be positive");
  return (fidelity - 0.5) / sigma;
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

BootstrapResult bootstrap_fidelity(
    const TomoDataset& data,
    const std::function<double(const DensityMatrix&)>& metric, int repeats,
    std::uint64_t seed, SolveMethod method, int threads) {
  data.validate();
  if (repeats < 2) throw ConfigError("bootstrap: need at least 2 replicates");
  for (const auto& r : data.records)
    if (r.exact())
      throw ConfigError("bootstrap: exact datasets carry no sampling noise");

  const long long dim = 1LL << data.n;
  std::vector<std::vector<double>> base(data.records.size());
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    base[i].resize(dim);
    for (long long k = 0; k < dim; ++k)
      base[i][k] =
          static_cast<double>(data.records[i].counts[k]) / data.shots;
  }

  BootstrapResult out;
  out.repeats = repeats;
  out.samples.resize(repeats);
  parallel_for(
      repeats,
      [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t r = lo; r < hi; ++r) {
          TomoDataset ds = data;
          for (std::size_t i = 0; i < ds.records.size(); ++i) {
            RngStream rng(seed, {static_cast<std::uint64_t>(r),
                                 static_cast<std::uint64_t>(i)});
            ds.records[i].counts = multinomial(base[i], data.shots, rng);
          }
          out.samples[r] = metric(reconstruct(ds, method, 1).rho);
        }
      },
      threads);

  double mean = 0;
  for (double s : out.samples) mean += s;
  mean /= repeats;
  double var = 0;
  for (double s : out.samples) var += (s - mean) * (s - mean);
  out.sigma = std::sqrt(var / (repeats - 1));
  return out;
}

}  // namespace qbus
