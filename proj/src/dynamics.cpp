#include "qbus/dynamics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "qbus/threading.hpp"

namespace qbus {
namespace {

constexpr double kTimeTol = 1e-9;
constexpr long long kSpectralLimit = 512;   // dense propagator above this: no
constexpr long long kSuperopLimit = 512;    // dim^2 cap for exact Lindblad
constexpr long long kLindbladCap = 1024;
constexpr long long kUnitaryCap = 8192;

int roster_pos(const std::vector<int>& roster, int qubit) {
  auto it = std::lower_bound(roster.begin(), roster.end(), qubit);
  if (it == roster.end() || *it != qubit) return -1;
  return static_cast<int>(it - roster.begin());
}

struct Compiled {
  std::vector<int> dims;
  int nq = 0;
  bool has_res = false;
  int fock = 0;
  std::vector<double> boundaries;              // K+1 entries
  std::vector<Operator> h;                     // K segments
  std::vector<std::vector<double>> phase_at;   // (K+1) x nq, rad
  std::vector<std::vector<double>> rate;       // K x nq, rad/ns
  // Boundary events, axes already re-referenced into the bus frame.
  std::vector<std::vector<std::pair<int, Mat>>> ops;  // (slot, 2x2)
};

Compiled compile(const PulseSchedule& sched, const DeviceConfig& dev,
                 ModelKind model) {
  if (sched.roster.empty()) throw ConfigError("schedule: empty roster");
  for (std::size_t i = 0; i < sched.roster.size(); ++i) {
    if (dev.qubit_pos(sched.roster[i]) < 0)
      throw ConfigError("schedule: roster qubit not in device");
    if (i > 0 && sched.roster[i] <= sched.roster[i - 1])
      throw ConfigError("schedule: roster must be strictly ascending");
  }
  Compiled c;
  c.nq = static_cast<int>(sched.roster.size());
  c.has_res = model == ModelKind::full;
  c.fock = c.has_res ? dev.fock_cutoff : 0;
  c.dims.assign(c.nq, 2);
  if (c.has_res) c.dims.push_back(dev.fock_cutoff);

  const std::size_t k = sched.segments.size();
  c.boundaries.resize(k + 1);
  c.boundaries[0] = 0;
  c.phase_at.assign(k + 1, std::vector<double>(c.nq, 0.0));
  c.rate.assign(k, std::vector<double>(c.nq, 0.0));
  c.h.reserve(k);
  for (std::size_t s = 0; s < k; ++s) {
    const auto& seg = sched.segments[s];
    if (seg.duration_ns < 0)
      throw ConfigError("schedule: negative segment duration");
    for (int q : seg.active)
      if (roster_pos(sched.roster, q) < 0)
        throw ConfigError("schedule: active qubit outside roster");
    c.boundaries[s + 1] = c.boundaries[s] + seg.duration_ns;

    std::map<int, double> freq;  // absolute MHz for every roster qubit
    for (int q : sched.roster) {
      auto it = seg.freq_mhz.find(q);
      freq[q] = it != seg.freq_mhz.end() ? it->second : dev.qubit(q).idle_mhz;
    }
    // The reference frame of each qubit's drive tracks its dressed
    // frequency: programmed detuning plus the leading dispersive pull
    // g^2/Delta (the experimentally calibrated frame).  Residual higher
    // orders stay in the state and show up as infidelity.
    if (model == ModelKind::full) {
      c.h.push_back(build_full_hamiltonian(dev, freq, sched.roster));
      for (int j = 0; j < c.nq; ++j) {
        const auto& qp = dev.qubit(sched.roster[j]);
        const double d = freq[sched.roster[j]] - dev.bus_mhz;
        double rate = d;
        if (std::abs(d) > 2.0 * qp.g_mhz) rate += qp.g_mhz * qp.g_mhz / d;
        c.rate[s][j] = ang_per_mhz * rate;
      }
    } else {
      std::map<int, double> delta;
      for (auto& [q, f] : freq) delta[q] = f - dev.bus_mhz;
      c.h.push_back(
          build_effective_collective_hamiltonian(dev, sched.roster, delta));
      // The dispersive model is quoted in the bus frame too, so the drive
      // frame tracks detuning plus the Stark pull it always resolves.
      for (int j = 0; j < c.nq; ++j) {
        const auto& qp = dev.qubit(sched.roster[j]);
        const double d = delta[sched.roster[j]];
        c.rate[s][j] = ang_per_mhz * (d + qp.g_mhz * qp.g_mhz / d);
      }
    }
    for (int j = 0; j < c.nq; ++j)
      c.phase_at[s + 1][j] = c.phase_at[s][j] + c.rate[s][j] * seg.duration_ns;
  }

  c.ops.assign(k + 1, {});
  for (const auto& ev : sched.events) {
    int b = -1;
    for (std::size_t i = 0; i <= k; ++i)
      if (std::abs(ev.t_ns - c.boundaries[i]) <= kTimeTol) {
        b = static_cast<int>(i);
        break;
      }
    if (b < 0)
      throw ConfigError("schedule: event time is not a segment boundary");
    const int slot = roster_pos(sched.roster, ev.qubit);
    if (slot < 0) throw ConfigError("schedule: event qubit outside roster");
    Mat u = ev.z_axis
                ? rot_z(ev.theta)
                : rot_inplane(ev.kappa - c.phase_at[b][slot], ev.theta);
    c.ops[b].emplace_back(slot, std::move(u));
  }
  return c;
}

std::vector<double> phases_at(const Compiled& c, std::size_t seg, double dt) {
  std::vector<double> ph = c.phase_at[seg];
  if (dt > 0)
    for (int j = 0; j < c.nq; ++j) ph[j] += c.rate[seg][j] * dt;
  return ph;
}

// Record times grouped per boundary / segment interior.
struct RecordPlan {
  // For boundary i: indices of records exactly at boundaries[i].
  std::vector<std::vector<int>> at_boundary;
  // For segment s: (record index, offset from segment start), ascending.
  std::vector<std::vector<std::pair<int, double>>> inside;
};

RecordPlan plan_records(const Compiled& c, const std::vector<double>& times) {
  const std::size_t k = c.h.size();
  RecordPlan p;
  p.at_boundary.assign(k + 1, {});
  p.inside.assign(k, {});
  const double total = c.boundaries.back();
  double prev = -1;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    if (t < -kTimeTol || t > total + kTimeTol)
      throw ConfigError("record time outside the schedule");
    if (t <= prev) throw ConfigError("record times must be strictly ascending");
    prev = t;
    bool placed = false;
    for (std::size_t b = 0; b <= k; ++b)
      if (std::abs(t - c.boundaries[b]) <= kTimeTol) {
        p.at_boundary[b].push_back(static_cast<int>(i));
        placed = true;
        break;
      }
    if (placed) continue;
    for (std::size_t s = 0; s < k; ++s)
      if (t > c.boundaries[s] && t < c.boundaries[s + 1]) {
        p.inside[s].emplace_back(static_cast<int>(i), t - c.boundaries[s]);
        placed = true;
        break;
      }
    if (!placed) throw ConfigError("record time could not be placed");
  }
  return p;
}

void check_leakage(const Vec& v, const Compiled& c, double tol, double t) {
  if (!c.has_res) return;
  double pop = 0;
  const int f = c.fock;
  for (long long i = f - 1; i < v.size(); i += f) pop += std::norm(v[i]);
  if (pop > tol) {
    std::ostringstream os;
    os << "leakage: top Fock level holds " << pop << " population at t=" << t
       << " ns (cutoff too small or drive too strong)";
    throw PhysicsError(os.str());
  }
}

void check_leakage_rho(const Mat& m, const Compiled& c, double tol, double t) {
  if (!c.has_res) return;
  double pop = 0;
  const int f = c.fock;
  for (long long i = f - 1; i < m.rows(); i += f) pop += m(i, i).real();
  if (pop > tol) {
    std::ostringstream os;
    os << "leakage: top Fock level holds " << pop << " population at t=" << t
       << " ns (cutoff too small or drive too strong)";
    throw PhysicsError(os.str());
  }
}

Vec to_local_frame(const Vec& v, const Compiled& c,
                   const std::vector<double>& phases) {
  Vec out = v;
  for (int j = 0; j < c.nq; ++j) {
    if (phases[j] == 0) continue;
    Mat d = Mat::Identity(2, 2);
    d(1, 1) = std::exp(cx(0, phases[j]));
    apply_local(out, d, j, c.dims);
  }
  return out;
}

Mat to_local_frame_rho(const Mat& m, const Compiled& c,
                       const std::vector<double>& phases) {
  Mat out = m;
  for (int j = 0; j < c.nq; ++j) {
    if (phases[j] == 0) continue;
    Mat d = Mat::Identity(2, 2);
    d(1, 1) = std::exp(cx(0, phases[j]));
    conjugate_local(out, d, j, c.dims);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Unitary propagation
// ---------------------------------------------------------------------------

struct SpectralProp {
  Mat v;
  RVec lam;  // rad/ns
  void init(const Operator& h) {
    Eigen::SelfAdjointEigenSolver<Mat> es(h.dense());
    if (es.info() != Eigen::Success)
      throw SolverError("spectral propagator: eigendecomposition failed");
    v = es.eigenvectors();
    lam = es.eigenvalues();
  }
  Vec advance(const Vec& psi, double dt) const {
    Vec c = v.adjoint() * psi;
    for (long long i = 0; i < c.size(); ++i)
      c[i] *= std::exp(cx(0, -lam[i] * dt));
    return v * c;
  }
};

// Uniform co-rotating shift.  Both model Hamiltonians conserve the total
// excitation number (photons included), and every dissipator is covariant
// under a uniform z-rotation, so removing the roster-mean frame rate times
// that number before stepping is exact; it just stops the integrator from
// chasing the fast common-mode phase.  States come back via a uniform
// unwind at segment boundaries and record times.
double uniform_shift(const Compiled& c, std::size_t s) {
  double a = 0;
  for (int j = 0; j < c.nq; ++j) a += c.rate[s][j];
  return a / c.nq;
}

void subtract_number_diag(SpMat& h, double a, int res) {
  if (a == 0) return;
  for (long long v = 0; v < h.rows(); ++v) {
    const long long q = res > 1 ? v / res : v;
    int n = std::popcount(static_cast<unsigned long long>(q));
    if (res > 1) n += static_cast<int>(v % res);
    if (n) h.coeffRef(v, v) -= a * n;
  }
}

Mat fock_phase(int fock, double s) {
  Mat d = Mat::Identity(fock, fock);
  for (int n = 1; n < fock; ++n) d(n, n) = std::exp(cx(0, s * n));
  return d;
}

Vec rk4_step_sparse(const SpMat& h, const Vec& psi, double dt) {
  const cx mi(0, -1);
  Vec k1 = mi * (h * psi);
  Vec k2 = mi * (h * (psi + 0.5 * dt * k1));
  Vec k3 = mi * (h * (psi + 0.5 * dt * k2));
  Vec k4 = mi * (h * (psi + dt * k3));
  return psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Advance by `span` with fixed steps, Richardson-monitoring every 64 steps.
Vec rk4_advance(const SpMat& h, Vec psi, double span, double step, double tol,
                Warnings* w, double* norm_drift) {
  long long counter = 0;
  double left = span;
  while (left > kTimeTol) {
    const double dt = std::min(step, left);
    if (++counter % 64 == 0) {
      Vec one = rk4_step_sparse(h, psi, dt);
      Vec two = rk4_step_sparse(h, rk4_step_sparse(h, psi, dt / 2), dt / 2);
      const double err = (one - two).cwiseAbs().maxCoeff() / 15.0;
      if (err > tol)
        throw SolverError(
            "unitary RK4: local error estimate above tolerance; reduce "
            "step_ns");
      psi = std::move(two);
    } else {
      psi = rk4_step_sparse(h, psi, dt);
    }
    const double n = psi.norm();
    if (norm_drift) *norm_drift += std::abs(n - 1.0);
    psi /= n;
    left -= dt;
  }
  if (norm_drift && *norm_drift > 1e-6 && w)
    warn(w, "unitary RK4: cumulative norm drift exceeded 1e-6");
  return psi;
}

// ---------------------------------------------------------------------------
// Lindblad right-hand side
// ---------------------------------------------------------------------------

struct LindbladOps {
  SpMat h;
  // Jump bookkeeping: qubit relaxation shifts, resonator shift, and a fused
  // elementwise matrix for dephasing + anticommutator parts.
  std::vector<std::pair<long long, double>> qubit_jumps;  // (bit weight, rate)
  double kappa = 0;
  int fock = 0;
  RMat elem;  // elem(r,c) = deph(r,c) - (w_r + w_c)/2
};

LindbladOps build_lindblad_ops(const Operator& h, const Compiled& c,
                               const NoiseModel& nm) {
  LindbladOps ops;
  ops.h = h.sparse();
  ops.fock = c.fock;
  ops.kappa = c.has_res ? nm.kappa_res : 0.0;
  const long long dim = h.dim();
  const long long res = c.has_res ? c.fock : 1;

  std::vector<long long> bit(c.nq);
  for (int j = 0; j < c.nq; ++j) bit[j] = (1LL << (c.nq - 1 - j)) * res;
  for (int j = 0; j < c.nq; ++j)
    ops.qubit_jumps.emplace_back(bit[j], 1.0 / nm.t1_ns[j]);

  RVec w = RVec::Zero(dim);
  for (long long v = 0; v < dim; ++v) {
    double acc = 0;
    for (int j = 0; j < c.nq; ++j)
      if ((v / bit[j]) % 2) acc += 1.0 / nm.t1_ns[j];
    if (ops.kappa > 0) acc += ops.kappa * static_cast<double>(v % res);
    w[v] = acc;
  }
  // Dephasing coefficients: sum_j 1/(2 Tphi_j) (z_j(r) z_j(c) - 1).
  ops.elem = RMat::Zero(dim, dim);
  for (int j = 0; j < c.nq; ++j) {
    const double gp = 0.5 / nm.tphi_ns[j];
    for (long long cc = 0; cc < dim; ++cc) {
      const double zc = ((cc / bit[j]) % 2) ? -1.0 : 1.0;
      for (long long r = 0; r < dim; ++r) {
        const double zr = ((r / bit[j]) % 2) ? -1.0 : 1.0;
        ops.elem(r, cc) += gp * (zr * zc - 1.0);
      }
    }
  }
  for (long long cc = 0; cc < dim; ++cc)
    for (long long r = 0; r < dim; ++r)
      ops.elem(r, cc) -= 0.5 * (w[r] + w[cc]);
  return ops;
}

void lindblad_rhs(const LindbladOps& ops, const Mat& rho, Mat& out) {
  const cx mi(0, -1);
  Mat hr = ops.h * rho;
  out = mi * (hr - hr.adjoint().eval());
  const long long dim = rho.rows();
  for (long long cc = 0; cc < dim; ++cc)
    for (long long r = 0; r < dim; ++r)
      out(r, cc) += ops.elem(r, cc) * rho(r, cc);
  for (const auto& [b, rate] : ops.qubit_jumps) {
    for (long long cc = 0; cc < dim; ++cc) {
      if ((cc / b) % 2) continue;
      for (long long r = 0; r < dim; ++r) {
        if ((r / b) % 2) continue;
        out(r, cc) += rate * rho(r + b, cc + b);
      }
    }
  }
  if (ops.kappa > 0) {
    const int f = ops.fock;
    for (long long cc = 0; cc < dim; ++cc) {
      const int fc = static_cast<int>(cc % f);
      if (fc + 1 >= f) continue;
      for (long long r = 0; r < dim; ++r) {
        const int fr = static_cast<int>(r % f);
        if (fr + 1 >= f) continue;
        out(r, cc) += ops.kappa * std::sqrt(double(fr + 1)) *
                      std::sqrt(double(fc + 1)) * rho(r + 1, cc + 1);
      }
    }
  }
}

Mat rk4_step_lindblad(const LindbladOps& ops, const Mat& rho, double dt,
                      Mat& k1, Mat& k2, Mat& k3, Mat& k4, Mat& tmp) {
  lindblad_rhs(ops, rho, k1);
  tmp = rho + 0.5 * dt * k1;
  lindblad_rhs(ops, tmp, k2);
  tmp = rho + 0.5 * dt * k2;
  lindblad_rhs(ops, tmp, k3);
  tmp = rho + dt * k3;
  lindblad_rhs(ops, tmp, k4);
  return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Mat rk4_advance_lindblad(const LindbladOps& ops, Mat rho, double span,
                         double step, double tol) {
  Mat k1, k2, k3, k4, tmp;
  long long counter = 0;
  double left = span;
  while (left > kTimeTol) {
    const double dt = std::min(step, left);
    if (++counter % 64 == 0) {
      Mat one = rk4_step_lindblad(ops, rho, dt, k1, k2, k3, k4, tmp);
      Mat halfway = rk4_step_lindblad(ops, rho, dt / 2, k1, k2, k3, k4, tmp);
      Mat two = rk4_step_lindblad(ops, halfway, dt / 2, k1, k2, k3, k4, tmp);
      const double err = (one - two).cwiseAbs().maxCoeff() / 15.0;
      if (err > tol)
        throw SolverError(
            "lindblad RK4: local error estimate above tolerance; reduce "
            "step_ns");
      rho = std::move(two);
    } else {
      rho = rk4_step_lindblad(ops, rho, dt, k1, k2, k3, k4, tmp);
    }
    left -= dt;
  }
  return rho;
}

// Dense superoperator for tiny systems (exact path).
Mat build_superop(const Operator& h, const Compiled& c, const NoiseModel& nm) {
  const long long d = h.dim();
  const Mat hd = h.dense();
  const Mat id = Mat::Identity(d, d);
  auto kron = [](const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (long long i = 0; i < a.rows(); ++i)
      for (long long j = 0; j < a.cols(); ++j)
        out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) =
            a(i, j) * b;
    return out;
  };
  const cx mi(0, -1);
  Mat s = mi * (kron(id, hd) - kron(hd.transpose(), id));
  auto add_channel = [&](const Mat& l, double rate) {
    if (rate <= 0) return;
    Mat ldag_l = l.adjoint() * l;
    s += rate * (kron(l.conjugate(), l) -
                 0.5 * (kron(id, ldag_l) + kron(ldag_l.transpose(), id)));
  };
  const long long res = c.has_res ? c.fock : 1;
  for (int j = 0; j < c.nq; ++j) {
    const long long bit = (1LL << (c.nq - 1 - j)) * res;
    Mat sm = Mat::Zero(d, d), sz = Mat::Zero(d, d);
    for (long long v = 0; v < d; ++v) {
      if ((v / bit) % 2) {
        sm(v - bit, v) = 1;
        sz(v, v) = -1;
      } else {
        sz(v, v) = 1;
      }
    }
    add_channel(sm, 1.0 / nm.t1_ns[j]);
    add_channel(sz, 0.5 / nm.tphi_ns[j]);
  }
  if (c.has_res && nm.kappa_res > 0) {
    Mat a = Mat::Zero(d, d);
    for (long long v = 0; v < d; ++v) {
      const int f = static_cast<int>(v % c.fock);
      if (f > 0) a(v - 1, v) = std::sqrt(static_cast<double>(f));
    }
    add_channel(a, nm.kappa_res);
  }
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

double PulseSchedule::total_ns() const {
  double t = 0;
  for (const auto& s : segments) t += s.duration_ns;
  return t;
}

NoiseModel NoiseModel::from_device(const DeviceConfig& dev,
                                   const std::vector<int>& roster,
                                   double tphi_factor) {
  NoiseModel nm;
  for (int q : roster) {
    const auto& p = dev.qubit(q);
    nm.t1_ns.push_back(p.t1_ns);
    nm.tphi_ns.push_back(tphi_factor * p.t2_star_ns);
  }
  return nm;
}

std::vector<int> schedule_dims(const PulseSchedule& sched,
                               const DeviceConfig& dev, ModelKind model) {
  std::vector<int> dims(sched.roster.size(), 2);
  if (model == ModelKind::full) dims.push_back(dev.fock_cutoff);
  return dims;
}

PureState schedule_ground(const PulseSchedule& sched, const DeviceConfig& dev,
                          ModelKind model) {
  return PureState::ground(schedule_dims(sched, dev, model));
}

UnitaryResult evolve_unitary(const PulseSchedule& sched,
                             const DeviceConfig& dev, ModelKind model,
                             const PureState& initial,
                             const EvolutionOptions& opts) {
  Compiled c = compile(sched, dev, model);
  if (initial.dims() != c.dims)
    throw ConfigError("evolve_unitary: initial state dims mismatch");
  const long long dim = dim_product(c.dims);
  if (dim > kUnitaryCap)
    throw PhysicsError("evolve_unitary: dimension cap (8192) exceeded");

  Warnings warnings;
  RecordPlan rp = plan_records(c, opts.record_ns);
  std::vector<Vec> rec(opts.record_ns.size());
  Vec psi = initial.amps();
  double norm_drift = 0;

  auto emit = [&](int idx, const Vec& v, std::size_t seg, double dt) {
    check_leakage(v, c, opts.leak_tol, c.boundaries[seg] + dt);
    rec[idx] = opts.local_frame
                   ? to_local_frame(v, c, phases_at(c, seg, dt))
                   : v;
  };

  const std::size_t k = c.h.size();
  for (std::size_t s = 0; s <= k; ++s) {
    for (const auto& [slot, u] : c.ops[s]) apply_local(psi, u, slot, c.dims);
    for (int idx : rp.at_boundary[s]) emit(idx, psi, s, 0.0);
    if (s == k) break;

    const double span = sched.segments[s].duration_ns;
    if (span <= kTimeTol) continue;
    if (dim <= kSpectralLimit) {
      SpectralProp prop;
      prop.init(c.h[s]);
      for (const auto& [idx, dt] : rp.inside[s])
        emit(idx, prop.advance(psi, dt), s, dt);
      psi = prop.advance(psi, span);
    } else {
      const double a = uniform_shift(c, s);
      SpMat hs = c.h[s].sparse();
      subtract_number_diag(hs, a, c.has_res ? c.fock : 1);
      auto unshift = [&](const Vec& v, double t) -> Vec {
        if (a == 0) return v;
        Vec out = to_local_frame(v, c, std::vector<double>(c.nq, -a * t));
        if (c.has_res) apply_local(out, fock_phase(c.fock, -a * t), c.nq,
                                   c.dims);
        return out;
      };
      double done = 0;
      for (const auto& [idx, dt] : rp.inside[s]) {
        psi = rk4_advance(hs, psi, dt - done, opts.step_ns, opts.rk_tol,
                          &warnings, &norm_drift);
        done = dt;
        emit(idx, unshift(psi, dt), s, dt);
      }
      psi = rk4_advance(hs, psi, span - done, opts.step_ns, opts.rk_tol,
                        &warnings, &norm_drift);
      psi = unshift(psi, span);
    }
    check_leakage(psi, c, opts.leak_tol, c.boundaries[s + 1]);
  }

  const auto final_phases = c.phase_at.back();
  Vec fin = opts.local_frame ? to_local_frame(psi, c, final_phases) : psi;
  UnitaryResult out{PureState(std::move(fin), c.dims), {}, final_phases,
                    std::move(warnings)};
  for (std::size_t i = 0; i < rec.size(); ++i)
    out.records.emplace_back(std::move(rec[i]), c.dims);
  return out;
}

LindbladResult evolve_lindblad(const PulseSchedule& sched,
                               const DeviceConfig& dev, ModelKind model,
                               const NoiseModel& noise,
                               const DensityMatrix& initial,
                               const EvolutionOptions& opts) {
  Compiled c = compile(sched, dev, model);
  if (initial.dims() != c.dims)
    throw ConfigError("evolve_lindblad: initial state dims mismatch");
  const long long dim = dim_product(c.dims);
  if (dim > kLindbladCap)
    throw PhysicsError(
        "evolve_lindblad: dimension cap (1024) exceeded; use the unitary mode "
        "or a smaller roster");
  if (noise.t1_ns.size() != static_cast<std::size_t>(c.nq) ||
      noise.tphi_ns.size() != static_cast<std::size_t>(c.nq))
    throw ConfigError("evolve_lindblad: noise model size mismatch");
  for (int j = 0; j < c.nq; ++j)
    if (noise.t1_ns[j] <= 0 || noise.tphi_ns[j] <= 0)
      throw ConfigError("evolve_lindblad: rates require positive T1/Tphi");

  Warnings warnings;
  RecordPlan rp = plan_records(c, opts.record_ns);
  std::vector<Mat> rec(opts.record_ns.size());
  Mat rho = initial.mat();

  auto emit = [&](int idx, const Mat& m, std::size_t seg, double dt) {
    check_leakage_rho(m, c, opts.leak_tol, c.boundaries[seg] + dt);
    rec[idx] =
        opts.local_frame ? to_local_frame_rho(m, c, phases_at(c, seg, dt)) : m;
  };

  const std::size_t k = c.h.size();
  for (std::size_t s = 0; s <= k; ++s) {
    for (const auto& [slot, u] : c.ops[s]) conjugate_local(rho, u, slot, c.dims);
    for (int idx : rp.at_boundary[s]) emit(idx, rho, s, 0.0);
    if (s == k) break;

    const double span = sched.segments[s].duration_ns;
    if (span <= kTimeTol) continue;
    if (dim * dim <= kSuperopLimit) {
      const Mat sop = build_superop(c.h[s], c, noise);
      Eigen::Map<const Vec> r0(rho.data(), dim * dim);
      for (const auto& [idx, dt] : rp.inside[s]) {
        Mat expd = (sop * dt).exp();
        Vec v = expd * r0;
        Mat m = Eigen::Map<Mat>(v.data(), dim, dim);
        emit(idx, m, s, dt);
      }
      Mat expd = (sop * span).exp();
      Vec v = expd * r0;
      rho = Eigen::Map<Mat>(v.data(), dim, dim);
    } else {
      LindbladOps ops = build_lindblad_ops(c.h[s], c, noise);
      const double a = uniform_shift(c, s);
      subtract_number_diag(ops.h, a, c.has_res ? c.fock : 1);
      auto unshift = [&](const Mat& m, double t) -> Mat {
        if (a == 0) return m;
        Mat out = to_local_frame_rho(m, c, std::vector<double>(c.nq, -a * t));
        if (c.has_res) conjugate_local(out, fock_phase(c.fock, -a * t), c.nq,
                                       c.dims);
        return out;
      };
      double done = 0;
      for (const auto& [idx, dt] : rp.inside[s]) {
        rho = rk4_advance_lindblad(ops, rho, dt - done, opts.step_ns,
                                   opts.rk_tol);
        done = dt;
        emit(idx, unshift(rho, dt), s, dt);
      }
      rho = rk4_advance_lindblad(ops, rho, span - done, opts.step_ns,
                                 opts.rk_tol);
      rho = unshift(rho, span);
    }
    check_leakage_rho(rho, c, opts.leak_tol, c.boundaries[s + 1]);
    const double tr = rho.trace().real();
    if (std::abs(tr - 1.0) > 1e-7)
      throw SolverError("lindblad: trace drift beyond 1e-7");
  }

  const auto final_phases = c.phase_at.back();
  Mat fin = opts.local_frame ? to_local_frame_rho(rho, c, final_phases) : rho;
  Eigen::SelfAdjointEigenSolver<Mat> es(fin, Eigen::EigenvaluesOnly);
  const double mineig = es.eigenvalues().minCoeff();
  if (mineig < -1e-6)
    throw SolverError("lindblad: positivity violated beyond 1e-6");

  LindbladResult out{DensityMatrix(std::move(fin), c.dims),
                     {},
                     final_phases,
                     mineig,
                     std::move(warnings)};
  for (std::size_t i = 0; i < rec.size(); ++i)
    out.records.emplace_back(DensityMatrix(std::move(rec[i]), c.dims));
  return out;
}

// ---------------------------------------------------------------------------
// Swap spectroscopy
// ---------------------------------------------------------------------------

namespace {

// Hann-windowed DFT amplitude of (signal - mean) on freq grid f (cycles/ns).
RVec dft_amplitude(const std::vector<double>& t, const RVec& signal,
                   const std::vector<double>& freq) {
  const long long n = signal.size();
  RVec w(n);
  for (long long i = 0; i < n; ++i)
    w[i] = 0.5 * (1.0 - std::cos(2.0 * pi * i / std::max<long long>(1, n - 1)));
  const double mean = signal.mean();
  RVec out(static_cast<long long>(freq.size()));
  for (std::size_t k = 0; k < freq.size(); ++k) {
    cx acc = 0;
    for (long long i = 0; i < n; ++i)
      acc += w[i] * (signal[i] - mean) * std::exp(cx(0, -2.0 * pi * freq[k] * t[i]));
    out[static_cast<long long>(k)] = std::abs(acc);
  }
  return out;
}

double peak_frequency(const std::vector<double>& freq, const RVec& amp,
                      double fmin) {
  int best = -1;
  for (std::size_t k = 0; k < freq.size(); ++k) {
    if (freq[k] < fmin) continue;
    if (best < 0 || amp[static_cast<long long>(k)] > amp[best])
      best = static_cast<int>(k);
  }
  if (best < 0) throw SolverError("swap spectroscopy: empty frequency window");
  double f = freq[best];
  if (best > 0 && best + 1 < static_cast<int>(freq.size())) {
    const double a = amp[best - 1], b = amp[best], c2 = amp[best + 1];
    const double den = a - 2 * b + c2;
    if (std::abs(den) > 1e-30) {
      const double delta = 0.5 * (a - c2) / den;
      if (std::abs(delta) <= 1.0)
        f += delta * (freq[best + 1] - freq[best]);
    }
  }
  return f;
}

}  // namespace

SwapSpectroscopy swap_spectroscopy(const DeviceConfig& dev, int qa, int qb,
                                   const std::vector<double>& delta_grid_mhz,
                                   const std::vector<double>& t_grid_ns) {
  if (qa == qb) throw ConfigError("swap_spectroscopy: need two distinct qubits");
  if (delta_grid_mhz.empty() || t_grid_ns.size() < 8)
    throw ConfigError("swap_spectroscopy: grids too small");
  std::vector<int> roster{std::min(qa, qb), std::max(qa, qb)};
  dev.qubit(qa);
  dev.qubit(qb);

  const double tspan = t_grid_ns.back() - t_grid_ns.front();
  if (tspan <= 0) throw ConfigError("swap_spectroscopy: bad time grid");
  const long long nt = static_cast<long long>(t_grid_ns.size());
  const long long nf = 2 * nt;  // 4x zero-padding of the half spectrum
  const double df = 1.0 / (4.0 * tspan);
  std::vector<double> freq(nf);
  for (long long k = 0; k < nf; ++k) freq[k] = k * df;

  SwapSpectroscopy out;
  out.delta_mhz = delta_grid_mhz;
  out.t_ns = t_grid_ns;
  out.freq_ghz = freq;
  const long long nd = static_cast<long long>(delta_grid_mhz.size());
  out.p1_with.resize(nt, nd);
  out.p1_without.resize(nt, nd);
  out.fourier_with.resize(nf, nd);
  out.fourier_without.resize(nf, nd);
  out.lambda_with_mhz.resize(nd);
  out.lambda_without_mhz.resize(nd);

  DeviceConfig bare = dev;
  bare.xx.clear();

  const double fmin = 0.75 / tspan;
  auto run = [&](const DeviceConfig& d, RMat& p1, RMat& fr,
                 std::vector<double>& lam) {
    parallel_for(nd, [&](std::int64_t lo, std::int64_t hi) {
      for (std::int64_t i = lo; i < hi; ++i) {
        PulseSchedule sched;
        sched.roster = roster;
        ScheduleSegment seg;
        seg.duration_ns = t_grid_ns.back();
        seg.freq_mhz[qa] = d.bus_mhz + delta_grid_mhz[i];
        seg.freq_mhz[qb] = d.bus_mhz + delta_grid_mhz[i];
        seg.active = roster;
        sched.segments.push_back(seg);
        sched.events.push_back({0.0, qa, false, 0.0, pi});

        EvolutionOptions opts;
        opts.record_ns = t_grid_ns;
        opts.local_frame = false;  // populations only
        // A pi pulse puts one excitation in; with F >= 3 leakage past the
        // cutoff is negligible but finite, so use a permissive monitor here.
        opts.leak_tol = 0.05;
        UnitaryResult res = evolve_unitary(sched, d, ModelKind::full,
                                           schedule_ground(sched, d,
                                                           ModelKind::full),
                                           opts);
        const int slot = roster[0] == qa ? 0 : 1;
        const long long bit =
            (1LL << (2 - 1 - slot)) * d.fock_cutoff;
        for (long long ti = 0; ti < nt; ++ti) {
          const Vec& v = res.records[ti].amps();
          double pop = 0;
          for (long long x = 0; x < v.size(); ++x)
            if ((x / bit) % 2) pop += std::norm(v[x]);
          p1(ti, i) = pop;
        }
        RVec amp = dft_amplitude(t_grid_ns, p1.col(i), freq);
        fr.col(i) = amp;
        // P1 ~ cos^2(lambda t): fringe at f = lambda_ang/pi cycles/ns.
        lam[i] = 500.0 * peak_frequency(freq, amp, fmin);
      }
    });
  };
  run(dev, out.p1_with, out.fourier_with, out.lambda_with_mhz);
  run(bare, out.p1_without, out.fourier_without, out.lambda_without_mhz);
  return out;
}

}  // namespace qbus
