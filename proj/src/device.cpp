#include "qbus/device.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace qbus {
namespace {

// Roster bookkeeping shared by the Hamiltonian builders: positions are
// ascending and the basis index is (qubit bits, resonator level) with qubit
// 1 most significant and the resonator fastest.
struct Layout {
  std::vector<int> roster;
  std::vector<long long> bit;  // index weight of each roster qubit
  int fock = 0;                // 0 when the model has no resonator
  long long dim = 1;
};

Layout make_layout(const DeviceConfig& dev, const std::vector<int>& roster,
                   int fock) {
  if (roster.empty()) throw ConfigError("hamiltonian: empty qubit roster");
  for (std::size_t i = 0; i < roster.size(); ++i) {
    if (dev.qubit_pos(roster[i]) < 0) {
      std::ostringstream os;
      os << "hamiltonian: qubit " << roster[i] << " not in device";
      throw ConfigError(os.str());
    }
    if (i > 0 && roster[i] <= roster[i - 1])
      throw ConfigError("hamiltonian: roster must be strictly ascending");
  }
  Layout l;
  l.roster = roster;
  l.fock = fock;
  const int r = static_cast<int>(roster.size());
  const long long res = fock > 0 ? fock : 1;
  l.dim = (1LL << r) * res;
  l.bit.resize(r);
  for (int j = 0; j < r; ++j) l.bit[j] = (1LL << (r - 1 - j)) * res;
  return l;
}

int roster_pos(const std::vector<int>& roster, int qubit) {
  auto it = std::lower_bound(roster.begin(), roster.end(), qubit);
  if (it == roster.end() || *it != qubit) return -1;
  return static_cast<int>(it - roster.begin());
}

}  // namespace

int DeviceConfig::qubit_pos(int index) const {
  for (std::size_t i = 0; i < qubits.size(); ++i)
    if (qubits[i].index == index) return static_cast<int>(i);
  return -1;
}

const QubitParams& DeviceConfig::qubit(int index) const {
  const int p = qubit_pos(index);
  if (p < 0) {
    std::ostringstream os;
    os << "device: unknown qubit index " << index;
    throw ConfigError(os.str());
  }
  return qubits[p];
}

double DeviceConfig::xx_lambda(int a, int b) const {
  for (const auto& p : xx)
    if ((p.a == a && p.b == b) || (p.a == b && p.b == a)) return p.lambda_mhz;
  return 0.0;
}

void DeviceConfig::validate() const {
  if (bus_mhz <= 0) throw ConfigError("device: bus_freq_mhz must be positive");
  if (fock_cutoff < 2)
    throw ConfigError("device: fock_cutoff must be at least 2");
  if (qubits.empty()) throw ConfigError("device: no qubits");
  for (std::size_t i = 0; i < qubits.size(); ++i) {
    const auto& q = qubits[i];
    std::ostringstream os;
    os << "device: qubit " << q.index << ": ";
    if (q.index < 1) throw ConfigError(os.str() + "index must be >= 1");
    if (i > 0 && q.index <= qubits[i - 1].index)
      throw ConfigError("device: qubit indices must be strictly ascending");
    if (q.idle_mhz <= 0) throw ConfigError(os.str() + "idle_freq_mhz must be positive");
    if (q.g_mhz <= 0) throw ConfigError(os.str() + "g_mhz must be positive");
    if (q.t1_ns <= 0) throw ConfigError(os.str() + "t1_ns must be positive");
    if (q.t2_star_ns <= 0)
      throw ConfigError(os.str() + "t2_star_ns must be positive");
    if (!(q.f0 > 0.5 && q.f0 <= 1.0))
      throw ConfigError(os.str() + "f0 must lie in (0.5, 1]");
    if (!(q.f1 > 0.5 && q.f1 <= 1.0))
      throw ConfigError(os.str() + "f1 must lie in (0.5, 1]");
  }
  std::set<std::pair<int, int>> seen;
  for (const auto& p : xx) {
    if (p.a == p.b) throw ConfigError("device: crosstalk pair with equal ends");
    if (qubit_pos(p.a) < 0 || qubit_pos(p.b) < 0)
      throw ConfigError("device: crosstalk pair references unknown qubit");
    auto key = std::minmax(p.a, p.b);
    if (!seen.insert(key).second)
      throw ConfigError("device: duplicate crosstalk pair");
  }
  if (z_crosstalk.size() != 0) {
    const auto n = static_cast<Eigen::Index>(qubits.size());
    if (z_crosstalk.rows() != n || z_crosstalk.cols() != n)
      throw ConfigError("device: z_crosstalk must be n x n");
  }
}

double superexchange_strength(double ga_mhz, double gb_mhz, double delta_mhz) {
  if (delta_mhz == 0.0)
    throw PhysicsError("superexchange_strength: zero detuning");
  return ga_mhz * gb_mhz / delta_mhz;
}

Operator build_full_hamiltonian(const DeviceConfig& dev,
                                const std::map<int, double>& freq_mhz,
                                const std::vector<int>& roster, Warnings* w) {
  const int fock = dev.fock_cutoff;
  const Layout l = make_layout(dev, roster, fock);
  const int r = static_cast<int>(roster.size());

  std::vector<double> delta(r), g(r);
  for (int j = 0; j < r; ++j) {
    const auto& q = dev.qubit(roster[j]);
    auto it = freq_mhz.find(roster[j]);
    const double f = it != freq_mhz.end() ? it->second : q.idle_mhz;
    delta[j] = ang_per_mhz * (f - dev.bus_mhz);
    g[j] = ang_per_mhz * q.g_mhz;
  }

  std::vector<Triplet> t;
  // Detunings: Delta_j |1_j><1_j|.
  for (long long v = 0; v < l.dim; ++v) {
    double d = 0;
    for (int j = 0; j < r; ++j)
      if ((v / l.bit[j]) % 2) d += delta[j];
    if (d != 0) t.emplace_back(v, v, d);
  }
  // Qubit-bus exchange: g_j (sigma_j^+ a + h.c.).
  for (int j = 0; j < r; ++j) {
    for (long long v = 0; v < l.dim; ++v) {
      const int f = static_cast<int>(v % fock);
      if ((v / l.bit[j]) % 2 || f + 1 >= fock) continue;
      // v has qubit j in |0> and a photon to absorb: couple to (1_j, f) from
      // (0_j, f+1).
      const long long row = v + l.bit[j];
      const long long col = v + 1;
      const cx val = g[j] * std::sqrt(static_cast<double>(f + 1));
      t.emplace_back(row, col, val);
      t.emplace_back(col, row, val);
    }
  }
  // Direct XX crosstalk between roster members.
  for (const auto& p : dev.xx) {
    const int pa = roster_pos(roster, p.a), pb = roster_pos(roster, p.b);
    if (pa < 0 && pb < 0) continue;
    if (pa < 0 || pb < 0) {
      std::ostringstream os;
      os << "crosstalk pair (" << p.a << "," << p.b
         << ") straddles the roster boundary; dropped";
      warn(w, os.str());
      continue;
    }
    const double lam = ang_per_mhz * p.lambda_mhz;
    for (long long v = 0; v < l.dim; ++v) {
      const bool ba = (v / l.bit[pa]) % 2, bb = (v / l.bit[pb]) % 2;
      if (ba || !bb) continue;  // take |0_a 1_b> -> |1_a 0_b| once
      const long long row = v + l.bit[pa] - l.bit[pb];
      t.emplace_back(row, v, lam);
      t.emplace_back(v, row, lam);
    }
  }

  std::vector<int> dims(r, 2);
  dims.push_back(fock);
  return Operator::from_triplets(std::move(dims), t, true);
}

Operator build_effective_pair_hamiltonian(
    const DeviceConfig& dev,
    const std::vector<std::tuple<int, int, double>>& pairs, Warnings* w) {
  if (pairs.empty())
    throw ConfigError("effective hamiltonian: empty pair list");
  std::set<int> used;
  std::vector<int> roster;
  for (const auto& [a, b, d] : pairs) {
    (void)d;
    if (a == b) throw ConfigError("effective hamiltonian: pair with equal ends");
    for (int q : {a, b}) {
      if (!used.insert(q).second) {
        std::ostringstream os;
        os << "effective hamiltonian: qubit " << q << " appears in two pairs";
        throw ConfigError(os.str());
      }
      roster.push_back(q);
    }
  }
  std::sort(roster.begin(), roster.end());
  const Layout l = make_layout(dev, roster, 0);

  std::vector<Triplet> t;
  std::vector<double> stark(roster.size(), 0.0);
  for (const auto& [a, b, dmhz] : pairs) {
    const auto& qa = dev.qubit(a);
    const auto& qb = dev.qubit(b);
    if (dmhz == 0.0)
      throw PhysicsError("effective hamiltonian: zero detuning");
    const double gmax = std::max(qa.g_mhz, qb.g_mhz);
    if (std::abs(dmhz) < 5.0 * gmax) {
      std::ostringstream os;
      os << "pair (" << a << "," << b << "): |delta| < 5 g, dispersive "
         << "reduction is marginal";
      warn(w, os.str());
    }
    const double lam =
        ang_per_mhz * superexchange_strength(qa.g_mhz, qb.g_mhz, dmhz);
    const int pa = roster_pos(l.roster, a), pb = roster_pos(l.roster, b);
    stark[pa] += ang_per_mhz * qa.g_mhz * qa.g_mhz / dmhz;
    stark[pb] += ang_per_mhz * qb.g_mhz * qb.g_mhz / dmhz;
    for (long long v = 0; v < l.dim; ++v) {
      const bool ba = (v / l.bit[pa]) % 2, bb = (v / l.bit[pb]) % 2;
      if (ba || !bb) continue;
      const long long row = v + l.bit[pa] - l.bit[pb];
      t.emplace_back(row, v, lam);
      t.emplace_back(v, row, lam);
    }
  }
  for (long long v = 0; v < l.dim; ++v) {
    double d = 0;
    for (std::size_t j = 0; j < l.roster.size(); ++j)
      if ((v / l.bit[j]) % 2) d += stark[j];
    if (d != 0) t.emplace_back(v, v, d);
  }
  return Operator::from_triplets(std::vector<int>(l.roster.size(), 2), t, true);
}

Operator build_effective_collective_hamiltonian(
    const DeviceConfig& dev, const std::vector<int>& qubits,
    const std::map<int, double>& delta_mhz, Warnings* w) {
  const Layout l = make_layout(dev, qubits, 0);
  const int r = static_cast<int>(qubits.size());
  std::vector<double> g(r), inv_delta(r);
  for (int j = 0; j < r; ++j) {
    const auto& q = dev.qubit(qubits[j]);
    auto it = delta_mhz.find(qubits[j]);
    if (it == delta_mhz.end()) {
      std::ostringstream os;
      os << "effective hamiltonian: missing detuning for qubit " << qubits[j];
      throw ConfigError(os.str());
    }
    if (it->second == 0.0)
      throw PhysicsError("effective hamiltonian: zero detuning");
    if (std::abs(it->second) < 5.0 * q.g_mhz)
      warn(w, "effective hamiltonian: |delta| < 5 g for a group member");
    g[j] = q.g_mhz;
    inv_delta[j] = 1.0 / it->second;
  }

  std::vector<Triplet> t;
  for (int j = 0; j < r; ++j) {
    for (int k = j + 1; k < r; ++k) {
      const double lam =
          ang_per_mhz * 0.5 * g[j] * g[k] * (inv_delta[j] + inv_delta[k]);
      for (long long v = 0; v < l.dim; ++v) {
        const bool bj = (v / l.bit[j]) % 2, bk = (v / l.bit[k]) % 2;
        if (bj || !bk) continue;
        const long long row = v + l.bit[j] - l.bit[k];
        t.emplace_back(row, v, lam);
        t.emplace_back(v, row, lam);
      }
    }
  }
  // Direct XX crosstalk, same convention as the full builder.
  for (const auto& p : dev.xx) {
    const int pa = roster_pos(qubits, p.a), pb = roster_pos(qubits, p.b);
    if (pa < 0 && pb < 0) continue;
    if (pa < 0 || pb < 0) {
      std::ostringstream os;
      os << "crosstalk pair (" << p.a << "," << p.b
         << ") straddles the roster boundary; dropped";
      warn(w, os.str());
      continue;
    }
    const double lam = ang_per_mhz * p.lambda_mhz;
    for (long long v = 0; v < l.dim; ++v) {
      const bool ba = (v / l.bit[pa]) % 2, bb = (v / l.bit[pb]) % 2;
      if (ba || !bb) continue;
      const long long row = v + l.bit[pa] - l.bit[pb];
      t.emplace_back(row, v, lam);
      t.emplace_back(v, row, lam);
    }
  }
  // Bus-frame diagonal: the programmed detuning plus the dispersive pull.
  // Keeping the detunings in the operator makes hopping between group
  // members at different biases cost energy, exactly as in the full model.
  for (long long v = 0; v < l.dim; ++v) {
    double d = 0;
    for (int j = 0; j < r; ++j)
      if ((v / l.bit[j]) % 2)
        d += ang_per_mhz *
             (1.0 / inv_delta[j] + g[j] * g[j] * inv_delta[j]);
    if (d != 0) t.emplace_back(v, v, d);
  }
  return Operator::from_triplets(std::vector<int>(r, 2), t, true);
}

RVec apply_z_crosstalk(const DeviceConfig& dev, const RVec& intended) {
  const auto n = static_cast<Eigen::Index>(dev.qubits.size());
  if (intended.size() != n)
    throw ConfigError("apply_z_crosstalk: bias vector length mismatch");
  if (dev.z_crosstalk.size() == 0) return intended;
  return dev.z_crosstalk * intended;
}

RVec compensate_z_crosstalk(const DeviceConfig& dev, const RVec& target) {
  const auto n = static_cast<Eigen::Index>(dev.qubits.size());
  if (target.size() != n)
    throw ConfigError("compensate_z_crosstalk: bias vector length mismatch");
  if (dev.z_crosstalk.size() == 0) return target;
  Eigen::FullPivLU<RMat> lu(dev.z_crosstalk);
  if (!lu.isInvertible())
    throw SolverError("compensate_z_crosstalk: singular crosstalk matrix");
  return lu.solve(target);
}

}  // namespace qbus
