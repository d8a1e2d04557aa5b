#include <cmath>
#include <map>
#include <tuple>
#include <vector>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "qbus/device.hpp"

using namespace qbus;

namespace {

DeviceConfig two_qubit_dev(double ga, double gb, int fock = 3) {
  DeviceConfig dev;
  dev.bus_mhz = 5795.0;
  dev.fock_cutoff = fock;
  QubitParams a, b;
  a.index = 1;
  a.idle_mhz = 5080.0;
  a.g_mhz = ga;
  a.t1_ns = 1e9;
  a.t2_star_ns = 1e9;
  b.index = 2;
  b.idle_mhz = 5467.0;
  b.g_mhz = gb;
  b.t1_ns = 1e9;
  b.t2_star_ns = 1e9;
  dev.qubits = {a, b};
  return dev;
}

}  // namespace

TEST_CASE("superexchange strength") {
  CHECK(std::abs(superexchange_strength(19.9, 18.9, -140.0) - (-2.6865)) <
        1e-4);
  CHECK(std::abs(superexchange_strength(14.2, 16.3, -140.0) - (-1.65329)) <
        1e-4);
  // Sign follows the detuning.
  CHECK(superexchange_strength(20.0, 20.0, 100.0) > 0);
  CHECK_THROWS_AS(superexchange_strength(20.0, 20.0, 0.0), PhysicsError);
}

TEST_CASE("device validation") {
  DeviceConfig dev = two_qubit_dev(20.0, 20.0);
  CHECK_NOTHROW(dev.validate());

  DeviceConfig dup = dev;
  dup.qubits[1].index = 1;
  CHECK_THROWS_AS(dup.validate(), ConfigError);

  DeviceConfig fock = dev;
  fock.fock_cutoff = 1;
  CHECK_THROWS_AS(fock.validate(), ConfigError);

  DeviceConfig bad_f = dev;
  bad_f.qubits[0].f0 = 1.2;
  CHECK_THROWS_AS(bad_f.validate(), ConfigError);

  DeviceConfig bad_t1 = dev;
  bad_t1.qubits[0].t1_ns = -5;
  CHECK_THROWS_AS(bad_t1.validate(), ConfigError);

  CHECK(dev.qubit_pos(2) == 1);
  CHECK(dev.qubit_pos(9) == -1);
  CHECK_THROWS_AS(dev.qubit(9), ConfigError);
}

TEST_CASE("full hamiltonian: vacuum Rabi splitting at zero detuning") {
  DeviceConfig dev = two_qubit_dev(20.0, 20.0);
  // Single qubit parked on the bus: dressed one-excitation doublet at +-g.
  std::map<int, double> freq = {{1, dev.bus_mhz}};
  auto h = build_full_hamiltonian(dev, freq, {1});
  CHECK(h.dim() == 2 * dev.fock_cutoff);

  Eigen::SelfAdjointEigenSolver<Mat> es(h.dense());
  const double g_rad = ang_per_mhz * 20.0;
  // Spectrum contains +-g (one-photon manifold) and +-sqrt(2) g.
  RVec ev = es.eigenvalues();
  bool has_plus = false, has_minus = false;
  for (long long i = 0; i < ev.size(); ++i) {
    if (std::abs(ev(i) - g_rad) < 1e-12) has_plus = true;
    if (std::abs(ev(i) + g_rad) < 1e-12) has_minus = true;
  }
  CHECK(has_plus);
  CHECK(has_minus);
}

TEST_CASE("full hamiltonian: hermitian, conserves excitation number") {
  DeviceConfig dev = two_qubit_dev(14.2, 20.5);
  std::map<int, double> freq = {{1, dev.bus_mhz - 140.0},
                                {2, dev.bus_mhz - 120.0}};
  auto h = build_full_hamiltonian(dev, freq, {1, 2});
  Mat hd = h.dense();
  CHECK((hd - hd.adjoint()).cwiseAbs().maxCoeff() < 1e-13);

  // Total excitation operator commutes with H.
  const int f = dev.fock_cutoff;
  Mat num = Mat::Zero(4 * f, 4 * f);
  for (int q0 = 0; q0 < 2; ++q0)
    for (int q1 = 0; q1 < 2; ++q1)
      for (int nb = 0; nb < f; ++nb) {
        const int idx = (q0 * 2 + q1) * f + nb;
        num(idx, idx) = q0 + q1 + nb;
      }
  CHECK((hd * num - num * hd).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("crosstalk pairs straddling the roster are dropped with a warning") {
  DeviceConfig dev = two_qubit_dev(20.0, 20.0);
  dev.xx.push_back({1, 2, 2.0});
  Warnings w;
  auto h = build_full_hamiltonian(dev, {{1, dev.bus_mhz - 140.0}}, {1}, &w);
  CHECK(w.size() == 1);
  CHECK(h.dim() == 2 * dev.fock_cutoff);
}

TEST_CASE("effective pair model: hopping strength and Stark shifts") {
  DeviceConfig dev = two_qubit_dev(19.9, 18.9);
  const double delta = -140.0;
  auto h = build_effective_pair_hamiltonian(dev, {{1, 2, delta}});
  Mat hd = h.dense();
  // Basis |q1 q2>: hopping element between |10> and |01>.
  const double lam = ang_per_mhz * superexchange_strength(19.9, 18.9, delta);
  CHECK(std::abs(hd(1, 2).real() - lam) < 1e-12);
  CHECK(std::abs(hd(2, 1).real() - lam) < 1e-12);
  // Stark diagonal: g^2/delta per excited qubit.
  const double sa = ang_per_mhz * 19.9 * 19.9 / delta;
  const double sb = ang_per_mhz * 18.9 * 18.9 / delta;
  CHECK(std::abs(hd(2, 2).real() - sa) < 1e-12);  // |10>
  CHECK(std::abs(hd(1, 1).real() - sb) < 1e-12);  // |01>
  CHECK(std::abs(hd(3, 3).real() - sa - sb) < 1e-12);
  CHECK(std::abs(hd(0, 0)) < 1e-15);
}

TEST_CASE("effective pair model keeps the bare superexchange strength") {
  // Direct crosstalk belongs to the full model and to the swap-duration
  // bookkeeping; the dispersive reduction stays at g_a g_b / delta even when
  // the pair is listed in the crosstalk table.
  DeviceConfig dev = two_qubit_dev(19.9, 18.9);
  dev.xx.push_back({1, 2, 2.1});
  const double delta = -140.0;
  auto h = build_effective_pair_hamiltonian(dev, {{1, 2, delta}});
  const double lam = ang_per_mhz * superexchange_strength(19.9, 18.9, delta);
  CHECK(std::abs(h.dense()(1, 2).real() - lam) < 1e-12);
}

TEST_CASE("collective model equals summed pair couplings") {
  DeviceConfig dev = two_qubit_dev(20.0, 20.0);
  QubitParams c = dev.qubits[0];
  c.index = 3;
  c.idle_mhz = 5657.0;
  dev.qubits.push_back(c);

  std::map<int, double> delta = {{1, -140.0}, {2, -150.0}, {3, -130.0}};
  auto h = build_effective_collective_hamiltonian(dev, {1, 2, 3}, delta);
  Mat hd = h.dense();

  // lambda_jk = (g_j g_k / 2)(1/d_j + 1/d_k), here g = 20 throughout.
  auto lam = [&](int a, int b) {
    return ang_per_mhz * 0.5 * 20.0 * 20.0 *
           (1.0 / delta.at(a) + 1.0 / delta.at(b));
  };
  // |100> <-> |010> is elements (4, 2) in a 3-qubit register.
  CHECK(std::abs(hd(4, 2).real() - lam(1, 2)) < 1e-12);
  CHECK(std::abs(hd(4, 1).real() - lam(1, 3)) < 1e-12);
  CHECK(std::abs(hd(2, 1).real() - lam(2, 3)) < 1e-12);
  // Bus-frame diagonal on |100>: detuning plus the Stark pull.
  CHECK(std::abs(hd(4, 4).real() -
                 ang_per_mhz * (delta.at(1) + 400.0 / delta.at(1))) < 1e-12);

  // For a single pair at a shared detuning the two builders agree up to the
  // frame: the collective one keeps delta*(n_1 + n_2) on the diagonal, the
  // pair one is quoted at the qubits' own frequencies.
  std::map<int, double> shared = {{1, -140.0}, {2, -140.0}};
  auto hc = build_effective_collective_hamiltonian(dev, {1, 2}, shared);
  auto hp = build_effective_pair_hamiltonian(dev, {{1, 2, -140.0}});
  Mat diff = hc.dense() - hp.dense();
  const double nexc[4] = {0.0, 1.0, 1.0, 2.0};
  for (int i = 0; i < 4; ++i)
    diff(i, i) -= ang_per_mhz * -140.0 * nexc[i];
  CHECK(diff.cwiseAbs().maxCoeff() < 1e-13);

  // Direct crosstalk rides on top of the superexchange coupling.
  dev.xx.push_back({1, 2, 2.1});
  auto hx = build_effective_collective_hamiltonian(dev, {1, 2}, shared);
  const double lam12 = ang_per_mhz * (20.0 * 20.0 / -140.0 + 2.1);
  CHECK(std::abs(hx.dense()(2, 1).real() - lam12) < 1e-12);
  dev.xx.clear();

  // A qubit may not appear in two pairs of one parallel layer.
  CHECK_THROWS_AS(build_effective_pair_hamiltonian(
                      dev, {{1, 2, -140.0}, {1, 3, -140.0}}),
                  ConfigError);
}

TEST_CASE("z crosstalk apply and compensate are inverse maps") {
  DeviceConfig dev = two_qubit_dev(20.0, 20.0);
  dev.z_crosstalk.resize(2, 2);
  dev.z_crosstalk << 1.0, -0.08, 0.05, 1.0;

  RVec target(2);
  target << 100.0, -40.0;
  RVec comp = compensate_z_crosstalk(dev, target);
  RVec actual = apply_z_crosstalk(dev, comp);
  CHECK((actual - target).cwiseAbs().maxCoeff() < 1e-10);

  // Identity when the matrix is unset.
  DeviceConfig plain = two_qubit_dev(20.0, 20.0);
  CHECK((apply_z_crosstalk(plain, target) - target).cwiseAbs().maxCoeff() <
        1e-14);
}
