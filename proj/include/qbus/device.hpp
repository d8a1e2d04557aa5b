#pragma once

#include <map>
#include <tuple>
#include <vector>

#include "qbus/common.hpp"
#include "qbus/core.hpp"

namespace qbus {

struct QubitParams {
  int index = 0;           // 1-based device label
  double sweet_mhz = 0;    // optional metadata (flux sweet spot)
  double idle_mhz = 0;     // parking frequency
  double g_mhz = 0;        // qubit-bus coupling
  double t1_ns = 0;
  double t2_star_ns = 0;
  double t2_echo_ns = 0;   // optional metadata
  double f0 = 1.0;         // P(read 0 | prepared 0)
  double f1 = 1.0;         // P(read 1 | prepared 1)
};

struct CrosstalkPair {
  int a = 0, b = 0;
  double lambda_mhz = 0;  // direct XX exchange strength
};

struct DeviceConfig {
  double bus_mhz = 0;
  int fock_cutoff = 3;
  std::vector<QubitParams> qubits;  // ascending index
  std::vector<CrosstalkPair> xx;
  RMat z_crosstalk;  // n x n bias-crosstalk matrix; empty means identity

  int qubit_pos(int index) const;  // position in `qubits`, -1 if absent
  const QubitParams& qubit(int index) const;
  double xx_lambda(int a, int b) const;  // 0 when the pair is not listed
  void validate() const;                 // throws ConfigError
};

// Superexchange strength g_a g_b / delta, all linear MHz.
double superexchange_strength(double ga_mhz, double gb_mhz, double delta_mhz);

// Bus-frame Hamiltonian over dims [2,...,2, F]: detuning terms, qubit-bus
// exchange, and direct XX crosstalk between roster members.  `freq_mhz`
// gives each roster qubit's current absolute frequency (missing -> idle).
// Crosstalk pairs with exactly one end in the roster are dropped with a
// warning; pairs fully outside are ignored.  Result is angular (rad/ns).
Operator build_full_hamiltonian(const DeviceConfig& dev,
                                const std::map<int, double>& freq_mhz,
                                const std::vector<int>& roster,
                                Warnings* w = nullptr);

// Dispersive pair model over dims [2,...]: per pair (a, b, delta) a hopping
// term of strength g_a g_b / delta plus Stark shifts g^2/delta.  Lives in
// the local frame (no detuning terms).
Operator build_effective_pair_hamiltonian(
    const DeviceConfig& dev, const std::vector<std::tuple<int, int, double>>& pairs,
    Warnings* w = nullptr);

// Same dispersive reduction for one collective group, quoted in the bus
// rotating frame: every pair (j, k) couples at
// (g_j g_k / 2)(1/delta_j + 1/delta_k), direct crosstalk terms are kept,
// and each qubit carries its detuning plus the Stark pull g_j^2/delta_j on
// the diagonal, so hopping between members at different biases is detuned
// exactly as in the full model.
Operator build_effective_collective_hamiltonian(
    const DeviceConfig& dev, const std::vector<int>& qubits,
    const std::map<int, double>& delta_mhz, Warnings* w = nullptr);

// Flux-bias crosstalk: actual = M * intended (M defaults to identity).
RVec apply_z_crosstalk(const DeviceConfig& dev, const RVec& intended);
// Solve M * intended = target for the compensated bias vector.
RVec compensate_z_crosstalk(const DeviceConfig& dev, const RVec& target);

}  // namespace qbus
