#pragma once

#include <map>
#include <optional>
#include <vector>

#include "qbus/common.hpp"
#include "qbus/core.hpp"
#include "qbus/device.hpp"

namespace qbus {

enum class ModelKind { full, effective };
enum class EvolveMode { unitary, lindblad };

// Instantaneous single-qubit rotation at a segment boundary.  In-plane axes
// are given in the qubit's own drive frame; the integrator re-references
// them by the accumulated programmed phase before applying them in the bus
// frame.  z rotations are frame-independent.
struct RotationEvent {
  double t_ns = 0;
  int qubit = 0;        // 1-based device index
  bool z_axis = false;
  double kappa = 0;     // in-plane azimuth: x = 0, y = pi/2
  double theta = 0;
};

struct ScheduleSegment {
  double duration_ns = 0;
  std::map<int, double> freq_mhz;  // absolute MHz; missing roster qubit -> idle
  std::vector<int> active;         // metadata: deliberately biased qubits
};

// Piecewise-constant frequency trajectory for a fixed qubit roster.  The
// roster *is* the Hilbert space: qubits outside it are treated as far
// detuned and dropped, qubits inside it always keep their couplings.
struct PulseSchedule {
  std::vector<int> roster;  // strictly ascending
  std::vector<ScheduleSegment> segments;
  std::vector<RotationEvent> events;  // t must coincide with a boundary

  double total_ns() const;
};

// Dissipation rates for the roster, in ns.  T_phi is a pure-dephasing time;
// from_device derives it as tphi_factor * T2*.
struct NoiseModel {
  std::vector<double> t1_ns;    // per roster qubit
  std::vector<double> tphi_ns;  // per roster qubit
  double kappa_res = 0;         // resonator loss rate (1/ns), 0 = lossless

  static NoiseModel from_device(const DeviceConfig& dev,
                                const std::vector<int>& roster,
                                double tphi_factor = 10.0);
};

struct EvolutionOptions {
  double step_ns = 0.05;           // RK4 step for large systems
  std::vector<double> record_ns;   // sorted ascending, within [0, total]
  bool local_frame = true;         // unwind programmed phases at the end
  double leak_tol = 1e-3;          // max population of the top Fock level
  double rk_tol = 1e-7;            // Richardson local-error threshold
  int threads = 0;                 // 0 = global default
};

struct UnitaryResult {
  PureState final;
  std::vector<PureState> records;
  std::vector<double> frame_phase;  // per roster qubit, at the end (rad)
  Warnings warnings;
};

struct LindbladResult {
  DensityMatrix final;
  std::vector<DensityMatrix> records;
  std::vector<double> frame_phase;
  double final_min_eig = 0;
  Warnings warnings;
};

UnitaryResult evolve_unitary(const PulseSchedule& sched,
                             const DeviceConfig& dev, ModelKind model,
                             const PureState& initial,
                             const EvolutionOptions& opts);

LindbladResult evolve_lindblad(const PulseSchedule& sched,
                               const DeviceConfig& dev, ModelKind model,
                               const NoiseModel& noise,
                               const DensityMatrix& initial,
                               const EvolutionOptions& opts);

// Hilbert-space dims for a schedule under a model (qubits [+ resonator]).
std::vector<int> schedule_dims(const PulseSchedule& sched,
                               const DeviceConfig& dev, ModelKind model);

// Ground state |0...0> (x |0 photons>) for a schedule.
PureState schedule_ground(const PulseSchedule& sched, const DeviceConfig& dev,
                          ModelKind model);

// ---------------------------------------------------------------------------
// Swap spectroscopy
// ---------------------------------------------------------------------------

// Excite qubit `qa`, bias both qubits of the pair to a common detuning, and
// watch the excitation swap.  Returns the population map P1(delta, t), its
// per-column temporal Fourier amplitude (Hann window, zero-padded), and the
// net coupling |lambda_total| extracted from the dominant fringe — once with
// the device's direct crosstalk and once with it switched off.
struct SwapSpectroscopy {
  std::vector<double> delta_mhz;  // detuning grid
  std::vector<double> t_ns;       // time grid
  std::vector<double> freq_ghz;   // Fourier grid (cycles/ns)
  RMat p1_with, p1_without;             // nt x ndelta
  RMat fourier_with, fourier_without;   // nf x ndelta
  std::vector<double> lambda_with_mhz, lambda_without_mhz;
};

SwapSpectroscopy swap_spectroscopy(const DeviceConfig& dev, int qa, int qb,
                                   const std::vector<double>& delta_grid_mhz,
                                   const std::vector<double>& t_grid_ns);

}  // namespace qbus
