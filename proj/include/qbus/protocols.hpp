#pragma once

#include <map>
#include <vector>

#include "qbus/common.hpp"
#include "qbus/core.hpp"
#include "qbus/device.hpp"
#include "qbus/dynamics.hpp"

namespace qbus {

// ---------------------------------------------------------------------------
// Collective GHZ generation
// ---------------------------------------------------------------------------

// All listed qubits are prepared on the equator and biased simultaneously to
// bus + delta (+ per-qubit offset) for one interaction window.  The frequency
// move is instantaneous by default; a positive ramp_ns spreads each move over
// a geometric staircase from ramp_from_mhz down to the working detuning,
// which loads the dressed collective states adiabatically instead of
// projecting onto them.
struct GhzPlan {
  std::vector<int> qubits;            // device indices
  double delta_mhz = -140.0;          // common detuning from the bus
  std::map<int, double> offsets_mhz;  // per-qubit corrections
  double t_int_ns = 0;                // <= 0: derived from theta
  double theta = 0.5 * pi;            // target |lambda_mean| * t
  double ramp_ns = 0;                 // duration of one frequency move
  int ramp_steps = 8;                 // staircase segments per move
  double ramp_from_mhz = -700.0;      // staircase entry detuning
};

// Mean pairwise superexchange strength at the plan's detunings (MHz).
double ghz_mean_coupling_mhz(const GhzPlan& plan, const DeviceConfig& dev);
// Interaction window: plan.t_int_ns if positive, else theta / |lambda_mean|.
double ghz_interaction_time(const GhzPlan& plan, const DeviceConfig& dev);

PulseSchedule ghz_sequence(const GhzPlan& plan, const DeviceConfig& dev);

struct GhzResult {
  DensityMatrix rho;       // qubits only, drive frame
  double fidelity = 0;     // max over the reference phases
  double phi_star = 0;
  double beta_star = 0;
  double t_int_ns = 0;
  double final_min_eig = 0;  // Lindblad runs only
  Warnings warnings;
};

GhzResult run_ghz(const GhzPlan& plan, const DeviceConfig& dev, ModelKind model,
                  EvolveMode mode, const NoiseModel* noise = nullptr,
                  const EvolutionOptions& opts = {});

// ---------------------------------------------------------------------------
// Parallel EPR pairs
// ---------------------------------------------------------------------------

struct EprPair {
  int a = 0, b = 0;       // device indices; the pi pulse lands on `a`
  double delta_mhz = 0;   // common detuning of the pair from the bus
  double t_swap_ns = 0;   // <= 0: pi/4 divided by the net coupling
};

struct EprPlan {
  std::vector<EprPair> pairs;
};

// Net pair coupling: superexchange plus direct crosstalk (signed, MHz).
double epr_lambda_total_mhz(const EprPair& pair, const DeviceConfig& dev);
std::vector<double> epr_durations(const EprPlan& plan, const DeviceConfig& dev);

// Staggered schedule: every pair starts at t = 0, each returns to idle after
// its own half-swap.  Pairs must not share qubits, and their detunings must
// be separated by at least 20x the largest net coupling.
PulseSchedule epr_sequence(const EprPlan& plan, const DeviceConfig& dev,
                           Warnings* w = nullptr);

struct EprResult {
  std::vector<DensityMatrix> pair_rho;  // one 2-qubit state per pair
  std::vector<double> concurrence;
  std::vector<double> fidelity;  // odd-parity Bell fidelity, max over phase
  Warnings warnings;
};

EprResult run_epr(const EprPlan& plan, const DeviceConfig& dev, ModelKind model,
                  EvolveMode mode, const NoiseModel* noise = nullptr,
                  const EvolutionOptions& opts = {});

// ---------------------------------------------------------------------------
// Pair phase calibration
// ---------------------------------------------------------------------------

// Ramsey-style scan on the dispersive pair model: qa is prepared along +x,
// qb on the equator at scanned azimuth phi (plus an injected frame offset),
// both evolve through one half-swap.  At the calibrated phase the four
// two-qubit outcome probabilities all equal 1/4, so the scan minimizes
// their variance.  Of the two equivalent minima the one closest to zero
// wins.
struct PhaseCalibration {
  double phi_star = 0;
  double max_spread = 0;  // max_k |p_k - 1/4| at phi_star
  RVec grid;              // scanned azimuths (rad)
  RVec variance;
};

PhaseCalibration calibrate_phase(const DeviceConfig& dev, int qa, int qb,
                                 double delta_mhz, double injected_rad = 0,
                                 int npoints = 629);

// ---------------------------------------------------------------------------
// Plan tuning
// ---------------------------------------------------------------------------

struct ScanParam {
  enum class Kind { t_int, offset };
  Kind kind = Kind::t_int;
  int qubit = 0;  // offset scans only
  double lo = 0, hi = 0;
  int points = 0;  // >= 3
};

struct OptimizeResult {
  GhzPlan plan;
  double fidelity = 0;
  int evaluations = 0;
  std::vector<double> sample_metric;  // 1 - F over the last grid, row-major
};

// Grid scan (one or two parameters) with a parabolic refinement step.
// Exact ties go to the lower flat grid index, so results do not depend on
// the thread count.
OptimizeResult optimize_plan(const GhzPlan& plan, const DeviceConfig& dev,
                             ModelKind model, EvolveMode mode,
                             const NoiseModel* noise,
                             const std::vector<ScanParam>& params,
                             const EvolutionOptions& opts = {});

struct GhzTuneOptions {
  int rounds = 2;
  double t_span = 0.12;  // fractional half-width of the window scan
  int t_points = 9;
  double offset_span_mhz = 2.5;
  int offset_points = 7;
};

// Coordinate descent: interaction window, then each qubit's offset, repeated.
OptimizeResult optimize_ghz(const GhzPlan& plan, const DeviceConfig& dev,
                            ModelKind model, EvolveMode mode,
                            const NoiseModel* noise,
                            const GhzTuneOptions& tune = {},
                            const EvolutionOptions& opts = {});

// ---------------------------------------------------------------------------
// Fidelity scaling
// ---------------------------------------------------------------------------

struct ScalingFit {
  double rate_n = 0, intercept_n = 0, r2_n = 0;     // ln F = intercept - rate*N
  double rate_n2 = 0, intercept_n2 = 0, r2_n2 = 0;  // ln F = intercept - rate*N^2/2
  bool linear_preferred = false;
};

ScalingFit fit_fidelity_scaling(const std::vector<int>& n,
                                const std::vector<double>& fidelity);

}  // namespace qbus
