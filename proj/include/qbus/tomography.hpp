#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qbus/common.hpp"
#include "qbus/core.hpp"
#include "qbus/device.hpp"
#include "qbus/rng.hpp"

namespace qbus {

// A tomographic setting is one measurement basis per qubit, e.g. "XZY"
// (slot 0 first).  'X' inserts R_y(-pi/2), 'Y' inserts R_x(pi/2), 'Z'
// measures directly.
std::vector<std::string> full_setting_family(int n);

// ---------------------------------------------------------------------------
// Readout
// ---------------------------------------------------------------------------

// Per-qubit assignment fidelities; the confusion matrix of qubit j is
// column-stochastic: [[f0, 1-f1], [1-f0, f1]].
struct ReadoutModel {
  std::vector<double> f0, f1;

  int n() const { return static_cast<int>(f0.size()); }
  bool is_perfect() const;
  static ReadoutModel perfect(int n);
  static ReadoutModel from_device(const DeviceConfig& dev,
                                  const std::vector<int>& roster);
};

// Ideal outcome distribution of one setting (2^n entries, bit of slot 0
// most significant).
RVec measurement_probs(const PureState& psi, const std::string& setting);
RVec measurement_probs(const DensityMatrix& rho, const std::string& setting);
// Same with one arbitrary pre-rotation per qubit.
RVec measurement_probs(const DensityMatrix& rho, const std::vector<Mat>& pre);

// Observed distribution: per-qubit confusion applied axis-wise.
RVec apply_confusion(const RVec& probs, const ReadoutModel& m);
// Exact inverse of apply_confusion; may produce small negatives, which are
// deliberately retained for the linear solve.
RVec correct_readout(const RVec& probs, const ReadoutModel& m);

std::vector<long long> sample_counts(const RVec& probs, long long shots,
                                     RngStream& rng);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct MeasRecord {
  std::string setting;
  RVec probs;                     // exact records
  std::vector<long long> counts;  // sampled records (probs then unused)

  bool exact() const { return counts.empty(); }
};

struct TomoDataset {
  int n = 0;
  long long shots = 0;  // 0 = exact probabilities
  std::uint64_t seed = 0;
  bool corrected = false;  // probabilities already readout-corrected
  ReadoutModel readout;    // empty = perfect
  std::vector<MeasRecord> records;

  void validate() const;  // throws ConfigError
};

// One setting: ideal probs -> confusion -> optional multinomial sample.
MeasRecord simulate_measurement(const DensityMatrix& rho,
                                const std::string& setting, long long shots,
                                const ReadoutModel& readout, RngStream& rng);

// Full dataset over `settings` (default: the full 3^n family).  Record i
// samples from its own counter-based stream (seed, i), so the result is
// independent of the thread count.
TomoDataset simulate_tomography(const DensityMatrix& rho, long long shots,
                                std::uint64_t seed, const ReadoutModel& readout,
                                std::vector<std::string> settings = {},
                                int threads = 0);

// ---------------------------------------------------------------------------
// Linear inversion
// ---------------------------------------------------------------------------

// Normal operator A = sum_s W_s^H W_s of the stacked measurement maps, over
// the per-qubit pair index p = 2m + l (base-4 digits, slot 0 most
// significant).  Real symmetric positive (semi)definite CSR, plus its
// connected components — the symbolic half of the direct factorization.
struct NormalSystem {
  int n = 0;
  long long dim = 0;  // 4^n
  std::vector<long long> row_ptr;
  std::vector<int> col;
  std::vector<double> val;
  std::vector<std::vector<int>> components;

  long long nnz() const { return static_cast<long long>(val.size()); }
  long long max_row_nnz() const;
  RMat dense() const;
};

NormalSystem assemble_normal_system(int n,
                                    const std::vector<std::string>& settings);

// Right-hand side b = sum_s W_s^H p_s from corrected probabilities, in the
// same base-4 index space.  `probs` must match `settings` entrywise.
Vec assemble_rhs(int n, const std::vector<std::string>& settings,
                 const std::vector<RVec>& probs, int threads = 0);

enum class SolveMethod { automatic, direct, cg };

struct SolveStats {
  std::string method;
  int iterations = 0;   // cg only
  double residual = 0;  // relative, final
  double solve_ms = 0;
  long long nnz = 0;
};

// Solve A x = b.  automatic: dense factorization of each connected
// component up to n = 6, Jacobi-preconditioned conjugate gradient beyond.
// Residual above 1e-10 * |b| is an error.
Vec solve_normal(const NormalSystem& a, const Vec& rhs,
                 SolveMethod method = SolveMethod::automatic,
                 SolveStats* stats = nullptr);

struct ReconstructionResult {
  DensityMatrix rho;  // PSD-projected, unit trace
  Mat raw;            // Hermitized linear-inversion estimate
  SolveStats stats;
  Warnings warnings;
};

// counts -> probabilities -> readout correction -> normal equations ->
// Hermitize -> PSD projection.
ReconstructionResult reconstruct(const TomoDataset& data,
                                 SolveMethod method = SolveMethod::automatic,
                                 int threads = 0);

// ---------------------------------------------------------------------------
// Parity analysis
// ---------------------------------------------------------------------------

// <P(gamma)> with P = tensor product of cos(g) X + sin(g) Y per qubit, and
// a least-squares fringe fit A cos(f gamma + phase) with integer f selected
// by residual.
struct ParityScan {
  RVec gamma;
  RVec parity;
  double amplitude = 0;
  double phase = 0;
  int frequency = 0;
  double residual = 0;      // at the selected frequency
  double alt_residual = 0;  // best of frequency +- 1
};

ParityScan parity_scan(const DensityMatrix& rho, const RVec& gamma);
// Finite-shot variant: per grid point, rotated readout, confusion, sampling
// (stream (seed, point)), correction, then the same fit.
ParityScan parity_scan_sampled(const DensityMatrix& rho, const RVec& gamma,
                               long long shots, std::uint64_t seed,
                               const ReadoutModel& readout, int threads = 0);

// F = (p_all0 + p_all1)/2 + A/2.  Values outside [0, 1] are only flagged.
double ghz_fidelity_shortcut(double p_all0, double p_all1, double amplitude,
                             Warnings* w = nullptr);

// (F - 0.5) / sigma, the genuine-multipartite-entanglement significance.
double ghz_significance(double fidelity, double sigma);

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

struct BootstrapResult {
  double sigma = 0;
  int repeats = 0;
  std::vector<double> samples;  // metric per replicate
};

// Resample every record's counts, re-reconstruct, evaluate `metric`;
// replicate r resamples record i from stream (seed, r, i).
BootstrapResult bootstrap_fidelity(
    const TomoDataset& data,
    const std::function<double(const DensityMatrix&)>& metric, int repeats,
    std::uint64_t seed, SolveMethod method = SolveMethod::automatic,
    int threads = 0);

}  // namespace qbus
