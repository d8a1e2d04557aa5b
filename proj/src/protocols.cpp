#include "qbus/protocols.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "qbus/threading.hpp"

namespace qbus {

namespace {

std::vector<int> sorted_unique_or_throw(const std::vector<int>& qubits,
                                        const char* who) {
  std::vector<int> s = qubits;
  std::sort(s.begin(), s.end());
  if (std::adjacent_find(s.begin(), s.end()) != s.end())
    throw ConfigError(std::string(who) + ": duplicate qubit");
  return s;
}

double plan_detuning(const GhzPlan& plan, int q) {
  auto it = plan.offsets_mhz.find(q);
  return plan.delta_mhz + (it == plan.offsets_mhz.end() ? 0.0 : it->second);
}

// Programmed detuning arc of each roster qubit over the whole schedule.
void check_ghz_plan(const GhzPlan& plan, const DeviceConfig& dev) {
  if (plan.qubits.size() < 2)
    throw ConfigError("ghz plan: need at least two qubits");
  sorted_unique_or_throw(plan.qubits, "ghz plan");
  for (auto& [q, off] : plan.offsets_mhz) {
    (void)off;
    if (std::find(plan.qubits.begin(), plan.qubits.end(), q) ==
        plan.qubits.end())
      throw ConfigError("ghz plan: offset for a qubit outside the plan");
  }
  for (int q : plan.qubits) {
    dev.qubit(q);  // throws if unknown
    if (plan_detuning(plan, q) == 0.0)
      throw PhysicsError("ghz plan: zero detuning on qubit " +
                         std::to_string(q));
  }
}

}  // namespace

double ghz_mean_coupling_mhz(const GhzPlan& plan, const DeviceConfig& dev) {
  check_ghz_plan(plan, dev);
  double sum = 0;
  int npairs = 0;
  for (std::size_t i = 0; i < plan.qubits.size(); ++i)
    for (std::size_t j = i + 1; j < plan.qubits.size(); ++j) {
      const auto& qa = dev.qubit(plan.qubits[i]);
      const auto& qb = dev.qubit(plan.qubits[j]);
      const double da = plan_detuning(plan, plan.qubits[i]);
      const double db = plan_detuning(plan, plan.qubits[j]);
      // Net coupling: superexchange plus any direct crosstalk, as for the
      // swap-gate durations.
      sum += 0.5 * qa.g_mhz * qb.g_mhz * (1.0 / da + 1.0 / db) +
             dev.xx_lambda(plan.qubits[i], plan.qubits[j]);
      ++npairs;
    }
  return sum / npairs;
}

double ghz_interaction_time(const GhzPlan& plan, const DeviceConfig& dev) {
  if (plan.t_int_ns > 0) return plan.t_int_ns;
  if (plan.theta <= 0) throw ConfigError("ghz plan: theta must be positive");
  const double lam = ghz_mean_coupling_mhz(plan, dev);
  if (lam == 0.0) throw PhysicsError("ghz plan: mean coupling vanishes");
  return plan.theta / (ang_per_mhz * std::abs(lam));
}

PulseSchedule ghz_sequence(const GhzPlan& plan, const DeviceConfig& dev) {
  check_ghz_plan(plan, dev);
  const double t = ghz_interaction_time(plan, dev);

  PulseSchedule sched;
  sched.roster = sorted_unique_or_throw(plan.qubits, "ghz plan");

  auto common_segment = [&](double delta, double dur) {
    ScheduleSegment seg;
    seg.duration_ns = dur;
    for (int q : sched.roster) seg.freq_mhz[q] = dev.bus_mhz + delta;
    seg.active = sched.roster;
    return seg;
  };

  std::vector<double> stair;  // staircase detunings, far to near
  if (plan.ramp_ns > 0) {
    if (plan.ramp_steps < 1)
      throw ConfigError("ghz plan: ramp_steps must be positive");
    if (plan.ramp_from_mhz * plan.delta_mhz <= 0 ||
        std::abs(plan.ramp_from_mhz) <= std::abs(plan.delta_mhz))
      throw ConfigError(
          "ghz plan: ramp must start beyond the working detuning");
    const double r = std::pow(plan.ramp_from_mhz / plan.delta_mhz,
                              1.0 / plan.ramp_steps);
    for (int m = plan.ramp_steps; m >= 1; --m)
      stair.push_back(plan.delta_mhz * std::pow(r, m));
  }

  const double dstep =
      stair.empty() ? 0.0 : plan.ramp_ns / static_cast<double>(stair.size());
  for (double d : stair) sched.segments.push_back(common_segment(d, dstep));

  ScheduleSegment hold;
  hold.duration_ns = t;
  for (int q : sched.roster)
    hold.freq_mhz[q] = dev.bus_mhz + plan_detuning(plan, q);
  hold.active = sched.roster;
  sched.segments.push_back(std::move(hold));

  for (auto it = stair.rbegin(); it != stair.rend(); ++it)
    sched.segments.push_back(common_segment(*it, dstep));

  for (int q : sched.roster)
    sched.events.push_back({0.0, q, false, 0.0, 0.5 * pi});
  return sched;
}

GhzResult run_ghz(const GhzPlan& plan, const DeviceConfig& dev, ModelKind model,
                  EvolveMode mode, const NoiseModel* noise,
                  const EvolutionOptions& opts) {
  PulseSchedule sched = ghz_sequence(plan, dev);
  const double t = ghz_interaction_time(plan, dev);
  const int nq = static_cast<int>(sched.roster.size());
  std::vector<int> keep(nq);
  std::iota(keep.begin(), keep.end(), 0);

  // States are quoted in each qubit's calibrated drive frame (programmed
  // detuning plus dispersive pull), the frame hardware phase-tracking uses;
  // the fidelity search absorbs the two remaining reference phases.
  if (mode == EvolveMode::unitary) {
    auto r = evolve_unitary(sched, dev, model,
                            schedule_ground(sched, dev, model), opts);
    DensityMatrix rho = model == ModelKind::full
                            ? partial_trace(r.final, keep)
                            : DensityMatrix::from_pure(r.final);
    auto pf = ghz_fidelity_max_phase(rho, GhzBasis::plus_minus);
    return {std::move(rho), pf.fidelity, pf.phi_star, pf.beta_star,
            t,              0.0,         std::move(r.warnings)};
  }

  NoiseModel nm = noise ? *noise : NoiseModel::from_device(dev, sched.roster);
  auto r = evolve_lindblad(
      sched, dev, model, nm,
      DensityMatrix::from_pure(schedule_ground(sched, dev, model)), opts);
  DensityMatrix rho =
      model == ModelKind::full ? partial_trace(r.final, keep) : r.final;
  auto pf = ghz_fidelity_max_phase(rho, GhzBasis::plus_minus);
  return {std::move(rho), pf.fidelity, pf.phi_star, pf.beta_star,
          t,              r.final_min_eig, std::move(r.warnings)};
}

// ---------------------------------------------------------------------------
// EPR pairs
// ---------------------------------------------------------------------------

double epr_lambda_total_mhz(const EprPair& pair, const DeviceConfig& dev) {
  const auto& qa = dev.qubit(pair.a);
  const auto& qb = dev.qubit(pair.b);
  return superexchange_strength(qa.g_mhz, qb.g_mhz, pair.delta_mhz) +
         dev.xx_lambda(pair.a, pair.b);
}

std::vector<double> epr_durations(const EprPlan& plan, const DeviceConfig& dev) {
  std::vector<double> t;
  t.reserve(plan.pairs.size());
  for (const auto& p : plan.pairs) {
    if (p.t_swap_ns > 0) {
      t.push_back(p.t_swap_ns);
      continue;
    }
    const double lam = epr_lambda_total_mhz(p, dev);
    if (lam == 0.0)
      throw PhysicsError("epr plan: net coupling vanishes for pair (" +
                         std::to_string(p.a) + ", " + std::to_string(p.b) +
                         ")");
    t.push_back(0.25 * pi / (ang_per_mhz * std::abs(lam)));
  }
  return t;
}

PulseSchedule epr_sequence(const EprPlan& plan, const DeviceConfig& dev,
                           Warnings* w) {
  if (plan.pairs.empty()) throw ConfigError("epr plan: no pairs");
  std::vector<int> all;
  for (const auto& p : plan.pairs) {
    if (p.a == p.b) throw ConfigError("epr plan: pair with identical qubits");
    dev.qubit(p.a);
    dev.qubit(p.b);
    all.push_back(p.a);
    all.push_back(p.b);
  }
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end())
    throw ConfigError("epr plan: pairs share a qubit");

  std::vector<double> lam(plan.pairs.size());
  double lam_max = 0;
  for (std::size_t i = 0; i < plan.pairs.size(); ++i) {
    lam[i] = epr_lambda_total_mhz(plan.pairs[i], dev);
    lam_max = std::max(lam_max, std::abs(lam[i]));
  }
  for (std::size_t i = 0; i < plan.pairs.size(); ++i)
    for (std::size_t j = i + 1; j < plan.pairs.size(); ++j) {
      const double sep =
          std::abs(plan.pairs[i].delta_mhz - plan.pairs[j].delta_mhz);
      if (sep < 20.0 * lam_max) {
        std::ostringstream os;
        os << "epr plan: detunings of pairs (" << plan.pairs[i].a << ", "
           << plan.pairs[i].b << ") and (" << plan.pairs[j].a << ", "
           << plan.pairs[j].b << ") are " << sep
           << " MHz apart; need at least " << 20.0 * lam_max;
        throw PhysicsError(os.str());
      }
    }
  for (const auto& p : plan.pairs) {
    const double gmax = std::max(dev.qubit(p.a).g_mhz, dev.qubit(p.b).g_mhz);
    if (std::abs(p.delta_mhz) < 5.0 * gmax)
      warn(w, "epr plan: pair (" + std::to_string(p.a) + ", " +
                  std::to_string(p.b) + ") sits at |delta| < 5 g");
  }

  const std::vector<double> dur = epr_durations(plan, dev);
  // Group the stop times into ascending segment boundaries.
  std::vector<double> stops = dur;
  std::sort(stops.begin(), stops.end());
  std::vector<double> bounds;
  for (double s : stops)
    if (bounds.empty() || s - bounds.back() > 1e-9) bounds.push_back(s);

  PulseSchedule sched;
  sched.roster = all;
  double prev = 0;
  for (double b : bounds) {
    ScheduleSegment seg;
    seg.duration_ns = b - prev;
    for (std::size_t i = 0; i < plan.pairs.size(); ++i) {
      if (dur[i] <= prev + 1e-9) continue;  // this pair is already parked
      const auto& p = plan.pairs[i];
      seg.freq_mhz[p.a] = dev.bus_mhz + p.delta_mhz;
      seg.freq_mhz[p.b] = dev.bus_mhz + p.delta_mhz;
      seg.active.push_back(p.a);
      seg.active.push_back(p.b);
    }
    std::sort(seg.active.begin(), seg.active.end());
    sched.segments.push_back(std::move(seg));
    prev = b;
  }
  for (const auto& p : plan.pairs)
    sched.events.push_back({0.0, p.a, false, 0.0, pi});
  return sched;
}

EprResult run_epr(const EprPlan& plan, const DeviceConfig& dev, ModelKind model,
                  EvolveMode mode, const NoiseModel* noise,
                  const EvolutionOptions& opts) {
  Warnings w;
  PulseSchedule sched = epr_sequence(plan, dev, &w);

  std::vector<DensityMatrix> pair_rho;
  auto reduce_pairs = [&](auto&& state) {
    for (const auto& p : plan.pairs) {
      int sa = static_cast<int>(std::lower_bound(sched.roster.begin(),
                                                 sched.roster.end(), p.a) -
                                sched.roster.begin());
      int sb = static_cast<int>(std::lower_bound(sched.roster.begin(),
                                                 sched.roster.end(), p.b) -
                                sched.roster.begin());
      std::vector<int> keep{std::min(sa, sb), std::max(sa, sb)};
      pair_rho.push_back(partial_trace(state, keep));
    }
  };

  if (mode == EvolveMode::unitary) {
    auto r = evolve_unitary(sched, dev, model,
                            schedule_ground(sched, dev, model), opts);
    reduce_pairs(r.final);
    w.insert(w.end(), r.warnings.begin(), r.warnings.end());
  } else {
    NoiseModel nm = noise ? *noise : NoiseModel::from_device(dev, sched.roster);
    auto r = evolve_lindblad(
        sched, dev, model, nm,
        DensityMatrix::from_pure(schedule_ground(sched, dev, model)), opts);
    reduce_pairs(r.final);
    w.insert(w.end(), r.warnings.begin(), r.warnings.end());
  }

  EprResult out{std::move(pair_rho), {}, {}, std::move(w)};
  for (const auto& rho : out.pair_rho) {
    out.concurrence.push_back(concurrence(rho));
    const Mat& m = rho.mat();
    out.fidelity.push_back(0.5 * (m(1, 1).real() + m(2, 2).real()) +
                           std::abs(m(1, 2)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Phase calibration
// ---------------------------------------------------------------------------

PhaseCalibration calibrate_phase(const DeviceConfig& dev, int qa, int qb,
                                 double delta_mhz, double injected_rad,
                                 int npoints) {
  if (npoints < 8) throw ConfigError("calibrate_phase: grid too small");
  const auto& pa = dev.qubit(qa);
  const auto& pb = dev.qubit(qb);
  const double lam =
      superexchange_strength(pa.g_mhz, pb.g_mhz, delta_mhz);
  if (lam == 0.0) throw PhysicsError("calibrate_phase: zero coupling");
  const double t = 0.25 * pi / (ang_per_mhz * std::abs(lam));

  Operator h = build_effective_pair_hamiltonian(dev, {{qa, qb, delta_mhz}});
  Eigen::SelfAdjointEigenSolver<Mat> es(h.dense());
  Mat u = es.eigenvectors() *
          (cx(0, -1) * t * es.eigenvalues().array()).exp().matrix().asDiagonal() *
          es.eigenvectors().adjoint();
  // Undo the per-qubit Stark phases: the drive frames track the dressed
  // qubit frequencies.
  const int slot_a = qa < qb ? 0 : 1;
  const double sa = ang_per_mhz * pa.g_mhz * pa.g_mhz / delta_mhz;
  const double sb = ang_per_mhz * pb.g_mhz * pb.g_mhz / delta_mhz;
  Vec frame(4);
  for (int idx = 0; idx < 4; ++idx) {
    const int hi = idx >> 1, lo = idx & 1;
    const int na = slot_a == 0 ? hi : lo;
    const int nb = slot_a == 0 ? lo : hi;
    frame(idx) = std::exp(cx(0, sa * t * na + sb * t * nb));
  }
  u = frame.asDiagonal() * u;

  const std::vector<int> dims{2, 2};
  auto probs = [&](double phi) {
    Vec psi = Vec::Zero(4);
    psi(0) = 1.0;
    apply_local(psi, rot_inplane(0.5 * pi, 0.5 * pi), slot_a, dims);
    apply_local(psi, rot_inplane(phi + injected_rad + 0.5 * pi, 0.5 * pi),
                1 - slot_a, dims);
    Vec fin = u * psi;
    Eigen::Vector4d p = fin.cwiseAbs2();
    return p;
  };
  auto spread_var = [&](double phi) {
    Eigen::Vector4d p = probs(phi);
    return (p.array() - 0.25).square().sum() / 4.0;
  };

  PhaseCalibration cal;
  cal.grid.resize(npoints);
  cal.variance.resize(npoints);
  for (int i = 0; i < npoints; ++i) {
    cal.grid(i) = -pi + 2.0 * pi * i / npoints;
    cal.variance(i) = spread_var(cal.grid(i));
  }

  // The two physical minima are exact zeros a half-turn apart, but the grid
  // rarely lands on either, so refine every local minimum through its
  // parabola first and only then keep the (near-)degenerate set.
  const double h_step = 2.0 * pi / npoints;
  const double vrange = cal.variance.maxCoeff() - cal.variance.minCoeff();
  std::vector<std::pair<double, double>> minima;  // (refined value, phi)
  for (int i = 0; i < npoints; ++i) {
    const int ip = (i + npoints - 1) % npoints;
    const int in = (i + 1) % npoints;
    const double v0 = cal.variance(ip), v1 = cal.variance(i),
                 v2 = cal.variance(in);
    if (!(v1 < v0 && v1 <= v2)) continue;
    double phi = cal.grid(i);
    double vref = v1;
    const double denom = v0 - 2.0 * v1 + v2;
    if (denom > 0) {
      double d = 0.5 * (v0 - v2) / denom;
      d = std::clamp(d, -1.0, 1.0);
      phi += d * h_step;
      vref = v1 - 0.125 * (v0 - v2) * (v0 - v2) / denom;
    }
    if (phi >= pi) phi -= 2.0 * pi;
    if (phi < -pi) phi += 2.0 * pi;
    minima.emplace_back(vref, phi);
  }
  if (minima.empty())
    throw SolverError("calibrate_phase: no variance minimum found");

  double vbest = minima.front().first;
  for (const auto& m : minima) vbest = std::min(vbest, m.first);
  const double keep = vbest + 1e-9 + 1e-6 * vrange;
  double best_phi = 0, best_abs = 1e300;
  for (const auto& [v, phi] : minima) {
    if (v > keep) continue;
    if (std::abs(phi) < best_abs) {
      best_abs = std::abs(phi);
      best_phi = phi;
    }
  }

  cal.phi_star = best_phi;
  Eigen::Vector4d p = probs(best_phi);
  cal.max_spread = (p.array() - 0.25).abs().maxCoeff();
  return cal;
}

// ---------------------------------------------------------------------------
// Plan tuning
// ---------------------------------------------------------------------------

namespace {

GhzPlan with_param(GhzPlan p, const ScanParam& sp, double v) {
  if (sp.kind == ScanParam::Kind::t_int)
    p.t_int_ns = v;
  else
    p.offsets_mhz[sp.qubit] = v;
  return p;
}

void check_scan(const GhzPlan& plan, const ScanParam& sp) {
  if (sp.points < 3) throw ConfigError("optimize: need at least 3 points");
  if (!(sp.lo < sp.hi)) throw ConfigError("optimize: empty scan range");
  if (sp.kind == ScanParam::Kind::t_int && sp.lo <= 0)
    throw ConfigError("optimize: window scan must stay positive");
  if (sp.kind == ScanParam::Kind::offset &&
      std::find(plan.qubits.begin(), plan.qubits.end(), sp.qubit) ==
          plan.qubits.end())
    throw ConfigError("optimize: offset scan for a qubit outside the plan");
}

}  // namespace

OptimizeResult optimize_plan(const GhzPlan& plan, const DeviceConfig& dev,
                             ModelKind model, EvolveMode mode,
                             const NoiseModel* noise,
                             const std::vector<ScanParam>& params,
                             const EvolutionOptions& opts) {
  if (params.empty() || params.size() > 2)
    throw ConfigError("optimize: one or two scan parameters");
  for (const auto& sp : params) check_scan(plan, sp);

  auto value = [](const ScanParam& sp, int i) {
    return sp.lo + (sp.hi - sp.lo) * i / (sp.points - 1);
  };
  auto metric = [&](const GhzPlan& p) {
    return 1.0 - run_ghz(p, dev, model, mode, noise, opts).fidelity;
  };

  const int p0 = params[0].points;
  const int p1 = params.size() == 2 ? params[1].points : 1;
  const int total = p0 * p1;
  std::vector<double> m(total);
  parallel_for(
      total,
      [&](long long b, long long e) {
        for (long long i = b; i < e; ++i) {
          GhzPlan p = with_param(plan, params[0], value(params[0],
                                                        static_cast<int>(i / p1)));
          if (params.size() == 2)
            p = with_param(p, params[1],
                           value(params[1], static_cast<int>(i % p1)));
          m[i] = metric(p);
        }
      },
      opts.threads);
  int evals = total;

  int best = 0;
  for (int i = 1; i < total; ++i)
    if (m[i] < m[best]) best = i;
  const int b0 = best / p1, b1 = best % p1;
  double x0 = value(params[0], b0);
  double x1 = params.size() == 2 ? value(params[1], b1) : 0;

  // One parabolic step per axis, evaluated jointly; kept only if it helps.
  auto refine = [&](const ScanParam& sp, int bi, auto at) -> double {
    if (bi <= 0 || bi >= sp.points - 1) return value(sp, bi);
    const double v0 = at(bi - 1), v1 = at(bi), v2 = at(bi + 1);
    const double denom = v0 - 2.0 * v1 + v2;
    if (denom <= 0) return value(sp, bi);
    const double h = (sp.hi - sp.lo) / (sp.points - 1);
    double x = value(sp, bi) + std::clamp(0.5 * (v0 - v2) / denom, -1.0, 1.0) * h;
    return std::clamp(x, sp.lo, sp.hi);
  };
  double r0 = refine(params[0], b0, [&](int i) { return m[i * p1 + b1]; });
  double r1 = params.size() == 2
                  ? refine(params[1], b1, [&](int i) { return m[b0 * p1 + i]; })
                  : 0;
  if (r0 != x0 || (params.size() == 2 && r1 != x1)) {
    GhzPlan cand = with_param(plan, params[0], r0);
    if (params.size() == 2) cand = with_param(cand, params[1], r1);
    const double mc = metric(cand);
    ++evals;
    if (mc < m[best]) {
      return {std::move(cand), 1.0 - mc, evals, std::move(m)};
    }
  }

  GhzPlan bp = with_param(plan, params[0], x0);
  if (params.size() == 2) bp = with_param(bp, params[1], x1);
  return {std::move(bp), 1.0 - m[best], evals, std::move(m)};
}

OptimizeResult optimize_ghz(const GhzPlan& plan, const DeviceConfig& dev,
                            ModelKind model, EvolveMode mode,
                            const NoiseModel* noise, const GhzTuneOptions& tune,
                            const EvolutionOptions& opts) {
  if (tune.rounds < 1) throw ConfigError("optimize: rounds must be positive");
  GhzPlan cur = plan;
  if (cur.t_int_ns <= 0) cur.t_int_ns = ghz_interaction_time(cur, dev);

  OptimizeResult last{cur, 0, 0, {}};
  int evals = 0;
  for (int r = 0; r < tune.rounds; ++r) {
    ScanParam t;
    t.kind = ScanParam::Kind::t_int;
    t.lo = cur.t_int_ns * (1.0 - tune.t_span);
    t.hi = cur.t_int_ns * (1.0 + tune.t_span);
    t.points = tune.t_points;
    last = optimize_plan(cur, dev, model, mode, noise, {t}, opts);
    evals += last.evaluations;
    cur = last.plan;

    for (int q : cur.qubits) {
      auto it = cur.offsets_mhz.find(q);
      const double c = it == cur.offsets_mhz.end() ? 0.0 : it->second;
      ScanParam o;
      o.kind = ScanParam::Kind::offset;
      o.qubit = q;
      o.lo = c - tune.offset_span_mhz;
      o.hi = c + tune.offset_span_mhz;
      o.points = tune.offset_points;
      last = optimize_plan(cur, dev, model, mode, noise, {o}, opts);
      evals += last.evaluations;
      cur = last.plan;
    }
  }
  last.evaluations = evals;
  return last;
}

// ---------------------------------------------------------------------------
// Fidelity scaling
// ---------------------------------------------------------------------------

ScalingFit fit_fidelity_scaling(const std::vector<int>& n,
                                const std::vector<double>& fidelity) {
  if (n.size() != fidelity.size() || n.size() < 3)
    throw ConfigError("scaling fit: need >= 3 (N, F) points");
  std::vector<double> y(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (fidelity[i] <= 0 || fidelity[i] > 1.0 + 1e-9)
      throw ConfigError("scaling fit: fidelities must lie in (0, 1]");
    y[i] = std::log(fidelity[i]);
  }

  auto ls = [&](auto xf, double& rate, double& icept, double& r2) {
    const double m = static_cast<double>(n.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n.size(); ++i) {
      const double x = xf(n[i]);
      sx += x;
      sy += y[i];
      sxx += x * x;
      sxy += x * y[i];
    }
    const double denom = m * sxx - sx * sx;
    if (denom == 0) throw ConfigError("scaling fit: degenerate abscissae");
    const double slope = (m * sxy - sx * sy) / denom;
    icept = (sy - slope * sx) / m;
    rate = -slope;
    double ss_res = 0, ss_tot = 0;
    const double ybar = sy / m;
    for (std::size_t i = 0; i < n.size(); ++i) {
      const double fit = icept + slope * xf(n[i]);
      ss_res += (y[i] - fit) * (y[i] - fit);
      ss_tot += (y[i] - ybar) * (y[i] - ybar);
    }
    r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  };

  ScalingFit fit;
  ls([](int k) { return static_cast<double>(k); }, fit.rate_n, fit.intercept_n,
     fit.r2_n);
  ls([](int k) { return 0.5 * k * k; }, fit.rate_n2, fit.intercept_n2,
     fit.r2_n2);
  fit.linear_preferred = fit.r2_n >= fit.r2_n2;
  return fit;
}

}  // namespace qbus
