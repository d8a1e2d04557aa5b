#include "qbus/io.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"
#include "qbus/dynamics.hpp"
#include "qbus/threading.hpp"

namespace qbus {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

template <typename T>
T req(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key)) throw ConfigError(ctx + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(ctx + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T opt(const json& j, const std::string& key, T def, const std::string& ctx) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(ctx + ": field '" + key + "' has the wrong type");
  }
}

DeviceConfig parse_device(const json& j) {
  DeviceConfig dev;
  dev.bus_mhz = req<double>(j, "bus_freq_mhz", "device");
  dev.fock_cutoff = opt<int>(j, "fock_cutoff", 3, "device");
  if (!j.contains("qubits") || !j.at("qubits").is_array())
    throw ConfigError("device: missing 'qubits' array");
  for (const auto& q : j.at("qubits")) {
    QubitParams p;
    p.index = req<int>(q, "index", "device qubit");
    p.idle_mhz = req<double>(q, "idle_freq_mhz", "device qubit");
    p.sweet_mhz = opt<double>(q, "sweet_freq_mhz", 0.0, "device qubit");
    p.g_mhz = req<double>(q, "g_mhz", "device qubit");
    p.t1_ns = req<double>(q, "t1_ns", "device qubit");
    p.t2_star_ns = req<double>(q, "t2_star_ns", "device qubit");
    p.t2_echo_ns = opt<double>(q, "t2_echo_ns", 0.0, "device qubit");
    p.f0 = opt<double>(q, "f0", 1.0, "device qubit");
    p.f1 = opt<double>(q, "f1", 1.0, "device qubit");
    dev.qubits.push_back(p);
  }
  if (j.contains("xx_crosstalk")) {
    for (const auto& x : j.at("xx_crosstalk")) {
      CrosstalkPair c;
      c.a = req<int>(x, "a", "xx_crosstalk");
      c.b = req<int>(x, "b", "xx_crosstalk");
      c.lambda_mhz = req<double>(x, "lambda_mhz", "xx_crosstalk");
      dev.xx.push_back(c);
    }
  }
  if (j.contains("z_crosstalk")) {
    const auto& z = j.at("z_crosstalk");
    if (!z.is_array()) throw ConfigError("device: z_crosstalk must be rows");
    const std::size_t n = z.size();
    dev.z_crosstalk.resize(n, n);
    for (std::size_t r = 0; r < n; ++r) {
      if (!z.at(r).is_array() || z.at(r).size() != n)
        throw ConfigError("device: z_crosstalk must be square");
      for (std::size_t c = 0; c < n; ++c)
        dev.z_crosstalk(r, c) = z.at(r).at(c).get<double>();
    }
  }
  dev.validate();
  return dev;
}

GhzPlan parse_ghz_plan(const json& j) {
  GhzPlan plan;
  plan.qubits = req<std::vector<int>>(j, "qubits", "ghz plan");
  plan.delta_mhz = opt<double>(j, "delta_mhz", -140.0, "ghz plan");
  plan.t_int_ns = opt<double>(j, "t_int_ns", 0.0, "ghz plan");
  plan.theta = opt<double>(j, "theta", 0.5 * pi, "ghz plan");
  plan.ramp_ns = opt<double>(j, "ramp_ns", 0.0, "ghz plan");
  plan.ramp_steps = opt<int>(j, "ramp_steps", 8, "ghz plan");
  plan.ramp_from_mhz = opt<double>(j, "ramp_from_mhz", -700.0, "ghz plan");
  if (j.contains("offsets_mhz")) {
    const auto& o = j.at("offsets_mhz");
    if (!o.is_object())
      throw ConfigError("ghz plan: offsets_mhz must map qubit -> MHz");
    for (auto it = o.begin(); it != o.end(); ++it) {
      int q = 0;
      try {
        q = std::stoi(it.key());
      } catch (const std::exception&) {
        throw ConfigError("ghz plan: offsets_mhz key '" + it.key() + "'");
      }
      plan.offsets_mhz[q] = it.value().get<double>();
    }
  }
  return plan;
}

EprPlan parse_epr_plan(const json& j) {
  EprPlan plan;
  if (!j.contains("pairs") || !j.at("pairs").is_array())
    throw ConfigError("epr plan: missing 'pairs' array");
  for (const auto& p : j.at("pairs")) {
    EprPair e;
    e.a = req<int>(p, "a", "epr pair");
    e.b = req<int>(p, "b", "epr pair");
    e.delta_mhz = req<double>(p, "delta_mhz", "epr pair");
    e.t_swap_ns = opt<double>(p, "t_swap_ns", 0.0, "epr pair");
    plan.pairs.push_back(e);
  }
  return plan;
}

TomoDataset parse_dataset(const json& j) {
  TomoDataset ds;
  ds.n = req<int>(j, "n", "dataset");
  ds.shots = opt<long long>(j, "shots", 0, "dataset");
  ds.seed = opt<std::uint64_t>(j, "seed", 0, "dataset");
  ds.corrected = opt<bool>(j, "corrected", false, "dataset");
  if (j.contains("readout")) {
    ds.readout.f0 =
        req<std::vector<double>>(j.at("readout"), "f0", "dataset readout");
    ds.readout.f1 =
        req<std::vector<double>>(j.at("readout"), "f1", "dataset readout");
  }
  if (!j.contains("records") || !j.at("records").is_array())
    throw ConfigError("dataset: missing 'records' array");
  for (const auto& r : j.at("records")) {
    MeasRecord rec;
    rec.setting = req<std::string>(r, "setting", "dataset record");
    if (r.contains("counts")) {
      rec.counts = req<std::vector<long long>>(r, "counts", "dataset record");
    } else {
      auto p = req<std::vector<double>>(r, "probs", "dataset record");
      rec.probs = Eigen::Map<RVec>(p.data(), p.size());
    }
    ds.records.push_back(std::move(rec));
  }
  ds.validate();
  return ds;
}

json dataset_json(const TomoDataset& ds) {
  json j;
  j["n"] = ds.n;
  j["shots"] = ds.shots;
  j["seed"] = ds.seed;
  j["corrected"] = ds.corrected;
  if (!ds.readout.f0.empty())
    j["readout"] = {{"f0", ds.readout.f0}, {"f1", ds.readout.f1}};
  json recs = json::array();
  for (const auto& r : ds.records) {
    json rec;
    rec["setting"] = r.setting;
    if (r.exact()) {
      std::vector<double> p(r.probs.data(), r.probs.data() + r.probs.size());
      rec["probs"] = p;
    } else {
      rec["counts"] = r.counts;
    }
    recs.push_back(std::move(rec));
  }
  j["records"] = std::move(recs);
  return j;
}

json mat_json(const Mat& m) {
  json re = json::array(), im = json::array();
  for (long long r = 0; r < m.rows(); ++r) {
    json rr = json::array(), ri = json::array();
    for (long long c = 0; c < m.cols(); ++c) {
      rr.push_back(m(r, c).real());
      ri.push_back(m(r, c).imag());
    }
    re.push_back(std::move(rr));
    im.push_back(std::move(ri));
  }
  return {{"re", std::move(re)}, {"im", std::move(im)}};
}

json ghz_plan_json(const GhzPlan& plan) {
  json off = json::object();
  for (auto& [q, v] : plan.offsets_mhz) off[std::to_string(q)] = v;
  json out = {{"qubits", plan.qubits},
              {"delta_mhz", plan.delta_mhz},
              {"offsets_mhz", std::move(off)},
              {"t_int_ns", plan.t_int_ns},
              {"theta", plan.theta}};
  if (plan.ramp_ns > 0) {
    out["ramp_ns"] = plan.ramp_ns;
    out["ramp_steps"] = plan.ramp_steps;
    out["ramp_from_mhz"] = plan.ramp_from_mhz;
  }
  return out;
}

ModelKind parse_model(const std::string& s) {
  if (s == "full") return ModelKind::full;
  if (s == "effective") return ModelKind::effective;
  throw ConfigError("model must be 'full' or 'effective', got '" + s + "'");
}

EvolveMode parse_mode(const std::string& s) {
  if (s == "unitary") return EvolveMode::unitary;
  if (s == "lindblad") return EvolveMode::lindblad;
  throw ConfigError("mode must be 'unitary' or 'lindblad', got '" + s + "'");
}

// ---------------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------------

struct Emitter {
  std::string out_dir;
  std::vector<std::string> files;
  json timings = json::object();

  void write_text(const std::string& name, const std::string& text) {
    fs::create_directories(out_dir);
    const std::string path = out_dir + "/" + name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + path + "'");
    f << text;
    if (!f) throw ConfigError("short write on '" + path + "'");
    files.push_back(name);
  }
  void write_json(const std::string& name, const json& j) {
    write_text(name, j.dump(2) + "\n");
  }
};

class StageTimer {
 public:
  explicit StageTimer(Emitter& em, std::string name)
      : em_(em), name_(std::move(name)),
        t0_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    const auto t1 = std::chrono::steady_clock::now();
    em_.timings[name_] =
        std::chrono::duration<double, std::milli>(t1 - t0_).count();
  }

 private:
  Emitter& em_;
  std::string name_;
  std::chrono::steady_clock::time_point t0_;
};

void write_manifest(Emitter& em, const json& spec) {
  json files = json::array();
  for (const auto& name : em.files) {
    const std::string path = em.out_dir + "/" + name;
    files.push_back({{"path", name},
                     {"bytes", static_cast<long long>(fs::file_size(path))},
                     {"sha256", sha256_file(path)}});
  }
  json m;
  m["spec"] = spec;
  m["versions"] = {{"qbus", "0.1.0"},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                 std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)}};
  m["threads"] = thread_count();
  m["timings_ms"] = em.timings;
  m["files"] = std::move(files);
  em.write_json("manifest.json", m);
}

std::string csv_num(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

// Readout spec: "perfect", "device" (per-qubit Table values for the roster),
// or an inline {f0:[...], f1:[...]} object.
ReadoutModel parse_readout(const json& spec, int n, const DeviceConfig* dev) {
  if (!spec.contains("readout")) return ReadoutModel::perfect(n);
  const auto& r = spec.at("readout");
  if (r.is_string()) {
    const std::string s = r.get<std::string>();
    if (s == "perfect") return ReadoutModel::perfect(n);
    if (s == "device") {
      if (!dev) throw ConfigError("readout 'device' needs a device file");
      std::vector<int> roster;
      for (int q = 1; q <= n; ++q) roster.push_back(q);
      return ReadoutModel::from_device(*dev, roster);
    }
    throw ConfigError("readout must be 'perfect', 'device' or {f0, f1}");
  }
  ReadoutModel m;
  m.f0 = req<std::vector<double>>(r, "f0", "readout");
  m.f1 = req<std::vector<double>>(r, "f1", "readout");
  if (m.n() != n) throw ConfigError("readout arrays must have length n");
  return m;
}

json plan_source(const json& spec, const char* key) {
  if (!spec.contains(key))
    throw ConfigError(std::string("spec: missing '") + key + "'");
  const auto& p = spec.at(key);
  if (p.is_string()) return load_json(p.get<std::string>());
  if (p.is_object()) return p;
  throw ConfigError(std::string("spec: '") + key +
                    "' must be a path or an inline object");
}

// ---------------------------------------------------------------------------
// Experiment runners
// ---------------------------------------------------------------------------

Warnings run_ghz_kind(const json& spec, Emitter& em) {
  DeviceConfig dev = parse_device(load_json(req<std::string>(spec, "device", "spec")));
  if (opt<int>(spec, "fock_cutoff", 0, "spec") > 0)
    dev.fock_cutoff = spec.at("fock_cutoff").get<int>();
  GhzPlan plan = parse_ghz_plan(plan_source(spec, "plan"));
  const ModelKind model =
      parse_model(opt<std::string>(spec, "model", "full", "spec"));
  const EvolveMode mode =
      parse_mode(opt<std::string>(spec, "mode", "unitary", "spec"));

  std::vector<int> roster = plan.qubits;
  std::sort(roster.begin(), roster.end());
  NoiseModel noise;
  if (mode == EvolveMode::lindblad) {
    noise = NoiseModel::from_device(
        dev, roster, opt<double>(spec, "tphi_factor", 10.0, "spec"));
    noise.kappa_res = opt<double>(spec, "kappa_res", 0.0, "spec");
  }

  int evals = 0;
  const bool optimize = opt<bool>(spec, "optimize", false, "spec");
  if (optimize) {
    StageTimer t(em, "optimize_ms");
    GhzTuneOptions tune;
    tune.rounds = opt<int>(spec, "tune_rounds", tune.rounds, "spec");
    auto best = optimize_ghz(plan, dev, model, EvolveMode::unitary, nullptr,
                             tune);
    plan = best.plan;
    evals = best.evaluations;
  }

  GhzResult res = [&] {
    StageTimer t(em, "run_ms");
    return run_ghz(plan, dev, model, mode,
                   mode == EvolveMode::lindblad ? &noise : nullptr);
  }();
  plan.t_int_ns = res.t_int_ns;

  json out;
  out["n"] = static_cast<int>(plan.qubits.size());
  out["model"] = spec.value("model", "full");
  out["mode"] = spec.value("mode", "unitary");
  out["plan"] = ghz_plan_json(plan);
  out["mean_coupling_mhz"] = ghz_mean_coupling_mhz(plan, dev);
  out["fidelity"] = res.fidelity;
  out["phi_star"] = res.phi_star;
  out["beta_star"] = res.beta_star;
  out["final_min_eig"] = res.final_min_eig;
  out["optimized"] = optimize;
  out["optimizer_evaluations"] = evals;
  out["warnings"] = res.warnings;
  out["rho"] = mat_json(res.rho.mat());
  em.write_json("ghz_result.json", out);
  return res.warnings;
}

Warnings run_epr_kind(const json& spec, Emitter& em) {
  DeviceConfig dev = parse_device(load_json(req<std::string>(spec, "device", "spec")));
  if (opt<int>(spec, "fock_cutoff", 0, "spec") > 0)
    dev.fock_cutoff = spec.at("fock_cutoff").get<int>();
  EprPlan plan = parse_epr_plan(plan_source(spec, "plan"));
  const ModelKind model =
      parse_model(opt<std::string>(spec, "model", "full", "spec"));
  const EvolveMode mode =
      parse_mode(opt<std::string>(spec, "mode", "unitary", "spec"));

  std::vector<int> roster;
  for (const auto& p : plan.pairs) {
    roster.push_back(p.a);
    roster.push_back(p.b);
  }
  std::sort(roster.begin(), roster.end());
  NoiseModel noise;
  if (mode == EvolveMode::lindblad) {
    noise = NoiseModel::from_device(
        dev, roster, opt<double>(spec, "tphi_factor", 10.0, "spec"));
    noise.kappa_res = opt<double>(spec, "kappa_res", 0.0, "spec");
  }

  EprResult res = [&] {
    StageTimer t(em, "run_ms");
    return run_epr(plan, dev, model, mode,
                   mode == EvolveMode::lindblad ? &noise : nullptr);
  }();

  const std::vector<double> dur = epr_durations(plan, dev);
  json pairs = json::array();
  for (std::size_t i = 0; i < plan.pairs.size(); ++i) {
    const auto& p = plan.pairs[i];
    pairs.push_back({{"a", p.a},
                     {"b", p.b},
                     {"delta_mhz", p.delta_mhz},
                     {"t_swap_ns", dur[i]},
                     {"lambda_total_mhz", epr_lambda_total_mhz(p, dev)},
                     {"concurrence", res.concurrence[i]},
                     {"fidelity", res.fidelity[i]},
                     {"rho", mat_json(res.pair_rho[i].mat())}});
  }
  json out;
  out["model"] = spec.value("model", "full");
  out["mode"] = spec.value("mode", "unitary");
  out["pairs"] = std::move(pairs);
  out["warnings"] = res.warnings;
  em.write_json("epr_result.json", out);
  return res.warnings;
}

Warnings run_swap_kind(const json& spec, Emitter& em) {
  DeviceConfig dev = parse_device(load_json(req<std::string>(spec, "device", "spec")));
  if (opt<int>(spec, "fock_cutoff", 0, "spec") > 0)
    dev.fock_cutoff = spec.at("fock_cutoff").get<int>();
  const int qa = req<int>(spec, "qa", "spec");
  const int qb = req<int>(spec, "qb", "spec");
  const double dmin = opt<double>(spec, "delta_min_mhz", -250.0, "spec");
  const double dmax = opt<double>(spec, "delta_max_mhz", -60.0, "spec");
  const int dpts = opt<int>(spec, "delta_points", 20, "spec");
  const double tmax = opt<double>(spec, "t_max_ns", 250.0, "spec");
  const int tpts = opt<int>(spec, "t_points", 126, "spec");
  if (dpts < 2 || tpts < 8) throw ConfigError("swap: grid too small");

  std::vector<double> deltas(dpts), times(tpts);
  for (int i = 0; i < dpts; ++i)
    deltas[i] = dmin + (dmax - dmin) * i / (dpts - 1);
  for (int i = 0; i < tpts; ++i) times[i] = tmax * (i + 1) / tpts;

  SwapSpectroscopy swap = [&] {
    StageTimer t(em, "run_ms");
    return swap_spectroscopy(dev, qa, qb, deltas, times);
  }();

  std::ostringstream csv;
  csv << "delta_mhz,t_ns,p1_with,p1_without\n";
  for (int d = 0; d < dpts; ++d)
    for (int t = 0; t < tpts; ++t)
      csv << csv_num(deltas[d]) << ',' << csv_num(times[t]) << ','
          << csv_num(swap.p1_with(t, d)) << ','
          << csv_num(swap.p1_without(t, d)) << '\n';
  em.write_text("swap_map.csv", csv.str());

  json out;
  out["qa"] = qa;
  out["qb"] = qb;
  out["delta_mhz"] = swap.delta_mhz;
  out["lambda_with_mhz"] = swap.lambda_with_mhz;
  out["lambda_without_mhz"] = swap.lambda_without_mhz;
  out["direct_crosstalk_mhz"] = dev.xx_lambda(qa, qb);
  em.write_json("swap_result.json", out);
  return {};
}

Warnings run_tomo_kind(const json& spec, Emitter& em) {
  const int n = opt<int>(spec, "n", 4, "spec");
  if (n < 1 || n > 7) throw ConfigError("tomo_roundtrip: n must be 1..7");
  const long long shots = opt<long long>(spec, "shots", 0, "spec");
  const std::uint64_t seed = opt<std::uint64_t>(spec, "seed", 1, "spec");

  std::optional<DeviceConfig> dev;
  if (spec.contains("device"))
    dev = parse_device(load_json(req<std::string>(spec, "device", "spec")));
  ReadoutModel readout = parse_readout(spec, n, dev ? &*dev : nullptr);

  PureState target = ghz_ideal(n, GhzBasis::computational);
  TomoDataset ds = [&] {
    StageTimer t(em, "simulate_ms");
    return simulate_tomography(DensityMatrix::from_pure(target), shots, seed,
                               readout);
  }();
  ReconstructionResult rec = [&] {
    StageTimer t(em, "reconstruct_ms");
    return reconstruct(ds);
  }();
  em.timings["solve_ms"] = rec.stats.solve_ms;

  auto proj = ghz_fidelity_max_phase(rec.rho, GhzBasis::computational);
  auto raw = ghz_fidelity_max_phase(rec.raw, n, GhzBasis::computational);

  Warnings warnings = rec.warnings;
  json out;
  out["n"] = n;
  out["shots"] = shots;
  out["seed"] = seed;
  out["fidelity"] = proj.fidelity;
  out["phi_star"] = proj.phi_star;
  out["raw_fidelity"] = raw.fidelity;
  out["projection_shift"] = std::abs(proj.fidelity - raw.fidelity);
  out["solver"] = {{"method", rec.stats.method},
                   {"iterations", rec.stats.iterations},
                   {"residual", rec.stats.residual},
                   {"nnz", rec.stats.nnz}};

  const int boots = opt<int>(spec, "bootstrap_repeats", 0, "spec");
  if (boots > 0) {
    if (shots <= 0)
      throw ConfigError("tomo_roundtrip: bootstrap needs finite shots");
    StageTimer t(em, "bootstrap_ms");
    auto bs = bootstrap_fidelity(
        ds,
        [](const DensityMatrix& r) {
          return ghz_fidelity_max_phase(r, GhzBasis::computational).fidelity;
        },
        boots, seed + 1);
    out["sigma"] = bs.sigma;
    out["significance"] = ghz_significance(proj.fidelity, bs.sigma);
  }
  out["warnings"] = warnings;
  em.write_json("tomo_result.json", out);
  if (opt<bool>(spec, "save_dataset", shots > 0, "spec"))
    em.write_json("dataset.json", dataset_json(ds));
  return warnings;
}

Warnings run_parity_kind(const json& spec, Emitter& em) {
  const int n = opt<int>(spec, "n", 10, "spec");
  if (n < 2 || n > 14) throw ConfigError("parity: n must be 2..14");
  const long long shots = opt<long long>(spec, "shots", 3000, "spec");
  const std::uint64_t seed = opt<std::uint64_t>(spec, "seed", 1, "spec");
  const int points = opt<int>(spec, "gamma_points", 8 * n + 1, "spec");
  if (points < 2 * n + 1) throw ConfigError("parity: gamma grid too small");

  std::optional<DeviceConfig> dev;
  if (spec.contains("device"))
    dev = parse_device(load_json(req<std::string>(spec, "device", "spec")));
  ReadoutModel readout = parse_readout(spec, n, dev ? &*dev : nullptr);

  // Synthetic GHZ-like state: corner populations and coherence as given.
  const double p0 = opt<double>(spec, "p_all0", 0.5, "spec");
  const double p1 = opt<double>(spec, "p_all1", 0.5, "spec");
  const double od = opt<double>(spec, "rho_od", 0.5, "spec");
  Warnings warnings;
  if (od > std::sqrt(p0 * p1) + 1e-12)
    warn(&warnings, "rho_od exceeds sqrt(p_all0 p_all1); state not physical");
  const long long dim = 1LL << n;
  Mat m = Mat::Zero(dim, dim);
  m(0, 0) = p0;
  m(dim - 1, dim - 1) = p1;
  m(0, dim - 1) = od;
  m(dim - 1, 0) = od;
  const double rest = 1.0 - p0 - p1;
  if (rest < -1e-9) throw ConfigError("parity: p_all0 + p_all1 > 1");
  if (dim > 2 && rest > 0)
    for (long long k = 1; k < dim - 1; ++k) m(k, k) = rest / (dim - 2);
  DensityMatrix rho(m, std::vector<int>(n, 2));

  RVec gamma(points);
  for (int i = 0; i < points; ++i) gamma(i) = 2.0 * pi * i / points;

  ParityScan scan = [&] {
    StageTimer t(em, "run_ms");
    return shots > 0
               ? parity_scan_sampled(rho, gamma, shots, seed, readout)
               : parity_scan(rho, gamma);
  }();

  // Z-basis populations for the four-element fidelity shortcut.
  double pz0 = 0, pz1 = 0;
  {
    RngStream rng(seed, {0xfeedULL});
    MeasRecord z = simulate_measurement(rho, std::string(n, 'Z'), shots,
                                        readout, rng);
    RVec p;
    if (z.exact()) {
      p = z.probs;
    } else {
      p.resize(dim);
      for (long long k = 0; k < dim; ++k)
        p(k) = static_cast<double>(z.counts[k]) / shots;
    }
    if (!readout.is_perfect()) p = correct_readout(p, readout);
    pz0 = p(0);
    pz1 = p(dim - 1);
  }
  const double shortcut =
      ghz_fidelity_shortcut(std::clamp(pz0, 0.0, 1.0),
                            std::clamp(pz1, 0.0, 1.0),
                            std::min(scan.amplitude, 1.0), &warnings);

  std::ostringstream csv;
  csv << "gamma_rad,parity\n";
  for (long long i = 0; i < gamma.size(); ++i)
    csv << csv_num(gamma(i)) << ',' << csv_num(scan.parity(i)) << '\n';
  em.write_text("parity.csv", csv.str());

  json out;
  out["n"] = n;
  out["shots"] = shots;
  out["seed"] = seed;
  out["amplitude"] = scan.amplitude;
  out["frequency"] = scan.frequency;
  out["phase"] = scan.phase;
  out["residual"] = scan.residual;
  out["alt_residual"] = scan.alt_residual;
  out["p_all0"] = pz0;
  out["p_all1"] = pz1;
  out["shortcut_fidelity"] = shortcut;
  out["warnings"] = warnings;
  em.write_json("parity_result.json", out);
  return warnings;
}

Warnings run_scaling_kind(const json& spec, Emitter& em) {
  DeviceConfig dev = parse_device(load_json(req<std::string>(spec, "device", "spec")));
  if (opt<int>(spec, "fock_cutoff", 0, "spec") > 0)
    dev.fock_cutoff = spec.at("fock_cutoff").get<int>();
  const int n_min = opt<int>(spec, "n_min", 2, "spec");
  const int n_max = opt<int>(spec, "n_max", 7, "spec");
  if (n_min < 2 || n_max < n_min) throw ConfigError("scaling: bad n range");
  const ModelKind model =
      parse_model(opt<std::string>(spec, "model", "full", "spec"));
  const bool optimize = opt<bool>(spec, "optimize", true, "spec");
  const double delta = opt<double>(spec, "delta_mhz", -140.0, "spec");
  const double tphi_factor = opt<double>(spec, "tphi_factor", 10.0, "spec");

  Warnings warnings;
  std::vector<int> ns;
  std::vector<double> fs;
  json entries = json::array();
  for (int n = n_min; n <= n_max; ++n) {
    GhzPlan plan;
    for (int q = 1; q <= n; ++q) plan.qubits.push_back(q);
    plan.delta_mhz = delta;
    if (optimize) {
      StageTimer t(em, "optimize_n" + std::to_string(n) + "_ms");
      plan = optimize_ghz(plan, dev, model, EvolveMode::unitary, nullptr).plan;
    }
    NoiseModel noise = NoiseModel::from_device(dev, plan.qubits, tphi_factor);
    GhzResult res = [&] {
      StageTimer t(em, "lindblad_n" + std::to_string(n) + "_ms");
      return run_ghz(plan, dev, model, EvolveMode::lindblad, &noise);
    }();
    warnings.insert(warnings.end(), res.warnings.begin(), res.warnings.end());
    ns.push_back(n);
    fs.push_back(res.fidelity);
    entries.push_back({{"n", n},
                       {"fidelity", res.fidelity},
                       {"t_int_ns", res.t_int_ns},
                       {"plan", ghz_plan_json(plan)}});
  }
  ScalingFit fit = fit_fidelity_scaling(ns, fs);

  std::ostringstream csv;
  csv << "n,fidelity\n";
  for (std::size_t i = 0; i < ns.size(); ++i)
    csv << ns[i] << ',' << csv_num(fs[i]) << '\n';
  em.write_text("scaling.csv", csv.str());

  json out;
  out["model"] = spec.value("model", "full");
  out["entries"] = std::move(entries);
  out["fit"] = {{"rate_n", fit.rate_n},
                {"intercept_n", fit.intercept_n},
                {"r2_n", fit.r2_n},
                {"rate_n2", fit.rate_n2},
                {"intercept_n2", fit.intercept_n2},
                {"r2_n2", fit.r2_n2},
                {"linear_preferred", fit.linear_preferred}};
  out["warnings"] = warnings;
  em.write_json("scaling_result.json", out);
  return warnings;
}

Warnings run_bench_kind(const json& spec, Emitter& em) {
  const int n_min = opt<int>(spec, "n_min", 4, "spec");
  const int n_max = opt<int>(spec, "n_max", 7, "spec");
  if (n_min < 1 || n_max < n_min || n_max > 7)
    throw ConfigError("bench: n range must lie in 1..7");

  json entries = json::array();
  std::vector<double> times;
  for (int n = n_min; n <= n_max; ++n) {
    const auto settings = full_setting_family(n);
    PureState psi = ghz_ideal(n, GhzBasis::computational);
    std::vector<RVec> probs;
    probs.reserve(settings.size());
    for (const auto& s : settings) probs.push_back(measurement_probs(psi, s));

    NormalSystem sys = assemble_normal_system(n, settings);
    Vec rhs = assemble_rhs(n, settings, probs);

    SolveStats st;
    solve_normal(sys, rhs, SolveMethod::automatic, &st);
    double best = st.solve_ms;
    int reps = best < 50.0 ? std::min(
                                 400, static_cast<int>(200.0 /
                                                       std::max(best, 1e-3)))
                           : 3;
    for (int r = 0; r < reps; ++r) {
      solve_normal(sys, rhs, SolveMethod::automatic, &st);
      best = std::min(best, st.solve_ms);
    }
    times.push_back(best);
    entries.push_back({{"n", n},
                       {"dim", sys.dim},
                       {"nnz", sys.nnz()},
                       {"max_row_nnz", sys.max_row_nnz()},
                       {"method", st.method},
                       {"iterations", st.iterations},
                       {"solve_ms", best},
                       {"repetitions", reps + 1}});
  }
  json ratios = json::array();
  for (std::size_t i = 1; i < times.size(); ++i)
    ratios.push_back(times[i] / times[i - 1]);

  json out;
  out["entries"] = std::move(entries);
  out["growth_ratios"] = std::move(ratios);
  em.write_json("bench_result.json", out);
  return {};
}

}  // namespace

// ---------------------------------------------------------------------------
// Public surface
// ---------------------------------------------------------------------------

DeviceConfig load_device(const std::string& path) {
  return parse_device(load_json(path));
}

GhzPlan load_ghz_plan(const std::string& path) {
  return parse_ghz_plan(load_json(path));
}

EprPlan load_epr_plan(const std::string& path) {
  return parse_epr_plan(load_json(path));
}

TomoDataset load_dataset(const std::string& path) {
  return parse_dataset(load_json(path));
}

void save_dataset(const TomoDataset& ds, const std::string& path) {
  ds.validate();
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << dataset_json(ds).dump(2) << "\n";
}

std::string sha256_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "' for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw SolverError("sha256: context allocation failed");
  if (EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw SolverError("sha256: init failed");
  }
  char buf[65536];
  while (f.good()) {
    f.read(buf, sizeof buf);
    const std::streamsize got = f.gcount();
    if (got > 0 && EVP_DigestUpdate(ctx, buf, static_cast<size_t>(got)) != 1) {
      EVP_MD_CTX_free(ctx);
      throw SolverError("sha256: update failed");
    }
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw SolverError("sha256: final failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << int(md[i]);
  return os.str();
}

RunOutcome run_experiment_file(const std::string& spec_path,
                               const RunOverrides& overrides) {
  json spec = load_json(spec_path);
  const std::string kind = req<std::string>(spec, "kind", "spec");

  if (overrides.seed) spec["seed"] = *overrides.seed;
  if (overrides.shots) spec["shots"] = *overrides.shots;
  if (overrides.mode) spec["mode"] = *overrides.mode;
  if (overrides.model) spec["model"] = *overrides.model;
  if (overrides.fock_cutoff) spec["fock_cutoff"] = *overrides.fock_cutoff;
  if (overrides.out_dir) spec["out"] = *overrides.out_dir;

  Emitter em;
  em.out_dir = opt<std::string>(spec, "out", "out/" + kind, "spec");

  Warnings warnings;
  if (kind == "ghz")
    warnings = run_ghz_kind(spec, em);
  else if (kind == "epr")
    warnings = run_epr_kind(spec, em);
  else if (kind == "swap_spectroscopy")
    warnings = run_swap_kind(spec, em);
  else if (kind == "tomo_roundtrip")
    warnings = run_tomo_kind(spec, em);
  else if (kind == "parity")
    warnings = run_parity_kind(spec, em);
  else if (kind == "scaling_study")
    warnings = run_scaling_kind(spec, em);
  else if (kind == "bench_reconstruct")
    warnings = run_bench_kind(spec, em);
  else
    throw ConfigError("unknown experiment kind '" + kind + "'");

  write_manifest(em, spec);
  return {em.out_dir, em.files, warnings};
}

RunOutcome run_bench(int n_min, int n_max, const std::string& out_dir) {
  json spec;
  spec["kind"] = "bench_reconstruct";
  spec["n_min"] = n_min;
  spec["n_max"] = n_max;
  spec["out"] = out_dir;
  Emitter em;
  em.out_dir = out_dir;
  Warnings w = run_bench_kind(spec, em);
  write_manifest(em, spec);
  return {em.out_dir, em.files, w};
}

std::vector<std::string> validate_config_files(
    const std::string& device_path, const std::string& ghz_plan_path,
    const std::string& epr_plan_path, const std::string& dataset_path) {
  std::vector<std::string> lines;
  std::optional<DeviceConfig> dev;
  if (!device_path.empty()) {
    dev = load_device(device_path);
    std::ostringstream os;
    os << "device: " << dev->qubits.size() << " qubits, bus "
       << dev->bus_mhz << " MHz, fock cutoff " << dev->fock_cutoff << ", "
       << dev->xx.size() << " crosstalk pairs — OK";
    lines.push_back(os.str());
  }
  if (!ghz_plan_path.empty()) {
    GhzPlan plan = load_ghz_plan(ghz_plan_path);
    if (!dev) throw ConfigError("ghz plan validation needs --device");
    PulseSchedule sched = ghz_sequence(plan, *dev);
    std::ostringstream os;
    os << "ghz plan: " << plan.qubits.size() << " qubits, window "
       << sched.total_ns() << " ns — OK";
    lines.push_back(os.str());
  }
  if (!epr_plan_path.empty()) {
    EprPlan plan = load_epr_plan(epr_plan_path);
    if (!dev) throw ConfigError("epr plan validation needs --device");
    Warnings w;
    PulseSchedule sched = epr_sequence(plan, *dev, &w);
    std::ostringstream os;
    os << "epr plan: " << plan.pairs.size() << " pairs, "
       << sched.segments.size() << " segments, total " << sched.total_ns()
       << " ns — OK";
    lines.push_back(os.str());
    for (const auto& msg : w) lines.push_back("  warning: " + msg);
  }
  if (!dataset_path.empty()) {
    TomoDataset ds = load_dataset(dataset_path);
    std::ostringstream os;
    os << "dataset: n = " << ds.n << ", " << ds.records.size()
       << " records, "
       << (ds.shots > 0 ? std::to_string(ds.shots) + " shots" : "exact")
       << " — OK";
    lines.push_back(os.str());
  }
  if (lines.empty()) throw ConfigError("nothing to validate");
  return lines;
}

}  // namespace qbus
