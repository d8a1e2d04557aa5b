#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "qbus/io.hpp"
#include "qbus/threading.hpp"

namespace {

int dispatch(int argc, char** argv) {
  CLI::App app{"bus-resonator processor simulator and analysis toolkit"};
  app.require_subcommand(1);

  // --- run ---------------------------------------------------------------
  auto* run = app.add_subcommand("run", "run an experiment spec file");
  std::string spec_path;
  run->add_option("--spec", spec_path, "experiment spec (json)")->required();
  qbus::RunOverrides over;
  std::optional<std::string> out_dir, mode, model;
  std::optional<std::uint64_t> seed;
  std::optional<long long> shots;
  std::optional<int> fock;
  int threads = 0;
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--seed", seed, "override rng seed");
  run->add_option("--shots", shots, "override shot count (0 = exact)");
  run->add_option("--mode", mode, "unitary | lindblad");
  run->add_option("--model", model, "full | effective");
  run->add_option("--fock", fock, "resonator fock cutoff");
  run->add_option("--threads", threads, "worker threads (0 = hardware)");

  // --- bench -------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "time tomography solves");
  int n_min = 4, n_max = 7;
  std::string bench_out = "out/bench";
  bench->add_option("--nmin", n_min, "smallest qubit count");
  bench->add_option("--nmax", n_max, "largest qubit count");
  bench->add_option("--out", bench_out, "output directory");
  int bench_threads = 0;
  bench->add_option("--threads", bench_threads, "worker threads");

  // --- validate-config -----------------------------------------------------
  auto* val = app.add_subcommand("validate-config", "check config files");
  std::string dev_path, ghz_path, epr_path, ds_path;
  val->add_option("--device", dev_path, "device json");
  val->add_option("--ghz-plan", ghz_path, "ghz plan json");
  val->add_option("--epr-plan", epr_path, "epr plan json");
  val->add_option("--dataset", ds_path, "tomography dataset json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (run->parsed()) {
    if (threads > 0) qbus::set_thread_count(threads);
    over.seed = seed;
    over.shots = shots;
    over.out_dir = out_dir;
    over.mode = mode;
    over.model = model;
    over.fock_cutoff = fock;
    qbus::RunOutcome res = qbus::run_experiment_file(spec_path, over);
    std::cout << "wrote " << res.out_dir << "/\n";
    for (const auto& f : res.files) std::cout << "  " << f << "\n";
    for (const auto& w : res.warnings) std::cout << "warning: " << w << "\n";
    return 0;
  }
  if (bench->parsed()) {
    if (bench_threads > 0) qbus::set_thread_count(bench_threads);
    qbus::RunOutcome res = qbus::run_bench(n_min, n_max, bench_out);
    std::cout << "wrote " << res.out_dir << "/\n";
    for (const auto& f : res.files) std::cout << "  " << f << "\n";
    return 0;
  }
  // validate-config
  auto lines =
      qbus::validate_config_files(dev_path, ghz_path, epr_path, ds_path);
  for (const auto& l : lines) std::cout << l << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const qbus::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const qbus::PhysicsError& e) {
    std::cerr << "physics error: " << e.what() << "\n";
    return 3;
  } catch (const qbus::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
