#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qbus/common.hpp"
#include "qbus/device.hpp"
#include "qbus/protocols.hpp"
#include "qbus/tomography.hpp"

namespace qbus {

// JSON loaders.  Schema problems throw ConfigError with the offending key.
DeviceConfig load_device(const std::string& path);
GhzPlan load_ghz_plan(const std::string& path);
EprPlan load_epr_plan(const std::string& path);
TomoDataset load_dataset(const std::string& path);
void save_dataset(const TomoDataset& ds, const std::string& path);

std::string sha256_file(const std::string& path);

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<long long> shots;
  std::optional<std::string> out_dir;
  std::optional<std::string> mode;   // unitary | lindblad
  std::optional<std::string> model;  // full | effective
  std::optional<int> fock_cutoff;
};

struct RunOutcome {
  std::string out_dir;
  std::vector<std::string> files;  // relative to out_dir, manifest last
  Warnings warnings;
};

// Run one experiment described by a JSON spec file ("kind": ghz, epr,
// swap_spectroscopy, tomo_roundtrip, parity, bench_reconstruct,
// scaling_study).  Writes the result files plus a manifest.json with
// sha-256 of every artifact; timing lives only in the manifest, so the
// artifacts themselves are byte-stable for a fixed seed.
RunOutcome run_experiment_file(const std::string& spec_path,
                               const RunOverrides& overrides = {});

// The solver benchmark, also reachable as kind = bench_reconstruct.
RunOutcome run_bench(int n_min, int n_max, const std::string& out_dir);

// Load + validate config files; returns human-readable summary lines.
std::vector<std::string> validate_config_files(
    const std::string& device_path, const std::string& ghz_plan_path,
    const std::string& epr_plan_path, const std::string& dataset_path);

}  // namespace qbus
