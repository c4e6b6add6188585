#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "navim/config.hpp"
#include "navim/integrity.hpp"
#include "navim/scenario.hpp"
#include "navim/solver.hpp"

namespace navim {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitObservability = 3,
  kExitContinuityAlert = 4,
};

struct ImConfig {
  DetectionConfig detection;
  BudgetConfig budget;
  double alert_limit_m = 6.0;
};

struct RunConfig {
  ScenarioConfig scenario;
  SolverConfig solver;
  InitialPriorConfig prior;
  ImConfig im;
  bool fde = true;
  bool plots = false;
  bool init_perturb = true;
  std::string out_dir = "out";
  std::string raw_text;  // config file bytes, hashed into the manifest
};

/// Parses the key-value config file into a full run configuration.
RunConfig load_run_config(const std::string& path);
RunConfig run_config_from(const Config& cfg);

struct RunResult {
  std::vector<PebReport> reports;
  std::vector<ImuState> estimates;  // newest state after each epoch
  std::vector<ImuState> truths;
  IntegrityBudget budget;
  bool continuity_alert = false;
  double avg_hpe = 0.0;
};

/// Core batch loop: feeds every epoch through the estimator and the
/// integrity monitor. The scenario must already contain its fault schedule.
RunResult run_pipeline(const Scenario& scenario, const RunConfig& cfg);

/// Writes epochs.csv, summary.txt, manifest.json, scenario.jsonl (and
/// optional SVG plots) into cfg.out_dir.
void write_outputs(const Scenario& scenario, const RunConfig& cfg, const RunResult& result,
                   const std::string& extra_manifest_note = "");

int run_command(const std::string& config_path, std::optional<std::uint64_t> seed_override,
                std::optional<std::string> out_override, bool no_fde, int montecarlo,
                bool plots);

int replay_command(const std::string& dump_path, const std::string& config_path,
                   std::optional<std::string> out_override, bool no_fde);

struct CompareResult {
  int epochs = 0;
  double max_hpe_delta = 0.0;          // max |hpe_b - hpe_a|
  double max_infault_hpe_delta = 0.0;  // max over fault-labelled epochs of hpe_b - hpe_a
  double mean_infault_hpe_a = 0.0;
  double mean_infault_hpe_b = 0.0;
  int infault_epochs = 0;
  bool identical = true;
};

CompareResult compare_runs(const std::string& dir_a, const std::string& dir_b);
int compare_command(const std::string& dir_a, const std::string& dir_b);

/// One row per epoch as written to epochs.csv, parsed back for compare.
struct EpochRow {
  double t = 0.0;
  double hpe = 0.0;
  bool fault_any = false;
  std::vector<double> peb_h;
};

std::vector<EpochRow> read_epoch_rows(const std::string& csv_path);

}  // namespace navim
