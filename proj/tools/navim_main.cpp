#include <CLI11.hpp>

#include <cstdint>
#include <optional>
#include <string>

#include "navim/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "navim: GNSS/INS/vision fusion simulator with integrity monitoring.\n"
      "Exit codes: 0 ok, 2 config error, 3 observability failure, 4 continuity alert."};
  app.require_subcommand(1);

  std::string config_path, dump_path, out_dir, dir_a, dir_b;
  std::uint64_t seed = 0;
  bool seed_set = false, out_set = false, no_fde = false, plots = false;
  int montecarlo = 1;

  CLI::App* run = app.add_subcommand("run", "generate a scenario and run the pipeline");
  run->add_option("--config", config_path, "run configuration file")->required();
  run->add_option("--seed", seed, "override the scenario seed")->each([&](const std::string&) {
    seed_set = true;
  });
  run->add_option("--out", out_dir, "output directory")->each([&](const std::string&) {
    out_set = true;
  });
  run->add_flag("--no-fde", no_fde, "disable fault detection and exclusion");
  run->add_flag("--plots", plots, "emit SVG plots of HPE vs PEB per mode");
  run->add_option("--montecarlo", montecarlo, "fan out N independent seeded runs");

  CLI::App* replay = app.add_subcommand("replay", "re-run the pipeline from a scenario dump");
  replay->add_option("--dump", dump_path, "scenario dump (scenario.jsonl)")->required();
  replay->add_option("--config", config_path, "run configuration file")->required();
  replay->add_option("--out", out_dir, "output directory")->each([&](const std::string&) {
    out_set = true;
  });
  replay->add_flag("--no-fde", no_fde, "disable fault detection and exclusion");

  CLI::App* compare = app.add_subcommand("compare", "diff two run output directories");
  compare->add_option("dir_a", dir_a, "first run directory")->required();
  compare->add_option("dir_b", dir_b, "second run directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    return navim::run_command(config_path,
                              seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt,
                              out_set ? std::optional<std::string>(out_dir) : std::nullopt,
                              no_fde, montecarlo, plots);
  }
  if (replay->parsed()) {
    return navim::replay_command(dump_path, config_path,
                                 out_set ? std::optional<std::string>(out_dir) : std::nullopt,
                                 no_fde);
  }
  return navim::compare_command(dir_a, dir_b);
}
