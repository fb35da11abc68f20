// pairwfs-run: runs one scenario from a JSON config file.
//
//   pairwfs-run run <config> [--seed S] [--out DIR] [--jobs N]
//   pairwfs-run --list-scenarios
//
// The output directory is --out, else the config's output_dir, else
// $PAIRWFS_OUT, else ./runs. Failures print one JSON line on stderr.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <thread>

#include "pairwfs/experiments.hpp"

namespace {

int fail(const std::string& code, const std::string& message) {
  std::cerr << pairwfs::json{{"error", code}, {"message", message}}.dump() << std::endl;
  return 2;
}

void list_scenarios() {
  for (const auto& [id, name] : pairwfs::scenario_names()) {
    std::cout << name << '\n';
    for (const auto& p : pairwfs::scenario_schema(id))
      std::cout << "  " << p.name << " = " << p.fallback.dump() << " [" << p.unit << "]  " << p.help << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scenario runner for pump-shaped two-photon scattering simulations"};
  bool list = false;
  app.add_flag("--list-scenarios", list, "print scenario ids with their parameters and defaults");

  auto* run = app.add_subcommand("run", "run the scenario described by a config file");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = int(std::max(1u, std::thread::hardware_concurrency()));
  run->add_option("config", config_path, "JSON config file")->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "override master_seed");
  run->add_option("--out", out, "output directory");
  run->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  run->add_flag("--list-scenarios", list, "print scenario ids with their parameters and defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  if (list) {
    list_scenarios();
    return 0;
  }
  if (!*run || config_path.empty()) return fail("usage", "expected: run <config> [--seed S] [--out DIR] [--jobs N]");

  try {
    pairwfs::ScenarioConfig cfg = pairwfs::validate_config(pairwfs::read_text(config_path));
    if (seed) cfg.master_seed = *seed;
    if (!out.empty()) {
      cfg.output_dir = out;
    } else if (cfg.output_dir.empty()) {
      const char* env = std::getenv("PAIRWFS_OUT");
      cfg.output_dir = env && *env ? env : "runs";
    }
    const auto m = pairwfs::run_scenario(cfg, {jobs});
    std::cout << (m.run_dir / "manifest.json").string() << '\n';
    std::cout << m.summary.dump() << '\n';
    return 0;
  } catch (const pairwfs::Error& e) {
    return fail(pairwfs::to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
}
