#include "qlbe/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <thread>

namespace {

using qlbe::cli::ScenarioConfig;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

ScenarioConfig load(const std::string& path, const Overrides& ov) {
  ScenarioConfig cfg = qlbe::cli::load_config(path);
  if (ov.seed) {
    cfg.seed = *ov.seed;
    std::erase_if(cfg.warnings, [](const std::string& w) { return w.starts_with("seed missing"); });
  }
  if (ov.out) {
    cfg.output = *ov.out;
  }
  return cfg;
}

int cmd_validate(const std::string& path, const Overrides& ov) {
  try {
    const ScenarioConfig cfg = load(path, ov);
    for (const std::string& w : qlbe::cli::physics_warnings(cfg)) {
      std::cout << "warning: " << w << '\n';
    }
    std::cout << "ok\n" << qlbe::cli::to_json(cfg).dump(2) << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cout << "error: " << e.what() << '\n';
    return qlbe::cli::exit_code(e);
  }
}

int cmd_run(const std::string& path, const Overrides& ov, int threads) {
  try {
    const ScenarioConfig cfg = load(path, ov);
    for (const std::string& w : qlbe::cli::physics_warnings(cfg)) {
      std::cerr << "warning: " << w << '\n';
    }
    const auto report = qlbe::cli::run(cfg, {threads});
    for (const auto& f : report.outputs) {
      std::cout << (cfg.output / f.name).string() << '\n';
    }
    std::cout << (cfg.output / "manifest.json").string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return qlbe::cli::exit_code(e);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum linear Boltzmann scenario runner"};
  app.require_subcommand(1);

  int threads = std::max(1u, std::thread::hardware_concurrency());
  Overrides ov;
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", ov.seed, "master seed, overrides the config");
  app.add_option("--out", ov.out, "output directory, overrides the config");

  std::string config;
  auto* run = app.add_subcommand("run", "execute a scenario config");
  run->add_option("config", config, "JSON scenario config")->required();
  run->fallthrough();
  auto* validate = app.add_subcommand("validate", "check a config and echo its effective parameters");
  validate->add_option("config", config, "JSON scenario config")->required();
  validate->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return run->parsed() ? cmd_run(config, ov, threads) : cmd_validate(config, ov);
}
