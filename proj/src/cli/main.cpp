#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"suboptimality-gap inverse control and bridge experiments"};
  app.require_subcommand(1);

  std::string config_path, report_path, validate_path, output_dir;
  std::uint64_t seed_override = 0;

  CLI::App* run = app.add_subcommand("run", "execute an experiment config");
  run->add_option("config", config_path, "JSON config file")->required();
  run->add_option("--output-dir", output_dir, "override the config output_dir");
  CLI::Option* seed_opt =
      run->add_option("--seed-override", seed_override, "override the config seed");

  CLI::App* rep = app.add_subcommand("report", "summarize a finished run");
  rep->add_option("dir", report_path, "run output directory")->required();

  CLI::App* val = app.add_subcommand("validate", "schema-check a config");
  val->add_option("config", validate_path, "JSON config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      isoc::cli::run_options opt;
      opt.output_dir = output_dir;
      opt.has_seed_override = seed_opt->count() > 0;
      opt.seed_override = seed_override;
      const isoc::ordered_json cfg = isoc::cli::load_config(config_path);
      const std::string dir = isoc::cli::run_experiment(cfg, opt);
      std::printf("wrote %s/manifest.json\n", dir.c_str());
    } else if (rep->parsed()) {
      isoc::cli::report_dir(report_path);
    } else if (val->parsed()) {
      isoc::cli::load_config(validate_path);
      std::printf("ok\n");
    }
  } catch (const isoc::cli::validation_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return run->parsed() ? 3 : 2;
  }
  return 0;
}
