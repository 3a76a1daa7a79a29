// Command-line front end: one subcommand per pipeline stage plus `pipeline`
// to run everything. Flags override config file keys, which override
// built-in defaults. Exit codes: 0 ok, 2 config error, 3 stage failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vcsoup/pipeline.hpp"

namespace {

struct CliOverrides {
  std::optional<std::string> config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<double> tau;
  std::optional<double> grid_step;
  std::optional<double> beta;
  bool dedupe = false;
};

vcsoup::PipelineConfig resolve_config(const CliOverrides& cli) {
  vcsoup::PipelineConfig cfg = cli.config_path
                                   ? vcsoup::load_config(*cli.config_path)
                                   : vcsoup::default_config();
  if (cli.seed) cfg.seed = *cli.seed;
  if (cli.out_dir) cfg.out_dir = *cli.out_dir;
  if (cli.tau) {
    for (vcsoup::ValueSpec& v : cfg.values) v.tau = *cli.tau;
  }
  if (cli.grid_step) cfg.grid_step = *cli.grid_step;
  if (cli.beta) cfg.dpo.beta = *cli.beta;
  if (cli.dedupe) cfg.pareto_dedupe = true;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"value-consistency filtering, DPO soup merging and Pareto "
               "selection over a synthetic preference benchmark"};
  app.require_subcommand(1);

  CliOverrides cli;
  std::string run_stage_name;

  auto add_shared = [&](CLI::App* cmd) {
    cmd->add_option("--config", cli.config_path, "config JSON path");
    cmd->add_option("--seed", cli.seed, "root seed for all stage substreams");
    cmd->add_option("--out", cli.out_dir, "artifact output directory");
  };

  const auto stage_help = [](std::string_view stage) -> std::string {
    if (stage == "gen-data") return "generate or ingest the universe and pairs";
    if (stage == "train-reward") return "fit one Bradley-Terry scorer per value";
    if (stage == "score") return "compute per-pair consistency scores";
    if (stage == "filter") return "keep pairs at or above the tau threshold";
    if (stage == "train-dpo") return "train one value vector per filtered set";
    if (stage == "merge") return "score convex merges on the validation split";
    if (stage == "pareto") return "extract the frontier and test-set report";
    if (stage == "verify") return "conflict, merging-gap and geometry reports";
    return "";
  };

  for (std::string_view stage : vcsoup::kStageNames) {
    CLI::App* cmd = app.add_subcommand(std::string(stage), stage_help(stage));
    add_shared(cmd);
    if (stage == "filter") {
      cmd->add_option("--tau", cli.tau, "consistency threshold for all values");
    }
    if (stage == "merge") {
      cmd->add_option("--grid-step", cli.grid_step, "simplex grid step");
    }
    if (stage == "train-dpo") {
      cmd->add_option("--beta", cli.beta, "DPO temperature");
    }
    if (stage == "pareto") {
      cmd->add_flag("--dedupe", cli.dedupe,
                    "collapse exact-equal score vectors");
    }
    cmd->callback([&cli, &run_stage_name, stage]() {
      run_stage_name = std::string(stage);
    });
  }
  {
    CLI::App* cmd = app.add_subcommand("pipeline", "run every stage in order");
    add_shared(cmd);
    cmd->add_option("--tau", cli.tau, "consistency threshold for all values");
    cmd->add_option("--grid-step", cli.grid_step, "simplex grid step");
    cmd->add_option("--beta", cli.beta, "DPO temperature");
    cmd->callback([&run_stage_name]() { run_stage_name = "pipeline"; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // bad invocation is a config error
  }

  try {
    const vcsoup::PipelineConfig cfg = resolve_config(cli);
    if (run_stage_name == "pipeline") {
      vcsoup::run_pipeline(cfg);
    } else {
      vcsoup::run_stage(cfg, run_stage_name);
    }
  } catch (const vcsoup::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const vcsoup::StageError& e) {
    std::cerr << "stage " << e.stage << " failed: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
