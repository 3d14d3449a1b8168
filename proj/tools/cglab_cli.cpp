// cglab: stage runner for the multilingual safeguard training lab.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cglab/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string run_dir;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "JSON config file (defaults apply to missing keys)");
  cmd->add_option("-r,--run-dir", args.run_dir, "run directory (default: <output root>/<run_id>)");
  cmd->add_option("-s,--set", args.overrides, "override, e.g. grpo.steps=50")->take_all();
}

cglab::RunConfig resolve(const CommonArgs& args) {
  cglab::json doc = cglab::json::object();
  std::string path = args.config_path;
  if (path.empty() && !args.run_dir.empty() && std::filesystem::exists(std::filesystem::path(args.run_dir) / "config.json"))
    path = (std::filesystem::path(args.run_dir) / "config.json").string();
  if (!path.empty()) {
    try {
      doc = cglab::json::parse(cglab::read_file(path));
    } catch (const cglab::json::exception& e) {
      throw cglab::ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
  }
  for (const auto& o : args.overrides) cglab::apply_override(doc, o);
  return cglab::config_from_json(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cglab: SFT -> GRPO -> cross-lingual alignment on a synthetic safeguard task"};
  app.require_subcommand(1);
  CommonArgs args;
  std::string algo = "cao";
  std::string checkpoint;

  auto* config_cmd = app.add_subcommand("config", "print the resolved config (all defaults included)");
  add_common(config_cmd, args);
  std::vector<std::pair<std::string, CLI::App*>> stages;
  for (const char* name : {"gen-data", "sft", "grpo", "build-pairs", "align", "eval", "report"}) {
    auto* cmd = app.add_subcommand(name, std::string("run the ") + name + " stage");
    add_common(cmd, args);
    stages.emplace_back(name, cmd);
  }
  app.get_subcommand("align")->add_option("--algo", algo, "cao or dpo")->check(CLI::IsMember({"cao", "dpo"}));
  app.get_subcommand("eval")->add_option("--checkpoint", checkpoint, "sft, grpo, align_dpo or align_cao")->required();
  auto* pipeline_cmd = app.add_subcommand("pipeline", "run every stage and print the report");
  add_common(pipeline_cmd, args);

  CLI11_PARSE(app, argc, argv);

  try {
    const cglab::RunConfig config = resolve(args);
    if (config_cmd->parsed()) {
      std::cout << cglab::to_json(config).dump(2) << "\n";
      return 0;
    }
    cglab::Pipeline pipeline(config, args.run_dir);
    if (pipeline_cmd->parsed()) {
      pipeline.run_all(&std::cout);
      return 0;
    }
    for (const auto& [name, cmd] : stages) {
      if (!cmd->parsed()) continue;
      switch (cglab::stage_from_string(name)) {
        case cglab::Stage::kGenData: pipeline.gen_data(); break;
        case cglab::Stage::kSft: pipeline.sft(); break;
        case cglab::Stage::kGrpo: pipeline.grpo(); break;
        case cglab::Stage::kBuildPairs: pipeline.build_pairs(); break;
        case cglab::Stage::kAlign: pipeline.align(cglab::align_algo_from_string(algo)); break;
        case cglab::Stage::kEval: {
          const auto r = pipeline.eval(checkpoint);
          std::cout << cglab::to_json(r).dump(2) << "\n";
          break;
        }
        case cglab::Stage::kReport: pipeline.report(&std::cout); break;
      }
      std::cerr << name << ": done (" << pipeline.run_dir().string() << ")\n";
    }
  } catch (const cglab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const cglab::ArtifactError& e) {
    std::cerr << "artifact error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
