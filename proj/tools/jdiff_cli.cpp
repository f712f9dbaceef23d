#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "jdiff/config.hpp"
#include "jdiff/pipeline.hpp"

namespace {

jdiff::RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  return jdiff::RunConfig::from_file(path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint-diffusion engine: pack, train, sample, eval, inspect"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string resume, checkpoint, inspect_path;

  auto add_config_opts = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "run config file")->required();
    sub->add_option("--set", overrides, "override section.key=value (repeatable)");
  };

  CLI::App* pack = app.add_subcommand("pack", "build the paired dataset cache");
  add_config_opts(pack);
  CLI::App* train = app.add_subcommand("train", "train the denoiser");
  add_config_opts(train);
  train->add_option("--resume", resume, "checkpoint to resume from");
  CLI::App* sample = app.add_subcommand("sample", "generate samples per config [sample] mode");
  add_config_opts(sample);
  sample->add_option("--checkpoint", checkpoint, "checkpoint to sample from (default: latest)");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a sample dump");
  add_config_opts(eval);
  CLI::App* inspect = app.add_subcommand("inspect", "summarize a container or manifest file");
  inspect->add_option("path", inspect_path, "file to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*inspect) {
      std::cout << jdiff::inspect_file(inspect_path);
      return 0;
    }
    jdiff::RunConfig config = load_config(config_path, overrides);
    if (*pack) {
      std::string digest = jdiff::cmd_pack(config);
      std::cout << "dataset digest " << digest << "\n";
    } else if (*train) {
      jdiff::cmd_train(config, resume);
      std::cout << "training complete, checkpoints in " << jdiff::run_paths(config).checkpoint_dir() << "\n";
    } else if (*sample) {
      std::string dump = jdiff::cmd_sample(config, checkpoint);
      std::cout << "sample dump " << dump << "\n";
    } else if (*eval) {
      jdiff::MetricReport report = jdiff::cmd_eval(config);
      std::cout << report.to_text();
    }
    return 0;
  } catch (const jdiff::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 1;
  }
}
