// habi: command-line driver for the habitization pipeline.
//
//   habi <gen-data|train-planner|habitize|eval|bench|report|demo|all> [options]
//
// Exit status: 0 on success, 1 on usage errors (bad flags, bad config, missing
// prerequisite artifacts), 2 on runtime failures.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "habi/errors.hpp"
#include "habi/pipeline/config.hpp"
#include "habi/pipeline/stages.hpp"

namespace {

using habi::pipeline::RunConfig;
namespace fs = std::filesystem;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "runs";
  std::optional<int> threads;
  std::vector<std::string> overrides;
  bool print_config = false;
};

RunConfig build_config(const Options& o, const RunConfig& base) {
  RunConfig c = o.config_path.empty() ? base : habi::pipeline::load_config(o.config_path, base);
  if (o.seed) c.run.seed = *o.seed;
  if (o.threads) c.run.threads = *o.threads;
  for (const auto& s : o.overrides) habi::pipeline::apply_override(c, s);
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Habitization pipeline: teacher planner, habitual policy, evaluation and benchmarks"};
  app.require_subcommand(1, 1);
  Options o;
  app.add_option("--config", o.config_path, "Config file (key = value with [sections])")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Run seed; every random stream derives from it");
  app.add_option("--out", o.out, "Output root holding one directory per stage")
      ->capture_default_str();
  app.add_option("--threads", o.threads, "Worker threads for data generation and evaluation");
  app.add_option("--set", o.overrides, "Override one key, e.g. --set habi.steps=2000");
  app.add_flag("--print-config", o.print_config, "Print the effective config and exit");

  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"gen-data", "Roll out the behavior policy and store the offline dataset"},
      {"train-planner", "Train the diffusion teacher planner and its value net"},
      {"habitize", "Build the teacher dataset, train habitual policies and distill baselines"},
      {"eval", "Score all policies on shared episode seeds"},
      {"bench", "Measure single-stream decision rates"},
      {"report", "Assemble report.csv and report.txt from the latest eval and bench"},
      {"all", "Run every stage in order with the configured sizes"},
      {"demo", "Run every stage at mini scale"},
  };
  for (const auto& c : commands) app.add_subcommand(c.name, c.help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    using namespace habi::pipeline;
    const RunConfig config = build_config(o, cmd == "demo" ? mini_config() : RunConfig{});
    if (o.print_config) {
      std::cout << to_text(config);
      return 0;
    }
    const fs::path out = o.out;
    if (cmd == "gen-data") {
      run_gen_data(config, out, std::cout);
    } else if (cmd == "train-planner") {
      run_train_planner(config, out, std::cout);
    } else if (cmd == "habitize") {
      run_habitize(config, out, std::cout);
    } else if (cmd == "eval") {
      run_eval(config, out, std::cout);
    } else if (cmd == "bench") {
      run_bench(config, out, std::cout);
    } else if (cmd == "report") {
      run_report(config, out, std::cout);
    } else {
      run_all(config, out, std::cout);
    }
    return 0;
  } catch (const habi::pipeline::MissingArtifact& e) {
    std::cerr << "habi " << cmd << ": missing prerequisite: " << e.path().string() << "\n";
    return 1;
  } catch (const habi::ConfigError& e) {
    std::cerr << "habi " << cmd << ": config error: " << e.what() << "\n";
    return 1;
  } catch (const habi::UsageError& e) {
    std::cerr << "habi " << cmd << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "habi " << cmd << ": failed: " << e.what() << "\n";
    return 2;
  }
}
