#include "gdlab/lab/experiments.hpp"
#include "gdlab/lab/manifest.hpp"
#include "gdlab/lab/spec.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

namespace {

struct Options {
  std::string spec;
  std::string out;
  std::uint64_t seed = 1;
  int threads = 1;
};

void error_record(const std::string& kind, const std::string& field, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  if (!field.empty()) j["field"] = field;
  j["message"] = message;
  std::cerr << j.dump() << std::endl;
}

int run(const std::string& name, const Options& opt) {
  using namespace gdlab::lab;
  try {
    const ExperimentSpec spec = opt.spec.empty() ? ExperimentSpec{} : ExperimentSpec::load(opt.spec);
    const auto start = std::chrono::steady_clock::now();
    ExperimentOutput out = run_experiment(name, spec, opt.seed, opt.threads);
    RunContext ctx;
    ctx.master_seed = opt.seed;
    ctx.threads = opt.threads;
    ctx.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
    write_outputs(opt.out, out, spec, ctx);
    for (const auto& t : out.tables) {
      std::cout << (std::filesystem::path(opt.out) / t.file).string() << "\n";
    }
    return 0;
  } catch (const SpecError& e) {
    error_record("spec", e.field(), e.what());
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    error_record("io", "out", e.what());
    return 3;
  } catch (const std::exception& e) {
    error_record("runtime", "", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-descent lab: datasets, kernels and training experiments"};
  app.set_version_flag("--version", gdlab::lab::version());
  app.require_subcommand(1);

  const auto& names = gdlab::lab::experiment_names();
  std::vector<Options> options(names.size());
  std::vector<CLI::App*> subs;
  for (std::size_t k = 0; k < names.size(); ++k) {
    CLI::App* sub = app.add_subcommand(names[k], "run the " + names[k] + " experiment");
    sub->add_option("--spec", options[k].spec, "experiment spec file (key = value lines)")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", options[k].out, "output directory")->required();
    sub->add_option("--seed", options[k].seed, "master seed")->capture_default_str();
    sub->add_option("--threads", options[k].threads, "worker threads")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    error_record("usage", "", e.what());
    return 2;
  }
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (subs[k]->parsed()) return run(names[k], options[k]);
  }
  return 2;
}
