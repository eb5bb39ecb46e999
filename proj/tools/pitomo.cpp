// Command-line front end: simulate | characterize | tomo | map | pipeline.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pitomo/commands.hpp"

int main(int argc, char** argv)
{
  using namespace pitomo::cli;

  CLI::App app{"Time-resolved polarization tomography of a Pi-system qubit: simulate, fit, reconstruct"};
  app.require_subcommand(1, 1);

  Options opt;
  std::string config, out, in;
  std::uint64_t seed = 0;

  const char* verbs[][2] = {
      {"simulate", "Simulate characterization and tomography traces"},
      {"characterize", "Fit T_excited, T2* and tau_R from the characterization traces"},
      {"tomo", "Fit the Bloch vector of every initialization"},
      {"map", "Reconstruct the physical map and its fidelity to the identity"},
      {"pipeline", "Run all stages and print a summary table"},
  };
  for (const auto& v : verbs) {
    CLI::App* sub = app.add_subcommand(v[0], v[1]);
    sub->add_option("--config", config, "JSON run configuration (defaults built in)")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override sim.seed");
    sub->add_option("--threads", opt.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "Output directory (overrides output_dir)");
    sub->add_option("--in", in, "Input directory (default: the output directory)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (!config.empty())
    opt.config = config;
  if (sub->count("--seed"))
    opt.seed = seed;
  if (!out.empty())
    opt.out = out;
  if (!in.empty())
    opt.in = in;
  return run_command(sub->get_name(), opt, std::cout, std::cerr);
}
