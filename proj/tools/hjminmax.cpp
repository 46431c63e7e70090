// hjminmax <solve|front|study|check> <scenario.json> [--scheme S] [--t T] [--out DIR]
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hjminmax/scenario.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumeric = 3, kCertification = 4 };

int run(const std::string& command, const std::string& file, const std::string& scheme, std::optional<double> t,
        const std::filesystem::path& out) {
  using namespace hjminmax;
  const Scenario sc = load_scenario(file);
  CommandResult r;
  if (command == "solve") r = cmd_solve(sc, scheme, out);
  else if (command == "front") r = cmd_front(sc, t.value_or(sc.T), out);
  else if (command == "study") r = cmd_study(sc, out);
  else r = cmd_check(sc, out);
  for (const auto& f : r.files) std::printf("%s\n", f.string().c_str());
  if (r.exit_code != 0) std::fprintf(stderr, "hjminmax: %s: checks or targets not met\n", command.c_str());
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterated minmax and viscosity solutions of 1D Hamilton-Jacobi equations"};
  app.require_subcommand(1, 1);
  std::string file, scheme = "minmax", out = ".";
  std::optional<double> t;
  auto add = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("scenario", file, "Scenario JSON file")->required();
    sub->add_option("--out", out, "Output directory");
    return sub;
  };
  add("solve", "Solve on the scenario grid and write a field CSV and manifest")
      ->add_option("--scheme", scheme, "minmax, iterated:<n>, min or fd");
  add("front", "Write the wavefront and the minmax section at time t")->add_option("--t", t, "Time (defaults to the horizon)");
  add("study", "Convergence of iterated minmax toward the finite-difference reference");
  add("check", "Lipschitz, stability, critical-value and semigroup checks");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, file, scheme, t, out);
  } catch (const hjminmax::ConfigError& e) {
    std::fprintf(stderr, "hjminmax: config error: %s\n", e.what());
    return kConfig;
  } catch (const hjminmax::ParseError& e) {
    std::fprintf(stderr, "hjminmax: config error: %s\n", e.what());
    return kConfig;
  } catch (const hjminmax::CertificationError& e) {
    std::fprintf(stderr, "hjminmax: certification failure: %s\n", e.what());
    return kCertification;
  } catch (const hjminmax::NumericError& e) {
    std::fprintf(stderr, "hjminmax: numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const hjminmax::EvalError& e) {
    std::fprintf(stderr, "hjminmax: numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "hjminmax: %s\n", e.what());
    return kConfig;
  }
}
