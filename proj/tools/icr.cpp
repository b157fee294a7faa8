#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "icr/icr.hpp"

namespace fs = std::filesystem;
using namespace icr;

namespace {

constexpr const char* kRunDirEnv = "ICR_RUN_DIR";
constexpr double kGradTolerance = 1e-4;

struct Flags {
  std::string config;
  std::string run_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> iterations;
  std::optional<std::string> reward;
  std::optional<std::string> loss;
  std::optional<std::string> reference;
  bool force = false;
};

fs::path resolve_run_dir(const Flags& f) {
  if (!f.run_dir.empty()) return f.run_dir;
  if (const char* env = std::getenv(kRunDirEnv); env && *env) return env;
  return "icr-run";
}

// defaults < config file (--config, else <run-dir>/config.json) < flags
pipeline::RunConfig resolve_config(const Flags& f, const fs::path& run_dir) {
  pipeline::RunConfig cfg;
  if (!f.config.empty())
    cfg = pipeline::load_config(f.config);
  else if (fs::exists(run_dir / "config.json"))
    cfg = pipeline::load_config(run_dir / "config.json");
  if (f.seed) cfg.seed = *f.seed;
  if (f.iterations) cfg.iterations = *f.iterations;
  if (f.reward) cfg.reward.variant = reward::parse_variant(*f.reward);
  if (f.loss) cfg.train.loss = train::parse_loss(*f.loss);
  if (f.reference) cfg.reward.reference = reward::parse_reference(*f.reference);
  cfg.validate();
  return cfg;
}

int gradcheck(const Flags& f) {
  const std::uint64_t seed = f.seed.value_or(1);
  bool ok = true;
  std::cout << "mode,loss,max_rel_error,probes,nonzero\n";
  for (const auto& row : pipeline::run_gradcheck(seed)) {
    std::cout << row.mode << ',' << row.loss << ',' << row.result.max_rel_error << ',' << row.result.probes << ','
              << row.result.nonzero << '\n';
    ok = ok && row.result.max_rel_error < kGradTolerance;
  }
  std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << kGradTolerance << ")\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-lingual self-rewarding alignment on a synthetic multilingual world"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--run-dir", f.run_dir, std::string("Run directory (default: $") + kRunDirEnv + " or ./icr-run)");
  app.add_option("--seed", f.seed, "Master seed");
  app.add_option("--iterations", f.iterations, "Self-rewarding iterations T")->check(CLI::NonNegativeNumber);
  app.add_option("--reward", f.reward, "Reward variant")->check(CLI::IsMember({"rc", "rm", "rt"}));
  app.add_option("--loss", f.loss, "Preference loss")->check(CLI::IsMember({"dpo", "dpo_nll", "kto"}));
  app.add_option("--reference", f.reference, "Reward reference model")->check(CLI::IsMember({"initial", "previous"}));
  app.add_flag("--force", f.force, "Re-run a completed stage");

  const std::vector<std::pair<std::string, std::string>> stages{
      {"gen-world", "Generate prompts and the SFT corpus"},
      {"train-sft", "Train the initial model pi_I"},
      {"align-en", "Align pi_I on oracle-labelled English pairs, giving pi_0"},
      {"iterate", "Run the self-rewarding iterations from pi_0"},
      {"eval", "Win rates of every checkpoint against its baseline"},
      {"reward-acc", "Oracle agreement of Rc, Rm and Rt pairs on pi_0 pools"},
  };
  for (const auto& [name, help] : stages) app.add_subcommand(name, help);
  app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients of every loss");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : static_cast<int>(ErrorKind::invalid_argument);
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "gradcheck") return gradcheck(f);
    const fs::path run_dir = resolve_run_dir(f);
    pipeline::RunDir rd(run_dir, resolve_config(f, run_dir), f.force);
    rd.run(cmd);
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
