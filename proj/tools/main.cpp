#include <cstdio>
#include <functional>
#include <map>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "dereverb/config.hpp"
#include "dereverb/types.hpp"
#include "pipeline.hpp"

namespace {

using dereverb::config::RunConfig;
using Overrides = std::vector<std::pair<std::string, std::string>>;

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

using Handler = std::function<void(const std::string&, Overrides&)>;

struct Invocation {
  std::string config_file;
  std::string manifest;
  bool print_config = false;
  std::map<const CLI::Option*, Handler> handlers;
  Overrides overrides;  // filled after parsing, in command-line order
};

void on(Invocation& inv, CLI::Option* opt, Handler h) { inv.handlers.emplace(opt, std::move(h)); }

CLI::Option* value_option(CLI::App* app, const std::string& flags, const std::string& help) {
  return app->add_option(flags, help)->expected(1)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
}

// Option whose value is recorded as `key`.
void keyed(CLI::App* app, Invocation& inv, const std::string& flags, const std::string& key, const std::string& help) {
  on(inv, value_option(app, flags, help), [key](const std::string& v, Overrides& o) { o.emplace_back(key, v); });
}

// Flag that sets `key` to `value`.
void switch_flag(CLI::App* app, Invocation& inv, const std::string& flags, const std::string& key,
                 const std::string& value, const std::string& help) {
  on(inv, app->add_flag(flags, help), [key, value](const std::string&, Overrides& o) { o.emplace_back(key, value); });
}

void common(CLI::App* app, Invocation& inv) {
  app->add_option("--config", inv.config_file, "key = value configuration file")->check(CLI::ExistingFile);
  on(inv, value_option(app, "--set", "override any configuration key (repeatable)"),
     [](const std::string& item, Overrides& o) {
       const auto eq = item.find('=');
       if (eq == std::string::npos) throw dereverb::ConfigError("--set: expected KEY=VALUE, got '" + item + "'");
       o.emplace_back(item.substr(0, eq), item.substr(eq + 1));
     });
  app->add_flag("--print-config", inv.print_config, "print the resolved configuration and exit");
  keyed(app, inv, "--seed", "seed", "run seed");
  keyed(app, inv, "--manifest-out", "manifest_out", "where to write the resolved configuration");
  keyed(app, inv, "--format", "output.format", "output sample format: float32 or pcm16");
  switch_flag(app, inv, "--downmix", "input.downmix", "true", "average multichannel input to mono");
}

void sampling(CLI::App* app, Invocation& inv) {
  keyed(app, inv, "--trace-out", "trace_out", "per-step trace (NDJSON)");
  keyed(app, inv, "--prior", "prior.file", "prior description (JSON)");
  keyed(app, inv, "--prior-type", "prior.type", "gaussian, gmm or bridge");
  on(inv,
     value_option(app, "--bridge",
                  std::string("score server endpoint, tcp://host:port or stdio:<command> (also ") +
                      dereverb::config::kBridgeEnv + ")"),
     [](const std::string& v, Overrides& o) {
       o.emplace_back("prior.type", "bridge");
       o.emplace_back("prior.endpoint", v);
     });
  keyed(app, inv, "--data-rms", "prior.data_rms", "clean-speech RMS used by the rescale step");
  keyed(app, inv, "--steps", "schedule.N", "number of diffusion steps");
  keyed(app, inv, "--t-max", "schedule.T", "largest noise level");
  keyed(app, inv, "--t-min", "schedule.T_min", "smallest noise level");
  keyed(app, inv, "--rho", "schedule.rho", "schedule warping");
  keyed(app, inv, "--s-churn", "schedule.S_churn", "stochasticity");
  keyed(app, inv, "--zeta", "schedule.zeta_tilde", "guidance weight");
  switch_flag(app, inv, "--no-rescale", "output.rescale", "false",
              "keep the estimate's level instead of matching the input RMS");
  switch_flag(app, inv, "--no-warm-start", "sampler.warm_start", "false",
              "start from noise around zero instead of the WPE estimate");
}

// Replays the recorded options in the order they appeared.
Overrides collect(const CLI::App& sub, const Invocation& inv) {
  std::map<const CLI::Option*, std::size_t> seen;
  Overrides out;
  for (const CLI::Option* opt : sub.parse_order()) {
    const auto it = inv.handlers.find(opt);
    if (it == inv.handlers.end()) continue;
    const auto& results = opt->results();
    const std::size_t i = seen[opt]++;
    it->second(i < results.size() ? results[i] : std::string(), out);
  }
  return out;
}

RunConfig resolve(const std::string& mode, const Invocation& inv) {
  RunConfig cfg = inv.manifest.empty() ? RunConfig{} : dereverb::config::load_manifest(inv.manifest);
  if (inv.manifest.empty()) cfg.set("mode", mode);
  if (!inv.config_file.empty())
    for (const auto& [k, v] : dereverb::config::load_kv_file(inv.config_file)) cfg.set(k, v);
  bool new_output = false;
  for (const auto& [k, v] : inv.overrides) {
    cfg.set(k, v);
    new_output |= k == "output";
  }
  if (!inv.manifest.empty() && new_output) {
    // Derived paths of the original run would otherwise be overwritten.
    for (const char* k : {"params_out", "trace_out", "manifest_out"}) {
      bool explicit_key = false;
      for (const auto& o : inv.overrides) explicit_key |= o.first == k;
      if (!explicit_key) cfg.set(k, "");
    }
  }
  dereverb::cli::resolve_paths(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blind dereverberation and RIR estimation by diffusion posterior sampling"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "dereverb 0.1.0");
  Invocation inv;

  auto* blind = app.add_subcommand("blind", "joint dereverberation and RIR estimation");
  auto* informed = app.add_subcommand("informed", "dereverberation with a known RIR");
  auto* wpe = app.add_subcommand("wpe", "weighted prediction error baseline");
  auto* analyze = app.add_subcommand("analyze-rir", "octave-band T60 and C50 of an RIR (CSV)");
  auto* sweep = app.add_subcommand("sweep", "informed robustness to RIR errors on synthetic data");
  auto* rerun = app.add_subcommand("rerun", "repeat a run from its manifest");

  for (auto* sub : {blind, informed, wpe, analyze}) {
    keyed(sub, inv, "input", "input", "input WAV");
    keyed(sub, inv, "-o,--out", "output", "output file");
  }
  for (auto* sub : {blind, informed, wpe, analyze, sweep}) common(sub, inv);
  for (auto* sub : {blind, informed, sweep}) sampling(sub, inv);

  keyed(blind, inv, "--rir-out", "rir_out", "estimated RIR (WAV)");
  keyed(blind, inv, "--params-out", "params_out", "estimated RIR parameters (JSON)");
  keyed(blind, inv, "--snapshot-dir", "snapshot_dir", "write the RIR parameters after every step");
  keyed(blind, inv, "--frames", "operator.n_frames", "RIR length in STFT frames");
  keyed(blind, inv, "--iterations", "optimizer.iterations", "RIR optimizer iterations per step");

  keyed(informed, inv, "--rir", "rir_in", "known RIR (WAV)");

  for (auto* sub : {blind, informed, wpe}) {
    keyed(sub, inv, "--taps", "wpe.taps", "WPE filter length (frames)");
    keyed(sub, inv, "--delay", "wpe.delay", "WPE prediction delay (frames)");
  }

  keyed(sweep, inv, "--jobs", "sweep.jobs", "parallel workers");
  keyed(sweep, inv, "--pairs", "sweep.pairs", "synthetic pairs per cell");
  keyed(sweep, inv, "--length", "sweep.length_s", "utterance length (s)");
  keyed(sweep, inv, "--report-csv", "sweep.report_csv", "report CSV path");
  keyed(sweep, inv, "--report-json", "sweep.report_json", "report JSON path");
  keyed(sweep, inv, "--plot-data", "sweep.plot_dir", "directory for per-figure CSVs");

  rerun->add_option("manifest", inv.manifest, "manifest JSON")->required()->check(CLI::ExistingFile);
  keyed(rerun, inv, "-o,--out", "output", "output file");
  keyed(rerun, inv, "--rir-out", "rir_out", "estimated RIR (WAV)");
  keyed(rerun, inv, "--params-out", "params_out", "estimated RIR parameters (JSON)");
  keyed(rerun, inv, "--trace-out", "trace_out", "per-step trace (NDJSON)");
  keyed(rerun, inv, "--manifest-out", "manifest_out", "where to write the resolved configuration");
  keyed(rerun, inv, "--snapshot-dir", "snapshot_dir", "write the RIR parameters after every step");
  keyed(rerun, inv, "--report-csv", "sweep.report_csv", "report CSV path");
  keyed(rerun, inv, "--report-json", "sweep.report_json", "report JSON path");
  keyed(rerun, inv, "--plot-data", "sweep.plot_dir", "directory for per-figure CSVs");
  rerun->add_flag("--print-config", inv.print_config, "print the resolved configuration and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    inv.overrides = collect(*sub, inv);
    const RunConfig cfg = resolve(sub->get_name(), inv);
    if (inv.print_config) {
      for (const auto& [k, v] : cfg.to_map()) std::cout << k << " = " << v << "\n";
      return 0;
    }
    dereverb::cli::run(cfg, std::cout);
    return 0;
  } catch (const dereverb::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const dereverb::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
