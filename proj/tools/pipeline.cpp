#include "pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "dereverb/acoustics.hpp"
#include "dereverb/harness.hpp"
#include "dereverb/sampler.hpp"
#include "dereverb/wav.hpp"
#include "dereverb/wpe.hpp"

namespace dereverb::cli {
namespace {

namespace fs = std::filesystem;

void write_text(const std::string& path, const std::string& text) {
  if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << text;
  if (!f) throw ConfigError("write to '" + path + "' failed");
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / p.stem()).string() + suffix;
}

Waveform read_input(const std::string& path, const config::RunConfig& cfg) {
  if (path.empty()) throw ConfigError("no input file given");
  auto w = wav::read(path, {cfg.downmix});
  if (w.sample_rate != cfg.sampler.stft.sample_rate)
    throw ConfigError("'" + path + "' has sample rate " + std::to_string(static_cast<long>(w.sample_rate)) +
                      " Hz, configuration expects " +
                      std::to_string(static_cast<long>(cfg.sampler.stft.sample_rate)) + " Hz");
  return w;
}

void write_output(const config::RunConfig& cfg, std::vector<double> x, double reference_rms) {
  if (cfg.output.empty()) return;
  if (cfg.rescale_output && reference_rms > 0.0 && dsp::rms(x) > 0.0) x = dsp::rescale_rms(x, reference_rms);
  wav::write(cfg.output, {std::move(x), cfg.sampler.stft.sample_rate}, cfg.output_format);
}

void write_trace(const config::RunConfig& cfg, const std::vector<sampler::TraceRecord>& trace) {
  if (!cfg.trace_out.empty()) write_text(cfg.trace_out, sampler::trace_to_ndjson(trace));
}

template <class F>
auto with_trace_on_failure(const config::RunConfig& cfg, F&& f) {
  try {
    return f();
  } catch (const sampler::SamplerError& e) {
    write_trace(cfg, e.trace());
    throw;
  }
}

void run_blind(const config::RunConfig& cfg) {
  const auto y = read_input(cfg.input, cfg);
  const auto model = config::make_prior(cfg.prior);
  const sampler::BlindConfig bc{cfg.sampler, cfg.op, cfg.optimizer};
  sampler::ParamsObserver observer;
  if (!cfg.snapshot_dir.empty()) {
    fs::create_directories(cfg.snapshot_dir);
    observer = [&](std::size_t step, const reverb::RirParams& p) {
      char name[32];
      std::snprintf(name, sizeof name, "psi_%05zu.json", step);
      write_text((fs::path(cfg.snapshot_dir) / name).string(), reverb::to_json(p));
    };
  }
  const auto result = with_trace_on_failure(cfg, [&] { return sampler::run_blind(y.samples, *model, bc, cfg.seed, observer); });
  write_output(cfg, result.estimate, dsp::rms(y.samples));
  if (!cfg.rir_out.empty())
    wav::write(cfg.rir_out, {reverb::render_rir(result.params, cfg.op), cfg.sampler.stft.sample_rate});
  if (!cfg.params_out.empty()) write_text(cfg.params_out, reverb::to_json(result.params));
  write_trace(cfg, result.trace);
}

void run_informed(const config::RunConfig& cfg) {
  const auto y = read_input(cfg.input, cfg);
  if (cfg.rir_in.empty()) throw ConfigError("informed mode needs a known RIR (--rir)");
  const auto h = read_input(cfg.rir_in, cfg);
  if (h.size() >= y.size()) throw ConfigError("RIR '" + cfg.rir_in + "' is not shorter than the input");
  const auto model = config::make_prior(cfg.prior);
  const auto result = with_trace_on_failure(cfg, [&] { return sampler::run_informed(y.samples, h.samples, *model, cfg.sampler, cfg.seed); });
  write_output(cfg, result.estimate, dsp::rms(y.samples));
  write_trace(cfg, result.trace);
}

void run_wpe(const config::RunConfig& cfg) {
  const auto y = read_input(cfg.input, cfg);
  if (cfg.output.empty()) throw ConfigError("wpe mode needs an output path (--out)");
  wav::write(cfg.output, {wpe::dereverb(y.samples, cfg.sampler.wpe), y.sample_rate}, cfg.output_format);
}

void run_analyze(const config::RunConfig& cfg, std::ostream& out) {
  const auto h = read_input(cfg.input, cfg);
  const auto csv = acoustics::to_csv(acoustics::analyze(h.samples, h.sample_rate));
  if (cfg.output.empty())
    out << csv;
  else
    write_text(cfg.output, csv);
}

void run_sweep(const config::RunConfig& cfg, std::ostream& out) {
  const auto model = config::make_prior(cfg.prior);
  auto spec = cfg.sweep.dataset;
  spec.length = static_cast<std::size_t>(std::lround(cfg.sweep.length_s * cfg.sampler.stft.sample_rate));
  const double variance = cfg.prior.variance > 0.0 ? cfg.prior.variance : cfg.prior.data_rms * cfg.prior.data_rms;
  const prior::GaussianPrior source({}, variance, cfg.prior.data_rms);
  const auto dataset = harness::make_dataset(spec, source, cfg.seed);

  harness::SweepConfig sc;
  sc.snr_grid_db = cfg.sweep.snr_grid_db;
  sc.methods = cfg.sweep.methods;
  sc.sampler = cfg.sampler;
  sc.jobs = cfg.sweep.jobs;
  const auto report = harness::robustness_sweep(dataset, *model, sc, cfg.seed);

  if (!cfg.sweep.report_csv.empty()) write_text(cfg.sweep.report_csv, report.to_csv());
  if (!cfg.sweep.report_json.empty()) write_text(cfg.sweep.report_json, report.to_json());
  if (!cfg.sweep.plot_dir.empty()) {
    write_text((fs::path(cfg.sweep.plot_dir) / "fig1_si_sdr.csv").string(), report.plot_csv("si_sdr_db"));
    write_text((fs::path(cfg.sweep.plot_dir) / "fig1_lsd.csv").string(), report.plot_csv("log_spectral_distance_db"));
  }
  if (cfg.sweep.report_csv.empty()) out << report.to_csv();
}

}  // namespace

void resolve_paths(config::RunConfig& cfg) {
  if (cfg.output.empty()) return;
  if (cfg.mode == config::Mode::blind && cfg.params_out.empty()) cfg.params_out = with_suffix(cfg.output, ".psi.json");
  if ((cfg.mode == config::Mode::blind || cfg.mode == config::Mode::informed) && cfg.trace_out.empty())
    cfg.trace_out = with_suffix(cfg.output, ".trace.ndjson");
  if (cfg.mode != config::Mode::analyze_rir && cfg.manifest_out.empty())
    cfg.manifest_out = with_suffix(cfg.output, ".manifest.json");
}

void run(const config::RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  if (!cfg.manifest_out.empty()) write_text(cfg.manifest_out, config::manifest_json(cfg));
  switch (cfg.mode) {
    case config::Mode::blind: run_blind(cfg); break;
    case config::Mode::informed: run_informed(cfg); break;
    case config::Mode::wpe: run_wpe(cfg); break;
    case config::Mode::analyze_rir: run_analyze(cfg, out); break;
    case config::Mode::sweep: run_sweep(cfg, out); break;
  }
}

}  // namespace dereverb::cli
