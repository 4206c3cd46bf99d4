#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dereverb/harness.hpp"
#include "dereverb/prior.hpp"
#include "dereverb/sampler.hpp"
#include "dereverb/wav.hpp"

namespace dereverb::config {

enum class Mode { blind, informed, wpe, analyze_rir, sweep };
std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct PriorSpec {
  std::string type = "gaussian";  // gaussian | gmm | bridge
  std::string file;               // JSON description for gaussian/gmm (optional for gaussian)
  double variance = 0.0;          // gaussian without file: 0 means data_rms^2
  double data_rms = 0.05;
  std::string endpoint;           // bridge
};

struct SweepSpec {
  harness::DatasetSpec dataset;
  double length_s = 2.0;
  std::vector<double> snr_grid_db = {0.0, 10.0, 20.0, 30.0, harness::kInfiniteSnr};
  std::vector<harness::Method> methods = {harness::Method::informed_dps};
  std::size_t jobs = 1;
  std::string report_csv;
  std::string report_json;
  std::string plot_dir;
};

/// Fully resolved configuration of one invocation. Defaults are the
/// published hyperparameters.
struct RunConfig {
  Mode mode = Mode::blind;
  std::string input;
  std::string output;
  std::string rir_in;       // informed: known RIR
  std::string rir_out;      // blind: rendered RIR estimate
  std::string params_out;   // blind: psi JSON
  std::string trace_out;    // NDJSON trace
  std::string manifest_out;
  std::string snapshot_dir; // blind: per-step psi JSON
  std::uint64_t seed = 0;
  bool rescale_output = true;
  bool downmix = false;
  wav::SampleFormat output_format = wav::SampleFormat::float32;

  sampler::SamplerConfig sampler;
  reverb::OperatorConfig op;
  rir::OptimizerConfig optimizer;
  PriorSpec prior;
  SweepSpec sweep;

  /// Sets one key from its text form; throws ConfigError for unknown keys or
  /// unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Canonical text form of every key (doubles with round-trip precision).
  std::map<std::string, std::string> to_map() const;
  void validate() const;
};

/// All keys accepted by RunConfig::set, in a stable order.
const std::vector<std::string>& keys();

/// Parses `key = value` lines; `#` starts a comment, `[section]` headers
/// prefix following keys with `section.`, values may be double-quoted.
std::map<std::string, std::string> parse_kv(const std::string& text);
std::map<std::string, std::string> load_kv_file(const std::string& path);

/// JSON manifest {"version": 1, "config": {key: value-text}}.
std::string manifest_json(const RunConfig& cfg);
RunConfig from_manifest(const std::string& json_text);
RunConfig load_manifest(const std::string& path);

/// Environment variable naming the score bridge endpoint.
inline constexpr const char* kBridgeEnv = "DEREVERB_SCORE_ENDPOINT";

/// Builds the score model described by `spec`. For a bridge without an
/// endpoint the environment variable is consulted.
std::unique_ptr<prior::ScoreModel> make_prior(const PriorSpec& spec);
/// JSON prior description:
///   {"type": "gaussian", "variance": v, "mean": [...], "data_rms": r}
///   {"type": "gmm", "data_rms": r, "components": [{"weight": w, "variance": v, "mean": [...]}, ...]}
std::unique_ptr<prior::ScoreModel> prior_from_json(const std::string& text);

}  // namespace dereverb::config
