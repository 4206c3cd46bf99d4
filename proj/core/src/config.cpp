#include "dereverb/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dereverb/score_bridge.hpp"

namespace dereverb::config {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "inf" || t == "+inf") return INFINITY;
  if (t == "-inf") return -INFINITY;
  char* end = nullptr;
  const double d = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || std::isnan(d))
    throw ConfigError("config '" + key + "': expected a number, got '" + v + "'");
  return d;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  std::uint64_t out = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size())
    throw ConfigError("config '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("config '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');)
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

struct Entry {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define DOUBLE_ENTRY(KEY, FIELD)                                                              \
  Entry {                                                                                     \
    KEY, [](const RunConfig& c) { return fmt_double(c.FIELD); },                              \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_double(k, v); } \
  }
#define SIZE_ENTRY(KEY, FIELD)                                                                \
  Entry {                                                                                     \
    KEY, [](const RunConfig& c) { return std::to_string(c.FIELD); },                          \
        [](RunConfig& c, const std::string& k, const std::string& v) {                        \
          c.FIELD = static_cast<decltype(c.FIELD)>(parse_u64(k, v));                          \
        }                                                                                     \
  }
#define BOOL_ENTRY(KEY, FIELD)                                                                \
  Entry {                                                                                     \
    KEY, [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); },          \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_bool(k, v); } \
  }
#define STRING_ENTRY(KEY, FIELD)                                                              \
  Entry {                                                                                     \
    KEY, [](const RunConfig& c) { return c.FIELD; },                                          \
        [](RunConfig& c, const std::string&, const std::string& v) { c.FIELD = v; }           \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"mode", [](const RunConfig& c) { return to_string(c.mode); },
       [](RunConfig& c, const std::string&, const std::string& v) { c.mode = mode_from_string(trim(v)); }},
      STRING_ENTRY("input", input),
      STRING_ENTRY("output", output),
      STRING_ENTRY("rir_in", rir_in),
      STRING_ENTRY("rir_out", rir_out),
      STRING_ENTRY("params_out", params_out),
      STRING_ENTRY("trace_out", trace_out),
      STRING_ENTRY("manifest_out", manifest_out),
      STRING_ENTRY("snapshot_dir", snapshot_dir),
      SIZE_ENTRY("seed", seed),
      BOOL_ENTRY("output.rescale", rescale_output),
      BOOL_ENTRY("input.downmix", downmix),
      {"output.format",
       [](const RunConfig& c) {
         return std::string(c.output_format == wav::SampleFormat::pcm16 ? "pcm16" : "float32");
       },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto t = trim(v);
         if (t == "pcm16")
           c.output_format = wav::SampleFormat::pcm16;
         else if (t == "float32")
           c.output_format = wav::SampleFormat::float32;
         else
           throw ConfigError("config '" + k + "': expected float32 or pcm16");
       }},
      DOUBLE_ENTRY("schedule.T", sampler.schedule.t_max),
      DOUBLE_ENTRY("schedule.T_min", sampler.schedule.t_min),
      DOUBLE_ENTRY("schedule.rho", sampler.schedule.rho),
      SIZE_ENTRY("schedule.N", sampler.schedule.steps),
      DOUBLE_ENTRY("schedule.S_churn", sampler.schedule.s_churn),
      DOUBLE_ENTRY("schedule.zeta_tilde", sampler.schedule.zeta_tilde),
      DOUBLE_ENTRY("schedule.sigma_reg_min", sampler.schedule.reg_sigma_min),
      DOUBLE_ENTRY("schedule.sigma_reg_max", sampler.schedule.reg_sigma_max),
      BOOL_ENTRY("sampler.heun", sampler.heun),
      BOOL_ENTRY("sampler.warm_start", sampler.warm_start),
      BOOL_ENTRY("sampler.rescale_informed", sampler.rescale_informed),
      DOUBLE_ENTRY("stft.window_ms", sampler.stft.window_ms),
      DOUBLE_ENTRY("stft.hop_ms", sampler.stft.hop_ms),
      SIZE_ENTRY("stft.fft_size", sampler.stft.fft_size),
      DOUBLE_ENTRY("stft.sample_rate", sampler.stft.sample_rate),
      SIZE_ENTRY("operator.n_frames", op.n_frames),
      {"operator.bands",
       [](const RunConfig& c) {
         std::vector<std::string> items;
         for (double b : c.op.bands.centers_hz) items.push_back(fmt_double(b));
         return join(items);
       },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.op.bands.centers_hz.clear();
         for (const auto& item : split_list(v)) c.op.bands.centers_hz.push_back(parse_double(k, item));
       }},
      {"operator.engine",
       [](const RunConfig& c) {
         return std::string(c.op.engine == reverb::Engine::subband ? "subband" : "time_domain");
       },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto t = trim(v);
         if (t == "subband")
           c.op.engine = reverb::Engine::subband;
         else if (t == "time_domain")
           c.op.engine = reverb::Engine::time_domain;
         else
           throw ConfigError("config '" + k + "': expected subband or time_domain");
       }},
      SIZE_ENTRY("operator.min_phase_oversample", op.min_phase_oversample),
      DOUBLE_ENTRY("operator.w_db_min", op.bounds.weight_db_min),
      DOUBLE_ENTRY("operator.w_db_max", op.bounds.weight_db_max),
      DOUBLE_ENTRY("operator.alpha_min", op.bounds.decay_min),
      DOUBLE_ENTRY("operator.alpha_max", op.bounds.decay_max),
      SIZE_ENTRY("optimizer.iterations", optimizer.iterations),
      DOUBLE_ENTRY("optimizer.lr", optimizer.adam.lr),
      DOUBLE_ENTRY("optimizer.beta1", optimizer.adam.beta1),
      DOUBLE_ENTRY("optimizer.beta2", optimizer.adam.beta2),
      DOUBLE_ENTRY("optimizer.eps", optimizer.adam.eps),
      BOOL_ENTRY("optimizer.regularize", optimizer.regularize),
      SIZE_ENTRY("wpe.taps", sampler.wpe.taps),
      SIZE_ENTRY("wpe.delay", sampler.wpe.delay),
      SIZE_ENTRY("wpe.iterations", sampler.wpe.iterations),
      STRING_ENTRY("prior.type", prior.type),
      STRING_ENTRY("prior.file", prior.file),
      DOUBLE_ENTRY("prior.variance", prior.variance),
      DOUBLE_ENTRY("prior.data_rms", prior.data_rms),
      STRING_ENTRY("prior.endpoint", prior.endpoint),
      SIZE_ENTRY("sweep.pairs", sweep.dataset.pairs),
      DOUBLE_ENTRY("sweep.length_s", sweep.length_s),
      DOUBLE_ENTRY("sweep.tau_min_s", sweep.dataset.tau_min_s),
      DOUBLE_ENTRY("sweep.tau_max_s", sweep.dataset.tau_max_s),
      DOUBLE_ENTRY("sweep.rir_length_s", sweep.dataset.rir_length_s),
      DOUBLE_ENTRY("sweep.tail_gain", sweep.dataset.tail_gain),
      {"sweep.snr_grid",
       [](const RunConfig& c) {
         std::vector<std::string> items;
         for (double s : c.sweep.snr_grid_db) items.push_back(fmt_double(s));
         return join(items);
       },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.sweep.snr_grid_db.clear();
         for (const auto& item : split_list(v)) c.sweep.snr_grid_db.push_back(parse_double(k, item));
       }},
      {"sweep.methods",
       [](const RunConfig& c) {
         std::vector<std::string> items;
         for (auto m : c.sweep.methods) items.push_back(harness::to_string(m));
         return join(items);
       },
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.sweep.methods.clear();
         for (const auto& item : split_list(v)) c.sweep.methods.push_back(harness::method_from_string(item));
       }},
      SIZE_ENTRY("sweep.jobs", sweep.jobs),
      STRING_ENTRY("sweep.report_csv", sweep.report_csv),
      STRING_ENTRY("sweep.report_json", sweep.report_json),
      STRING_ENTRY("sweep.plot_dir", sweep.plot_dir),
  };
  return table;
}

#undef DOUBLE_ENTRY
#undef SIZE_ENTRY
#undef BOOL_ENTRY
#undef STRING_ENTRY

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> json_vector(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return {};
  return j.at(key).get<std::vector<double>>();
}

}  // namespace

std::string to_string(Mode m) {
  switch (m) {
    case Mode::blind: return "blind";
    case Mode::informed: return "informed";
    case Mode::wpe: return "wpe";
    case Mode::analyze_rir: return "analyze-rir";
    case Mode::sweep: return "sweep";
  }
  return "unknown";
}

Mode mode_from_string(const std::string& s) {
  for (Mode m : {Mode::blind, Mode::informed, Mode::wpe, Mode::analyze_rir, Mode::sweep})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown mode '" + s + "'");
}

const std::vector<std::string>& keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& e : entries())
    if (e.key == key) {
      e.set(*this, key, value);
      // One STFT setting drives the cost, the operator and WPE.
      op.stft = sampler.stft;
      sampler.wpe.stft = sampler.stft;
      return;
    }
  throw ConfigError("unknown configuration key '" + key + "'");
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> out;
  for (const auto& e : entries()) out[e.key] = e.get(*this);
  return out;
}

void RunConfig::validate() const {
  sampler.schedule.validate();
  sampler.stft.validate();
  sampler.wpe.validate();
  if (!(sampler.stft == op.stft)) throw ConfigError("config: operator and cost STFT settings differ");
  op.validate();
  if (optimizer.adam.lr <= 0.0 || optimizer.adam.beta1 < 0.0 || optimizer.adam.beta1 >= 1.0 ||
      optimizer.adam.beta2 < 0.0 || optimizer.adam.beta2 >= 1.0 || optimizer.adam.eps <= 0.0)
    throw ConfigError("config: invalid Adam settings");
  if (!(prior.data_rms > 0.0)) throw ConfigError("config: prior.data_rms must be positive");
  if (prior.type != "gaussian" && prior.type != "gmm" && prior.type != "bridge")
    throw ConfigError("config: prior.type must be gaussian, gmm or bridge");
  if (mode == Mode::sweep) {
    if (sweep.dataset.pairs == 0 || !(sweep.length_s > 0.0)) throw ConfigError("config: empty sweep dataset");
    if (sweep.snr_grid_db.empty() || sweep.methods.empty()) throw ConfigError("config: empty sweep grid");
  }
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string section;
  std::size_t line_no = 0;
  for (std::string line; std::getline(ss, line);) {
    ++line_no;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    out[section.empty() ? key : section + "." + key] = value;
  }
  return out;
}

std::map<std::string, std::string> load_kv_file(const std::string& path) { return parse_kv(read_text(path)); }

std::string manifest_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["version"] = 1;
  j["config"] = cfg.to_map();
  return j.dump(2);
}

RunConfig from_manifest(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  if (!j.contains("config") || !j["config"].is_object()) throw ConfigError("manifest: missing config object");
  RunConfig cfg;
  for (const auto& [k, v] : j["config"].items()) {
    if (!v.is_string()) throw ConfigError("manifest: value of '" + k + "' must be a string");
    cfg.set(k, v.get<std::string>());
  }
  return cfg;
}

RunConfig load_manifest(const std::string& path) { return from_manifest(read_text(path)); }

std::unique_ptr<prior::ScoreModel> prior_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    const std::string type = j.value("type", "gaussian");
    const double data_rms = j.value("data_rms", 0.05);
    if (type == "gaussian") {
      const double variance = j.value("variance", data_rms * data_rms);
      return std::make_unique<prior::GaussianPrior>(json_vector(j, "mean"), variance, data_rms);
    }
    if (type == "gmm") {
      std::vector<prior::GmmComponent> comps;
      for (const auto& c : j.at("components"))
        comps.push_back({c.value("weight", 1.0), json_vector(c, "mean"), c.at("variance").get<double>()});
      return std::make_unique<prior::GmmPrior>(std::move(comps), data_rms);
    }
    throw ConfigError("prior file: unknown type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("prior file: ") + e.what());
  }
}

std::unique_ptr<prior::ScoreModel> make_prior(const PriorSpec& spec) {
  if (spec.type == "bridge") {
    std::string endpoint = spec.endpoint;
    if (endpoint.empty())
      if (const char* env = std::getenv(kBridgeEnv)) endpoint = env;
    if (endpoint.empty())
      throw ConfigError(std::string("bridge prior needs prior.endpoint or ") + kBridgeEnv);
    return std::make_unique<bridge::BridgeClient>(bridge::Endpoint::parse(endpoint));
  }
  if (!spec.file.empty()) {
    auto model = prior_from_json(read_text(spec.file));
    return model;
  }
  if (spec.type == "gmm") throw ConfigError("gmm prior needs prior.file");
  const double variance = spec.variance > 0.0 ? spec.variance : spec.data_rms * spec.data_rms;
  return std::make_unique<prior::GaussianPrior>(std::vector<double>{}, variance, spec.data_rms);
}

}  // namespace dereverb::config
