#include "dereverb/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "dereverb/acoustics.hpp"
#include "dereverb/fft.hpp"
#include "dereverb/types.hpp"
#include "dereverb/wpe.hpp"

namespace dereverb::harness {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t run_seed, double snr_db, std::uint64_t index) {
  return mix_seed(mix_seed(run_seed, std::bit_cast<std::uint64_t>(snr_db)), index);
}

SyntheticRirSpec SyntheticRirSpec::uniform(double tau_s, double gain, double length_s, std::uint64_t seed) {
  SyntheticRirSpec s;
  s.tau_s.assign(s.band_centers_hz.size(), tau_s);
  s.gains.assign(s.band_centers_hz.size(), gain);
  s.length_s = length_s;
  s.seed = seed;
  return s;
}

void SyntheticRirSpec::validate() const {
  if (band_centers_hz.empty() || tau_s.size() != band_centers_hz.size() || gains.size() != band_centers_hz.size())
    throw ConfigError("synth_rir: per-band vectors must match the band list");
  for (double t : tau_s)
    if (!(t > 0.0)) throw ConfigError("synth_rir: tau must be positive");
  if (!(length_s > 0.0) || !(sample_rate > 0.0)) throw ConfigError("synth_rir: length and sample rate must be positive");
}

std::vector<double> synth_rir(const SyntheticRirSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(std::llround(spec.length_s * spec.sample_rate));
  if (n < 2) throw ConfigError("synth_rir: length too short");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;
  std::vector<double> h(n, 0.0), noise(n);
  for (std::size_t b = 0; b < spec.band_centers_hz.size(); ++b) {
    for (double& v : noise) v = normal(rng);
    auto band = acoustics::octave_filter(noise, spec.band_centers_hz[b], spec.sample_rate);
    const double scale = spec.gains[b] / std::max(dsp::rms(band), 1e-300);
    for (std::size_t t = 0; t < n; ++t)
      h[t] += scale * band[t] * std::exp(-static_cast<double>(t) / (spec.tau_s[b] * spec.sample_rate));
  }
  h[0] += spec.direct_gain;
  return h;
}

std::vector<double> perturb_rir(std::span<const double> h, double snr_db, std::uint64_t seed) {
  std::vector<double> out(h.begin(), h.end());
  if (std::isinf(snr_db) && snr_db > 0.0) return out;
  if (!std::isfinite(snr_db)) throw ConfigError("perturb_rir: SNR must be finite or +inf");
  double eh = 0.0;
  for (double v : h) eh += v * v;
  if (!(eh > 0.0)) throw ConfigError("perturb_rir: RIR is all zeros");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> n(h.size());
  double en = 0.0;
  for (double& v : n) {
    v = normal(rng);
    en += v * v;
  }
  const double scale = std::sqrt(eh / en * std::pow(10.0, -snr_db / 10.0));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * n[i];
  return out;
}

double si_sdr(std::span<const double> est, std::span<const double> ref) {
  if (est.size() != ref.size() || ref.empty()) throw ConfigError("si_sdr: length mismatch");
  double er = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    er += est[i] * ref[i];
    rr += ref[i] * ref[i];
  }
  if (!(rr > 0.0)) throw ConfigError("si_sdr: reference is all zeros");
  const double a = er / rr;
  double target = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double t = a * ref[i];
    target += t * t;
    noise += (est[i] - t) * (est[i] - t);
  }
  if (!(target > 0.0)) return -kSiSdrCap;
  if (noise <= target * std::pow(10.0, -kSiSdrCap / 10.0)) return kSiSdrCap;
  return std::clamp(10.0 * std::log10(target / noise), -kSiSdrCap, kSiSdrCap);
}

double log_spectral_distance(std::span<const double> est, std::span<const double> ref, const dsp::StftConfig& stft) {
  if (est.size() != ref.size() || ref.empty()) throw ConfigError("log_spectral_distance: length mismatch");
  const RealMatrix pe = dsp::stft(est, stft).values.cwiseAbs2();
  const RealMatrix pr = dsp::stft(ref, stft).values.cwiseAbs2();
  const double floor = std::max(1e-10 * pr.mean(), 1e-300);
  double acc = 0.0;
  for (Eigen::Index m = 0; m < pr.rows(); ++m) {
    double frame = 0.0;
    for (Eigen::Index k = 0; k < pr.cols(); ++k) {
      const double d = 10.0 * std::log10((pe(m, k) + floor) / (pr(m, k) + floor));
      frame += d * d;
    }
    acc += std::sqrt(frame / static_cast<double>(pr.cols()));
  }
  return acc / static_cast<double>(pr.rows());
}

std::vector<Pair> make_dataset(const DatasetSpec& spec, const prior::GaussianPrior& prior, std::uint64_t seed) {
  if (spec.pairs == 0 || spec.length == 0) throw ConfigError("make_dataset: empty dataset");
  if (!(spec.tau_min_s > 0.0) || spec.tau_max_s < spec.tau_min_s) throw ConfigError("make_dataset: bad tau range");
  std::vector<Pair> out;
  for (std::size_t i = 0; i < spec.pairs; ++i) {
    std::mt19937_64 rng(mix_seed(seed, i));
    Pair p;
    p.clean = prior.sample(spec.length, rng);
    SyntheticRirSpec rs = SyntheticRirSpec::uniform(spec.tau_min_s, spec.tail_gain, spec.rir_length_s, rng());
    std::uniform_real_distribution<double> tau(spec.tau_min_s, spec.tau_max_s);
    for (double& t : rs.tau_s) t = tau(rng);
    p.rir = synth_rir(rs);
    out.push_back(std::move(p));
  }
  return out;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::informed_dps: return "informed_dps";
    case Method::wpe: return "wpe";
    case Method::reverberant: return "reverberant";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::informed_dps, Method::wpe, Method::reverberant})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown sweep method '" + s + "'");
}

const ReportRow& RobustnessReport::at(double snr_db, Method m) const {
  for (const auto& r : rows)
    if (r.method == m && (r.snr_db == snr_db)) return r;
  throw ConfigError("report: no such cell");
}

bool RobustnessReport::monotone(Method m) const {
  const ReportRow* prev = nullptr;
  for (const auto& r : rows) {
    if (r.method != m) continue;
    if (prev && r.si_sdr_db < prev->si_sdr_db) return false;
    prev = &r;
  }
  return true;
}

namespace {

std::string snr_label(double snr) {
  if (std::isinf(snr)) return "inf";
  std::ostringstream os;
  os << snr;
  return os.str();
}

}  // namespace

std::string RobustnessReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  // SI-SDR and LSD stand in for perceptual metrics that are not computed here.
  os << "error_snr_db,method,si_sdr_db,log_spectral_distance_db,count\n";
  for (const auto& r : rows)
    os << snr_label(r.snr_db) << ',' << to_string(r.method) << ',' << r.si_sdr_db << ',' << r.lsd_db << ','
       << r.count << '\n';
  return os.str();
}

std::string RobustnessReport::to_json() const {
  nlohmann::json j;
  j["metrics"] = {{"si_sdr_db", "scale-invariant SDR"}, {"log_spectral_distance_db", "log-spectral distance"}};
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"error_snr_db", snr_label(r.snr_db)},
                         {"method", to_string(r.method)},
                         {"si_sdr_db", r.si_sdr_db},
                         {"log_spectral_distance_db", r.lsd_db},
                         {"count", r.count}});
  std::vector<std::string> methods;
  for (const auto& r : rows)
    if (std::find(methods.begin(), methods.end(), to_string(r.method)) == methods.end())
      methods.push_back(to_string(r.method));
  for (const auto& m : methods) j["monotone_si_sdr"][m] = monotone(method_from_string(m));
  return j.dump(2);
}

std::string RobustnessReport::plot_csv(const std::string& metric) const {
  if (metric != "si_sdr_db" && metric != "log_spectral_distance_db")
    throw ConfigError("plot_csv: unknown metric '" + metric + "'");
  std::vector<Method> methods;
  std::vector<double> grid;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::find(grid.begin(), grid.end(), r.snr_db) == grid.end()) grid.push_back(r.snr_db);
  }
  std::ostringstream os;
  os.precision(10);
  os << "error_snr_db";
  for (Method m : methods) os << ',' << to_string(m);
  os << '\n';
  for (double s : grid) {
    os << snr_label(s);
    for (Method m : methods) {
      const auto& r = at(s, m);
      os << ',' << (metric == "si_sdr_db" ? r.si_sdr_db : r.lsd_db);
    }
    os << '\n';
  }
  return os.str();
}

CellResult run_cell(const Pair& pair, double snr_db, Method method, const prior::ScoreModel& model,
                    const SweepConfig& cfg, std::uint64_t seed, std::size_t index) {
  const auto y = fft::convolve(pair.clean, pair.rir);
  CellResult out;
  switch (method) {
    case Method::informed_dps: {
      const auto h = perturb_rir(pair.rir, snr_db, derive_seed(seed, snr_db, index));
      out.estimate = sampler::run_informed(y, h, model, cfg.sampler, mix_seed(seed, index)).estimate;
      break;
    }
    case Method::wpe:
      out.estimate = wpe::dereverb(y, cfg.sampler.wpe);
      out.estimate.resize(pair.clean.size());
      break;
    case Method::reverberant:
      out.estimate.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(pair.clean.size()));
      break;
  }
  out.si_sdr_db = si_sdr(out.estimate, pair.clean);
  out.lsd_db = log_spectral_distance(out.estimate, pair.clean, cfg.sampler.stft);
  return out;
}

RobustnessReport robustness_sweep(std::span<const Pair> dataset, const prior::ScoreModel& model,
                                  const SweepConfig& cfg, std::uint64_t seed) {
  if (dataset.empty()) throw ConfigError("robustness_sweep: empty dataset");
  if (cfg.snr_grid_db.empty() || cfg.methods.empty()) throw ConfigError("robustness_sweep: empty grid or method list");
  struct Job {
    std::size_t cell, pair;
  };
  const std::size_t n_cells = cfg.snr_grid_db.size() * cfg.methods.size();
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < n_cells; ++c)
    for (std::size_t p = 0; p < dataset.size(); ++p) jobs.push_back({c, p});
  std::vector<CellResult> results(jobs.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
      try {
        const auto& job = jobs[j];
        const double snr = cfg.snr_grid_db[job.cell / cfg.methods.size()];
        const Method m = cfg.methods[job.cell % cfg.methods.size()];
        results[j] = run_cell(dataset[job.pair], snr, m, model, cfg, seed, job.pair);
        results[j].estimate.clear();
        results[j].estimate.shrink_to_fit();
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(cfg.jobs, jobs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  // Aggregate in job order so the report does not depend on scheduling.
  RobustnessReport report;
  for (std::size_t c = 0; c < n_cells; ++c) {
    ReportRow row;
    row.snr_db = cfg.snr_grid_db[c / cfg.methods.size()];
    row.method = cfg.methods[c % cfg.methods.size()];
    for (std::size_t p = 0; p < dataset.size(); ++p) {
      const auto& r = results[c * dataset.size() + p];
      row.si_sdr_db += r.si_sdr_db;
      row.lsd_db += r.lsd_db;
    }
    row.count = dataset.size();
    row.si_sdr_db /= static_cast<double>(row.count);
    row.lsd_db /= static_cast<double>(row.count);
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace dereverb::harness
