// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// non-zero if any selected criterion fails. Usage: acceptance [name...]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dereverb/acoustics.hpp"
#include "dereverb/dsp.hpp"
#include "dereverb/fft.hpp"
#include "dereverb/harness.hpp"
#include "dereverb/prior.hpp"
#include "dereverb/reverb_operator.hpp"
#include "dereverb/rir_optimizer.hpp"
#include "dereverb/sampler.hpp"
#include "dereverb/score_bridge.hpp"
#include "dereverb/wav.hpp"
#include "dereverb/wpe.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dereverb;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::string tier;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// ---------------------------------------------------------------- operator

double inner(const reverb::RirParams& p, std::span<const double> x, const reverb::OperatorConfig& cfg,
             std::span<const double> u) {
  return oracle::dot(reverb::apply(p, x, cfg), u);
}

Outcome operator_correctness() {
  constexpr double tol = 1e-4, eps = 1e-5;
  double worst = 0.0;
  int cases = 0;
  for (auto engine : {reverb::Engine::time_domain, reverb::Engine::subband}) {
    for (std::size_t frames : {4u, 8u}) {
      for (std::size_t length : {1024u, 4096u}) {
        reverb::OperatorConfig cfg;
        cfg.n_frames = frames;
        cfg.engine = engine;
        const std::uint64_t seed = 100 * frames + length;
        const auto p = fixture::random_params(cfg, seed);
        const auto x = oracle::randn(length, seed + 1);
        const auto u = oracle::randn(reverb::output_length(cfg, length), seed + 2);
        const auto rir = reverb::assemble_rir(p, cfg);
        const auto g = reverb::apply_vjp_full(p, rir, x, cfg, u);

        // adjoint identity <A x, u> = <x, A^T u>
        worst = std::max(worst, oracle::rel_diff(inner(p, x, cfg, u), oracle::dot(g.x, x)));

        const auto dx = oracle::randn(length, seed + 3);
        const auto fx = [&](std::span<const double> v) { return inner(p, v, cfg, u); };
        worst = std::max(worst, oracle::rel_diff(oracle::directional_fd(fx, x, dx, eps), oracle::dot(g.x, dx)));

        const auto along = [&](auto&& bump, std::span<const double> d, std::span<const double> grad) {
          auto pp = p, pm = p;
          bump(pp, d, eps);
          bump(pm, d, -eps);
          const double fd = (inner(pp, x, cfg, u) - inner(pm, x, cfg, u)) / (2.0 * eps);
          return oracle::rel_diff(fd, oracle::dot(grad, d));
        };
        const auto dw = oracle::randn(p.n_bands(), seed + 4);
        worst = std::max(worst, along([](reverb::RirParams& q, std::span<const double> d, double e) {
          for (std::size_t b = 0; b < d.size(); ++b) q.weights_db[b] += e * d[b];
        }, dw, g.params.weights_db));
        const auto da = oracle::randn(p.n_bands(), seed + 5);
        worst = std::max(worst, along([](reverb::RirParams& q, std::span<const double> d, double e) {
          for (std::size_t b = 0; b < d.size(); ++b) q.decays[b] += e * d[b];
        }, da, g.params.decays));
        const auto dp = oracle::randn(std::size_t(p.phases.size()), seed + 6);
        const std::vector<double> gp(g.params.phases.data(), g.params.phases.data() + g.params.phases.size());
        worst = std::max(worst, along([](reverb::RirParams& q, std::span<const double> d, double e) {
          for (std::size_t i = 0; i < d.size(); ++i) q.phases.data()[i] += e * d[i];
        }, dp, gp));
        ++cases;
      }
    }
  }
  return {worst < tol, fmt("%d instances (L<=4096, N_h<=8, both engines), worst relative error %.2e (tol %.0e)",
                           cases, worst, tol)};
}

// ---------------------------------------------------------------- projection

// Real sequence with the DFT magnitude of h and uniformly random phases.
std::vector<double> random_phase_counterpart(std::span<const double> h, std::mt19937_64& rng) {
  const std::size_t n = h.size();
  std::vector<std::complex<double>> spec(n / 2 + 1);
  fft::rfft(h, spec);
  std::uniform_real_distribution<double> ph(-std::numbers::pi, std::numbers::pi);
  for (std::size_t k = 1; 2 * k < n; ++k) spec[k] = std::polar(std::abs(spec[k]), ph(rng));
  spec[0] = std::abs(spec[0]);
  if (n % 2 == 0) spec[n / 2] = std::abs(spec[n / 2]) * (rng() & 1 ? 1.0 : -1.0);
  std::vector<double> out(n);
  fft::irfft(spec, out);
  for (auto& v : out) v /= double(n);
  return out;
}

std::vector<double> magnitude(std::span<const double> h) {
  std::vector<std::complex<double>> spec(h.size() / 2 + 1);
  fft::rfft(h, spec);
  std::vector<double> out(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) out[k] = std::abs(spec[k]);
  return out;
}

// Largest shortfall of the cumulative energy of `best` against `other`, as a
// fraction of the total.
double energy_excess(std::span<const double> best, std::span<const double> other) {
  double total = 0.0, eb = 0.0, eo = 0.0, worst = 0.0;
  for (double v : other) total += v * v;
  for (std::size_t n = 0; n < best.size(); ++n) {
    eb += best[n] * best[n];
    eo += other[n] * other[n];
    worst = std::max(worst, (eo - eb) / total);
  }
  return worst;
}

Outcome projection_suite() {
  // Seeded RIRs: unit direct path plus octave-band noise tails, T60 between
  // 70 and 210 ms, 250 ms long. Projected with the operator's oversampling.
  const std::size_t oversample = reverb::OperatorConfig{}.min_phase_oversample;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> tau(0.01, 0.03), gain(0.1, 0.5);
  double worst_mag = 0.0, worst_excess = 0.0, worst_input = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    harness::SyntheticRirSpec spec;
    for (std::size_t b = 0; b < spec.band_centers_hz.size(); ++b) {
      spec.tau_s.push_back(tau(rng));
      spec.gains.push_back(gain(rng));
    }
    spec.length_s = 0.25;
    spec.seed = rng();
    const auto h = harness::synth_rir(spec);
    const auto hm = dsp::minimum_phase(h, oversample);
    worst_mag = std::max(worst_mag, oracle::rel_err(magnitude(hm), magnitude(h)));
    for (int c = 0; c < 3; ++c) worst_excess = std::max(worst_excess, energy_excess(hm, random_phase_counterpart(h, rng)));
    worst_input = std::max(worst_input, energy_excess(hm, h));
  }
  double worst_h0 = 0.0, worst_consistency = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    reverb::OperatorConfig cfg;
    cfg.n_frames = 16;
    const auto rir = reverb::assemble_rir(fixture::random_params(cfg, seed), cfg);
    worst_h0 = std::max(worst_h0, std::abs(rir.rir[0] - 1.0));
    const auto s = dsp::stft(rir.rir, cfg.stft);
    const auto again = dsp::stft(dsp::istft(s, rir.rir.size()), cfg.stft);
    worst_consistency = std::max(worst_consistency, (again.values - s.values).norm() / s.values.norm());
  }
  const bool pass = worst_mag < 1e-6 && worst_excess <= 1e-12 && worst_h0 == 0.0 && worst_consistency < 1e-6;
  return {pass, fmt("100 RIRs: magnitude err %.1e (tol 1e-6), partial-energy shortfall vs 300 random-phase "
                    "counterparts %.1e (tol 1e-12; vs the inputs %.1e); 100 assembled: |h(0)-1| %.1e, "
                    "consistency %.1e (tol 1e-6)",
                    worst_mag, worst_excess, worst_input, worst_h0, worst_consistency)};
}

// ---------------------------------------------------------------- schedule

Outcome schedule_guidance() {
  bool endpoints = true;
  for (std::size_t n : {2u, 20u, 200u, 1000u}) {
    const auto s = sampler::karras_schedule(0.5, 1e-4, 10.0, n);
    endpoints = endpoints && s.front() == 0.5 && s.back() == 1e-4 && s.size() == n;
  }
  sampler::DiffusionSchedule def;
  const auto s = def.sigmas();
  endpoints = endpoints && s.front() == 0.5 && s.back() == 1e-4;

  double worst = 0.0;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lg(-6.0, 6.0);
  for (int i = 0; i < 200; ++i) {
    const std::size_t length = 1 + rng() % 100000;
    const double zt = std::pow(10.0, lg(rng) / 3.0);
    const auto g = oracle::randn(length, rng());
    std::vector<double> scaled(g);
    const double scale = std::pow(10.0, lg(rng));
    for (auto& v : scaled) v *= scale;
    const auto z = sampler::zeta(oracle::norm(scaled), length, zt);
    if (!z) return {false, "zeta skipped on a non-degenerate gradient"};
    for (auto& v : scaled) v *= *z;
    const double want = std::sqrt(double(length)) * zt;
    worst = std::max(worst, std::abs(oracle::norm(scaled) - want) / want);
  }
  const bool guard = !sampler::zeta(0.0, 100, 1.0).has_value();
  return {endpoints && worst < 1e-9 && guard,
          fmt("sigma_0=0.5 and sigma_{N-1}=1e-4 exactly: %s; post-zeta norm worst relative error %.1e (tol 1e-9)",
              endpoints ? "yes" : "no", worst)};
}

// ---------------------------------------------------------------- acoustics

Outcome acoustics_oracle() {
  constexpr double fs = 16000.0;
  double worst = 0.0;
  int n = 0;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> z;
  for (double tau : {0.05, 0.1, 0.2, 0.5}) {
    const double expect = 3.0 * std::log(10.0) * tau;
    const std::size_t len = std::size_t(std::max(1.0, 9.0 * tau) * fs);
    for (double fc : acoustics::octave_centers(fs)) {
      // Decaying tone at the band center: band-limited by construction.
      std::vector<double> h(len);
      const double phase = 2.0 * std::numbers::pi * double(rng() % 1000) / 1000.0;
      for (std::size_t t = 0; t < len; ++t)
        h[t] = std::exp(-double(t) / (tau * fs)) * std::sin(2.0 * std::numbers::pi * fc * double(t) / fs + phase);
      const auto est = acoustics::t60(h, fc, fs);
      worst = std::max(worst, est ? std::abs(*est / expect - 1.0) : 1.0);
      ++n;
    }
    std::vector<double> h(len);
    for (std::size_t t = 0; t < len; ++t) h[t] = z(rng) * std::exp(-double(t) / (tau * fs));
    const auto est = acoustics::t60(h, fs);
    worst = std::max(worst, est ? std::abs(*est / expect - 1.0) : 1.0);
    ++n;
  }

  // Equal-energy split around the 50 ms boundary after the peak.
  double c50_worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> h(8000, 0.0);
    const std::size_t boundary = 800;
    h[0] = 4.0;
    double early = 16.0, late = 0.0;
    for (std::size_t t = 1; t < h.size(); ++t) {
      h[t] = 0.01 * z(rng) * std::exp(-double(t) / 1600.0);
      (t < boundary ? early : late) += h[t] * h[t];
    }
    const double g = std::sqrt(early / late);
    for (std::size_t t = boundary; t < h.size(); ++t) h[t] *= g;
    if (std::abs(h[0]) < *std::max_element(h.begin() + 1, h.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }))
      continue;
    c50_worst = std::max(c50_worst, std::abs(acoustics::c50(h, fs).db));
  }
  return {worst <= 0.05 && c50_worst <= 0.01,
          fmt("t60 on %d decays, tau in {0.05,0.1,0.2,0.5} s: worst relative error %.2f%% (tol 5%%); "
              "c50 equal split: worst |C50| %.4f dB (tol 0.01)",
              n, 100.0 * worst, c50_worst)};
}

// ---------------------------------------------------------------- informed robustness

Outcome informed_robustness() {
  const prior::GaussianPrior model({}, 0.05 * 0.05, 0.05);
  harness::DatasetSpec spec;
  spec.pairs = 20;
  spec.length = 32000;
  const auto data = harness::make_dataset(spec, model, 11);
  harness::SweepConfig cfg;
  cfg.sampler.schedule.steps = 200;
  cfg.sampler.schedule.zeta_tilde = 300.0;
  cfg.sampler.warm_start = false;
  const auto report = harness::robustness_sweep(data, model, cfg, 12);
  std::string cells;
  for (double snr : cfg.snr_grid_db) {
    const auto& row = report.at(snr, harness::Method::informed_dps);
    cells += fmt(" %s:%.2f", std::isinf(snr) ? "inf" : fmt("%.0f", snr).c_str(), row.si_sdr_db);
  }
  const double gap = report.at(harness::kInfiniteSnr, harness::Method::informed_dps).si_sdr_db -
                     report.at(0.0, harness::Method::informed_dps).si_sdr_db;
  const bool monotone = report.monotone(harness::Method::informed_dps);
  return {monotone && gap >= 5.0,
          fmt("20 pairs x 2 s, N=200; mean SI-SDR dB by RIR-error SNR:%s; monotone %s; inf-0 gap %.2f dB (min 5)",
              cells.c_str(), monotone ? "yes" : "no", gap)};
}

// ---------------------------------------------------------------- blind

Outcome blind_inversion() {
  constexpr std::size_t trials = 20, length = 32000, components = 8;
  constexpr double component_std = 0.002;
  // Analytic prior: a mixture of narrow Gaussians around nonstationary
  // sources. A stationary white source leaves the decay unidentifiable.
  std::vector<prior::GmmComponent> comps;
  for (std::size_t k = 0; k < components; ++k)
    comps.push_back({1.0 / double(components), fixture::speech_like(length, 900 + k), component_std * component_std});
  const prior::GmmPrior model(comps, std::sqrt(0.05 * 0.05 + component_std * component_std));

  sampler::BlindConfig cfg;
  cfg.op.n_frames = 32;
  cfg.sampler.schedule.steps = 100;
  cfg.sampler.schedule.zeta_tilde = 200.0;

  const std::vector<double> bands = {125.0, 250.0, 500.0, 1000.0, 2000.0};
  std::vector<std::vector<double>> errors(bands.size());
  std::size_t improved = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::mt19937_64 rng(1000 + t);
    auto truth = reverb::RirParams::initial(cfg.op, rng());
    std::uniform_real_distribution<double> w(0.0, 20.0), a(0.5, 2.0);
    for (auto& v : truth.weights_db) v = w(rng);
    for (auto& v : truth.decays) v = a(rng);
    const auto x = model.sample(length, rng);
    const auto rir = reverb::assemble_rir(truth, cfg.op);
    const auto y = reverb::apply(rir, x, cfg.op);

    const auto res = sampler::run_blind(y, model, cfg, 7 + t);
    const std::vector<double> reverberant(y.begin(), y.begin() + std::ptrdiff_t(length));
    improved += harness::si_sdr(res.estimate, x) > harness::si_sdr(reverberant, x);
    const auto estimate_rir = reverb::render_rir(res.params, cfg.op);
    for (std::size_t b = 0; b < bands.size(); ++b) {
      const auto ref = acoustics::t60(rir.rir, bands[b], 16000.0);
      const auto est = acoustics::t60(estimate_rir, bands[b], 16000.0);
      errors[b].push_back(ref && est ? std::abs(*est / *ref - 1.0) : 1.0);
    }
  }
  double worst = 0.0;
  std::string per_band;
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const double m = median(errors[b]);
    worst = std::max(worst, m);
    per_band += fmt(" %.0f:%.1f%%", bands[b], 100.0 * m);
  }
  const double rate = double(improved) / double(trials);
  return {rate >= 0.8 && worst <= 0.2,
          fmt("%zu trials: SI-SDR improved on %zu (min 80%%); median T60 error per band:%s (max 20%%)", trials,
              improved, per_band.c_str())};
}

// ---------------------------------------------------------------- regularizer

Outcome regularizer_statistics() {
  reverb::OperatorConfig cfg;
  cfg.n_frames = 8;
  const auto p = fixture::random_params(cfg, 31);
  const auto rir = reverb::assemble_rir(p, cfg);
  // "Small" relative to the unit direct path: the 2/3-power compression is
  // not smooth near empty bins, so the mean grows like sigma'^2 beyond this.
  const std::size_t draws = 1000;
  const std::vector<double> levels = {1e-7, 2e-7, 4e-7, 8e-7};

  // Projections of the gradient: one weight, one decay, a random direction over everything.
  const auto dir = oracle::randn(std::size_t(p.phases.size()) + 2 * p.n_bands(), 32);
  const auto project = [&](const reverb::RirGradient& g) {
    std::array<double, 3> out{g.weights_db[3], g.decays[10], 0.0};
    std::size_t i = 0;
    for (double v : g.weights_db) out[2] += v * dir[i++];
    for (double v : g.decays) out[2] += v * dir[i++];
    for (Eigen::Index j = 0; j < g.phases.size(); ++j) out[2] += g.phases.data()[j] * dir[i++];
    return out;
  };

  std::vector<std::array<oracle::Moments, 3>> stats;
  double worst_z = 0.0;
  for (double level : levels) {
    std::array<std::vector<double>, 3> samples;
    std::mt19937_64 rng(33);  // common noise across levels
    std::normal_distribution<double> z;
    std::vector<double> noise(rir.rir.size());
    for (std::size_t d = 0; d < draws; ++d) {
      for (auto& v : noise) v = z(rng);
      const auto proj = project(rir::noise_regularizer(p, rir, cfg, level, noise).grad);
      for (int c = 0; c < 3; ++c) samples[c].push_back(proj[c]);
    }
    std::array<oracle::Moments, 3> m;
    for (int c = 0; c < 3; ++c) {
      m[c] = oracle::moments(samples[c]);
      worst_z = std::max(worst_z, std::abs(m[c].mean) / m[c].se);
    }
    stats.push_back(m);
  }
  double worst_lin = 0.0;
  for (std::size_t l = 1; l < levels.size(); ++l)
    for (int c = 0; c < 3; ++c) {
      const double ratio = (stats[l][c].std / stats[0][c].std) / (levels[l] / levels[0]);
      worst_lin = std::max(worst_lin, std::abs(ratio - 1.0));
    }
  return {worst_z <= 3.0 && worst_lin <= 0.1,
          fmt("%zu draws at sigma' in {1,2,4,8}e-7: worst |mean|/SE %.2f (max 3); std/sigma' deviation %.2f%% (max 10%%)",
              draws, worst_z, 100.0 * worst_lin)};
}

// ---------------------------------------------------------------- wpe

Outcome wpe_sanity() {
  const std::size_t trials = 50;
  std::size_t wins = 0;
  dsp::StftConfig stft;
  const auto l1 = [&](std::span<const double> a, std::span<const double> ref) {
    const auto sa = dsp::stft(a, stft), sr = dsp::stft(ref, stft);
    return (sa.values.cwiseAbs() - sr.values.cwiseAbs()).cwiseAbs().sum();
  };
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> tau(0.05, 0.2), gain(0.1, 0.5);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto x = fixture::speech_like(32000, 5000 + t);
    const auto h = harness::synth_rir(harness::SyntheticRirSpec::uniform(tau(rng), gain(rng), 0.5, rng()));
    auto y = oracle::convolve(x, h);
    y.resize(x.size());
    const auto d = wpe::dereverb(y);
    wins += l1(d, x) < l1(y, x);
  }
  return {double(wins) >= 0.9 * double(trials),
          fmt("STFT L1 to the dry source improved on %zu/%zu reverberant signals (min 90%%)", wins, trials)};
}

// ---------------------------------------------------------------- determinism

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  fixture::TempDir dir;
  const std::string cli = std::string("'") + DEREVERB_CLI + "' ";
  const std::string quiet = " > '" + dir.file("log.txt") + "' 2>&1";
  const auto x = fixture::speech_like(16000, 3);
  const auto h = harness::synth_rir(harness::SyntheticRirSpec::uniform(0.05, 0.3, 0.1, 4));
  wav::write(dir.file("y.wav"), {oracle::convolve(x, h), 16000.0});
  wav::write(dir.file("h.wav"), {h, 16000.0});

  struct Run {
    std::string name, args;
    std::vector<std::string> outputs;  // compared by suffix on the output stem
  };
  const std::string y = dir.file("y.wav");
  const std::vector<Run> runs = {
      {"wpe", "wpe " + y, {".wav"}},
      {"informed", "informed " + y + " --rir " + dir.file("h.wav") + " --steps 8 --zeta 300", {".wav", ".trace.ndjson"}},
      {"blind", "blind " + y + " --steps 6 --frames 16 --iterations 3", {".wav", ".psi.json", ".trace.ndjson"}},
  };
  std::vector<std::string> failed;
  const auto same = [](const std::string& a, const std::string& b) {
    return std::filesystem::exists(a) && fixture::read_text(a) == fixture::read_text(b);
  };
  for (const auto& r : runs) {
    const std::string first = dir.file(r.name), again = dir.file(r.name + "_again");
    if (shell(cli + r.args + " -o " + first + ".wav" + quiet) != 0 ||
        shell(cli + "rerun " + first + ".manifest.json -o " + again + ".wav" + quiet) != 0) {
      failed.push_back(r.name + " (exit)");
      continue;
    }
    for (const auto& suffix : r.outputs)
      if (!same(first + suffix, again + suffix)) failed.push_back(r.name + suffix);
  }
  const std::string sweep = "sweep --pairs 2 --length 1 --steps 6 --set sweep.rir_length_s=0.05 "
                            "--set sweep.methods=informed_dps,wpe,reverberant";
  if (shell(cli + sweep + " --report-json " + dir.file("s.json") + " --manifest-out " + dir.file("s.manifest.json") +
            quiet) != 0 ||
      shell(cli + "rerun " + dir.file("s.manifest.json") + " --report-json " + dir.file("s2.json") + quiet) != 0)
    failed.push_back("sweep (exit)");
  else if (!same(dir.file("s.json"), dir.file("s2.json")))
    failed.push_back("sweep report");

  std::string detail = "wpe, informed, blind and sweep reruns from their manifests: ";
  if (failed.empty()) return {true, detail + "all outputs bitwise identical"};
  for (const auto& f : failed) detail += f + " ";
  return {false, detail + "differ"};
}

// ---------------------------------------------------------------- bridge

Outcome bridge_equivalence() {
  const prior::GaussianPrior local({}, 0.05 * 0.05, 0.05);
  const bridge::BridgeClient remote(bridge::Endpoint::parse(std::string("stdio:") + DEREVERB_SCORE_SERVER +
                                                            " --variance 0.0025 --data-rms 0.05"),
                                    std::chrono::seconds(30));
  const auto x = fixture::speech_like(16000, 8);
  const std::vector<double> h = harness::synth_rir(harness::SyntheticRirSpec::uniform(0.04, 0.3, 0.1, 9));
  const auto y = oracle::convolve(x, h);
  sampler::SamplerConfig cfg;
  cfg.schedule.steps = 20;  // everything else at the defaults
  const auto a = sampler::run_informed(y, h, local, cfg, 21);
  const auto b = sampler::run_informed(y, h, remote, cfg, 21);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.estimate.size(); ++i) diff = std::max(diff, std::abs(a.estimate[i] - b.estimate[i]));
  return {diff <= 1e-5, fmt("informed run N=20 (default guidance), local vs stdio bridge: max abs diff %.2e (tol 1e-5)", diff)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {"operator", "PRIMARY", 60, operator_correctness},
      {"projection", "PRIMARY", 0, projection_suite},
      {"schedule", "PRIMARY", 0, schedule_guidance},
      {"acoustics", "PRIMARY", 60, acoustics_oracle},
      {"informed", "PRIMARY", 1800, informed_robustness},
      {"blind", "PRIMARY", 3600, blind_inversion},
      {"regularizer", "PRIMARY", 0, regularizer_statistics},
      {"wpe", "PRIMARY", 0, wpe_sanity},
      {"determinism", "PRIMARY", 0, determinism},
      {"bridge", "SECONDARY", 0, bridge_equivalence},
  };
  std::vector<std::string> selected(argv + 1, argv + argc);
  for (const auto& s : selected)
    if (std::none_of(all.begin(), all.end(), [&](const Criterion& c) { return c.name == s; })) {
      std::fprintf(stderr, "unknown criterion '%s'\n", s.c_str());
      return 2;
    }
  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.name) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += fmt("; over the %.0f s budget", c.budget_s);
    }
    std::printf("%s [%s] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.tier.c_str(), c.name.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
