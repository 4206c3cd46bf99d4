#include "dereverb/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <tuple>

#include "dereverb/types.hpp"

namespace dereverb::fft {
namespace {

enum class Kind { kR2C, kC2R, kForward, kBackward };

// FFTW's planner is not re-entrant; new-array execution is.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(Kind kind, std::size_t n) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(kind, n);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;

    const int size = static_cast<int>(n);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = nullptr;
    std::vector<std::complex<double>> c(n), c2(n);
    std::vector<double> r(n);
    auto* cp = reinterpret_cast<fftw_complex*>(c.data());
    auto* cp2 = reinterpret_cast<fftw_complex*>(c2.data());
    switch (kind) {
      case Kind::kR2C: plan = fftw_plan_dft_r2c_1d(size, r.data(), cp, flags); break;
      case Kind::kC2R: plan = fftw_plan_dft_c2r_1d(size, cp, r.data(), flags); break;
      case Kind::kForward: plan = fftw_plan_dft_1d(size, cp, cp2, FFTW_FORWARD, flags); break;
      case Kind::kBackward: plan = fftw_plan_dft_1d(size, cp, cp2, FFTW_BACKWARD, flags); break;
    }
    if (plan == nullptr) throw NumericError("fftw: failed to create plan of size " + std::to_string(n));
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<Kind, std::size_t>, fftw_plan> plans_;
};

}  // namespace

void rfft(std::span<const double> in, std::span<std::complex<double>> out) {
  const std::size_t n = in.size();
  if (n == 0 || out.size() != n / 2 + 1) throw ConfigError("rfft: bad sizes");
  // c2r and r2c may clobber/require non-const input; copy to keep callers const.
  std::vector<double> buf(in.begin(), in.end());
  fftw_execute_dft_r2c(PlanCache::instance().get(Kind::kR2C, n), buf.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void irfft(std::span<const std::complex<double>> in, std::span<double> out) {
  const std::size_t n = out.size();
  if (n == 0 || in.size() != n / 2 + 1) throw ConfigError("irfft: bad sizes");
  std::vector<std::complex<double>> buf(in.begin(), in.end());
  fftw_execute_dft_c2r(PlanCache::instance().get(Kind::kC2R, n),
                       reinterpret_cast<fftw_complex*>(buf.data()), out.data());
}

void fft(std::span<const std::complex<double>> in, std::span<std::complex<double>> out) {
  const std::size_t n = in.size();
  if (n == 0 || out.size() != n) throw ConfigError("fft: bad sizes");
  std::vector<std::complex<double>> buf(in.begin(), in.end());
  fftw_execute_dft(PlanCache::instance().get(Kind::kForward, n),
                   reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

void ifft(std::span<const std::complex<double>> in, std::span<std::complex<double>> out) {
  const std::size_t n = in.size();
  if (n == 0 || out.size() != n) throw ConfigError("ifft: bad sizes");
  std::vector<std::complex<double>> buf(in.begin(), in.end());
  fftw_execute_dft(PlanCache::instance().get(Kind::kBackward, n),
                   reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

std::size_t good_size(std::size_t n) {
  if (n <= 1) return 1;
  for (std::size_t m = n;; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2u, 3u, 5u})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

std::vector<double> convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ConfigError("convolve: empty input");
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = good_size(out_len);
  std::vector<double> pa(n, 0.0), pb(n, 0.0);
  std::copy(a.begin(), a.end(), pa.begin());
  std::copy(b.begin(), b.end(), pb.begin());
  std::vector<std::complex<double>> fa(n / 2 + 1), fb(n / 2 + 1);
  rfft(pa, fa);
  rfft(pb, fb);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  irfft(fa, pa);
  pa.resize(out_len);
  const double scale = 1.0 / static_cast<double>(n);
  for (double& v : pa) v *= scale;
  return pa;
}

std::vector<double> correlate(std::span<const double> g, std::span<const double> b,
                              std::size_t n_a) {
  if (g.empty() || b.empty() || n_a == 0) throw ConfigError("correlate: empty input");
  const std::size_t n = good_size(std::max(g.size(), n_a + b.size() - 1) + b.size());
  std::vector<double> pg(n, 0.0), pb(n, 0.0);
  std::copy(g.begin(), g.end(), pg.begin());
  std::copy(b.begin(), b.end(), pb.begin());
  std::vector<std::complex<double>> fg(n / 2 + 1), fb(n / 2 + 1);
  rfft(pg, fg);
  rfft(pb, fb);
  for (std::size_t k = 0; k < fg.size(); ++k) fg[k] *= std::conj(fb[k]);
  irfft(fg, pg);
  pg.resize(n_a);
  const double scale = 1.0 / static_cast<double>(n);
  for (double& v : pg) v *= scale;
  return pg;
}

}  // namespace dereverb::fft
