#ifndef VERGE_RNG_HPP
#define VERGE_RNG_HPP

#include <cstdint>
#include <random>

namespace verge {

// splitmix64 step; used to derive independent stream seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return unit_(engine_); }
  double uniform(double a, double b) { return a + (b - a) * unit_(engine_); }
  double normal() { return gauss_(engine_); }
  double normal(double mean, double sd) { return mean + sd * gauss_(engine_); }

  // Gamma(shape, rate): density x^{shape-1} e^{-rate x}, mean shape/rate.
  double gamma(double shape, double rate) {
    std::gamma_distribution<double> g(shape, 1.0 / rate);
    return g(engine_);
  }

  // InvGamma(shape, scale): reciprocal of Gamma(shape, rate = scale), mean scale/(shape-1).
  double inverse_gamma(double shape, double scale) {
    return 1.0 / gamma(shape, scale);
  }

  bool bernoulli(double p) { return unit_(engine_) < p; }

  // Uniform over {0, ..., n-1}.
  int uniform_int(int n) {
    std::uniform_int_distribution<int> d(0, n - 1);
    return d(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

}  // namespace verge

#endif  // VERGE_RNG_HPP
