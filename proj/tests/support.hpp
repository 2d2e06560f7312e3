#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <atomic>
#include <filesystem>
#include <functional>
#include <unistd.h>

#include "signet/signet.hpp"

namespace signet::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            concat("signet_", tag, "_", ::getpid(), "_", counter++);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(lo + (hi - lo) * uniform01(rng));
  return Tensor<T>(shape, std::move(v));
}

/// Values that stay at least `gap` away from each other and from zero: a
/// shuffled lattice with random signs. Keeps max/ReLU kinks out of reach of
/// finite differences.
template <typename T>
Tensor<T> separated_tensor(const Shape& shape, Rng& rng, double gap = 0.01) {
  const std::size_t n = shape_numel(shape);
  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  shuffle(rank.begin(), rank.end(), rng);
  std::vector<T> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mag = gap * static_cast<double>(rank[i] + 1);
    v[i] = static_cast<T>(uniform01(rng) < 0.5 ? -mag : mag);
  }
  return Tensor<T>(shape, std::move(v));
}

/// sum(y * R) for a fixed random R, so every output element gets a distinct weight.
template <typename T>
Tensor<T> random_projection(const Tensor<T>& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, random_tensor<T>(y.shape(), rng)));
}

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t coordinates = 0;
  std::string worst;  // "input[index]: analytic vs numeric"
};

/// Central finite differences on sampled coordinates of every input.
/// `loss` must rebuild the scalar from the current input values.
/// Relative error is |a - n| / max(|a|, |n|, floor).
template <typename T>
GradCheckResult grad_check(const std::vector<Tensor<T>>& inputs,
                           const std::function<Tensor<T>()>& loss, std::size_t samples_per_input, Rng& rng,
                           double eps = 1e-5, double floor = 1e-6) {
  for (auto t : inputs) t.set_requires_grad(true);
  Tape<T> tape;
  Tensor<T> l;
  {
    typename Tape<T>::Scope scope(tape);
    l = loss();
  }
  const auto grads = tape.backward(l);
  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto t = inputs[k];
    const auto* g = grads.find(t);
    std::vector<std::size_t> coords;
    if (t.numel() <= samples_per_input) {
      coords.resize(t.numel());
      std::iota(coords.begin(), coords.end(), std::size_t{0});
    } else {
      for (std::size_t s = 0; s < samples_per_input; ++s) coords.push_back(uniform_index(rng, t.numel()));
    }
    for (auto i : coords) {
      auto data = t.mutable_data();
      const T orig = data[i];
      data[i] = static_cast<T>(orig + eps);
      const double up = static_cast<double>(loss().item());
      data[i] = static_cast<T>(orig - eps);
      const double down = static_cast<double>(loss().item());
      data[i] = orig;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = g ? static_cast<double>(g->data()[i]) : 0.0;
      const double rel =
          std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      ++result.coordinates;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = concat("input ", k, "[", i, "]: analytic ", analytic, " numeric ", numeric);
      }
    }
  }
  return result;
}

// Best balanced accuracy over every threshold that can change the outcome:
// below the minimum, each observed distance and each midpoint between
// neighbouring distances.
inline double midpoint_oracle(const std::vector<DistanceRecord>& recs) {
  std::vector<double> d;
  for (const auto& r : recs) d.push_back(r.distance);
  std::sort(d.begin(), d.end());
  d.erase(std::unique(d.begin(), d.end()), d.end());
  std::vector<double> cand = {d.front() - 1};
  for (std::size_t i = 0; i < d.size(); ++i) {
    cand.push_back(d[i]);
    if (i + 1 < d.size()) cand.push_back(0.5 * (d[i] + d[i + 1]));
  }
  double ns = 0, nd = 0;
  for (const auto& r : recs) (r.y == 0 ? ns : nd) += 1;
  double best = 0;
  for (double t : cand) {
    double tp = 0, tn = 0;
    for (const auto& r : recs) {
      if (r.y == 0) {
        tp += r.distance <= t;
      } else {
        tn += r.distance > t;
      }
    }
    best = std::max(best, 0.5 * (tp / ns + tn / nd));
  }
  return best;
}

// Random labelled distances of size 2..max_n. With `grid` set, distances are
// lo + k*step exactly as the sweep generates its thresholds, i.e. resolved at
// the sweep's resolution; otherwise they are continuous.
inline std::vector<DistanceRecord> random_records(Rng& rng, std::size_t max_n, bool grid, double step = 0.01) {
  const std::size_t n = 2 + uniform_index(rng, max_n - 1);
  const double lo = 2 * uniform01(rng);
  const double shift = 0.6 * uniform01(rng);  // how far dissimilar pairs sit above similar ones
  std::vector<DistanceRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = i == 0 ? 0 : i == 1 ? 1 : static_cast<int>(uniform_index(rng, 2));
    const double u = (y ? shift : 0.0) + uniform01(rng);
    double d = lo + u;
    if (grid) d = lo + static_cast<double>(i == 0 ? 0 : static_cast<std::size_t>(u / step)) * step;
    recs.push_back({i, y, d});
  }
  return recs;
}

}  // namespace signet::testing
