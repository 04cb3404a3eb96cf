#pragma once

// Brute-force reference ranking for `forage knn-check`. Shares no code with
// VectorIndex: raw vectors, full sort, cosine as dot / (|a||b|).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace forage::oracle {

struct Labeled {
  std::string id;
  std::vector<double> v;
};

inline std::vector<std::pair<std::string, double>> brute_force_knn(const std::vector<Labeled>& data,
                                                                   const std::vector<double>& q, std::size_t k) {
  auto norm = [](const std::vector<double>& x) {
    double s = 0;
    for (double e : x) s += e * e;
    return std::sqrt(s);
  };
  const double qn = norm(q);
  std::vector<std::pair<std::string, double>> all;
  for (const auto& d : data) {
    double dot = 0;
    for (std::size_t i = 0; i < q.size(); ++i) dot += q[i] * d.v[i];
    all.emplace_back(d.id, std::clamp(dot / (qn * norm(d.v)), -1.0, 1.0));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

// n Gaussian vectors scaled to unit length, ids "v0000".."v{n-1}".
inline std::vector<Labeled> random_unit_vectors(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Labeled> out;
  for (std::size_t i = 0; i < n; ++i) {
    Labeled l;
    char buf[32];
    std::snprintf(buf, sizeof buf, "v%04zu", i);
    l.id = buf;
    double s = 0;
    do {
      l.v.assign(dim, 0.0);
      s = 0;
      for (auto& x : l.v) {
        x = g(rng);
        s += x * x;
      }
    } while (s == 0);
    for (auto& x : l.v) x /= std::sqrt(s);
    out.push_back(std::move(l));
  }
  return out;
}

}  // namespace forage::oracle
