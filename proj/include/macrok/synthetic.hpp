#pragma once

// Synthetic multi-label data with long-tailed label priors. Marginals are the
// true conditional probabilities (optionally perturbed), labels are Bernoulli
// draws from them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "macrok/core.hpp"
#include "macrok/fw.hpp"
#include "macrok/rng.hpp"

namespace macrok {

struct SyntheticConfig {
  std::size_t n = 2000;
  std::size_t m = 50;
  std::uint64_t seed = 0;
  double head_prior = 0.3;       // prior of the most frequent label
  double tail_exponent = 0.8;    // p_j = head_prior * (j + 1)^-tail_exponent
  double spread = 1.5;           // std of per-instance logit offsets
  double estimator_noise = 0.0;  // std of logit noise between marginals and labels
  std::optional<std::size_t> kprime;
};

inline Dataset synthetic_dataset(const SyntheticConfig& cfg) {
  Rng rng(cfg.seed, 0x5e7);
  auto normal = [&]() {
    const double u1 = rng.uniform_open_closed();
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  };
  auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };

  std::vector<double> base(cfg.m);
  for (std::size_t j = 0; j < cfg.m; ++j) {
    const double p = cfg.head_prior * std::pow(static_cast<double>(j + 1), -cfg.tail_exponent);
    base[j] = std::log(p / (1.0 - p));
  }

  std::vector<std::size_t> ptr{0};
  std::vector<LabelIndex> idx;
  std::vector<double> val;
  std::vector<std::vector<LabelIndex>> rows(cfg.n);
  std::vector<double> eta(cfg.m);
  std::vector<LabelIndex> order(cfg.m);
  if (!cfg.kprime) {
    idx.reserve(cfg.n * cfg.m);
    val.reserve(cfg.n * cfg.m);
  } else {
    idx.reserve(cfg.n * std::min(cfg.m, *cfg.kprime));
    val.reserve(cfg.n * std::min(cfg.m, *cfg.kprime));
  }

  for (std::size_t i = 0; i < cfg.n; ++i) {
    for (std::size_t j = 0; j < cfg.m; ++j) {
      const double logit = base[j] + cfg.spread * normal();
      const double truth = sigmoid(logit);
      if (rng.uniform() < truth) rows[i].push_back(static_cast<LabelIndex>(j));
      eta[j] = cfg.estimator_noise > 0.0 ? sigmoid(logit + cfg.estimator_noise * normal()) : truth;
    }
    if (cfg.kprime && *cfg.kprime < cfg.m) {
      for (std::size_t j = 0; j < cfg.m; ++j) order[j] = static_cast<LabelIndex>(j);
      const auto cut = order.begin() + static_cast<std::ptrdiff_t>(*cfg.kprime);
      std::nth_element(order.begin(), cut, order.end(), [&](LabelIndex x, LabelIndex y) {
        return eta[x] != eta[y] ? eta[x] > eta[y] : x < y;
      });
      std::sort(order.begin(), cut);
      for (auto it = order.begin(); it != cut; ++it) {
        idx.push_back(*it);
        val.push_back(eta[*it]);
      }
    } else {
      for (std::size_t j = 0; j < cfg.m; ++j) {
        idx.push_back(static_cast<LabelIndex>(j));
        val.push_back(eta[j]);
      }
    }
    ptr.push_back(idx.size());
  }
  std::optional<std::size_t> trunc;
  if (cfg.kprime && *cfg.kprime < cfg.m) trunc = cfg.kprime;
  return {LabelMatrix(cfg.m, rows), MarginalMatrix(cfg.m, std::move(ptr), std::move(idx), std::move(val), trunc)};
}

}  // namespace macrok
