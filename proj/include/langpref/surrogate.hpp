/*
 * Copyright 2026 The langpref Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Ablation-based contributive attribution: random sentence masks, a linear
// surrogate fitted to logit-scaled probabilities, and Hit@k / Score@k.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "langpref/error.hpp"

namespace langpref {

using Mask = std::vector<bool>;

struct AblationSample {
  Mask mask;
  double logit_prob = 0.0;
};

// `count` masks over `sentences` bits. The first is all ones; the rest take
// one raw bit of a seeded mt19937_64 per entry, so each bit is Bernoulli(1/2)
// and the sequence is identical on every platform.
inline std::vector<Mask> sample_masks(int sentences, int count, std::uint64_t seed) {
  if (sentences < 1 || count < 1) throw DomainError("sample_masks needs S >= 1 and count >= 1");
  std::vector<Mask> masks;
  masks.reserve(count);
  masks.emplace_back(sentences, true);
  std::mt19937_64 gen(seed);
  std::uint64_t word = 0;
  int left = 0;
  for (int m = 1; m < count; ++m) {
    Mask mask(sentences);
    for (int j = 0; j < sentences; ++j) {
      if (left == 0) {
        word = gen();
        left = 64;
      }
      mask[j] = (word & 1u) != 0;
      word >>= 1;
      --left;
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

struct Surrogate {
  std::vector<double> weights;
  double bias = 0.0;
  double fit_residual = 0.0;   // RMSE on the training samples
  bool rank_deficient = false; // only meaningful for lambda = 0
};

inline double surrogate_predict(const Surrogate& s, const Mask& m) {
  double v = s.bias;
  for (std::size_t j = 0; j < m.size(); ++j) v += m[j] ? s.weights[j] : 0.0;
  return v;
}

namespace detail {

inline void check_samples(std::span<const AblationSample> samples) {
  if (samples.size() < 2) throw DomainError("fit_surrogate needs at least two samples");
  const auto s = samples.front().mask.size();
  if (s == 0) throw DomainError("empty mask");
  for (const auto& x : samples) {
    if (x.mask.size() != s) throw DomainError("masks differ in length");
    if (!std::isfinite(x.logit_prob)) throw DomainError("non-finite target");
  }
}

// Coordinate descent for sum (w.m + b - y)^2 + lambda * |w|_1 with an
// unpenalized intercept.
inline Surrogate lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       double lambda) {
  const Eigen::Index n = x.rows(), s = x.cols();
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;
  const Eigen::VectorXd z = xc.colwise().squaredNorm();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(s);
  Eigen::VectorXd resid = yc;
  for (int iter = 0; iter < 100000; ++iter) {
    double max_step = 0.0;
    for (Eigen::Index j = 0; j < s; ++j) {
      if (z(j) == 0.0) continue;
      const double rho = xc.col(j).dot(resid) + z(j) * w(j);
      const double shrunk = std::max(std::abs(rho) - lambda / 2.0, 0.0);
      const double next = std::copysign(shrunk, rho) / z(j);
      const double step = next - w(j);
      if (step != 0.0) {
        resid -= step * xc.col(j);
        w(j) = next;
        max_step = std::max(max_step, std::abs(step));
      }
    }
    if (max_step < 1e-13) break;
  }
  Surrogate out;
  out.weights.assign(w.data(), w.data() + s);
  out.bias = y_mean - x_mean.dot(w);
  (void)n;
  return out;
}

}  // namespace detail

// Fits f(m) = w.m + b to the samples' logit-probabilities. lambda = 0 is
// ordinary least squares (minimum-norm on a rank-deficient design).
inline Surrogate fit_surrogate(std::span<const AblationSample> samples, double lambda) {
  detail::check_samples(samples);
  if (!(lambda >= 0.0)) throw DomainError("lambda must be >= 0");
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  const Eigen::Index s = static_cast<Eigen::Index>(samples.front().mask.size());
  Eigen::MatrixXd x(n, s);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < s; ++j) x(i, j) = samples[i].mask[j] ? 1.0 : 0.0;
    y(i) = samples[i].logit_prob;
  }
  Surrogate out;
  if (lambda == 0.0) {
    Eigen::MatrixXd design(n, s + 1);
    design << x, Eigen::VectorXd::Ones(n);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
    const Eigen::VectorXd beta = cod.solve(y);
    out.weights.assign(beta.data(), beta.data() + s);
    out.bias = beta(s);
    out.rank_deficient = cod.rank() < s + 1;
  } else {
    out = detail::lasso(x, y, lambda);
  }
  double sse = 0.0;
  for (const auto& smp : samples) {
    const double r = surrogate_predict(out, smp.mask) - smp.logit_prob;
    sse += r * r;
  }
  out.fit_residual = std::sqrt(sse / double(n));
  return out;
}

// Sentence indices by descending weight; ties keep the smaller index first.
inline std::vector<int> rank_sentences(std::span<const double> weights) {
  std::vector<int> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return weights[a] > weights[b]; });
  return order;
}

struct AttributionAtK {
  int k = 1;
  double hit = 0.0;    // 1 if any of the top-k sentences belongs to the cited doc
  double score = 0.0;  // weight of the k-th ranked sentence
};

inline AttributionAtK attribution_scores(const Surrogate& surrogate,
                                         std::span<const int> sentence_to_doc,
                                         int cited_id, int k) {
  const int s = static_cast<int>(surrogate.weights.size());
  if (static_cast<int>(sentence_to_doc.size()) != s) {
    throw DomainError("sentence-to-document map does not cover every sentence");
  }
  if (k < 1 || k > s) {
    throw DomainError("k = " + std::to_string(k) + " outside 1.." + std::to_string(s));
  }
  const auto order = rank_sentences(surrogate.weights);
  AttributionAtK r;
  r.k = k;
  for (int i = 0; i < k; ++i) {
    if (sentence_to_doc[order[i]] == cited_id) r.hit = 1.0;
  }
  r.score = surrogate.weights[order[k - 1]];
  return r;
}

// Hit@1, Hit@3, Score@1, Score@3 for one statement. With fewer than three
// sentences the k = 3 entries use k = S.
struct AttributionResult {
  double hit_at_1 = 0.0;
  double hit_at_3 = 0.0;
  double score_at_1 = 0.0;
  double score_at_3 = 0.0;
};

inline AttributionResult attribution_result(const Surrogate& surrogate,
                                            std::span<const int> sentence_to_doc,
                                            int cited_id) {
  const int s = static_cast<int>(surrogate.weights.size());
  const auto at1 = attribution_scores(surrogate, sentence_to_doc, cited_id, 1);
  const auto at3 = attribution_scores(surrogate, sentence_to_doc, cited_id, std::min(3, s));
  return {at1.hit, at3.hit, at1.score, at3.score};
}

// Table-level values are per-statement means.
inline AttributionResult mean_attribution(std::span<const AttributionResult> rows) {
  if (rows.empty()) throw DomainError("no attribution rows to average");
  AttributionResult m;
  for (const auto& r : rows) {
    m.hit_at_1 += r.hit_at_1;
    m.hit_at_3 += r.hit_at_3;
    m.score_at_1 += r.score_at_1;
    m.score_at_3 += r.score_at_3;
  }
  const double n = double(rows.size());
  m.hit_at_1 /= n;
  m.hit_at_3 /= n;
  m.score_at_1 /= n;
  m.score_at_3 /= n;
  return m;
}

}  // namespace langpref
