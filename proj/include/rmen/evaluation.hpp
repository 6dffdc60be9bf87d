#pragma once

// Peak detection on the cardiac curve and peak-matching metrics: mean
// absolute offset of matched peaks, missed reference peaks and false
// positives within a matching window.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmen/error.hpp"

namespace rmen::evaluation {

struct PeakDetectOptions {
  std::optional<std::size_t> min_distance;  // default floor(fps / high_hz)
  double high_hz = 2.0;
  std::optional<double> min_prominence;     // default prominence_scale * 1.4826 * MAD
  double prominence_scale = 0.5;
};

/// Topographic prominence of the sample at `p`.
inline double prominence(std::span<const double> x, std::size_t p) {
  double left_min = x[p];
  for (std::size_t i = p; i-- > 0;) {
    if (x[i] > x[p]) break;
    left_min = std::min(left_min, x[i]);
  }
  double right_min = x[p];
  for (std::size_t i = p + 1; i < x.size(); ++i) {
    if (x[i] > x[p]) break;
    right_min = std::min(right_min, x[i]);
  }
  return x[p] - std::max(left_min, right_min);
}

inline double median_absolute_deviation(std::span<const double> x) {
  if (x.empty()) return 0.0;
  auto med = [](std::vector<double> v) {
    const std::size_t n = v.size();
    std::sort(v.begin(), v.end());
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  const double m = med({x.begin(), x.end()});
  std::vector<double> dev(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dev[i] = std::abs(x[i] - m);
  return med(std::move(dev));
}

/// Local maxima (strictly above the left neighbour, not below the right one),
/// thinned greedily highest-first to at least `min_distance` apart (ties:
/// lower index first), then filtered by prominence.
inline std::vector<std::size_t> detect_peaks(std::span<const double> curve, double fps, const PeakDetectOptions& opt = {}) {
  const std::size_t min_distance =
      opt.min_distance.value_or(static_cast<std::size_t>(std::floor(fps / opt.high_hz)));
  if (min_distance < 1) throw ConfigError("detect_peaks: min_distance must be >= 1");
  const double min_prom =
      opt.min_prominence.value_or(opt.prominence_scale * 1.4826 * median_absolute_deviation(curve));

  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
    if (curve[i] > curve[i - 1] && curve[i] >= curve[i + 1]) candidates.push_back(i);
  }
  std::vector<std::size_t> by_height = candidates;
  std::stable_sort(by_height.begin(), by_height.end(), [&](std::size_t a, std::size_t b) { return curve[a] > curve[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t c : by_height) {
    const bool clash = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return (c > k ? c - k : k - c) < min_distance;
    });
    if (!clash) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());
  std::vector<std::size_t> peaks;
  for (std::size_t p : kept) {
    if (prominence(curve, p) >= min_prom) peaks.push_back(p);
  }
  return peaks;
}

struct MatchedPair {
  long ref = 0;
  long pred = 0;
  long offset = 0;  // pred - ref
};

struct PeakMatchReport {
  std::vector<MatchedPair> pairs;
  std::size_t missed = 0;           // reported as "True Negative" in the comparison table
  std::size_t false_positives = 0;
  std::size_t total_ref = 0;
  double total_abs_offset = 0.0;
  double window = 20.0;

  std::size_t matched() const { return pairs.size(); }
  /// NaN when nothing matched.
  double mean_abs_offset() const {
    return pairs.empty() ? std::numeric_limits<double>::quiet_NaN() : total_abs_offset / static_cast<double>(pairs.size());
  }

  PeakMatchReport& operator+=(const PeakMatchReport& o) {
    pairs.insert(pairs.end(), o.pairs.begin(), o.pairs.end());
    missed += o.missed;
    false_positives += o.false_positives;
    total_ref += o.total_ref;
    total_abs_offset += o.total_abs_offset;
    return *this;
  }
};

template <typename T>
void require_sorted(std::span<const T> v, const char* what) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[i - 1]) throw ConfigError(std::string(what) + " peaks must be sorted");
  }
}

/// One-to-one matching with |pred - ref| <= window/2 that maximizes the
/// number of pairs and, among those, minimizes the total absolute offset.
/// Some optimal matching never crosses, so a DP over the sorted lists is exact.
inline PeakMatchReport match_peaks(std::span<const std::size_t> ref, std::span<const std::size_t> pred, double window = 20.0) {
  require_sorted(ref, "reference");
  require_sorted(pred, "predicted");
  const std::size_t n = ref.size(), m = pred.size();
  const double half = window / 2.0;
  struct Cell {
    std::size_t count = 0;
    double cost = 0.0;
    unsigned char move = 0;  // 0: skip ref, 1: skip pred, 2: match
  };
  auto better = [](std::size_t c1, double k1, std::size_t c2, double k2) { return c1 > c2 || (c1 == c2 && k1 < k2); };
  std::vector<Cell> dp((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> Cell& { return dp[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) {
    for (std::size_t j = 0; j <= m; ++j) {
      if (i == 0 && j == 0) continue;
      Cell best;
      bool have = false;
      if (i > 0) {
        best = {at(i - 1, j).count, at(i - 1, j).cost, 0};
        have = true;
      }
      if (j > 0 && (!have || better(at(i, j - 1).count, at(i, j - 1).cost, best.count, best.cost))) {
        best = {at(i, j - 1).count, at(i, j - 1).cost, 1};
        have = true;
      }
      if (i > 0 && j > 0) {
        const double d = std::abs(static_cast<double>(pred[j - 1]) - static_cast<double>(ref[i - 1]));
        if (d <= half) {
          const Cell& prev = at(i - 1, j - 1);
          if (better(prev.count + 1, prev.cost + d, best.count, best.cost)) best = {prev.count + 1, prev.cost + d, 2};
        }
      }
      at(i, j) = best;
    }
  }
  PeakMatchReport r;
  r.window = window;
  r.total_ref = n;
  for (std::size_t i = n, j = m; i > 0 || j > 0;) {
    const Cell& c = at(i, j);
    if (c.move == 2) {
      const long rv = static_cast<long>(ref[i - 1]), pv = static_cast<long>(pred[j - 1]);
      r.pairs.push_back({rv, pv, pv - rv});
      r.total_abs_offset += static_cast<double>(std::labs(pv - rv));
      --i;
      --j;
    } else if (c.move == 1) {
      --j;
    } else {
      --i;
    }
  }
  std::reverse(r.pairs.begin(), r.pairs.end());
  r.missed = n - r.pairs.size();
  r.false_positives = m - r.pairs.size();
  return r;
}

struct SequenceCurve {
  std::string id;
  std::vector<std::size_t> reference;  // ground-truth beat frames
  std::vector<double> cardiac;         // cardiac component of the predicted curve
};

struct EvaluationOptions {
  double fps = 15.0;
  double window = 20.0;
  PeakDetectOptions peaks;
};

struct SequenceReport {
  std::string id;
  std::vector<std::size_t> detected;
  PeakMatchReport report;
};

struct RunReport {
  std::vector<SequenceReport> sequences;
  PeakMatchReport aggregate;
};

/// Detects peaks on every cardiac curve and matches them to the reference
/// beats; counts are summed and the offset is averaged over all matches.
inline RunReport evaluate_run(const std::vector<SequenceCurve>& curves, const EvaluationOptions& opt = {}) {
  if (curves.empty()) throw InsufficientDataError("evaluate_run: empty test set");
  RunReport run;
  run.aggregate.window = opt.window;
  for (const auto& c : curves) {
    SequenceReport s;
    s.id = c.id;
    s.detected = detect_peaks(c.cardiac, opt.fps, opt.peaks);
    s.report = match_peaks(c.reference, s.detected, opt.window);
    run.aggregate += s.report;
    run.sequences.push_back(std::move(s));
  }
  return run;
}

}  // namespace rmen::evaluation
