#pragma once

// Ground-truth statistics of a clip's opinion scores.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "mosq/error.hpp"

namespace mosq::labels {

inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 5;
inline constexpr std::size_t kNumBins = 5;
inline constexpr std::size_t kMinJudges = 2;
inline constexpr std::size_t kMaxJudges = 30;

struct OpinionRecord {
  std::string clip_id;
  std::string dns_model_id;
  std::vector<int> scores;
};

struct LabelStats {
  double mos = 0.0;
  double sigma = 0.0;   // population standard deviation
  double median = 0.0;
  std::array<double, kNumBins> histogram{};
  double skewness = 0.0;  // Fisher-Pearson g1
  double kurtosis = 0.0;  // excess
  std::size_t n = 0;
};

inline void validate_scores(const std::vector<int>& scores) {
  if (scores.size() < kMinJudges) {
    fail(ErrorKind::TooFewScores, "need at least 2 scores, got " + std::to_string(scores.size()));
  }
  if (scores.size() > kMaxJudges) {
    fail(ErrorKind::InvalidSpec, "at most 30 scores per clip, got " + std::to_string(scores.size()));
  }
  for (int s : scores) {
    if (s < kMinScore || s > kMaxScore) fail(ErrorKind::ScoreOutOfRange, "score " + std::to_string(s));
  }
}

/// All statistics are computed from the bin counts, which makes them exactly
/// permutation invariant and ties mos to the histogram.
inline LabelStats compute_stats(const std::vector<int>& scores) {
  validate_scores(scores);
  std::array<std::size_t, kNumBins> counts{};
  for (int s : scores) ++counts[static_cast<std::size_t>(s - 1)];

  LabelStats st;
  st.n = scores.size();
  const double n = static_cast<double>(st.n);
  for (std::size_t k = 0; k < kNumBins; ++k) st.histogram[k] = static_cast<double>(counts[k]) / n;

  std::size_t total = 0;
  for (std::size_t k = 0; k < kNumBins; ++k) total += counts[k] * (k + 1);
  st.mos = static_cast<double>(total) / n;

  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (std::size_t k = 0; k < kNumBins; ++k) {
    const double d = static_cast<double>(k + 1) - st.mos;
    const double c = static_cast<double>(counts[k]);
    m2 += c * d * d;
    m3 += c * d * d * d;
    m4 += c * d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  st.sigma = std::sqrt(m2);
  if (m2 > 0.0) {
    st.skewness = m3 / std::pow(m2, 1.5);
    st.kurtosis = m4 / (m2 * m2) - 3.0;
  }

  // Median from the sorted order implied by the counts.
  auto nth = [&](std::size_t idx) {
    std::size_t seen = 0;
    for (std::size_t k = 0; k < kNumBins; ++k) {
      seen += counts[k];
      if (idx < seen) return static_cast<double>(k + 1);
    }
    return static_cast<double>(kMaxScore);
  };
  st.median = st.n % 2 == 1 ? nth(st.n / 2) : 0.5 * (nth(st.n / 2 - 1) + nth(st.n / 2));
  return st;
}

inline LabelStats compute_stats(const OpinionRecord& r) { return compute_stats(r.scores); }

/// Fixed-width binning over [low, high); values outside are clamped into the
/// edge bins.
struct Binning {
  std::string statistic;
  double low = 0.0;
  double high = 1.0;
  std::size_t bins = 1;
  std::vector<std::size_t> counts;

  double bin_low(std::size_t i) const { return low + (high - low) * static_cast<double>(i) / bins; }
  double bin_high(std::size_t i) const { return low + (high - low) * static_cast<double>(i + 1) / bins; }

  void add(double v) {
    if (counts.empty()) counts.assign(bins, 0);
    auto idx = static_cast<long>(std::floor((v - low) / (high - low) * static_cast<double>(bins)));
    idx = std::clamp(idx, 0L, static_cast<long>(bins) - 1);
    ++counts[static_cast<std::size_t>(idx)];
  }
};

/// Per-statistic histograms over a corpus (the data behind a label-distribution plot).
struct CorpusReport {
  Binning mos{"mos", 0.875, 5.125, 17, {}};
  Binning median{"median", 0.75, 5.25, 9, {}};
  Binning sigma{"sigma", 0.0, 2.0 + 1e-9, 20, {}};
  Binning skewness{"skewness", -2.0, 2.0, 16, {}};
  Binning kurtosis{"kurtosis", -3.0, 5.0, 16, {}};
  Binning n{"n", 1.5, 30.5, 29, {}};
  double skewness_min = 0.0;
  double skewness_max = 0.0;
  std::size_t records = 0;

  std::vector<const Binning*> all() const { return {&mos, &median, &sigma, &skewness, &kurtosis, &n}; }

  /// CSV rows: statistic,bin_low,bin_high,count
  void write_csv(std::ostream& os) const {
    os << "statistic,bin_low,bin_high,count\n";
    for (const Binning* b : all()) {
      for (std::size_t i = 0; i < b->bins; ++i) {
        os << b->statistic << ',' << b->bin_low(i) << ',' << b->bin_high(i) << ','
           << (b->counts.empty() ? 0 : b->counts[i]) << '\n';
      }
    }
  }
};

template <typename Records>
CorpusReport corpus_report(const Records& records) {
  CorpusReport rep;
  for (Binning* b : {&rep.mos, &rep.median, &rep.sigma, &rep.skewness, &rep.kurtosis, &rep.n}) {
    b->counts.assign(b->bins, 0);
  }
  bool first = true;
  for (const OpinionRecord& r : records) {
    const LabelStats st = compute_stats(r);
    rep.mos.add(st.mos);
    rep.median.add(st.median);
    rep.sigma.add(st.sigma);
    rep.skewness.add(st.skewness);
    rep.kurtosis.add(st.kurtosis);
    rep.n.add(static_cast<double>(st.n));
    rep.skewness_min = first ? st.skewness : std::min(rep.skewness_min, st.skewness);
    rep.skewness_max = first ? st.skewness : std::max(rep.skewness_max, st.skewness);
    first = false;
    ++rep.records;
  }
  return rep;
}

}  // namespace mosq::labels
