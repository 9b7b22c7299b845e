#pragma once

// Per-file and stack-ranked agreement metrics between predicted and
// ground-truth MOS. Correlations of constant inputs are undefined and come
// back as std::nullopt.

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mosq/error.hpp"

namespace mosq::metrics {

using Correlation = std::optional<double>;

namespace detail {

inline void require_pair(std::span<const double> x, std::span<const double> y, const char* what) {
  if (x.size() != y.size()) {
    fail(ErrorKind::ShapeMismatch, std::string(what) + ": lengths " + std::to_string(x.size()) + " vs " +
                                       std::to_string(y.size()));
  }
}

}  // namespace detail

inline Correlation pcc(std::span<const double> x, std::span<const double> y) {
  detail::require_pair(x, y, "pcc");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks; tied values share the average of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline Correlation srcc(std::span<const double> x, std::span<const double> y) {
  detail::require_pair(x, y, "srcc");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pcc(rx, ry);
}

inline double mae(std::span<const double> x, std::span<const double> y) {
  detail::require_pair(x, y, "mae");
  if (x.empty()) fail(ErrorKind::DegenerateInput, "mae of empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

inline double rmse(std::span<const double> x, std::span<const double> y) {
  detail::require_pair(x, y, "rmse");
  if (x.empty()) fail(ErrorKind::DegenerateInput, "rmse of empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s / static_cast<double>(x.size()));
}

struct PredictionRecord {
  std::string clip_id;
  std::string dns_model_id;
  double predicted_mos = 0.0;
  double ground_truth_mos = 0.0;
  std::optional<std::array<double, 5>> predicted_histogram;
  std::optional<std::array<double, 5>> ground_truth_histogram;
};

struct MetricSet {
  Correlation pcc;
  Correlation srcc;
  double mae = 0.0;
  double rmse = 0.0;
};

inline MetricSet score(std::span<const double> predicted, std::span<const double> truth) {
  return {pcc(predicted, truth), srcc(predicted, truth), mae(predicted, truth), rmse(predicted, truth)};
}

/// Unweighted per-model means of the predicted and ground-truth MOS.
struct GroupMeans {
  std::string dns_model_id;
  std::size_t clips = 0;
  double predicted = 0.0;
  double ground_truth = 0.0;
  std::array<double, 5> predicted_histogram{};
  std::array<double, 5> ground_truth_histogram{};
};

/// Groups in lexicographic order of dns_model_id.
inline std::vector<GroupMeans> stack_rank(std::span<const PredictionRecord> records) {
  std::map<std::string, GroupMeans> groups;
  for (const auto& r : records) {
    auto& g = groups[r.dns_model_id];
    g.dns_model_id = r.dns_model_id;
    ++g.clips;
    g.predicted += r.predicted_mos;
    g.ground_truth += r.ground_truth_mos;
    for (std::size_t k = 0; k < 5; ++k) {
      if (r.predicted_histogram) g.predicted_histogram[k] += (*r.predicted_histogram)[k];
      if (r.ground_truth_histogram) g.ground_truth_histogram[k] += (*r.ground_truth_histogram)[k];
    }
  }
  if (groups.size() < 2) {
    fail(ErrorKind::TooFewGroups, "stack ranking needs at least 2 DNS models, got " + std::to_string(groups.size()));
  }
  std::vector<GroupMeans> out;
  out.reserve(groups.size());
  for (auto& [id, g] : groups) {
    const double n = static_cast<double>(g.clips);
    g.predicted /= n;
    g.ground_truth /= n;
    for (std::size_t k = 0; k < 5; ++k) {
      g.predicted_histogram[k] /= n;
      g.ground_truth_histogram[k] /= n;
    }
    out.push_back(g);
  }
  return out;
}

/// Stack-ranked SRCC of each histogram bin's group-mean probability.
inline std::array<Correlation, 5> per_bin_srcc(std::span<const PredictionRecord> records) {
  for (const auto& r : records) {
    if (!r.predicted_histogram || !r.ground_truth_histogram) {
      fail(ErrorKind::DegenerateInput, "per_bin_srcc needs predicted and ground-truth histograms on every record");
    }
  }
  const auto groups = stack_rank(records);
  std::array<Correlation, 5> out;
  for (std::size_t k = 0; k < 5; ++k) {
    std::vector<double> p, g;
    for (const auto& grp : groups) {
      p.push_back(grp.predicted_histogram[k]);
      g.push_back(grp.ground_truth_histogram[k]);
    }
    out[k] = srcc(p, g);
  }
  return out;
}

struct MetricsReport {
  MetricSet per_file;
  MetricSet stack_ranked;
  std::optional<std::array<Correlation, 5>> per_bin_srcc;
};

inline MetricsReport evaluate(std::span<const PredictionRecord> records) {
  std::vector<double> p, g;
  bool histograms = !records.empty();
  for (const auto& r : records) {
    if (r.ground_truth_mos < 1.0 || r.ground_truth_mos > 5.0) {
      fail(ErrorKind::DegenerateInput, "ground-truth MOS outside [1,5] for " + r.clip_id);
    }
    p.push_back(r.predicted_mos);
    g.push_back(r.ground_truth_mos);
    histograms = histograms && r.predicted_histogram && r.ground_truth_histogram;
  }
  MetricsReport rep;
  rep.per_file = score(p, g);
  const auto groups = stack_rank(records);
  std::vector<double> gp, gg;
  for (const auto& grp : groups) {
    gp.push_back(grp.predicted);
    gg.push_back(grp.ground_truth);
  }
  rep.stack_ranked = score(gp, gg);
  if (histograms) rep.per_bin_srcc = per_bin_srcc(records);
  return rep;
}

inline std::string format_correlation(const Correlation& c, int precision = 4) {
  if (!c) return "undefined";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << *c;
  return os.str();
}

inline std::string format_value(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

/// CSV: one row per (scope, metric).
inline void write_csv(std::ostream& os, const MetricsReport& rep) {
  os << "scope,metric,value\n";
  for (const auto& [scope, m] : {std::pair{"per_file", rep.per_file}, std::pair{"stack_ranked", rep.stack_ranked}}) {
    os << scope << ",pcc," << format_correlation(m.pcc, 6) << '\n';
    os << scope << ",srcc," << format_correlation(m.srcc, 6) << '\n';
    os << scope << ",mae," << format_value(m.mae, 6) << '\n';
    os << scope << ",rmse," << format_value(m.rmse, 6) << '\n';
  }
  if (rep.per_bin_srcc) {
    for (std::size_t k = 0; k < 5; ++k) {
      os << "stack_ranked_bin" << (k + 1) << ",srcc," << format_correlation((*rep.per_bin_srcc)[k], 6) << '\n';
    }
  }
}

/// Results-table layout: PCC SRCC MAE RMSE for per-file then stack-ranked.
struct TableRow {
  std::string id;
  std::string description;
  MetricsReport report;
};

inline void write_table(std::ostream& os, std::span<const TableRow> rows) {
  os << std::left << std::setw(11) << "ID" << std::setw(50) << "Model"
     << "| Per file: PCC    SRCC     MAE      RMSE     | Stack ranked: PCC    SRCC     MAE      RMSE\n";
  for (const auto& r : rows) {
    const auto cell = [](const std::string& s) {
      std::ostringstream c;
      c << std::left << std::setw(9) << s;
      return c.str();
    };
    os << std::left << std::setw(11) << r.id << std::setw(50) << r.description << "| "
       << std::string(10, ' ') << cell(format_correlation(r.report.per_file.pcc))
       << cell(format_correlation(r.report.per_file.srcc)) << cell(format_value(r.report.per_file.mae))
       << cell(format_value(r.report.per_file.rmse)) << "| " << std::string(14, ' ')
       << cell(format_correlation(r.report.stack_ranked.pcc)) << cell(format_correlation(r.report.stack_ranked.srcc))
       << cell(format_value(r.report.stack_ranked.mae)) << cell(format_value(r.report.stack_ranked.rmse)) << '\n';
  }
  bool any_bins = false;
  for (const auto& r : rows) any_bins = any_bins || r.report.per_bin_srcc.has_value();
  if (!any_bins) return;
  os << "\nStack-ranked SRCC per bin\n";
  os << std::left << std::setw(11) << "ID" << "Bin1     Bin2     Bin3     Bin4     Bin5\n";
  for (const auto& r : rows) {
    if (!r.report.per_bin_srcc) continue;
    os << std::left << std::setw(11) << r.id;
    for (const auto& c : *r.report.per_bin_srcc) os << std::setw(9) << format_correlation(c);
    os << '\n';
  }
}

}  // namespace mosq::metrics
