#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vbfs/common.hpp"
#include "vbfs/core_data.hpp"

namespace vbfs {

using PerComponent = std::array<double, kForceDim>;
/// Pearson coefficients; nullopt marks a component where either signal is constant.
using PerComponentPcc = std::array<std::optional<double>, kForceDim>;

inline PerComponent rmse_metric(std::span<const ForceVector> y, std::span<const ForceVector> yhat) {
  if (y.size() != yhat.size()) throw data_error("rmse_metric: length mismatch");
  if (y.empty()) throw data_error("rmse_metric: empty sequence");
  PerComponent out{};
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < kForceDim; ++j) {
      const double e = y[i][j] - yhat[i][j];
      out[j] += e * e;
    }
  for (double& v : out) v = std::sqrt(v / static_cast<double>(y.size()));
  return out;
}

/// Converts a normalized-unit RMSE into newtons / newton-metres.
inline PerComponent rmse_to_physical(const PerComponent& rmse_norm, const std::array<double, kForceDim>& force_scale) {
  PerComponent out{};
  for (std::size_t j = 0; j < kForceDim; ++j) out[j] = rmse_norm[j] * force_scale[j];
  return out;
}

inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw data_error("pcc: length mismatch");
  if (a.size() < 2) throw data_error("pcc: need at least two samples");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline PerComponentPcc pcc(std::span<const ForceVector> y, std::span<const ForceVector> yhat) {
  if (y.size() != yhat.size()) throw data_error("pcc: length mismatch");
  PerComponentPcc out;
  std::vector<double> a(y.size()), b(y.size());
  for (std::size_t j = 0; j < kForceDim; ++j) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      a[i] = y[i][j];
      b[i] = yhat[i][j];
    }
    out[j] = pearson(a, b);
  }
  return out;
}

/// Mean relative error of one batch: (1/M) sum_i sum_j |Y - Yhat| / delta.
inline double mre(std::span<const ForceVector> y, std::span<const ForceVector> yhat, double delta) {
  if (!(delta > 0.0)) throw usage_error("mre: delta must be positive");
  if (y.size() != yhat.size()) throw data_error("mre: length mismatch");
  if (y.empty()) throw data_error("mre: empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < kForceDim; ++j) s += std::abs(y[i][j] - yhat[i][j]) / delta;
  return s / static_cast<double>(y.size());
}

/// MRE per consecutive batch of `batch_size` samples, averaged over batches.
/// A trailing partial batch counts as a batch of its own size.
inline double mre_batched(std::span<const ForceVector> y, std::span<const ForceVector> yhat, std::size_t batch_size,
                          double delta) {
  if (batch_size == 0) throw usage_error("mre_batched: batch size must be positive");
  if (y.size() != yhat.size()) throw data_error("mre_batched: length mismatch");
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t s = 0; s < y.size(); s += batch_size) {
    const std::size_t n = std::min(batch_size, y.size() - s);
    total += mre(y.subspan(s, n), yhat.subspan(s, n), delta);
    ++batches;
  }
  if (batches == 0) throw data_error("mre_batched: empty input");
  return total / static_cast<double>(batches);
}

/// ||r_j||_2 = sqrt(sum_i (Y - Yhat)^2) for every component j.
inline PerComponent l2_per_component(std::span<const ForceVector> y, std::span<const ForceVector> yhat) {
  if (y.size() != yhat.size()) throw data_error("l2_per_component: length mismatch");
  if (y.empty()) throw data_error("l2_per_component: empty batch");
  PerComponent out{};
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < kForceDim; ++j) {
      const double e = y[i][j] - yhat[i][j];
      out[j] += e * e;
    }
  for (double& v : out) v = std::sqrt(v);
  return out;
}

struct SummaryRow {
  double max = 0.0;
  double min = 0.0;
  double mean = 0.0;
  std::size_t undefined = 0;  // components excluded from the statistics
};

inline SummaryRow summarize(std::span<const std::optional<double>> values) {
  SummaryRow row;
  std::size_t n = 0;
  double sum = 0.0;
  for (const auto& v : values) {
    if (!v) {
      ++row.undefined;
      continue;
    }
    if (n == 0) {
      row.max = row.min = *v;
    } else {
      row.max = std::max(row.max, *v);
      row.min = std::min(row.min, *v);
    }
    sum += *v;
    ++n;
  }
  row.mean = n ? sum / static_cast<double>(n) : std::nan("");
  return row;
}

inline SummaryRow summarize(const PerComponent& values) {
  std::array<std::optional<double>, kForceDim> v;
  for (std::size_t j = 0; j < kForceDim; ++j) v[j] = values[j];
  return summarize(std::span<const std::optional<double>>(v));
}

inline SummaryRow summarize(const PerComponentPcc& values) { return summarize(std::span<const std::optional<double>>(values)); }

enum class Units { normalized, physical };

struct MetricReport {
  PerComponent rmse{};
  PerComponent rmse_physical{};
  PerComponentPcc pcc{};
  PerComponent l2{};
  double mre = 0.0;
  Units units = Units::normalized;

  SummaryRow pcc_summary() const { return summarize(pcc); }
  SummaryRow rmse_summary() const { return summarize(rmse); }
};

inline MetricReport evaluate_metrics(std::span<const ForceVector> y, std::span<const ForceVector> yhat,
                                     const std::array<double, kForceDim>& force_scale, double delta = 1e-3) {
  MetricReport r;
  r.rmse = rmse_metric(y, yhat);
  r.rmse_physical = rmse_to_physical(r.rmse, force_scale);
  r.pcc = y.size() >= 2 ? pcc(y, yhat) : PerComponentPcc{};
  r.l2 = l2_per_component(y, yhat);
  r.mre = mre(y, yhat, delta);
  return r;
}

/// Mean of the defined PCC entries (NaN if none is defined).
inline double mean_pcc(const PerComponentPcc& p) { return summarize(p).mean; }

}  // namespace vbfs
