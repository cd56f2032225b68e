#pragma once
// Forecast evaluation: MAE over ensembles and the sample-based CRPS over
// summed dimensions (CRPS_SUM), raw and normalized.

#include "pgdm/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pgdm {

struct ForecastEnsemble {
  std::vector<Matrix> samples;  // K forecasts, each d x H
  Matrix truth;                 // d x H

  int count() const { return int(samples.size()); }

  void validate() const {
    require(!samples.empty(), ErrorKind::InvalidInput, "ForecastEnsemble: no samples");
    require(truth.size() > 0 && truth.allFinite(), ErrorKind::InvalidInput,
            "ForecastEnsemble: bad truth");
    for (const auto& s : samples) {
      require(s.rows() == truth.rows() && s.cols() == truth.cols(), ErrorKind::ShapeError,
              "ForecastEnsemble: sample shape does not match truth");
      require(s.allFinite(), ErrorKind::InvalidInput, "ForecastEnsemble: non-finite sample");
    }
  }
};

// Mean over samples of the mean absolute deviation over all d*H entries.
inline double mae(const ForecastEnsemble& e) {
  e.validate();
  double total = 0.0;
  for (const auto& s : e.samples)
    total += (s - e.truth).cwiseAbs().mean();
  return total / double(e.count());
}

struct CrpsResult {
  double raw = 0.0;
  double normalized = 0.0;  // raw / mean |summed truth|; NaN when that is ~0
  double denom = 0.0;
};

// Empirical-ensemble CRPS per horizon step on the dimension-summed series,
//   (1/K) sum_k |X_k - y| - (1/(2K^2)) sum_{k,j} |X_k - X_j|,
// averaged over the horizon. The pairwise term uses the sorted O(K log K)
// identity sum_{k,j}|X_k - X_j| = 2 * sum_i (2i - K + 1) X_(i).
inline CrpsResult crps_sum(const ForecastEnsemble& e) {
  e.validate();
  const int K = e.count();
  const int H = int(e.truth.cols());
  double total = 0.0;
  double denom = 0.0;
  std::vector<double> xs(static_cast<size_t>(K));
  for (int h = 0; h < H; ++h) {
    double y = e.truth.col(h).sum();
    for (int k = 0; k < K; ++k) xs[size_t(k)] = e.samples[size_t(k)].col(h).sum();
    double term1 = 0.0;
    for (int k = 0; k < K; ++k) term1 += std::abs(xs[size_t(k)] - y);
    term1 /= double(K);
    std::sort(xs.begin(), xs.end());
    double pair_sum = 0.0;
    for (int i = 0; i < K; ++i) pair_sum += double(2 * i - K + 1) * xs[size_t(i)];
    double term2 = pair_sum / (double(K) * double(K));
    total += term1 - term2;
    denom += std::abs(y);
  }
  CrpsResult out;
  out.raw = total / double(H);
  out.denom = denom / double(H);
  out.normalized = (out.denom < 1e-12)
                       ? std::numeric_limits<double>::quiet_NaN()
                       : out.raw / out.denom;
  return out;
}

}  // namespace pgdm
