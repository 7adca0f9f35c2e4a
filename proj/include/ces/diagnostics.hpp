#ifndef CES_DIAGNOSTICS_HPP
#define CES_DIAGNOSTICS_HPP

#include <string>
#include <vector>

#include "ces/forward_model.hpp"
#include "ces/gaussian_measure.hpp"
#include "ces/sampler.hpp"

namespace ces {

/// Autocorrelation of a scalar series up to max_lag: biased autocovariance
/// estimator normalized by lag 0, so the result starts with exactly 1.
Vector acf(const Vector& series, int max_lag);

/// Effective sample size n / (1 + 2 sum rho_k), truncated by the initial
/// positive-sequence rule: consecutive lag pairs are accumulated until a
/// pair sum goes non-positive.
double ess(const Vector& series);

struct EssSummary {
  double min = 0.0;
  double med = 0.0;
  double max = 0.0;
};

/// Per-coordinate ESS of a d x n chain, reported as (min, med, max).
EssSummary ess_summary(const Matrix& samples);

struct FieldStats {
  Vector mean;
  Vector sd; // unbiased
};

FieldStats field_stats(const Matrix& samples);

/// Importance-weighted statistics; weights are given as log-weights and
/// normalized internally. Uniform weights reduce to the unweighted case.
FieldStats field_stats(const Matrix& samples,
                       const std::vector<double>& log_weights);

/// True-model data misfit per retained sample (columns in original
/// coordinates), so surrogate-driven chains are judged on the real misfit.
Vector misfit_trace(const Matrix& samples, const ForwardModel& model,
                    const ObservationSet& obs);

/// Running KL( N(mean_t, diag sd_t^2) || N(0, diag prior) ) computed in
/// closed form from the first t samples, reported for t = 2..n. A proxy
/// built on a diagonal Gaussian fit of the chain, not a general estimator.
Vector kl_gauss_proxy(const Matrix& samples, const GaussianMeasure& prior);

struct EfficiencyRow {
  std::string tag;
  double step = 0.0;        // step size actually used (post tuning)
  double acceptance = 0.0;
  double seconds_per_iteration = 0.0;
  EssSummary ess;
  double min_ess_per_sec = 0.0;
  double speedup = 0.0; // vs the baseline row
  long solver_calls = 0;
};

struct EfficiencyReport {
  std::vector<EfficiencyRow> rows;
};

struct TaggedChain {
  std::string tag;
  const ChainRecord* record = nullptr;
};

/// Sampling-efficiency comparison in the usual benchmark layout; speedup is
/// minESS/s divided by the baseline row's minESS/s.
EfficiencyReport efficiency_table(const std::vector<TaggedChain>& chains,
                                  const std::string& baseline_tag);

void write_series_csv(const std::string& path, const std::string& name,
                      const Vector& values);
void write_matrix_csv(const std::string& path, const Matrix& values);
void write_efficiency_csv(const std::string& path,
                          const EfficiencyReport& report);

} // namespace ces

#endif
