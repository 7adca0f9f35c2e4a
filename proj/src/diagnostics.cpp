#include "ces/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace ces {

namespace {

// Centered copy and lag-0 autocovariance, rejecting constant input.
Vector center_series(const Vector& series, double* c0) {
  if (series.maxCoeff() == series.minCoeff())
    throw NumericalError(
        "series is constant; autocorrelation is undefined");
  Vector x = series.array() - series.mean();
  *c0 = x.squaredNorm() / static_cast<double>(x.size());
  if (!(*c0 > 0.0) || !std::isfinite(*c0))
    throw NumericalError(
        "series is constant; autocorrelation is undefined");
  return x;
}

} // namespace

Vector acf(const Vector& series, int max_lag) {
  require(max_lag >= 0, "autocorrelation lag must be non-negative");
  require(series.size() > max_lag,
          "series must be longer than the requested lag");
  const auto n = series.size();
  double c0 = 0.0;
  Vector x = center_series(series, &c0);
  Vector rho(max_lag + 1);
  rho[0] = 1.0;
  for (int k = 1; k <= max_lag; ++k)
    rho[k] = x.head(n - k).dot(x.tail(n - k)) / (static_cast<double>(n) * c0);
  return rho;
}

double ess(const Vector& series) {
  const auto n = series.size();
  require(n >= 100, "effective sample size needs at least 100 samples");
  double c0 = 0.0;
  Vector x = center_series(series, &c0);
  auto rho = [&](Eigen::Index k) {
    return x.head(n - k).dot(x.tail(n - k)) / (static_cast<double>(n) * c0);
  };

  // Lags are evaluated lazily; chains that decorrelate quickly stop after
  // a handful of pairs.
  const Eigen::Index max_lag = std::min<Eigen::Index>(n - 1, 2000);
  double tail_sum = 0.0;
  for (Eigen::Index m = 1; 2 * m <= max_lag; ++m) {
    const double pair = rho(2 * m - 1) + rho(2 * m);
    if (pair <= 0.0) break;
    tail_sum += pair;
  }
  return static_cast<double>(n) / (1.0 + 2.0 * tail_sum);
}

EssSummary ess_summary(const Matrix& samples) {
  require(samples.rows() >= 1, "chain has no coordinates");
  std::vector<double> values(samples.rows());
  for (Eigen::Index i = 0; i < samples.rows(); ++i)
    values[i] = ess(samples.row(i).transpose());
  std::sort(values.begin(), values.end());
  EssSummary s;
  s.min = values.front();
  s.max = values.back();
  const std::size_t h = values.size() / 2;
  s.med = values.size() % 2 == 1 ? values[h]
                                 : 0.5 * (values[h - 1] + values[h]);
  return s;
}

FieldStats field_stats(const Matrix& samples) {
  require(samples.cols() >= 2, "field statistics need at least 2 samples");
  FieldStats f;
  f.mean = samples.rowwise().mean();
  Matrix c = samples.colwise() - f.mean;
  f.sd = (c.array().square().rowwise().sum() /
          static_cast<double>(samples.cols() - 1))
             .sqrt();
  return f;
}

FieldStats field_stats(const Matrix& samples,
                       const std::vector<double>& log_weights) {
  if (log_weights.empty()) return field_stats(samples);
  require(static_cast<Eigen::Index>(log_weights.size()) == samples.cols(),
          "one log-weight per sample is required");
  require(samples.cols() >= 2, "field statistics need at least 2 samples");

  Eigen::Map<const Vector> lw(log_weights.data(), log_weights.size());
  Vector w = (lw.array() - lw.maxCoeff()).exp();
  w /= w.sum();

  FieldStats f;
  f.mean = samples * w;
  Matrix c = samples.colwise() - f.mean;
  // Reduces to the unbiased estimator for uniform weights.
  const double denom = 1.0 - w.squaredNorm();
  require(denom > 0.0, "weights are degenerate (one sample carries all mass)");
  f.sd = ((c.array().square().matrix() * w).array() / denom).sqrt();
  return f;
}

Vector misfit_trace(const Matrix& samples, const ForwardModel& model,
                    const ObservationSet& obs) {
  require(samples.rows() == model.input_dim(),
          "sample dimension does not match the model");
  Vector trace(samples.cols());
  for (Eigen::Index t = 0; t < samples.cols(); ++t)
    trace[t] = potential(model, samples.col(t), obs);
  return trace;
}

Vector kl_gauss_proxy(const Matrix& samples, const GaussianMeasure& prior) {
  require(samples.rows() == prior.dim(),
          "sample dimension does not match the prior");
  const auto n = samples.cols();
  require(n >= 2, "the running Gaussian fit needs at least 2 samples");
  const Vector c = prior.cov_diagonal();

  // Welford running moments; one KL value per window size t = 2..n.
  Vector mean = samples.col(0);
  Vector m2 = Vector::Zero(samples.rows());
  Vector out(n - 1);
  for (Eigen::Index t = 1; t < n; ++t) {
    Vector delta = samples.col(t) - mean;
    mean += delta / static_cast<double>(t + 1);
    m2 += delta.cwiseProduct(samples.col(t) - mean);
    Vector s2 = m2 / static_cast<double>(t);
    // A window where some coordinate has not moved yet (repeated rejections)
    // gives a divergent fit; mark it NaN instead of failing the series.
    double kl = 0.0;
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
      if (!(s2[i] > 0.0)) {
        kl = std::numeric_limits<double>::quiet_NaN();
        break;
      }
      kl += s2[i] / c[i] + mean[i] * mean[i] / c[i] - 1.0 +
            std::log(c[i] / s2[i]);
    }
    out[t - 1] = 0.5 * kl;
  }
  return out;
}

EfficiencyReport efficiency_table(const std::vector<TaggedChain>& chains,
                                  const std::string& baseline_tag) {
  require(!chains.empty(), "efficiency table needs at least one chain");
  EfficiencyReport report;
  double baseline_rate = 0.0;
  for (const auto& c : chains) {
    require(c.record != nullptr, "efficiency table entry has no record");
    require(c.record->seconds > 0.0,
            "chain '" + c.tag + "' carries no timing");
    require(c.record->iterations_run > 0,
            "chain '" + c.tag + "' carries no iteration count");
    EfficiencyRow row;
    row.tag = c.tag;
    row.step = c.record->final_step;
    row.acceptance = c.record->acceptance_rate;
    row.seconds_per_iteration =
        c.record->seconds / static_cast<double>(c.record->iterations_run);
    row.ess = ess_summary(c.record->samples);
    row.min_ess_per_sec = row.ess.min / c.record->seconds;
    row.solver_calls = c.record->solver_calls;
    if (c.tag == baseline_tag) baseline_rate = row.min_ess_per_sec;
    report.rows.push_back(std::move(row));
  }
  if (baseline_rate <= 0.0)
    throw ConfigError("baseline chain '" + baseline_tag +
                      "' is missing from the efficiency table");
  for (auto& row : report.rows) row.speedup = row.min_ess_per_sec / baseline_rate;
  return report;
}

namespace {

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << std::setprecision(12);
  return out;
}

} // namespace

void write_series_csv(const std::string& path, const std::string& name,
                      const Vector& values) {
  auto out = open_csv(path);
  out << "index," << name << "\n";
  for (Eigen::Index i = 0; i < values.size(); ++i)
    out << i << "," << values[i] << "\n";
}

void write_matrix_csv(const std::string& path, const Matrix& values) {
  auto out = open_csv(path);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      out << (j ? "," : "") << values(i, j);
    out << "\n";
  }
}

void write_efficiency_csv(const std::string& path,
                          const EfficiencyReport& report) {
  auto out = open_csv(path);
  out << "tag,step,acceptance,seconds_per_iteration,ess_min,ess_med,ess_max,"
         "min_ess_per_sec,speedup,solver_calls\n";
  for (const auto& r : report.rows)
    out << r.tag << "," << r.step << "," << r.acceptance << ","
        << r.seconds_per_iteration << "," << r.ess.min << "," << r.ess.med
        << "," << r.ess.max << "," << r.min_ess_per_sec << "," << r.speedup
        << "," << r.solver_calls << "\n";
}

} // namespace ces
