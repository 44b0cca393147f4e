#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace revgan {

struct BootstrapResult {
    std::string metric;
    /// metric_a - metric_b on the full document set.
    double point = 0.0;
    double standard_error = 0.0;
    std::size_t resamples = 0;
    /// Resamples on which a metric threw; they are excluded from the SE.
    std::size_t failed = 0;
    double t = 0.0;
    double p_value = 1.0;
};

/// Metric over a multiset of document indices. Called concurrently, so it must
/// not mutate shared state.
using IndexedMetric = std::function<double(const std::vector<std::size_t>&)>;

/// Paired bootstrap: resamples document indices with replacement B times and
/// records metric_a - metric_b on each resample. SE is the sample standard
/// deviation of those differences, t = point / SE, two-sided normal p-value.
/// Resample b draws from a generator seeded by (seed, b), so results do not
/// depend on the thread count. Throws std::invalid_argument if B < 100.
BootstrapResult bootstrap_compare(const std::string& name, const IndexedMetric& metric_a,
                                  const IndexedMetric& metric_b, std::size_t documents, std::size_t B = 1000,
                                  std::uint64_t seed = 1, bool parallel = true);

struct ChiSquareResult {
    double statistic = 0.0;
    double p_value = 1.0;
    int df = 1;
};

/// Pearson chi-square test of independence on [[a, b], [c, d]] without
/// continuity correction. Throws std::invalid_argument on a zero marginal or
/// negative count.
ChiSquareResult chi_square_independence(const std::array<std::array<double, 2>, 2>& m);

/// t = (mean_a - mean_b) / (pooled_sd * sqrt(2 / n)).
double two_sample_t(double mean_a, double mean_b, double pooled_sd, std::size_t n_per_group);

struct TTestResult {
    double t = 0.0;
    double pooled_sd = 0.0;
    std::size_t n = 0;
    double p_value = 1.0;
};
/// Equal-size groups; pooled_sd = sqrt((var_a + var_b) / 2) with n - 1 denominators.
TTestResult two_sample_t(const std::vector<double>& a, const std::vector<double>& b);

enum class Law { zipf, heaps };

struct LawPoint {
    double x = 0.0;  ///< log rank or log N
    double y = 0.0;  ///< log frequency or log V
    double fitted = 0.0;
};

struct LawFit {
    Law law = Law::zipf;
    double exponent = 0.0;
    double prefactor = 0.0;
    double r2 = 0.0;
    std::vector<LawPoint> points;
};

/// Least squares on (log r, log f(r)) over ranks with f >= 2.
/// alpha = -slope, beta = exp(intercept). Needs 10 such ranks.
LawFit fit_zipf(std::vector<std::size_t> counts);

/// Vocabulary growth V(N) sampled at N = 1, 2, 4, ... and the full length;
/// alpha = slope on log-log axes. Needs at least 100 tokens.
LawFit fit_heaps(std::span<const std::size_t> stream);

void write_law_csv(const LawFit& fit, const std::filesystem::path& path);

/// Two-sided p-value of a standard normal statistic.
double normal_two_sided_p(double z);
/// Upper tail of chi-square with one degree of freedom.
double chi_square_df1_p(double x);

}  // namespace revgan
