#include "revgan/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <unordered_set>

#include "revgan/types.hpp"

namespace revgan {

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

double chi_square_df1_p(double x) { return x <= 0.0 ? 1.0 : std::erfc(std::sqrt(x / 2.0)); }

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct Line {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

Line least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) throw std::invalid_argument("least squares: all x values equal");
    Line l;
    l.slope = sxy / sxx;
    l.intercept = my - l.slope * mx;
    // A constant response is fitted perfectly by a flat line.
    const bool flat = std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); });
    if (flat) {
        l.slope = 0.0;
        l.intercept = y.front();
    }
    l.r2 = flat ? 1.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
    return l;
}

LawFit make_fit(Law law, const std::vector<double>& x, const std::vector<double>& y, bool negate) {
    const Line l = least_squares(x, y);
    LawFit fit;
    fit.law = law;
    fit.exponent = negate ? -l.slope : l.slope;
    fit.prefactor = std::exp(l.intercept);
    fit.r2 = l.r2;
    for (std::size_t i = 0; i < x.size(); ++i) fit.points.push_back({x[i], y[i], l.intercept + l.slope * x[i]});
    return fit;
}

}  // namespace

BootstrapResult bootstrap_compare(const std::string& name, const IndexedMetric& metric_a,
                                  const IndexedMetric& metric_b, std::size_t documents, std::size_t B,
                                  std::uint64_t seed, bool parallel) {
    if (B < 100) throw std::invalid_argument("bootstrap_compare: need at least 100 resamples");
    if (documents == 0) throw std::invalid_argument("bootstrap_compare: no documents");
    BootstrapResult res;
    res.metric = name;
    res.resamples = B;
    std::vector<std::size_t> all(documents);
    for (std::size_t i = 0; i < documents; ++i) all[i] = i;
    res.point = metric_a(all) - metric_b(all);

    std::vector<double> diff(B, 0.0);
    std::vector<char> ok(B, 0);
    const long nb = static_cast<long>(B);
#pragma omp parallel for schedule(static) if (parallel)
    for (long b = 0; b < nb; ++b) {
        std::mt19937_64 rng(splitmix(seed ^ splitmix(static_cast<std::uint64_t>(b))));
        std::uniform_int_distribution<std::size_t> pick(0, documents - 1);
        std::vector<std::size_t> idx(documents);
        for (auto& i : idx) i = pick(rng);
        try {
            const double d = metric_a(idx) - metric_b(idx);
            if (std::isfinite(d)) {
                diff[static_cast<std::size_t>(b)] = d;
                ok[static_cast<std::size_t>(b)] = 1;
            }
        } catch (const std::exception&) {
        }
    }
    std::vector<double> good;
    for (std::size_t b = 0; b < B; ++b) {
        if (ok[b]) good.push_back(diff[b]);
    }
    res.failed = B - good.size();
    if (good.size() < 2) throw std::runtime_error("bootstrap_compare: fewer than two resamples succeeded");
    double mean = 0.0;
    for (double d : good) mean += d;
    mean /= static_cast<double>(good.size());
    double ss = 0.0;
    for (double d : good) ss += (d - mean) * (d - mean);
    res.standard_error = std::sqrt(ss / static_cast<double>(good.size() - 1));
    if (res.standard_error > 0.0) {
        res.t = res.point / res.standard_error;
    } else {
        res.t = res.point == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), res.point);
    }
    res.p_value = normal_two_sided_p(res.t);
    return res;
}

ChiSquareResult chi_square_independence(const std::array<std::array<double, 2>, 2>& m) {
    double rows[2] = {0, 0}, cols[2] = {0, 0}, total = 0;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            if (m[i][j] < 0.0) throw std::invalid_argument("chi_square: negative count");
            rows[i] += m[i][j];
            cols[j] += m[i][j];
            total += m[i][j];
        }
    }
    if (rows[0] == 0 || rows[1] == 0 || cols[0] == 0 || cols[1] == 0) {
        throw std::invalid_argument("chi_square: a row or column total is zero");
    }
    ChiSquareResult r;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            const double e = rows[i] * cols[j] / total;
            r.statistic += (m[i][j] - e) * (m[i][j] - e) / e;
        }
    }
    r.p_value = chi_square_df1_p(r.statistic);
    return r;
}

double two_sample_t(double mean_a, double mean_b, double pooled_sd, std::size_t n_per_group) {
    if (!(pooled_sd > 0.0)) throw std::invalid_argument("two_sample_t: pooled standard deviation must be positive");
    if (n_per_group < 2) throw std::invalid_argument("two_sample_t: need at least two samples per group");
    return (mean_a - mean_b) / (pooled_sd * std::sqrt(2.0 / static_cast<double>(n_per_group)));
}

TTestResult two_sample_t(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("two_sample_t: groups must have equal size");
    const std::size_t n = a.size();
    if (n < 2) throw std::invalid_argument("two_sample_t: need at least two samples per group");
    auto moments = [n](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(n);
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::pair{m, ss / static_cast<double>(n - 1)};
    };
    const auto [ma, va] = moments(a);
    const auto [mb, vb] = moments(b);
    TTestResult r;
    r.n = n;
    r.pooled_sd = std::sqrt((va + vb) / 2.0);
    if (r.pooled_sd == 0.0) throw std::invalid_argument("two_sample_t: both groups have zero variance");
    r.t = two_sample_t(ma, mb, r.pooled_sd, n);
    r.p_value = normal_two_sided_p(r.t);
    return r;
}

LawFit fit_zipf(std::vector<std::size_t> counts) {
    std::sort(counts.begin(), counts.end(), std::greater<>());
    std::vector<double> x, y;
    for (std::size_t r = 0; r < counts.size() && counts[r] >= 2; ++r) {
        x.push_back(std::log(static_cast<double>(r + 1)));
        y.push_back(std::log(static_cast<double>(counts[r])));
    }
    if (x.size() < 10) {
        throw InputError("fit_zipf: need at least 10 tokens occurring twice or more, have " + std::to_string(x.size()));
    }
    return make_fit(Law::zipf, x, y, true);
}

LawFit fit_heaps(std::span<const std::size_t> stream) {
    if (stream.size() < 100) {
        throw InputError("fit_heaps: need at least 100 tokens, have " + std::to_string(stream.size()));
    }
    std::vector<std::size_t> marks;
    for (std::size_t n = 1; n < stream.size(); n *= 2) marks.push_back(n);
    marks.push_back(stream.size());
    std::unordered_set<std::size_t> seen;
    std::vector<double> x, y;
    std::size_t next = 0;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        seen.insert(stream[i]);
        if (i + 1 == marks[next]) {
            x.push_back(std::log(static_cast<double>(i + 1)));
            y.push_back(std::log(static_cast<double>(seen.size())));
            ++next;
        }
    }
    return make_fit(Law::heaps, x, y, false);
}

void write_law_csv(const LawFit& fit, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write " + path.string());
    f.precision(17);
    f << (fit.law == Law::zipf ? "log_rank,log_frequency,fitted\n" : "log_tokens,log_types,fitted\n");
    for (const auto& p : fit.points) f << p.x << ',' << p.y << ',' << p.fitted << '\n';
}

}  // namespace revgan
