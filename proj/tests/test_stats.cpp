#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "revgan/stats.hpp"
#include "revgan/types.hpp"

using namespace revgan;

namespace {

using Table = std::array<std::array<double, 2>, 2>;

double shortcut_chi2(const Table& m) {
    const double a = m[0][0], b = m[0][1], c = m[1][0], d = m[1][1];
    const double n = a + b + c + d;
    return n * (a * d - b * c) * (a * d - b * c) / ((a + b) * (c + d) * (a + c) * (b + d));
}

// Mean of per-document values over an index multiset.
IndexedMetric mean_of(std::vector<double> values) {
    return [values = std::move(values)](const std::vector<std::size_t>& idx) {
        double s = 0;
        for (auto i : idx) s += values[i];
        return s / static_cast<double>(idx.size());
    };
}

std::vector<std::size_t> zipf_stream(std::size_t n, std::size_t vocab, double s, std::uint64_t seed) {
    std::vector<double> w(vocab);
    for (std::size_t r = 0; r < vocab; ++r) w[r] = 1.0 / std::pow(static_cast<double>(r + 1), s);
    std::discrete_distribution<std::size_t> d(w.begin(), w.end());
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> out(n);
    for (auto& t : out) t = d(rng);
    return out;
}

}  // namespace

TEST_CASE("chi-square matches the 2x2 shortcut formula") {
    const Table rec{{{119, 61}, {118, 62}}};
    const auto r = chi_square_independence(rec);
    CHECK(r.statistic == doctest::Approx(0.0123495).epsilon(1e-4));
    CHECK(r.df == 1);
    CHECK(r.p_value > 0.9);

    CHECK(chi_square_independence({{{20, 0}, {0, 20}}}).statistic == doctest::Approx(40.0));
    CHECK(chi_square_independence({{{10, 20}, {10, 20}}}).statistic == doctest::Approx(0.0));
    CHECK(chi_square_independence({{{10, 20}, {10, 20}}}).p_value == doctest::Approx(1.0));
    // Upper tail of chi2(1) at 3.841458820694124 is 0.05.
    CHECK(chi_square_df1_p(3.841458820694124) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("chi-square properties on random tables") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> cell(1, 500);
    for (int trial = 0; trial < 200; ++trial) {
        const Table m{{{double(cell(rng)), double(cell(rng))}, {double(cell(rng)), double(cell(rng))}}};
        const Table tr{{{m[0][0], m[1][0]}, {m[0][1], m[1][1]}}};
        const Table swapped{{{m[1][0], m[1][1]}, {m[0][0], m[0][1]}}};
        const Table doubled{{{2 * m[0][0], 2 * m[0][1]}, {2 * m[1][0], 2 * m[1][1]}}};
        const double x = chi_square_independence(m).statistic;
        CHECK(x == doctest::Approx(shortcut_chi2(m)).epsilon(1e-10));
        CHECK(chi_square_independence(tr).statistic == doctest::Approx(x).epsilon(1e-12));
        CHECK(chi_square_independence(swapped).statistic == doctest::Approx(x).epsilon(1e-12));
        CHECK(chi_square_independence(doubled).statistic == doctest::Approx(2 * x).epsilon(1e-10));
        CHECK(x >= 0.0);
    }
}

TEST_CASE("chi-square rejects degenerate tables") {
    CHECK_THROWS_AS(chi_square_independence({{{0, 0}, {3, 4}}}), std::invalid_argument);
    CHECK_THROWS_AS(chi_square_independence({{{0, 5}, {0, 4}}}), std::invalid_argument);
    CHECK_THROWS_AS(chi_square_independence({{{-1, 5}, {2, 4}}}), std::invalid_argument);
}

TEST_CASE("two-sample t closed form and sample wrapper") {
    // sp = 1, n = 2: denominator sqrt(2/2) = 1.
    CHECK(two_sample_t(3.0, 1.0, 1.0, 2) == doctest::Approx(2.0));
    CHECK(two_sample_t(1.0, 3.0, 2.0, 8) == doctest::Approx(-2.0 / (2.0 * 0.5)));
    CHECK_THROWS_AS(two_sample_t(1.0, 0.0, 0.0, 5), std::invalid_argument);
    CHECK_THROWS_AS(two_sample_t(1.0, 0.0, 1.0, 1), std::invalid_argument);

    // a: mean 2, var 1; b: mean 0, var 1; sp = 1, n = 3.
    const auto r = two_sample_t(std::vector<double>{1, 2, 3}, std::vector<double>{-1, 0, 1});
    CHECK(r.pooled_sd == doctest::Approx(1.0));
    CHECK(r.t == doctest::Approx(2.0 / std::sqrt(2.0 / 3.0)));
    CHECK(r.p_value == doctest::Approx(std::erfc(r.t / std::sqrt(2.0))));
    CHECK_THROWS_AS(two_sample_t(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST_CASE("t statistic is antisymmetric and shift invariant") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(10), b(10);
        for (auto& x : a) x = g(rng);
        for (auto& x : b) x = g(rng) + 0.5;
        const double t = two_sample_t(a, b).t;
        CHECK(two_sample_t(b, a).t == doctest::Approx(-t));
        auto a2 = a, b2 = b;
        for (auto& x : a2) x += 10;
        for (auto& x : b2) x += 10;
        CHECK(two_sample_t(a2, b2).t == doctest::Approx(t).epsilon(1e-9));
    }
}

TEST_CASE("bootstrap of a constant difference has zero spread") {
    const auto a = mean_of(std::vector<double>(30, 2.0));
    const auto b = mean_of(std::vector<double>(30, 1.5));
    const auto r = bootstrap_compare("const", a, b, 30, 200, 5);
    CHECK(r.point == doctest::Approx(0.5));
    CHECK(r.standard_error == doctest::Approx(0.0));
    CHECK(std::isinf(r.t));
    CHECK(r.p_value == 0.0);

    const auto same = bootstrap_compare("same", a, a, 30, 200, 5);
    CHECK(same.t == 0.0);
    CHECK(same.p_value == 1.0);
    CHECK_THROWS_AS(bootstrap_compare("few", a, b, 30, 99, 5), std::invalid_argument);
}

TEST_CASE("bootstrap SE approaches the analytic standard error of a mean difference") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0, 1);
    const std::size_t n = 200;
    std::vector<double> va(n), vb(n, 0.0);
    for (auto& x : va) x = g(rng);
    double m = std::accumulate(va.begin(), va.end(), 0.0) / n, ss = 0;
    for (double x : va) ss += (x - m) * (x - m);
    const double analytic = std::sqrt(ss / n) / std::sqrt(static_cast<double>(n));
    const auto r = bootstrap_compare("mean", mean_of(va), mean_of(vb), n, 2000, 1);
    CHECK(r.standard_error == doctest::Approx(analytic).epsilon(0.1));
    CHECK(r.failed == 0);
}

TEST_CASE("bootstrap serial and parallel paths agree bit for bit") {
    std::vector<double> va(50), vb(50);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    for (std::size_t i = 0; i < 50; ++i) {
        va[i] = u(rng);
        vb[i] = u(rng);
    }
    const auto s = bootstrap_compare("m", mean_of(va), mean_of(vb), 50, 300, 9, false);
    const auto p = bootstrap_compare("m", mean_of(va), mean_of(vb), 50, 300, 9, true);
    CHECK(s.standard_error == p.standard_error);
    CHECK(s.t == p.t);
    const auto other = bootstrap_compare("m", mean_of(va), mean_of(vb), 50, 300, 10, false);
    CHECK(other.standard_error != s.standard_error);
}

TEST_CASE("bootstrap counts failed resamples") {
    const auto a = [](const std::vector<std::size_t>& idx) {
        // Fails whenever document 0 is absent.
        if (std::find(idx.begin(), idx.end(), 0) == idx.end()) throw InputError("missing");
        return static_cast<double>(idx.size());
    };
    const auto b = [](const std::vector<std::size_t>&) { return 0.0; };
    const auto r = bootstrap_compare("f", a, b, 3, 1000, 4);
    // P(document 0 absent) = (2/3)^3 = 8/27.
    CHECK(static_cast<double>(r.failed) / 1000.0 == doctest::Approx(8.0 / 27.0).epsilon(0.2));
}

TEST_CASE("Zipf fit recovers a planted exponent") {
    std::vector<std::size_t> counts;
    for (std::size_t r = 1; r <= 200; ++r) counts.push_back(1000 / r);
    std::mt19937_64 rng(1);
    std::shuffle(counts.begin(), counts.end(), rng);
    const auto fit = fit_zipf(counts);
    CHECK(fit.law == Law::zipf);
    CHECK(fit.exponent == doctest::Approx(1.0).epsilon(0.05));
    CHECK(fit.r2 > 0.99);
    // Ranks with frequency below two are excluded: 1000/r >= 2 for r <= 500, all 200 kept.
    CHECK(fit.points.size() == 200);

    std::vector<std::size_t> exact;
    for (std::size_t r = 1; r <= 30; ++r) exact.push_back(static_cast<std::size_t>(std::llround(4096.0 / (r * r))));
    CHECK(fit_zipf(exact).exponent == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("Zipf fit on a flat spectrum") {
    const auto fit = fit_zipf(std::vector<std::size_t>(20, 7));
    CHECK(fit.exponent == doctest::Approx(0.0));
    CHECK(fit.prefactor == doctest::Approx(7.0));
    CHECK(fit.r2 == 1.0);
    CHECK_THROWS_AS(fit_zipf(std::vector<std::size_t>{5, 4, 3, 2, 1, 1, 1, 1, 1, 1, 1, 1}), InputError);
}

TEST_CASE("Heaps fit limiting cases") {
    std::vector<std::size_t> distinct(500);
    std::iota(distinct.begin(), distinct.end(), 0);
    const auto all_new = fit_heaps(distinct);
    CHECK(all_new.exponent == 1.0);
    CHECK(all_new.prefactor == doctest::Approx(1.0));
    CHECK(all_new.points.back().x == doctest::Approx(std::log(500.0)));

    const auto same = fit_heaps(std::vector<std::size_t>(300, 4));
    CHECK(same.exponent == 0.0);
    CHECK(same.r2 == 1.0);
    CHECK_THROWS_AS(fit_heaps(std::vector<std::size_t>(99, 1)), InputError);
}

TEST_CASE("Heaps exponent of a Zipf-distributed stream is sublinear") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto stream = zipf_stream(20000, 5000, 1.1, seed);
        const auto fit = fit_heaps(stream);
        CHECK(fit.exponent > 0.5);
        CHECK(fit.exponent < 1.0);
        CHECK(fit.r2 > 0.9);
        // Vocabulary size is non-decreasing in N.
        for (std::size_t i = 1; i < fit.points.size(); ++i) CHECK(fit.points[i].y >= fit.points[i - 1].y);
    }
}

TEST_CASE("law CSV export") {
    std::vector<std::size_t> counts;
    for (std::size_t r = 1; r <= 20; ++r) counts.push_back(100 / r);
    const auto fit = fit_zipf(counts);
    const auto path = std::filesystem::temp_directory_path() / "revgan_zipf_test.csv";
    write_law_csv(fit, path);
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "log_rank,log_frequency,fitted");
    std::size_t rows = 0;
    while (std::getline(f, line)) ++rows;
    CHECK(rows == fit.points.size());
    std::filesystem::remove(path);
}

TEST_CASE("bootstrap detects a system that wins on every document") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> va(40), vb(40);
    for (std::size_t i = 0; i < 40; ++i) {
        vb[i] = u(rng);
        va[i] = vb[i] + 0.05 + 0.1 * u(rng);
    }
    const auto r = bootstrap_compare("win", mean_of(va), mean_of(vb), 40, 1000, 3);
    CHECK(r.point > 0.0);
    CHECK(r.t > 0.0);
    CHECK(r.p_value < 0.01);
    const auto again = bootstrap_compare("win", mean_of(va), mean_of(vb), 40, 1000, 3);
    CHECK(again.standard_error == r.standard_error);
    CHECK(again.p_value == r.p_value);
}

TEST_CASE("bootstrap SE is stable when B doubles") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0, 1);
    std::vector<double> va(100), vb(100);
    for (auto& x : va) x = g(rng);
    for (auto& x : vb) x = g(rng);
    const auto small = bootstrap_compare("m", mean_of(va), mean_of(vb), 100, 1000, 1);
    const auto large = bootstrap_compare("m", mean_of(va), mean_of(vb), 100, 2000, 1);
    CHECK(std::abs(large.standard_error - small.standard_error) / small.standard_error < 0.1);
}

TEST_CASE("Zipf fit on floor(1000 / r) over ranks 1 to 100") {
    std::vector<std::size_t> counts;
    for (std::size_t r = 1; r <= 100; ++r) counts.push_back(1000 / r);
    const auto fit = fit_zipf(counts);
    CHECK(fit.exponent == doctest::Approx(1.0).epsilon(0.05));
    CHECK(std::abs(fit.exponent - 1.0) <= 0.05);
}

TEST_CASE("Zipf fit is invariant to count order and scales the prefactor") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::size_t> c(2, 5000);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::size_t> counts(40);
        for (auto& x : counts) x = c(rng);
        const auto a = fit_zipf(counts);
        std::shuffle(counts.begin(), counts.end(), rng);
        const auto b = fit_zipf(counts);
        CHECK(a.exponent == doctest::Approx(b.exponent).epsilon(1e-12));
        for (auto& x : counts) x *= 3;
        const auto s = fit_zipf(counts);
        CHECK(s.exponent == doctest::Approx(a.exponent).epsilon(1e-9));
        CHECK(s.prefactor == doctest::Approx(3 * a.prefactor).epsilon(1e-9));
        CHECK(a.r2 >= 0.0);
        CHECK(a.r2 <= 1.0);
    }
}
