#include "instances.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include "circlesnake/eval.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <cmath>
#include <numeric>

using namespace csnake;
using instances::affine;
using instances::correlated;

namespace {

double boost_two_sided_p(double r, std::size_t n) {
    const double dof = static_cast<double>(n - 2);
    const double t = std::abs(r) * std::sqrt(dof / (1 - r * r));
    return 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(dof), t));
}

} // namespace

TEST_CASE("window origins end flush with the slide") {
    CHECK(window_origins(100, 40, 40) == std::vector<int>{0, 40, 60});
    CHECK(window_origins(80, 40, 40) == std::vector<int>{0, 40});
    CHECK(window_origins(30, 40, 40) == std::vector<int>{0});
    for (int extent = 1; extent < 60; ++extent) {
        CHECK(window_origins(extent, 16, 8) == oracle::axis_starts(extent, 16, 8));
    }
}

TEST_CASE("hpf counts without detections are all zero") {
    const HpfConfig cfg{32, 32, 32, true};
    const auto w = hpf_counts({}, 100, 64, cfg, 0.15);
    CHECK(w.size() == 4 * 2);
    for (const auto& c : w) {
        CHECK(c.count == 0);
    }
}

TEST_CASE("one detection counts in every window containing its center") {
    const HpfConfig cfg{32, 32, 16, true};
    const std::vector<DetectionCircle> dets{{40, 20, 4, 0.5, 0}};
    for (const auto& w : hpf_counts(dets, 96, 64, cfg, 0.15)) {
        const bool inside = 40 >= w.x && 40 < w.x + 32 && 20 >= w.y && 20 < w.y + 32;
        CHECK(w.count == (inside ? 1 : 0));
    }
    for (const auto& w : hpf_counts(dets, 96, 64, cfg, 0.6)) {
        CHECK(w.count == 0);
    }
}

TEST_CASE("twelve planted centers match the per-window scan") {
    const HpfConfig cfg{16, 16, 16, true};
    std::vector<DetectionCircle> dets;
    for (int i = 0; i < 12; ++i) {
        dets.push_back({8.0 + 16.0 * (i % 4), 8.0 + 16.0 * (i / 4), 3, 0.9, 0});
    }
    const auto got = hpf_counts(dets, 64, 48, cfg, 0.3);
    const auto want = oracle::hpf_scan(dets, 64, 48, cfg, 0.3);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].count == 1);
        CHECK(got[i].count == want[i].count);
    }
}

TEST_CASE("hpf counts agree with the brute-force scan on random instances") {
    Rng rng(80);
    for (int trial = 0; trial < 300; ++trial) {
        const auto c = instances::hpf_case(rng);
        const auto got = hpf_counts(c.detections, c.width, c.height, c.cfg, c.ct);
        const auto want = oracle::hpf_scan(c.detections, c.width, c.height, c.cfg, c.ct);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].x == want[i].x);
            CHECK(got[i].y == want[i].y);
            CHECK(got[i].count == want[i].count);
        }
    }
}

TEST_CASE("window counts never grow with the score threshold") {
    Rng rng(81);
    for (int trial = 0; trial < 100; ++trial) {
        const auto c = instances::hpf_case(rng);
        const auto lo = hpf_counts(c.detections, c.width, c.height, c.cfg, 0.1);
        const auto hi = hpf_counts(c.detections, c.width, c.height, c.cfg, 0.3);
        for (std::size_t i = 0; i < lo.size(); ++i) {
            CHECK(hi[i].count <= lo[i].count);
        }
    }
}

TEST_CASE("aggregate examples") {
    HpfConfig cfg{8, 8, 8, true};
    const auto one = aggregate_case({{0, 0, 0, 7}}, cfg);
    CHECK(one.top5_mean == 7.0);
    CHECK(one.max == 7.0);

    std::vector<WindowCount> spread;
    const std::vector<int> counts{9, 7, 5, 3, 1, 0, 0, 0};
    for (std::size_t i = 0; i < counts.size(); ++i) {
        spread.push_back({0, static_cast<int>(i) * 16, 0, counts[i]});
    }
    const auto agg = aggregate_case(spread, cfg);
    CHECK(agg.top5_mean == 5.0);
    CHECK(agg.max == 9.0);
    CHECK(agg.selected == std::vector<std::size_t>{0, 1, 2, 3, 4});

    CHECK_THROWS_KIND(aggregate_case({}, cfg), Aggregation);
}

TEST_CASE("clustered windows skip neighbours closer than one HPF") {
    HpfConfig cfg{8, 8, 4, true};
    // (4,0) is too close to (0,0); (8,0) is exactly one width away.
    const std::vector<WindowCount> w{{0, 0, 0, 9}, {0, 4, 0, 8}, {0, 8, 0, 7}, {1, 0, 0, 6}};
    const auto agg = aggregate_case(w, cfg);
    CHECK(agg.selected == std::vector<std::size_t>{0, 2, 3});
    CHECK(agg.top5_mean == doctest::Approx((9.0 + 7 + 6) / 3));
    cfg.disjoint = false;
    CHECK(aggregate_case(w, cfg).selected == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("greedy top-5 equals the exhaustive best selection") {
    Rng rng(82);
    for (int trial = 0; trial < 300; ++trial) {
        const auto c = instances::window_case(rng);
        const auto agg = aggregate_case(c.windows, c.cfg);
        auto picked = agg.selected;
        CHECK(picked == oracle::best_five(c.windows, c.cfg));
        CHECK(agg.top5_mean <= agg.max);
        int best = 0;
        for (const auto& w : c.windows) {
            best = std::max(best, w.count);
        }
        CHECK(agg.max == best);
    }
}

TEST_CASE("top-5 mean equals max only when the selected counts are all equal") {
    Rng rng(83);
    for (int trial = 0; trial < 200; ++trial) {
        const auto c = instances::window_case(rng);
        const auto agg = aggregate_case(c.windows, c.cfg);
        bool all_equal = true;
        for (std::size_t i : agg.selected) {
            all_equal = all_equal && c.windows[i].count == c.windows[agg.selected[0]].count;
        }
        CHECK((agg.top5_mean == agg.max) == all_equal);
    }
}

TEST_CASE("without disjointness the top-5 mean is monotone in the threshold") {
    Rng rng(84);
    for (int trial = 0; trial < 100; ++trial) {
        auto c = instances::hpf_case(rng);
        c.cfg.disjoint = false;
        double prev_mean = 1e300, prev_max = 1e300;
        for (double t : {0.1, 0.15, 0.2, 0.3}) {
            const auto agg = aggregate_case(hpf_counts(c.detections, c.width, c.height, c.cfg, t), c.cfg);
            CHECK(agg.top5_mean <= prev_mean);
            CHECK(agg.max <= prev_max);
            prev_mean = agg.top5_mean;
            prev_max = agg.max;
        }
    }
}

TEST_CASE("with disjointness a stricter threshold can raise the top-5 mean") {
    // At the lenient threshold A holds the most cells and blocks B and C; at
    // the strict one A drops and the pair B, C becomes selectable.
    const HpfConfig cfg{8, 8, 8, true};
    const std::vector<WindowCount> lenient{{0, 4, 0, 10}, {0, 0, 0, 9}, {0, 8, 0, 9}, {1, 0, 0, 0}};
    const std::vector<WindowCount> strict{{0, 4, 0, 1}, {0, 0, 0, 9}, {0, 8, 0, 9}, {1, 0, 0, 0}};
    CHECK(aggregate_case(lenient, cfg).top5_mean == 5.0);
    CHECK(aggregate_case(strict, cfg).top5_mean == 6.0);
}

TEST_CASE("pearson examples") {
    const std::vector<double> x{1, 2, 3, 4};
    const auto perfect = pearson(x, affine(x, 2, 0));
    CHECK(perfect.r == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(perfect.p < 1e-12);
    CHECK(pearson(x, affine(x, -1, 0)).r == doctest::Approx(-1.0).epsilon(1e-15));
    const auto hand = pearson(x, {1, 3, 2, 4});
    CHECK(hand.r == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(hand.n == 4);
    CHECK(hand.p == doctest::Approx(boost_two_sided_p(0.8, 4)).epsilon(1e-10));
    CHECK_THROWS_KIND(pearson(x, {2, 2, 2, 2}), DegenerateInput);
    CHECK_THROWS_KIND(pearson({1, 2}, {2, 1}), DegenerateInput);
    CHECK_THROWS_KIND(pearson(x, {1, 2, 3}), DegenerateInput);
}

TEST_CASE("pearson matches the definition on random data") {
    Rng rng(85);
    for (int trial = 0; trial < 500; ++trial) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(3, 60));
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.uniform(-50, 50);
            y[i] = 0.3 * x[i] + rng.normal(0, 20);
        }
        const auto res = pearson(x, y);
        CHECK(std::abs(res.r - oracle::pearson_r(x, y)) < 1e-12);
        CHECK(std::abs(res.r) <= 1.0);
        CHECK(res.p >= 0.0);
        CHECK(res.p <= 1.0);
        CHECK(res.p == doctest::Approx(boost_two_sided_p(res.r, n)).epsilon(1e-9));
        CHECK(pearson(y, x).r == res.r);
        const double a = rng.uniform(0.1, 10), b = rng.uniform(-100, 100);
        CHECK(std::abs(pearson(affine(x, a, b), y).r - res.r) < 1e-12);
        CHECK(std::abs(pearson(x, affine(y, a, b)).r - res.r) < 1e-12);
        CHECK(std::abs(pearson(affine(x, -1, 0), y).r + res.r) < 1e-12);
    }
}

TEST_CASE("thirty cases at r = 0.655 are significant below 1e-3") {
    Rng rng(86);
    const auto [x, y] = correlated(30, 0.655, rng);
    const auto res = pearson(x, y);
    CHECK(res.r == doctest::Approx(0.655).epsilon(1e-12));
    CHECK(res.p < 1e-3);
    CHECK(res.p == doctest::Approx(boost_two_sided_p(0.655, 30)).epsilon(1e-8));
}

TEST_CASE("t distribution and incomplete beta agree with an independent implementation") {
    Rng rng(87);
    for (int trial = 0; trial < 300; ++trial) {
        const double a = rng.uniform(0.05, 40), b = rng.uniform(0.05, 40), x = rng.uniform();
        CHECK(incomplete_beta(a, b, x) == doctest::Approx(boost::math::ibeta(a, b, x)).epsilon(1e-10));
        const double dof = rng.uniform(1, 60);
        const double t = rng.uniform(-8, 8);
        const boost::math::students_t dist(dof);
        CHECK(student_t_cdf(t, dof) == doctest::Approx(boost::math::cdf(dist, t)).epsilon(1e-10));
        const double prob = rng.uniform(0.001, 0.999);
        CHECK(student_t_quantile(prob, dof) == doctest::Approx(boost::math::quantile(dist, prob)).epsilon(1e-8));
    }
    CHECK(incomplete_beta(2, 3, 0) == 0.0);
    CHECK(incomplete_beta(2, 3, 1) == 1.0);
    CHECK(student_t_cdf(0, 7) == doctest::Approx(0.5));
}

namespace {

std::vector<CaseData> sweep_cases() {
    std::vector<CaseData> cases;
    for (int k = 0; k < 5; ++k) {
        CaseData c;
        c.case_id = "case" + std::to_string(k);
        SlideDetections s{"s" + std::to_string(k), 64, 64, {}};
        for (int i = 0; i <= k; ++i) {
            s.detections.push_back({4.0 + 8 * i, 10, 3, 0.12, 0});
            s.detections.push_back({4.0 + 8 * i, 20, 3, 0.18, 0});
            s.detections.push_back({4.0 + 8 * i, 30, 3, 0.25, 0});
            s.detections.push_back({4.0 + 8 * i, 40, 3, 0.4, 0});
        }
        c.slides.push_back(s);
        c.human_top5_mean = 3.0 * k + (k % 2);
        c.human_max = 4.0 * k + 1;
        cases.push_back(c);
    }
    return cases;
}

} // namespace

TEST_CASE("one window with scores 0.12, 0.18, 0.25, 0.4 counts 4, 3, 2, 1") {
    const HpfConfig cfg{64, 64, 64, true};
    const std::vector<DetectionCircle> dets{{5, 5, 2, 0.12, 0}, {15, 5, 2, 0.18, 0}, {25, 5, 2, 0.25, 0},
                                            {35, 5, 2, 0.4, 0}};
    CHECK(hpf_counts(dets, 64, 64, cfg, 0.1)[0].count == 4);
    CHECK(hpf_counts(dets, 64, 64, cfg, 0.15)[0].count == 3);
    CHECK(hpf_counts(dets, 64, 64, cfg, 0.2)[0].count == 2);
    CHECK(hpf_counts(dets, 64, 64, cfg, 0.3)[0].count == 1);
}

TEST_CASE("threshold sweep has two metrics by four thresholds") {
    const HpfConfig cfg{64, 64, 64, true};
    const auto table = threshold_sweep(sweep_cases(), cfg);
    REQUIRE(table.cells.size() == 8);
    const std::vector<double> t{0.3, 0.2, 0.15, 0.1};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(table.at(CountMetric::Top5Mean, i).threshold == t[i]);
        CHECK(table.at(CountMetric::Max, i).threshold == t[i]);
        CHECK(table.cells[i].metric == CountMetric::Top5Mean);
        CHECK(table.cells[4 + i].metric == CountMetric::Max);
        CHECK(table.at(CountMetric::Max, i).n == 5);
    }
    REQUIRE(table.counts.size() == 4);
    for (std::size_t k = 0; k < 5; ++k) {
        const double per_window = k + 1.0;
        CHECK(table.counts[0][k].machine_max == per_window * 1);
        CHECK(table.counts[3][k].machine_max == per_window * 4);
        for (std::size_t i = 1; i < 4; ++i) {
            CHECK(table.counts[i][k].machine_top5_mean >= table.counts[i - 1][k].machine_top5_mean);
        }
    }
    const std::string csv = sweep_csv(table);
    CHECK(csv.rfind("metric,threshold,r,p,n\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
    CHECK_THROWS_KIND(threshold_sweep({sweep_cases()[0], sweep_cases()[1]}, cfg), DegenerateInput);
}

namespace {

// Band evaluated from first principles with an independent t quantile.
std::vector<Group> band_oracle(const std::vector<double>& x, const std::vector<double>& y, double confidence) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    const double slope = sxy / sxx;
    const double icpt = my - slope * mx;
    double sse = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sse += std::pow(y[i] - (icpt + slope * x[i]), 2);
    }
    const double s = std::sqrt(sse / (n - 2));
    const double tc = boost::math::quantile(boost::math::students_t(n - 2), 0.5 + confidence / 2);
    std::vector<Group> out;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double half = tc * s * std::sqrt(1 / n + (x[i] - mx) * (x[i] - mx) / sxx);
        const double res = y[i] - (icpt + slope * x[i]);
        out.push_back(res > half ? Group::Above : res < -half ? Group::Below : Group::Near);
    }
    return out;
}

} // namespace

TEST_CASE("points on a line are all near the regression") {
    const std::vector<double> x{1, 2, 3, 4, 5, 6};
    const auto band = regression_with_groups(x, affine(x, 1.5, 2));
    CHECK(band.slope == doctest::Approx(1.5));
    CHECK(band.intercept == doctest::Approx(2.0));
    for (Group g : band.labels) {
        CHECK(g == Group::Near);
    }
    CHECK_THROWS_KIND(regression_with_groups({2, 2, 2}, {1, 2, 3}), DegenerateInput);
}

TEST_CASE("an outlier at +10d is labeled above") {
    std::vector<double> x, y;
    const double d = 0.5;
    for (int i = 0; i < 12; ++i) {
        x.push_back(i);
        y.push_back(2.0 * i + 1 + (i % 2 == 0 ? d : -d));
    }
    x.push_back(6.5);
    y.push_back(2.0 * 6.5 + 1 + 10 * d);
    const auto band = regression_with_groups(x, y);
    CHECK(band.labels.back() == Group::Above);
    CHECK(band.labels == band_oracle(x, y, 0.95));
}

TEST_CASE("regression labels match the band oracle and partition the cases") {
    Rng rng(88);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(3, 40));
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.uniform(0, 30);
            y[i] = 0.8 * x[i] + rng.normal(0, 3);
        }
        const auto band = regression_with_groups(x, y);
        CHECK(band.labels.size() == n);
        CHECK(band.labels == band_oracle(x, y, 0.95));
        const double scale = rng.uniform(0.1, 20);
        CHECK(regression_with_groups(affine(x, scale, 0), affine(y, scale, 0)).labels == band.labels);
    }
}
