#include "sae/summaries.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace sae;

namespace {

PosteriorResult fake_result(const std::vector<std::vector<double>>& columns, AdminLevel level = 1) {
    PosteriorResult r;
    r.method = Method::unit_level;
    r.level = level;
    r.seed = 3;
    const auto n = static_cast<Eigen::Index>(columns.front().size());
    r.samples = Eigen::MatrixXd(n, static_cast<Eigen::Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) {
        r.area_ids.push_back(fmt::format("A{}", j + 1));
        for (Eigen::Index i = 0; i < n; ++i) {
            r.samples(i, static_cast<Eigen::Index>(j)) = columns[j][static_cast<std::size_t>(i)];
        }
    }
    r.flags.resize(columns.size());
    return r;
}

std::vector<double> beta_draws(double a, double b, int n, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    std::vector<double> out;
    for (int i = 0; i < n; ++i) {
        const double x = ga(gen), y = gb(gen);
        out.push_back(x / (x + y));
    }
    return out;
}

double trapezoid(const std::vector<double>& grid, const std::vector<double>& f) {
    double s = 0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
        s += 0.5 * (f[i] + f[i - 1]) * (grid[i] - grid[i - 1]);
    }
    return s;
}

}  // namespace

TEST_CASE("type-7 quantiles") {
    const std::vector<double> v = {1, 2, 3, 4};
    CHECK(sorted_quantile(v, 0.5) == doctest::Approx(2.5));
    CHECK(sorted_quantile(v, 0.0) == 1);
    CHECK(sorted_quantile(v, 1.0) == 4);
    CHECK(sorted_quantile(v, 0.25) == doctest::Approx(1.75));
    CHECK_THROWS_AS(sorted_quantile({}, 0.5), std::invalid_argument);
}

TEST_CASE("degenerate draws give zero width") {
    const auto r = fake_result({std::vector<double>(200, 0.3)});
    const auto s = summarize(r, {PointStat::median, 0.25});
    REQUIRE(s.size() == 1);
    CHECK(*s[0].point == doctest::Approx(0.3));
    CHECK(*s[0].ci_width == doctest::Approx(0.0));
    CHECK(*s[0].cv == doctest::Approx(0.0));
    CHECK(*s[0].exceedance == 1.0);
    CHECK(*s[0].seed == 3);
}

TEST_CASE("summary statistics of a known sample") {
    std::vector<double> v;
    for (int i = 1; i <= 101; ++i) {
        v.push_back(i / 200.0);
    }
    const auto r = fake_result({v});
    const auto med = summarize(r)[0];
    CHECK(*med.point == doctest::Approx(0.255));
    CHECK(*med.ci_low == doctest::Approx(0.005 + 2.5 / 200.0));
    CHECK(*med.ci_high == doctest::Approx(0.505 - 2.5 / 200.0));
    double ss = 0;
    for (double x : v) {
        ss += (x - 0.255) * (x - 0.255);
    }
    CHECK(*med.sd == doctest::Approx(std::sqrt(ss / 100.0)));
    CHECK(*med.cv == doctest::Approx(100.0 * std::sqrt(ss / 100.0) / 0.255));
    const auto mean = summarize(r, {PointStat::mean, std::nullopt})[0];
    CHECK(*mean.point == doctest::Approx(0.255));
    CHECK_FALSE(mean.exceedance);
    CHECK(exceedance(r, 0.25)[0] == doctest::Approx(51.0 / 101.0));
    CHECK_THROWS_AS(exceedance(r, 1.5), std::invalid_argument);
}

TEST_CASE("direct summaries carry flags and refuse exceedance") {
    DirectEstimates d;
    d.level = 2;
    DirectArea a;
    a.id = "X";
    a.p_hat = 0.2;
    a.var_p = 0.0004;
    a.ci_low = 0.17;
    a.ci_high = 0.24;
    a.flag = DirectFlag::ok;
    DirectArea b;
    b.id = "Y";
    d.areas = {a, b};
    const auto s = summarize(d);
    CHECK(*s[0].cv == doctest::Approx(10.0));
    CHECK(*s[0].ci_width == doctest::Approx(0.07));
    CHECK_FALSE(s[1].point);
    CHECK(s[1].flags == std::vector<std::string>{"no_data"});
    CHECK_THROWS_AS(summarize(d, {PointStat::median, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(exceedance(d, 0.5), std::invalid_argument);
}

TEST_CASE("scatter pairs areas by id") {
    std::vector<AreaSummary> a(3), b(2);
    a[0].id = "A";
    a[0].point = 0.1;
    a[1].id = "B";
    a[1].point = 0.2;
    a[2].id = "C";
    b[0].id = "B";
    b[0].point = 0.25;
    b[1].id = "D";
    b[1].point = 0.4;
    const auto sd = scatter_data(a, b, "point");
    REQUIRE(sd.points.size() == 1);
    CHECK(sd.points[0].id == "B");
    CHECK(sd.points[0].b == 0.25);
    CHECK(sd.unmatched == std::vector<AreaId>{"A", "C", "D"});
    b[0].level = 2;
    CHECK_THROWS_AS(scatter_data(a, b, "point"), std::invalid_argument);
    CHECK_THROWS_AS(summary_stat(a[0], "nope"), std::invalid_argument);
}

TEST_CASE("ridge selection grammar") {
    CHECK(parse_ridge_selection("all").kind == RidgeSelection::Kind::all);
    const auto w = parse_ridge_selection("within:R03");
    CHECK(w.kind == RidgeSelection::Kind::within);
    CHECK(w.admin1 == "R03");
    const auto t = parse_ridge_selection("top_bottom:4");
    CHECK(t.kind == RidgeSelection::Kind::top_bottom);
    CHECK(t.x == 4);
    CHECK_THROWS_AS(parse_ridge_selection("top_bottom:0"), std::invalid_argument);
    CHECK_THROWS_AS(parse_ridge_selection("within:"), std::invalid_argument);
    CHECK_THROWS_AS(parse_ridge_selection("some"), std::invalid_argument);
}

TEST_CASE("densities integrate to one and follow the sample") {
    for (const auto& [a, b] : std::vector<std::pair<double, double>>{{2, 8}, {0.5, 0.5}, {40, 2}}) {
        const auto v = beta_draws(a, b, 3000, 17);
        const auto c = kernel_density(v);
        std::vector<double> grid;
        for (int i = 0; i < kRidgeGridSize; ++i) {
            grid.push_back(i / double(kRidgeGridSize - 1));
        }
        CHECK(std::abs(trapezoid(grid, c.density) - 1.0) < 1e-9);
        const auto peak = std::max_element(c.density.begin(), c.density.end()) - c.density.begin();
        if (a > 1 && b > 1) {
            CHECK(std::abs(grid[peak] - (a - 1) / (a + b - 2)) < 0.06);
        }
    }
    const auto c = kernel_density(std::vector<double>(100, 0.3));
    CHECK(std::abs(c.median - 0.3) < 1e-12);
    CHECK_THROWS_AS(kernel_density({0.5}), std::invalid_argument);
}

TEST_CASE("ridge curves are ordered and selectable") {
    std::vector<std::vector<double>> cols;
    for (int j = 0; j < 6; ++j) {
        cols.push_back(beta_draws(2 + 3 * ((j * 5) % 6), 10, 400, 100 + j));
    }
    const auto r = fake_result(cols, 2);
    const std::vector<AreaId> admin1 = {"R1", "R1", "R1", "R2", "R2", "R2"};
    const auto all = ridge_data(r, admin1, parse_ridge_selection("all"));
    REQUIRE(all.curves.size() == 6);
    CHECK(all.grid.size() == 512);
    for (std::size_t k = 1; k < all.curves.size(); ++k) {
        CHECK(all.curves[k - 1].median <= all.curves[k].median);
    }
    const auto within = ridge_data(r, admin1, parse_ridge_selection("within:R2"));
    CHECK(within.curves.size() == 3);
    for (const auto& c : within.curves) {
        CHECK((c.id == "A4" || c.id == "A5" || c.id == "A6"));
    }
    const auto tb = ridge_data(r, admin1, parse_ridge_selection("top_bottom:2"));
    REQUIRE(tb.curves.size() == 4);
    CHECK(tb.curves.front().id == all.curves.front().id);
    CHECK(tb.curves.back().id == all.curves.back().id);
    const auto clip = ridge_data(r, admin1, parse_ridge_selection("top_bottom:9"));
    CHECK(clip.curves.size() == 6);
    CHECK(clip.notes.size() == 1);
    CHECK_THROWS_AS(ridge_data(r, admin1, parse_ridge_selection("within:R9")), NotFoundError);
}

TEST_CASE("tabulation round trip at six significant digits") {
    const auto r = fake_result({beta_draws(3, 7, 500, 1), beta_draws(5, 5, 500, 2)});
    auto s = summarize(r, {PointStat::median, 0.3});
    s[1].flags = {"no_data", "extrapolated"};
    const auto text = tabulate({s});
    CHECK(text.rfind("area,level,method,point,ci_low,ci_high,ci_width,cv,exceedance,flags\n", 0) == 0);
    std::istringstream in(text);
    const auto back = parse_tabulation(in);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].id == s[i].id);
        CHECK(back[i].level == 1);
        CHECK(back[i].method == Method::unit_level);
        CHECK(std::abs(*back[i].point - *s[i].point) <= 5e-6 * std::abs(*s[i].point));
        CHECK(std::abs(*back[i].cv - *s[i].cv) <= 5e-6 * std::abs(*s[i].cv));
        CHECK(std::abs(*back[i].exceedance - *s[i].exceedance) <= 5e-6);
    }
    CHECK(back[1].flags == s[1].flags);
    std::istringstream bad("area,level\n");
    CHECK_THROWS_AS(parse_tabulation(bad), ValidationError);
}
