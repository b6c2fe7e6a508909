#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "parcellate/errors.hpp"
#include "parcellate/preprocess.hpp"
#include "test_support.hpp"

using namespace ppa;

namespace {

Streamline make_streamline(std::initializer_list<Point3f> points) {
    Streamline s;
    s.points.assign(points);
    return s;
}

Streamline two_point(const Vec3& a, const Vec3& b) {
    Streamline s;
    s.points.push_back({float(a[0]), float(a[1]), float(a[2])});
    s.points.push_back({float(b[0]), float(b[1]), float(b[2])});
    return s;
}

Streamline reversed(Streamline s) {
    std::reverse(s.points.begin(), s.points.end());
    return s;
}

}  // namespace

TEST_CASE("fiber_length on fixed polylines") {
    CHECK(fiber_length(make_streamline({{0, 0, 0}, {3, 4, 0}})) == doctest::Approx(5.0));
    CHECK(fiber_length(make_streamline({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}})) ==
          doctest::Approx(2.0));
}

TEST_CASE("fiber_length matches brute-force segment summation") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = ppa::test::random_streamline(rng, 16);
        double expected = 0.0;
        for (std::size_t i = 1; i < s.points.size(); ++i) {
            const double dx = double(s.points[i][0]) - double(s.points[i - 1][0]);
            const double dy = double(s.points[i][1]) - double(s.points[i - 1][1]);
            const double dz = double(s.points[i][2]) - double(s.points[i - 1][2]);
            expected += std::sqrt(dx * dx + dy * dy + dz * dz);
        }
        CHECK(fiber_length(s) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("resample inserts the midpoint of a segment at q=3") {
    const auto s = make_streamline({{0, 0, 0}, {2, 0, 0}});
    const auto r = resample(s, 3);
    REQUIRE(r.points.size() == 3);
    CHECK(r.points[0] == Vec3{0, 0, 0});
    CHECK(r.points[1][0] == doctest::Approx(1.0));
    CHECK(r.points[2] == Vec3{2, 0, 0});
}

TEST_CASE("resample with q=2 returns the endpoints only") {
    const auto s = make_streamline({{0, 0, 0}, {1, 1, 0}, {5, 0, 2}});
    const auto r = resample(s, 2);
    REQUIRE(r.points.size() == 2);
    CHECK(r.points[0] == widen(s.points.front()));
    CHECK(r.points[1] == widen(s.points.back()));
}

TEST_CASE("resample preserves arc length within 1% at q=64 on a smooth arc") {
    // quarter circle of radius 40, finely sampled
    Streamline arc;
    const double radius = 40.0;
    const std::size_t fine = 1000;
    for (std::size_t i = 0; i < fine; ++i) {
        const double t = 0.5 * std::numbers::pi * double(i) / double(fine - 1);
        arc.points.push_back({float(radius * std::cos(t)), float(radius * std::sin(t)), 0.f});
    }
    const double analytic = 0.5 * std::numbers::pi * radius;
    const auto r = resample(arc, 64);
    double resampled_length = 0.0;
    for (std::size_t i = 1; i < r.points.size(); ++i) {
        resampled_length += distance(r.points[i - 1], r.points[i]);
    }
    CHECK(std::abs(resampled_length - analytic) / analytic < 0.01);
}

TEST_CASE("resample rejects q<2 and zero-length lines") {
    const auto s = make_streamline({{0, 0, 0}, {1, 0, 0}});
    CHECK_THROWS_AS(resample(s, 1), InvalidParameter);
    Streamline degenerate;
    degenerate.points = {{2, 2, 2}, {2, 2, 2}};
    // zero arc length is caught by streamline validation
    CHECK_THROWS_AS(resample(degenerate, 4), InvalidStreamline);
}

TEST_CASE("mdf_distance: identity, flip symmetry, and a brute-force oracle") {
    Rng rng(23);
    for (int trial = 0; trial < 40; ++trial) {
        const auto a = resample(ppa::test::random_streamline(rng), 12);
        const auto b = resample(ppa::test::random_streamline(rng), 12);

        CHECK(mdf_distance(a, a) == 0.0);

        ResampledStreamline a_rev;
        a_rev.points.assign(a.points.rbegin(), a.points.rend());
        CHECK(mdf_distance(a, a_rev) == 0.0);

        // brute-force: evaluate both orderings explicitly
        double direct = 0.0;
        double flipped = 0.0;
        const std::size_t q = a.points.size();
        for (std::size_t j = 0; j < q; ++j) {
            direct += distance(a.points[j], b.points[j]);
            flipped += distance(a.points[j], b.points[q - 1 - j]);
        }
        const double expected = std::min(direct / double(q), flipped / double(q));
        CHECK(mdf_distance(a, b) == expected);

        // symmetry (within summation-order rounding) and exact reversal invariance
        CHECK(mdf_distance(a, b) == doctest::Approx(mdf_distance(b, a)).epsilon(1e-13));
        ResampledStreamline b_rev;
        b_rev.points.assign(b.points.rbegin(), b.points.rend());
        CHECK(mdf_distance(a, b_rev) == mdf_distance(a, b));
    }
}

TEST_CASE("mdf_distance rejects mismatched point counts") {
    const auto a = resample(make_streamline({{0, 0, 0}, {1, 0, 0}}), 4);
    const auto b = resample(make_streamline({{0, 0, 0}, {1, 0, 0}}), 5);
    CHECK_THROWS_AS(mdf_distance(a, b), MismatchedPointCount);
}

TEST_CASE("filter_outliers removes exactly a planted far-away fiber") {
    Rng rng(31);
    SubjectTract tract;
    tract.subject_id = "planted";
    // dense bundle around (0,0,0)-(50,0,0)
    for (int i = 0; i < 40; ++i) {
        Vec3 a{rng.next_normal(), rng.next_normal(), rng.next_normal()};
        Vec3 b{50.0 + rng.next_normal(), rng.next_normal(), rng.next_normal()};
        tract.streamlines.push_back(two_point(a, b));
    }
    // one fiber far from the bundle
    tract.streamlines.push_back(two_point({500, 500, 500}, {560, 500, 500}));

    const auto filtered = filter_outliers(tract, 20.0, 0.05, 12);
    CHECK(filtered.streamlines.size() == 40);
    for (const auto& s : filtered.streamlines) {
        CHECK(double(s.points.front()[0]) < 400.0);
    }
}

TEST_CASE("filter_outliers keeps everything at infinite threshold or tiny fraction") {
    Rng rng(37);
    const auto tract = ppa::test::random_tract(rng, "all", 15);

    const auto everything =
        filter_outliers(tract, std::numeric_limits<double>::infinity(), 0.5, 12);
    CHECK(everything.streamlines.size() == tract.streamlines.size());

    const auto tiny_fraction = filter_outliers(tract, 20.0, 1e-12, 12);
    CHECK(tiny_fraction.streamlines.size() == tract.streamlines.size());
}

TEST_CASE("filter_outliers is idempotent") {
    Rng rng(41);
    SubjectTract tract;
    tract.subject_id = "idem";
    for (int cluster = 0; cluster < 3; ++cluster) {
        const double cx = cluster * 300.0;
        const int size = 5 + cluster * 12;  // one small cluster to drop
        for (int i = 0; i < size; ++i) {
            Vec3 a{cx + rng.next_normal(), rng.next_normal(), 0.0};
            Vec3 b{cx + 40.0 + rng.next_normal(), 5.0 + rng.next_normal(), 0.0};
            tract.streamlines.push_back(two_point(a, b));
        }
    }
    const auto once = filter_outliers(tract, 15.0, 0.2, 12);
    const auto twice = filter_outliers(once, 15.0, 0.2, 12);
    CHECK(once == twice);
    CHECK(once.streamlines.size() < tract.streamlines.size());
}

TEST_CASE("filter_outliers signals when everything would be dropped") {
    Rng rng(43);
    SubjectTract tract;
    tract.subject_id = "sparse";
    // four fibers, mutually far apart: all clusters are singletons
    for (int i = 0; i < 4; ++i) {
        const double offset = i * 1000.0;
        tract.streamlines.push_back(two_point({offset, 0, 0}, {offset + 30, 0, 0}));
    }
    CHECK_THROWS_AS(filter_outliers(tract, 1.0, 0.5, 12), AllFibersRemoved);
}

TEST_CASE("extract_endpoints: single fiber and multi-subject ordering") {
    SubjectTract one;
    one.subject_id = "a";
    one.streamlines.push_back(make_streamline({{0, 0, 0}, {1, 0, 0}}));

    SubjectTract two_subj;
    two_subj.subject_id = "b";
    for (int i = 0; i < 3; ++i) {
        two_subj.streamlines.push_back(make_streamline({{0, 0, float(i)}, {2, 0, float(i)}}));
    }
    SubjectTract third;
    third.subject_id = "c";
    third.streamlines.push_back(make_streamline({{5, 5, 5}, {6, 5, 5}}));
    third.streamlines.push_back(make_streamline({{7, 7, 7}, {9, 7, 7}}));

    const auto cohort = make_cohort({third, one, two_subj});  // sorted to a, b, c
    const auto dataset = extract_endpoints(cohort);
    REQUIRE(dataset.size() == cohort.total_fibers);
    REQUIRE(dataset.size() == 6);

    CHECK(dataset.pairs[0].a == Vec3{0, 0, 0});
    CHECK(dataset.pairs[0].b == Vec3{1, 0, 0});
    CHECK(dataset.pairs[0].fiber_length == doctest::Approx(1.0));

    const std::vector<std::size_t> expected_subjects = {0, 1, 1, 1, 2, 2};
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        CHECK(dataset.pairs[i].subject_index == expected_subjects[i]);
    }
}

TEST_CASE("extract_endpoints is invariant to input file order after the id sort") {
    Rng rng(53);
    std::vector<SubjectTract> subjects;
    for (int i = 0; i < 5; ++i) {
        subjects.push_back(ppa::test::random_tract(rng, "subj_" + std::to_string(i)));
    }
    auto shuffled = subjects;
    std::reverse(shuffled.begin(), shuffled.end());

    const auto direct = extract_endpoints(make_cohort(subjects));
    const auto permuted = extract_endpoints(make_cohort(shuffled));
    REQUIRE(direct.size() == permuted.size());
    for (std::size_t i = 0; i < direct.size(); ++i) {
        CHECK(direct.pairs[i].a == permuted.pairs[i].a);
        CHECK(direct.pairs[i].b == permuted.pairs[i].b);
        CHECK(direct.pairs[i].subject_index == permuted.pairs[i].subject_index);
    }
}
