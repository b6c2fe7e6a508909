#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "parcellate/errors.hpp"
#include "parcellate/regress.hpp"
#include "parcellate/rng.hpp"
#include "test_support.hpp"
#include "reference_fits.hpp"

using namespace ppa;

namespace {

PredictorMatrix random_predictors(Rng& rng, std::size_t n, std::size_t p) {
    PredictorMatrix x;
    x.n = n;
    x.p = p;
    x.values.resize(n * p);
    for (auto& v : x.values) v = rng.next_normal();
    return x;
}

std::vector<double> random_response(Rng& rng, const PredictorMatrix& x,
                                    const std::vector<double>& beta, double intercept,
                                    double noise) {
    std::vector<double> y(x.n, intercept);
    for (std::size_t i = 0; i < x.n; ++i) {
        for (std::size_t j = 0; j < x.p; ++j) y[i] += beta[j] * x.at(i, j);
        y[i] += noise * rng.next_normal();
    }
    return y;
}

ConnectomeMatrix random_compositions(Rng& rng, std::size_t n, std::size_t k) {
    ConnectomeMatrix m;
    m.k = k;
    for (std::size_t i = 0; i < n; ++i) {
        CompositionVector row;
        row.subject_id = "s" + std::to_string(i);
        row.omega.resize(k);
        double total = 0.0;
        for (auto& w : row.omega) {
            w = rng.next_gamma(1.0);
            total += w;
        }
        for (auto& w : row.omega) w /= total;
        m.rows.push_back(row);
    }
    return m;
}

}  // namespace

TEST_CASE("design_matrix drops the last bundle column") {
    ConnectomeMatrix m;
    m.k = 3;
    m.rows = {{"a", {0.5, 0.25, 0.25}}, {"b", {0.2, 0.3, 0.5}}};
    const auto x = design_matrix(m);
    CHECK(x.n == 2);
    CHECK(x.p == 2);
    CHECK(x.at(0, 0) == 0.5);
    CHECK(x.at(0, 1) == 0.25);
    CHECK(x.at(1, 0) == 0.2);
    CHECK(x.at(1, 1) == 0.3);

    ConnectomeMatrix two;
    two.k = 2;
    two.rows = {{"a", {0.7, 0.3}}};
    const auto x2 = design_matrix(two);
    CHECK(x2.p == 1);
    CHECK(x2.at(0, 0) == 0.7);

    ConnectomeMatrix degenerate;
    degenerate.k = 1;
    degenerate.rows = {{"a", {1.0}}};
    CHECK_THROWS_AS(design_matrix(degenerate), KTooSmall);
}

TEST_CASE("reference-column choice does not change fitted values at lambda=0") {
    Rng rng(311);
    const std::size_t n = 60;
    const std::size_t k = 5;
    const auto compositions = random_compositions(rng, n, k);

    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& w = compositions.rows[i].omega;
        y[i] = 2.0 + 3.0 * w[0] - 1.5 * w[2] + 0.25 * rng.next_normal();
    }

    const auto drop_last = design_matrix(compositions);

    // same data with the first column as the reference instead
    PredictorMatrix drop_first;
    drop_first.n = n;
    drop_first.p = k - 1;
    drop_first.values.resize(n * (k - 1));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 1; j < k; ++j) {
            drop_first.values[(j - 1) * n + i] = compositions.rows[i].omega[j];
        }
    }

    const auto fit_a = fit_enet(drop_last, y, 0.0, 1.0);
    const auto fit_b = fit_enet(drop_first, y, 0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(fit_a.predict_row(drop_last, i) ==
              doctest::Approx(fit_b.predict_row(drop_first, i)).epsilon(1e-8));
    }
}

TEST_CASE("full shrinkage at lambda >= lambda_max") {
    Rng rng(313);
    const auto x = random_predictors(rng, 40, 6);
    const auto y = random_response(rng, x, {1, -2, 0, 0, 3, 0}, 0.5, 1.0);

    for (double alpha : {1.0, 0.5}) {
        const auto path = lambda_path(x, y, alpha, 50);
        const auto at_max = fit_enet(x, y, path.front(), alpha);
        CHECK(at_max.active_set().empty());
        double mean = 0.0;
        for (double v : y) mean += v;
        mean /= double(y.size());
        CHECK(at_max.intercept == doctest::Approx(mean).epsilon(1e-12));

        const auto beyond = fit_enet(x, y, path.front() * 2.0, alpha);
        CHECK(beyond.active_set().empty());
    }
}

TEST_CASE("lambda=0 with alpha=1 matches normal-equations OLS to 1e-8") {
    Rng rng(317);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = random_predictors(rng, 50, 10);
        std::vector<double> beta(10, 0.0);
        for (auto& b : beta) b = rng.next_normal();
        const auto y = random_response(rng, x, beta, 1.5, 0.7);

        const auto model = fit_enet(x, y, 0.0, 1.0);
        const auto ols = ppa::test::ols_normal_equations(x, y);

        CHECK(std::abs(model.intercept - ols.intercept) < 1e-8);
        for (std::size_t j = 0; j < 10; ++j) {
            CHECK(std::abs(model.coefficients[j] - ols.coefficients[j]) < 1e-8);
        }
    }
}

TEST_CASE("KKT conditions hold along the path") {
    Rng rng(331);
    for (double alpha : {1.0, 0.6}) {
        const auto x = random_predictors(rng, 50, 10);
        std::vector<double> beta(10, 0.0);
        beta[1] = 2.0;
        beta[4] = -1.0;
        const auto y = random_response(rng, x, beta, 0.0, 1.0);

        const auto path = lambda_path(x, y, alpha, 30);
        for (double lambda : path) {
            const auto model = fit_enet(x, y, lambda, alpha);
            CHECK(kkt_max_violation(x, y, model) <= 1e-6);
        }
    }
}

TEST_CASE("zero-variance predictors are skipped with zero coefficients") {
    Rng rng(337);
    auto x = random_predictors(rng, 30, 4);
    for (std::size_t i = 0; i < x.n; ++i) x.values[2 * x.n + i] = 7.0;  // constant column
    const auto y = random_response(rng, x, {1.0, 0.5, 0.0, -1.0}, 0.0, 0.5);

    const auto model = fit_enet(x, y, 0.01, 1.0);
    CHECK(model.coefficients[2] == 0.0);
    CHECK(model.column_scale[2] == 0.0);
    CHECK(kkt_max_violation(x, y, model) <= 1e-6);
}

TEST_CASE("degenerate response returns an intercept-only model with a warning") {
    Rng rng(347);
    const auto x = random_predictors(rng, 20, 3);
    const std::vector<double> y(20, 4.25);
    const auto model = fit_enet(x, y, 0.1, 1.0);
    CHECK(model.degenerate_response);
    CHECK(model.intercept == doctest::Approx(4.25));
    CHECK(model.active_set().empty());
}

TEST_CASE("lambda_path: shape, monotonicity, and the alpha=0 refusal") {
    Rng rng(349);
    const auto x = random_predictors(rng, 25, 5);
    const auto y = random_response(rng, x, {1, 0, 0, 2, 0}, 0.0, 1.0);

    const auto path = lambda_path(x, y, 1.0, 100, 1e-3);
    REQUIRE(path.size() == 100);
    for (std::size_t i = 1; i < path.size(); ++i) CHECK(path[i] < path[i - 1]);
    CHECK(path.back() == doctest::Approx(path.front() * 1e-3).epsilon(1e-12));

    const auto single = lambda_path(x, y, 1.0, 1);
    REQUIRE(single.size() == 1);
    CHECK(single[0] == path[0]);

    CHECK_THROWS_AS(lambda_path(x, y, 0.0, 10), AlphaZeroPath);
}

TEST_CASE("cv_folds: balanced partition, determinism, too-few-subjects") {
    const auto folds = cv_folds(23, 5, 99);
    REQUIRE(folds.size() == 23);
    std::vector<std::size_t> sizes(5, 0);
    for (auto f : folds) {
        REQUIRE(f < 5);
        ++sizes[f];
    }
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    CHECK(*hi - *lo <= 1);

    CHECK(cv_folds(23, 5, 99) == folds);
    CHECK(cv_folds(23, 5, 100) != folds);
    CHECK_THROWS_AS(cv_folds(3, 5, 1), TooFewSubjects);
    CHECK_THROWS_AS(cv_folds(10, 1, 1), TooFewSubjects);
}

TEST_CASE("cross_validate recovers a noiseless planted signal") {
    Rng rng(353);
    const std::size_t n = 80;
    const auto compositions = random_compositions(rng, n, 8);
    const auto x = design_matrix(compositions);

    std::vector<double> y(n, 0.5);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += 4.0 * x.at(i, 1) - 3.0 * x.at(i, 3) + 2.0 * x.at(i, 6);
    }

    const auto result = cross_validate(x, y, 1.0, 5, 7);
    CHECK(result.cv_mse < 1e-10);
    const auto active = result.model.active_set();
    CHECK(std::find(active.begin(), active.end(), 1) != active.end());
    CHECK(std::find(active.begin(), active.end(), 3) != active.end());
    CHECK(std::find(active.begin(), active.end(), 6) != active.end());
}

TEST_CASE("cross_validate near the null model on pure noise") {
    Rng rng(359);
    const std::size_t n = 500;
    const auto compositions = random_compositions(rng, n, 10);
    const auto x = design_matrix(compositions);
    std::vector<double> y(n);
    for (auto& v : y) v = rng.next_normal();

    const auto cv = cross_validate(x, y, 1.0, 5, 11);
    const auto null = null_model_mse(y, 5, 11);
    CHECK(cv.cv_mse <= 1.05 * null.cv_mse);
    CHECK(cv.cv_mse >= 0.95 * null.cv_mse);
    CHECK(cv.fold_of == null.fold_of);  // shared folds at equal seed
}

TEST_CASE("cross_validate is deterministic") {
    Rng rng(367);
    const auto x = random_predictors(rng, 40, 5);
    const auto y = random_response(rng, x, {1, 0, -1, 0, 2}, 0.0, 1.0);

    const auto a = cross_validate(x, y, 1.0, 4, 17);
    const auto b = cross_validate(x, y, 1.0, 4, 17);
    CHECK(a.chosen_lambda == b.chosen_lambda);
    CHECK(a.cv_mse == b.cv_mse);
    CHECK(a.fold_of == b.fold_of);
    CHECK(a.model.coefficients == b.model.coefficients);
}

TEST_CASE("null model: constant response, hand-computed case, variance oracle") {
    CHECK(null_model_mse(std::vector<double>(12, 3.0), 3, 1).cv_mse == 0.0);

    // y = +1,-1,+1,-1 over 2 folds: fold means determine the held-out MSE
    const std::vector<double> y = {1.0, -1.0, 1.0, -1.0};
    const auto folds = cv_folds(4, 2, 5);
    const auto result = null_model_mse(y, 2, 5);
    for (std::size_t f = 0; f < 2; ++f) {
        double train_sum = 0.0;
        double train_n = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            if (folds[i] != f) {
                train_sum += y[i];
                train_n += 1.0;
            }
        }
        const double mean = train_sum / train_n;
        double sse = 0.0;
        double test_n = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            if (folds[i] == f) {
                sse += (y[i] - mean) * (y[i] - mean);
                test_n += 1.0;
            }
        }
        CHECK(result.fold_mse[f] == doctest::Approx(sse / test_n).epsilon(1e-15));
    }

    // large-sample: null CV MSE approaches the sample variance
    Rng rng(373);
    std::vector<double> gaussian(2000);
    for (auto& v : gaussian) v = 5.0 + 2.0 * rng.next_normal();
    const auto null = null_model_mse(gaussian, 5, 3);
    double mean = 0.0;
    for (double v : gaussian) mean += v;
    mean /= double(gaussian.size());
    double variance = 0.0;
    for (double v : gaussian) variance += (v - mean) * (v - mean);
    variance /= double(gaussian.size());
    CHECK(std::abs(null.cv_mse - variance) / variance < 0.02);
}

TEST_CASE("active_report: empty set, fixed example, bound on random instances") {
    SparseLinearModel zero;
    zero.coefficients = {0.0, 0.0, 0.0};
    const auto empty = active_report(zero, {10, 20, 30, 40});
    CHECK(empty.active_indices.empty());
    CHECK(empty.m_s == 0);
    CHECK(empty.active_fiber_count == 0);

    SparseLinearModel two;
    two.coefficients = {0.0, 1.5, 0.0, -0.25};
    const auto report = active_report(two, {10, 20, 30, 40, 9});
    CHECK(report.active_indices == std::vector<std::size_t>{1, 3});
    CHECK(report.active_fiber_count == 60);

    SparseLinearModel bad;
    bad.coefficients = {1.0};
    CHECK_THROWS_AS(active_report(bad, {1, 2, 3}), SizeMismatch);

    Rng rng(379);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = 2 + rng.next_index(10);
        SparseLinearModel model;
        model.coefficients.resize(k - 1);
        for (auto& c : model.coefficients) {
            c = rng.next_double() < 0.5 ? 0.0 : rng.next_normal();
        }
        std::vector<std::uint64_t> sizes(k);
        std::uint64_t m = 0;
        for (auto& s : sizes) {
            s = rng.next_index(100);
            m += s;
        }
        const auto r = active_report(model, sizes);
        CHECK(r.active_fiber_count <= m);
    }
}

TEST_CASE("active-set size shrinks to zero at the top of the path") {
    Rng rng(383);
    const auto x = random_predictors(rng, 60, 12);
    std::vector<double> beta(12, 0.0);
    beta[0] = 2.0;
    beta[5] = -1.0;
    const auto y = random_response(rng, x, beta, 0.0, 0.5);

    const auto path = lambda_path(x, y, 1.0, 40);
    CHECK(fit_enet(x, y, path.front(), 1.0).active_set().empty());
    // and the bottom of the path keeps the true signal
    const auto dense = fit_enet(x, y, path.back(), 1.0);
    const auto active = dense.active_set();
    CHECK(std::find(active.begin(), active.end(), 0) != active.end());
    CHECK(std::find(active.begin(), active.end(), 5) != active.end());
}

TEST_CASE("vectorize_apa flattens the upper triangle") {
    ConnectivityMatrix w = ConnectivityMatrix::zeros(3, SummaryKind::Count);
    w.at(0, 1) = 5;
    w.at(1, 0) = 5;
    w.at(0, 2) = 7;
    w.at(2, 0) = 7;
    w.at(1, 2) = 9;
    w.at(2, 1) = 9;
    w.at(1, 1) = 99;  // diagonal ignored
    CHECK(vectorize_apa(w) == std::vector<double>{5, 7, 9});

    ConnectivityMatrix big = ConnectivityMatrix::zeros(80, SummaryKind::Count);
    CHECK(vectorize_apa(big).size() == 3160);

    ConnectivityMatrix rect;
    rect.rows = 2;
    rect.cols = 3;
    rect.values.assign(6, 0.0);
    CHECK_THROWS_AS(vectorize_apa(rect), NonSquare);
}

TEST_CASE("trait table CSV round-trip and alignment") {
    ppa::test::TempDir dir("traits");
    TraitTable table;
    table.subject_ids = {"s2", "s0", "s1"};
    table.names = {"score_a", "score_b"};
    table.columns = {{1.5, -2.0, 0.25}, {10, 20, 30}};
    const auto path = dir / "traits.csv";
    write_traits_csv(table, path);

    const auto loaded = read_traits_csv(path);
    CHECK(loaded.subject_ids == table.subject_ids);
    CHECK(loaded.names == table.names);
    CHECK(loaded.columns == table.columns);

    const auto aligned = align_traits(loaded, {"s0", "s1", "s2"});
    CHECK(aligned.columns[0] == std::vector<double>{-2.0, 0.25, 1.5});
    CHECK(aligned.columns[1] == std::vector<double>{20, 30, 10});
    CHECK_THROWS_AS(align_traits(loaded, {"s0", "missing"}), SizeMismatch);
}
