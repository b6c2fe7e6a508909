#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "parcellate/atlas.hpp"
#include "parcellate/connectome.hpp"

namespace ppa {

// Trait scores aligned with the cohort's subject order.
struct TraitTable {
    std::vector<std::string> subject_ids;
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;  // one column per trait

    std::size_t n_subjects() const { return subject_ids.size(); }
    std::size_t n_traits() const { return names.size(); }
};

TraitTable read_traits_csv(const std::filesystem::path& path);
void write_traits_csv(const TraitTable& table, const std::filesystem::path& path);

// Reorders rows to match `subject_ids`; every id must be present.
TraitTable align_traits(const TraitTable& table, const std::vector<std::string>& subject_ids);

// Dense column-major predictor matrix.
struct PredictorMatrix {
    std::size_t n = 0;
    std::size_t p = 0;
    std::vector<double> values;  // column-major, n * p

    double at(std::size_t row, std::size_t col) const { return values[col * n + row]; }
    double* column(std::size_t col) { return values.data() + col * n; }
    const double* column(std::size_t col) const { return values.data() + col * n; }
};

// Drops the last bundle column as the compositional reference; the remaining
// K-1 columns keep index order.
PredictorMatrix design_matrix(const ConnectomeMatrix& connectome);

// Upper triangle (excluding diagonal) of a square connectivity matrix,
// flattened row-major into p(p-1)/2 predictors.
std::vector<double> vectorize_apa(const ConnectivityMatrix& w);

struct SparseLinearModel {
    std::string trait_name;
    double intercept = 0.0;
    std::vector<double> coefficients;  // original predictor scale
    double lambda = 0.0;
    double alpha = 1.0;
    std::vector<double> column_mean;
    std::vector<double> column_scale;  // 0 marks a constant column (skipped)
    bool degenerate_response = false;

    std::vector<std::size_t> active_set() const;
    double predict_row(const PredictorMatrix& x, std::size_t row) const;
};

// Cyclic coordinate descent with soft thresholding on standardized
// predictors and centred response, minimizing
//   (1/2n) sum (y - b0 - x'b)^2 + lambda * (alpha |b|_1 + (1-alpha)/2 |b|_2^2).
// Coefficients are mapped back to the original scale.
SparseLinearModel fit_enet(const PredictorMatrix& x, const std::vector<double>& y, double lambda,
                           double alpha);

// Max KKT violation of a fitted model, evaluated on the standardized scale.
double kkt_max_violation(const PredictorMatrix& x, const std::vector<double>& y,
                         const SparseLinearModel& model);

// Log-spaced sequence from lambda_max = max_j |x_j' y_c| / (n alpha) down to
// eps * lambda_max.
std::vector<double> lambda_path(const PredictorMatrix& x, const std::vector<double>& y,
                                double alpha, std::size_t n_lambda = 100, double eps = 1e-3);

// Deterministic fold labels: seeded shuffle, then contiguous split with
// sizes differing by at most one.
std::vector<std::size_t> cv_folds(std::size_t n, std::size_t folds, std::uint64_t seed);

struct CvResult {
    std::vector<double> lambdas;       // descending path (empty for the null model)
    std::vector<double> mean_mse;      // held-out MSE per lambda
    std::vector<double> fold_mse;      // per fold, at the chosen lambda
    double chosen_lambda = 0.0;
    double cv_mse = 0.0;               // mean held-out MSE at the chosen lambda
    std::uint64_t seed = 0;
    std::vector<std::size_t> fold_of;  // per subject
    SparseLinearModel model;           // refit on the full data
};

// K-fold CV over the lambda path; chosen lambda minimizes mean held-out MSE,
// ties resolved toward the larger lambda. Refits on the full data.
CvResult cross_validate(const PredictorMatrix& x, const std::vector<double>& y, double alpha,
                        std::size_t folds, std::uint64_t seed, std::size_t n_lambda = 100,
                        double eps = 1e-3);

// Intercept-only reference: predicts each held-out fold with the training
// fold mean. Shares fold assignment with cross_validate at equal seeds.
CvResult null_model_mse(const std::vector<double>& y, std::size_t folds, std::uint64_t seed);

struct ActiveBundleReport {
    std::string trait_name;
    std::vector<std::size_t> active_indices;
    std::size_t m_s = 0;                   // |active_indices|
    std::uint64_t active_fiber_count = 0;  // population fibers in active bundles
};

// sizes must come from bundle_sizes on the same K (length = coefficients + 1).
ActiveBundleReport active_report(const SparseLinearModel& model,
                                 const std::vector<std::uint64_t>& sizes);

}  // namespace ppa
