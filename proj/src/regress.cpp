#include "parcellate/regress.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "parcellate/errors.hpp"
#include "parcellate/rng.hpp"

namespace ppa {

namespace {

constexpr double kConvergenceTol = 1e-7;
constexpr std::size_t kMaxCycles = 100000;

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

double parse_double(const std::string& field, const std::string& context) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
        throw MalformedRow(context + ": bad number '" + field + "'");
    }
    return v;
}

double soft_threshold(double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

// Predictors standardized to zero mean and unit (1/n) variance, response
// centred. Constant columns get scale 0 and are skipped by the solver.
struct StandardizedProblem {
    std::size_t n = 0;
    std::size_t p = 0;
    std::vector<double> xs;  // column-major standardized predictors
    std::vector<double> mean;
    std::vector<double> scale;
    std::vector<double> yc;
    double y_mean = 0.0;
    bool y_degenerate = false;

    static StandardizedProblem build(const PredictorMatrix& x, const std::vector<double>& y) {
        if (x.n != y.size()) {
            throw SizeMismatch("predictors have " + std::to_string(x.n) + " rows, response has " +
                               std::to_string(y.size()));
        }
        if (x.n < 2) throw TooFewSubjects("need at least 2 subjects to fit");

        StandardizedProblem prob;
        prob.n = x.n;
        prob.p = x.p;
        prob.mean.resize(x.p);
        prob.scale.resize(x.p);
        prob.xs.assign(x.values.size(), 0.0);

        const double inv_n = 1.0 / static_cast<double>(x.n);
        for (std::size_t j = 0; j < x.p; ++j) {
            const double* col = x.column(j);
            double mu = 0.0;
            for (std::size_t i = 0; i < x.n; ++i) mu += col[i];
            mu *= inv_n;
            double var = 0.0;
            for (std::size_t i = 0; i < x.n; ++i) {
                const double d = col[i] - mu;
                var += d * d;
            }
            var *= inv_n;
            const double sigma = std::sqrt(var);
            prob.mean[j] = mu;
            if (sigma <= 1e-10 * std::max(1.0, std::abs(mu))) {
                prob.scale[j] = 0.0;  // constant column
                continue;
            }
            prob.scale[j] = sigma;
            double* out = prob.xs.data() + j * x.n;
            for (std::size_t i = 0; i < x.n; ++i) out[i] = (col[i] - mu) / sigma;
        }

        double ym = 0.0;
        for (double v : y) ym += v;
        ym *= inv_n;
        prob.y_mean = ym;
        prob.yc.resize(x.n);
        double y_var = 0.0;
        for (std::size_t i = 0; i < x.n; ++i) {
            prob.yc[i] = y[i] - ym;
            y_var += prob.yc[i] * prob.yc[i];
        }
        prob.y_degenerate = (y_var == 0.0);
        return prob;
    }

    // Cyclic coordinate descent at (lambda, alpha); beta is the standardized
    // coefficient vector and doubles as the warm start.
    void solve(double lambda, double alpha, std::vector<double>& beta) const {
        if (lambda < 0.0 || !std::isfinite(lambda)) {
            throw InvalidParameter("lambda must be finite and non-negative");
        }
        if (alpha < 0.0 || alpha > 1.0) throw InvalidParameter("alpha must be in [0,1]");
        if (beta.size() != p) throw SizeMismatch("warm start has wrong length");

        if (y_degenerate) {
            std::fill(beta.begin(), beta.end(), 0.0);
            return;
        }

        std::vector<double> residual = yc;
        for (std::size_t j = 0; j < p; ++j) {
            if (beta[j] == 0.0 || scale[j] == 0.0) continue;
            const double* col = xs.data() + j * n;
            for (std::size_t i = 0; i < n; ++i) residual[i] -= col[i] * beta[j];
        }

        const double inv_n = 1.0 / static_cast<double>(n);
        const double denom = 1.0 + lambda * (1.0 - alpha);
        const double gamma = lambda * alpha;
        // lambda = 0 is plain least squares; drive it tight enough for
        // normal-equations agreement at 1e-8.
        const double tol = lambda == 0.0 ? 1e-9 : kConvergenceTol;

        for (std::size_t cycle = 0; cycle < kMaxCycles; ++cycle) {
            double max_delta = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                if (scale[j] == 0.0) continue;
                const double* col = xs.data() + j * n;
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i) dot += col[i] * residual[i];
                const double rho = dot * inv_n + beta[j];
                const double updated = soft_threshold(rho, gamma) / denom;
                if (updated != beta[j]) {
                    const double diff = beta[j] - updated;
                    for (std::size_t i = 0; i < n; ++i) residual[i] += col[i] * diff;
                    max_delta = std::max(max_delta, std::abs(diff));
                    beta[j] = updated;
                }
            }
            if (max_delta < tol) return;
        }
        throw NoConvergence("coordinate descent did not converge in " +
                            std::to_string(kMaxCycles) + " cycles (lambda=" +
                            std::to_string(lambda) + ")");
    }

    double predict_standardized(const PredictorMatrix& x, std::size_t row,
                                const std::vector<double>& beta) const {
        double value = y_mean;
        for (std::size_t j = 0; j < p; ++j) {
            if (scale[j] == 0.0 || beta[j] == 0.0) continue;
            value += beta[j] * (x.at(row, j) - mean[j]) / scale[j];
        }
        return value;
    }

    SparseLinearModel to_model(const std::vector<double>& beta, double lambda,
                               double alpha) const {
        SparseLinearModel model;
        model.lambda = lambda;
        model.alpha = alpha;
        model.column_mean = mean;
        model.column_scale = scale;
        model.degenerate_response = y_degenerate;
        model.coefficients.assign(p, 0.0);
        double intercept = y_mean;
        for (std::size_t j = 0; j < p; ++j) {
            if (scale[j] == 0.0 || beta[j] == 0.0) continue;
            model.coefficients[j] = beta[j] / scale[j];
            intercept -= model.coefficients[j] * mean[j];
        }
        model.intercept = intercept;
        return model;
    }

    double lambda_max(double alpha) const {
        const double inv_n = 1.0 / static_cast<double>(n);
        double best = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            if (scale[j] == 0.0) continue;
            const double* col = xs.data() + j * n;
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += col[i] * yc[i];
            best = std::max(best, std::abs(dot * inv_n));
        }
        return best / alpha;
    }
};

}  // namespace

TraitTable read_traits_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open '" + path.string() + "' for reading");
    const std::string name = path.filename().string();

    std::string line;
    if (!std::getline(in, line)) throw EmptyFile(name + ": file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_line(line);
    if (header.size() < 2 || header[0] != "subject_id") {
        throw MalformedRow(name + ": header must be subject_id,<trait>,...");
    }

    TraitTable table;
    table.names.assign(header.begin() + 1, header.end());
    table.columns.resize(table.names.size());

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_line(line);
        if (fields.size() != header.size()) {
            throw MalformedRow(name + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " fields");
        }
        table.subject_ids.push_back(fields[0]);
        for (std::size_t c = 1; c < fields.size(); ++c) {
            table.columns[c - 1].push_back(
                parse_double(fields[c], name + ":" + std::to_string(line_no)));
        }
    }
    if (table.subject_ids.empty()) throw EmptyFile(name + ": no data rows");
    return table;
}

void write_traits_csv(const TraitTable& table, const std::filesystem::path& path) {
    std::string out = "subject_id";
    for (const auto& n : table.names) out += "," + n;
    out += '\n';
    char buf[32];
    for (std::size_t i = 0; i < table.subject_ids.size(); ++i) {
        out += table.subject_ids[i];
        for (const auto& col : table.columns) {
            std::snprintf(buf, sizeof(buf), "%.17g", col[i]);
            out += ',';
            out += buf;
        }
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("cannot open '" + path.string() + "' for writing");
    f << out;
    if (!f) throw IoFailure("write failed on '" + path.string() + "'");
}

TraitTable align_traits(const TraitTable& table, const std::vector<std::string>& subject_ids) {
    TraitTable out;
    out.names = table.names;
    out.columns.resize(table.columns.size());
    for (const auto& id : subject_ids) {
        const auto it = std::find(table.subject_ids.begin(), table.subject_ids.end(), id);
        if (it == table.subject_ids.end()) {
            throw SizeMismatch("trait table is missing subject '" + id + "'");
        }
        const std::size_t row = static_cast<std::size_t>(it - table.subject_ids.begin());
        out.subject_ids.push_back(id);
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            out.columns[c].push_back(table.columns[c][row]);
        }
    }
    return out;
}

PredictorMatrix design_matrix(const ConnectomeMatrix& connectome) {
    if (connectome.k < 2) throw KTooSmall("design_matrix: need K >= 2 bundles");
    PredictorMatrix x;
    x.n = connectome.rows.size();
    x.p = connectome.k - 1;  // last bundle is the compositional reference
    x.values.resize(x.n * x.p);
    for (std::size_t i = 0; i < x.n; ++i) {
        const auto& omega = connectome.rows[i].omega;
        if (omega.size() != connectome.k) {
            throw SizeMismatch("design_matrix: row " + std::to_string(i) + " has " +
                               std::to_string(omega.size()) + " entries, expected " +
                               std::to_string(connectome.k));
        }
        for (std::size_t j = 0; j < x.p; ++j) x.values[j * x.n + i] = omega[j];
    }
    return x;
}

std::vector<double> vectorize_apa(const ConnectivityMatrix& w) {
    if (w.rows != w.cols) {
        throw NonSquare("vectorize_apa: matrix is " + std::to_string(w.rows) + "x" +
                        std::to_string(w.cols));
    }
    std::vector<double> out;
    out.reserve(w.rows * (w.rows - 1) / 2);
    for (std::size_t r = 0; r < w.rows; ++r) {
        for (std::size_t c = r + 1; c < w.cols; ++c) out.push_back(w.at(r, c));
    }
    return out;
}

std::vector<std::size_t> SparseLinearModel::active_set() const {
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < coefficients.size(); ++j) {
        if (coefficients[j] != 0.0) active.push_back(j);
    }
    return active;
}

double SparseLinearModel::predict_row(const PredictorMatrix& x, std::size_t row) const {
    double value = intercept;
    for (std::size_t j = 0; j < coefficients.size(); ++j) {
        if (coefficients[j] != 0.0) value += coefficients[j] * x.at(row, j);
    }
    return value;
}

SparseLinearModel fit_enet(const PredictorMatrix& x, const std::vector<double>& y, double lambda,
                           double alpha) {
    const StandardizedProblem prob = StandardizedProblem::build(x, y);
    std::vector<double> beta(x.p, 0.0);
    prob.solve(lambda, alpha, beta);
    return prob.to_model(beta, lambda, alpha);
}

double kkt_max_violation(const PredictorMatrix& x, const std::vector<double>& y,
                         const SparseLinearModel& model) {
    if (model.column_scale.size() != x.p || model.coefficients.size() != x.p || x.n != y.size()) {
        throw SizeMismatch("kkt_max_violation: model/data shape mismatch");
    }
    if (model.degenerate_response) return 0.0;

    const std::size_t n = x.n;
    const double inv_n = 1.0 / static_cast<double>(n);

    double y_mean = 0.0;
    for (double v : y) y_mean += v;
    y_mean *= inv_n;

    // residual of the standardized problem equals the original-scale residual
    std::vector<double> residual(n);
    for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - model.predict_row(x, i);

    const double gamma = model.lambda * model.alpha;
    const double ridge = model.lambda * (1.0 - model.alpha);
    double worst = 0.0;
    for (std::size_t j = 0; j < x.p; ++j) {
        const double sigma = model.column_scale[j];
        if (sigma == 0.0) continue;
        const double mu = model.column_mean[j];
        const double* col = x.column(j);
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += (col[i] - mu) / sigma * residual[i];
        const double gradient = dot * inv_n;
        const double beta_std = model.coefficients[j] * sigma;
        double violation;
        if (beta_std != 0.0) {
            violation = std::abs(gradient - gamma * (beta_std > 0.0 ? 1.0 : -1.0) -
                                 ridge * beta_std);
        } else {
            violation = std::max(0.0, std::abs(gradient) - gamma);
        }
        worst = std::max(worst, violation);
    }
    return worst;
}

std::vector<double> lambda_path(const PredictorMatrix& x, const std::vector<double>& y,
                                double alpha, std::size_t n_lambda, double eps) {
    if (alpha <= 0.0) {
        throw AlphaZeroPath("lambda_path: alpha = 0 has no finite lambda_max; pass a grid");
    }
    if (alpha > 1.0) throw InvalidParameter("alpha must be in (0,1]");
    if (n_lambda < 1) throw InvalidParameter("n_lambda must be at least 1");
    if (!(eps > 0.0) || eps > 1.0) throw InvalidParameter("eps must be in (0,1]");

    const StandardizedProblem prob = StandardizedProblem::build(x, y);
    const double lambda_max = prob.lambda_max(alpha);

    std::vector<double> path;
    path.reserve(n_lambda);
    if (n_lambda == 1) {
        path.push_back(lambda_max);
        return path;
    }
    for (std::size_t i = 0; i < n_lambda; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n_lambda - 1);
        path.push_back(lambda_max * std::pow(eps, t));
    }
    return path;
}

std::vector<std::size_t> cv_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
    if (folds < 2) throw TooFewSubjects("cv_folds: need at least 2 folds");
    if (n < folds) {
        throw TooFewSubjects("cv_folds: " + std::to_string(n) + " subjects cannot fill " +
                             std::to_string(folds) + " folds");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "cv-folds"));
    rng.shuffle(order);

    std::vector<std::size_t> fold_of(n);
    const std::size_t base = n / folds;
    const std::size_t extra = n % folds;
    std::size_t cursor = 0;
    for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i) fold_of[order[cursor++]] = f;
    }
    return fold_of;
}

CvResult cross_validate(const PredictorMatrix& x, const std::vector<double>& y, double alpha,
                        std::size_t folds, std::uint64_t seed, std::size_t n_lambda, double eps) {
    if (x.n != y.size()) throw SizeMismatch("cross_validate: shape mismatch");

    CvResult result;
    result.seed = seed;
    result.lambdas = lambda_path(x, y, alpha, n_lambda, eps);
    result.fold_of = cv_folds(x.n, folds, seed);

    const std::size_t n_path = result.lambdas.size();
    std::vector<std::vector<double>> fold_mse(folds, std::vector<double>(n_path, 0.0));

    for (std::size_t f = 0; f < folds; ++f) {
        std::vector<std::size_t> train_rows;
        std::vector<std::size_t> test_rows;
        for (std::size_t i = 0; i < x.n; ++i) {
            (result.fold_of[i] == f ? test_rows : train_rows).push_back(i);
        }

        PredictorMatrix xtr;
        xtr.n = train_rows.size();
        xtr.p = x.p;
        xtr.values.resize(xtr.n * xtr.p);
        std::vector<double> ytr(train_rows.size());
        for (std::size_t r = 0; r < train_rows.size(); ++r) {
            ytr[r] = y[train_rows[r]];
            for (std::size_t j = 0; j < x.p; ++j) {
                xtr.values[j * xtr.n + r] = x.at(train_rows[r], j);
            }
        }

        const StandardizedProblem prob = StandardizedProblem::build(xtr, ytr);
        std::vector<double> beta(x.p, 0.0);  // warm start carried down the path
        for (std::size_t li = 0; li < n_path; ++li) {
            prob.solve(result.lambdas[li], alpha, beta);
            double sse = 0.0;
            for (std::size_t t : test_rows) {
                const double err = y[t] - prob.predict_standardized(x, t, beta);
                sse += err * err;
            }
            fold_mse[f][li] = sse / static_cast<double>(test_rows.size());
        }
    }

    result.mean_mse.assign(n_path, 0.0);
    for (std::size_t li = 0; li < n_path; ++li) {
        double sum = 0.0;
        for (std::size_t f = 0; f < folds; ++f) sum += fold_mse[f][li];
        result.mean_mse[li] = sum / static_cast<double>(folds);
    }

    // path is descending, so strictly-less keeps the larger lambda on ties
    std::size_t best = 0;
    for (std::size_t li = 1; li < n_path; ++li) {
        if (result.mean_mse[li] < result.mean_mse[best]) best = li;
    }
    result.chosen_lambda = result.lambdas[best];
    result.cv_mse = result.mean_mse[best];
    result.fold_mse.resize(folds);
    for (std::size_t f = 0; f < folds; ++f) result.fold_mse[f] = fold_mse[f][best];

    result.model = fit_enet(x, y, result.chosen_lambda, alpha);
    return result;
}

CvResult null_model_mse(const std::vector<double>& y, std::size_t folds, std::uint64_t seed) {
    CvResult result;
    result.seed = seed;
    result.fold_of = cv_folds(y.size(), folds, seed);
    result.fold_mse.assign(folds, 0.0);

    for (std::size_t f = 0; f < folds; ++f) {
        double train_sum = 0.0;
        std::size_t train_count = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (result.fold_of[i] != f) {
                train_sum += y[i];
                ++train_count;
            }
        }
        const double train_mean = train_sum / static_cast<double>(train_count);
        double sse = 0.0;
        std::size_t test_count = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (result.fold_of[i] == f) {
                const double err = y[i] - train_mean;
                sse += err * err;
                ++test_count;
            }
        }
        result.fold_mse[f] = sse / static_cast<double>(test_count);
    }

    double sum = 0.0;
    for (double v : result.fold_mse) sum += v;
    result.cv_mse = sum / static_cast<double>(folds);

    double full_mean = 0.0;
    for (double v : y) full_mean += v;
    result.model.intercept = full_mean / static_cast<double>(y.size());
    return result;
}

ActiveBundleReport active_report(const SparseLinearModel& model,
                                 const std::vector<std::uint64_t>& sizes) {
    if (sizes.size() != model.coefficients.size() + 1) {
        throw SizeMismatch("active_report: " + std::to_string(sizes.size()) +
                           " bundle sizes for " + std::to_string(model.coefficients.size()) +
                           " coefficients (expect K = coefficients + 1)");
    }
    ActiveBundleReport report;
    report.trait_name = model.trait_name;
    report.active_indices = model.active_set();
    report.m_s = report.active_indices.size();
    for (std::size_t k : report.active_indices) {
        report.active_fiber_count += sizes[k];
    }
    return report;
}

}  // namespace ppa
