// parcellate: population fiber-bundle parcellation of tractography cohorts.
//
// Subcommands cover the whole pipeline: simulate -> preprocess -> bundle ->
// compose -> fit, plus cv-scan for K sweeps and apa/atlas-align for
// atlas-based connectivity matrices. Every subcommand writes a manifest.json
// with its resolved parameters and input digests; feeding that file back via
// --config replays the run.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "parcellate/atlas.hpp"
#include "parcellate/bundler.hpp"
#include "parcellate/connectome.hpp"
#include "parcellate/errors.hpp"
#include "parcellate/manifest.hpp"
#include "parcellate/parallel.hpp"
#include "parcellate/preprocess.hpp"
#include "parcellate/regress.hpp"
#include "parcellate/rng.hpp"
#include "parcellate/synth.hpp"
#include "parcellate/tracts_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<ppa::io::TractFormat> parse_format(const std::string& format) {
    if (format.empty() || format == "auto") return std::nullopt;
    if (format == "ppaf") return ppa::io::TractFormat::Ppaf;
    if (format == "csv") return ppa::io::TractFormat::Csv;
    throw ppa::InvalidParameter("unknown tract format '" + format + "'");
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json digest_inputs(const std::vector<fs::path>& paths) {
    json out = json::object();
    for (const auto& path : paths) {
        if (fs::is_directory(path)) {
            std::vector<fs::path> files;
            for (const auto& entry : fs::directory_iterator(path)) {
                if (!entry.is_regular_file()) continue;
                const auto ext = entry.path().extension().string();
                if (ext == ".ppaf" || ext == ".csv") files.push_back(entry.path());
            }
            std::sort(files.begin(), files.end());
            for (const auto& f : files) out[f.string()] = hex64(ppa::fnv1a64_file(f));
        } else if (fs::is_regular_file(path)) {
            out[path.string()] = hex64(ppa::fnv1a64_file(path));
        }
    }
    return out;
}

void emit_manifest(const std::string& subcommand, const json& parameters,
                   const std::vector<fs::path>& inputs, std::uint64_t seed,
                   const std::string& started, const fs::path& dir) {
    ppa::RunManifest manifest;
    manifest.subcommand = subcommand;
    manifest.parameters = parameters;
    manifest.input_digests = digest_inputs(inputs);
    manifest.seed = seed;
    manifest.started_at = started;
    manifest.finished_at = ppa::timestamp_utc();
    ppa::write_manifest(manifest, dir);
}

// --config merge: config values become argv entries placed ahead of the
// user's flags, and every option takes the last value it sees, so explicit
// flags win. A manifest file replays through its "parameters" object.
// simulate is exempt: there --config is the synthetic cohort description.
std::vector<std::string> merge_config_argv(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    if (args.size() >= 2 && args[1] == "simulate") return args;
    std::string config_path;
    std::vector<std::string> cleaned;
    cleaned.reserve(args.size());
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw ppa::InvalidParameter("--config needs a file path");
            config_path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
        } else {
            cleaned.push_back(args[i]);
        }
    }
    if (config_path.empty()) return cleaned;
    if (cleaned.size() < 2) {
        throw ppa::InvalidParameter("--config requires a subcommand");
    }

    std::ifstream in(config_path);
    if (!in) throw ppa::IoFailure("cannot open config '" + config_path + "'");
    json config;
    try {
        in >> config;
    } catch (const json::exception& e) {
        throw ppa::InvalidParameter("config '" + config_path + "': " + e.what());
    }
    if (config.contains("parameters")) config = config["parameters"];
    if (!config.is_object()) {
        throw ppa::InvalidParameter("config '" + config_path + "' must hold a JSON object");
    }

    std::vector<std::string> merged;
    merged.push_back(cleaned[0]);
    merged.push_back(cleaned[1]);  // subcommand
    for (const auto& [key, value] : config.items()) {
        if (value.is_boolean()) {
            if (value.get<bool>()) merged.push_back("--" + key);
            continue;
        }
        merged.push_back("--" + key);
        if (value.is_string()) {
            merged.push_back(value.get<std::string>());
        } else {
            merged.push_back(value.dump());
        }
    }
    merged.insert(merged.end(), cleaned.begin() + 2, cleaned.end());
    return merged;
}

struct DesignCsv {
    std::vector<std::string> subject_ids;
    std::vector<std::string> column_names;
    ppa::PredictorMatrix x;
};

// Generic numeric design CSV: header subject_id,<col>,...
DesignCsv read_design_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ppa::IoFailure("cannot open '" + path.string() + "' for reading");
    const std::string name = path.filename().string();

    std::string line;
    if (!std::getline(in, line)) throw ppa::EmptyFile(name + ": file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    DesignCsv out;
    std::size_t start = 0;
    std::vector<std::string> header;
    for (;;) {
        const auto comma = line.find(',', start);
        if (comma == std::string::npos) {
            header.push_back(line.substr(start));
            break;
        }
        header.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    if (header.size() < 2 || header[0] != "subject_id") {
        throw ppa::MalformedRow(name + ": header must be subject_id,<col>,...");
    }
    out.column_names.assign(header.begin() + 1, header.end());

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        start = 0;
        for (;;) {
            const auto comma = line.find(',', start);
            if (comma == std::string::npos) {
                fields.push_back(line.substr(start));
                break;
            }
            fields.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        if (fields.size() != header.size()) {
            throw ppa::MalformedRow(name + ":" + std::to_string(line_no) + ": expected " +
                                    std::to_string(header.size()) + " fields");
        }
        out.subject_ids.push_back(fields[0]);
        std::vector<double> row;
        for (std::size_t c = 1; c < fields.size(); ++c) {
            double v = 0.0;
            const auto [p, ec] =
                std::from_chars(fields[c].data(), fields[c].data() + fields[c].size(), v);
            if (ec != std::errc{} || p != fields[c].data() + fields[c].size()) {
                throw ppa::MalformedRow(name + ":" + std::to_string(line_no) + ": bad number '" +
                                        fields[c] + "'");
            }
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ppa::EmptyFile(name + ": no data rows");

    out.x.n = rows.size();
    out.x.p = out.column_names.size();
    out.x.values.resize(out.x.n * out.x.p);
    for (std::size_t i = 0; i < out.x.n; ++i) {
        for (std::size_t j = 0; j < out.x.p; ++j) out.x.values[j * out.x.n + i] = rows[i][j];
    }
    return out;
}

void append_float17(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

json fit_trait_report(const ppa::CvResult& cv, const ppa::CvResult& null,
                      const std::vector<std::uint64_t>* sizes) {
    json trait;
    trait["chosen_lambda"] = cv.chosen_lambda;
    trait["cv_mse"] = cv.cv_mse;
    trait["null_mse"] = null.cv_mse;
    const auto active = cv.model.active_set();
    trait["n_active"] = active.size();
    trait["active_indices"] = active;
    trait["coefficients"] = cv.model.coefficients;
    trait["intercept"] = cv.model.intercept;
    trait["fold_mse"] = cv.fold_mse;
    if (cv.model.degenerate_response) trait["degenerate_response"] = true;
    if (sizes != nullptr) {
        const auto report = ppa::active_report(cv.model, *sizes);
        trait["active_fiber_count"] = report.active_fiber_count;
    }
    return trait;
}

// ---- subcommand runners ----

struct CommonFlags {
    std::string format = "auto";
    int threads = 0;
};

int run_simulate(const std::string& config_path, const std::string& out_dir,
                 const std::string& atlas_out, std::int64_t seed_override,
                 std::uint32_t atlas_grid) {
    const std::string started = ppa::timestamp_utc();
    auto config = ppa::synth_config_from_json_file(config_path);
    if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);

    const auto result = ppa::generate(config);

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    for (const auto& subject : result.cohort.subjects) {
        ppa::io::write_ppaf(subject, dir / (subject.subject_id + ".ppaf"));
    }
    ppa::write_traits_csv(result.traits, dir / "traits.csv");
    ppa::write_truth_json(result.truth, dir / "truth.json");
    ppa::write_synth_config_json(config, dir / "synth_config.json");
    if (!atlas_out.empty()) {
        ppa::save_atlas(ppa::make_synthetic_atlas(config, atlas_grid), atlas_out);
    }

    json params;
    params["config"] = config_path;
    params["out"] = out_dir;
    if (!atlas_out.empty()) {
        params["atlas-out"] = atlas_out;
        params["atlas-grid"] = atlas_grid;
    }
    params["seed"] = config.seed;
    emit_manifest("simulate", params, {fs::path(config_path)}, config.seed, started, dir);

    std::cerr << "simulate: " << result.cohort.subjects.size() << " subjects, "
              << result.cohort.total_fibers << " fibers -> " << out_dir << "\n";
    return 0;
}

int run_preprocess(const std::string& in_dir, const std::string& out_dir, double qb_threshold,
                   double qb_min_frac, std::size_t resample_points, const CommonFlags& common) {
    const std::string started = ppa::timestamp_utc();
    const auto format = parse_format(common.format);
    const auto cohort = ppa::io::load_cohort(in_dir, format);

    const fs::path dir(out_dir);
    fs::create_directories(dir);

    std::vector<ppa::SubjectTract> filtered(cohort.subjects.size());
    ppa::parallel_for(cohort.subjects.size(), ppa::resolve_thread_count(common.threads),
                      [&](std::size_t i) {
                          filtered[i] = ppa::filter_outliers(cohort.subjects[i], qb_threshold,
                                                             qb_min_frac, resample_points);
                      });

    json report = json::array();
    for (std::size_t i = 0; i < filtered.size(); ++i) {
        ppa::io::write_ppaf(filtered[i], dir / (filtered[i].subject_id + ".ppaf"));
        json entry;
        entry["subject_id"] = filtered[i].subject_id;
        entry["kept"] = filtered[i].streamlines.size();
        entry["removed"] = cohort.subjects[i].streamlines.size() - filtered[i].streamlines.size();
        report.push_back(entry);
    }
    {
        std::ofstream out(dir / "preprocess_report.json", std::ios::binary | std::ios::trunc);
        out << report.dump(2) << '\n';
        if (!out) throw ppa::IoFailure("write failed on preprocess_report.json");
    }

    json params;
    params["in"] = in_dir;
    params["out"] = out_dir;
    params["qb-threshold"] = qb_threshold;
    params["qb-min-frac"] = qb_min_frac;
    params["resample"] = resample_points;
    params["format"] = common.format;
    emit_manifest("preprocess", params, {fs::path(in_dir)}, 0, started, dir);
    return 0;
}

std::size_t resolve_iterations(const std::string& iters, std::size_t m, std::size_t batch) {
    if (iters == "auto") return ppa::auto_iterations(m, batch);
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(iters.data(), iters.data() + iters.size(), v);
    if (ec != std::errc{} || p != iters.data() + iters.size() || v == 0) {
        throw ppa::InvalidParameter("--iters must be a positive integer or 'auto'");
    }
    return v;
}

int run_bundle(const std::string& in_dir, std::size_t k, std::size_t batch,
               const std::string& iters, std::uint64_t seed, const std::string& model_path,
               const CommonFlags& common) {
    const std::string started = ppa::timestamp_utc();
    const auto cohort = ppa::io::load_cohort(in_dir, parse_format(common.format));
    const auto data = ppa::extract_endpoints(cohort);
    const std::size_t iterations = resolve_iterations(iters, data.size(), batch);

    const auto model = ppa::fit(data, k, batch, iterations, seed);
    const auto empty = model.empty_bundles();
    if (!empty.empty()) {
        std::cerr << "bundle: warning: " << empty.size()
                  << " centre(s) never received an update\n";
    }
    ppa::save_model(model, model_path);

    json params;
    params["in"] = in_dir;
    params["k"] = k;
    params["batch"] = batch;
    params["iters"] = iters;
    params["seed"] = seed;
    params["model"] = model_path;
    params["format"] = common.format;
    emit_manifest("bundle", params, {fs::path(in_dir)}, seed, started,
                  fs::path(model_path).parent_path().empty()
                      ? fs::path(".")
                      : fs::path(model_path).parent_path());

    std::cerr << "bundle: fitted K=" << k << " on " << data.size() << " fibers ("
              << iterations << " iterations)\n";
    return 0;
}

int run_compose(const std::string& in_dir, const std::string& model_path,
                const std::string& omega_path, const std::string& sizes_path,
                const CommonFlags& common) {
    const std::string started = ppa::timestamp_utc();
    const auto cohort = ppa::io::load_cohort(in_dir, parse_format(common.format));
    const auto data = ppa::extract_endpoints(cohort);
    const auto model = ppa::load_model(model_path);
    const auto assignment = ppa::assign(model, data);

    const auto matrix = ppa::compose(assignment, data, cohort, model.k);
    ppa::write_omega_csv(matrix, omega_path);
    if (!sizes_path.empty()) {
        ppa::write_sizes_csv(ppa::bundle_sizes(assignment, model.k), sizes_path);
    }

    json params;
    params["in"] = in_dir;
    params["model"] = model_path;
    params["omega"] = omega_path;
    if (!sizes_path.empty()) params["sizes"] = sizes_path;
    params["format"] = common.format;
    const fs::path parent = fs::path(omega_path).parent_path();
    emit_manifest("compose", params, {fs::path(in_dir), fs::path(model_path)}, 0, started,
                  parent.empty() ? fs::path(".") : parent);
    return 0;
}

int run_fit(const std::string& omega_path, const std::string& design_path,
            const std::string& traits_path, double alpha, std::size_t folds, std::uint64_t seed,
            std::size_t n_lambda, double lambda_min_ratio, const std::string& sizes_path,
            const std::string& out_path, const CommonFlags& common) {
    const std::string started = ppa::timestamp_utc();
    if (omega_path.empty() == design_path.empty()) {
        throw ppa::InvalidParameter("pass exactly one of --omega or --design");
    }

    std::vector<std::string> subject_ids;
    ppa::PredictorMatrix x;
    if (!omega_path.empty()) {
        const auto omega = ppa::read_omega_csv(omega_path);
        for (const auto& row : omega.rows) subject_ids.push_back(row.subject_id);
        x = ppa::design_matrix(omega);
    } else {
        auto design = read_design_csv(design_path);
        subject_ids = design.subject_ids;
        x = std::move(design.x);
    }

    const auto traits = ppa::align_traits(ppa::read_traits_csv(traits_path), subject_ids);

    std::vector<std::uint64_t> sizes;
    if (!sizes_path.empty()) sizes = ppa::read_sizes_csv(sizes_path);

    std::vector<json> per_trait(traits.n_traits());
    ppa::parallel_for(traits.n_traits(), ppa::resolve_thread_count(common.threads),
                      [&](std::size_t t) {
                          auto cv = ppa::cross_validate(x, traits.columns[t], alpha, folds, seed,
                                                        n_lambda, lambda_min_ratio);
                          cv.model.trait_name = traits.names[t];
                          const auto null = ppa::null_model_mse(traits.columns[t], folds, seed);
                          per_trait[t] =
                              fit_trait_report(cv, null, sizes.empty() ? nullptr : &sizes);
                      });

    json report;
    report["alpha"] = alpha;
    report["folds"] = folds;
    report["seed"] = seed;
    json traits_json = json::object();
    for (std::size_t t = 0; t < traits.n_traits(); ++t) {
        traits_json[traits.names[t]] = per_trait[t];
    }
    report["traits"] = traits_json;

    {
        std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
        if (!out) throw ppa::IoFailure("cannot open '" + out_path + "' for writing");
        out << report.dump(2) << '\n';
        if (!out) throw ppa::IoFailure("write failed on '" + out_path + "'");
    }

    json params;
    if (!omega_path.empty()) params["omega"] = omega_path;
    if (!design_path.empty()) params["design"] = design_path;
    params["traits"] = traits_path;
    params["alpha"] = alpha;
    params["folds"] = folds;
    params["seed"] = seed;
    params["lambdas"] = n_lambda;
    params["lambda-min-ratio"] = lambda_min_ratio;
    if (!sizes_path.empty()) params["sizes"] = sizes_path;
    params["out"] = out_path;
    std::vector<fs::path> inputs = {fs::path(traits_path)};
    if (!omega_path.empty()) inputs.push_back(fs::path(omega_path));
    if (!design_path.empty()) inputs.push_back(fs::path(design_path));
    if (!sizes_path.empty()) inputs.push_back(fs::path(sizes_path));
    const fs::path parent = fs::path(out_path).parent_path();
    emit_manifest("fit", params, inputs, seed, started,
                  parent.empty() ? fs::path(".") : parent);
    return 0;
}

std::vector<std::size_t> parse_grid(const std::string& grid) {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= grid.size()) {
        const auto comma = grid.find(',', start);
        const std::string token =
            grid.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!token.empty()) {
            std::size_t v = 0;
            const auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
            if (ec != std::errc{} || p != token.data() + token.size() || v == 0) {
                throw ppa::InvalidParameter("bad K grid entry '" + token + "'");
            }
            out.push_back(v);
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw ppa::InvalidParameter("empty K grid");
    return out;
}

int run_cv_scan(const std::string& in_dir, const std::string& traits_path,
                const std::string& k_grid, std::size_t batch, double alpha, std::size_t folds,
                std::uint64_t seed, const std::string& out_path, const CommonFlags& common) {
    const std::string started = ppa::timestamp_utc();
    const auto cohort = ppa::io::load_cohort(in_dir, parse_format(common.format));
    const auto data = ppa::extract_endpoints(cohort);
    std::vector<std::string> subject_ids;
    for (const auto& subject : cohort.subjects) subject_ids.push_back(subject.subject_id);
    const auto traits = ppa::align_traits(ppa::read_traits_csv(traits_path), subject_ids);
    const auto grid = parse_grid(k_grid);

    std::string csv = "k,trait,chosen_lambda,cv_mse,null_mse,n_active,active_fiber_count\n";
    for (const std::size_t k : grid) {
        const std::uint64_t stage_seed =
            ppa::derive_seed(seed, "cv-scan-k" + std::to_string(k));
        const auto model =
            ppa::fit(data, k, batch, ppa::auto_iterations(data.size(), batch), stage_seed);
        const auto assignment = ppa::assign(model, data);
        const auto omega = ppa::compose(assignment, data, cohort, k);
        const auto sizes = ppa::bundle_sizes(assignment, k);
        const auto x = ppa::design_matrix(omega);

        std::vector<std::string> lines(traits.n_traits());
        ppa::parallel_for(
            traits.n_traits(), ppa::resolve_thread_count(common.threads), [&](std::size_t t) {
                const auto cv =
                    ppa::cross_validate(x, traits.columns[t], alpha, folds, seed);
                const auto null = ppa::null_model_mse(traits.columns[t], folds, seed);
                const auto report = ppa::active_report(cv.model, sizes);
                std::string line = std::to_string(k) + "," + traits.names[t] + ",";
                append_float17(line, cv.chosen_lambda);
                line += ',';
                append_float17(line, cv.cv_mse);
                line += ',';
                append_float17(line, null.cv_mse);
                line += ',' + std::to_string(report.m_s) + ',' +
                        std::to_string(report.active_fiber_count) + '\n';
                lines[t] = line;
            });
        for (const auto& line : lines) csv += line;
        std::cerr << "cv-scan: finished K=" << k << "\n";
    }

    {
        std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
        if (!out) throw ppa::IoFailure("cannot open '" + out_path + "' for writing");
        out << csv;
        if (!out) throw ppa::IoFailure("write failed on '" + out_path + "'");
    }

    json params;
    params["in"] = in_dir;
    params["traits"] = traits_path;
    params["k-grid"] = k_grid;
    params["batch"] = batch;
    params["alpha"] = alpha;
    params["folds"] = folds;
    params["seed"] = seed;
    params["out"] = out_path;
    params["format"] = common.format;
    const fs::path parent = fs::path(out_path).parent_path();
    emit_manifest("cv-scan", params, {fs::path(in_dir), fs::path(traits_path)}, seed, started,
                  parent.empty() ? fs::path(".") : parent);
    return 0;
}

int run_apa(const std::string& in_dir, const std::string& atlas_path, const std::string& kind_str,
            const std::string& out_dir, const CommonFlags& common) {
    const std::string started = ppa::timestamp_utc();
    const auto cohort = ppa::io::load_cohort(in_dir, parse_format(common.format));
    const auto atlas = ppa::load_atlas(atlas_path);
    const auto kind = ppa::summary_kind_from_string(kind_str);

    const fs::path dir(out_dir);
    fs::create_directories(dir);

    std::vector<ppa::ConnectivityMatrix> matrices(cohort.subjects.size());
    std::vector<std::size_t> skipped(cohort.subjects.size(), 0);
    ppa::parallel_for(cohort.subjects.size(), ppa::resolve_thread_count(common.threads),
                      [&](std::size_t i) {
                          matrices[i] =
                              ppa::build_apa(cohort.subjects[i], atlas, kind, &skipped[i]);
                      });

    // vectorized upper triangles stacked into one design CSV for fit --design
    std::string design = "subject_id";
    const std::size_t p = atlas.num_rois;
    for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = r + 1; c < p; ++c) {
            design += ",e_" + std::to_string(r) + "_" + std::to_string(c);
        }
    }
    design += '\n';

    json report = json::array();
    for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
        const auto& id = cohort.subjects[i].subject_id;
        ppa::write_matrix_csv(matrices[i], atlas.roi_names, dir / (id + "_" + kind_str + ".csv"));
        design += id;
        for (double v : ppa::vectorize_apa(matrices[i])) {
            design += ',';
            append_float17(design, v);
        }
        design += '\n';
        json entry;
        entry["subject_id"] = id;
        entry["skipped_background"] = skipped[i];
        report.push_back(entry);
    }
    {
        std::ofstream out(dir / "apa_design.csv", std::ios::binary | std::ios::trunc);
        out << design;
        if (!out) throw ppa::IoFailure("write failed on apa_design.csv");
    }
    {
        std::ofstream out(dir / "apa_report.json", std::ios::binary | std::ios::trunc);
        out << report.dump(2) << '\n';
        if (!out) throw ppa::IoFailure("write failed on apa_report.json");
    }

    json params;
    params["in"] = in_dir;
    params["atlas"] = atlas_path;
    params["kind"] = kind_str;
    params["out"] = out_dir;
    params["format"] = common.format;
    emit_manifest("apa", params, {fs::path(in_dir), fs::path(atlas_path)}, 0, started, dir);
    return 0;
}

int run_atlas_align(const std::string& in_dir, const std::string& atlas_path,
                    const std::string& model_path, const std::string& report_path,
                    const std::string& trait, double ratio, const std::string& out_dir,
                    const CommonFlags& common) {
    const std::string started = ppa::timestamp_utc();
    const auto cohort = ppa::io::load_cohort(in_dir, parse_format(common.format));
    const auto data = ppa::extract_endpoints(cohort);
    const auto atlas = ppa::load_atlas(atlas_path);
    const auto model = ppa::load_model(model_path);
    const auto assignment = ppa::assign(model, data);

    std::ifstream report_file(report_path);
    if (!report_file) throw ppa::IoFailure("cannot open '" + report_path + "'");
    json report;
    try {
        report_file >> report;
    } catch (const json::exception& e) {
        throw ppa::MalformedRow("fit report '" + report_path + "': " + e.what());
    }
    if (!report.contains("traits") || !report["traits"].contains(trait)) {
        throw ppa::InvalidParameter("fit report has no trait '" + trait + "'");
    }
    const auto active = report["traits"][trait]["active_indices"].get<std::vector<std::size_t>>();

    const auto w = ppa::build_active_matrix(cohort, atlas, assignment, active, model.k);
    const auto cut = ppa::threshold_matrix(w, ratio);

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    ppa::write_matrix_csv(w, atlas.roi_names, dir / "active_matrix.csv");
    ppa::write_matrix_csv(cut, atlas.roi_names, dir / "active_matrix_thresholded.csv");
    ppa::write_edge_list_csv(cut, atlas.roi_names, dir / "active_edges.csv");

    json params;
    params["in"] = in_dir;
    params["atlas"] = atlas_path;
    params["model"] = model_path;
    params["report"] = report_path;
    params["trait"] = trait;
    params["ratio"] = ratio;
    params["out"] = out_dir;
    params["format"] = common.format;
    emit_manifest("atlas-align", params,
                  {fs::path(in_dir), fs::path(atlas_path), fs::path(model_path),
                   fs::path(report_path)},
                  0, started, dir);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"population fiber-bundle parcellation for tractography cohorts"};
    app.require_subcommand(1);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic cohort");
    std::string sim_config;
    std::string sim_out;
    std::string sim_atlas_out;
    std::int64_t sim_seed = -1;
    std::uint32_t sim_atlas_grid = 16;
    simulate->add_option("--config", sim_config, "synthetic cohort JSON config")->required();
    simulate->add_option("--out", sim_out, "output directory")->required();
    simulate->add_option("--atlas-out", sim_atlas_out, "also write a matching ATL1 atlas");
    simulate->add_option("--atlas-grid", sim_atlas_grid, "synthetic atlas grid resolution");
    simulate->add_option("--seed", sim_seed, "override the config seed");

    // preprocess
    auto* preprocess = app.add_subcommand("preprocess", "outlier-filter a cohort");
    std::string pre_in;
    std::string pre_out;
    double qb_threshold = 20.0;
    double qb_min_frac = 0.01;
    std::size_t resample_points = 12;
    CommonFlags pre_common;
    preprocess->add_option("--in", pre_in, "input cohort directory")->required();
    preprocess->add_option("--out", pre_out, "output directory")->required();
    preprocess->add_option("--qb-threshold", qb_threshold, "cluster distance threshold (mm)");
    preprocess->add_option("--qb-min-frac", qb_min_frac, "minimum cluster fraction kept");
    preprocess->add_option("--resample", resample_points, "resample points for the filter");
    preprocess->add_option("--format", pre_common.format, "tract format: auto|ppaf|csv");
    preprocess->add_option("--threads", pre_common.threads, "worker threads (0 = all cores)");

    // bundle
    auto* bundle = app.add_subcommand("bundle", "fit the population bundle basis");
    std::string bun_in;
    std::size_t bun_k = 400;
    std::size_t bun_batch = 1000;
    std::string bun_iters = "auto";
    std::uint64_t bun_seed = 7;
    std::string bun_model = "model.json";
    CommonFlags bun_common;
    bundle->add_option("--in", bun_in, "input cohort directory")->required();
    bundle->add_option("--k", bun_k, "number of bundles");
    bundle->add_option("--batch", bun_batch, "mini-batch size");
    bundle->add_option("--iters", bun_iters, "iteration count or 'auto'");
    bundle->add_option("--seed", bun_seed, "RNG seed");
    bundle->add_option("--model", bun_model, "output model JSON path");
    bundle->add_option("--format", bun_common.format, "tract format: auto|ppaf|csv");
    bundle->add_option("--threads", bun_common.threads, "worker threads (0 = all cores)");

    // compose
    auto* compose = app.add_subcommand("compose", "build composition vectors");
    std::string com_in;
    std::string com_model;
    std::string com_omega = "omega.csv";
    std::string com_sizes = "sizes.csv";
    CommonFlags com_common;
    compose->add_option("--in", com_in, "input cohort directory")->required();
    compose->add_option("--model", com_model, "bundle model JSON")->required();
    compose->add_option("--omega", com_omega, "output composition CSV");
    compose->add_option("--sizes", com_sizes, "output bundle-size CSV (empty to skip)");
    compose->add_option("--format", com_common.format, "tract format: auto|ppaf|csv");
    compose->add_option("--threads", com_common.threads, "worker threads (0 = all cores)");

    // fit
    auto* fit = app.add_subcommand("fit", "sparse trait regression with cross-validation");
    std::string fit_omega;
    std::string fit_design;
    std::string fit_traits;
    double fit_alpha = 1.0;
    std::size_t fit_folds = 5;
    std::uint64_t fit_seed = 7;
    std::size_t fit_lambdas = 100;
    double fit_eps = 1e-3;
    std::string fit_sizes;
    std::string fit_out = "report.json";
    CommonFlags fit_common;
    fit->add_option("--omega", fit_omega, "composition CSV (drops the reference bundle)");
    fit->add_option("--design", fit_design, "generic design CSV (used as-is)");
    fit->add_option("--traits", fit_traits, "trait CSV")->required();
    fit->add_option("--alpha", fit_alpha, "elastic-net mixing (1 = lasso)");
    fit->add_option("--folds", fit_folds, "CV folds");
    fit->add_option("--seed", fit_seed, "fold RNG seed");
    fit->add_option("--lambdas", fit_lambdas, "path length");
    fit->add_option("--lambda-min-ratio", fit_eps, "path floor as a fraction of lambda_max");
    fit->add_option("--sizes", fit_sizes, "bundle-size CSV for active-fiber counts");
    fit->add_option("--out", fit_out, "output report JSON");
    fit->add_option("--threads", fit_common.threads, "worker threads (0 = all cores)");

    // cv-scan
    auto* cv_scan = app.add_subcommand("cv-scan", "sweep K and record CV error per trait");
    std::string scan_in;
    std::string scan_traits;
    std::string scan_grid = "10,50,100,200,300,400,500";
    std::size_t scan_batch = 1000;
    double scan_alpha = 1.0;
    std::size_t scan_folds = 5;
    std::uint64_t scan_seed = 7;
    std::string scan_out = "scan.csv";
    CommonFlags scan_common;
    cv_scan->add_option("--in", scan_in, "input cohort directory")->required();
    cv_scan->add_option("--traits", scan_traits, "trait CSV")->required();
    cv_scan->add_option("--k-grid", scan_grid, "comma-separated K values");
    cv_scan->add_option("--batch", scan_batch, "mini-batch size");
    cv_scan->add_option("--alpha", scan_alpha, "elastic-net mixing");
    cv_scan->add_option("--folds", scan_folds, "CV folds");
    cv_scan->add_option("--seed", scan_seed, "master seed");
    cv_scan->add_option("--out", scan_out, "output CSV");
    cv_scan->add_option("--format", scan_common.format, "tract format: auto|ppaf|csv");
    cv_scan->add_option("--threads", scan_common.threads, "worker threads (0 = all cores)");

    // apa
    auto* apa = app.add_subcommand("apa", "atlas-based connectivity matrices");
    std::string apa_in;
    std::string apa_atlas;
    std::string apa_kind = "count";
    std::string apa_out;
    CommonFlags apa_common;
    apa->add_option("--in", apa_in, "input cohort directory")->required();
    apa->add_option("--atlas", apa_atlas, "ATL1 atlas file")->required();
    apa->add_option("--kind", apa_kind, "summary: count|ncount|ncount2");
    apa->add_option("--out", apa_out, "output directory")->required();
    apa->add_option("--format", apa_common.format, "tract format: auto|ppaf|csv");
    apa->add_option("--threads", apa_common.threads, "worker threads (0 = all cores)");

    // atlas-align
    auto* align = app.add_subcommand("atlas-align", "project active bundles onto an atlas");
    std::string align_in;
    std::string align_atlas;
    std::string align_model;
    std::string align_report;
    std::string align_trait;
    double align_ratio = 0.5;
    std::string align_out;
    CommonFlags align_common;
    align->add_option("--in", align_in, "input cohort directory")->required();
    align->add_option("--atlas", align_atlas, "ATL1 atlas file")->required();
    align->add_option("--model", align_model, "bundle model JSON")->required();
    align->add_option("--report", align_report, "fit report JSON")->required();
    align->add_option("--trait", align_trait, "trait name from the report")->required();
    align->add_option("--ratio", align_ratio, "threshold ratio on the max entry");
    align->add_option("--out", align_out, "output directory")->required();
    align->add_option("--format", align_common.format, "tract format: auto|ppaf|csv");
    align->add_option("--threads", align_common.threads, "worker threads (0 = all cores)");

    // explicit flags override --config entries
    for (auto* sub : app.get_subcommands({})) {
        for (auto* opt : sub->get_options()) {
            opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        }
    }

    std::vector<std::string> args;
    try {
        args = merge_config_argv(argc, argv);
    } catch (const ppa::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        // CLI11 parses tokens in reverse
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        reversed.pop_back();  // program name
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (simulate->parsed()) {
            return run_simulate(sim_config, sim_out, sim_atlas_out, sim_seed, sim_atlas_grid);
        }
        if (preprocess->parsed()) {
            return run_preprocess(pre_in, pre_out, qb_threshold, qb_min_frac, resample_points,
                                  pre_common);
        }
        if (bundle->parsed()) {
            return run_bundle(bun_in, bun_k, bun_batch, bun_iters, bun_seed, bun_model,
                              bun_common);
        }
        if (compose->parsed()) {
            return run_compose(com_in, com_model, com_omega, com_sizes, com_common);
        }
        if (fit->parsed()) {
            return run_fit(fit_omega, fit_design, fit_traits, fit_alpha, fit_folds, fit_seed,
                           fit_lambdas, fit_eps, fit_sizes, fit_out, fit_common);
        }
        if (cv_scan->parsed()) {
            return run_cv_scan(scan_in, scan_traits, scan_grid, scan_batch, scan_alpha,
                               scan_folds, scan_seed, scan_out, scan_common);
        }
        if (apa->parsed()) {
            return run_apa(apa_in, apa_atlas, apa_kind, apa_out, apa_common);
        }
        if (align->parsed()) {
            return run_atlas_align(align_in, align_atlas, align_model, align_report, align_trait,
                                   align_ratio, align_out, align_common);
        }
    } catch (const ppa::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
