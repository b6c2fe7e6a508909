#include "parcellate/connectome.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

#include "parcellate/errors.hpp"

namespace ppa {

namespace {

void append_full_precision(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
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

}  // namespace

ConnectomeMatrix compose(const Assignment& assignment, const EndpointDataset& data,
                         const Cohort& cohort, std::size_t k) {
    if (assignment.size() != data.size()) {
        throw MisalignedAssignment("compose: assignment covers " +
                                   std::to_string(assignment.size()) + " fibers, dataset has " +
                                   std::to_string(data.size()));
    }
    const std::size_t n = cohort.subjects.size();
    std::vector<std::vector<std::uint64_t>> histogram(n, std::vector<std::uint64_t>(k, 0));
    std::vector<std::uint64_t> per_subject(n, 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::size_t subject = data.pairs[i].subject_index;
        const std::uint32_t bundle = assignment.bundle_index[i];
        if (subject >= n) {
            throw MisalignedAssignment("compose: subject index " + std::to_string(subject) +
                                       " out of range");
        }
        if (bundle >= k) {
            throw MisalignedAssignment("compose: bundle index " + std::to_string(bundle) +
                                       " out of range for k=" + std::to_string(k));
        }
        ++histogram[subject][bundle];
        ++per_subject[subject];
    }

    ConnectomeMatrix matrix;
    matrix.k = k;
    matrix.rows.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        if (per_subject[s] == 0) {
            throw MisalignedAssignment("compose: subject '" + cohort.subjects[s].subject_id +
                                       "' has no fibers in the dataset");
        }
        CompositionVector row;
        row.subject_id = cohort.subjects[s].subject_id;
        row.omega.resize(k);
        const double m_i = static_cast<double>(per_subject[s]);
        for (std::size_t b = 0; b < k; ++b) {
            row.omega[b] = static_cast<double>(histogram[s][b]) / m_i;
        }
        matrix.rows.push_back(std::move(row));
    }
    return matrix;
}

std::vector<std::uint64_t> bundle_sizes(const Assignment& assignment, std::size_t k) {
    std::vector<std::uint64_t> sizes(k, 0);
    for (std::uint32_t bundle : assignment.bundle_index) {
        if (bundle >= k) {
            throw MisalignedAssignment("bundle_sizes: bundle index " + std::to_string(bundle) +
                                       " out of range for k=" + std::to_string(k));
        }
        ++sizes[bundle];
    }
    return sizes;
}

void write_omega_csv(const ConnectomeMatrix& matrix, const std::filesystem::path& path) {
    std::string out = "subject_id";
    for (std::size_t b = 0; b < matrix.k; ++b) {
        out += ",omega_" + std::to_string(b);
    }
    out += '\n';
    for (const auto& row : matrix.rows) {
        out += row.subject_id;
        for (double v : row.omega) {
            out += ',';
            append_full_precision(out, v);
        }
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("cannot open '" + path.string() + "' for writing");
    f << out;
    if (!f) throw IoFailure("write failed on '" + path.string() + "'");
}

ConnectomeMatrix read_omega_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open '" + path.string() + "' for reading");
    const std::string name = path.filename().string();

    std::string line;
    if (!std::getline(in, line)) throw EmptyFile(name + ": file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    if (header.empty() || header[0] != "subject_id") {
        throw MalformedRow(name + ": header must start with subject_id");
    }
    for (std::size_t b = 1; b < header.size(); ++b) {
        if (header[b] != "omega_" + std::to_string(b - 1)) {
            throw MalformedRow(name + ": unexpected column '" + header[b] + "'");
        }
    }

    ConnectomeMatrix matrix;
    matrix.k = header.size() - 1;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw MalformedRow(name + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " fields");
        }
        CompositionVector row;
        row.subject_id = fields[0];
        row.omega.reserve(matrix.k);
        for (std::size_t b = 1; b < fields.size(); ++b) {
            row.omega.push_back(
                parse_double(fields[b], name + ":" + std::to_string(line_no)));
        }
        matrix.rows.push_back(std::move(row));
    }
    if (matrix.rows.empty()) throw EmptyFile(name + ": no data rows");
    return matrix;
}

void write_sizes_csv(const std::vector<std::uint64_t>& sizes, const std::filesystem::path& path) {
    std::string out = "bundle,count\n";
    for (std::size_t b = 0; b < sizes.size(); ++b) {
        out += std::to_string(b) + ',' + std::to_string(sizes[b]) + '\n';
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("cannot open '" + path.string() + "' for writing");
    f << out;
    if (!f) throw IoFailure("write failed on '" + path.string() + "'");
}

std::vector<std::uint64_t> read_sizes_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open '" + path.string() + "' for reading");
    const std::string name = path.filename().string();

    std::string line;
    if (!std::getline(in, line)) throw EmptyFile(name + ": file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "bundle,count") throw MalformedRow(name + ": bad header '" + line + "'");

    std::vector<std::uint64_t> sizes;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 2) {
            throw MalformedRow(name + ":" + std::to_string(line_no) + ": expected 2 fields");
        }
        const std::string context = name + ":" + std::to_string(line_no);
        std::uint64_t bundle = 0;
        auto [p1, e1] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), bundle);
        std::uint64_t count = 0;
        auto [p2, e2] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), count);
        if (e1 != std::errc{} || e2 != std::errc{} || p1 != fields[0].data() + fields[0].size() ||
            p2 != fields[1].data() + fields[1].size()) {
            throw MalformedRow(context + ": bad integer");
        }
        if (bundle != sizes.size()) {
            throw MalformedRow(context + ": bundle indices must be consecutive from 0");
        }
        sizes.push_back(count);
    }
    if (sizes.empty()) throw EmptyFile(name + ": no data rows");
    return sizes;
}

}  // namespace ppa
