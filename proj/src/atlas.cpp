#include "parcellate/atlas.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "parcellate/errors.hpp"

namespace ppa {

namespace {

constexpr std::array<unsigned char, 4> kAtlasMagic = {0x41, 0x54, 0x4C, 0x31};  // "ATL1"
constexpr std::uint16_t kAtlasVersion = 1;

// Gauss-Jordan with partial pivoting; throws SingularAffine.
std::array<double, 16> invert_affine(const std::array<double, 16>& m) {
    double a[4][8];
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            a[r][c] = m[static_cast<std::size_t>(r) * 4 + c];
            a[r][c + 4] = (r == c) ? 1.0 : 0.0;
        }
    }
    for (int col = 0; col < 4; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 4; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (std::abs(a[pivot][col]) < 1e-12) {
            throw SingularAffine("atlas affine is singular");
        }
        if (pivot != col) {
            for (int c = 0; c < 8; ++c) std::swap(a[pivot][c], a[col][c]);
        }
        const double inv = 1.0 / a[col][col];
        for (int c = 0; c < 8; ++c) a[col][c] *= inv;
        for (int r = 0; r < 4; ++r) {
            if (r == col) continue;
            const double factor = a[r][col];
            if (factor == 0.0) continue;
            for (int c = 0; c < 8; ++c) a[r][c] -= factor * a[col][c];
        }
    }
    std::array<double, 16> out;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) out[static_cast<std::size_t>(r) * 4 + c] = a[r][c + 4];
    }
    return out;
}

void append_weight(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

Atlas make_atlas(std::array<std::uint32_t, 3> dims, const std::array<double, 16>& affine,
                 std::vector<std::uint16_t> labels, std::vector<std::string> roi_names) {
    Atlas atlas;
    atlas.dims = dims;
    atlas.affine = affine;
    atlas.inverse = invert_affine(affine);
    if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0) {
        throw InvalidParameter("atlas dimensions must be positive");
    }
    if (roi_names.empty() || roi_names.size() > 0xffff) {
        throw InvalidParameter("atlas needs between 1 and 65535 ROI names");
    }
    atlas.num_rois = static_cast<std::uint16_t>(roi_names.size());
    atlas.roi_names = std::move(roi_names);
    if (labels.size() != atlas.voxel_count()) {
        throw SizeMismatch("atlas label array has " + std::to_string(labels.size()) +
                           " entries, volume has " + std::to_string(atlas.voxel_count()));
    }
    for (std::uint16_t label : labels) {
        if (label > atlas.num_rois) {
            throw LabelOutOfRange("label " + std::to_string(label) + " exceeds ROI count " +
                                  std::to_string(atlas.num_rois));
        }
    }
    atlas.labels = std::move(labels);
    return atlas;
}

Atlas load_atlas(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open '" + path.string() + "' for reading");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad()) throw IoFailure("read failed on '" + path.string() + "'");
    const std::string name = path.filename().string();
    if (bytes.empty()) throw EmptyFile(name + ": file is empty");

    std::size_t pos = 0;
    const auto need = [&](std::size_t n) {
        if (bytes.size() - pos < n) {
            throw TruncatedFile(name + ": need " + std::to_string(n) + " more byte(s)");
        }
        const unsigned char* p = bytes.data() + pos;
        pos += n;
        return p;
    };
    const auto u16 = [&]() {
        const unsigned char* p = need(2);
        return static_cast<std::uint16_t>(p[0] | (std::uint16_t(p[1]) << 8));
    };
    const auto u32 = [&]() {
        const unsigned char* p = need(4);
        return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
               (std::uint32_t(p[3]) << 24);
    };
    const auto f64 = [&]() {
        const unsigned char* p = need(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
        return std::bit_cast<double>(v);
    };

    const unsigned char* magic = need(4);
    if (!std::equal(kAtlasMagic.begin(), kAtlasMagic.end(), magic)) {
        throw BadMagic(name + ": not an ATL1 file");
    }
    const std::uint16_t version = u16();
    if (version != kAtlasVersion) {
        throw BadMagic(name + ": unsupported ATL1 version " + std::to_string(version));
    }

    std::array<std::uint32_t, 3> dims{u32(), u32(), u32()};
    std::array<double, 16> affine;
    for (auto& v : affine) v = f64();
    for (double v : affine) {
        if (!std::isfinite(v)) throw NonFiniteCoordinate(name + ": non-finite affine entry");
    }

    const std::uint16_t p = u16();
    std::vector<std::string> names;
    names.reserve(p);
    for (std::uint16_t i = 0; i < p; ++i) {
        const std::uint16_t len = u16();
        const unsigned char* s = need(len);
        names.emplace_back(reinterpret_cast<const char*>(s), len);
    }

    const std::size_t voxels =
        static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    std::vector<std::uint16_t> labels(voxels);
    for (std::size_t i = 0; i < voxels; ++i) labels[i] = u16();

    if (pos != bytes.size()) {
        throw TruncatedFile(name + ": " + std::to_string(bytes.size() - pos) +
                            " trailing byte(s)");
    }
    return make_atlas(dims, affine, std::move(labels), std::move(names));
}

void save_atlas(const Atlas& atlas, const std::filesystem::path& path) {
    std::vector<unsigned char> bytes;
    const auto u16 = [&](std::uint16_t v) {
        bytes.push_back(static_cast<unsigned char>(v & 0xff));
        bytes.push_back(static_cast<unsigned char>(v >> 8));
    };
    const auto u32 = [&](std::uint32_t v) {
        for (int shift = 0; shift < 32; shift += 8) {
            bytes.push_back(static_cast<unsigned char>((v >> shift) & 0xff));
        }
    };
    const auto f64 = [&](double d) {
        const auto v = std::bit_cast<std::uint64_t>(d);
        for (int shift = 0; shift < 64; shift += 8) {
            bytes.push_back(static_cast<unsigned char>((v >> shift) & 0xff));
        }
    };

    bytes.insert(bytes.end(), kAtlasMagic.begin(), kAtlasMagic.end());
    u16(kAtlasVersion);
    for (std::uint32_t d : atlas.dims) u32(d);
    for (double v : atlas.affine) f64(v);
    u16(atlas.num_rois);
    for (const auto& name : atlas.roi_names) {
        if (name.size() > 0xffff) throw InvalidParameter("ROI name longer than 65535 bytes");
        u16(static_cast<std::uint16_t>(name.size()));
        bytes.insert(bytes.end(), name.begin(), name.end());
    }
    for (std::uint16_t label : atlas.labels) u16(label);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoFailure("write failed on '" + path.string() + "'");
}

std::vector<std::size_t> label_histogram(const Atlas& atlas) {
    std::vector<std::size_t> hist(atlas.num_rois + 1, 0);
    for (std::uint16_t label : atlas.labels) ++hist[label];
    return hist;
}

std::uint16_t roi_of(const Atlas& atlas, const Vec3& point) {
    if (!std::isfinite(point[0]) || !std::isfinite(point[1]) || !std::isfinite(point[2])) {
        throw NonFiniteCoordinate("roi_of: non-finite point");
    }
    const auto& inv = atlas.inverse;
    double voxel[3];
    for (int r = 0; r < 3; ++r) {
        voxel[r] = inv[static_cast<std::size_t>(r) * 4 + 0] * point[0] +
                   inv[static_cast<std::size_t>(r) * 4 + 1] * point[1] +
                   inv[static_cast<std::size_t>(r) * 4 + 2] * point[2] +
                   inv[static_cast<std::size_t>(r) * 4 + 3];
    }
    std::int64_t idx[3];
    for (int r = 0; r < 3; ++r) {
        idx[r] = std::llround(voxel[r]);
        if (idx[r] < 0 || idx[r] >= static_cast<std::int64_t>(atlas.dims[r])) return 0;
    }
    const std::size_t flat =
        static_cast<std::size_t>(idx[0]) +
        atlas.dims[0] * (static_cast<std::size_t>(idx[1]) +
                         static_cast<std::size_t>(atlas.dims[1]) * static_cast<std::size_t>(idx[2]));
    return atlas.labels[flat];
}

SummaryKind summary_kind_from_string(const std::string& s) {
    if (s == "count") return SummaryKind::Count;
    if (s == "ncount") return SummaryKind::NCount;
    if (s == "ncount2") return SummaryKind::NCount2;
    throw InvalidParameter("unknown connectivity summary '" + s + "'");
}

std::string to_string(SummaryKind kind) {
    switch (kind) {
        case SummaryKind::Count: return "count";
        case SummaryKind::NCount: return "ncount";
        case SummaryKind::NCount2: return "ncount2";
    }
    return "count";
}

ConnectivityMatrix ConnectivityMatrix::zeros(std::size_t p, SummaryKind kind) {
    ConnectivityMatrix w;
    w.rows = p;
    w.cols = p;
    w.kind = kind;
    w.values.assign(p * p, 0.0);
    return w;
}

ConnectivityMatrix build_apa(const SubjectTract& tract, const Atlas& atlas, SummaryKind kind,
                             std::size_t* skipped) {
    const std::size_t p = atlas.num_rois;
    // fiber lengths per ROI pair (r <= s, 0-based)
    std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> lengths;
    std::size_t background_hits = 0;

    for (const auto& streamline : tract.streamlines) {
        const std::uint16_t roi_a = roi_of(atlas, widen(streamline.points.front()));
        const std::uint16_t roi_b = roi_of(atlas, widen(streamline.points.back()));
        if (roi_a == 0 || roi_b == 0) {
            ++background_hits;
            continue;
        }
        std::size_t r = roi_a - 1;
        std::size_t s = roi_b - 1;
        if (r > s) std::swap(r, s);
        double length = 0.0;
        for (std::size_t i = 1; i < streamline.points.size(); ++i) {
            length += distance(widen(streamline.points[i - 1]), widen(streamline.points[i]));
        }
        lengths[{r, s}].push_back(length);
    }
    if (skipped != nullptr) *skipped = background_hits;

    ConnectivityMatrix w = ConnectivityMatrix::zeros(p, kind);
    for (auto& [pair, fiber_lengths] : lengths) {
        double value = 0.0;
        switch (kind) {
            case SummaryKind::Count:
                value = static_cast<double>(fiber_lengths.size());
                break;
            case SummaryKind::NCount: {
                std::sort(fiber_lengths.begin(), fiber_lengths.end());
                const std::size_t n = fiber_lengths.size();
                const double median = (n % 2 == 1)
                                          ? fiber_lengths[n / 2]
                                          : 0.5 * (fiber_lengths[n / 2 - 1] + fiber_lengths[n / 2]);
                value = static_cast<double>(n) / median;
                break;
            }
            case SummaryKind::NCount2:
                for (double len : fiber_lengths) value += 1.0 / len;
                break;
        }
        w.at(pair.first, pair.second) = value;
        w.at(pair.second, pair.first) = value;
    }
    return w;
}

ConnectivityMatrix build_active_matrix(const Cohort& cohort, const Atlas& atlas,
                                       const Assignment& assignment,
                                       const std::vector<std::size_t>& active,
                                       std::size_t num_bundles) {
    if (assignment.size() != cohort.total_fibers) {
        throw MisalignedAssignment("build_active_matrix: assignment covers " +
                                   std::to_string(assignment.size()) + " fibers, cohort has " +
                                   std::to_string(cohort.total_fibers));
    }
    std::vector<char> is_active(num_bundles, 0);
    for (std::size_t bundle : active) {
        if (bundle >= num_bundles) {
            throw SizeMismatch("build_active_matrix: active bundle " + std::to_string(bundle) +
                               " out of range");
        }
        is_active[bundle] = 1;
    }

    ConnectivityMatrix w = ConnectivityMatrix::zeros(atlas.num_rois, SummaryKind::Count);
    std::size_t fiber = 0;
    for (const auto& subject : cohort.subjects) {
        for (const auto& streamline : subject.streamlines) {
            const std::uint32_t bundle = assignment.bundle_index[fiber++];
            if (bundle >= num_bundles) {
                throw MisalignedAssignment("build_active_matrix: bundle index out of range");
            }
            if (!is_active[bundle]) continue;
            const std::uint16_t roi_a = roi_of(atlas, widen(streamline.points.front()));
            const std::uint16_t roi_b = roi_of(atlas, widen(streamline.points.back()));
            if (roi_a == 0 || roi_b == 0) continue;
            std::size_t r = roi_a - 1;
            std::size_t s = roi_b - 1;
            if (r > s) std::swap(r, s);
            w.at(r, s) += 1.0;
            if (r != s) w.at(s, r) += 1.0;
        }
    }
    return w;
}

ConnectivityMatrix threshold_matrix(const ConnectivityMatrix& w, double ratio) {
    if (!(ratio > 0.0) || ratio > 1.0) {
        throw InvalidParameter("threshold_matrix: ratio must be in (0,1]");
    }
    double max_entry = 0.0;
    for (double v : w.values) {
        if (v < 0.0) throw InvalidParameter("threshold_matrix: negative entry");
        max_entry = std::max(max_entry, v);
    }
    ConnectivityMatrix out = w;
    const double cutoff = ratio * max_entry;
    for (double& v : out.values) {
        if (v < cutoff) v = 0.0;
    }
    return out;
}

void write_matrix_csv(const ConnectivityMatrix& w, const std::vector<std::string>& roi_names,
                      const std::filesystem::path& path) {
    if (roi_names.size() != w.rows) {
        throw SizeMismatch("write_matrix_csv: " + std::to_string(roi_names.size()) +
                           " names for " + std::to_string(w.rows) + " rows");
    }
    std::string out = "roi";
    for (const auto& name : roi_names) out += "," + name;
    out += '\n';
    for (std::size_t r = 0; r < w.rows; ++r) {
        out += roi_names[r];
        for (std::size_t c = 0; c < w.cols; ++c) {
            out += ',';
            append_weight(out, w.at(r, c));
        }
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("cannot open '" + path.string() + "' for writing");
    f << out;
    if (!f) throw IoFailure("write failed on '" + path.string() + "'");
}

void write_edge_list_csv(const ConnectivityMatrix& w, const std::vector<std::string>& roi_names,
                         const std::filesystem::path& path) {
    if (roi_names.size() != w.rows) {
        throw SizeMismatch("write_edge_list_csv: name count mismatch");
    }
    std::string out = "roi_a,roi_b,weight\n";
    for (std::size_t r = 0; r < w.rows; ++r) {
        for (std::size_t c = r; c < w.cols; ++c) {
            if (w.at(r, c) == 0.0) continue;
            out += roi_names[r];
            out += ',';
            out += roi_names[c];
            out += ',';
            append_weight(out, w.at(r, c));
            out += '\n';
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("cannot open '" + path.string() + "' for writing");
    f << out;
    if (!f) throw IoFailure("write failed on '" + path.string() + "'");
}

const std::vector<std::string>& hcp842_roi_names() {
    static const std::vector<std::string> names = {
        "Acoustic_Radiation_L", "Acoustic_Radiation_R",
        "Cortico_Striatal_Pathway_L", "Cortico_Striatal_Pathway_R",
        "Cortico_Spinal_Tract_L", "Cortico_Spinal_Tract_R",
        "Corticothalamic_Pathway_L", "Corticothalamic_Pathway_R",
        "Fornix_L", "Fornix_R",
        "Frontopontine_Tract_L", "Frontopontine_Tract_R",
        "Occipitopontine_Tract_L", "Occipitopontine_Tract_R",
        "Optic_Radiation_L", "Optic_Radiation_R",
        "Parietopontine_Tract_L", "Parietopontine_Tract_R",
        "Temporopontine_Tract_L", "Temporopontine_Tract_R",
        "Arcuate_Fasciculus_L", "Arcuate_Fasciculus_R",
        "Cingulum_L", "Cingulum_R",
        "Extreme_Capsule_L", "Extreme_Capsule_R",
        "Frontal_Aslant_Tract_L", "Frontal_Aslant_Tract_R",
        "Inferior_Fronto_Occipital_Fasciculus_L", "Inferior_Fronto_Occipital_Fasciculus_R",
        "Inferior_Longitudinal_Fasciculus_L", "Inferior_Longitudinal_Fasciculus_R",
        "Middle_Longitudinal_Fasciculus_L", "Middle_Longitudinal_Fasciculus_R",
        "Superior_Longitudinal_Fasciculus_L", "Superior_Longitudinal_Fasciculus_R",
        "U_Fiber_L", "U_Fiber_R",
        "Uncinate_Fasciculus_L", "Uncinate_Fasciculus_R",
        "Vertical_Occipital_Fasciculus_L", "Vertical_Occipital_Fasciculus_R",
        "Anterior_Commissure", "Corpus_Callosum",
        "Posterior_Commissure", "Cerebellum_L",
        "Cerebellum_R", "Inferior_Cerebellar_Peduncle_L",
        "Inferior_Cerebellar_Peduncle_R", "Middle_Cerebellar_Peduncle",
        "Superior_Cerebellar_Peduncle", "Vermis",
        "Central_Tegmental_Tract_L", "Central_Tegmental_Tract_R",
        "Dorsal_Longitudinal_Fasciculus_L", "Dorsal_Longitudinal_Fasciculus_R",
        "Lateral_Lemniscus_L", "Lateral_Lemniscus_R",
        "Medial_Lemniscus_L", "Medial_Lemniscus_R",
        "Medial_Longitudinal_Fasciculus_L", "Medial_Longitudinal_Fasciculus_R",
        "Rubrospinal_Tract_L", "Rubrospinal_Tract_R",
        "Spinothalamic_Tract_L", "Spinothalamic_Tract_R",
        "CNII_L", "CNII_R",
        "CNIII_L", "CNIII_R",
        "CNIV_L", "CNIV_R",
        "CNV_L", "CNV_R",
        "CNVII_L", "CNVII_R",
        "CNVIII_L", "CNVIII_R",
        "CNX_L", "CNX_R",
    };
    return names;
}

}  // namespace ppa
