#include "parcellate/tracts_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "parcellate/errors.hpp"

namespace ppa::io {

namespace {

constexpr std::array<unsigned char, 4> kPpafMagic = {0x50, 0x50, 0x41, 0x46};  // "PPAF"
constexpr std::uint16_t kPpafVersion = 1;

class ByteReader {
  public:
    ByteReader(const unsigned char* data, std::size_t size, std::string name)
        : data_(data), size_(size), name_(std::move(name)) {}

    std::size_t remaining() const { return size_ - pos_; }

    const unsigned char* take(std::size_t n) {
        if (remaining() < n) {
            throw TruncatedFile(name_ + ": need " + std::to_string(n) + " more byte(s), have " +
                                std::to_string(remaining()));
        }
        const unsigned char* p = data_ + pos_;
        pos_ += n;
        return p;
    }

    std::uint16_t u16() {
        const unsigned char* p = take(2);
        return static_cast<std::uint16_t>(p[0] | (std::uint16_t(p[1]) << 8));
    }

    std::uint32_t u32() {
        const unsigned char* p = take(4);
        return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
               (std::uint32_t(p[3]) << 24);
    }

    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | (hi << 32);
    }

    float f32() { return std::bit_cast<float>(u32()); }

  private:
    const unsigned char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::string name_;
};

class ByteWriter {
  public:
    void u16(std::uint16_t v) {
        bytes_.push_back(static_cast<unsigned char>(v & 0xff));
        bytes_.push_back(static_cast<unsigned char>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int shift = 0; shift < 32; shift += 8) {
            bytes_.push_back(static_cast<unsigned char>((v >> shift) & 0xff));
        }
    }
    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v & 0xffffffffULL));
        u32(static_cast<std::uint32_t>(v >> 32));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }

    const std::vector<unsigned char>& bytes() const { return bytes_; }

  private:
    std::vector<unsigned char> bytes_;
};

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open '" + path.string() + "' for reading");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad()) throw IoFailure("read failed on '" + path.string() + "'");
    return bytes;
}

void spit(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoFailure("write failed on '" + path.string() + "'");
}

}  // namespace

SubjectTract read_ppaf(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    const std::string name = path.filename().string();
    if (bytes.empty()) throw EmptyFile(name + ": file is empty");

    ByteReader r(bytes.data(), bytes.size(), name);
    const unsigned char* magic = r.take(4);
    if (!std::equal(kPpafMagic.begin(), kPpafMagic.end(), magic)) {
        throw BadMagic(name + ": not a PPAF file");
    }
    const std::uint16_t version = r.u16();
    if (version != kPpafVersion) {
        throw BadMagic(name + ": unsupported PPAF version " + std::to_string(version));
    }

    SubjectTract tract;
    const std::uint16_t id_len = r.u16();
    const unsigned char* id = r.take(id_len);
    tract.subject_id.assign(reinterpret_cast<const char*>(id), id_len);
    if (tract.subject_id.empty()) throw BadMagic(name + ": empty subject id");

    const std::uint64_t count = r.u64();
    if (count == 0) throw EmptyFile(name + ": declares zero streamlines");

    tract.streamlines.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t n_points = r.u32();
        if (n_points < 2) {
            throw InvalidStreamline(name + ": streamline " + std::to_string(i) + " declares " +
                                    std::to_string(n_points) + " point(s)");
        }
        Streamline s;
        s.points.reserve(n_points);
        for (std::uint32_t j = 0; j < n_points; ++j) {
            Point3f p{r.f32(), r.f32(), r.f32()};
            if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
                throw NonFiniteCoordinate(name + ": streamline " + std::to_string(i) +
                                          " point " + std::to_string(j));
            }
            s.points.push_back(p);
        }
        validate_streamline(s);
        tract.streamlines.push_back(std::move(s));
    }
    if (r.remaining() != 0) {
        throw TruncatedFile(name + ": " + std::to_string(r.remaining()) +
                            " trailing byte(s) beyond declared content");
    }
    return tract;
}

void write_ppaf(const SubjectTract& tract, const std::filesystem::path& path) {
    validate_tract(tract);
    if (tract.subject_id.size() > 0xffff) {
        throw InvalidParameter("subject id longer than 65535 bytes");
    }

    ByteWriter w;
    w.raw(kPpafMagic.data(), kPpafMagic.size());
    w.u16(kPpafVersion);
    w.u16(static_cast<std::uint16_t>(tract.subject_id.size()));
    w.raw(tract.subject_id.data(), tract.subject_id.size());
    w.u64(tract.streamlines.size());
    for (const auto& s : tract.streamlines) {
        if (s.points.size() > 0xffffffffULL) {
            throw InvalidParameter("streamline exceeds u32 point count");
        }
        w.u32(static_cast<std::uint32_t>(s.points.size()));
        for (const auto& p : s.points) {
            w.f32(p[0]);
            w.f32(p[1]);
            w.f32(p[2]);
        }
    }
    spit(path, w.bytes());
}

namespace {

// Exact float round-trip needs max_digits10 = 9 significant digits.
void append_float(std::string& out, float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    out += buf;
}

struct CsvRow {
    std::uint64_t streamline_id;
    std::uint64_t point_index;
    Point3f point;
};

CsvRow parse_csv_row(const std::string& line, std::size_t line_no, const std::string& name) {
    std::array<std::string_view, 5> fields;
    std::string_view rest = line;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto comma = rest.find(',');
        if (i < 4) {
            if (comma == std::string_view::npos) {
                throw MalformedRow(name + ":" + std::to_string(line_no) + ": expected 5 fields");
            }
            fields[i] = rest.substr(0, comma);
            rest = rest.substr(comma + 1);
        } else {
            if (comma != std::string_view::npos) {
                throw MalformedRow(name + ":" + std::to_string(line_no) + ": expected 5 fields");
            }
            fields[i] = rest;
        }
    }

    const auto parse_u64 = [&](std::string_view f) {
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc{} || ptr != f.data() + f.size()) {
            throw MalformedRow(name + ":" + std::to_string(line_no) + ": bad integer '" +
                               std::string(f) + "'");
        }
        return v;
    };
    const auto parse_f32 = [&](std::string_view f) {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc{} || ptr != f.data() + f.size()) {
            throw MalformedRow(name + ":" + std::to_string(line_no) + ": bad number '" +
                               std::string(f) + "'");
        }
        const float narrowed = static_cast<float>(v);
        if (!std::isfinite(narrowed)) {
            throw NonFiniteCoordinate(name + ":" + std::to_string(line_no) +
                                      ": non-finite coordinate");
        }
        return narrowed;
    };

    CsvRow row;
    row.streamline_id = parse_u64(fields[0]);
    row.point_index = parse_u64(fields[1]);
    row.point = {parse_f32(fields[2]), parse_f32(fields[3]), parse_f32(fields[4])};
    return row;
}

}  // namespace

SubjectTract read_csv_tract(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open '" + path.string() + "' for reading");
    const std::string name = path.filename().string();

    std::string line;
    if (!std::getline(in, line)) throw EmptyFile(name + ": file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "streamline_id,point_index,x,y,z") {
        throw MalformedRow(name + ": bad header '" + line + "'");
    }

    SubjectTract tract;
    tract.subject_id = path.stem().string();
    if (tract.subject_id.empty()) throw InvalidParameter(name + ": file stem is empty");

    std::vector<std::uint64_t> seen_ids;
    bool have_current = false;
    std::uint64_t current_id = 0;
    std::uint64_t last_point_index = 0;
    Streamline current;
    std::size_t line_no = 1;

    const auto flush = [&]() {
        if (!have_current) return;
        validate_streamline(current);
        tract.streamlines.push_back(std::move(current));
        current = Streamline{};
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const CsvRow row = parse_csv_row(line, line_no, name);

        if (!have_current || row.streamline_id != current_id) {
            if (std::find(seen_ids.begin(), seen_ids.end(), row.streamline_id) != seen_ids.end()) {
                throw UnsortedPoints(name + ":" + std::to_string(line_no) + ": streamline " +
                                     std::to_string(row.streamline_id) + " is not contiguous");
            }
            flush();
            seen_ids.push_back(row.streamline_id);
            have_current = true;
            current_id = row.streamline_id;
        } else if (row.point_index <= last_point_index) {
            throw UnsortedPoints(name + ":" + std::to_string(line_no) +
                                 ": point_index not increasing within streamline " +
                                 std::to_string(current_id));
        }
        last_point_index = row.point_index;
        current.points.push_back(row.point);
    }
    if (in.bad()) throw IoFailure("read failed on '" + path.string() + "'");
    flush();

    if (tract.streamlines.empty()) throw EmptyFile(name + ": no data rows");
    return tract;
}

void write_csv_tract(const SubjectTract& tract, const std::filesystem::path& path) {
    validate_tract(tract);
    std::string out = "streamline_id,point_index,x,y,z\n";
    for (std::size_t i = 0; i < tract.streamlines.size(); ++i) {
        const auto& s = tract.streamlines[i];
        for (std::size_t j = 0; j < s.points.size(); ++j) {
            out += std::to_string(i);
            out += ',';
            out += std::to_string(j);
            for (float c : s.points[j]) {
                out += ',';
                append_float(out, c);
            }
            out += '\n';
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("cannot open '" + path.string() + "' for writing");
    f << out;
    if (!f) throw IoFailure("write failed on '" + path.string() + "'");
}

SubjectTract read_tract(const std::filesystem::path& path, std::optional<TractFormat> format) {
    if (!format) {
        const auto ext = path.extension().string();
        if (ext == ".ppaf") {
            format = TractFormat::Ppaf;
        } else if (ext == ".csv") {
            format = TractFormat::Csv;
        } else {
            throw InvalidParameter("cannot sniff tract format from '" + path.string() +
                                   "'; pass --format");
        }
    }
    return *format == TractFormat::Ppaf ? read_ppaf(path) : read_csv_tract(path);
}

Cohort load_cohort(const std::filesystem::path& dir, std::optional<TractFormat> format) {
    if (!std::filesystem::is_directory(dir)) {
        throw IoFailure("'" + dir.string() + "' is not a directory");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (ext == ".ppaf" || ext == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<SubjectTract> subjects;
    subjects.reserve(files.size());
    for (const auto& f : files) subjects.push_back(read_tract(f, format));
    return make_cohort(std::move(subjects));
}

}  // namespace ppa::io
