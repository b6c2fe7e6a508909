#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "parcellate/rng.hpp"
#include "parcellate/types.hpp"

namespace ppa::test {

// Scratch directory removed on scope exit.
class TempDir {
  public:
    explicit TempDir(const std::string& prefix) {
        static std::atomic<unsigned> counter{0};
        const auto base = std::filesystem::temp_directory_path();
        std::random_device rd;
        for (int attempt = 0; attempt < 64; ++attempt) {
            auto candidate = base / (prefix + "_" + std::to_string(rd()) + "_" +
                                     std::to_string(counter.fetch_add(1)));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("TempDir: cannot create scratch directory");
    }

    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }

    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

inline Point3f random_point(Rng& rng, double span = 200.0) {
    const auto coord = [&]() {
        return static_cast<float>((rng.next_double() - 0.5) * span);
    };
    return {coord(), coord(), coord()};
}

// Valid random streamline: 2..max_points points, distinct endpoints.
inline Streamline random_streamline(Rng& rng, std::size_t max_points = 12) {
    Streamline s;
    const std::size_t n = 2 + rng.next_index(max_points - 1);
    for (std::size_t i = 0; i < n; ++i) s.points.push_back(random_point(rng));
    // re-draw until the polyline has positive arc length
    while (s.points.front() == s.points.back() && n == 2) {
        s.points.back() = random_point(rng);
    }
    return s;
}

inline SubjectTract random_tract(Rng& rng, const std::string& id, std::size_t max_streamlines = 20) {
    SubjectTract tract;
    tract.subject_id = id;
    const std::size_t m = 1 + rng.next_index(max_streamlines);
    for (std::size_t i = 0; i < m; ++i) tract.streamlines.push_back(random_streamline(rng));
    return tract;
}

}  // namespace ppa::test
