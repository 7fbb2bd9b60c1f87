#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fairsad/matrix.hpp"
#include "fairsad/rng.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("fairsad_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream(path) << text;
}

inline fairsad::Matrix random_matrix(std::size_t rows, std::size_t cols, fairsad::Rng& rng,
                                     double lo = -1.0, double hi = 1.0) {
    fairsad::Matrix m(rows, cols);
    for (auto& v : m.data()) {
        v = rng.uniform(lo, hi);
    }
    return m;
}

inline std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = i;
    }
    return out;
}

}  // namespace testing
