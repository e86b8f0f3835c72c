#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "dclp/rng.hpp"
#include "dclp/tensor.hpp"

namespace testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
    const char* root = std::getenv("DCLP_TEST_TMP");
    std::filesystem::path p = root ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "dclp_tests";
    p /= name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline dclp::Tensor random_tensor(dclp::Shape shape, dclp::Rng& rng, double stddev = 1.0) {
    dclp::Tensor t(std::move(shape));
    for (double& v : t.data) v = stddev * rng.normal();
    return t;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return a.size() == b.size() ? m : INFINITY;
}

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace testing
