#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "conceptcil/matrix.hpp"

namespace testsupport {

inline conceptcil::Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0,
                                        double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    conceptcil::Matrix m(r, c);
    for (double& v : m.data()) v = u(rng);
    return m;
}

inline double rel_err(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

/// Central difference of f with respect to every entry of `x` (which f reads by reference).
inline conceptcil::Matrix numeric_grad(conceptcil::Matrix& x, const std::function<double()>& f, double h = 1e-5) {
    conceptcil::Matrix g(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x.data()[i];
        x.data()[i] = keep + h;
        const double up = f();
        x.data()[i] = keep - h;
        const double down = f();
        x.data()[i] = keep;
        g.data()[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline double max_rel_err(const conceptcil::Matrix& analytic, const conceptcil::Matrix& numeric) {
    double m = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) m = std::max(m, rel_err(analytic.data()[i], numeric.data()[i]));
    return m;
}

/// Fresh scratch directory under the build tree, removed on construction.
inline std::filesystem::path scratch(const std::string& name) {
    const std::filesystem::path p = std::filesystem::path(CONCEPTCIL_TMP) / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testsupport
