#pragma once

// Exemplar-free pseudo-feature replay: one full-covariance Gaussian per class,
// fitted on that class's real features at the end of its task.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conceptcil/embedding_io.hpp"
#include "conceptcil/matrix.hpp"

namespace conceptcil {

inline constexpr double kDefaultShrink = 1e-4;

/// Lower-triangular L with L·Lᵀ = a. Throws if `a` is not positive definite.
inline Matrix cholesky(const Matrix& a) {
    if (a.rows() != a.cols()) throw DimensionError("cholesky: matrix " + a.shape() + " is not square");
    const std::size_t n = a.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (!(diag > 0.0)) {
            throw DataError("cholesky: matrix not positive definite at pivot " + std::to_string(j));
        }
        l(j, j) = std::sqrt(diag);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

struct ClassStats {
    std::size_t class_id = 0;
    std::vector<double> mu;
    Matrix sigma;
    Matrix chol;   // cholesky(sigma + shrink·I)
    double shrink = kDefaultShrink;
    std::size_t sample_count = 0;

    std::size_t dim() const noexcept { return mu.size(); }

    void refresh_cholesky() {
        Matrix reg = sigma;
        for (std::size_t i = 0; i < reg.rows(); ++i) reg(i, i) += shrink;
        chol = cholesky(reg);
    }

    /// FNV-1a over id, mu and sigma bytes.
    std::uint64_t fingerprint() const {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](const void* p, std::size_t n) {
            const auto* b = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= b[i];
                h *= 1099511628211ull;
            }
        };
        mix(&class_id, sizeof class_id);
        mix(mu.data(), mu.size() * sizeof(double));
        mix(sigma.data().data(), sigma.size() * sizeof(double));
        return h;
    }
};

/// Column mean, unbiased covariance (zero for a single sample), shrunk Cholesky factor.
inline ClassStats fit_class(const Matrix& features, std::size_t class_id, double shrink = kDefaultShrink) {
    const std::size_t n = features.rows();
    const std::size_t d = features.cols();
    if (n == 0) throw DataError("fit_class: class " + std::to_string(class_id) + " has no samples");
    if (!(shrink > 0.0)) throw ConfigError("fit_class: shrink must be > 0");
    if (!features.all_finite()) {
        throw DataError("fit_class: non-finite feature for class " + std::to_string(class_id));
    }
    ClassStats s;
    s.class_id = class_id;
    s.shrink = shrink;
    s.sample_count = n;
    s.mu.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) s.mu[j] += features(i, j);
    for (double& m : s.mu) m /= static_cast<double>(n);
    s.sigma = Matrix(d, d);
    if (n > 1) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t a = 0; a < d; ++a) {
                const double da = features(i, a) - s.mu[a];
                for (std::size_t b = a; b < d; ++b) s.sigma(a, b) += da * (features(i, b) - s.mu[b]);
            }
        }
        const double inv = 1.0 / static_cast<double>(n - 1);
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = a; b < d; ++b) {
                s.sigma(a, b) *= inv;
                s.sigma(b, a) = s.sigma(a, b);
            }
        }
    }
    s.refresh_cholesky();
    return s;
}

/// Rows mu + L·ε with ε drawn from `rng` (d standard normals per row, in order).
template <class Rng>
Matrix sample(const ClassStats& s, std::size_t m, Rng& rng) {
    const std::size_t d = s.dim();
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(m, d);
    std::vector<double> eps(d);
    for (std::size_t r = 0; r < m; ++r) {
        for (double& e : eps) e = normal(rng);
        for (std::size_t i = 0; i < d; ++i) {
            double v = s.mu[i];
            for (std::size_t k = 0; k <= i; ++k) v += s.chol(i, k) * eps[k];
            out(r, i) = v;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence: stats.json manifest + float64 CEMB files for mu (C×D) and sigma ((C·D)×D).

inline void save_stats(const std::vector<ClassStats>& stats, const std::filesystem::path& manifest_path) {
    const std::size_t d = stats.empty() ? 0 : stats.front().dim();
    Matrix mu(stats.size(), d);
    Matrix sigma(stats.size() * d, d);
    nlohmann::json j;
    j["version"] = 1;
    j["dim"] = d;
    j["classes"] = nlohmann::json::array();
    for (std::size_t c = 0; c < stats.size(); ++c) {
        const ClassStats& s = stats[c];
        if (s.dim() != d) throw DimensionError("save_stats: mixed dimensions");
        for (std::size_t i = 0; i < d; ++i) {
            mu(c, i) = s.mu[i];
            for (std::size_t k = 0; k < d; ++k) sigma(c * d + i, k) = s.sigma(i, k);
        }
        j["classes"].push_back(
            {{"class_id", s.class_id}, {"sample_count", s.sample_count}, {"shrink", s.shrink}});
    }
    const std::string stem = manifest_path.stem().string();
    j["mu_file"] = stem + "_mu.cemb";
    j["sigma_file"] = stem + "_sigma.cemb";
    const auto dir = manifest_path.parent_path();
    write_embeddings(dir / j["mu_file"].get<std::string>(), mu, CembPrecision::Float64);
    write_embeddings(dir / j["sigma_file"].get<std::string>(), sigma, CembPrecision::Float64);
    detail::write_text_file(manifest_path, j.dump(2) + "\n");
}

inline std::vector<ClassStats> load_stats(const std::filesystem::path& manifest_path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_text_file(manifest_path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("stats file '" + manifest_path.string() + "': parse error at byte offset " +
                         std::to_string(e.byte));
    }
    try {
        const std::size_t d = j.at("dim").get<std::size_t>();
        const auto dir = manifest_path.parent_path();
        const Matrix mu = read_embeddings(dir / j.at("mu_file").get<std::string>());
        const Matrix sigma = read_embeddings(dir / j.at("sigma_file").get<std::string>());
        const auto& classes = j.at("classes");
        if (mu.rows() != classes.size() || (classes.size() > 0 && (mu.cols() != d || sigma.cols() != d ||
                                                                    sigma.rows() != classes.size() * d))) {
            throw IntegrityError("stats file: matrix shapes disagree with manifest");
        }
        std::set<std::size_t> seen;
        std::vector<ClassStats> out;
        for (std::size_t c = 0; c < classes.size(); ++c) {
            ClassStats s;
            s.class_id = classes[c].at("class_id").get<std::size_t>();
            if (!seen.insert(s.class_id).second) {
                throw IntegrityError("stats file: duplicate class_id " + std::to_string(s.class_id));
            }
            s.sample_count = classes[c].at("sample_count").get<std::size_t>();
            s.shrink = classes[c].at("shrink").get<double>();
            s.mu.assign(mu.row(c).begin(), mu.row(c).end());
            s.sigma = Matrix(d, d);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t k = 0; k < d; ++k) s.sigma(i, k) = sigma(c * d + i, k);
            s.refresh_cholesky();
            out.push_back(std::move(s));
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("stats file: ") + e.what());
    }
}

}  // namespace conceptcil
