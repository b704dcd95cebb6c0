#pragma once

// Global visual-concept pool with similarity-based deduplication.
//
// Each class contributes up to k concept phrases once. A phrase whose best TF-IDF
// similarity against the pool is below tau becomes a new concept; otherwise the class
// is mapped onto the most similar pooled concept (lowest id on ties) and the phrase is
// dropped. Ids are insertion positions and never change.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conceptcil/embedding_io.hpp"
#include "conceptcil/matrix.hpp"
#include "conceptcil/tfidf.hpp"

namespace conceptcil {

struct Concept {
    std::size_t id = 0;
    std::string text;
    std::string origin_class;
};

struct FilterDecision {
    enum class Kind { Added, ReplacedBy };
    Kind kind = Kind::Added;
    std::size_t id = 0;         // new id (Added) or the existing concept's id (ReplacedBy)
    double max_similarity = 0;  // best similarity against the pool before insertion; 0 if empty
    std::string text;           // the submitted phrase

    bool added() const noexcept { return kind == Kind::Added; }
};

class ConceptPool {
public:
    explicit ConceptPool(double tau = 0.5, std::size_t k = 3) : tau_(tau), k_(k) {
        if (!(tau >= 0.0)) throw ConfigError("concept pool: tau must be >= 0");
        if (k == 0) throw ConfigError("concept pool: k must be >= 1");
    }

    double tau() const noexcept { return tau_; }
    std::size_t k() const noexcept { return k_; }
    std::size_t size() const noexcept { return concepts_.size(); }
    const std::vector<Concept>& concepts() const noexcept { return concepts_; }
    const std::map<std::string, std::vector<std::size_t>>& class_map() const noexcept {
        return class_map_;
    }

    bool has_class(const std::string& name) const { return class_map_.count(name) != 0; }

    /// S(c): sorted, duplicate-free concept ids for a class. Empty if the class is unknown.
    const std::vector<std::size_t>& class_concepts(const std::string& name) const {
        static const std::vector<std::size_t> kEmpty;
        auto it = class_map_.find(name);
        return it == class_map_.end() ? kEmpty : it->second;
    }

    std::vector<FilterDecision> filter_and_insert(const std::string& class_name,
                                                  const std::vector<std::string>& new_concepts) {
        if (has_class(class_name)) {
            throw DuplicateClassError("concept pool: class '" + class_name + "' already ingested");
        }
        if (new_concepts.size() > k_) {
            throw ConfigError("concept pool: class '" + class_name + "' submitted " +
                              std::to_string(new_concepts.size()) + " concepts, k = " +
                              std::to_string(k_));
        }
        // Validate the whole submission first so a failure leaves the pool untouched.
        std::vector<std::vector<std::string>> tokenized;
        tokenized.reserve(new_concepts.size());
        for (const auto& text : new_concepts) {
            auto words = tokenize(text);
            if (words.empty()) {
                throw EmptyConceptError("concept pool: concept '" + text + "' of class '" +
                                        class_name + "' has no tokens");
            }
            tokenized.push_back(std::move(words));
        }

        std::set<std::size_t> ids;
        std::vector<FilterDecision> decisions;
        for (std::size_t n = 0; n < new_concepts.size(); ++n) {
            FilterDecision d;
            d.text = new_concepts[n];
            std::optional<std::size_t> best;
            double best_sim = 0.0;
            for (std::size_t i = 0; i < concepts_.size(); ++i) {
                const double s = similarity_of_tokens(tokenized[n], tokens_[i]);
                if (!best || s > best_sim) {
                    best = i;
                    best_sim = s;
                }
            }
            d.max_similarity = best ? best_sim : 0.0;
            if (!best || best_sim < tau_) {
                d.kind = FilterDecision::Kind::Added;
                d.id = concepts_.size();
                concepts_.push_back({d.id, new_concepts[n], class_name});
                tokens_.push_back(std::move(tokenized[n]));
            } else {
                d.kind = FilterDecision::Kind::ReplacedBy;
                d.id = *best;
            }
            ids.insert(d.id);
            decisions.push_back(std::move(d));
        }
        class_map_[class_name] = std::vector<std::size_t>(ids.begin(), ids.end());
        return decisions;
    }

    /// Attach concept features H (row i belongs to concept i).
    void attach_embeddings(Matrix features) {
        if (features.rows() != concepts_.size()) {
            throw AlignmentError("concept pool: " + std::to_string(features.rows()) +
                                 " embedding rows for " + std::to_string(concepts_.size()) +
                                 " concepts");
        }
        features_ = std::move(features);
        has_features_ = true;
    }

    /// Append feature rows for concepts added since the last attach (pool growth between tasks).
    void append_embeddings(const Matrix& rows) {
        const std::size_t have = has_features_ ? features_.rows() : 0;
        if (have + rows.rows() != concepts_.size()) {
            throw AlignmentError("concept pool: " + std::to_string(have) + " + " +
                                 std::to_string(rows.rows()) + " embedding rows for " +
                                 std::to_string(concepts_.size()) + " concepts");
        }
        features_ = vstack(has_features_ ? features_ : Matrix(0, rows.cols()), rows);
        has_features_ = true;
    }

    bool has_embeddings() const noexcept { return has_features_ && features_.rows() == size(); }

    const Matrix& features() const {
        if (!has_embeddings()) throw AlignmentError("concept pool: embeddings not attached for all concepts");
        return features_;
    }

    std::span<const double> embedding(std::size_t id) const { return features().row(id); }

    /// Order-sensitive 64-bit FNV-1a digest of texts, origins, class map and features.
    std::uint64_t fingerprint() const {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](const void* p, std::size_t n) {
            const auto* b = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= b[i];
                h *= 1099511628211ull;
            }
        };
        for (const auto& c : concepts_) {
            mix(c.text.data(), c.text.size());
            mix("\x1f", 1);
            mix(c.origin_class.data(), c.origin_class.size());
            mix("\x1e", 1);
        }
        for (const auto& [name, ids] : class_map_) {
            mix(name.data(), name.size());
            mix(ids.data(), ids.size() * sizeof(std::size_t));
        }
        if (has_features_) mix(features_.data().data(), features_.size() * sizeof(double));
        return h;
    }

    /// Fingerprint restricted to the first `n` concepts (texts and feature rows).
    std::uint64_t prefix_fingerprint(std::size_t n) const {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](const void* p, std::size_t len) {
            const auto* b = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < len; ++i) {
                h ^= b[i];
                h *= 1099511628211ull;
            }
        };
        for (std::size_t i = 0; i < std::min(n, concepts_.size()); ++i) {
            mix(concepts_[i].text.data(), concepts_[i].text.size());
            mix("\x1f", 1);
            if (has_embeddings()) mix(features_.row(i).data(), features_.cols() * sizeof(double));
        }
        return h;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["version"] = 1;
        j["tau"] = tau_;
        j["k"] = k_;
        j["concepts"] = nlohmann::json::array();
        for (const auto& c : concepts_) {
            j["concepts"].push_back({{"id", c.id}, {"text", c.text}, {"origin_class", c.origin_class}});
        }
        j["class_map"] = nlohmann::json::object();
        for (const auto& [name, ids] : class_map_) j["class_map"][name] = ids;
        return j;
    }

    static ConceptPool from_json(const nlohmann::json& j) {
        auto field = [&j](const char* name) -> const nlohmann::json& {
            if (!j.is_object() || !j.contains(name)) {
                throw ParseError(std::string("pool file: missing field '") + name + "'");
            }
            return j.at(name);
        };
        try {
            if (field("version").get<int>() != 1) throw ParseError("pool file: unsupported version");
            ConceptPool pool(field("tau").get<double>(), field("k").get<std::size_t>());
            const auto& cs = field("concepts");
            if (!cs.is_array()) throw ParseError("pool file: 'concepts' must be an array");
            for (std::size_t i = 0; i < cs.size(); ++i) {
                const auto& c = cs[i];
                const std::string path = "concepts[" + std::to_string(i) + "]";
                for (const char* key : {"id", "text", "origin_class"}) {
                    if (!c.contains(key)) throw ParseError("pool file: missing field '" + path + "." + key + "'");
                }
                if (c.at("id").get<std::size_t>() != i) {
                    throw IntegrityError("pool file: " + path + ".id is " +
                                         std::to_string(c.at("id").get<std::size_t>()) +
                                         ", expected insertion position " + std::to_string(i));
                }
                Concept entry{i, c.at("text").get<std::string>(), c.at("origin_class").get<std::string>()};
                auto words = tokenize(entry.text);
                if (words.empty()) throw IntegrityError("pool file: " + path + ".text has no tokens");
                pool.concepts_.push_back(std::move(entry));
                pool.tokens_.push_back(std::move(words));
            }
            const auto& cm = field("class_map");
            if (!cm.is_object()) throw ParseError("pool file: 'class_map' must be an object");
            for (const auto& [name, ids_json] : cm.items()) {
                std::set<std::size_t> ids;
                for (const auto& v : ids_json) {
                    const auto id = v.get<std::size_t>();
                    if (id >= pool.concepts_.size()) {
                        throw IntegrityError("pool file: class_map['" + name + "'] references missing concept id " +
                                             std::to_string(id));
                    }
                    ids.insert(id);
                }
                if (ids.size() > pool.k_) {
                    throw IntegrityError("pool file: class_map['" + name + "'] has more than k concepts");
                }
                pool.class_map_[name] = std::vector<std::size_t>(ids.begin(), ids.end());
            }
            return pool;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("pool file: ") + e.what());
        }
    }

private:
    double tau_;
    std::size_t k_;
    std::vector<Concept> concepts_;
    std::vector<std::vector<std::string>> tokens_;
    std::map<std::string, std::vector<std::size_t>> class_map_;
    Matrix features_;
    bool has_features_ = false;
};

inline void save_pool(const ConceptPool& pool, const std::filesystem::path& path) {
    detail::write_text_file(path, pool.to_json().dump(2) + "\n");
}

/// Writes H as float32 when every value survives the narrowing, float64 otherwise.
inline void save_pool_embeddings(const ConceptPool& pool, const std::filesystem::path& path) {
    const Matrix& h = pool.features();
    bool fits_float = true;
    for (double v : h.data()) {
        if (static_cast<double>(static_cast<float>(v)) != v) {
            fits_float = false;
            break;
        }
    }
    write_embeddings(path, h, fits_float ? CembPrecision::Float32 : CembPrecision::Float64);
}

inline ConceptPool load_pool(const std::filesystem::path& path,
                             const std::optional<std::filesystem::path>& embeddings = std::nullopt) {
    const std::string text = detail::read_text_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("pool file '" + path.string() + "': parse error at byte offset " +
                         std::to_string(e.byte) + ": " + e.what());
    }
    ConceptPool pool = ConceptPool::from_json(j);
    if (embeddings) pool.attach_embeddings(read_embeddings(*embeddings));
    return pool;
}

}  // namespace conceptcil
