#pragma once

// Pairwise n-gram TF-IDF cosine similarity between two short concept phrases.
//
// The vocabulary is built from the two phrases only: every contiguous n-gram for
// n = 1 .. max(word count). TF is the raw count of the term in a phrase, IDF is the
// smoothed two-document form ln(3 / (1 + df)) + 1, so shared terms keep weight 1.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "conceptcil/error.hpp"

namespace conceptcil {

/// Lowercase and split on any run of non-alphanumeric ASCII. Empty tokens are dropped.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        const auto u = static_cast<unsigned char>(ch);
        if (u < 128 && std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

using TermCounts = std::map<std::string, int>;

/// Raw counts of all contiguous n-grams of `words` with 1 <= n <= max_n.
inline TermCounts ngram_counts(const std::vector<std::string>& words, std::size_t max_n) {
    TermCounts counts;
    for (std::size_t n = 1; n <= std::min(max_n, words.size()); ++n) {
        for (std::size_t start = 0; start + n <= words.size(); ++start) {
            std::string term = words[start];
            for (std::size_t j = start + 1; j < start + n; ++j) {
                term += ' ';
                term += words[j];
            }
            ++counts[term];
        }
    }
    return counts;
}

/// TF-IDF weights of both phrases over their shared vocabulary, keyed by term.
struct TfIdfPair {
    std::map<std::string, double> first;
    std::map<std::string, double> second;
};

inline TfIdfPair tfidf_pair(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const std::size_t max_n = std::max(a.size(), b.size());
    const TermCounts ca = ngram_counts(a, max_n);
    const TermCounts cb = ngram_counts(b, max_n);
    auto idf = [&](const std::string& term) {
        const int df = static_cast<int>(ca.count(term)) + static_cast<int>(cb.count(term));
        return std::log(3.0 / (1.0 + df)) + 1.0;
    };
    TfIdfPair out;
    for (const auto& [term, tf] : ca) {
        out.first[term] = tf * idf(term);
        out.second.emplace(term, 0.0);
    }
    for (const auto& [term, tf] : cb) {
        out.second[term] = tf * idf(term);
        out.first.emplace(term, 0.0);
    }
    return out;
}

inline double similarity_of_tokens(const std::vector<std::string>& a,
                                   const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) throw EmptyConceptError("similarity: concept has no tokens");
    if (a == b) return 1.0;
    const TfIdfPair v = tfidf_pair(a, b);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (auto ia = v.first.begin(), ib = v.second.begin(); ia != v.first.end(); ++ia, ++ib) {
        dot += ia->second * ib->second;
        na += ia->second * ia->second;
        nb += ib->second * ib->second;
    }
    // na * nb is commutative, so sim(a, b) == sim(b, a) bit for bit.
    const double s = dot / std::sqrt(na * nb);
    return std::clamp(s, 0.0, 1.0);
}

inline double pairwise_similarity(std::string_view a, std::string_view b) {
    return similarity_of_tokens(tokenize(a), tokenize(b));
}

}  // namespace conceptcil
