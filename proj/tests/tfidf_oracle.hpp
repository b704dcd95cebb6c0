#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace testsupport {

// Brute-force reference written without the library's helpers: linear-scan vocabulary,
// explicit count loops, textbook cosine.
inline std::vector<std::string> oracle_words(const std::string& s) {
    std::vector<std::string> out;
    std::string w;
    for (char c : s + " ") {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            w += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!w.empty()) {
            out.push_back(w);
            w.clear();
        }
    }
    return out;
}

inline std::vector<std::string> oracle_grams(const std::vector<std::string>& w, std::size_t max_n) {
    std::vector<std::string> grams;
    for (std::size_t i = 0; i < w.size(); ++i) {
        std::string g;
        for (std::size_t n = 1; n <= max_n && i + n <= w.size(); ++n) {
            g += (n == 1 ? "" : " ") + w[i + n - 1];
            grams.push_back(g);
        }
    }
    return grams;
}

inline double oracle_similarity(const std::string& a, const std::string& b) {
    const auto wa = oracle_words(a), wb = oracle_words(b);
    const std::size_t max_n = std::max(wa.size(), wb.size());
    const auto ga = oracle_grams(wa, max_n), gb = oracle_grams(wb, max_n);
    std::vector<std::string> vocab;
    for (const auto& g : ga)
        if (std::find(vocab.begin(), vocab.end(), g) == vocab.end()) vocab.push_back(g);
    for (const auto& g : gb)
        if (std::find(vocab.begin(), vocab.end(), g) == vocab.end()) vocab.push_back(g);
    std::vector<double> va, vb;
    for (const auto& term : vocab) {
        const double tfa = static_cast<double>(std::count(ga.begin(), ga.end(), term));
        const double tfb = static_cast<double>(std::count(gb.begin(), gb.end(), term));
        const double df = (tfa > 0 ? 1.0 : 0.0) + (tfb > 0 ? 1.0 : 0.0);
        const double idf = std::log((1.0 + 2.0) / (1.0 + df)) + 1.0;
        va.push_back(tfa * idf);
        vb.push_back(tfb * idf);
    }
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        dot += va[i] * vb[i];
        na += va[i] * va[i];
        nb += vb[i] * vb[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline std::string random_phrase(std::mt19937_64& rng) {
    static const std::vector<std::string> words = {"black", "white", "and",  "stripes", "patches",
                                                    "red",   "scaly", "nail", "thick",   "spots"};
    std::uniform_int_distribution<int> len(1, 5);
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    std::string s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) s += (i ? (rng() % 3 == 0 ? "-" : " ") : "") + words[pick(rng)];
    return s;
}

}  // namespace testsupport
