#pragma once

// Desk-scale stand-in for frozen vision-language features.
//
// Class centers are Gaussian; samples scatter around their center; each class's concept
// embeddings sit near the center, so the concept branch has real signal. Concept texts are
// "<modifier> <color> <noun>" phrases with distinct vocabulary, except for a fraction that
// extend an earlier class's phrase by one word and therefore trip the similarity filter.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conceptcil/dataset.hpp"

namespace conceptcil {

struct SyntheticSpec {
    std::size_t n_classes = 10;
    std::size_t dim = 32;
    std::size_t train_per_class = 100;
    std::size_t test_per_class = 20;
    std::size_t n_tasks = 5;
    double center_scale = 0.18;
    double within_noise = 0.3;
    double anchor_noise = 0.05;
    std::size_t concepts_per_class = 3;
    double near_duplicate_fraction = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_classes < 1 || dim < 1 || train_per_class < 1 || test_per_class < 1 ||
            concepts_per_class < 1 || n_tasks < 1) {
            throw ConfigError("synthetic spec: all counts must be >= 1");
        }
        if (n_tasks > n_classes) throw ConfigError("synthetic spec: more tasks than classes");
        if (!(center_scale >= 0.0) || !(within_noise >= 0.0) || !(anchor_noise >= 0.0)) {
            throw ConfigError("synthetic spec: scales and noises must be >= 0");
        }
        if (!(near_duplicate_fraction >= 0.0 && near_duplicate_fraction <= 1.0)) {
            throw ConfigError("synthetic spec: near_duplicate_fraction must be in [0, 1]");
        }
    }

    nlohmann::json to_json() const {
        return {{"n_classes", n_classes},
                {"dim", dim},
                {"train_per_class", train_per_class},
                {"test_per_class", test_per_class},
                {"n_tasks", n_tasks},
                {"center_scale", center_scale},
                {"within_noise", within_noise},
                {"anchor_noise", anchor_noise},
                {"concepts_per_class", concepts_per_class},
                {"near_duplicate_fraction", near_duplicate_fraction},
                {"seed", seed}};
    }
};

struct SyntheticBenchmark {
    SyntheticSpec spec;
    Dataset train;
    Dataset test;
    Matrix centers;
    ConceptTexts concepts;
    ConceptBank bank;
    TaskSchedule schedule;
    std::size_t near_duplicates = 0;
};

namespace detail {

inline const std::vector<std::string>& synth_modifiers() {
    static const std::vector<std::string> v = {
        "rough", "smooth", "glossy", "matte", "scaly", "fuzzy", "ridged", "speckled",
        "striped", "mottled", "crusted", "waxy", "grainy", "velvety", "cracked", "pitted",
        "wrinkled", "banded", "blotchy", "dotted", "silky", "brittle", "swollen", "thin",
        "curved", "jagged", "flaky", "sleek", "knobby", "frayed", "dull", "shiny"};
    return v;
}

inline const std::vector<std::string>& synth_colors() {
    static const std::vector<std::string> v = {
        "crimson", "amber", "ivory", "olive", "teal", "violet", "ochre", "slate",
        "rust", "azure", "coral", "umber", "jade", "maroon", "saffron", "indigo",
        "pearl", "cobalt", "scarlet", "bronze", "lilac", "khaki", "mauve", "sepia",
        "copper", "cyan", "beige", "plum", "sand", "charcoal", "mint", "tawny"};
    return v;
}

inline const std::vector<std::string>& synth_nouns() {
    static const std::vector<std::string> v = {
        "patches", "scales", "ridges", "spots", "streaks", "edges", "plates", "margins",
        "rings", "folds", "crests", "veins", "nodules", "blotches", "bands", "flecks",
        "grooves", "bumps", "lobes", "tufts", "whorls", "rims", "pores", "stripes",
        "crusts", "tips", "fringes", "specks", "sheen", "lesions", "wings", "beaks"};
    return v;
}

}  // namespace detail

inline SyntheticBenchmark generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticBenchmark b;
    b.spec = spec;
    const std::size_t d = spec.dim;
    const std::size_t C = spec.n_classes;
    const std::size_t K = spec.concepts_per_class;

    auto stream = [&](std::uint64_t tag) {
        std::seed_seq seq{spec.seed, std::uint64_t{0x73796e74}, tag};
        return std::mt19937_64(seq);
    };
    std::normal_distribution<double> normal(0.0, 1.0);

    b.centers = Matrix(C, d);
    {
        auto rng = stream(1);
        for (double& v : b.centers.data()) v = spec.center_scale * normal(rng);
    }

    std::vector<std::string> names;
    for (std::size_t c = 0; c < C; ++c) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "class_%02zu", c);
        names.emplace_back(buf);
    }

    auto draw = [&](std::size_t per_class, std::uint64_t tag, const std::string& split) {
        auto rng = stream(tag);
        Dataset ds;
        ds.class_names = names;
        ds.split = split;
        ds.features = Matrix(C * per_class, d);
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t i = 0; i < per_class; ++i) {
                const std::size_t r = c * per_class + i;
                for (std::size_t j = 0; j < d; ++j)
                    ds.features(r, j) = static_cast<double>(
                        static_cast<float>(b.centers(c, j) + spec.within_noise * normal(rng)));
                ds.labels.push_back(c);
            }
        }
        return ds;
    };
    b.train = draw(spec.train_per_class, 2, "train");
    b.test = draw(spec.test_per_class, 3, "test");

    // Distinct phrases: walk a seeded permutation of (modifier, color, noun) triples with
    // every word used at most once per axis until the vocabulary wraps.
    auto text_rng = stream(4);
    const auto& mods = detail::synth_modifiers();
    const auto& cols = detail::synth_colors();
    const auto& nouns = detail::synth_nouns();
    std::vector<std::size_t> pm(mods.size()), pc(cols.size()), pn(nouns.size());
    std::iota(pm.begin(), pm.end(), 0);
    std::iota(pc.begin(), pc.end(), 0);
    std::iota(pn.begin(), pn.end(), 0);
    std::shuffle(pm.begin(), pm.end(), text_rng);
    std::shuffle(pc.begin(), pc.end(), text_rng);
    std::shuffle(pn.begin(), pn.end(), text_rng);

    std::vector<std::vector<std::string>> texts(C);
    std::size_t serial = 0;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t k = 0; k < K; ++k, ++serial) {
            const std::size_t lap = serial / mods.size();
            texts[c].push_back(mods[pm[serial % mods.size()]] + " " +
                               cols[pc[(serial + lap) % cols.size()]] + " " +
                               nouns[pn[(serial + 2 * lap) % nouns.size()]]);
        }
    }

    // Near duplicates: later classes borrow an earlier class's phrase plus a leading word.
    // At most K-1 per class so every class keeps at least one phrase of its own.
    if (C > 1 && spec.near_duplicate_fraction > 0.0) {
        const auto wanted = static_cast<std::size_t>(std::llround(spec.near_duplicate_fraction * C * K));
        std::vector<std::pair<std::size_t, std::size_t>> slots;
        for (std::size_t c = 1; c < C; ++c)
            for (std::size_t k = 0; k < K; ++k) slots.emplace_back(c, k);
        auto dup_rng = stream(5);
        std::shuffle(slots.begin(), slots.end(), dup_rng);
        std::vector<std::size_t> per_class(C, 0);
        static const std::vector<std::string> prefixes = {"faint", "vivid", "dense", "sparse"};
        for (const auto& [c, k] : slots) {
            if (b.near_duplicates >= wanted) break;
            if (K == 1 || per_class[c] >= K - 1) continue;
            std::uniform_int_distribution<std::size_t> pick_class(0, c - 1);
            std::uniform_int_distribution<std::size_t> pick_concept(0, K - 1);
            const std::size_t src_class = pick_class(dup_rng);
            const std::string& src = texts[src_class][pick_concept(dup_rng)];
            texts[c][k] = prefixes[b.near_duplicates % prefixes.size()] + " " + src;
            ++per_class[c];
            ++b.near_duplicates;
        }
    }

    {
        auto rng = stream(6);
        b.bank.embeddings = Matrix(C * K, d);
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t k = 0; k < K; ++k) {
                const std::size_t r = c * K + k;
                b.bank.texts.push_back(texts[c][k]);
                for (std::size_t j = 0; j < d; ++j)
                    b.bank.embeddings(r, j) = static_cast<double>(
                        static_cast<float>(b.centers(c, j) + spec.anchor_noise * normal(rng)));
            }
            b.concepts[names[c]] = texts[c];
        }
    }
    b.schedule = TaskSchedule::contiguous(C, spec.n_tasks);
    return b;
}

/// Benchmark directory layout written by `synth` and read by `train`.
struct BenchmarkPaths {
    std::filesystem::path root;

    std::filesystem::path train() const { return root / "train.json"; }
    std::filesystem::path test() const { return root / "test.json"; }
    std::filesystem::path concepts() const { return root / "concepts.json"; }
    std::filesystem::path bank() const { return root / "concept_bank.json"; }
    std::filesystem::path schedule() const { return root / "schedule.json"; }
    std::filesystem::path spec() const { return root / "synth_spec.json"; }
};

inline void write_benchmark(const SyntheticBenchmark& b, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    const BenchmarkPaths p{dir};
    save_dataset(b.train, p.train(), "train.cemb");
    save_dataset(b.test, p.test(), "test.cemb");
    save_concept_texts(b.concepts, p.concepts());
    save_concept_bank(b.bank, p.bank(), "concept_embeddings.cemb");
    save_task_schedule(b.schedule, p.schedule());
    detail::write_text_file(p.spec(), b.spec.to_json().dump(2) + "\n");
}

}  // namespace conceptcil
