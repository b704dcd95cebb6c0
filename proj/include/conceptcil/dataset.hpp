#pragma once

// Dataset manifests, task schedules, concept-text files and concept embedding banks.

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conceptcil/embedding_io.hpp"
#include "conceptcil/matrix.hpp"

namespace conceptcil {

namespace detail {
inline nlohmann::json parse_json_file(const std::filesystem::path& path, const std::string& what) {
    const std::string text = read_text_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(what + " '" + path.string() + "': parse error at byte offset " +
                         std::to_string(e.byte));
    }
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& file) {
    std::filesystem::path p(file);
    return p.is_absolute() ? p : base.parent_path() / p;
}
}  // namespace detail

/// Frozen-encoder features with integer labels.
struct Dataset {
    Matrix features;
    std::vector<std::size_t> labels;
    std::vector<std::string> class_names;
    std::string split;

    std::size_t num_classes() const noexcept { return class_names.size(); }

    void validate() const {
        if (labels.size() != features.rows()) {
            throw IntegrityError("dataset: " + std::to_string(labels.size()) + " labels for " +
                                 std::to_string(features.rows()) + " rows");
        }
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= class_names.size()) {
                throw IntegrityError("dataset: labels[" + std::to_string(i) + "] = " +
                                     std::to_string(labels[i]) + " >= number of classes " +
                                     std::to_string(class_names.size()));
            }
        }
    }

    /// Row indices whose label is in `classes`, in file order.
    std::vector<std::size_t> rows_of(const std::set<std::size_t>& classes) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (classes.count(labels[i])) idx.push_back(i);
        return idx;
    }

    Dataset subset(std::span<const std::size_t> rows) const {
        Dataset out;
        out.features = gather_rows(features, rows);
        out.labels.reserve(rows.size());
        for (std::size_t r : rows) out.labels.push_back(labels[r]);
        out.class_names = class_names;
        out.split = split;
        return out;
    }
};

/// Writes `<manifest>` and its embeddings file (float32) next to it.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& manifest_path,
                         const std::string& embeddings_file) {
    ds.validate();
    write_embeddings(manifest_path.parent_path() / embeddings_file, ds.features);
    nlohmann::json j;
    j["embeddings_file"] = embeddings_file;
    j["labels"] = ds.labels;
    j["class_names"] = ds.class_names;
    j["split"] = ds.split;
    detail::write_text_file(manifest_path, j.dump(2) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
    const auto j = detail::parse_json_file(manifest_path, "dataset manifest");
    Dataset ds;
    try {
        ds.features = read_embeddings(detail::resolve(manifest_path, j.at("embeddings_file").get<std::string>()));
        ds.labels = j.at("labels").get<std::vector<std::size_t>>();
        ds.class_names = j.at("class_names").get<std::vector<std::string>>();
        ds.split = j.value("split", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("dataset manifest '" + manifest_path.string() + "': " + e.what());
    }
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------

/// Ordered, pairwise-disjoint class sets whose union is exactly 0..num_classes-1.
struct TaskSchedule {
    std::vector<std::vector<std::size_t>> tasks;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return tasks.size(); }

    void validate() const {
        if (tasks.empty()) throw ScheduleError("task schedule: no tasks");
        std::map<std::size_t, std::size_t> owner;
        std::vector<std::size_t> overlaps;
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            if (tasks[t].empty()) throw ScheduleError("task schedule: task " + std::to_string(t) + " is empty");
            for (std::size_t c : tasks[t]) {
                if (c >= num_classes) {
                    throw ScheduleError("task schedule: class " + std::to_string(c) + " outside 0.." +
                                        std::to_string(num_classes - 1));
                }
                if (!owner.emplace(c, t).second) overlaps.push_back(c);
            }
        }
        auto join = [](const std::vector<std::size_t>& ids) {
            std::string s;
            for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? ", " : "") + std::to_string(ids[i]);
            return s;
        };
        if (!overlaps.empty()) {
            std::sort(overlaps.begin(), overlaps.end());
            overlaps.erase(std::unique(overlaps.begin(), overlaps.end()), overlaps.end());
            throw ScheduleError("task schedule: overlapping classes " + join(overlaps));
        }
        std::vector<std::size_t> gaps;
        for (std::size_t c = 0; c < num_classes; ++c)
            if (!owner.count(c)) gaps.push_back(c);
        if (!gaps.empty()) throw ScheduleError("task schedule: classes not covered " + join(gaps));
    }

    static TaskSchedule contiguous(std::size_t num_classes, std::size_t num_tasks) {
        if (num_tasks == 0 || num_tasks > num_classes) {
            throw ScheduleError("task schedule: cannot split " + std::to_string(num_classes) +
                                " classes into " + std::to_string(num_tasks) + " tasks");
        }
        TaskSchedule s;
        s.num_classes = num_classes;
        std::size_t next = 0;
        for (std::size_t t = 0; t < num_tasks; ++t) {
            const std::size_t count = num_classes / num_tasks + (t < num_classes % num_tasks ? 1 : 0);
            std::vector<std::size_t> task;
            for (std::size_t i = 0; i < count; ++i) task.push_back(next++);
            s.tasks.push_back(std::move(task));
        }
        return s;
    }
};

inline TaskSchedule parse_task_schedule(const nlohmann::json& j, std::size_t num_classes) {
    TaskSchedule s;
    s.num_classes = num_classes;
    try {
        s.tasks = j.at("tasks").get<std::vector<std::vector<std::size_t>>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("task schedule: ") + e.what());
    }
    s.validate();
    return s;
}

inline TaskSchedule load_task_schedule(const std::filesystem::path& path, std::size_t num_classes) {
    return parse_task_schedule(detail::parse_json_file(path, "task schedule"), num_classes);
}

inline void save_task_schedule(const TaskSchedule& s, const std::filesystem::path& path) {
    nlohmann::json j;
    j["tasks"] = s.tasks;
    detail::write_text_file(path, j.dump() + "\n");
}

// ---------------------------------------------------------------------------

/// {"class_name": ["concept", ...], ...}
using ConceptTexts = std::map<std::string, std::vector<std::string>>;

inline ConceptTexts load_concept_texts(const std::filesystem::path& path) {
    const auto j = detail::parse_json_file(path, "concept file");
    if (!j.is_object()) throw ParseError("concept file '" + path.string() + "': expected a JSON object");
    ConceptTexts out;
    for (const auto& [name, list] : j.items()) {
        if (!list.is_array()) throw ParseError("concept file: value of '" + name + "' must be an array");
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (!list[i].is_string()) {
                throw ParseError("concept file: '" + name + "'[" + std::to_string(i) + "] must be a string");
            }
            out[name].push_back(list[i].get<std::string>());
        }
    }
    return out;
}

inline void save_concept_texts(const ConceptTexts& texts, const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, list] : texts) j[name] = list;
    detail::write_text_file(path, j.dump(2) + "\n");
}

/// Text-encoder outputs for concept phrases: row i of `embeddings` encodes texts[i].
struct ConceptBank {
    std::vector<std::string> texts;
    Matrix embeddings;

    std::size_t dim() const noexcept { return embeddings.cols(); }

    void validate() const {
        if (texts.size() != embeddings.rows()) {
            throw AlignmentError("concept bank: " + std::to_string(texts.size()) + " texts for " +
                                 std::to_string(embeddings.rows()) + " embedding rows");
        }
    }

    /// Row of the first entry with exactly this text.
    std::span<const double> lookup(const std::string& text) const {
        auto it = std::find(texts.begin(), texts.end(), text);
        if (it == texts.end()) throw DataError("concept bank: no embedding for concept '" + text + "'");
        return embeddings.row(static_cast<std::size_t>(it - texts.begin()));
    }
};

inline void save_concept_bank(const ConceptBank& bank, const std::filesystem::path& manifest_path,
                              const std::string& embeddings_file) {
    bank.validate();
    write_embeddings(manifest_path.parent_path() / embeddings_file, bank.embeddings);
    nlohmann::json j;
    j["embeddings_file"] = embeddings_file;
    j["texts"] = bank.texts;
    detail::write_text_file(manifest_path, j.dump(2) + "\n");
}

inline ConceptBank load_concept_bank(const std::filesystem::path& manifest_path) {
    const auto j = detail::parse_json_file(manifest_path, "concept bank");
    ConceptBank bank;
    try {
        bank.texts = j.at("texts").get<std::vector<std::string>>();
        bank.embeddings = read_embeddings(detail::resolve(manifest_path, j.at("embeddings_file").get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("concept bank '" + manifest_path.string() + "': " + e.what());
    }
    bank.validate();
    return bank;
}

}  // namespace conceptcil
