#pragma once

// Class-incremental training loop: per task, ingest concepts, grow the heads, train on
// real features mixed with Gaussian pseudo-features of old classes, then freeze that
// task's class statistics and evaluate on every class seen so far.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "conceptcil/concept_pool.hpp"
#include "conceptcil/dataset.hpp"
#include "conceptcil/fusion_head.hpp"
#include "conceptcil/metrics.hpp"
#include "conceptcil/optim.hpp"
#include "conceptcil/replay.hpp"

namespace conceptcil {

struct RunConfig {
    double alpha = 0.8;
    double lambda = 0.6;
    double tau = 0.5;
    std::size_t k = 3;
    double lr = 0.005;
    double weight_decay = 1e-4;
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    double shrink = kDefaultShrink;
    std::uint64_t seed = 0;
    std::size_t replay_per_class = 2;
    bool attn_loss_on_replay = true;
    bool disable_concept_branch = false;
    bool disable_attn_loss = false;
    std::optional<double> infer_alpha;  // defaults to alpha

    bool concept_branch() const noexcept { return !disable_concept_branch; }
    bool attention_loss_active() const noexcept {
        return concept_branch() && !disable_attn_loss && lambda > 0.0;
    }
    double inference_alpha() const noexcept {
        return concept_branch() ? infer_alpha.value_or(alpha) : 1.0;
    }

    void validate() const {
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("config: alpha must be in [0, 1]");
        if (!(lambda >= 0.0)) throw ConfigError("config: lambda must be >= 0");
        if (!(tau >= 0.0)) throw ConfigError("config: tau must be >= 0");
        if (k < 1) throw ConfigError("config: k must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("config: lr must be > 0");
        if (!(weight_decay >= 0.0)) throw ConfigError("config: weight_decay must be >= 0");
        if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
        if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
        if (!(shrink > 0.0)) throw ConfigError("config: shrink must be > 0");
        if (infer_alpha && !(*infer_alpha >= 0.0 && *infer_alpha <= 1.0)) {
            throw ConfigError("config: infer_alpha must be in [0, 1]");
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j = {{"alpha", alpha},
                            {"lambda", lambda},
                            {"tau", tau},
                            {"k", k},
                            {"lr", lr},
                            {"weight_decay", weight_decay},
                            {"batch_size", batch_size},
                            {"epochs", epochs},
                            {"shrink", shrink},
                            {"seed", seed},
                            {"replay_per_class", replay_per_class},
                            {"attn_loss_on_replay", attn_loss_on_replay},
                            {"disable_concept_branch", disable_concept_branch},
                            {"disable_attn_loss", disable_attn_loss}};
        j["infer_alpha"] = infer_alpha ? nlohmann::json(*infer_alpha) : nlohmann::json(nullptr);
        return j;
    }

    /// Overlay fields present in `j` onto `base`. Unknown keys are rejected.
    static RunConfig from_json(const nlohmann::json& j) { return from_json(j, RunConfig{}); }

    static RunConfig from_json(const nlohmann::json& j, RunConfig base) {
        if (!j.is_object()) throw ConfigError("config: expected a JSON object");
        try {
            for (const auto& [key, v] : j.items()) {
                if (key == "alpha") base.alpha = v.get<double>();
                else if (key == "lambda") base.lambda = v.get<double>();
                else if (key == "tau") base.tau = v.get<double>();
                else if (key == "k") base.k = v.get<std::size_t>();
                else if (key == "lr") base.lr = v.get<double>();
                else if (key == "weight_decay") base.weight_decay = v.get<double>();
                else if (key == "batch_size") base.batch_size = v.get<std::size_t>();
                else if (key == "epochs") base.epochs = v.get<std::size_t>();
                else if (key == "shrink") base.shrink = v.get<double>();
                else if (key == "seed") base.seed = v.get<std::uint64_t>();
                else if (key == "replay_per_class") base.replay_per_class = v.get<std::size_t>();
                else if (key == "attn_loss_on_replay") base.attn_loss_on_replay = v.get<bool>();
                else if (key == "disable_concept_branch") base.disable_concept_branch = v.get<bool>();
                else if (key == "disable_attn_loss") base.disable_attn_loss = v.get<bool>();
                else if (key == "infer_alpha") {
                    base.infer_alpha = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
                } else {
                    throw ConfigError("config: unknown field '" + key + "'");
                }
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        return base;
    }
};

// ---------------------------------------------------------------------------
// Deterministic random streams. Each depends only on the listed coordinates.

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t a = 0,
                                   std::uint64_t b = 0) {
    std::seed_seq seq{seed, purpose, a, b};
    return std::mt19937_64(seq);
}

inline constexpr std::uint64_t kEpochOrderStream = 0x6f72646572;
inline constexpr std::uint64_t kReplayStream = 0x7265706c6179;

/// Permutation of [0, n) used for (seed, task, epoch).
inline std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t task, std::size_t epoch,
                                            std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_stream(seed, kEpochOrderStream, task, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

// ---------------------------------------------------------------------------

struct Batch {
    Matrix features;
    std::vector<std::size_t> labels;  // dataset class ids
    std::vector<bool> replayed;
    std::vector<std::optional<ConceptSet>> concept_sets;
};

/// Real rows followed by `replay_per_class` fresh pseudo-features for each old class, in
/// the order of `old_stats`.
template <class Rng>
Batch compose_batch(const Matrix& real_features, std::span<const std::size_t> real_labels,
                    std::span<const ClassStats> old_stats, std::size_t replay_per_class, Rng& rng) {
    Batch b;
    b.features = real_features;
    b.labels.assign(real_labels.begin(), real_labels.end());
    b.replayed.assign(real_labels.size(), false);
    if (replay_per_class > 0) {
        for (const ClassStats& s : old_stats) {
            b.features = vstack(b.features, sample(s, replay_per_class, rng));
            b.labels.insert(b.labels.end(), replay_per_class, s.class_id);
            b.replayed.insert(b.replayed.end(), replay_per_class, true);
        }
    }
    b.concept_sets.assign(b.labels.size(), std::nullopt);
    return b;
}

/// Fill concept targets from the pool: real rows always, replayed rows when `on_replay`.
inline void attach_concept_sets(Batch& b, const ConceptPool& pool,
                                std::span<const std::string> class_names, bool on_replay) {
    for (std::size_t i = 0; i < b.labels.size(); ++i) {
        if (b.replayed[i] && !on_replay) continue;
        const auto& ids = pool.class_concepts(class_names[b.labels[i]]);
        if (ids.empty()) {
            throw ConfigError("class '" + class_names[b.labels[i]] +
                              "' has no concepts but the attention loss is enabled");
        }
        b.concept_sets[i] = ids;
    }
}

// ---------------------------------------------------------------------------

struct EpochLoss {
    double ce = 0.0, aux = 0.0, attn = 0.0, total = 0.0;
};

struct TaskReport {
    std::size_t task = 0;
    std::vector<std::size_t> classes;
    StageMetrics metrics;
    EpochLoss final_loss;
    std::vector<EpochLoss> loss_curve;
    std::size_t pool_size = 0;
    std::vector<FilterDecision> filter_decisions;
    std::size_t steps = 0;
};

/// Everything that persists across tasks.
struct EngineState {
    RunConfig config;
    std::vector<std::string> class_names;
    std::vector<std::size_t> seen;        // head index -> dataset class id
    std::map<std::size_t, std::size_t> head_index;
    FusionParams params;
    bool initialized = false;
    ConceptPool pool;
    std::vector<ClassStats> stats;        // one per seen class, in head order
    std::size_t tasks_done = 0;

    explicit EngineState(RunConfig cfg, std::vector<std::string> names)
        : config(std::move(cfg)), class_names(std::move(names)), pool(config.tau, config.k) {
        config.validate();
    }

    std::vector<std::string> seen_names() const {
        std::vector<std::string> out;
        for (std::size_t c : seen) out.push_back(class_names[c]);
        return out;
    }

    std::vector<std::size_t> to_head(std::span<const std::size_t> class_ids) const {
        std::vector<std::size_t> out;
        out.reserve(class_ids.size());
        for (std::size_t c : class_ids) out.push_back(head_index.at(c));
        return out;
    }

    /// Concept features, or an empty matrix when the concept branch is off.
    const Matrix& concept_features() const {
        static const Matrix kNone;
        return config.concept_branch() ? pool.features() : kNone;
    }

    std::vector<std::uint64_t> stats_fingerprints() const {
        std::vector<std::uint64_t> out;
        for (const auto& s : stats) out.push_back(s.fingerprint());
        return out;
    }

    /// Test rows of seen classes, with labels mapped to head indices.
    std::pair<Matrix, std::vector<std::size_t>> seen_test_rows(const Dataset& test) const {
        const std::set<std::size_t> seen_set(seen.begin(), seen.end());
        const auto rows = test.rows_of(seen_set);
        Dataset sub = test.subset(rows);
        return {std::move(sub.features), to_head(sub.labels)};
    }
};

/// Grow the pool with this task's concepts and append feature rows for newly added ones.
inline std::vector<FilterDecision> ingest_concepts(EngineState& st, std::span<const std::size_t> task_classes,
                                                   const ConceptTexts& texts, const ConceptBank& bank) {
    std::vector<FilterDecision> all;
    const std::size_t before = st.pool.size();
    for (std::size_t c : task_classes) {
        const std::string& name = st.class_names[c];
        auto it = texts.find(name);
        if (it == texts.end() || it->second.empty()) {
            if (st.config.attention_loss_active()) {
                throw ConfigError("class '" + name + "' has no concepts but the attention loss is enabled");
            }
            continue;
        }
        auto d = st.pool.filter_and_insert(name, it->second);
        all.insert(all.end(), d.begin(), d.end());
    }
    if (st.pool.size() == 0) throw ConfigError("concept branch enabled but the concept pool is empty");
    Matrix fresh(st.pool.size() - before, bank.dim());
    for (std::size_t id = before; id < st.pool.size(); ++id) {
        auto row = bank.lookup(st.pool.concepts()[id].text);
        std::copy(row.begin(), row.end(), fresh.row(id - before).begin());
    }
    st.pool.append_embeddings(fresh);
    return all;
}

inline TaskReport run_task(EngineState& st, std::size_t task_index, std::span<const std::size_t> task_classes,
                           const Dataset& train, const Dataset& test, const ConceptTexts& texts,
                           const ConceptBank& bank) {
    const RunConfig& cfg = st.config;
    if (task_index != st.tasks_done) {
        throw ProtocolError("run_task: expected task " + std::to_string(st.tasks_done) + ", got " +
                            std::to_string(task_index));
    }
    for (std::size_t c : task_classes) {
        if (c >= st.class_names.size()) throw ProtocolError("run_task: unknown class id " + std::to_string(c));
        if (st.head_index.count(c)) {
            throw ProtocolError("run_task: class " + std::to_string(c) + " was already learned");
        }
    }
    const std::set<std::size_t> task_set(task_classes.begin(), task_classes.end());
    const auto task_rows = train.rows_of(task_set);
    if (task_rows.empty()) throw DataError("run_task: no training rows for task " + std::to_string(task_index));

    TaskReport report;
    report.task = task_index;
    report.classes.assign(task_classes.begin(), task_classes.end());

    // (1) concepts
    if (cfg.concept_branch()) {
        if (bank.dim() != train.features.cols()) {
            throw DimensionError("concept bank dim " + std::to_string(bank.dim()) + " vs feature dim " +
                                 std::to_string(train.features.cols()));
        }
        report.filter_decisions = ingest_concepts(st, task_classes, texts, bank);
    }

    // (2) heads
    const std::size_t old_count = st.seen.size();
    for (std::size_t c : task_classes) {
        st.head_index[c] = st.seen.size();
        st.seen.push_back(c);
    }
    if (!st.initialized) {
        st.params = FusionParams::init(train.features.cols(), st.seen.size(), cfg.seed);
        st.initialized = true;
    } else {
        st.params.expand_classes(st.seen.size(), cfg.seed);
    }

    // (3) training
    const Dataset task_data = train.subset(task_rows);
    const std::size_t n = task_data.features.rows();
    const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    const long total_steps = static_cast<long>(cfg.epochs * batches);
    auto trainable = cfg.concept_branch() ? st.params.all_tensors() : st.params.image_head_tensors();
    AdamW opt(trainable, {0.9, 0.999, 1e-8, cfg.weight_decay});
    auto replay_rng = make_stream(cfg.seed, kReplayStream, task_index);
    const std::vector<ClassStats> old_stats(st.stats.begin(), st.stats.begin() + static_cast<std::ptrdiff_t>(old_count));
    const std::vector<std::string> seen_names = st.seen_names();
    const LossWeights weights{cfg.alpha, cfg.attention_loss_active() ? cfg.lambda : 0.0, cfg.concept_branch()};

    long step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(cfg.seed, task_index, epoch, n);
        EpochLoss acc;
        for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
            const std::size_t b1 = std::min(n, b0 + cfg.batch_size);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b0),
                                         order.begin() + static_cast<std::ptrdiff_t>(b1));
            const Dataset real = task_data.subset(idx);
            Batch batch = compose_batch(real.features, real.labels, old_stats, cfg.replay_per_class, replay_rng);
            if (cfg.attention_loss_active()) {
                attach_concept_sets(batch, st.pool, st.class_names, cfg.attn_loss_on_replay);
            }
            const auto head_labels = st.to_head(batch.labels);

            opt.zero_grad();
            LossBreakdown loss;
            if (cfg.concept_branch()) {
                const ForwardTrace trace = forward(st.params, batch.features, st.pool.features());
                loss = composite_loss(st.params, trace, head_labels, batch.concept_sets, weights);
            } else {
                loss = image_only_loss(st.params, batch.features, head_labels);
            }
            opt.step(cosine_lr(step, total_steps, cfg.lr));
            ++step;
            acc.ce += loss.ce;
            acc.aux += loss.aux;
            acc.attn += loss.attn;
            acc.total += loss.total;
        }
        const double inv = 1.0 / static_cast<double>(batches);
        report.loss_curve.push_back({acc.ce * inv, acc.aux * inv, acc.attn * inv, acc.total * inv});
    }
    report.final_loss = report.loss_curve.back();
    report.steps = static_cast<std::size_t>(step);

    // (4) class statistics from real features only
    for (std::size_t c : task_classes) {
        const auto rows = train.rows_of({c});
        if (rows.empty()) throw DataError("run_task: class " + std::to_string(c) + " has no training rows");
        st.stats.push_back(fit_class(gather_rows(train.features, rows), c, cfg.shrink));
    }

    // (5) evaluation on every seen class
    const auto [tx, ty] = st.seen_test_rows(test);
    report.metrics = evaluate_stage(st.params, st.concept_features(), tx, ty, cfg.inference_alpha());
    report.metrics.stage = task_index + 1;
    report.pool_size = st.pool.size();
    ++st.tasks_done;
    return report;
}

// ---------------------------------------------------------------------------

struct RunInputs {
    Dataset train;
    Dataset test;
    TaskSchedule schedule;
    ConceptTexts concepts;
    ConceptBank bank;
};

struct RunReport {
    RunConfig config;
    std::vector<TaskReport> tasks;
    AggregateMetrics summary;
    std::optional<AttentionExport> attention;
    std::vector<std::string> artifacts;

    std::vector<StageMetrics> stages() const {
        std::vector<StageMetrics> out;
        for (const auto& t : tasks) out.push_back(t.metrics);
        return out;
    }
};

/// Files that make up one task's checkpoint directory.
struct CheckpointPaths {
    std::filesystem::path dir;
    std::filesystem::path model() const { return dir; }
    std::filesystem::path engine() const { return dir / "engine.json"; }
    std::filesystem::path pool() const { return dir / "pool.json"; }
    std::filesystem::path pool_embeddings() const { return dir / "pool_embeddings.cemb"; }
    std::filesystem::path stats() const { return dir / "stats.json"; }
};

inline void save_engine_checkpoint(EngineState& st, const std::filesystem::path& dir) {
    const CheckpointPaths p{dir};
    save_checkpoint(st.params, p.model(), st.pool.size());
    nlohmann::json e;
    e["version"] = 1;
    e["tasks_done"] = st.tasks_done;
    e["seen_classes"] = st.seen;
    e["class_names"] = st.class_names;
    e["config"] = st.config.to_json();
    e["inference_alpha"] = st.config.inference_alpha();
    detail::write_text_file(p.engine(), e.dump(2) + "\n");
    if (st.config.concept_branch()) {
        save_pool(st.pool, p.pool());
        save_pool_embeddings(st.pool, p.pool_embeddings());
    }
    save_stats(st.stats, p.stats());
}

/// Reconstruct an engine from a checkpoint written by save_engine_checkpoint.
inline EngineState load_engine_checkpoint(const std::filesystem::path& dir) {
    const CheckpointPaths p{dir};
    if (!std::filesystem::exists(p.engine())) throw IoError("checkpoint: missing '" + p.engine().string() + "'");
    const auto e = detail::parse_json_file(p.engine(), "engine checkpoint");
    RunConfig cfg;
    std::vector<std::string> names;
    std::vector<std::size_t> seen;
    std::size_t done = 0;
    try {
        cfg = RunConfig::from_json(e.at("config"));
        names = e.at("class_names").get<std::vector<std::string>>();
        seen = e.at("seen_classes").get<std::vector<std::size_t>>();
        done = e.at("tasks_done").get<std::size_t>();
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("engine checkpoint: ") + ex.what());
    }
    EngineState st(cfg, names);
    auto ckpt = load_checkpoint(p.model());
    st.params = std::move(ckpt.params);
    st.initialized = true;
    st.seen = seen;
    for (std::size_t i = 0; i < seen.size(); ++i) st.head_index[seen[i]] = i;
    st.tasks_done = done;
    if (st.params.num_classes() != seen.size()) {
        throw IntegrityError("checkpoint: head has " + std::to_string(st.params.num_classes()) +
                             " classes, engine lists " + std::to_string(seen.size()));
    }
    if (cfg.concept_branch()) {
        st.pool = load_pool(p.pool(), p.pool_embeddings());
        if (st.pool.size() != ckpt.pool_size) throw IntegrityError("checkpoint: pool size disagrees with manifest");
    }
    st.stats = load_stats(p.stats());
    return st;
}

inline nlohmann::json stage_json(const StageMetrics& m, std::span<const std::size_t> seen) {
    nlohmann::json recalls = nlohmann::json::array();
    for (std::size_t i = 0; i < m.per_class_recall.size(); ++i) {
        recalls.push_back({{"class_id", seen[i]},
                           {"recall", m.per_class_recall[i] ? nlohmann::json(*m.per_class_recall[i])
                                                            : nlohmann::json(nullptr)},
                           {"test_count", m.class_counts[i]}});
    }
    return {{"stage", m.stage},
            {"accuracy", m.accuracy},
            {"mcr", m.mcr},
            {"accuracy_percent", percent(m.accuracy)},
            {"mcr_percent", percent(m.mcr)},
            {"n_seen_classes", m.n_seen_classes()},
            {"per_class_recall", recalls}};
}

inline nlohmann::json run_report_json(const RunReport& r, std::span<const std::size_t> final_seen) {
    nlohmann::json j;
    j["config"] = r.config.to_json();
    j["tasks"] = nlohmann::json::array();
    for (const auto& t : r.tasks) {
        nlohmann::json tj;
        tj["task"] = t.task;
        tj["classes"] = t.classes;
        tj["metrics"] = stage_json(t.metrics, std::span(final_seen.data(), t.metrics.n_seen_classes()));
        tj["final_loss"] = {{"ce", t.final_loss.ce}, {"aux", t.final_loss.aux},
                            {"attn", t.final_loss.attn}, {"total", t.final_loss.total}};
        nlohmann::json curve = nlohmann::json::array();
        for (const auto& e : t.loss_curve) curve.push_back({{"ce", e.ce}, {"aux", e.aux}, {"attn", e.attn}, {"total", e.total}});
        tj["loss_curve"] = curve;
        tj["pool_size"] = t.pool_size;
        tj["steps"] = t.steps;
        nlohmann::json dec = nlohmann::json::array();
        for (const auto& d : t.filter_decisions) {
            dec.push_back({{"text", d.text}, {"decision", d.added() ? "added" : "replaced_by"},
                           {"id", d.id}, {"max_similarity", d.max_similarity}});
        }
        tj["filter_decisions"] = dec;
        j["tasks"].push_back(tj);
    }
    j["summary"] = {{"avg_accuracy", r.summary.avg_accuracy}, {"last_accuracy", r.summary.last_accuracy},
                    {"avg_mcr", r.summary.avg_mcr}, {"last_mcr", r.summary.last_mcr},
                    {"avg_accuracy_percent", percent(r.summary.avg_accuracy)},
                    {"last_accuracy_percent", percent(r.summary.last_accuracy)},
                    {"avg_mcr_percent", percent(r.summary.avg_mcr)},
                    {"last_mcr_percent", percent(r.summary.last_mcr)}};
    j["artifacts"] = r.artifacts;
    return j;
}

/// Runs every task in order. When `out_dir` is set, writes per-task checkpoints
/// (task_NN/), metrics.csv, report.json and, with the concept branch on, attention.csv.
inline RunReport run_schedule(const RunInputs& in, const RunConfig& cfg,
                              const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                              EngineState* final_state = nullptr) {
    in.schedule.validate();
    if (in.train.num_classes() != in.schedule.num_classes) {
        throw ScheduleError("schedule covers " + std::to_string(in.schedule.num_classes) +
                            " classes, dataset has " + std::to_string(in.train.num_classes()));
    }
    if (in.test.class_names != in.train.class_names) throw DataError("train/test class names differ");
    EngineState st(cfg, in.train.class_names);
    RunReport report;
    report.config = st.config;

    std::vector<std::uint64_t> frozen_stats;
    std::uint64_t frozen_pool = st.pool.prefix_fingerprint(0);
    std::size_t frozen_pool_size = 0;
    for (std::size_t t = 0; t < in.schedule.size(); ++t) {
        report.tasks.push_back(run_task(st, t, in.schedule.tasks[t], in.train, in.test, in.concepts, in.bank));

        // Earlier tasks' statistics and concepts must come through untouched.
        const auto now = st.stats_fingerprints();
        if (!std::equal(frozen_stats.begin(), frozen_stats.end(), now.begin())) {
            throw ProtocolError("class statistics of an earlier task changed");
        }
        if (st.pool.prefix_fingerprint(frozen_pool_size) != frozen_pool) {
            throw ProtocolError("concept pool entries of an earlier task changed");
        }
        frozen_stats = now;
        frozen_pool_size = st.pool.size();
        frozen_pool = st.pool.prefix_fingerprint(frozen_pool_size);

        if (out_dir) {
            char name[32];
            std::snprintf(name, sizeof name, "task_%02zu", t + 1);
            save_engine_checkpoint(st, *out_dir / name);
            report.artifacts.push_back(name);
        }
    }
    const auto stages = report.stages();
    report.summary = aggregate(stages);
    if (cfg.concept_branch()) {
        const auto [tx, ty] = st.seen_test_rows(in.test);
        const auto names = st.seen_names();
        report.attention = attention_matrix(st.params, st.pool, tx, ty, names);
    }
    if (out_dir) {
        detail::write_text_file(*out_dir / "metrics.csv", metrics_csv(stages));
        if (report.attention) detail::write_text_file(*out_dir / "attention.csv", attention_csv(*report.attention));
        report.artifacts.push_back("metrics.csv");
        if (report.attention) report.artifacts.push_back("attention.csv");
        detail::write_text_file(*out_dir / "report.json", run_report_json(report, st.seen).dump(2) + "\n");
    }
    if (final_state != nullptr) *final_state = std::move(st);
    return report;
}

inline RunInputs load_benchmark(const std::filesystem::path& dir) {
    RunInputs in;
    in.train = load_dataset(dir / "train.json");
    in.test = load_dataset(dir / "test.json");
    in.schedule = load_task_schedule(dir / "schedule.json", in.train.num_classes());
    if (std::filesystem::exists(dir / "concepts.json")) in.concepts = load_concept_texts(dir / "concepts.json");
    if (std::filesystem::exists(dir / "concept_bank.json")) in.bank = load_concept_bank(dir / "concept_bank.json");
    return in;
}

}  // namespace conceptcil
