// conceptcil command-line driver.
//
// Exit codes: 0 success, 1 usage error, 2 runtime or data error. Diagnostics go to
// stderr; machine-readable output goes to files or stdout.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "conceptcil/conceptcil.hpp"

namespace fs = std::filesystem;
using namespace conceptcil;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct SynthArgs {
    SyntheticSpec spec;
    std::string out;
};

struct PoolArgs {
    std::string data;
    std::string concepts;
    std::string bank;
    std::string out;
    double tau = 0.5;
    std::size_t k = 3;
};

// Flags that may override config-file values; only options actually given are applied.
struct TrainArgs {
    std::string data;
    std::string out;
    std::string config;
    std::vector<std::uint64_t> seeds;
    bool no_concept_branch = false;
    bool no_attn_loss = false;
    std::size_t replay_per_class = 0;
    double alpha = 0, lambda = 0, tau = 0, lr = 0, infer_alpha = 0;
    std::size_t k = 0, epochs = 0, batch_size = 0;
    bool attn_on_replay = true;
};

struct CheckpointArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
    double infer_alpha = 0;
};

struct GradArgs {
    GradcheckOptions opts;
    std::size_t trials = 1;
};

std::string format_result(double fraction) { return percent(fraction); }

int cmd_synth(const SynthArgs& a) {
    const auto bench = generate_synthetic(a.spec);
    write_benchmark(bench, a.out);
    std::cout << "synth: " << a.spec.n_classes << " classes, dim " << a.spec.dim << ", "
              << bench.train.features.rows() << " train / " << bench.test.features.rows() << " test rows, "
              << bench.schedule.size() << " tasks, " << bench.near_duplicates
              << " near-duplicate concepts -> " << a.out << "\n";
    return 0;
}

int cmd_pool_build(const PoolArgs& a) {
    ConceptTexts texts;
    std::vector<std::string> order;
    std::optional<ConceptBank> bank;
    if (!a.data.empty()) {
        const BenchmarkPaths p{a.data};
        texts = load_concept_texts(p.concepts());
        const Dataset train = load_dataset(p.train());
        const TaskSchedule sched = load_task_schedule(p.schedule(), train.num_classes());
        for (const auto& task : sched.tasks)
            for (std::size_t c : task) order.push_back(train.class_names[c]);
        if (fs::exists(p.bank())) bank = load_concept_bank(p.bank());
    }
    if (!a.concepts.empty()) {
        texts = load_concept_texts(a.concepts);
        order.clear();
        for (const auto& [name, list] : texts) order.push_back(name);
    }
    if (!a.bank.empty()) bank = load_concept_bank(a.bank);

    ConceptPool pool(a.tau, a.k);
    nlohmann::json decisions = nlohmann::json::array();
    for (const auto& name : order) {
        auto it = texts.find(name);
        if (it == texts.end()) continue;
        for (const auto& d : pool.filter_and_insert(name, it->second)) {
            decisions.push_back({{"class", name}, {"text", d.text},
                                 {"decision", d.added() ? "added" : "replaced_by"},
                                 {"id", d.id}, {"max_similarity", d.max_similarity}});
        }
    }
    const fs::path out(a.out);
    save_pool(pool, out / "pool.json");
    detail::write_text_file(out / "decisions.json", decisions.dump(2) + "\n");
    if (bank) {
        Matrix h(pool.size(), bank->dim());
        for (std::size_t i = 0; i < pool.size(); ++i) {
            auto row = bank->lookup(pool.concepts()[i].text);
            std::copy(row.begin(), row.end(), h.row(i).begin());
        }
        pool.attach_embeddings(std::move(h));
        save_pool_embeddings(pool, out / "pool_embeddings.cemb");
    }
    std::size_t replaced = 0;
    for (const auto& d : decisions) replaced += d["decision"] == "replaced_by";
    std::cout << "pool-build: " << pool.size() << " concepts, " << replaced << " replaced, "
              << pool.class_map().size() << " classes -> " << a.out << "\n";
    return 0;
}

RunConfig resolve_config(const TrainArgs& a, const CLI::App& cmd) {
    RunConfig cfg;
    if (!a.config.empty()) {
        cfg = RunConfig::from_json(detail::parse_json_file(a.config, "config file"));
    }
    auto given = [&cmd](const char* name) { return cmd.count(name) > 0; };
    if (given("--no-concept-branch")) cfg.disable_concept_branch = true;
    if (given("--no-attn-loss")) cfg.disable_attn_loss = true;
    if (given("--replay-per-class")) cfg.replay_per_class = a.replay_per_class;
    if (given("--alpha")) cfg.alpha = a.alpha;
    if (given("--lambda")) cfg.lambda = a.lambda;
    if (given("--tau")) cfg.tau = a.tau;
    if (given("--k")) cfg.k = a.k;
    if (given("--lr")) cfg.lr = a.lr;
    if (given("--epochs")) cfg.epochs = a.epochs;
    if (given("--batch-size")) cfg.batch_size = a.batch_size;
    if (given("--infer-alpha")) cfg.infer_alpha = a.infer_alpha;
    if (given("--attn-loss-on-replay")) cfg.attn_loss_on_replay = a.attn_on_replay;
    cfg.validate();
    return cfg;
}

int cmd_train(const TrainArgs& a, const CLI::App& cmd) {
    RunConfig base = resolve_config(a, cmd);
    const RunInputs in = load_benchmark(a.data);
    std::vector<std::uint64_t> seeds = a.seeds;
    if (seeds.empty()) seeds.push_back(base.seed);
    const fs::path out(a.out);

    std::vector<double> last_acc, avg_acc, last_mcr, avg_mcr;
    for (std::uint64_t seed : seeds) {
        RunConfig cfg = base;
        cfg.seed = seed;
        const fs::path dir = seeds.size() == 1 ? out : out / ("seed_" + std::to_string(seed));
        const RunReport r = run_schedule(in, cfg, dir);
        last_acc.push_back(r.summary.last_accuracy);
        avg_acc.push_back(r.summary.avg_accuracy);
        last_mcr.push_back(r.summary.last_mcr);
        avg_mcr.push_back(r.summary.avg_mcr);
        std::cout << "train: seed " << seed << " last_acc " << format_result(r.summary.last_accuracy)
                  << " avg_acc " << format_result(r.summary.avg_accuracy) << " last_mcr "
                  << format_result(r.summary.last_mcr) << " -> " << dir.string() << "\n";
    }
    if (seeds.size() > 1) {
        // Population std over seeds, as a spread indicator rather than an error estimate.
        auto mean_std = [](const std::vector<double>& v) {
            double m = 0, s = 0;
            for (double x : v) m += x;
            m /= static_cast<double>(v.size());
            for (double x : v) s += (x - m) * (x - m);
            return nlohmann::json{{"mean", m}, {"std", std::sqrt(s / static_cast<double>(v.size()))}};
        };
        nlohmann::json summary = {{"seeds", seeds},
                                  {"config", base.to_json()},
                                  {"last_accuracy", mean_std(last_acc)},
                                  {"avg_accuracy", mean_std(avg_acc)},
                                  {"last_mcr", mean_std(last_mcr)},
                                  {"avg_mcr", mean_std(avg_mcr)}};
        detail::write_text_file(out / "seeds_summary.json", summary.dump(2) + "\n");
        std::cout << "train: mean last_acc over " << seeds.size() << " seeds "
                  << format_result(summary["last_accuracy"]["mean"].get<double>()) << "\n";
    }
    return 0;
}

int cmd_eval(const CheckpointArgs& a, const CLI::App& cmd) {
    EngineState st = load_engine_checkpoint(a.checkpoint);
    const RunInputs in = load_benchmark(a.data);
    if (in.test.class_names != st.class_names) throw DataError("eval: checkpoint and data class names differ");
    const double alpha = cmd.count("--infer-alpha") ? a.infer_alpha : st.config.inference_alpha();
    const auto [tx, ty] = st.seen_test_rows(in.test);
    StageMetrics m = evaluate_stage(st.params, st.concept_features(), tx, ty, alpha);
    m.stage = st.tasks_done;
    nlohmann::json j = stage_json(m, st.seen);
    j["inference_alpha"] = alpha;
    const std::string text = j.dump(2) + "\n";
    if (a.out.empty()) {
        std::cout << text;
    } else {
        detail::write_text_file(a.out, text);
        std::cout << "eval: stage " << m.stage << " accuracy " << percent(m.accuracy) << " mcr "
                  << percent(m.mcr) << " -> " << a.out << "\n";
    }
    return 0;
}

int cmd_attn_export(const CheckpointArgs& a) {
    EngineState st = load_engine_checkpoint(a.checkpoint);
    if (!st.config.concept_branch()) throw ConfigError("attn-export: checkpoint was trained without the concept branch");
    const RunInputs in = load_benchmark(a.data);
    if (in.test.class_names != st.class_names) throw DataError("attn-export: checkpoint and data class names differ");
    const auto [tx, ty] = st.seen_test_rows(in.test);
    const auto names = st.seen_names();
    const auto e = attention_matrix(st.params, st.pool, tx, ty, names);
    detail::write_text_file(a.out, attention_csv(e));
    std::cout << "attn-export: " << e.class_names.size() << " classes x " << e.concept_texts.size()
              << " concepts -> " << a.out << "\n";
    return 0;
}

int cmd_gradcheck(const GradArgs& a) {
    bool ok = true;
    for (std::size_t t = 0; t < a.trials; ++t) {
        GradcheckOptions o = a.opts;
        o.seed = a.opts.seed + t;
        const auto r = run_gradcheck(o);
        std::printf("trial seed=%llu checked=%zu max_rel_error=%.3e %s\n",
                    static_cast<unsigned long long>(o.seed), r.checked, r.max_rel_error,
                    r.passed ? "PASS" : "FAIL");
        for (const auto& tc : r.tensors) std::printf("  %-18s n=%-4zu %.3e\n", tc.name.c_str(), tc.count, tc.max_rel_error);
        ok = ok && r.passed;
    }
    return ok ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exemplar-free class-incremental learning with a concept-fusion head"};
    app.require_subcommand(1, 1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Write a synthetic benchmark directory");
    s->add_option("-o,--out", synth.out, "Output directory")->required();
    s->add_option("--classes", synth.spec.n_classes, "Number of classes")->check(CLI::PositiveNumber);
    s->add_option("--dim", synth.spec.dim, "Feature dimension")->check(CLI::PositiveNumber);
    s->add_option("--train-per-class", synth.spec.train_per_class)->check(CLI::PositiveNumber);
    s->add_option("--test-per-class", synth.spec.test_per_class)->check(CLI::PositiveNumber);
    s->add_option("--tasks", synth.spec.n_tasks, "Number of tasks")->check(CLI::PositiveNumber);
    s->add_option("--concepts-per-class", synth.spec.concepts_per_class)->check(CLI::PositiveNumber);
    s->add_option("--center-scale", synth.spec.center_scale)->check(CLI::NonNegativeNumber);
    s->add_option("--within-noise", synth.spec.within_noise)->check(CLI::NonNegativeNumber);
    s->add_option("--anchor-noise", synth.spec.anchor_noise)->check(CLI::NonNegativeNumber);
    s->add_option("--near-duplicate-fraction", synth.spec.near_duplicate_fraction)->check(CLI::Range(0.0, 1.0));
    s->add_option("--seed", synth.spec.seed);

    PoolArgs pool;
    auto* p = app.add_subcommand("pool-build", "Filter concept texts into a concept pool");
    p->add_option("--data", pool.data, "Benchmark directory (class order follows its schedule)");
    p->add_option("--concepts", pool.concepts, "Concept-text JSON (class order: sorted names)");
    p->add_option("--bank", pool.bank, "Concept bank manifest for pool embeddings");
    p->add_option("-o,--out", pool.out, "Output directory")->required();
    p->add_option("--tau", pool.tau, "Similarity threshold")->check(CLI::NonNegativeNumber);
    p->add_option("--k", pool.k, "Concepts per class")->check(CLI::PositiveNumber);

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Run the class-incremental schedule");
    t->add_option("--data", train.data, "Benchmark directory")->required();
    t->add_option("-o,--out", train.out, "Output directory")->required();
    t->add_option("--config", train.config, "RunConfig JSON; flags override it");
    t->add_option("--seed,--seeds", train.seeds, "One or more seeds")->delimiter(',');
    t->add_flag("--no-concept-branch", train.no_concept_branch);
    t->add_flag("--no-attn-loss", train.no_attn_loss);
    t->add_option("--replay-per-class", train.replay_per_class);
    t->add_option("--alpha", train.alpha)->check(CLI::Range(0.0, 1.0));
    t->add_option("--lambda", train.lambda)->check(CLI::NonNegativeNumber);
    t->add_option("--tau", train.tau)->check(CLI::NonNegativeNumber);
    t->add_option("--k", train.k)->check(CLI::PositiveNumber);
    t->add_option("--lr", train.lr)->check(CLI::PositiveNumber);
    t->add_option("--epochs", train.epochs)->check(CLI::PositiveNumber);
    t->add_option("--batch-size", train.batch_size)->check(CLI::PositiveNumber);
    t->add_option("--infer-alpha", train.infer_alpha, "Inference fusion weight (default: alpha)")
        ->check(CLI::Range(0.0, 1.0));
    t->add_option("--attn-loss-on-replay", train.attn_on_replay);

    CheckpointArgs ev;
    auto* e = app.add_subcommand("eval", "Recompute stage metrics from a checkpoint");
    e->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory (task_NN)")->required();
    e->add_option("--data", ev.data, "Benchmark directory")->required();
    e->add_option("-o,--out", ev.out, "Write JSON here instead of stdout");
    e->add_option("--infer-alpha", ev.infer_alpha)->check(CLI::Range(0.0, 1.0));

    CheckpointArgs ax;
    auto* x = app.add_subcommand("attn-export", "Write the per-class mean attention CSV");
    x->add_option("--checkpoint", ax.checkpoint)->required();
    x->add_option("--data", ax.data)->required();
    x->add_option("-o,--out", ax.out, "CSV path")->required();

    GradArgs grad;
    auto* g = app.add_subcommand("gradcheck", "Finite-difference check of every trainable parameter");
    g->add_option("--seed", grad.opts.seed);
    g->add_option("--trials", grad.trials)->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& h) {
        return app.exit(h);
    } catch (const CLI::CallForAllHelp& h) {
        return app.exit(h);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return kExitUsage;
    }

    try {
        if (*s) return cmd_synth(synth);
        if (*p) {
            if (pool.data.empty() && pool.concepts.empty()) {
                std::cerr << "pool-build: one of --data or --concepts is required\n";
                return kExitUsage;
            }
            return cmd_pool_build(pool);
        }
        if (*t) return cmd_train(train, *t);
        if (*e) return cmd_eval(ev, *e);
        if (*x) return cmd_attn_export(ax);
        if (*g) return cmd_gradcheck(grad);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
