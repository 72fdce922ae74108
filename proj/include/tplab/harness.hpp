// Experiment recipes, CSV/JSON output, and the command-line entry point.
//
// Recipe names are stable identifiers; `tplab run --recipe <name>` writes one
// CSV and one JSON metadata file into the output directory. All numeric
// formatting is locale-independent ('.' decimal, LF line endings) and every
// recipe is deterministic given (checkpoint, seed, flags).
#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tplab/checkpoint.hpp"
#include "tplab/strategies.hpp"
#include "tplab/train.hpp"
#include "tplab/verify.hpp"

namespace tplab {

// Exit codes of the `run` subcommand family.
inline constexpr int kExitOk = 0;
inline constexpr int kExitGeneric = 1;
inline constexpr int kExitUnknownRecipe = 2;
inline constexpr int kExitCheckpointMismatch = 3;
inline constexpr int kExitUnwritableOutput = 4;

struct UnknownRecipeError : Error {
    using Error::Error;
};
struct OutputError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// formatting

inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string format_number(int64_t v) { return std::to_string(v); }

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw OutputError("cannot open output file: " + path);
    f << content;
    f.flush();
    if (!f) throw OutputError("short write to output file: " + path);
}

// ---------------------------------------------------------------------------
// recipes

struct RecipeSpec {
    std::string name;
    TaskKind default_task;
    std::string covers;  // which experiment family the recipe reproduces
};

inline const std::vector<RecipeSpec>& recipe_manifest() {
    static const std::vector<RecipeSpec> recipes = {
        {"fig2_pe_removal", TaskKind::Direction, "layer-wise PE removal"},
        {"fig3_pe_shuffle", TaskKind::Direction, "modality-specific position-id shuffle"},
        {"fig4_reverse", TaskKind::Direction, "reverse PE vs reverse frame order"},
        {"fig5_last_token", TaskKind::Direction, "final-token knockout by source segment"},
        {"fig6_stage", TaskKind::Direction, "frame-to-query and inter-frame blocking"},
        {"fig7_single_frame", TaskKind::Order, "query restricted to a single frame"},
        {"fig8_causality_flip", TaskKind::YesNo, "single-frame restriction on reversed input"},
        {"fig9_spatiotemporal", TaskKind::Direction, "spatiotemporal assembly restrictions"},
        {"table2_strategies", TaskKind::Direction, "efficiency strategy benchmark"},
    };
    return recipes;
}

inline const RecipeSpec& find_recipe(const std::string& name) {
    for (const auto& r : recipe_manifest()) {
        if (r.name == name) return r;
    }
    throw UnknownRecipeError("unknown recipe '" + name + "'");
}

struct RunRecipeOptions {
    std::string recipe;
    std::string checkpoint;
    std::string out_dir;
    std::string task_override;  // empty = recipe default
    uint64_t seed = 7;
    int eval_n = 300;
    int window = 2;  // toy-depth default; the sweep type itself defaults to 5
    int stride = 1;
    int threads = thread_budget();
};

struct RecipeOutput {
    std::string csv;
    nlohmann::json meta;
};

namespace harness_detail {

struct RecipeContext {
    Model<float> model;
    TaskKind task;
    TokenLayout layout;
    PositionIds ids;
    std::vector<SyntheticSample> data;
    std::vector<RunSample> samples;
    std::vector<Vecf> base;
    WindowSweep sweep;
    int threads;
};

inline RecipeContext make_context(const RunRecipeOptions& opt, const RecipeSpec& spec,
                                  bool reversed_base) {
    RecipeContext ctx{
        load_checkpoint<float>(opt.checkpoint),
        opt.task_override.empty() ? spec.default_task : task_from_name(opt.task_override),
        {},
        {},
        {},
        {},
        {},
        {opt.window, opt.stride},
        opt.threads,
    };
    ctx.layout = build_layout(ctx.model.config, kInstructionLen, kQueryLen);
    ctx.ids = assign_position_ids(ctx.layout, ctx.model.config.grid);
    GeneratorOptions gen;
    gen.grid = ctx.model.config.grid;
    gen.vocab_size = ctx.model.config.vocab_size;
    try {
        ctx.data = generate_dataset(ctx.task, opt.eval_n, opt.seed, Split::Eval, gen);
    } catch (const Error& e) {
        throw CheckpointError("checkpoint config cannot host task '" +
                              std::string(task_name(ctx.task)) + "': " + e.what());
    }
    ctx.samples.reserve(ctx.data.size());
    for (const auto& s : ctx.data) ctx.samples.push_back(encode_sample(s));
    ctx.base = base_distributions(ctx.model, ctx.layout, ctx.ids, ctx.samples,
                                  reversed_base ? compose_reversal(true, true)
                                                : std::vector<InterventionSpec>{},
                                  ctx.threads);
    return ctx;
}

struct Row {
    std::vector<std::string> cells;
};

inline std::string render_csv(const std::vector<std::string>& header,
                              const std::vector<Row>& rows) {
    std::string out;
    for (size_t i = 0; i < header.size(); ++i) {
        out += header[i];
        out += i + 1 < header.size() ? "," : "";
    }
    out += "\n";
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.cells.size(); ++i) {
            out += row.cells[i];
            out += i + 1 < row.cells.size() ? "," : "";
        }
        out += "\n";
    }
    return out;
}

}  // namespace harness_detail

// Runs one recipe fully in memory. Deterministic given (checkpoint, seed, flags).
inline RecipeOutput run_recipe(const RunRecipeOptions& opt) {
    using harness_detail::Row;
    const RecipeSpec& spec = find_recipe(opt.recipe);
    const bool reversed_base = spec.name == "fig8_causality_flip";
    auto ctx = harness_detail::make_context(opt, spec, reversed_base);
    const std::string task = task_name(ctx.task);
    const int n = static_cast<int>(ctx.samples.size());

    std::vector<std::string> header;
    std::vector<Row> rows;
    nlohmann::json records = nlohmann::json::array();
    auto add_record = [&](const std::string& key, int window, double pc) {
        records.push_back({{"recipe", spec.name},
                           {"task", task},
                           {"window", window},
                           {"key", key},
                           {"mean_pc", pc},
                           {"n", n}});
    };
    auto pc_for = [&](const std::vector<InterventionSpec>& specs) {
        return mean_pc(ctx.model, ctx.layout, ctx.ids, ctx.samples, ctx.base, specs, ctx.threads);
    };

    if (spec.name == "fig2_pe_removal") {
        header = {"layer", "task", "mean_pc"};
        for (int l = 0; l < ctx.model.config.n_layers; ++l) {
            const double pc = pc_for({remove_pe_at_layer(l)});
            rows.push_back({{std::to_string(l), task, format_number(pc)}});
            add_record("remove_pe_layer_" + std::to_string(l), l, pc);
        }
    } else if (spec.name == "fig3_pe_shuffle") {
        header = {"segment", "task", "mean_pc"};
        for (auto [segment, name] : {std::pair{PosSegment::Video, "video"},
                                     std::pair{PosSegment::Query, "query"}}) {
            // first-layer shuffle, permutation drawn once per run from the seed
            const double pc = pc_for({InterventionSpec::shuffle_pe(segment, opt.seed, {0})});
            rows.push_back({{name, task, format_number(pc)}});
            add_record(std::string("shuffle_") + name, 0, pc);
        }
    } else if (spec.name == "fig4_reverse") {
        header = {"condition", "task", "mean_pc"};
        for (auto [frames, pe, name] : {std::tuple{false, true, "reverse_pe"},
                                        std::tuple{true, false, "reverse_order"}}) {
            const double pc = pc_for(compose_reversal(frames, pe));
            rows.push_back({{name, task, format_number(pc)}});
            add_record(name, 0, pc);
        }
    } else if (spec.name == "fig5_last_token") {
        header = {"source", "window", "task", "mean_pc"};
        for (auto [segment, name] :
             {std::pair{SourceSegment::Query, "query"}, std::pair{SourceSegment::Video, "video"}}) {
            InterventionSpec k = InterventionSpec::from_knockout(
                {final_token_knockout(ctx.layout, segment)}, std::string("last_token_") + name);
            const auto result = sweep_layers(ctx.model, ctx.layout, ctx.ids, ctx.samples, ctx.base,
                                             k, ctx.sweep, ctx.threads);
            for (const auto& e : result.entries) {
                rows.push_back({{name, std::to_string(e.id), task, format_number(e.mean_pc)}});
                add_record(k.label, e.id, e.mean_pc);
            }
        }
    } else if (spec.name == "fig6_stage") {
        header = {"pathway", "window", "task", "mean_pc"};
        const std::vector<std::pair<std::string, KnockoutSet>> pathways = {
            {"frame_to_query", {frame_to_query_knockout(ctx.layout)}},
            {"inter_frame", inter_frame_knockout(ctx.layout)},
        };
        for (const auto& [name, set] : pathways) {
            InterventionSpec k = InterventionSpec::from_knockout(set, name);
            const auto result = sweep_layers(ctx.model, ctx.layout, ctx.ids, ctx.samples, ctx.base,
                                             k, ctx.sweep, ctx.threads);
            for (const auto& e : result.entries) {
                rows.push_back({{name, std::to_string(e.id), task, format_number(e.mean_pc)}});
                add_record(name, e.id, e.mean_pc);
            }
        }
    } else if (spec.name == "fig7_single_frame" || spec.name == "fig8_causality_flip") {
        header = {"keep_frame", "task", "mean_pc"};
        for (int t = 0; t < ctx.layout.n_frames(); ++t) {
            std::vector<InterventionSpec> specs;
            if (reversed_base) specs = compose_reversal(true, true);
            specs.push_back(InterventionSpec::from_knockout(
                {single_frame_restriction(ctx.layout, t)}, "keep_frame_" + std::to_string(t)));
            const double pc = pc_for(specs);
            rows.push_back({{std::to_string(t), task, format_number(pc)}});
            add_record("keep_frame_" + std::to_string(t), t, pc);
        }
    } else if (spec.name == "fig9_spatiotemporal") {
        header = {"config", "window", "task", "mean_pc", "mean_allowed_sources"};
        for (SpatioKind kind : {SpatioKind::CorrespondingArea, SpatioKind::PreviousFrame,
                                SpatioKind::CorrespondingAreaPrev}) {
            const int radius = 1;
            InterventionSpec k = InterventionSpec::from_knockout(
                spatiotemporal_config(ctx.layout, ctx.model.config.grid, kind, radius),
                spatio_kind_name(kind));
            const double allowed = spatio_mean_allowed_sources(ctx.layout, ctx.model.config.grid,
                                                               kind, radius);
            const auto result = sweep_layers(ctx.model, ctx.layout, ctx.ids, ctx.samples, ctx.base,
                                             k, ctx.sweep, ctx.threads);
            for (const auto& e : result.entries) {
                rows.push_back({{spatio_kind_name(kind), std::to_string(e.id), task,
                                 format_number(e.mean_pc), format_number(allowed)}});
                add_record(spatio_kind_name(kind), e.id, e.mean_pc);
            }
        }
    } else if (spec.name == "table2_strategies") {
        header = {"strategy", "accuracy", "mean_pc", "flops", "kv_bytes_peak"};
        for (const auto& row : benchmark_strategies(ctx.model, ctx.data, ctx.threads)) {
            rows.push_back({{row.strategy, format_number(row.accuracy), format_number(row.mean_pc),
                             format_number(row.flops),
                             format_number(static_cast<int64_t>(row.kv_bytes_peak))}});
            records.push_back({{"recipe", spec.name},
                               {"task", task},
                               {"strategy", row.strategy},
                               {"accuracy", row.accuracy},
                               {"mean_pc", row.mean_pc},
                               {"flops", row.flops},
                               {"kv_bytes_peak", row.kv_bytes_peak},
                               {"n", n}});
        }
    }

    RecipeOutput out;
    out.csv = harness_detail::render_csv(header, rows);
    out.meta = {{"recipe", spec.name},
                {"task", task},
                {"checkpoint", opt.checkpoint},
                {"seed", opt.seed},
                {"eval_n", n},
                {"sweep", {{"window", ctx.sweep.window_k}, {"stride", ctx.sweep.stride}}},
                {"csv", spec.name + ".csv"},
                {"records", records}};
    return out;
}

inline void write_recipe_output(const RunRecipeOptions& opt, const RecipeOutput& out) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    if (!fs::is_directory(opt.out_dir)) {
        throw OutputError("output directory unavailable: " + opt.out_dir);
    }
    write_text_file((fs::path(opt.out_dir) / (opt.recipe + ".csv")).string(), out.csv);
    write_text_file((fs::path(opt.out_dir) / (opt.recipe + ".json")).string(),
                    out.meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// determinism property (needs the recipe runner, hence lives here)

inline std::vector<PropertyResult> verify_determinism() {
    using verify_detail::check;
    std::vector<PropertyResult> out;
    out.push_back(check("end_to_end_byte_identical_rerun", [](std::string& detail) {
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / "tplab_verify_determinism";
        fs::create_directories(dir);
        ModelConfig cfg = verify_detail::small_config(3, PeMode::Rotary3d, {2, 2, 2});
        cfg.vocab_size = 64;
        const Model<float> model = Model<float>::random_init(cfg, 33);
        const std::string ckpt = (dir / "m.tplab").string();
        save_checkpoint(model, ckpt);
        RunRecipeOptions opt;
        opt.recipe = "fig4_reverse";
        opt.checkpoint = ckpt;
        opt.out_dir = dir.string();
        opt.eval_n = 12;
        const RecipeOutput a = run_recipe(opt);
        const RecipeOutput b = run_recipe(opt);
        fs::remove_all(dir);
        if (a.csv != b.csv) {
            detail = "CSV outputs differ between reruns";
            return false;
        }
        return a.meta == b.meta;
    }));
    out.push_back(check("generator_rerun_identical", [](std::string&) {
        GeneratorOptions o;
        o.grid = {3, 3, 3};
        const auto a = generate_dataset(TaskKind::Direction, 40, 5, Split::Train, o);
        const auto b = generate_dataset(TaskKind::Direction, 40, 5, Split::Train, o);
        for (size_t i = 0; i < a.size(); ++i) {
            if (a[i].frames != b[i].frames || a[i].query != b[i].query) return false;
        }
        return true;
    }));
    return out;
}

// ---------------------------------------------------------------------------
// config files: flat key=value lines mirroring the CLI flag names (without
// the leading dashes). Values from the file act as defaults; explicit CLI
// flags override them. '#' starts a comment.

inline std::map<std::string, std::string> load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

namespace harness_detail {

// Typed setters keyed by flag name; unknown keys are rejected.
struct ConfigApplier {
    std::map<std::string, std::function<void(const std::string&)>> setters;

    void bind(const std::string& key, std::string& v) {
        setters[key] = [&v](const std::string& s) { v = s; };
    }
    void bind(const std::string& key, int& v) {
        setters[key] = [&v, key](const std::string& s) { v = std::stoi(s); };
    }
    void bind(const std::string& key, uint64_t& v) {
        setters[key] = [&v](const std::string& s) { v = std::stoull(s); };
    }
    void bind(const std::string& key, double& v) {
        setters[key] = [&v](const std::string& s) { v = std::stod(s); };
    }
    void apply(const std::map<std::string, std::string>& kv) const {
        for (const auto& [key, value] : kv) {
            const auto it = setters.find(key);
            if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
            try {
                it->second(value);
            } catch (const std::exception&) {
                throw ConfigError("bad value for config key '" + key + "': " + value);
            }
        }
    }
};

inline int cmd_train(const std::string& task_str, uint64_t seed, const std::string& out_path,
                     TrainConfig tc, int train_n, int eval_n, const std::string& export_data) {
    const TaskKind task = task_from_name(task_str);
    ModelConfig cfg;  // toy default architecture
    Model<float> model = Model<float>::random_init(cfg, seed);
    GeneratorOptions gen;
    gen.grid = cfg.grid;
    gen.vocab_size = cfg.vocab_size;
    const auto train_data = generate_dataset(task, train_n, seed + 1000, Split::Train, gen);
    const auto eval_data = generate_dataset(task, eval_n, seed + 2000, Split::Eval, gen);
    tc.seed = seed;
    const TrainReport report = train(model, tc, train_data, eval_data);
    std::fprintf(stderr, "trained %s: %d steps, eval accuracy %.3f\n", task_name(task),
                 report.steps_run, report.final_accuracy);
    save_checkpoint(model, out_path);
    std::fprintf(stderr, "checkpoint written to %s\n", out_path.c_str());
    if (!export_data.empty()) {
        write_jsonl_file(export_data, eval_data, cfg.grid);
        std::fprintf(stderr, "eval dataset written to %s\n", export_data.c_str());
    }
    return kExitOk;
}

inline int cmd_verify(const std::string& suite) {
    int failures = 0;
    bool matched = false;
    for (const auto& s : verify_suites()) {
        if (suite != "all" && suite != s.name) continue;
        matched = true;
        for (const auto& r : s.run()) {
            std::printf("%s %s/%s%s%s\n", r.pass ? "PASS" : "FAIL", s.name.c_str(),
                        r.name.c_str(), r.detail.empty() ? "" : ": ", r.detail.c_str());
            failures += r.pass ? 0 : 1;
        }
    }
    if (!matched) {
        std::fprintf(stderr, "unknown suite '%s'; available:", suite.c_str());
        for (const auto& s : verify_suites()) std::fprintf(stderr, " %s", s.name.c_str());
        std::fprintf(stderr, " all\n");
        return kExitGeneric;
    }
    return failures == 0 ? kExitOk : kExitGeneric;
}

}  // namespace harness_detail

inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"tplab: temporal-pathway intervention laboratory"};
    app.require_subcommand(1);

    // --config values act as defaults, so read the file before declaring
    // options; explicit flags then override
    std::string config_path;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc) config_path = argv[i + 1];
        if (arg.rfind("--config=", 0) == 0) config_path = arg.substr(9);
    }

    // train
    auto* train_cmd = app.add_subcommand("train", "train a toy model on a synthetic task");
    std::string task = "direction", ckpt_out = "model.tplab", export_data;
    uint64_t seed = 1;
    TrainConfig tc;
    int train_n = 4000, eval_n_train = 300;
    train_cmd->add_option("--task", task, "direction | order | yes_no");
    train_cmd->add_option("--seed", seed, "training seed");
    train_cmd->add_option("--out", ckpt_out, "checkpoint output path");
    train_cmd->add_option("--steps", tc.steps, "max optimizer steps");
    train_cmd->add_option("--batch", tc.batch_size, "batch size");
    train_cmd->add_option("--lr", tc.lr, "learning rate");
    train_cmd->add_option("--train-n", train_n, "training samples to generate");
    train_cmd->add_option("--eval-n", eval_n_train, "held-out eval samples");
    train_cmd->add_option("--eval-every", tc.eval_every, "steps between eval passes");
    train_cmd->add_option("--stop-acc", tc.stop_at_accuracy, "early-stop eval accuracy");
    train_cmd->add_option("--log-every", tc.log_every, "steps between loss logs (0 = quiet)");
    train_cmd->add_option("--aug-shuffle-video-t", tc.aug_shuffle_video_t,
                          "p(sample): permute per-frame temporal position ids");
    train_cmd->add_option("--aug-pe-drop-late", tc.aug_pe_drop_late,
                          "p(sample): drop PE at one random layer >= 1");
    train_cmd->add_option("--aug-query-last-frame", tc.aug_query_last_frame,
                          "p(sample): restrict query attention to the last frame");
    train_cmd->add_option("--aug-evict-visual-deep", tc.aug_evict_visual_deep,
                          "p(sample): hide visual tokens in deep layers");
    train_cmd->add_option("--export-data", export_data, "also write the eval set as JSONL");
    std::string train_config_file;
    train_cmd->add_option("--config", train_config_file, "key=value config file");

    // run
    auto* run_cmd = app.add_subcommand("run", "run a named experiment recipe");
    RunRecipeOptions ro;
    run_cmd->add_option("--recipe", ro.recipe, "recipe name (see README for the list)");
    run_cmd->add_option("--ckpt", ro.checkpoint, "checkpoint path");
    run_cmd->add_option("--out", ro.out_dir, "output directory");
    run_cmd->add_option("--task", ro.task_override, "override the recipe's task");
    run_cmd->add_option("--seed", ro.seed, "eval dataset seed");
    run_cmd->add_option("--eval-n", ro.eval_n, "eval samples");
    run_cmd->add_option("--window", ro.window, "sweep window size");
    run_cmd->add_option("--stride", ro.stride, "sweep stride");
    std::string run_config_file;
    run_cmd->add_option("--config", run_config_file, "key=value config file");

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "run invariant suites");
    std::string suite = "all";
    verify_cmd->add_option("--suite", suite, "numerics|model|interventions|metrics|determinism|all");

    // dataset
    auto* data_cmd = app.add_subcommand("dataset", "generate a dataset as JSONL");
    std::string data_task = "direction", data_split = "train", data_out = "data.jsonl";
    int data_n = 1000;
    uint64_t data_seed = 1;
    data_cmd->add_option("--task", data_task, "direction | order | yes_no");
    data_cmd->add_option("--n", data_n, "sample count");
    data_cmd->add_option("--seed", data_seed, "generator seed");
    data_cmd->add_option("--split", data_split, "train | eval");
    data_cmd->add_option("--out", data_out, "output JSONL path");

    if (!config_path.empty() && argc > 1) {
        try {
            const auto kv = load_config_file(config_path);
            harness_detail::ConfigApplier applier;
            const std::string sub = argv[1];
            if (sub == "train") {
                applier.bind("task", task);
                applier.bind("seed", seed);
                applier.bind("out", ckpt_out);
                applier.bind("steps", tc.steps);
                applier.bind("batch", tc.batch_size);
                applier.bind("lr", tc.lr);
                applier.bind("train-n", train_n);
                applier.bind("eval-n", eval_n_train);
                applier.bind("eval-every", tc.eval_every);
                applier.bind("stop-acc", tc.stop_at_accuracy);
                applier.bind("log-every", tc.log_every);
                applier.bind("aug-shuffle-video-t", tc.aug_shuffle_video_t);
                applier.bind("aug-pe-drop-late", tc.aug_pe_drop_late);
                applier.bind("aug-query-last-frame", tc.aug_query_last_frame);
                applier.bind("aug-evict-visual-deep", tc.aug_evict_visual_deep);
                applier.bind("export-data", export_data);
            } else if (sub == "run") {
                applier.bind("recipe", ro.recipe);
                applier.bind("ckpt", ro.checkpoint);
                applier.bind("out", ro.out_dir);
                applier.bind("task", ro.task_override);
                applier.bind("seed", ro.seed);
                applier.bind("eval-n", ro.eval_n);
                applier.bind("window", ro.window);
                applier.bind("stride", ro.stride);
            } else {
                throw ConfigError("--config only applies to the train and run subcommands");
            }
            applier.apply(kv);
        } catch (const ConfigError& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            return kExitGeneric;
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*train_cmd) {
            return harness_detail::cmd_train(task, seed, ckpt_out, tc, train_n, eval_n_train,
                                             export_data);
        }
        if (*run_cmd) {
            const RecipeOutput out = run_recipe(ro);
            write_recipe_output(ro, out);
            std::fprintf(stderr, "wrote %s/%s.csv and .json\n", ro.out_dir.c_str(),
                         ro.recipe.c_str());
            return kExitOk;
        }
        if (*verify_cmd) {
            return harness_detail::cmd_verify(suite);
        }
        if (*data_cmd) {
            GeneratorOptions gen;  // toy default grid/vocab
            ModelConfig cfg;
            gen.grid = cfg.grid;
            gen.vocab_size = cfg.vocab_size;
            const auto data =
                generate_dataset(task_from_name(data_task), data_n, data_seed,
                                 data_split == "eval" ? Split::Eval : Split::Train, gen);
            write_jsonl_file(data_out, data, gen.grid);
            std::fprintf(stderr, "wrote %d samples to %s\n", data_n, data_out.c_str());
            return kExitOk;
        }
    } catch (const UnknownRecipeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUnknownRecipe;
    } catch (const CheckpointError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitCheckpointMismatch;
    } catch (const OutputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUnwritableOutput;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitGeneric;
    }
    return kExitGeneric;
}

}  // namespace tplab
