#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "metamem/checkpoint.hpp"
#include "metamem/config.hpp"
#include "metamem/errors.hpp"
#include "metamem/eval.hpp"
#include "metamem/evolve.hpp"
#include "metamem/infer.hpp"
#include "metamem/membuild.hpp"
#include "metamem/prompts.hpp"

namespace fs = std::filesystem;
using namespace metamem;

namespace {

struct CommonArgs {
    std::string config_file;
    std::vector<std::string> overrides; // key=value pairs
};

RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg;
    if (!args.config_file.empty()) cfg = load_config_file(args.config_file, cfg);
    for (const std::string& kv : args.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        }
        apply_config_kv(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_file, "Flat key = value config file");
    cmd->add_option("--set", args.overrides, "Override any config key (key=value), repeatable");
}

Dataset load_data(const std::string& path, const std::string& format) {
    if (format == "longmemeval") return load_longmemeval(path);
    if (format == "jsonl") return load_dataset_jsonl(path);
    throw ConfigError("unknown dataset format: " + format);
}

MemorySet load_memory_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open memory file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed memory file " + path + ": " + e.what());
    }
    return j.get<MemorySet>();
}

std::map<std::string, std::string> load_answers_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open answers file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed answers file " + path + ": " + e.what());
    }
    std::map<std::string, std::string> out;
    for (const auto& [id, text] : j.at("answers").items()) {
        out[id] = text.get<std::string>();
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

std::map<std::string, std::string> answer_dataset(const Pipeline& pipe, const Dataset& data,
                                                  const MetaMemoryState& state,
                                                  const InferOptions& opts) {
    std::map<std::string, std::string> answers;
    for (const EvalInstance& inst : data.instances) {
        answers[inst.id] = answer(pipe, inst, state, opts);
    }
    return answers;
}

// --- subcommand bodies -------------------------------------------------------

int cmd_build_mem(const CommonArgs& common, const std::string& sessions_path,
                  const std::string& out_path, double threshold_flag) {
    RunConfig cfg = resolve_config(common);
    if (threshold_flag > 0.0) cfg.membuild_threshold = threshold_flag;
    BuiltProviders built = build_providers(cfg);
    Pipeline pipe = make_pipeline(built, cfg);

    const auto sessions = load_sessions_jsonl(sessions_path);
    MemBuildOptions opts;
    opts.threshold = cfg.membuild_threshold;
    opts.char_budget = static_cast<std::size_t>(cfg.membuild_char_budget);
    opts.temperature = cfg.train.sample_temperature;
    opts.top_p = cfg.train.sample_top_p;
    opts.max_tokens = cfg.train.sample_max_tokens;
    const MemorySet mem = build_memory_set(pipe, sessions, opts);

    write_text(out_path, nlohmann::json(mem).dump(2) + "\n");
    std::cout << "built " << mem.units.size() << " memory units from " << sessions.size()
              << " sessions -> " << out_path << "\n";
    return 0;
}

int cmd_evolve(const CommonArgs& common, const std::string& data_path, const std::string& format,
               const std::string& out_dir) {
    RunConfig cfg = resolve_config(common);
    BuiltProviders built = build_providers(cfg);

    fs::create_directories(fs::path(out_dir) / "logs");
    RunLog log((fs::path(out_dir) / "logs" / "run.log").string());
    Pipeline pipe = make_pipeline(built, cfg, &log);

    const Dataset data = load_data(data_path, format);
    TrainingOptions opts;
    opts.checkpoint_dir = fs::path(out_dir) / "checkpoints";
    opts.config_hash = config_hash(cfg);
    opts.filter_chunk = cfg.filter_chunk;
    const TrainingResult result = run_training(pipe, data, cfg.train, opts);

    std::cout << "trained " << result.final_checkpoint.state.step << " steps, "
              << result.final_checkpoint.state.units.size() << " meta-memory units -> "
              << (opts.checkpoint_dir / "ckpt_final.json").string() << "\n";
    return 0;
}

int cmd_infer(const CommonArgs& common, const std::string& question,
              const std::string& memory_path, const std::string& data_path,
              const std::string& format, const std::string& checkpoint_path,
              const std::string& mode, const std::string& out_path) {
    RunConfig cfg = resolve_config(common);
    BuiltProviders built = build_providers(cfg);
    Pipeline pipe = make_pipeline(built, cfg);

    MetaMemoryState state;
    if (!checkpoint_path.empty()) state = load_checkpoint(checkpoint_path).state;

    InferOptions opts;
    opts.mode = infer_mode_from_string(mode);
    opts.temperature = cfg.infer_temperature;
    opts.top_p = cfg.infer_top_p;
    opts.max_tokens = cfg.infer_max_tokens;

    if (!question.empty()) {
        MemorySet mem;
        if (!memory_path.empty()) mem = load_memory_file(memory_path);
        std::cout << answer(pipe, question, mem, state, opts) << "\n";
        return 0;
    }
    if (data_path.empty()) {
        throw ConfigError("infer needs either --question or --data");
    }
    const Dataset data = load_data(data_path, format);
    const auto answers = answer_dataset(pipe, data, state, opts);
    nlohmann::json j = {{"answers", answers}};
    if (out_path.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        write_text(out_path, j.dump(2) + "\n");
        std::cout << "answered " << answers.size() << " instances -> " << out_path << "\n";
    }
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& data_path, const std::string& format,
             const std::string& answers_path, const std::string& out_dir) {
    RunConfig cfg = resolve_config(common);
    BuiltProviders built = build_providers(cfg);
    Pipeline pipe = make_pipeline(built, cfg);

    const Dataset data = load_data(data_path, format);
    const auto answers = load_answers_file(answers_path);
    const RunReport report = score_run(pipe, data, answers);

    const std::string table = report_table({{"run", report}});
    std::cout << table;
    if (!out_dir.empty()) {
        write_text(fs::path(out_dir) / "reports" / "report.json",
                   report_to_json(report).dump(2) + "\n");
        write_text(fs::path(out_dir) / "reports" / "report.txt", table);
    }
    return 0;
}

int cmd_crossval(const CommonArgs& common, const std::string& data_path,
                 const std::string& format, const std::string& out_dir, int folds,
                 bool val_per_step) {
    RunConfig cfg = resolve_config(common);
    BuiltProviders built = build_providers(cfg);

    const Dataset data = load_data(data_path, format);
    FoldParams fold_params;
    fold_params.n_folds = folds;
    fold_params.seed = cfg.train.seed;
    const FoldPlan plan = make_folds(data, fold_params);

    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "folds.json", nlohmann::json(plan).dump(2) + "\n");

    InferOptions infer_opts;
    infer_opts.temperature = cfg.infer_temperature;
    infer_opts.top_p = cfg.infer_top_p;
    infer_opts.max_tokens = cfg.infer_max_tokens;

    std::vector<RunReport> reports;
    std::vector<std::pair<std::string, RunReport>> rows;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        const FoldSplit& split = plan.folds[f];
        const fs::path fold_dir = fs::path(out_dir) / ("fold_" + std::to_string(f + 1));
        fs::create_directories(fold_dir / "logs");

        RunLog log((fold_dir / "logs" / "run.log").string());
        Pipeline pipe = make_pipeline(built, cfg, &log);

        const Dataset train = subset_by_ids(data, split.train_ids);
        const Dataset validation = subset_by_ids(data, split.validation_ids);
        const Dataset test = subset_by_ids(data, split.test_ids);

        TrainingOptions train_opts;
        train_opts.checkpoint_dir = fold_dir / "checkpoints";
        train_opts.config_hash = config_hash(cfg);
        train_opts.filter_chunk = cfg.filter_chunk;
        train_opts.validation = val_per_step ? &validation : nullptr;
        const TrainingResult trained = run_training(pipe, train, cfg.train, train_opts);

        const auto answers =
            answer_dataset(pipe, test, trained.final_checkpoint.state, infer_opts);
        write_text(fold_dir / "answers.json", nlohmann::json({{"answers", answers}}).dump(2) + "\n");

        const RunReport report = score_run(pipe, test, answers);
        const std::string label = "fold_" + std::to_string(f + 1);
        write_text(fold_dir / "reports" / "report.json", report_to_json(report).dump(2) + "\n");
        write_text(fold_dir / "reports" / "report.txt", report_table({{label, report}}));
        reports.push_back(report);
        rows.emplace_back(label, report);
    }

    const RunReport mean = mean_report(reports);
    rows.emplace_back("mean", mean);
    const std::string table = report_table(rows);
    write_text(fs::path(out_dir) / "reports" / "report_mean.json",
               report_to_json(mean).dump(2) + "\n");
    write_text(fs::path(out_dir) / "reports" / "report_mean.txt", table);
    std::cout << table;
    return 0;
}

int cmd_classify(const CommonArgs& common, const std::string& checkpoint_path,
                 const std::string& out_path) {
    RunConfig cfg = resolve_config(common);
    BuiltProviders built = build_providers(cfg);
    Pipeline pipe = make_pipeline(built, cfg);

    std::vector<fs::path> paths;
    if (fs::is_directory(checkpoint_path)) {
        for (const auto& entry : fs::directory_iterator(checkpoint_path)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("ckpt_step_", 0) == 0 && entry.path().extension() == ".json") {
                paths.push_back(entry.path());
            }
        }
        std::sort(paths.begin(), paths.end());
    } else {
        paths.push_back(checkpoint_path);
    }
    if (paths.empty()) throw DataError("no checkpoints found under " + checkpoint_path);

    nlohmann::json series = nlohmann::json::array();
    std::cout << "step  units  general  proportion\n";
    for (const fs::path& p : paths) {
        const Checkpoint ckpt = load_checkpoint(p);
        const ClassifyResult result = classify_units(pipe, ckpt.state);
        int general = 0;
        for (const std::string& label : result.labels) general += label == "General";
        nlohmann::json row = {{"step", ckpt.state.step},
                              {"units", ckpt.state.units.size()},
                              {"general", general},
                              {"labels", result.labels}};
        char prop[32] = "-";
        if (result.general_proportion) {
            std::snprintf(prop, sizeof(prop), "%.3f", *result.general_proportion);
            row["general_proportion"] = *result.general_proportion;
        }
        series.push_back(row);
        std::printf("%4d  %5zu  %7d  %10s\n", ckpt.state.step, ckpt.state.units.size(), general,
                    prop);
    }
    if (!out_path.empty()) write_text(out_path, series.dump(2) + "\n");
    return 0;
}

int cmd_replay(const std::string& checkpoint_path) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    if (verify_replay(ckpt)) {
        std::cout << "replay ok: " << ckpt.batch_log.size() << " batches reproduce "
                  << ckpt.state.units.size() << " units\n";
        return 0;
    }
    std::cerr << "replay FAILED: batch log does not reproduce the checkpoint state\n";
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"MetaMem: self-evolving meta-memory for memory-augmented answer generation"};
    app.require_subcommand(1);

    // build-mem
    CommonArgs bm_common;
    std::string bm_sessions, bm_out;
    double bm_threshold = 0.0;
    auto* build_mem = app.add_subcommand("build-mem", "Build a memory set from session logs");
    add_common(build_mem, bm_common);
    build_mem->add_option("--sessions", bm_sessions, "Sessions JSONL file")->required();
    build_mem->add_option("--out", bm_out, "Output memory-set JSON file")->required();
    build_mem->add_option("--threshold", bm_threshold, "Topic-similarity threshold");

    // evolve
    CommonArgs ev_common;
    std::string ev_data, ev_format = "jsonl", ev_out;
    auto* evolve = app.add_subcommand("evolve", "Train the meta-memory over a dataset");
    add_common(evolve, ev_common);
    evolve->add_option("--data", ev_data, "Dataset file")->required();
    evolve->add_option("--format", ev_format, "Dataset format: jsonl | longmemeval");
    evolve->add_option("--out", ev_out, "Output directory")->required();
    int ev_epochs = -1, ev_batch = -1, ev_k = -1;
    std::int64_t ev_seed = INT64_MIN;
    evolve->add_option("--epochs", ev_epochs, "Training epochs (default 5)");
    evolve->add_option("--batch-size", ev_batch, "Batch size (default 50)");
    evolve->add_option("--k", ev_k, "Samples per instance (default 5)");
    evolve->add_option("--seed", ev_seed, "Run seed (default 42)");

    // infer
    CommonArgs in_common;
    std::string in_question, in_memory, in_data, in_format = "jsonl", in_ckpt, in_out;
    std::string in_mode = "memory";
    auto* infer = app.add_subcommand("infer", "Answer a question or a dataset");
    add_common(infer, in_common);
    infer->add_option("--question", in_question, "Single question");
    infer->add_option("--memory", in_memory, "Memory-set JSON file (single-question mode)");
    infer->add_option("--data", in_data, "Dataset file (batch mode)");
    infer->add_option("--format", in_format, "Dataset format: jsonl | longmemeval");
    infer->add_option("--checkpoint", in_ckpt, "Meta-memory checkpoint");
    infer->add_option("--mode", in_mode, "memory | full-text | rag");
    infer->add_option("--out", in_out, "Answers JSON output (batch mode)");

    // eval
    CommonArgs eval_common;
    std::string eval_data, eval_format = "jsonl", eval_answers, eval_out;
    auto* eval_cmd = app.add_subcommand("eval", "Judge-score a set of answers");
    add_common(eval_cmd, eval_common);
    eval_cmd->add_option("--data", eval_data, "Dataset file")->required();
    eval_cmd->add_option("--format", eval_format, "Dataset format: jsonl | longmemeval");
    eval_cmd->add_option("--answers", eval_answers, "Answers JSON file")->required();
    eval_cmd->add_option("--out", eval_out, "Report output directory");

    // crossval
    CommonArgs cv_common;
    std::string cv_data, cv_format = "jsonl", cv_out;
    int cv_folds = 5;
    bool cv_val = false;
    std::int64_t cv_seed = INT64_MIN;
    auto* crossval = app.add_subcommand("crossval", "Full k-fold protocol end to end");
    add_common(crossval, cv_common);
    crossval->add_option("--data", cv_data, "Dataset file")->required();
    crossval->add_option("--format", cv_format, "Dataset format: jsonl | longmemeval");
    crossval->add_option("--out", cv_out, "Output directory")->required();
    crossval->add_option("--folds", cv_folds, "Number of folds (default 5)");
    crossval->add_option("--seed", cv_seed, "Run seed (default 42)");
    crossval->add_flag("--val-per-step", cv_val, "Score the validation split after every batch");
    int cv_epochs = -1, cv_batch = -1, cv_k = -1;
    crossval->add_option("--epochs", cv_epochs, "Training epochs (default 5)");
    crossval->add_option("--batch-size", cv_batch, "Batch size (default 50)");
    crossval->add_option("--k", cv_k, "Samples per instance (default 5)");

    // classify
    CommonArgs cl_common;
    std::string cl_ckpt, cl_out;
    auto* classify = app.add_subcommand("classify", "Label meta-units General/Specific");
    add_common(classify, cl_common);
    classify->add_option("--checkpoint", cl_ckpt, "Checkpoint file or checkpoints directory")
        ->required();
    classify->add_option("--out", cl_out, "JSON series output file");

    // replay
    std::string rp_ckpt;
    auto* replay = app.add_subcommand("replay", "Verify the checkpoint replay invariant");
    replay->add_option("--checkpoint", rp_ckpt, "Checkpoint file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    }

    try {
        if (build_mem->parsed()) {
            return cmd_build_mem(bm_common, bm_sessions, bm_out, bm_threshold);
        }
        if (evolve->parsed()) {
            if (ev_epochs > 0) ev_common.overrides.push_back("epochs=" + std::to_string(ev_epochs));
            if (ev_batch > 0) {
                ev_common.overrides.push_back("batch_size=" + std::to_string(ev_batch));
            }
            if (ev_k > 0) ev_common.overrides.push_back("k_samples=" + std::to_string(ev_k));
            if (ev_seed != INT64_MIN) {
                ev_common.overrides.push_back("seed=" + std::to_string(ev_seed));
            }
            return cmd_evolve(ev_common, ev_data, ev_format, ev_out);
        }
        if (infer->parsed()) {
            return cmd_infer(in_common, in_question, in_memory, in_data, in_format, in_ckpt,
                             in_mode, in_out);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(eval_common, eval_data, eval_format, eval_answers, eval_out);
        }
        if (crossval->parsed()) {
            if (cv_epochs > 0) cv_common.overrides.push_back("epochs=" + std::to_string(cv_epochs));
            if (cv_batch > 0) {
                cv_common.overrides.push_back("batch_size=" + std::to_string(cv_batch));
            }
            if (cv_k > 0) cv_common.overrides.push_back("k_samples=" + std::to_string(cv_k));
            if (cv_seed != INT64_MIN) {
                cv_common.overrides.push_back("seed=" + std::to_string(cv_seed));
            }
            return cmd_crossval(cv_common, cv_data, cv_format, cv_out, cv_folds, cv_val);
        }
        if (classify->parsed()) {
            return cmd_classify(cl_common, cl_ckpt, cl_out);
        }
        if (replay->parsed()) {
            return cmd_replay(rp_ckpt);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << app.help() << "\n";
    return 2;
}
