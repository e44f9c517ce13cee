#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metamem/pipeline.hpp"
#include "metamem/types.hpp"

namespace metamem {

// --- dataset ingestion ---------------------------------------------------------

// LongMemEval benchmark JSON: question id, question, answer, question type,
// haystack sessions with dates. Each haystack session also becomes one raw
// memory unit so pre-built memory ingestion works without membuild.
Dataset load_longmemeval(const std::filesystem::path& path);

struct ShareGptParams {
    int min_turns = 8; // strict: keeps conversations with MORE than this
    int n = 1000;
    std::int64_t seed = 42;
    // Literal task reading: predict the final user turn instead of the
    // final assistant reply.
    bool literal_prediction = false;
};

Dataset load_sharegpt(const std::filesystem::path& path, const ShareGptParams& params = {});

// Project-native JSONL, one EvalInstance per line.
Dataset load_dataset_jsonl(const std::filesystem::path& path);
void save_dataset_jsonl(const Dataset& data, const std::filesystem::path& path);

// --- k-fold protocol ------------------------------------------------------------

struct FoldSplit {
    std::vector<std::string> test_ids;
    std::vector<std::string> train_ids;
    std::vector<std::string> validation_ids;
};

struct FoldPlan {
    int n_folds = 5;
    std::int64_t seed = 42;
    std::vector<FoldSplit> folds;
};

struct FoldParams {
    int n_folds = 5;
    std::int64_t seed = 42;
};

// Seeded shuffle into disjoint test blocks covering the dataset; per fold
// the remainder splits off one eighth for validation (350/50 out of 400 on
// the 500-sample benchmark).
FoldPlan make_folds(const Dataset& data, const FoldParams& params = {});

void to_json(nlohmann::json& j, const FoldPlan& p);
void from_json(const nlohmann::json& j, FoldPlan& p);

Dataset subset_by_ids(const Dataset& data, std::span<const std::string> ids);

// --- scoring ---------------------------------------------------------------------

struct RunReport {
    std::vector<std::pair<std::string, int>> verdicts; // (instance id, 0/1)
    std::map<Category, int> category_total;
    std::map<Category, int> category_correct;
    std::map<Category, double> category_accuracy; // percent
    double overall = 0.0;                         // percent, micro-averaged
};

// Judges every answer with the category-appropriate template. Judge
// failures mark the instance incorrect with a warning.
RunReport score_run(const Pipeline& pipe, const Dataset& data,
                    const std::map<std::string, std::string>& answers);

RunReport report_from_verdicts(const Dataset& data,
                               const std::vector<std::pair<std::string, int>>& verdicts);

// Instance-weighted overall accuracy from per-category percentages and
// counts. This is the same aggregation score_run uses.
double micro_average(const std::map<Category, double>& accuracy_percent,
                     const std::map<Category, int>& counts);

nlohmann::json report_to_json(const RunReport& report);

// Aligned text table in the benchmark's column order: Single User, Single
// Assistant, Multi Session, Temporal Reasoning, Knowledge Update, Single
// Preference, Avg. One row per labeled report.
std::string report_table(const std::vector<std::pair<std::string, RunReport>>& rows);

// Per-category mean across folds (plus mean overall).
RunReport mean_report(std::span<const RunReport> reports);

// --- meta-unit classification ------------------------------------------------------

struct ClassifyResult {
    std::vector<std::string> labels; // "General" / "Specific", one per unit
    std::optional<double> general_proportion; // absent for the empty state
};

// Labels every meta-memory unit General or Specific via the classifier
// provider; unparseable labels count as Specific with a warning.
ClassifyResult classify_units(const Pipeline& pipe, const MetaMemoryState& state);

} // namespace metamem
