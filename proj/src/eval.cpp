#include "metamem/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "metamem/errors.hpp"
#include "metamem/evolve.hpp"
#include "metamem/rng.hpp"

namespace metamem {

namespace {

int line_of_offset(const std::string& text, std::size_t offset) {
    int line = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') ++line;
    }
    return line;
}

Category longmemeval_category(const std::string& type) {
    if (type == "single-session-user") return Category::SingleUser;
    if (type == "single-session-assistant") return Category::SingleAssistant;
    if (type == "multi-session") return Category::MultiSession;
    if (type == "temporal-reasoning") return Category::TemporalReasoning;
    if (type == "knowledge-update") return Category::KnowledgeUpdate;
    if (type == "single-session-preference") return Category::SinglePreference;
    throw DataError("unknown LongMemEval question type: " + type);
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string render_session_text(const Session& s) {
    std::string text;
    for (const Turn& t : s.turns) {
        if (!text.empty()) text += '\n';
        text += to_string(t.role) + ": " + t.text;
    }
    return text;
}

} // namespace

// --- LongMemEval ------------------------------------------------------------------

Dataset load_longmemeval(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("parse error in " + path.string() + " at line " +
                        std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
    }
    if (!j.is_array()) throw DataError(path.string() + ": expected a JSON array of records");

    Dataset out;
    out.instances.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& rec = j[i];
        std::string id = rec.value("question_id", std::string{});
        try {
            if (id.empty()) throw DataError("missing question_id");
            EvalInstance inst;
            inst.id = id;
            inst.question = rec.at("question").get<std::string>();
            inst.answer = rec.at("answer").is_string()
                              ? rec.at("answer").get<std::string>()
                              : rec.at("answer").dump();
            inst.category = longmemeval_category(rec.at("question_type").get<std::string>());
            inst.abstention = ends_with(id, "_abs");
            if (rec.contains("question_date") && rec["question_date"].is_string()) {
                inst.question_date = rec["question_date"].get<std::string>();
            }

            const auto sessions = rec.value("haystack_sessions", nlohmann::json::array());
            const auto dates = rec.value("haystack_dates", nlohmann::json::array());
            const auto session_ids = rec.value("haystack_session_ids", nlohmann::json::array());
            for (std::size_t s = 0; s < sessions.size(); ++s) {
                Session session;
                session.id = s < session_ids.size() && session_ids[s].is_string()
                                 ? session_ids[s].get<std::string>()
                                 : "s" + std::to_string(s + 1);
                std::optional<std::string> date;
                if (s < dates.size() && dates[s].is_string()) {
                    date = dates[s].get<std::string>();
                }
                for (const auto& turn : sessions[s]) {
                    Turn t;
                    const std::string role = turn.at("role").get<std::string>();
                    if (role != "user" && role != "assistant") continue;
                    t.role = role_from_string(role);
                    t.text = turn.at("content").get<std::string>();
                    t.timestamp = date;
                    session.turns.push_back(std::move(t));
                }
                if (session.turns.empty()) continue;

                MemoryUnit unit;
                unit.id = session.id;
                unit.topic = session.id;
                unit.text = render_session_text(session);
                unit.timestamp = date;
                inst.memory.units.push_back(std::move(unit));
                inst.sessions.push_back(std::move(session));
            }
            if (trim(inst.question).empty()) throw DataError("empty question");
            if (trim(inst.answer).empty()) throw DataError("empty answer");
            out.instances.push_back(std::move(inst));
        } catch (const DataError&) {
            throw;
        } catch (const std::exception& e) {
            throw DataError("malformed LongMemEval record '" +
                            (id.empty() ? "#" + std::to_string(i) : id) + "': " + e.what());
        }
    }
    return out;
}

// --- ShareGPT ----------------------------------------------------------------------

Dataset load_sharegpt(const std::filesystem::path& path, const ShareGptParams& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset: " + path.string());

    struct Conversation {
        std::string id;
        std::vector<Turn> turns;
    };
    std::vector<Conversation> qualifying;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
        }
        Conversation conv;
        conv.id = j.value("id", "conv" + std::to_string(lineno));
        for (const auto& msg : j.value("conversations", nlohmann::json::array())) {
            const std::string from = msg.value("from", std::string{});
            Turn t;
            if (from == "human" || from == "user") {
                t.role = Role::User;
            } else if (from == "gpt" || from == "assistant") {
                t.role = Role::Assistant;
            } else {
                continue; // system and tool turns are not dialogue turns
            }
            t.text = msg.value("value", std::string{});
            if (trim(t.text).empty()) continue;
            conv.turns.push_back(std::move(t));
        }
        // Strict filter: only conversations that EXCEED min_turns qualify.
        if (static_cast<int>(conv.turns.size()) <= params.min_turns) continue;
        // An instance needs a judgeable target turn.
        bool usable = false;
        for (std::size_t i = 1; i < conv.turns.size(); ++i) {
            if (conv.turns[i].role == Role::Assistant && conv.turns[i - 1].role == Role::User) {
                usable = true;
                break;
            }
        }
        if (!usable) continue;
        qualifying.push_back(std::move(conv));
    }

    if (static_cast<int>(qualifying.size()) < params.n) {
        throw DataError("sharegpt: only " + std::to_string(qualifying.size()) +
                        " conversations qualify, need " + std::to_string(params.n));
    }

    std::vector<std::size_t> indices(qualifying.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    DetRng rng = sub_rng(params.seed, "sharegpt-sample");
    det_shuffle(indices, rng);
    indices.resize(static_cast<std::size_t>(params.n));
    std::sort(indices.begin(), indices.end());

    Dataset out;
    out.instances.reserve(indices.size());
    for (std::size_t idx : indices) {
        const Conversation& conv = qualifying[idx];
        EvalInstance inst;
        inst.id = conv.id;
        inst.category = Category::Other;

        std::size_t context_end; // turns [0, context_end) become memory
        if (params.literal_prediction) {
            // Predict the final user turn given everything before it.
            std::size_t last_user = conv.turns.size();
            for (std::size_t i = conv.turns.size(); i-- > 0;) {
                if (conv.turns[i].role == Role::User) {
                    last_user = i;
                    break;
                }
            }
            inst.question = "Given the conversation so far, what will the user ask next?";
            inst.answer = conv.turns[last_user].text;
            context_end = last_user;
        } else {
            // Predict the final assistant reply to the last user turn.
            std::size_t reply = 0;
            for (std::size_t i = conv.turns.size(); i-- > 1;) {
                if (conv.turns[i].role == Role::Assistant &&
                    conv.turns[i - 1].role == Role::User) {
                    reply = i;
                    break;
                }
            }
            inst.question = conv.turns[reply - 1].text;
            inst.answer = conv.turns[reply].text;
            context_end = reply - 1;
        }

        Session session;
        session.id = conv.id;
        for (std::size_t i = 0; i < context_end; ++i) session.turns.push_back(conv.turns[i]);

        for (std::size_t i = 0; i < session.turns.size(); ++i) {
            const Turn& t = session.turns[i];
            MemoryUnit unit;
            unit.id = "c" + std::to_string(i + 1);
            unit.topic = to_string(t.role);
            unit.text = to_string(t.role) + ": " + t.text;
            inst.memory.units.push_back(std::move(unit));
        }
        if (!session.turns.empty()) inst.sessions.push_back(std::move(session));
        out.instances.push_back(std::move(inst));
    }
    return out;
}

// --- native JSONL ---------------------------------------------------------------------

Dataset load_dataset_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset: " + path.string());
    Dataset out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            out.instances.push_back(nlohmann::json::parse(line).get<EvalInstance>());
        } catch (const std::exception& e) {
            throw DataError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void save_dataset_jsonl(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw DataError("cannot write dataset: " + path.string());
    for (const EvalInstance& inst : data.instances) {
        out << nlohmann::json(inst).dump() << "\n";
    }
}

// --- folds ------------------------------------------------------------------------------

FoldPlan make_folds(const Dataset& data, const FoldParams& params) {
    if (params.n_folds < 2) throw DataError("n_folds must be at least 2");
    const std::size_t n = data.instances.size();
    if (n < static_cast<std::size_t>(params.n_folds)) {
        throw DataError("dataset smaller than fold count");
    }

    std::vector<std::string> ids;
    ids.reserve(n);
    for (const EvalInstance& inst : data.instances) ids.push_back(inst.id);
    DetRng rng = sub_rng(params.seed, "fold-split");
    det_shuffle(ids, rng);

    FoldPlan plan;
    plan.n_folds = params.n_folds;
    plan.seed = params.seed;

    const std::size_t base = n / static_cast<std::size_t>(params.n_folds);
    for (int f = 0; f < params.n_folds; ++f) {
        const std::size_t begin = static_cast<std::size_t>(f) * base;
        const std::size_t end = f == params.n_folds - 1 ? n : begin + base;
        FoldSplit split;
        split.test_ids.assign(ids.begin() + begin, ids.begin() + end);

        std::vector<std::string> rest;
        rest.reserve(n - (end - begin));
        rest.insert(rest.end(), ids.begin(), ids.begin() + begin);
        rest.insert(rest.end(), ids.begin() + end, ids.end());
        // One eighth of the remainder is held out for validation: 50 of
        // 400 on the 500-sample benchmark.
        const std::size_t n_val = rest.size() / 8;
        split.train_ids.assign(rest.begin(), rest.end() - n_val);
        split.validation_ids.assign(rest.end() - n_val, rest.end());
        plan.folds.push_back(std::move(split));
    }
    return plan;
}

void to_json(nlohmann::json& j, const FoldPlan& p) {
    nlohmann::json folds = nlohmann::json::array();
    for (const FoldSplit& f : p.folds) {
        folds.push_back({{"test", f.test_ids},
                         {"train", f.train_ids},
                         {"validation", f.validation_ids}});
    }
    j = {{"n_folds", p.n_folds}, {"seed", p.seed}, {"folds", folds}};
}

void from_json(const nlohmann::json& j, FoldPlan& p) {
    p.n_folds = j.at("n_folds").get<int>();
    p.seed = j.at("seed").get<std::int64_t>();
    p.folds.clear();
    for (const auto& f : j.at("folds")) {
        FoldSplit split;
        split.test_ids = f.at("test").get<std::vector<std::string>>();
        split.train_ids = f.at("train").get<std::vector<std::string>>();
        split.validation_ids = f.at("validation").get<std::vector<std::string>>();
        p.folds.push_back(std::move(split));
    }
}

Dataset subset_by_ids(const Dataset& data, std::span<const std::string> ids) {
    std::unordered_map<std::string, const EvalInstance*> by_id;
    for (const EvalInstance& inst : data.instances) by_id[inst.id] = &inst;
    Dataset out;
    out.instances.reserve(ids.size());
    for (const std::string& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("unknown instance id in split: " + id);
        out.instances.push_back(*it->second);
    }
    return out;
}

// --- scoring -------------------------------------------------------------------------

RunReport report_from_verdicts(const Dataset& data,
                               const std::vector<std::pair<std::string, int>>& verdicts) {
    std::unordered_map<std::string, Category> categories;
    for (const EvalInstance& inst : data.instances) categories[inst.id] = inst.category;

    RunReport report;
    report.verdicts = verdicts;
    int correct_total = 0;
    for (const auto& [id, verdict] : verdicts) {
        auto it = categories.find(id);
        if (it == categories.end()) throw DataError("verdict for unknown instance " + id);
        report.category_total[it->second] += 1;
        report.category_correct[it->second] += verdict;
        correct_total += verdict;
    }
    for (const auto& [cat, total] : report.category_total) {
        report.category_accuracy[cat] =
            100.0 * static_cast<double>(report.category_correct[cat]) / total;
    }
    report.overall = verdicts.empty()
                         ? 0.0
                         : 100.0 * static_cast<double>(correct_total) / verdicts.size();
    return report;
}

RunReport score_run(const Pipeline& pipe, const Dataset& data,
                    const std::map<std::string, std::string>& answers) {
    std::vector<std::pair<std::string, int>> verdicts;
    verdicts.reserve(data.instances.size());
    for (const EvalInstance& inst : data.instances) {
        auto it = answers.find(inst.id);
        if (it == answers.end()) throw DataError("no answer for instance " + inst.id);
        Trajectory t;
        t.response = it->second;
        try {
            t = judge_response(pipe, inst, std::move(t));
            verdicts.emplace_back(inst.id, *t.verdict);
        } catch (const std::exception& e) {
            warn("judging failed for " + inst.id + ", marking incorrect: " + e.what());
            verdicts.emplace_back(inst.id, 0);
        }
    }
    return report_from_verdicts(data, verdicts);
}

double micro_average(const std::map<Category, double>& accuracy_percent,
                     const std::map<Category, int>& counts) {
    double weighted = 0.0;
    int total = 0;
    for (const auto& [cat, count] : counts) {
        auto it = accuracy_percent.find(cat);
        if (it == accuracy_percent.end()) throw DataError("missing accuracy for category");
        weighted += it->second * count;
        total += count;
    }
    return total ? weighted / total : 0.0;
}

nlohmann::json report_to_json(const RunReport& report) {
    nlohmann::json categories = nlohmann::json::object();
    for (const auto& [cat, acc] : report.category_accuracy) {
        nlohmann::json entry = {{"accuracy", acc}};
        // Mean-of-folds reports carry accuracies only, no raw counts.
        const auto correct = report.category_correct.find(cat);
        const auto total = report.category_total.find(cat);
        if (correct != report.category_correct.end() && total != report.category_total.end()) {
            entry["correct"] = correct->second;
            entry["total"] = total->second;
        }
        categories[to_string(cat)] = entry;
    }
    nlohmann::json verdicts = nlohmann::json::array();
    for (const auto& [id, v] : report.verdicts) {
        verdicts.push_back({{"id", id}, {"verdict", v}});
    }
    return {{"overall", report.overall}, {"categories", categories}, {"verdicts", verdicts}};
}

std::string report_table(const std::vector<std::pair<std::string, RunReport>>& rows) {
    static const char* kHeaders[] = {"Single User",     "Single Assistant", "Multi Session",
                                     "Temporal Reasoning", "Knowledge Update", "Single Preference",
                                     "Avg."};
    std::size_t label_width = 6;
    for (const auto& [label, report] : rows) label_width = std::max(label_width, label.size());

    std::ostringstream out;
    out << std::string(label_width, ' ');
    for (const char* h : kHeaders) out << "  " << h;
    out << "\n";
    char buf[32];
    for (const auto& [label, report] : rows) {
        out << label << std::string(label_width - label.size(), ' ');
        std::size_t col = 0;
        for (Category cat : report_categories()) {
            const auto it = report.category_accuracy.find(cat);
            if (it != report.category_accuracy.end()) {
                std::snprintf(buf, sizeof(buf), "%.2f", it->second);
            } else {
                std::snprintf(buf, sizeof(buf), "-");
            }
            const std::size_t width = std::string(kHeaders[col]).size();
            out << "  " << std::string(width > std::strlen(buf) ? width - std::strlen(buf) : 0, ' ')
                << buf;
            ++col;
        }
        std::snprintf(buf, sizeof(buf), "%.2f", report.overall);
        out << "  " << buf << "\n";
    }
    return out.str();
}

RunReport mean_report(std::span<const RunReport> reports) {
    RunReport mean;
    if (reports.empty()) return mean;
    std::map<Category, double> sums;
    std::map<Category, int> seen;
    double overall_sum = 0.0;
    for (const RunReport& r : reports) {
        for (const auto& [cat, acc] : r.category_accuracy) {
            sums[cat] += acc;
            seen[cat] += 1;
        }
        overall_sum += r.overall;
    }
    for (const auto& [cat, sum] : sums) {
        mean.category_accuracy[cat] = sum / seen[cat];
    }
    mean.overall = overall_sum / static_cast<double>(reports.size());
    return mean;
}

// --- classification -----------------------------------------------------------------

ClassifyResult classify_units(const Pipeline& pipe, const MetaMemoryState& state) {
    ClassifyResult result;
    if (state.units.empty()) return result; // proportion reported as absent

    int general = 0;
    for (const MetaUnit& unit : state.units) {
        CompletionRequest req = make_request(pipe.catalog(), "classify", {{"unit", unit.text}});
        req.temperature = 0.0;
        req.top_p = 0.8;
        req.max_tokens = 2000;

        std::string label = "Specific";
        try {
            const std::string reply = pipe.classifier_provider().complete(req).front();
            // Last standalone general/specific token wins, mirroring the
            // verdict parse.
            bool found = false;
            bool is_general = false;
            std::size_t i = 0;
            while (i < reply.size()) {
                while (i < reply.size() && !std::isalpha(static_cast<unsigned char>(reply[i]))) ++i;
                std::size_t j = i;
                std::string token;
                while (j < reply.size() && std::isalpha(static_cast<unsigned char>(reply[j]))) {
                    token += static_cast<char>(std::tolower(static_cast<unsigned char>(reply[j])));
                    ++j;
                }
                if (token == "general") {
                    found = true;
                    is_general = true;
                } else if (token == "specific") {
                    found = true;
                    is_general = false;
                }
                i = j;
            }
            if (!found) {
                warn("unparseable classification reply for unit " + std::to_string(unit.id) +
                     ", counting as Specific");
            } else if (is_general) {
                label = "General";
            }
        } catch (const ProviderError& e) {
            warn("classification failed for unit " + std::to_string(unit.id) +
                 ", counting as Specific: " + e.what());
        }
        if (label == "General") ++general;
        result.labels.push_back(label);
    }
    result.general_proportion =
        static_cast<double>(general) / static_cast<double>(state.units.size());
    return result;
}

} // namespace metamem
