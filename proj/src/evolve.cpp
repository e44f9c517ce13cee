#include "metamem/evolve.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "metamem/errors.hpp"
#include "metamem/infer.hpp"
#include "metamem/prompts.hpp"
#include "metamem/rng.hpp"

namespace metamem {

namespace {

// Judge and classifier calls use the deterministic inference settings.
constexpr double kJudgeTemperature = 0.0;
constexpr double kJudgeTopP = 0.8;
constexpr int kJudgeMaxTokens = 2000;

} // namespace

void validate(const TrainConfig& cfg) {
    if (cfg.k_samples < 1) throw ConfigError("k_samples must be positive");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be positive");
    if (cfg.epochs < 1) throw ConfigError("epochs must be positive");
    if (cfg.sample_temperature < 0.0) throw ConfigError("sample_temperature must be >= 0");
    if (!(cfg.sample_top_p > 0.0) || cfg.sample_top_p > 1.0) {
        throw ConfigError("sample_top_p must be in (0, 1]");
    }
    if (cfg.sample_max_tokens < 1) throw ConfigError("sample_max_tokens must be positive");
}

// --- sampling -----------------------------------------------------------------

std::vector<Trajectory> sample_responses(const Pipeline& pipe, const EvalInstance& inst,
                                         const MetaMemoryState& state, const TrainConfig& cfg,
                                         std::optional<std::int64_t> request_seed) {
    const auto units = select_memory_units(pipe, inst);
    CompletionRequest req =
        make_request(pipe.catalog(), "gen",
                     {{"question", query_text(inst.question, inst.question_date)},
                      {"memory", render_memory_units(units)},
                      {"experiences_block", render_experiences_block(state)}});
    req.temperature = cfg.sample_temperature;
    req.top_p = cfg.sample_top_p;
    req.max_tokens = cfg.sample_max_tokens;
    req.n_samples = cfg.k_samples;
    req.seed = request_seed;

    const auto responses = pipe.actor_provider().complete(req);
    std::vector<Trajectory> out;
    out.reserve(responses.size());
    for (std::size_t i = 0; i < responses.size(); ++i) {
        Trajectory t;
        t.response = responses[i];
        t.sample_index = static_cast<int>(i);
        out.push_back(std::move(t));
    }
    return out;
}

// --- judging ------------------------------------------------------------------

int parse_verdict(const std::string& judge_reply, bool* parsed_ok) {
    int verdict = 0;
    bool found = false;
    std::size_t i = 0;
    while (i < judge_reply.size()) {
        while (i < judge_reply.size() &&
               !std::isalpha(static_cast<unsigned char>(judge_reply[i]))) {
            ++i;
        }
        std::size_t j = i;
        std::string token;
        while (j < judge_reply.size() && std::isalpha(static_cast<unsigned char>(judge_reply[j]))) {
            token += static_cast<char>(std::tolower(static_cast<unsigned char>(judge_reply[j])));
            ++j;
        }
        if (token == "yes") {
            verdict = 1;
            found = true;
        } else if (token == "no") {
            verdict = 0;
            found = true;
        }
        i = j;
    }
    if (parsed_ok) *parsed_ok = found;
    return found ? verdict : 0;
}

Trajectory judge_response(const Pipeline& pipe, const EvalInstance& inst, Trajectory traj) {
    const PromptTemplate& tmpl = pipe.catalog().judge_for(inst.category, inst.abstention);
    Bindings bindings = {{"question", query_text(inst.question, inst.question_date)},
                         {"answer", inst.answer},
                         {"response", traj.response},
                         {"memory", render_memory_units(inst.memory)}};
    CompletionRequest req;
    req.user = fill(tmpl, bindings);
    req.template_key = tmpl.key;
    req.fingerprint = bindings_fingerprint(tmpl.key, bindings);
    req.temperature = kJudgeTemperature;
    req.top_p = kJudgeTopP;
    req.max_tokens = kJudgeMaxTokens;

    std::string reply;
    try {
        reply = pipe.judge_provider().complete(req).front();
    } catch (const ProviderError& e) {
        warn(std::string("judge call failed, scoring 0: ") + e.what());
        traj.verdict = 0;
        return traj;
    }
    bool ok = false;
    const int verdict = parse_verdict(reply, &ok);
    if (!ok) {
        warn("unparseable judge reply for instance " + inst.id + ": '" + trim(reply).substr(0, 80) +
             "', scoring 0");
    }
    traj.verdict = verdict;
    return traj;
}

// --- reflection ------------------------------------------------------------------

Trajectory reflect(const Pipeline& pipe, const EvalInstance& inst, Trajectory traj,
                   const TrainConfig& cfg) {
    if (!traj.verdict) throw std::invalid_argument("reflect requires a judged trajectory");
    CompletionRequest req = make_request(
        pipe.catalog(), "reflect",
        {{"question", query_text(inst.question, inst.question_date)},
         {"answer", inst.answer},
         {"response", traj.response},
         {"memory", render_memory_units(inst.memory)},
         {"verdict_word", *traj.verdict == 1 ? "correct" : "incorrect"}});
    req.temperature = cfg.sample_temperature;
    req.top_p = cfg.sample_top_p;
    req.max_tokens = cfg.sample_max_tokens;

    try {
        traj.reflection = pipe.actor_provider().complete(req).front();
    } catch (const ProviderError& e) {
        warn("reflection failed for instance " + inst.id + ", excluding trajectory: " + e.what());
        traj.reflection = "";
    }
    return traj;
}

// --- action proposal ----------------------------------------------------------

std::optional<std::string> extract_json_array(const std::string& text) {
    for (std::size_t start = 0; start < text.size(); ++start) {
        if (text[start] != '[') continue;
        std::vector<char> stack; // open brackets awaiting their closers
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '[' || c == '{') {
                stack.push_back(c);
            } else if (c == ']' || c == '}') {
                const char open = stack.back();
                stack.pop_back();
                if ((open == '[') != (c == ']')) break; // crossed pair, try the next '['
                if (stack.empty()) return text.substr(start, i - start + 1);
            }
        }
    }
    return std::nullopt;
}

std::vector<UpdateAction> parse_action_reply(const std::string& reply, std::size_t state_size,
                                             const std::string& default_provenance,
                                             bool* parsed_ok) {
    if (parsed_ok) *parsed_ok = false;
    const auto raw = extract_json_array(reply);
    if (!raw) {
        warn("no JSON array found in action reply (provenance " + default_provenance + ")");
        return {};
    }
    nlohmann::json arr;
    try {
        arr = nlohmann::json::parse(*raw);
    } catch (const nlohmann::json::exception&) {
        warn("extracted action array does not parse as JSON (provenance " + default_provenance +
             ")");
        return {};
    }
    if (!arr.is_array()) return {};
    if (parsed_ok) *parsed_ok = true;

    std::vector<UpdateAction> out;
    for (const auto& item : arr) {
        if (!item.is_object()) {
            warn("dropping non-object action element");
            continue;
        }
        UpdateAction a;
        try {
            a = item.get<UpdateAction>();
        } catch (const std::exception& e) {
            warn(std::string("dropping malformed action element: ") + e.what());
            continue;
        }
        if (a.provenance.empty()) a.provenance = default_provenance;
        if (!action_well_formed(a)) {
            warn("dropping ill-formed " + to_string(a.kind) + " action (provenance " +
                 a.provenance + ")");
            continue;
        }
        if (a.index && (*a.index < 1 || static_cast<std::size_t>(*a.index) > state_size)) {
            warn("dropping " + to_string(a.kind) + " with out-of-range index " +
                 std::to_string(*a.index) + " (state size " + std::to_string(state_size) + ")");
            continue;
        }
        out.push_back(std::move(a));
    }
    return out;
}

std::string render_experiences_or_empty(const MetaMemoryState& state) {
    const std::string rendered = render_meta_memory(state);
    return rendered.empty() ? "(empty)" : rendered;
}

namespace {

std::string render_reflections(const std::vector<Trajectory>& trajectories) {
    std::string out;
    int shown = 0;
    for (const Trajectory& t : trajectories) {
        if (!t.reflection || t.reflection->empty()) continue;
        if (shown) out += '\n';
        ++shown;
        out += '[' + std::to_string(shown) + "] (" +
               (t.verdict && *t.verdict == 1 ? "correct" : "incorrect") + ") " + *t.reflection;
    }
    return out;
}

std::string render_proposals(const std::vector<UpdateAction>& actions) {
    std::string out;
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const UpdateAction& a = actions[i];
        if (i) out += '\n';
        out += "- " + to_string(a.kind);
        if (a.index) out += " index " + std::to_string(*a.index);
        if (a.content) out += ": \"" + *a.content + "\"";
        out += " (from " + a.provenance + ")";
    }
    return out;
}

} // namespace

std::vector<UpdateAction> propose_action(const Pipeline& pipe, const EvalInstance& inst,
                                         const std::vector<Trajectory>& trajectories,
                                         const MetaMemoryState& state, const TrainConfig& cfg) {
    const std::string reflections = render_reflections(trajectories);
    if (reflections.empty()) {
        throw std::invalid_argument("propose_action requires at least one reflection");
    }
    CompletionRequest req = make_request(
        pipe.catalog(), "action",
        {{"question", query_text(inst.question, inst.question_date)},
         {"answer", inst.answer},
         {"reflections", reflections},
         {"experiences", render_experiences_or_empty(state)},
         {"experience_count", std::to_string(state.units.size())}});
    req.temperature = cfg.sample_temperature;
    req.top_p = cfg.sample_top_p;
    req.max_tokens = cfg.sample_max_tokens;

    const std::string reply = pipe.actor_provider().complete(req).front();
    return parse_action_reply(reply, state.units.size(), inst.id);
}

// --- filtering ------------------------------------------------------------------

ActionSet sanitize_actions(const ActionSet& raw, std::size_t state_size) {
    // Pass 1: per-index resolution. DEL dominates MOD; duplicate DELs
    // collapse; the first MOD per index wins.
    std::set<int> del_indices;
    std::set<int> mod_indices;
    for (const UpdateAction& a : raw.actions) {
        if (action_valid(a, state_size) && a.kind == ActionKind::Del) {
            del_indices.insert(*a.index);
        }
    }
    ActionSet out;
    out.step = raw.step;
    std::set<int> emitted_del;
    for (const UpdateAction& a : raw.actions) {
        if (!action_valid(a, state_size)) {
            warn("sanitizer dropped invalid " + to_string(a.kind) + " action (provenance " +
                 a.provenance + ")");
            continue;
        }
        switch (a.kind) {
            case ActionKind::Add:
                out.actions.push_back(a);
                break;
            case ActionKind::Del:
                if (emitted_del.insert(*a.index).second) out.actions.push_back(a);
                break;
            case ActionKind::Mod:
                if (del_indices.count(*a.index)) {
                    warn("sanitizer dropped MOD at index " + std::to_string(*a.index) +
                         " shadowed by DEL");
                } else if (mod_indices.insert(*a.index).second) {
                    out.actions.push_back(a);
                } else {
                    warn("sanitizer dropped duplicate MOD at index " + std::to_string(*a.index));
                }
                break;
        }
    }
    return out;
}

ActionSet filter_actions(const Pipeline& pipe, const ActionSet& proposed,
                         const MetaMemoryState& state, int chunk_size, const TrainConfig& cfg) {
    if (proposed.actions.empty()) {
        ActionSet empty;
        empty.step = proposed.step;
        return empty;
    }

    std::vector<UpdateAction> filtered;
    bool degraded = false;
    const std::size_t chunk =
        chunk_size > 0 ? static_cast<std::size_t>(chunk_size) : proposed.actions.size();
    for (std::size_t begin = 0; begin < proposed.actions.size(); begin += chunk) {
        const std::size_t end = std::min(begin + chunk, proposed.actions.size());
        std::vector<UpdateAction> slice(proposed.actions.begin() + begin,
                                        proposed.actions.begin() + end);
        CompletionRequest req = make_request(
            pipe.catalog(), "filter",
            {{"actions", render_proposals(slice)},
             {"experiences", render_experiences_or_empty(state)},
             {"experience_count", std::to_string(state.units.size())}});
        req.temperature = cfg.sample_temperature;
        req.top_p = cfg.sample_top_p;
        req.max_tokens = cfg.sample_max_tokens;

        bool parsed = false;
        std::vector<UpdateAction> kept;
        try {
            const std::string reply = pipe.actor_provider().complete(req).front();
            kept = parse_action_reply(reply, state.units.size(), "filter", &parsed);
        } catch (const ProviderError& e) {
            warn(std::string("filter call failed: ") + e.what());
        }
        if (!parsed) {
            // LLM filter skipped for this slice; the mechanical sanitizer
            // below still guarantees exec totality.
            degraded = true;
            kept = slice;
        }
        filtered.insert(filtered.end(), kept.begin(), kept.end());
    }
    if (degraded) warn("conflict filter degraded to mechanical sanitization");

    ActionSet combined;
    combined.step = proposed.step;
    combined.actions = std::move(filtered);
    return sanitize_actions(combined, state.units.size());
}

// --- execution ------------------------------------------------------------------

MetaMemoryState exec_actions(const ActionSet& actions, const MetaMemoryState& state) {
    std::set<int> touched;
    for (const UpdateAction& a : actions.actions) {
        if (!action_valid(a, state.units.size())) {
            throw std::logic_error("exec_actions received an unsanitized action set: invalid " +
                                   to_string(a.kind));
        }
        if (a.index && !touched.insert(*a.index).second) {
            throw std::logic_error(
                "exec_actions received an unsanitized action set: index collision at " +
                std::to_string(*a.index));
        }
    }

    MetaMemoryState next = state;
    next.step = state.step + 1;
    const int t_next = next.step;

    // MODs by ascending index: in-place text replacement.
    std::vector<const UpdateAction*> mods;
    for (const UpdateAction& a : actions.actions) {
        if (a.kind == ActionKind::Mod) mods.push_back(&a);
    }
    std::sort(mods.begin(), mods.end(),
              [](const UpdateAction* a, const UpdateAction* b) { return *a->index < *b->index; });
    for (const UpdateAction* a : mods) {
        MetaUnit& u = next.units[static_cast<std::size_t>(*a->index - 1)];
        u.text = *a->content;
        u.last_modified_step = t_next;
    }

    // DELs by descending index so positions stay valid while erasing.
    std::vector<int> dels;
    for (const UpdateAction& a : actions.actions) {
        if (a.kind == ActionKind::Del) dels.push_back(*a.index);
    }
    std::sort(dels.rbegin(), dels.rend());
    for (int idx : dels) {
        next.units.erase(next.units.begin() + (idx - 1));
    }

    // ADDs appended in proposal order with fresh, never-reused ids.
    for (const UpdateAction& a : actions.actions) {
        if (a.kind != ActionKind::Add) continue;
        MetaUnit u;
        u.id = next.next_id++;
        u.text = *a.content;
        u.created_step = t_next;
        u.last_modified_step = t_next;
        next.units.push_back(std::move(u));
    }
    return next;
}

// --- batch and training loops ----------------------------------------------------

std::pair<MetaMemoryState, BatchRecord> run_batch(const Pipeline& pipe,
                                                  const TrainingBatch& batch,
                                                  const MetaMemoryState& state,
                                                  const TrainConfig& cfg, int filter_chunk) {
    ActionSet proposed;
    proposed.step = batch.step;
    double verdict_sum = 0.0;
    int verdict_count = 0;
    int failed = 0;

    for (std::size_t pos = 0; pos < batch.instances.size(); ++pos) {
        const EvalInstance& inst = *batch.instances[pos];
        try {
            const std::int64_t request_seed =
                static_cast<std::int64_t>(fnv1a64("sample/" + std::to_string(batch.step) + "/" +
                                                      std::to_string(pos),
                                                  static_cast<std::uint64_t>(cfg.seed)) >>
                                          1);
            auto trajectories = sample_responses(pipe, inst, state, cfg, request_seed);
            for (Trajectory& t : trajectories) {
                t = judge_response(pipe, inst, std::move(t));
                verdict_sum += *t.verdict;
                ++verdict_count;
            }
            for (Trajectory& t : trajectories) {
                t = reflect(pipe, inst, std::move(t), cfg);
            }
            const bool any_reflection = std::any_of(
                trajectories.begin(), trajectories.end(),
                [](const Trajectory& t) { return t.reflection && !t.reflection->empty(); });
            if (!any_reflection) {
                warn("no usable reflections for instance " + inst.id + ", skipping proposal");
                continue;
            }
            auto actions = propose_action(pipe, inst, trajectories, state, cfg);
            proposed.actions.insert(proposed.actions.end(), actions.begin(), actions.end());
        } catch (const ProviderError& e) {
            warn("instance " + inst.id + " failed, skipping: " + e.what());
            ++failed;
        }
    }

    const ActionSet kept = filter_actions(pipe, proposed, state, filter_chunk, cfg);
    MetaMemoryState next = exec_actions(kept, state);

    BatchRecord record;
    record.step = next.step;
    record.batch_id = batch.batch_id;
    record.proposed = static_cast<int>(proposed.actions.size());
    record.kept = static_cast<int>(kept.actions.size());
    for (const UpdateAction& a : kept.actions) {
        switch (a.kind) {
            case ActionKind::Add: ++record.add_count; break;
            case ActionKind::Del: ++record.del_count; break;
            case ActionKind::Mod: ++record.mod_count; break;
        }
    }
    record.mean_verdict = verdict_count ? verdict_sum / verdict_count : 0.0;
    record.instances_failed = failed;
    record.kept_actions = kept.actions;

    if (pipe.log && pipe.log->enabled()) {
        pipe.log->line({{"step", record.step},
                        {"batch", record.batch_id},
                        {"units", next.units.size()},
                        {"proposed", record.proposed},
                        {"kept", record.kept},
                        {"add", record.add_count},
                        {"del", record.del_count},
                        {"mod", record.mod_count},
                        {"mean_verdict", record.mean_verdict},
                        {"failed", record.instances_failed}});
    }
    return {std::move(next), std::move(record)};
}

TrainingResult run_training(const Pipeline& pipe, const Dataset& data, const TrainConfig& cfg,
                            const TrainingOptions& opts) {
    validate(cfg);
    if (data.instances.empty()) throw DataError("training dataset is empty");

    const bool persist = !opts.checkpoint_dir.empty();
    if (persist) std::filesystem::create_directories(opts.checkpoint_dir);

    std::vector<std::size_t> order(data.instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    DetRng shuffle_rng = sub_rng(cfg.seed, "epoch-shuffle");

    Checkpoint ckpt;
    ckpt.config_hash = opts.config_hash;
    TrainingResult result;

    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        det_shuffle(order, shuffle_rng);
        const std::size_t n = order.size();
        const std::size_t batches = (n + bs - 1) / bs;
        for (std::size_t b = 0; b < batches; ++b) {
            TrainingBatch batch;
            batch.step = ckpt.state.step;
            batch.batch_id = "e" + std::to_string(epoch) + "b" + std::to_string(b);
            const std::size_t begin = b * bs;
            const std::size_t end = std::min(begin + bs, n);
            for (std::size_t i = begin; i < end; ++i) {
                batch.instances.push_back(&data.instances[order[i]]);
            }
            auto [next, record] = run_batch(pipe, batch, ckpt.state, cfg, opts.filter_chunk);
            ckpt.state = std::move(next);
            ckpt.batch_log.push_back(std::move(record));
            if (persist) {
                char name[32];
                std::snprintf(name, sizeof(name), "ckpt_step_%04d.json", ckpt.state.step);
                const auto path = opts.checkpoint_dir / name;
                save_checkpoint(ckpt, path);
                result.checkpoint_paths.push_back(path);
            }
            if (opts.validation && !opts.validation->instances.empty()) {
                // Held-out validation accuracy is reported per step but
                // feeds no training mechanism.
                double correct = 0.0;
                for (const EvalInstance& inst : opts.validation->instances) {
                    Trajectory t;
                    t.response = answer(pipe, inst, ckpt.state);
                    t = judge_response(pipe, inst, std::move(t));
                    correct += *t.verdict;
                }
                if (pipe.log && pipe.log->enabled()) {
                    pipe.log->line({{"step", ckpt.state.step},
                                    {"val_accuracy",
                                     correct / opts.validation->instances.size()}});
                }
            }
        }
    }
    if (persist) {
        const auto final_path = opts.checkpoint_dir / "ckpt_final.json";
        save_checkpoint(ckpt, final_path);
        result.checkpoint_paths.push_back(final_path);
    }
    result.final_checkpoint = std::move(ckpt);
    return result;
}

} // namespace metamem
