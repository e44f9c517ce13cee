// Acceptance suite: one pass/fail line per criterion, exit code is the
// number of failed criteria. Everything runs offline against scripted
// providers except criterion 9, which is gated behind
// METAMEM_LIVE_ENDPOINT.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "metamem/checkpoint.hpp"
#include "metamem/config.hpp"
#include "metamem/errors.hpp"
#include "metamem/eval.hpp"
#include "metamem/evolve.hpp"
#include "metamem/infer.hpp"
#include "metamem/prompts.hpp"
#include "metamem/retrieval.hpp"
#include "metamem/rng.hpp"

using namespace metamem;
namespace fs = std::filesystem;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string& what) {
    if (!cond) throw CheckFailure(what);
}

fs::path work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "metamem_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    expect(static_cast<bool>(in), "cannot read " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::trunc | std::ios::binary);
    out << text;
}

MetaMemoryState state_of(const std::vector<std::string>& texts) {
    MetaMemoryState s;
    for (const std::string& t : texts) {
        MetaUnit u;
        u.id = s.next_id++;
        u.text = t;
        s.units.push_back(std::move(u));
    }
    return s;
}

std::vector<std::string> texts_of(const MetaMemoryState& s) {
    std::vector<std::string> out;
    for (const MetaUnit& u : s.units) out.push_back(u.text);
    return out;
}

EvalInstance simple_instance(const std::string& id, Category cat = Category::SingleUser) {
    EvalInstance inst;
    inst.id = id;
    inst.question = "question " + id;
    inst.answer = "answer " + id;
    inst.category = cat;
    MemoryUnit m;
    m.id = id + "-m";
    m.text = "memory for " + id;
    inst.memory.units.push_back(std::move(m));
    return inst;
}

// ---------------------------------------------------------------------------
// Criterion 1: exec semantics vs brute-force oracle, exhaustively.
// ---------------------------------------------------------------------------

// Independent post-state oracle over the RAW (possibly conflicting) action
// set: re-lists positions applying the documented conflict rules.
std::vector<std::string> exec_oracle(const std::vector<std::string>& pre,
                                     const std::vector<UpdateAction>& raw) {
    std::vector<std::string> out;
    for (std::size_t pos = 1; pos <= pre.size(); ++pos) {
        bool deleted = false;
        const std::string* modified = nullptr;
        for (const UpdateAction& a : raw) {
            if (!action_valid(a, pre.size()) || !a.index) continue;
            if (static_cast<std::size_t>(*a.index) != pos) continue;
            if (a.kind == ActionKind::Del) deleted = true;
            if (a.kind == ActionKind::Mod && !modified) modified = &*a.content;
        }
        if (deleted) continue;
        out.push_back(modified ? *modified : pre[pos - 1]);
    }
    for (const UpdateAction& a : raw) {
        if (a.kind == ActionKind::Add && action_valid(a, pre.size())) out.push_back(*a.content);
    }
    return out;
}

void criterion_exec_oracle() {
    const auto start = std::chrono::steady_clock::now();
    long cases = 0;
    for (int n = 0; n <= 4; ++n) {
        std::vector<std::string> pre;
        for (int i = 1; i <= n; ++i) pre.push_back("u" + std::to_string(i));

        // Per index: nothing, DEL, MOD, or the conflicting DEL+MOD pair.
        long combos = 1;
        for (int i = 0; i < n; ++i) combos *= 4;
        for (long code = 0; code < combos; ++code) {
            long rest = code;
            std::vector<UpdateAction> per_index;
            for (int idx = 1; idx <= n; ++idx) {
                const int choice = static_cast<int>(rest % 4);
                rest /= 4;
                if (choice == 1 || choice == 3) {
                    per_index.push_back({ActionKind::Del, idx, std::nullopt, "t"});
                }
                if (choice == 2 || choice == 3) {
                    per_index.push_back({ActionKind::Mod, idx, "m" + std::to_string(idx), "t"});
                }
            }
            for (int adds = 0; adds <= 2; ++adds) {
                ActionSet raw;
                raw.actions = per_index;
                for (int a = 0; a < adds; ++a) {
                    raw.actions.push_back(
                        {ActionKind::Add, std::nullopt, "a" + std::to_string(a + 1), "t"});
                }
                const MetaMemoryState state = state_of(pre);
                const ActionSet cleaned = sanitize_actions(raw, pre.size());
                const MetaMemoryState next = exec_actions(cleaned, state);
                const auto want = exec_oracle(pre, raw.actions);
                expect(texts_of(next) == want,
                       "exec mismatch for n=" + std::to_string(n) + " code=" +
                           std::to_string(code) + " adds=" + std::to_string(adds));
                int dels = 0, add_count = 0;
                for (const UpdateAction& a : cleaned.actions) {
                    dels += a.kind == ActionKind::Del;
                    add_count += a.kind == ActionKind::Add;
                }
                expect(next.units.size() == pre.size() - dels + add_count,
                       "size accounting violated");
                ++cases;
            }
        }
    }
    const auto elapsed = std::chrono::duration_cast<std::chrono::seconds>(
        std::chrono::steady_clock::now() - start);
    expect(elapsed.count() < 10, "exhaustive exec check exceeded 10 s");
    std::cout << "    (" << cases << " action sets, zero mismatches)\n";
}

// ---------------------------------------------------------------------------
// Criterion 2: replay invariant on scripted runs.
// ---------------------------------------------------------------------------

std::vector<std::string> random_actor_transcript(std::uint64_t seed, std::size_t n) {
    DetRng rng(seed);
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        switch (rng.bounded(6)) {
            case 0: out.push_back("response " + std::to_string(rng.bounded(100))); break;
            case 1: out.push_back("[]"); break;
            case 2:
                out.push_back(R"([{"action":"ADD","content":"exp )" +
                              std::to_string(rng.bounded(50)) + R"("}])");
                break;
            case 3:
                out.push_back(R"([{"action":"DEL","index":)" + std::to_string(rng.bounded(6)) +
                              "}]");
                break;
            case 4:
                out.push_back(R"(sure: [{"action":"MOD","index":)" +
                              std::to_string(rng.bounded(6)) + R"(,"content":"revised )" +
                              std::to_string(rng.bounded(50)) + R"("}] end)");
                break;
            default: out.push_back("{malformed"); break;
        }
    }
    return out;
}

std::vector<std::string> random_judge_transcript(std::uint64_t seed, std::size_t n) {
    DetRng rng(seed);
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto roll = rng.bounded(3);
        out.push_back(roll == 0 ? "yes" : roll == 1 ? "no" : "unclear");
    }
    return out;
}

void verify_replay_byte_exact(const Checkpoint& ckpt, const std::string& tag) {
    const MetaMemoryState replayed = replay_batch_log(ckpt);
    const std::string got = nlohmann::json(replayed).dump(2);
    const std::string want = nlohmann::json(ckpt.state).dump(2);
    expect(got == want, "replay mismatch in " + tag);
}

void criterion_replay() {
    const TemplateCatalog catalog = TemplateCatalog::builtin();

    // Deterministic 3-batch scripted run.
    {
        Dataset data;
        for (int i = 0; i < 3; ++i) {
            data.instances.push_back(simple_instance("d" + std::to_string(i)));
        }
        ScriptedChatProvider actor(random_actor_transcript(11, 400));
        ScriptedChatProvider judge(random_judge_transcript(12, 400));
        Pipeline pipe;
        pipe.actor = &actor;
        pipe.judge = &judge;
        pipe.templates = &catalog;
        TrainConfig cfg;
        cfg.k_samples = 2;
        cfg.batch_size = 1;
        cfg.epochs = 1;
        const TrainingResult result = run_training(pipe, data, cfg);
        expect(result.final_checkpoint.batch_log.size() == 3, "expected 3 batches");
        verify_replay_byte_exact(result.final_checkpoint, "3-batch run");
    }

    // 100 randomized scripted runs.
    for (std::uint64_t run = 0; run < 100; ++run) {
        DetRng rng(run * 7919 + 17);
        Dataset data;
        const int n = 1 + static_cast<int>(rng.bounded(4));
        for (int i = 0; i < n; ++i) {
            data.instances.push_back(simple_instance("r" + std::to_string(i)));
        }
        TrainConfig cfg;
        cfg.k_samples = 1 + static_cast<int>(rng.bounded(3));
        cfg.batch_size = 1 + static_cast<int>(rng.bounded(3));
        cfg.epochs = 1 + static_cast<int>(rng.bounded(2));
        cfg.seed = static_cast<std::int64_t>(rng.next_u64() >> 1);

        ScriptedChatProvider actor(random_actor_transcript(rng.next_u64(), 700));
        ScriptedChatProvider judge(random_judge_transcript(rng.next_u64(), 700));
        Pipeline pipe;
        pipe.actor = &actor;
        pipe.judge = &judge;
        pipe.templates = &catalog;
        const TrainingResult result = run_training(pipe, data, cfg);
        verify_replay_byte_exact(result.final_checkpoint, "randomized run " + std::to_string(run));
        expect(verify_replay(result.final_checkpoint), "verify_replay flagged a valid run");
    }
}

// ---------------------------------------------------------------------------
// Criterion 3: crossval determinism through the CLI binary.
// ---------------------------------------------------------------------------

int run_cli(const std::string& args) {
    const std::string cmd = std::string(METAMEM_CLI_BIN) + " " + args;
    return std::system(cmd.c_str());
}

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        files[fs::relative(entry.path(), root).string()] = read_file(entry.path());
    }
    return files;
}

void criterion_crossval_determinism() {
    const fs::path dir = work_dir() / "crossval";
    fs::create_directories(dir);

    // Synthetic dataset: 12 instances over the six categories.
    {
        Dataset data;
        const std::vector<Category> cats = report_categories();
        for (int i = 0; i < 12; ++i) {
            data.instances.push_back(
                simple_instance("i" + std::to_string(i), cats[i % cats.size()]));
        }
        save_dataset_jsonl(data, dir / "data.jsonl");
    }
    write_file(dir / "actor.json", nlohmann::json(random_actor_transcript(21, 400)).dump());
    write_file(dir / "judge.json", nlohmann::json(random_judge_transcript(22, 400)).dump());
    write_file(dir / "run.cfg",
               "actor.kind = scripted\n"
               "actor.transcript = " + (dir / "actor.json").string() + "\n" +
               "judge.kind = scripted\n"
               "judge.transcript = " + (dir / "judge.json").string() + "\n" +
               "embed.kind = hash\n"
               "embed.dim = 16\n"
               "epochs = 1\n"
               "batch_size = 3\n"
               "k_samples = 2\n"
               "seed = 42\n");

    for (const char* out : {"out1", "out2"}) {
        const int rc = run_cli("crossval --data " + (dir / "data.jsonl").string() +
                               " --out " + (dir / out).string() + " --folds 2 --config " +
                               (dir / "run.cfg").string() + " > " + (dir / "cli.log").string() +
                               " 2>&1");
        expect(rc == 0, std::string("crossval run into ") + out + " failed");
    }

    const auto tree1 = snapshot_tree(dir / "out1");
    const auto tree2 = snapshot_tree(dir / "out2");
    expect(!tree1.empty(), "crossval produced no files");
    expect(tree1.size() == tree2.size(), "output file sets differ");
    for (const auto& [rel, bytes] : tree1) {
        const auto it = tree2.find(rel);
        expect(it != tree2.end(), "missing file in second run: " + rel);
        expect(it->second == bytes, "byte difference in " + rel);
    }
    std::cout << "    (" << tree1.size() << " files byte-identical across runs)\n";

    // The emitted checkpoints also satisfy the replay command.
    const int rc = run_cli("replay --checkpoint " +
                           (dir / "out1" / "fold_1" / "checkpoints" / "ckpt_final.json").string() +
                           " > /dev/null 2>&1");
    expect(rc == 0, "replay verification of crossval checkpoint failed");
}

// ---------------------------------------------------------------------------
// Criterion 4: retrieval exactness against the brute-force oracle.
// ---------------------------------------------------------------------------

void criterion_retrieval_exactness() {
    DetRng rng(424242);
    const int dim = 8;
    VectorIndex index(dim);
    std::vector<std::vector<double>> vectors;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> v(dim);
        if (i >= 800 && i % 2 == 0) {
            v = vectors[i / 2]; // duplicated vectors force score ties
        } else {
            for (double& x : v) x = rng.next_double() * 2.0 - 1.0;
        }
        index.add("v" + std::to_string(i), v);
        vectors.push_back(std::move(v));
    }

    std::vector<double> query(dim);
    for (double& x : query) x = rng.next_double() * 2.0 - 1.0;

    std::vector<ScoredId> oracle;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        oracle.push_back({"v" + std::to_string(i), cosine(query, vectors[i])});
    }
    std::stable_sort(oracle.begin(), oracle.end(),
                     [](const ScoredId& a, const ScoredId& b) { return a.score > b.score; });

    for (std::size_t k : {std::size_t{1}, std::size_t{5}, std::size_t{20}, std::size_t{1000}}) {
        const auto got = index.top_k(query, k);
        expect(got.size() == std::min(k, oracle.size()), "result size wrong for k");
        for (std::size_t i = 0; i < got.size(); ++i) {
            expect(got[i].id == oracle[i].id,
                   "ordering mismatch at rank " + std::to_string(i) + " for k=" +
                       std::to_string(k));
            expect(std::abs(got[i].score - oracle[i].score) <= 1e-9,
                   "score tolerance exceeded at rank " + std::to_string(i));
        }
    }
}

// ---------------------------------------------------------------------------
// Criterion 5: protocol fidelity (folds, LongMemEval histogram, ShareGPT).
// ---------------------------------------------------------------------------

void criterion_protocol_fidelity() {
    // make_folds: 500 instances, 5 folds, seed 42 -> 100/350/50 per fold.
    Dataset five_hundred;
    for (int i = 0; i < 500; ++i) {
        EvalInstance inst;
        inst.id = "n" + std::to_string(i);
        inst.question = "q";
        inst.answer = "a";
        five_hundred.instances.push_back(std::move(inst));
    }
    const FoldPlan plan = make_folds(five_hundred, FoldParams{5, 42});
    expect(plan.folds.size() == 5, "expected five folds");
    for (const FoldSplit& f : plan.folds) {
        expect(f.test_ids.size() == 100, "test split must hold 100 instances");
        expect(f.train_ids.size() == 350, "train split must hold 350 instances");
        expect(f.validation_ids.size() == 50, "validation split must hold 50 instances");
    }

    // LongMemEval histogram: {70, 56, 133, 133, 78, 30}.
    const std::vector<std::pair<std::string, int>> histogram = {
        {"single-session-user", 70},    {"single-session-assistant", 56},
        {"multi-session", 133},         {"temporal-reasoning", 133},
        {"knowledge-update", 78},       {"single-session-preference", 30},
    };
    nlohmann::json records = nlohmann::json::array();
    for (const auto& [type, count] : histogram) {
        for (int i = 0; i < count; ++i) {
            records.push_back(
                {{"question_id", type + "_" + std::to_string(i) + (i == 0 ? "_abs" : "")},
                 {"question_type", type},
                 {"question", "q"},
                 {"answer", "a"},
                 {"haystack_sessions",
                  {nlohmann::json::array({{{"role", "user"}, {"content", "text"}}})}},
                 {"haystack_dates", {"2023/05/20 (Sat) 02:21"}}});
        }
    }
    const fs::path lme = work_dir() / "longmemeval.json";
    write_file(lme, records.dump());
    const Dataset loaded = load_longmemeval(lme);
    expect(loaded.instances.size() == 500, "expected 500 instances");
    std::map<Category, int> got;
    int abstentions = 0;
    for (const EvalInstance& inst : loaded.instances) {
        got[inst.category] += 1;
        abstentions += inst.abstention;
    }
    expect(got[Category::SingleUser] == 70, "single_user count");
    expect(got[Category::SingleAssistant] == 56, "single_assistant count");
    expect(got[Category::MultiSession] == 133, "multi_session count");
    expect(got[Category::TemporalReasoning] == 133, "temporal_reasoning count");
    expect(got[Category::KnowledgeUpdate] == 78, "knowledge_update count");
    expect(got[Category::SinglePreference] == 30, "single_preference count");
    expect(abstentions == 6, "abstention flags must follow the _abs id suffix");

    // ShareGPT: strict-greater filtering and seeded determinism.
    std::ostringstream sgpt;
    for (int c = 0; c < 60; ++c) {
        const int turns = 6 + c % 6; // 6..11 turns; 8-turn conversations excluded
        nlohmann::json conv = nlohmann::json::array();
        for (int t = 0; t < turns; ++t) {
            conv.push_back({{"from", t % 2 == 0 ? "human" : "gpt"},
                            {"value", "c" + std::to_string(c) + "t" + std::to_string(t)}});
        }
        sgpt << nlohmann::json{{"id", "conv" + std::to_string(c)}, {"conversations", conv}}.dump()
             << "\n";
    }
    const fs::path sg = work_dir() / "sharegpt.jsonl";
    write_file(sg, sgpt.str());

    ShareGptParams params;
    params.min_turns = 8;
    params.n = 20;
    params.seed = 42;
    const Dataset a = load_sharegpt(sg, params);
    const Dataset b = load_sharegpt(sg, params);
    expect(a.instances.size() == 20, "expected 20 sampled instances");
    for (std::size_t i = 0; i < a.instances.size(); ++i) {
        expect(a.instances[i].id == b.instances[i].id, "sampling is not deterministic");
    }
    // Only the 9-to-11-turn conversations qualify (30 of 60); 8-turn ones
    // never appear no matter the sample size.
    ShareGptParams all;
    all.min_turns = 8;
    all.n = 30;
    all.seed = 42;
    const Dataset everything = load_sharegpt(sg, all);
    for (const EvalInstance& inst : everything.instances) {
        const int c = std::stoi(inst.id.substr(4));
        expect(6 + c % 6 > 8, "a conversation with <= 8 turns slipped through");
    }
    ShareGptParams too_many = all;
    too_many.n = 31;
    bool threw = false;
    try {
        load_sharegpt(sg, too_many);
    } catch (const DataError&) {
        threw = true;
    }
    expect(threw, "shortfall must raise an error naming the deficit");
}

// ---------------------------------------------------------------------------
// Criterion 6: config fidelity on the wire.
// ---------------------------------------------------------------------------

struct CaptureServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;
    std::mutex mu;
    std::vector<nlohmann::json> bodies;

    CaptureServer() {
        server.Post("/v1/chat/completions",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        nlohmann::json body = nlohmann::json::parse(req.body);
                        {
                            std::lock_guard lock(mu);
                            bodies.push_back(body);
                        }
                        const int n = body.value("n", 1);
                        nlohmann::json choices = nlohmann::json::array();
                        for (int i = 0; i < n; ++i) {
                            choices.push_back(
                                {{"message", {{"role", "assistant"}, {"content", "yes"}}}});
                        }
                        res.set_content(nlohmann::json{{"choices", choices}}.dump(),
                                        "application/json");
                    });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~CaptureServer() {
        server.stop();
        thread.join();
    }
};

void criterion_config_fidelity() {
    // Defaults pinned by the protocol.
    TrainConfig defaults;
    expect(defaults.k_samples == 5, "k_samples must default to 5");
    expect(defaults.batch_size == 50, "batch_size must default to 50");
    expect(defaults.epochs == 5, "epochs must default to 5");
    expect(defaults.seed == 42, "seed must default to 42");
    expect(defaults.sample_temperature == 0.7, "sample temperature must default to 0.7");
    expect(defaults.sample_top_p == 0.95, "sample top_p must default to 0.95");
    expect(defaults.sample_max_tokens == 4000, "sample max_tokens must default to 4000");

    CaptureServer stub;
    HttpProviderConfig actor_cfg;
    actor_cfg.endpoint = "http://127.0.0.1:" + std::to_string(stub.port);
    actor_cfg.model = "actor-model";
    actor_cfg.retry.backoff_ms = 0;
    HttpProviderConfig judge_cfg = actor_cfg;
    judge_cfg.model = "judge-model";

    HttpChatProvider actor(actor_cfg);
    HttpChatProvider judge(judge_cfg);
    const TemplateCatalog catalog = TemplateCatalog::builtin();
    Pipeline pipe;
    pipe.actor = &actor;
    pipe.judge = &judge;
    pipe.templates = &catalog;

    // One evolution batch with the default configuration.
    const EvalInstance inst = simple_instance("w1");
    TrainingBatch batch;
    batch.instances = {&inst};
    batch.batch_id = "wire";
    run_batch(pipe, batch, MetaMemoryState{}, defaults);

    // One inference call with its defaults.
    answer(pipe, inst, MetaMemoryState{});

    std::lock_guard lock(stub.mu);
    bool saw_sampling = false, saw_judge = false, saw_infer = false;
    for (const nlohmann::json& body : stub.bodies) {
        const std::string model = body.at("model");
        if (model == "actor-model" && body.value("n", 1) == 5) {
            expect(body.at("temperature") == 0.7, "sampling temperature must be 0.7 on the wire");
            expect(body.at("top_p") == 0.95, "sampling top_p must be 0.95 on the wire");
            expect(body.at("max_tokens") == 4000, "sampling max_tokens must be 4000 on the wire");
            saw_sampling = true;
        }
        if (model == "judge-model") {
            expect(body.at("temperature") == 0.0, "judge temperature must be 0.0");
            expect(body.at("top_p") == 0.8, "judge top_p must be 0.8");
            saw_judge = true;
        }
        if (model == "actor-model" && body.at("temperature") == 0.0) {
            expect(body.at("top_p") == 0.8, "inference top_p must be 0.8 on the wire");
            expect(body.at("max_tokens") == 2000, "inference max_tokens must be 2000 on the wire");
            expect(body.value("n", 1) == 1, "inference requests a single greedy sample");
            saw_infer = true;
        }
    }
    expect(saw_sampling, "no k=5 sampling request captured");
    expect(saw_judge, "no judge request captured");
    expect(saw_infer, "no inference request captured");
}

// ---------------------------------------------------------------------------
// Criterion 7: scoring arithmetic.
// ---------------------------------------------------------------------------

void criterion_scoring_arithmetic() {
    // Fixture with known verdicts over unequal category sizes.
    Dataset data;
    auto push = [&](const std::string& id, Category cat) {
        EvalInstance inst;
        inst.id = id;
        inst.question = "q";
        inst.answer = "a";
        inst.category = cat;
        data.instances.push_back(std::move(inst));
    };
    std::vector<std::pair<std::string, int>> verdicts;
    // single_user: 3 of 4 correct; multi_session: 1 of 5; temporal: 2 of 2.
    for (int i = 0; i < 4; ++i) {
        push("su" + std::to_string(i), Category::SingleUser);
        verdicts.emplace_back("su" + std::to_string(i), i < 3 ? 1 : 0);
    }
    for (int i = 0; i < 5; ++i) {
        push("ms" + std::to_string(i), Category::MultiSession);
        verdicts.emplace_back("ms" + std::to_string(i), i < 1 ? 1 : 0);
    }
    for (int i = 0; i < 2; ++i) {
        push("tr" + std::to_string(i), Category::TemporalReasoning);
        verdicts.emplace_back("tr" + std::to_string(i), 1);
    }
    const RunReport report = report_from_verdicts(data, verdicts);
    expect(std::abs(report.category_accuracy.at(Category::SingleUser) - 75.0) < 0.01,
           "single_user accuracy must be 75.00");
    expect(std::abs(report.category_accuracy.at(Category::MultiSession) - 20.0) < 0.01,
           "multi_session accuracy must be 20.00");
    expect(std::abs(report.category_accuracy.at(Category::TemporalReasoning) - 100.0) < 0.01,
           "temporal accuracy must be 100.00");
    // Micro average: 6 correct of 11, not the mean of category means.
    expect(std::abs(report.overall - 100.0 * 6.0 / 11.0) < 0.01,
           "overall must be the micro average");

    // The benchmark's strongest per-category row recomposed through the
    // same aggregation agrees with its reported 71.90 average within 0.5.
    const std::map<Category, double> reported_row = {
        {Category::SingleUser, 90.70},        {Category::SingleAssistant, 38.14},
        {Category::MultiSession, 69.24},      {Category::TemporalReasoning, 69.60},
        {Category::KnowledgeUpdate, 79.18},   {Category::SinglePreference, 94.16},
    };
    const std::map<Category, int> counts = {
        {Category::SingleUser, 70},        {Category::SingleAssistant, 56},
        {Category::MultiSession, 133},     {Category::TemporalReasoning, 133},
        {Category::KnowledgeUpdate, 78},   {Category::SinglePreference, 30},
    };
    const double recomposed = micro_average(reported_row, counts);
    expect(std::abs(recomposed - 71.90) <= 0.5,
           "micro aggregation drifted from the reported average: got " +
               std::to_string(recomposed));
    std::cout << "    (recomposed average " << recomposed << " vs reported 71.90)\n";
}

// ---------------------------------------------------------------------------
// Criterion 8: golden end-to-end fixture.
// ---------------------------------------------------------------------------

void criterion_golden_end_to_end() {
    const fs::path data_dir = METAMEM_TEST_DATA_DIR;

    EvalInstance q1;
    q1.id = "q1";
    q1.question = "What color is the door?";
    q1.answer = "blue";
    q1.category = Category::SingleUser;
    {
        MemoryUnit m;
        m.id = "m1";
        m.text = "The door was painted blue.";
        q1.memory.units.push_back(std::move(m));
    }
    EvalInstance q2;
    q2.id = "q2";
    q2.question = "What is the total distance across my trips?";
    q2.answer = "3000 miles";
    q2.category = Category::MultiSession;
    {
        MemoryUnit m;
        m.id = "m2";
        m.text = "Three trips totaled 1800 miles; the Yellowstone trip covered 1200 miles.";
        q2.memory.units.push_back(std::move(m));
    }

    ScriptedChatProvider actor(
        ScriptedChatProvider::transcript_from_file(data_dir / "golden_actor_transcript.json"));
    ScriptedChatProvider judge(
        ScriptedChatProvider::transcript_from_file(data_dir / "golden_judge_transcript.json"));
    const TemplateCatalog catalog = TemplateCatalog::builtin();
    Pipeline pipe;
    pipe.actor = &actor;
    pipe.judge = &judge;
    pipe.templates = &catalog;

    TrainConfig cfg;
    cfg.k_samples = 2;

    Checkpoint ckpt;
    ckpt.config_hash = "golden";

    TrainingBatch batch1;
    batch1.instances = {&q1, &q2};
    batch1.step = 0;
    batch1.batch_id = "batch-1";
    auto [state1, record1] = run_batch(pipe, batch1, ckpt.state, cfg);
    ckpt.state = std::move(state1);
    ckpt.batch_log.push_back(std::move(record1));

    TrainingBatch batch2;
    batch2.instances = {&q1, &q2};
    batch2.step = 1;
    batch2.batch_id = "batch-2";
    auto [state2, record2] = run_batch(pipe, batch2, ckpt.state, cfg);
    ckpt.state = std::move(state2);
    ckpt.batch_log.push_back(std::move(record2));

    expect(actor.remaining() == 0, "actor transcript not fully consumed");
    expect(judge.remaining() == 0, "judge transcript not fully consumed");

    const nlohmann::json got = ckpt;
    const nlohmann::json want =
        nlohmann::json::parse(read_file(data_dir / "golden_checkpoint.json"));
    if (got != want) {
        const auto diff = nlohmann::json::diff(want, got);
        throw CheckFailure("checkpoint deviates from the golden fixture: " + diff.dump());
    }

    // The fixture exercised the range-drop path (out-of-range DELs in both
    // batches) and the conflict-sanitize path (DEL 1 dominating MOD 1).
    expect(ckpt.batch_log[0].proposed == 2, "batch 1 must have dropped the out-of-range DEL");
    expect(ckpt.batch_log[1].proposed == 3, "batch 2 must have dropped the out-of-range DEL");
    expect(ckpt.batch_log[1].del_count == 1 && ckpt.batch_log[1].mod_count == 0,
           "batch 2 must have resolved the DEL/MOD conflict in favor of DEL");

    expect(verify_replay(ckpt), "golden checkpoint must replay from the empty state");

    // Round-trip through the on-disk format.
    const fs::path saved = work_dir() / "golden_roundtrip.json";
    save_checkpoint(ckpt, saved);
    expect(load_checkpoint(saved) == ckpt, "golden checkpoint round-trip drifted");
}

// ---------------------------------------------------------------------------
// Criterion 9 (optional, online): live smoke test.
// ---------------------------------------------------------------------------

void criterion_live_smoke() {
    const char* endpoint = std::getenv("METAMEM_LIVE_ENDPOINT");
    const char* model = std::getenv("METAMEM_LIVE_MODEL");
    if (!endpoint || !model) {
        throw CheckFailure("skip"); // mapped to SKIP by the harness
    }
    RunConfig cfg;
    cfg.actor.endpoint = endpoint;
    cfg.actor.model = model;
    cfg.judge.endpoint = endpoint;
    cfg.judge.model = model;
    cfg.train.k_samples = 2;
    cfg.train.epochs = 1;
    cfg.train.batch_size = 5;
    BuiltProviders built = build_providers(cfg);
    Pipeline pipe = make_pipeline(built, cfg);

    Dataset data;
    for (int i = 0; i < 5; ++i) {
        data.instances.push_back(simple_instance("live" + std::to_string(i)));
    }
    const TrainingResult result = run_training(pipe, data, cfg.train);
    expect(result.final_checkpoint.batch_log.size() == 1, "live evolve did not complete");
    std::cout << "    (live run kept " << result.final_checkpoint.batch_log[0].kept
              << " actions, " << result.final_checkpoint.state.units.size() << " units)\n";

    const std::string reply = answer(pipe, data.instances[0], result.final_checkpoint.state);
    expect(!trim(reply).empty(), "live inference returned an empty answer");
}

struct Criterion {
    int num;
    std::string name;
    std::function<void()> run;
    bool optional;
};

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "exec semantics match the brute-force oracle (exhaustive)", criterion_exec_oracle,
         false},
        {2, "replay invariant holds on scripted runs", criterion_replay, false},
        {3, "crossval is byte-deterministic through the CLI", criterion_crossval_determinism,
         false},
        {4, "retrieval matches the exhaustive cosine oracle", criterion_retrieval_exactness,
         false},
        {5, "protocol fidelity: folds, histogram, ShareGPT filtering",
         criterion_protocol_fidelity, false},
        {6, "config fidelity: sampling parameters on the wire", criterion_config_fidelity, false},
        {7, "scoring arithmetic and micro-average recomposition", criterion_scoring_arithmetic,
         false},
        {8, "golden end-to-end scripted fixture", criterion_golden_end_to_end, false},
        {9, "live smoke test (METAMEM_LIVE_ENDPOINT)", criterion_live_smoke, true},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        try {
            c.run();
            std::cout << "[PASS] " << c.num << ". " << c.name << "\n";
        } catch (const CheckFailure& e) {
            if (c.optional && std::string(e.what()) == "skip") {
                std::cout << "[SKIP] " << c.num << ". " << c.name << "\n";
                continue;
            }
            std::cout << "[FAIL] " << c.num << ". " << c.name << ": " << e.what() << "\n";
            ++failures;
        } catch (const std::exception& e) {
            std::cout << "[FAIL] " << c.num << ". " << c.name << ": unexpected error: " << e.what()
                      << "\n";
            ++failures;
        }
    }
    return failures;
}
