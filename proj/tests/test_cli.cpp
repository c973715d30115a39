#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <unistd.h>
#include <sstream>

#include "sdgclf/cli.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace sdgclf;
using sdgclf::testing::data_path;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome sdgclf_cmd(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

nlohmann::json manifest(const fs::path& dir) { return cli::read_json((dir / "manifest.json").string()); }

std::string bytes(const fs::path& p) { return cli::read_bytes(p.string()); }

// 200 labeled + 40 unlabeled synthetic records with fixture stores, ingested
// and resolved once per test binary.
class CliPipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root() = fs::temp_directory_path() / ("sdgclf_cli_" + std::to_string(::getpid()));
        fs::remove_all(root());
        SyntheticSpec spec;
        spec.records = 240;
        write_synthetic_bundle(spec, 40, (root() / "syn").string(), load_goal_definitions(data_path("sdg_goals.json")),
                               CountryLookup::load(data_path("countries.json")));
        ASSERT_EQ(sdgclf_cmd({"ingest", "--input", dir("syn/corpus.csv"), "--id-column", "id", "--out", dir("ing")}).code, 0);
        ASSERT_EQ(sdgclf_cmd({"fetch-context", "--records", dir("ing/records.jsonl"), "--provider-id", "synthA",
                              "--fixtures", dir("syn/fixtures_synthA.jsonl"), "--out", dir("ctx")})
                      .code,
                  0);
    }
    static void TearDownTestSuite() { fs::remove_all(root()); }

    static fs::path& root() {
        static fs::path r;
        return r;
    }
    static std::string dir(const std::string& rel) { return (root() / rel).string(); }

    static std::vector<std::string> small_train(const std::string& out) {
        return {"train", "--records", dir("ing/records.jsonl"), "--contexts", dir("ctx/contexts.jsonl"), "--d-h", "16",
                "--max-tokens", "32", "--ffn-hidden", "16", "--batch-size", "8", "--learning-rate", "1e-3",
                "--epochs", "1", "--out", dir(out)};
    }
};

TEST_F(CliPipeline, IngestReportCountsLabeledAndUnlabeled) {
    auto r = cli::read_json(dir("ing/ingest_report.json"));
    EXPECT_EQ(r["records"], 240);
    EXPECT_EQ(r["labeled"], 200);
    EXPECT_EQ(r["unlabeled"], 40);
    EXPECT_EQ(load_records(dir("ing/records.jsonl")).size(), 240u);
    EXPECT_EQ(manifest(dir("ing"))["status"], "ok");
}

TEST_F(CliPipeline, TrainOneEpochSmoke) {
    auto r = sdgclf_cmd(small_train("smoke"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::is_regular_file(dir("smoke/checkpoint.bin")));
    std::ifstream log(dir("smoke/train_log.jsonl"));
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) ++lines;
    EXPECT_EQ(lines, 1);
    auto split = cli::read_json(dir("smoke/split.json"));
    EXPECT_EQ(split["train"].size(), 150u);
    EXPECT_EQ(split["test"].size(), 50u);
    auto m = manifest(dir("smoke"));
    EXPECT_EQ(m["checkpoint_id"], sha256_hex(bytes(dir("smoke/checkpoint.bin"))));
    EXPECT_EQ(m["config"]["train"]["epochs"], 1);
}

TEST_F(CliPipeline, MissingCheckpointIsReported) {
    auto r = sdgclf_cmd({"evaluate", "--records", dir("ing/records.jsonl"), "--contexts", dir("ctx/contexts.jsonl"),
                         "--checkpoint", dir("nowhere/checkpoint.bin"), "--out", dir("ev_missing")});
    EXPECT_NE(r.code, 0);
    EXPECT_EQ(r.code, cli::kMissingFile);
    EXPECT_NE(r.err.find("checkpoint not found"), std::string::npos) << r.err;
    auto m = manifest(dir("ev_missing"));
    EXPECT_EQ(m["status"], "error");
    EXPECT_NE(m["error"].get<std::string>().find("checkpoint not found"), std::string::npos);
}

TEST_F(CliPipeline, FullPipelineChainsByCheckpointId) {
    ASSERT_EQ(sdgclf_cmd(small_train("p_train")).code, 0);
    const std::string ck = dir("p_train/checkpoint.bin");
    auto ev = sdgclf_cmd({"evaluate", "--records", dir("ing/records.jsonl"), "--contexts", dir("ctx/contexts.jsonl"),
                          "--checkpoint", ck, "--split", dir("p_train/split.json"), "--out", dir("p_eval")});
    ASSERT_EQ(ev.code, 0) << ev.err;
    auto imp = sdgclf_cmd({"impute", "--records", dir("ing/records.jsonl"), "--contexts", dir("ctx/contexts.jsonl"),
                           "--checkpoint", ck, "--out", dir("p_impute")});
    ASSERT_EQ(imp.code, 0) << imp.err;
    auto an = sdgclf_cmd({"analyze", "--records", dir("p_impute/imputed_records.jsonl"), "--out", dir("p_analyze")});
    ASSERT_EQ(an.code, 0) << an.err;

    const std::string id = sha256_hex(bytes(ck));
    for (const char* step : {"ing", "ctx", "p_train", "p_eval", "p_impute", "p_analyze"})
        ASSERT_TRUE(fs::is_regular_file(root() / step / "manifest.json")) << step;
    for (const char* step : {"p_train", "p_eval", "p_impute", "p_analyze"}) EXPECT_EQ(manifest(dir(step))["checkpoint_id"], id) << step;
    EXPECT_EQ(cli::read_json(dir("p_eval/metrics.json"))["checkpoint_id"], id);
    EXPECT_EQ(cli::read_json(dir("p_analyze/allocation_summary.json"))["checkpoint_id"], id);
    EXPECT_EQ(cli::read_json(dir("p_analyze/allocation_summary.json"))["provider_id"], "synthA");

    auto summary = cli::read_json(dir("p_impute/imputation_summary.json"));
    EXPECT_EQ(summary["imputed"], 40);
    EXPECT_EQ(summary["skipped"], 0);
    const auto imputed = load_records(dir("p_impute/imputed_records.jsonl"));
    const auto original = load_records(dir("ing/records.jsonl"));
    ASSERT_EQ(imputed.size(), original.size());
    for (std::size_t i = 0; i < imputed.size(); ++i)
        if (original[i].sdg_labels) EXPECT_EQ(imputed[i], original[i]);

    // The evaluation report reads the split written by train.
    auto metrics = cli::read_json(dir("p_eval/metrics.json"));
    EXPECT_EQ(metrics["micro"]["n_samples"], 50);
    const auto text = bytes(dir("p_analyze/proportion_comparison.txt"));
    EXPECT_NE(text.find("published(by number)"), std::string::npos);
}

TEST_F(CliPipeline, RerunFromManifestIsByteIdentical) {
    ASSERT_EQ(sdgclf_cmd(small_train("rerun")).code, 0);
    const auto ck = bytes(dir("rerun/checkpoint.bin"));
    const auto log = bytes(dir("rerun/train_log.jsonl"));
    const auto split = bytes(dir("rerun/split.json"));
    auto argv = manifest(dir("rerun"))["argv"].get<std::vector<std::string>>();
    argv.erase(argv.begin());
    ASSERT_EQ(sdgclf_cmd(argv).code, 0);
    EXPECT_EQ(bytes(dir("rerun/checkpoint.bin")), ck);
    EXPECT_EQ(bytes(dir("rerun/train_log.jsonl")), log);
    EXPECT_EQ(bytes(dir("rerun/split.json")), split);
}

TEST_F(CliPipeline, ResumeContinuesEpochCount) {
    ASSERT_EQ(sdgclf_cmd(small_train("resume_a")).code, 0);
    auto args = small_train("resume_b");
    args.insert(args.end(), {"--resume", dir("resume_a/checkpoint.bin")});
    auto r = sdgclf_cmd(args);
    ASSERT_EQ(r.code, 0) << r.err;
    auto loaded = load_checkpoint(dir("resume_b/checkpoint.bin"));
    EXPECT_EQ(loaded.state.epoch, 2);
    EXPECT_EQ(manifest(dir("resume_b"))["resumed_from"], sha256_hex(bytes(dir("resume_a/checkpoint.bin"))));
}

TEST_F(CliPipeline, ConfigFileSitsBetweenDefaultsAndFlags) {
    const auto cfg = dir("precedence.json");
    cli::write_text(cfg, R"({"train": {"epochs": 3, "learning_rate": 0.002, "encoder": {"d_h": 16, "max_tokens": 32}}})");
    auto args = std::vector<std::string>{"--config", cfg};
    for (const auto& a : small_train("prec")) args.push_back(a);
    // small_train passes --epochs 1 and --learning-rate 1e-3 explicitly.
    ASSERT_EQ(sdgclf_cmd(args).code, 0);
    auto t = manifest(dir("prec"))["config"]["train"];
    EXPECT_EQ(t["epochs"], 1);
    EXPECT_DOUBLE_EQ(t["learning_rate"].get<double>(), 1e-3);
    EXPECT_DOUBLE_EQ(t["tau"].get<double>(), 0.01);

    std::vector<std::string> no_flags{"--config", cfg, "--seed", "5", "train", "--records", dir("ing/records.jsonl"),
                                      "--contexts", dir("ctx/contexts.jsonl"), "--epochs", "1", "--out", dir("prec2")};
    ASSERT_EQ(sdgclf_cmd(no_flags).code, 0);
    auto m = manifest(dir("prec2"));
    EXPECT_DOUBLE_EQ(m["config"]["train"]["learning_rate"].get<double>(), 0.002);
    EXPECT_EQ(m["config"]["train"]["encoder"]["d_h"], 16);
    EXPECT_EQ(m["seed"], 5);
    EXPECT_EQ(m["config"]["train"]["seed"], 5);
}

TEST_F(CliPipeline, ErrorCategoriesHaveDistinctExitCodes) {
    EXPECT_EQ(sdgclf_cmd({"train", "--no-such-flag"}).code, cli::kUsage);
    EXPECT_EQ(sdgclf_cmd({"ingest", "--input", dir("absent.csv"), "--out", dir("e1")}).code, cli::kMissingFile);

    const auto bad = dir("with_key.json");
    cli::write_text(bad, R"({"provider": {"api_key": "sk-not-here"}})");
    auto r = sdgclf_cmd({"--config", bad, "ingest", "--input", dir("syn/corpus.csv"), "--out", dir("e2")});
    EXPECT_EQ(r.code, cli::kConfigConflict);
    EXPECT_NE(r.err.find("environment"), std::string::npos);

    // synthB's store holds no synthA hashes.
    auto miss = sdgclf_cmd({"fetch-context", "--records", dir("ing/records.jsonl"), "--provider-id", "synthA",
                            "--fixtures", dir("syn/fixtures_synthB.jsonl"), "--out", dir("e3")});
    EXPECT_EQ(miss.code, cli::kProviderError);
    EXPECT_NE(miss.err.find("no fixture"), std::string::npos);

    const auto zero_lr = dir("zero_lr.json");
    cli::write_text(zero_lr, R"({"train": {"learning_rate": 0}})");
    EXPECT_EQ(sdgclf_cmd({"--config", zero_lr, "train", "--records", dir("ing/records.jsonl"), "--contexts",
                          dir("ctx/contexts.jsonl"), "--out", dir("e4")})
                  .code,
              cli::kConfigConflict);

    std::set<int> codes{cli::kUsage, cli::kMissingFile, cli::kConfigConflict, cli::kDataError, cli::kProviderError,
                        cli::kNumericError};
    EXPECT_EQ(codes.size(), 6u);
}

TEST_F(CliPipeline, SkipMissingReportsInsteadOfFailing) {
    auto r = sdgclf_cmd({"fetch-context", "--records", dir("ing/records.jsonl"), "--provider-id", "synthA", "--fixtures",
                         dir("syn/fixtures_synthB.jsonl"), "--skip-missing", "--out", dir("skip")});
    ASSERT_EQ(r.code, 0) << r.err;
    auto report = cli::read_json(dir("skip/fetch_report.json"));
    EXPECT_EQ(report["resolved"], 0);
    EXPECT_EQ(report["skipped"].size(), 240u);
}

TEST(CliHelp, TrainFlagsShowConfigDefaults) {
    std::ostringstream out, err;
    ASSERT_EQ(cli::run({"train", "--help"}, out, err), 0);
    const std::string help = out.str();
    const TrainConfig d;
    auto shows = [&](const std::string& flag, const std::string& value) {
        const std::regex re(flag + " [A-Z]+(:\\{[^}]*\\})? \\[" + value + "\\]");
        EXPECT_TRUE(std::regex_search(help, re)) << flag << " [" << value << "]\n" << help;
    };
    shows("--learning-rate", "1e-05");
    shows("--epochs", std::to_string(d.epochs));
    shows("--lambda-1", "0.1");
    shows("--lambda-2", "0.1");
    shows("--tau", "0.01");
    shows("--gumbel-temperature", "1");
    shows("--contrastive-temperature", "1");
    shows("--batch-size", std::to_string(d.batch_size));
    shows("--threshold", "0.5");
    shows("--adam-beta1", "0.9");
    shows("--adam-beta2", "0.999");
    shows("--adam-epsilon", "1e-08");
    shows("--use-country", "1");
    shows("--use-decision", "1");
    shows("--weighted-sum-pool", "0");
    shows("--decision-layer-norm", "1");
    shows("--freeze-goal-embeddings", "0");
    shows("--hidden-layers", std::to_string(d.classifier_hidden_layers));
    shows("--checkpoint-every", "0");
    shows("--d-h", std::to_string(d.encoder.d_h));
    shows("--max-tokens", std::to_string(d.encoder.max_tokens));
    shows("--num-blocks", std::to_string(d.encoder.num_blocks));
    shows("--ffn-hidden", std::to_string(d.encoder.ffn_hidden));
    shows("--min-count", std::to_string(d.encoder.min_count));
    shows("--lowercase", "1");
    shows("--max-vocab", std::to_string(d.encoder.max_vocab));
    shows("--backbone", "trainable_small");
}

TEST(CliHelp, EverySubcommandHasHelp) {
    for (const char* sub : {"ingest", "fetch-context", "train", "evaluate", "ablate", "impute", "analyze"}) {
        std::ostringstream out, err;
        EXPECT_EQ(cli::run({sub, "--help"}, out, err), 0) << sub;
        EXPECT_NE(out.str().find("Usage"), std::string::npos) << sub;
    }
    std::ostringstream out, err;
    ASSERT_EQ(cli::run({"fetch-context", "--help"}, out, err), 0);
    EXPECT_TRUE(std::regex_search(out.str(), std::regex("--top-p FLOAT \\[1\\]")));
    EXPECT_TRUE(std::regex_search(out.str(), std::regex("--temperature FLOAT \\[0\\]")));
    EXPECT_TRUE(std::regex_search(out.str(), std::regex("--api-key-env TEXT \\[OPENAI_API_KEY\\]")));
}

} // namespace
