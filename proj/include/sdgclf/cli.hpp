#pragma once
// Subcommand driver behind the sdgclf executable. Kept in a header so tests
// and the acceptance binary can run commands in-process.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdgclf/checkpoint.hpp"
#include "sdgclf/corpus.hpp"
#include "sdgclf/country.hpp"
#include "sdgclf/error.hpp"
#include "sdgclf/evaluator.hpp"
#include "sdgclf/finance.hpp"
#include "sdgclf/http_transport.hpp"
#include "sdgclf/llm.hpp"
#include "sdgclf/pipeline.hpp"
#include "sdgclf/trainer.hpp"

#ifndef SDGCLF_DATA_DIR
#define SDGCLF_DATA_DIR "data"
#endif

namespace sdgclf::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

enum ExitCode : int {
    kOk = 0,
    kOther = 1,
    kUsage = 2,
    kMissingFile = 3,
    kConfigConflict = 4,
    kDataError = 5,
    kProviderError = 6,
    kNumericError = 7,
};

inline int exit_code(ErrorKind k) {
    switch (k) {
    case ErrorKind::Io: return kMissingFile;
    case ErrorKind::Config:
    case ErrorKind::Checkpoint: return kConfigConflict;
    case ErrorKind::Schema:
    case ErrorKind::Row:
    case ErrorKind::LabelRange:
    case ErrorKind::DefinitionSet:
    case ErrorKind::Size:
    case ErrorKind::EmptyInput:
    case ErrorKind::Shape:
    case ErrorKind::Parameter:
    case ErrorKind::Label:
    case ErrorKind::Batch: return kDataError;
    case ErrorKind::Template:
    case ErrorKind::CacheMiss:
    case ErrorKind::Provider: return kProviderError;
    case ErrorKind::Numeric:
    case ErrorKind::DegenerateFit: return kNumericError;
    }
    return kOther;
}

inline std::string data_dir() {
    if (const char* d = std::getenv("SDGCLF_DATA_DIR"); d && *d) return d;
    return SDGCLF_DATA_DIR;
}

// ---- file helpers -------------------------------------------------------------------

inline void need_file(const std::string& path, const std::string& what) {
    require(!path.empty(), ErrorKind::Config, what + " path is required");
    require(fs::is_regular_file(path), ErrorKind::Io, what + " not found: " + path);
}

inline std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Io, "cannot read " + path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::Io, "cannot write " + path.string());
    out << text;
    require(out.good(), ErrorKind::Io, "write failed for " + path.string());
}

inline nlohmann::json read_json(const std::string& path) {
    const std::string text = read_bytes(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Schema, path + ": " + e.what());
    }
}

// ---- context file ---------------------------------------------------------------------

struct ResolvedContext {
    CountryContext context;
    DecisionVector decision;
};

inline void write_contexts(const fs::path& path, const std::vector<std::pair<std::string, ResolvedContext>>& rows) {
    std::ostringstream s;
    for (const auto& [id, r] : rows)
        s << ojson{{"id", id}, {"context", context_to_json(r.context)}, {"decision", decision_to_json(r.decision)}}.dump()
          << '\n';
    write_text(path, s.str());
}

inline std::map<std::string, ResolvedContext> read_contexts(const std::string& path) {
    need_file(path, "context file");
    std::ifstream in(path, std::ios::binary);
    std::map<std::string, ResolvedContext> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        try {
            auto j = ojson::parse(line);
            out[j.at("id").get<std::string>()] = {context_from_json(j.at("context")), decision_from_json(j.at("decision"))};
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Schema, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline Example join_example(const ProjectRecord& rec, const std::map<std::string, ResolvedContext>& contexts) {
    auto it = contexts.find(rec.id);
    if (it == contexts.end())
        fail(ErrorKind::CacheMiss, "no context for record " + rec.id + " (run fetch-context first)");
    return {rec, it->second.context, it->second.decision};
}

inline std::string context_provider_id(const std::map<std::string, ResolvedContext>& contexts) {
    std::set<std::string> ids;
    for (const auto& [id, r] : contexts)
        if (!r.decision.provider_id.empty()) ids.insert(r.decision.provider_id);
    std::string out;
    for (const auto& p : ids) out += (out.empty() ? "" : ",") + p;
    return out;
}

// ---- split file -----------------------------------------------------------------------

inline std::pair<int, int> parse_ratio(const std::string& s) {
    const auto colon = s.find(':');
    require(colon != std::string::npos, ErrorKind::Config, "split ratio must look like 3:1, got '" + s + "'");
    auto a = detail::parse_number<int>(s.substr(0, colon));
    auto b = detail::parse_number<int>(s.substr(colon + 1));
    require(a && b && *a > 0 && *b > 0, ErrorKind::Config, "split ratio must look like 3:1, got '" + s + "'");
    return {*a, *b};
}

inline ojson split_to_json(const DatasetSplit& split, const std::string& ratio) {
    ojson j{{"seed", split.seed}, {"ratio", ratio}, {"train", ojson::array()}, {"test", ojson::array()}};
    for (const auto& r : split.train) j["train"].push_back(r.id);
    for (const auto& r : split.test) j["test"].push_back(r.id);
    return j;
}

// ---- command runner ---------------------------------------------------------------------

class Runner {
public:
    Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

    int run(int argc, const char* const* argv) {
        for (int i = 0; i < argc; ++i) argv_.push_back(argv[i]);
        CLI::App app{"Multi-label SDG classifier for aid project descriptions", "sdgclf"};
        app.require_subcommand(1);
        app.fallthrough();
        app.add_option("--config", config_path_, "JSON config file with \"train\" and \"provider\" sections");
        seed_opt_ = app.add_option("--seed", seed_, "random seed (overrides train.seed)")->capture_default_str();
        mode_opt_ = app.add_option("--provider-mode", mode_, "provider mode")
                        ->check(CLI::IsMember({"live", "fixture"}))
                        ->capture_default_str();
        app.add_option("--out", out_dir_, "output directory")->capture_default_str();

        auto* ingest = app.add_subcommand("ingest", "CSV/TSV export to canonical records.jsonl");
        ingest->add_option("--input", in_.input, "delimited source file")->required();
        ingest->add_option("--schema", in_.schema, "JSON column-name mapping");
        ingest->add_option("--id-column", in_.id_column, "column holding project ids");

        auto* fetch = app.add_subcommand("fetch-context", "country summaries and LLM decisions for every record");
        add_records(fetch);
        add_reference(fetch);
        add_provider_options(fetch);
        fetch->add_flag("--skip-missing", in_.skip_missing, "report unresolvable records instead of failing");

        auto* train_cmd = app.add_subcommand("train", "train the classifier");
        add_records(train_cmd);
        train_cmd->add_option("--contexts", in_.contexts, "contexts.jsonl from fetch-context")->required();
        train_cmd->add_option("--goals", in_.goals, "goal definitions")->capture_default_str();
        train_cmd->add_option("--split-ratio", in_.ratio, "train:test ratio")->capture_default_str();
        train_cmd->add_option("--resume", in_.resume, "continue from a checkpoint");
        add_train_options(train_cmd);

        auto* eval_cmd = app.add_subcommand("evaluate", "metrics for a checkpoint");
        add_records(eval_cmd);
        eval_cmd->add_option("--contexts", in_.contexts, "contexts.jsonl from fetch-context")->required();
        eval_cmd->add_option("--checkpoint", in_.checkpoint, "checkpoint file")->required();
        eval_cmd->add_option("--goals", in_.goals, "goal definitions")->capture_default_str();
        eval_cmd->add_option("--split", in_.split, "split.json from train; evaluates its test ids");
        threshold_opt_ = eval_cmd->add_option("--threshold", threshold_, "prediction threshold")->capture_default_str();

        auto* ablate = app.add_subcommand("ablate", "train and evaluate the four module variants");
        add_records(ablate);
        ablate->add_option("--contexts", in_.contexts, "contexts.jsonl from fetch-context")->required();
        ablate->add_option("--goals", in_.goals, "goal definitions")->capture_default_str();
        ablate->add_option("--split-ratio", in_.ratio, "train:test ratio")->capture_default_str();
        ablate->add_option("--variants", in_.variants, "subset of full,no_semantics,no_country,no_decision");
        add_train_options(ablate);

        auto* impute = app.add_subcommand("impute", "fill labels of unlabeled records");
        add_records(impute);
        impute->add_option("--contexts", in_.contexts, "contexts.jsonl from fetch-context")->required();
        impute->add_option("--checkpoint", in_.checkpoint, "checkpoint file")->required();
        impute->add_option("--goals", in_.goals, "goal definitions")->capture_default_str();

        auto* analyze = app.add_subcommand("analyze", "budget weights, allocation and trend outputs");
        add_records(analyze);
        analyze->add_option("--countries", in_.countries, "country lookup")->capture_default_str();
        analyze->add_option("--proportions", in_.proportions, "published proportion fixture")->capture_default_str();
        analyze->add_option("--imputation-summary", in_.imputation_summary, "imputation_summary.json from impute");
        analyze->add_option("--normalization", in_.normalization, "weight normalization")
            ->check(CLI::IsMember({"raw", "max"}))
            ->capture_default_str();

        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e, out_, err_);
            return code == 0 ? kOk : kUsage;
        }

        subcommand_ = app.get_subcommands().front()->get_name();
        started_ = utc_timestamp();
        int code = kOk;
        try {
            resolve_config();
            fs::create_directories(out_dir_);
            if (subcommand_ == "ingest") cmd_ingest();
            else if (subcommand_ == "fetch-context") cmd_fetch_context();
            else if (subcommand_ == "train") cmd_train();
            else if (subcommand_ == "evaluate") cmd_evaluate();
            else if (subcommand_ == "ablate") cmd_ablate();
            else if (subcommand_ == "impute") cmd_impute();
            else if (subcommand_ == "analyze") cmd_analyze();
        } catch (const Error& e) {
            err_ << "sdgclf " << subcommand_ << ": " << e.what() << '\n';
            error_ = e.what();
            code = exit_code(e.kind());
        } catch (const std::exception& e) {
            err_ << "sdgclf " << subcommand_ << ": " << e.what() << '\n';
            error_ = e.what();
            code = kOther;
        }
        try {
            write_manifest(code);
        } catch (const std::exception& e) {
            err_ << "sdgclf " << subcommand_ << ": cannot write manifest: " << e.what() << '\n';
            if (code == kOk) code = kMissingFile;
        }
        return code;
    }

private:
    struct Inputs {
        std::string input, schema, id_column;
        std::string records, contexts, checkpoint, split, resume;
        std::string goals = data_dir() + "/sdg_goals.json";
        std::string countries = data_dir() + "/countries.json";
        std::string proportions = data_dir() + "/budget_proportions.json";
        std::string imputation_summary;
        std::string ratio = "3:1";
        std::string normalization = "raw";
        std::vector<std::string> variants;
        bool skip_missing = false;
    };

    void add_records(CLI::App* sub) { sub->add_option("--records", in_.records, "records.jsonl")->required(); }

    void add_reference(CLI::App* sub) {
        sub->add_option("--goals", in_.goals, "goal definitions")->capture_default_str();
        sub->add_option("--countries", in_.countries, "country lookup")->capture_default_str();
    }

    template <class Cfg, class Acc>
    void bind(std::vector<std::function<void(Cfg&)>>& overrides, Cfg& flags, CLI::App* sub, const std::string& name,
              const std::string& desc, Acc acc) {
        auto* opt = sub->add_option(name, acc(flags), desc)->capture_default_str();
        overrides.push_back([opt, acc, &flags](Cfg& target) {
            if (opt->count() > 0) acc(target) = acc(flags);
        });
    }

    void add_train_options(CLI::App* sub) {
        auto& o = train_overrides_;
        auto& f = train_flags_;
        bind(o, f, sub, "--learning-rate", "Adam learning rate", [](TrainConfig& c) -> double& { return c.learning_rate; });
        bind(o, f, sub, "--epochs", "training epochs", [](TrainConfig& c) -> int& { return c.epochs; });
        bind(o, f, sub, "--lambda-1", "weight of the goal-semantics loss", [](TrainConfig& c) -> double& { return c.lambda_1; });
        bind(o, f, sub, "--lambda-2", "weight of the guidance losses", [](TrainConfig& c) -> double& { return c.lambda_2; });
        bind(o, f, sub, "--tau", "token retention threshold", [](TrainConfig& c) -> double& { return c.tau; });
        bind(o, f, sub, "--gumbel-temperature", "Gumbel softmax temperature",
             [](TrainConfig& c) -> double& { return c.gumbel_temperature; });
        bind(o, f, sub, "--contrastive-temperature", "InfoNCE temperature",
             [](TrainConfig& c) -> double& { return c.contrastive_temperature; });
        bind(o, f, sub, "--batch-size", "examples per step", [](TrainConfig& c) -> int& { return c.batch_size; });
        bind(o, f, sub, "--threshold", "prediction threshold",
             [](TrainConfig& c) -> double& { return c.prediction_threshold; });
        bind(o, f, sub, "--adam-beta1", "Adam beta1", [](TrainConfig& c) -> double& { return c.adam_beta1; });
        bind(o, f, sub, "--adam-beta2", "Adam beta2", [](TrainConfig& c) -> double& { return c.adam_beta2; });
        bind(o, f, sub, "--adam-epsilon", "Adam epsilon", [](TrainConfig& c) -> double& { return c.adam_epsilon; });
        bind(o, f, sub, "--use-country", "country guidance module", [](TrainConfig& c) -> bool& { return c.use_country; });
        bind(o, f, sub, "--use-decision", "decision guidance module", [](TrainConfig& c) -> bool& { return c.use_decision; });
        bind(o, f, sub, "--weighted-sum-pool", "sum instead of average in cross-attention pooling",
             [](TrainConfig& c) -> bool& { return c.weighted_sum_pool; });
        bind(o, f, sub, "--decision-layer-norm", "layer norm on the decision representation",
             [](TrainConfig& c) -> bool& { return c.decision_layer_norm; });
        bind(o, f, sub, "--freeze-goal-embeddings", "encode goals without gradient",
             [](TrainConfig& c) -> bool& { return c.freeze_goal_embeddings; });
        bind(o, f, sub, "--hidden-layers", "hidden layers in each classifier head",
             [](TrainConfig& c) -> int& { return c.classifier_hidden_layers; });
        bind(o, f, sub, "--checkpoint-every", "epochs between checkpoints (0 = final only)",
             [](TrainConfig& c) -> int& { return c.checkpoint_every; });
        bind(o, f, sub, "--d-h", "hidden width", [](TrainConfig& c) -> int& { return c.encoder.d_h; });
        bind(o, f, sub, "--max-tokens", "tokens kept per text", [](TrainConfig& c) -> int& { return c.encoder.max_tokens; });
        bind(o, f, sub, "--num-blocks", "transformer blocks", [](TrainConfig& c) -> int& { return c.encoder.num_blocks; });
        bind(o, f, sub, "--ffn-hidden", "feed-forward width", [](TrainConfig& c) -> int& { return c.encoder.ffn_hidden; });
        bind(o, f, sub, "--min-count", "minimum token count for the vocabulary",
             [](TrainConfig& c) -> int& { return c.encoder.min_count; });
        bind(o, f, sub, "--lowercase", "lowercase text before tokenizing", [](TrainConfig& c) -> bool& { return c.encoder.lowercase; });
        bind(o, f, sub, "--max-vocab", "vocabulary size limit", [](TrainConfig& c) -> int& { return c.encoder.max_vocab; });
        bind(o, f, sub, "--pretrained-vectors", "word-vector file for the frozen token table",
             [](TrainConfig& c) -> std::string& { return c.encoder.pretrained_vectors; });
        backbone_ = to_string(train_flags_.encoder.backbone);
        backbone_opts_.push_back(sub->add_option("--backbone", backbone_, "encoder backbone")
                                     ->check(CLI::IsMember({"trainable_small", "pretrained_multilingual"}))
                                     ->capture_default_str());
    }

    void add_provider_options(CLI::App* sub) {
        auto& o = provider_overrides_;
        auto& f = provider_flags_;
        bind(o, f, sub, "--provider-id", "provider id (model name in live mode)",
             [](ProviderConfig& c) -> std::string& { return c.provider_id; });
        bind(o, f, sub, "--fixtures", "fixture store (JSONL)", [](ProviderConfig& c) -> std::string& { return c.fixture_path; });
        bind(o, f, sub, "--base-url", "chat-completions base URL", [](ProviderConfig& c) -> std::string& { return c.base_url; });
        bind(o, f, sub, "--model", "model name override", [](ProviderConfig& c) -> std::string& { return c.model; });
        bind(o, f, sub, "--api-key-env", "environment variable holding the API key",
             [](ProviderConfig& c) -> std::string& { return c.api_key_env; });
        bind(o, f, sub, "--top-p", "decoding top-p", [](ProviderConfig& c) -> double& { return c.top_p; });
        bind(o, f, sub, "--temperature", "decoding temperature", [](ProviderConfig& c) -> double& { return c.temperature; });
        bind(o, f, sub, "--max-retries", "retries on transient failures", [](ProviderConfig& c) -> int& { return c.max_retries; });
        bind(o, f, sub, "--max-in-flight", "concurrent live requests", [](ProviderConfig& c) -> int& { return c.max_in_flight; });
        bind(o, f, sub, "--requests-per-second", "live request rate limit (0 = none)",
             [](ProviderConfig& c) -> double& { return c.requests_per_second; });
    }

    // defaults < config file < explicit flags
    void resolve_config() {
        if (!config_path_.empty()) {
            need_file(config_path_, "config file");
            const auto j = read_json(config_path_);
            require(j.is_object(), ErrorKind::Config, "config file must hold a JSON object");
            for (const auto& [k, v] : j.items())
                require(k == "train" || k == "provider", ErrorKind::Config, "unknown config section '" + k + "'");
            if (j.contains("train")) apply_json(train_, j.at("train"));
            if (j.contains("provider")) apply_json(provider_, j.at("provider"));
        }
        for (auto& f : train_overrides_) f(train_);
        for (auto* o : backbone_opts_)
            if (o->count() > 0) train_.encoder.backbone = backbone_from_string(backbone_);
        for (auto& f : provider_overrides_) f(provider_);
        if (seed_opt_->count() > 0) train_.seed = seed_;
        if (mode_opt_->count() > 0) provider_.mode = provider_mode_from_string(mode_);
        seed_ = train_.seed;
        mode_ = to_string(provider_.mode);
        train_.validate();
    }

    fs::path out_path(const std::string& name) {
        const fs::path p = fs::path(out_dir_) / name;
        outputs_[name] = p.string();
        return p;
    }

    void input(const std::string& key, const std::string& path) { inputs_[key] = path; }

    std::vector<ProjectRecord> load_input_records() {
        need_file(in_.records, "record file");
        input("records", in_.records);
        return load_records(in_.records);
    }

    std::vector<GoalDefinition> load_goals() {
        need_file(in_.goals, "goal definition file");
        input("goals", in_.goals);
        return load_goal_definitions(in_.goals);
    }

    std::map<std::string, ResolvedContext> load_contexts() {
        input("contexts", in_.contexts);
        auto c = read_contexts(in_.contexts);
        provider_id_ = context_provider_id(c);
        return c;
    }

    LoadedCheckpoint load_model() {
        input("checkpoint", in_.checkpoint);
        auto ck = load_checkpoint(in_.checkpoint);
        checkpoint_id_ = ck.id;
        train_ = ck.config;
        return ck;
    }

    // ---- commands ----------------------------------------------------------------------

    void cmd_ingest() {
        need_file(in_.input, "input file");
        input("input", in_.input);
        ColumnSchema schema;
        if (!in_.schema.empty()) {
            need_file(in_.schema, "schema file");
            input("schema", in_.schema);
            schema = schema_from_json(read_json(in_.schema));
        }
        if (!in_.id_column.empty()) schema.id = in_.id_column;
        std::ifstream src(in_.input, std::ios::binary);
        const auto result = parse_crs_records(src, schema);
        save_records(out_path("records.jsonl").string(), result.records);

        std::size_t labeled = 0;
        for (const auto& r : result.records) labeled += r.sdg_labels ? 1 : 0;
        auto issues = [](const std::vector<IngestIssue>& v) {
            ojson a = ojson::array();
            for (const auto& i : v) a.push_back({{"row", i.row}, {"message", i.message}});
            return a;
        };
        ojson report{{"records", result.records.size()},
                     {"labeled", labeled},
                     {"unlabeled", result.records.size() - labeled},
                     {"empty_descriptions", issues(result.empty_descriptions)},
                     {"warnings", issues(result.warnings)},
                     {"unlabeled_ids", result.unlabeled_ids}};
        write_text(out_path("ingest_report.json"), report.dump(2) + "\n");
        out_ << "ingested " << result.records.size() << " records (" << labeled << " labeled, "
             << result.empty_descriptions.size() << " empty descriptions dropped)\n";
    }

    void cmd_fetch_context() {
        const auto records = load_input_records();
        const auto goals = load_goals();
        need_file(in_.countries, "country lookup");
        input("countries", in_.countries);
        const auto lookup = CountryLookup::load(in_.countries);
        if (provider_.mode == ProviderMode::Fixture) {
            need_file(provider_.fixture_path, "fixture store");
        } else {
            require(!provider_.fixture_path.empty(), ErrorKind::Config, "live mode needs --fixtures to record responses");
        }
        input("fixtures", provider_.fixture_path);
        provider_id_ = provider_.provider_id;

        std::shared_ptr<Transport> transport;
        if (provider_.mode == ProviderMode::Live) transport = std::make_shared<HttpTransport>(provider_);
        LlmProvider provider(provider_, nullptr, transport);
        const auto max_tokens = static_cast<std::size_t>(train_.encoder.max_tokens);

        if (provider_.mode == ProviderMode::Live) prefetch(records, goals, lookup, provider);

        std::vector<std::pair<std::string, ResolvedContext>> rows;
        ojson skipped = ojson::array();
        for (const auto& rec : records) {
            try {
                rows.push_back({rec.id, {fetch_country_context(rec, lookup, provider, max_tokens),
                                         fetch_decision(rec, goals, provider)}});
            } catch (const Error& e) {
                if (!in_.skip_missing) throw;
                skipped.push_back({{"id", rec.id}, {"reason", e.what()}});
            }
        }
        std::size_t empty_decisions = 0;
        for (const auto& [id, r] : rows) empty_decisions += r.decision.empty() ? 1 : 0;
        write_contexts(out_path("contexts.jsonl"), rows);
        ojson report{{"provider_id", provider_.provider_id},
                     {"resolved", rows.size()},
                     {"empty_decisions", empty_decisions},
                     {"skipped", skipped}};
        write_text(out_path("fetch_report.json"), report.dump(2) + "\n");
        out_ << "resolved context for " << rows.size() << " records";
        if (!skipped.empty()) out_ << ", skipped " << skipped.size();
        out_ << '\n';
    }

    // Fills the store concurrently; the sequential pass then reads from it.
    void prefetch(const std::vector<ProjectRecord>& records, const std::vector<GoalDefinition>& goals,
                  const CountryLookup& lookup, LlmProvider& provider) {
        std::set<std::string> donor, recipient, decision;
        for (const auto& rec : records) {
            donor.insert(build_country_prompt(PromptKind::DonorPolicy, lookup.donor_name(rec)));
            recipient.insert(build_country_prompt(PromptKind::RecipientPolicy, lookup.recipient_name(rec),
                                                  lookup.income_group(rec.recipient_code, rec.year)));
            decision.insert(build_decision_prompt(rec.description, goals));
        }
        auto run = [&](PromptKind kind, const std::set<std::string>& prompts) {
            try {
                provider.query_many(kind, {prompts.begin(), prompts.end()});
            } catch (const Error&) {
                if (!in_.skip_missing) throw;
            }
        };
        run(PromptKind::DonorPolicy, donor);
        run(PromptKind::RecipientPolicy, recipient);
        run(PromptKind::SdgDecision, decision);
    }

    std::vector<Example> labeled_examples(const std::vector<ProjectRecord>& records,
                                          const std::map<std::string, ResolvedContext>& contexts) {
        std::vector<Example> out;
        for (const auto& rec : records)
            if (rec.sdg_labels && !rec.sdg_labels->empty()) out.push_back(join_example(rec, contexts));
        require(!out.empty(), ErrorKind::Size, "no labeled records to work with");
        return out;
    }

    std::pair<std::vector<Example>, std::vector<Example>> split_examples(const std::vector<Example>& all,
                                                                         DatasetSplit& split) {
        std::vector<ProjectRecord> recs;
        for (const auto& ex : all) recs.push_back(ex.record);
        split = split_dataset(recs, parse_ratio(in_.ratio), train_.seed);
        std::map<std::string, const Example*> by_id;
        for (const auto& ex : all) by_id[ex.record.id] = &ex;
        std::pair<std::vector<Example>, std::vector<Example>> out;
        for (const auto& r : split.train) out.first.push_back(*by_id.at(r.id));
        for (const auto& r : split.test) out.second.push_back(*by_id.at(r.id));
        return out;
    }

    void cmd_train() {
        const auto records = load_input_records();
        const auto goals = load_goals();
        const auto contexts = load_contexts();
        const auto all = labeled_examples(records, contexts);
        DatasetSplit split;
        const auto [train_set, test_set] = split_examples(all, split);
        write_text(out_path("split.json"), split_to_json(split, in_.ratio).dump(2) + "\n");

        std::optional<ModelState> initial;
        if (!in_.resume.empty()) {
            input("resume", in_.resume);
            auto ck = load_checkpoint(in_.resume, &train_);
            resumed_from_ = ck.id;
            initial = std::move(ck.state);
        }
        TrainOptions opts;
        opts.checkpoint_dir = out_dir_;
        opts.log_path = out_path("train_log.jsonl").string();
        opts.on_epoch = [this](const EpochLog& e) {
            out_ << "epoch " << e.epoch << " L_total " << e.l_total << '\n';
        };
        auto result = train(train_, train_set, goals, opts, std::move(initial));
        out_path("checkpoint.bin");
        checkpoint_id_ = sha256_hex(read_bytes(result.last_checkpoint));
        out_ << "checkpoint " << result.last_checkpoint << " (" << checkpoint_id_ << ")\n";
    }

    void cmd_evaluate() {
        auto ck = load_model();
        if (threshold_opt_->count() > 0) train_.prediction_threshold = threshold_;
        train_.validate();
        const auto records = load_input_records();
        const auto goals = load_goals();
        const auto contexts = load_contexts();
        auto all = labeled_examples(records, contexts);
        std::vector<Example> test = all;
        if (!in_.split.empty()) {
            need_file(in_.split, "split file");
            input("split", in_.split);
            const auto ids = read_json(in_.split).at("test").get<std::vector<std::string>>();
            std::map<std::string, const Example*> by_id;
            for (const auto& ex : all) by_id[ex.record.id] = &ex;
            test.clear();
            for (const auto& id : ids) {
                auto it = by_id.find(id);
                require(it != by_id.end(), ErrorKind::Config, "split test id " + id + " is not a labeled record");
                test.push_back(*it->second);
            }
        }
        const auto micro = evaluate_model(ck.state, train_, test, goals, Averaging::Micro);
        const auto macro = evaluate_model(ck.state, train_, test, goals, Averaging::Macro);
        ojson j{{"checkpoint_id", checkpoint_id_},
                {"provider_id", provider_id_},
                {"threshold", train_.prediction_threshold},
                {"micro", to_json(micro)},
                {"macro", to_json(macro)}};
        write_text(out_path("metrics.json"), j.dump(2) + "\n");
        const auto text = format_report(micro, macro);
        write_text(out_path("metrics.txt"), text);
        out_ << text;
    }

    void cmd_ablate() {
        const auto records = load_input_records();
        const auto goals = load_goals();
        const auto contexts = load_contexts();
        const auto all = labeled_examples(records, contexts);
        DatasetSplit split;
        const auto [train_set, test_set] = split_examples(all, split);
        write_text(out_path("split.json"), split_to_json(split, in_.ratio).dump(2) + "\n");
        const auto variants = in_.variants.empty() ? ablation_variants() : in_.variants;
        const auto rows = run_ablation(train_, train_set, test_set, goals, variants);
        ojson j{{"provider_id", provider_id_}, {"rows", ojson::array()}, {"published_reference", ojson::array()}};
        for (const auto& r : rows) {
            ojson log = ojson::array();
            for (const auto& e : r.log) log.push_back(to_json(e));
            j["rows"].push_back({{"variant", r.variant},
                                 {"micro", to_json(r.micro, false)},
                                 {"macro", to_json(r.macro, false)},
                                 {"log", log}});
        }
        for (const auto& r : published_ablation_rows())
            j["published_reference"].push_back(
                {{"variant", r.variant}, {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}, {"auroc", r.auroc}});
        write_text(out_path("ablation.json"), j.dump(2) + "\n");
        const auto text = format_ablation(rows);
        write_text(out_path("ablation.txt"), text);
        out_ << text;
    }

    void cmd_impute() {
        auto ck = load_model();
        const auto records = load_input_records();
        const auto goals = load_goals();
        const auto contexts = load_contexts();
        auto result = impute_labels(ck.state, train_, records, goals,
                                    [&](const ProjectRecord& rec) { return join_example(rec, contexts); });
        save_records(out_path("imputed_records.jsonl").string(), result.records);
        ojson skipped = ojson::array();
        for (const auto& s : result.skipped) skipped.push_back({{"id", s.id}, {"reason", s.reason}});
        write_text(out_path("skip_report.json"), ojson{{"skipped", skipped}}.dump(2) + "\n");
        std::size_t imputed = 0;
        for (const auto& r : result.records) imputed += r.imputed ? 1 : 0;
        ojson summary{{"checkpoint_id", checkpoint_id_},
                      {"provider_id", provider_id_},
                      {"records_in", records.size()},
                      {"records_out", result.records.size()},
                      {"imputed", imputed},
                      {"skipped", result.skipped.size()}};
        write_text(out_path("imputation_summary.json"), summary.dump(2) + "\n");
        out_ << "imputed " << imputed << " records, skipped " << result.skipped.size() << '\n';
    }

    void cmd_analyze() {
        const auto records = load_input_records();
        need_file(in_.countries, "country lookup");
        input("countries", in_.countries);
        const auto lookup = CountryLookup::load(in_.countries);
        need_file(in_.proportions, "proportion fixture");
        input("proportions", in_.proportions);
        const auto published = load_published_proportions(in_.proportions);
        std::string summary_path = in_.imputation_summary;
        if (summary_path.empty()) {
            const auto sibling = fs::path(in_.records).parent_path() / "imputation_summary.json";
            if (fs::is_regular_file(sibling)) summary_path = sibling.string();
        }
        if (!summary_path.empty()) {
            need_file(summary_path, "imputation summary");
            input("imputation_summary", summary_path);
            const auto s = read_json(summary_path);
            checkpoint_id_ = s.value("checkpoint_id", std::string{});
            provider_id_ = s.value("provider_id", std::string{});
        }

        const auto counts = year_goal_counts(records);
        const auto sums = year_budget_sums(records, counts.years);
        const auto norm = in_.normalization == "max" ? WeightNormalization::MaxNormalized : WeightNormalization::Raw;
        const auto weights = fit_budget_weights(sums, counts, norm);
        auto report = allocate_budget(records, weights, lookup);
        report.checkpoint_id = checkpoint_id_;
        report.provider_id = provider_id_;
        const auto files = emit_trend_report(report, out_dir_, &weights, &published);
        for (const auto& p : {files.annual_csv, files.shares_csv, files.summary_json, files.trend_svg, files.shares_svg})
            outputs_[fs::path(p).filename().string()] = p;
        const auto comparison = format_proportion_comparison(weights, published);
        write_text(out_path("proportion_comparison.txt"), comparison);
        out_ << comparison;
    }

    void write_manifest(int code) {
        ojson inputs = ojson::object(), outputs = ojson::object();
        for (const auto& [k, v] : inputs_) inputs[k] = v;
        for (const auto& [k, v] : outputs_) outputs[k] = v;
        ojson m{{"subcommand", subcommand_},
                {"status", code == kOk ? "ok" : "error"},
                {"exit_code", code},
                {"argv", argv_},
                {"config", {{"train", to_json(train_)}, {"provider", to_json(provider_)}}},
                {"inputs", inputs},
                {"outputs", outputs},
                {"seed", seed_},
                {"checkpoint_id", checkpoint_id_},
                {"provider_mode", mode_},
                {"provider_id", provider_id_},
                {"started_at", started_},
                {"finished_at", utc_timestamp()}};
        if (!resumed_from_.empty()) m["resumed_from"] = resumed_from_;
        if (!error_.empty()) m["error"] = error_;
        fs::create_directories(out_dir_);
        write_text(fs::path(out_dir_) / "manifest.json", m.dump(2) + "\n");
    }

    std::ostream& out_;
    std::ostream& err_;
    std::vector<std::string> argv_;

    std::string config_path_;
    std::uint64_t seed_ = TrainConfig{}.seed;
    std::string mode_ = to_string(ProviderConfig{}.mode);
    std::string out_dir_ = "out";
    CLI::Option* seed_opt_ = nullptr;
    CLI::Option* mode_opt_ = nullptr;
    std::vector<CLI::Option*> backbone_opts_;
    CLI::Option* threshold_opt_ = nullptr;
    double threshold_ = TrainConfig{}.prediction_threshold;
    std::string backbone_;
    Inputs in_;

    TrainConfig train_flags_, train_;
    ProviderConfig provider_flags_, provider_;
    std::vector<std::function<void(TrainConfig&)>> train_overrides_;
    std::vector<std::function<void(ProviderConfig&)>> provider_overrides_;

    std::string subcommand_, started_, error_;
    std::string checkpoint_id_, provider_id_, resumed_from_;
    std::map<std::string, std::string> inputs_, outputs_;
};

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return Runner(out, err).run(argc, argv);
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<const char*> argv{"sdgclf"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace sdgclf::cli
