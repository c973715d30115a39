#pragma once
// Glue between records, the LLM provider and the trainer.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "sdgclf/llm.hpp"
#include "sdgclf/synthetic.hpp"
#include "sdgclf/trainer.hpp"

namespace sdgclf {

// Country context and decision for every record, through the provider.
inline std::vector<Example> resolve_examples(const std::vector<ProjectRecord>& records, const CountryLookup& lookup,
                                             const std::vector<GoalDefinition>& goals, LlmProvider& provider,
                                             std::size_t max_tokens) {
    std::vector<Example> out;
    out.reserve(records.size());
    for (const auto& rec : records)
        out.push_back({rec, fetch_country_context(rec, lookup, provider, max_tokens), fetch_decision(rec, goals, provider)});
    return out;
}

// Examples for one simulated provider, resolved through an in-memory store.
inline std::vector<Example> synthetic_examples(const SyntheticCorpus& corpus, std::size_t provider_index,
                                               const CountryLookup& lookup, const std::vector<GoalDefinition>& goals,
                                               std::size_t max_tokens = 128) {
    require(provider_index < corpus.providers.size(), ErrorKind::Parameter, "no such synthetic provider");
    const auto& sp = corpus.providers[provider_index];
    ProviderConfig cfg;
    cfg.provider_id = sp.provider_id;
    cfg.mode = ProviderMode::Live;
    cfg.max_retries = 0;
    LlmProvider provider(cfg, std::make_shared<FixtureStore>(), synthetic_transport(sp));
    return resolve_examples(corpus.records, lookup, goals, provider, max_tokens);
}

struct SyntheticBundle {
    std::string corpus_csv;
    std::vector<std::string> fixture_paths; // one per provider
    SyntheticCorpus corpus;
};

// corpus.csv plus one fixture store per simulated provider, recorded by a
// live-mode provider over the synthetic transport. The last `unlabeled`
// records are written with a blank SDG field.
inline SyntheticBundle write_synthetic_bundle(const SyntheticSpec& spec, int unlabeled, const std::string& out_dir,
                                              const std::vector<GoalDefinition>& goals, const CountryLookup& lookup,
                                              std::size_t max_tokens = 128) {
    require(unlabeled >= 0 && unlabeled < spec.records, ErrorKind::Parameter, "unlabeled count must be below records");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    SyntheticBundle b;
    b.corpus = make_synthetic_corpus(spec, goals, lookup);
    b.corpus_csv = (fs::path(out_dir) / "corpus.csv").string();
    {
        std::ofstream csv(b.corpus_csv, std::ios::binary);
        require(csv.good(), ErrorKind::Io, "cannot write " + b.corpus_csv);
        csv << "id,description,sdg_focus,donor_code,recipient_code,year,commitment_usd\n";
        const auto n = b.corpus.records.size();
        for (std::size_t i = 0; i < n; ++i) {
            const auto& r = b.corpus.records[i];
            std::string labels;
            if (i + static_cast<std::size_t>(unlabeled) < n)
                for (int g : r.sdg_labels->goals()) labels += (labels.empty() ? "" : ";") + std::to_string(g);
            char amount[64];
            std::snprintf(amount, sizeof amount, "%.17g", r.commitment_usd);
            csv << r.id << ',' << r.description << ',' << labels << ',' << r.donor_code << ',' << r.recipient_code << ','
                << r.year << ',' << amount << '\n';
        }
        require(csv.good(), ErrorKind::Io, "write failed for " + b.corpus_csv);
    }
    for (const auto& sp : b.corpus.providers) {
        const auto path = (fs::path(out_dir) / ("fixtures_" + sp.provider_id + ".jsonl")).string();
        fs::remove(path);
        ProviderConfig cfg;
        cfg.provider_id = sp.provider_id;
        cfg.mode = ProviderMode::Live;
        cfg.max_retries = 0;
        LlmProvider provider(cfg, std::make_shared<FixtureStore>(path), synthetic_transport(sp));
        resolve_examples(b.corpus.records, lookup, goals, provider, max_tokens);
        b.fixture_paths.push_back(path);
    }
    return b;
}

} // namespace sdgclf
