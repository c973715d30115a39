#pragma once
// Synthetic corpus with planted goal keywords and simulated LLM providers
// whose decisions are correct with a fixed probability.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "sdgclf/corpus.hpp"
#include "sdgclf/country.hpp"
#include "sdgclf/decision.hpp"
#include "sdgclf/llm.hpp"
#include "sdgclf/rng.hpp"

namespace sdgclf {

struct SyntheticSpec {
    int records = 500;
    std::vector<int> active_goals{2, 3, 4, 6, 13};
    int keywords_per_goal = 8;
    int keywords_per_label = 3;
    int filler_words = 8;
    double second_label_rate = 0.35;
    double decision_accuracy = 0.8;
    std::vector<int> donor_codes{701, 801, 4, 5, 742, 8};
    std::vector<int> recipient_codes{625, 666, 261, 238, 769, 248};
    int first_year = 2016;
    int last_year = 2021;
    std::uint64_t seed = 7;
};

namespace detail {

inline const std::map<int, std::vector<std::string>>& synthetic_keyword_pools() {
    static const std::map<int, std::vector<std::string>> pools{
        {1, {"cash", "transfer", "livelihood", "poverty", "safety", "net", "microfinance", "pension"}},
        {2, {"crop", "harvest", "seed", "irrigation", "farmer", "nutrition", "livestock", "grain"}},
        {3, {"clinic", "vaccine", "malaria", "maternal", "hospital", "nurse", "disease", "medicine"}},
        {4, {"school", "teacher", "classroom", "literacy", "pupil", "curriculum", "scholarship", "textbook"}},
        {5, {"women", "girls", "gender", "violence", "equality", "empowerment", "midwife", "leadership"}},
        {6, {"water", "sanitation", "latrine", "borehole", "hygiene", "pipeline", "wastewater", "well"}},
        {7, {"solar", "grid", "electricity", "turbine", "energy", "power", "battery", "hydro"}},
        {8, {"jobs", "employment", "enterprise", "wage", "labour", "apprentice", "trade", "tourism"}},
        {9, {"road", "bridge", "broadband", "factory", "port", "railway", "innovation", "logistics"}},
        {10, {"migrant", "inclusion", "disability", "minority", "remittance", "refugee", "equity", "tax"}},
        {11, {"housing", "urban", "transit", "slum", "municipal", "zoning", "heritage", "resilience"}},
        {12, {"recycling", "waste", "consumption", "packaging", "circular", "chemical", "reuse", "efficiency"}},
        {13, {"climate", "adaptation", "emission", "carbon", "flood", "drought", "mitigation", "warming"}},
        {14, {"ocean", "fisheries", "coral", "marine", "coastal", "mangrove", "reef", "plastic"}},
        {15, {"forest", "biodiversity", "wildlife", "soil", "desertification", "reforestation", "habitat", "species"}},
        {16, {"justice", "court", "governance", "police", "corruption", "parliament", "rights", "peace"}},
        {17, {"partnership", "statistics", "debt", "capacity", "cooperation", "finance", "technology", "exports"}}};
    return pools;
}

inline const std::vector<std::string>& synthetic_filler() {
    static const std::vector<std::string> words{
        "the",     "project", "support",  "programme", "for",       "and",      "in",       "of",
        "district", "phase",  "national", "regional",  "local",     "technical", "assistance", "component",
        "through", "with",    "services", "community", "strengthen", "improve", "provide",  "development",
        "initiative", "activities", "target", "beneficiaries", "implementation", "partners", "funding", "rural"};
    return words;
}

inline std::string synthetic_summary(const std::string& name, const std::string& role, Rng& rng) {
    static const std::vector<std::string> themes{"health", "education", "infrastructure", "agriculture", "governance",
                                                 "climate", "water", "growth", "trade", "social", "protection"};
    std::string out = name + " " + role + " policy emphasises";
    for (int i = 0; i < 6; ++i) out += " " + themes[rng.index(themes.size())];
    return out + " with long term partnership priorities.";
}

} // namespace detail

struct SyntheticProvider {
    std::string provider_id;
    std::vector<DecisionVector> decisions; // per record, as the provider answers
    std::map<std::string, std::string> responses; // prompt -> response
};

struct SyntheticCorpus {
    std::vector<ProjectRecord> records;
    std::vector<SyntheticProvider> providers;
};

// Country summaries are identical across providers; only decisions differ,
// each provider erring independently.
inline SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec, const std::vector<GoalDefinition>& goals,
                                             const CountryLookup& lookup,
                                             const std::vector<std::string>& provider_ids = {"synthA", "synthB"}) {
    require(spec.records > 0 && !spec.active_goals.empty(), ErrorKind::Parameter, "synthetic spec needs records and goals");
    require(spec.decision_accuracy >= 0 && spec.decision_accuracy <= 1, ErrorKind::Parameter, "accuracy must lie in [0,1]");
    const auto& pools = detail::synthetic_keyword_pools();
    const auto& filler = detail::synthetic_filler();
    Rng rng(spec.seed);
    SyntheticCorpus out;

    std::set<std::string> seen;
    for (int i = 0; i < spec.records; ++i) {
        ProjectRecord rec;
        rec.id = "syn-" + std::to_string(i);
        GoalSet y;
        y.insert(spec.active_goals[rng.index(spec.active_goals.size())]);
        if (spec.active_goals.size() > 1 && rng.bernoulli(spec.second_label_rate))
            while (y.count() < 2) y.insert(spec.active_goals[rng.index(spec.active_goals.size())]);
        std::string text;
        do {
            std::vector<std::string> words;
            for (int g : y.goals()) {
                const auto& pool = pools.at(g);
                for (int k = 0; k < spec.keywords_per_label; ++k)
                    words.push_back(pool[rng.index(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(spec.keywords_per_goal)))]);
            }
            for (int k = 0; k < spec.filler_words; ++k) words.push_back(filler[rng.index(filler.size())]);
            rng.shuffle(words);
            text.clear();
            for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
        } while (!seen.insert(text).second);
        rec.description = text;
        rec.sdg_labels = y;
        rec.donor_code = spec.donor_codes[rng.index(spec.donor_codes.size())];
        rec.recipient_code = spec.recipient_codes[rng.index(spec.recipient_codes.size())];
        rec.year = spec.first_year + static_cast<int>(rng.index(static_cast<std::size_t>(spec.last_year - spec.first_year + 1)));
        rec.commitment_usd = std::round(std::exp(rng.normal(13.0, 1.0)));
        out.records.push_back(std::move(rec));
    }

    // Shared country summaries.
    std::map<std::string, std::string> country_responses;
    for (int code : spec.donor_codes) {
        ProjectRecord probe;
        probe.donor_code = code;
        const std::string name = lookup.donor_name(probe);
        country_responses[build_country_prompt(PromptKind::DonorPolicy, name)] = detail::synthetic_summary(name, "donor", rng);
    }
    for (const auto& rec : out.records) {
        const std::string name = lookup.recipient_name(rec);
        const std::string prompt =
            build_country_prompt(PromptKind::RecipientPolicy, name, lookup.income_group(rec.recipient_code, rec.year));
        if (!country_responses.count(prompt)) country_responses[prompt] = detail::synthetic_summary(name, "recipient", rng);
    }

    for (std::size_t p = 0; p < provider_ids.size(); ++p) {
        SyntheticProvider prov{provider_ids[p], {}, country_responses};
        Rng prng(spec.seed * 1000003ULL + 17 * (p + 1));
        for (const auto& rec : out.records) {
            const GoalSet& y = *rec.sdg_labels;
            GoalSet answer = y;
            if (!prng.bernoulli(spec.decision_accuracy)) {
                // A wrong answer: an active goal outside the label set.
                std::vector<int> wrong;
                for (int g : spec.active_goals)
                    if (!y.contains(g)) wrong.push_back(g);
                if (wrong.empty())
                    for (int g = 1; g <= kNumGoals; ++g)
                        if (!y.contains(g)) wrong.push_back(g);
                answer = GoalSet{wrong[prng.index(wrong.size())]};
            }
            const std::string response = format_answer(answer);
            prov.responses[build_decision_prompt(rec.description, goals)] = response;
            prov.decisions.push_back(parse_decision(response, prov.provider_id, ""));
        }
        out.providers.push_back(std::move(prov));
    }
    return out;
}

// Transport that answers the simulated provider's prompts; unknown prompts
// are a non-retryable transport failure.
inline std::shared_ptr<Transport> synthetic_transport(const SyntheticProvider& provider) {
    auto table = std::make_shared<std::map<std::string, std::string>>(provider.responses);
    return std::make_shared<FunctionTransport>([table](const std::string& prompt) {
        auto it = table->find(prompt);
        if (it == table->end()) throw TransportError("synthetic provider has no answer for this prompt", false);
        return it->second;
    });
}

} // namespace sdgclf
