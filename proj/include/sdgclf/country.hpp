#pragma once
// Country context: donor/recipient lookup, income groups, the combined
// country representation and the country-guided attentive representation.

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdgclf/attention.hpp"
#include "sdgclf/corpus.hpp"
#include "sdgclf/encoder.hpp"
#include "sdgclf/error.hpp"
#include "sdgclf/losses.hpp"

namespace sdgclf {

enum class IncomeGroup { LICs, LMICs, UMICs, LDCs, Other };

inline const char* to_string(IncomeGroup g) {
    switch (g) {
    case IncomeGroup::LICs: return "LICs";
    case IncomeGroup::LMICs: return "LMICs";
    case IncomeGroup::UMICs: return "UMICs";
    case IncomeGroup::LDCs: return "LDCs";
    case IncomeGroup::Other: return "other";
    }
    return "other";
}

inline IncomeGroup income_group_from_string(const std::string& s) {
    if (s == "LICs") return IncomeGroup::LICs;
    if (s == "LMICs") return IncomeGroup::LMICs;
    if (s == "UMICs") return IncomeGroup::UMICs;
    if (s == "LDCs") return IncomeGroup::LDCs;
    if (s == "other") return IncomeGroup::Other;
    fail(ErrorKind::Config, "unknown income group '" + s + "'");
}

// GNI-per-capita brackets used in the recipient prompt. UN LDC designation
// takes precedence over the GNI bracket.
inline IncomeGroup income_group_from_gni(double gni_per_capita_usd, bool un_ldc) {
    if (un_ldc) return IncomeGroup::LDCs;
    if (gni_per_capita_usd <= 1045) return IncomeGroup::LICs;
    if (gni_per_capita_usd <= 4095) return IncomeGroup::LMICs;
    if (gni_per_capita_usd <= 12695) return IncomeGroup::UMICs;
    return IncomeGroup::Other;
}

struct Provenance {
    std::string provider_id;
    std::string prompt_hash;
    bool truncated = false; // summary longer than the encoder's max_tokens

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct CountryContext {
    std::string donor_summary;
    std::string recipient_summary;
    IncomeGroup income_group = IncomeGroup::Other;
    int donor_code = 0;
    int recipient_code = 0;
    Provenance donor_provenance;
    Provenance recipient_provenance;

    friend bool operator==(const CountryContext&, const CountryContext&) = default;
};

// Static code -> name / income-group tables.
class CountryLookup {
public:
    struct Donor {
        std::string name;
        bool multilateral = false;
    };
    struct IncomeSpan {
        int from_year = 0;
        int to_year = 9999;
        IncomeGroup group = IncomeGroup::Other;
    };
    struct Recipient {
        std::string name;
        std::vector<IncomeSpan> income;
    };

    static CountryLookup from_json(const nlohmann::json& j) {
        CountryLookup out;
        for (const auto& d : j.at("donors"))
            out.donors_[d.at("code").get<int>()] = {d.at("name").get<std::string>(), d.value("multilateral", false)};
        for (const auto& r : j.at("recipients")) {
            Recipient rec{r.at("name").get<std::string>(), {}};
            for (const auto& s : r.at("income"))
                rec.income.push_back({s.value("from", 0), s.value("to", 9999),
                                      income_group_from_string(s.at("group").get<std::string>())});
            out.recipients_[r.at("code").get<int>()] = std::move(rec);
        }
        return out;
    }

    static CountryLookup load(const std::string& path) {
        std::ifstream in(path);
        require(in.good(), ErrorKind::Io, "cannot read " + path);
        return from_json(nlohmann::json::parse(in));
    }

    const Donor* donor(int code) const {
        auto it = donors_.find(code);
        return it == donors_.end() ? nullptr : &it->second;
    }
    const Recipient* recipient(int code) const {
        auto it = recipients_.find(code);
        return it == recipients_.end() ? nullptr : &it->second;
    }

    // Unknown recipients and uncovered years fall back to Other.
    IncomeGroup income_group(int recipient_code, int year) const {
        if (const auto* r = recipient(recipient_code))
            for (const auto& s : r->income)
                if (year >= s.from_year && year <= s.to_year) return s.group;
        return IncomeGroup::Other;
    }

    std::string donor_name(const ProjectRecord& rec) const {
        if (!rec.donor_name.empty()) return rec.donor_name;
        if (const auto* d = donor(rec.donor_code)) return d->name;
        return "donor " + std::to_string(rec.donor_code);
    }
    std::string recipient_name(const ProjectRecord& rec) const {
        if (!rec.recipient_name.empty()) return rec.recipient_name;
        if (const auto* r = recipient(rec.recipient_code)) return r->name;
        return "recipient " + std::to_string(rec.recipient_code);
    }

private:
    std::map<int, Donor> donors_;
    std::map<int, Recipient> recipients_;
};

// S_C(h_d (.) h_r).
inline PooledRepresentation country_representation(const PooledRepresentation& donor,
                                                   const PooledRepresentation& recipient, const ProjectionHead& head) {
    require(donor.width() == recipient.width(), ErrorKind::Shape, "donor and recipient widths differ");
    return project({ad::cmul(donor.vector, recipient.vector), RepresentationSource::Derived}, head);
}

inline PooledRepresentation country_guided_representation(const TokenEmbeddingSet& e,
                                                          const PooledRepresentation& country,
                                                          const AttentionHead& head, bool weighted_sum = false) {
    require(head.owner == HeadOwner::Country, ErrorKind::Parameter, "country guidance needs the country head");
    return cross_attention_pool(e, country, head, weighted_sum);
}

// BCE(y, sigmoid(f_c(h^))).
inline ad::Var country_loss(const PooledRepresentation& guided, const GoalSet& y, const Mlp& classifier) {
    require(classifier.out_width() == kNumGoals, ErrorKind::Shape, "f_c must produce 17 logits");
    return multilabel_bce(classifier.forward(guided.vector), y);
}

} // namespace sdgclf
