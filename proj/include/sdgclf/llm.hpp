#pragma once
// Prompt construction, recorded/live LLM queries and response parsing.

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdgclf/corpus.hpp"
#include "sdgclf/country.hpp"
#include "sdgclf/decision.hpp"
#include "sdgclf/error.hpp"

namespace sdgclf {

// ---- prompts ----------------------------------------------------------------------

enum class PromptKind { DonorPolicy, RecipientPolicy, SdgDecision };

inline const char* to_string(PromptKind k) {
    switch (k) {
    case PromptKind::DonorPolicy: return "donor_policy";
    case PromptKind::RecipientPolicy: return "recipient_policy";
    case PromptKind::SdgDecision: return "sdg_decision";
    }
    return "?";
}

inline PromptKind prompt_kind_from_string(const std::string& s) {
    if (s == "donor_policy") return PromptKind::DonorPolicy;
    if (s == "recipient_policy") return PromptKind::RecipientPolicy;
    if (s == "sdg_decision") return PromptKind::SdgDecision;
    fail(ErrorKind::Template, "unknown prompt kind '" + s + "'");
}

inline constexpr const char* kDonorPlaceholder = "[donor country]";
inline constexpr const char* kRecipientPlaceholder = "[recipient country]";
inline constexpr const char* kIncomePlaceholder = "[income classification]";
inline constexpr const char* kDescriptionPlaceholder = "[Project description]";
inline constexpr const char* kGoalListPlaceholder = "[goal list]";

struct PromptTemplate {
    PromptKind kind = PromptKind::DonorPolicy;
    std::string template_text;

    static PromptTemplate standard(PromptKind kind) {
        switch (kind) {
        case PromptKind::DonorPolicy:
            return {kind, "Based on government documents, summarize the Official Development Assistance (ODA) Policy of "
                          "[donor country]?"};
        case PromptKind::RecipientPolicy:
            return {kind,
                    "In the OECD CRS (Creditor Reporting System) database, income groups categorize countries based on "
                    "their gross national income (GNI) per capita. Here’s what each group represents: \n"
                    "- LICs (Low-Income Countries): Countries with a GNI per capita of $1,045 or less. \n"
                    "- LMICs (Lower Middle-Income Countries): Countries with a GNI per capita between $1,046 and "
                    "$4,095. \n"
                    "- UMICs (Upper Middle-Income Countries): Countries with a GNI per capita between $4,096 and "
                    "$12,695. \n"
                    "- LDCs (Least Developed Countries): This group includes countries identified by the United "
                    "Nations as facing severe structural impediments to sustainable development. \n"
                    "\n"
                    "Based on credible government papers, can you summarize the Official Development Assistance (ODA) "
                    "Policy of [income classification], [recipient country]?"};
        case PromptKind::SdgDecision:
            return {kind,
                    "Now you will help me classify the sentence according to the following 17 Sustainable Development "
                    "Goals (SDGs): \n"
                    "[goal list]"
                    "<EXAMPLES>: [Project description]\n"
                    "\n"
                    "Determine which of the above Sustainable Development Goals (SDGs) does the <EXAMPLES> correspond "
                    "to. You can select multiple answers following format. \n"
                    "<Answer>: <1 ~ 17>"};
        }
        fail(ErrorKind::Template, "unknown prompt kind");
    }

    // Each kind must carry exactly its own placeholders, once each.
    void validate() const {
        auto count = [&](const char* p) {
            std::size_t n = 0;
            for (auto pos = template_text.find(p); pos != std::string::npos; pos = template_text.find(p, pos + 1)) ++n;
            return n;
        };
        const bool donor = kind == PromptKind::DonorPolicy, recip = kind == PromptKind::RecipientPolicy,
                   dec = kind == PromptKind::SdgDecision;
        require(count(kDonorPlaceholder) == (donor ? 1u : 0u) && count(kRecipientPlaceholder) == (recip ? 1u : 0u) &&
                    count(kIncomePlaceholder) == (recip ? 1u : 0u) &&
                    count(kDescriptionPlaceholder) == (dec ? 1u : 0u) && count(kGoalListPlaceholder) == (dec ? 1u : 0u),
                ErrorKind::Template, std::string("template for ") + to_string(kind) + " has wrong placeholders");
    }
};

namespace detail {
inline std::string replace_once(std::string text, const std::string& key, const std::string& value) {
    const auto pos = text.find(key);
    require(pos != std::string::npos, ErrorKind::Template, "placeholder " + key + " missing from template");
    text.replace(pos, key.size(), value);
    return text;
}
} // namespace detail

inline std::string build_country_prompt(PromptKind kind, const std::string& country,
                                        std::optional<IncomeGroup> income = std::nullopt,
                                        const std::optional<PromptTemplate>& custom = std::nullopt) {
    require(kind != PromptKind::SdgDecision, ErrorKind::Template, "not a country prompt kind");
    require(!detail::trim(country).empty(), ErrorKind::Template, "country name is empty");
    const PromptTemplate t = custom ? *custom : PromptTemplate::standard(kind);
    require(t.kind == kind, ErrorKind::Template, "template kind mismatch");
    t.validate();
    if (kind == PromptKind::DonorPolicy) return detail::replace_once(t.template_text, kDonorPlaceholder, country);
    require(income.has_value(), ErrorKind::Template, "recipient prompt needs an income classification");
    auto text = detail::replace_once(t.template_text, kIncomePlaceholder, to_string(*income));
    return detail::replace_once(text, kRecipientPlaceholder, country);
}

inline std::string build_decision_prompt(const std::string& description, const std::vector<GoalDefinition>& goals,
                                         const std::optional<PromptTemplate>& custom = std::nullopt) {
    require(!detail::trim(description).empty(), ErrorKind::Template, "project description is empty");
    require(goals.size() == static_cast<std::size_t>(kNumGoals), ErrorKind::DefinitionSet, "need 17 goal definitions");
    const PromptTemplate t = custom ? *custom : PromptTemplate::standard(PromptKind::SdgDecision);
    t.validate();
    std::string list;
    for (const auto& g : goals) list += "Goal " + std::to_string(g.goal_index) + ": " + g.title + " \n";
    auto text = detail::replace_once(t.template_text, kGoalListPlaceholder, list);
    return detail::replace_once(text, kDescriptionPlaceholder, description);
}

// ---- hashing ----------------------------------------------------------------------

inline std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    require(EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) == 1, ErrorKind::Io,
            "sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

// Hash of (provider id, template kind, substituted prompt). Fields are joined
// with a unit separator so no concatenation can collide.
inline std::string prompt_hash(const std::string& provider_id, PromptKind kind, const std::string& prompt) {
    return sha256_hex(provider_id + '\x1f' + to_string(kind) + '\x1f' + prompt);
}

inline std::string utc_timestamp() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---- fixture store ----------------------------------------------------------------

struct FixtureEntry {
    std::string prompt_hash;
    std::string provider_id;
    std::string kind;
    std::string prompt;
    std::string response;
    std::string timestamp;
};

// Append-only JSONL record of prompt/response pairs. Reads are concurrent;
// appends are serialized. The first entry for a hash wins.
class FixtureStore {
public:
    FixtureStore() = default;
    explicit FixtureStore(std::string path) : path_(std::move(path)) { reload(); }

    void reload() {
        std::unique_lock lock(mutex_);
        entries_.clear();
        if (path_.empty()) return;
        std::ifstream in(path_);
        if (!in.good()) return; // created on first append
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (detail::trim(line).empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                fail(ErrorKind::Schema, path_ + ":" + std::to_string(lineno) + ": " + e.what());
            }
            FixtureEntry e{j.at("prompt_hash").get<std::string>(), j.at("provider_id").get<std::string>(),
                           j.value("kind", std::string{}),       j.value("prompt", std::string{}),
                           j.at("response").get<std::string>(),  j.value("timestamp", std::string{})};
            entries_.try_emplace(e.prompt_hash, std::move(e));
        }
    }

    std::optional<FixtureEntry> find(const std::string& hash) const {
        std::shared_lock lock(mutex_);
        auto it = entries_.find(hash);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void append(const FixtureEntry& e) {
        std::unique_lock lock(mutex_);
        if (entries_.count(e.prompt_hash)) return;
        if (!path_.empty()) {
            std::ofstream out(path_, std::ios::app);
            require(out.good(), ErrorKind::Io, "cannot append to " + path_);
            nlohmann::ordered_json j{{"prompt_hash", e.prompt_hash}, {"provider_id", e.provider_id}, {"kind", e.kind},
                                     {"prompt", e.prompt},           {"response", e.response},       {"timestamp", e.timestamp}};
            out << j.dump() << '\n';
            out.flush();
        }
        entries_.emplace(e.prompt_hash, e);
    }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return entries_.size();
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, FixtureEntry> entries_;
};

// ---- provider ---------------------------------------------------------------------

enum class ProviderMode { Live, Fixture };

inline const char* to_string(ProviderMode m) { return m == ProviderMode::Live ? "live" : "fixture"; }
inline ProviderMode provider_mode_from_string(const std::string& s) {
    if (s == "live") return ProviderMode::Live;
    if (s == "fixture") return ProviderMode::Fixture;
    fail(ErrorKind::Config, "provider mode must be live or fixture, got '" + s + "'");
}

struct ProviderConfig {
    std::string provider_id = "gpt-4o-mini";
    ProviderMode mode = ProviderMode::Fixture;
    std::string fixture_path;
    // Live transport: OpenAI-compatible chat-completions endpoint.
    std::string base_url = "https://api.openai.com/v1";
    std::string model;                       // defaults to provider_id
    std::string api_key_env = "OPENAI_API_KEY";
    double top_p = 1.0;
    double temperature = 0.0;
    int max_retries = 4;
    int initial_backoff_ms = 500;
    int max_in_flight = 4;
    double requests_per_second = 0.0; // 0 = unlimited
    int timeout_seconds = 120;

    void validate() const {
        require(!provider_id.empty(), ErrorKind::Config, "provider_id is empty");
        if (mode == ProviderMode::Fixture)
            require(!fixture_path.empty(), ErrorKind::Config, "fixture mode needs a fixture file");
        require(max_retries >= 0 && initial_backoff_ms >= 0 && max_in_flight >= 1, ErrorKind::Config,
                "bad retry/concurrency settings");
        require(requests_per_second >= 0, ErrorKind::Config, "requests_per_second must be >= 0");
    }
};

inline nlohmann::ordered_json to_json(const ProviderConfig& c) {
    return {{"provider_id", c.provider_id},
            {"mode", to_string(c.mode)},
            {"fixture_path", c.fixture_path},
            {"base_url", c.base_url},
            {"model", c.model},
            {"api_key_env", c.api_key_env},
            {"top_p", c.top_p},
            {"temperature", c.temperature},
            {"max_retries", c.max_retries},
            {"initial_backoff_ms", c.initial_backoff_ms},
            {"max_in_flight", c.max_in_flight},
            {"requests_per_second", c.requests_per_second},
            {"timeout_seconds", c.timeout_seconds}};
}

inline void apply_json(ProviderConfig& c, const nlohmann::json& j) {
    require(!j.contains("api_key"), ErrorKind::Config, "credentials belong in the environment, not the config file");
    if (j.contains("provider_id")) c.provider_id = j.at("provider_id").get<std::string>();
    if (j.contains("mode")) c.mode = provider_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("fixture_path")) c.fixture_path = j.at("fixture_path").get<std::string>();
    if (j.contains("base_url")) c.base_url = j.at("base_url").get<std::string>();
    if (j.contains("model")) c.model = j.at("model").get<std::string>();
    if (j.contains("api_key_env")) c.api_key_env = j.at("api_key_env").get<std::string>();
    if (j.contains("top_p")) c.top_p = j.at("top_p").get<double>();
    if (j.contains("temperature")) c.temperature = j.at("temperature").get<double>();
    if (j.contains("max_retries")) c.max_retries = j.at("max_retries").get<int>();
    if (j.contains("initial_backoff_ms")) c.initial_backoff_ms = j.at("initial_backoff_ms").get<int>();
    if (j.contains("max_in_flight")) c.max_in_flight = j.at("max_in_flight").get<int>();
    if (j.contains("requests_per_second")) c.requests_per_second = j.at("requests_per_second").get<double>();
    if (j.contains("timeout_seconds")) c.timeout_seconds = j.at("timeout_seconds").get<int>();
}

// Transport failure classes: retryable (network, 429, 5xx) or final.
class TransportError : public Error {
public:
    TransportError(const std::string& what, bool retryable) : Error(ErrorKind::Provider, what), retryable_(retryable) {}
    bool retryable() const { return retryable_; }

private:
    bool retryable_;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual std::string complete(const std::string& prompt, const ProviderConfig& config) = 0;
};

// Transport backed by a callable; used for tests and custom backends.
class FunctionTransport : public Transport {
public:
    explicit FunctionTransport(std::function<std::string(const std::string&)> fn) : fn_(std::move(fn)) {}
    std::string complete(const std::string& prompt, const ProviderConfig&) override { return fn_(prompt); }

private:
    std::function<std::string(const std::string&)> fn_;
};

struct QueryResult {
    std::string response;
    std::string prompt_hash;
    bool from_store = false;
};

// Fixture mode only ever reads the store. Live mode reads the store first
// (so interrupted runs resume), otherwise calls the transport with retries
// and appends the response.
class LlmProvider {
public:
    LlmProvider(ProviderConfig config, std::shared_ptr<FixtureStore> store, std::shared_ptr<Transport> transport = nullptr)
        : config_(std::move(config)), store_(std::move(store)), transport_(std::move(transport)) {
        config_.validate();
        if (!store_) store_ = std::make_shared<FixtureStore>(config_.fixture_path);
        if (config_.mode == ProviderMode::Live)
            require(transport_ != nullptr, ErrorKind::Config, "live mode needs a transport");
    }

    const ProviderConfig& config() const { return config_; }
    const std::string& provider_id() const { return config_.provider_id; }
    FixtureStore& store() { return *store_; }
    std::size_t network_calls() const { return network_calls_.load(); }

    QueryResult query(PromptKind kind, const std::string& prompt) {
        const std::string hash = prompt_hash(config_.provider_id, kind, prompt);
        if (auto hit = store_->find(hash)) return {hit->response, hash, true};
        if (config_.mode == ProviderMode::Fixture)
            throw CacheMissError(hash, std::string(to_string(kind)) + " prompt for provider " + config_.provider_id);
        std::string response = call_with_retries(prompt);
        store_->append({hash, config_.provider_id, to_string(kind), prompt, response, utc_timestamp()});
        return {std::move(response), hash, false};
    }

    // Results keep input order. Live mode runs up to max_in_flight workers.
    std::vector<QueryResult> query_many(PromptKind kind, const std::vector<std::string>& prompts) {
        std::vector<QueryResult> out(prompts.size());
        if (config_.mode == ProviderMode::Fixture || config_.max_in_flight == 1 || prompts.size() < 2) {
            for (std::size_t i = 0; i < prompts.size(); ++i) out[i] = query(kind, prompts[i]);
            return out;
        }
        std::atomic<std::size_t> next{0};
        std::mutex err_mutex;
        std::exception_ptr first_error;
        auto worker = [&] {
            for (std::size_t i; (i = next.fetch_add(1)) < prompts.size();) {
                try {
                    out[i] = query(kind, prompts[i]);
                } catch (...) {
                    std::lock_guard lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        };
        std::vector<std::thread> threads;
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(config_.max_in_flight), prompts.size());
        for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
        if (first_error) std::rethrow_exception(first_error);
        return out;
    }

private:
    void pace() {
        if (config_.requests_per_second <= 0) return;
        const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(1.0 / config_.requests_per_second));
        std::unique_lock lock(pace_mutex_);
        const auto now = std::chrono::steady_clock::now();
        const auto start = std::max(now, next_slot_);
        next_slot_ = start + interval;
        lock.unlock();
        std::this_thread::sleep_until(start);
    }

    std::string call_with_retries(const std::string& prompt) {
        int backoff = config_.initial_backoff_ms;
        for (int attempt = 0;; ++attempt) {
            pace();
            try {
                ++network_calls_;
                return transport_->complete(prompt, config_);
            } catch (const TransportError& e) {
                if (!e.retryable() || attempt >= config_.max_retries)
                    fail(ErrorKind::Provider, "provider " + config_.provider_id + " failed after " +
                                                  std::to_string(attempt + 1) + " attempt(s): " + e.what());
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff *= 2;
        }
    }

    ProviderConfig config_;
    std::shared_ptr<FixtureStore> store_;
    std::shared_ptr<Transport> transport_;
    std::atomic<std::size_t> network_calls_{0};
    std::mutex pace_mutex_;
    std::chrono::steady_clock::time_point next_slot_{};
};

// ---- decision parsing -------------------------------------------------------------

namespace detail {
// Standalone integers in a line; "4.1" style target notation yields the goal.
inline std::vector<std::string> integer_tokens(const std::string& line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        if (!std::isdigit(static_cast<unsigned char>(line[i]))) {
            ++i;
            continue;
        }
        const bool letter_before = i > 0 && std::isalpha(static_cast<unsigned char>(line[i - 1]));
        std::size_t j = i;
        while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
        std::string tok = line.substr(i, j - i);
        if (j + 1 < line.size() && line[j] == '.' && std::isalnum(static_cast<unsigned char>(line[j + 1]))) {
            ++j;
            while (j < line.size() && std::isalnum(static_cast<unsigned char>(line[j]))) ++j;
        }
        const bool letter_after = j < line.size() && std::isalpha(static_cast<unsigned char>(line[j]));
        if (!letter_before && !letter_after) out.push_back(std::move(tok));
        i = j;
    }
    return out;
}

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    lines.push_back(cur);
    return lines;
}
} // namespace detail

// Integers 1..17 after the last "<Answer>:" marker (rest of that line, or the
// next non-empty line when the marker ends its line). Without a marker the
// final non-empty line is used. Out-of-range integers are dropped with a
// warning; an empty result is flagged, not fatal.
inline DecisionVector parse_decision(const std::string& response, const std::string& provider_id = {},
                                     const std::string& hash = {}) {
    DecisionVector d;
    d.raw_response = response;
    d.provider_id = provider_id;
    d.prompt_hash = hash;

    std::string lower = response;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    std::string segment;
    const auto marker = lower.rfind("answer>");
    if (marker != std::string::npos) {
        std::size_t pos = marker + 7;
        while (pos < response.size() && (response[pos] == ':' || response[pos] == ' ' || response[pos] == '\t')) ++pos;
        auto lines = detail::split_lines(response.substr(pos));
        for (const auto& l : lines)
            if (!detail::trim(l).empty()) {
                segment = l;
                break;
            }
    } else {
        auto lines = detail::split_lines(response);
        for (auto it = lines.rbegin(); it != lines.rend(); ++it)
            if (!detail::trim(*it).empty()) {
                segment = *it;
                break;
            }
    }
    for (const auto& tok : detail::integer_tokens(segment)) {
        const long v = tok.size() <= 6 ? std::stol(tok) : -1;
        if (v >= 1 && v <= kNumGoals)
            d.goals.insert(static_cast<int>(v));
        else
            d.warnings.push_back("dropped out-of-range goal '" + tok + "'");
    }
    if (d.goals.empty()) d.warnings.push_back("no goal could be parsed from the response");
    return d;
}

// Canonical serialisation; parse_decision(format_answer(s)).goals == s.
inline std::string format_answer(const GoalSet& goals) {
    std::string out = "<Answer>: ";
    bool first = true;
    for (int g : goals.goals()) {
        if (!first) out += ", ";
        out += std::to_string(g);
        first = false;
    }
    return out;
}

inline nlohmann::ordered_json decision_to_json(const DecisionVector& d) {
    return {{"goals", d.goals},
            {"provider_id", d.provider_id},
            {"prompt_hash", d.prompt_hash},
            {"raw_response", d.raw_response},
            {"warnings", d.warnings}};
}

inline DecisionVector decision_from_json(const nlohmann::ordered_json& j) {
    DecisionVector d;
    d.goals = j.at("goals").get<GoalSet>();
    d.provider_id = j.value("provider_id", std::string{});
    d.prompt_hash = j.value("prompt_hash", std::string{});
    d.raw_response = j.value("raw_response", std::string{});
    d.warnings = j.value("warnings", std::vector<std::string>{});
    return d;
}

// ---- context fetching ----------------------------------------------------------------

inline nlohmann::ordered_json context_to_json(const CountryContext& c) {
    auto prov = [](const Provenance& p) {
        return nlohmann::ordered_json{{"provider_id", p.provider_id}, {"prompt_hash", p.prompt_hash}, {"truncated", p.truncated}};
    };
    return {{"donor_code", c.donor_code},
            {"recipient_code", c.recipient_code},
            {"income_group", to_string(c.income_group)},
            {"donor_summary", c.donor_summary},
            {"recipient_summary", c.recipient_summary},
            {"donor_provenance", prov(c.donor_provenance)},
            {"recipient_provenance", prov(c.recipient_provenance)}};
}

inline CountryContext context_from_json(const nlohmann::ordered_json& j) {
    auto prov = [](const nlohmann::ordered_json& p) {
        return Provenance{p.value("provider_id", std::string{}), p.value("prompt_hash", std::string{}),
                          p.value("truncated", false)};
    };
    CountryContext c;
    c.donor_code = j.at("donor_code").get<int>();
    c.recipient_code = j.at("recipient_code").get<int>();
    c.income_group = income_group_from_string(j.at("income_group").get<std::string>());
    c.donor_summary = j.at("donor_summary").get<std::string>();
    c.recipient_summary = j.at("recipient_summary").get<std::string>();
    c.donor_provenance = prov(j.at("donor_provenance"));
    c.recipient_provenance = prov(j.at("recipient_provenance"));
    return c;
}

// Country context for one record. Summaries longer than max_tokens words are
// flagged truncated; the encoder keeps only the first max_tokens.
inline CountryContext fetch_country_context(const ProjectRecord& rec, const CountryLookup& lookup, LlmProvider& provider,
                                            std::size_t max_tokens) {
    CountryContext c;
    c.donor_code = rec.donor_code;
    c.recipient_code = rec.recipient_code;
    c.income_group = lookup.income_group(rec.recipient_code, rec.year);
    auto donor = provider.query(PromptKind::DonorPolicy,
                                build_country_prompt(PromptKind::DonorPolicy, lookup.donor_name(rec)));
    auto recip = provider.query(PromptKind::RecipientPolicy,
                                build_country_prompt(PromptKind::RecipientPolicy, lookup.recipient_name(rec), c.income_group));
    require(!detail::trim(donor.response).empty() && !detail::trim(recip.response).empty(), ErrorKind::Provider,
            "empty country summary for record " + rec.id);
    c.donor_summary = donor.response;
    c.recipient_summary = recip.response;
    c.donor_provenance = {provider.provider_id(), donor.prompt_hash, word_tokens(donor.response, false).size() > max_tokens};
    c.recipient_provenance = {provider.provider_id(), recip.prompt_hash,
                              word_tokens(recip.response, false).size() > max_tokens};
    return c;
}

inline DecisionVector fetch_decision(const ProjectRecord& rec, const std::vector<GoalDefinition>& goals,
                                     LlmProvider& provider) {
    auto r = provider.query(PromptKind::SdgDecision, build_decision_prompt(rec.description, goals));
    return parse_decision(r.response, provider.provider_id(), r.prompt_hash);
}

} // namespace sdgclf
