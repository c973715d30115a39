#include "test_support.hpp"

#include "sdgclf/http_transport.hpp"
#include "sdgclf/llm.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

using namespace sdgclf;

namespace {

std::string fixture(const std::string& name) { return std::string(SDGCLF_TEST_FIXTURES) + "/" + name; }

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string temp_file(const std::string& name) {
    const std::string path = ::testing::TempDir() + name;
    std::remove(path.c_str());
    return path;
}

ProviderConfig fixture_config(const std::string& path, const std::string& id = "synthA") {
    ProviderConfig c;
    c.provider_id = id;
    c.mode = ProviderMode::Fixture;
    c.fixture_path = path;
    return c;
}

// Minimal chat-completions server: echoes a canned answer and can be told
// to fail the first N requests with a given status.
class MockServer {
public:
    MockServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            ++requests_;
            last_auth_ = req.get_header_value("Authorization");
            last_body_ = req.body;
            if (fail_remaining_ > 0) {
                --fail_remaining_;
                res.status = fail_status_;
                return;
            }
            auto j = nlohmann::json::parse(req.body);
            const std::string prompt = j["messages"][0]["content"];
            nlohmann::json out{{"choices", {{{"message", {{"role", "assistant"}, {"content", "reply to: " + prompt}}}}}}};
            res.set_content(out.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockServer() {
        server_.stop();
        thread_.join();
    }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
    void fail_next(int n, int status) {
        fail_remaining_ = n;
        fail_status_ = status;
    }
    int requests() const { return requests_; }
    std::string last_auth_, last_body_;

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> requests_{0};
    std::atomic<int> fail_remaining_{0};
    int fail_status_ = 500;
};

ProviderConfig live_config(const MockServer& s, const std::string& store) {
    ProviderConfig c;
    c.provider_id = "mock-model";
    c.mode = ProviderMode::Live;
    c.fixture_path = store;
    c.base_url = s.base_url();
    c.api_key_env = "SDGCLF_TEST_KEY";
    c.initial_backoff_ms = 1;
    c.max_retries = 3;
    c.timeout_seconds = 5;
    return c;
}

} // namespace

TEST(CountryPrompt, DonorTemplate) {
    const auto p = build_country_prompt(PromptKind::DonorPolicy, "Japan");
    EXPECT_NE(p.find("ODA) Policy of Japan?"), std::string::npos);
    EXPECT_EQ(p, "Based on government documents, summarize the Official Development Assistance (ODA) Policy of Japan?");
}

TEST(CountryPrompt, RecipientTemplateCarriesBracketsAndIncome) {
    const auto p = build_country_prompt(PromptKind::RecipientPolicy, "Nigeria", IncomeGroup::LMICs);
    EXPECT_NE(p.find("LMICs, Nigeria"), std::string::npos);
    for (const char* bracket : {"- LICs (Low-Income Countries): Countries with a GNI per capita of $1,045 or less.",
                                "- LMICs (Lower Middle-Income Countries): Countries with a GNI per capita between $1,046 and $4,095.",
                                "- UMICs (Upper Middle-Income Countries): Countries with a GNI per capita between $4,096 and $12,695.",
                                "- LDCs (Least Developed Countries): This group includes countries identified by the United Nations"})
        EXPECT_NE(p.find(bracket), std::string::npos) << bracket;
    EXPECT_EQ(p.find('['), std::string::npos);
}

TEST(CountryPrompt, RecipientWithoutIncomeIsTemplateError) {
    try {
        build_country_prompt(PromptKind::RecipientPolicy, "Nigeria");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Template);
    }
    EXPECT_THROW(build_country_prompt(PromptKind::DonorPolicy, "  "), Error);
    EXPECT_THROW((PromptTemplate{PromptKind::DonorPolicy, "no placeholder"}.validate()), Error);
}

TEST(DecisionPrompt, ListsGoalsAndMatchesGoldenFile) {
    const auto goals = load_goal_definitions(sdgclf::testing::data_path("sdg_goals.json"));
    const std::string desc = "Rehabilitation of rural water points and hygiene promotion in primary schools";
    const auto p = build_decision_prompt(desc, goals);
    EXPECT_NE(p.find("Goal 1: End poverty in all its forms everywhere"), std::string::npos);
    EXPECT_NE(p.find("Goal 17: "), std::string::npos);
    EXPECT_NE(p.find("<EXAMPLES>: " + desc), std::string::npos);
    EXPECT_EQ(p.substr(p.size() - 18), "<Answer>: <1 ~ 17>");
    // The golden file was written by a separate script from the goal file.
    EXPECT_EQ(p, slurp(fixture("decision_prompt.golden.txt")));
    EXPECT_EQ(p, build_decision_prompt(desc, goals));
    EXPECT_THROW(build_decision_prompt("   ", goals), Error);
}

TEST(PromptHash, Sha256AndFieldSeparation) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const auto a = prompt_hash("p", PromptKind::DonorPolicy, "x");
    EXPECT_EQ(a, prompt_hash("p", PromptKind::DonorPolicy, "x"));
    EXPECT_NE(a, prompt_hash("q", PromptKind::DonorPolicy, "x"));
    EXPECT_NE(a, prompt_hash("p", PromptKind::RecipientPolicy, "x"));
    EXPECT_EQ(a.size(), 64u);
}

TEST(ParseDecision, AnswerMarkerForms) {
    EXPECT_EQ(parse_decision("<Answer>: 1, 3, 7").goals, (GoalSet{1, 3, 7}));
    auto out = parse_decision("<Answer>: 18");
    EXPECT_TRUE(out.empty());
    EXPECT_FALSE(out.warnings.empty());
    EXPECT_TRUE(parse_decision("").empty());
}

TEST(ParseDecision, GoldenResponses) {
    auto cases = nlohmann::json::parse(slurp(fixture("decision_responses.json")));
    ASSERT_GE(cases.size(), 5u);
    for (const auto& c : cases) {
        GoalSet want;
        for (int g : c["expected"]) want.insert(g);
        EXPECT_EQ(parse_decision(c["response"].get<std::string>()).goals, want) << c["response"];
    }
}

TEST(ParseDecision, SubsetOfRangeAndIdempotentOnCanonicalForm) {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
        std::string text = "noise " + std::to_string(rng.index(40)) + "\n<Answer>: ";
        for (int k = 0; k < 5; ++k) text += std::to_string(rng.index(25)) + (rng.bernoulli(0.5) ? ", " : " ");
        auto d = parse_decision(text);
        for (int g : d.goals.goals()) {
            EXPECT_GE(g, 1);
            EXPECT_LE(g, 17);
        }
        EXPECT_EQ(parse_decision(format_answer(d.goals)).goals, d.goals);
        EXPECT_EQ(decision_from_json(decision_to_json(d)).goals, d.goals);
    }
}

TEST(FixtureStore, HitMissAndNoNetwork) {
    const auto path = temp_file("store_hit.jsonl");
    auto store = std::make_shared<FixtureStore>(path);
    const std::string prompt = build_country_prompt(PromptKind::DonorPolicy, "Japan");
    const auto hash = prompt_hash("synthA", PromptKind::DonorPolicy, prompt);
    store->append({hash, "synthA", "donor_policy", prompt, "stored summary", "2024-01-01T00:00:00Z"});

    std::atomic<int> calls{0};
    auto transport = std::make_shared<FunctionTransport>([&](const std::string&) {
        ++calls;
        return std::string("network");
    });
    LlmProvider provider(fixture_config(path), nullptr, transport);
    EXPECT_EQ(provider.query(PromptKind::DonorPolicy, prompt).response, "stored summary");
    try {
        provider.query(PromptKind::DonorPolicy, build_country_prompt(PromptKind::DonorPolicy, "Korea"));
        FAIL();
    } catch (const CacheMissError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::CacheMiss);
        EXPECT_EQ(e.hash().size(), 64u);
    }
    EXPECT_EQ(calls.load(), 0);
    EXPECT_EQ(provider.network_calls(), 0u);
}

TEST(FixtureStore, ConfigRequiresFixtureFileAndRejectsKeys) {
    ProviderConfig c;
    c.mode = ProviderMode::Fixture;
    EXPECT_THROW(c.validate(), Error);
    EXPECT_THROW(apply_json(c, nlohmann::json{{"api_key", "secret"}}), Error);
}

TEST(LiveProvider, RoundTripThenFixtureReplay) {
    MockServer server;
    setenv("SDGCLF_TEST_KEY", "test-key", 1);
    const auto path = temp_file("store_live.jsonl");
    const auto cfg = live_config(server, path);
    const std::string prompt = build_country_prompt(PromptKind::DonorPolicy, "Japan");
    std::string live_text;
    {
        LlmProvider live(cfg, nullptr, std::make_shared<HttpTransport>(cfg));
        auto r = live.query(PromptKind::DonorPolicy, prompt);
        live_text = r.response;
        EXPECT_FALSE(r.from_store);
        EXPECT_EQ(live_text, "reply to: " + prompt);
        EXPECT_EQ(server.last_auth_, "Bearer test-key");
        auto body = nlohmann::json::parse(server.last_body_);
        EXPECT_EQ(body["temperature"], 0.0);
        EXPECT_EQ(body["top_p"], 1.0);
        EXPECT_EQ(body["model"], "mock-model");
        // A second live query is answered from the store.
        EXPECT_TRUE(live.query(PromptKind::DonorPolicy, prompt).from_store);
        EXPECT_EQ(server.requests(), 1);
    }
    LlmProvider replay(fixture_config(path, "mock-model"), nullptr);
    EXPECT_EQ(replay.query(PromptKind::DonorPolicy, prompt).response, live_text);
}

TEST(LiveProvider, RetriesTransientFailuresAndStopsOnClientErrors) {
    MockServer server;
    const auto path = temp_file("store_retry.jsonl");
    const auto cfg = live_config(server, path);
    LlmProvider live(cfg, nullptr, std::make_shared<HttpTransport>(cfg));
    server.fail_next(2, 503);
    EXPECT_EQ(live.query(PromptKind::DonorPolicy, "p1").response, "reply to: p1");
    EXPECT_EQ(server.requests(), 3);

    server.fail_next(10, 429);
    try {
        live.query(PromptKind::DonorPolicy, "p2");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Provider);
    }
    EXPECT_EQ(server.requests(), 3 + 4);

    server.fail_next(1, 400);
    const int before = server.requests();
    EXPECT_THROW(live.query(PromptKind::DonorPolicy, "p3"), Error);
    EXPECT_EQ(server.requests(), before + 1);
}

TEST(LiveProvider, QueryManyKeepsOrderUnderConcurrency) {
    MockServer server;
    auto cfg = live_config(server, temp_file("store_many.jsonl"));
    cfg.max_in_flight = 3;
    LlmProvider live(cfg, nullptr, std::make_shared<HttpTransport>(cfg));
    std::vector<std::string> prompts;
    for (int i = 0; i < 12; ++i) prompts.push_back("prompt " + std::to_string(i));
    auto out = live.query_many(PromptKind::SdgDecision, prompts);
    ASSERT_EQ(out.size(), prompts.size());
    for (std::size_t i = 0; i < prompts.size(); ++i) EXPECT_EQ(out[i].response, "reply to: " + prompts[i]);
    FixtureStore reread(cfg.fixture_path);
    EXPECT_EQ(reread.size(), 12u);
}

TEST(FetchContext, BuildsBothSummariesWithProvenance) {
    const auto path = temp_file("store_ctx.jsonl");
    auto transport = std::make_shared<FunctionTransport>([](const std::string& p) {
        return p.find("Japan") != std::string::npos ? std::string("donor text") : std::string("recipient text words");
    });
    ProviderConfig cfg;
    cfg.provider_id = "fn";
    cfg.mode = ProviderMode::Live;
    cfg.fixture_path = path;
    LlmProvider provider(cfg, nullptr, transport);
    auto lookup = CountryLookup::load(sdgclf::testing::data_path("countries.json"));
    ProjectRecord rec;
    rec.id = "r1";
    rec.donor_code = 701;
    rec.recipient_code = 261;
    rec.year = 2019;
    auto ctx = fetch_country_context(rec, lookup, provider, 2);
    EXPECT_EQ(ctx.donor_summary, "donor text");
    EXPECT_EQ(ctx.income_group, IncomeGroup::LMICs);
    EXPECT_FALSE(ctx.donor_provenance.truncated);
    EXPECT_TRUE(ctx.recipient_provenance.truncated);
    EXPECT_EQ(ctx.donor_provenance.prompt_hash,
              prompt_hash("fn", PromptKind::DonorPolicy, build_country_prompt(PromptKind::DonorPolicy, "Japan")));
    EXPECT_EQ(context_from_json(context_to_json(ctx)), ctx);
}
