#include "test_support.hpp"

#include <fstream>

using namespace sdgclf;
using sdgclf::testing::check_gradients;
using sdgclf::testing::random_matrix;

namespace {

Encoder small_encoder(int d, int blocks, std::uint64_t seed = 1) {
    EncoderConfig cfg;
    cfg.d_h = d;
    cfg.num_blocks = blocks;
    cfg.ffn_hidden = d;
    cfg.max_tokens = 16;
    Rng rng(seed);
    auto vocab = Vocabulary::build({"water sanitation rural health", "school teacher water energy"}, true, 1, 100);
    return Encoder(cfg, vocab, rng);
}

const ad::Var& param(const ad::ParameterList& ps, const std::string& name) {
    for (const auto& p : ps)
        if (p.name == name) return p.var;
    throw std::runtime_error("no parameter " + name);
}

} // namespace

TEST(Tokenizer, SplitsLowercasesAndKeepsUtf8) {
    EXPECT_EQ(word_tokens("Hello, World! d'accès", true), (std::vector<std::string>{"hello", "world", "d", "accès"}));
    EXPECT_EQ(word_tokens("ABC", false), std::vector<std::string>{"ABC"});
}

TEST(Vocabulary, FrequencyThenLexicographicOrder) {
    auto v = Vocabulary::build({"b a b c", "c b"}, true, 1, 100);
    EXPECT_EQ(v.words(), (std::vector<std::string>{"[PAD]", "[UNK]", "b", "c", "a"}));
    EXPECT_EQ(v.id("zzz"), Vocabulary::kUnk);
    auto capped = Vocabulary::build({"b a b c", "c b"}, true, 2, 100);
    EXPECT_EQ(capped.size(), 4);
}

TEST(EmbedTokens, ShapeContract) {
    auto enc = small_encoder(8, 1);
    auto e = enc.embed_tokens("water");
    EXPECT_EQ(e.embeddings.rows(), 1);
    EXPECT_EQ(e.embeddings.cols(), 8);
    EXPECT_TRUE(e.embeddings.value().allFinite());
    EXPECT_THROW(enc.embed_tokens("  ,;  "), Error);
}

TEST(EmbedTokens, TruncatesToMaxTokens) {
    auto enc = small_encoder(8, 1);
    std::string text;
    for (int i = 0; i < 40; ++i) text += "water ";
    EXPECT_EQ(enc.embed_tokens(text).embeddings.rows(), 16);
    EXPECT_EQ(enc.word_count(text), 40u);
}

TEST(EmbedTokens, DeterministicForFixedWeights) {
    auto enc = small_encoder(8, 2);
    ad::NoGradGuard guard;
    EXPECT_EQ(enc.embed_tokens("rural water health").embeddings.value(),
              enc.embed_tokens("rural water health").embeddings.value());
}

TEST(EmbedTokens, MatchesIndependentLookupOracleWithoutBlocks) {
    // With zero blocks the backbone is token row + position row. The oracle
    // re-tokenises with its own splitter and indexes the raw tables.
    auto enc = small_encoder(8, 0);
    const auto ps = enc.parameters();
    const ad::Matrix& tok = param(ps, "encoder.token_table").value();
    const ad::Matrix& pos = param(ps, "encoder.position_table").value();
    const std::vector<std::string> words{"rural", "water", "unknownword", "school"};
    auto e = enc.embed_tokens("Rural water UNKNOWNWORD school");
    ASSERT_EQ(e.embeddings.rows(), 4);
    for (int i = 0; i < 4; ++i) {
        int id = 1;
        const auto& vocab = enc.vocabulary().words();
        for (std::size_t k = 0; k < vocab.size(); ++k)
            if (vocab[k] == words[static_cast<std::size_t>(i)]) id = static_cast<int>(k);
        for (int c = 0; c < 8; ++c) EXPECT_NEAR(e.embeddings.value()(i, c), tok(id, c) + pos(i, c), 1e-12);
    }
}

TEST(EmbedTokens, OneTokenDifferenceChangesSomeRow) {
    auto enc = small_encoder(8, 1);
    auto a = enc.embed_tokens("rural water health").embeddings.value();
    auto b = enc.embed_tokens("rural energy health").embeddings.value();
    ASSERT_EQ(a.rows(), b.rows());
    double max_row_diff = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) max_row_diff = std::max(max_row_diff, (a.row(i) - b.row(i)).norm());
    EXPECT_GT(max_row_diff, 1e-6);
}

TEST(EncodeIds, PaddingRowsAreMasked) {
    auto enc = small_encoder(8, 1);
    auto e = enc.encode_ids({2, 0, 3, 0});
    EXPECT_EQ(e.mask, (std::vector<bool>{true, false, true, false}));
    EXPECT_EQ(e.valid_count(), 2);
    // Real rows must not depend on what sits at padded positions.
    auto f = enc.encode_ids({2, 0, 3, 0});
    EXPECT_EQ(e.embeddings.value().row(0), f.embeddings.value().row(0));
}

TEST(PoolAverage, ClosedFormCases) {
    auto two = pool_average(sdgclf::testing::token_set((ad::Matrix(2, 2) << 1, 1, 3, 3).finished()));
    EXPECT_DOUBLE_EQ(two.vector.value()(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(two.vector.value()(0, 1), 2.0);
    ad::Matrix v(1, 3);
    v << 0.5, -1, 4;
    EXPECT_EQ(pool_average(sdgclf::testing::token_set(v)).vector.value(), v);
    EXPECT_THROW(pool_average(sdgclf::testing::token_set(ad::Matrix::Ones(2, 3), {false, false})), Error);
}

TEST(PoolAverage, MatchesBruteForceMeanAndIgnoresRowOrder) {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        ad::Matrix e = random_matrix(rng, 5, 16);
        std::vector<bool> mask(5);
        for (auto&& m : mask) m = rng.bernoulli(0.7);
        mask[rng.index(5)] = true;
        auto got = pool_average(sdgclf::testing::token_set(e, mask)).vector.value();
        for (int c = 0; c < 16; ++c) {
            double s = 0;
            int n = 0;
            for (int r = 0; r < 5; ++r)
                if (mask[static_cast<std::size_t>(r)]) {
                    s += e(r, c);
                    ++n;
                }
            EXPECT_NEAR(got(0, c), s / n, 1e-12);
        }
        // Reversing the rows together with the mask leaves the mean unchanged.
        ad::Matrix rev = e.colwise().reverse();
        std::vector<bool> rmask(mask.rbegin(), mask.rend());
        EXPECT_LT((pool_average(sdgclf::testing::token_set(rev, rmask)).vector.value() - got).norm(), 1e-12);
    }
}

TEST(EmbedGoal, DistinctGoalsGiveDistinctFiniteVectors) {
    const auto goals = load_goal_definitions(sdgclf::testing::data_path("sdg_goals.json"));
    std::vector<std::string> texts;
    for (const auto& g : goals) texts.push_back(goal_text(g));
    EncoderConfig cfg;
    cfg.d_h = 16;
    Rng rng(5);
    Encoder enc(cfg, Vocabulary::build(texts, true, 1, 5000), rng);
    std::vector<ad::Matrix> reps;
    for (const auto& g : goals) {
        reps.push_back(embed_goal(g, enc).vector.value());
        EXPECT_TRUE(reps.back().allFinite());
        EXPECT_EQ(reps.back().cols(), 16);
    }
    for (std::size_t i = 0; i < reps.size(); ++i)
        for (std::size_t j = i + 1; j < reps.size(); ++j) EXPECT_GT((reps[i] - reps[j]).norm(), 1e-9) << i << "," << j;
}

TEST(EmbedGoal, EmptyTargetsEmbedsTitleAlone) {
    auto enc = small_encoder(8, 1);
    GoalDefinition g{6, "rural water", {}};
    EXPECT_EQ(goal_text(g), "rural water");
    EXPECT_EQ(embed_goal(g, enc).vector.value(), pool_average(enc.embed_tokens("rural water")).vector.value());
    GoalDefinition h{6, "Title", {"first target", "second target."}};
    EXPECT_EQ(goal_text(h), "Title. first target. second target.");
}

TEST(EncoderGradients, PooledOutputMatchesFiniteDifferences) {
    auto enc = small_encoder(8, 1, 3);
    Rng rng(4);
    const ad::Matrix w = random_matrix(rng, 1, 8);
    auto params = enc.parameters();
    auto rep = check_gradients(
        [&] {
            auto e = enc.encode_ids({2, 3, 0, 4, 2});
            return ad::sum(ad::cmul(pool_average(e).vector, ad::Var::constant(w)));
        },
        params);
    EXPECT_LT(rep.worst_error, 1e-4) << rep.worst_name;
    EXPECT_EQ(rep.checked, params.size());
}

TEST(EncoderConfig, ValidationAndJsonRoundTrip) {
    EncoderConfig c;
    c.d_h = 4;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.max_tokens = 3;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.d_h = 32;
    c.backbone = Backbone::TrainableSmall;
    EncoderConfig back;
    apply_json(back, to_json(c));
    EXPECT_EQ(back.d_h, 32);
    EXPECT_EQ(to_json(back), to_json(c));
}

TEST(PretrainedBackbone, LoadsFrozenVectors) {
    const std::string path = ::testing::TempDir() + "vectors.txt";
    {
        std::ofstream out(path);
        out << "2 8\n";
        out << "Water 1 0 0 0 0 0 0 0\n";
        out << "school 0 1 0 0 0 0 0 0\n";
    }
    EncoderConfig cfg;
    cfg.d_h = 8;
    cfg.num_blocks = 0;
    cfg.backbone = Backbone::PretrainedMultilingual;
    cfg.pretrained_vectors = path;
    Rng rng(1);
    auto enc = Encoder::from_pretrained_vectors(cfg, rng);
    EXPECT_EQ(enc.vocabulary().size(), 4);
    const auto ps = enc.parameters();
    EXPECT_FALSE(ps.front().trainable);
    EXPECT_DOUBLE_EQ(ps.front().var.value()(enc.vocabulary().id("water"), 0), 1.0);
}
