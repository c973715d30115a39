#pragma once
// Text encoder: word tokenizer + vocabulary, a small trainable transformer
// backbone, and average pooling. Descriptions, goal definitions and country
// summaries all go through the same encoder instance.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdgclf/autograd.hpp"
#include "sdgclf/corpus.hpp"
#include "sdgclf/error.hpp"
#include "sdgclf/rng.hpp"

namespace sdgclf {

enum class Backbone { TrainableSmall, PretrainedMultilingual };

inline const char* to_string(Backbone b) {
    return b == Backbone::TrainableSmall ? "trainable_small" : "pretrained_multilingual";
}
inline Backbone backbone_from_string(const std::string& s) {
    if (s == "trainable_small") return Backbone::TrainableSmall;
    if (s == "pretrained_multilingual") return Backbone::PretrainedMultilingual;
    fail(ErrorKind::Config, "unknown backbone '" + s + "'");
}

struct EncoderConfig {
    int d_h = 64;
    int max_tokens = 128;
    int num_blocks = 1;
    int ffn_hidden = 128;
    Backbone backbone = Backbone::TrainableSmall;
    bool lowercase = true;
    int min_count = 1;
    int max_vocab = 30000;
    // pretrained_multilingual: word-vector text file ("word v1 .. vd" per line)
    // whose rows initialise a frozen token table.
    std::string pretrained_vectors;

    void validate() const {
        require(d_h >= 8, ErrorKind::Config, "d_h must be >= 8");
        require(max_tokens >= 4, ErrorKind::Config, "max_tokens must be >= 4");
        require(num_blocks >= 0 && num_blocks <= 4, ErrorKind::Config, "num_blocks must be in 0..4");
        require(ffn_hidden >= 1, ErrorKind::Config, "ffn_hidden must be positive");
        require(min_count >= 1 && max_vocab >= 2, ErrorKind::Config, "bad vocabulary limits");
        if (backbone == Backbone::PretrainedMultilingual)
            require(!pretrained_vectors.empty(), ErrorKind::Config,
                    "pretrained_multilingual backbone needs encoder.pretrained_vectors");
    }
};

inline nlohmann::ordered_json to_json(const EncoderConfig& c) {
    return {{"d_h", c.d_h},
            {"max_tokens", c.max_tokens},
            {"num_blocks", c.num_blocks},
            {"ffn_hidden", c.ffn_hidden},
            {"backbone", to_string(c.backbone)},
            {"lowercase", c.lowercase},
            {"min_count", c.min_count},
            {"max_vocab", c.max_vocab},
            {"pretrained_vectors", c.pretrained_vectors}};
}

inline void apply_json(EncoderConfig& c, const nlohmann::json& j) {
    if (j.contains("d_h")) c.d_h = j.at("d_h").get<int>();
    if (j.contains("max_tokens")) c.max_tokens = j.at("max_tokens").get<int>();
    if (j.contains("num_blocks")) c.num_blocks = j.at("num_blocks").get<int>();
    if (j.contains("ffn_hidden")) c.ffn_hidden = j.at("ffn_hidden").get<int>();
    if (j.contains("backbone")) c.backbone = backbone_from_string(j.at("backbone").get<std::string>());
    if (j.contains("lowercase")) c.lowercase = j.at("lowercase").get<bool>();
    if (j.contains("min_count")) c.min_count = j.at("min_count").get<int>();
    if (j.contains("max_vocab")) c.max_vocab = j.at("max_vocab").get<int>();
    if (j.contains("pretrained_vectors")) c.pretrained_vectors = j.at("pretrained_vectors").get<std::string>();
}

// ---- tokenizer -----------------------------------------------------------------

// Splits on ASCII non-alphanumerics. Bytes >= 0x80 count as word characters
// so accented UTF-8 words stay whole.
inline std::vector<std::string> word_tokens(std::string_view text, bool lowercase) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (c >= 0x80 || std::isalnum(c)) {
            cur += static_cast<char>(lowercase && c < 0x80 ? std::tolower(c) : c);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    Vocabulary() : words_{"[PAD]", "[UNK]"} { rebuild_index(); }

    explicit Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
        require(words_.size() >= 2 && words_[0] == "[PAD]" && words_[1] == "[UNK]", ErrorKind::Config,
                "vocabulary must start with [PAD], [UNK]");
        rebuild_index();
    }

    // Frequency-ranked vocabulary (ties broken lexicographically).
    static Vocabulary build(const std::vector<std::string>& texts, bool lowercase, int min_count, int max_size) {
        std::map<std::string, int> counts;
        for (const auto& t : texts)
            for (auto& w : word_tokens(t, lowercase)) ++counts[w];
        std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        std::vector<std::string> words{"[PAD]", "[UNK]"};
        for (const auto& [w, n] : ranked) {
            if (n < min_count || static_cast<int>(words.size()) >= max_size) break;
            words.push_back(w);
        }
        return Vocabulary(std::move(words));
    }

    int id(const std::string& word) const {
        auto it = index_.find(word);
        return it == index_.end() ? kUnk : it->second;
    }
    int size() const { return static_cast<int>(words_.size()); }
    const std::vector<std::string>& words() const { return words_; }

private:
    void rebuild_index() {
        index_.clear();
        for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<int>(i));
    }

    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

// ---- representations ------------------------------------------------------------

struct TokenEmbeddingSet {
    ad::Var embeddings;          // n x d_h
    std::vector<bool> mask;      // true = real token
    std::vector<int> token_ids;  // n

    Eigen::Index size() const { return embeddings.rows(); }
    int valid_count() const { return static_cast<int>(std::count(mask.begin(), mask.end(), true)); }
};

enum class RepresentationSource { Description, Goal, DonorSummary, RecipientSummary, PositiveSample, Derived };

struct PooledRepresentation {
    ad::Var vector; // 1 x d_h
    RepresentationSource source = RepresentationSource::Derived;

    Eigen::Index width() const { return vector.cols(); }
};

// Mean of the unmasked rows.
inline PooledRepresentation pool_average(const TokenEmbeddingSet& e,
                                         RepresentationSource source = RepresentationSource::Description) {
    require(e.valid_count() > 0, ErrorKind::EmptyInput, "empty pool: every token is masked");
    return {ad::mean_rows_masked(e.embeddings, e.mask), source};
}

// ---- encoder ------------------------------------------------------------------------

// Token + position embeddings followed by num_blocks post-norm transformer
// blocks (single-head self-attention, ReLU feed-forward).
class Encoder {
public:
    Encoder() = default;

    Encoder(EncoderConfig config, Vocabulary vocab, Rng& rng) : config_(std::move(config)), vocab_(std::move(vocab)) {
        config_.validate();
        init(rng);
    }

    // Vocabulary and frozen token table from a word-vector file.
    static Encoder from_pretrained_vectors(EncoderConfig config, Rng& rng) {
        config.validate();
        std::ifstream in(config.pretrained_vectors);
        require(in.good(), ErrorKind::Io, "cannot read " + config.pretrained_vectors);
        std::vector<std::string> words{"[PAD]", "[UNK]"};
        std::vector<std::vector<double>> rows;
        std::string line;
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            std::string w;
            ls >> w;
            std::vector<double> v;
            double x;
            while (ls >> x) v.push_back(x);
            if (v.size() == 1 && rows.empty()) continue; // word2vec "count dim" header
            if (w.empty() || v.empty()) continue;
            require(static_cast<int>(v.size()) == config.d_h, ErrorKind::Config,
                    "pretrained vector width " + std::to_string(v.size()) + " != d_h " + std::to_string(config.d_h));
            if (config.lowercase)
                for (auto& ch : w)
                    if (static_cast<unsigned char>(ch) < 0x80) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            words.push_back(std::move(w));
            rows.push_back(std::move(v));
        }
        Encoder enc(config, Vocabulary(std::move(words)), rng);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (int k = 0; k < config.d_h; ++k)
                enc.token_table_.mutable_value()(static_cast<Eigen::Index>(i) + 2, k) = rows[i][static_cast<std::size_t>(k)];
        return enc;
    }

    const EncoderConfig& config() const { return config_; }
    const Vocabulary& vocabulary() const { return vocab_; }
    int d_h() const { return config_.d_h; }

    // Word ids, truncated to max_tokens; no special tokens are added.
    std::vector<int> tokenize(std::string_view text) const {
        std::vector<int> ids;
        for (const auto& w : word_tokens(text, config_.lowercase)) {
            if (static_cast<int>(ids.size()) >= config_.max_tokens) break;
            ids.push_back(vocab_.id(w));
        }
        return ids;
    }

    // Number of words before truncation.
    std::size_t word_count(std::string_view text) const { return word_tokens(text, config_.lowercase).size(); }

    TokenEmbeddingSet embed_tokens(std::string_view text) const {
        auto ids = tokenize(text);
        require(!ids.empty(), ErrorKind::EmptyInput, "text has no tokens");
        return encode_ids(ids);
    }

    // Runs the backbone on an id sequence. Padding ids are masked out of
    // self-attention keys and out of the returned mask.
    TokenEmbeddingSet encode_ids(const std::vector<int>& ids) const {
        require(!ids.empty(), ErrorKind::EmptyInput, "empty id sequence");
        require(static_cast<int>(ids.size()) <= config_.max_tokens, ErrorKind::Shape, "sequence longer than max_tokens");
        const auto n = static_cast<Eigen::Index>(ids.size());
        std::vector<int> positions(ids.size());
        for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);
        std::vector<bool> mask(ids.size());
        ad::Matrix key_bias = ad::Matrix::Zero(n, n);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            mask[i] = ids[i] != Vocabulary::kPad;
            if (!mask[i]) key_bias.col(static_cast<Eigen::Index>(i)).setConstant(-1e9);
        }
        ad::Var x = ad::add(ad::gather_rows(token_table_, ids), ad::gather_rows(position_table_, positions));
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config_.d_h));
        for (const auto& b : blocks_) {
            ad::Var q = ad::matmul(x, b.wq), k = ad::matmul(x, b.wk), v = ad::matmul(x, b.wv);
            ad::Var scores = ad::add_const(ad::scale(ad::matmul_nt(q, k), inv_sqrt_d), key_bias);
            ad::Var attn = ad::matmul(ad::matmul(ad::softmax_rows(scores), v), b.wo);
            x = affine(ad::layer_norm_rows(ad::add(x, attn)), b.ln1_gain, b.ln1_bias);
            ad::Var h = ad::relu(ad::add_row(ad::matmul(x, b.w1), b.b1));
            ad::Var ff = ad::add_row(ad::matmul(h, b.w2), b.b2);
            x = affine(ad::layer_norm_rows(ad::add(x, ff)), b.ln2_gain, b.ln2_bias);
        }
        return {x, std::move(mask), ids};
    }

    ad::ParameterList parameters() const {
        ad::ParameterList out;
        out.push_back({"encoder.token_table", token_table_, config_.backbone == Backbone::TrainableSmall});
        out.push_back({"encoder.position_table", position_table_});
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const auto& b = blocks_[i];
            const std::string p = "encoder.block" + std::to_string(i) + ".";
            for (auto [name, var] : {std::pair{"wq", b.wq}, {"wk", b.wk}, {"wv", b.wv}, {"wo", b.wo},
                                     {"ln1_gain", b.ln1_gain}, {"ln1_bias", b.ln1_bias}, {"w1", b.w1},
                                     {"b1", b.b1}, {"w2", b.w2}, {"b2", b.b2}, {"ln2_gain", b.ln2_gain},
                                     {"ln2_bias", b.ln2_bias}})
                out.push_back({p + name, var});
        }
        return out;
    }

private:
    struct Block {
        ad::Var wq, wk, wv, wo, ln1_gain, ln1_bias, w1, b1, w2, b2, ln2_gain, ln2_bias;
    };

    static ad::Var affine(const ad::Var& x, const ad::Var& gain, const ad::Var& bias) {
        ad::Matrix ones = ad::Matrix::Ones(x.rows(), 1);
        return ad::add_row(ad::cmul(x, ad::matmul(ad::Var::constant(ones), gain)), bias);
    }

    static ad::Var random_matrix(Rng& rng, int rows, int cols, double stddev) {
        ad::Matrix m(rows, cols);
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.normal(0.0, stddev);
        return ad::Var::parameter(std::move(m));
    }

    void init(Rng& rng) {
        const int d = config_.d_h, f = config_.ffn_hidden;
        token_table_ = random_matrix(rng, vocab_.size(), d, 1.0);
        token_table_.mutable_value().row(Vocabulary::kPad).setZero();
        position_table_ = random_matrix(rng, config_.max_tokens, d, 0.1);
        const double sd = 1.0 / std::sqrt(static_cast<double>(d));
        blocks_.clear();
        for (int i = 0; i < config_.num_blocks; ++i) {
            Block b;
            b.wq = random_matrix(rng, d, d, sd);
            b.wk = random_matrix(rng, d, d, sd);
            b.wv = random_matrix(rng, d, d, sd);
            b.wo = random_matrix(rng, d, d, sd);
            b.ln1_gain = ad::Var::parameter(ad::Matrix::Ones(1, d));
            b.ln1_bias = ad::Var::parameter(ad::Matrix::Zero(1, d));
            b.w1 = random_matrix(rng, d, f, sd);
            b.b1 = ad::Var::parameter(ad::Matrix::Zero(1, f));
            b.w2 = random_matrix(rng, f, d, 1.0 / std::sqrt(static_cast<double>(f)));
            b.b2 = ad::Var::parameter(ad::Matrix::Zero(1, d));
            b.ln2_gain = ad::Var::parameter(ad::Matrix::Ones(1, d));
            b.ln2_bias = ad::Var::parameter(ad::Matrix::Zero(1, d));
            blocks_.push_back(std::move(b));
        }
    }

    EncoderConfig config_;
    Vocabulary vocab_;
    ad::Var token_table_;
    ad::Var position_table_;
    std::vector<Block> blocks_;
};

// Title followed by every target, period separated.
inline std::string goal_text(const GoalDefinition& goal) {
    std::string text = goal.title;
    for (const auto& t : goal.targets) {
        if (!text.empty() && text.back() != '.') text += '.';
        text += ' ';
        text += t;
    }
    return text;
}

inline PooledRepresentation embed_goal(const GoalDefinition& goal, const Encoder& encoder) {
    return pool_average(encoder.embed_tokens(goal_text(goal)), RepresentationSource::Goal);
}

} // namespace sdgclf
