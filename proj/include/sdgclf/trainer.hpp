#pragma once
// Model state, the composed training objective, the optimisation loop and
// inference.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdgclf/attention.hpp"
#include "sdgclf/autograd.hpp"
#include "sdgclf/corpus.hpp"
#include "sdgclf/country.hpp"
#include "sdgclf/decision.hpp"
#include "sdgclf/encoder.hpp"
#include "sdgclf/error.hpp"
#include "sdgclf/losses.hpp"
#include "sdgclf/rng.hpp"
#include "sdgclf/semantics.hpp"

namespace sdgclf {

struct TrainConfig {
    double learning_rate = 1e-05;
    int epochs = 100;
    double lambda_1 = 0.1;
    double lambda_2 = 0.1;
    double tau = 0.01;
    double gumbel_temperature = 1.0;
    double contrastive_temperature = 1.0;
    int batch_size = 32;
    std::uint64_t seed = 42;
    double prediction_threshold = 0.5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    // Module switches (ablations). Semantics is switched off by lambda_1 = 0.
    bool use_country = true;
    bool use_decision = true;
    bool weighted_sum_pool = false;
    bool decision_layer_norm = true;
    bool freeze_goal_embeddings = false;
    int classifier_hidden_layers = 1;
    int checkpoint_every = 0; // epochs; 0 = final checkpoint only
    EncoderConfig encoder;

    void validate() const {
        require(learning_rate > 0 && std::isfinite(learning_rate), ErrorKind::Config, "learning_rate must be > 0");
        require(epochs >= 0, ErrorKind::Config, "epochs must be >= 0");
        require(lambda_1 >= 0 && lambda_2 >= 0, ErrorKind::Config, "lambdas must be >= 0");
        require(tau >= 0 && tau <= 1, ErrorKind::Config, "tau must lie in [0, 1]");
        require(gumbel_temperature > 0 && contrastive_temperature > 0, ErrorKind::Config, "temperatures must be > 0");
        require(batch_size >= 1, ErrorKind::Config, "batch_size must be >= 1");
        require(prediction_threshold > 0 && prediction_threshold < 1, ErrorKind::Config,
                "prediction_threshold must lie in (0, 1)");
        require(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1 && adam_epsilon > 0,
                ErrorKind::Config, "bad Adam settings");
        require(classifier_hidden_layers >= 0 && checkpoint_every >= 0, ErrorKind::Config, "bad head/checkpoint settings");
        encoder.validate();
    }
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"epochs", c.epochs},
            {"lambda_1", c.lambda_1},
            {"lambda_2", c.lambda_2},
            {"tau", c.tau},
            {"gumbel_temperature", c.gumbel_temperature},
            {"contrastive_temperature", c.contrastive_temperature},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"prediction_threshold", c.prediction_threshold},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_epsilon", c.adam_epsilon},
            {"use_country", c.use_country},
            {"use_decision", c.use_decision},
            {"weighted_sum_pool", c.weighted_sum_pool},
            {"decision_layer_norm", c.decision_layer_norm},
            {"freeze_goal_embeddings", c.freeze_goal_embeddings},
            {"classifier_hidden_layers", c.classifier_hidden_layers},
            {"checkpoint_every", c.checkpoint_every},
            {"encoder", to_json(c.encoder)}};
}

inline void apply_json(TrainConfig& c, const nlohmann::json& j) {
    static const std::vector<std::string> known{
        "learning_rate", "epochs",          "lambda_1",          "lambda_2",          "tau",
        "gumbel_temperature", "contrastive_temperature", "batch_size", "seed", "prediction_threshold",
        "adam_beta1",    "adam_beta2",      "adam_epsilon",      "use_country",       "use_decision",
        "weighted_sum_pool", "decision_layer_norm", "freeze_goal_embeddings", "classifier_hidden_layers",
        "checkpoint_every", "encoder"};
    for (const auto& [k, v] : j.items())
        require(std::find(known.begin(), known.end(), k) != known.end(), ErrorKind::Config, "unknown train setting '" + k + "'");
    auto get = [&](const char* k, auto& field) {
        if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
    };
    get("learning_rate", c.learning_rate);
    get("epochs", c.epochs);
    get("lambda_1", c.lambda_1);
    get("lambda_2", c.lambda_2);
    get("tau", c.tau);
    get("gumbel_temperature", c.gumbel_temperature);
    get("contrastive_temperature", c.contrastive_temperature);
    get("batch_size", c.batch_size);
    get("seed", c.seed);
    get("prediction_threshold", c.prediction_threshold);
    get("adam_beta1", c.adam_beta1);
    get("adam_beta2", c.adam_beta2);
    get("adam_epsilon", c.adam_epsilon);
    get("use_country", c.use_country);
    get("use_decision", c.use_decision);
    get("weighted_sum_pool", c.weighted_sum_pool);
    get("decision_layer_norm", c.decision_layer_norm);
    get("freeze_goal_embeddings", c.freeze_goal_embeddings);
    get("classifier_hidden_layers", c.classifier_hidden_layers);
    get("checkpoint_every", c.checkpoint_every);
    if (j.contains("encoder")) apply_json(c.encoder, j.at("encoder"));
}

// ---- model state ------------------------------------------------------------------

struct AdamState {
    std::map<std::string, std::pair<ad::Matrix, ad::Matrix>> moments; // name -> (m, v)
    long step = 0;
};

struct ModelState {
    Encoder encoder;
    AttentionHead semantics_head;
    AttentionHead country_head;
    AttentionHead decision_head;
    ProjectionHead s_g;
    ProjectionHead s_c;
    ProjectionHead s_l;
    Mlp f_c;
    Mlp f_l;
    Mlp f_u;
    Mlp f_cls;
    AdamState optimizer;
    int epoch = 0;

    // The pretrained backbone takes its vocabulary from the vectors file.
    static ModelState create(const TrainConfig& config, Vocabulary vocab, Rng& rng) {
        config.validate();
        if (config.encoder.backbone == Backbone::PretrainedMultilingual)
            return with_encoder(config, Encoder::from_pretrained_vectors(config.encoder, rng), rng);
        return with_encoder(config, Encoder(config.encoder, std::move(vocab), rng), rng);
    }

    static ModelState with_encoder(const TrainConfig& config, Encoder encoder, Rng& rng) {
        ModelState s;
        s.encoder = std::move(encoder);
        const int d = config.encoder.d_h;
        const std::vector<int> hidden(static_cast<std::size_t>(config.classifier_hidden_layers), d);
        s.semantics_head = AttentionHead::random(HeadOwner::Semantics, d, rng);
        s.country_head = AttentionHead::random(HeadOwner::Country, d, rng);
        s.decision_head = AttentionHead::random(HeadOwner::Decision, d, rng);
        s.s_g = ProjectionHead::random(ProjectionOwner::SG, d, rng);
        s.s_c = ProjectionHead::random(ProjectionOwner::SC, d, rng);
        s.s_l = ProjectionHead::random(ProjectionOwner::SL, d, rng);
        s.f_c = Mlp::random(d, hidden, kNumGoals, rng);
        s.f_l = Mlp::random(d, hidden, kNumGoals, rng);
        s.f_u = Mlp::random(d, hidden, 1, rng);
        s.f_cls = Mlp::random(d, hidden, kNumGoals, rng);
        return s;
    }

    int d_h() const { return encoder.d_h(); }

    ad::ParameterList parameters() const {
        ad::ParameterList out = encoder.parameters();
        semantics_head.collect(out, "attention.semantics");
        country_head.collect(out, "attention.country");
        decision_head.collect(out, "attention.decision");
        s_g.mlp.collect(out, "projection.S_G");
        s_c.mlp.collect(out, "projection.S_C");
        s_l.mlp.collect(out, "projection.S_L");
        f_c.collect(out, "classifier.f_c");
        f_l.collect(out, "classifier.f_l");
        f_u.collect(out, "classifier.f_u");
        f_cls.collect(out, "classifier.f_cls");
        return out;
    }
};

// ---- losses ---------------------------------------------------------------------

// L_total = L_CE + lambda_1 L_G + lambda_2 (L_C + L_D + L_U).
inline double total_loss(double l_ce, double l_g, double l_c, double l_d, double l_u, double lambda_1, double lambda_2) {
    for (double v : {l_ce, l_g, l_c, l_d, l_u})
        require(std::isfinite(v) && v >= 0, ErrorKind::Numeric, "loss component is not a finite nonnegative number");
    require(lambda_1 >= 0 && lambda_2 >= 0, ErrorKind::Parameter, "lambdas must be >= 0");
    return l_ce + lambda_1 * l_g + lambda_2 * (l_c + l_d + l_u);
}

inline ad::Var classification_loss(const ad::Var& fused, const GoalSet& y, const Mlp& f_cls) {
    require(f_cls.out_width() == kNumGoals, ErrorKind::Shape, "f_cls must produce 17 logits");
    return multilabel_bce(f_cls.forward(fused), y);
}

// One training/evaluation example: the record with its resolved context.
struct Example {
    ProjectRecord record;
    CountryContext context;
    DecisionVector decision;
};

struct BatchLosses {
    ad::Var l_ce, l_g, l_c, l_d, l_u, total;
    bool has_l_g = false;
    int contrastive_anchors = 0; // anchors with a non-empty positive sample

    static double value(const ad::Var& v) { return v.defined() ? v.scalar() : 0.0; }
};

namespace detail {

inline ad::Var zero_scalar() { return ad::Var::constant(ad::Matrix::Zero(1, 1)); }

inline ad::Var mean_of(const std::vector<ad::Var>& terms) {
    if (terms.empty()) return zero_scalar();
    ad::Var acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = ad::add(acc, terms[i]);
    return ad::scale(acc, 1.0 / static_cast<double>(terms.size()));
}

// Pooled summary encodings, shared by every record in a batch.
class SummaryCache {
public:
    explicit SummaryCache(const Encoder& enc) : enc_(enc) {}
    const PooledRepresentation& get(const std::string& text, RepresentationSource source) {
        auto it = cache_.find(text);
        if (it != cache_.end()) return it->second;
        return cache_.emplace(text, pool_average(enc_.embed_tokens(text), source)).first->second;
    }

private:
    const Encoder& enc_;
    std::unordered_map<std::string, PooledRepresentation> cache_;
};

} // namespace detail

inline std::vector<PooledRepresentation> goal_representations(const ModelState& state,
                                                              const std::vector<GoalDefinition>& goals, bool frozen) {
    require(goals.size() == static_cast<std::size_t>(kNumGoals), ErrorKind::DefinitionSet, "need 17 goal definitions");
    std::optional<ad::NoGradGuard> guard;
    if (frozen) guard.emplace();
    std::vector<PooledRepresentation> out;
    out.reserve(goals.size());
    for (const auto& g : goals) out.push_back(embed_goal(g, state.encoder));
    return out;
}

struct ForwardResult {
    ad::Var fused;
    ad::Var alpha;
    ad::Var logits;
};

// Deterministic part of the forward pass for one record: guided and
// decision representations, calibration and the f_cls logits. Auxiliary
// losses are appended when the outputs are given.
inline ForwardResult forward_record(const ModelState& state, const TrainConfig& config, const TokenEmbeddingSet& e,
                                    const Example& ex, std::span<const PooledRepresentation> goals,
                                    detail::SummaryCache& summaries, std::vector<ad::Var>* l_c = nullptr,
                                    std::vector<ad::Var>* l_d = nullptr, std::vector<ad::Var>* l_u = nullptr) {
    PooledRepresentation guided;
    if (config.use_country) {
        const auto& hd = summaries.get(ex.context.donor_summary, RepresentationSource::DonorSummary);
        const auto& hr = summaries.get(ex.context.recipient_summary, RepresentationSource::RecipientSummary);
        guided = country_guided_representation(e, country_representation(hd, hr, state.s_c), state.country_head,
                                               config.weighted_sum_pool);
        if (l_c && ex.record.sdg_labels) l_c->push_back(country_loss(guided, *ex.record.sdg_labels, state.f_c));
    } else {
        guided = pool_average(e);
    }
    std::optional<PooledRepresentation> bar;
    if (config.use_decision && !ex.decision.empty()) {
        auto hl = decision_representation(ex.decision, goals, state.s_l, config.decision_layer_norm);
        bar = decision_guided_representation(e, *hl, state.decision_head, config.weighted_sum_pool);
        if (l_d && ex.record.sdg_labels) {
            auto dl = decision_losses(*bar, *ex.record.sdg_labels, usefulness_label(*ex.record.sdg_labels, ex.decision),
                                      state.f_l, state.f_u);
            l_d->push_back(dl.decision);
            l_u->push_back(dl.usefulness);
        }
    }
    auto cal = calibrate(guided, bar, state.f_u);
    return {cal.fused, cal.alpha, state.f_cls.forward(cal.fused)};
}

// All loss terms for one batch. Gumbel noise is drawn from rng only when
// lambda_1 > 0, so disabling semantics leaves the random stream untouched.
inline BatchLosses batch_losses(const ModelState& state, const TrainConfig& config, std::span<const Example> batch,
                                const std::vector<GoalDefinition>& goal_defs, Rng& rng) {
    require(!batch.empty(), ErrorKind::Batch, "empty batch");
    const auto goals = goal_representations(state, goal_defs, config.freeze_goal_embeddings);
    detail::SummaryCache summaries(state.encoder);
    std::vector<ad::Var> ce, lc, ld, lu;
    std::vector<PooledRepresentation> anchors, positives;
    const bool semantics = config.lambda_1 > 0;
    for (const auto& ex : batch) {
        require(ex.record.sdg_labels && !ex.record.sdg_labels->empty(), ErrorKind::Label,
                "training record " + ex.record.id + " has no labels");
        const GoalSet& y = *ex.record.sdg_labels;
        TokenEmbeddingSet e;
        try {
            e = state.encoder.embed_tokens(ex.record.description);
        } catch (const Error& err) {
            fail(ErrorKind::EmptyInput, "record " + ex.record.id + ": " + err.what());
        }
        auto fr = forward_record(state, config, e, ex, goals, summaries, &lc, &ld, &lu);
        ce.push_back(multilabel_bce(fr.logits, y));
        if (semantics) {
            ad::Var a = goal_token_attention(e, goals, state.semantics_head);
            auto imp = gumbel_importance(a, y, config.gumbel_temperature, rng);
            auto pos = build_positive_sample(e.token_ids, imp.importance, config.tau, ex.record.id);
            // A positive with no surviving token carries no signal; the anchor sits out.
            if (pos.kept_count() == 0) continue;
            anchors.push_back(pool_average(e));
            positives.push_back(pool_average(state.encoder.encode_ids(pos.token_ids), RepresentationSource::PositiveSample));
        }
    }
    BatchLosses out;
    out.l_ce = detail::mean_of(ce);
    out.l_c = detail::mean_of(lc);
    out.l_d = detail::mean_of(ld);
    out.l_u = detail::mean_of(lu);
    out.has_l_g = semantics;
    out.contrastive_anchors = static_cast<int>(anchors.size());
    out.l_g = semantics && anchors.size() >= 2
                  ? contrastive_loss(anchors, positives, state.s_g, config.contrastive_temperature)
                  : detail::zero_scalar();
    ad::Var aux = ad::add(ad::add(out.l_c, out.l_d), out.l_u);
    out.total = ad::add(out.l_ce, ad::add(ad::scale(out.l_g, config.lambda_1), ad::scale(aux, config.lambda_2)));
    // Numeric guard on the scalar composition, mirroring total_loss().
    total_loss(out.l_ce.scalar(), out.l_g.scalar(), out.l_c.scalar(), out.l_d.scalar(), out.l_u.scalar(), config.lambda_1,
               config.lambda_2);
    return out;
}

// ---- optimiser ----------------------------------------------------------------------

inline void adam_step(ad::ParameterList& params, AdamState& state, const TrainConfig& c) {
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.adam_beta1, t), bc2 = 1.0 - std::pow(c.adam_beta2, t);
    for (auto& p : params) {
        if (!p.trainable || p.var.grad().size() == 0) continue;
        const ad::Matrix& g = p.var.grad();
        auto [it, fresh] = state.moments.try_emplace(p.name, ad::Matrix::Zero(g.rows(), g.cols()),
                                                     ad::Matrix::Zero(g.rows(), g.cols()));
        auto& [m, v] = it->second;
        m = c.adam_beta1 * m + (1 - c.adam_beta1) * g;
        v = c.adam_beta2 * v + (1 - c.adam_beta2) * g.cwiseProduct(g);
        p.var.mutable_value().array() -=
            c.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.adam_epsilon);
    }
}

// ---- training loop ------------------------------------------------------------------

struct EpochLog {
    int epoch = 0;
    double l_ce = 0;
    std::optional<double> l_g; // absent when the semantics module is off
    double l_c = 0;
    double l_d = 0;
    double l_u = 0;
    double l_total = 0;
};

inline nlohmann::ordered_json to_json(const EpochLog& e) {
    nlohmann::ordered_json j{{"epoch", e.epoch}, {"L_CE", e.l_ce}};
    if (e.l_g) j["L_G"] = *e.l_g;
    j["L_C"] = e.l_c;
    j["L_D"] = e.l_d;
    j["L_U"] = e.l_u;
    j["L_total"] = e.l_total;
    return j;
}

struct TrainOptions {
    std::string checkpoint_dir;   // empty: no checkpoints
    std::string log_path;         // JSONL, one line per epoch; empty: none
    // Called after every checkpoint write with its path.
    std::function<void(const std::string&)> on_checkpoint;
    std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
    ModelState state;
    std::vector<EpochLog> log;
    std::string last_checkpoint;
};

using CheckpointWriter = std::function<void(const std::string& path, const ModelState&, const TrainConfig&)>;

namespace detail {
inline CheckpointWriter& checkpoint_writer() {
    static CheckpointWriter w;
    return w;
}
} // namespace detail

// Vocabulary over descriptions, goal texts and country summaries.
inline Vocabulary build_vocabulary(const std::vector<Example>& examples, const std::vector<GoalDefinition>& goals,
                                   const EncoderConfig& cfg) {
    std::vector<std::string> texts;
    for (const auto& ex : examples) {
        texts.push_back(ex.record.description);
        texts.push_back(ex.context.donor_summary);
        texts.push_back(ex.context.recipient_summary);
    }
    for (const auto& g : goals) texts.push_back(goal_text(g));
    return Vocabulary::build(texts, cfg.lowercase, cfg.min_count, cfg.max_vocab);
}

inline TrainResult train(const TrainConfig& config, const std::vector<Example>& train_set,
                         const std::vector<GoalDefinition>& goals, const TrainOptions& options = {},
                         std::optional<ModelState> initial = std::nullopt) {
    config.validate();
    require(!train_set.empty(), ErrorKind::Size, "training set is empty");
    for (const auto& ex : train_set)
        require(ex.record.sdg_labels && !ex.record.sdg_labels->empty(), ErrorKind::Label,
                "training record " + ex.record.id + " has no labels");
    Rng init_rng(config.seed);
    TrainResult result{initial ? std::move(*initial)
                               : ModelState::create(config, build_vocabulary(train_set, goals, config.encoder), init_rng),
                       {},
                       {}};
    ModelState& state = result.state;
    require(state.d_h() == config.encoder.d_h, ErrorKind::Checkpoint, "initial state d_h differs from config");
    auto params = state.parameters();

    std::ofstream log_file;
    if (!options.log_path.empty()) {
        log_file.open(options.log_path);
        require(log_file.good(), ErrorKind::Io, "cannot write " + options.log_path);
    }
    auto write_checkpoint = [&](const std::string& name) {
        if (options.checkpoint_dir.empty()) return;
        require(static_cast<bool>(detail::checkpoint_writer()), ErrorKind::Checkpoint,
                "no checkpoint writer registered (include sdgclf/checkpoint.hpp)");
        std::filesystem::create_directories(options.checkpoint_dir);
        const std::string path = (std::filesystem::path(options.checkpoint_dir) / name).string();
        detail::checkpoint_writer()(path, state, config);
        result.last_checkpoint = path;
        if (options.on_checkpoint) options.on_checkpoint(path);
    };
    auto numeric_abort = [&](const std::string& what) {
        fail(ErrorKind::Numeric, what + " at epoch " + std::to_string(state.epoch + 1) + "; last good checkpoint: " +
                                     (result.last_checkpoint.empty() ? "none" : result.last_checkpoint));
    };

    std::vector<std::size_t> order(train_set.size());
    const int first_epoch = state.epoch;
    for (int ep = first_epoch; ep < first_epoch + config.epochs; ++ep) {
        // One stream per epoch so a resumed run replays the same batches and noise.
        Rng rng(config.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(ep + 1)));
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        EpochLog log{ep + 1, 0, std::nullopt, 0, 0, 0, 0};
        double l_g_sum = 0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<Example> batch;
            for (std::size_t k = start; k < end; ++k) batch.push_back(train_set[order[k]]);
            ad::zero_grad(params);
            BatchLosses losses;
            try {
                losses = batch_losses(state, config, batch, goals, rng);
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::Numeric) numeric_abort(e.what());
                throw;
            }
            ad::backward(losses.total);
            adam_step(params, state.optimizer, config);
            if (!ad::all_finite(params)) numeric_abort("non-finite parameter after update");
            log.l_ce += losses.l_ce.scalar();
            l_g_sum += losses.l_g.scalar();
            log.l_c += losses.l_c.scalar();
            log.l_d += losses.l_d.scalar();
            log.l_u += losses.l_u.scalar();
            log.l_total += losses.total.scalar();
            ++batches;
        }
        const double nb = static_cast<double>(batches);
        log.l_ce /= nb;
        log.l_c /= nb;
        log.l_d /= nb;
        log.l_u /= nb;
        log.l_total /= nb;
        if (config.lambda_1 > 0) log.l_g = l_g_sum / nb;
        state.epoch = ep + 1;
        result.log.push_back(log);
        if (log_file.is_open()) log_file << to_json(log).dump() << '\n' << std::flush;
        if (options.on_epoch) options.on_epoch(log);
        if (config.checkpoint_every > 0 && state.epoch % config.checkpoint_every == 0)
            write_checkpoint("checkpoint-epoch" + std::to_string(state.epoch) + ".bin");
    }
    write_checkpoint("checkpoint.bin");
    return result;
}

// ---- inference ------------------------------------------------------------------------

struct Prediction {
    std::array<double, kNumGoals> probabilities{};
    GoalSet labels;
    double alpha = 0.0;
};

inline Prediction prediction_from_logits(const ad::Matrix& logits, double threshold, double alpha) {
    Prediction p;
    p.alpha = alpha;
    for (int j = 0; j < kNumGoals; ++j) {
        const double z = logits(0, j);
        const double prob = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        p.probabilities[static_cast<std::size_t>(j)] = prob;
        if (prob >= threshold) p.labels.insert(j + 1);
    }
    return p;
}

// Noise-free batched inference; goal and summary encodings are shared.
inline std::vector<Prediction> predict_batch(const ModelState& state, const TrainConfig& config,
                                             const std::vector<Example>& examples,
                                             const std::vector<GoalDefinition>& goal_defs,
                                             std::optional<double> threshold = std::nullopt) {
    ad::NoGradGuard guard;
    const double thr = threshold.value_or(config.prediction_threshold);
    require(thr > 0 && thr < 1, ErrorKind::Parameter, "threshold must lie in (0, 1)");
    const auto goals = goal_representations(state, goal_defs, true);
    detail::SummaryCache summaries(state.encoder);
    std::vector<Prediction> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        auto e = state.encoder.embed_tokens(ex.record.description);
        auto fr = forward_record(state, config, e, ex, goals, summaries);
        out.push_back(prediction_from_logits(fr.logits.value(), thr, fr.alpha.scalar()));
    }
    return out;
}

inline Prediction predict(const ModelState& state, const TrainConfig& config, const Example& example,
                          const std::vector<GoalDefinition>& goals, std::optional<double> threshold = std::nullopt) {
    return predict_batch(state, config, {example}, goals, threshold).front();
}

} // namespace sdgclf
