#pragma once
// Multi-label metrics and the ablation harness.

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "sdgclf/corpus.hpp"
#include "sdgclf/error.hpp"
#include "sdgclf/trainer.hpp"

namespace sdgclf {

enum class Averaging { Micro, Macro, PerGoal };

inline const char* to_string(Averaging a) {
    switch (a) {
    case Averaging::Micro: return "micro";
    case Averaging::Macro: return "macro";
    case Averaging::PerGoal: return "per_goal";
    }
    return "?";
}

struct GoalMetrics {
    int goal = 0;
    double precision = 0, recall = 0, f1 = 0;
    long support = 0;           // positives
    long predicted = 0;
    bool no_support = false;    // no positives and no predictions
    std::optional<double> auroc;
};

struct MetricReport {
    double precision = 0, recall = 0, f1 = 0;
    std::optional<double> auroc;
    Averaging averaging = Averaging::Micro;
    std::vector<GoalMetrics> per_goal;
    std::vector<int> auroc_excluded; // goals without both classes in the fold
    long n_samples = 0;
};

inline double f1_score(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

// Mann-Whitney U / (n_pos n_neg) with midranks for ties; nullopt unless
// both classes are present.
inline std::optional<double> auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    require(scores.size() == labels.size(), ErrorKind::Shape, "auroc: score and label counts differ");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0;
    long n_pos = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double midrank = (static_cast<double>(i) + static_cast<double>(j) + 1.0) / 2.0; // 1-based
        for (std::size_t k = i; k < j; ++k)
            if (labels[idx[k]]) {
                pos_rank_sum += midrank;
                ++n_pos;
            }
        i = j;
    }
    const long n_neg = static_cast<long>(scores.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1) / 2) / (np * nn);
}

namespace detail {
inline void check_binary(const Eigen::MatrixXd& m, const char* what) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
        require(m(i) == 0.0 || m(i) == 1.0, ErrorKind::Label, std::string(what) + " must be 0/1");
}
} // namespace detail

// Rows are samples, columns goals (1-based goal = column + 1).
inline std::vector<GoalMetrics> per_goal_report(const Eigen::MatrixXd& probabilities, const Eigen::MatrixXd& predictions,
                                                const Eigen::MatrixXd& labels) {
    require(predictions.rows() == labels.rows() && predictions.cols() == labels.cols() &&
                probabilities.rows() == labels.rows() && probabilities.cols() == labels.cols(),
            ErrorKind::Shape, "metric inputs disagree in shape");
    detail::check_binary(labels, "labels");
    detail::check_binary(predictions, "predictions");
    std::vector<GoalMetrics> rows;
    for (Eigen::Index g = 0; g < labels.cols(); ++g) {
        GoalMetrics m;
        m.goal = static_cast<int>(g) + 1;
        long tp = 0;
        for (Eigen::Index i = 0; i < labels.rows(); ++i) {
            const bool y = labels(i, g) == 1.0, p = predictions(i, g) == 1.0;
            tp += y && p;
            m.support += y;
            m.predicted += p;
        }
        m.precision = m.predicted ? double(tp) / double(m.predicted) : 0.0;
        m.recall = m.support ? double(tp) / double(m.support) : 0.0;
        m.f1 = f1_score(m.precision, m.recall);
        m.no_support = m.support == 0 && m.predicted == 0;
        std::vector<double> s(static_cast<std::size_t>(labels.rows()));
        std::vector<int> y(s.size());
        for (Eigen::Index i = 0; i < labels.rows(); ++i) {
            s[static_cast<std::size_t>(i)] = probabilities(i, g);
            y[static_cast<std::size_t>(i)] = labels(i, g) == 1.0;
        }
        m.auroc = auroc(s, y);
        rows.push_back(m);
    }
    return rows;
}

inline MetricReport multilabel_metrics(const Eigen::MatrixXd& probabilities, const Eigen::MatrixXd& predictions,
                                       const Eigen::MatrixXd& labels, Averaging averaging = Averaging::Micro) {
    MetricReport r;
    r.averaging = averaging;
    r.n_samples = labels.rows();
    r.per_goal = per_goal_report(probabilities, predictions, labels);
    for (const auto& g : r.per_goal)
        if (!g.auroc) r.auroc_excluded.push_back(g.goal);
    if (averaging == Averaging::Micro) {
        long tp = 0, pred = 0, pos = 0;
        for (Eigen::Index i = 0; i < labels.size(); ++i) {
            tp += labels(i) == 1.0 && predictions(i) == 1.0;
            pred += predictions(i) == 1.0;
            pos += labels(i) == 1.0;
        }
        r.precision = pred ? double(tp) / double(pred) : 0.0;
        r.recall = pos ? double(tp) / double(pos) : 0.0;
        r.f1 = f1_score(r.precision, r.recall);
        std::vector<double> s(probabilities.data(), probabilities.data() + probabilities.size());
        std::vector<int> y(static_cast<std::size_t>(labels.size()));
        for (Eigen::Index i = 0; i < labels.size(); ++i) y[static_cast<std::size_t>(i)] = labels(i) == 1.0;
        r.auroc = auroc(s, y);
    } else {
        // Macro (and the per-goal summary row): mean over goals with a positive.
        double p = 0, rc = 0, f = 0, a = 0;
        int n = 0, na = 0;
        for (const auto& g : r.per_goal) {
            if (g.support == 0) continue;
            p += g.precision;
            rc += g.recall;
            f += g.f1;
            ++n;
            if (g.auroc) {
                a += *g.auroc;
                ++na;
            }
        }
        if (n) {
            r.precision = p / n;
            r.recall = rc / n;
            r.f1 = f / n;
        }
        if (na) r.auroc = a / na;
    }
    return r;
}

// Matrices from predictions and records.
struct EvaluationMatrices {
    Eigen::MatrixXd probabilities, predictions, labels;
};

inline EvaluationMatrices evaluation_matrices(const std::vector<Prediction>& predictions,
                                              const std::vector<GoalSet>& truth) {
    require(predictions.size() == truth.size(), ErrorKind::Shape, "prediction and label counts differ");
    const auto n = static_cast<Eigen::Index>(truth.size());
    EvaluationMatrices m{Eigen::MatrixXd(n, kNumGoals), Eigen::MatrixXd(n, kNumGoals), Eigen::MatrixXd(n, kNumGoals)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = predictions[static_cast<std::size_t>(i)];
        const auto& y = truth[static_cast<std::size_t>(i)];
        for (int g = 0; g < kNumGoals; ++g) {
            m.probabilities(i, g) = p.probabilities[static_cast<std::size_t>(g)];
            m.predictions(i, g) = p.labels.contains(g + 1) ? 1.0 : 0.0;
            m.labels(i, g) = y.contains(g + 1) ? 1.0 : 0.0;
        }
    }
    return m;
}

inline nlohmann::ordered_json to_json(const GoalMetrics& g) {
    nlohmann::ordered_json j{{"goal", g.goal},           {"precision", g.precision}, {"recall", g.recall},
                             {"f1", g.f1},               {"support", g.support},     {"predicted", g.predicted},
                             {"no_support", g.no_support}};
    j["auroc"] = g.auroc ? nlohmann::ordered_json(*g.auroc) : nlohmann::ordered_json(nullptr);
    return j;
}

inline nlohmann::ordered_json to_json(const MetricReport& r, bool with_goals = true) {
    nlohmann::ordered_json j{{"averaging", to_string(r.averaging)},
                             {"precision", r.precision},
                             {"recall", r.recall},
                             {"f1", r.f1}};
    j["auroc"] = r.auroc ? nlohmann::ordered_json(*r.auroc) : nlohmann::ordered_json(nullptr);
    j["auroc_excluded_goals"] = r.auroc_excluded;
    j["n_samples"] = r.n_samples;
    if (with_goals) {
        j["per_goal"] = nlohmann::ordered_json::array();
        for (const auto& g : r.per_goal) j["per_goal"].push_back(to_json(g));
    }
    return j;
}

inline std::string format_number(std::optional<double> v) {
    if (!v) return "   n/a";
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << *v;
    return s.str();
}

inline std::string format_report(const MetricReport& micro, const MetricReport& macro) {
    std::ostringstream out;
    out << "averaging  precision  recall  f1      auroc\n";
    for (const auto* r : {&micro, &macro})
        out << std::left << std::setw(11) << to_string(r->averaging) << format_number(r->precision) << "     "
            << format_number(r->recall) << "  " << format_number(r->f1) << "  " << format_number(r->auroc) << '\n';
    out << "\ngoal  precision  recall  f1      support  auroc\n";
    for (const auto& g : micro.per_goal) {
        out << std::right << std::setw(4) << g.goal << "  " << format_number(g.precision) << "     "
            << format_number(g.recall) << "  " << format_number(g.f1) << "  " << std::setw(7) << g.support << "  "
            << format_number(g.auroc) << (g.no_support ? "  (no support)" : "") << '\n';
    }
    if (!micro.auroc_excluded.empty()) {
        out << "AUROC excluded for goals without both classes:";
        for (int g : micro.auroc_excluded) out << ' ' << g;
        out << '\n';
    }
    return out.str();
}

// ---- ablation ----------------------------------------------------------------------

inline const std::vector<std::string>& ablation_variants() {
    static const std::vector<std::string> v{"full", "no_semantics", "no_country", "no_decision"};
    return v;
}

inline TrainConfig ablation_config(const TrainConfig& base, const std::string& variant) {
    TrainConfig c = base;
    if (variant == "full") return c;
    if (variant == "no_semantics") c.lambda_1 = 0.0;
    else if (variant == "no_country") c.use_country = false;
    else if (variant == "no_decision") c.use_decision = false;
    else fail(ErrorKind::Config, "unknown ablation variant '" + variant + "'");
    return c;
}

struct ReferenceRow {
    std::string variant;
    double precision, recall, f1, auroc;
};

// Published ablation numbers, for side-by-side display only.
inline const std::vector<ReferenceRow>& published_ablation_rows() {
    static const std::vector<ReferenceRow> rows{{"full", 0.8684, 0.8192, 0.8430, 0.9617},
                                                {"no_semantics", 0.8631, 0.8121, 0.8368, 0.9588},
                                                {"no_country", 0.8671, 0.8143, 0.8399, 0.9594},
                                                {"no_decision", 0.8787, 0.7971, 0.8359, 0.9609}};
    return rows;
}

struct AblationRow {
    std::string variant;
    MetricReport micro;
    MetricReport macro;
    std::vector<EpochLog> log;
};

inline MetricReport evaluate_model(const ModelState& state, const TrainConfig& config, const std::vector<Example>& test,
                                   const std::vector<GoalDefinition>& goals, Averaging averaging = Averaging::Micro) {
    auto preds = predict_batch(state, config, test, goals);
    std::vector<GoalSet> truth;
    for (const auto& ex : test) {
        require(ex.record.sdg_labels.has_value(), ErrorKind::Label, "evaluation record " + ex.record.id + " has no labels");
        truth.push_back(*ex.record.sdg_labels);
    }
    auto m = evaluation_matrices(preds, truth);
    return multilabel_metrics(m.probabilities, m.predictions, m.labels, averaging);
}

// Every variant starts from the same seed and sees the same split.
inline std::vector<AblationRow> run_ablation(const TrainConfig& base, const std::vector<Example>& train_set,
                                             const std::vector<Example>& test_set,
                                             const std::vector<GoalDefinition>& goals,
                                             const std::vector<std::string>& variants = ablation_variants()) {
    std::vector<TrainConfig> configs;
    for (const auto& v : variants) configs.push_back(ablation_config(base, v));
    std::vector<AblationRow> rows;
    for (std::size_t i = 0; i < variants.size(); ++i) {
        auto result = train(configs[i], train_set, goals);
        auto preds = predict_batch(result.state, configs[i], test_set, goals);
        std::vector<GoalSet> truth;
        for (const auto& ex : test_set) truth.push_back(ex.record.sdg_labels.value_or(GoalSet{}));
        auto m = evaluation_matrices(preds, truth);
        rows.push_back({variants[i], multilabel_metrics(m.probabilities, m.predictions, m.labels, Averaging::Micro),
                        multilabel_metrics(m.probabilities, m.predictions, m.labels, Averaging::Macro), result.log});
    }
    return rows;
}

inline std::string format_ablation(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "model          precision  recall  f1      auroc   (micro)\n";
    for (const auto& r : rows)
        out << std::left << std::setw(15) << r.variant << format_number(r.micro.precision) << "     "
            << format_number(r.micro.recall) << "  " << format_number(r.micro.f1) << "  " << format_number(r.micro.auroc)
            << '\n';
    out << "\npublished reference (not comparable at this scale)\n";
    for (const auto& r : published_ablation_rows())
        out << std::left << std::setw(15) << r.variant << format_number(r.precision) << "     "
            << format_number(r.recall) << "  " << format_number(r.f1) << "  " << format_number(r.auroc) << '\n';
    return out.str();
}

} // namespace sdgclf
