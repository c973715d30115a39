#pragma once
// Label imputation, per-goal budget weights, allocation and trend output.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "sdgclf/corpus.hpp"
#include "sdgclf/country.hpp"
#include "sdgclf/error.hpp"
#include "sdgclf/trainer.hpp"

namespace sdgclf {

// ---- imputation ------------------------------------------------------------------

struct SkippedRecord {
    std::string id;
    std::string reason;
};

struct ImputationResult {
    std::vector<ProjectRecord> records;
    std::vector<SkippedRecord> skipped;
};

// Resolves a record's country context and decision (fixture store lookups).
using ExampleResolver = std::function<Example(const ProjectRecord&)>;

// Labelled records pass through untouched; the rest get the thresholded
// prediction and imputed = true. Records whose context cannot be resolved
// are reported and left out.
inline ImputationResult impute_labels(const ModelState& state, const TrainConfig& config,
                                      const std::vector<ProjectRecord>& records,
                                      const std::vector<GoalDefinition>& goals, const ExampleResolver& resolve) {
    ImputationResult out;
    std::vector<Example> pending;
    std::vector<std::size_t> slot;
    for (const auto& rec : records) {
        if (rec.sdg_labels) {
            out.records.push_back(rec);
            continue;
        }
        try {
            pending.push_back(resolve(rec));
            slot.push_back(out.records.size());
            out.records.push_back(rec);
        } catch (const Error& e) {
            out.skipped.push_back({rec.id, e.what()});
        }
    }
    const auto preds = predict_batch(state, config, pending, goals);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        auto& rec = out.records[slot[i]];
        rec.sdg_labels = preds[i].labels;
        rec.imputed = true;
    }
    return out;
}

// ---- budget weights ------------------------------------------------------------------

struct YearGoalCounts {
    std::vector<int> years;
    Eigen::MatrixXd counts; // years x 17
};

// A project with k goals adds 1 to each of them. Unlabelled records are
// ignored; imputed ones only when asked.
inline YearGoalCounts year_goal_counts(const std::vector<ProjectRecord>& records, bool include_imputed = false) {
    std::map<int, std::array<double, kNumGoals>> by_year;
    for (const auto& r : records) {
        if (!r.sdg_labels || (r.imputed && !include_imputed)) continue;
        auto& row = by_year.try_emplace(r.year, std::array<double, kNumGoals>{}).first->second;
        for (int g : r.sdg_labels->goals()) row[static_cast<std::size_t>(g - 1)] += 1;
    }
    YearGoalCounts c{{}, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(by_year.size()), kNumGoals)};
    Eigen::Index i = 0;
    for (const auto& [year, row] : by_year) {
        c.years.push_back(year);
        for (int g = 0; g < kNumGoals; ++g) c.counts(i, g) = row[static_cast<std::size_t>(g)];
        ++i;
    }
    return c;
}

// S_i: summed commitments of the records counted in year i.
inline Eigen::VectorXd year_budget_sums(const std::vector<ProjectRecord>& records, const std::vector<int>& years,
                                        bool include_imputed = false) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(years.size()));
    for (const auto& r : records) {
        if (!r.sdg_labels || (r.imputed && !include_imputed)) continue;
        auto it = std::find(years.begin(), years.end(), r.year);
        if (it != years.end()) s(it - years.begin()) += r.commitment_usd;
    }
    return s;
}

struct NnlsResult {
    Eigen::VectorXd x;
    double residual = 0; // ||Ax - b||^2
    int iterations = 0;
};

// Lawson-Hanson active set method for min ||Ax - b||^2 subject to x >= 0.
inline NnlsResult nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, int max_iterations = 0) {
    require(a.rows() == b.size(), ErrorKind::Shape, "nnls: row count differs from target length");
    const Eigen::Index n = a.cols();
    if (max_iterations <= 0) max_iterations = static_cast<int>(30 * n + 30);
    const double tol = 10 * std::numeric_limits<double>::epsilon() * std::max<double>(1.0, a.cwiseAbs().colwise().sum().maxCoeff()) *
                       static_cast<double>(std::max(a.rows(), n)) * std::max(1.0, b.cwiseAbs().maxCoeff());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<bool> passive(static_cast<std::size_t>(n), false);

    auto solve_passive = [&]() {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < n; ++j)
            if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
        Eigen::MatrixXd ap(a.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) ap.col(static_cast<Eigen::Index>(k)) = a.col(idx[k]);
        Eigen::VectorXd sp = ap.colPivHouseholderQr().solve(b);
        Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
        for (std::size_t k = 0; k < idx.size(); ++k) s(idx[k]) = sp(static_cast<Eigen::Index>(k));
        return s;
    };

    int it = 0;
    Eigen::VectorXd w = a.transpose() * (b - a * x);
    while (it < max_iterations) {
        Eigen::Index t = -1;
        double best = tol;
        for (Eigen::Index j = 0; j < n; ++j)
            if (!passive[static_cast<std::size_t>(j)] && w(j) > best) {
                best = w(j);
                t = j;
            }
        if (t < 0) break;
        passive[static_cast<std::size_t>(t)] = true;
        Eigen::VectorXd s = solve_passive();
        while (++it < max_iterations) {
            double alpha = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[static_cast<std::size_t>(j)] && s(j) <= 0) {
                    const double d = x(j) - s(j);
                    alpha = std::min(alpha, d > 0 ? x(j) / d : 0.0);
                }
            if (!std::isfinite(alpha)) break;
            x += alpha * (s - x);
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[static_cast<std::size_t>(j)] && x(j) <= tol) {
                    passive[static_cast<std::size_t>(j)] = false;
                    x(j) = 0;
                }
            s = solve_passive();
        }
        x = s;
        w = a.transpose() * (b - a * x);
    }
    for (Eigen::Index j = 0; j < n; ++j) x(j) = std::max(0.0, x(j));
    return {x, (a * x - b).squaredNorm(), it};
}

enum class WeightNormalization { Raw, MaxNormalized };

inline const char* to_string(WeightNormalization n) { return n == WeightNormalization::Raw ? "raw" : "max_normalized"; }

struct BudgetWeights {
    Eigen::VectorXd w;       // 17, as reported under `normalization`
    Eigen::VectorXd raw;     // 17, unnormalised fit
    WeightNormalization normalization = WeightNormalization::Raw;
    double fit_residual = 0; // of the raw fit
    std::vector<int> years;
};

// min_w sum_i (S_i - sum_k c_ik w_k)^2 with w >= 0.
inline BudgetWeights fit_budget_weights(const Eigen::VectorXd& s, const YearGoalCounts& c,
                                        WeightNormalization normalization = WeightNormalization::Raw) {
    require(c.counts.cols() == kNumGoals, ErrorKind::Shape, "counts need 17 columns");
    require(c.counts.rows() >= 1 && c.counts.rows() == s.size(), ErrorKind::Shape, "need one budget sum per year");
    require((c.counts.array() >= 0).all(), ErrorKind::Parameter, "counts must be nonnegative");
    require(c.counts.cwiseAbs().maxCoeff() > 0, ErrorKind::DegenerateFit, "all goal counts are zero");
    auto fit = nnls(c.counts, s);
    BudgetWeights bw{fit.x, fit.x, normalization, fit.residual, c.years};
    if (normalization == WeightNormalization::MaxNormalized) {
        const double m = fit.x.maxCoeff();
        require(m > 0, ErrorKind::DegenerateFit, "every fitted weight is zero; nothing to normalise");
        bw.w = fit.x / m;
    }
    return bw;
}

// ---- published proportions fixture --------------------------------------------------

struct PublishedProportions {
    struct Row {
        int goal;
        std::string printed_title;
        double proportion;
    };
    std::vector<Row> printed;
    std::map<int, double> by_number; // trusts the printed goal numbers
    std::map<int, double> by_title;  // trusts the printed titles
    std::vector<std::string> conflicts;
};

inline PublishedProportions load_published_proportions(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::Io, "cannot read " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Schema, path + ": " + e.what());
    }
    PublishedProportions p;
    for (const auto& r : j.at("printed"))
        p.printed.push_back({r.at("goal").get<int>(), r.at("title").get<std::string>(), r.at("proportion").get<double>()});
    for (const auto& [k, v] : j.at("readings").at("by_number").items()) p.by_number[std::stoi(k)] = v.get<double>();
    for (const auto& [k, v] : j.at("readings").at("by_title").items()) p.by_title[std::stoi(k)] = v.get<double>();
    for (const auto& c : j.at("title_conflicts"))
        p.conflicts.push_back("goal " + std::to_string(c.at("goal").get<int>()) + " printed as \"" +
                              c.at("printed_title").get<std::string>() + "\", standard title \"" +
                              c.at("standard_title").get<std::string>() + "\"");
    require(p.printed.size() == static_cast<std::size_t>(kNumGoals) && p.by_number.size() == p.printed.size() &&
                p.by_title.size() == p.printed.size(),
            ErrorKind::DefinitionSet, "proportion fixture must cover 17 goals in every reading");
    return p;
}

// ---- allocation -----------------------------------------------------------------------

inline constexpr double kShareDisplayCutoff = 0.01;

using GoalAmounts = std::array<double, kNumGoals>;

struct GoalShare {
    int goal;
    double amount;
    double share;          // of the group total
    bool displayed;        // share >= cutoff
    double display_share;  // renormalised over displayed goals; 0 if hidden
};

struct AllocationReport {
    std::map<int, GoalAmounts> by_year;
    std::map<std::string, GoalAmounts> by_income_group;
    GoalAmounts totals{};
    double total_commitment = 0;
    double unallocated = 0;
    std::vector<std::string> unallocated_ids;
    std::string checkpoint_id;
    std::string provider_id;

    double allocated() const {
        double s = 0;
        for (double v : totals) s += v;
        return s;
    }
};

// Each commitment is split over the project's goals in proportion to w_k;
// if every w_k of its goals is zero the split is even.
inline AllocationReport allocate_budget(const std::vector<ProjectRecord>& records, const BudgetWeights& weights,
                                        const CountryLookup& lookup) {
    require(weights.w.size() == kNumGoals, ErrorKind::Shape, "weights need 17 entries");
    AllocationReport r;
    for (const auto& rec : records) {
        r.total_commitment += rec.commitment_usd;
        if (!rec.sdg_labels || rec.sdg_labels->empty()) {
            r.unallocated += rec.commitment_usd;
            r.unallocated_ids.push_back(rec.id);
            continue;
        }
        const auto goals = rec.sdg_labels->goals();
        double wsum = 0;
        for (int g : goals) wsum += weights.w(g - 1);
        auto& year = r.by_year.try_emplace(rec.year, GoalAmounts{}).first->second;
        auto& group = r.by_income_group
                          .try_emplace(to_string(lookup.income_group(rec.recipient_code, rec.year)), GoalAmounts{})
                          .first->second;
        for (int g : goals) {
            const double frac = wsum > 0 ? weights.w(g - 1) / wsum : 1.0 / static_cast<double>(goals.size());
            const double amount = rec.commitment_usd * frac;
            const auto k = static_cast<std::size_t>(g - 1);
            year[k] += amount;
            group[k] += amount;
            r.totals[k] += amount;
        }
    }
    return r;
}

inline std::vector<GoalShare> goal_shares(const GoalAmounts& amounts, double cutoff = kShareDisplayCutoff) {
    double total = 0;
    for (double v : amounts) total += v;
    std::vector<GoalShare> out;
    double shown = 0;
    for (int g = 0; g < kNumGoals; ++g) {
        const double a = amounts[static_cast<std::size_t>(g)];
        const double share = total > 0 ? a / total : 0.0;
        const bool displayed = total > 0 && share >= cutoff;
        if (displayed) shown += a;
        out.push_back({g + 1, a, share, displayed, 0.0});
    }
    for (auto& s : out)
        if (s.displayed) s.display_share = s.amount / shown;
    return out;
}

// ---- report output ----------------------------------------------------------------------

namespace detail {

inline std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline const char* goal_colour(int goal) {
    static const char* colours[kNumGoals] = {"#e5243b", "#dda63a", "#4c9f38", "#c5192d", "#ff3a21", "#26bde2",
                                             "#fcc30b", "#a21942", "#fd6925", "#dd1367", "#fd9d24", "#bf8b2e",
                                             "#3f7e44", "#0a97d9", "#56c02b", "#00689d", "#19486a"};
    return colours[(goal - 1) % kNumGoals];
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::Io, "cannot write " + path.string());
    out << text;
    require(out.good(), ErrorKind::Io, "write failed for " + path.string());
}

inline std::string trend_svg(const AllocationReport& r) {
    const double w = 720, h = 400, left = 70, right = 110, top = 30, bottom = 40;
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    s << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">Estimated annual allocation by goal (USD)</text>\n";
    double ymax = 0;
    for (const auto& [year, a] : r.by_year)
        for (double v : a) ymax = std::max(ymax, v);
    if (r.by_year.empty() || ymax <= 0) {
        s << "<text x=\"" << left << "\" y=\"" << h / 2 << "\" font-size=\"12\">no data</text>\n</svg>\n";
        return s.str();
    }
    const int y0 = r.by_year.begin()->first, y1 = r.by_year.rbegin()->first;
    auto px = [&](int year) { return left + (y1 == y0 ? 0.5 : double(year - y0) / (y1 - y0)) * (w - left - right); };
    auto py = [&](double v) { return h - bottom - v / ymax * (h - top - bottom); };
    s << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n";
    s << "<text x=\"4\" y=\"" << top + 4 << "\" font-size=\"10\">" << num(ymax) << "</text>\n";
    for (const auto& [year, a] : r.by_year)
        s << "<text x=\"" << px(year) - 12 << "\" y=\"" << h - bottom + 16 << "\" font-size=\"10\">" << year
          << "</text>\n";
    int legend = 0;
    for (int g = 1; g <= kNumGoals; ++g) {
        if (r.totals[static_cast<std::size_t>(g - 1)] <= 0) continue;
        s << "<polyline fill=\"none\" stroke=\"" << goal_colour(g) << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [year, a] : r.by_year) s << num(px(year)) << ',' << num(py(a[static_cast<std::size_t>(g - 1)])) << ' ';
        s << "\"/>\n";
        s << "<text x=\"" << w - right + 8 << "\" y=\"" << top + 12 * legend++ << "\" font-size=\"10\" fill=\""
          << goal_colour(g) << "\">SDG " << g << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

inline std::string shares_svg(const AllocationReport& r) {
    const double w = 720, bar = 26, left = 70;
    const double h = 50 + bar * 1.6 * std::max<std::size_t>(1, r.by_income_group.size());
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    s << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">Goal shares by income group (shares under 1% omitted)</text>\n";
    if (r.by_income_group.empty()) s << "<text x=\"" << left << "\" y=\"44\" font-size=\"12\">no data</text>\n";
    int row = 0;
    for (const auto& [group, amounts] : r.by_income_group) {
        const double y = 34 + row++ * bar * 1.6;
        s << "<text x=\"4\" y=\"" << y + bar * 0.7 << "\" font-size=\"11\">" << group << "</text>\n";
        double x = left;
        for (const auto& gs : goal_shares(amounts)) {
            if (!gs.displayed) continue;
            const double width = gs.display_share * (w - left - 20);
            s << "<rect x=\"" << num(x) << "\" y=\"" << y << "\" width=\"" << num(width) << "\" height=\"" << bar
              << "\" fill=\"" << goal_colour(gs.goal) << "\"><title>SDG " << gs.goal << ": " << num(100 * gs.share)
              << "%</title></rect>\n";
            if (width > 22)
                s << "<text x=\"" << num(x + 3) << "\" y=\"" << y + bar * 0.65 << "\" font-size=\"9\" fill=\"white\">"
                  << gs.goal << "</text>\n";
            x += width;
        }
    }
    s << "</svg>\n";
    return s.str();
}

} // namespace detail

struct TrendFiles {
    std::string annual_csv, shares_csv, summary_json, trend_svg, shares_svg;
};

// Machine-readable tables plus two static SVG charts.
inline TrendFiles emit_trend_report(const AllocationReport& r, const std::string& out_dir,
                                    const BudgetWeights* weights = nullptr,
                                    const PublishedProportions* published = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    TrendFiles f{(dir / "allocation_by_year.csv").string(), (dir / "income_group_shares.csv").string(),
                 (dir / "allocation_summary.json").string(), (dir / "annual_allocation.svg").string(),
                 (dir / "income_group_shares.svg").string()};

    std::ostringstream annual;
    annual << "year,goal,amount_usd\n";
    for (const auto& [year, a] : r.by_year)
        for (int g = 1; g <= kNumGoals; ++g)
            annual << year << ',' << g << ',' << detail::num(a[static_cast<std::size_t>(g - 1)]) << '\n';
    detail::write_file(f.annual_csv, annual.str());

    std::ostringstream shares;
    shares << "income_group,goal,amount_usd,share,displayed,display_share\n";
    for (const auto& [group, amounts] : r.by_income_group)
        for (const auto& s : goal_shares(amounts))
            shares << group << ',' << s.goal << ',' << detail::num(s.amount) << ',' << detail::num(s.share) << ','
                   << (s.displayed ? 1 : 0) << ',' << detail::num(s.display_share) << '\n';
    detail::write_file(f.shares_csv, shares.str());

    nlohmann::ordered_json j{{"total_commitment_usd", r.total_commitment},
                             {"allocated_usd", r.allocated()},
                             {"unallocated_usd", r.unallocated},
                             {"unallocated_ids", r.unallocated_ids},
                             {"goal_totals_usd", r.totals},
                             {"checkpoint_id", r.checkpoint_id},
                             {"provider_id", r.provider_id},
                             {"share_display_cutoff", kShareDisplayCutoff}};
    if (weights) {
        j["budget_weights"] = {{"normalization", to_string(weights->normalization)},
                               {"w", std::vector<double>(weights->w.data(), weights->w.data() + weights->w.size())},
                               {"raw", std::vector<double>(weights->raw.data(), weights->raw.data() + weights->raw.size())},
                               {"fit_residual", weights->fit_residual},
                               {"years", weights->years}};
    }
    if (published) {
        nlohmann::ordered_json p{{"by_number", nlohmann::ordered_json::object()},
                                 {"by_title", nlohmann::ordered_json::object()},
                                 {"title_conflicts", published->conflicts}};
        for (const auto& [g, v] : published->by_number) p["by_number"][std::to_string(g)] = v;
        for (const auto& [g, v] : published->by_title) p["by_title"][std::to_string(g)] = v;
        j["published_proportions"] = p;
    }
    detail::write_file(f.summary_json, j.dump(2) + "\n");
    detail::write_file(f.trend_svg, detail::trend_svg(r));
    detail::write_file(f.shares_svg, detail::shares_svg(r));
    return f;
}

// Side-by-side table of fitted (max-normalised) and published proportions.
inline std::string format_proportion_comparison(const BudgetWeights& w, const PublishedProportions& p) {
    const double m = w.raw.size() ? w.raw.maxCoeff() : 0.0;
    std::ostringstream s;
    s << "goal  fitted  published(by number)  published(by title)\n";
    for (int g = 1; g <= kNumGoals; ++g) {
        char line[128];
        std::snprintf(line, sizeof line, "%4d  %6.2f  %20.2f  %19.2f\n", g, m > 0 ? w.raw(g - 1) / m : 0.0,
                      p.by_number.at(g), p.by_title.at(g));
        s << line;
    }
    for (const auto& c : p.conflicts) s << "note: " << c << '\n';
    return s.str();
}

} // namespace sdgclf
