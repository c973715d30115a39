#pragma once
// Aid-project records, SDG goal definitions, label encoding and splitting.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bitset>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sdgclf/error.hpp"
#include "sdgclf/rng.hpp"

namespace sdgclf {

inline constexpr int kNumGoals = 17;

// A set of SDG goals, addressed by 1-based goal index.
class GoalSet {
public:
    GoalSet() = default;
    GoalSet(std::initializer_list<int> goals) {
        for (int g : goals) insert(g);
    }

    static GoalSet all() {
        GoalSet s;
        s.bits_.set();
        return s;
    }

    void insert(int goal) {
        require(goal >= 1 && goal <= kNumGoals, ErrorKind::LabelRange, "goal " + std::to_string(goal));
        bits_.set(static_cast<std::size_t>(goal - 1));
    }
    bool contains(int goal) const {
        return goal >= 1 && goal <= kNumGoals && bits_.test(static_cast<std::size_t>(goal - 1));
    }
    int count() const { return static_cast<int>(bits_.count()); }
    bool empty() const { return bits_.none(); }

    std::vector<int> goals() const {
        std::vector<int> out;
        for (int g = 1; g <= kNumGoals; ++g)
            if (contains(g)) out.push_back(g);
        return out;
    }

    // Multi-hot vector, position j-1 holds goal j.
    std::array<double, kNumGoals> multi_hot() const {
        std::array<double, kNumGoals> v{};
        for (int g = 1; g <= kNumGoals; ++g) v[static_cast<std::size_t>(g - 1)] = contains(g) ? 1.0 : 0.0;
        return v;
    }

    bool intersects(const GoalSet& other) const { return (bits_ & other.bits_).any(); }

    std::string to_string() const {
        std::string s;
        for (int g : goals()) {
            if (!s.empty()) s += ' ';
            s += std::to_string(g);
        }
        return s;
    }

    friend bool operator==(const GoalSet&, const GoalSet&) = default;

private:
    std::bitset<kNumGoals> bits_;
};

inline void to_json(nlohmann::ordered_json& j, const GoalSet& s) { j = s.goals(); }
inline void from_json(const nlohmann::ordered_json& j, GoalSet& s) {
    s = GoalSet{};
    for (const auto& g : j) s.insert(g.get<int>());
}

struct ProjectRecord {
    std::string id;
    std::string description;
    int donor_code = 0;
    int recipient_code = 0;
    int year = 0;
    double commitment_usd = 0.0;
    std::optional<GoalSet> sdg_labels;
    std::string donor_name;     // optional, filled from lookup when empty
    std::string recipient_name; // optional, filled from lookup when empty
    bool imputed = false;

    friend bool operator==(const ProjectRecord&, const ProjectRecord&) = default;
};

struct GoalDefinition {
    int goal_index = 0;
    std::string title;
    std::vector<std::string> targets;

    friend bool operator==(const GoalDefinition&, const GoalDefinition&) = default;
};

struct DatasetSplit {
    std::vector<ProjectRecord> train;
    std::vector<ProjectRecord> test;
    std::uint64_t seed = 0;
};

// ---- text ------------------------------------------------------------------

// Collapses runs of ASCII whitespace into one space and trims. Case and
// non-ASCII bytes (accents) are preserved.
inline std::string normalize_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += static_cast<char>(c);
    }
    return out;
}

// ---- labels ----------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_label_tokens(std::string_view field) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : field) {
        if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == ';' || c == '|') {
            if (!cur.empty()) tokens.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

// "7" -> 7, "4.1" / "4.a" (target notation) -> 4; nullopt if not an integer.
inline std::optional<int> parse_goal_token(const std::string& tok) {
    std::string_view head = tok;
    if (auto dot = head.find('.'); dot != std::string_view::npos) {
        std::string_view tail = head.substr(dot + 1);
        if (tail.empty() || !std::all_of(tail.begin(), tail.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)); }))
            return std::nullopt;
        head = head.substr(0, dot);
    }
    int value = 0;
    auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), value);
    if (ec != std::errc{} || ptr != head.data() + head.size() || head.empty()) return std::nullopt;
    return value;
}

} // namespace detail

// Whitespace-, comma- or semicolon-separated goal indices to a goal set.
// Duplicates collapse. Target notation ("4.1") counts toward its goal.
// Throws LabelRangeError carrying the first offending token.
inline GoalSet encode_labels(std::string_view sdg_focus_field) {
    GoalSet out;
    for (const auto& tok : detail::split_label_tokens(sdg_focus_field)) {
        auto g = detail::parse_goal_token(tok);
        if (!g || *g < 1 || *g > kNumGoals) throw LabelRangeError(tok);
        out.insert(*g);
    }
    return out;
}

// ---- delimited input ---------------------------------------------------------

// RFC 4180 style reader: quoted fields, doubled quotes, embedded newlines.
class DelimitedReader {
public:
    DelimitedReader(std::istream& in, char delimiter) : in_(in), delim_(delimiter) {}

    // Returns false at end of input.
    bool next(std::vector<std::string>& fields) {
        fields.clear();
        std::string field;
        bool in_quotes = false, any = false;
        int c;
        while ((c = in_.get()) != EOF) {
            any = true;
            const char ch = static_cast<char>(c);
            if (in_quotes) {
                if (ch == '"') {
                    if (in_.peek() == '"') {
                        field += '"';
                        in_.get();
                    } else {
                        in_quotes = false;
                    }
                } else {
                    field += ch;
                }
            } else if (ch == '"') {
                in_quotes = true;
            } else if (ch == delim_) {
                fields.push_back(std::move(field));
                field.clear();
            } else if (ch == '\n') {
                break;
            } else if (ch != '\r') {
                field += ch;
            }
        }
        if (!any) return false;
        fields.push_back(std::move(field));
        ++line_;
        return true;
    }

    std::size_t records_read() const { return line_; }

private:
    std::istream& in_;
    char delim_;
    std::size_t line_ = 0;
};

// Maps record fields to column names in the source file.
struct ColumnSchema {
    std::string description = "description";
    std::string sdg_focus = "sdg_focus";
    std::string donor_code = "donor_code";
    std::string recipient_code = "recipient_code";
    std::string year = "year";
    std::string commitment = "commitment_usd";
    std::string id;             // optional; row-<n> ids when empty
    std::string donor_name;     // optional
    std::string recipient_name; // optional
    char delimiter = '\0';      // '\0' = detect from header (tab if present, else comma)
};

inline ColumnSchema schema_from_json(const nlohmann::json& j) {
    ColumnSchema s;
    auto get = [&](const char* key, std::string& dst) {
        if (j.contains(key)) dst = j.at(key).get<std::string>();
    };
    get("description", s.description);
    get("sdg_focus", s.sdg_focus);
    get("donor_code", s.donor_code);
    get("recipient_code", s.recipient_code);
    get("year", s.year);
    get("commitment", s.commitment);
    get("id", s.id);
    get("donor_name", s.donor_name);
    get("recipient_name", s.recipient_name);
    if (j.contains("delimiter")) {
        auto d = j.at("delimiter").get<std::string>();
        s.delimiter = d == "\\t" || d == "tab" ? '\t' : (d.empty() ? '\0' : d[0]);
    }
    return s;
}

struct IngestIssue {
    std::size_t row = 0; // 1-based data row
    std::string message;
};

struct IngestResult {
    std::vector<ProjectRecord> records;
    std::vector<IngestIssue> empty_descriptions; // excluded rows
    std::vector<IngestIssue> warnings;           // kept rows with label problems
    std::vector<std::string> unlabeled_ids;      // label field present but unusable
};

namespace detail {

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
    std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    T v{};
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) return std::nullopt;
    return v;
}

} // namespace detail

// Parses a delimited file with a header row into records.
//
// A missing required column is a schema error naming the column; a bad
// number is a RowError with the data row index. Rows with an empty
// description are reported and excluded. A present SDG field with no usable
// index leaves the record unlabeled (warning); a partly valid field keeps
// the valid indices (warning).
inline IngestResult parse_crs_records(std::istream& source, const ColumnSchema& schema) {
    std::string header_line;
    if (!std::getline(source, header_line)) fail(ErrorKind::Schema, "input has no header row");
    if (header_line.rfind("\xEF\xBB\xBF", 0) == 0) header_line.erase(0, 3);
    if (!header_line.empty() && header_line.back() == '\r') header_line.pop_back();
    char delim = schema.delimiter;
    if (delim == '\0') delim = header_line.find('\t') != std::string::npos ? '\t' : ',';

    std::vector<std::string> header;
    {
        std::istringstream hs(header_line);
        DelimitedReader hr(hs, delim);
        hr.next(header);
    }
    auto column = [&](const std::string& name, bool required) -> std::optional<std::size_t> {
        if (name.empty()) {
            if (required) fail(ErrorKind::Schema, "required column mapping is empty");
            return std::nullopt;
        }
        for (std::size_t i = 0; i < header.size(); ++i)
            if (detail::trim(header[i]) == name) return i;
        if (required) fail(ErrorKind::Schema, "missing required column '" + name + "'");
        return std::nullopt;
    };
    const auto c_desc = *column(schema.description, true);
    const auto c_sdg = *column(schema.sdg_focus, true);
    const auto c_donor = *column(schema.donor_code, true);
    const auto c_recip = *column(schema.recipient_code, true);
    const auto c_year = *column(schema.year, true);
    const auto c_commit = *column(schema.commitment, true);
    const auto c_id = column(schema.id, false);
    const auto c_dname = column(schema.donor_name, false);
    const auto c_rname = column(schema.recipient_name, false);

    IngestResult result;
    DelimitedReader reader(source, delim);
    std::vector<std::string> f;
    std::size_t row = 0;
    while (reader.next(f)) {
        if (f.size() == 1 && detail::trim(f[0]).empty()) continue; // blank line
        ++row;
        auto field = [&](std::size_t c) -> std::string_view {
            return c < f.size() ? std::string_view(f[c]) : std::string_view{};
        };
        ProjectRecord r;
        r.id = c_id ? detail::trim(field(*c_id)) : std::string{};
        if (r.id.empty()) r.id = "row-" + std::to_string(row);
        r.description = normalize_whitespace(field(c_desc));
        if (r.description.empty()) {
            result.empty_descriptions.push_back({row, "empty description (id " + r.id + ")"});
            continue;
        }
        auto donor = detail::parse_number<int>(field(c_donor));
        if (!donor) throw RowError(row, "unparseable donor code '" + std::string(field(c_donor)) + "'");
        auto recip = detail::parse_number<int>(field(c_recip));
        if (!recip) throw RowError(row, "unparseable recipient code '" + std::string(field(c_recip)) + "'");
        auto year = detail::parse_number<int>(field(c_year));
        if (!year) throw RowError(row, "unparseable year '" + std::string(field(c_year)) + "'");
        auto commit = detail::parse_number<double>(field(c_commit));
        if (!commit || !std::isfinite(*commit))
            throw RowError(row, "unparseable commitment '" + std::string(field(c_commit)) + "'");
        if (*commit < 0) throw RowError(row, "negative commitment");
        r.donor_code = *donor;
        r.recipient_code = *recip;
        r.year = *year;
        r.commitment_usd = *commit;
        if (c_dname) r.donor_name = detail::trim(field(*c_dname));
        if (c_rname) r.recipient_name = detail::trim(field(*c_rname));

        const std::string sdg = detail::trim(field(c_sdg));
        if (!sdg.empty()) {
            GoalSet labels;
            std::vector<std::string> bad;
            for (const auto& tok : detail::split_label_tokens(sdg)) {
                auto g = detail::parse_goal_token(tok);
                if (g && *g >= 1 && *g <= kNumGoals)
                    labels.insert(*g);
                else
                    bad.push_back(tok);
            }
            if (labels.empty()) {
                result.unlabeled_ids.push_back(r.id);
                result.warnings.push_back({row, "SDG field '" + sdg + "' has no valid goal; record left unlabeled"});
            } else {
                if (!bad.empty())
                    result.warnings.push_back({row, "dropped invalid SDG token '" + bad.front() + "'"});
                r.sdg_labels = labels;
            }
        }
        result.records.push_back(std::move(r));
    }
    return result;
}

// ---- canonical record file (JSON lines) ---------------------------------------

inline nlohmann::ordered_json record_to_json(const ProjectRecord& r) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["description"] = r.description;
    j["donor_code"] = r.donor_code;
    j["recipient_code"] = r.recipient_code;
    j["year"] = r.year;
    j["commitment_usd"] = r.commitment_usd;
    if (r.sdg_labels)
        j["sdg_labels"] = *r.sdg_labels;
    else
        j["sdg_labels"] = nullptr;
    if (!r.donor_name.empty()) j["donor_name"] = r.donor_name;
    if (!r.recipient_name.empty()) j["recipient_name"] = r.recipient_name;
    j["imputed"] = r.imputed;
    return j;
}

inline ProjectRecord record_from_json(const nlohmann::ordered_json& j) {
    ProjectRecord r;
    r.id = j.at("id").get<std::string>();
    r.description = j.at("description").get<std::string>();
    r.donor_code = j.at("donor_code").get<int>();
    r.recipient_code = j.at("recipient_code").get<int>();
    r.year = j.at("year").get<int>();
    r.commitment_usd = j.at("commitment_usd").get<double>();
    if (j.contains("sdg_labels") && !j.at("sdg_labels").is_null()) {
        GoalSet s = j.at("sdg_labels").get<GoalSet>();
        require(!s.empty(), ErrorKind::Label, "record " + r.id + " has an empty label set");
        r.sdg_labels = s;
    }
    r.donor_name = j.value("donor_name", std::string{});
    r.recipient_name = j.value("recipient_name", std::string{});
    r.imputed = j.value("imputed", false);
    require(!r.description.empty(), ErrorKind::Row, "record " + r.id + " has an empty description");
    require(r.commitment_usd >= 0, ErrorKind::Row, "record " + r.id + " has a negative commitment");
    return r;
}

inline void write_records(std::ostream& out, const std::vector<ProjectRecord>& records) {
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

inline std::vector<ProjectRecord> read_records(std::istream& in) {
    std::vector<ProjectRecord> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (detail::trim(line).empty()) continue;
        try {
            out.push_back(record_from_json(nlohmann::ordered_json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw RowError(n, std::string("malformed record line: ") + e.what());
        }
    }
    return out;
}

inline void save_records(const std::string& path, const std::vector<ProjectRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::Io, "cannot write " + path);
    write_records(out, records);
    require(out.good(), ErrorKind::Io, "write failed for " + path);
}

inline std::vector<ProjectRecord> load_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Io, "cannot read " + path);
    return read_records(in);
}

// ---- split -------------------------------------------------------------------

// Record-level random split; train gets round(n * a / (a + b)) records.
inline DatasetSplit split_dataset(const std::vector<ProjectRecord>& records, std::pair<int, int> ratio,
                                  std::uint64_t seed) {
    require(ratio.first > 0 && ratio.second > 0, ErrorKind::Parameter, "split ratio components must be positive");
    const auto parts = static_cast<std::size_t>(ratio.first + ratio.second);
    require(records.size() >= parts, ErrorKind::Size,
            "need at least " + std::to_string(parts) + " records for a " + std::to_string(ratio.first) + ":" +
                std::to_string(ratio.second) + " split, got " + std::to_string(records.size()));
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(
        std::llround(static_cast<double>(records.size()) * ratio.first / static_cast<double>(parts)));
    DatasetSplit split;
    split.seed = seed;
    split.train.reserve(n_train);
    split.test.reserve(records.size() - n_train);
    for (std::size_t k = 0; k < order.size(); ++k)
        (k < n_train ? split.train : split.test).push_back(records[order[k]]);
    return split;
}

// ---- goal definitions ----------------------------------------------------------

inline nlohmann::ordered_json goals_to_json(const std::vector<GoalDefinition>& goals) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& g : goals) {
        nlohmann::ordered_json j;
        j["goal_index"] = g.goal_index;
        j["title"] = g.title;
        j["targets"] = g.targets;
        arr.push_back(std::move(j));
    }
    return nlohmann::ordered_json{{"goals", std::move(arr)}};
}

// Validates and sorts a goal list: exactly goals 1..17, non-empty texts.
inline std::vector<GoalDefinition> validate_goal_definitions(std::vector<GoalDefinition> goals) {
    std::sort(goals.begin(), goals.end(), [](const auto& a, const auto& b) { return a.goal_index < b.goal_index; });
    std::unordered_set<int> seen;
    for (const auto& g : goals) {
        require(g.goal_index >= 1 && g.goal_index <= kNumGoals, ErrorKind::DefinitionSet,
                "goal index " + std::to_string(g.goal_index) + " outside 1..17");
        require(seen.insert(g.goal_index).second, ErrorKind::DefinitionSet,
                "duplicate goal index " + std::to_string(g.goal_index));
        require(!normalize_whitespace(g.title).empty(), ErrorKind::DefinitionSet,
                "goal " + std::to_string(g.goal_index) + " has an empty title");
        for (const auto& t : g.targets)
            require(!normalize_whitespace(t).empty(), ErrorKind::DefinitionSet,
                    "goal " + std::to_string(g.goal_index) + " has an empty target");
    }
    for (int i = 1; i <= kNumGoals; ++i)
        require(seen.count(i) == 1, ErrorKind::DefinitionSet, "goal " + std::to_string(i) + " is missing");
    return goals;
}

inline std::vector<GoalDefinition> goals_from_json(const nlohmann::json& j) {
    const auto& arr = j.is_array() ? j : j.at("goals");
    std::vector<GoalDefinition> goals;
    for (const auto& e : arr) {
        GoalDefinition g;
        g.goal_index = e.at("goal_index").get<int>();
        g.title = e.at("title").get<std::string>();
        if (e.contains("targets")) g.targets = e.at("targets").get<std::vector<std::string>>();
        goals.push_back(std::move(g));
    }
    return validate_goal_definitions(std::move(goals));
}

inline std::vector<GoalDefinition> load_goal_definitions(std::istream& in) {
    try {
        return goals_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::DefinitionSet, std::string("malformed goal file: ") + e.what());
    }
}

inline std::vector<GoalDefinition> load_goal_definitions(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Io, "cannot read " + path);
    return load_goal_definitions(in);
}

} // namespace sdgclf
