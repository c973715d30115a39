#include "test_support.hpp"

#include <fstream>
#include <set>
#include <sstream>

using namespace sdgclf;

namespace {

ColumnSchema fixture_schema() {
    ColumnSchema s;
    s.id = "project_id";
    s.description = "ProjectDescription";
    s.sdg_focus = "SDGfocus";
    s.donor_code = "DonorCode";
    s.recipient_code = "RecipientCode";
    s.year = "Year";
    s.commitment = "USD_Commitment";
    s.donor_name = "DonorName";
    s.recipient_name = "RecipientName";
    return s;
}

std::string fixture(const std::string& name) { return std::string(SDGCLF_TEST_FIXTURES) + "/" + name; }

IngestResult parse_string(const std::string& csv, const ColumnSchema& s = {}) {
    std::istringstream in(csv);
    return parse_crs_records(in, s);
}

std::vector<ProjectRecord> make_records(int n) {
    std::vector<ProjectRecord> out;
    for (int i = 0; i < n; ++i) out.push_back({"r" + std::to_string(i), "text " + std::to_string(i), 1, 2, 2019, 1.0, GoalSet{1}});
    return out;
}

} // namespace

TEST(EncodeLabels, ListedGoalsAreSet) {
    auto s = encode_labels("3 5 13");
    EXPECT_EQ(s.goals(), (std::vector<int>{3, 5, 13}));
    EXPECT_EQ(s.count(), 3);
}

TEST(EncodeLabels, DuplicatesCollapse) { EXPECT_EQ(encode_labels("1 1 2").goals(), (std::vector<int>{1, 2})); }

TEST(EncodeLabels, OutOfRangeCarriesToken) {
    try {
        encode_labels("18");
        FAIL() << "expected a label-range error";
    } catch (const LabelRangeError& e) {
        EXPECT_EQ(e.token(), "18");
        EXPECT_EQ(e.kind(), ErrorKind::LabelRange);
    }
    EXPECT_THROW(encode_labels("0"), LabelRangeError);
    EXPECT_THROW(encode_labels("three"), LabelRangeError);
}

TEST(EncodeLabels, SeparatorsAndTargetNotation) {
    EXPECT_EQ(encode_labels("3,5;13").goals(), (std::vector<int>{3, 5, 13}));
    EXPECT_EQ(encode_labels("4.1 4.a 6").goals(), (std::vector<int>{4, 6}));
    EXPECT_TRUE(encode_labels("   ").empty());
}

TEST(EncodeLabels, SumEqualsDistinctInRangeCount) {
    // Property: for random valid token lists the vector sum is the number of
    // distinct indices, regardless of order and repetition.
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        std::set<int> distinct;
        std::string field;
        const int n = 1 + static_cast<int>(rng.index(12));
        for (int i = 0; i < n; ++i) {
            const int g = 1 + static_cast<int>(rng.index(17));
            distinct.insert(g);
            field += std::to_string(g) + (rng.bernoulli(0.5) ? " " : ",");
        }
        const auto hot = encode_labels(field).multi_hot();
        double sum = 0;
        for (double v : hot) sum += v;
        EXPECT_EQ(sum, static_cast<double>(distinct.size()));
    }
}

TEST(ParseRecords, DirectFieldMapping) {
    auto r = parse_string(
        "description,sdg_focus,donor_code,recipient_code,year,commitment_usd\n"
        "Water supply project,6,801,625,2019,100\n");
    ASSERT_EQ(r.records.size(), 1u);
    const auto& rec = r.records[0];
    EXPECT_EQ(rec.description, "Water supply project");
    EXPECT_EQ(rec.donor_code, 801);
    EXPECT_EQ(rec.recipient_code, 625);
    ASSERT_TRUE(rec.sdg_labels.has_value());
    EXPECT_EQ(rec.sdg_labels->goals(), std::vector<int>{6});
    EXPECT_EQ(rec.id, "row-1");
}

TEST(ParseRecords, EmptySdgFieldLeavesLabelsAbsent) {
    auto r = parse_string(
        "description,sdg_focus,donor_code,recipient_code,year,commitment_usd\n"
        "Health clinics,,5,238,2016,10\n");
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_FALSE(r.records[0].sdg_labels.has_value());
    EXPECT_TRUE(r.warnings.empty());
}

TEST(ParseRecords, MissingColumnNamesIt) {
    try {
        parse_string("description,sdg_focus,donor_code,year,commitment_usd\nx,1,2,2019,3\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Schema);
        EXPECT_NE(std::string(e.what()).find("recipient_code"), std::string::npos);
    }
}

TEST(ParseRecords, BadCommitmentIsRowErrorWithIndex) {
    try {
        parse_string(
            "description,sdg_focus,donor_code,recipient_code,year,commitment_usd\n"
            "ok,1,1,2,2019,5\n"
            "bad,1,1,2,2019,12abc\n");
        FAIL();
    } catch (const RowError& e) {
        EXPECT_EQ(e.row(), 2u);
    }
}

TEST(ParseRecords, EmptyDescriptionIsReportedNotSilentlyDropped) {
    auto r = parse_string(
        "description,sdg_focus,donor_code,recipient_code,year,commitment_usd\n"
        "   ,1,1,2,2019,5\n"
        "kept,2,1,2,2019,5\n");
    EXPECT_EQ(r.records.size(), 1u);
    ASSERT_EQ(r.empty_descriptions.size(), 1u);
    EXPECT_EQ(r.empty_descriptions[0].row, 1u);
}

TEST(ParseRecords, InvalidSdgFieldRoutesToUnlabeledBucket) {
    auto r = parse_string(
        "description,sdg_focus,donor_code,recipient_code,year,commitment_usd\n"
        "a,18 99,1,2,2019,5\n"
        "b,3 18,1,2,2019,5\n");
    ASSERT_EQ(r.records.size(), 2u);
    EXPECT_FALSE(r.records[0].sdg_labels.has_value());
    EXPECT_EQ(r.unlabeled_ids, std::vector<std::string>{"row-1"});
    EXPECT_EQ(r.records[1].sdg_labels->goals(), std::vector<int>{3});
    EXPECT_EQ(r.warnings.size(), 2u);
}

TEST(ParseRecords, WhitespaceNormalisedCaseAndAccentsKept) {
    auto r = parse_string(
        "description\tsdg_focus\tdonor_code\trecipient_code\tyear\tcommitment_usd\n"
        "  Programme   d'accès  À l'eau  \t6\t4\t261\t2018\t7\n");
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].description, "Programme d'accès À l'eau");
}

TEST(ParseRecords, FixtureFileParsesStablyAndRoundTrips) {
    std::ifstream a(fixture("crs_sample.csv"));
    auto first = parse_crs_records(a, fixture_schema());
    ASSERT_EQ(first.records.size(), 10u);
    EXPECT_EQ(first.records[1].description, "Primary school construction, teacher training");
    EXPECT_EQ(first.records[2].description, "Programme d'accès à l'eau potable et assainissement");
    EXPECT_EQ(first.records[7].sdg_labels->goals(), (std::vector<int>{2, 8}));
    EXPECT_FALSE(first.records[3].sdg_labels.has_value());

    // Oracle: an independent second read of the same file must agree
    // field by field, ids included.
    std::ifstream b(fixture("crs_sample.csv"));
    auto second = parse_crs_records(b, fixture_schema());
    ASSERT_EQ(second.records.size(), first.records.size());
    for (std::size_t i = 0; i < first.records.size(); ++i) EXPECT_EQ(first.records[i], second.records[i]) << i;

    // parse -> serialise -> parse is a fixed point.
    std::stringstream canon;
    write_records(canon, first.records);
    auto reread = read_records(canon);
    ASSERT_EQ(reread.size(), first.records.size());
    for (std::size_t i = 0; i < reread.size(); ++i) EXPECT_EQ(reread[i], first.records[i]);
    std::stringstream canon2;
    write_records(canon2, reread);
    EXPECT_EQ(canon.str(), canon2.str());
}

TEST(SplitDataset, PaperScaleRatio) {
    // Only the counts matter here; build lightweight records.
    std::vector<ProjectRecord> recs(151832);
    for (std::size_t i = 0; i < recs.size(); ++i) recs[i].id = std::to_string(i);
    auto s = split_dataset(recs, {3, 1}, 1);
    EXPECT_EQ(s.train.size(), 113874u);
    EXPECT_EQ(s.test.size(), 37958u);
}

TEST(SplitDataset, ExactDivisionAndDeterminism) {
    auto recs = make_records(4);
    auto s = split_dataset(recs, {3, 1}, 5);
    EXPECT_EQ(s.train.size(), 3u);
    EXPECT_EQ(s.test.size(), 1u);
    auto t = split_dataset(recs, {3, 1}, 5);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s.train[i].id, t.train[i].id);
    EXPECT_EQ(s.test[0].id, t.test[0].id);
}

TEST(SplitDataset, TooFewRecordsIsSizeError) {
    try {
        split_dataset(make_records(3), {3, 1}, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Size);
    }
}

TEST(SplitDataset, PartitionProperty) {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 4 + static_cast<int>(rng.index(200));
        const int a = 1 + static_cast<int>(rng.index(5)), b = 1 + static_cast<int>(rng.index(5));
        if (n < a + b) continue;
        auto recs = make_records(n);
        auto s = split_dataset(recs, {a, b}, rng.next_u64());
        std::multiset<std::string> ids;
        for (const auto& r : s.train) ids.insert(r.id);
        for (const auto& r : s.test) ids.insert(r.id);
        EXPECT_EQ(ids.size(), static_cast<std::size_t>(n));
        for (const auto& r : recs) EXPECT_EQ(ids.count(r.id), 1u);
        const double expected_train = double(n) * a / (a + b);
        EXPECT_LE(std::abs(double(s.train.size()) - expected_train), 1.0);
    }
}

TEST(GoalDefinitions, LoadsSeventeenSorted) {
    auto goals = load_goal_definitions(sdgclf::testing::data_path("sdg_goals.json"));
    ASSERT_EQ(goals.size(), 17u);
    for (int i = 0; i < 17; ++i) EXPECT_EQ(goals[static_cast<std::size_t>(i)].goal_index, i + 1);
    EXPECT_EQ(goals[0].title, "End poverty in all its forms everywhere");
    EXPECT_EQ(goals[1].title.rfind("End hunger", 0), 0u);
}

TEST(GoalDefinitions, SixteenGoalsIsDefinitionSetError) {
    try {
        load_goal_definitions(fixture("goals_16.json"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DefinitionSet);
    }
}

TEST(GoalDefinitions, DuplicateIndexRejected) {
    auto goals = sdgclf::testing::toy_goals();
    goals[16].goal_index = 3;
    EXPECT_THROW(validate_goal_definitions(goals), Error);
}

TEST(GoalDefinitions, SerialiseParseRoundTrip) {
    auto goals = load_goal_definitions(sdgclf::testing::data_path("sdg_goals.json"));
    std::istringstream in(goals_to_json(goals).dump(2));
    EXPECT_EQ(load_goal_definitions(in), goals);
}
