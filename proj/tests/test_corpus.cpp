#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "support/fixtures.hpp"
#include "tiarec/corpus.hpp"
#include "tiarec/errors.hpp"
#include "tiarec/rng.hpp"

using namespace tiarec;
using testsupport::TempDir;
using testsupport::write_file;

namespace {

std::string rows_for_user(const std::string& user, int n, int ts_start = 0) {
    std::string out;
    for (int i = 0; i < n; ++i) {
        out += user + ",item" + std::to_string(i) + ",1.0," + std::to_string(ts_start + i) + "\n";
    }
    return out;
}

}  // namespace

TEST_CASE("split arithmetic: 10 events per user gives 7/1/2") {
    TempDir dir("corpus");
    write_file(dir.path() / "log.csv", rows_for_user("u1", 10) + rows_for_user("u2", 10));
    const DatasetSplit split = ingest(dir.path() / "log.csv");
    REQUIRE(split.users.size() == 2);
    for (std::int32_t u = 0; u < 2; ++u) {
        CHECK(split.train.at(u).events.size() == 7);
        CHECK(split.validation.at(u).events.size() == 1);
        CHECK(split.test.at(u).events.size() == 2);
    }
}

TEST_CASE("split arithmetic: 5 events per user gives 3/1/1") {
    TempDir dir("corpus");
    write_file(dir.path() / "log.csv", rows_for_user("u1", 5) + rows_for_user("u2", 5));
    const DatasetSplit split = ingest(dir.path() / "log.csv");
    for (std::int32_t u = 0; u < 2; ++u) {
        CHECK(split.train.at(u).events.size() == 3);
        CHECK(split.validation.at(u).events.size() == 1);
        CHECK(split.test.at(u).events.size() == 1);
    }
}

TEST_CASE("shuffled timestamps come out sorted (oracle: independent sort)") {
    Rng rng(7);
    TempDir dir("corpus");
    std::vector<std::int64_t> stamps;
    std::string text;
    for (int i = 0; i < 40; ++i) {
        const auto ts = static_cast<std::int64_t>(rng.index(1000));
        stamps.push_back(ts);
        text += "u,i" + std::to_string(i) + ",1.0," + std::to_string(ts) + "\n";
    }
    write_file(dir.path() / "log.csv", text);
    const DatasetSplit split = ingest(dir.path() / "log.csv");

    std::vector<std::int64_t> got;
    for (const auto* portion : {&split.train, &split.validation, &split.test}) {
        for (const auto& [u, seq] : *portion) {
            for (const auto& ev : seq.events) got.push_back(ev.timestamp);
        }
    }
    std::stable_sort(stamps.begin(), stamps.end());
    CHECK(got == stamps);
}

TEST_CASE("tie-break on equal timestamps preserves input order") {
    TempDir dir("corpus");
    write_file(dir.path() / "log.csv", "u,a,1,5\nu,b,1,5\nu,c,1,4\nu,d,1,5\nu,e,1,6\n");
    const DatasetSplit split = ingest(dir.path() / "log.csv");
    std::vector<std::string> order;
    for (const auto* portion : {&split.train, &split.validation, &split.test}) {
        for (const auto& [u, seq] : *portion) {
            for (const auto& ev : seq.events) order.push_back(split.items.id(ev.item));
        }
    }
    CHECK(order == std::vector<std::string>{"c", "a", "b", "d", "e"});
}

TEST_CASE("vocabulary order is first appearance") {
    TempDir dir("corpus");
    write_file(dir.path() / "log.csv", "u2,x,1,0\nu1,y,1,1\nu2,y,1,2\nu3,x,1,3\nu3,z,1,4\n");
    const DatasetSplit split = ingest(dir.path() / "log.csv");
    CHECK(split.users.ids() == std::vector<std::string>{"u2", "u1", "u3"});
    CHECK(split.items.ids() == std::vector<std::string>{"x", "y", "z"});
}

TEST_CASE("malformed rows and empty files are rejected") {
    TempDir dir("corpus");
    SUBCASE("bad timestamp names the line") {
        write_file(dir.path() / "log.csv", "u,a,1,0\nu,b,1,1\nu,c,1,oops\n");
        try {
            ingest(dir.path() / "log.csv");
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        }
    }
    SUBCASE("missing fields name the line") {
        write_file(dir.path() / "log.csv", "u,a,1,0\nu,b\n");
        try {
            ingest(dir.path() / "log.csv");
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    SUBCASE("empty file") {
        write_file(dir.path() / "log.csv", "");
        CHECK_THROWS_AS(ingest(dir.path() / "log.csv"), DataError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(ingest(dir.path() / "nope.csv"), DataError);
    }
}

TEST_CASE("category file: unknown items are skipped, known ones land") {
    TempDir dir("corpus");
    write_file(dir.path() / "log.csv", "u,a,1,0\nu,b,1,1\nu,a,1,2\nu,b,1,3\nu,a,1,4\n");
    write_file(dir.path() / "cats.csv", "a,Drama\nghost,War\nb,Comedy\n");
    IngestOptions opts;
    opts.category_path = dir.path() / "cats.csv";
    const DatasetSplit split = ingest(dir.path() / "log.csv", opts);
    REQUIRE(split.has_categories());
    CHECK(split.category_of_item.at(split.items.find("a")) == "Drama");
    CHECK(split.category_of_item.at(split.items.find("b")) == "Comedy");
    CHECK(split.category_of_item.size() == 2);
}

namespace {

DatasetSplit categorized_split(const std::vector<std::pair<std::string, std::string>>& events,
                               const std::map<std::string, std::string>& categories) {
    // events: (user, item); timestamps follow input order.
    TempDir dir("corpus-cat");
    std::string text;
    int ts = 0;
    for (const auto& [user, item] : events) {
        text += user + "," + item + ",1.0," + std::to_string(ts++) + "\n";
    }
    std::string cats;
    for (const auto& [item, cat] : categories) cats += item + "," + cat + "\n";
    write_file(dir.path() / "log.csv", text);
    write_file(dir.path() / "cats.csv", cats);
    IngestOptions opts;
    opts.category_path = dir.path() / "cats.csv";
    return ingest(dir.path() / "log.csv", opts);
}

}  // namespace

TEST_CASE("rare-interaction fraction: single category means no rare users") {
    std::vector<std::pair<std::string, std::string>> events;
    for (int u = 0; u < 4; ++u) {
        for (int i = 0; i < 3; ++i) events.emplace_back("u" + std::to_string(u), "a");
    }
    const auto split = categorized_split(events, {{"a", "Pop"}});
    CHECK(rare_interaction_user_fraction(split, 0.05) == 0.0);
}

TEST_CASE("rare-interaction fraction: counts {8,1} at 5% of mean 4.5 has no rare users") {
    // Four users; category A appears 8 times, B once. cutoff = 0.05*4.5 =
    // 0.225 and B's count 1 is not below it.
    std::vector<std::pair<std::string, std::string>> events;
    for (int i = 0; i < 2; ++i) {
        events.emplace_back("u0", "a");
        events.emplace_back("u1", "a");
        events.emplace_back("u2", "a");
        events.emplace_back("u3", "a");
    }
    events.emplace_back("u0", "b");
    const auto split = categorized_split(events, {{"a", "A"}, {"b", "B"}});
    CHECK(rare_interaction_user_fraction(split, 0.05) == 0.0);
}

TEST_CASE("rare-interaction fraction: one of ten users touches a count-1 category vs mean 100") {
    // Category X: 199 events, category Y: 1 event -> mean 100, cutoff 5.
    std::vector<std::pair<std::string, std::string>> events;
    for (int u = 0; u < 10; ++u) {
        for (int i = 0; i < (u == 0 ? 19 : 20); ++i) {
            events.emplace_back("u" + std::to_string(u), "x");
        }
    }
    events.emplace_back("u0", "y");
    const auto split = categorized_split(events, {{"x", "X"}, {"y", "Y"}});
    CHECK(rare_interaction_user_fraction(split, 0.05) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("rare-interaction fraction: errors and monotonicity in the threshold") {
    TempDir dir("corpus");
    write_file(dir.path() / "log.csv", rows_for_user("u1", 5));
    const DatasetSplit no_cats = ingest(dir.path() / "log.csv");
    CHECK_THROWS_AS(rare_interaction_user_fraction(no_cats, 0.05), DataError);

    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::pair<std::string, std::string>> events;
        std::map<std::string, std::string> cats;
        const int users = 3 + static_cast<int>(rng.index(5));
        const int items = 4 + static_cast<int>(rng.index(6));
        for (int i = 0; i < items; ++i) {
            cats["i" + std::to_string(i)] = "c" + std::to_string(rng.index(4));
        }
        for (int u = 0; u < users; ++u) {
            const int n = 2 + static_cast<int>(rng.index(8));
            for (int e = 0; e < n; ++e) {
                events.emplace_back("u" + std::to_string(u),
                                    "i" + std::to_string(rng.index(items)));
            }
        }
        const auto split = categorized_split(events, cats);
        double prev = 0.0;
        for (double threshold : {0.01, 0.05, 0.2, 0.5, 1.0, 2.0}) {
            const double frac = rare_interaction_user_fraction(split, threshold);
            CHECK(frac >= prev);
            prev = frac;
        }
    }
}

TEST_CASE("partition property: train+val+test covers every event exactly once") {
    Rng rng(3);
    for (int trial = 0; trial < 25; ++trial) {
        TempDir dir("corpus");
        std::string text;
        const int users = 1 + static_cast<int>(rng.index(6));
        std::map<std::string, int> expected;
        for (int u = 0; u < users; ++u) {
            const int n = 1 + static_cast<int>(rng.index(14));
            expected["u" + std::to_string(u)] = n;
            text += rows_for_user("u" + std::to_string(u), n);
        }
        write_file(dir.path() / "log.csv", text);
        const DatasetSplit split = ingest(dir.path() / "log.csv");
        for (const auto& [name, n] : expected) {
            const std::int32_t u = split.users.find(name);
            REQUIRE(u >= 0);
            CHECK(total_events_of_user(split, u) == n);
        }
    }
}

TEST_CASE("round-trip through the canonical format is the identity") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        TempDir dir("corpus");
        std::string text;
        const int users = 1 + static_cast<int>(rng.index(5));
        for (int u = 0; u < users; ++u) {
            const int n = 1 + static_cast<int>(rng.index(12));
            for (int i = 0; i < n; ++i) {
                text += "user" + std::to_string(u) + ",it" + std::to_string(rng.index(9)) + "," +
                        std::to_string(rng.uniform(0.5, 5.0)) + "," +
                        std::to_string(rng.index(500)) + "\n";
            }
        }
        write_file(dir.path() / "raw.csv", text);
        const DatasetSplit first = ingest(dir.path() / "raw.csv");

        // Canonicalize once, then the writer/reader pair must be a fixed
        // point both on bytes and on the parsed structure.
        write_split(first, dir.path() / "c1.csv");
        const DatasetSplit canon = ingest(dir.path() / "c1.csv");
        write_split(canon, dir.path() / "c2.csv");
        CHECK(testsupport::read_file(dir.path() / "c1.csv") ==
              testsupport::read_file(dir.path() / "c2.csv"));
        const DatasetSplit again = ingest(dir.path() / "c2.csv");
        CHECK(again == canon);
    }
}

TEST_CASE("stats JSON carries counts and the rare fraction") {
    std::vector<std::pair<std::string, std::string>> events;
    for (int i = 0; i < 10; ++i) events.emplace_back("u0", "a");
    events.emplace_back("u1", "b");
    for (int i = 0; i < 9; ++i) events.emplace_back("u1", "a");
    const auto split = categorized_split(events, {{"a", "A"}, {"b", "B"}});
    const DatasetStats stats = dataset_stats(split, 0.5);
    CHECK(stats.users == 2);
    CHECK(stats.items == 2);
    CHECK(stats.events == 20);
    CHECK(stats.events == stats.train_events + stats.validation_events + stats.test_events);
    CHECK(stats.category_counts.at("A") == 19);
    CHECK(stats.category_counts.at("B") == 1);
    REQUIRE(stats.rare_user_fraction.has_value());
    CHECK(*stats.rare_user_fraction == doctest::Approx(0.5));  // only u1 touched B (1 < 0.5*10)
    const std::string json = stats_to_json(stats);
    CHECK(json.find("\"users\": 2") != std::string::npos);
    CHECK(json.find("rare_user_fraction") != std::string::npos);
}
