#include "tiarec/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "tiarec/errors.hpp"

namespace tiarec {

std::int32_t Vocabulary::add(const std::string& id) {
    auto it = index_.find(id);
    if (it != index_.end()) return it->second;
    const auto idx = static_cast<std::int32_t>(ids_.size());
    ids_.push_back(id);
    index_.emplace(id, idx);
    return idx;
}

std::int32_t Vocabulary::find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? -1 : it->second;
}

bool DatasetSplit::operator==(const DatasetSplit& other) const {
    return users == other.users && items == other.items && train == other.train &&
           validation == other.validation && test == other.test &&
           category_of_item == other.category_of_item;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(delim, start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

double parse_rating(const std::string& s, std::int64_t line_no) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) + ": bad rating '" + s + "'");
    }
}

std::int64_t parse_timestamp(const std::string& s, std::int64_t line_no) {
    std::int64_t v = 0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last) {
        throw DataError("line " + std::to_string(line_no) + ": bad timestamp '" + s + "'");
    }
    if (v < 0) {
        throw DataError("line " + std::to_string(line_no) + ": negative timestamp " + s);
    }
    return v;
}

void read_category_file(DatasetSplit& split, const std::filesystem::path& path, char delim) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open category file: " + path.string());
    std::string line;
    std::int64_t line_no = 0;
    std::int64_t skipped = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_line(line, delim);
        if (fields.size() < 2) {
            throw DataError("category file line " + std::to_string(line_no) + ": expected 2 fields");
        }
        const std::int32_t item = split.items.find(fields[0]);
        if (item < 0) {
            ++skipped;
            continue;
        }
        split.category_of_item[item] = fields[1];
    }
    if (skipped > 0) {
        std::cerr << "warning: category file " << path.string() << ": skipped " << skipped
                  << " row(s) with unknown items\n";
    }
}

}  // namespace

DatasetSplit ingest(const std::filesystem::path& path, const IngestOptions& options) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path.string());

    DatasetSplit split;
    std::map<std::int32_t, std::vector<Interaction>> by_user;

    const int needed = 1 + std::max({options.user_col, options.item_col, options.rating_col,
                                     options.timestamp_col});
    std::string line;
    std::int64_t line_no = 0;
    std::int64_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_line(line, options.delimiter);
        if (static_cast<int>(fields.size()) < needed) {
            throw DataError("line " + std::to_string(line_no) + ": expected at least " +
                            std::to_string(needed) + " fields, found " +
                            std::to_string(fields.size()));
        }
        Interaction ev;
        ev.user = split.users.add(fields[options.user_col]);
        ev.item = split.items.add(fields[options.item_col]);
        ev.rating = options.rating_col >= 0 ? parse_rating(fields[options.rating_col], line_no)
                                            : std::numeric_limits<double>::quiet_NaN();
        ev.timestamp = parse_timestamp(fields[options.timestamp_col], line_no);
        by_user[ev.user].push_back(ev);
        ++rows;
    }
    if (rows == 0) throw DataError("empty interaction file: " + path.string());

    for (auto& [user, events] : by_user) {
        std::stable_sort(events.begin(), events.end(),
                         [](const Interaction& a, const Interaction& b) {
                             return a.timestamp < b.timestamp;
                         });
        const auto n = static_cast<std::int64_t>(events.size());
        const auto b1 = static_cast<std::int64_t>(std::floor(0.7 * static_cast<double>(n)));
        const auto b2 = static_cast<std::int64_t>(std::floor(0.8 * static_cast<double>(n)));
        auto portion = [&](std::int64_t lo, std::int64_t hi) {
            return std::vector<Interaction>(events.begin() + lo, events.begin() + hi);
        };
        if (b1 > 0) split.train.emplace(user, UserSequence{user, portion(0, b1)});
        if (b2 > b1) split.validation.emplace(user, UserSequence{user, portion(b1, b2)});
        if (n > b2) split.test.emplace(user, UserSequence{user, portion(b2, n)});
    }

    if (options.category_path) {
        read_category_file(split, *options.category_path, options.delimiter);
    }
    return split;
}

void write_split(const DatasetSplit& split, const std::filesystem::path& path,
                 const std::optional<std::filesystem::path>& category_path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    char buf[64];
    auto write_events = [&](const SequenceMap& portion, std::int32_t user) {
        auto it = portion.find(user);
        if (it == portion.end()) return;
        for (const Interaction& ev : it->second.events) {
            std::snprintf(buf, sizeof(buf), "%.17g", ev.rating);
            out << split.users.id(ev.user) << ',' << split.items.id(ev.item) << ',' << buf << ','
                << ev.timestamp << '\n';
        }
    };
    for (std::int32_t u = 0; u < split.users.size(); ++u) {
        write_events(split.train, u);
        write_events(split.validation, u);
        write_events(split.test, u);
    }
    if (!out) throw DataError("write failed: " + path.string());

    if (category_path && split.has_categories()) {
        std::ofstream cat(*category_path);
        if (!cat) throw DataError("cannot open for writing: " + category_path->string());
        for (std::int32_t i = 0; i < split.items.size(); ++i) {
            auto it = split.category_of_item.find(i);
            if (it == split.category_of_item.end()) continue;
            cat << split.items.id(i) << ',' << it->second << '\n';
        }
    }
}

namespace {

// Event count per category over train + validation + test.
std::map<std::string, std::int64_t> category_event_counts(const DatasetSplit& split) {
    std::map<std::string, std::int64_t> counts;
    auto tally = [&](const SequenceMap& portion) {
        for (const auto& [user, seq] : portion) {
            for (const Interaction& ev : seq.events) {
                auto it = split.category_of_item.find(ev.item);
                if (it != split.category_of_item.end()) ++counts[it->second];
            }
        }
    };
    tally(split.train);
    tally(split.validation);
    tally(split.test);
    return counts;
}

}  // namespace

double rare_interaction_user_fraction(const DatasetSplit& split, double threshold_fraction) {
    if (!split.has_categories()) {
        throw DataError("rare_interaction_user_fraction: dataset has no categories");
    }
    if (threshold_fraction <= 0.0) {
        throw ConfigError("rare_interaction_user_fraction: threshold must be positive");
    }
    const auto counts = category_event_counts(split);
    if (counts.empty()) throw DataError("rare_interaction_user_fraction: no categorized events");

    double total = 0.0;
    for (const auto& [cat, n] : counts) total += static_cast<double>(n);
    const double mean = total / static_cast<double>(counts.size());
    const double cutoff = threshold_fraction * mean;

    std::vector<char> rare(split.users.size(), 0);
    auto scan = [&](const SequenceMap& portion) {
        for (const auto& [user, seq] : portion) {
            if (rare[user]) continue;
            for (const Interaction& ev : seq.events) {
                auto it = split.category_of_item.find(ev.item);
                if (it == split.category_of_item.end()) continue;
                if (static_cast<double>(counts.at(it->second)) < cutoff) {
                    rare[user] = 1;
                    break;
                }
            }
        }
    };
    scan(split.train);
    scan(split.validation);
    scan(split.test);

    std::int64_t hits = 0;
    for (char c : rare) hits += c;
    return split.users.size() == 0 ? 0.0
                                   : static_cast<double>(hits) /
                                         static_cast<double>(split.users.size());
}

std::int64_t total_events_of_user(const DatasetSplit& split, std::int32_t user) {
    std::int64_t n = 0;
    for (const SequenceMap* portion : {&split.train, &split.validation, &split.test}) {
        auto it = portion->find(user);
        if (it != portion->end()) n += static_cast<std::int64_t>(it->second.events.size());
    }
    return n;
}

DatasetStats dataset_stats(const DatasetSplit& split, double rare_threshold) {
    DatasetStats s;
    s.users = split.users.size();
    s.items = split.items.size();
    auto count = [](const SequenceMap& portion) {
        std::int64_t n = 0;
        for (const auto& [user, seq] : portion) n += static_cast<std::int64_t>(seq.events.size());
        return n;
    };
    s.train_events = count(split.train);
    s.validation_events = count(split.validation);
    s.test_events = count(split.test);
    s.events = s.train_events + s.validation_events + s.test_events;
    if (split.has_categories()) {
        s.category_counts = category_event_counts(split);
        s.rare_user_fraction = rare_interaction_user_fraction(split, rare_threshold);
    }
    return s;
}

std::string stats_to_json(const DatasetStats& stats) {
    nlohmann::ordered_json j;
    j["users"] = stats.users;
    j["items"] = stats.items;
    j["events"] = stats.events;
    j["train_events"] = stats.train_events;
    j["validation_events"] = stats.validation_events;
    j["test_events"] = stats.test_events;
    if (!stats.category_counts.empty()) {
        nlohmann::ordered_json cats;
        for (const auto& [cat, n] : stats.category_counts) cats[cat] = n;
        j["category_counts"] = cats;
    }
    if (stats.rare_user_fraction) j["rare_user_fraction"] = *stats.rare_user_fraction;
    return j.dump(2);
}

}  // namespace tiarec
