#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace tiarec {

// Ordered id set; position is the dense index used everywhere downstream.
// Order of first appearance in the input is preserved, which also fixes all
// tie-breaking downstream (nearest-item lookups break ties by this order).
class Vocabulary {
  public:
    std::int32_t add(const std::string& id);           // inserts if absent
    std::int32_t find(const std::string& id) const;    // -1 if absent
    const std::string& id(std::int32_t index) const { return ids_.at(index); }
    std::int32_t size() const { return static_cast<std::int32_t>(ids_.size()); }
    const std::vector<std::string>& ids() const { return ids_; }

    bool operator==(const Vocabulary& other) const { return ids_ == other.ids_; }

  private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::int32_t> index_;
};

// One logged user-item event. user/item are vocabulary indices. A missing
// rating is stored as NaN (and treated as equal to itself when comparing).
struct Interaction {
    std::int32_t user = -1;
    std::int32_t item = -1;
    double rating = 0.0;
    std::int64_t timestamp = 0;

    bool operator==(const Interaction& o) const {
        const bool rating_eq =
            rating == o.rating || (std::isnan(rating) && std::isnan(o.rating));
        return user == o.user && item == o.item && timestamp == o.timestamp && rating_eq;
    }
};

// A user's events sorted ascending by timestamp (input order breaks ties).
struct UserSequence {
    std::int32_t user = -1;
    std::vector<Interaction> events;

    bool operator==(const UserSequence&) const = default;
};

using SequenceMap = std::map<std::int32_t, UserSequence>;

// Per-user chronological 70/10/20 split. A user appears in a portion's map
// only when that portion is non-empty for them.
struct DatasetSplit {
    Vocabulary users;
    Vocabulary items;
    SequenceMap train;
    SequenceMap validation;
    SequenceMap test;
    // item index -> category label; empty when no category file was given.
    std::unordered_map<std::int32_t, std::string> category_of_item;

    bool has_categories() const { return !category_of_item.empty(); }
    bool operator==(const DatasetSplit& other) const;
};

struct IngestOptions {
    char delimiter = ',';  // ',' for csv, '\t' for tsv
    int user_col = 0;
    int item_col = 1;
    int rating_col = 2;    // -1 when the file has no rating column
    int timestamp_col = 3;
    // Optional `item<delim>category` file; unknown items are skipped with a
    // warning on stderr.
    std::optional<std::filesystem::path> category_path;
};

// Parses the log, sorts each user's events by timestamp (stable), and cuts
// the first 70% into train, the next 10% into validation and the rest into
// test (floor rounding at both boundaries).
// Throws DataError on a malformed row (message carries the line number) or
// an empty file.
DatasetSplit ingest(const std::filesystem::path& path, const IngestOptions& options = {});

// Canonical writer: users in vocabulary order, events in chronological
// order, columns user,item,rating,timestamp. ingest(write(s)) == s for any
// split that came from a canonical file. Categories go to `category_path`
// when set and the split has any.
void write_split(const DatasetSplit& split, const std::filesystem::path& path,
                 const std::optional<std::filesystem::path>& category_path = std::nullopt);

// Fraction of users having at least one interaction whose item-category
// frequency (counted over the whole dataset) is below
// threshold_fraction * mean category frequency.
// Throws DataError when the split has no categories.
double rare_interaction_user_fraction(const DatasetSplit& split, double threshold_fraction);

struct DatasetStats {
    std::int64_t users = 0;
    std::int64_t items = 0;
    std::int64_t events = 0;
    std::int64_t train_events = 0;
    std::int64_t validation_events = 0;
    std::int64_t test_events = 0;
    std::map<std::string, std::int64_t> category_counts;  // whole dataset
    std::optional<double> rare_user_fraction;              // present with categories
};

DatasetStats dataset_stats(const DatasetSplit& split, double rare_threshold = 0.05);
std::string stats_to_json(const DatasetStats& stats);

// Event count across all three portions for one user (0 if unknown).
std::int64_t total_events_of_user(const DatasetSplit& split, std::int32_t user);

}  // namespace tiarec
