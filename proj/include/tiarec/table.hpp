#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tiarec {

// Dense table of fixed-width vectors keyed by opaque string ids, used for
// item embeddings and for PMF user/item factors. Row order is the key
// order, which is also the on-disk payload order.
class VectorTable {
  public:
    VectorTable() = default;
    VectorTable(int dim, std::vector<std::string> keys);

    int dim() const { return dim_; }
    std::int64_t count() const { return static_cast<std::int64_t>(keys_.size()); }
    const std::vector<std::string>& keys() const { return keys_; }

    std::span<double> row(std::int32_t i);
    std::span<const double> row(std::int32_t i) const;

    // -1 if absent.
    std::int32_t find(std::string_view key) const;
    // Throws DataError if absent.
    std::span<const double> row_of(std::string_view key) const;

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    // Copy with rows rearranged to match `key_order` exactly.
    // Throws DataError when a requested key is missing.
    VectorTable aligned_to(const std::vector<std::string>& key_order) const;

    bool operator==(const VectorTable& other) const = default;

  private:
    int dim_ = 0;
    std::vector<std::string> keys_;
    std::vector<double> values_;  // keys.size() x dim, row-major
    std::unordered_map<std::string, std::int32_t> index_;
};

// On-disk format: `<stem>.json` manifest {format_version, dim, count, dtype,
// order:[keys]} plus `<stem>.bin` with count*dim little-endian float32 values
// in manifest order.
void save_table(const std::filesystem::path& stem, const VectorTable& table);
VectorTable load_table(const std::filesystem::path& stem);

// Raw little-endian float32 payload helpers (shared with checkpoints).
void write_f32_payload(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f32_payload(const std::filesystem::path& path, std::size_t expected_count);

}  // namespace tiarec
