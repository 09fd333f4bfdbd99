#include "tiarec/table.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "tiarec/errors.hpp"

namespace tiarec {

static_assert(std::endian::native == std::endian::little,
              "payload files are little-endian; big-endian hosts need byte swaps");

VectorTable::VectorTable(int dim, std::vector<std::string> keys)
    : dim_(dim), keys_(std::move(keys)) {
    if (dim <= 0) throw ConfigError("VectorTable: dim must be positive");
    values_.assign(keys_.size() * static_cast<std::size_t>(dim), 0.0);
    index_.reserve(keys_.size());
    for (std::size_t i = 0; i < keys_.size(); ++i) {
        auto [it, inserted] = index_.emplace(keys_[i], static_cast<std::int32_t>(i));
        if (!inserted) throw DataError("VectorTable: duplicate key '" + keys_[i] + "'");
    }
}

std::span<double> VectorTable::row(std::int32_t i) {
    return {values_.data() + static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_)};
}

std::span<const double> VectorTable::row(std::int32_t i) const {
    return {values_.data() + static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_)};
}

std::int32_t VectorTable::find(std::string_view key) const {
    auto it = index_.find(std::string(key));
    return it == index_.end() ? -1 : it->second;
}

std::span<const double> VectorTable::row_of(std::string_view key) const {
    const std::int32_t i = find(key);
    if (i < 0) throw DataError("VectorTable: unknown key '" + std::string(key) + "'");
    return row(i);
}

VectorTable VectorTable::aligned_to(const std::vector<std::string>& key_order) const {
    VectorTable out(dim_, key_order);
    for (std::size_t i = 0; i < key_order.size(); ++i) {
        const auto src = row_of(key_order[i]);
        auto dst = out.row(static_cast<std::int32_t>(i));
        std::copy(src.begin(), src.end(), dst.begin());
    }
    return out;
}

void write_f32_payload(const std::filesystem::path& path, std::span<const double> values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    std::vector<float> buf(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) buf[i] = static_cast<float>(values[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw DataError("write failed: " + path.string());
}

std::vector<double> read_f32_payload(const std::filesystem::path& path,
                                     std::size_t expected_count) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw DataError("cannot open: " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expected_count * sizeof(float)) {
        throw DataError("payload size mismatch in " + path.string() + ": expected " +
                        std::to_string(expected_count * sizeof(float)) + " bytes, found " +
                        std::to_string(bytes));
    }
    in.seekg(0);
    std::vector<float> buf(expected_count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw DataError("read failed: " + path.string());
    std::vector<double> out(expected_count);
    for (std::size_t i = 0; i < expected_count; ++i) out[i] = static_cast<double>(buf[i]);
    return out;
}

void save_table(const std::filesystem::path& stem, const VectorTable& table) {
    nlohmann::ordered_json manifest;
    manifest["format_version"] = 1;
    manifest["dim"] = table.dim();
    manifest["count"] = table.count();
    manifest["dtype"] = "float32";
    manifest["order"] = table.keys();

    std::filesystem::path json_path = stem;
    json_path += ".json";
    std::ofstream out(json_path);
    if (!out) throw DataError("cannot open for writing: " + json_path.string());
    out << manifest.dump(2) << '\n';

    std::filesystem::path bin_path = stem;
    bin_path += ".bin";
    write_f32_payload(bin_path, table.values());
}

VectorTable load_table(const std::filesystem::path& stem) {
    std::filesystem::path json_path = stem;
    json_path += ".json";
    std::ifstream in(json_path);
    if (!in) throw DataError("cannot open: " + json_path.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad manifest " + json_path.string() + ": " + e.what());
    }
    if (manifest.value("format_version", 0) != 1) {
        throw DataError("unsupported format_version in " + json_path.string());
    }
    const int dim = manifest.at("dim").get<int>();
    auto keys = manifest.at("order").get<std::vector<std::string>>();
    const auto count = manifest.at("count").get<std::int64_t>();
    if (count != static_cast<std::int64_t>(keys.size())) {
        throw DataError("manifest count/order mismatch in " + json_path.string());
    }

    VectorTable table(dim, std::move(keys));
    std::filesystem::path bin_path = stem;
    bin_path += ".bin";
    table.values() = read_f32_payload(bin_path, static_cast<std::size_t>(count) * dim);
    return table;
}

}  // namespace tiarec
