#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tiarec/rng.hpp"
#include "tiarec/table.hpp"

namespace tiarec::testsupport {

// Unique writable directory under the system temp root; removed on
// destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("tiarec-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline VectorTable random_table(int dim, int count, Rng& rng, const std::string& prefix = "item") {
    std::vector<std::string> keys;
    keys.reserve(count);
    for (int i = 0; i < count; ++i) keys.push_back(prefix + std::to_string(i));
    VectorTable table(dim, keys);
    for (double& v : table.values()) v = rng.uniform(-1.0, 1.0);
    return table;
}

}  // namespace tiarec::testsupport
