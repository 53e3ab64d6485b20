#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace helpers {

// Scratch directory unique to one test case, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::mt19937_64 gen(std::random_device{}());
        dir_ = std::filesystem::temp_directory_path() /
               ("crisk_test_" + tag + "_" + std::to_string(gen()));
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path path() const { return dir_; }

    std::string write(const std::string& name, const std::string& content) const {
        const auto p = dir_ / name;
        std::ofstream out(p);
        out << content;
        return p.string();
    }

private:
    std::filesystem::path dir_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace helpers
