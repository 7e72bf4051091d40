#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace laptool::cli {

/// SHA-1 of "blob <size>\0<content>", as `git hash-object` prints it.
std::string git_blob_sha1(std::string_view content);
std::string git_blob_sha1_file(const std::filesystem::path& path);

/// Run record written next to a command's outputs as <command>.manifest.json.
class Manifest {
public:
    explicit Manifest(std::string command) : command_(std::move(command)) {}

    void set_seed(std::uint64_t seed) { seed_ = seed; }
    void set(const std::string& key, const std::string& value);
    /// Files are hashed; directories contribute every regular file, sorted.
    void add_input(const std::filesystem::path& path);
    /// Hashed relative to the output directory.
    void add_output(const std::filesystem::path& out_dir, const std::filesystem::path& relative);

    /// SHA-1 over the sorted key=value lines (the output directory excluded).
    std::string config_hash() const;
    void write(const std::filesystem::path& out_dir) const;

private:
    std::string command_;
    std::optional<std::uint64_t> seed_;
    std::vector<std::pair<std::string, std::string>> config_;
    std::vector<std::pair<std::string, std::string>> inputs_;
    std::vector<std::pair<std::string, std::string>> outputs_;
};

}  // namespace laptool::cli
