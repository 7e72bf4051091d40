#include "cli/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include <openssl/sha.h>

#include <json.hpp>

#include "laptool/error.hpp"

namespace laptool::cli {

namespace {

std::string hex(const unsigned char* bytes, std::size_t n) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
        s += digits[bytes[i] >> 4];
        s += digits[bytes[i] & 0xf];
    }
    return s;
}

std::string sha1(std::string_view data) {
    unsigned char digest[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
    return hex(digest, SHA_DIGEST_LENGTH);
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string git_blob_sha1(std::string_view content) {
    std::string blob = "blob " + std::to_string(content.size());
    blob.push_back('\0');
    blob.append(content);
    return sha1(blob);
}

std::string git_blob_sha1_file(const std::filesystem::path& path) { return git_blob_sha1(slurp(path)); }

void Manifest::set(const std::string& key, const std::string& value) {
    auto it = std::find_if(config_.begin(), config_.end(), [&](const auto& kv) { return kv.first == key; });
    if (it != config_.end()) {
        it->second = value;
    } else {
        config_.emplace_back(key, value);
    }
}

void Manifest::add_input(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::recursive_directory_iterator(path)) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) inputs_.emplace_back(f.generic_string(), git_blob_sha1_file(f));
    } else {
        inputs_.emplace_back(path.generic_string(), git_blob_sha1_file(path));
    }
}

void Manifest::add_output(const std::filesystem::path& out_dir, const std::filesystem::path& relative) {
    outputs_.emplace_back(relative.generic_string(), git_blob_sha1_file(out_dir / relative));
}

std::string Manifest::config_hash() const {
    auto sorted = config_;
    std::sort(sorted.begin(), sorted.end());
    std::string text;
    for (const auto& [k, v] : sorted) {
        if (k == "out") continue;
        text += k + "=" + v + "\n";
    }
    return sha1(text);
}

void Manifest::write(const std::filesystem::path& out_dir) const {
    nlohmann::ordered_json j;
    j["format"] = 1;
    j["command"] = command_;
    if (seed_) j["seed"] = *seed_;
    j["config_hash"] = config_hash();
    auto sorted = config_;
    std::sort(sorted.begin(), sorted.end());
    j["config"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : sorted) j["config"][k] = v;
    j["inputs"] = nlohmann::ordered_json::array();
    for (const auto& [p, h] : inputs_) j["inputs"].push_back({{"path", p}, {"sha1", h}});
    j["outputs"] = nlohmann::ordered_json::array();
    for (const auto& [p, h] : outputs_) j["outputs"].push_back({{"path", p}, {"sha1", h}});
    const auto path = out_dir / (command_ + ".manifest.json");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace laptool::cli
