#include "laptool/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "laptool/error.hpp"

namespace laptool {

namespace {

constexpr std::array<char, 4> kFeatureMagic = {'F', 'S', 'T', 'R'};
constexpr std::uint32_t kFeatureVersion = 1;

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

bool parse_int(const std::string& token, long long& out) {
    if (token.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stoll(token, &pos);
    } catch (const std::exception&) {
        return false;
    }
    return pos == token.size();
}

std::vector<std::string> tokens(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

// Little-endian encoding independent of host order.
void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> bytes = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw ParseError("feature file truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

}  // namespace

std::vector<LabelVector> AnnotationSet::labels() const {
    std::vector<LabelVector> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.labels);
    return out;
}

std::vector<FrameRecord> AnnotationSet::video(int video_id) const {
    std::vector<FrameRecord> out;
    for (const auto& r : records) {
        if (r.video_id == video_id) out.push_back(r);
    }
    std::sort(out.begin(), out.end(),
              [](const FrameRecord& a, const FrameRecord& b) { return a.frame_index < b.frame_index; });
    return out;
}

std::vector<int> AnnotationSet::video_ids() const {
    std::set<int> ids;
    for (const auto& r : records) ids.insert(r.video_id);
    return {ids.begin(), ids.end()};
}

AnnotationSet parse_annotations(std::istream& in) {
    AnnotationSet set;
    bool have_tools = false;
    std::set<FrameKey> seen;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty()) continue;
        if (line.front() == '#') {
            const std::string body = trim(line.substr(1));
            if (body.rfind("tools:", 0) == 0) {
                if (have_tools || !set.records.empty()) throw ParseError("tools header must come first", line_no);
                std::vector<std::string> names;
                std::istringstream list(body.substr(6));
                std::string name;
                while (std::getline(list, name, ',')) names.push_back(trim(name));
                try {
                    set.tools = ToolVocabulary(std::move(names));
                } catch (const DomainError& e) {
                    throw ParseError(e.what(), line_no);
                }
                have_tools = true;
            }
            continue;
        }

        const auto fields = tokens(line);
        if (fields.size() < 3) throw ParseError("expected 'video_id frame_index bits...'", line_no);
        if (!have_tools) {
            const auto k = static_cast<int>(fields.size()) - 2;
            if (k > LabelVector::kMaxTools) throw ParseError("too many label columns", line_no);
            set.tools = ToolVocabulary::generic(k);
            have_tools = true;
        }
        const int k = set.tools.size();
        if (static_cast<int>(fields.size()) != k + 2) {
            throw ParseError("expected " + std::to_string(k) + " label bits, got " +
                                 std::to_string(fields.size() - 2),
                             line_no);
        }
        long long video = 0;
        long long frame = 0;
        if (!parse_int(fields[0], video) || !parse_int(fields[1], frame)) {
            throw ParseError("video_id and frame_index must be integers", line_no);
        }
        if (frame < 0) throw ParseError("frame_index must be >= 0", line_no);
        LabelVector labels(k);
        for (int t = 0; t < k; ++t) {
            const auto& bit = fields[static_cast<std::size_t>(t) + 2];
            if (bit != "0" && bit != "1") throw ParseError("label bit must be 0 or 1, got '" + bit + "'", line_no);
            labels.set(t, bit == "1");
        }
        FrameRecord record{static_cast<int>(video), static_cast<int>(frame), labels};
        if (!seen.insert(record.key()).second) {
            throw ParseError("duplicate frame (video " + fields[0] + ", frame " + fields[1] + ")", line_no);
        }
        set.records.push_back(record);
    }
    return set;
}

AnnotationSet parse_annotations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open annotation file " + path.string());
    try {
        return parse_annotations(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_annotations(std::ostream& out, const AnnotationSet& set) {
    out << "# tools: ";
    for (int k = 0; k < set.tools.size(); ++k) out << (k ? "," : "") << set.tools.name(k);
    out << '\n';
    for (const auto& r : set.records) {
        out << r.video_id << ' ' << r.frame_index;
        for (int k = 0; k < r.labels.size(); ++k) out << ' ' << (r.labels.test(k) ? 1 : 0);
        out << '\n';
    }
}

std::vector<FrameRecord> import_tool_annotation(std::istream& in, int video_id, const ToolVocabulary& tools,
                                                int frames_per_label) {
    if (frames_per_label < 1) throw DomainError("frames_per_label must be >= 1");
    std::string raw;
    std::size_t line_no = 0;
    std::vector<int> column_to_tool;
    std::vector<FrameRecord> out;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto fields = tokens(raw);
        if (fields.empty()) continue;
        if (column_to_tool.empty()) {
            if (fields.size() < 2) throw ParseError("header needs 'Frame' plus tool names", line_no);
            std::vector<bool> covered(static_cast<std::size_t>(tools.size()), false);
            for (std::size_t c = 1; c < fields.size(); ++c) {
                const int tool = tools.index_of(fields[c]);
                if (tool < 0) throw ParseError("unknown tool column '" + fields[c] + "'", line_no);
                covered[static_cast<std::size_t>(tool)] = true;
                column_to_tool.push_back(tool);
            }
            if (std::find(covered.begin(), covered.end(), false) != covered.end()) {
                throw ParseError("header does not name every tool", line_no);
            }
            continue;
        }
        if (fields.size() != column_to_tool.size() + 1) throw ParseError("wrong column count", line_no);
        long long frame = 0;
        if (!parse_int(fields[0], frame) || frame < 0) throw ParseError("bad frame number", line_no);
        if (frame % frames_per_label != 0) {
            throw ParseError("frame " + fields[0] + " is not a multiple of " + std::to_string(frames_per_label),
                             line_no);
        }
        LabelVector labels(tools.size());
        for (std::size_t c = 0; c < column_to_tool.size(); ++c) {
            const auto& bit = fields[c + 1];
            if (bit != "0" && bit != "1") throw ParseError("label bit must be 0 or 1", line_no);
            if (bit == "1") labels.set(column_to_tool[c]);
        }
        out.push_back({video_id, static_cast<int>(frame / frames_per_label), labels});
    }
    return out;
}

std::size_t FeatureStore::size() const {
    std::size_t n = 0;
    for (const auto& [id, frames] : videos_) n += frames.size();
    return n;
}

bool FeatureStore::contains(FrameKey key) const {
    const auto v = videos_.find(key.video_id);
    return v != videos_.end() && v->second.count(key.frame_index) > 0;
}

const FeatureStore::Vector& FeatureStore::at(FrameKey key) const {
    const auto v = videos_.find(key.video_id);
    if (v != videos_.end()) {
        const auto f = v->second.find(key.frame_index);
        if (f != v->second.end()) return f->second;
    }
    throw LookupError("no features for video " + std::to_string(key.video_id) + " frame " +
                      std::to_string(key.frame_index));
}

std::vector<int> FeatureStore::video_ids() const {
    std::vector<int> ids;
    for (const auto& [id, frames] : videos_) ids.push_back(id);
    return ids;
}

std::vector<int> FeatureStore::frames(int video_id) const {
    std::vector<int> out;
    const auto v = videos_.find(video_id);
    if (v == videos_.end()) return out;
    for (const auto& [frame, features] : v->second) out.push_back(frame);
    return out;
}

void FeatureStore::insert(FrameKey key, Vector features) {
    if (features.size() != dim_) {
        throw ShapeError("feature vector has length " + std::to_string(features.size()) + ", store dim is " +
                         std::to_string(dim_));
    }
    if (!features.allFinite()) throw DomainError("feature vector contains non-finite values");
    if (key.frame_index < 0) throw DomainError("frame_index must be >= 0");
    videos_[key.video_id][key.frame_index] = std::move(features);
}

void FeatureStore::write_video(std::ostream& out, int video_id) const {
    const auto v = videos_.find(video_id);
    if (v == videos_.end()) throw LookupError("no video " + std::to_string(video_id) + " in feature store");
    out.write(kFeatureMagic.data(), 4);
    put_u32(out, kFeatureVersion);
    put_u32(out, static_cast<std::uint32_t>(dim_));
    put_u32(out, static_cast<std::uint32_t>(v->second.size()));
    for (const auto& [frame, features] : v->second) {
        put_u32(out, static_cast<std::uint32_t>(frame));
        for (Eigen::Index d = 0; d < features.size(); ++d) put_f32(out, features[d]);
    }
}

void FeatureStore::read_video(std::istream& in, int video_id) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4) || magic != kFeatureMagic) throw ParseError("feature file: bad magic");
    const auto version = get_u32(in);
    if (version != kFeatureVersion) throw ParseError("feature file: unsupported version " + std::to_string(version));
    const auto dim = static_cast<int>(get_u32(in));
    if (size() == 0 && dim_ == 0) dim_ = dim;
    if (dim != dim_) {
        throw ParseError("feature file: dim " + std::to_string(dim) + " does not match store dim " +
                         std::to_string(dim_));
    }
    const auto count = get_u32(in);
    for (std::uint32_t n = 0; n < count; ++n) {
        const auto frame = get_u32(in);
        Vector features(dim);
        for (int d = 0; d < dim; ++d) features[d] = get_f32(in);
        if (!features.allFinite()) throw ParseError("feature file: non-finite value at frame " + std::to_string(frame));
        videos_[video_id][static_cast<int>(frame)] = std::move(features);
    }
}

void FeatureStore::save_directory(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& [id, frames] : videos_) {
        std::ofstream out(dir / ("video_" + std::to_string(id) + ".fstr"), std::ios::binary);
        if (!out) throw Error("cannot write feature file in " + dir.string());
        write_video(out, id);
    }
}

FeatureStore FeatureStore::load_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ParseError("feature directory " + dir.string() + " not found");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".fstr") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    FeatureStore store;
    for (const auto& file : files) {
        const auto stem = file.stem().string();
        long long id = 0;
        if (stem.rfind("video_", 0) != 0 || !parse_int(stem.substr(6), id)) {
            throw ParseError("feature file name must be video_<id>.fstr: " + file.string());
        }
        std::ifstream in(file, std::ios::binary);
        try {
            store.read_video(in, static_cast<int>(id));
        } catch (const ParseError& e) {
            throw ParseError(file.string() + ": " + e.what());
        }
    }
    return store;
}

SequenceWindow make_window(const FeatureStore& store, FrameKey query, int length, int interval) {
    if (length < 1) throw DomainError("window length must be >= 1");
    if (interval < 1) throw DomainError("inter-frame interval must be >= 1");
    store.at(query);  // query frame itself must exist

    const auto available = store.frames(query.video_id);
    SequenceWindow window;
    window.meta = query;
    window.features.reserve(static_cast<std::size_t>(length));
    for (int step = length - 1; step >= 0; --step) {
        const long long wanted = static_cast<long long>(query.frame_index) - static_cast<long long>(step) * interval;
        auto it = std::upper_bound(available.begin(), available.end(), wanted);
        const int frame = it == available.begin() ? available.front() : *std::prev(it);
        window.features.push_back(store.at({query.video_id, frame}));
    }
    return window;
}

CorpusStats corpus_stats(std::span<const FrameRecord> records, int tool_count) {
    CorpusStats stats;
    stats.per_tool.assign(static_cast<std::size_t>(tool_count), 0);
    for (const auto& r : records) {
        if (r.labels.size() != tool_count) throw DomainError("corpus_stats: inconsistent label width");
        ++stats.total;
        if (r.labels.empty()) ++stats.no_tools;
        for (int k = 0; k < tool_count; ++k) {
            if (r.labels.test(k)) ++stats.per_tool[static_cast<std::size_t>(k)];
        }
        ++stats.per_labelset[r.labels.value()];
    }
    return stats;
}

}  // namespace laptool
