#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "laptool/labelspace.hpp"

namespace laptool {

struct FrameKey {
    int video_id = 0;
    int frame_index = 0;

    friend auto operator<=>(const FrameKey&, const FrameKey&) = default;
};

struct FrameRecord {
    int video_id = 0;
    int frame_index = 0;
    LabelVector labels;

    FrameKey key() const { return {video_id, frame_index}; }
    friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

/// Parsed annotation file: vocabulary from the `# tools:` header plus records
/// in file order.
struct AnnotationSet {
    ToolVocabulary tools;
    std::vector<FrameRecord> records;

    std::vector<LabelVector> labels() const;
    /// Records of `video_id` sorted by frame index.
    std::vector<FrameRecord> video(int video_id) const;
    /// Distinct video ids, ascending.
    std::vector<int> video_ids() const;
};

/// Format: optional header `# tools: a,b,...` then `video_id frame_index b_1 ... b_K`
/// per line. Without a header K is taken from the first record and tools
/// are named tool0..tool{K-1}. Blank lines and other `#` lines are skipped.
AnnotationSet parse_annotations(std::istream& in);
AnnotationSet parse_annotations(const std::filesystem::path& path);
void write_annotations(std::ostream& out, const AnnotationSet& set);

/// Reads one per-video file in the challenge's original layout: a header row
/// `Frame <tool> <tool> ...` followed by `<frame> <bit> ...` rows at 25 fps.
/// Columns are reordered to `tools`; frame numbers are divided by
/// `frames_per_label` to give 1-fps indices.
std::vector<FrameRecord> import_tool_annotation(std::istream& in, int video_id, const ToolVocabulary& tools,
                                                int frames_per_label = 25);

/// Read-only map (video, frame) -> spatial feature vector.
class FeatureStore {
public:
    using Vector = Eigen::RowVectorXd;

    FeatureStore() = default;
    explicit FeatureStore(int dim) : dim_(dim) {}

    int dim() const { return dim_; }
    std::size_t size() const;
    bool contains(FrameKey key) const;
    /// Throws LookupError.
    const Vector& at(FrameKey key) const;
    std::vector<int> video_ids() const;
    /// Frame indices of a video, ascending.
    std::vector<int> frames(int video_id) const;

    /// Values must be finite and have length dim(). Replaces an existing entry.
    void insert(FrameKey key, Vector features);

    /// Binary: "FSTR", u32 version, u32 dim, u32 count, then count x (u32 frame, dim x f32).
    void write_video(std::ostream& out, int video_id) const;
    /// Merges one video file. Values round to f32 precision on disk.
    void read_video(std::istream& in, int video_id);

    /// `video_<id>.fstr` per video.
    void save_directory(const std::filesystem::path& dir) const;
    static FeatureStore load_directory(const std::filesystem::path& dir);

private:
    int dim_ = 0;
    std::map<int, std::map<int, Vector>> videos_;
};

struct SequenceWindow {
    std::vector<FeatureStore::Vector> features;  // oldest -> newest
    int target = -1;                             // superclass index, -1 if unknown
    LabelVector target_bits;
    FrameKey meta;
};

/// Features at i-(λ-1)Δt, ..., i-Δt, i. A requested index is resolved to the
/// latest stored frame at or before it; indices before the video's first
/// frame resolve to the first frame.
SequenceWindow make_window(const FeatureStore& store, FrameKey query, int length, int interval);

struct CorpusStats {
    std::int64_t total = 0;
    std::int64_t no_tools = 0;
    std::vector<std::int64_t> per_tool;
    /// Keyed by LabelVector::value().
    std::map<std::uint32_t, std::int64_t> per_labelset;
};

CorpusStats corpus_stats(std::span<const FrameRecord> records, int tool_count);

}  // namespace laptool
