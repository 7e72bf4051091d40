#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "laptool/dataset.hpp"
#include "laptool/labelspace.hpp"

namespace laptool {

struct BalancedIndex {
    std::vector<FrameKey> sampled;
    int per_superclass_target = 0;
    std::uint64_t seed = 0;
    /// Samples drawn per superclass (index order of the map).
    std::vector<int> per_superclass_count;

    /// `# seed=S target=T` then one `video_id frame_index` per line.
    void write(std::ostream& out) const;
    static BalancedIndex read(std::istream& in);
};

/// Uniform re-sampling in label-set space. A superclass with n >= target
/// frames is under-sampled without replacement; one with n < target keeps
/// all n frames and draws target - n more with replacement. Frames outside
/// the map are dropped. The result is shuffled with `seed`.
BalancedIndex balance_by_powerset(std::span<const FrameRecord> records, const PowersetMap& map, int target,
                                  std::uint64_t seed);

/// Inverse-frequency superclass weights normalised to mean 1. Zero counts
/// are clamped to 1 with a warning.
std::vector<double> class_weights_from_counts(std::span<const std::int64_t> counts);
std::vector<double> class_weights(std::span<const FrameRecord> records, const PowersetMap& map);
/// Same, from superclass index sequences (entries < 0 are ignored).
std::vector<double> class_weights(std::span<const std::vector<int>> sequences, int superclass_count);

/// Shannon entropy of the per-tool counts divided by log K.
double normalized_tool_entropy(std::span<const std::int64_t> per_tool_counts);

}  // namespace laptool
