#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace laptool {

/// Binary tool-presence vector for one frame. Bit k (tool k) is stored at
/// mask bit k, so tool 0 is the least significant bit of `value()`.
class LabelVector {
public:
    static constexpr int kMaxTools = 32;

    LabelVector() = default;
    /// All-zeros vector of length `tool_count`.
    explicit LabelVector(int tool_count);
    LabelVector(int tool_count, std::uint32_t mask);

    /// Parses "0011000" (tool 0 first).
    static LabelVector from_string(const std::string& bits);
    static LabelVector from_bits(std::span<const int> bits);

    int size() const { return k_; }
    std::uint32_t value() const { return mask_; }
    bool test(int tool) const;
    void set(int tool, bool present = true);
    int count() const;
    bool empty() const { return mask_ == 0; }

    /// "0011000", tool 0 first.
    std::string to_string() const;

    friend bool operator==(const LabelVector&, const LabelVector&) = default;

private:
    int k_ = 0;
    std::uint32_t mask_ = 0;
};

std::ostream& operator<<(std::ostream& os, const LabelVector& v);

/// Vector with exactly the tools in `present_tools` set.
LabelVector encode_labelset(std::span<const int> present_tools, int tool_count);

/// Ordered, unique tool names. Position defines the bit index.
class ToolVocabulary {
public:
    ToolVocabulary() = default;
    explicit ToolVocabulary(std::vector<std::string> names);

    /// Bipolar, Clipper, Grasper, Hook, Irrigator, Scissors, SpecimenBag.
    static ToolVocabulary m2cai();
    /// tool0..tool{K-1}
    static ToolVocabulary generic(int tool_count);

    int size() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(int tool) const { return names_.at(static_cast<std::size_t>(tool)); }
    /// -1 when absent.
    int index_of(const std::string& name) const;

    friend bool operator==(const ToolVocabulary&, const ToolVocabulary&) = default;

private:
    std::vector<std::string> names_;
};

/// Bijection between the retained label-sets (superclasses) and 0..size()-1.
class PowersetMap {
public:
    PowersetMap() = default;
    /// Entries must be pairwise distinct, share one K, and include the
    /// all-zeros vector.
    PowersetMap(ToolVocabulary tools, std::vector<LabelVector> entries);

    int size() const { return static_cast<int>(entries_.size()); }
    int tool_count() const { return tools_.size(); }
    const ToolVocabulary& tools() const { return tools_; }
    const std::vector<LabelVector>& entries() const { return entries_; }

    bool contains(const LabelVector& v) const;
    /// Throws OutOfVocabulary.
    int to_superclass(const LabelVector& v) const;
    /// -1 when absent.
    int find(const LabelVector& v) const;
    /// Throws DomainError when index is out of range.
    const LabelVector& from_superclass(int index) const;
    int no_tool_index() const;

    /// Fraction of `frames` whose label vector is a retained superclass.
    double coverage(std::span<const LabelVector> frames) const;

    /// First line: tool names; line i+1: comma-separated bits of entries[i].
    void write(std::ostream& os) const;
    static PowersetMap read(std::istream& is);

    friend bool operator==(const PowersetMap& a, const PowersetMap& b) {
        return a.tools_ == b.tools_ && a.entries_ == b.entries_;
    }

private:
    ToolVocabulary tools_;
    std::vector<LabelVector> entries_;
    std::unordered_map<std::uint32_t, int> index_;
};

/// The `max_superclasses` most frequent distinct vectors, ordered by
/// descending frequency then ascending `value()`. The all-zeros vector is
/// always included, evicting the last entry when the map is full.
PowersetMap build_powerset_map(const ToolVocabulary& tools, std::span<const LabelVector> frames,
                               int max_superclasses);

/// counts(a, b) = frames with both a and b present; diagonal = per-tool counts.
class CooccurrenceMatrix {
public:
    explicit CooccurrenceMatrix(int tool_count = 0)
        : k_(tool_count), counts_(static_cast<std::size_t>(tool_count * tool_count), 0) {}

    int size() const { return k_; }
    std::int64_t operator()(int a, int b) const { return counts_[index(a, b)]; }
    std::int64_t& at(int a, int b) { return counts_[index(a, b)]; }

    friend bool operator==(const CooccurrenceMatrix&, const CooccurrenceMatrix&) = default;

private:
    std::size_t index(int a, int b) const { return static_cast<std::size_t>(a * k_ + b); }

    int k_;
    std::vector<std::int64_t> counts_;
};

CooccurrenceMatrix cooccurrence(std::span<const LabelVector> frames, int tool_count);

}  // namespace laptool
