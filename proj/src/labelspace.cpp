#include "laptool/labelspace.hpp"

#include <algorithm>
#include <bit>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "laptool/error.hpp"

namespace laptool {

namespace {

void check_tool_count(int tool_count) {
    if (tool_count < 0 || tool_count > LabelVector::kMaxTools) {
        throw DomainError("tool count " + std::to_string(tool_count) + " outside [0, " +
                          std::to_string(LabelVector::kMaxTools) + "]");
    }
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep)) parts.push_back(item);
    if (!text.empty() && text.back() == sep) parts.emplace_back();
    return parts;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

}  // namespace

LabelVector::LabelVector(int tool_count) : k_(tool_count) { check_tool_count(tool_count); }

LabelVector::LabelVector(int tool_count, std::uint32_t mask) : k_(tool_count), mask_(mask) {
    check_tool_count(tool_count);
    if (tool_count < kMaxTools && (mask >> tool_count) != 0) {
        throw DomainError("label mask has bits above tool count " + std::to_string(tool_count));
    }
}

LabelVector LabelVector::from_string(const std::string& bits) {
    LabelVector v(static_cast<int>(bits.size()));
    for (std::size_t k = 0; k < bits.size(); ++k) {
        if (bits[k] == '1') {
            v.set(static_cast<int>(k));
        } else if (bits[k] != '0') {
            throw DomainError("label bit must be 0 or 1, got '" + std::string(1, bits[k]) + "'");
        }
    }
    return v;
}

LabelVector LabelVector::from_bits(std::span<const int> bits) {
    LabelVector v(static_cast<int>(bits.size()));
    for (std::size_t k = 0; k < bits.size(); ++k) {
        if (bits[k] != 0 && bits[k] != 1) {
            throw DomainError("label bit must be 0 or 1, got " + std::to_string(bits[k]));
        }
        v.set(static_cast<int>(k), bits[k] == 1);
    }
    return v;
}

bool LabelVector::test(int tool) const {
    if (tool < 0 || tool >= k_) throw DomainError("tool index " + std::to_string(tool) + " out of range");
    return (mask_ >> tool) & 1u;
}

void LabelVector::set(int tool, bool present) {
    if (tool < 0 || tool >= k_) throw DomainError("tool index " + std::to_string(tool) + " out of range");
    if (present) {
        mask_ |= (1u << tool);
    } else {
        mask_ &= ~(1u << tool);
    }
}

int LabelVector::count() const { return std::popcount(mask_); }

std::string LabelVector::to_string() const {
    std::string s(static_cast<std::size_t>(k_), '0');
    for (int k = 0; k < k_; ++k) {
        if ((mask_ >> k) & 1u) s[static_cast<std::size_t>(k)] = '1';
    }
    return s;
}

std::ostream& operator<<(std::ostream& os, const LabelVector& v) { return os << v.to_string(); }

LabelVector encode_labelset(std::span<const int> present_tools, int tool_count) {
    LabelVector v(tool_count);
    for (int tool : present_tools) {
        if (tool < 0 || tool >= tool_count) {
            throw DomainError("tool index " + std::to_string(tool) + " not below K=" +
                              std::to_string(tool_count));
        }
        v.set(tool);
    }
    return v;
}

ToolVocabulary::ToolVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
    check_tool_count(static_cast<int>(names_.size()));
    std::set<std::string> seen;
    for (const auto& name : names_) {
        if (name.empty()) throw DomainError("empty tool name");
        if (!seen.insert(name).second) throw DomainError("duplicate tool name '" + name + "'");
    }
}

ToolVocabulary ToolVocabulary::m2cai() {
    return ToolVocabulary({"Bipolar", "Clipper", "Grasper", "Hook", "Irrigator", "Scissors", "SpecimenBag"});
}

ToolVocabulary ToolVocabulary::generic(int tool_count) {
    std::vector<std::string> names;
    for (int k = 0; k < tool_count; ++k) names.push_back("tool" + std::to_string(k));
    return ToolVocabulary(std::move(names));
}

int ToolVocabulary::index_of(const std::string& name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
}

PowersetMap::PowersetMap(ToolVocabulary tools, std::vector<LabelVector> entries)
    : tools_(std::move(tools)), entries_(std::move(entries)) {
    bool has_no_tool = false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& v = entries_[i];
        if (v.size() != tools_.size()) {
            throw DomainError("superclass " + std::to_string(i) + " has " + std::to_string(v.size()) +
                              " bits, vocabulary has " + std::to_string(tools_.size()));
        }
        if (!index_.emplace(v.value(), static_cast<int>(i)).second) {
            throw DomainError("duplicate superclass " + v.to_string());
        }
        has_no_tool = has_no_tool || v.empty();
    }
    if (!has_no_tool) throw DomainError("powerset map must contain the no-tool vector");
}

bool PowersetMap::contains(const LabelVector& v) const { return find(v) >= 0; }

int PowersetMap::find(const LabelVector& v) const {
    if (v.size() != tool_count()) return -1;
    const auto it = index_.find(v.value());
    return it == index_.end() ? -1 : it->second;
}

int PowersetMap::to_superclass(const LabelVector& v) const {
    const int index = find(v);
    if (index < 0) throw OutOfVocabulary("label-set " + v.to_string() + " is not a retained superclass");
    return index;
}

const LabelVector& PowersetMap::from_superclass(int index) const {
    if (index < 0 || index >= size()) {
        throw DomainError("superclass index " + std::to_string(index) + " outside [0, " +
                          std::to_string(size()) + ")");
    }
    return entries_[static_cast<std::size_t>(index)];
}

int PowersetMap::no_tool_index() const { return to_superclass(LabelVector(tool_count())); }

double PowersetMap::coverage(std::span<const LabelVector> frames) const {
    if (frames.empty()) return 0.0;
    std::size_t covered = 0;
    for (const auto& v : frames) covered += contains(v) ? 1 : 0;
    return static_cast<double>(covered) / static_cast<double>(frames.size());
}

void PowersetMap::write(std::ostream& os) const {
    for (int k = 0; k < tools_.size(); ++k) os << (k ? "," : "") << tools_.name(k);
    os << '\n';
    for (const auto& v : entries_) {
        for (int k = 0; k < v.size(); ++k) os << (k ? "," : "") << (v.test(k) ? 1 : 0);
        os << '\n';
    }
}

PowersetMap PowersetMap::read(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("powerset map: missing tool-name line", 1);
    std::vector<std::string> names;
    for (const auto& name : split(trim(line), ',')) names.push_back(trim(name));
    ToolVocabulary tools;
    try {
        tools = ToolVocabulary(std::move(names));
    } catch (const DomainError& e) {
        throw ParseError(std::string("powerset map: ") + e.what(), 1);
    }
    std::vector<LabelVector> entries;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        std::vector<int> bits;
        for (const auto& field : split(line, ',')) {
            const auto f = trim(field);
            if (f != "0" && f != "1") throw ParseError("powerset map: bit must be 0 or 1", line_no);
            bits.push_back(f == "1" ? 1 : 0);
        }
        if (static_cast<int>(bits.size()) != tools.size()) {
            throw ParseError("powerset map: expected " + std::to_string(tools.size()) + " bits", line_no);
        }
        entries.push_back(LabelVector::from_bits(bits));
    }
    try {
        return PowersetMap(std::move(tools), std::move(entries));
    } catch (const DomainError& e) {
        throw ParseError(std::string("powerset map: ") + e.what());
    }
}

PowersetMap build_powerset_map(const ToolVocabulary& tools, std::span<const LabelVector> frames,
                               int max_superclasses) {
    if (frames.empty()) throw DomainError("build_powerset_map: no frames");
    if (max_superclasses < 1) throw DomainError("build_powerset_map: max_superclasses must be >= 1");

    std::map<std::uint32_t, std::int64_t> frequency;
    for (const auto& v : frames) {
        if (v.size() != tools.size()) {
            throw DomainError("build_powerset_map: frame has " + std::to_string(v.size()) + " bits, expected " +
                              std::to_string(tools.size()));
        }
        ++frequency[v.value()];
    }

    std::vector<std::pair<std::uint32_t, std::int64_t>> ranked(frequency.begin(), frequency.end());
    const auto by_rank = [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    };
    std::sort(ranked.begin(), ranked.end(), by_rank);

    const auto wanted = static_cast<std::size_t>(max_superclasses);
    if (ranked.size() < wanted) {
        warn("build_powerset_map: only " + std::to_string(ranked.size()) + " distinct label-sets, fewer than " +
             std::to_string(max_superclasses) + " requested");
    } else {
        ranked.resize(wanted);
    }

    const bool has_no_tool =
        std::any_of(ranked.begin(), ranked.end(), [](const auto& entry) { return entry.first == 0; });
    if (!has_no_tool) {
        if (ranked.size() == wanted) ranked.pop_back();
        const auto it = frequency.find(0);
        ranked.emplace_back(0u, it == frequency.end() ? 0 : it->second);
        std::sort(ranked.begin(), ranked.end(), by_rank);
    }

    std::vector<LabelVector> entries;
    entries.reserve(ranked.size());
    for (const auto& [mask, count] : ranked) entries.emplace_back(tools.size(), mask);
    return PowersetMap(tools, std::move(entries));
}

CooccurrenceMatrix cooccurrence(std::span<const LabelVector> frames, int tool_count) {
    CooccurrenceMatrix counts(tool_count);
    for (const auto& v : frames) {
        if (v.size() != tool_count) throw DomainError("cooccurrence: inconsistent label width");
        for (int a = 0; a < tool_count; ++a) {
            if (!((v.value() >> a) & 1u)) continue;
            for (int b = 0; b < tool_count; ++b) {
                if ((v.value() >> b) & 1u) ++counts.at(a, b);
            }
        }
    }
    return counts;
}

}  // namespace laptool
