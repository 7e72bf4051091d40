#include "laptool/balance.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "laptool/error.hpp"
#include "laptool/rng.hpp"

namespace laptool {

BalancedIndex balance_by_powerset(std::span<const FrameRecord> records, const PowersetMap& map, int target,
                                  std::uint64_t seed) {
    if (target < 1) throw DomainError("balance target must be >= 1");

    std::vector<std::vector<FrameKey>> pools(static_cast<std::size_t>(map.size()));
    std::size_t dropped = 0;
    for (const auto& r : records) {
        const int s = map.find(r.labels);
        if (s < 0) {
            ++dropped;
            continue;
        }
        pools[static_cast<std::size_t>(s)].push_back(r.key());
    }
    if (dropped > 0) warn("balance: dropped " + std::to_string(dropped) + " out-of-vocabulary frames");

    Rng rng(seed);
    BalancedIndex index;
    index.per_superclass_target = target;
    index.seed = seed;
    index.per_superclass_count.assign(pools.size(), 0);
    const auto want = static_cast<std::size_t>(target);
    for (std::size_t s = 0; s < pools.size(); ++s) {
        auto& pool = pools[s];
        if (pool.empty()) {
            warn("balance: superclass " + std::to_string(s) + " (" + map.from_superclass(static_cast<int>(s)).to_string() +
                 ") has no frames");
            continue;
        }
        if (pool.size() >= want) {
            // partial Fisher-Yates: the first `want` slots become the sample
            for (std::size_t i = 0; i < want; ++i) {
                const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
                std::swap(pool[i], pool[j]);
            }
            index.sampled.insert(index.sampled.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
        } else {
            index.sampled.insert(index.sampled.end(), pool.begin(), pool.end());
            for (std::size_t i = pool.size(); i < want; ++i) {
                index.sampled.push_back(pool[static_cast<std::size_t>(rng.below(pool.size()))]);
            }
        }
        index.per_superclass_count[s] = target;
    }
    rng.shuffle(std::span(index.sampled));
    return index;
}

void BalancedIndex::write(std::ostream& out) const {
    out << "# seed=" << seed << " target=" << per_superclass_target << '\n';
    for (const auto& key : sampled) out << key.video_id << ' ' << key.frame_index << '\n';
}

BalancedIndex BalancedIndex::read(std::istream& in) {
    BalancedIndex index;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("balanced index: empty file", 1);
    {
        unsigned long long seed = 0;
        int target = 0;
        if (std::sscanf(line.c_str(), "# seed=%llu target=%d", &seed, &target) != 2) {
            throw ParseError("balanced index: expected '# seed=... target=...'", 1);
        }
        index.seed = seed;
        index.per_superclass_target = target;
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream fields(line);
        FrameKey key;
        std::string rest;
        if (!(fields >> key.video_id >> key.frame_index) || (fields >> rest)) {
            throw ParseError("balanced index: expected 'video_id frame_index'", line_no);
        }
        index.sampled.push_back(key);
    }
    return index;
}

std::vector<double> class_weights_from_counts(std::span<const std::int64_t> counts) {
    if (counts.empty()) throw DomainError("class_weights: no superclasses");
    const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}));
    std::vector<double> w(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k) {
        auto c = counts[k];
        if (c <= 0) {
            warn("class_weights: superclass " + std::to_string(k) + " has no frames; count clamped to 1");
            c = 1;
        }
        w[k] = std::max(total, 1.0) / static_cast<double>(c);
    }
    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
    for (auto& x : w) x /= mean;
    return w;
}

std::vector<double> class_weights(std::span<const FrameRecord> records, const PowersetMap& map) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(map.size()), 0);
    for (const auto& r : records) {
        const int s = map.find(r.labels);
        if (s >= 0) ++counts[static_cast<std::size_t>(s)];
    }
    return class_weights_from_counts(counts);
}

std::vector<double> class_weights(std::span<const std::vector<int>> sequences, int superclass_count) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(superclass_count), 0);
    for (const auto& seq : sequences) {
        for (int s : seq) {
            if (s >= superclass_count) throw DomainError("class_weights: superclass index out of range");
            if (s >= 0) ++counts[static_cast<std::size_t>(s)];
        }
    }
    return class_weights_from_counts(counts);
}

double normalized_tool_entropy(std::span<const std::int64_t> per_tool_counts) {
    if (per_tool_counts.size() < 2) return 1.0;
    const double total =
        static_cast<double>(std::accumulate(per_tool_counts.begin(), per_tool_counts.end(), std::int64_t{0}));
    if (total <= 0) return 0.0;
    double h = 0.0;
    for (auto c : per_tool_counts) {
        if (c <= 0) continue;
        const double p = static_cast<double>(c) / total;
        h -= p * std::log(p);
    }
    return h / std::log(static_cast<double>(per_tool_counts.size()));
}

}  // namespace laptool
