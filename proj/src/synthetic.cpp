#include "laptool/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "laptool/error.hpp"

namespace laptool {

namespace {

// Relative phase lengths, aligned with synthetic_phases().
constexpr double kPhaseWeights[] = {0.06, 0.22, 0.10, 0.10, 0.12, 0.10, 0.16, 0.08, 0.06};

std::vector<int> phase_lengths(int frames, std::size_t phases, Rng& rng) {
    std::vector<double> w(phases);
    for (std::size_t p = 0; p < phases; ++p) w[p] = kPhaseWeights[p] * rng.uniform(0.6, 1.4);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    std::vector<int> lengths(phases);
    int used = 0;
    for (std::size_t p = 0; p < phases; ++p) {
        lengths[p] = std::max(3, static_cast<int>(std::lround(w[p] / total * frames)));
        used += lengths[p];
    }
    // absorb rounding in the longest phase
    auto longest = std::max_element(lengths.begin(), lengths.end());
    *longest += frames - used;
    if (*longest < 3) throw DomainError("synthetic: frames_per_video too small for the phase grammar");
    return lengths;
}

}  // namespace

void SyntheticConfig::validate() const {
    if (videos < 2) throw ConfigError("synthetic: need at least 2 videos");
    if (test_videos < 1 || test_videos >= videos) throw ConfigError("synthetic: test_videos must be in [1, videos)");
    if (frames_per_video < 40) throw ConfigError("synthetic: frames_per_video must be >= 40");
    if (tool_variants < 1) throw ConfigError("synthetic: tool_variants must be >= 1");
    if (feature_dim < 1) throw ConfigError("synthetic: feature_dim must be >= 1");
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ConfigError("synthetic: noise_sd must be >= 0");
    if (!(prototype_scale > 0.0)) throw ConfigError("synthetic: prototype_scale must be > 0");
}

std::vector<LabelVector> synthetic_phases() {
    const auto tools = ToolVocabulary::m2cai();
    const auto set = [&](std::initializer_list<const char*> names) {
        LabelVector v(tools.size());
        for (const char* n : names) v.set(tools.index_of(n));
        return v;
    };
    return {
        set({}),
        set({"Grasper", "Hook"}),
        set({"Hook"}),
        set({"Grasper"}),
        set({"Grasper", "Clipper"}),
        set({"Clipper"}),
        set({"Grasper", "Irrigator"}),
        set({"Irrigator"}),
        set({}),
    };
}

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& config) {
    config.validate();
    const auto tools = ToolVocabulary::m2cai();
    const auto phases = synthetic_phases();
    Rng rng(config.seed);

    const double sd = config.prototype_scale / std::sqrt(static_cast<double>(config.feature_dim));
    // prototypes[tool][variant]
    std::vector<std::vector<FeatureStore::Vector>> prototypes(static_cast<std::size_t>(tools.size()));
    for (auto& variants : prototypes) {
        variants.resize(static_cast<std::size_t>(config.tool_variants));
        for (auto& p : variants) {
            p.resize(config.feature_dim);
            for (int d = 0; d < config.feature_dim; ++d) p[d] = rng.normal(0.0, sd * 2.0);
        }
    }
    FeatureStore::Vector bias(config.feature_dim);
    for (int d = 0; d < config.feature_dim; ++d) bias[d] = rng.normal(0.0, sd);

    SyntheticCorpus corpus;
    corpus.train.tools = tools;
    corpus.test.tools = tools;
    corpus.features = FeatureStore(config.feature_dim);
    const double noise = config.noise_sd / std::sqrt(static_cast<double>(config.feature_dim));
    for (int v = 1; v <= config.videos; ++v) {
        auto& split = v > config.videos - config.test_videos ? corpus.test : corpus.train;
        const auto lengths = phase_lengths(config.frames_per_video, phases.size(), rng);
        int frame = 0;
        for (std::size_t p = 0; p < phases.size(); ++p) {
            for (int i = 0; i < lengths[p]; ++i, ++frame) {
                FeatureStore::Vector x = bias;
                for (int t = 0; t < tools.size(); ++t) {
                    if (!phases[p].test(t)) continue;
                    const auto& variants = prototypes[static_cast<std::size_t>(t)];
                    x += variants[static_cast<std::size_t>(rng.below(variants.size()))];
                }
                for (int d = 0; d < config.feature_dim; ++d) x[d] += rng.normal(0.0, noise);
                corpus.features.insert({v, frame}, std::move(x));
                split.records.push_back({v, frame, phases[p]});
            }
        }
    }
    return corpus;
}

std::vector<int> corrupt_predictions(std::span<const int> truth, double rate, int superclass_count, Rng& rng) {
    if (superclass_count < 2) throw DomainError("corrupt_predictions: need at least 2 superclasses");
    if (!(rate >= 0.0 && rate <= 1.0)) throw DomainError("corrupt_predictions: rate must be in [0, 1]");
    std::vector<int> out(truth.begin(), truth.end());
    for (auto& c : out) {
        if (!rng.bernoulli(rate)) continue;
        auto other = static_cast<int>(rng.below(static_cast<std::uint64_t>(superclass_count - 1)));
        c = other >= c ? other + 1 : other;
    }
    return out;
}

}  // namespace laptool
