#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "laptool/dataset.hpp"
#include "laptool/labelspace.hpp"
#include "laptool/rng.hpp"

namespace laptool {

/// Seeded toy corpus on the M2CAI tool vocabulary. Every video walks the same
/// ordered list of phases (a fixed tool combination each) with random phase
/// lengths; a frame's feature vector is its label-set's cluster centre plus
/// isotropic Gaussian noise. Each present tool adds one of `tool_variants`
/// prototype vectors (picked per frame), so a label-set is a mixture of
/// clusters.
struct SyntheticConfig {
    int videos = 20;
    int frames_per_video = 300;
    int test_videos = 6;  // the last ids are held out
    int feature_dim = 64;
    int tool_variants = 3;
    double prototype_scale = 1.0;
    double noise_sd = 1.5;
    std::uint64_t seed = 7;

    void validate() const;
};

struct SyntheticCorpus {
    AnnotationSet train;
    AnnotationSet test;
    FeatureStore features;
};

/// The phase order shared by every video (8 distinct label-sets; the
/// no-tool set opens and closes each video).
std::vector<LabelVector> synthetic_phases();

SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& config);

/// Each entry is replaced, with probability `rate`, by a different superclass
/// drawn uniformly.
std::vector<int> corrupt_predictions(std::span<const int> truth, double rate, int superclass_count, Rng& rng);

}  // namespace laptool
