#pragma once

#include <cstdint>
#include <filesystem>

#include "bodyfit/body_model.hpp"
#include "bodyfit/manifest.hpp"
#include "bodyfit/silhouette.hpp"

namespace bodyfit {

// Everything the generator emits is a pure function of this description.
struct SyntheticScenario {
    int vertex_count = 50;   // N, must be >= 3 * joint_count
    int joint_count = 5;     // K
    int target_joints = 5;   // M, joints of the planted regressor
    int shape_dims = 2;      // B
    int train_frames = 50;
    int heldout_frames = 20;
    int mask_size = 64;
    int regressor_support = 3;  // nonzeros per planted regressor row

    double pose_noise_rad = 0.05;  // initial-estimate noise
    double shape_noise = 0.05;
    double trans_noise_m = 0.01;
    double joint_noise_m = 0.0;    // gt joint noise
    double mask_flip_prob = 0.0;

    double pose_sample_rad = 0.25;  // spread of the true poses
    std::uint64_t seed = 7;

    void validate() const;
};

// Branching tube body: joints on a heap-shaped tree, one vertex ring per
// joint, quads between parent and child rings. Deterministic geometry;
// the seed only jitters skin weights and the shape basis.
BodyModel make_toy_model(const SyntheticScenario& scenario, TrianglesMat* triangles);

// Sparse non-negative rows summing to 1, supported on the ring of the
// corresponding skeleton joint.
Mat make_planted_regressor(const SyntheticScenario& scenario, std::uint64_t seed);

// The planted regressor with each row's support rotated within its ring;
// stands in for a systematically misaligned community regressor.
Mat offset_regressor(const SyntheticScenario& scenario, const Mat& planted);

struct SyntheticDataset {
    std::filesystem::path dir;
    DatasetManifest manifest;
};

// Writes model.rgft, frames.rgft (initial estimates + gt joints),
// truth.rgft (true parameters, planted and offset regressors), masks/*.pgm
// and manifest.json under out_dir.
SyntheticDataset generate_synthetic(const SyntheticScenario& scenario,
                                    const std::filesystem::path& out_dir);

}  // namespace bodyfit
