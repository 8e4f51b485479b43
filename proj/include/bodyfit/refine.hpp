#pragma once

#include <string>
#include <vector>

#include "bodyfit/adam.hpp"
#include "bodyfit/body_model.hpp"
#include "bodyfit/discriminator.hpp"
#include "bodyfit/manifest.hpp"
#include "bodyfit/regressor.hpp"
#include "bodyfit/silhouette.hpp"

namespace bodyfit {

struct RefineConfig {
    int iterations = 100;
    AdamConfig adam;           // lr 1e-2, beta1 0.9 by default
    double sigma = 1.5;        // render softness, pixels
    bool enable_joint = true;
    bool enable_silhouette = true;
    bool enable_adv = true;
    std::uint64_t seed = 0;

    std::vector<int> disc_hidden = {64, 64};
    double disc_learning_rate = 1e-3;
    double disc_beta1 = 0.9;
    bool disc_include_shape = true;
    int replay_buffer = 1024;  // 1 reproduces a strict once-per-pose regime
    int batch_size = 64;

    void validate() const;
};

// One dataset frame as the refiner consumes it: the initial estimate, the
// targets, and the camera that observed the subject.
struct FrameRecord {
    std::string id;
    BodyParams init_params;
    Vec3 init_translation = Vec3::Zero();
    MatX3 gt_joints;
    SilhouetteImage mask;
    Camera camera;
};

struct EnergyWeights {
    double joint = 0.0;
    double silhouette = 0.0;
    double adv = 0.0;
};

// w_k = median(raw) / (raw_k + 1e-12) over the enabled terms, so weighted
// terms start at a common magnitude. All-zero raws degrade to unit weights.
EnergyWeights auto_weights(double raw_joint, double raw_silhouette, double raw_adv,
                           bool enable_joint, bool enable_silhouette, bool enable_adv);

struct JointEnergy {
    double value = 0.0;
    Vec grad_params;        // BodyParams::to_vector layout
    Vec3 grad_translation = Vec3::Zero();
};

// Mean squared distance between gt joints and j_spin * forward(params) +
// translation, with gradients through the body-model Jacobian. Pass a
// precomputed forward/Jacobian pair to share work across energy terms.
JointEnergy joint_energy(const BodyModel& model, const Mat& j_spin, const BodyParams& params,
                         const Vec3& translation, const MatX3& gt_joints,
                         const ForwardResult* fwd = nullptr, const Mat* jacobian = nullptr);

struct FrameTrace {
    std::vector<double> total;       // weighted energy before each step
    std::vector<double> raw_joint;
    std::vector<double> raw_silhouette;
    std::vector<double> raw_adv;
    double final_total = 0.0;        // after the last step
    EnergyWeights weights;
    bool nonmonotone_warning = false;
    bool aborted = false;
    std::string abort_reason;
};

struct RefineFrameResult {
    std::string id;
    BodyParams params;
    Vec3 translation = Vec3::Zero();
    FrameTrace trace;
};

// Minimizes the weighted three-term energy over (pose, shape, translation)
// with Adam; returns the iterate with the lowest recorded total energy.
RefineFrameResult refine_frame(const BodyModel& model, const MeshTopology& topology,
                               const Mat& j_spin, const Discriminator& discriminator,
                               const FrameRecord& frame, const RefineConfig& config);

struct RefineDatasetResult {
    std::vector<RefineFrameResult> frames;  // aborted frames excluded
    std::vector<std::string> failures;      // "<id>: <reason>"
    Discriminator discriminator;
    double mean_initial_energy = 0.0;
    double mean_final_energy = 0.0;
};

// Sequential pass: refine a frame against the current discriminator
// snapshot, then one discriminator update with (initial, optimized) feature
// batches. More than 10% frame failures is a run-level error.
RefineDatasetResult refine_dataset(const BodyModel& model, const MeshTopology& topology,
                                   const Mat& j_spin, const std::vector<FrameRecord>& frames,
                                   const RefineConfig& config);

// Materializes FrameRecords for a manifest split ("train", "test", "all").
std::vector<FrameRecord> load_frame_records(const DatasetManifest& manifest,
                                            const std::string& split);

}  // namespace bodyfit
