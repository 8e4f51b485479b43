#pragma once

#include <string>
#include <vector>

#include "bodyfit/linalg.hpp"

namespace bodyfit {

// Joint sets are M x 3 in meters; the metric functions report millimeters.

struct SimilarityTransform {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    MatX3 apply(const MatX3& points) const;
};

// Mean per-joint Euclidean distance in millimeters. With root_align both
// sets are first translated so the root joint sits at the origin.
double mpjpe(const MatX3& pred, const MatX3& gt, bool root_align = false, int root_joint = 0);

// Similarity transform minimizing sum ||s R pred + t - gt||^2, reflections
// rejected. Throws DegeneracyError when gt is collinear (rank < 2 after
// centering) or pred has zero spread.
SimilarityTransform procrustes(const MatX3& pred, const MatX3& gt);

double pa_mpjpe(const MatX3& pred, const MatX3& gt);

struct EvalFrame {
    std::string id;
    MatX3 vertices;     // N x 3, body frame
    Vec3 translation;   // world placement added to regressed joints
    MatX3 gt_joints;    // M x 3, world frame
};

struct RegressorScores {
    std::string name;
    double mpjpe_mm = 0.0;
    double mpjpe_root_aligned_mm = 0.0;
    double pa_mpjpe_mm = 0.0;
};

struct EvalReport {
    std::vector<RegressorScores> scores;
    int frame_count = 0;

    std::string to_tsv() const;
    std::string to_text(const std::string& row_label) const;
};

// Per-regressor mean MPJPE / root-aligned MPJPE / PA-MPJPE over the frames.
EvalReport evaluate_regressors(const std::vector<EvalFrame>& frames,
                               const std::vector<std::pair<std::string, Mat>>& regressors,
                               int root_joint = 0);

}  // namespace bodyfit
