#pragma once

#include <filesystem>
#include <vector>

#include "bodyfit/container.hpp"
#include "bodyfit/linalg.hpp"

namespace bodyfit {

// Pose is one axis-angle vector per joint (joint 0 is the root/pelvis);
// shape is a vector of blendshape coefficients. Global translation is not
// part of the parameterization; the refinement stage owns it.
struct BodyParams {
    std::vector<Vec3> pose;
    Vec shape;

    int joint_count() const { return static_cast<int>(pose.size()); }
    int shape_count() const { return static_cast<int>(shape.size()); }

    static BodyParams zeros(int joints, int shape_dims);

    // Packs to [pose (3K, joint-major), shape (B)] and back; the layout
    // every Jacobian column block follows.
    Vec to_vector() const;
    static BodyParams from_vector(const Vec& v, int joints, int shape_dims);

    bool all_finite() const;
};

// Parametric body mesh: template + shape blendshapes, forward kinematics
// over a topologically ordered tree, linear blend skinning.
struct BodyModel {
    MatX3 template_vertices;        // N x 3, meters
    std::vector<Mat> shape_basis;   // B entries, each N x 3
    Mat skin_weights;               // N x K, rows >= 0, rows sum to 1
    std::vector<int> parent;        // K entries, parent[0] == -1, parent[j] < j
    Mat skeleton_regressor;         // K x N, rows >= 0, rows sum to 1

    // Optional pose-corrective blendshapes, disabled by default. Each entry
    // is N x 3 and couples to one component of vec(R_j) - vec(I) for a
    // non-root joint j, in joint-major, row-major order (9(K-1) entries).
    std::vector<Mat> pose_basis;
    bool use_pose_blendshapes = false;

    int vertex_count() const { return static_cast<int>(template_vertices.rows()); }
    int joint_count() const { return static_cast<int>(parent.size()); }
    int shape_count() const { return static_cast<int>(shape_basis.size()); }
    int param_count() const { return 3 * joint_count() + shape_count(); }

    // Throws ValidationError if any structural invariant fails.
    void validate() const;
};

struct ForwardResult {
    MatX3 vertices;      // N x 3
    MatX3 rest_joints;   // K x 3
    MatX3 posed_joints;  // K x 3

    // Per-joint world transforms, kept so Jacobian evaluation reuses the
    // forward pass.
    std::vector<Mat3> world_rot;
    std::vector<Vec3> world_trans;
    std::vector<Mat3> local_rot;
    MatX3 shaped;        // shaped template, before pose correctives
    MatX3 skinned_input; // shaped + pose correctives (equals shaped when off)
};

// template + sum_b shape[b] * shape_basis[b]
MatX3 shaped_template(const BodyModel& model, const Vec& shape);

ForwardResult forward(const BodyModel& model, const BodyParams& params);

// d(vertices)/d(params), rows ordered 3*vertex + coordinate, columns ordered
// as BodyParams::to_vector (3K pose, then B shape).
Mat forward_jacobian(const BodyModel& model, const BodyParams& params);

// Model container I/O (arrays: template, shape_basis, skin_weights, parents,
// skeleton_regressor, dims; optional pose_basis, triangles).
BodyModel load_body_model(const std::filesystem::path& path);
void save_body_model(const std::filesystem::path& path, const BodyModel& model,
                     const TrianglesMat* triangles = nullptr);

// True when `joint` lies in the subtree rooted at `ancestor` (inclusive).
bool in_subtree(const std::vector<int>& parent, int ancestor, int joint);

}  // namespace bodyfit
