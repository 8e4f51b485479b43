#include "bodyfit/body_model.hpp"

#include <cmath>
#include <string>

#include "bodyfit/errors.hpp"
#include "bodyfit/rotation.hpp"

namespace bodyfit {

BodyParams BodyParams::zeros(int joints, int shape_dims) {
    BodyParams p;
    p.pose.assign(static_cast<std::size_t>(joints), Vec3::Zero());
    p.shape = Vec::Zero(shape_dims);
    return p;
}

Vec BodyParams::to_vector() const {
    Vec v(3 * joint_count() + shape_count());
    for (int j = 0; j < joint_count(); ++j)
        v.segment<3>(3 * j) = pose[static_cast<std::size_t>(j)];
    v.tail(shape_count()) = shape;
    return v;
}

BodyParams BodyParams::from_vector(const Vec& v, int joints, int shape_dims) {
    if (v.size() != 3 * joints + shape_dims)
        throw DimensionError("parameter vector has length " + std::to_string(v.size()) +
                             ", expected " + std::to_string(3 * joints + shape_dims));
    BodyParams p;
    p.pose.resize(static_cast<std::size_t>(joints));
    for (int j = 0; j < joints; ++j) p.pose[static_cast<std::size_t>(j)] = v.segment<3>(3 * j);
    p.shape = v.tail(shape_dims);
    return p;
}

bool BodyParams::all_finite() const {
    for (const auto& p : pose)
        if (!p.allFinite()) return false;
    return shape.allFinite();
}

void BodyModel::validate() const {
    const int n = vertex_count();
    const int k = joint_count();
    const int b = shape_count();
    if (n < 1 || k < 1) throw ValidationError("body model must have at least 1 vertex and 1 joint");
    if (parent[0] != -1) throw ValidationError("parent[0] must be -1 (root)");
    for (int j = 1; j < k; ++j)
        if (parent[static_cast<std::size_t>(j)] < 0 || parent[static_cast<std::size_t>(j)] >= j)
            throw ValidationError("parent[" + std::to_string(j) +
                                  "] must reference an earlier joint (topological order)");
    if (skin_weights.rows() != n || skin_weights.cols() != k)
        throw ValidationError("skin_weights must be N x K");
    if (skeleton_regressor.rows() != k || skeleton_regressor.cols() != n)
        throw ValidationError("skeleton_regressor must be K x N");
    for (int v = 0; v < n; ++v) {
        if (skin_weights.row(v).minCoeff() < 0.0)
            throw ValidationError("skin_weights row " + std::to_string(v) + " has a negative entry");
        if (std::abs(skin_weights.row(v).sum() - 1.0) > 1e-9)
            throw ValidationError("skin_weights row " + std::to_string(v) + " does not sum to 1");
    }
    for (int j = 0; j < k; ++j) {
        if (skeleton_regressor.row(j).minCoeff() < 0.0)
            throw ValidationError("skeleton_regressor row " + std::to_string(j) +
                                  " has a negative entry");
        if (std::abs(skeleton_regressor.row(j).sum() - 1.0) > 1e-9)
            throw ValidationError("skeleton_regressor row " + std::to_string(j) +
                                  " does not sum to 1");
    }
    for (int i = 0; i < b; ++i)
        if (shape_basis[static_cast<std::size_t>(i)].rows() != n ||
            shape_basis[static_cast<std::size_t>(i)].cols() != 3)
            throw ValidationError("shape_basis[" + std::to_string(i) + "] must be N x 3");
    if (use_pose_blendshapes || !pose_basis.empty()) {
        if (static_cast<int>(pose_basis.size()) != 9 * (k - 1))
            throw ValidationError("pose_basis must have 9(K-1) entries");
        for (const auto& pb : pose_basis)
            if (pb.rows() != n || pb.cols() != 3)
                throw ValidationError("every pose_basis entry must be N x 3");
    }
    if (!template_vertices.allFinite())
        throw ValidationError("template_vertices contains non-finite values");
}

bool in_subtree(const std::vector<int>& parent, int ancestor, int joint) {
    for (int j = joint; j != -1; j = parent[static_cast<std::size_t>(j)])
        if (j == ancestor) return true;
    return false;
}

MatX3 shaped_template(const BodyModel& model, const Vec& shape) {
    if (shape.size() != model.shape_count())
        throw DimensionError("shape has " + std::to_string(shape.size()) +
                             " coefficients, model expects " +
                             std::to_string(model.shape_count()));
    MatX3 out = model.template_vertices;
    for (int b = 0; b < model.shape_count(); ++b)
        out += shape[b] * model.shape_basis[static_cast<std::size_t>(b)];
    return out;
}

namespace {

void check_params(const BodyModel& model, const BodyParams& params) {
    if (params.joint_count() != model.joint_count() ||
        params.shape_count() != model.shape_count())
        throw DimensionError("params sized (" + std::to_string(params.joint_count()) + ", " +
                             std::to_string(params.shape_count()) + "), model expects (" +
                             std::to_string(model.joint_count()) + ", " +
                             std::to_string(model.shape_count()) + ")");
    if (!params.all_finite()) throw DataError("body parameters contain non-finite values");
}

// vec(R) - vec(I), row-major, for the pose-corrective feature of joint j.
Eigen::Matrix<double, 9, 1> pose_feature(const Mat3& r) {
    Eigen::Matrix<double, 9, 1> f;
    int k = 0;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) f[k++] = r(a, b) - (a == b ? 1.0 : 0.0);
    return f;
}

}  // namespace

ForwardResult forward(const BodyModel& model, const BodyParams& params) {
    check_params(model, params);
    const int n = model.vertex_count();
    const int k = model.joint_count();

    ForwardResult out;
    out.shaped = shaped_template(model, params.shape);
    out.rest_joints = model.skeleton_regressor * out.shaped;

    out.skinned_input = out.shaped;
    out.local_rot.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j)
        out.local_rot[static_cast<std::size_t>(j)] = rodrigues(params.pose[static_cast<std::size_t>(j)]);

    if (model.use_pose_blendshapes) {
        for (int j = 1; j < k; ++j) {
            const auto f = pose_feature(out.local_rot[static_cast<std::size_t>(j)]);
            for (int c = 0; c < 9; ++c) {
                if (f[c] == 0.0) continue;
                out.skinned_input += f[c] * model.pose_basis[static_cast<std::size_t>(9 * (j - 1) + c)];
            }
        }
    }

    out.world_rot.resize(static_cast<std::size_t>(k));
    out.world_trans.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        const Vec3 rest = out.rest_joints.row(j).transpose();
        if (j == 0) {
            out.world_rot[0] = out.local_rot[0];
            out.world_trans[0] = rest;
        } else {
            const int p = model.parent[static_cast<std::size_t>(j)];
            const Vec3 rest_p = out.rest_joints.row(p).transpose();
            out.world_rot[static_cast<std::size_t>(j)] =
                out.world_rot[static_cast<std::size_t>(p)] * out.local_rot[static_cast<std::size_t>(j)];
            out.world_trans[static_cast<std::size_t>(j)] =
                out.world_trans[static_cast<std::size_t>(p)] +
                out.world_rot[static_cast<std::size_t>(p)] * (rest - rest_p);
        }
    }

    out.posed_joints.resize(k, 3);
    for (int j = 0; j < k; ++j)
        out.posed_joints.row(j) = out.world_trans[static_cast<std::size_t>(j)].transpose();

    out.vertices.setZero(n, 3);
    for (int v = 0; v < n; ++v) {
        const Vec3 pv = out.skinned_input.row(v).transpose();
        Vec3 acc = Vec3::Zero();
        for (int j = 0; j < k; ++j) {
            const double w = model.skin_weights(v, j);
            if (w == 0.0) continue;
            const Vec3 rest = out.rest_joints.row(j).transpose();
            acc += w * (out.world_rot[static_cast<std::size_t>(j)] * (pv - rest) +
                        out.world_trans[static_cast<std::size_t>(j)]);
        }
        out.vertices.row(v) = acc.transpose();
    }
    return out;
}

Mat forward_jacobian(const BodyModel& model, const BodyParams& params) {
    check_params(model, params);
    const int n = model.vertex_count();
    const int k = model.joint_count();
    const int b = model.shape_count();
    const ForwardResult fwd = forward(model, params);

    Mat jac = Mat::Zero(3 * n, 3 * k + b);

    std::vector<Mat3> d_world_rot(static_cast<std::size_t>(k));
    std::vector<Vec3> d_world_trans(static_cast<std::size_t>(k));
    std::vector<char> touched(static_cast<std::size_t>(k));

    // Pose columns: propagate the derivative of one local rotation down the
    // subtree; ancestors are unaffected.
    for (int c = 0; c < k; ++c) {
        const auto d_rot = rodrigues_jacobian(params.pose[static_cast<std::size_t>(c)]);
        for (int axis = 0; axis < 3; ++axis) {
            const int col = 3 * c + axis;
            std::fill(touched.begin(), touched.end(), 0);

            if (c == 0) {
                d_world_rot[0] = d_rot[static_cast<std::size_t>(axis)];
                d_world_trans[0] = Vec3::Zero();
            } else {
                const int p = model.parent[static_cast<std::size_t>(c)];
                d_world_rot[static_cast<std::size_t>(c)] =
                    fwd.world_rot[static_cast<std::size_t>(p)] * d_rot[static_cast<std::size_t>(axis)];
                d_world_trans[static_cast<std::size_t>(c)] = Vec3::Zero();
            }
            touched[static_cast<std::size_t>(c)] = 1;
            for (int j = c + 1; j < k; ++j) {
                const int p = model.parent[static_cast<std::size_t>(j)];
                if (!touched[static_cast<std::size_t>(p)]) continue;
                touched[static_cast<std::size_t>(j)] = 1;
                d_world_rot[static_cast<std::size_t>(j)] =
                    d_world_rot[static_cast<std::size_t>(p)] * fwd.local_rot[static_cast<std::size_t>(j)];
                const Vec3 offset = (fwd.rest_joints.row(j) - fwd.rest_joints.row(p)).transpose();
                d_world_trans[static_cast<std::size_t>(j)] =
                    d_world_trans[static_cast<std::size_t>(p)] +
                    d_world_rot[static_cast<std::size_t>(p)] * offset;
            }

            // Pose correctives move the skinned input as well.
            Eigen::Matrix<double, 9, 1> d_feature = Eigen::Matrix<double, 9, 1>::Zero();
            const bool has_blend = model.use_pose_blendshapes && c != 0;
            if (has_blend) {
                const Mat3& dr = d_rot[static_cast<std::size_t>(axis)];
                int idx = 0;
                for (int r = 0; r < 3; ++r)
                    for (int s = 0; s < 3; ++s) d_feature[idx++] = dr(r, s);
            }

            for (int v = 0; v < n; ++v) {
                const Vec3 pv = fwd.skinned_input.row(v).transpose();
                Vec3 dpv = Vec3::Zero();
                if (has_blend)
                    for (int e = 0; e < 9; ++e)
                        if (d_feature[e] != 0.0)
                            dpv += d_feature[e] *
                                   model.pose_basis[static_cast<std::size_t>(9 * (c - 1) + e)]
                                       .row(v).transpose();
                Vec3 acc = Vec3::Zero();
                for (int j = 0; j < k; ++j) {
                    const double w = model.skin_weights(v, j);
                    if (w == 0.0) continue;
                    if (touched[static_cast<std::size_t>(j)]) {
                        const Vec3 rest = fwd.rest_joints.row(j).transpose();
                        acc += w * (d_world_rot[static_cast<std::size_t>(j)] * (pv - rest) +
                                    d_world_trans[static_cast<std::size_t>(j)]);
                    }
                    if (has_blend && !dpv.isZero(0.0))
                        acc += w * (fwd.world_rot[static_cast<std::size_t>(j)] * dpv);
                }
                jac.block<3, 1>(3 * v, col) = acc;
            }
        }
    }

    // Shape columns: rotations are unchanged; rest joints and the skinned
    // input both move linearly.
    for (int sb = 0; sb < b; ++sb) {
        const int col = 3 * k + sb;
        const Mat& basis = model.shape_basis[static_cast<std::size_t>(sb)];
        const MatX3 d_rest = model.skeleton_regressor * basis;

        for (int j = 0; j < k; ++j) {
            if (j == 0) {
                d_world_trans[0] = d_rest.row(0).transpose();
            } else {
                const int p = model.parent[static_cast<std::size_t>(j)];
                const Vec3 d_offset = (d_rest.row(j) - d_rest.row(p)).transpose();
                d_world_trans[static_cast<std::size_t>(j)] =
                    d_world_trans[static_cast<std::size_t>(p)] +
                    fwd.world_rot[static_cast<std::size_t>(p)] * d_offset;
            }
        }

        for (int v = 0; v < n; ++v) {
            const Vec3 dsv = basis.row(v).transpose();
            Vec3 acc = Vec3::Zero();
            for (int j = 0; j < k; ++j) {
                const double w = model.skin_weights(v, j);
                if (w == 0.0) continue;
                const Vec3 d_rest_j = d_rest.row(j).transpose();
                acc += w * (fwd.world_rot[static_cast<std::size_t>(j)] * (dsv - d_rest_j) +
                            d_world_trans[static_cast<std::size_t>(j)]);
            }
            jac.block<3, 1>(3 * v, col) = acc;
        }
    }

    return jac;
}

namespace {

TensorArray rank3_from(const std::vector<Mat>& slabs) {
    TensorArray a;
    a.dtype = Dtype::f64;
    const auto count = static_cast<std::uint64_t>(slabs.size());
    const auto rows = static_cast<std::uint64_t>(slabs.empty() ? 0 : slabs[0].rows());
    a.shape = {count, rows, 3};
    a.f64.reserve(count * rows * 3);
    for (const auto& s : slabs)
        for (Eigen::Index r = 0; r < s.rows(); ++r)
            for (Eigen::Index c = 0; c < 3; ++c) a.f64.push_back(s(r, c));
    return a;
}

std::vector<Mat> rank3_to(const TensorArray& a, const std::string& name) {
    if (a.dtype != Dtype::f64 || a.shape.size() != 3 || a.shape[2] != 3)
        throw FormatError("array '" + name + "' must be a rank-3 float64 array with last dim 3");
    std::vector<Mat> slabs(a.shape[0]);
    std::size_t k = 0;
    for (auto& s : slabs) {
        s.resize(static_cast<Eigen::Index>(a.shape[1]), 3);
        for (Eigen::Index r = 0; r < s.rows(); ++r)
            for (Eigen::Index c = 0; c < 3; ++c) s(r, c) = a.f64[k++];
    }
    return slabs;
}

}  // namespace

BodyModel load_body_model(const std::filesystem::path& path) {
    const TensorContainer c = read_container(path);
    BodyModel m;
    m.template_vertices = c.at("template").as_matrix();
    m.shape_basis = rank3_to(c.at("shape_basis"), "shape_basis");
    m.skin_weights = c.at("skin_weights").as_matrix();
    m.skeleton_regressor = c.at("skeleton_regressor").as_matrix();
    for (auto p : c.at("parents").as_index_vector()) m.parent.push_back(static_cast<int>(p));

    const auto dims = c.at("dims").as_index_vector();
    if (dims.size() != 3 || dims[0] != m.vertex_count() || dims[1] != m.joint_count() ||
        dims[2] != m.shape_count())
        throw FormatError(path.string() + ": dims header disagrees with array shapes");

    if (c.contains("pose_basis")) {
        m.pose_basis = rank3_to(c.at("pose_basis"), "pose_basis");
        if (c.contains("pose_blend_enabled"))
            m.use_pose_blendshapes = c.at("pose_blend_enabled").as_scalar() != 0.0;
    }
    m.validate();
    return m;
}

void save_body_model(const std::filesystem::path& path, const BodyModel& model,
                     const TrianglesMat* triangles) {
    model.validate();
    TensorContainer c;
    std::vector<std::int64_t> dims = {model.vertex_count(), model.joint_count(),
                                      model.shape_count()};
    c.set("dims", TensorArray::from_index_vector(dims));
    c.set("template", TensorArray::from_matrix(model.template_vertices));
    std::vector<Mat> basis_slabs;
    for (const auto& s : model.shape_basis) basis_slabs.push_back(s);
    c.set("shape_basis", rank3_from(basis_slabs));
    c.set("skin_weights", TensorArray::from_matrix(model.skin_weights));
    std::vector<std::int64_t> parents(model.parent.begin(), model.parent.end());
    c.set("parents", TensorArray::from_index_vector(parents));
    c.set("skeleton_regressor", TensorArray::from_matrix(model.skeleton_regressor));
    if (!model.pose_basis.empty()) {
        c.set("pose_basis", rank3_from(model.pose_basis));
        c.set("pose_blend_enabled", TensorArray::from_scalar(model.use_pose_blendshapes ? 1.0 : 0.0));
    }
    if (triangles != nullptr) {
        TensorArray t;
        t.dtype = Dtype::i64;
        t.shape = {static_cast<std::uint64_t>(triangles->rows()), 3};
        for (Eigen::Index r = 0; r < triangles->rows(); ++r)
            for (Eigen::Index col = 0; col < 3; ++col) t.i64.push_back((*triangles)(r, col));
        c.set("triangles", std::move(t));
    }
    write_container(path, c);
}

}  // namespace bodyfit
