#include "bodyfit/synthetic.hpp"

#include <cmath>
#include <random>
#include <string>

#include "bodyfit/errors.hpp"
#include "bodyfit/pgm.hpp"
#include "bodyfit/regressor.hpp"

namespace bodyfit {

namespace {

constexpr double kBoneLength = 0.25;
constexpr double kRingRadius = 0.07;
constexpr double kGoldenAngle = 2.399963229728653;

int ring_size(const SyntheticScenario& s) { return s.vertex_count / s.joint_count; }

std::vector<int> heap_parents(int k) {
    std::vector<int> parent(static_cast<std::size_t>(k));
    parent[0] = -1;
    for (int j = 1; j < k; ++j) parent[static_cast<std::size_t>(j)] = (j - 1) / 2;
    return parent;
}

MatX3 rest_skeleton(int k) {
    const auto parent = heap_parents(k);
    MatX3 joints = MatX3::Zero(k, 3);
    for (int j = 1; j < k; ++j) {
        const double phi = j * kGoldenAngle;
        const Vec3 dir =
            Vec3(std::cos(phi), std::sin(phi), 0.15 * std::sin(2.0 * phi)).normalized();
        joints.row(j) = joints.row(parent[static_cast<std::size_t>(j)]) +
                        kBoneLength * dir.transpose();
    }
    return joints;
}

// Orthonormal basis perpendicular to d.
void plane_basis(const Vec3& d, Vec3& u, Vec3& v) {
    const Vec3 axis = std::abs(d.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
    u = d.cross(axis).normalized();
    v = d.cross(u).normalized();
}

}  // namespace

void SyntheticScenario::validate() const {
    std::string msg;
    if (joint_count < 2) msg += "joint_count must be >= 2\n";
    if (vertex_count < 3 * joint_count)
        msg += "vertex_count must be at least 3 * joint_count (ring size >= 3)\n";
    if (target_joints < 1) msg += "target_joints must be >= 1\n";
    if (target_joints > vertex_count) msg += "target_joints must be <= vertex_count\n";
    if (shape_dims < 0) msg += "shape_dims must be >= 0\n";
    if (train_frames < 0 || heldout_frames < 0) msg += "frame counts must be >= 0\n";
    if (mask_size < 8) msg += "mask_size must be >= 8\n";
    if (regressor_support < 1 || regressor_support > vertex_count / joint_count)
        msg += "regressor_support must be in [1, ring size]\n";
    if (pose_noise_rad < 0 || shape_noise < 0 || trans_noise_m < 0 || joint_noise_m < 0 ||
        mask_flip_prob < 0 || mask_flip_prob > 1)
        msg += "noise levels must be non-negative (flip probability in [0,1])\n";
    if (!msg.empty()) throw ValidationError("invalid scenario:\n" + msg);
}

BodyModel make_toy_model(const SyntheticScenario& scenario, TrianglesMat* triangles) {
    scenario.validate();
    const int k = scenario.joint_count;
    const int n = scenario.vertex_count;
    const int r = ring_size(scenario);
    const int extras = n - r * k;  // mid-bone filler vertices
    std::mt19937_64 rng(scenario.seed * 1000003ULL + 1);

    BodyModel m;
    m.parent = heap_parents(k);
    const MatX3 joints = rest_skeleton(k);

    // One ring per joint, perpendicular to the bone toward the parent (the
    // first child's bone for the root).
    m.template_vertices.resize(n, 3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int j = 0; j < k; ++j) {
        Vec3 bone;
        if (j == 0)
            bone = k > 1 ? (joints.row(1) - joints.row(0)).transpose().normalized()
                         : Vec3::UnitY();
        else
            bone = (joints.row(j) - joints.row(m.parent[static_cast<std::size_t>(j)]))
                       .transpose().normalized();
        Vec3 u, v;
        plane_basis(bone, u, v);
        const double phase = 0.35 * j;
        for (int i = 0; i < r; ++i) {
            const double psi = 2.0 * M_PI * i / r + phase;
            m.template_vertices.row(j * r + i) =
                (joints.row(j).transpose() + kRingRadius * (std::cos(psi) * u + std::sin(psi) * v))
                    .transpose();
        }
    }
    for (int e = 0; e < extras; ++e) {
        const int j = 1 + e % (k - 1);
        const int p = m.parent[static_cast<std::size_t>(j)];
        m.template_vertices.row(r * k + e) =
            0.5 * (joints.row(j) + joints.row(p)) +
            0.02 * Eigen::RowVector3d(unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5);
    }

    // Ring vertices split their weight between their own joint and its
    // parent; filler vertices sit halfway.
    m.skin_weights = Mat::Zero(n, k);
    for (int j = 0; j < k; ++j) {
        const int p = m.parent[static_cast<std::size_t>(j)];
        for (int i = 0; i < r; ++i) {
            const int v = j * r + i;
            if (p < 0) {
                m.skin_weights(v, j) = 1.0;
            } else {
                const double own = 0.75 + 0.2 * unit(rng);
                m.skin_weights(v, j) = own;
                m.skin_weights(v, p) = 1.0 - own;
            }
        }
    }
    for (int e = 0; e < extras; ++e) {
        const int j = 1 + e % (k - 1);
        const int p = m.parent[static_cast<std::size_t>(j)];
        m.skin_weights(r * k + e, j) = 0.5;
        m.skin_weights(r * k + e, p) = 0.5;
    }

    // Ring means recover the skeleton exactly.
    m.skeleton_regressor = Mat::Zero(k, n);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < r; ++i) m.skeleton_regressor(j, j * r + i) = 1.0 / r;

    // Shape basis: per-joint radial bulge plus a small rigid shift of each
    // ring, so rest joints depend on shape.
    std::uniform_real_distribution<double> amp(0.01, 0.05);
    std::uniform_real_distribution<double> shift(-0.02, 0.02);
    for (int b = 0; b < scenario.shape_dims; ++b) {
        Mat basis = Mat::Zero(n, 3);
        for (int j = 0; j < k; ++j) {
            const double a = amp(rng) * (j % 2 == 0 ? 1.0 : -1.0);
            const Vec3 ring_shift(shift(rng), shift(rng), shift(rng));
            for (int i = 0; i < r; ++i) {
                const int v = j * r + i;
                const Vec3 radial =
                    (m.template_vertices.row(v) - joints.row(j)).transpose().normalized();
                basis.row(v) = (a * radial + ring_shift).transpose();
            }
        }
        m.shape_basis.push_back(std::move(basis));
    }

    if (triangles != nullptr) {
        // Tube between each child ring and its parent ring.
        std::vector<std::array<int, 3>> tris;
        for (int j = 1; j < k; ++j) {
            const int p = m.parent[static_cast<std::size_t>(j)];
            for (int i = 0; i < r; ++i) {
                const int a0 = p * r + i;
                const int a1 = p * r + (i + 1) % r;
                const int b0 = j * r + i;
                const int b1 = j * r + (i + 1) % r;
                tris.push_back({a0, a1, b0});
                tris.push_back({a1, b1, b0});
            }
        }
        triangles->resize(static_cast<Eigen::Index>(tris.size()), 3);
        for (std::size_t t = 0; t < tris.size(); ++t)
            for (int c = 0; c < 3; ++c)
                (*triangles)(static_cast<Eigen::Index>(t), c) = tris[t][static_cast<std::size_t>(c)];
    }

    m.validate();
    return m;
}

Mat make_planted_regressor(const SyntheticScenario& scenario, std::uint64_t seed) {
    const int r = ring_size(scenario);
    std::mt19937_64 rng(seed * 2000003ULL + 2);
    std::uniform_int_distribution<int> pick(0, r - 1);
    std::exponential_distribution<double> expo(1.0);

    Mat j_star = Mat::Zero(scenario.target_joints, scenario.vertex_count);
    for (int m = 0; m < scenario.target_joints; ++m) {
        const int joint = m % scenario.joint_count;
        std::vector<int> chosen;
        while (static_cast<int>(chosen.size()) < scenario.regressor_support) {
            const int candidate = joint * r + pick(rng);
            if (std::find(chosen.begin(), chosen.end(), candidate) == chosen.end())
                chosen.push_back(candidate);
        }
        Vec w(scenario.regressor_support);
        for (int i = 0; i < scenario.regressor_support; ++i) w[i] = expo(rng) + 0.05;
        w /= w.sum();
        for (int i = 0; i < scenario.regressor_support; ++i)
            j_star(m, chosen[static_cast<std::size_t>(i)]) = w[i];
    }
    return j_star;
}

Mat offset_regressor(const SyntheticScenario& scenario, const Mat& planted) {
    const int r = ring_size(scenario);
    const int shift = std::max(2, r / 3);
    Mat offset = Mat::Zero(planted.rows(), planted.cols());
    for (Eigen::Index m = 0; m < planted.rows(); ++m)
        for (Eigen::Index v = 0; v < planted.cols(); ++v) {
            if (planted(m, v) == 0.0) continue;
            const int joint = static_cast<int>(v) / r;
            const int i = static_cast<int>(v) % r;
            offset(m, joint * r + (i + shift) % r) += planted(m, v);
        }
    return offset;
}

SyntheticDataset generate_synthetic(const SyntheticScenario& scenario,
                                    const std::filesystem::path& out_dir) {
    scenario.validate();
    std::filesystem::create_directories(out_dir);
    std::filesystem::create_directories(out_dir / "masks");

    TrianglesMat triangles;
    const BodyModel model = make_toy_model(scenario, &triangles);
    save_body_model(out_dir / "model.rgft", model, &triangles);
    MeshTopology topology{triangles};

    const Mat j_star = make_planted_regressor(scenario, scenario.seed);
    const Mat j_offset = offset_regressor(scenario, j_star);

    // Fixed camera framing the whole rest body.
    const MatX3 joints = rest_skeleton(scenario.joint_count);
    double radius = 0.0;
    for (int v = 0; v < model.vertex_count(); ++v)
        radius = std::max(radius, model.template_vertices.row(v).norm());
    radius += 0.15;  // shape + pose headroom
    Camera camera;
    camera.width = camera.height = scenario.mask_size;
    const double dist = 6.0 * radius;
    camera.translation = Vec3(0.0, 0.0, dist);
    camera.fx = camera.fy = 0.38 * scenario.mask_size * dist / radius;
    camera.cx = camera.cy = scenario.mask_size / 2.0;

    std::mt19937_64 rng(scenario.seed * 3000017ULL + 3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    TensorContainer frames_c;
    TensorContainer truth_c;
    truth_c.set("j_star", TensorArray::from_matrix(j_star));
    truth_c.set("j_std_offset", TensorArray::from_matrix(j_offset));

    DatasetManifest manifest;
    manifest.root = out_dir;
    manifest.model_path = "model.rgft";
    manifest.frames_container_path = "frames.rgft";
    manifest.train_subjects = {"S1", "S5", "S6", "S7", "S8"};
    manifest.test_subjects = {"S9", "S11"};

    const int total = scenario.train_frames + scenario.heldout_frames;
    for (int f = 0; f < total; ++f) {
        const bool heldout = f >= scenario.train_frames;
        char id[16];
        std::snprintf(id, sizeof(id), "f%04d", f);

        BodyParams truth = BodyParams::zeros(scenario.joint_count, scenario.shape_dims);
        truth.pose[0] = 0.2 * Vec3(gauss(rng), gauss(rng), gauss(rng));
        for (int j = 1; j < scenario.joint_count; ++j) {
            Vec3 p = scenario.pose_sample_rad * Vec3(gauss(rng), gauss(rng), gauss(rng));
            for (int a = 0; a < 3; ++a) p[a] = std::clamp(p[a], -0.5, 0.5);
            truth.pose[static_cast<std::size_t>(j)] = p;
        }
        for (int b = 0; b < scenario.shape_dims; ++b) truth.shape[b] = 2.0 * unit(rng) - 1.0;
        const Vec3 trans_true(0.08 * (unit(rng) - 0.5), 0.08 * (unit(rng) - 0.5),
                              0.10 * (unit(rng) - 0.5));

        const ForwardResult fwd = forward(model, truth);
        MatX3 posed_world = fwd.vertices;
        posed_world.rowwise() += trans_true.transpose();

        MatX3 gt = j_star * fwd.vertices;
        gt.rowwise() += trans_true.transpose();
        if (scenario.joint_noise_m > 0.0)
            for (Eigen::Index r = 0; r < gt.rows(); ++r)
                for (int c = 0; c < 3; ++c) gt(r, c) += scenario.joint_noise_m * gauss(rng);

        SilhouetteImage mask = render_hard(camera, topology, posed_world);
        if (scenario.mask_flip_prob > 0.0)
            for (Eigen::Index rr = 0; rr < mask.values.rows(); ++rr)
                for (Eigen::Index cc = 0; cc < mask.values.cols(); ++cc)
                    if (unit(rng) < scenario.mask_flip_prob)
                        mask.values(rr, cc) = 1.0 - mask.values(rr, cc);
        const std::string mask_rel = std::string("masks/") + id + ".pgm";
        write_pgm(out_dir / mask_rel, mask.values, 8);

        BodyParams init = truth;
        for (int j = 0; j < scenario.joint_count; ++j)
            for (int a = 0; a < 3; ++a)
                init.pose[static_cast<std::size_t>(j)][a] += scenario.pose_noise_rad * gauss(rng);
        for (int b = 0; b < scenario.shape_dims; ++b)
            init.shape[b] += scenario.shape_noise * gauss(rng);
        Vec3 trans_init = trans_true;
        for (int a = 0; a < 3; ++a) trans_init[a] += scenario.trans_noise_m * gauss(rng);

        // Initial estimates and gt joints: the dataset a consumer sees.
        Mat pose_mat(scenario.joint_count, 3);
        for (int j = 0; j < scenario.joint_count; ++j)
            pose_mat.row(j) = init.pose[static_cast<std::size_t>(j)].transpose();
        frames_c.set(std::string("pose/") + id, TensorArray::from_matrix(pose_mat));
        frames_c.set(std::string("shape/") + id, TensorArray::from_vector(init.shape));
        frames_c.set(std::string("trans/") + id,
                     TensorArray::from_vector(Vec(trans_init)));
        frames_c.set(std::string("gt/") + id, TensorArray::from_matrix(Mat(gt)));

        // The generating truth, kept separately for oracle tests.
        Mat true_pose_mat(scenario.joint_count, 3);
        for (int j = 0; j < scenario.joint_count; ++j)
            true_pose_mat.row(j) = truth.pose[static_cast<std::size_t>(j)].transpose();
        truth_c.set(std::string("true_pose/") + id, TensorArray::from_matrix(true_pose_mat));
        truth_c.set(std::string("true_shape/") + id, TensorArray::from_vector(truth.shape));
        truth_c.set(std::string("true_trans/") + id,
                    TensorArray::from_vector(Vec(trans_true)));

        ManifestFrame mf;
        mf.id = id;
        mf.subject = heldout
                         ? manifest.test_subjects[static_cast<std::size_t>(f) % 2]
                         : manifest.train_subjects[static_cast<std::size_t>(f) % 5];
        mf.pose_key = std::string("pose/") + id;
        mf.shape_key = std::string("shape/") + id;
        mf.trans_key = std::string("trans/") + id;
        mf.gt_key = std::string("gt/") + id;
        mf.mask_path = mask_rel;
        mf.camera = camera;
        mf.crop = CropGeometry{0, 0, scenario.mask_size, scenario.mask_size};
        manifest.frames.push_back(std::move(mf));
    }

    write_container(out_dir / "frames.rgft", frames_c);
    write_container(out_dir / "truth.rgft", truth_c);
    save_manifest(out_dir / "manifest.json", manifest);

    return SyntheticDataset{out_dir, std::move(manifest)};
}

}  // namespace bodyfit
