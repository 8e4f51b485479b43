#include "bodyfit/refine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>

#include "bodyfit/errors.hpp"
#include "bodyfit/pgm.hpp"

namespace bodyfit {

void RefineConfig::validate() const {
    if (iterations < 1) throw ValidationError("iterations must be >= 1");
    if (adam.learning_rate <= 0.0 || disc_learning_rate <= 0.0)
        throw ValidationError("learning rates must be positive");
    if (adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0 ||
        disc_beta1 < 0.0 || disc_beta1 >= 1.0)
        throw ValidationError("Adam betas must lie in [0, 1)");
    if (sigma <= 0.0) throw ValidationError("render sigma must be positive");
    if (replay_buffer < 1) throw ValidationError("replay buffer must hold at least 1 entry");
    if (batch_size < 1) throw ValidationError("batch size must be >= 1");
}

EnergyWeights auto_weights(double raw_joint, double raw_silhouette, double raw_adv,
                           bool enable_joint, bool enable_silhouette, bool enable_adv) {
    std::vector<double> raws;
    if (enable_joint) raws.push_back(raw_joint);
    if (enable_silhouette) raws.push_back(raw_silhouette);
    if (enable_adv) raws.push_back(raw_adv);

    EnergyWeights w;
    if (raws.empty()) return w;

    bool all_zero = true;
    for (double r : raws) all_zero = all_zero && r == 0.0;
    if (all_zero) {
        if (enable_joint) w.joint = 1.0;
        if (enable_silhouette) w.silhouette = 1.0;
        if (enable_adv) w.adv = 1.0;
        return w;
    }

    std::sort(raws.begin(), raws.end());
    const std::size_t n = raws.size();
    const double median =
        n % 2 == 1 ? raws[n / 2] : 0.5 * (raws[n / 2 - 1] + raws[n / 2]);

    if (enable_joint) w.joint = median / (raw_joint + 1e-12);
    if (enable_silhouette) w.silhouette = median / (raw_silhouette + 1e-12);
    if (enable_adv) w.adv = median / (raw_adv + 1e-12);
    return w;
}

JointEnergy joint_energy(const BodyModel& model, const Mat& j_spin, const BodyParams& params,
                         const Vec3& translation, const MatX3& gt_joints,
                         const ForwardResult* fwd, const Mat* jacobian) {
    if (j_spin.cols() != model.vertex_count())
        throw DimensionError("regressor columns do not match the model vertex count");
    if (gt_joints.rows() != j_spin.rows())
        throw DimensionError("gt joints do not match the regressor row count");

    ForwardResult local_fwd;
    if (fwd == nullptr) {
        local_fwd = forward(model, params);
        fwd = &local_fwd;
    }
    Mat local_jac;
    if (jacobian == nullptr) {
        local_jac = forward_jacobian(model, params);
        jacobian = &local_jac;
    }

    const Eigen::Index m = gt_joints.rows();
    MatX3 pred = j_spin * fwd->vertices;
    pred.rowwise() += translation.transpose();
    const MatX3 diff = pred - gt_joints;

    JointEnergy out;
    out.value = diff.squaredNorm() / static_cast<double>(m);

    const MatX3 grad_joints = (2.0 / static_cast<double>(m)) * diff;
    const Mat grad_vertices = j_spin.transpose() * grad_joints;  // N x 3
    Vec grad_flat(3 * model.vertex_count());
    for (int v = 0; v < model.vertex_count(); ++v)
        for (int c = 0; c < 3; ++c) grad_flat[3 * v + c] = grad_vertices(v, c);
    out.grad_params = jacobian->transpose() * grad_flat;
    out.grad_translation = grad_joints.colwise().sum().transpose();
    return out;
}

namespace {

struct EnergyEval {
    double total = 0.0;
    double raw_joint = 0.0;
    double raw_silhouette = 0.0;
    double raw_adv = 0.0;
    Vec grad;  // over [pose, shape, translation]; empty when values_only
    bool finite = true;
};

Vec flatten_vertex_grad(const MatX3& g) {
    Vec out(3 * g.rows());
    for (Eigen::Index v = 0; v < g.rows(); ++v)
        for (int c = 0; c < 3; ++c) out[3 * v + c] = g(v, c);
    return out;
}

EnergyEval evaluate_energy(const BodyModel& model, const MeshTopology& topology,
                           const Mat& j_spin, const Discriminator& disc,
                           const FrameRecord& frame, const RefineConfig& config,
                           const EnergyWeights& weights, const BodyParams& params,
                           const Vec3& translation, bool values_only) {
    EnergyEval eval;
    const int np = model.param_count();
    if (!values_only) eval.grad = Vec::Zero(np + 3);

    ForwardResult fwd;
    Mat jac;
    const bool needs_body = config.enable_joint || config.enable_silhouette;
    if (needs_body) {
        fwd = forward(model, params);
        if (!values_only) jac = forward_jacobian(model, params);
    }

    if (config.enable_joint) {
        const Eigen::Index m = frame.gt_joints.rows();
        MatX3 pred = j_spin * fwd.vertices;
        pred.rowwise() += translation.transpose();
        const MatX3 diff = pred - frame.gt_joints;
        eval.raw_joint = diff.squaredNorm() / static_cast<double>(m);
        if (!values_only && weights.joint != 0.0) {
            const MatX3 grad_joints = (2.0 / static_cast<double>(m)) * diff;
            const Mat grad_vertices = j_spin.transpose() * grad_joints;
            eval.grad.head(np) +=
                weights.joint * (jac.transpose() * flatten_vertex_grad(grad_vertices));
            eval.grad.tail(3) +=
                weights.joint * grad_joints.colwise().sum().transpose();
        }
    }

    if (config.enable_silhouette) {
        MatX3 world = fwd.vertices;
        world.rowwise() += translation.transpose();
        if (values_only || weights.silhouette == 0.0) {
            const SilhouetteImage rendered =
                render_silhouette(frame.camera, topology, world, config.sigma);
            eval.raw_silhouette = silhouette_mse(frame.mask, rendered);
        } else {
            const SilhouetteLoss loss =
                silhouette_loss(frame.mask, frame.camera, topology, world, config.sigma);
            eval.raw_silhouette = loss.loss;
            eval.grad.head(np) +=
                weights.silhouette * (jac.transpose() * flatten_vertex_grad(loss.grad_vertices));
            eval.grad.tail(3) +=
                weights.silhouette * loss.grad_vertices.colwise().sum().transpose();
        }
    }

    if (config.enable_adv) {
        const AdvEnergy adv = adv_energy(disc, params, config.disc_include_shape);
        eval.raw_adv = adv.value;
        if (!values_only && weights.adv != 0.0)
            eval.grad.head(np) += weights.adv * adv.grad_params;
    }

    eval.total = weights.joint * eval.raw_joint + weights.silhouette * eval.raw_silhouette +
                 weights.adv * eval.raw_adv;
    eval.finite = std::isfinite(eval.total) && (values_only || eval.grad.allFinite());
    return eval;
}

}  // namespace

RefineFrameResult refine_frame(const BodyModel& model, const MeshTopology& topology,
                               const Mat& j_spin, const Discriminator& discriminator,
                               const FrameRecord& frame, const RefineConfig& config) {
    config.validate();
    RefineFrameResult result;
    result.id = frame.id;
    result.params = frame.init_params;
    result.translation = frame.init_translation;

    auto abort_with = [&](const std::string& reason) {
        result.params = frame.init_params;
        result.translation = frame.init_translation;
        result.trace.aborted = true;
        result.trace.abort_reason = reason;
        return result;
    };

    if (!frame.init_params.all_finite() || !frame.init_translation.allFinite() ||
        !frame.gt_joints.allFinite())
        return abort_with("non-finite frame inputs");

    // Raw magnitudes at the initial iterate fix the weights for the whole
    // frame.
    EnergyWeights unit;
    unit.joint = unit.silhouette = unit.adv = 1.0;
    EnergyEval first;
    try {
        first = evaluate_energy(model, topology, j_spin, discriminator, frame, config, unit,
                                frame.init_params, frame.init_translation, true);
    } catch (const std::exception& e) {
        return abort_with(std::string("initial evaluation failed: ") + e.what());
    }
    if (!first.finite) return abort_with("non-finite initial energy");
    const EnergyWeights weights =
        auto_weights(first.raw_joint, first.raw_silhouette, first.raw_adv, config.enable_joint,
                     config.enable_silhouette, config.enable_adv);
    result.trace.weights = weights;

    const int np = model.param_count();
    Vec x(np + 3);
    x.head(np) = frame.init_params.to_vector();
    x.tail(3) = frame.init_translation;

    AdamState state(x.size());
    Vec best_x = x;
    double best_energy = std::numeric_limits<double>::infinity();

    for (int it = 0; it < config.iterations; ++it) {
        const BodyParams params =
            BodyParams::from_vector(x.head(np), model.joint_count(), model.shape_count());
        const Vec3 translation = x.tail(3);
        EnergyEval eval;
        try {
            eval = evaluate_energy(model, topology, j_spin, discriminator, frame, config,
                                   weights, params, translation, false);
        } catch (const std::exception& e) {
            return abort_with(std::string("energy evaluation failed at iteration ") +
                              std::to_string(it) + ": " + e.what());
        }
        if (!eval.finite)
            return abort_with("non-finite energy at iteration " + std::to_string(it));

        result.trace.total.push_back(eval.total);
        result.trace.raw_joint.push_back(eval.raw_joint);
        result.trace.raw_silhouette.push_back(eval.raw_silhouette);
        result.trace.raw_adv.push_back(eval.raw_adv);
        if (eval.total < best_energy) {
            best_energy = eval.total;
            best_x = x;
        }
        adam_step(state, x, eval.grad, config.adam);
    }

    // The last step is only accepted if it measures better than everything
    // seen so far.
    EnergyEval last;
    try {
        const BodyParams params =
            BodyParams::from_vector(x.head(np), model.joint_count(), model.shape_count());
        last = evaluate_energy(model, topology, j_spin, discriminator, frame, config, weights,
                               params, x.tail(3), true);
    } catch (const std::exception& e) {
        return abort_with(std::string("final evaluation failed: ") + e.what());
    }
    if (last.finite && last.total < best_energy) {
        best_energy = last.total;
        best_x = x;
    }
    result.trace.final_total = last.finite ? last.total : std::numeric_limits<double>::infinity();
    if (!(result.trace.final_total < result.trace.total.front()))
        result.trace.nonmonotone_warning = true;

    result.params = BodyParams::from_vector(best_x.head(np), model.joint_count(),
                                            model.shape_count());
    result.translation = best_x.tail(3);
    return result;
}

RefineDatasetResult refine_dataset(const BodyModel& model, const MeshTopology& topology,
                                   const Mat& j_spin, const std::vector<FrameRecord>& frames,
                                   const RefineConfig& config) {
    config.validate();
    const int feat_len =
        feature_length(model.joint_count(), model.shape_count(), config.disc_include_shape);
    RefineDatasetResult result{
        {}, {}, Discriminator(feat_len, config.disc_hidden, config.seed), 0.0, 0.0};
    if (frames.empty()) return result;

    std::vector<Vec> real_pool;
    for (const auto& f : frames)
        real_pool.push_back(featurize(f.init_params, config.disc_include_shape));

    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::deque<Vec> fake_buffer;
    AdamConfig disc_adam;
    disc_adam.learning_rate = config.disc_learning_rate;
    disc_adam.beta1 = config.disc_beta1;
    AdamState disc_state(result.discriminator.parameter_count());

    auto sample = [&rng](const auto& pool, int count) {
        std::vector<Vec> batch;
        if (static_cast<int>(pool.size()) <= count) {
            for (const auto& v : pool) batch.push_back(v);
            return batch;
        }
        std::vector<std::size_t> idx(pool.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        for (int i = 0; i < count; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
            std::swap(idx[static_cast<std::size_t>(i)], idx[pick(rng)]);
            batch.push_back(pool[idx[static_cast<std::size_t>(i)]]);
        }
        return batch;
    };

    double initial_sum = 0.0, final_sum = 0.0;
    long refined = 0;
    for (const auto& frame : frames) {
        RefineFrameResult r =
            refine_frame(model, topology, j_spin, result.discriminator, frame, config);
        if (r.trace.aborted) {
            result.failures.push_back(frame.id + ": " + r.trace.abort_reason);
            continue;
        }
        initial_sum += r.trace.total.front();
        final_sum +=
            std::min(r.trace.final_total,
                     *std::min_element(r.trace.total.begin(), r.trace.total.end()));
        ++refined;

        fake_buffer.push_back(featurize(r.params, config.disc_include_shape));
        while (static_cast<int>(fake_buffer.size()) > config.replay_buffer)
            fake_buffer.pop_front();

        const auto real_batch = sample(real_pool, config.batch_size);
        const auto fake_batch = sample(fake_buffer, config.batch_size);
        disc_update(result.discriminator, real_batch, fake_batch, disc_state, disc_adam);

        result.frames.push_back(std::move(r));
    }

    if (refined > 0) {
        result.mean_initial_energy = initial_sum / static_cast<double>(refined);
        result.mean_final_energy = final_sum / static_cast<double>(refined);
    }
    if (result.failures.size() * 10 > frames.size()) {
        std::string msg = "more than 10% of frames failed to refine:\n";
        for (const auto& f : result.failures) msg += "  - " + f + "\n";
        throw DataError(msg);
    }
    return result;
}

std::vector<FrameRecord> load_frame_records(const DatasetManifest& manifest,
                                            const std::string& split) {
    const TensorContainer frames_c =
        read_container(manifest.resolve(manifest.frames_container_path));
    std::vector<FrameRecord> out;
    for (const ManifestFrame* mf : manifest.frames_in_split(split)) {
        FrameRecord r;
        r.id = mf->id;
        const Mat pose = frames_c.at(mf->pose_key).as_matrix();
        if (pose.cols() != 3)
            throw FormatError("frame '" + mf->id + "': pose array must be K x 3");
        r.init_params.pose.resize(static_cast<std::size_t>(pose.rows()));
        for (Eigen::Index j = 0; j < pose.rows(); ++j)
            r.init_params.pose[static_cast<std::size_t>(j)] = pose.row(j).transpose();
        r.init_params.shape = frames_c.at(mf->shape_key).as_vector();
        const Vec trans = frames_c.at(mf->trans_key).as_vector();
        if (trans.size() != 3)
            throw FormatError("frame '" + mf->id + "': translation must have 3 entries");
        r.init_translation = trans;
        r.gt_joints = frames_c.at(mf->gt_key).as_matrix();
        r.mask.values = read_pgm(manifest.resolve(mf->mask_path));
        if (r.mask.width() != mf->camera.width || r.mask.height() != mf->camera.height)
            throw ValidationError("frame '" + mf->id + "': mask is " +
                                  std::to_string(r.mask.width()) + "x" +
                                  std::to_string(r.mask.height()) + " but the camera expects " +
                                  std::to_string(mf->camera.width) + "x" +
                                  std::to_string(mf->camera.height));
        r.camera = mf->camera;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace bodyfit
