#include "bodyfit/discriminator.hpp"

#include <cmath>
#include <random>
#include <string>

#include "bodyfit/container.hpp"
#include "bodyfit/errors.hpp"
#include "bodyfit/rotation.hpp"

namespace bodyfit {

int feature_length(int joints, int shape_dims, bool include_shape) {
    return 9 * (joints - 1) + (include_shape ? shape_dims : 0);
}

Vec featurize(const BodyParams& params, bool include_shape) {
    const int k = params.joint_count();
    Vec f(feature_length(k, params.shape_count(), include_shape));
    for (int j = 1; j < k; ++j) {
        const Mat3 r = rodrigues(params.pose[static_cast<std::size_t>(j)]);
        int idx = 9 * (j - 1);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) f[idx++] = r(a, b);
    }
    if (include_shape) f.tail(params.shape_count()) = params.shape;
    return f;
}

Mat featurize_jacobian(const BodyParams& params, bool include_shape) {
    const int k = params.joint_count();
    const int b_dims = params.shape_count();
    const int rows = feature_length(k, b_dims, include_shape);
    Mat jac = Mat::Zero(rows, 3 * k + b_dims);
    for (int j = 1; j < k; ++j) {
        const auto d_rot = rodrigues_jacobian(params.pose[static_cast<std::size_t>(j)]);
        for (int axis = 0; axis < 3; ++axis) {
            const Mat3& dr = d_rot[static_cast<std::size_t>(axis)];
            int idx = 9 * (j - 1);
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) jac(idx++, 3 * j + axis) = dr(a, b);
        }
    }
    if (include_shape)
        for (int s = 0; s < b_dims; ++s) jac(9 * (k - 1) + s, 3 * k + s) = 1.0;
    return jac;
}

Discriminator::Discriminator(int input_dim, std::vector<int> hidden, std::uint64_t seed)
    : input_dim_(input_dim), hidden_(std::move(hidden)) {
    std::vector<int> dims;
    dims.push_back(input_dim_);
    for (int h : hidden_) dims.push_back(h);
    dims.push_back(1);

    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int in = dims[l];
        const int out = dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Mat w(out, in);
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) w(r, c) = dist(rng);
        weights_.push_back(std::move(w));
        biases_.push_back(Vec::Zero(out));
    }
}

double Discriminator::forward(const Vec& input) const {
    if (input.size() != input_dim_)
        throw DimensionError("discriminator input has length " + std::to_string(input.size()) +
                             ", expected " + std::to_string(input_dim_));
    Vec x = input;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Vec z = weights_[l] * x + biases_[l];
        if (l + 1 < weights_.size())
            z = z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
        x = std::move(z);
    }
    return x[0];
}

Discriminator::Gradients Discriminator::zero_gradients() const {
    Gradients g;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        g.d_weights.push_back(Mat::Zero(weights_[l].rows(), weights_[l].cols()));
        g.d_biases.push_back(Vec::Zero(biases_[l].size()));
    }
    g.d_input = Vec::Zero(input_dim_);
    return g;
}

double Discriminator::forward_backward(const Vec& input, double upstream,
                                       Gradients* grads) const {
    if (input.size() != input_dim_)
        throw DimensionError("discriminator input has length " + std::to_string(input.size()) +
                             ", expected " + std::to_string(input_dim_));
    std::vector<Vec> activations;  // activations[l] is the input to layer l
    activations.push_back(input);
    std::vector<Vec> pre;  // pre-activation of each layer
    Vec x = input;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Vec z = weights_[l] * x + biases_[l];
        pre.push_back(z);
        if (l + 1 < weights_.size())
            z = z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
        activations.push_back(z);
        x = activations.back();
    }
    const double output = x[0];

    Vec delta = Vec::Constant(1, upstream);
    for (std::size_t l = weights_.size(); l-- > 0;) {
        if (grads != nullptr) {
            grads->d_weights[l] += delta * activations[l].transpose();
            grads->d_biases[l] += delta;
        }
        Vec back = weights_[l].transpose() * delta;
        if (l > 0) {
            const Vec& z = pre[l - 1];
            for (Eigen::Index i = 0; i < back.size(); ++i)
                if (z[i] <= 0.0) back[i] *= kLeakySlope;
        }
        delta = std::move(back);
    }
    if (grads != nullptr) grads->d_input = delta;
    return output;
}

int Discriminator::parameter_count() const {
    int n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l)
        n += static_cast<int>(weights_[l].size() + biases_[l].size());
    return n;
}

Vec Discriminator::pack_parameters() const {
    Vec flat(parameter_count());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        for (Eigen::Index r = 0; r < weights_[l].rows(); ++r)
            for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) flat[k++] = weights_[l](r, c);
        for (Eigen::Index i = 0; i < biases_[l].size(); ++i) flat[k++] = biases_[l][i];
    }
    return flat;
}

void Discriminator::unpack_parameters(const Vec& flat) {
    if (flat.size() != parameter_count())
        throw DimensionError("parameter vector length mismatch");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        for (Eigen::Index r = 0; r < weights_[l].rows(); ++r)
            for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) weights_[l](r, c) = flat[k++];
        for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l][i] = flat[k++];
    }
}

Vec Discriminator::pack_gradients(const Gradients& grads) const {
    Vec flat(parameter_count());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        for (Eigen::Index r = 0; r < weights_[l].rows(); ++r)
            for (Eigen::Index c = 0; c < weights_[l].cols(); ++c)
                flat[k++] = grads.d_weights[l](r, c);
        for (Eigen::Index i = 0; i < biases_[l].size(); ++i) flat[k++] = grads.d_biases[l][i];
    }
    return flat;
}

void Discriminator::save(const std::filesystem::path& path) const {
    TensorContainer c;
    std::vector<std::int64_t> arch;
    arch.push_back(input_dim_);
    for (int h : hidden_) arch.push_back(h);
    arch.push_back(1);
    c.set("arch", TensorArray::from_index_vector(arch));
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        c.set("layer" + std::to_string(l) + "/weight", TensorArray::from_matrix(weights_[l]));
        c.set("layer" + std::to_string(l) + "/bias", TensorArray::from_vector(biases_[l]));
    }
    write_container(path, c);
}

Discriminator Discriminator::load(const std::filesystem::path& path) {
    const TensorContainer c = read_container(path);
    const auto arch = c.at("arch").as_index_vector();
    if (arch.size() < 2 || arch.back() != 1)
        throw FormatError(path.string() + ": malformed discriminator architecture header");
    Discriminator d;
    d.input_dim_ = static_cast<int>(arch.front());
    for (std::size_t i = 1; i + 1 < arch.size(); ++i) d.hidden_.push_back(static_cast<int>(arch[i]));
    for (std::size_t l = 0; l + 1 < arch.size(); ++l) {
        d.weights_.push_back(c.at("layer" + std::to_string(l) + "/weight").as_matrix());
        d.biases_.push_back(c.at("layer" + std::to_string(l) + "/bias").as_vector());
        if (d.weights_[l].rows() != arch[l + 1] || d.weights_[l].cols() != arch[l])
            throw FormatError(path.string() + ": layer " + std::to_string(l) +
                              " shape disagrees with architecture header");
    }
    return d;
}

double disc_update(Discriminator& d, const std::vector<Vec>& real,
                   const std::vector<Vec>& fake, AdamState& state, const AdamConfig& config) {
    if (real.empty() || fake.empty())
        throw ValidationError("discriminator update requires non-empty real and fake batches");

    auto grads = d.zero_gradients();
    double loss = 0.0;
    for (const Vec& x : real) {
        // d/dD of (D - 1)^2, averaged over the batch
        const double y = d.forward(x);
        loss += (y - 1.0) * (y - 1.0) / static_cast<double>(real.size());
        d.forward_backward(x, 2.0 * (y - 1.0) / static_cast<double>(real.size()), &grads);
    }
    for (const Vec& x : fake) {
        const double y = d.forward(x);
        loss += y * y / static_cast<double>(fake.size());
        d.forward_backward(x, 2.0 * y / static_cast<double>(fake.size()), &grads);
    }

    Vec params = d.pack_parameters();
    const Vec grad = d.pack_gradients(grads);
    adam_step(state, params, grad, config);
    d.unpack_parameters(params);
    return loss;
}

AdvEnergy adv_energy(const Discriminator& d, const BodyParams& params, bool include_shape) {
    const Vec feature = featurize(params, include_shape);
    auto grads = d.zero_gradients();
    const double y = d.forward_backward(feature, 1.0, &grads);

    AdvEnergy out;
    out.value = (1.0 - y) * (1.0 - y);
    const double d_y = -2.0 * (1.0 - y);
    const Mat feat_jac = featurize_jacobian(params, include_shape);
    out.grad_params = d_y * (feat_jac.transpose() * grads.d_input);
    return out;
}

}  // namespace bodyfit
