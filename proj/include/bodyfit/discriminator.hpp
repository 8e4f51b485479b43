#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bodyfit/adam.hpp"
#include "bodyfit/body_model.hpp"
#include "bodyfit/linalg.hpp"

namespace bodyfit {

// Flattened non-root rotation matrices followed by the shape coefficients;
// length 9(K-1) + B. Excluding the root makes the feature viewpoint-free.
Vec featurize(const BodyParams& params, bool include_shape = true);

// d(feature)/d(params vector); rows follow the feature layout, columns the
// BodyParams::to_vector layout. Root pose columns are zero.
Mat featurize_jacobian(const BodyParams& params, bool include_shape = true);

int feature_length(int joints, int shape_dims, bool include_shape = true);

// Fully connected scorer with leaky-rectifier hidden units (slope 0.01) and
// a raw linear output, trained with least-squares targets.
class Discriminator {
public:
    Discriminator(int input_dim, std::vector<int> hidden, std::uint64_t seed);

    double forward(const Vec& input) const;

    struct Gradients {
        std::vector<Mat> d_weights;
        std::vector<Vec> d_biases;
        Vec d_input;
    };

    // Forward pass plus backprop of `upstream` (the derivative of some
    // scalar loss with respect to the network output). Parameter gradients
    // accumulate into `grads` when non-null; d_input is overwritten.
    double forward_backward(const Vec& input, double upstream, Gradients* grads) const;

    Gradients zero_gradients() const;

    int input_dim() const { return input_dim_; }
    int parameter_count() const;
    Vec pack_parameters() const;
    void unpack_parameters(const Vec& flat);
    Vec pack_gradients(const Gradients& grads) const;

    const std::vector<Mat>& weights() const { return weights_; }
    const std::vector<Vec>& biases() const { return biases_; }
    std::vector<Mat>& mutable_weights() { return weights_; }
    std::vector<Vec>& mutable_biases() { return biases_; }

    void save(const std::filesystem::path& path) const;
    static Discriminator load(const std::filesystem::path& path);

    static constexpr double kLeakySlope = 0.01;

private:
    Discriminator() = default;

    int input_dim_ = 0;
    std::vector<int> hidden_;
    std::vector<Mat> weights_;  // layer l: out x in
    std::vector<Vec> biases_;
};

// One Adam step on mean(||1 - D(real)||^2) + mean(||D(fake)||^2); returns
// the loss value before the step.
double disc_update(Discriminator& d, const std::vector<Vec>& real,
                   const std::vector<Vec>& fake, AdamState& state, const AdamConfig& config);

struct AdvEnergy {
    double value = 0.0;
    Vec grad_params;  // BodyParams::to_vector layout
};

// ||1 - D(featurize(params))||^2 and its gradient through featurize.
AdvEnergy adv_energy(const Discriminator& d, const BodyParams& params,
                     bool include_shape = true);

}  // namespace bodyfit
