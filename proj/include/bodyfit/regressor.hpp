#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bodyfit/body_model.hpp"
#include "bodyfit/linalg.hpp"

namespace bodyfit {

// Non-negative sparse map from mesh vertices to target joints, rows summing
// to ~1. Rows index joints, columns index vertices.
struct JointRegressor {
    Mat weights;  // M x N
    bool warning = false;
    std::string warning_message;

    int joint_count() const { return static_cast<int>(weights.rows()); }
    int vertex_count() const { return static_cast<int>(weights.cols()); }
};

struct SparsityConfig {
    double threshold = 1e-6;   // entries above this count as active
    double max_fraction = 0.05;
};

// Returns an empty string when all invariants hold, else a description of
// every violation.
std::string check_regressor_invariants(const Mat& weights,
                                       const SparsityConfig& sparsity = {},
                                       double row_sum_tol = 1e-3);

MatX3 regress_joints(const JointRegressor& regressor, const MatX3& vertices);
MatX3 regress_joints(const Mat& weights, const MatX3& vertices);

struct FitFrame {
    MatX3 vertices;       // N x 3, body frame
    MatX3 target_joints;  // M x 3, body frame
};

struct FitProblem {
    std::vector<FitFrame> frames;
    double lambda_sum = 1e3;
    SparsityConfig sparsity;
};

enum class NnlsSolver { projected_gradient, active_set };

struct FitOptions {
    NnlsSolver solver = NnlsSolver::active_set;
    double ridge = 1e-9;      // tie-break regularization on the normal equations
    double tol = 1e-10;       // projected-gradient norm for the PG path
    int max_iterations = 2000000;
    // Optional hard support restriction: candidate vertex indices per joint.
    std::optional<std::vector<std::vector<int>>> support;
};

struct FitReport {
    bool converged = true;
    bool underdetermined = false;
    double rmse_m = 0.0;           // residual over the fit frames
    double row_sum_min = 0.0;
    double row_sum_max = 0.0;
    double max_sparsity_fraction = 0.0;
    long total_iterations = 0;
    // Data term + lambda_sum * sum-to-one penalty, summed over rows.
    double objective = 0.0;
};

struct FitResult {
    JointRegressor regressor;
    FitReport report;
};

// Row-decoupled penalized NNLS:
//   min_J >= 0  sum_f ||X_f - J V_f||_F^2 + lambda_sum * sum_m (sum_i J_mi - 1)^2
FitResult fit(const FitProblem& problem, const FitOptions& options = {});

// Objective above for a given weight matrix (no ridge term).
double fit_objective(const FitProblem& problem, const Mat& weights);

struct PoseFrame {
    BodyParams params;
    Vec3 translation = Vec3::Zero();
    MatX3 gt_joints;  // world frame
};

// Realizes the body model on every frame and fits targets gt - translation.
// The result is the frozen regressor the refinement stage optimizes against.
FitResult bootstrap_regressor(const BodyModel& model, const std::vector<PoseFrame>& frames,
                              double lambda_sum = 1e3, const FitOptions& options = {},
                              int nearest_support = 0);

// Low-level NNLS on normal equations: min 0.5 x^T G x - h^T x, x >= 0.
struct NnlsResult {
    Vec x;
    bool converged = false;
    long iterations = 0;
};
NnlsResult nnls_projected_gradient(const Mat& gram, const Vec& rhs, double tol,
                                   long max_iterations);
NnlsResult nnls_active_set(const Mat& gram, const Vec& rhs);

// Container (or dense whitespace text matrix) regressor I/O.
void save_regressor(const std::filesystem::path& path, const FitResult& result,
                    double lambda_sum, NnlsSolver solver);
JointRegressor load_regressor(const std::filesystem::path& path);

}  // namespace bodyfit
