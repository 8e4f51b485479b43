#include "bodyfit/regressor.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bodyfit/errors.hpp"

namespace bodyfit {

std::string check_regressor_invariants(const Mat& weights, const SparsityConfig& sparsity,
                                       double row_sum_tol) {
    std::ostringstream out;
    for (Eigen::Index m = 0; m < weights.rows(); ++m) {
        const double min_entry = weights.row(m).minCoeff();
        if (min_entry < -1e-12)
            out << "row " << m << ": negative entry " << min_entry << "\n";
        const double sum = weights.row(m).sum();
        if (std::abs(sum - 1.0) > row_sum_tol)
            out << "row " << m << ": sum " << sum << " outside 1 +- " << row_sum_tol << "\n";
        const double active =
            static_cast<double>((weights.row(m).array() > sparsity.threshold).count());
        const double fraction = active / static_cast<double>(weights.cols());
        if (fraction > sparsity.max_fraction)
            out << "row " << m << ": " << fraction * 100.0 << "% of entries above "
                << sparsity.threshold << " (cap " << sparsity.max_fraction * 100.0 << "%)\n";
    }
    return out.str();
}

MatX3 regress_joints(const Mat& weights, const MatX3& vertices) {
    if (weights.cols() != vertices.rows())
        throw DimensionError("regressor has " + std::to_string(weights.cols()) +
                             " columns but vertex set has " + std::to_string(vertices.rows()) +
                             " rows");
    return weights * vertices;
}

MatX3 regress_joints(const JointRegressor& regressor, const MatX3& vertices) {
    return regress_joints(regressor.weights, vertices);
}

namespace {

Vec projected_gradient_vector(const Mat& gram, const Vec& rhs, const Vec& x) {
    Vec g = gram * x - rhs;
    for (Eigen::Index i = 0; i < g.size(); ++i)
        if (x[i] <= 0.0 && g[i] > 0.0) g[i] = 0.0;
    return g;
}

double quad_value(const Mat& gram, const Vec& rhs, const Vec& x) {
    return 0.5 * x.dot(gram * x) - rhs.dot(x);
}

}  // namespace

NnlsResult nnls_projected_gradient(const Mat& gram, const Vec& rhs, double tol,
                                   long max_iterations) {
    const Eigen::Index n = rhs.size();
    NnlsResult result;
    result.x = Vec::Zero(n);

    for (long iter = 0; iter < max_iterations; ++iter) {
        const Vec pg = projected_gradient_vector(gram, rhs, result.x);
        if (pg.norm() < tol) {
            result.converged = true;
            result.iterations = iter;
            return result;
        }
        // Steepest feasible descent with the exact minimizing step for the
        // unconstrained quadratic along it, then clamped to the orthant.
        const Vec d = -pg;
        const double curvature = d.dot(gram * d);
        if (curvature <= 0.0) break;
        double alpha = d.squaredNorm() / curvature;

        const double f0 = quad_value(gram, rhs, result.x);
        Vec candidate = (result.x + alpha * d).cwiseMax(0.0);
        // Clamping can defeat the exact step; halve until this is a descent.
        int backtrack = 0;
        while (quad_value(gram, rhs, candidate) > f0 && backtrack < 60) {
            alpha *= 0.5;
            candidate = (result.x + alpha * d).cwiseMax(0.0);
            ++backtrack;
        }
        if (backtrack == 60) {
            result.iterations = iter;
            return result;  // stalled at numerical stationarity
        }
        result.x = std::move(candidate);
        result.iterations = iter + 1;
    }
    result.converged = projected_gradient_vector(gram, rhs, result.x).norm() < tol;
    return result;
}

NnlsResult nnls_active_set(const Mat& gram, const Vec& rhs) {
    const Eigen::Index n = rhs.size();
    NnlsResult result;
    result.x = Vec::Zero(n);
    std::vector<bool> passive(static_cast<std::size_t>(n), false);

    const double dual_tol = 1e-12 * std::max(1.0, rhs.cwiseAbs().maxCoeff());
    const long outer_cap = 5 * static_cast<long>(n) + 10;
    const long inner_cap = 3 * static_cast<long>(n) + 10;

    auto solve_passive = [&](std::vector<Eigen::Index>& idx) -> Vec {
        idx.clear();
        for (Eigen::Index i = 0; i < n; ++i)
            if (passive[static_cast<std::size_t>(i)]) idx.push_back(i);
        const auto p = static_cast<Eigen::Index>(idx.size());
        Mat sub(p, p);
        Vec sub_rhs(p);
        for (Eigen::Index a = 0; a < p; ++a) {
            sub_rhs[a] = rhs[idx[static_cast<std::size_t>(a)]];
            for (Eigen::Index b = 0; b < p; ++b)
                sub(a, b) = gram(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
        }
        return sub.ldlt().solve(sub_rhs);
    };

    std::vector<Eigen::Index> idx;
    for (long outer = 0; outer < outer_cap; ++outer) {
        const Vec w = rhs - gram * result.x;  // negative gradient
        Eigen::Index best = -1;
        double best_w = dual_tol;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (passive[static_cast<std::size_t>(i)]) continue;
            if (w[i] > best_w) {
                best_w = w[i];
                best = i;
            }
        }
        if (best < 0) {
            result.converged = true;
            result.iterations = outer;
            return result;
        }
        passive[static_cast<std::size_t>(best)] = true;

        for (long inner = 0; inner < inner_cap; ++inner) {
            const Vec z = solve_passive(idx);
            double min_z = idx.empty() ? 1.0 : std::numeric_limits<double>::max();
            for (std::size_t a = 0; a < idx.size(); ++a)
                min_z = std::min(min_z, z[static_cast<Eigen::Index>(a)]);
            if (min_z > 0.0) {
                Vec x = Vec::Zero(n);
                for (std::size_t a = 0; a < idx.size(); ++a)
                    x[idx[a]] = z[static_cast<Eigen::Index>(a)];
                result.x = std::move(x);
                break;
            }
            // Blocking step: move toward z until the first passive variable
            // hits zero, then demote every variable pinned at zero.
            double alpha = std::numeric_limits<double>::max();
            for (std::size_t a = 0; a < idx.size(); ++a) {
                const double zi = z[static_cast<Eigen::Index>(a)];
                if (zi <= 0.0) {
                    const double xi = result.x[idx[a]];
                    const double step = xi / (xi - zi);
                    alpha = std::min(alpha, step);
                }
            }
            if (!(alpha >= 0.0) || alpha == std::numeric_limits<double>::max()) break;
            for (std::size_t a = 0; a < idx.size(); ++a) {
                const double zi = z[static_cast<Eigen::Index>(a)];
                result.x[idx[a]] += alpha * (zi - result.x[idx[a]]);
            }
            for (std::size_t a = 0; a < idx.size(); ++a) {
                const double zi = z[static_cast<Eigen::Index>(a)];
                if (result.x[idx[a]] <= 1e-14 && zi <= 0.0) {
                    result.x[idx[a]] = 0.0;
                    passive[static_cast<std::size_t>(idx[a])] = false;
                }
            }
        }
    }
    result.iterations = outer_cap;
    result.converged = false;
    return result;
}

double fit_objective(const FitProblem& problem, const Mat& weights) {
    double obj = 0.0;
    for (const auto& frame : problem.frames)
        obj += (frame.target_joints - weights * frame.vertices).squaredNorm();
    for (Eigen::Index m = 0; m < weights.rows(); ++m) {
        const double s = weights.row(m).sum() - 1.0;
        obj += problem.lambda_sum * s * s;
    }
    return obj;
}

FitResult fit(const FitProblem& problem, const FitOptions& options) {
    if (problem.frames.empty()) throw ValidationError("fit problem has no frames");
    const Eigen::Index n = problem.frames.front().vertices.rows();
    const Eigen::Index m = problem.frames.front().target_joints.rows();
    for (std::size_t f = 0; f < problem.frames.size(); ++f) {
        const auto& frame = problem.frames[f];
        if (frame.vertices.rows() != n || frame.target_joints.rows() != m)
            throw DimensionError("fit frame " + std::to_string(f) +
                                 " has inconsistent dimensions");
        if (!frame.vertices.allFinite() || !frame.target_joints.allFinite())
            throw DataError("fit frame " + std::to_string(f) + " contains non-finite values");
    }
    if (options.support && static_cast<Eigen::Index>(options.support->size()) != m)
        throw DimensionError("support restriction must list candidates for every joint");

    // Normal equations, shared across rows:
    //   G = sum_f V_f V_f^T + lambda * 1 1^T + ridge * I
    //   h_m = sum_f V_f x_fm + lambda * 1
    Mat gram = Mat::Zero(n, n);
    for (const auto& frame : problem.frames)
        gram.noalias() += frame.vertices * frame.vertices.transpose();
    gram.array() += problem.lambda_sum;
    gram.diagonal().array() += options.ridge;

    FitResult result;
    result.regressor.weights = Mat::Zero(m, n);
    result.report.underdetermined =
        3 * static_cast<long>(problem.frames.size()) + 1 < static_cast<long>(n);

    for (Eigen::Index row = 0; row < m; ++row) {
        Vec rhs = Vec::Constant(n, problem.lambda_sum);
        for (const auto& frame : problem.frames)
            rhs.noalias() += frame.vertices * frame.target_joints.row(row).transpose();

        NnlsResult sol;
        if (options.support) {
            // Solve on the restricted index set, scatter back.
            const auto& candidates = (*options.support)[static_cast<std::size_t>(row)];
            const auto p = static_cast<Eigen::Index>(candidates.size());
            Mat sub(p, p);
            Vec sub_rhs(p);
            for (Eigen::Index a = 0; a < p; ++a) {
                sub_rhs[a] = rhs[candidates[static_cast<std::size_t>(a)]];
                for (Eigen::Index b = 0; b < p; ++b)
                    sub(a, b) = gram(candidates[static_cast<std::size_t>(a)],
                                     candidates[static_cast<std::size_t>(b)]);
            }
            NnlsResult sub_sol = options.solver == NnlsSolver::active_set
                                     ? nnls_active_set(sub, sub_rhs)
                                     : nnls_projected_gradient(sub, sub_rhs, options.tol,
                                                               options.max_iterations);
            sol.x = Vec::Zero(n);
            for (Eigen::Index a = 0; a < p; ++a)
                sol.x[candidates[static_cast<std::size_t>(a)]] = sub_sol.x[a];
            sol.converged = sub_sol.converged;
            sol.iterations = sub_sol.iterations;
        } else {
            sol = options.solver == NnlsSolver::active_set
                      ? nnls_active_set(gram, rhs)
                      : nnls_projected_gradient(gram, rhs, options.tol, options.max_iterations);
        }
        result.regressor.weights.row(row) = sol.x.transpose();
        result.report.total_iterations += sol.iterations;
        if (!sol.converged) result.report.converged = false;
    }

    // Diagnostics over the fit frames.
    double sq = 0.0;
    long count = 0;
    for (const auto& frame : problem.frames) {
        sq += (frame.target_joints - result.regressor.weights * frame.vertices).squaredNorm();
        count += frame.target_joints.size();
    }
    result.report.rmse_m = std::sqrt(sq / static_cast<double>(count));
    result.report.objective = fit_objective(problem, result.regressor.weights);
    result.report.row_sum_min = result.regressor.weights.rowwise().sum().minCoeff();
    result.report.row_sum_max = result.regressor.weights.rowwise().sum().maxCoeff();
    double max_fraction = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) {
        const double active = static_cast<double>(
            (result.regressor.weights.row(r).array() > problem.sparsity.threshold).count());
        max_fraction = std::max(max_fraction, active / static_cast<double>(n));
    }
    result.report.max_sparsity_fraction = max_fraction;

    if (!result.report.converged) {
        result.regressor.warning = true;
        result.regressor.warning_message = "solver did not reach its convergence criterion";
    }
    if (result.report.underdetermined) {
        result.regressor.warning = true;
        if (!result.regressor.warning_message.empty()) result.regressor.warning_message += "; ";
        result.regressor.warning_message +=
            "underdetermined fit (fewer residual rows than free weights)";
    }
    return result;
}

FitResult bootstrap_regressor(const BodyModel& model, const std::vector<PoseFrame>& frames,
                              double lambda_sum, const FitOptions& options,
                              int nearest_support) {
    if (frames.empty()) throw ValidationError("bootstrap requires at least one frame");
    FitProblem problem;
    problem.lambda_sum = lambda_sum;
    for (const auto& frame : frames) {
        FitFrame f;
        f.vertices = forward(model, frame.params).vertices;
        f.target_joints = frame.gt_joints;
        f.target_joints.rowwise() -= frame.translation.transpose();
        problem.frames.push_back(std::move(f));
    }

    FitOptions opts = options;
    if (nearest_support > 0) {
        // Restrict each joint's candidates to the nearest template vertices
        // of the corresponding rest joint (uses the mean target as anchor).
        const Eigen::Index m = problem.frames.front().target_joints.rows();
        MatX3 anchors = MatX3::Zero(m, 3);
        for (const auto& f : problem.frames) anchors += f.target_joints;
        anchors /= static_cast<double>(problem.frames.size());

        std::vector<std::vector<int>> support(static_cast<std::size_t>(m));
        for (Eigen::Index j = 0; j < m; ++j) {
            std::vector<std::pair<double, int>> dist;
            for (int v = 0; v < model.vertex_count(); ++v)
                dist.emplace_back(
                    (model.template_vertices.row(v) - anchors.row(j)).squaredNorm(), v);
            std::sort(dist.begin(), dist.end());
            const int r = std::min<int>(nearest_support, model.vertex_count());
            for (int v = 0; v < r; ++v)
                support[static_cast<std::size_t>(j)].push_back(dist[static_cast<std::size_t>(v)].second);
            std::sort(support[static_cast<std::size_t>(j)].begin(),
                      support[static_cast<std::size_t>(j)].end());
        }
        opts.support = std::move(support);
    }
    return fit(problem, opts);
}

void save_regressor(const std::filesystem::path& path, const FitResult& result,
                    double lambda_sum, NnlsSolver solver) {
    TensorContainer c;
    c.set("weights", TensorArray::from_matrix(result.regressor.weights));
    c.set("meta/lambda_sum", TensorArray::from_scalar(lambda_sum));
    c.set("meta/solver", TensorArray::from_index_vector(
                             {solver == NnlsSolver::active_set ? std::int64_t{1} : std::int64_t{0}}));
    c.set("meta/converged", TensorArray::from_index_vector(
                                {result.report.converged ? std::int64_t{1} : std::int64_t{0}}));
    write_container(path, c);
}

JointRegressor load_regressor(const std::filesystem::path& path) {
    // RGFT container or a dense whitespace-separated text matrix.
    {
        std::ifstream probe(path, std::ios::binary);
        if (!probe) throw FormatError("cannot open '" + path.string() + "' for reading");
        char magic[4] = {};
        probe.read(magic, 4);
        if (probe.gcount() == 4 && std::string(magic, 4) == "RGFT") {
            const TensorContainer c = read_container(path);
            JointRegressor r;
            r.weights = c.at("weights").as_matrix();
            if (c.contains("meta/converged") &&
                c.at("meta/converged").as_index_vector().front() == 0) {
                r.warning = true;
                r.warning_message = "regressor file flags a non-converged fit";
            }
            return r;
        }
    }

    std::ifstream in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError(path.string() + ": no numeric rows found");
    const std::size_t cols = rows.front().size();
    for (std::size_t r = 0; r < rows.size(); ++r)
        if (rows[r].size() != cols)
            throw FormatError(path.string() + ": row " + std::to_string(r) + " has " +
                              std::to_string(rows[r].size()) + " entries, expected " +
                              std::to_string(cols));
    JointRegressor reg;
    reg.weights.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c)
            reg.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return reg;
}

}  // namespace bodyfit
