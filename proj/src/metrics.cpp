#include "bodyfit/metrics.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "bodyfit/errors.hpp"

namespace bodyfit {

MatX3 SimilarityTransform::apply(const MatX3& points) const {
    MatX3 out(points.rows(), 3);
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        out.row(i) =
            (scale * (rotation * points.row(i).transpose()) + translation).transpose();
    return out;
}

double mpjpe(const MatX3& pred, const MatX3& gt, bool root_align, int root_joint) {
    if (pred.rows() != gt.rows())
        throw DimensionError("joint sets differ in size: " + std::to_string(pred.rows()) +
                             " vs " + std::to_string(gt.rows()));
    if (pred.rows() == 0) throw DimensionError("joint sets are empty");
    MatX3 p = pred;
    MatX3 g = gt;
    if (root_align) {
        p.rowwise() -= pred.row(root_joint);
        g.rowwise() -= gt.row(root_joint);
    }
    double acc = 0.0;
    for (Eigen::Index m = 0; m < p.rows(); ++m) acc += (p.row(m) - g.row(m)).norm();
    return 1000.0 * acc / static_cast<double>(p.rows());
}

SimilarityTransform procrustes(const MatX3& pred, const MatX3& gt) {
    if (pred.rows() != gt.rows())
        throw DimensionError("joint sets differ in size");
    const Eigen::Index m = pred.rows();
    if (m < 3) throw DegeneracyError("procrustes needs at least 3 joints");

    const Vec3 mu_p = pred.colwise().mean().transpose();
    const Vec3 mu_g = gt.colwise().mean().transpose();
    MatX3 pc = pred.rowwise() - mu_p.transpose();
    MatX3 gc = gt.rowwise() - mu_g.transpose();

    const double var_p = pc.squaredNorm() / static_cast<double>(m);
    if (var_p < 1e-24) throw DegeneracyError("prediction has zero spread");

    // Collinear gt leaves the rotation about the line unconstrained.
    {
        Eigen::JacobiSVD<Mat> svd_g(gc);
        const Vec sv = svd_g.singularValues();
        if (sv.size() < 2 || sv[1] < 1e-12)
            throw DegeneracyError("ground-truth joints are collinear; alignment is not unique");
    }

    const Mat3 cov = (gc.transpose() * pc) / static_cast<double>(m);
    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec3 signs = Vec3::Ones();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) signs[2] = -1.0;

    SimilarityTransform t;
    t.rotation = svd.matrixU() * signs.asDiagonal() * svd.matrixV().transpose();
    t.scale = svd.singularValues().dot(signs) / var_p;
    t.translation = mu_g - t.scale * (t.rotation * mu_p);
    return t;
}

double pa_mpjpe(const MatX3& pred, const MatX3& gt) {
    const SimilarityTransform t = procrustes(pred, gt);
    return mpjpe(t.apply(pred), gt, false);
}

EvalReport evaluate_regressors(const std::vector<EvalFrame>& frames,
                               const std::vector<std::pair<std::string, Mat>>& regressors,
                               int root_joint) {
    EvalReport report;
    report.frame_count = static_cast<int>(frames.size());
    for (const auto& [name, weights] : regressors) {
        RegressorScores s;
        s.name = name;
        for (const auto& frame : frames) {
            if (weights.cols() != frame.vertices.rows())
                throw DimensionError("regressor '" + name + "' has " +
                                     std::to_string(weights.cols()) +
                                     " columns but frame '" + frame.id + "' has " +
                                     std::to_string(frame.vertices.rows()) + " vertices");
            MatX3 pred = weights * frame.vertices;
            pred.rowwise() += frame.translation.transpose();
            s.mpjpe_mm += mpjpe(pred, frame.gt_joints, false);
            s.mpjpe_root_aligned_mm += mpjpe(pred, frame.gt_joints, true, root_joint);
            s.pa_mpjpe_mm += pa_mpjpe(pred, frame.gt_joints);
        }
        if (!frames.empty()) {
            const double n = static_cast<double>(frames.size());
            s.mpjpe_mm /= n;
            s.mpjpe_root_aligned_mm /= n;
            s.pa_mpjpe_mm /= n;
        }
        report.scores.push_back(std::move(s));
    }
    return report;
}

std::string EvalReport::to_tsv() const {
    std::ostringstream out;
    out << "regressor\tmpjpe_mm\tmpjpe_root_aligned_mm\tpa_mpjpe_mm\n";
    out << std::setprecision(17);
    for (const auto& s : scores)
        out << s.name << "\t" << s.mpjpe_mm << "\t" << s.mpjpe_root_aligned_mm << "\t"
            << s.pa_mpjpe_mm << "\n";
    return out.str();
}

std::string EvalReport::to_text(const std::string& row_label) const {
    // One row per pose source, regressor-major columns, MPJPE then PA-MPJPE.
    std::ostringstream out;
    std::ostringstream header1, header2;
    header1 << std::left << std::setw(12) << "";
    header2 << std::left << std::setw(12) << "";
    for (const auto& s : scores) {
        header1 << std::left << std::setw(24) << s.name;
        header2 << std::left << std::setw(12) << "MPJPE" << std::setw(12) << "PA-MPJPE";
    }
    out << header1.str() << "\n" << header2.str() << "\n";
    out << std::left << std::setw(12) << row_label;
    out << std::fixed << std::setprecision(2);
    for (const auto& s : scores)
        out << std::left << std::setw(12) << s.mpjpe_mm << std::setw(12) << s.pa_mpjpe_mm;
    out << "\n";
    return out.str();
}

}  // namespace bodyfit
