#include "lcmkit/metrics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace lcmkit {

namespace {

using Mat = Eigen::MatrixXd;

Mat to_matrix(const std::vector<double>& cov, int d) {
    Mat m(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) m(i, j) = cov[i * d + j];
    }
    return m;
}

// Symmetric PSD square root; rejects asymmetric or clearly indefinite input.
Mat psd_sqrt(const Mat& m, const char* name) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if (!m.isApprox(m.transpose(), 1e-9)) {
        throw std::invalid_argument(std::string("gaussian_w2: ") + name + " is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    Eigen::VectorXd ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) {
        if (ev(i) < -1e-9 * scale) {
            throw std::invalid_argument(std::string("gaussian_w2: ") + name +
                                        " is not positive semidefinite (eigenvalue " +
                                        std::to_string(ev(i)) + ")");
        }
        ev(i) = std::sqrt(std::max(ev(i), 0.0));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double gaussian_w2(const std::vector<double>& mean1, const std::vector<double>& cov1,
                   const std::vector<double>& mean2, const std::vector<double>& cov2) {
    const int d = static_cast<int>(mean1.size());
    if (mean2.size() != mean1.size() || cov1.size() != static_cast<size_t>(d) * d ||
        cov2.size() != static_cast<size_t>(d) * d) {
        throw std::invalid_argument("gaussian_w2: dimension mismatch");
    }
    double mean_term = 0.0;
    for (int i = 0; i < d; ++i) mean_term += (mean1[i] - mean2[i]) * (mean1[i] - mean2[i]);

    const Mat c1 = to_matrix(cov1, d);
    const Mat c2 = to_matrix(cov2, d);
    const Mat s2 = psd_sqrt(c2, "cov2");
    const Mat cross = psd_sqrt(s2 * c1 * s2, "cov2^1/2 cov1 cov2^1/2");
    const double trace_term = c1.trace() + c2.trace() - 2.0 * cross.trace();
    return mean_term + trace_term;
}

namespace {

void mean_cov(const std::vector<std::vector<double>>& rows, std::vector<double>& mean,
              std::vector<double>& cov) {
    const int n = static_cast<int>(rows.size());
    const int d = static_cast<int>(rows[0].size());
    mean.assign(d, 0.0);
    for (const auto& r : rows) {
        for (int j = 0; j < d; ++j) mean[j] += r[j];
    }
    for (int j = 0; j < d; ++j) mean[j] /= n;
    cov.assign(static_cast<size_t>(d) * d, 0.0);
    for (const auto& r : rows) {
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) cov[i * d + j] += (r[i] - mean[i]) * (r[j] - mean[j]);
        }
    }
    for (auto& c : cov) c /= (n - 1);
}

}  // namespace

double empirical_frechet(const std::vector<std::vector<double>>& a,
                         const std::vector<std::vector<double>>& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw std::invalid_argument("empirical_frechet: need at least 2 samples per side");
    }
    std::vector<double> ma, ca, mb, cb;
    mean_cov(a, ma, ca);
    mean_cov(b, mb, cb);
    return gaussian_w2(ma, ca, mb, cb);
}

double per_class_fidelity(const std::vector<std::vector<double>>& samples,
                          const std::vector<int>& labels, const ToyDataset& dataset) {
    if (samples.size() != labels.size() || samples.empty()) {
        throw std::invalid_argument("per_class_fidelity: labels must pair with samples");
    }
    double acc = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) {
        const auto tmpl = dataset.class_template(labels[i]);
        if (samples[i].size() != tmpl.size()) {
            throw std::invalid_argument("per_class_fidelity: sample dim " +
                                        std::to_string(samples[i].size()) + " vs template " +
                                        std::to_string(tmpl.size()));
        }
        double d2 = 0.0;
        for (size_t j = 0; j < tmpl.size(); ++j) {
            d2 += (samples[i][j] - tmpl[j]) * (samples[i][j] - tmpl[j]);
        }
        acc += std::sqrt(d2);
    }
    return acc / samples.size();
}

std::vector<std::vector<double>> to_rows(const Tensor& batch) {
    const std::int64_t n = batch.dim(0);
    const std::int64_t d = batch.numel() / std::max<std::int64_t>(n, 1);
    std::vector<std::vector<double>> rows(n, std::vector<double>(d));
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(batch.data().data() + i * d, d, rows[i].data());
    }
    return rows;
}

}  // namespace lcmkit
