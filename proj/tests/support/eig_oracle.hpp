#pragma once

// Brute-force PCA oracle, independent of the library implementation: explicit
// sample covariance accumulation plus a cyclic Jacobi eigensolver. Only used
// to cross-check pca_fit/ppa/pca_reduce on small matrices.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

struct EigResult {
    Eigen::VectorXd eigenvalues;   // descending
    Eigen::MatrixXd eigenvectors;  // column i pairs with eigenvalue i
};

// Cyclic Jacobi rotations on a symmetric matrix.
inline EigResult jacobi_eigensymmetric(Eigen::MatrixXd a) {
    const int n = static_cast<int>(a.rows());
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-26) break;

        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    std::sort(idx.begin(), idx.end(), [&](int x, int y) { return a(x, x) > a(y, y); });

    EigResult result;
    result.eigenvalues.resize(n);
    result.eigenvectors.resize(n, n);
    for (int i = 0; i < n; ++i) {
        result.eigenvalues(i) = a(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(i)]);
        result.eigenvectors.col(i) = v.col(idx[static_cast<size_t>(i)]);
    }
    return result;
}

// Sample covariance (divides by rows-1) accumulated with plain loops.
inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x) {
    const int rows = static_cast<int>(x.rows());
    const int cols = static_cast<int>(x.cols());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) mean(c) += x(r, c);
    mean /= static_cast<double>(rows);

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(cols, cols);
    for (int r = 0; r < rows; ++r) {
        for (int i = 0; i < cols; ++i) {
            for (int j = 0; j < cols; ++j) {
                cov(i, j) += (x(r, i) - mean(i)) * (x(r, j) - mean(j));
            }
        }
    }
    cov /= static_cast<double>(rows - 1);
    return cov;
}

// Top-k principal directions as rows, by covariance eigendecomposition.
inline Eigen::MatrixXd principal_directions(const Eigen::MatrixXd& x, int k) {
    const EigResult eig = jacobi_eigensymmetric(sample_covariance(x));
    Eigen::MatrixXd dirs(k, x.cols());
    for (int i = 0; i < k; ++i) dirs.row(i) = eig.eigenvectors.col(i).transpose();
    return dirs;
}

// Largest principal angle (radians) between the row spaces of two matrices
// with orthonormal rows.
inline double max_principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a * b.transpose());
    double worst = 0.0;
    for (int i = 0; i < svd.singularValues().size(); ++i) {
        const double s = std::min(1.0, std::max(-1.0, svd.singularValues()(i)));
        worst = std::max(worst, std::acos(s));
    }
    return worst;
}

}  // namespace oracle
