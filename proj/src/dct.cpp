#include "iesis/dct.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace iesis {

namespace {

// entries of the orthonormal 1D cosine matrix: D(i, m), i frequency, m cell
double dct1d(int i, int m, int n) {
    double alpha = (i == 0) ? 1.0 / std::sqrt(2.0) : 1.0;
    return std::sqrt(2.0 / n) * alpha * std::cos(M_PI * (2.0 * m + 1.0) * i / (2.0 * n));
}

std::vector<std::pair<int, int>> frequency_order(int nx, int ny, DctOrdering ordering) {
    std::vector<std::pair<int, int>> order;
    order.reserve(static_cast<size_t>(nx) * ny);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j)
            order.emplace_back(i, j);
    if (ordering == DctOrdering::zigzag) {
        std::stable_sort(order.begin(), order.end(), [](const auto &a, const auto &b) {
            return a.first + a.second != b.first + b.second
                       ? a.first + a.second < b.first + b.second
                       : a.first < b.first;
        });
    }
    // row_major keeps r = i*ny + j ascending, which is the construction order
    return order;
}

} // namespace

DctBasis build_basis(int nx, int ny, int n_c, DctOrdering ordering) {
    require(nx >= 1 && ny >= 1, "basis requires positive grid extents");
    require(n_c >= 1 && n_c <= nx * ny, "truncation count out of range");
    auto order = frequency_order(nx, ny, ordering);
    order.resize(n_c);

    DctBasis basis;
    basis.nx = nx;
    basis.ny = ny;
    basis.ordering = ordering;
    basis.retained = order;
    basis.columns.resize(nx * ny, n_c);
    for (int c = 0; c < n_c; ++c) {
        auto [fi, fj] = order[static_cast<size_t>(c)];
        for (int m = 0; m < nx; ++m) {
            double dx = dct1d(fi, m, nx);
            for (int n = 0; n < ny; ++n)
                basis.columns(m * ny + n, c) = dx * dct1d(fj, n, ny);
        }
    }
    return basis;
}

DctBasis DctBasis::subset(const std::vector<int> &positions) const {
    DctBasis out;
    out.nx = nx;
    out.ny = ny;
    out.ordering = ordering;
    out.retained.reserve(positions.size());
    out.columns.resize(n_m(), static_cast<Eigen::Index>(positions.size()));
    for (size_t k = 0; k < positions.size(); ++k) {
        int p = positions[k];
        require(p >= 0 && p < static_cast<int>(n_c()), "subset position out of range");
        out.retained.push_back(retained[static_cast<size_t>(p)]);
        out.columns.col(static_cast<Eigen::Index>(k)) = columns.col(p);
    }
    return out;
}

VectorXd synthesize(const VectorXd &theta, const DctBasis &basis) {
    require(theta.size() == basis.n_c(), "coefficient length does not match basis");
    return basis.columns * theta;
}

VectorXd analyze(const VectorXd &field, int nx, int ny) {
    require(field.size() == static_cast<Eigen::Index>(nx) * ny, "field length mismatch");
    // separable transform: Theta = Dx * A * Dy^T with A(m, n) = field[m*ny + n]
    MatrixXd a = Eigen::Map<const MatrixXd>(field.data(), ny, nx).transpose();
    MatrixXd dx(nx, nx), dy(ny, ny);
    for (int i = 0; i < nx; ++i)
        for (int m = 0; m < nx; ++m)
            dx(i, m) = dct1d(i, m, nx);
    for (int j = 0; j < ny; ++j)
        for (int n = 0; n < ny; ++n)
            dy(j, n) = dct1d(j, n, ny);
    MatrixXd theta = dx * a * dy.transpose();
    VectorXd out(static_cast<Eigen::Index>(nx) * ny);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j)
            out[i * ny + j] = theta(i, j);
    return out;
}

std::vector<int> reduce_dimension(const VectorXd &theta_mean, double alpha) {
    require(alpha > 0.0 && alpha <= 1.0, "retention threshold must lie in (0,1]");
    const Eigen::Index n = theta_mean.size();
    std::vector<int> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);

    double total = theta_mean.cwiseAbs().sum();
    if (total == 0.0)
        return idx; // nothing to rank

    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return std::abs(theta_mean[a]) > std::abs(theta_mean[b]);
    });
    double acc = 0.0;
    size_t keep = 0;
    while (keep < idx.size()) {
        double mag = std::abs(theta_mean[idx[keep]]);
        if (mag == 0.0)
            break; // exact zeros never add mass
        acc += mag;
        ++keep;
        if (acc >= alpha * total)
            break;
    }
    std::vector<int> out(idx.begin(), idx.begin() + static_cast<long>(keep));
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace iesis
