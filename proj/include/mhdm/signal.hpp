// One-dimensional signals on a uniform grid.
//
// A Signal is a vector of samples together with the cell width of the grid it
// lives on. The spacing feeds quadrature-weighted penalties (total variation,
// entropy); plain Euclidean norms are used for data fidelity throughout.

#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace mhdm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Signal {
    Vec values;
    double spacing = 1.0;

    Signal() = default;

    explicit Signal(Vec v) : values(std::move(v)) {
        if (values.size() == 0) throw std::invalid_argument("Signal: empty vector");
        spacing = 1.0 / static_cast<double>(values.size());
    }

    Signal(Vec v, double h) : values(std::move(v)), spacing(h) {
        if (values.size() == 0) throw std::invalid_argument("Signal: empty vector");
        if (!(h > 0.0)) throw std::invalid_argument("Signal: spacing must be positive");
    }

    Eigen::Index size() const { return values.size(); }
    double norm() const { return values.norm(); }
};

} // namespace mhdm
