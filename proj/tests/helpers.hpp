#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "hbf/core.hpp"
#include "hbf/rng.hpp"

namespace hbf::test {

/// Small instance used by every gradient check: Nt=8, K=4, Kp=2.
inline SystemConfig tiny_config() {
    SystemConfig c;
    c.Nt = 8;
    c.Nr = 4;
    c.NRFt = 3;
    c.NRFr = 2;
    c.Ns = 2;
    c.K = 4;
    c.Kp = 2;
    c.M = 2;
    c.L = 4;
    c.D = 4;
    c.V = 4;
    c.B = feedback_bits(c);
    c.G = 2;
    c.rho = 2.0;
    c.rho_p = 1.5;
    c.sigma_n2 = 0.3;
    c.seed = 11;
    return validate(c);
}

inline CMatrix random_cmatrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double var = 1.0) {
    CMatrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.complex_normal(var);
    return m;
}

inline RMatrix random_rmatrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    RMatrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
    return m;
}

/// |a - b| relative to the larger magnitude, with an absolute floor.
inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central difference of f with respect to *x.
inline double central_diff(const std::function<double()>& f, double* x, double h) {
    const double old = *x;
    *x = old + h;
    const double fp = f();
    *x = old - h;
    const double fm = f();
    *x = old;
    return (fp - fm) / (2.0 * h);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("hbf_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace hbf::test
