#pragma once

#include <string>
#include <vector>

#include "hbf/core.hpp"
#include "hbf/rng.hpp"

namespace hbf {

/// Named, mutable view of one parameter tensor's storage.
struct ParamRef {
    std::string name;
    double* data;
    std::size_t size;
};

/// Real view of a complex matrix's storage (re, im interleaved per entry).
inline ParamRef complex_param(std::string name, CMatrix& m) {
    return {std::move(name), reinterpret_cast<double*>(m.data()), 2 * static_cast<std::size_t>(m.size())};
}
inline ParamRef real_param(std::string name, RMatrix& m) {
    return {std::move(name), m.data(), static_cast<std::size_t>(m.size())};
}
inline ParamRef real_param(std::string name, RVector& v) {
    return {std::move(name), v.data(), static_cast<std::size_t>(v.size())};
}

/// Smooth rectifier log(1 + e^x).
inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double softplus_grad(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// One fully-connected layer y = act(W x + b) applied column-wise, act being
/// softplus when `activate` is set and the identity otherwise.
struct Dense {
    RMatrix W;
    RVector b;
    bool activate = true;

    int in() const { return static_cast<int>(W.cols()); }
    int out() const { return static_cast<int>(W.rows()); }
    std::size_t param_count() const { return W.size() + b.size(); }

    /// Fan-in scaled uniform initialization U(-1/sqrt(in), 1/sqrt(in)).
    static Dense init(int in, int out, bool activate, Rng& rng);
    static Dense zeros(int in, int out, bool activate);
    Dense zeros_like() const { return zeros(in(), out(), activate); }

    /// Columns of x are independent inputs. When `pre` is given it receives W x + b.
    RMatrix forward(const RMatrix& x, RMatrix* pre = nullptr) const;
    /// Accumulates weight gradients into `grad` and returns dL/dx.
    RMatrix backward(const RMatrix& x, const RMatrix& pre, const RMatrix& grad_out,
                     Dense& grad) const;

    void params(const std::string& prefix, std::vector<ParamRef>& out);
};

/// Elementwise sum `dst += src` over two parameter lists with identical layout.
void accumulate(const std::vector<ParamRef>& dst, const std::vector<ParamRef>& src, double scale = 1.0);
void fill_zero(const std::vector<ParamRef>& refs);
std::size_t total_size(const std::vector<ParamRef>& refs);

}  // namespace hbf
