#include "hbf/nn.hpp"

#include <algorithm>
#include <cmath>

namespace hbf {

Dense Dense::init(int in, int out, bool activate, Rng& rng) {
    Dense d = zeros(in, out, activate);
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(in, 1)));
    d.W = d.W.unaryExpr([&](double) { return rng.uniform(-bound, bound); });
    d.b = d.b.unaryExpr([&](double) { return rng.uniform(-bound, bound); });
    return d;
}

Dense Dense::zeros(int in, int out, bool activate) {
    Dense d;
    d.W = RMatrix::Zero(out, in);
    d.b = RVector::Zero(out);
    d.activate = activate;
    return d;
}

RMatrix Dense::forward(const RMatrix& x, RMatrix* pre) const {
    RMatrix z = W * x;
    z.colwise() += b;
    if (pre) *pre = z;
    if (activate) z = z.unaryExpr(&softplus);
    return z;
}

RMatrix Dense::backward(const RMatrix& x, const RMatrix& pre, const RMatrix& grad_out,
                        Dense& grad) const {
    RMatrix gz = grad_out;
    if (activate) gz.array() *= pre.unaryExpr(&softplus_grad).array();
    grad.W.noalias() += gz * x.transpose();
    grad.b += gz.rowwise().sum();
    return W.transpose() * gz;
}

void Dense::params(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back(real_param(prefix + ".W", W));
    out.push_back(real_param(prefix + ".b", b));
}

void accumulate(const std::vector<ParamRef>& dst, const std::vector<ParamRef>& src, double scale) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
        Eigen::Map<RVector> d(dst[i].data, static_cast<Eigen::Index>(dst[i].size));
        Eigen::Map<const RVector> s(src[i].data, static_cast<Eigen::Index>(src[i].size));
        d += scale * s;
    }
}

void fill_zero(const std::vector<ParamRef>& refs) {
    for (const auto& r : refs) std::fill(r.data, r.data + r.size, 0.0);
}

std::size_t total_size(const std::vector<ParamRef>& refs) {
    std::size_t n = 0;
    for (const auto& r : refs) n += r.size;
    return n;
}

}  // namespace hbf
