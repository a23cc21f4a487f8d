#include "hbf/beamformer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace hbf {

SideDims SideDims::bs(const SystemConfig& cfg) {
    return {cfg.Nt, cfg.NRFt, cfg.Ns, cfg.K, cfg.Kp, cfg.M, 2 * cfg.NRFr * cfg.L};
}

SideDims SideDims::ue(const SystemConfig& cfg) {
    return {cfg.Nr, cfg.NRFr, cfg.Ns, cfg.K, cfg.Kp, cfg.M, 2 * cfg.NRFr * cfg.L};
}

RawHybrid read_out(const NodeStates& s, const SideDims& d) {
    RawHybrid raw;
    raw.rf = unpack_complex(s.v, d.n_ant, d.n_rf);
    raw.bb.reserve(d.K);
    for (int k = 0; k < d.K; ++k) raw.bb.push_back(unpack_complex(s.C.col(k), d.n_rf, d.Ns));
    return raw;
}

NodeStates pack_states(const RawHybrid& raw) {
    NodeStates s;
    s.v = pack_complex(raw.rf);
    const Eigen::Index dc = raw.bb.empty() ? 0 : 2 * raw.bb.front().size();
    s.C.resize(dc, static_cast<Eigen::Index>(raw.bb.size()));
    for (std::size_t k = 0; k < raw.bb.size(); ++k) s.C.col(k) = pack_complex(raw.bb[k]);
    return s;
}

CMatrix project_unit_modulus(const CMatrix& x, double scale, int* zero_count) {
    int zeros = 0;
    CMatrix y = x.unaryExpr([&](Complex z) {
        const double r = std::abs(z);
        if (r == 0.0) {
            ++zeros;
            return Complex(scale, 0.0);
        }
        return z * (scale / r);
    });
    if (zero_count) *zero_count = zeros;
    return y;
}

CMatrix project_unit_modulus_backward(const CMatrix& x, double scale, const CMatrix& grad_y) {
    // u = x/|x|: dL/dx = (g - u Re(conj(u) g)) / |x|
    CMatrix gx(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double r = std::abs(x(i));
        if (r == 0.0) {
            gx(i) = 0.0;
            continue;
        }
        const Complex u = x(i) / r;
        const Complex g = scale * grad_y(i);
        gx(i) = (g - u * std::real(std::conj(u) * g)) / r;
    }
    return gx;
}

namespace {

// Per-subchannel powers summed in sorted order so the total is independent of
// subchannel order.
double stack_power(const CMatrix& rf, const std::vector<CMatrix>& bb) {
    std::vector<double> p;
    p.reserve(bb.size());
    for (const auto& b : bb) p.push_back((rf * b).squaredNorm());
    std::sort(p.begin(), p.end());
    double total = 0.0;
    for (double v : p) total += v;
    return total;
}

}  // namespace

double digital_power(const HybridBeamformer& f) { return stack_power(f.F_RF, f.F_BB); }

HybridBeamformer normalize_beamformer(const RawHybrid& raw, const SystemConfig& cfg) {
    HybridBeamformer f;
    int zeros = 0;
    f.F_RF = project_unit_modulus(raw.rf, 1.0 / std::sqrt(static_cast<double>(cfg.Nt)), &zeros);
    if (zeros > 0)
        std::clog << "warning: " << zeros << " zero analog beamformer entries set to phase 0\n";
    f.F_BB = raw.bb;
    const double p = digital_power(f);
    if (!(p > 0.0) || !std::isfinite(p)) throw ConstraintError("degenerate beamformer");
    const double c = std::sqrt(static_cast<double>(cfg.K) * cfg.Ns / p);
    for (auto& bb : f.F_BB) bb *= c;
    return f;
}

RawHybrid normalize_beamformer_backward(const RawHybrid& raw, const SystemConfig& cfg,
                                        const HybridBeamformer& grad) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.Nt));
    const CMatrix A = project_unit_modulus(raw.rf, scale);
    const double p = stack_power(A, raw.bb);
    const double c = std::sqrt(static_cast<double>(cfg.K) * cfg.Ns / p);

    // F_BB[k] = c B_k with c = sqrt(K Ns / P), P = sum ||A B_k||^2.
    double s = 0.0;
    for (std::size_t k = 0; k < raw.bb.size(); ++k) s += real_inner(grad.F_BB[k], raw.bb[k]);
    const double coef = s * c / p;

    const CMatrix AhA = A.adjoint() * A;
    RawHybrid g;
    g.bb.resize(raw.bb.size());
    CMatrix grad_A = grad.F_RF;
    for (std::size_t k = 0; k < raw.bb.size(); ++k) {
        g.bb[k] = c * grad.F_BB[k] - coef * (AhA * raw.bb[k]);
        grad_A -= coef * (A * raw.bb[k] * raw.bb[k].adjoint());
    }
    g.rf = project_unit_modulus_backward(raw.rf, scale, grad_A);
    return g;
}

HybridCombiner normalize_combiner(const RawHybrid& raw, const SystemConfig& cfg) {
    HybridCombiner w;
    int zeros = 0;
    w.W_RF = project_unit_modulus(raw.rf, 1.0 / std::sqrt(static_cast<double>(cfg.Nr)), &zeros);
    if (zeros > 0)
        std::clog << "warning: " << zeros << " zero analog combiner entries set to phase 0\n";
    w.W_BB = raw.bb;
    return w;
}

RawHybrid normalize_combiner_backward(const RawHybrid& raw, const SystemConfig& cfg,
                                      const HybridCombiner& grad) {
    RawHybrid g;
    g.rf = project_unit_modulus_backward(raw.rf, 1.0 / std::sqrt(static_cast<double>(cfg.Nr)),
                                         grad.W_RF);
    g.bb = grad.W_BB;
    return g;
}

ConstraintReport check_constraints(const HybridBeamformer& f, const SystemConfig& cfg) {
    ConstraintReport r;
    const double target = 1.0 / cfg.Nt;
    r.rf_modulus = (f.F_RF.array().abs2() - target).abs().maxCoeff();
    const double kns = static_cast<double>(cfg.K) * cfg.Ns;
    r.power = std::abs(digital_power(f) - kns) / kns;
    return r;
}

double combiner_modulus_violation(const HybridCombiner& w, const SystemConfig& cfg) {
    return (w.W_RF.array().abs2() - 1.0 / cfg.Nr).abs().maxCoeff();
}

}  // namespace hbf
