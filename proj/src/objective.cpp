#include "hbf/objective.hpp"

#include <cmath>
#include <string>

namespace hbf {

namespace {

constexpr double kRidge = 1e-12;
constexpr double kInvLn2 = 1.4426950408889634;

struct Factored {
    Eigen::LLT<CMatrix> omega;
    Eigen::LLT<CMatrix> s;
    CMatrix lambda;
};

double log_det(const Eigen::LLT<CMatrix>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().real().array().log().sum();
}

bool well_conditioned(const Eigen::LLT<CMatrix>& llt) {
    if (llt.info() != Eigen::Success) return false;
    const auto d = llt.matrixLLT().diagonal().real();
    const double lo = d.minCoeff(), hi = d.maxCoeff();
    return lo > 0.0 && (lo * lo) > 1e-14 * (hi * hi);
}

Factored factor(const CMatrix& h, const CMatrix& f, const CMatrix& w, double rho, double sigma2,
                int subchannel) {
    const Eigen::Index ns = f.cols();
    const double c = rho / static_cast<double>(ns);
    Factored out;
    out.lambda = w.adjoint() * h * f;
    CMatrix omega = sigma2 * (w.adjoint() * w);
    out.omega.compute(omega);
    if (!well_conditioned(out.omega)) {
        const double ridge = kRidge * omega.trace().real() / static_cast<double>(ns);
        omega.diagonal().array() += ridge;
        out.omega.compute(omega);
        if (!(ridge > 0.0) || out.omega.info() != Eigen::Success)
            throw ConstraintError("noise covariance Omega is singular on subchannel " +
                                  std::to_string(subchannel));
    }
    CMatrix s = omega + c * out.lambda * out.lambda.adjoint();
    out.s.compute(s);
    if (out.s.info() != Eigen::Success)
        throw ConstraintError("rate matrix not positive definite on subchannel " +
                              std::to_string(subchannel));
    return out;
}

// Rate seen through an orthonormal basis of range(w). Equal to the log-det
// form whenever w has full column rank, and finite when it does not.
double range_rate(const CMatrix& h, const CMatrix& f, const CMatrix& w, double rho, double sigma2) {
    Eigen::ColPivHouseholderQR<CMatrix> qr(w);
    qr.setThreshold(1e-10);
    const Eigen::Index r = qr.rank();
    if (r == 0) return 0.0;
    const CMatrix q = CMatrix(qr.householderQ()).leftCols(r);
    const CMatrix a = q.adjoint() * h * f;
    const double c = rho / static_cast<double>(f.cols()) / sigma2;
    const CMatrix s = CMatrix::Identity(r, r) + c * a * a.adjoint();
    Eigen::LLT<CMatrix> llt(s);
    return std::max(0.0, log_det(llt) * kInvLn2);
}

}  // namespace

double subchannel_rate(const CMatrix& h, const CMatrix& f, const CMatrix& w, double rho,
                       double sigma2, int subchannel) {
    {
        const Eigen::LLT<CMatrix> omega(sigma2 * (w.adjoint() * w));
        if (!well_conditioned(omega)) return range_rate(h, f, w, rho, sigma2);
    }
    Factored fa;
    try {
        fa = factor(h, f, w, rho, sigma2, subchannel);
    } catch (const ConstraintError&) {
        return range_rate(h, f, w, rho, sigma2);
    }
    return std::max(0.0, (log_det(fa.s) - log_det(fa.omega)) * kInvLn2);
}

SubchannelRateGrad subchannel_rate_grad(const CMatrix& h, const CMatrix& f, const CMatrix& w,
                                        double rho, double sigma2, int subchannel) {
    const Factored fa = factor(h, f, w, rho, sigma2, subchannel);
    const Eigen::Index ns = f.cols();
    const double c = rho / static_cast<double>(ns);
    const CMatrix I = CMatrix::Identity(ns, ns);
    const CMatrix s_inv = fa.s.solve(I);
    const CMatrix omega_inv = fa.omega.solve(I);

    SubchannelRateGrad g;
    g.rate = (log_det(fa.s) - log_det(fa.omega)) * kInvLn2;
    // d logdet(S)/d Lambda = 2c S^-1 Lambda; Omega enters through w twice.
    const CMatrix g_lambda = (2.0 * c) * (s_inv * fa.lambda);
    const CMatrix hf = h * f;
    g.w = (2.0 * sigma2) * (w * (s_inv - omega_inv)) + hf * g_lambda.adjoint();
    g.f = h.adjoint() * (w * g_lambda);
    g.w *= kInvLn2;
    g.f *= kInvLn2;
    return g;
}

RateReport spectral_efficiency(const ChannelRealization& h, const HybridBeamformer& f,
                               const HybridCombiner& w, double rho, double sigma2) {
    RateReport r;
    r.per_subchannel.resize(h.K());
    for (int k = 0; k < h.K(); ++k)
        r.per_subchannel(k) =
            subchannel_rate(h.H[k], f.F_RF * f.F_BB[k], w.W_RF * w.W_BB[k], rho, sigma2, k);
    r.mean = r.per_subchannel.mean();
    return r;
}

RateReport spectral_efficiency_digital(const ChannelRealization& h, const std::vector<CMatrix>& f,
                                       const std::vector<CMatrix>& w, double rho, double sigma2) {
    RateReport r;
    r.per_subchannel.resize(h.K());
    for (int k = 0; k < h.K(); ++k)
        r.per_subchannel(k) = subchannel_rate(h.H[k], f[k], w[k], rho, sigma2, k);
    r.mean = r.per_subchannel.mean();
    return r;
}

SpectralEfficiencyGrad spectral_efficiency_grad(const ChannelRealization& h,
                                                const HybridBeamformer& f,
                                                const HybridCombiner& w, double rho,
                                                double sigma2) {
    const int K = h.K();
    SpectralEfficiencyGrad out;
    out.rate.per_subchannel.resize(K);
    out.f.F_RF = CMatrix::Zero(f.F_RF.rows(), f.F_RF.cols());
    out.w.W_RF = CMatrix::Zero(w.W_RF.rows(), w.W_RF.cols());
    out.f.F_BB.resize(K);
    out.w.W_BB.resize(K);
    const double inv_k = 1.0 / K;
    for (int k = 0; k < K; ++k) {
        const SubchannelRateGrad g = subchannel_rate_grad(h.H[k], f.F_RF * f.F_BB[k],
                                                          w.W_RF * w.W_BB[k], rho, sigma2, k);
        out.rate.per_subchannel(k) = g.rate;
        out.f.F_RF.noalias() += inv_k * (g.f * f.F_BB[k].adjoint());
        out.f.F_BB[k] = inv_k * (f.F_RF.adjoint() * g.f);
        out.w.W_RF.noalias() += inv_k * (g.w * w.W_BB[k].adjoint());
        out.w.W_BB[k] = inv_k * (w.W_RF.adjoint() * g.w);
    }
    out.rate.mean = out.rate.per_subchannel.mean();
    return out;
}

double total_loss(double vq_loss, double rate, double alpha) { return alpha * vq_loss - rate; }

}  // namespace hbf
