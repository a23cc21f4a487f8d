#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "helpers.hpp"
#include "hbf/beamformer.hpp"
#include "hbf/gnn.hpp"
#include "hbf/mlp.hpp"
#include "hbf/objective.hpp"

using namespace hbf;

namespace {

ChannelRealization random_channel(const SystemConfig& cfg, Rng& rng) {
    ChannelRealization h;
    for (int k = 0; k < cfg.K; ++k) h.H.push_back(test::random_cmatrix(rng, cfg.Nr, cfg.Nt));
    return h;
}

HybridBeamformer bs_forward(const StateNetwork& net, const RMatrix& x, const SystemConfig& cfg) {
    return normalize_beamformer(read_out(net.forward(x), net.dims()), cfg);
}

// Input columns permuted by group: column q of the result is column perm[q] of x.
RMatrix permute_groups(const RMatrix& x, const std::vector<int>& perm) {
    RMatrix out(x.rows(), x.cols());
    for (std::size_t q = 0; q < perm.size(); ++q) out.col(q) = x.col(perm[q]);
    return out;
}

bool equivariant(const StateNetwork& net, const RMatrix& x, const std::vector<int>& perm,
                 const SystemConfig& cfg) {
    const HybridBeamformer a = bs_forward(net, x, cfg);
    const HybridBeamformer b = bs_forward(net, permute_groups(x, perm), cfg);
    if (a.F_RF != b.F_RF) return false;
    for (int q = 0; q < cfg.Kp; ++q)
        for (int m = 0; m < cfg.M; ++m)
            if (b.F_BB[q * cfg.M + m] != a.F_BB[perm[q] * cfg.M + m]) return false;
    return true;
}

HybridCombiner random_combiner(const SystemConfig& cfg, Rng& rng) {
    RawHybrid raw;
    raw.rf = test::random_cmatrix(rng, cfg.Nr, cfg.NRFr);
    for (int k = 0; k < cfg.K; ++k) raw.bb.push_back(test::random_cmatrix(rng, cfg.NRFr, cfg.Ns));
    return normalize_combiner(raw, cfg);
}

HybridBeamformer random_beamformer(const SystemConfig& cfg, Rng& rng) {
    RawHybrid raw;
    raw.rf = test::random_cmatrix(rng, cfg.Nt, cfg.NRFt);
    for (int k = 0; k < cfg.K; ++k) raw.bb.push_back(test::random_cmatrix(rng, cfg.NRFt, cfg.Ns));
    return normalize_beamformer(raw, cfg);
}

// Max relative error between the analytic SE gradient and central differences
// over every parameter of `net` and over its input. Entries below 1e-4 are
// compared in absolute terms.
template <class Net>
double se_gradient_error(Net& net, bool bs_side, const SystemConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    const ChannelRealization h = random_channel(cfg, rng);
    RMatrix x = test::random_rmatrix(rng, net.dims().in_dim, cfg.Kp);
    const HybridBeamformer F_fixed = random_beamformer(cfg, rng);
    const HybridCombiner W_fixed = random_combiner(cfg, rng);

    auto se = [&]() {
        const RawHybrid raw = read_out(net.forward(x), net.dims());
        if (bs_side) return spectral_efficiency(h, normalize_beamformer(raw, cfg), W_fixed, cfg.rho, cfg.sigma_n2).mean;
        return spectral_efficiency(h, F_fixed, normalize_combiner(raw, cfg), cfg.rho, cfg.sigma_n2).mean;
    };

    NetCache cache;
    const RawHybrid raw = read_out(net.forward(x, &cache), net.dims());
    NodeStates g_states;
    if (bs_side) {
        const HybridBeamformer F = normalize_beamformer(raw, cfg);
        const SpectralEfficiencyGrad g = spectral_efficiency_grad(h, F, W_fixed, cfg.rho, cfg.sigma_n2);
        g_states = pack_states(normalize_beamformer_backward(raw, cfg, g.f));
    } else {
        const HybridCombiner W = normalize_combiner(raw, cfg);
        const SpectralEfficiencyGrad g = spectral_efficiency_grad(h, F_fixed, W, cfg.rho, cfg.sigma_n2);
        g_states = pack_states(normalize_combiner_backward(raw, cfg, g.w));
    }
    auto grad = net.zeros_like();
    const RMatrix gx = net.backward(x, cache, g_states, *grad);

    std::vector<ParamRef> p, gp;
    net.params("n", p);
    grad->params("n", gp);
    REQUIRE(p.size() == gp.size());
    double worst = 0.0;
    for (std::size_t t = 0; t < p.size(); ++t)
        for (std::size_t i = 0; i < p[t].size; ++i) {
            const double fd = test::central_diff(se, p[t].data + i, 1e-5);
            worst = std::max(worst, test::rel_err(fd, gp[t].data[i], 1e-4));
        }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double fd = test::central_diff(se, x.data() + i, 1e-5);
        worst = std::max(worst, test::rel_err(fd, gx.data()[i], 1e-4));
    }
    return worst;
}

}  // namespace

TEST_CASE("state dimensions") {
    const SystemConfig ref = reference_config();
    CHECK(SideDims::bs(ref).dc() == 16);
    CHECK(SideDims::bs(ref).dv() == 512);
    CHECK(SideDims::ue(ref).dc() == 8);
    CHECK(SideDims::ue(ref).dv() == 16);
}

TEST_CASE("initialization layer") {
    const SystemConfig cfg = test::tiny_config();
    Rng rng(1);
    const GnnNetwork net(SideDims::bs(cfg), cfg.G, rng);
    const int M = cfg.M, dc = net.dims().dc();

    SUBCASE("identical pilot subchannels give identical groups") {
        const RVector col = test::random_rmatrix(rng, net.dims().in_dim, 1);
        const RMatrix x = col.replicate(1, cfg.Kp);
        const NodeStates s = net.init_nodes(x);
        CHECK(s.C.rows() == dc);
        CHECK(s.C.cols() == cfg.K);
        for (int q = 1; q < cfg.Kp; ++q) CHECK(s.C.middleCols(q * M, M) == s.C.leftCols(M));
    }
    SUBCASE("opposite inputs cancel in the analog mean") {
        const RVector a = test::random_rmatrix(rng, net.dims().in_dim, 1);
        RMatrix x(a.size(), 2);
        x.col(0) = a;
        x.col(1) = -a;
        const NodeStates s = net.init_nodes(x);
        CHECK(s.v == net.init_rf.forward(RVector::Zero(a.size())));
    }
    SUBCASE("group permutation permutes digital nodes and keeps the analog node") {
        const RMatrix x = test::random_rmatrix(rng, net.dims().in_dim, cfg.Kp);
        const NodeStates s = net.init_nodes(x);
        const NodeStates p = net.init_nodes(permute_groups(x, {1, 0}));
        CHECK(p.v == s.v);
        CHECK(p.C.leftCols(M) == s.C.rightCols(M));
        CHECK(p.C.rightCols(M) == s.C.leftCols(M));
    }
    CHECK_THROWS_AS(net.init_nodes(RMatrix::Zero(3, cfg.Kp)), ConstraintError);
}

TEST_CASE("message passing") {
    const SystemConfig cfg = test::tiny_config();
    Rng rng(2);
    const GnnNetwork net(SideDims::bs(cfg), cfg.G, rng);
    const auto& d = net.dims();

    NodeStates s;
    s.v = test::random_rmatrix(rng, d.dv(), 1);
    s.C = test::random_rmatrix(rng, d.dc(), 1).replicate(1, cfg.K);
    for (int g = 1; g <= cfg.G; ++g) {
        const NodeStates o = net.message_pass(s, g);
        for (int k = 1; k < cfg.K; ++k) CHECK(o.C.col(k) == o.C.col(0));
    }

    s.C = test::random_rmatrix(rng, d.dc(), cfg.K);
    std::vector<int> perm(cfg.K);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    NodeStates sp = s;
    for (int k = 0; k < cfg.K; ++k) sp.C.col(k) = s.C.col(perm[k]);
    const NodeStates a = net.message_pass(s, 1);
    const NodeStates b = net.message_pass(sp, 1);
    CHECK(a.v == b.v);
    for (int k = 0; k < cfg.K; ++k) CHECK(b.C.col(k) == a.C.col(perm[k]));

    // The final layer is affine, so zero parameters there give zero states.
    const GnnNetwork zero = GnnNetwork::zeros(d, cfg.G);
    const NodeStates z = zero.message_pass(s, cfg.G);
    CHECK(z.v.norm() == 0.0);
    CHECK(z.C.norm() == 0.0);
    CHECK(zero.forward(test::random_rmatrix(rng, d.in_dim, cfg.Kp)).v.norm() == 0.0);
}

TEST_CASE("read-out layout") {
    const SystemConfig cfg = test::tiny_config();
    const SideDims d = SideDims::bs(cfg);
    Rng rng(3);
    NodeStates s;
    s.v = test::random_rmatrix(rng, d.dv(), 1);
    s.C = test::random_rmatrix(rng, d.dc(), cfg.K);
    const NodeStates back = pack_states(read_out(s, d));
    CHECK(back.v == s.v);
    CHECK(back.C == s.C);

    NodeStates z = s;
    z.v.setZero();
    CHECK(read_out(z, d).rf.norm() == 0.0);

    // Real part laid out column-major, imaginary part after it.
    NodeStates e;
    e.v = RVector::Zero(d.dv());
    for (int j = 0; j < d.n_rf; ++j) e.v(j * d.n_ant + j) = 1.0;
    e.C = RMatrix::Zero(d.dc(), cfg.K);
    const RawHybrid raw = read_out(e, d);
    CHECK(raw.rf.imag().norm() == 0.0);
    CHECK(raw.rf.real() == RMatrix::Identity(d.n_ant, d.n_rf));
}

TEST_CASE("constraint normalization") {
    SystemConfig cfg = test::tiny_config();
    Rng rng(4);

    CMatrix x(1, 1);
    x(0, 0) = Complex(3, 4);
    CHECK(std::abs(project_unit_modulus(x, 0.5)(0, 0) - Complex(0.3, 0.4)) < 1e-15);

    CMatrix with_zero = test::random_cmatrix(rng, 3, 2);
    with_zero(1, 1) = 0.0;
    int zeros = 0;
    const CMatrix p = project_unit_modulus(with_zero, 0.25, &zeros);
    CHECK(zeros == 1);
    CHECK(p(1, 1) == Complex(0.25, 0.0));

    RawHybrid raw;
    raw.rf = test::random_cmatrix(rng, cfg.Nt, cfg.NRFt);
    for (int k = 0; k < cfg.K; ++k) raw.bb.push_back(test::random_cmatrix(rng, cfg.NRFt, cfg.Ns));
    const HybridBeamformer F = normalize_beamformer(raw, cfg);
    CHECK(digital_power(F) == doctest::Approx(cfg.K * cfg.Ns).epsilon(1e-12));
    const ConstraintReport rep = check_constraints(F, cfg);
    CHECK(rep.rf_modulus < 1e-15);
    CHECK(rep.power < 1e-12);

    RawHybrid scaled = raw;
    for (auto& b : scaled.bb) b *= 7.0;
    const HybridBeamformer F7 = normalize_beamformer(scaled, cfg);
    CHECK((F7.F_RF - F.F_RF).norm() == 0.0);
    for (int k = 0; k < cfg.K; ++k) CHECK((F7.F_BB[k] - F.F_BB[k]).norm() < 1e-14);

    RawHybrid dead = raw;
    for (auto& b : dead.bb) b.setZero();
    CHECK_THROWS_AS(normalize_beamformer(dead, cfg), ConstraintError);

    RawHybrid combiner;
    combiner.rf = test::random_cmatrix(rng, cfg.Nr, cfg.NRFr);
    for (int k = 0; k < cfg.K; ++k) combiner.bb.push_back(test::random_cmatrix(rng, cfg.NRFr, cfg.Ns));
    const HybridCombiner W = normalize_combiner(combiner, cfg);
    CHECK(combiner_modulus_violation(W, cfg) < 1e-15);
    CHECK(W.W_BB[2] == combiner.bb[2]);
}

TEST_CASE("GNN group-permutation equivariance is exact") {
    for (const SystemConfig& cfg : {test::tiny_config(), desk_config()}) {
        Rng rng(5);
        const GnnNetwork net(SideDims::bs(cfg), cfg.G, rng);
        std::vector<int> perm(cfg.Kp);
        std::iota(perm.begin(), perm.end(), 0);
        for (int trial = 0; trial < 10; ++trial) {
            const RMatrix x = test::random_rmatrix(rng, net.dims().in_dim, cfg.Kp);
            for (int i = cfg.Kp - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
            CHECK(equivariant(net, x, perm, cfg));
        }
        const RMatrix x = test::random_rmatrix(rng, net.dims().in_dim, cfg.Kp);
        NetCache cache;
        CHECK(net.forward(x).C == net.forward(x, &cache).C);
        CHECK(net.forward(x).v == net.forward(x).v);
    }
}

TEST_CASE("MLP ablation breaks equivariance") {
    const SystemConfig cfg = desk_config();
    Rng rng(6);
    const MlpNetwork mlp(SideDims::bs(cfg), cfg.G, rng);
    std::vector<int> perm(cfg.Kp);
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[0], perm[1]);
    bool broken = false;
    for (int trial = 0; trial < 5 && !broken; ++trial)
        broken = !equivariant(mlp, test::random_rmatrix(rng, mlp.dims().in_dim, cfg.Kp), perm, cfg);
    CHECK(broken);
}

TEST_CASE("parameter counts") {
    const SystemConfig ref = reference_config();
    for (const SideDims& d : {SideDims::bs(ref), SideDims::ue(ref)}) {
        CHECK(MlpNetwork::count_params(d, ref.G) > GnnNetwork::count_params(d, ref.G));
        CHECK(MlpNetwork::width(d) == d.K * d.dc() + d.dv());
    }
    const SystemConfig cfg = test::tiny_config();
    Rng rng(7);
    GnnNetwork g(SideDims::bs(cfg), cfg.G, rng);
    MlpNetwork m(SideDims::bs(cfg), cfg.G, rng);
    CHECK(g.param_count() == GnnNetwork::count_params(g.dims(), cfg.G));
    CHECK(m.param_count() == MlpNetwork::count_params(m.dims(), cfg.G));
    std::vector<ParamRef> refs;
    g.params("x", refs);
    std::size_t total = 0;
    for (const auto& r : refs) total += r.size;
    CHECK(total == g.param_count());
}

TEST_CASE("SE gradients of the GNN match finite differences") {
    const SystemConfig cfg = test::tiny_config();
    Rng rng(8);
    GnnNetwork bs(SideDims::bs(cfg), cfg.G, rng);
    GnnNetwork ue(SideDims::ue(cfg), cfg.G, rng);
    CHECK(se_gradient_error(bs, true, cfg, 21) < 1e-4);
    CHECK(se_gradient_error(ue, false, cfg, 22) < 1e-4);
}

TEST_CASE("SE gradients of the MLP match finite differences") {
    SystemConfig cfg = test::tiny_config();
    Rng rng(9);
    MlpNetwork bs(SideDims::bs(cfg), cfg.G, rng);
    MlpNetwork ue(SideDims::ue(cfg), cfg.G, rng);
    CHECK(se_gradient_error(bs, true, cfg, 23) < 1e-4);
    CHECK(se_gradient_error(ue, false, cfg, 24) < 1e-4);
}
