#include "hbf/gnn.hpp"

#include <algorithm>

#include "hbf/feedback.hpp"

namespace hbf {

namespace {

// Column mean that does not depend on column order: each row is summed in
// sorted order, so permuting nodes leaves the result bit-identical.
RVector node_mean(const RMatrix& x) {
    RVector out(x.rows());
    std::vector<double> row(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) row[static_cast<std::size_t>(j)] = x(i, j);
        std::sort(row.begin(), row.end());
        double acc = 0.0;
        for (double v : row) acc += v;
        out(i) = acc / static_cast<double>(x.cols());
    }
    return out;
}

// NetCache layout for GnnNetwork:
//   [0] pre-activation of init_bb, [1] mean feature, [2] pre-activation of init_rf,
//   then per layer g (base 3 + 8*(g-1)):
//   v^{g-1}, C^{g-1}, mean_k c^{g-1}, pre f1, pre f2, pre f3, pre f4, (unused)
constexpr int kInitSlots = 3;
constexpr int kLayerSlots = 8;

}  // namespace

GnnNetwork::GnnNetwork(SideDims d, int depth, Rng& rng) : StateNetwork(d) {
    const bool hidden = depth > 0;
    init_bb = Dense::init(d.in_dim, d.M * d.dc(), hidden, rng);
    init_rf = Dense::init(d.in_dim, d.dv(), hidden, rng);
    for (int g = 1; g <= depth; ++g) {
        const bool act = g < depth;
        GnnLayer layer;
        layer.f1 = Dense::init(d.dv(), d.dv(), act, rng);
        layer.f2 = Dense::init(d.dc(), d.dv(), act, rng);
        layer.f3 = Dense::init(d.dc(), d.dc(), act, rng);
        layer.f4 = Dense::init(d.dv(), d.dc(), act, rng);
        layers.push_back(std::move(layer));
    }
}

GnnNetwork GnnNetwork::zeros(SideDims d, int depth) {
    GnnNetwork n(d);
    const bool hidden = depth > 0;
    n.init_bb = Dense::zeros(d.in_dim, d.M * d.dc(), hidden);
    n.init_rf = Dense::zeros(d.in_dim, d.dv(), hidden);
    for (int g = 1; g <= depth; ++g) {
        const bool act = g < depth;
        n.layers.push_back({Dense::zeros(d.dv(), d.dv(), act), Dense::zeros(d.dc(), d.dv(), act),
                            Dense::zeros(d.dc(), d.dc(), act), Dense::zeros(d.dv(), d.dc(), act)});
    }
    return n;
}

NodeStates GnnNetwork::init_nodes(const RMatrix& x) const {
    const auto& d = dims();
    if (x.rows() != d.in_dim || x.cols() != d.Kp)
        throw ConstraintError("GNN input must be in_dim x Kp");
    NodeStates s;
    s.C = init_bb.forward(x).reshaped(d.dc(), d.K);
    s.v = init_rf.forward(node_mean(x));
    return s;
}

NodeStates GnnNetwork::message_pass(const NodeStates& s, int g) const {
    const GnnLayer& layer = layers.at(g - 1);
    NodeStates out;
    out.v = layer.f1.forward(s.v) + layer.f2.forward(node_mean(s.C));
    out.C = layer.f3.forward(s.C);
    out.C.colwise() += RVector(layer.f4.forward(s.v));
    return out;
}

NodeStates GnnNetwork::forward(const RMatrix& x, NetCache* cache) const {
    if (!cache) {
        NodeStates s = init_nodes(x);
        for (int g = 1; g <= depth(); ++g) s = message_pass(s, g);
        return s;
    }
    const auto& d = dims();
    if (x.rows() != d.in_dim || x.cols() != d.Kp)
        throw ConstraintError("GNN input must be in_dim x Kp");
    auto& t = cache->t;
    t.assign(kInitSlots + kLayerSlots * depth(), RMatrix());

    NodeStates s;
    s.C = init_bb.forward(x, &t[0]).reshaped(d.dc(), d.K);
    t[1] = node_mean(x);
    s.v = init_rf.forward(t[1], &t[2]);

    for (int g = 1; g <= depth(); ++g) {
        const GnnLayer& layer = layers[g - 1];
        RMatrix* slot = &t[kInitSlots + kLayerSlots * (g - 1)];
        slot[0] = s.v;
        slot[1] = s.C;
        slot[2] = node_mean(s.C);
        NodeStates next;
        next.v = layer.f1.forward(slot[0], &slot[3]) + layer.f2.forward(slot[2], &slot[4]);
        next.C = layer.f3.forward(slot[1], &slot[5]);
        next.C.colwise() += RVector(layer.f4.forward(slot[0], &slot[6]));
        s = std::move(next);
    }
    return s;
}

RMatrix GnnNetwork::backward(const RMatrix& x, const NetCache& cache, const NodeStates& grad_out,
                             StateNetwork& grad_base) const {
    auto& grad = static_cast<GnnNetwork&>(grad_base);
    const auto& d = dims();
    const auto& t = cache.t;
    RMatrix gv = grad_out.v;
    RMatrix gC = grad_out.C;

    for (int g = depth(); g >= 1; --g) {
        const GnnLayer& layer = layers[g - 1];
        GnnLayer& gl = grad.layers[g - 1];
        const RMatrix* slot = &t[kInitSlots + kLayerSlots * (g - 1)];
        RMatrix gv_prev = layer.f1.backward(slot[0], slot[3], gv, gl.f1);
        const RMatrix gcbar = layer.f2.backward(slot[2], slot[4], gv, gl.f2);
        RMatrix gC_prev = layer.f3.backward(slot[1], slot[5], gC, gl.f3);
        gv_prev += layer.f4.backward(slot[0], slot[6], gC.rowwise().sum(), gl.f4);
        gC_prev.colwise() += RVector(gcbar / static_cast<double>(d.K));
        gv = std::move(gv_prev);
        gC = std::move(gC_prev);
    }

    const RMatrix gbb = gC.reshaped(d.M * d.dc(), d.Kp);
    RMatrix gx = init_bb.backward(x, t[0], gbb, grad.init_bb);
    const RMatrix gxbar = init_rf.backward(t[1], t[2], gv, grad.init_rf);
    gx.colwise() += RVector(gxbar / static_cast<double>(d.Kp));
    return gx;
}

std::unique_ptr<StateNetwork> GnnNetwork::clone() const { return std::make_unique<GnnNetwork>(*this); }

std::unique_ptr<StateNetwork> GnnNetwork::zeros_like() const {
    return std::make_unique<GnnNetwork>(zeros(dims(), depth()));
}

void GnnNetwork::params(const std::string& prefix, std::vector<ParamRef>& out) {
    init_bb.params(prefix + ".I_BB", out);
    init_rf.params(prefix + ".I_RF", out);
    for (std::size_t g = 0; g < layers.size(); ++g) {
        const std::string p = prefix + ".layer" + std::to_string(g + 1);
        layers[g].f1.params(p + ".f1", out);
        layers[g].f2.params(p + ".f2", out);
        layers[g].f3.params(p + ".f3", out);
        layers[g].f4.params(p + ".f4", out);
    }
}

std::size_t GnnNetwork::param_count() const { return count_params(dims(), depth()); }

std::size_t GnnNetwork::count_params(const SideDims& d, int depth) {
    const std::size_t dc = d.dc(), dv = d.dv(), in = d.in_dim, M = d.M;
    std::size_t n = (in + 1) * M * dc + (in + 1) * dv;
    n += static_cast<std::size_t>(depth) * ((dv + 1) * dv + (dc + 1) * dv + (dc + 1) * dc + (dv + 1) * dc);
    return n;
}

RMatrix pilot_features(const ReceivedPilots& r, double scale) {
    if (r.Y.empty()) return {};
    RMatrix x(2 * r.Y.front().size(), r.Kp());
    for (int q = 0; q < r.Kp(); ++q) x.col(q) = scale * flatten_subchannel(r.Y[q]);
    return x;
}

ReceivedPilots feature_gradient_to_pilots(const RMatrix& grad_x, double scale,
                                          const SystemConfig& cfg) {
    ReceivedPilots g;
    g.Y.reserve(grad_x.cols());
    for (Eigen::Index q = 0; q < grad_x.cols(); ++q)
        g.Y.push_back(scale * unflatten_subchannel(grad_x.col(q), cfg.NRFr, cfg.L));
    return g;
}

}  // namespace hbf
