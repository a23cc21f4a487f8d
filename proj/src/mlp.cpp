#include "hbf/mlp.hpp"

namespace hbf {

MlpNetwork::MlpNetwork(SideDims d, int depth, Rng& rng) : StateNetwork(d) {
    const int w = width(d);
    int in = d.in_dim * d.Kp;
    for (int i = 0; i <= depth; ++i) {
        layers.push_back(Dense::init(in, w, i < depth, rng));
        in = w;
    }
}

MlpNetwork MlpNetwork::zeros(SideDims d, int depth) {
    MlpNetwork n(d);
    const int w = width(d);
    int in = d.in_dim * d.Kp;
    for (int i = 0; i <= depth; ++i) {
        n.layers.push_back(Dense::zeros(in, w, i < depth));
        in = w;
    }
    return n;
}

NodeStates MlpNetwork::forward(const RMatrix& x, NetCache* cache) const {
    const auto& d = dims();
    if (x.rows() != d.in_dim || x.cols() != d.Kp)
        throw ConstraintError("MLP input must be in_dim x Kp");
    RMatrix h = x.reshaped(x.size(), 1);
    if (cache) cache->t.assign(2 * layers.size(), RMatrix());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (cache) {
            cache->t[2 * i] = h;
            h = layers[i].forward(cache->t[2 * i], &cache->t[2 * i + 1]);
        } else {
            h = layers[i].forward(h);
        }
    }
    NodeStates s;
    s.v = h.col(0).head(d.dv());
    s.C = h.col(0).tail(static_cast<Eigen::Index>(d.K) * d.dc()).reshaped(d.dc(), d.K);
    return s;
}

RMatrix MlpNetwork::backward(const RMatrix& x, const NetCache& cache, const NodeStates& grad_out,
                             StateNetwork& grad_base) const {
    auto& grad = static_cast<MlpNetwork&>(grad_base);
    const auto& d = dims();
    RMatrix g(width(d), 1);
    g.col(0).head(d.dv()) = grad_out.v;
    g.col(0).tail(static_cast<Eigen::Index>(d.K) * d.dc()) = grad_out.C.reshaped();
    for (std::size_t i = layers.size(); i-- > 0;)
        g = layers[i].backward(cache.t[2 * i], cache.t[2 * i + 1], g, grad.layers[i]);
    return g.reshaped(x.rows(), x.cols());
}

std::unique_ptr<StateNetwork> MlpNetwork::clone() const { return std::make_unique<MlpNetwork>(*this); }

std::unique_ptr<StateNetwork> MlpNetwork::zeros_like() const {
    return std::make_unique<MlpNetwork>(zeros(dims(), static_cast<int>(layers.size()) - 1));
}

void MlpNetwork::params(const std::string& prefix, std::vector<ParamRef>& out) {
    for (std::size_t i = 0; i < layers.size(); ++i)
        layers[i].params(prefix + ".fc" + std::to_string(i + 1), out);
}

std::size_t MlpNetwork::param_count() const {
    return count_params(dims(), static_cast<int>(layers.size()) - 1);
}

std::size_t MlpNetwork::count_params(const SideDims& d, int depth) {
    const std::size_t w = width(d);
    const std::size_t in = static_cast<std::size_t>(d.in_dim) * d.Kp;
    return (in + 1) * w + static_cast<std::size_t>(depth) * (w + 1) * w;
}

}  // namespace hbf
