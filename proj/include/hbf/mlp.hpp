#pragma once

#include "hbf/gnn.hpp"

namespace hbf {

/// Fully-connected ablation network: the flattened pilot features pass
/// through depth+1 dense layers of width K*dc + dv and are read out with the
/// same state layout as the GNN. The last layer is affine.
class MlpNetwork final : public StateNetwork {
public:
    MlpNetwork(SideDims dims, int depth, Rng& rng);
    static MlpNetwork zeros(SideDims dims, int depth);

    NodeStates forward(const RMatrix& x, NetCache* cache = nullptr) const override;
    RMatrix backward(const RMatrix& x, const NetCache& cache, const NodeStates& grad_out,
                     StateNetwork& grad) const override;

    std::unique_ptr<StateNetwork> clone() const override;
    std::unique_ptr<StateNetwork> zeros_like() const override;
    void params(const std::string& prefix, std::vector<ParamRef>& out) override;
    std::size_t param_count() const override;
    std::string kind() const override { return "mlp"; }

    static std::size_t count_params(const SideDims& d, int depth);
    static int width(const SideDims& d) { return d.K * d.dc() + d.dv(); }

    std::vector<Dense> layers;

private:
    explicit MlpNetwork(SideDims dims) : StateNetwork(dims) {}
};

}  // namespace hbf
