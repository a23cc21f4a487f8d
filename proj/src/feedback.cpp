#include "hbf/feedback.hpp"

#include <limits>
#include <string>

namespace hbf {

RVector flatten_subchannel(const CMatrix& y) { return pack_complex(y.transpose()); }

CMatrix unflatten_subchannel(const Eigen::Ref<const RVector>& v, int n_rf, int L) {
    return unpack_complex(v, L, n_rf).transpose();
}

RVector flatten(const ReceivedPilots& r) {
    if (r.Y.empty()) return {};
    const Eigen::Index block = 2 * r.Y.front().size();
    RVector out(block * r.Kp());
    for (int q = 0; q < r.Kp(); ++q) out.segment(q * block, block) = flatten_subchannel(r.Y[q]);
    return out;
}

ReceivedPilots unflatten(const Eigen::Ref<const RVector>& v, const SystemConfig& cfg) {
    const Eigen::Index block = 2 * cfg.NRFr * cfg.L;
    if (v.size() != block * cfg.Kp) throw std::invalid_argument("unflatten: size mismatch");
    ReceivedPilots r;
    r.Y.reserve(cfg.Kp);
    for (int q = 0; q < cfg.Kp; ++q)
        r.Y.push_back(unflatten_subchannel(v.segment(q * block, block), cfg.NRFr, cfg.L));
    return r;
}

RMatrix split(const ReceivedPilots& r, int V) {
    const RVector flat = flatten(r);
    if (V <= 0 || flat.size() % V != 0)
        throw ConfigError("pilot tensor of " + std::to_string(flat.size()) +
                          " reals is not divisible into segments of " + std::to_string(V));
    // Row-major reshape: row i holds flat[i*V, (i+1)*V).
    return flat.reshaped(V, flat.size() / V).transpose();
}

ReceivedPilots unsplit(const RMatrix& segments, const SystemConfig& cfg) {
    const RMatrix t = segments.transpose();
    return unflatten(t.reshaped(), cfg);
}

std::vector<int> nearest_codewords(const RMatrix& segments, const Codebook& cb) {
    std::vector<int> idx(segments.rows());
    for (Eigen::Index i = 0; i < segments.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_d = 0;
        for (int d = 0; d < cb.D(); ++d) {
            const double dist = (segments.row(i) - cb.E.row(d)).squaredNorm();
            if (dist < best) {
                best = dist;
                best_d = d;
            }
        }
        idx[i] = best_d;
    }
    return idx;
}

std::vector<std::uint8_t> pack_indices(const std::vector<int>& indices, int bits_per_index) {
    std::vector<std::uint8_t> bits;
    bits.reserve(indices.size() * bits_per_index);
    for (int v : indices)
        for (int b = bits_per_index - 1; b >= 0; --b) bits.push_back((v >> b) & 1);
    return bits;
}

std::vector<int> unpack_indices(const std::vector<std::uint8_t>& bits, int bits_per_index) {
    if (bits_per_index <= 0 || bits.size() % bits_per_index != 0)
        throw FormatError("bit stream length " + std::to_string(bits.size()) +
                          " is not a multiple of " + std::to_string(bits_per_index));
    std::vector<int> out(bits.size() / bits_per_index);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int v = 0;
        for (int b = 0; b < bits_per_index; ++b) {
            const auto bit = bits[i * bits_per_index + b];
            if (bit > 1) throw FormatError("bit stream holds a non-binary value");
            v = (v << 1) | bit;
        }
        out[i] = v;
    }
    return out;
}

FeedbackMessage encode(const ReceivedPilots& r, const Codebook& cb, const SystemConfig& cfg) {
    FeedbackMessage q;
    q.indices = nearest_codewords(split(r, cfg.V), cb);
    q.bits = pack_indices(q.indices, cfg.bits_per_index());
    return q;
}

RMatrix gather_codewords(const std::vector<int>& indices, const Codebook& cb) {
    RMatrix out(indices.size(), cb.V());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] >= cb.D())
            throw FormatError("codeword index " + std::to_string(indices[i]) +
                              " outside codebook of size " + std::to_string(cb.D()));
        out.row(i) = cb.E.row(indices[i]);
    }
    return out;
}

ReceivedPilots decode(const FeedbackMessage& q, const Codebook& cb, const SystemConfig& cfg) {
    if (!q.bits.empty() && q.bits.size() != q.indices.size() * cfg.bits_per_index())
        throw FormatError("feedback bit stream length disagrees with index count");
    if (static_cast<int>(q.indices.size()) != cfg.num_segments())
        throw FormatError("feedback carries " + std::to_string(q.indices.size()) +
                          " indices, expected " + std::to_string(cfg.num_segments()));
    return unsplit(gather_codewords(q.indices, cb), cfg);
}

ReceivedPilots decode_bits(const std::vector<std::uint8_t>& bits, const Codebook& cb,
                           const SystemConfig& cfg) {
    if (static_cast<int>(bits.size()) != cfg.B)
        throw FormatError("feedback bit stream has " + std::to_string(bits.size()) +
                          " bits, expected " + std::to_string(cfg.B));
    FeedbackMessage q;
    q.indices = unpack_indices(bits, cfg.bits_per_index());
    return decode(q, cb, cfg);
}

double vq_loss(const RMatrix& segments, const Codebook& cb, const std::vector<int>& indices,
               double beta) {
    if (segments.rows() == 0) return 0.0;
    const RMatrix e = gather_codewords(indices, cb);
    return (1.0 + beta) * (segments - e).rowwise().squaredNorm().mean();
}

VqLossGrad vq_loss_backward(const RMatrix& segments, const Codebook& cb,
                            const std::vector<int>& indices, double beta) {
    VqLossGrad g;
    g.codebook = RMatrix::Zero(cb.D(), cb.V());
    if (segments.rows() == 0) {
        g.segments = segments;
        return g;
    }
    const double n = static_cast<double>(segments.rows());
    const RMatrix resid = segments - gather_codewords(indices, cb);
    g.segments = (2.0 * beta / n) * resid;
    for (std::size_t i = 0; i < indices.size(); ++i)
        g.codebook.row(indices[i]) -= (2.0 / n) * resid.row(i);
    return g;
}

}  // namespace hbf
