#include "hbf/channel.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "hbf/rng.hpp"

namespace hbf {

namespace {

constexpr char kMagic[8] = {'H', 'B', 'F', 'C', 'H', 'A', 'N', '1'};

static_assert(std::endian::native == std::endian::little,
              "dataset I/O assumes a little-endian host");

template <class T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::string& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw FormatError("truncated dataset header in " + path);
    return v;
}

Complex round_to_float(Complex z) {
    return {static_cast<double>(static_cast<float>(z.real())),
            static_cast<double>(static_cast<float>(z.imag()))};
}

}  // namespace

bool ChannelRealization::operator==(const ChannelRealization& o) const {
    if (H.size() != o.H.size()) return false;
    for (std::size_t k = 0; k < H.size(); ++k) {
        if (H[k].rows() != o.H[k].rows() || H[k].cols() != o.H[k].cols()) return false;
        if (H[k] != o.H[k]) return false;
    }
    return true;
}

void check_shape(const ChannelRealization& h, const SystemConfig& cfg) {
    if (h.K() != cfg.K || h.Nr() != cfg.Nr || h.Nt() != cfg.Nt)
        throw ConstraintError("channel shape " + std::to_string(h.K()) + "x" +
                              std::to_string(h.Nr()) + "x" + std::to_string(h.Nt()) +
                              " does not match config " + std::to_string(cfg.K) + "x" +
                              std::to_string(cfg.Nr) + "x" + std::to_string(cfg.Nt));
    for (const auto& m : h.H)
        if (!m.allFinite()) throw ConstraintError("channel holds non-finite entries");
}

void validate(const ClusterParams& p) {
    if (p.num_clusters < 1) throw ConfigError("num_clusters must be >= 1");
    if (p.rays_per_cluster < 1) throw ConfigError("rays_per_cluster must be >= 1");
    if (!(p.max_delay_s >= 0.0)) throw ConfigError("max_delay_s must be >= 0");
    if (!(p.angle_spread_deg >= 0.0)) throw ConfigError("angle_spread_deg must be >= 0");
    if (!(p.bandwidth_hz > 0.0)) throw ConfigError("bandwidth_hz must be positive");
}

CVector ula_response(int n_ant, double angle_rad) {
    CVector a(n_ant);
    const double s = std::sin(angle_rad);
    const double norm = 1.0 / std::sqrt(static_cast<double>(n_ant));
    for (int n = 0; n < n_ant; ++n) a(n) = std::polar(norm, M_PI * n * s);
    return a;
}

ChannelRealization generate_clustered_channel(const SystemConfig& cfg, const ClusterParams& params,
                                              std::uint64_t seed) {
    validate(params);
    Rng rng(seed);
    const int Nc = params.num_clusters;
    const int Np = params.rays_per_cluster;
    const double spread = params.angle_spread_deg * M_PI / 180.0;
    // Laplacian with standard deviation equal to the angle spread.
    const double lap_scale = spread / std::sqrt(2.0);
    const double gain = std::sqrt(static_cast<double>(cfg.Nt) * cfg.Nr / (Nc * Np));

    struct Ray {
        Complex alpha;
        CVector ar, at;
        double delay;
    };
    std::vector<Ray> rays;
    rays.reserve(static_cast<std::size_t>(Nc) * Np);
    for (int c = 0; c < Nc; ++c) {
        const double aod = rng.uniform(-M_PI / 2, M_PI / 2);
        const double aoa = rng.uniform(-M_PI / 2, M_PI / 2);
        const double delay = rng.uniform(0.0, params.max_delay_s);
        for (int p = 0; p < Np; ++p) {
            Ray r;
            r.alpha = rng.complex_normal(1.0);
            r.at = ula_response(cfg.Nt, aod + rng.laplace(lap_scale));
            r.ar = ula_response(cfg.Nr, aoa + rng.laplace(lap_scale));
            r.delay = delay;
            rays.push_back(std::move(r));
        }
    }

    ChannelRealization out;
    out.H.assign(cfg.K, CMatrix::Zero(cfg.Nr, cfg.Nt));
    const double df = params.bandwidth_hz / cfg.K;
    for (int k = 0; k < cfg.K; ++k) {
        const double fk = (k - cfg.K / 2) * df;
        CMatrix& Hk = out.H[k];
        for (const auto& r : rays) {
            const Complex phase = std::polar(1.0, -2.0 * M_PI * r.delay * fk);
            Hk.noalias() += (gain * r.alpha * phase) * (r.ar * r.at.adjoint());
        }
        for (Eigen::Index j = 0; j < Hk.cols(); ++j)
            for (Eigen::Index i = 0; i < Hk.rows(); ++i) Hk(i, j) = round_to_float(Hk(i, j));
    }
    return out;
}

Dataset generate_dataset(const SystemConfig& cfg, const ClusterParams& params, std::size_t n) {
    Dataset data;
    data.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        data.push_back(generate_clustered_channel(cfg, params, derive_seed(cfg.seed, Stream::Channel, i)));
    return data;
}

void save_dataset(const std::string& path, const Dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot write dataset " + path);
    const int K = data.empty() ? 0 : data.front().K();
    const int Nr = data.empty() ? 0 : data.front().Nr();
    const int Nt = data.empty() ? 0 : data.front().Nt();
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kDatasetVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(K));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(Nr));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(Nt));
    put<std::uint64_t>(out, data.size());

    std::vector<float> buf(2 * static_cast<std::size_t>(Nr) * Nt);
    for (const auto& h : data) {
        if (h.K() != K || h.Nr() != Nr || h.Nt() != Nt)
            throw FormatError("dataset samples have inconsistent shapes");
        for (const auto& Hk : h.H) {
            std::size_t i = 0;
            for (int r = 0; r < Nr; ++r)
                for (int t = 0; t < Nt; ++t) {
                    buf[i++] = static_cast<float>(Hk(r, t).real());
                    buf[i++] = static_cast<float>(Hk(r, t).imag());
                }
            out.write(reinterpret_cast<const char*>(buf.data()),
                      static_cast<std::streamsize>(buf.size() * sizeof(float)));
        }
    }
    if (!out) throw std::ios_base::failure("write failed for dataset " + path);
}

namespace {

DatasetShape read_header(std::ifstream& in, const std::string& path) {
    char magic[8];
    if (!in.read(magic, sizeof(magic))) throw FormatError("truncated dataset header in " + path);
    if (std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw FormatError("bad magic bytes in dataset " + path);
    const auto version = get<std::uint32_t>(in, path);
    if (version != kDatasetVersion)
        throw FormatError("unsupported dataset version " + std::to_string(version) + " in " + path);
    DatasetShape s;
    s.K = static_cast<int>(get<std::uint32_t>(in, path));
    s.Nr = static_cast<int>(get<std::uint32_t>(in, path));
    s.Nt = static_cast<int>(get<std::uint32_t>(in, path));
    s.count = get<std::uint64_t>(in, path);
    return s;
}

std::ifstream open_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::ios_base::failure("cannot open dataset " + path);
    return in;
}

}  // namespace

DatasetShape read_dataset_header(const std::string& path) {
    auto in = open_dataset(path);
    return read_header(in, path);
}

Dataset load_dataset(const std::string& path, const std::optional<SystemConfig>& expect) {
    auto in = open_dataset(path);
    const DatasetShape s = read_header(in, path);
    if (expect && (s.K != expect->K || s.Nr != expect->Nr || s.Nt != expect->Nt))
        throw FormatError("dataset " + path + " has shape K=" + std::to_string(s.K) +
                          " Nr=" + std::to_string(s.Nr) + " Nt=" + std::to_string(s.Nt) +
                          ", config expects K=" + std::to_string(expect->K) + " Nr=" +
                          std::to_string(expect->Nr) + " Nt=" + std::to_string(expect->Nt));

    Dataset data;
    data.reserve(s.count);
    std::vector<float> buf(2 * static_cast<std::size_t>(s.Nr) * s.Nt);
    for (std::uint64_t n = 0; n < s.count; ++n) {
        ChannelRealization h;
        h.H.reserve(s.K);
        for (int k = 0; k < s.K; ++k) {
            if (!in.read(reinterpret_cast<char*>(buf.data()),
                         static_cast<std::streamsize>(buf.size() * sizeof(float))))
                throw FormatError("truncated dataset body in " + path);
            CMatrix Hk(s.Nr, s.Nt);
            std::size_t i = 0;
            for (int r = 0; r < s.Nr; ++r)
                for (int t = 0; t < s.Nt; ++t, i += 2) Hk(r, t) = {buf[i], buf[i + 1]};
            h.H.push_back(std::move(Hk));
        }
        data.push_back(std::move(h));
    }
    return data;
}

SplitIndices split_dataset(std::size_t n) {
    const std::size_t n_train = n * 6 / 10;
    const std::size_t n_val = n * 2 / 10;
    SplitIndices s;
    for (std::size_t i = 0; i < n; ++i) {
        if (i < n_train)
            s.train.push_back(i);
        else if (i < n_train + n_val)
            s.validation.push_back(i);
        else
            s.test.push_back(i);
    }
    return s;
}

}  // namespace hbf
