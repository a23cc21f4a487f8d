#include "hbf/core.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hbf {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

bool is_pow2(int x) { return x > 0 && std::has_single_bit(static_cast<unsigned>(x)); }

struct TableRow {
    int bits, D, V;
};

// Codebook size / codeword length pairs for a 1024-entry pilot tensor.
constexpr std::array<TableRow, 9> kReferenceLayouts{{
    {32, 2, 32},
    {64, 4, 32},
    {96, 8, 32},
    {128, 4, 16},
    {192, 8, 16},
    {256, 16, 16},
    {512, 16, 8},
    {768, 8, 4},
    {1024, 16, 4},
}};

}  // namespace

int SystemConfig::bits_per_index() const {
    return is_pow2(D) ? std::countr_zero(static_cast<unsigned>(D)) : 0;
}

const SystemConfig& validate(const SystemConfig& c) {
    require(c.Nt >= 1 && c.Nr >= 1 && c.NRFt >= 1 && c.NRFr >= 1 && c.Ns >= 1,
            "antenna, RF-chain and stream counts must be positive");
    require(c.NRFt <= c.Nt - 1, "NRFt must be smaller than Nt");
    require(c.NRFr <= c.Nr, "NRFr exceeds Nr");
    require(c.Ns <= c.NRFt, "Ns exceeds NRFt");
    require(c.Ns <= c.NRFr, "Ns exceeds NRFr");
    require(c.K >= 1 && c.Kp >= 1 && c.M >= 1, "K, Kp and M must be positive");
    require(c.K == c.Kp * c.M, "K must equal Kp * M");
    require(c.L >= 1, "pilot length L must be positive");
    require(c.D >= 2 && is_pow2(c.D), "codebook size D must be a power of two >= 2");
    require(c.V >= 1, "codeword length V must be positive");
    require(c.pilot_real_count() % c.V == 0, "2*Kp*NRFr*L must be divisible by V");
    require(c.B == feedback_bits(c), "B must equal (2*Kp*NRFr*L/V)*log2(D) = " +
                                         std::to_string(feedback_bits(c)));
    require(std::isfinite(c.rho) && c.rho >= 0.0, "rho must be finite and non-negative");
    require(std::isfinite(c.rho_p) && c.rho_p >= 0.0, "rho_p must be finite and non-negative");
    require(std::isfinite(c.sigma_n2) && c.sigma_n2 > 0.0, "sigma_n2 must be positive");
    require(c.G >= 0, "GNN depth G must be non-negative");
    require(std::isfinite(c.alpha) && c.alpha >= 0.0, "alpha must be non-negative");
    return c;
}

int feedback_bits(const SystemConfig& c) {
    if (c.V <= 0 || c.pilot_real_count() % c.V != 0 || !is_pow2(c.D)) return -1;
    return c.num_segments() * c.bits_per_index();
}

SystemConfig with_feedback_bits(SystemConfig cfg, int bits) {
    const int total = cfg.pilot_real_count();
    if (total == 1024) {
        for (const auto& row : kReferenceLayouts) {
            if (row.bits == bits) {
                cfg.B = row.bits;
                cfg.D = row.D;
                cfg.V = row.V;
                return cfg;
            }
        }
    }
    int best_D = 0, best_V = 0, best_score = 1 << 30;
    for (int V = total; V >= 1; --V) {
        if (total % V != 0) continue;
        const int segments = total / V;
        if (bits % segments != 0) continue;
        const int b = bits / segments;
        if (b < 1 || b > 16) continue;
        const int score = std::abs(b - 4);
        if (score < best_score) {
            best_score = score;
            best_D = 1 << b;
            best_V = V;
        }
    }
    if (best_D == 0)
        throw ConfigError("no (D, V) layout yields exactly " + std::to_string(bits) +
                          " feedback bits for a " + std::to_string(total) +
                          "-entry pilot tensor");
    cfg.B = bits;
    cfg.D = best_D;
    cfg.V = best_V;
    return cfg;
}

double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

double noise_power_from_psd(double psd_dbm_per_hz, double bandwidth_hz, int K) {
    if (!(bandwidth_hz > 0.0)) throw ConfigError("bandwidth must be positive");
    if (K < 1) throw ConfigError("subchannel count must be positive");
    return dbm_to_mw(psd_dbm_per_hz + 10.0 * std::log10(bandwidth_hz / K));
}

SystemConfig reference_config() {
    SystemConfig c;
    c.sigma_n2 = noise_power_from_psd(kDefaultNoisePsdDbmHz, kDefaultBandwidthHz, c.K) *
                 dbm_to_mw(kDefaultPathLossDb);
    return c;
}

SystemConfig desk_config() {
    SystemConfig c;
    c.Nt = 16;
    c.Nr = 2;
    c.NRFt = 4;
    c.NRFr = 2;
    c.Ns = 2;
    c.K = 32;
    c.Kp = 8;
    c.M = 4;
    c.L = 8;
    c = with_feedback_bits(c, 256);
    c.sigma_n2 = noise_power_from_psd(kDefaultNoisePsdDbmHz, kDefaultBandwidthHz, c.K) *
                 dbm_to_mw(kDefaultPathLossDb);
    return c;
}

void to_json(nlohmann::json& j, const SystemConfig& c) {
    j = nlohmann::json{{"Nt", c.Nt},       {"Nr", c.Nr},     {"NRFt", c.NRFt},
                       {"NRFr", c.NRFr},   {"Ns", c.Ns},     {"K", c.K},
                       {"Kp", c.Kp},       {"M", c.M},       {"L", c.L},
                       {"rho", c.rho},     {"rho_p", c.rho_p}, {"sigma_n2", c.sigma_n2},
                       {"B", c.B},         {"D", c.D},       {"V", c.V},
                       {"G", c.G},         {"alpha", c.alpha}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SystemConfig& c) {
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("Nt", c.Nt);
    get("Nr", c.Nr);
    get("NRFt", c.NRFt);
    get("NRFr", c.NRFr);
    get("Ns", c.Ns);
    get("K", c.K);
    get("Kp", c.Kp);
    get("M", c.M);
    get("L", c.L);
    get("rho", c.rho);
    get("rho_p", c.rho_p);
    get("D", c.D);
    get("V", c.V);
    get("G", c.G);
    get("alpha", c.alpha);
    get("seed", c.seed);
    if (j.contains("rho_dbm")) c.rho = dbm_to_mw(j.at("rho_dbm").get<double>());
    if (j.contains("rho_p_dbm")) c.rho_p = dbm_to_mw(j.at("rho_p_dbm").get<double>());

    if (j.contains("sigma_n2")) {
        j.at("sigma_n2").get_to(c.sigma_n2);
    } else if (j.contains("sigma_n2_dbm")) {
        c.sigma_n2 = dbm_to_mw(j.at("sigma_n2_dbm").get<double>());
    } else {
        const double psd = j.value("noise_psd_dbm_hz", kDefaultNoisePsdDbmHz);
        const double bw = j.value("bandwidth_hz", kDefaultBandwidthHz);
        const double pl = j.value("path_loss_db", kDefaultPathLossDb);
        c.sigma_n2 = noise_power_from_psd(psd, bw, c.K) * dbm_to_mw(pl);
    }

    if (j.contains("feedback_bits") && !j.contains("D") && !j.contains("V")) {
        c = with_feedback_bits(c, j.at("feedback_bits").get<int>());
    } else if (j.contains("B")) {
        j.at("B").get_to(c.B);
    } else {
        c.B = feedback_bits(c);
    }
}

SystemConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed config " + path + ": " + e.what());
    }
    SystemConfig cfg;
    try {
        from_json(j, cfg);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad config field in " + path + ": " + e.what());
    }
    return validate(cfg);
}

void save_config(const std::string& path, const SystemConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::ios_base::failure("cannot write config file " + path);
    out << nlohmann::json(cfg).dump(2) << '\n';
}

std::uint64_t shape_hash(const SystemConfig& c) {
    std::ostringstream key;
    key << c.Nt << ',' << c.Nr << ',' << c.NRFt << ',' << c.NRFr << ',' << c.Ns << ','
        << c.K << ',' << c.Kp << ',' << c.M << ',' << c.L << ',' << c.D << ',' << c.V
        << ',' << c.G;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : key.str()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

RVector pack_complex(const CMatrix& x) {
    const Eigen::Index n = x.size();
    RVector v(2 * n);
    v.head(n) = x.real().reshaped();
    v.tail(n) = x.imag().reshaped();
    return v;
}

CMatrix unpack_complex(const Eigen::Ref<const RVector>& v, int rows, int cols) {
    const Eigen::Index n = static_cast<Eigen::Index>(rows) * cols;
    if (v.size() != 2 * n) throw std::invalid_argument("unpack_complex: size mismatch");
    CMatrix x(rows, cols);
    x.real() = v.head(n).reshaped(rows, cols);
    x.imag() = v.tail(n).reshaped(rows, cols);
    return x;
}

}  // namespace hbf
