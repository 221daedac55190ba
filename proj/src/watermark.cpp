#include "blade/watermark.hpp"

#include <cmath>

#include "blade/errors.hpp"
#include "blade/kernels.hpp"
#include "blade/rng.hpp"

namespace blade::watermark {

uint32_t primitive_taps(int degree) {
    // exponent sets of primitive polynomials, one per degree
    switch (degree) {
        case 10: return (1u << 10) | (1u << 7);
        case 11: return (1u << 11) | (1u << 9);
        case 12: return (1u << 12) | (1u << 11) | (1u << 10) | (1u << 4);
        case 13: return (1u << 13) | (1u << 12) | (1u << 11) | (1u << 8);
        case 14: return (1u << 14) | (1u << 13) | (1u << 12) | (1u << 2);
        case 15: return (1u << 15) | (1u << 14);
        case 16: return (1u << 16) | (1u << 15) | (1u << 13) | (1u << 4);
        case 17: return (1u << 17) | (1u << 14);
        case 18: return (1u << 18) | (1u << 11);
        case 19: return (1u << 19) | (1u << 18) | (1u << 17) | (1u << 14);
        case 20: return (1u << 20) | (1u << 17);
        default: throw ConfigError("no shipped taps for degree " + std::to_string(degree));
    }
}

PnSequence gen_pn(int degree, uint32_t taps, uint32_t seed_state) {
    if (degree < 2 || degree > 24) throw ConfigError("pn degree must be in [2, 24]");
    const uint32_t period_mask = (1u << degree) - 1u;
    if (taps == 0 || (taps & 1u) || (taps >> degree) != 1u)
        throw ConfigError("taps must set bit `degree` and no bit above it");
    seed_state &= period_mask;
    if (seed_state == 0) throw ConfigError("pn seed state must be nonzero");

    // feedback = parity over tap exponents e of state bit (degree - e)
    uint32_t shift_mask = 0;
    for (int e = 1; e <= degree; ++e)
        if ((taps >> e) & 1u) shift_mask |= 1u << (degree - e);

    PnSequence pn;
    pn.degree = degree;
    pn.taps = taps;
    pn.seed_state = seed_state;
    const size_t period = period_mask;
    pn.chips.resize(period);
    uint32_t s = seed_state;
    for (size_t i = 0; i < period; ++i) {
        pn.chips[i] = (s & 1u) ? int8_t{-1} : int8_t{1};
        const uint32_t fb = static_cast<uint32_t>(__builtin_parity(s & shift_mask));
        s = (s >> 1) | (fb << (degree - 1));
    }
    return pn;
}

PnSequence pn_for_seed(int degree, uint64_t seed) {
    const uint64_t period = (uint64_t{1} << degree) - 1;
    SplitMix64 sm{seed};
    const uint32_t state = static_cast<uint32_t>(sm.next() % period) + 1u;
    return gen_pn(degree, primitive_taps(degree), state);
}

size_t client_offset(uint32_t client_id, size_t use_len, size_t period) {
    if (period == 0) throw ConfigError("empty pn sequence");
    return (static_cast<uint64_t>(client_id) * use_len) % period;
}

void WatermarkConfig::validate() const {
    if (use_len < 1) throw ConfigError("watermark.use_len must be >= 1");
    if (!(gamma > 0.0) || gamma >= 1.0) throw ConfigError("watermark.gamma must be in (0, 1)");
    if (!std::isfinite(snr_db)) throw ConfigError("watermark.snr_db must be finite");
}

double embed_amplitude(const mlcore::ParamVector& v, size_t use_len, double snr_db) {
    if (use_len < 1 || use_len > v.size()) throw ConfigError("use_len outside the parameter vector");
    const double ps = kernels::sum_squares(v.data(), use_len) / static_cast<double>(use_len);
    return std::sqrt(ps / std::pow(10.0, snr_db / 10.0));
}

mlcore::ParamVector embed(const mlcore::ParamVector& v, const PnSequence& pn,
                          const WatermarkConfig& cfg, size_t offset) {
    cfg.validate();
    if (pn.chips.empty()) throw ConfigError("empty pn sequence");
    if (cfg.use_len > v.size()) throw ConfigError("use_len outside the parameter vector");
    const double alpha = embed_amplitude(v, cfg.use_len, cfg.snr_db);
    mlcore::ParamVector out = v;
    for (size_t i = 0; i < cfg.use_len; ++i)
        out[i] += alpha * static_cast<double>(chip_at(pn, offset + i));
    return out;
}

Correlation correlate(const mlcore::ParamVector& v, const PnSequence& pn, size_t use_len,
                      size_t offset) {
    if (pn.chips.empty()) throw ConfigError("empty pn sequence");
    if (use_len < 1 || use_len > v.size()) throw ConfigError("use_len outside the parameter vector");
    std::vector<int8_t> window(use_len);
    for (size_t i = 0; i < use_len; ++i) window[i] = chip_at(pn, offset + i);
    Correlation c;
    c.length = use_len;
    const double inv = 1.0 / static_cast<double>(use_len);
    c.statistic = kernels::dot_pm1(v.data(), window.data(), use_len) * inv;
    c.received_power = kernels::sum_squares(v.data(), use_len) * inv;
    return c;
}

bool decide(const Correlation& c, const WatermarkConfig& cfg) {
    cfg.validate();
    if (c.length == 0) throw ConfigError("correlation over empty window");
    const double snr = std::pow(10.0, cfg.snr_db / 10.0);
    // received power splits as alpha^2*(1+snr); invert for the amplitude
    const double alpha_hat = std::sqrt(std::max(c.received_power, 0.0) / (1.0 + snr));
    return c.statistic > cfg.gamma * alpha_hat;
}

std::vector<RocRow> roc_table(const std::vector<double>& snr_db, double gamma, int degree,
                              size_t use_len, int trials, uint64_t seed) {
    if (trials < 1) throw ConfigError("roc needs at least one trial");
    const PnSequence pn = pn_for_seed(degree, seed_mix({seed, hash_tag("roc-pn")}));
    if (use_len > pn.period()) throw ConfigError("use_len exceeds the pn period");

    std::vector<RocRow> rows;
    for (size_t si = 0; si < snr_db.size(); ++si) {
        WatermarkConfig cfg;
        cfg.snr_db = snr_db[si];
        cfg.use_len = use_len;
        cfg.gamma = gamma;

        std::vector<char> hit(trials, 0), false_alarm(trials, 0);
#pragma omp parallel for schedule(static) num_threads(kernels::max_threads())
        for (int t = 0; t < trials; ++t) {
            Rng rng(seed_mix({seed, hash_tag("roc-trial"), si, static_cast<uint64_t>(t)}));
            mlcore::ParamVector host(use_len);
            for (auto& x : host) x = rng.normal();
            const size_t offset = rng.below(pn.period());
            const auto marked = embed(host, pn, cfg, offset);
            hit[t] = decide(correlate(marked, pn, cfg.use_len, offset), cfg) ? 1 : 0;
            false_alarm[t] = decide(correlate(host, pn, cfg.use_len, offset), cfg) ? 1 : 0;
        }
        RocRow row;
        row.snr_db = snr_db[si];
        row.gamma = gamma;
        int h = 0, f = 0;
        for (int t = 0; t < trials; ++t) {
            h += hit[t];
            f += false_alarm[t];
        }
        row.tpr = static_cast<double>(h) / trials;
        row.fpr = static_cast<double>(f) / trials;
        rows.push_back(row);
    }
    return rows;
}

} // namespace blade::watermark
