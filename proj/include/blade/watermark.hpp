#pragma once
#include <cstdint>
#include <vector>

#include "blade/mlcore.hpp"

// Spread-spectrum update provenance: every client stamps an m-sequence chip
// pattern onto the update it broadcasts, scaled to sit snr_db below the
// parameter power. Copied updates carry the victim's stamp, which any peer
// can surface by correlating against the victim's chip window.

namespace blade::watermark {

struct PnSequence {
    std::vector<int8_t> chips; // one full period of +-1 values
    int degree = 0;
    uint32_t taps = 0;       // exponent bitmask of the feedback polynomial
    uint32_t seed_state = 0; // initial register fill
    size_t period() const { return chips.size(); }
};

// Feedback taps known to be primitive for degrees 10 through 20.
uint32_t primitive_taps(int degree);

// Fibonacci LFSR walk over a full period; output bit 0 -> +1, 1 -> -1.
// The register must start nonzero or it locks up.
PnSequence gen_pn(int degree, uint32_t taps, uint32_t seed_state);

// Table taps plus a register fill derived from an arbitrary 64-bit seed.
PnSequence pn_for_seed(int degree, uint64_t seed);

inline int8_t chip_at(const PnSequence& pn, size_t i) { return pn.chips[i % pn.chips.size()]; }

// Chip window start for a client: consecutive ids read disjoint windows
// until the sequence wraps.
size_t client_offset(uint32_t client_id, size_t use_len, size_t period);

struct WatermarkConfig {
    bool enabled = true;
    double snr_db = 6.0;
    size_t use_len = 25400; // chips actually embedded
    double gamma = 0.5;     // detection threshold as a fraction of the expected amplitude

    void validate() const;
};

// Chip amplitude that puts the watermark snr_db below the power of
// v[0..use_len). Zero-power input gives zero amplitude.
double embed_amplitude(const mlcore::ParamVector& v, size_t use_len, double snr_db);

// out[i] = v[i] + alpha * chip[offset + i] for i < use_len, untouched beyond.
mlcore::ParamVector embed(const mlcore::ParamVector& v, const PnSequence& pn,
                          const WatermarkConfig& cfg, size_t offset = 0);

struct Correlation {
    double statistic = 0.0;      // mean of v[i] * chip[offset + i]
    double received_power = 0.0; // mean of v[i]^2 over the window
    size_t length = 0;
};

Correlation correlate(const mlcore::ParamVector& v, const PnSequence& pn, size_t use_len,
                      size_t offset = 0);

// Detected when the correlation clears gamma times the amplitude a genuine
// watermark at cfg.snr_db would show given the received power.
bool decide(const Correlation& c, const WatermarkConfig& cfg);

struct RocRow {
    double snr_db = 0.0;
    double gamma = 0.0;
    double tpr = 0.0; // detection rate on watermarked vectors
    double fpr = 0.0; // false-alarm rate on clean vectors
};

// Monte-Carlo detection rates on standard-normal host vectors. Trials run
// in parallel but each draws from its own seeded stream, so the table is
// identical for any thread count.
std::vector<RocRow> roc_table(const std::vector<double>& snr_db, double gamma, int degree,
                              size_t use_len, int trials, uint64_t seed);

} // namespace blade::watermark
