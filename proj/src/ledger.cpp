#include "blade/ledger.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "blade/errors.hpp"
#include "json.hpp"

namespace blade::ledger {

std::vector<uint8_t> serialize_header(const BlockHeader& h) {
    ByteWriter w;
    w.digest(h.prev_hash);
    w.u64(h.height);
    w.u64(h.round);
    w.u64(h.nonce);
    w.u32(h.difficulty_bits);
    w.digest(h.aggregate_digest);
    w.u32(h.miner_id);
    w.i64(h.timestamp_ticks);
    return w.take();
}

Digest header_hash(const BlockHeader& h) { return sha256(serialize_header(h)); }

void serialize_block(const Block& b, ByteWriter& w) {
    w.bytes(serialize_header(b.header).data(), 104);
    w.u32(static_cast<uint32_t>(b.body.updates.size()));
    for (const auto& u : b.body.updates) {
        w.u32(u.client_id);
        w.u64(u.round);
        w.digest(u.digest);
        w.u64(u.n_samples);
        w.i64(u.compute_ticks);
    }
    w.u32(static_cast<uint32_t>(b.body.contributions.size()));
    for (const auto& [id, weight] : b.body.contributions) {
        w.u32(id);
        w.f64(weight);
    }
    w.u32(static_cast<uint32_t>(b.body.aggregate_params.size()));
    for (double v : b.body.aggregate_params) w.f64(v);
}

Block deserialize_block(ByteReader& r) {
    Block b;
    b.header.prev_hash = r.digest();
    b.header.height = r.u64();
    b.header.round = r.u64();
    b.header.nonce = r.u64();
    b.header.difficulty_bits = r.u32();
    b.header.aggregate_digest = r.digest();
    b.header.miner_id = r.u32();
    b.header.timestamp_ticks = r.i64();

    const uint32_t nu = r.u32();
    b.body.updates.resize(nu);
    for (auto& u : b.body.updates) {
        u.client_id = r.u32();
        u.round = r.u64();
        u.digest = r.digest();
        u.n_samples = r.u64();
        u.compute_ticks = r.i64();
    }
    const uint32_t nc = r.u32();
    b.body.contributions.resize(nc);
    for (auto& [id, weight] : b.body.contributions) {
        id = r.u32();
        weight = r.f64();
    }
    const uint32_t dim = r.u32();
    b.body.aggregate_params.resize(dim);
    for (auto& v : b.body.aggregate_params) v = r.f64();
    return b;
}

bool pow_valid(const BlockHeader& h) {
    return leading_zero_bits(header_hash(h)) >= static_cast<int>(h.difficulty_bits);
}

BlockHeader make_child_header(const BlockHeader& parent, const BlockBody& body, uint64_t round,
                              uint32_t miner_id, int64_t timestamp_ticks,
                              uint32_t difficulty_bits) {
    BlockHeader h;
    h.prev_hash = header_hash(parent);
    h.height = parent.height + 1;
    h.round = round;
    h.nonce = 0;
    h.difficulty_bits = difficulty_bits;
    h.aggregate_digest = mlcore::param_digest(body.aggregate_params);
    h.miner_id = miner_id;
    h.timestamp_ticks = timestamp_ticks;
    return h;
}

MineResult mine(BlockHeader header, uint64_t nonce_start, uint64_t max_tries) {
    MineResult res;
    for (uint64_t i = 0; i < max_tries; ++i) {
        header.nonce = nonce_start + i;
        ++res.tries;
        if (pow_valid(header)) {
            res.sealed = true;
            res.header = header;
            return res;
        }
    }
    return res;
}

const char* verify_reason(VerifyResult r) {
    switch (r) {
        case VerifyResult::ok: return "ok";
        case VerifyResult::bad_pow: return "bad_pow";
        case VerifyResult::bad_link: return "bad_link";
        case VerifyResult::bad_digest: return "bad_digest";
        case VerifyResult::bad_weights: return "bad_weights";
        case VerifyResult::missing_update: return "missing_update";
        case VerifyResult::not_winner: return "not_winner";
        case VerifyResult::bad_aggregate: return "bad_aggregate";
        case VerifyResult::bad_score: return "bad_score";
    }
    return "unknown";
}

VerifyResult verify_block(const Block& b, const Block& tip,
                          const std::vector<mlcore::LocalUpdate>& pool,
                          const std::set<uint32_t>& winners, const VerifyContext& ctx) {
    if (!pow_valid(b.header)) return VerifyResult::bad_pow;
    if (b.header.prev_hash != header_hash(tip.header) ||
        b.header.height != tip.header.height + 1)
        return VerifyResult::bad_link;
    if (b.header.aggregate_digest != mlcore::param_digest(b.body.aggregate_params))
        return VerifyResult::bad_digest;

    if (b.body.contributions.size() != b.body.updates.size()) return VerifyResult::bad_weights;
    double wsum = 0.0;
    for (const auto& [id, weight] : b.body.contributions) {
        (void)id;
        if (!(weight > 0.0)) return VerifyResult::bad_weights;
        wsum += weight;
    }
    if (std::fabs(wsum - 1.0) > 1e-9) return VerifyResult::bad_weights;

    // join listed records back to the raw updates this verifier heard
    std::vector<mlcore::LocalUpdate> matched;
    matched.reserve(b.body.updates.size());
    for (const auto& rec : b.body.updates) {
        if (!winners.count(rec.client_id)) return VerifyResult::not_winner;
        const mlcore::LocalUpdate* found = nullptr;
        for (const auto& u : pool)
            if (u.client_id == rec.client_id && u.round == rec.round && u.digest == rec.digest) {
                found = &u;
                break;
            }
        if (!found) return VerifyResult::missing_update;
        matched.push_back(*found);
        matched.back().n_samples = rec.n_samples;
    }

    if (matched.empty()) return VerifyResult::bad_aggregate;
    const mlcore::ParamVector& prev = tip.body.aggregate_params;
    if (b.body.aggregate_params.size() != prev.size()) return VerifyResult::bad_aggregate;

    if (ctx.use_testset) {
        if (!ctx.testset || !ctx.model)
            throw ConfigError("test-set verification needs a test set and a model spec");
        const auto mine_agg = mlcore::aggregate(matched);
        mlcore::ParamVector pool_model = prev;
        for (size_t i = 0; i < pool_model.size(); ++i) pool_model[i] += mine_agg[i];
        const double pool_acc = mlcore::evaluate(pool_model, *ctx.testset, *ctx.model).accuracy;
        const double block_acc =
            mlcore::evaluate(b.body.aggregate_params, *ctx.testset, *ctx.model).accuracy;
        if (block_acc < pool_acc - ctx.tolerance) return VerifyResult::bad_score;
        return VerifyResult::ok;
    }

    const auto recomputed = mlcore::aggregate(matched);
    for (size_t i = 0; i < recomputed.size(); ++i)
        if (prev[i] + recomputed[i] != b.body.aggregate_params[i])
            return VerifyResult::bad_aggregate;
    return VerifyResult::ok;
}

Block make_genesis(const mlcore::ParamVector& initial_params, int64_t timestamp_ticks) {
    Block g;
    g.header.height = 0;
    g.header.round = 0;
    g.header.difficulty_bits = 0;
    g.header.miner_id = 0xffffffffu;
    g.header.timestamp_ticks = timestamp_ticks;
    g.body.aggregate_params = initial_params;
    g.header.aggregate_digest = mlcore::param_digest(initial_params);
    return g;
}

AuditReport audit_chain(const Chain& c) {
    AuditReport rep;
    if (c.empty()) {
        rep.ok = false;
        rep.reason = "empty chain";
        return rep;
    }
    for (size_t h = 0; h < c.blocks.size(); ++h) {
        const Block& b = c.blocks[h];
        if (b.header.height != h) {
            rep = {false, h, "height mismatch"};
            return rep;
        }
        if (b.header.aggregate_digest != mlcore::param_digest(b.body.aggregate_params)) {
            rep = {false, h, "aggregate digest mismatch"};
            return rep;
        }
        if (h == 0) continue;
        if (b.header.prev_hash != header_hash(c.blocks[h - 1].header)) {
            rep = {false, h, "broken hash link"};
            return rep;
        }
        if (!pow_valid(b.header)) {
            rep = {false, h, "proof of work invalid"};
            return rep;
        }
        if (!b.body.contributions.empty()) {
            double wsum = 0.0;
            for (const auto& [id, weight] : b.body.contributions) {
                (void)id;
                wsum += weight;
            }
            if (std::fabs(wsum - 1.0) > 1e-9) {
                rep = {false, h, "contribution weights do not sum to 1"};
                return rep;
            }
        }
    }
    return rep;
}

const Chain& resolve_fork(const Chain& a, const Chain& b) {
    if (a.empty() || b.empty()) throw ConfigError("fork resolution over an empty chain");
    if (!(a.blocks.front() == b.blocks.front()))
        throw ConfigError("fork resolution across different genesis blocks");
    if (a.blocks.size() != b.blocks.size())
        return a.blocks.size() > b.blocks.size() ? a : b;
    return digest_less(header_hash(b.tip().header), header_hash(a.tip().header)) ? b : a;
}

namespace {
constexpr uint32_t chain_magic = 0x43444c42u; // "BLDC"
constexpr uint32_t chain_version = 1;
} // namespace

void dump_chain(const Chain& c, const std::string& path) {
    ByteWriter w;
    w.u32(chain_magic);
    w.u32(chain_version);
    w.u64(c.blocks.size());
    for (const Block& b : c.blocks) {
        ByteWriter bw;
        serialize_block(b, bw);
        w.u64(bw.data().size());
        w.bytes(bw.data().data(), bw.data().size());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(w.data().data()),
              static_cast<std::streamsize>(w.data().size()));
    if (!out) throw IoError("short write: " + path);
}

Chain load_chain(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ByteReader r(buf);
    if (r.u32() != chain_magic) throw IoError("not a chain dump: " + path);
    const uint32_t ver = r.u32();
    if (ver != chain_version) throw IoError("unsupported chain version " + std::to_string(ver));
    const uint64_t count = r.u64();
    Chain c;
    c.blocks.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        const uint64_t len = r.u64();
        if (len > r.remaining()) throw IoError("truncated block record");
        ByteReader br(buf.data() + (buf.size() - r.remaining()), len);
        c.blocks.push_back(deserialize_block(br));
        if (!br.done()) throw IoError("trailing bytes inside block record");
        r.skip(len);
    }
    if (!r.done()) throw IoError("trailing bytes after chain dump");
    return c;
}

std::string chain_to_json(const Chain& c) {
    nlohmann::json out = nlohmann::json::array();
    for (const Block& b : c.blocks) {
        nlohmann::json jb;
        jb["height"] = b.header.height;
        jb["round"] = b.header.round;
        jb["hash"] = to_hex(header_hash(b.header));
        jb["prev_hash"] = to_hex(b.header.prev_hash);
        jb["nonce"] = b.header.nonce;
        jb["difficulty_bits"] = b.header.difficulty_bits;
        jb["miner_id"] = b.header.miner_id;
        jb["timestamp_ticks"] = b.header.timestamp_ticks;
        jb["aggregate_digest"] = to_hex(b.header.aggregate_digest);
        jb["param_dim"] = b.body.aggregate_params.size();
        nlohmann::json ups = nlohmann::json::array();
        for (const auto& u : b.body.updates)
            ups.push_back({{"client_id", u.client_id},
                           {"round", u.round},
                           {"digest", to_hex(u.digest)},
                           {"n_samples", u.n_samples},
                           {"compute_ticks", u.compute_ticks}});
        jb["updates"] = std::move(ups);
        nlohmann::json ws = nlohmann::json::object();
        for (const auto& [id, weight] : b.body.contributions) ws[std::to_string(id)] = weight;
        jb["contributions"] = std::move(ws);
        out.push_back(std::move(jb));
    }
    return out.dump(2);
}

} // namespace blade::ledger
