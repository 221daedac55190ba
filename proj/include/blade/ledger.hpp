#pragma once
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "blade/bytes.hpp"
#include "blade/digest.hpp"
#include "blade/mlcore.hpp"

// Blocks, proof of work, verification and longest-chain fork choice.
//
// Canonical byte layout (little-endian, version 1):
//   header (104 bytes): prev_hash[32] height:u64 round:u64 nonce:u64
//                       difficulty_bits:u32 aggregate_digest[32] miner_id:u32
//                       timestamp_ticks:i64
//   block: header | n_updates:u32 | records | n_contrib:u32 | (id:u32 w:f64)*
//          | dim:u32 | params:f64*
//   record: client_id:u32 round:u64 digest[32] n_samples:u64 compute_ticks:i64
//   chain file: "BLDC" | version:u32 | count:u64 | (byte_len:u64 | block)*
// The PoW hash is sha256 over the 104 header bytes.

namespace blade::ledger {

// update summary as listed in a block body; the raw parameters live in the
// verifiers' pools and are joined back by digest
struct UpdateRecord {
    uint32_t client_id = 0;
    uint64_t round = 0;
    Digest digest{};
    uint64_t n_samples = 0;
    int64_t compute_ticks = 0;

    bool operator==(const UpdateRecord&) const = default;
};

struct BlockHeader {
    Digest prev_hash{};
    uint64_t height = 0;
    uint64_t round = 0;
    uint64_t nonce = 0;
    uint32_t difficulty_bits = 0;
    Digest aggregate_digest{};
    uint32_t miner_id = 0;
    int64_t timestamp_ticks = 0;

    bool operator==(const BlockHeader&) const = default;
};

struct BlockBody {
    std::vector<UpdateRecord> updates;                        // ascending client id
    mlcore::ParamVector aggregate_params;                     // the new global model
    std::vector<std::pair<uint32_t, double>> contributions;   // id -> weight, sums to 1

    bool operator==(const BlockBody&) const = default;
};

struct Block {
    BlockHeader header;
    BlockBody body;

    bool operator==(const Block&) const = default;
};

std::vector<uint8_t> serialize_header(const BlockHeader& h);
Digest header_hash(const BlockHeader& h);

void serialize_block(const Block& b, ByteWriter& w);
Block deserialize_block(ByteReader& r);

bool pow_valid(const BlockHeader& h);

// Fills body-derived fields of a child header; nonce stays 0 until mined.
BlockHeader make_child_header(const BlockHeader& parent, const BlockBody& body, uint64_t round,
                              uint32_t miner_id, int64_t timestamp_ticks,
                              uint32_t difficulty_bits);

struct MineResult {
    bool sealed = false;
    BlockHeader header{};
    uint64_t tries = 0; // nonces tested, including the sealing one
};

// Sequential nonce grind from nonce_start; gives up after max_tries so a
// caller can interleave with message processing.
MineResult mine(BlockHeader header, uint64_t nonce_start, uint64_t max_tries);

enum class VerifyResult {
    ok,
    bad_pow,        // header hash misses the difficulty target
    bad_link,       // prev_hash/height do not extend the verifier's tip
    bad_digest,     // aggregate_digest does not hash the body parameters
    bad_weights,    // contributions malformed or do not sum to 1
    missing_update, // a listed update is absent from the verifier's pool
    not_winner,     // an updater is not a selected trainer
    bad_aggregate,  // re-aggregation does not reproduce the stored model
    bad_score,      // test-set mode: block model scores below the pool aggregate
};
const char* verify_reason(VerifyResult r);

struct VerifyContext {
    // test-set mode replaces the bit-exact re-aggregation check with an
    // accuracy comparison on a public test set
    bool use_testset = false;
    const mlcore::Dataset* testset = nullptr;
    const mlcore::ModelSpec* model = nullptr;
    double tolerance = 0.02;
};

// tip is the verifier's current chain head: linkage is checked against its
// header and the stored global model is recomputed as tip aggregate plus the
// sample-weighted mean of the listed update deltas, joined from `pool`.
VerifyResult verify_block(const Block& b, const Block& tip,
                          const std::vector<mlcore::LocalUpdate>& pool,
                          const std::set<uint32_t>& winners, const VerifyContext& ctx = {});

struct Chain {
    std::vector<Block> blocks; // genesis first

    const Block& tip() const { return blocks.back(); }
    size_t height() const { return blocks.size() - 1; }
    bool empty() const { return blocks.empty(); }
};

Block make_genesis(const mlcore::ParamVector& initial_params, int64_t timestamp_ticks);

struct AuditReport {
    bool ok = true;
    size_t bad_height = 0;
    std::string reason;
};

// Structural re-verification of a stored chain: linkage, PoW and digest
// integrity at every height. Pool-dependent checks need the live run.
AuditReport audit_chain(const Chain& c);

// Longest chain wins; equal heights fall back to the lower tip hash.
// Chains must share a genesis block.
const Chain& resolve_fork(const Chain& a, const Chain& b);

void dump_chain(const Chain& c, const std::string& path);
Chain load_chain(const std::string& path);
std::string chain_to_json(const Chain& c);

} // namespace blade::ledger
