#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "blade/contract.hpp"
#include "blade/mlcore.hpp"
#include "blade/network.hpp"
#include "blade/node.hpp"
#include "blade/privacy.hpp"
#include "blade/watermark.hpp"

namespace blade::sim {

struct ModelConfig {
    std::string kind = "linear_softmax"; // or "mlp"
    int hidden_dim = 16;                 // mlp only
};

struct DataConfig {
    std::string source = "synthetic"; // or "idx"
    mlcore::SyntheticSpec synth;      // synthetic route; samples_per_client and
                                      // skew also shard the idx route
    std::string images, labels;       // idx training pair
    std::string test_images, test_labels;
};

struct TrainConfig {
    double lr = 0.1;
    uint32_t batch_size = 32;
};

struct ChainConfig {
    std::string mode = "sampled"; // "sampled" lottery or "grind" real PoW
    uint32_t difficulty_bits = 0; // grind mode target
    double k = 1.0;               // difficulty constant in t_b = k*c_b/(N*f)
    double c_b = 40.0;            // cycles per hash
    uint64_t max_tries = 10'000'000;
};

struct BudgetConfig {
    double t_sum = 200.0;
    uint32_t tau = 1;    // local epochs; 0 = widest tau that fits `rounds`
    double theta = 6.0;  // t_t = theta * t_b; 0 = hardware route |D|*c_t/f
    uint64_t rounds = 0; // 0 = largest K that fits t_sum
    double f = 1.0;      // per-client cycles per time unit
    double c_t = 1.0;    // cycles per sample (hardware route)
};

struct BehaviorConfig {
    double lazy_fraction = 0.0; // floor(N*fraction) highest ids turn lazy
    double disguise_std = 0.0;
    double exaggeration = 1.0;
    bool detection = false; // honest nodes scan pools and accuse
};

struct ContractConfig {
    int64_t reward_pool = 1000;
    int64_t miner_subsidy = 2;
    int64_t deposit = 10;
    uint64_t required_data_size = 1;
};

struct OutputConfig {
    std::string dir;         // empty = keep everything in memory
    bool trace = false;      // trace.jsonl of delivered events
    bool chain_dump = false; // chain.bin of the canonical chain
};

struct SimConfig {
    uint64_t seed = 1;
    uint32_t n_clients = 20;
    ModelConfig model;
    DataConfig data;
    TrainConfig train;
    bool privacy_enabled = true;
    privacy::PrivacyConfig privacy;
    watermark::WatermarkConfig watermark;
    int pn_degree = 15;
    ChainConfig chain;
    net::NetConfig net;
    BudgetConfig budget;
    BehaviorConfig behavior;
    ContractConfig contract;
    OutputConfig output;

    void validate() const;
};

SimConfig parse_config(const std::string& json_text);
SimConfig load_config(const std::string& path);

struct RoundRecord {
    uint64_t round = 0;
    double train_loss = 0.0;    // canonical model on the pooled training data
    double test_accuracy = 0.0; // canonical model on the held-out set
    uint64_t chain_height = 0;
    uint32_t winner = 0xffffffffu; // sentinel until a block seals
    bool consensus = true;         // every node holds the same tip and model
    uint32_t accusations = 0;
    uint32_t new_exclusions = 0;
    double sigma = 0.0; // noise scale honest nodes used this round
    uint64_t mine_tries = 0;
    Digest aggregate_digest{};
};

struct RunSummary {
    uint32_t n_clients = 0;
    double final_accuracy = 0.0;
    double final_train_loss = 0.0;
    uint64_t rounds_executed = 0;
    uint64_t chain_height = 0;
    bool consensus_every_round = true;
    bool persistent_fork = false;
    bool chain_audit_ok = true;
    std::map<uint32_t, int64_t> rewards;
    std::vector<uint32_t> lazy_ids;
    uint64_t lazy_submissions = 0;
    uint64_t lazy_excluded = 0; // lazy submissions kept out of canonical blocks
    uint64_t honest_submissions = 0;
    uint64_t honest_flagged = 0; // honest ids banned by a (mistaken) quorum
    uint64_t pool_gaps = 0;
    uint64_t late_updates = 0;
    uint64_t blocks_rejected = 0;
    uint64_t blocks_sealed = 0;
    uint64_t total_mine_tries = 0;
    double max_node_spent = 0.0; // worst train+mine time across nodes
    node::RoundBudget budget;
    contract::ConservationReport conservation;
    double wall_seconds = 0.0;
};

struct MetricsReport {
    std::vector<RoundRecord> rounds;
    RunSummary summary;
};

// Steps 1-7 for every round, deterministically; writes metrics.csv /
// summary.json (and optional trace/chain dump) when output.dir is set.
MetricsReport run(const SimConfig& cfg);

std::string metrics_csv(const MetricsReport& r);
std::string summary_json(const MetricsReport& r);

enum class SweepAxis { epsilon, theta, lazy_fraction, snr_db, rounds };

// accepts epsilon | theta | lazy_fraction | snr_db | K
SweepAxis parse_axis(const std::string& name);
const char* axis_name(SweepAxis a);

struct SweepRow {
    double value = 0.0;
    std::vector<double> accuracy; // final accuracy per seed
    std::vector<double> loss;     // final train loss per seed
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0; // sample std across seeds
    double mean_loss = 0.0;
    double std_loss = 0.0;
    double mean_lazy_excluded_fraction = 0.0;
};

struct SweepTable {
    SweepAxis axis = SweepAxis::epsilon;
    std::vector<SweepRow> rows;
};

// Independent simulations per (value, seed); seeds derive as
// seed_mix({base, axis, value, i}). BLADE_SIM_THREADS caps the parallelism.
SweepTable sweep(const SimConfig& base, SweepAxis axis, const std::vector<double>& values,
                 uint32_t seeds_per_point);

std::string sweep_csv(const SweepTable& t);

}  // namespace blade::sim
