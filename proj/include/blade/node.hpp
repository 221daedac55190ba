#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "blade/ledger.hpp"
#include "blade/mlcore.hpp"
#include "blade/privacy.hpp"
#include "blade/watermark.hpp"

namespace blade::node {

// event-queue ticks per budget time unit; message latency stays visible
// inside a mining window without rounding budget arithmetic
inline constexpr int64_t kTicksPerUnit = 100;

enum class Behavior { honest, lazy };

struct NodeConfig {
    uint32_t client_id = 0;
    Behavior behavior = Behavior::honest;
    double f = 1.0;                 // compute capability, cycles per time unit
    uint64_t data_size = 0;         // |D| reported with every honest update
    double cycles_per_sample = 1.0; // c_T
    uint32_t local_epochs = 1;      // tau
    bool detection_enabled = false;
    double disguise_std = 0.0;      // lazy camouflage noise
    double exaggeration = 1.0;      // lazy fabricated-|D| multiplier
    double lr = 0.1;
    uint32_t batch_size = 32;

    void validate() const;
};

// Per-round time split. The whole run must satisfy
// rounds * (tau*t_t + t_b) <= t_sum.
struct RoundBudget {
    double t_t = 0.0;   // time units per local epoch
    double t_b = 0.0;   // mining window per round
    double theta = 0.0; // t_t / t_b
    uint64_t rounds = 0;
    double t_sum = 0.0;
    uint32_t tau = 1;

    double round_len() const { return double(tau) * t_t + t_b; }
    void assert_feasible() const;
};

// Hardware model: t_b = k_diff*c_b/(n*f), t_t = data_size*c_t/f, and the
// largest round count that fits t_sum.
RoundBudget compute_budget(double k_diff, double c_b, uint32_t n, double f, uint64_t data_size,
                           double c_t, uint32_t tau, double t_sum);

// Budget pinned by the training/mining ratio instead of hardware constants.
RoundBudget budget_from_theta(double theta, double t_b, uint32_t tau, double t_sum);

// Largest tau for which `rounds` rounds still fit t_sum; the dual of
// compute_budget used when sweeping the round count.
uint32_t max_epochs_for_rounds(uint64_t rounds, double t_t, double t_b, double t_sum);

struct Node {
    NodeConfig cfg;
    mlcore::ModelSpec model;
    mlcore::Dataset data; // local shard
    privacy::PrivacyConfig priv;
    bool privacy_on = false;
    watermark::WatermarkConfig wm;
    std::shared_ptr<const std::vector<watermark::PnSequence>> pn_table;
    uint64_t run_seed = 0;

    mlcore::ParamVector global; // the model downloaded from the tip block
    ledger::Chain chain;
    std::vector<mlcore::LocalUpdate> pool; // current-round arrivals, own included
    std::optional<mlcore::LocalUpdate> own_update;
    std::set<uint32_t> excluded; // ids banned from this node's aggregation
    std::unique_ptr<privacy::AdaptiveSigma> adaptive;
    int epoch_cursor = 0; // absolute epochs consumed, keeps shuffles fresh

    double spent_train = 0.0; // cumulative time units
    double spent_mine = 0.0;
    uint64_t pool_gaps_tolerated = 0; // blocks adopted despite a missing update
};

// chips actually usable given the parameter count and the sequence period
size_t effective_use_len(const watermark::WatermarkConfig& wm, size_t param_dim, size_t period);

struct HonestResult {
    std::optional<mlcore::LocalUpdate> update; // empty when training diverged
    double sigma_used = 0.0;
    double pre_clip_norm = 0.0;
};

// Steps 1-2: train on the shard, clip, perturb, watermark, self-admit to the
// pool. Divergence makes the node skip the round (pool simply lacks it).
HonestResult round_step_honest(Node& n, uint64_t round, const RoundBudget& b);

// Copies a uniformly drawn foreign pool update, disguises it, relabels it
// with own id and fabricated metadata. Empty pool -> no payload.
std::optional<mlcore::LocalUpdate> round_step_lazy(Node& n, uint64_t round, const RoundBudget& b);

// Correlates every foreign pool entry against the node's own chip window;
// returns accused ids, ascending.
std::vector<uint32_t> pool_scan_for_lazy(const Node& n, uint64_t round);

// Deterministic recomputation of someone else's accusation from the public
// sequence table. Nodes that never saw the update abstain (false).
bool confirm_accusation(const Node& n, uint32_t accuser, uint32_t accused, uint64_t round);

// drops wrong-round, duplicate, and banned-sender updates
void admit_update(Node& n, const mlcore::LocalUpdate& u, uint64_t round);

// clears per-round state
void begin_round(Node& n);

// entries for `round` surviving the exclusion list, ascending client id
std::vector<mlcore::LocalUpdate> surviving_pool(const Node& n, uint64_t round);

// global + sample-weighted mean of surviving deltas
mlcore::ParamVector aggregate_round(const Node& n, uint64_t round);

// Time to seal a block if mining alone: Exp(solo_mean) shrunk by the
// fraction of the round spent mining. Rate scales with f * window, so over
// equal-capability honest nodes the expected fastest draw is t_b.
double mining_draw(uint64_t run_seed, uint32_t client_id, uint64_t round, double solo_mean,
                   double window_ratio);

// minimal draw wins; ties go to the lower client id
uint32_t mining_winner(const std::vector<std::pair<uint32_t, double>>& draws);

// reserves the round's mining window in the time ledger
void charge_mining(Node& n, const RoundBudget& b);

struct BuildResult {
    ledger::Block block;
    uint64_t tries = 0; // nonces tested while sealing
};

// assembles and seals the winner's block over the surviving pool
std::optional<BuildResult> build_block(const Node& n, uint64_t round, int64_t timestamp_ticks,
                                       uint32_t difficulty_bits, uint64_t max_tries);

enum class BlockAccept {
    adopted,  // verified against own tip (pool gaps tolerated) and appended
    stale,    // at or below own tip height
    rejected, // failed verification outright
};

// Step 6: verify an incoming block against own tip and download its model.
// missing_update alone is tolerated: a dropped broadcast must not fork the
// network, and the aggregate is still re-checked bit-exactly via the digest.
BlockAccept receive_block(Node& n, const ledger::Block& b, const std::set<uint32_t>& winners,
                          const ledger::VerifyContext& ctx = {});

}  // namespace blade::node
