#pragma once
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "blade/ledger.hpp"

// Task-escrow state machine: publish with an escrowed reward pool, select
// trainers from bids, pay per-block rewards, refund deposits at completion.
// All money is integer credits so every audit balances exactly.

namespace blade::contract {

enum class Phase { bidding, training, complete };

struct TaskSpec {
    uint64_t required_data_size = 1; // minimum claimed samples per bid
    double accuracy_target = 0.0;    // recorded; not enforced per round
    int64_t t_sum = 200;             // latency budget in time units
    int64_t reward_pool = 0;         // credits escrowed at publish
    uint32_t n_required = 0;         // trainers to select
    uint64_t rounds = 1;             // planned rounds; splits the pool
    int64_t miner_subsidy = 0;       // credits minted per sealed block
    std::string aggregating_rule = "fedavg_by_samples";
};

struct Bid {
    uint32_t client_id = 0;
    double capability = 0.0; // claimed cycles per tick
    uint64_t claimed_data_size = 0;
    double asking_cost = 1.0;
    int64_t deposit = 0;
};

struct ContractState {
    TaskSpec task;
    Phase phase = Phase::bidding;
    std::map<uint32_t, int64_t> deposits;      // currently staked
    std::set<uint32_t> selected;               // contract winners
    std::map<uint32_t, int> reputation;        // verification outcome tally
    std::map<uint32_t, int64_t> reward_ledger; // credits paid per client
    std::map<uint32_t, int64_t> refunded;      // deposits returned per client
    std::set<uint32_t> punished;               // ids whose updates are discarded
    int64_t escrow = 0;                        // unspent reward pool
    int64_t publisher_refund = 0;              // leftover pool returned at finalize
    int64_t minted = 0;                        // subsidies created so far
    int64_t total_staked = 0;                  // all deposits ever taken
    uint64_t blocks_settled = 0;
};

ContractState publish_task(const TaskSpec& spec);

// Top n_required bids by capability/asking_cost, ties to the lower client
// id. Winners' deposits stay staked; losers are refunded on the spot.
void select_winners(ContractState& state, const std::vector<Bid>& bids, uint32_t n_required);

// Credits available to trainers in round r; rounds with an extra remainder
// credit come first, so the full pool is spent after task.rounds rounds.
int64_t round_pool(const TaskSpec& task, uint64_t round);

// Splits `amount` proportionally to weights with the largest-remainder rule;
// ties go to the earlier entry. Sums to `amount` exactly.
std::vector<int64_t> apportion(int64_t amount, const std::vector<uint64_t>& weights);

// Pays the block's trainers their sample-weighted share of the round pool
// and mints the miner subsidy. Punished clients forfeit their share, which
// stays in escrow for the publisher.
void settle_rewards(ContractState& state, const ledger::Block& block);

void record_reputation(ContractState& state, uint32_t client_id, bool good);

// Future updates from this client are discarded. Slashing the staked
// deposit is supported but not the default.
void mark_punished(ContractState& state, uint32_t client_id, bool slash_deposit = false);

// Refunds every held deposit and the unspent pool, then closes the task.
void finalize(ContractState& state);

struct ConservationReport {
    int64_t staked = 0;     // all deposits ever taken
    int64_t pool = 0;       // published reward
    int64_t minted = 0;     // subsidies created
    int64_t rewards = 0;    // paid to clients
    int64_t refunds = 0;    // deposits returned + publisher leftover
    int64_t held = 0;       // deposits still staked
    int64_t escrow = 0;     // pool not yet spent
    bool balanced = false;  // inflow equals outflow plus holdings, exactly
};

ConservationReport audit_conservation(const ContractState& state);

} // namespace blade::contract
