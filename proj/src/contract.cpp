#include "blade/contract.hpp"

#include <algorithm>
#include <numeric>

#include "blade/errors.hpp"

namespace blade::contract {

ContractState publish_task(const TaskSpec& spec) {
    if (spec.reward_pool <= 0) throw ConfigError("reward pool must be positive");
    if (spec.n_required < 1) throw ConfigError("task must require at least one trainer");
    if (spec.rounds < 1) throw ConfigError("task must plan at least one round");
    if (spec.miner_subsidy < 0) throw ConfigError("miner subsidy must be >= 0");
    ContractState s;
    s.task = spec;
    s.phase = Phase::bidding;
    s.escrow = spec.reward_pool;
    return s;
}

void select_winners(ContractState& state, const std::vector<Bid>& bids, uint32_t n_required) {
    if (state.phase != Phase::bidding) throw ConfigError("winners already selected");
    if (n_required < 1) throw ConfigError("must select at least one winner");

    std::vector<const Bid*> eligible;
    for (const auto& b : bids) {
        if (b.deposit <= 0) throw ConfigError("bid deposit must be positive");
        if (!(b.capability > 0.0) || !(b.asking_cost > 0.0))
            throw ConfigError("bid capability and cost must be positive");
        if (state.deposits.count(b.client_id)) throw ConfigError("duplicate bid from one client");
        state.deposits[b.client_id] = b.deposit;
        state.total_staked += b.deposit;
        if (b.claimed_data_size >= state.task.required_data_size) eligible.push_back(&b);
    }
    if (eligible.size() < n_required)
        throw ConfigError("insufficient bidders: " + std::to_string(eligible.size()) +
                          " eligible, need " + std::to_string(n_required));

    // higher capability per unit cost first, lower id on ties
    std::sort(eligible.begin(), eligible.end(), [](const Bid* a, const Bid* b) {
        const double sa = a->capability / a->asking_cost;
        const double sb = b->capability / b->asking_cost;
        if (sa != sb) return sa > sb;
        return a->client_id < b->client_id;
    });
    for (uint32_t i = 0; i < n_required; ++i) state.selected.insert(eligible[i]->client_id);

    // losers reclaim their stake immediately
    for (const auto& b : bids) {
        if (state.selected.count(b.client_id)) continue;
        state.refunded[b.client_id] += state.deposits.at(b.client_id);
        state.deposits.erase(b.client_id);
    }
    state.phase = Phase::training;
}

int64_t round_pool(const TaskSpec& task, uint64_t round) {
    if (task.rounds < 1) throw ConfigError("task has no rounds");
    if (round >= task.rounds) return 0;
    const int64_t base = task.reward_pool / static_cast<int64_t>(task.rounds);
    const int64_t rem = task.reward_pool % static_cast<int64_t>(task.rounds);
    return base + (round < static_cast<uint64_t>(rem) ? 1 : 0);
}

std::vector<int64_t> apportion(int64_t amount, const std::vector<uint64_t>& weights) {
    if (amount < 0) throw ConfigError("cannot apportion a negative amount");
    if (weights.empty()) throw ConfigError("apportion needs at least one weight");
    unsigned __int128 total = 0;
    for (uint64_t w : weights) total += w;
    if (total == 0) throw ConfigError("apportion weights sum to zero");

    std::vector<int64_t> out(weights.size());
    std::vector<unsigned __int128> rem(weights.size());
    int64_t assigned = 0;
    for (size_t i = 0; i < weights.size(); ++i) {
        const unsigned __int128 prod =
            static_cast<unsigned __int128>(amount) * weights[i];
        out[i] = static_cast<int64_t>(prod / total);
        rem[i] = prod % total;
        assigned += out[i];
    }
    int64_t leftover = amount - assigned;
    std::vector<size_t> order(weights.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return rem[a] > rem[b]; });
    for (size_t k = 0; leftover > 0; ++k, --leftover) out[order[k]] += 1;
    return out;
}

void settle_rewards(ContractState& state, const ledger::Block& block) {
    if (state.phase != Phase::training) throw ConfigError("contract is not in training phase");
    const int64_t rp = round_pool(state.task, block.header.round);

    if (rp > 0 && !block.body.updates.empty()) {
        std::vector<uint64_t> weights;
        weights.reserve(block.body.updates.size());
        for (const auto& u : block.body.updates) weights.push_back(u.n_samples);
        const auto shares = apportion(rp, weights);
        int64_t paid = 0;
        for (size_t i = 0; i < shares.size(); ++i) {
            const uint32_t id = block.body.updates[i].client_id;
            if (state.punished.count(id)) continue; // forfeited share stays in escrow
            state.reward_ledger[id] += shares[i];
            paid += shares[i];
        }
        if (paid > state.escrow)
            throw InvariantError("round payout exceeds the remaining escrow");
        state.escrow -= paid;
    }

    if (state.task.miner_subsidy > 0) {
        state.minted += state.task.miner_subsidy;
        state.reward_ledger[block.header.miner_id] += state.task.miner_subsidy;
    }
    ++state.blocks_settled;
}

void record_reputation(ContractState& state, uint32_t client_id, bool good) {
    state.reputation[client_id] += good ? 1 : -1;
}

void mark_punished(ContractState& state, uint32_t client_id, bool slash_deposit) {
    state.punished.insert(client_id);
    if (slash_deposit) {
        auto it = state.deposits.find(client_id);
        if (it != state.deposits.end()) {
            state.publisher_refund += it->second;
            state.deposits.erase(it);
        }
    }
}

void finalize(ContractState& state) {
    if (state.phase == Phase::complete) throw ConfigError("contract already finalized");
    for (auto& [id, amount] : state.deposits) state.refunded[id] += amount;
    state.deposits.clear();
    state.publisher_refund += state.escrow;
    state.escrow = 0;
    state.phase = Phase::complete;
}

ConservationReport audit_conservation(const ContractState& state) {
    ConservationReport r;
    r.staked = state.total_staked;
    r.pool = state.task.reward_pool;
    r.minted = state.minted;
    for (const auto& [id, v] : state.reward_ledger) {
        (void)id;
        r.rewards += v;
    }
    for (const auto& [id, v] : state.refunded) {
        (void)id;
        r.refunds += v;
    }
    r.refunds += state.publisher_refund;
    for (const auto& [id, v] : state.deposits) {
        (void)id;
        r.held += v;
    }
    r.escrow = state.escrow;
    r.balanced = r.staked + r.pool + r.minted == r.rewards + r.refunds + r.held + r.escrow;
    return r;
}

} // namespace blade::contract
