#pragma once

#include <cstdint>
#include <memory>
#include <queue>
#include <variant>
#include <vector>

#include "blade/ledger.hpp"
#include "blade/mlcore.hpp"
#include "blade/rng.hpp"

namespace blade::net {

// payloads are shared so a broadcast to n-1 peers costs one allocation
struct UpdateMsg {
    std::shared_ptr<const mlcore::LocalUpdate> update;
};

struct BlockMsg {
    std::shared_ptr<const ledger::Block> block;
};

// a victim naming a suspected copier; peers recompute the correlation themselves
struct Accusation {
    std::uint32_t accuser = 0;
    std::uint32_t accused = 0;
    std::uint64_t round = 0;
};

struct Confirmation {
    std::uint32_t confirmer = 0;
    std::uint32_t accused = 0;
    std::uint64_t round = 0;
    bool agree = false;
};

using Payload = std::variant<UpdateMsg, BlockMsg, Accusation, Confirmation>;

struct Event {
    std::int64_t deliver_at_ticks = 0;
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::uint64_t seq = 0;
    Payload payload;
};

struct NetConfig {
    std::int64_t delay_ticks = 1;
    double drop_prob = 0.0;  // in [0,1)
    std::int64_t round_deadline_ticks = 0;

    void validate() const;
};

// single-threaded discrete-event queue; the full trace is a pure
// function of (config, seed, call order)
class EventQueue {
public:
    EventQueue(NetConfig cfg, std::uint64_t seed, std::uint32_t n_nodes);

    // one event per other node at tick + delay, destinations visited in
    // ascending id order so drop draws replay identically; dropped
    // messages produce no event and no retransmit
    std::vector<Event> broadcast(std::uint32_t src, std::int64_t tick, Payload payload);

    // single lossless delivery (no drop draw)
    void send(std::uint32_t src, std::uint32_t dst, std::int64_t tick, Payload payload);

    // pops every event with deliver_at_ticks <= tick_limit, totally
    // ordered by (tick, seq); later events stay queued
    std::vector<Event> run_until(std::int64_t tick_limit);

    bool empty() const { return heap_.empty(); }
    std::size_t pending() const { return heap_.size(); }
    std::uint32_t n_nodes() const { return n_nodes_; }
    const NetConfig& config() const { return cfg_; }

private:
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            if (a.deliver_at_ticks != b.deliver_at_ticks)
                return a.deliver_at_ticks > b.deliver_at_ticks;
            return a.seq > b.seq;
        }
    };

    void push(std::uint32_t src, std::uint32_t dst, std::int64_t tick, Payload payload);

    NetConfig cfg_;
    Rng rng_;
    std::uint32_t n_nodes_ = 0;
    std::uint64_t next_seq_ = 0;
    std::priority_queue<Event, std::vector<Event>, Later> heap_;
};

}  // namespace blade::net
