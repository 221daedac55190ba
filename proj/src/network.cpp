#include "blade/network.hpp"

#include "blade/errors.hpp"

namespace blade::net {

void NetConfig::validate() const {
    if (delay_ticks < 0) throw ConfigError("net.delay_ticks must be >= 0");
    if (!(drop_prob >= 0.0 && drop_prob < 1.0))
        throw ConfigError("net.drop_prob must be in [0,1)");
    if (round_deadline_ticks < 0)
        throw ConfigError("net.round_deadline_ticks must be >= 0");
}

EventQueue::EventQueue(NetConfig cfg, std::uint64_t seed, std::uint32_t n_nodes)
    : cfg_(cfg), rng_(seed_mix({seed, hash_tag("net-queue")})), n_nodes_(n_nodes) {
    cfg_.validate();
    if (n_nodes_ == 0) throw ConfigError("event queue needs at least one node");
}

void EventQueue::push(std::uint32_t src, std::uint32_t dst, std::int64_t tick,
                      Payload payload) {
    Event ev;
    ev.deliver_at_ticks = tick + cfg_.delay_ticks;
    ev.src = src;
    ev.dst = dst;
    ev.seq = next_seq_++;  // global counter, so also strictly increasing per link
    ev.payload = std::move(payload);
    heap_.push(std::move(ev));
}

std::vector<Event> EventQueue::broadcast(std::uint32_t src, std::int64_t tick,
                                         Payload payload) {
    if (src >= n_nodes_) throw ConfigError("broadcast src is not a registered node");
    std::vector<Event> queued;
    queued.reserve(n_nodes_ - 1);
    for (std::uint32_t dst = 0; dst < n_nodes_; ++dst) {
        if (dst == src) continue;
        if (cfg_.drop_prob > 0.0 && rng_.next_double() < cfg_.drop_prob) continue;
        push(src, dst, tick, payload);
        queued.push_back(Event{tick + cfg_.delay_ticks, src, dst, next_seq_ - 1, payload});
    }
    return queued;
}

void EventQueue::send(std::uint32_t src, std::uint32_t dst, std::int64_t tick,
                      Payload payload) {
    if (src >= n_nodes_ || dst >= n_nodes_)
        throw ConfigError("send endpoints must be registered nodes");
    push(src, dst, tick, std::move(payload));
}

std::vector<Event> EventQueue::run_until(std::int64_t tick_limit) {
    std::vector<Event> out;
    while (!heap_.empty() && heap_.top().deliver_at_ticks <= tick_limit) {
        out.push_back(heap_.top());
        heap_.pop();
    }
    return out;
}

}  // namespace blade::net
