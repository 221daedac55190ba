#include "blade/node.hpp"

#include <algorithm>
#include <cmath>

#include "blade/errors.hpp"
#include "blade/rng.hpp"

namespace blade::node {

void NodeConfig::validate() const {
    if (f <= 0.0) throw ConfigError("node.f must be > 0");
    if (local_epochs < 1) throw ConfigError("node.local_epochs must be >= 1");
    if (cycles_per_sample <= 0.0) throw ConfigError("node.cycles_per_sample must be > 0");
    if (disguise_std < 0.0) throw ConfigError("node.disguise_std must be >= 0");
    if (exaggeration <= 0.0) throw ConfigError("node.exaggeration must be > 0");
    if (lr <= 0.0) throw ConfigError("node.lr must be > 0");
    if (batch_size < 1) throw ConfigError("node.batch_size must be >= 1");
}

void RoundBudget::assert_feasible() const {
    if (rounds < 1) throw InfeasibleBudgetError("budget admits zero rounds");
    const double used = double(rounds) * round_len();
    if (used > t_sum * (1.0 + 1e-12) + 1e-9)
        throw InfeasibleBudgetError("rounds * (tau*t_t + t_b) exceeds t_sum");
}

RoundBudget compute_budget(double k_diff, double c_b, uint32_t n, double f, uint64_t data_size,
                           double c_t, uint32_t tau, double t_sum) {
    if (k_diff <= 0 || c_b <= 0 || n == 0 || f <= 0 || data_size == 0 || c_t <= 0 || tau == 0 ||
        t_sum <= 0)
        throw ConfigError("budget inputs must all be positive");
    RoundBudget b;
    b.t_b = k_diff * c_b / (double(n) * f);
    b.t_t = double(data_size) * c_t / f;
    b.theta = b.t_t / b.t_b;
    b.tau = tau;
    b.t_sum = t_sum;
    const double per_round = b.round_len();
    if (per_round > t_sum)
        throw InfeasibleBudgetError("a single round already exceeds t_sum");
    b.rounds = uint64_t(std::floor(t_sum / per_round + 1e-9));
    b.assert_feasible();
    return b;
}

RoundBudget budget_from_theta(double theta, double t_b, uint32_t tau, double t_sum) {
    if (theta <= 0 || t_b <= 0 || tau == 0 || t_sum <= 0)
        throw ConfigError("budget inputs must all be positive");
    RoundBudget b;
    b.t_b = t_b;
    b.t_t = theta * t_b;
    b.theta = theta;
    b.tau = tau;
    b.t_sum = t_sum;
    const double per_round = b.round_len();
    if (per_round > t_sum)
        throw InfeasibleBudgetError("a single round already exceeds t_sum");
    b.rounds = uint64_t(std::floor(t_sum / per_round + 1e-9));
    b.assert_feasible();
    return b;
}

uint32_t max_epochs_for_rounds(uint64_t rounds, double t_t, double t_b, double t_sum) {
    if (rounds == 0 || t_t <= 0 || t_b <= 0 || t_sum <= 0)
        throw ConfigError("budget inputs must all be positive");
    const double slack = t_sum / double(rounds) - t_b;
    const auto tau = int64_t(std::floor(slack / t_t + 1e-9));
    if (tau < 1) throw InfeasibleBudgetError("no epoch count fits the requested round count");
    return uint32_t(tau);
}

size_t effective_use_len(const watermark::WatermarkConfig& wm, size_t param_dim, size_t period) {
    return std::min(wm.use_len, std::min(param_dim, period));
}

HonestResult round_step_honest(Node& n, uint64_t round, const RoundBudget& b) {
    HonestResult out;
    const uint64_t tseed = seed_mix({n.run_seed, hash_tag("train"), n.cfg.client_id});
    mlcore::ParamVector trained;
    try {
        trained = mlcore::local_train(n.global, n.data, n.model, int(n.cfg.local_epochs), n.cfg.lr,
                                      int(n.cfg.batch_size), tseed, n.epoch_cursor);
    } catch (const DivergenceError&) {
        n.epoch_cursor += int(n.cfg.local_epochs); // next round reshuffles differently
        n.spent_train += double(b.tau) * b.t_t;
        return out;
    }
    n.epoch_cursor += int(n.cfg.local_epochs);
    n.spent_train += double(b.tau) * b.t_t;

    mlcore::ParamVector delta(trained.size());
    for (size_t i = 0; i < delta.size(); ++i) delta[i] = trained[i] - n.global[i];

    if (n.privacy_on) {
        out.pre_clip_norm = privacy::clip(delta, n.priv.clip_norm);
        out.sigma_used = n.adaptive
                             ? n.adaptive->sigma()
                             : privacy::calibrate_sigma(n.priv.epsilon, n.priv.delta, n.priv.clip_norm);
        Rng noise(seed_mix({n.run_seed, hash_tag("ldp"), n.cfg.client_id, round}));
        privacy::perturb(delta, out.sigma_used, noise);
    }

    if (n.wm.enabled) {
        const auto& pn = (*n.pn_table)[n.cfg.client_id];
        auto wmcfg = n.wm;
        wmcfg.use_len = effective_use_len(n.wm, delta.size(), pn.period());
        const size_t off = watermark::client_offset(n.cfg.client_id, wmcfg.use_len, pn.period());
        delta = watermark::embed(delta, pn, wmcfg, off);
    }

    mlcore::LocalUpdate u;
    u.client_id = n.cfg.client_id;
    u.round = round;
    u.params = std::move(delta);
    u.n_samples = n.cfg.data_size;
    u.compute_ticks = llround(double(b.tau) * b.t_t * double(kTicksPerUnit));
    u.digest = mlcore::param_digest(u.params);
    n.own_update = u;
    n.pool.push_back(u); // a node always has its own update in its pool
    out.update = std::move(u);
    return out;
}

std::optional<mlcore::LocalUpdate> round_step_lazy(Node& n, uint64_t round, const RoundBudget& b) {
    std::vector<const mlcore::LocalUpdate*> victims;
    for (const auto& u : n.pool)
        if (u.round == round && u.client_id != n.cfg.client_id) victims.push_back(&u);
    if (victims.empty()) return std::nullopt;

    Rng rng(seed_mix({n.run_seed, hash_tag("lazy"), n.cfg.client_id, round}));
    const auto& victim = *victims[size_t(rng.below(victims.size()))];

    mlcore::LocalUpdate u;
    u.client_id = n.cfg.client_id;
    u.round = round;
    u.params = victim.params;
    if (n.cfg.disguise_std > 0.0)
        for (auto& x : u.params) x += rng.normal(0.0, n.cfg.disguise_std);
    u.n_samples = std::max<uint64_t>(1, uint64_t(llround(double(victim.n_samples) * n.cfg.exaggeration)));
    u.compute_ticks = llround(double(b.tau) * b.t_t * double(kTicksPerUnit)); // fabricated
    u.digest = mlcore::param_digest(u.params);
    n.own_update = u;
    n.pool.push_back(u);
    return u;
}

std::vector<uint32_t> pool_scan_for_lazy(const Node& n, uint64_t round) {
    std::vector<uint32_t> accused;
    if (!n.cfg.detection_enabled || !n.wm.enabled || !n.own_update) return accused;
    const auto& pn = (*n.pn_table)[n.cfg.client_id];
    const size_t dim = n.own_update->params.size();
    const size_t use_len = effective_use_len(n.wm, dim, pn.period());
    const size_t off = watermark::client_offset(n.cfg.client_id, use_len, pn.period());
    for (const auto& u : n.pool) {
        if (u.round != round || u.client_id == n.cfg.client_id) continue;
        const auto c = watermark::correlate(u.params, pn, std::min(use_len, u.params.size()), off);
        if (watermark::decide(c, n.wm)) accused.push_back(u.client_id);
    }
    std::sort(accused.begin(), accused.end());
    accused.erase(std::unique(accused.begin(), accused.end()), accused.end());
    return accused;
}

bool confirm_accusation(const Node& n, uint32_t accuser, uint32_t accused, uint64_t round) {
    if (!n.wm.enabled || accuser == accused) return false;
    const mlcore::LocalUpdate* entry = nullptr;
    for (const auto& u : n.pool)
        if (u.round == round && u.client_id == accused) entry = &u;
    if (!entry) return false; // never saw the update: abstain
    const auto& pn = (*n.pn_table)[accuser]; // derivable by everyone, not transmitted
    const size_t use_len = effective_use_len(n.wm, entry->params.size(), pn.period());
    const size_t off = watermark::client_offset(accuser, use_len, pn.period());
    return watermark::decide(watermark::correlate(entry->params, pn, use_len, off), n.wm);
}

void admit_update(Node& n, const mlcore::LocalUpdate& u, uint64_t round) {
    if (u.round != round) return;
    if (n.excluded.count(u.client_id)) return; // punished senders are discarded
    for (const auto& have : n.pool)
        if (have.client_id == u.client_id && have.round == u.round) return;
    n.pool.push_back(u);
}

void begin_round(Node& n) {
    n.pool.clear();
    n.own_update.reset();
}

std::vector<mlcore::LocalUpdate> surviving_pool(const Node& n, uint64_t round) {
    std::vector<mlcore::LocalUpdate> keep;
    for (const auto& u : n.pool)
        if (u.round == round && !n.excluded.count(u.client_id)) keep.push_back(u);
    std::sort(keep.begin(), keep.end(),
              [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
    return keep;
}

mlcore::ParamVector aggregate_round(const Node& n, uint64_t round) {
    const auto keep = surviving_pool(n, round);
    if (keep.empty()) return n.global;
    const auto mean_delta = mlcore::aggregate(keep);
    mlcore::ParamVector next = n.global;
    for (size_t i = 0; i < next.size(); ++i) next[i] += mean_delta[i];
    return next;
}

double mining_draw(uint64_t run_seed, uint32_t client_id, uint64_t round, double solo_mean,
                   double window_ratio) {
    if (solo_mean <= 0 || window_ratio <= 0)
        throw ConfigError("mining draw needs positive mean and window");
    Rng rng(seed_mix({run_seed, hash_tag("mine"), client_id, round}));
    return rng.exponential(solo_mean) / window_ratio;
}

uint32_t mining_winner(const std::vector<std::pair<uint32_t, double>>& draws) {
    if (draws.empty()) throw ConfigError("mining lottery needs at least one draw");
    auto best = draws.front();
    for (const auto& d : draws)
        if (d.second < best.second || (d.second == best.second && d.first < best.first)) best = d;
    return best.first;
}

void charge_mining(Node& n, const RoundBudget& b) {
    n.spent_mine += n.cfg.behavior == Behavior::lazy ? b.round_len() : b.t_b;
}

std::optional<BuildResult> build_block(const Node& n, uint64_t round, int64_t timestamp_ticks,
                                       uint32_t difficulty_bits, uint64_t max_tries) {
    const auto keep = surviving_pool(n, round);
    if (keep.empty()) return std::nullopt; // nothing to seal this round

    BuildResult out;
    auto& b = out.block;
    for (const auto& u : keep)
        b.body.updates.push_back(
            ledger::UpdateRecord{u.client_id, u.round, u.digest, u.n_samples, u.compute_ticks});
    b.body.aggregate_params = aggregate_round(n, round);
    b.body.contributions = mlcore::contribution_weights(keep);

    auto header = ledger::make_child_header(n.chain.tip().header, b.body, round, n.cfg.client_id,
                                            timestamp_ticks, difficulty_bits);
    auto mined = ledger::mine(header, 0, max_tries);
    if (!mined.sealed) return std::nullopt;
    b.header = mined.header;
    out.tries = mined.tries;
    return out;
}

BlockAccept receive_block(Node& n, const ledger::Block& b, const std::set<uint32_t>& winners,
                          const ledger::VerifyContext& ctx) {
    if (b.header.height <= n.chain.height()) return BlockAccept::stale;
    if (b.header.height > n.chain.height() + 1) return BlockAccept::rejected; // gap: cannot verify
    const auto v = ledger::verify_block(b, n.chain.tip(), n.pool, winners, ctx);
    if (v == ledger::VerifyResult::ok || v == ledger::VerifyResult::missing_update) {
        // a dropped broadcast must not fork the network; the gap is counted
        // because the aggregate cannot be recomputed without the lost bytes
        if (v == ledger::VerifyResult::missing_update) ++n.pool_gaps_tolerated;
        n.chain.blocks.push_back(b);
        n.global = b.body.aggregate_params;
        return BlockAccept::adopted;
    }
    return BlockAccept::rejected;
}

}  // namespace blade::node
