#include "blade/sim.hpp"

#include <omp.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "blade/errors.hpp"
#include "blade/idx.hpp"
#include "blade/ledger.hpp"
#include "blade/rng.hpp"

namespace blade::sim {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------- config

void SimConfig::validate() const {
    if (n_clients < 2) throw ConfigError("n_clients must be >= 2");
    if (model.kind != "linear_softmax" && model.kind != "mlp")
        throw ConfigError("model.kind must be linear_softmax or mlp");
    if (model.kind == "mlp" && model.hidden_dim < 1)
        throw ConfigError("model.hidden_dim must be >= 1 for mlp");
    if (data.source != "synthetic" && data.source != "idx")
        throw ConfigError("data.source must be synthetic or idx");
    if (data.source == "idx" &&
        (data.images.empty() || data.labels.empty() || data.test_images.empty() ||
         data.test_labels.empty()))
        throw ConfigError("idx data needs images/labels/test_images/test_labels paths");
    if (train.lr <= 0) throw ConfigError("train.lr must be > 0");
    if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    privacy.validate();
    watermark.validate();
    if (pn_degree < 2 || pn_degree > 24) throw ConfigError("pn_degree must be in [2,24]");
    if (chain.mode != "sampled" && chain.mode != "grind")
        throw ConfigError("chain.mode must be sampled or grind");
    if (chain.mode == "grind" && chain.difficulty_bits == 0)
        throw ConfigError("grind mode needs chain.difficulty_bits > 0");
    if (chain.k <= 0 || chain.c_b <= 0) throw ConfigError("chain.k and chain.c_b must be > 0");
    net.validate();
    if (budget.t_sum <= 0) throw ConfigError("budget.t_sum must be > 0");
    if (budget.theta < 0) throw ConfigError("budget.theta must be >= 0");
    if (budget.f <= 0 || budget.c_t <= 0) throw ConfigError("budget.f and budget.c_t must be > 0");
    if (budget.tau == 0 && budget.rounds == 0)
        throw ConfigError("budget.tau and budget.rounds cannot both be auto");
    if (behavior.lazy_fraction < 0 || behavior.lazy_fraction >= 1)
        throw ConfigError("behavior.lazy_fraction must be in [0,1)");
    if (behavior.disguise_std < 0) throw ConfigError("behavior.disguise_std must be >= 0");
    if (behavior.exaggeration <= 0) throw ConfigError("behavior.exaggeration must be > 0");
    if (contract.reward_pool <= 0) throw ConfigError("contract.reward_pool must be > 0");
    if (contract.miner_subsidy < 0) throw ConfigError("contract.miner_subsidy must be >= 0");
    if (contract.deposit <= 0) throw ConfigError("contract.deposit must be > 0");
}

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError("unknown config key: " + where + it.key());
    }
}

}  // namespace

SimConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be an object");
    reject_unknown_keys(j,
                        {"seed", "n_clients", "model", "data", "train", "privacy", "watermark",
                         "chain", "net", "budget", "behavior", "contract", "output"},
                        "");

    SimConfig c;
    c.seed = j.value("seed", c.seed);
    c.n_clients = j.value("n_clients", c.n_clients);

    if (j.contains("model")) {
        const auto& m = j.at("model");
        reject_unknown_keys(m, {"kind", "hidden_dim"}, "model.");
        c.model.kind = m.value("kind", c.model.kind);
        c.model.hidden_dim = m.value("hidden_dim", c.model.hidden_dim);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        reject_unknown_keys(d,
                            {"source", "dims", "num_classes", "samples_per_client", "test_samples",
                             "skew", "class_sep", "noise_std", "images", "labels", "test_images",
                             "test_labels"},
                            "data.");
        c.data.source = d.value("source", c.data.source);
        c.data.synth.dims = d.value("dims", c.data.synth.dims);
        c.data.synth.num_classes = d.value("num_classes", c.data.synth.num_classes);
        c.data.synth.samples_per_client = d.value("samples_per_client", c.data.synth.samples_per_client);
        c.data.synth.test_samples = d.value("test_samples", c.data.synth.test_samples);
        c.data.synth.skew = d.value("skew", c.data.synth.skew);
        c.data.synth.class_sep = d.value("class_sep", c.data.synth.class_sep);
        c.data.synth.noise_std = d.value("noise_std", c.data.synth.noise_std);
        c.data.images = d.value("images", c.data.images);
        c.data.labels = d.value("labels", c.data.labels);
        c.data.test_images = d.value("test_images", c.data.test_images);
        c.data.test_labels = d.value("test_labels", c.data.test_labels);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        reject_unknown_keys(t, {"lr", "batch_size"}, "train.");
        c.train.lr = t.value("lr", c.train.lr);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
    }
    if (j.contains("privacy")) {
        const auto& p = j.at("privacy");
        reject_unknown_keys(
            p, {"enabled", "epsilon", "delta", "clip_norm", "adaptive", "decay", "patience", "tol",
                "sigma_min"},
            "privacy.");
        c.privacy_enabled = p.value("enabled", c.privacy_enabled);
        c.privacy.epsilon = p.value("epsilon", c.privacy.epsilon);
        c.privacy.delta = p.value("delta", c.privacy.delta);
        c.privacy.clip_norm = p.value("clip_norm", c.privacy.clip_norm);
        c.privacy.adaptive = p.value("adaptive", c.privacy.adaptive);
        c.privacy.decay = p.value("decay", c.privacy.decay);
        c.privacy.patience = p.value("patience", c.privacy.patience);
        c.privacy.tol = p.value("tol", c.privacy.tol);
        c.privacy.sigma_min = p.value("sigma_min", c.privacy.sigma_min);
    }
    if (j.contains("watermark")) {
        const auto& w = j.at("watermark");
        reject_unknown_keys(w, {"enabled", "snr_db", "use_len", "gamma", "degree"}, "watermark.");
        c.watermark.enabled = w.value("enabled", c.watermark.enabled);
        c.watermark.snr_db = w.value("snr_db", c.watermark.snr_db);
        c.watermark.use_len = w.value("use_len", c.watermark.use_len);
        c.watermark.gamma = w.value("gamma", c.watermark.gamma);
        c.pn_degree = w.value("degree", c.pn_degree);
    }
    if (j.contains("chain")) {
        const auto& ch = j.at("chain");
        reject_unknown_keys(ch, {"mode", "difficulty_bits", "k", "c_b", "max_tries"}, "chain.");
        c.chain.mode = ch.value("mode", c.chain.mode);
        c.chain.difficulty_bits = ch.value("difficulty_bits", c.chain.difficulty_bits);
        c.chain.k = ch.value("k", c.chain.k);
        c.chain.c_b = ch.value("c_b", c.chain.c_b);
        c.chain.max_tries = ch.value("max_tries", c.chain.max_tries);
    }
    if (j.contains("net")) {
        const auto& n = j.at("net");
        reject_unknown_keys(n, {"delay_ticks", "drop_prob", "round_deadline_ticks"}, "net.");
        c.net.delay_ticks = n.value("delay_ticks", c.net.delay_ticks);
        c.net.drop_prob = n.value("drop_prob", c.net.drop_prob);
        c.net.round_deadline_ticks = n.value("round_deadline_ticks", c.net.round_deadline_ticks);
    }
    if (j.contains("budget")) {
        const auto& b = j.at("budget");
        reject_unknown_keys(b, {"t_sum", "tau", "theta", "rounds", "f", "c_t"}, "budget.");
        c.budget.t_sum = b.value("t_sum", c.budget.t_sum);
        c.budget.tau = b.value("tau", c.budget.tau);
        c.budget.theta = b.value("theta", c.budget.theta);
        c.budget.rounds = b.value("rounds", c.budget.rounds);
        c.budget.f = b.value("f", c.budget.f);
        c.budget.c_t = b.value("c_t", c.budget.c_t);
    }
    if (j.contains("behavior")) {
        const auto& b = j.at("behavior");
        reject_unknown_keys(b, {"lazy_fraction", "disguise_std", "exaggeration", "detection"},
                            "behavior.");
        c.behavior.lazy_fraction = b.value("lazy_fraction", c.behavior.lazy_fraction);
        c.behavior.disguise_std = b.value("disguise_std", c.behavior.disguise_std);
        c.behavior.exaggeration = b.value("exaggeration", c.behavior.exaggeration);
        c.behavior.detection = b.value("detection", c.behavior.detection);
    }
    if (j.contains("contract")) {
        const auto& k = j.at("contract");
        reject_unknown_keys(
            k, {"reward_pool", "miner_subsidy", "deposit", "required_data_size"}, "contract.");
        c.contract.reward_pool = k.value("reward_pool", c.contract.reward_pool);
        c.contract.miner_subsidy = k.value("miner_subsidy", c.contract.miner_subsidy);
        c.contract.deposit = k.value("deposit", c.contract.deposit);
        c.contract.required_data_size = k.value("required_data_size", c.contract.required_data_size);
    }
    if (j.contains("output")) {
        const auto& o = j.at("output");
        reject_unknown_keys(o, {"dir", "trace", "chain_dump"}, "output.");
        c.output.dir = o.value("dir", c.output.dir);
        c.output.trace = o.value("trace", c.output.trace);
        c.output.chain_dump = o.value("chain_dump", c.output.chain_dump);
    }
    c.validate();
    return c;
}

SimConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------- helpers

namespace {

std::string hex(const Digest& d) {
    static const char* k = "0123456789abcdef";
    std::string s(64, '0');
    for (size_t i = 0; i < 32; ++i) {
        s[2 * i] = k[d[i] >> 4];
        s[2 * i + 1] = k[d[i] & 0xf];
    }
    return s;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

mlcore::Dataset concat(const std::vector<mlcore::Dataset>& parts) {
    mlcore::Dataset all;
    all.dims = parts.front().dims;
    all.num_classes = parts.front().num_classes;
    for (const auto& p : parts) {
        all.features.insert(all.features.end(), p.features.begin(), p.features.end());
        all.labels.insert(all.labels.end(), p.labels.begin(), p.labels.end());
        all.num_classes = std::max(all.num_classes, p.num_classes);
    }
    return all;
}

node::RoundBudget resolve_budget(const SimConfig& cfg, uint64_t data_size) {
    const double t_b = cfg.chain.k * cfg.chain.c_b / (double(cfg.n_clients) * cfg.budget.f);
    const double t_t = cfg.budget.theta > 0
                           ? cfg.budget.theta * t_b
                           : double(data_size) * cfg.budget.c_t / cfg.budget.f;
    uint32_t tau = cfg.budget.tau;
    if (tau == 0) tau = node::max_epochs_for_rounds(cfg.budget.rounds, t_t, t_b, cfg.budget.t_sum);

    node::RoundBudget b;
    b.t_b = t_b;
    b.t_t = t_t;
    b.theta = t_t / t_b;
    b.tau = tau;
    b.t_sum = cfg.budget.t_sum;
    if (b.round_len() > b.t_sum)
        throw InfeasibleBudgetError("a single round already exceeds t_sum");
    b.rounds = cfg.budget.rounds > 0
                   ? cfg.budget.rounds
                   : uint64_t(std::floor(b.t_sum / b.round_len() + 1e-9));
    b.assert_feasible();
    return b;
}

struct Sim {
    SimConfig cfg;
    node::RoundBudget budget;
    mlcore::ModelSpec model;
    std::vector<node::Node> nodes;
    mlcore::Dataset test, train_union;
    contract::ContractState sc;
    std::set<uint32_t> winners;
    std::set<uint32_t> lazy_set;
    std::unique_ptr<net::EventQueue> q;
    std::ofstream trace;
    MetricsReport rep;

    explicit Sim(SimConfig c) : cfg(std::move(c)) {}

    bool is_lazy(uint32_t id) const { return lazy_set.count(id) != 0; }

    void emit_trace(const net::Event& ev, const char* kind) {
        if (!trace.is_open()) return;
        trace << "{\"tick\":" << ev.deliver_at_ticks << ",\"kind\":\"" << kind
              << "\",\"src\":" << ev.src << ",\"dst\":" << ev.dst << "}\n";
    }

    void setup() {
        const uint32_t n = cfg.n_clients;
        std::vector<mlcore::Dataset> shards;
        if (cfg.data.source == "synthetic") {
            auto parts = mlcore::make_partitioned_data(cfg.seed, int(n), cfg.data.synth);
            shards = std::move(parts.clients);
            test = std::move(parts.test);
        } else {
            auto all = idx::load_idx(cfg.data.images, cfg.data.labels);
            shards = mlcore::partition_labeled(all, cfg.seed, int(n),
                                               cfg.data.synth.samples_per_client,
                                               cfg.data.synth.skew);
            test = idx::load_idx(cfg.data.test_images, cfg.data.test_labels);
        }
        train_union = concat(shards);

        model.kind = cfg.model.kind == "mlp" ? mlcore::ModelKind::mlp
                                             : mlcore::ModelKind::linear_softmax;
        model.input_dim = shards.front().dims;
        model.num_classes = std::max(shards.front().num_classes, test.num_classes);
        model.hidden_dim = cfg.model.kind == "mlp" ? cfg.model.hidden_dim : 0;
        model.validate();

        budget = resolve_budget(cfg, shards.front().size());

        const uint32_t n_lazy = uint32_t(std::floor(double(n) * cfg.behavior.lazy_fraction));
        for (uint32_t i = n - n_lazy; i < n; ++i) lazy_set.insert(i); // highest ids turn lazy

        auto table = std::make_shared<std::vector<watermark::PnSequence>>();
        for (uint32_t i = 0; i < n; ++i)
            table->push_back(
                watermark::pn_for_seed(cfg.pn_degree, seed_mix({cfg.seed, hash_tag("pn"), i})));

        const auto theta0 = mlcore::init_params(model, cfg.seed);
        const auto genesis = ledger::make_genesis(theta0, 0);

        for (uint32_t i = 0; i < n; ++i) {
            node::Node nd;
            nd.cfg.client_id = i;
            nd.cfg.behavior = is_lazy(i) ? node::Behavior::lazy : node::Behavior::honest;
            nd.cfg.f = cfg.budget.f;
            nd.cfg.data_size = shards[i].size();
            nd.cfg.cycles_per_sample = cfg.budget.c_t;
            nd.cfg.local_epochs = budget.tau;
            nd.cfg.detection_enabled = cfg.behavior.detection && !is_lazy(i);
            nd.cfg.disguise_std = cfg.behavior.disguise_std;
            nd.cfg.exaggeration = cfg.behavior.exaggeration;
            nd.cfg.lr = cfg.train.lr;
            nd.cfg.batch_size = cfg.train.batch_size;
            nd.cfg.validate();
            nd.model = model;
            nd.data = std::move(shards[i]);
            nd.privacy_on = cfg.privacy_enabled;
            nd.priv = cfg.privacy;
            nd.wm = cfg.watermark;
            nd.pn_table = table;
            nd.run_seed = cfg.seed;
            nd.global = theta0;
            nd.chain.blocks.push_back(genesis);
            if (nd.privacy_on && nd.priv.adaptive)
                nd.adaptive = std::make_unique<privacy::AdaptiveSigma>(
                    privacy::calibrate_sigma(nd.priv.epsilon, nd.priv.delta, nd.priv.clip_norm),
                    nd.priv.decay, nd.priv.patience, nd.priv.tol, nd.priv.sigma_min);
            nodes.push_back(std::move(nd));
        }

        contract::TaskSpec task;
        task.required_data_size = cfg.contract.required_data_size;
        task.t_sum = int64_t(std::llround(cfg.budget.t_sum));
        task.reward_pool = cfg.contract.reward_pool;
        task.n_required = n;
        task.rounds = budget.rounds;
        task.miner_subsidy = cfg.contract.miner_subsidy;
        sc = contract::publish_task(task);
        std::vector<contract::Bid> bids;
        for (uint32_t i = 0; i < n; ++i)
            bids.push_back(contract::Bid{i, cfg.budget.f, nodes[i].cfg.data_size, 1.0,
                                         cfg.contract.deposit});
        contract::select_winners(sc, bids, n);
        winners = sc.selected;

        q = std::make_unique<net::EventQueue>(cfg.net, cfg.seed, n);

        if (!cfg.output.dir.empty()) {
            std::filesystem::create_directories(cfg.output.dir);
            if (cfg.output.trace) {
                trace.open(std::filesystem::path(cfg.output.dir) / "trace.jsonl");
                if (!trace) throw IoError("cannot open trace.jsonl in " + cfg.output.dir);
            }
        }

        rep.summary.budget = budget;
        rep.summary.lazy_ids.assign(lazy_set.begin(), lazy_set.end());
    }

    void deliver_updates(const std::vector<net::Event>& evs, uint64_t round, int64_t deadline) {
        for (const auto& ev : evs) {
            if (const auto* um = std::get_if<net::UpdateMsg>(&ev.payload)) {
                emit_trace(ev, "update");
                if (ev.deliver_at_ticks > deadline) {
                    ++rep.summary.late_updates;
                    continue;
                }
                node::admit_update(nodes[ev.dst], *um->update, round);
            }
        }
    }

    void run_round(uint64_t r, RoundRecord& row) {
        const int64_t len = std::llround(budget.round_len() * double(node::kTicksPerUnit));
        const int64_t start = int64_t(r) * len;
        const int64_t end = start + len;
        const int64_t d = cfg.net.delay_ticks;
        const int64_t t0 = start + std::llround(double(budget.tau) * budget.t_t *
                                                double(node::kTicksPerUnit));
        const int64_t rel = cfg.net.round_deadline_ticks > 0 ? cfg.net.round_deadline_ticks : 2 * d;
        const int64_t deadline = std::min(t0 + rel, end - 2);
        const int64_t t_votes = std::min(deadline + 2 * d, end - 2);

        for (auto& n : nodes) node::begin_round(n);

        // Steps 1-2: honest nodes train and broadcast at t0
        bool sigma_set = false;
        for (auto& n : nodes) {
            if (is_lazy(n.cfg.client_id)) continue;
            auto res = node::round_step_honest(n, r, budget);
            if (!sigma_set && n.privacy_on) {
                row.sigma = res.sigma_used;
                sigma_set = true;
            }
            if (res.update) {
                ++rep.summary.honest_submissions;
                q->broadcast(n.cfg.client_id, t0,
                             net::UpdateMsg{std::make_shared<mlcore::LocalUpdate>(*res.update)});
            }
        }

        // lazy nodes wait for the first deliveries, then copy
        deliver_updates(q->run_until(t0 + d), r, deadline);
        for (auto& n : nodes) {
            if (!is_lazy(n.cfg.client_id)) continue;
            auto u = node::round_step_lazy(n, r, budget);
            if (u) {
                ++rep.summary.lazy_submissions;
                q->broadcast(n.cfg.client_id, t0 + d,
                             net::UpdateMsg{std::make_shared<mlcore::LocalUpdate>(*u)});
            }
        }
        deliver_updates(q->run_until(deadline), r, deadline);

        // Step 3 policing: victims scan their pools once they are closed
        std::map<uint32_t, std::set<uint32_t>> votes; // accused -> agreeing voters
        for (auto& n : nodes) {
            const auto accused = node::pool_scan_for_lazy(n, r);
            row.accusations += uint32_t(accused.size());
            for (uint32_t a : accused) {
                votes[a].insert(n.cfg.client_id); // the accuser votes by accusing
                q->broadcast(n.cfg.client_id, deadline, net::Accusation{n.cfg.client_id, a, r});
            }
        }
        for (const auto& ev : q->run_until(std::min(deadline + d, end - 2))) {
            const auto* acc = std::get_if<net::Accusation>(&ev.payload);
            if (!acc) continue;
            emit_trace(ev, "accusation");
            auto& me = nodes[ev.dst];
            // the accused and the lazy always deny; the honest recompute
            const bool agree = ev.dst != acc->accused && !is_lazy(ev.dst) &&
                               node::confirm_accusation(me, acc->accuser, acc->accused, r);
            q->broadcast(ev.dst, ev.deliver_at_ticks,
                         net::Confirmation{ev.dst, acc->accused, acc->round, agree});
        }
        for (const auto& ev : q->run_until(t_votes)) {
            const auto* cf = std::get_if<net::Confirmation>(&ev.payload);
            if (!cf) continue;
            emit_trace(ev, "confirmation");
            if (cf->agree && cf->round == r) votes[cf->accused].insert(cf->confirmer);
        }
        const uint32_t quorum = (cfg.n_clients + 1) / 2;
        for (const auto& [accused, voters] : votes) {
            if (voters.size() < quorum) continue;
            if (sc.punished.count(accused)) continue;
            ++row.new_exclusions;
            if (!is_lazy(accused)) ++rep.summary.honest_flagged;
            for (auto& n : nodes) n.excluded.insert(accused);
            contract::mark_punished(sc, accused);
            contract::record_reputation(sc, accused, false);
        }

        // Step 4: every node mines; the round's block goes to the fastest
        for (auto& n : nodes) node::charge_mining(n, budget);
        const double solo_mean = cfg.chain.k * cfg.chain.c_b / cfg.budget.f;
        std::vector<std::pair<uint32_t, double>> draws;
        for (const auto& n : nodes) {
            if (n.excluded.count(n.cfg.client_id)) continue; // shunned miners seal nothing
            const double ratio = is_lazy(n.cfg.client_id) ? budget.round_len() / budget.t_b : 1.0;
            draws.push_back({n.cfg.client_id,
                             node::mining_draw(cfg.seed, n.cfg.client_id, r, solo_mean, ratio)});
        }

        std::optional<ledger::Block> block;
        if (!draws.empty()) {
            const uint32_t w = node::mining_winner(draws);
            double wdraw = 0;
            for (const auto& [id, v] : draws)
                if (id == w) wdraw = v;
            const int64_t sealed_at =
                std::clamp(t_votes + int64_t(std::llround(wdraw * double(node::kTicksPerUnit))),
                           t_votes + 1, end - d - 1);
            const uint32_t bits = cfg.chain.mode == "grind" ? cfg.chain.difficulty_bits : 0;
            auto built = node::build_block(nodes[w], r, sealed_at, bits, cfg.chain.max_tries);
            if (built) {
                block = std::move(built->block);
                row.winner = w;
                row.mine_tries = built->tries;
                rep.summary.total_mine_tries += row.mine_tries;
                ++rep.summary.blocks_sealed;
                nodes[w].chain.blocks.push_back(*block);
                nodes[w].global = block->body.aggregate_params;
                auto shared = std::make_shared<ledger::Block>(*block);
                // Step 5: block propagation is retried until received
                for (uint32_t dst = 0; dst < cfg.n_clients; ++dst)
                    if (dst != w) q->send(w, dst, sealed_at, net::BlockMsg{shared});
            }
        }

        // Step 6: everyone verifies and downloads the aggregated model
        for (const auto& ev : q->run_until(end - 1)) {
            if (const auto* bm = std::get_if<net::BlockMsg>(&ev.payload)) {
                emit_trace(ev, "block");
                const auto got = node::receive_block(nodes[ev.dst], *bm->block, winners);
                if (got == node::BlockAccept::rejected) ++rep.summary.blocks_rejected;
            } else if (std::get_if<net::UpdateMsg>(&ev.payload)) {
                ++rep.summary.late_updates; // missed the pool deadline
            }
        }

        // Step 7: settlement from the sealed block's records
        if (block) {
            contract::settle_rewards(sc, *block);
            for (const auto& u : block->body.updates) contract::record_reputation(sc, u.client_id, true);
            for (uint32_t id : lazy_set) {
                if (!nodes[id].own_update) continue;
                bool included = false;
                for (const auto& u : block->body.updates)
                    if (u.client_id == id) included = true;
                if (!included) ++rep.summary.lazy_excluded;
            }
        } else if (!lazy_set.empty()) {
            for (uint32_t id : lazy_set)
                if (nodes[id].own_update) ++rep.summary.lazy_excluded; // no block, nothing counted
        }

        // metrics and consensus audit
        const auto& canon = block ? block->body.aggregate_params : nodes[0].global;
        row.aggregate_digest = mlcore::param_digest(canon);
        row.consensus = true;
        const auto tip0 = ledger::header_hash(nodes[0].chain.tip().header);
        for (const auto& n : nodes) {
            if (ledger::header_hash(n.chain.tip().header) != tip0 ||
                mlcore::param_digest(n.global) != row.aggregate_digest)
                row.consensus = false;
        }
        row.chain_height = nodes[0].chain.height();
        const auto on_train = mlcore::evaluate(canon, train_union, model);
        const auto on_test = mlcore::evaluate(canon, test, model);
        row.train_loss = on_train.loss;
        row.test_accuracy = on_test.accuracy;
        for (auto& n : nodes)
            if (n.adaptive) n.adaptive->observe(on_test.accuracy);
    }

    MetricsReport finish(double wall) {
        auto& s = rep.summary;
        if (!rep.rounds.empty()) {
            const auto& last = rep.rounds.back();
            s.final_accuracy = last.test_accuracy;
            s.final_train_loss = last.train_loss;
            s.persistent_fork = !last.consensus;
        }
        s.n_clients = cfg.n_clients;
        s.rounds_executed = rep.rounds.size();
        s.chain_height = nodes[0].chain.height();
        for (const auto& r : rep.rounds) s.consensus_every_round &= r.consensus;
        s.chain_audit_ok = ledger::audit_chain(nodes[0].chain).ok;

        for (const auto& n : nodes) {
            s.pool_gaps += n.pool_gaps_tolerated;
            const double spent = n.spent_train + n.spent_mine;
            s.max_node_spent = std::max(s.max_node_spent, spent);
            if (spent > budget.t_sum * (1.0 + 1e-12) + 1e-9)
                throw InvariantError("node exceeded its time budget");
        }

        contract::finalize(sc);
        s.conservation = contract::audit_conservation(sc);
        s.rewards = sc.reward_ledger;
        s.wall_seconds = wall;

        if (!cfg.output.dir.empty()) {
            const std::filesystem::path dir(cfg.output.dir);
            std::ofstream csv(dir / "metrics.csv");
            if (!csv) throw IoError("cannot write metrics.csv in " + cfg.output.dir);
            csv << metrics_csv(rep);
            std::ofstream js(dir / "summary.json");
            if (!js) throw IoError("cannot write summary.json in " + cfg.output.dir);
            js << summary_json(rep);
            if (cfg.output.chain_dump)
                ledger::dump_chain(nodes[0].chain, (dir / "chain.bin").string());
        }
        return std::move(rep);
    }
};

}  // namespace

MetricsReport run(const SimConfig& cfg) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();
    Sim sim(cfg);
    sim.setup();
    for (uint64_t r = 0; r < sim.budget.rounds; ++r) {
        RoundRecord row;
        row.round = r;
        sim.run_round(r, row);
        sim.rep.rounds.push_back(row);
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return sim.finish(wall);
}

// ---------------------------------------------------------------- output

std::string metrics_csv(const MetricsReport& r) {
    std::string out = "# blade-sim v1\n";
    out += "round,train_loss,test_accuracy,chain_height,winner,consensus,accusations,"
           "new_exclusions,sigma,mine_tries,aggregate_digest\n";
    for (const auto& row : r.rounds) {
        out += std::to_string(row.round) + ',' + fmt(row.train_loss) + ',' +
               fmt(row.test_accuracy) + ',' + std::to_string(row.chain_height) + ',' +
               std::to_string(row.winner) + ',' + (row.consensus ? "1" : "0") + ',' +
               std::to_string(row.accusations) + ',' + std::to_string(row.new_exclusions) + ',' +
               fmt(row.sigma) + ',' + std::to_string(row.mine_tries) + ',' +
               hex(row.aggregate_digest) + '\n';
    }
    return out;
}

std::string summary_json(const MetricsReport& r) {
    const auto& s = r.summary;
    ordered_json j;
    j["n_clients"] = s.n_clients;
    j["final_accuracy"] = s.final_accuracy;
    j["final_train_loss"] = s.final_train_loss;
    j["rounds_executed"] = s.rounds_executed;
    j["chain_height"] = s.chain_height;
    j["consensus_every_round"] = s.consensus_every_round;
    j["persistent_fork"] = s.persistent_fork;
    j["chain_audit_ok"] = s.chain_audit_ok;
    j["budget"] = {{"t_t", s.budget.t_t},     {"t_b", s.budget.t_b},
                   {"theta", s.budget.theta}, {"tau", s.budget.tau},
                   {"rounds", s.budget.rounds}, {"t_sum", s.budget.t_sum}};
    j["max_node_spent"] = s.max_node_spent;
    j["lazy_ids"] = s.lazy_ids;
    j["lazy_submissions"] = s.lazy_submissions;
    j["lazy_excluded"] = s.lazy_excluded;
    j["honest_submissions"] = s.honest_submissions;
    j["honest_flagged"] = s.honest_flagged;
    j["pool_gaps"] = s.pool_gaps;
    j["late_updates"] = s.late_updates;
    j["blocks_rejected"] = s.blocks_rejected;
    j["blocks_sealed"] = s.blocks_sealed;
    j["total_mine_tries"] = s.total_mine_tries;
    ordered_json rw = ordered_json::object();
    for (const auto& [id, credits] : s.rewards) rw[std::to_string(id)] = credits;
    j["rewards"] = rw;
    j["conservation"] = {{"staked", s.conservation.staked},
                         {"pool", s.conservation.pool},
                         {"minted", s.conservation.minted},
                         {"rewards", s.conservation.rewards},
                         {"refunds", s.conservation.refunds},
                         {"held", s.conservation.held},
                         {"escrow", s.conservation.escrow},
                         {"balanced", s.conservation.balanced}};
    j["wall_seconds"] = s.wall_seconds;
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- sweep

SweepAxis parse_axis(const std::string& name) {
    if (name == "epsilon") return SweepAxis::epsilon;
    if (name == "theta") return SweepAxis::theta;
    if (name == "lazy_fraction") return SweepAxis::lazy_fraction;
    if (name == "snr_db") return SweepAxis::snr_db;
    if (name == "K" || name == "rounds") return SweepAxis::rounds;
    throw ConfigError("unknown sweep axis: " + name +
                      " (want epsilon|theta|lazy_fraction|snr_db|K)");
}

const char* axis_name(SweepAxis a) {
    switch (a) {
        case SweepAxis::epsilon: return "epsilon";
        case SweepAxis::theta: return "theta";
        case SweepAxis::lazy_fraction: return "lazy_fraction";
        case SweepAxis::snr_db: return "snr_db";
        case SweepAxis::rounds: return "K";
    }
    return "?";
}

namespace {

void apply_axis(SimConfig& cfg, SweepAxis axis, double value) {
    switch (axis) {
        case SweepAxis::epsilon:
            cfg.privacy_enabled = true;
            cfg.privacy.epsilon = value;
            break;
        case SweepAxis::theta: cfg.budget.theta = value; break;
        case SweepAxis::lazy_fraction: cfg.behavior.lazy_fraction = value; break;
        case SweepAxis::snr_db: cfg.watermark.snr_db = value; break;
        case SweepAxis::rounds:
            cfg.budget.rounds = uint64_t(std::llround(value));
            cfg.budget.tau = 0; // widest epoch count that still fits
            break;
    }
}

int sweep_threads() {
    if (const char* env = std::getenv("BLADE_SIM_THREADS")) {
        const int k = std::atoi(env);
        if (k >= 1) return std::min(k, omp_get_max_threads());
    }
    return omp_get_max_threads();
}

}  // namespace

SweepTable sweep(const SimConfig& base, SweepAxis axis, const std::vector<double>& values,
                 uint32_t seeds_per_point) {
    if (values.empty()) throw ConfigError("sweep needs at least one axis value");
    if (seeds_per_point == 0) throw ConfigError("sweep needs at least one seed per point");

    SweepTable table;
    table.axis = axis;
    table.rows.resize(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
        table.rows[i].value = values[i];
        table.rows[i].accuracy.resize(seeds_per_point);
        table.rows[i].loss.resize(seeds_per_point);
    }
    std::vector<double> excluded(values.size() * seeds_per_point, 0.0);

    const int64_t jobs = int64_t(values.size()) * seeds_per_point;
    std::exception_ptr first_error = nullptr;

#pragma omp parallel for schedule(dynamic) num_threads(sweep_threads())
    for (int64_t job = 0; job < jobs; ++job) {
        const size_t vi = size_t(job) / seeds_per_point;
        const uint32_t si = uint32_t(size_t(job) % seeds_per_point);
        try {
            SimConfig cfg = base;
            cfg.output = OutputConfig{}; // sweep points stay in memory
            apply_axis(cfg, axis, values[vi]);
            cfg.seed = seed_mix({base.seed, hash_tag(axis_name(axis)),
                                 std::bit_cast<uint64_t>(values[vi]), si});
            const auto rep = run(cfg);
            table.rows[vi].accuracy[si] = rep.summary.final_accuracy;
            table.rows[vi].loss[si] = rep.summary.final_train_loss;
            if (rep.summary.lazy_submissions > 0)
                excluded[vi * seeds_per_point + si] =
                    double(rep.summary.lazy_excluded) / double(rep.summary.lazy_submissions);
        } catch (...) {
#pragma omp critical
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);

    for (size_t vi = 0; vi < values.size(); ++vi) {
        auto& row = table.rows[vi];
        const auto n = double(seeds_per_point);
        double acc = 0, loss = 0, excl = 0;
        for (uint32_t si = 0; si < seeds_per_point; ++si) {
            acc += row.accuracy[si];
            loss += row.loss[si];
            excl += excluded[vi * seeds_per_point + si];
        }
        row.mean_accuracy = acc / n;
        row.mean_loss = loss / n;
        row.mean_lazy_excluded_fraction = excl / n;
        if (seeds_per_point > 1) {
            double va = 0, vl = 0;
            for (uint32_t si = 0; si < seeds_per_point; ++si) {
                va += (row.accuracy[si] - row.mean_accuracy) * (row.accuracy[si] - row.mean_accuracy);
                vl += (row.loss[si] - row.mean_loss) * (row.loss[si] - row.mean_loss);
            }
            row.std_accuracy = std::sqrt(va / (n - 1));
            row.std_loss = std::sqrt(vl / (n - 1));
        }
    }
    return table;
}

std::string sweep_csv(const SweepTable& t) {
    std::string out = "# blade-sim v1\n";
    out += "axis,value,seeds,mean_accuracy,std_accuracy,mean_loss,std_loss,"
           "mean_lazy_excluded_fraction\n";
    for (const auto& row : t.rows) {
        out += std::string(axis_name(t.axis)) + ',' + fmt(row.value) + ',' +
               std::to_string(row.accuracy.size()) + ',' + fmt(row.mean_accuracy) + ',' +
               fmt(row.std_accuracy) + ',' + fmt(row.mean_loss) + ',' + fmt(row.std_loss) + ',' +
               fmt(row.mean_lazy_excluded_fraction) + '\n';
    }
    return out;
}

}  // namespace blade::sim
