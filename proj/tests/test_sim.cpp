#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "blade/errors.hpp"
#include "blade/ledger.hpp"
#include "blade/rng.hpp"
#include "blade/sim.hpp"

using namespace blade;
using namespace blade::sim;

namespace {

// small but fully featured run: N=5, K=3 at theta=6, tau=1
SimConfig small_config(uint64_t seed) {
    SimConfig c;
    c.seed = seed;
    c.n_clients = 5;
    c.data.synth.samples_per_client = 40;
    c.data.synth.test_samples = 80;
    c.chain.c_b = 10.0; // t_b = 1*10/(5*1) = 2
    c.budget.t_sum = 42.0;
    c.budget.theta = 6.0;
    c.budget.tau = 1;
    c.privacy_enabled = false;
    c.watermark.enabled = false;
    return c;
}

}  // namespace

TEST_CASE("config parsing fills defaults and rejects typos") {
    auto c = parse_config(R"({"seed": 7, "n_clients": 4, "privacy": {"epsilon": 2.5}})");
    CHECK(c.seed == 7);
    CHECK(c.n_clients == 4);
    CHECK(c.privacy.epsilon == 2.5);
    CHECK(c.privacy.delta == 1e-5);
    CHECK(c.budget.theta == 6.0);
    CHECK(c.chain.mode == "sampled");

    CHECK_THROWS_AS(parse_config("not json"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"n_client": 4})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"privacy": {"epsilonn": 1}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"n_clients": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"behavior": {"lazy_fraction": 1.0}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"budget": {"tau": 0}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"chain": {"mode": "grind"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"data": {"source": "idx"}})"), ConfigError);
}

TEST_CASE("axis names round-trip") {
    CHECK(parse_axis("epsilon") == SweepAxis::epsilon);
    CHECK(parse_axis("K") == SweepAxis::rounds);
    CHECK(parse_axis("rounds") == SweepAxis::rounds);
    CHECK(axis_name(parse_axis("lazy_fraction")) == std::string("lazy_fraction"));
    CHECK_THROWS_AS(parse_axis("volume"), ConfigError);
}

TEST_CASE("a run is deterministic per seed and distinct across seeds") {
    auto a = run(small_config(11));
    auto b = run(small_config(11));
    auto c = run(small_config(12));
    CHECK(metrics_csv(a) == metrics_csv(b));
    CHECK(metrics_csv(a) != metrics_csv(c));

    // summary identical except wall time
    auto strip_wall = [](std::string s) {
        auto pos = s.find("\"wall_seconds\"");
        REQUIRE(pos != std::string::npos);
        s.erase(pos, s.find('\n', pos) - pos);
        return s;
    };
    CHECK(strip_wall(summary_json(a)) == strip_wall(summary_json(b)));
}

TEST_CASE("honest cluster reaches consensus every round and pays out cleanly") {
    auto rep = run(small_config(21));
    REQUIRE(rep.summary.rounds_executed == 3);
    CHECK(rep.summary.consensus_every_round);
    CHECK(!rep.summary.persistent_fork);
    CHECK(rep.summary.chain_audit_ok);
    CHECK(rep.summary.chain_height == 3);
    CHECK(rep.summary.blocks_sealed == 3);
    CHECK(rep.summary.pool_gaps == 0);
    CHECK(rep.summary.late_updates == 0);
    CHECK(rep.summary.blocks_rejected == 0);
    for (const auto& row : rep.rounds) {
        CHECK(row.consensus);
        CHECK(row.winner < 5);
        CHECK(row.chain_height == row.round + 1);
    }

    // budget law for the executed config
    const auto& b = rep.summary.budget;
    CHECK(double(b.rounds) * b.round_len() <= b.t_sum + 1e-9);
    CHECK(rep.summary.max_node_spent <= b.t_sum + 1e-9);

    // conservation with equality on clean completion
    const auto& k = rep.summary.conservation;
    CHECK(k.balanced);
    CHECK(k.escrow == 0);
    CHECK(k.held == 0);
    CHECK(k.rewards + k.refunds == k.staked + k.pool + k.minted);

    // every trainer got something: equal shards, sampled lottery
    int64_t total = 0;
    for (const auto& [id, credits] : rep.summary.rewards) total += credits;
    CHECK(total >= 1000); // pool fully paid plus subsidies
}

TEST_CASE("decentralized aggregation equals the centralized oracle bit for bit") {
    auto cfg = small_config(31);
    auto rep = run(cfg);
    REQUIRE(rep.summary.rounds_executed == 3);

    // rebuild the exact same world and fold it centrally
    auto parts = mlcore::make_partitioned_data(cfg.seed, int(cfg.n_clients), cfg.data.synth);
    mlcore::ModelSpec model{mlcore::ModelKind::linear_softmax, cfg.data.synth.dims,
                            cfg.data.synth.num_classes, 0};
    auto global = mlcore::init_params(model, cfg.seed);
    for (uint64_t r = 0; r < 3; ++r) {
        std::vector<mlcore::LocalUpdate> updates;
        for (uint32_t i = 0; i < cfg.n_clients; ++i) {
            auto trained = mlcore::local_train(global, parts.clients[i], model, 1, cfg.train.lr,
                                               int(cfg.train.batch_size),
                                               seed_mix({cfg.seed, hash_tag("train"), i}),
                                               int(r));
            mlcore::LocalUpdate u;
            u.client_id = i;
            u.round = r;
            u.params.resize(trained.size());
            for (size_t p = 0; p < trained.size(); ++p) u.params[p] = trained[p] - global[p];
            u.n_samples = parts.clients[i].size();
            updates.push_back(std::move(u));
        }
        auto mean = mlcore::aggregate(updates);
        for (size_t p = 0; p < global.size(); ++p) global[p] += mean[p];
        CHECK(mlcore::param_digest(global) == rep.rounds[r].aggregate_digest);
    }
}

TEST_CASE("lazy fraction instantiates the highest ids") {
    auto cfg = small_config(41);
    cfg.n_clients = 20;
    cfg.chain.c_b = 40.0; // keep t_b = 2
    cfg.budget.t_sum = 28.0;
    cfg.behavior.lazy_fraction = 0.3;
    auto rep = run(cfg);
    CHECK(rep.summary.lazy_ids ==
          std::vector<uint32_t>{14, 15, 16, 17, 18, 19});
    CHECK(rep.summary.lazy_submissions == 12); // 6 lazy x 2 rounds
}

TEST_CASE("detection bans a verbatim copier and spares the honest") {
    auto cfg = small_config(51);
    cfg.n_clients = 6;
    cfg.chain.c_b = 12.0; // t_b = 2
    cfg.budget.t_sum = 42.0;
    cfg.behavior.lazy_fraction = 0.17; // one lazy node: id 5
    cfg.behavior.detection = true;
    cfg.watermark.enabled = true;
    cfg.watermark.snr_db = 6.0;
    auto rep = run(cfg);

    CHECK(rep.summary.lazy_ids == std::vector<uint32_t>{5});
    CHECK(rep.summary.honest_flagged == 0);
    CHECK(rep.summary.lazy_submissions > 0);
    // the first copied update gets it banned; everything after never lands
    CHECK(rep.summary.lazy_excluded >= rep.summary.lazy_submissions - 1);
    CHECK(rep.summary.consensus_every_round);
    uint32_t accusations = 0, exclusions = 0;
    for (const auto& row : rep.rounds) {
        accusations += row.accusations;
        exclusions += row.new_exclusions;
    }
    CHECK(accusations >= 1);
    CHECK(exclusions == 1);
}

TEST_CASE("updates missing the deadline leave pools thin but never fork") {
    auto cfg = small_config(61);
    cfg.net.delay_ticks = 5;
    cfg.net.round_deadline_ticks = 1; // everything arrives late
    auto rep = run(cfg);
    CHECK(rep.summary.late_updates > 0);
    CHECK(rep.summary.pool_gaps > 0); // blocks adopted past the thin pools
    CHECK(rep.summary.consensus_every_round);
    CHECK(rep.summary.blocks_rejected == 0);
}

TEST_CASE("dropping links loses updates but consensus survives") {
    auto cfg = small_config(71);
    cfg.net.drop_prob = 0.4;
    auto rep = run(cfg);
    CHECK(rep.summary.pool_gaps > 0);
    CHECK(rep.summary.consensus_every_round);
    CHECK(rep.summary.chain_audit_ok);
}

TEST_CASE("csv output carries the schema header and one line per round") {
    auto rep = run(small_config(81));
    const auto csv = metrics_csv(rep);
    CHECK(csv.rfind("# blade-sim v1\n", 0) == 0);
    size_t lines = 0;
    for (char ch : csv)
        if (ch == '\n') ++lines;
    CHECK(lines == 2 + rep.summary.rounds_executed);
}

TEST_CASE("a singleton sweep point equals the plain run it derives") {
    auto base = small_config(91);
    auto table = sweep(base, SweepAxis::epsilon, {5.0}, 1);
    REQUIRE(table.rows.size() == 1);
    REQUIRE(table.rows[0].accuracy.size() == 1);

    auto cfg = base;
    cfg.privacy_enabled = true;
    cfg.privacy.epsilon = 5.0;
    cfg.seed = seed_mix({base.seed, hash_tag("epsilon"), std::bit_cast<uint64_t>(5.0), 0});
    auto rep = run(cfg);
    CHECK(table.rows[0].accuracy[0] == rep.summary.final_accuracy);
    CHECK(table.rows[0].loss[0] == rep.summary.final_train_loss);
    CHECK(table.rows[0].mean_accuracy == rep.summary.final_accuracy);
    CHECK(table.rows[0].std_accuracy == 0.0);
}

TEST_CASE("sweep rows aggregate their own seeds") {
    auto base = small_config(101);
    auto table = sweep(base, SweepAxis::theta, {4.0, 6.0}, 3);
    REQUIRE(table.rows.size() == 2);
    for (const auto& row : table.rows) {
        REQUIRE(row.accuracy.size() == 3);
        double mean = (row.accuracy[0] + row.accuracy[1] + row.accuracy[2]) / 3.0;
        CHECK(row.mean_accuracy == doctest::Approx(mean).epsilon(1e-12));
        CHECK(row.std_accuracy >= 0.0);
    }
    const auto csv = sweep_csv(table);
    CHECK(csv.rfind("# blade-sim v1\n", 0) == 0);
    CHECK(csv.find("theta,4,3,") != std::string::npos);

    CHECK_THROWS_AS(sweep(base, SweepAxis::theta, {}, 3), ConfigError);
    CHECK_THROWS_AS(sweep(base, SweepAxis::theta, {4.0}, 0), ConfigError);
}

TEST_CASE("grind mode seals verifiable work") {
    auto cfg = small_config(111);
    cfg.chain.mode = "grind";
    cfg.chain.difficulty_bits = 6;
    auto rep = run(cfg);
    CHECK(rep.summary.blocks_sealed == 3);
    CHECK(rep.summary.total_mine_tries >= 3); // needs actual grinding
    CHECK(rep.summary.chain_audit_ok);        // audit re-checks the pow bits
    CHECK(rep.summary.consensus_every_round);
}

TEST_CASE("file outputs land in the requested directory") {
    auto cfg = small_config(121);
    cfg.output.dir = "test_sim_out";
    cfg.output.trace = true;
    cfg.output.chain_dump = true;
    auto rep = run(cfg);

    auto slurp = [](const char* p) {
        std::ifstream in(p, std::ios::binary);
        REQUIRE(in);
        return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    };
    CHECK(slurp("test_sim_out/metrics.csv") == metrics_csv(rep));
    CHECK(slurp("test_sim_out/summary.json") == summary_json(rep));
    CHECK(!slurp("test_sim_out/trace.jsonl").empty());
    auto chain = ledger::load_chain("test_sim_out/chain.bin");
    CHECK(chain.height() == 3);
    CHECK(ledger::audit_chain(chain).ok);
}
