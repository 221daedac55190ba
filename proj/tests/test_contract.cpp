#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numeric>
#include <string>
#include <vector>

#include "blade/contract.hpp"
#include "blade/errors.hpp"

using namespace blade;
using namespace blade::contract;

namespace {

TaskSpec small_task(int64_t pool, uint64_t rounds, int64_t subsidy = 0) {
    TaskSpec t;
    t.reward_pool = pool;
    t.rounds = rounds;
    t.n_required = 2;
    t.miner_subsidy = subsidy;
    return t;
}

Bid bid(uint32_t id, double cap, double cost, int64_t dep = 10, uint64_t data = 100) {
    return Bid{id, cap, data, cost, dep};
}

ledger::Block block_with(uint64_t round, uint32_t miner,
                         std::vector<std::pair<uint32_t, uint64_t>> trainers) {
    ledger::Block b;
    b.header.round = round;
    b.header.miner_id = miner;
    for (auto [id, n] : trainers) b.body.updates.push_back({id, round, {}, n, 0});
    return b;
}

} // namespace

TEST_CASE("publishing escrows the reward") {
    const auto s = publish_task(small_task(100, 10));
    CHECK(s.phase == Phase::bidding);
    CHECK(s.escrow == 100);
    CHECK(s.task.reward_pool == 100);

    auto other = publish_task(small_task(50, 5));
    other.escrow -= 7; // instances do not share state
    CHECK(s.escrow == 100);

    CHECK_THROWS_AS(publish_task(small_task(0, 10)), ConfigError);
    CHECK_THROWS_AS(publish_task(small_task(-5, 10)), ConfigError);
}

TEST_CASE("winner selection scores capability per cost") {
    auto s = publish_task(small_task(100, 10));
    // scores: 2, 1, 0.5 -> single winner is client 7
    select_winners(s, {bid(7, 2, 1), bid(8, 1, 1), bid(9, 1, 2)}, 1);
    CHECK(s.phase == Phase::training);
    CHECK(s.selected == std::set<uint32_t>{7});
    // losers reclaimed their stakes in full
    CHECK(s.refunded.at(8) == 10);
    CHECK(s.refunded.at(9) == 10);
    CHECK(s.deposits.count(8) == 0);
    CHECK(s.deposits.at(7) == 10);
    CHECK(s.total_staked == 30);
}

TEST_CASE("score ties go to the lower client id") {
    auto s = publish_task(small_task(100, 10));
    // both score 2.0
    select_winners(s, {bid(5, 4, 2), bid(3, 2, 1)}, 1);
    CHECK(s.selected == std::set<uint32_t>{3});
}

TEST_CASE("selection errors name the counts") {
    auto s = publish_task(small_task(100, 10));
    try {
        select_winners(s, {bid(1, 1, 1), bid(2, 1, 1)}, 5);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("2") != std::string::npos);
        CHECK(what.find("5") != std::string::npos);
    }

    auto s2 = publish_task(small_task(100, 10));
    CHECK_THROWS_AS(select_winners(s2, {bid(1, 1, 1), bid(1, 2, 1)}, 1), ConfigError);

    auto s3 = publish_task(small_task(100, 10));
    s3.task.required_data_size = 500; // both bids claim too little data
    CHECK_THROWS_AS(select_winners(s3, {bid(1, 1, 1), bid(2, 1, 1)}, 1), ConfigError);

    auto s4 = publish_task(small_task(100, 10));
    CHECK_THROWS_AS(select_winners(s4, {bid(1, 1, 1, 0)}, 1), ConfigError); // zero deposit
}

TEST_CASE("round pool spreads remainder credits over the first rounds") {
    const auto t = small_task(100, 14);
    int64_t total = 0;
    for (uint64_t r = 0; r < 14; ++r) {
        const int64_t rp = round_pool(t, r);
        CHECK(rp == (r < 2 ? 8 : 7)); // 100 = 2*8 + 12*7
        total += rp;
    }
    CHECK(total == 100);
    CHECK(round_pool(t, 14) == 0);
    CHECK(round_pool(t, 99) == 0);
}

TEST_CASE("apportionment is exact with largest-remainder ties to the left") {
    CHECK(apportion(10, {1, 1, 1}) == std::vector<int64_t>{4, 3, 3});
    CHECK(apportion(4, {1, 3}) == std::vector<int64_t>{1, 3});
    CHECK(apportion(20, std::vector<uint64_t>(20, 5)) == std::vector<int64_t>(20, 1));
    CHECK(apportion(7, {0, 5, 0, 5}) == std::vector<int64_t>{0, 4, 0, 3});
    CHECK(apportion(0, {3, 2}) == std::vector<int64_t>{0, 0});

    // big weights do not overflow
    const auto big = apportion(1'000'000'000,
                               {18'000'000'000'000'000'000ull, 18'000'000'000'000'000'000ull});
    CHECK(big[0] + big[1] == 1'000'000'000);

    CHECK_THROWS_AS(apportion(5, {0, 0}), ConfigError);
    CHECK_THROWS_AS(apportion(-1, {1}), ConfigError);
    CHECK_THROWS_AS(apportion(5, {}), ConfigError);
}

TEST_CASE("settlement pays sample-proportional shares plus the subsidy") {
    auto s = publish_task(small_task(80, 4, 3));
    select_winners(s, {bid(0, 1, 1), bid(1, 1, 1)}, 2);

    // equal sizes split the 20-credit round pool evenly
    settle_rewards(s, block_with(0, 1, {{0, 50}, {1, 50}}));
    CHECK(s.reward_ledger.at(0) == 10);
    CHECK(s.reward_ledger.at(1) == 10 + 3); // trainer share + miner subsidy
    CHECK(s.escrow == 60);
    CHECK(s.minted == 3);
    CHECK(s.blocks_settled == 1);

    // proportional split: sizes (1,3) on a 20-credit pool -> (5,15)
    settle_rewards(s, block_with(1, 0, {{0, 1}, {1, 3}}));
    CHECK(s.reward_ledger.at(0) == 10 + 5 + 3);
    CHECK(s.reward_ledger.at(1) == 13 + 15);
    CHECK(s.escrow == 40);
}

TEST_CASE("punished clients forfeit their round share") {
    auto s = publish_task(small_task(40, 2));
    select_winners(s, {bid(0, 1, 1), bid(1, 1, 1)}, 2);
    mark_punished(s, 1);
    settle_rewards(s, block_with(0, 0, {{0, 10}, {1, 10}}));
    CHECK(s.reward_ledger.at(0) == 10);
    CHECK(s.reward_ledger.count(1) == 0);
    CHECK(s.escrow == 30); // the forfeited 10 stays escrowed
    CHECK(audit_conservation(s).balanced);
}

TEST_CASE("slashing moves the deposit to the publisher") {
    auto s = publish_task(small_task(40, 2));
    select_winners(s, {bid(0, 1, 1, 25), bid(1, 1, 1, 25)}, 2);
    mark_punished(s, 1, true);
    CHECK(s.deposits.count(1) == 0);
    CHECK(s.publisher_refund == 25);
    CHECK(audit_conservation(s).balanced);
}

TEST_CASE("finalize refunds every held stake and the unspent pool") {
    auto s = publish_task(small_task(100, 4));
    select_winners(s, {bid(0, 1, 1, 30), bid(1, 1, 1, 30), bid(2, 1, 9, 30)}, 2);
    settle_rewards(s, block_with(0, 0, {{0, 10}, {1, 10}}));
    finalize(s);
    CHECK(s.phase == Phase::complete);
    CHECK(s.deposits.empty());
    CHECK(s.refunded.at(0) == 30);
    CHECK(s.refunded.at(1) == 30);
    CHECK(s.refunded.at(2) == 30); // loser refunded at selection already
    CHECK(s.escrow == 0);
    CHECK(s.publisher_refund == 75); // 100 - the 25-credit round 0 pool
    CHECK_THROWS_AS(finalize(s), ConfigError);
}

TEST_CASE("the books balance at every step of a full task") {
    auto s = publish_task(small_task(100, 3, 2));
    CHECK(audit_conservation(s).balanced);
    select_winners(s,
                   {bid(0, 3, 1, 10), bid(1, 2, 1, 10), bid(2, 1, 1, 10), bid(3, 1, 4, 10)}, 3);
    CHECK(audit_conservation(s).balanced);
    for (uint64_t r = 0; r < 3; ++r) {
        settle_rewards(s, block_with(r, static_cast<uint32_t>(r), {{0, 40}, {1, 35}, {2, 25}}));
        CHECK(audit_conservation(s).balanced);
    }
    finalize(s);
    const auto rep = audit_conservation(s);
    CHECK(rep.balanced);
    CHECK(rep.held == 0);
    CHECK(rep.escrow == 0);
    // clean completion: everything paid in flowed back out
    CHECK(rep.rewards + rep.refunds == rep.staked + rep.pool + rep.minted);
    // the whole pool reached trainers and miners
    int64_t client_rewards = 0;
    for (const auto& [id, v] : s.reward_ledger) {
        (void)id;
        client_rewards += v;
    }
    CHECK(client_rewards == 100 + 3 * 2);
}

TEST_CASE("overspending the escrow is impossible and guarded") {
    auto s = publish_task(small_task(30, 3));
    select_winners(s, {bid(0, 1, 1), bid(1, 1, 1)}, 2);
    for (uint64_t r = 0; r < 3; ++r) settle_rewards(s, block_with(r, 0, {{0, 1}, {1, 1}}));
    CHECK(s.escrow == 0);
    // a duplicate settlement of round 0 would need 10 more credits
    CHECK_THROWS_AS(settle_rewards(s, block_with(0, 0, {{0, 1}, {1, 1}})), InvariantError);
}

TEST_CASE("reputation tallies verification outcomes") {
    auto s = publish_task(small_task(10, 1));
    record_reputation(s, 4, true);
    record_reputation(s, 4, true);
    record_reputation(s, 4, false);
    record_reputation(s, 9, false);
    CHECK(s.reputation.at(4) == 1);
    CHECK(s.reputation.at(9) == -1);
}
