#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "blade/errors.hpp"
#include "blade/ledger.hpp"
#include "blade/sim.hpp"
#include "blade/watermark.hpp"

namespace {

using namespace blade;

std::string short_hex(const Digest& d) {
    static const char* k = "0123456789abcdef";
    std::string s;
    for (size_t i = 0; i < 8; ++i) {
        s += k[d[i] >> 4];
        s += k[d[i] & 0xf];
    }
    return s;
}

void print_run_summary(const sim::MetricsReport& rep, std::ostream& out) {
    const auto& s = rep.summary;
    const auto& b = s.budget;
    out << "clients " << s.n_clients << " (" << s.lazy_ids.size() << " lazy)"
        << "  rounds " << s.rounds_executed << "/" << b.rounds << "  budget K=" << b.rounds
        << " tau=" << b.tau << " theta=" << b.theta << " t_sum=" << b.t_sum << "\n";
    out << "final accuracy " << s.final_accuracy << "  train loss " << s.final_train_loss
        << "\n";
    out << "consensus every round: " << (s.consensus_every_round ? "yes" : "NO")
        << "  persistent fork: " << (s.persistent_fork ? "YES" : "no")
        << "  chain audit: " << (s.chain_audit_ok ? "ok" : "FAILED") << "\n";
    out << "chain height " << s.chain_height << ", blocks sealed " << s.blocks_sealed
        << ", rejected " << s.blocks_rejected << ", mine tries " << s.total_mine_tries << "\n";
    if (!s.lazy_ids.empty() || s.honest_flagged > 0)
        out << "lazy submissions " << s.lazy_submissions << ", excluded " << s.lazy_excluded
            << "; honest flagged " << s.honest_flagged << "\n";
    if (s.pool_gaps > 0 || s.late_updates > 0)
        out << "pool gaps tolerated " << s.pool_gaps << ", late updates " << s.late_updates
            << "\n";
    const auto& k = s.conservation;
    out << "conservation " << (k.balanced ? "balanced" : "BROKEN") << " (staked " << k.staked
        << " + pool " << k.pool << " + minted " << k.minted << " = rewards " << k.rewards
        << " + refunds " << k.refunds << " + held " << k.held << " + escrow " << k.escrow
        << ")\n";
    out << "max node time spent " << s.max_node_spent << " of " << b.t_sum << "\n";
    out << "wall " << s.wall_seconds << "s\n";
}

int cmd_run(const std::string& cfg_path, const CLI::Option* seed_opt, uint64_t seed,
            const std::string& out_dir, bool trace, bool chain_dump, bool quiet) {
    auto cfg = sim::load_config(cfg_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (!out_dir.empty()) cfg.output.dir = out_dir;
    if (trace) cfg.output.trace = true;
    if (chain_dump) cfg.output.chain_dump = true;
    auto rep = sim::run(cfg);
    if (!quiet) print_run_summary(rep, std::cout);
    if (!cfg.output.dir.empty())
        std::cout << "wrote " << cfg.output.dir << "/metrics.csv, summary.json"
                  << (cfg.output.trace ? ", trace.jsonl" : "")
                  << (cfg.output.chain_dump ? ", chain.bin" : "") << "\n";
    if (!rep.summary.chain_audit_ok || !rep.summary.conservation.balanced) {
        std::cerr << "error: post-run audit failed\n";
        return exit_audit_fail;
    }
    return exit_ok;
}

int cmd_sweep(const std::string& cfg_path, const std::string& axis_name,
              const std::vector<double>& values, int seeds, const std::string& out_dir) {
    auto cfg = sim::load_config(cfg_path);
    auto axis = sim::parse_axis(axis_name);
    auto table = sim::sweep(cfg, axis, values, uint32_t(seeds));
    const auto csv = sim::sweep_csv(table);
    std::cout << csv;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        auto path = std::filesystem::path(out_dir) / "sweep.csv";
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out << csv;
        std::cerr << "wrote " << path.string() << "\n";
    }
    return exit_ok;
}

int cmd_pn_roc(const std::vector<double>& snr, double gamma, int degree, size_t use_len,
               int trials, uint64_t seed) {
    auto rows = watermark::roc_table(snr, gamma, degree, use_len, trials, seed);
    std::printf("# blade-sim v1\n");
    std::printf("snr_db,gamma,degree,use_len,trials,tpr,fpr\n");
    for (const auto& r : rows)
        std::printf("%.10g,%.10g,%d,%zu,%d,%.10g,%.10g\n", r.snr_db, r.gamma, degree, use_len,
                    trials, r.tpr, r.fpr);
    return exit_ok;
}

int cmd_chain_audit(const std::string& path, bool as_json) {
    auto chain = ledger::load_chain(path);
    auto report = ledger::audit_chain(chain);
    if (as_json) {
        std::cout << ledger::chain_to_json(chain) << "\n";
    } else {
        std::cout << "height " << chain.height() << ", tip "
                  << short_hex(ledger::header_hash(chain.tip().header)) << "\n";
    }
    if (!report.ok) {
        std::cerr << "audit FAILED at height " << report.bad_height << ": " << report.reason
                  << "\n";
        return exit_audit_fail;
    }
    std::cerr << "audit ok\n";
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"decentralized federated learning simulator"};
    app.require_subcommand(1);
    int rc = exit_ok;

    auto* run_cmd = app.add_subcommand("run", "execute one simulation from a config file");
    std::string run_cfg, run_out;
    uint64_t run_seed = 0;
    bool run_trace = false, run_dump = false, run_quiet = false;
    run_cmd->add_option("-c,--config", run_cfg, "config json path")->required();
    auto* seed_opt = run_cmd->add_option("--seed", run_seed, "override the config seed");
    run_cmd->add_option("-o,--out", run_out, "output directory for metrics/summary files");
    run_cmd->add_flag("--trace", run_trace, "also write per-event trace.jsonl");
    run_cmd->add_flag("--chain-dump", run_dump, "also write the sealed chain as chain.bin");
    run_cmd->add_flag("-q,--quiet", run_quiet, "suppress the human-readable summary");
    run_cmd->callback([&] {
        rc = cmd_run(run_cfg, seed_opt, run_seed, run_out, run_trace, run_dump, run_quiet);
    });

    auto* sweep_cmd =
        app.add_subcommand("sweep", "run a parameter sweep, many seeds per point");
    std::string sweep_cfg, sweep_axis, sweep_out;
    std::vector<double> sweep_values;
    int sweep_seeds = 20;
    sweep_cmd->add_option("-c,--config", sweep_cfg, "base config json path")->required();
    sweep_cmd
        ->add_option("--axis", sweep_axis,
                     "swept parameter: epsilon, theta, lazy_fraction, snr_db, rounds (alias K)")
        ->required();
    sweep_cmd->add_option("--values", sweep_values, "comma-separated axis values")
        ->required()
        ->delimiter(',');
    sweep_cmd->add_option("--seeds", sweep_seeds, "seeds per point (default 20)")
        ->check(CLI::PositiveNumber);
    sweep_cmd->add_option("-o,--out", sweep_out, "directory for sweep.csv");
    sweep_cmd->callback(
        [&] { rc = cmd_sweep(sweep_cfg, sweep_axis, sweep_values, sweep_seeds, sweep_out); });

    auto* roc_cmd = app.add_subcommand(
        "pn-roc", "Monte-Carlo watermark detector operating characteristic");
    std::vector<double> roc_snr = {0.0, 3.0, 6.0, 9.0, 12.0};
    double roc_gamma = 0.5;
    int roc_degree = 15;
    size_t roc_len = 25400;
    int roc_trials = 500;
    uint64_t roc_seed = 1;
    roc_cmd->add_option("--snr", roc_snr, "snr values in dB")->delimiter(',');
    roc_cmd->add_option("--gamma", roc_gamma, "decision threshold fraction");
    roc_cmd->add_option("--degree", roc_degree, "LFSR degree")->check(CLI::Range(10, 20));
    roc_cmd->add_option("--use-len", roc_len, "chips embedded per update");
    roc_cmd->add_option("--trials", roc_trials, "Monte-Carlo trials per point")
        ->check(CLI::PositiveNumber);
    roc_cmd->add_option("--seed", roc_seed, "base seed");
    roc_cmd->callback(
        [&] { rc = cmd_pn_roc(roc_snr, roc_gamma, roc_degree, roc_len, roc_trials, roc_seed); });

    auto* audit_cmd =
        app.add_subcommand("chain-audit", "re-verify a chain dump and print its contents");
    std::string audit_path;
    bool audit_json = false;
    audit_cmd->add_option("dump", audit_path, "chain.bin produced by a run")->required();
    audit_cmd->add_flag("--json", audit_json, "print the full chain as json");
    audit_cmd->callback([&] { rc = cmd_chain_audit(audit_path, audit_json); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int cli_rc = app.exit(e);
        return cli_rc == 0 ? exit_ok : exit_bad_config;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_bad_config;
    } catch (const InfeasibleBudgetError& e) {
        std::cerr << "infeasible budget: " << e.what() << "\n";
        return exit_infeasible_budget;
    } catch (const DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return exit_divergence;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return exit_io;
    } catch (const InvariantError& e) {
        std::cerr << "invariant broken: " << e.what() << "\n";
        return exit_audit_fail;
    }
    return rc;
}
