// Command-line surface: train victims, run attack cells, build the results
// matrix, verify the regret bound, export reward curves, self-test.
//
// Exit codes: 0 success, 1 failed run or failed check, 2 usage error.
#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rlta/config.hpp"
#include "rlta/harness.hpp"

namespace fs = std::filesystem;
using namespace rlta;

namespace {

struct Common {
    std::string config_path;
    std::string seed;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "config file (key = value lines)");
    cmd->add_option("--seed", c.seed, "master seed override");
}

Config make_config(const Common& c) {
    Config cfg = Config::defaults();
    if (!c.config_path.empty()) cfg.load_file(c.config_path);
    if (!c.seed.empty()) cfg.set("seed", c.seed);
    return cfg;
}

void apply_override(Config& cfg, const char* key, const std::string& value) {
    if (!value.empty()) cfg.set(key, value);
}

NoiseConfig noise_base_from(const Config& cfg, EnvKind env) {
    NoiseConfig n;
    n.kernel_size = static_cast<int>(cfg.get_int("noise.kernel_size"));
    n.sigma = cfg.get_double("noise.sigma");
    n.epsilon = cfg.get_double("noise.epsilon");
    n.grid_side = obs_grid_side(env);
    return n;
}

std::vector<NoiseKind> noise_list_from(const Config& cfg) {
    std::vector<NoiseKind> kinds;
    for (const std::string& name : cfg.get_list("noise.kinds"))
        kinds.push_back(parse_noise_kind(name));
    if (kinds.empty()) throw std::invalid_argument("noise.kinds is empty");
    return kinds;
}

std::unique_ptr<Victim> load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("missing checkpoint: " + path);
    return load_victim(is);
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << body;
    os.flush();
    if (!os) throw std::runtime_error("write failed: " + path);
}

double mean_of(const std::vector<double>& v, std::size_t tail = 0) {
    std::size_t from = tail > 0 && tail < v.size() ? v.size() - tail : 0;
    double sum = 0.0;
    for (std::size_t i = from; i < v.size(); ++i) sum += v[i];
    return sum / static_cast<double>(v.size() - from);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const Config& cfg, const std::string& out_path, const std::string& curve_path) {
    EnvKind env = parse_env_kind(cfg.get("env.kind"));
    AlgoKind algo = parse_algo_kind(cfg.get("victim.algo"));
    VictimTrainConfig tc;
    tc.total_steps = cfg.get_int("train.steps");
    tc.a3c.n_workers = static_cast<int>(cfg.get_int("a3c.workers"));
    std::uint64_t seed = cfg.get_u64("seed");

    std::cout << "training " << algo_kind_name(algo) << " on " << env_kind_name(env) << " for "
              << tc.total_steps << " steps (seed " << seed << ")\n";
    TrainResult tr = train_victim(env_factory(env), env, algo, tc, seed);

    std::string path = out_path;
    if (path.empty()) {
        fs::create_directories(cfg.get("out.checkpoints"));
        path = checkpoint_path(cfg.get("out.checkpoints"), env, algo);
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    tr.agent->save(os);
    os.flush();
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);

    std::cout << "episodes " << tr.episode_returns.size();
    if (!tr.episode_returns.empty())
        std::cout << ", last-20 mean return " << mean_of(tr.episode_returns, 20);
    std::cout << "\nsaved " << path << "\n";

    if (!curve_path.empty()) {
        if (tr.episode_returns.empty()) throw std::runtime_error("no completed episodes to export");
        export_reward_curves({{"baseline"}, {tr.episode_returns}}, curve_path);
        std::cout << "training curve " << curve_path << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// attack
// ---------------------------------------------------------------------------

int cmd_attack(const Config& cfg, const std::string& ckpt_path, const std::string& single_noise,
               const std::string& traces_dir) {
    EnvKind env = parse_env_kind(cfg.get("env.kind"));
    AlgoKind algo = parse_algo_kind(cfg.get("victim.algo"));
    TimerKind timer = parse_timer_kind(cfg.get("timer.kind"));
    std::uint64_t seed = cfg.get_u64("seed");

    std::string path = ckpt_path.empty()
                           ? checkpoint_path(cfg.get("out.checkpoints"), env, algo)
                           : ckpt_path;
    std::unique_ptr<Victim> victim = load_checkpoint(path);

    CellProtocol proto;
    proto.noises = single_noise.empty() ? noise_list_from(cfg)
                                        : std::vector<NoiseKind>{parse_noise_kind(single_noise)};
    proto.episodes_per_noise = static_cast<int>(cfg.get_int("eval.episodes_per_noise"));
    proto.budget = static_cast<int>(cfg.get_int("attack.budget"));
    proto.beta = cfg.get_double("attack.beta");
    proto.noise_base = noise_base_from(cfg, env);

    EnvFactory make = env_factory(env);
    std::optional<PepgPolicy> pepg;
    if (timer == TimerKind::pepg) {
        PepgConfig pcfg;
        pcfg.population = static_cast<int>(cfg.get_int("pepg.population"));
        pcfg.generations = static_cast<int>(cfg.get_int("pepg.generations"));
        pcfg.budget = proto.budget;
        NoiseConfig train_noise = proto.noise_base;
        train_noise.kind = proto.noises.at(0);
        const Victim& v = *victim;
        std::cout << "training evolutionary attacker: population " << pcfg.population
                  << ", generations " << pcfg.generations << "\n";
        PepgTrainResult trained =
            pepg_asa_train(make, [&v](const StateVec& s) { return v.act(s, nullptr); },
                           make_noise_applier(train_noise, v, seed), pcfg, derive_seed(seed, 0xa77));
        std::cout << "attacker fitness: first " << trained.mean_fitness.front() << ", last "
                  << trained.mean_fitness.back() << "\n";
        pepg = std::move(trained.policy);
    }

    std::vector<EpisodeTrace> traces;
    CellResult r = evaluate_cell(make, *victim, timer, proto, pepg ? &*pepg : nullptr, seed,
                                 traces_dir.empty() ? nullptr : &traces);

    std::cout << "cell " << env_kind_name(env) << "/" << algo_kind_name(algo) << " timer "
              << timer_kind_name(timer) << ", " << r.returns.size() << " episodes\n";
    std::cout << "aggregate " << r.aggregate << " std " << r.stddev << "\n";
    std::cout << "returns:";
    for (double x : r.returns) std::cout << ' ' << x;
    std::cout << "\nattack_counts:";
    for (int c : r.attack_counts) std::cout << ' ' << c;
    std::cout << "\n";

    if (!traces_dir.empty()) {
        fs::create_directories(traces_dir);
        for (std::size_t i = 0; i < traces.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "ep_%03zu.csv", i);
            std::ofstream os(traces_dir + "/" + name);
            if (!os) throw std::runtime_error("cannot write trace in " + traces_dir);
            write_trace_csv(traces[i], os);
        }
        std::cout << "traces " << traces_dir << "/ (" << traces.size() << " files)\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// table
// ---------------------------------------------------------------------------

int cmd_table(const Config& cfg, bool quick, const std::string& out_path,
              const std::string& ckpt_dir) {
    TableConfig tc;
    tc.protocol.noises = noise_list_from(cfg);
    tc.protocol.episodes_per_noise = static_cast<int>(
        cfg.get_int(quick ? "quick.episodes_per_noise" : "eval.episodes_per_noise"));
    tc.protocol.budget = static_cast<int>(cfg.get_int("attack.budget"));
    tc.protocol.beta = cfg.get_double("attack.beta");
    tc.protocol.noise_base = noise_base_from(cfg, EnvKind::collector);  // grid set per row
    tc.pepg.population = static_cast<int>(
        cfg.get_int(quick ? "quick.pepg.population" : "pepg.population"));
    tc.pepg.generations = static_cast<int>(
        cfg.get_int(quick ? "quick.pepg.generations" : "pepg.generations"));
    tc.checkpoint_dir = ckpt_dir.empty() ? cfg.get("out.checkpoints") : ckpt_dir;
    tc.train_missing = quick;
    tc.train.total_steps = cfg.get_int("quick.train.steps");
    tc.train.a3c.n_workers = static_cast<int>(cfg.get_int("a3c.workers"));
    tc.seed = cfg.get_u64("seed");

    fs::create_directories(tc.checkpoint_dir);
    ResultsTable t = build_table(tc);

    std::string path = out_path.empty() ? cfg.get("out.results") : out_path;
    write_text(path, render_results_csv(t));
    std::cout << render_markdown(t);
    std::cout << "results " << path << "\n";
    if (table_has_errors(t)) {
        int bad = 0;
        for (const auto& row : t.cells)
            for (const TableCell& cell : row) bad += cell.ok ? 0 : 1;
        std::cerr << bad << " cell(s) failed; see the message column\n";
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// regret-check
// ---------------------------------------------------------------------------

int cmd_regret_check(int d, int T, int trials, std::uint64_t seed) {
    double eta = hedge_eta(d, T);
    double bound = hedge_bound(d, T);
    double worst = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        RngStream rng(derive_seed(seed, static_cast<std::uint64_t>(trial)));
        ExpertWeights w(d);
        RegretLedger ledger;
        ledger.d = d;
        ledger.eta = eta;
        std::vector<double> losses(static_cast<std::size_t>(d));
        for (int t = 0; t < T; ++t) {
            for (double& l : losses) l = rng_uniform(rng);
            ledger.record(w, losses, losses);
            hedge_update(w, losses, eta);
        }
        worst = std::max(worst, empirical_regret(ledger));
    }
    std::printf("experts d = %d, rounds T = %d, trials = %d\n", d, T, trials);
    std::printf("eta = sqrt(2 ln(d) / T) = %.6f\n", eta);
    std::printf("bound = sqrt(2 ln(d) T) = %.4f\n", bound);
    std::printf("max observed regret = %.4f\n", worst);
    if (worst <= bound) {
        std::printf("PASS: regret within the bound in all %d trials\n", trials);
        return 0;
    }
    std::printf("FAIL: bound exceeded\n");
    return 1;
}

// ---------------------------------------------------------------------------
// curves
// ---------------------------------------------------------------------------

int cmd_curves(const Config& cfg, const std::string& out_path) {
    EnvKind env = parse_env_kind(cfg.get("env.kind"));
    AlgoKind algo = parse_algo_kind(cfg.get("victim.algo"));
    std::uint64_t seed = cfg.get_u64("seed");

    VictimTrainConfig tc;
    tc.total_steps = cfg.get_int("train.steps");
    tc.a3c.n_workers = static_cast<int>(cfg.get_int("a3c.workers"));
    std::cout << "training " << algo_kind_name(algo) << " on " << env_kind_name(env) << " for "
              << tc.total_steps << " steps\n";
    TrainResult tr = train_victim(env_factory(env), env, algo, tc, seed);
    if (tr.episode_returns.empty()) throw std::runtime_error("no completed training episodes");
    const std::size_t episodes = tr.episode_returns.size();

    AttackSettings base;
    base.budget = static_cast<int>(cfg.get_int("attack.budget"));
    base.beta = cfg.get_double("attack.beta");
    base.noise = noise_base_from(cfg, env);
    base.noise.kind = parse_noise_kind(cfg.get("noise.kind"));

    EnvFactory make = env_factory(env);
    const Victim& victim = *tr.agent;

    PepgConfig pcfg;
    pcfg.population = static_cast<int>(cfg.get_int("pepg.population"));
    pcfg.generations = static_cast<int>(cfg.get_int("pepg.generations"));
    pcfg.budget = base.budget;
    std::cout << "training evolutionary attacker: population " << pcfg.population
              << ", generations " << pcfg.generations << "\n";
    PepgTrainResult trained = pepg_asa_train(
        make, [&victim](const StateVec& s) { return victim.act(s, nullptr); },
        make_noise_applier(base.noise, victim, seed), pcfg, derive_seed(seed, 0xa77));

    RewardCurves curves;
    curves.conditions = {"baseline", "random", "wma", "pepg", "lin"};
    curves.series.push_back(tr.episode_returns);  // training curve passes through
    auto env_inst = make();
    for (TimerKind timer : {TimerKind::random, TimerKind::wma, TimerKind::pepg, TimerKind::lin}) {
        AttackSettings s = base;
        s.timer = timer;
        std::vector<double> series;
        for (std::size_t e = 0; e < episodes; ++e) {
            EpisodeTrace ep = run_attacked_episode(*env_inst, victim, s, &trained.policy,
                                                   derive_seed(seed, 0x900 + e));
            series.push_back(episode_return(ep));
        }
        curves.series.push_back(std::move(series));
    }

    std::string path = out_path.empty() ? cfg.get("out.curves") : out_path;
    export_reward_curves(curves, path);
    std::cout << "curves " << path << " (" << episodes << " episodes x "
              << curves.conditions.size() << " conditions)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

int cmd_selftest(std::uint64_t seed) {
    int failures = 0;
    auto report = [&](const char* name, bool ok, const std::string& detail = "") {
        std::cout << (ok ? "PASS " : "FAIL ") << name;
        if (!ok && !detail.empty()) std::cout << " (" << detail << ")";
        std::cout << "\n";
        failures += ok ? 0 : 1;
    };

    {  // regret bound on random losses
        const int d = 4, T = 1000, trials = 50;
        double eta = hedge_eta(d, T), bound = hedge_bound(d, T), worst = 0.0;
        for (int trial = 0; trial < trials; ++trial) {
            RngStream rng(derive_seed(seed, 0x100 + static_cast<std::uint64_t>(trial)));
            ExpertWeights w(d);
            RegretLedger ledger;
            ledger.d = d;
            ledger.eta = eta;
            std::vector<double> losses(d);
            for (int t = 0; t < T; ++t) {
                for (double& l : losses) l = rng_uniform(rng);
                ledger.record(w, losses, losses);
                hedge_update(w, losses, eta);
            }
            worst = std::max(worst, empirical_regret(ledger));
        }
        report("regret bound (d=4, T=1000, 50 trials)", worst <= bound);
    }

    {  // attack potential vs an independent direct evaluation
        RngStream rng(derive_seed(seed, 0x200));
        double worst = 0.0;
        for (int trial = 0; trial < 1000; ++trial) {
            int d = 2 + rng_below(rng, 7);
            ExpertWeights w(d);
            std::vector<double> q(static_cast<std::size_t>(d));
            for (int i = 0; i < d; ++i) {
                w.raw[static_cast<std::size_t>(i)] = 0.05 + rng_uniform(rng);
                q[static_cast<std::size_t>(i)] = 8.0 * rng_uniform(rng) - 4.0;
            }
            double z = 0.0;
            double hi = -std::numeric_limits<double>::infinity();
            double lo = std::numeric_limits<double>::infinity();
            for (int i = 0; i < d; ++i) {
                double u = w.raw[static_cast<std::size_t>(i)] *
                           std::exp(-q[static_cast<std::size_t>(i)]);
                z += u;
                hi = std::max(hi, u);
                lo = std::min(lo, u);
            }
            worst = std::max(worst, std::fabs(potential_energy_c(w, q).c - (hi - lo) / z));
        }
        report("attack potential matches direct formula (1000 cases)", worst <= 1e-10);
    }

    {  // noise invariants
        RngStream rng(derive_seed(seed, 0x300));
        StateVec s(64);
        for (double& x : s) x = 4.0 * rng_uniform(rng) - 2.0;
        bool ok = true;
        for (double x : zero_out(s)) ok = ok && x == 0.0;
        report("zero-out produces the exact zero vector", ok);

        GaussianKernel k = GaussianKernel::make(5, 1.0);
        double sum = 0.0;
        for (double t : k.taps) sum += t;
        report("gaussian kernel sums to 1", std::fabs(sum - 1.0) <= 1e-9);

        StateVec flat(64, 0.7);
        ok = true;
        for (double x : gaussian_fusion(flat, k)) ok = ok && std::fabs(x - 0.7) <= 1e-12;
        StateVec grid(16, 0.7);
        for (double x : gaussian_fusion_grid(grid, 4, k)) ok = ok && std::fabs(x - 0.7) <= 1e-12;
        report("smoothing preserves constant observations", ok);

        RngStream sh(derive_seed(seed, 0x301));
        StateVec mixed = shuffle_state(s, sh);
        std::vector<double> a = s, b = mixed;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        report("shuffle preserves the value multiset", a == b);

        std::vector<double> g(s.size());
        for (double& x : g) x = rng_uniform(rng) - 0.5;
        g[0] = 0.0;  // sign(0) must add nothing
        StateVec adv = fgsm_perturb(s, g, 0.3);
        ok = true;
        for (std::size_t i = 0; i < s.size(); ++i)
            ok = ok && (adv[i] == s[i] + 0.3 || adv[i] == s[i] - 0.3 || adv[i] == s[i]);
        ok = ok && adv[0] == s[0];
        report("signed-gradient components are in {-eps, 0, +eps}", ok);
    }

    {  // timer budget behavior
        RandomTimer t(40, 200, derive_seed(seed, 0x400));
        bool ok = t.planned_attacks() == 40;
        WmaConfig wcfg;
        wcfg.beta = 0.01;
        wcfg.budget = 5;
        WmaTimer wma(4, 100, wcfg);
        RngStream rng(derive_seed(seed, 0x401));
        int fired = 0;
        for (int f = 0; f < 100; ++f) {
            std::vector<double> prefs(4);
            for (double& p : prefs) p = 2.0 * rng_uniform(rng) - 1.0;
            fired += wma.decide(prefs, false).attack ? 1 : 0;
        }
        ok = ok && fired == 5;
        report("timers respect the attack budget", ok);
    }

    {  // evaluation determinism
        DqnAgent agent(10, ActionGrid::for_env(EnvKind::reacher), DqnConfig{.hidden = {8}},
                       derive_seed(seed, 0x500));
        EnvFactory make = env_factory(EnvKind::reacher);
        CellProtocol proto;
        proto.episodes_per_noise = 2;
        proto.budget = 10;
        CellResult a = evaluate_cell(make, agent, TimerKind::wma, proto, nullptr, seed);
        CellResult b = evaluate_cell(make, agent, TimerKind::wma, proto, nullptr, seed);
        report("repeated evaluation is bit-identical", a == b);
    }

    std::cout << (failures == 0 ? "selftest passed" : "selftest FAILED") << "\n";
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"strategically timed observation attacks on small control victims"};
    app.require_subcommand(1);
    int rc = 0;
    auto guarded = [&rc](auto fn) {
        return [&rc, fn]() {
            try {
                rc = fn();
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << "\n";
                rc = 1;
            }
        };
    };

    Common train_common;
    std::string train_out, train_curve, train_env, train_algo, train_steps;
    auto* train = app.add_subcommand("train", "train a victim and save its checkpoint");
    add_common(train, train_common);
    train->add_option("--env", train_env, "reacher | collector | car");
    train->add_option("--algo", train_algo, "dqn | a3c");
    train->add_option("--steps", train_steps, "environment steps");
    train->add_option("--out", train_out, "checkpoint path (default under out.checkpoints)");
    train->add_option("--curve", train_curve, "also export the training curve CSV here");
    train->callback(guarded([&]() {
        Config cfg = make_config(train_common);
        apply_override(cfg, "env.kind", train_env);
        apply_override(cfg, "victim.algo", train_algo);
        apply_override(cfg, "train.steps", train_steps);
        return cmd_train(cfg, train_out, train_curve);
    }));

    Common attack_common;
    std::string atk_env, atk_algo, atk_timer, atk_noise, atk_budget, atk_beta, atk_eps,
        atk_episodes, atk_ckpt, atk_traces;
    auto* attack = app.add_subcommand("attack", "evaluate one attack cell and print its result");
    add_common(attack, attack_common);
    attack->add_option("--env", atk_env, "reacher | collector | car");
    attack->add_option("--algo", atk_algo, "dqn | a3c");
    attack->add_option("--timer", atk_timer, "none | random | wma | pepg | lin");
    attack->add_option("--noise", atk_noise, "single noise kind (default: the noise.kinds list)");
    attack->add_option("--budget", atk_budget, "max attacked frames per episode");
    attack->add_option("--beta", atk_beta, "potential threshold");
    attack->add_option("--epsilon", atk_eps, "signed-gradient step");
    attack->add_option("--episodes", atk_episodes, "episodes per noise kind");
    attack->add_option("--ckpt", atk_ckpt, "victim checkpoint path");
    attack->add_option("--traces", atk_traces, "directory for per-episode trace CSVs");
    attack->callback(guarded([&]() {
        Config cfg = make_config(attack_common);
        apply_override(cfg, "env.kind", atk_env);
        apply_override(cfg, "victim.algo", atk_algo);
        apply_override(cfg, "timer.kind", atk_timer);
        apply_override(cfg, "attack.budget", atk_budget);
        apply_override(cfg, "attack.beta", atk_beta);
        apply_override(cfg, "noise.epsilon", atk_eps);
        apply_override(cfg, "eval.episodes_per_noise", atk_episodes);
        return cmd_attack(cfg, atk_ckpt, atk_noise, atk_traces);
    }));

    Common table_common;
    bool quick = false;
    std::string table_out, table_dir, table_episodes, table_budget;
    auto* table = app.add_subcommand("table", "evaluate the full (env x victim) x timer matrix");
    add_common(table, table_common);
    table->add_flag("--quick", quick, "reduced budgets; trains small victims when missing");
    table->add_option("--out", table_out, "results CSV path");
    table->add_option("--ckpt-dir", table_dir, "checkpoint directory");
    table->add_option("--episodes", table_episodes, "episodes per noise kind");
    table->add_option("--budget", table_budget, "max attacked frames per episode");
    table->callback(guarded([&]() {
        Config cfg = make_config(table_common);
        apply_override(cfg, "attack.budget", table_budget);
        if (!table_episodes.empty()) {
            cfg.set("eval.episodes_per_noise", table_episodes);
            cfg.set("quick.episodes_per_noise", table_episodes);
        }
        return cmd_table(cfg, quick, table_out, table_dir);
    }));

    Common regret_common;
    int rg_d = 4, rg_T = 1000, rg_trials = 50;
    auto* regret = app.add_subcommand("regret-check",
                                      "verify the multiplicative-weights regret bound");
    add_common(regret, regret_common);
    regret->add_option("--d", rg_d, "number of experts")->check(CLI::Range(2, 1 << 20));
    regret->add_option("--T", rg_T, "rounds per trial")->check(CLI::Range(1, 1 << 24));
    regret->add_option("--trials", rg_trials, "number of trials")->check(CLI::Range(1, 1 << 20));
    regret->callback(guarded([&]() {
        Config cfg = make_config(regret_common);
        return cmd_regret_check(rg_d, rg_T, rg_trials, cfg.get_u64("seed"));
    }));

    Common curves_common;
    std::string cur_env, cur_algo, cur_steps, cur_noise, cur_out;
    auto* curves = app.add_subcommand(
        "curves", "train a victim and export per-episode returns for every timer condition");
    add_common(curves, curves_common);
    curves->add_option("--env", cur_env, "reacher | collector | car");
    curves->add_option("--algo", cur_algo, "dqn | a3c");
    curves->add_option("--steps", cur_steps, "environment steps for training");
    curves->add_option("--noise", cur_noise, "noise kind for the attacked conditions");
    curves->add_option("--out", cur_out, "curves CSV path");
    curves->callback(guarded([&]() {
        Config cfg = make_config(curves_common);
        apply_override(cfg, "env.kind", cur_env);
        apply_override(cfg, "victim.algo", cur_algo);
        apply_override(cfg, "train.steps", cur_steps);
        apply_override(cfg, "noise.kind", cur_noise);
        return cmd_curves(cfg, cur_out);
    }));

    Common selftest_common;
    auto* selftest = app.add_subcommand("selftest", "run the fast invariant suite");
    add_common(selftest, selftest_common);
    selftest->callback(guarded([&]() {
        Config cfg = make_config(selftest_common);
        return cmd_selftest(cfg.get_u64("seed"));
    }));

    Common config_common;
    bool show_defaults = false;
    auto* config_cmd = app.add_subcommand("config", "print the configuration");
    add_common(config_cmd, config_common);
    config_cmd->add_flag("--defaults", show_defaults, "print the built-in defaults");
    config_cmd->callback(guarded([&]() {
        if (show_defaults) {
            std::cout << Config::defaults().render();
        } else {
            std::cout << make_config(config_common).render();
        }
        return 0;
    }));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    return rc;
}
