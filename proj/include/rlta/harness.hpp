// Experiment orchestration: composes a frozen victim, an attack timer and a
// noise pattern into seeded episodes, aggregates them into table cells, and
// renders the results matrix as CSV and markdown.
//
// Composition rule per frame: the timer inspects the TRUE observation (and
// the victim's preferences for the white-box timers); only the victim's input
// is replaced by the noised observation on attacked frames. Victims act
// greedily throughout (no exploration, no learning).
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rlta/attackers.hpp"
#include "rlta/core.hpp"
#include "rlta/envs.hpp"
#include "rlta/noise.hpp"
#include "rlta/victims.hpp"

namespace rlta {

// ---------------------------------------------------------------------------
// Timer and env naming
// ---------------------------------------------------------------------------

enum class TimerKind { none, random, wma, pepg, lin };

inline const char* timer_kind_name(TimerKind k) {
    switch (k) {
        case TimerKind::none: return "none";
        case TimerKind::random: return "random";
        case TimerKind::wma: return "wma";
        case TimerKind::pepg: return "pepg";
        case TimerKind::lin: return "lin";
    }
    return "?";
}

inline TimerKind parse_timer_kind(const std::string& name) {
    for (TimerKind k : {TimerKind::none, TimerKind::random, TimerKind::wma, TimerKind::pepg,
                        TimerKind::lin})
        if (name == timer_kind_name(k)) return k;
    throw std::invalid_argument("unknown timer: " + name);
}

inline EnvKind parse_env_kind(const std::string& name) {
    for (EnvKind k : {EnvKind::reacher, EnvKind::collector, EnvKind::car})
        if (name == env_kind_name(k)) return k;
    throw std::invalid_argument("unknown env: " + name);
}

/// Observations that are square grids get smoothed two-dimensionally.
inline int obs_grid_side(EnvKind kind) { return kind == EnvKind::car ? CarConfig{}.grid : 0; }

// ---------------------------------------------------------------------------
// One attacked episode
// ---------------------------------------------------------------------------

struct AttackSettings {
    TimerKind timer = TimerKind::none;
    int budget = 40;
    double beta = 0.3;
    NoiseConfig noise;
};

/// What the victim sees on an attacked frame. The rng feeds only the shuffle
/// kind; fgsm queries the victim's input gradient at the true observation.
inline StateVec apply_noise(const NoiseConfig& cfg, const Victim& victim, const StateVec& state,
                            RngStream& noise_rng) {
    switch (cfg.kind) {
        case NoiseKind::zero_out: return zero_out(state);
        case NoiseKind::gaussian_fusion: {
            GaussianKernel k = GaussianKernel::make(cfg.kernel_size, cfg.sigma);
            if (cfg.grid_side > 0) return gaussian_fusion_grid(state, cfg.grid_side, k);
            return gaussian_fusion(state, k);
        }
        case NoiseKind::fgsm: return fgsm_attack(victim, state, cfg.epsilon);
        case NoiseKind::shuffle: return shuffle_state(state, noise_rng);
    }
    throw std::invalid_argument("apply_noise: unknown noise kind");
}

/// Rolls one seeded episode of the frozen victim under the given timer and
/// noise. The wma timer re-initializes its weights here (fresh per episode)
/// and hedge-updates on every frame from the true-state preferences; the
/// other timers share one budget counter. `pepg` must be a trained policy
/// when the timer is pepg.
inline EpisodeTrace run_attacked_episode(Env& env, const Victim& victim, const AttackSettings& s,
                                         const PepgPolicy* pepg, std::uint64_t seed) {
    s.noise.validate();
    if (s.budget < 0) throw std::invalid_argument("run_attacked_episode: negative budget");
    if (s.timer == TimerKind::pepg && pepg == nullptr)
        throw std::invalid_argument("run_attacked_episode: pepg timer needs a trained policy");

    const EnvContract& contract = env.contract();
    AttackBudget budget;
    budget.cap = s.budget;
    std::optional<WmaTimer> wma;
    std::optional<RandomTimer> rnd;
    if (s.timer == TimerKind::wma)
        wma.emplace(victim.expert_count(), contract.max_steps, WmaConfig{s.beta, s.budget});
    if (s.timer == TimerKind::random)
        rnd.emplace(s.budget, contract.max_steps, derive_seed(seed, 0x71e));
    RngStream noise_rng(derive_seed(seed, 0x5f));

    EpisodeTrace trace;
    trace.seed = seed;
    StateVec state = env.reset(seed);
    bool done = false;
    int frame = 0;
    while (!done) {
        bool attack = false;
        switch (s.timer) {
            case TimerKind::none: break;
            case TimerKind::random: attack = rnd->decide(frame, budget).attack; break;
            case TimerKind::lin:
                attack = lin_decide(victim.preferences(state), s.beta, budget).attack;
                break;
            case TimerKind::wma:
                attack = wma->decide(victim.preferences(state), victim.policy_based()).attack;
                break;
            case TimerKind::pepg: attack = pepg->decide(state, budget).attack; break;
        }
        StateVec seen = attack ? apply_noise(s.noise, victim, state, noise_rng) : state;
        ActionValue action = victim.act(seen, nullptr);
        StepResult r = env.step(action);
        if (attack) trace.attacked_frames.push_back(frame);
        trace.transitions.push_back({std::move(state), action, r.reward, r.observation, r.done});
        state = std::move(r.observation);
        done = r.done;
        frame += 1;
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Cells
// ---------------------------------------------------------------------------

struct CellProtocol {
    std::vector<NoiseKind> noises = {NoiseKind::zero_out, NoiseKind::gaussian_fusion,
                                     NoiseKind::fgsm};
    int episodes_per_noise = 10;
    NoiseConfig noise_base;  // kernel/sigma/epsilon/grid template; kind set per batch
    int budget = 40;
    double beta = 0.3;

    void validate() const {
        if (episodes_per_noise < 1)
            throw std::invalid_argument("CellProtocol: episodes_per_noise >= 1");
        if (noises.empty()) throw std::invalid_argument("CellProtocol: need at least one noise");
    }
};

struct CellResult {
    std::vector<double> returns;    // noises * episodes_per_noise entries
    std::vector<int> attack_counts;
    std::vector<int> lengths;
    double aggregate = 0.0;  // mean of per-episode returns
    double stddev = 0.0;     // population std of per-episode returns

    bool operator==(const CellResult& o) const {
        return returns == o.returns && attack_counts == o.attack_counts && lengths == o.lengths &&
               aggregate == o.aggregate && stddev == o.stddev;
    }
};

/// Runs the cell protocol for one (victim, timer) pair. Episode seeds depend
/// only on the cell seed and the episode index, so every timer column of a
/// row faces the same episode draws. A baseline (timer none) cell runs the
/// same number of unattacked episodes on the same seeds, ignoring which noise
/// kinds are listed. Full traces are collected when `traces` is non-null.
inline CellResult evaluate_cell(const EnvFactory& make, const Victim& victim, TimerKind timer,
                                const CellProtocol& proto, const PepgPolicy* pepg,
                                std::uint64_t cell_seed,
                                std::vector<EpisodeTrace>* traces = nullptr) {
    proto.validate();
    CellResult out;
    auto env = make();
    auto run_one = [&](NoiseKind kind, bool attacked, int idx) {
        AttackSettings s;
        s.timer = attacked ? timer : TimerKind::none;
        s.budget = proto.budget;
        s.beta = proto.beta;
        s.noise = proto.noise_base;
        s.noise.kind = kind;
        EpisodeTrace tr = run_attacked_episode(*env, victim, s, pepg,
                                               derive_seed(cell_seed, static_cast<std::uint64_t>(idx)));
        out.returns.push_back(episode_return(tr));
        out.attack_counts.push_back(static_cast<int>(tr.attacked_frames.size()));
        out.lengths.push_back(static_cast<int>(tr.transitions.size()));
        if (traces != nullptr) traces->push_back(std::move(tr));
    };

    const int per = proto.episodes_per_noise;
    const int total = static_cast<int>(proto.noises.size()) * per;
    if (timer == TimerKind::none) {
        for (int idx = 0; idx < total; ++idx) run_one(proto.noises[0], false, idx);
    } else {
        for (std::size_t ni = 0; ni < proto.noises.size(); ++ni)
            for (int e = 0; e < per; ++e)
                run_one(proto.noises[ni], true, static_cast<int>(ni) * per + e);
    }

    double sum = 0.0;
    for (double r : out.returns) sum += r;
    out.aggregate = sum / static_cast<double>(out.returns.size());
    double var = 0.0;
    for (double r : out.returns) var += (r - out.aggregate) * (r - out.aggregate);
    out.stddev = std::sqrt(var / static_cast<double>(out.returns.size()));
    return out;
}

// ---------------------------------------------------------------------------
// Results table
// ---------------------------------------------------------------------------

struct TableCell {
    bool ok = false;
    std::string message;  // kept free of commas and newlines
    CellResult result;

    bool operator==(const TableCell& o) const {
        return ok == o.ok && message == o.message && result == o.result;
    }
};

inline void mark_error(TableCell& cell, const std::string& message) {
    cell.ok = false;
    cell.result = {};
    cell.message = message;
    for (char& c : cell.message)
        if (c == ',' || c == '\n' || c == '\r') c = ' ';
}

inline const std::vector<std::string>& table_columns() {
    static const std::vector<std::string> cols = {"baseline", "random", "wma", "pepg", "lin"};
    return cols;
}

inline TimerKind column_timer(const std::string& column) {
    if (column == "baseline") return TimerKind::none;
    return parse_timer_kind(column);
}

struct ResultsTable {
    std::vector<std::pair<std::string, std::string>> rows;  // (env, victim)
    std::vector<std::string> columns = table_columns();
    std::vector<std::vector<TableCell>> cells;  // [row][column]

    bool operator==(const ResultsTable& o) const {
        return rows == o.rows && columns == o.columns && cells == o.cells;
    }
};

inline bool table_has_errors(const ResultsTable& t) {
    for (const auto& row : t.cells)
        for (const TableCell& c : row)
            if (!c.ok) return true;
    return false;
}

namespace detail {

template <typename T, typename Fmt>
std::string join_semi(const std::vector<T>& v, Fmt fmt) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ';';
        out += fmt(v[i]);
    }
    return out;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) out.push_back(item);
    if (!s.empty() && s.back() == sep) out.push_back("");
    return out;
}

inline double parse_double_field(const std::string& s) {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("results csv: bad number: " + s);
    return v;
}

inline int parse_int_field(const std::string& s) {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("results csv: bad integer: " + s);
    return v;
}

}  // namespace detail

inline constexpr const char* kResultsCsvHeader =
    "env,victim,timer,status,aggregate,stddev,returns,attack_counts,lengths,message";

/// Full-precision CSV: one line per cell, numeric lists ';'-joined. The
/// rendering round-trips exactly through parse_results_csv.
inline std::string render_results_csv(const ResultsTable& t) {
    std::ostringstream os;
    os << kResultsCsvHeader << "\n";
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            const TableCell& cell = t.cells.at(r).at(c);
            os << t.rows[r].first << ',' << t.rows[r].second << ',' << t.columns[c] << ','
               << (cell.ok ? "ok" : "error") << ',' << fmt_double(cell.result.aggregate) << ','
               << fmt_double(cell.result.stddev) << ','
               << detail::join_semi(cell.result.returns, fmt_double) << ','
               << detail::join_semi(cell.result.attack_counts,
                                    [](int v) { return std::to_string(v); })
               << ','
               << detail::join_semi(cell.result.lengths, [](int v) { return std::to_string(v); })
               << ',' << cell.message << "\n";
        }
    }
    return os.str();
}

inline ResultsTable parse_results_csv(const std::string& csv) {
    std::istringstream is(csv);
    std::string line;
    if (!std::getline(is, line) || line != kResultsCsvHeader)
        throw std::invalid_argument("results csv: bad header");
    ResultsTable t;
    std::size_t col = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f = detail::split(line, ',');
        if (f.size() != 10)
            throw std::invalid_argument("results csv: expected 10 fields, got " +
                                        std::to_string(f.size()));
        std::pair<std::string, std::string> key{f[0], f[1]};
        if (t.rows.empty() || col == t.columns.size()) {
            t.rows.push_back(key);
            t.cells.emplace_back();
            col = 0;
        }
        if (key != t.rows.back())
            throw std::invalid_argument("results csv: row key changed mid-row at " + f[0] + "/" +
                                        f[1]);
        if (f[2] != t.columns.at(col))
            throw std::invalid_argument("results csv: expected column " + t.columns.at(col) +
                                        ", got " + f[2]);
        TableCell cell;
        if (f[3] == "ok") {
            cell.ok = true;
        } else if (f[3] == "error") {
            cell.ok = false;
        } else {
            throw std::invalid_argument("results csv: bad status: " + f[3]);
        }
        cell.result.aggregate = detail::parse_double_field(f[4]);
        cell.result.stddev = detail::parse_double_field(f[5]);
        if (!f[6].empty())
            for (const std::string& s : detail::split(f[6], ';'))
                cell.result.returns.push_back(detail::parse_double_field(s));
        if (!f[7].empty())
            for (const std::string& s : detail::split(f[7], ';'))
                cell.result.attack_counts.push_back(detail::parse_int_field(s));
        if (!f[8].empty())
            for (const std::string& s : detail::split(f[8], ';'))
                cell.result.lengths.push_back(detail::parse_int_field(s));
        cell.message = f[9];
        t.cells.back().push_back(std::move(cell));
        col += 1;
    }
    if (!t.rows.empty() && col != t.columns.size())
        throw std::invalid_argument("results csv: truncated final row");
    return t;
}

namespace detail {

// Display width in code points (the cell text is ASCII plus the 2-byte +-
// sign), so padding aligns the markdown source.
inline std::size_t display_width(const std::string& s) {
    std::size_t w = 0;
    for (char c : s)
        if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) w += 1;
    return w;
}

inline std::string pad_to(const std::string& s, std::size_t w) {
    std::string out = s;
    while (display_width(out) < w) out += ' ';
    return out;
}

}  // namespace detail

inline std::string format_cell_markdown(const TableCell& cell) {
    if (!cell.ok) return "ERR";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f±%.1f", cell.result.aggregate, cell.result.stddev);
    return buf;
}

/// Aligned markdown table, cells as mean+-std with one decimal.
inline std::string render_markdown(const ResultsTable& t) {
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header = {"env", "victim"};
    header.insert(header.end(), t.columns.begin(), t.columns.end());
    grid.push_back(header);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        std::vector<std::string> row = {t.rows[r].first, t.rows[r].second};
        for (const TableCell& cell : t.cells.at(r)) row.push_back(format_cell_markdown(cell));
        grid.push_back(std::move(row));
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : grid)
        for (std::size_t c = 0; c < row.size(); ++c)
            width[c] = std::max(width[c], detail::display_width(row[c]));
    std::ostringstream os;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        os << "|";
        for (std::size_t c = 0; c < grid[g].size(); ++c)
            os << ' ' << detail::pad_to(grid[g][c], width[c]) << " |";
        os << "\n";
        if (g == 0) {
            os << "|";
            for (std::size_t c = 0; c < header.size(); ++c)
                os << ' ' << std::string(width[c], '-') << " |";
            os << "\n";
        }
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Reward curves
// ---------------------------------------------------------------------------

struct RewardCurves {
    std::vector<std::string> conditions;
    std::vector<std::vector<double>> series;  // series[condition][episode]
};

inline std::string render_curves_csv(const RewardCurves& c) {
    if (c.conditions.empty() || c.conditions.size() != c.series.size())
        throw std::invalid_argument("reward curves: conditions/series mismatch");
    const std::size_t episodes = c.series[0].size();
    if (episodes == 0) throw std::invalid_argument("reward curves: empty series");
    for (const auto& s : c.series)
        if (s.size() != episodes)
            throw std::invalid_argument("reward curves: unequal series lengths");
    std::ostringstream os;
    os << "episode";
    for (const std::string& name : c.conditions) os << ',' << name;
    os << "\n";
    for (std::size_t e = 0; e < episodes; ++e) {
        os << e;
        for (const auto& s : c.series) os << ',' << fmt_double(s[e]);
        os << "\n";
    }
    return os.str();
}

inline void export_reward_curves(const RewardCurves& c, const std::string& path) {
    std::string body = render_curves_csv(c);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << body;
    os.flush();
    if (!os) throw std::runtime_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Table building
// ---------------------------------------------------------------------------

struct TableConfig {
    std::vector<EnvKind> envs = {EnvKind::reacher, EnvKind::collector, EnvKind::car};
    std::vector<AlgoKind> algos = {AlgoKind::dqn, AlgoKind::a3c};
    CellProtocol protocol;
    PepgConfig pepg;  // budget is overridden with protocol.budget
    std::string checkpoint_dir = "checkpoints";
    bool train_missing = false;  // quick mode: train small victims on the fly
    VictimTrainConfig train;     // used only when train_missing
    std::uint64_t seed = 1;
};

inline std::string checkpoint_path(const std::string& dir, EnvKind env, AlgoKind algo) {
    return dir + "/" + env_kind_name(env) + "_" + algo_kind_name(algo) + ".ckpt";
}

/// Noise transform for attacker training; shuffle carries its own stream.
inline NoiseApplier make_noise_applier(NoiseConfig ncfg, const Victim& victim,
                                       std::uint64_t seed) {
    ncfg.validate();
    if (ncfg.kind == NoiseKind::shuffle) {
        auto rng = std::make_shared<RngStream>(derive_seed(seed, 0x11a));
        return [rng](const StateVec& s) { return shuffle_state(s, *rng); };
    }
    return [ncfg, &victim](const StateVec& s) {
        RngStream unused(0);
        return apply_noise(ncfg, victim, s, unused);
    };
}

/// Loads the row's victim, or (in quick mode) trains a small one and saves it.
inline std::unique_ptr<Victim> obtain_victim(const TableConfig& cfg, const EnvFactory& make,
                                             EnvKind env, AlgoKind algo, int row_index) {
    std::string path = checkpoint_path(cfg.checkpoint_dir, env, algo);
    {
        std::ifstream is(path);
        if (is) return load_victim(is);
    }
    if (!cfg.train_missing) throw std::runtime_error("missing checkpoint: " + path);
    TrainResult tr = train_victim(make, env, algo, cfg.train,
                                  derive_seed(cfg.seed, 0x600 + static_cast<std::uint64_t>(row_index)));
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    tr.agent->save(os);
    os.flush();
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
    return std::move(tr.agent);
}

/// Evaluates the full (env x victim) x timer matrix. Rows are independent:
/// each derives its seeds from (master seed, row index) alone, so any
/// evaluation order or parallel schedule produces the same table. Failures
/// mark the affected cells instead of aborting the run.
inline ResultsTable build_table(const TableConfig& cfg) {
    ResultsTable t;
    int r = 0;
    for (EnvKind env : cfg.envs) {
        for (AlgoKind algo : cfg.algos) {
            t.rows.emplace_back(env_kind_name(env), algo_kind_name(algo));
            std::vector<TableCell> row(t.columns.size());
            std::uint64_t row_seed = derive_seed(cfg.seed, 0x720 + static_cast<std::uint64_t>(r));
            EnvFactory make = env_factory(env);

            std::unique_ptr<Victim> victim;
            std::string victim_error;
            try {
                victim = obtain_victim(cfg, make, env, algo, r);
            } catch (const std::exception& e) {
                victim_error = e.what();
            }

            if (!victim) {
                for (TableCell& cell : row) mark_error(cell, victim_error);
            } else {
                CellProtocol proto = cfg.protocol;
                proto.noise_base.grid_side = obs_grid_side(env);

                std::optional<PepgPolicy> pepg_policy;
                std::string pepg_error;
                for (std::size_t c = 0; c < t.columns.size(); ++c) {
                    TimerKind timer = column_timer(t.columns[c]);
                    try {
                        if (timer == TimerKind::pepg && !pepg_policy) {
                            if (!pepg_error.empty()) throw std::runtime_error(pepg_error);
                            PepgConfig pcfg = cfg.pepg;
                            pcfg.budget = proto.budget;
                            NoiseConfig train_noise = proto.noise_base;
                            train_noise.kind = proto.noises.at(0);
                            const Victim& v = *victim;
                            PepgTrainResult trained = pepg_asa_train(
                                make, [&v](const StateVec& s) { return v.act(s, nullptr); },
                                make_noise_applier(train_noise, v, row_seed), pcfg,
                                derive_seed(row_seed, 0xa77));
                            pepg_policy = std::move(trained.policy);
                        }
                        row[c].result = evaluate_cell(
                            make, *victim, timer, proto,
                            pepg_policy ? &*pepg_policy : nullptr, row_seed);
                        row[c].ok = true;
                    } catch (const std::exception& e) {
                        if (timer == TimerKind::pepg && pepg_error.empty()) pepg_error = e.what();
                        mark_error(row[c], e.what());
                    }
                }
            }
            t.cells.push_back(std::move(row));
            r += 1;
        }
    }
    return t;
}

}  // namespace rlta
