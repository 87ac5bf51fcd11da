// Desk-scale control/navigation environments behind one contract:
// reset(seed) -> observation, step(action) -> (observation, reward, done).
//
// Three tasks: a two-link reacher with torque control, an item collector
// with ray sensors, and a lane-keeping car with a binary occupancy grid.
// All physics are small difference equations; constants live in the
// per-environment config structs and are exposed as config keys.
#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rlta/core.hpp"

namespace rlta {

struct StepResult {
    StateVec observation;
    double reward = 0.0;
    bool done = false;
};

struct ActionSpace {
    enum class Kind { discrete, continuous };
    Kind kind = Kind::discrete;
    int size = 0;  // action count d, or continuous dimension k
};

struct EnvContract {
    int observation_dim = 0;
    ActionSpace action_space;
    int max_steps = 0;
};

class Env {
  public:
    virtual ~Env() = default;
    virtual const EnvContract& contract() const = 0;
    virtual StateVec reset(std::uint64_t seed) = 0;
    virtual StepResult step(const ActionValue& action) = 0;

  protected:
    void require_alive(bool alive) const {
        if (!alive) throw std::logic_error("Env: step() after done; call reset() first");
    }
};

// ---------------------------------------------------------------------------
// Reacher: two unit links, torque control, +0.1 per step with the tip in the
// goal circle. Observation (10): cos/sin of both joints, both angular
// velocities, target x/y, tip x/y.
// ---------------------------------------------------------------------------

struct ReacherConfig {
    int max_steps = 200;
    double dt = 0.1;
    double goal_radius = 0.15;
    // test hook: pin the start configuration instead of sampling it
    std::optional<std::array<double, 4>> fixed_init;  // theta1, theta2, target_x, target_y
};

class ReacherEnv final : public Env {
  public:
    explicit ReacherEnv(ReacherConfig cfg = {}) : cfg_(cfg) {
        contract_.observation_dim = 10;
        contract_.action_space = {ActionSpace::Kind::continuous, 4};
        contract_.max_steps = cfg_.max_steps;
    }

    const EnvContract& contract() const override { return contract_; }

    StateVec reset(std::uint64_t seed) override {
        RngStream rng(derive_seed(seed, 0x5ea));
        if (cfg_.fixed_init) {
            theta1_ = (*cfg_.fixed_init)[0];
            theta2_ = (*cfg_.fixed_init)[1];
            target_x_ = (*cfg_.fixed_init)[2];
            target_y_ = (*cfg_.fixed_init)[3];
        } else {
            theta1_ = (2.0 * rng_uniform(rng) - 1.0) * M_PI;
            theta2_ = (2.0 * rng_uniform(rng) - 1.0) * M_PI;
            double ang = rng_uniform(rng) * 2.0 * M_PI;
            double rad = 0.5 + rng_uniform(rng) * 1.0;
            target_x_ = rad * std::cos(ang);
            target_y_ = rad * std::sin(ang);
        }
        omega1_ = omega2_ = 0.0;
        steps_ = 0;
        alive_ = true;
        return observe();
    }

    StepResult step(const ActionValue& action) override {
        require_alive(alive_);
        if (action.kind != ActionValue::Kind::continuous || action.continuous.size() != 4)
            throw std::invalid_argument("ReacherEnv: expected a 4-dim continuous action");
        double a0 = clamp(action.continuous[0], -1, 1), a1 = clamp(action.continuous[1], -1, 1);
        double a2 = clamp(action.continuous[2], -1, 1), a3 = clamp(action.continuous[3], -1, 1);
        double tau1 = clamp(a0 + a1, -1, 1);
        double tau2 = clamp(a2 + a3, -1, 1);
        omega1_ = clamp(0.9 * omega1_ + 0.2 * tau1, -1, 1);
        omega2_ = clamp(0.9 * omega2_ + 0.2 * tau2, -1, 1);
        theta1_ += omega1_ * cfg_.dt;
        theta2_ += omega2_ * cfg_.dt;
        steps_ += 1;

        auto [tx, ty] = tip();
        double dx = tx - target_x_, dy = ty - target_y_;
        double reward = std::sqrt(dx * dx + dy * dy) <= cfg_.goal_radius ? 0.1 : 0.0;
        bool done = steps_ >= cfg_.max_steps;
        if (done) alive_ = false;
        return {observe(), reward, done};
    }

    std::pair<double, double> tip() const {
        return {std::cos(theta1_) + std::cos(theta1_ + theta2_),
                std::sin(theta1_) + std::sin(theta1_ + theta2_)};
    }

  private:
    StateVec observe() const {
        auto [tx, ty] = tip();
        return {std::cos(theta1_), std::sin(theta1_), std::cos(theta2_), std::sin(theta2_),
                omega1_, omega2_, target_x_, target_y_, tx, ty};
    }

    ReacherConfig cfg_;
    EnvContract contract_;
    double theta1_ = 0, theta2_ = 0, omega1_ = 0, omega2_ = 0;
    double target_x_ = 1, target_y_ = 0;
    int steps_ = 0;
    bool alive_ = false;
};

// ---------------------------------------------------------------------------
// Collector: unit-square arena, four move/turn actions, +1 yellow / -1 blue
// pickups with seeded respawn. Observation (37): forward/lateral velocity
// plus 7 rays x 5 slots (one-hot {yellow, blue, wall}, normalized distance,
// reserved 0).
// ---------------------------------------------------------------------------

struct CollectorItem {
    double x = 0, y = 0;
    bool yellow = true;
};

struct CollectorConfig {
    int n_yellow = 8;
    int n_blue = 4;
    int max_steps = 300;
    double move = 0.03;
    double turn = 0.3;
    double pickup_radius = 0.05;
    double item_radius = 0.05;
    double ray_range = 1.5;  // covers the whole arena, so every ray hits something
    std::optional<std::vector<CollectorItem>> fixed_items;  // test hook
};

class CollectorEnv final : public Env {
  public:
    static constexpr int kNumRays = 7;

    explicit CollectorEnv(CollectorConfig cfg = {}) : cfg_(cfg), rng_(0) {
        contract_.observation_dim = 2 + kNumRays * 5;
        contract_.action_space = {ActionSpace::Kind::discrete, 4};
        contract_.max_steps = cfg_.max_steps;
    }

    const EnvContract& contract() const override { return contract_; }

    StateVec reset(std::uint64_t seed) override {
        rng_ = RngStream(derive_seed(seed, 0xc0));
        x_ = 0.2 + 0.6 * rng_uniform(rng_);
        y_ = 0.2 + 0.6 * rng_uniform(rng_);
        heading_ = rng_uniform(rng_) * 2.0 * M_PI;
        vx_ = vy_ = 0.0;
        items_.clear();
        if (cfg_.fixed_items) {
            items_ = *cfg_.fixed_items;
        } else {
            for (int i = 0; i < cfg_.n_yellow + cfg_.n_blue; ++i) {
                CollectorItem it;
                it.yellow = i < cfg_.n_yellow;
                place_item(it);
                items_.push_back(it);
            }
        }
        steps_ = 0;
        alive_ = true;
        return observe();
    }

    StepResult step(const ActionValue& action) override {
        require_alive(alive_);
        if (action.kind != ActionValue::Kind::discrete)
            throw std::invalid_argument("CollectorEnv: expected a discrete action");
        int a = action.discrete_id;
        if (a < 0 || a >= 4) throw std::out_of_range("CollectorEnv: action id must be in [0,4)");

        double px = x_, py = y_;
        switch (a) {
            case 0:  // forward
                x_ = clamp(x_ + cfg_.move * std::cos(heading_), 0, 1);
                y_ = clamp(y_ + cfg_.move * std::sin(heading_), 0, 1);
                break;
            case 1:  // back
                x_ = clamp(x_ - cfg_.move * std::cos(heading_), 0, 1);
                y_ = clamp(y_ - cfg_.move * std::sin(heading_), 0, 1);
                break;
            case 2: heading_ += cfg_.turn; break;
            case 3: heading_ -= cfg_.turn; break;
        }
        vx_ = x_ - px;
        vy_ = y_ - py;
        steps_ += 1;

        // nearest item within pickup radius wins; at most one pickup per step
        double reward = 0.0;
        int hit = -1;
        double best = cfg_.pickup_radius;
        for (std::size_t i = 0; i < items_.size(); ++i) {
            double d = std::hypot(items_[i].x - x_, items_[i].y - y_);
            if (d <= best) {
                best = d;
                hit = static_cast<int>(i);
            }
        }
        if (hit >= 0) {
            reward = items_[hit].yellow ? 1.0 : -1.0;
            place_item(items_[hit]);  // respawn at a seeded free location
        }
        bool done = steps_ >= cfg_.max_steps;
        if (done) alive_ = false;
        return {observe(), reward, done};
    }

    const std::vector<CollectorItem>& items() const { return items_; }
    std::pair<double, double> position() const { return {x_, y_}; }
    double heading() const { return heading_; }

  private:
    void place_item(CollectorItem& it) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            it.x = 0.05 + 0.9 * rng_uniform(rng_);
            it.y = 0.05 + 0.9 * rng_uniform(rng_);
            if (std::hypot(it.x - x_, it.y - y_) < 2.0 * cfg_.pickup_radius) continue;
            bool clear = true;
            for (const CollectorItem& other : items_) {
                if (&other == &it) continue;
                if (std::hypot(it.x - other.x, it.y - other.y) < 2.0 * cfg_.item_radius) {
                    clear = false;
                    break;
                }
            }
            if (clear) return;
        }
        // arena is sparse enough that 64 tries always suffice in practice;
        // keep the last draw if not
    }

    // First hit along the ray: items as circles, then the arena walls.
    // Slots: [yellow, blue, wall, normalized distance, 0].
    void cast_ray(double angle, double* slots) const {
        double dx = std::cos(angle), dy = std::sin(angle);
        double t_item = cfg_.ray_range + 1.0;
        int item_idx = -1;
        for (std::size_t i = 0; i < items_.size(); ++i) {
            // |p + t d - c|^2 = r^2 with unit d
            double ox = items_[i].x - x_, oy = items_[i].y - y_;
            double proj = ox * dx + oy * dy;
            if (proj <= 0.0) continue;
            double perp2 = ox * ox + oy * oy - proj * proj;
            double r2 = cfg_.item_radius * cfg_.item_radius;
            if (perp2 > r2) continue;
            double t = proj - std::sqrt(r2 - perp2);
            if (t > 1e-9 && t < t_item) {
                t_item = t;
                item_idx = static_cast<int>(i);
            }
        }
        double t_wall = cfg_.ray_range + 1.0;
        if (dx > 1e-12) t_wall = std::min(t_wall, (1.0 - x_) / dx);
        if (dx < -1e-12) t_wall = std::min(t_wall, (0.0 - x_) / dx);
        if (dy > 1e-12) t_wall = std::min(t_wall, (1.0 - y_) / dy);
        if (dy < -1e-12) t_wall = std::min(t_wall, (0.0 - y_) / dy);

        slots[0] = slots[1] = slots[2] = slots[3] = slots[4] = 0.0;
        if (item_idx >= 0 && t_item <= std::min(t_wall, cfg_.ray_range)) {
            slots[items_[item_idx].yellow ? 0 : 1] = 1.0;
            slots[3] = t_item / cfg_.ray_range;
        } else if (t_wall <= cfg_.ray_range) {
            slots[2] = 1.0;
            slots[3] = t_wall / cfg_.ray_range;
        }
    }

    StateVec observe() const {
        StateVec obs(contract_.observation_dim, 0.0);
        // velocity in the heading frame
        obs[0] = vx_ * std::cos(heading_) + vy_ * std::sin(heading_);
        obs[1] = -vx_ * std::sin(heading_) + vy_ * std::cos(heading_);
        static constexpr double kRayOffsets[kNumRays] = {-M_PI / 2, -M_PI / 3, -M_PI / 6, 0.0,
                                                         M_PI / 6,  M_PI / 3,  M_PI / 2};
        for (int r = 0; r < kNumRays; ++r) cast_ray(heading_ + kRayOffsets[r], &obs[2 + 5 * r]);
        return obs;
    }

    CollectorConfig cfg_;
    EnvContract contract_;
    RngStream rng_;
    double x_ = 0.5, y_ = 0.5, heading_ = 0.0, vx_ = 0.0, vy_ = 0.0;
    std::vector<CollectorItem> items_;
    int steps_ = 0;
    bool alive_ = false;
};

// ---------------------------------------------------------------------------
// Car: lane keeping on a sinusoidal track. One steering scalar (a second
// action entry is accepted and ignored). Reward (1 - |cte|)/1000 per step;
// the episode ends when the car leaves the lane. Observation: GxG binary
// occupancy grid of the track ahead, row 0 nearest, flattened row-major.
// ---------------------------------------------------------------------------

struct CarConfig {
    int grid = 16;
    int max_steps = 400;
    double cte_max = 1.0;
    double steer_gain = 0.2;
    double speed = 0.1;
    double curve_amplitude = 0.05;  // 0 -> straight track
    double curve_period = 20.0;
    double start_cte_jitter = 0.2;
    bool random_phase = true;
};

class CarEnv final : public Env {
  public:
    explicit CarEnv(CarConfig cfg = {}) : cfg_(cfg) {
        contract_.observation_dim = cfg_.grid * cfg_.grid;
        contract_.action_space = {ActionSpace::Kind::continuous, 1};
        contract_.max_steps = cfg_.max_steps;
    }

    const EnvContract& contract() const override { return contract_; }

    StateVec reset(std::uint64_t seed) override {
        RngStream rng(derive_seed(seed, 0xca7));
        s_ = 0.0;
        cte_ = (2.0 * rng_uniform(rng) - 1.0) * cfg_.start_cte_jitter;
        heading_err_ = 0.0;
        phase_ = cfg_.random_phase ? rng_uniform(rng) * cfg_.curve_period : 0.0;
        steps_ = 0;
        alive_ = true;
        return observe();
    }

    StepResult step(const ActionValue& action) override {
        require_alive(alive_);
        if (action.kind != ActionValue::Kind::continuous || action.continuous.empty() ||
            action.continuous.size() > 2)
            throw std::invalid_argument("CarEnv: expected a 1- or 2-dim continuous action");
        double steer = clamp(action.continuous[0], -1, 1);

        heading_err_ += cfg_.steer_gain * steer + curvature(s_);
        cte_ += 0.1 * std::sin(heading_err_);
        s_ += cfg_.speed * std::cos(heading_err_);
        steps_ += 1;

        double reward;
        bool done;
        if (std::fabs(cte_) >= cfg_.cte_max) {
            reward = 0.0;
            done = true;
        } else {
            reward = (1.0 - std::fabs(cte_) / cfg_.cte_max) / 1000.0;
            done = steps_ >= cfg_.max_steps;
        }
        if (done) alive_ = false;
        return {observe(), reward, done};
    }

    double cte() const { return cte_; }
    double progress() const { return s_; }

  private:
    double curvature(double s) const {
        if (cfg_.curve_amplitude == 0.0) return 0.0;
        return cfg_.curve_amplitude * std::sin(2.0 * M_PI * (s + phase_) / cfg_.curve_period);
    }

    // Lateral shift of the centerline between s and u (integral of curvature).
    double drift(double u) const {
        if (cfg_.curve_amplitude == 0.0) return 0.0;
        const double k = 2.0 * M_PI / cfg_.curve_period;
        return cfg_.curve_amplitude / k *
               (std::cos(k * (s_ + phase_)) - std::cos(k * (u + phase_)));
    }

    StateVec observe() const {
        const int g = cfg_.grid;
        StateVec obs(static_cast<std::size_t>(g) * g, 0.0);
        const double cell_w = 4.0 * cfg_.cte_max / g;  // lateral span +-2 lane widths
        for (int i = 0; i < g; ++i) {
            double u = s_ + (i + 1) * cfg_.speed;
            double center = drift(u) - cte_;  // lane center in the car frame
            for (int j = 0; j < g; ++j) {
                double xj = (j - (g - 1) * 0.5) * cell_w;
                if (std::fabs(xj - center) <= cfg_.cte_max) obs[static_cast<std::size_t>(i) * g + j] = 1.0;
            }
        }
        return obs;
    }

    CarConfig cfg_;
    EnvContract contract_;
    double s_ = 0, cte_ = 0, heading_err_ = 0, phase_ = 0;
    int steps_ = 0;
    bool alive_ = false;
};

enum class EnvKind { reacher, collector, car };

inline const char* env_kind_name(EnvKind k) {
    switch (k) {
        case EnvKind::reacher: return "reacher";
        case EnvKind::collector: return "collector";
        case EnvKind::car: return "car";
    }
    return "?";
}

struct EnvSettings {
    ReacherConfig reacher;
    CollectorConfig collector;
    CarConfig car;
};

inline std::unique_ptr<Env> make_env(EnvKind kind, const EnvSettings& settings = {}) {
    switch (kind) {
        case EnvKind::reacher: return std::make_unique<ReacherEnv>(settings.reacher);
        case EnvKind::collector: return std::make_unique<CollectorEnv>(settings.collector);
        case EnvKind::car: return std::make_unique<CarEnv>(settings.car);
    }
    throw std::invalid_argument("make_env: unknown env kind");
}

/// Produces fresh, identically-configured environment instances (workers and
/// population rollouts each own one).
using EnvFactory = std::function<std::unique_ptr<Env>()>;

inline EnvFactory env_factory(EnvKind kind, const EnvSettings& settings = {}) {
    return [kind, settings]() { return make_env(kind, settings); };
}

}  // namespace rlta
