#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "rlta/attackers.hpp"
#include "rlta/noise.hpp"
#include "support/diagnostic_env.hpp"

using namespace rlta;

namespace {

std::vector<double> random_vec(RngStream& rng, int n, double lo, double hi) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (double& x : v) x = lo + (hi - lo) * rng_uniform(rng);
    return v;
}

ExpertWeights weights_from(const std::vector<double>& raw) {
    ExpertWeights w(static_cast<int>(raw.size()));
    w.raw = raw;
    return w;
}

}  // namespace

// --- budget ----------------------------------------------------------------

TEST_CASE("attack budget: consumes up to the cap, resets, never exceeds") {
    AttackBudget b;
    b.cap = 3;
    CHECK(b.available());
    CHECK(b.try_consume());
    CHECK(b.try_consume());
    CHECK(b.try_consume());
    CHECK_FALSE(b.available());
    CHECK_FALSE(b.try_consume());
    CHECK(b.used == 3);
    b.reset();
    CHECK(b.used == 0);
    CHECK(b.available());
}

// --- expert weights and potentials ----------------------------------------

TEST_CASE("expert weights start uniform and normalize to a distribution") {
    ExpertWeights w(4);
    std::vector<double> n = w.normalized();
    for (double x : n) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));
    double sum = 0.0;
    for (double x : n) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(ExpertWeights(1), std::invalid_argument);
}

TEST_CASE("value potential: worked cases") {
    ExpertWeights uniform4(4);
    PotentialResult r = potential_energy_c(uniform4, {0.0, 0.0, 0.0, 0.0});
    CHECK(r.c == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.a_max == 0);  // ties break to the lowest index
    CHECK(r.a_min == 0);

    ExpertWeights uniform2(2);
    r = potential_energy_c(uniform2, {0.0, std::log(3.0)});
    CHECK(r.c == doctest::Approx(0.5).epsilon(1e-12));  // p = [0.75, 0.25]
    CHECK(r.a_max == 0);
    CHECK(r.a_min == 1);

    r = potential_energy_c(weights_from({0.9, 0.1}), {0.0, 0.0});
    CHECK(r.c == doctest::Approx(0.8).epsilon(1e-12));  // p = [0.9, 0.1]
    CHECK(r.a_max == 0);
    CHECK(r.a_min == 1);
}

TEST_CASE("value potential matches a direct unshifted evaluation") {
    RngStream rng(111);
    for (int trial = 0; trial < 30; ++trial) {
        int d = 2 + rng_below(rng, 7);
        std::vector<double> raw = random_vec(rng, d, 0.05, 3.0);
        std::vector<double> q = random_vec(rng, d, -4.0, 4.0);

        // textbook evaluation without the overflow shift
        std::vector<double> u(q.size());
        double z = 0.0;
        for (int i = 0; i < d; ++i) {
            u[static_cast<std::size_t>(i)] =
                raw[static_cast<std::size_t>(i)] * std::exp(-q[static_cast<std::size_t>(i)]);
            z += u[static_cast<std::size_t>(i)];
        }
        int amax = 0, amin = 0;
        for (int i = 1; i < d; ++i) {
            if (u[static_cast<std::size_t>(i)] > u[static_cast<std::size_t>(amax)]) amax = i;
            if (u[static_cast<std::size_t>(i)] < u[static_cast<std::size_t>(amin)]) amin = i;
        }
        double c = (u[static_cast<std::size_t>(amax)] - u[static_cast<std::size_t>(amin)]) / z;

        PotentialResult got = potential_energy_c(weights_from(raw), q);
        CHECK(got.c == doctest::Approx(c).epsilon(1e-12));
        CHECK(got.a_max == amax);
        CHECK(got.a_min == amin);
        CHECK(got.c >= 0.0);
        CHECK(got.c < 1.0);
    }
}

TEST_CASE("value potential: shift and weight-scale invariance, huge inputs safe") {
    RngStream rng(222);
    for (int trial = 0; trial < 20; ++trial) {
        int d = 2 + rng_below(rng, 5);
        std::vector<double> raw = random_vec(rng, d, 0.1, 2.0);
        std::vector<double> q = random_vec(rng, d, -3.0, 3.0);
        PotentialResult base = potential_energy_c(weights_from(raw), q);

        std::vector<double> shifted = q;
        for (double& x : shifted) x += 123.25;
        PotentialResult s = potential_energy_c(weights_from(raw), shifted);
        CHECK(s.c == doctest::Approx(base.c).epsilon(1e-12));
        CHECK(s.a_max == base.a_max);
        CHECK(s.a_min == base.a_min);

        std::vector<double> scaled = raw;
        for (double& x : scaled) x *= 5.0;
        PotentialResult w = potential_energy_c(weights_from(scaled), q);
        CHECK(w.c == doctest::Approx(base.c).epsilon(1e-12));
        CHECK(w.a_max == base.a_max);
    }

    // q magnitudes that would overflow exp(-q) without the shift
    ExpertWeights w2(2);
    PotentialResult big = potential_energy_c(w2, {-800.0, 800.0});
    CHECK(std::isfinite(big.c));
    CHECK(big.a_max == 0);
    CHECK(big.a_min == 1);
    CHECK(big.c == doctest::Approx(1.0).epsilon(1e-9));  // near-total separation

    CHECK_THROWS_AS(potential_energy_c(w2, {1.0}), std::invalid_argument);
    ExpertWeights w1(2);
    std::vector<double> nanq{0.0, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(potential_energy_c(w1, nanq), std::invalid_argument);
}

TEST_CASE("policy potential: worked cases") {
    ExpertWeights uniform4(4);
    PotentialResult r = policy_potential_c(uniform4, {0.25, 0.25, 0.25, 0.25});
    CHECK(r.c == doctest::Approx(0.0).epsilon(1e-12));

    ExpertWeights uniform2(2);
    r = policy_potential_c(uniform2, {0.75, 0.25});
    CHECK(r.c == doctest::Approx(0.25).epsilon(1e-12));  // 0.375 - 0.125
    CHECK(r.a_max == 0);
    CHECK(r.a_min == 1);

    // all weight on the first expert: v = [0.5, ~0], gap ~0.5
    r = policy_potential_c(weights_from({1.0, 1e-12}), {0.5, 0.5});
    CHECK(r.c == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(r.a_max == 0);

    CHECK_THROWS_AS(policy_potential_c(uniform2, {0.9, 0.2}), std::invalid_argument);
    std::vector<double> neg{1.2, -0.2};
    CHECK_THROWS_AS(policy_potential_c(uniform2, neg), std::invalid_argument);
}

// --- hedge update and regret -----------------------------------------------

TEST_CASE("minmax rescaling maps preferences into [0,1] losses") {
    std::vector<double> l = minmax_normalize({3.0, 1.0, 2.0});
    CHECK(l[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(l[2] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(minmax_normalize({2.0, 2.0, 2.0}) == std::vector<double>{0.0, 0.0, 0.0});
    RngStream rng(7);
    std::vector<double> r = minmax_normalize(random_vec(rng, 10, -50.0, 50.0));
    for (double x : r) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
    }
}

TEST_CASE("hedge update: hand case, no-ops, and bound violations rejected") {
    ExpertWeights w(2);
    hedge_update(w, {0.0, std::log(2.0)}, 1.0);
    CHECK(w.raw[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.raw[1] == doctest::Approx(0.5).epsilon(1e-12));
    std::vector<double> n = w.normalized();
    CHECK(n[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(n[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    ExpertWeights w2(3);
    hedge_update(w2, {0.0, 0.0, 0.0}, 0.5);
    for (double x : w2.raw) CHECK(x == 1.0);  // zero losses leave weights alone

    ExpertWeights w3(3);
    hedge_update(w3, {0.7, 0.7, 0.7}, 0.5);
    std::vector<double> n3 = w3.normalized();
    for (double x : n3) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    ExpertWeights w4(2);
    CHECK_THROWS_AS(hedge_update(w4, {0.5, 1.2}, 0.5), std::logic_error);
    CHECK_THROWS_AS(hedge_update(w4, {0.5, -0.1}, 0.5), std::logic_error);
    CHECK_THROWS_AS(hedge_update(w4, {0.5, 0.5}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(hedge_update(w4, {0.5}, 0.5), std::invalid_argument);
}

TEST_CASE("hedge internals survive long horizons without underflow") {
    ExpertWeights w(4);
    double eta = hedge_eta(4, 1000);
    RngStream rng(13);
    for (int t = 0; t < 100000; ++t) hedge_update(w, random_vec(rng, 4, 0.0, 1.0), eta);
    for (double x : w.raw) {
        CHECK(std::isfinite(x));
        CHECK(x > 0.0);
    }
    double sum = 0.0;
    for (double x : w.normalized()) sum += x;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("learning-rate and bound formulas") {
    CHECK(hedge_eta(4, 1000) == doctest::Approx(std::sqrt(2.0 * std::log(4.0) / 1000.0)).epsilon(1e-12));
    CHECK(hedge_bound(4, 1000) == doctest::Approx(52.655).epsilon(1e-4));
    CHECK(hedge_bound(2, 100) == doctest::Approx(11.7741).epsilon(1e-4));
    CHECK_THROWS_AS(hedge_eta(1, 100), std::invalid_argument);
    CHECK_THROWS_AS(hedge_bound(2, 0), std::invalid_argument);
}

TEST_CASE("empirical regret never exceeds the bound on random loss sequences") {
    for (int d : {2, 4, 16}) {
        for (int T : {100, 1000}) {
            double eta = hedge_eta(d, T);
            double bound = hedge_bound(d, T);
            for (int trial = 0; trial < 50; ++trial) {
                RngStream rng(derive_seed(31337, static_cast<std::uint64_t>(d * 100000 + T * 10 +
                                                                            trial)));
                ExpertWeights w(d);
                RegretLedger ledger;
                ledger.d = d;
                ledger.eta = eta;
                for (int t = 0; t < T; ++t) {
                    std::vector<double> losses = random_vec(rng, d, 0.0, 1.0);
                    ledger.record(w, losses, losses);
                    hedge_update(w, losses, eta);
                }
                double regret = empirical_regret(ledger);
                CHECK(regret <= bound);
            }
        }
    }
}

TEST_CASE("a perfect expert collects nearly all weight and keeps regret bounded") {
    const int d = 4, T = 500;
    double eta = hedge_eta(d, T);
    ExpertWeights w(d);
    RegretLedger ledger;
    ledger.d = d;
    ledger.eta = eta;
    for (int t = 0; t < T; ++t) {
        std::vector<double> losses{1.0, 1.0, 0.0, 1.0};  // expert 2 is perfect
        ledger.record(w, losses, losses);
        hedge_update(w, losses, eta);
    }
    CHECK(w.normalized()[2] > 0.99);
    double regret = empirical_regret(ledger);
    CHECK(regret >= 0.0);
    CHECK(regret <= hedge_bound(d, T));
}

TEST_CASE("equal losses every round give exactly zero regret") {
    const int d = 3, T = 50;
    double eta = hedge_eta(d, T);
    ExpertWeights w(d);
    RegretLedger ledger;
    ledger.d = d;
    ledger.eta = eta;
    for (int t = 0; t < T; ++t) {
        std::vector<double> losses{0.4, 0.4, 0.4};
        ledger.record(w, losses, losses);
        hedge_update(w, losses, eta);
    }
    CHECK(empirical_regret(ledger) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("regret precondition: enough rounds for the bound regime") {
    RegretLedger ledger;
    ledger.d = 16;  // 2 ln 16 ~ 5.55
    ledger.eta = 0.5;
    ExpertWeights w(16);
    std::vector<double> losses(16, 0.5);
    for (int t = 0; t < 5; ++t) ledger.record(w, losses, losses);
    CHECK_THROWS_AS(empirical_regret(ledger), std::invalid_argument);
    ledger.record(w, losses, losses);  // T = 6 > 5.55
    CHECK_NOTHROW(empirical_regret(ledger));

    // the raw exponential form stays finite and computable alongside
    CHECK(std::isfinite(raw_exponential_regret(ledger)));
}

// --- timers ----------------------------------------------------------------

TEST_CASE("random timer: exact planned counts and budget edge cases") {
    RandomTimer t(40, 200, 4);
    CHECK(t.planned_attacks() == 40);
    AttackBudget b;
    b.cap = 40;
    int fired = 0;
    for (int f = 0; f < 200; ++f) fired += t.decide(f, b).attack ? 1 : 0;
    CHECK(fired == 40);

    RandomTimer none(0, 100, 4);
    CHECK(none.planned_attacks() == 0);

    RandomTimer all(100, 100, 4);
    AttackBudget ball;
    ball.cap = 100;
    int hits = 0;
    for (int f = 0; f < 100; ++f) hits += all.decide(f, ball).attack ? 1 : 0;
    CHECK(hits == 100);

    RandomTimer clamped(500, 30, 4);  // budget above horizon clamps
    CHECK(clamped.planned_attacks() == 30);
}

TEST_CASE("random timer is seed-deterministic and roughly uniform over frames") {
    auto frames_of = [](std::uint64_t seed) {
        RandomTimer t(5, 50, seed);
        AttackBudget b;
        b.cap = 5;
        std::vector<int> out;
        for (int f = 0; f < 50; ++f)
            if (t.decide(f, b).attack) out.push_back(f);
        return out;
    };
    CHECK(frames_of(9) == frames_of(9));
    CHECK(frames_of(9) != frames_of(10));

    // H=1 over 10 frames, 2000 seeds: each frame near 200 (+-5 sigma ~ 67)
    std::vector<int> counts(10, 0);
    for (int s = 0; s < 2000; ++s) {
        RandomTimer t(1, 10, static_cast<std::uint64_t>(s));
        AttackBudget b;
        b.cap = 1;
        for (int f = 0; f < 10; ++f)
            if (t.decide(f, b).attack) counts[static_cast<std::size_t>(f)]++;
    }
    for (int c : counts) {
        CHECK(c >= 133);
        CHECK(c <= 267);
    }
}

TEST_CASE("softmax-gap baseline: threshold and budget behavior") {
    AttackBudget b;
    b.cap = 40;
    AttackDecision d = lin_decide({0.0, 0.0, 0.0, 0.0}, 0.3, b);
    CHECK_FALSE(d.attack);
    CHECK(d.potential == doctest::Approx(0.0).epsilon(1e-12));

    d = lin_decide({std::log(3.0), 0.0}, 0.3, b);
    CHECK(d.attack);
    CHECK(d.potential == doctest::Approx(0.5).epsilon(1e-12));  // softmax [0.75, 0.25]
    CHECK(b.used == 1);

    AttackBudget empty;
    empty.cap = 0;
    CHECK_FALSE(lin_decide({std::log(3.0), 0.0}, 0.3, empty).attack);
}

TEST_CASE("at d=2 the softmax gap equals the uniform-frozen-weight potential") {
    RngStream rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> q = random_vec(rng, 2, -3.0, 3.0);
        AttackBudget b;
        b.cap = 1;
        double lin_c = lin_decide(q, 2.0, b).potential;  // beta 2: never attacks
        ExpertWeights uniform(2);
        double wma_c = potential_energy_c(uniform, q).c;
        CHECK(lin_c == doctest::Approx(wma_c).epsilon(1e-12));
    }
}

TEST_CASE("wma timer: decide-then-update order, threshold, budget cap") {
    WmaConfig cfg;
    cfg.beta = 0.3;
    cfg.budget = 40;
    WmaTimer timer(2, 100, cfg);
    CHECK(timer.eta() == doctest::Approx(hedge_eta(2, 100)).epsilon(1e-12));

    // first frame: weights are still uniform, so the potential is known exactly
    AttackDecision d = timer.decide({0.0, std::log(3.0)}, false);
    CHECK(d.potential == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(d.attack);
    CHECK(timer.budget().used == 1);
    CHECK(timer.ledger().rounds.size() == 1);
    // the recorded round used the pre-update uniform weights
    CHECK(timer.ledger().rounds[0].weights[0] == doctest::Approx(0.5).epsilon(1e-12));
    // and the update already moved the live weights
    CHECK(timer.weights().normalized()[0] != doctest::Approx(0.5).epsilon(1e-12));

    WmaConfig low;
    low.beta = 0.01;
    low.budget = 5;
    WmaTimer caps(4, 50, low);
    RngStream rng(23);
    int attacks = 0;
    for (int t = 0; t < 50; ++t)
        attacks += caps.decide(random_vec(rng, 4, -2.0, 2.0), false).attack ? 1 : 0;
    CHECK(attacks == 5);  // tiny beta attacks until the budget is gone
    CHECK(caps.budget().used == 5);
    CHECK(caps.ledger().rounds.size() == 50);  // updates continue after exhaustion
}

TEST_CASE("wma timer: policy flavor routes through the policy potential") {
    WmaTimer timer(2, 100);
    std::vector<double> logits{std::log(3.0), 0.0};  // softmax = [0.75, 0.25]
    AttackDecision d = timer.decide(logits, true);
    // uniform weights: v = [0.375, 0.125], c = 0.25 -> below beta
    CHECK(d.potential == doctest::Approx(0.25).epsilon(1e-12));
    CHECK_FALSE(d.attack);
}

TEST_CASE("wma attack counts are non-increasing in beta on a fixed stream") {
    const int d = 4, T = 200, H = 40;
    std::vector<std::vector<double>> stream;
    RngStream rng(29);
    for (int t = 0; t < T; ++t) stream.push_back(random_vec(rng, d, -2.0, 2.0));

    std::vector<int> counts;
    for (double beta : {0.1, 0.3, 0.5, 0.7}) {
        WmaConfig cfg;
        cfg.beta = beta;
        cfg.budget = H;
        WmaTimer timer(d, T, cfg);
        int n = 0;
        for (const auto& prefs : stream) n += timer.decide(prefs, false).attack ? 1 : 0;
        counts.push_back(n);
    }
    for (std::size_t i = 1; i < counts.size(); ++i) CHECK(counts[i] <= counts[i - 1]);
    CHECK(counts.front() <= H);
}

TEST_CASE("wma ledger passes the regret verifier on synthetic episodes") {
    const int d = 4, T = 300;
    WmaTimer timer(d, T);
    RngStream rng(31);
    for (int t = 0; t < T; ++t) timer.decide(random_vec(rng, d, -1.0, 1.0), false);
    double regret = empirical_regret(timer.ledger());
    CHECK(regret <= hedge_bound(d, T));
}

// --- pepg ------------------------------------------------------------------

TEST_CASE("log-density gradients: closed forms at the special points") {
    PepgDistribution d = PepgDistribution::init(3, 1.0);
    d.mu = {0.5, -1.0, 2.0};
    d.sigma = {1.0, 0.5, 2.0};

    PepgLogGrad at_mu = pepg_log_grad(d.mu, d);
    for (int i = 0; i < 3; ++i) {
        CHECK(at_mu.d_mu[static_cast<std::size_t>(i)] == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(at_mu.d_sigma[static_cast<std::size_t>(i)] ==
              doctest::Approx(-1.0 / d.sigma[static_cast<std::size_t>(i)]).epsilon(1e-12));
    }

    std::vector<double> one_sigma = d.mu;
    for (int i = 0; i < 3; ++i) one_sigma[static_cast<std::size_t>(i)] += d.sigma[static_cast<std::size_t>(i)];
    PepgLogGrad at_sigma = pepg_log_grad(one_sigma, d);
    for (int i = 0; i < 3; ++i)
        CHECK(at_sigma.d_sigma[static_cast<std::size_t>(i)] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("log-density gradients match finite differences of the log density") {
    auto log_density = [](const std::vector<double>& theta, const std::vector<double>& mu,
                          const std::vector<double>& sigma) {
        double lp = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            double diff = theta[i] - mu[i];
            lp += -diff * diff / (2.0 * sigma[i] * sigma[i]) - std::log(sigma[i]) -
                  0.5 * std::log(2.0 * M_PI);
        }
        return lp;
    };

    RngStream rng(37);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 5;
        PepgDistribution d = PepgDistribution::init(n, 1.0);
        d.mu = random_vec(rng, n, -2.0, 2.0);
        d.sigma = random_vec(rng, n, 0.5, 2.0);
        std::vector<double> theta = random_vec(rng, n, -3.0, 3.0);
        PepgLogGrad g = pepg_log_grad(theta, d);

        const double h = 1e-6;
        for (int i = 0; i < n; ++i) {
            std::vector<double> mu_p = d.mu, mu_m = d.mu;
            mu_p[static_cast<std::size_t>(i)] += h;
            mu_m[static_cast<std::size_t>(i)] -= h;
            double fd_mu =
                (log_density(theta, mu_p, d.sigma) - log_density(theta, mu_m, d.sigma)) / (2 * h);
            double denom = std::max({std::fabs(fd_mu), std::fabs(g.d_mu[static_cast<std::size_t>(i)]), 1e-6});
            CHECK(std::fabs(g.d_mu[static_cast<std::size_t>(i)] - fd_mu) / denom <= 1e-6);

            std::vector<double> sg_p = d.sigma, sg_m = d.sigma;
            sg_p[static_cast<std::size_t>(i)] += h;
            sg_m[static_cast<std::size_t>(i)] -= h;
            double fd_sigma =
                (log_density(theta, d.mu, sg_p) - log_density(theta, d.mu, sg_m)) / (2 * h);
            double denom2 = std::max({std::fabs(fd_sigma), std::fabs(g.d_sigma[static_cast<std::size_t>(i)]), 1e-6});
            CHECK(std::fabs(g.d_sigma[static_cast<std::size_t>(i)] - fd_sigma) / denom2 <= 1e-6);
        }
    }
}

TEST_CASE("population gradient estimate: baseline identity, toy accuracy, linearity") {
    PepgDistribution d = PepgDistribution::init(2, 1.0);

    // equal fitness + baseline -> exactly zero estimate
    std::vector<std::vector<double>> thetas{{0.5, 0.1}, {-0.2, 0.3}, {1.0, -1.0}};
    std::vector<double> flat{2.0, 2.0, 2.0};
    PepgLogGrad zero = pepg_gradient_estimate(thetas, flat, d, true);
    for (double x : zero.d_mu) CHECK(x == doctest::Approx(0.0).epsilon(1e-12));
    for (double x : zero.d_sigma) CHECK(x == doctest::Approx(0.0).epsilon(1e-12));

    // linearity in fitness (baseline off)
    std::vector<double> f1{1.0, -0.5, 0.25};
    std::vector<double> f2{2.0, -1.0, 0.5};
    PepgLogGrad g1 = pepg_gradient_estimate(thetas, f1, d, false);
    PepgLogGrad g2 = pepg_gradient_estimate(thetas, f2, d, false);
    for (std::size_t i = 0; i < g1.d_mu.size(); ++i)
        CHECK(g2.d_mu[i] == doctest::Approx(2.0 * g1.d_mu[i]).epsilon(1e-12));

    CHECK_THROWS_AS(pepg_gradient_estimate({{0.1, 0.2}}, {1.0}, d, true), std::invalid_argument);

    // r(theta) = -(theta-3)^2 at mu=0, sigma=1: dE/dmu = 6 analytically
    PepgDistribution toy = PepgDistribution::init(1, 1.0);
    RngStream rng(41);
    const int N = 100000;
    std::vector<std::vector<double>> ts;
    std::vector<double> fs;
    ts.reserve(N);
    for (int k = 0; k < N; ++k) {
        std::vector<double> th = toy.sample(rng);
        fs.push_back(-(th[0] - 3.0) * (th[0] - 3.0));
        ts.push_back(std::move(th));
    }
    PepgLogGrad est = pepg_gradient_estimate(ts, fs, toy, false);
    CHECK(est.d_mu[0] == doctest::Approx(6.0).epsilon(0.10));
}

TEST_CASE("pepg decide: strict threshold, budget, determinism") {
    MlpSpec spec;
    spec.layer_sizes = {2, 1};
    MlpParams zero_net;
    zero_net.spec = spec;
    zero_net.layers.push_back({1, 2, {0.0, 0.0}, {0.0}});
    PepgPolicy boundary{zero_net};
    AttackBudget b;
    b.cap = 5;
    AttackDecision d = boundary.decide({1.0, -1.0}, b);
    CHECK_FALSE(d.attack);  // sigmoid(0) = 0.5 is not strictly above 0.5
    CHECK(d.potential == doctest::Approx(0.5).epsilon(1e-12));

    MlpParams pos = zero_net;
    pos.layers[0].b[0] = 2.0;
    PepgPolicy eager{pos};
    CHECK(eager.decide({0.0, 0.0}, b).attack);
    CHECK(b.used == 1);
    AttackBudget empty;
    empty.cap = 0;
    CHECK_FALSE(eager.decide({0.0, 0.0}, empty).attack);

    AttackBudget b2;
    b2.cap = 5;
    AttackDecision r1 = eager.decide({0.3, 0.7}, b2);
    AttackDecision r2 = eager.decide({0.3, 0.7}, b2);
    CHECK(r1.attack == r2.attack);
    CHECK(r1.potential == r2.potential);
}

TEST_CASE("adversarial reward is the negative magnitude of the env reward") {
    CHECK(adversarial_reward(-2.0) == -2.0);
    CHECK(adversarial_reward(3.0) == -3.0);
    CHECK(adversarial_reward(0.0) == 0.0);
}

TEST_CASE("pepg training finds the planted odd-frame signal") {
    using namespace rlta::testsupport;
    PepgConfig cfg;
    cfg.population = 24;
    cfg.generations = 150;
    cfg.hidden = {8};
    cfg.budget = 25;

    PepgTrainResult result = pepg_asa_train(
        diagnostic_env_factory(), scripted_victim_act,
        [](const StateVec& s) { return zero_out(s); }, cfg, 4242);

    REQUIRE(result.mean_fitness.size() == 150);
    for (double f : result.mean_fitness) CHECK(std::isfinite(f));
    // fitness improves from the random-policy regime toward the -12.5 optimum
    CHECK(result.mean_fitness.back() > result.mean_fitness.front());

    // roll the trained policy once and look at which frames it hits
    DiagnosticEnv env;
    AttackBudget budget;
    budget.cap = cfg.budget;
    StateVec s = env.reset(0);
    int odd_hits = 0, even_hits = 0;
    bool done = false;
    int frame = 0;
    double abs_reward = 0.0;
    while (!done) {
        AttackDecision d = result.policy.decide(s, budget);
        StateVec seen = d.attack ? zero_out(s) : s;
        if (d.attack) (frame % 2 == 1 ? odd_hits : even_hits)++;
        StepResult r = env.step(scripted_victim_act(seen));
        abs_reward += std::fabs(r.reward);
        s = std::move(r.observation);
        done = r.done;
        frame += 1;
    }
    int total = odd_hits + even_hits;
    CHECK(total <= cfg.budget);
    REQUIRE(total > 0);
    CHECK(static_cast<double>(odd_hits) / total > 0.8);
    CHECK(abs_reward < 25.0);  // strictly better than not attacking at all
}
