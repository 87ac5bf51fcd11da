// Flat key=value configuration with dotted keys forming a tree.
//
// Grammar (line oriented):
//   - blank lines and lines whose first non-space character is '#' are skipped
//   - everything else must be `key = value`; whitespace around both is trimmed
//   - keys are validated against the registry below; later values win
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rlta {

struct ConfigEntry {
    const char* key;
    const char* value;
    const char* help;
};

inline const std::vector<ConfigEntry>& config_registry() {
    static const std::vector<ConfigEntry> entries = {
        {"seed", "1", "master seed; every random stream is derived from it"},
        {"env.kind", "collector", "environment: reacher | collector | car"},
        {"victim.algo", "dqn", "victim learner: dqn | a3c"},
        {"timer.kind", "wma", "attack timer: none | random | wma | pepg | lin"},
        {"attack.budget", "40", "maximum attacked frames per episode"},
        {"attack.beta", "0.3", "potential threshold for the wma and lin timers"},
        {"noise.kind", "zero_out",
         "noise for single-noise runs: zero_out | gaussian_fusion | fgsm | shuffle"},
        {"noise.kinds", "zero_out,gaussian_fusion,fgsm",
         "comma list of noise kinds averaged within a table cell"},
        {"noise.kernel_size", "5", "gaussian smoothing kernel width (odd, >= 3)"},
        {"noise.sigma", "1.0", "gaussian smoothing kernel sigma"},
        {"noise.epsilon", "0.3", "signed-gradient perturbation step"},
        {"eval.episodes_per_noise", "10", "episodes per noise kind in a table cell"},
        {"train.steps", "90000", "environment steps per victim training run"},
        {"a3c.workers", "1", "actor-critic worker threads (1 = fully deterministic)"},
        {"pepg.population", "32", "evolutionary attacker population size"},
        {"pepg.generations", "200", "evolutionary attacker training generations"},
        {"quick.train.steps", "6000", "table --quick: steps per auto-trained victim"},
        {"quick.episodes_per_noise", "2", "table --quick: episodes per noise kind"},
        {"quick.pepg.population", "8", "table --quick: evolutionary population"},
        {"quick.pepg.generations", "4", "table --quick: evolutionary generations"},
        {"out.results", "results.csv", "table output path"},
        {"out.curves", "curves.csv", "reward-curve output path"},
        {"out.checkpoints", "checkpoints", "victim checkpoint directory"},
    };
    return entries;
}

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

class Config {
  public:
    static Config defaults() {
        Config c;
        for (const ConfigEntry& e : config_registry()) c.values_[e.key] = e.value;
        return c;
    }

    void set(const std::string& key, const std::string& value) {
        auto it = values_.find(key);
        if (it == values_.end()) throw std::invalid_argument("unknown config key: " + key);
        it->second = value;
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw std::invalid_argument("unknown config key: " + key);
        return it->second;
    }

    long get_int(const std::string& key) const {
        const std::string& v = get(key);
        std::size_t pos = 0;
        long out = 0;
        try {
            out = std::stol(v, &pos);
        } catch (const std::exception&) {
            throw std::invalid_argument("config " + key + ": not an integer: " + v);
        }
        if (pos != v.size()) throw std::invalid_argument("config " + key + ": not an integer: " + v);
        return out;
    }

    double get_double(const std::string& key) const {
        const std::string& v = get(key);
        std::size_t pos = 0;
        double out = 0.0;
        try {
            out = std::stod(v, &pos);
        } catch (const std::exception&) {
            throw std::invalid_argument("config " + key + ": not a number: " + v);
        }
        if (pos != v.size()) throw std::invalid_argument("config " + key + ": not a number: " + v);
        return out;
    }

    bool get_bool(const std::string& key) const {
        const std::string& v = get(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw std::invalid_argument("config " + key + ": not a bool: " + v);
    }

    std::uint64_t get_u64(const std::string& key) const {
        const std::string& v = get(key);
        std::size_t pos = 0;
        unsigned long long out = 0;
        try {
            out = std::stoull(v, &pos);
        } catch (const std::exception&) {
            throw std::invalid_argument("config " + key + ": not an unsigned integer: " + v);
        }
        if (pos != v.size())
            throw std::invalid_argument("config " + key + ": not an unsigned integer: " + v);
        return static_cast<std::uint64_t>(out);
    }

    std::vector<std::string> get_list(const std::string& key) const {
        const std::string& v = get(key);
        std::vector<std::string> out;
        std::string item;
        std::istringstream is(v);
        while (std::getline(is, item, ',')) {
            item = detail::trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    void load_stream(std::istream& is) {
        std::string line;
        long lineno = 0;
        while (std::getline(is, line)) {
            lineno += 1;
            std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#') continue;
            std::size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": expected key = value");
            std::string key = detail::trim(t.substr(0, eq));
            std::string value = detail::trim(t.substr(eq + 1));
            if (key.empty())
                throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
            set(key, value);
        }
    }

    void load_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot open config file: " + path);
        load_stream(is);
    }

    /// All keys with their current values, registry help as comments.
    std::string render() const {
        std::ostringstream os;
        for (const ConfigEntry& e : config_registry())
            os << "# " << e.help << "\n" << e.key << " = " << values_.at(e.key) << "\n";
        return os.str();
    }

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace rlta
