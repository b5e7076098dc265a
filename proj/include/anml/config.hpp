#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "anml/common.hpp"

namespace anml {

// Flat key-value experiment configuration. Every key is declared in the
// schema below with its default; unknown keys are rejected by name. The
// snapshot written into a run directory lists every effective key, so a run
// is reproducible from snapshot + seed alone.
class RunConfig {
public:
    static const std::vector<std::pair<std::string, std::string>>& schema() {
        static const std::vector<std::pair<std::string, std::string>> keys = {
            {"profile", "desk"},
            {"treatment", "ANML"},
            {"dataset", "synthetic"},
            {"data_root", "data/omniglot"},
            {"seed", "0"},
            {"out_dir", ""},
            {"image_size", "0"},  // 0 = profile default

            {"iterations", "20000"},
            {"inner_steps", "20"},
            {"remember_size", "64"},
            {"alpha", "0.001"},
            {"beta", "0.1"},
            {"checkpoint_every", "1000"},
            {"grad_clip", "0"},
            {"audit", "true"},
            {"pretrain_budget", "1680000"},

            {"synthetic_classes", "60"},
            {"synthetic_instances", "20"},
            {"synthetic_test_classes", "10"},

            {"omniglot_expected_classes", "1623"},
            {"omniglot_split_train", "963"},
            {"omniglot_split_test", "660"},
            {"omniglot_instances", "20"},
            {"omniglot_test_train_per_class", "15"},
            {"fetch_url", "https://raw.githubusercontent.com/brendenlake/omniglot/master/python"},

            {"metatest_treatments", ""},  // empty = the `treatment` key
            {"metatest_lengths", "10,50,75,100,150,200,300,400,500,600"},
            {"metatest_seeds", "1,2,3,4,5,6,7,8,9,10"},
            {"metatest_betas", "0.0003,0.001,0.003,0.01,0.03,0.1"},
            {"metatest_search_seeds", "1001,1002,1003"},
            {"metatest_epochs", "1"},
            {"metatest_oracle", "none"},  // none | also | only
            {"metatest_workers", "1"},
            {"metatest_dump_activations", "false"},

            {"knn_k", "5"},
            {"sparsity_threshold", "0.01"},
            {"analyze_random_nm", "true"},
        };
        return keys;
    }

    RunConfig() {
        for (const auto& [key, value] : schema()) values_[key] = value;
    }

    void set(const std::string& key, const std::string& value) {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
        it->second = value;
        explicit_.insert({key, true});
    }

    bool was_set(const std::string& key) const { return explicit_.count(key) != 0; }

    void load_file(const std::filesystem::path& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config file " + path.string());
        std::string line;
        int64_t line_no = 0;
        while (std::getline(f, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                                  ": expected 'key = value'");
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
        return it->second;
    }

    int64_t get_int(const std::string& key) const {
        try {
            size_t pos = 0;
            int64_t v = std::stoll(get(key), &pos);
            if (pos != get(key).size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError("config key '" + key + "' is not an integer: '" + get(key) + "'");
        }
    }

    uint64_t get_uint(const std::string& key) const {
        const int64_t v = get_int(key);
        if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
        return static_cast<uint64_t>(v);
    }

    double get_real(const std::string& key) const {
        try {
            size_t pos = 0;
            double v = std::stod(get(key), &pos);
            if (pos != get(key).size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError("config key '" + key + "' is not a number: '" + get(key) + "'");
        }
    }

    bool get_bool(const std::string& key) const {
        const std::string& v = get(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ConfigError("config key '" + key + "' is not a boolean: '" + v + "'");
    }

    template <typename T, typename Parse>
    std::vector<T> get_list(const std::string& key, Parse parse) const {
        std::vector<T> out;
        std::stringstream ss(get(key));
        std::string part;
        while (std::getline(ss, part, ',')) {
            part = trim(part);
            if (part.empty()) continue;
            try {
                out.push_back(parse(part));
            } catch (...) {
                throw ConfigError("config key '" + key + "': bad list element '" + part + "'");
            }
        }
        return out;
    }

    std::vector<int64_t> get_int_list(const std::string& key) const {
        return get_list<int64_t>(key, [](const std::string& s) { return std::stoll(s); });
    }
    std::vector<uint64_t> get_uint_list(const std::string& key) const {
        return get_list<uint64_t>(key, [](const std::string& s) { return std::stoull(s); });
    }
    std::vector<double> get_real_list(const std::string& key) const {
        return get_list<double>(key, [](const std::string& s) { return std::stod(s); });
    }
    std::vector<std::string> get_string_list(const std::string& key) const {
        return get_list<std::string>(key, [](const std::string& s) { return s; });
    }

    // Effective configuration, schema order; parsing it back reproduces this
    // config exactly.
    std::string snapshot() const {
        std::string out;
        for (const auto& [key, fallback] : schema()) {
            (void)fallback;
            out += key + " = " + values_.at(key) + "\n";
        }
        return out;
    }

    void save_snapshot(const std::filesystem::path& path) const {
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw IoError("cannot write " + path.string());
        f << snapshot();
    }

private:
    static std::string trim(std::string s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
        return s;
    }

    std::map<std::string, std::string> values_;
    std::map<std::string, bool> explicit_;
};

// Data root resolution order: explicit config, then ANML_DATA_ROOT, then the
// schema default.
inline std::string resolve_data_root(const RunConfig& cfg) {
    if (cfg.was_set("data_root")) return cfg.get("data_root");
    if (const char* env = std::getenv("ANML_DATA_ROOT"); env && *env) return env;
    return cfg.get("data_root");
}

}  // namespace anml
