#include "tace/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <variant>
#include <vector>

namespace tace {

namespace {

struct Field {
    const char* key;
    std::variant<double HyperParams::*, int HyperParams::*> member;
};

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        {"lambda_lpips", &HyperParams::lambda_lpips},
        {"lambda_latent", &HyperParams::lambda_latent},
        {"lambda_decision", &HyperParams::lambda_decision},
        {"inv_lpips", &HyperParams::inv_lpips},
        {"inv_pixel", &HyperParams::inv_pixel},
        {"inv_decision", &HyperParams::inv_decision},
        {"inv_anchor", &HyperParams::inv_anchor},
        {"cf_flip", &HyperParams::cf_flip},
        {"cf_prox_image", &HyperParams::cf_prox_image},
        {"cf_prox_latent", &HyperParams::cf_prox_latent},
        {"steps_invert", &HyperParams::steps_invert},
        {"steps_probe", &HyperParams::steps_probe},
        {"steps_cf", &HyperParams::steps_cf},
        {"latent_lr", &HyperParams::latent_lr},
        {"overlap_radius", &HyperParams::overlap_radius},
    };
    return table;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

void assign(HyperParams& hp, const std::string& key, const std::string& value,
            const std::string& where) {
    for (const Field& f : fields()) {
        if (key != f.key) continue;
        try {
            std::size_t used = 0;
            if (std::holds_alternative<double HyperParams::*>(f.member)) {
                const double v = std::stod(value, &used);
                if (used != value.size()) throw std::invalid_argument(value);
                hp.*std::get<double HyperParams::*>(f.member) = v;
            } else {
                const int v = std::stoi(value, &used);
                if (used != value.size()) throw std::invalid_argument(value);
                hp.*std::get<int HyperParams::*>(f.member) = v;
            }
        } catch (const std::exception&) {
            throw std::invalid_argument(where + ": cannot parse value '" + value + "' for key '" +
                                        key + "'");
        }
        return;
    }
    throw std::invalid_argument(where + ": unknown hyperparameter key '" + key + "'");
}

}  // namespace

void apply_config_file(HyperParams& hp, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("apply_config_file: cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": expected key = value");
        assign(hp, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)),
               path + ":" + std::to_string(lineno));
    }
}

void apply_env_overrides(HyperParams& hp) {
    for (const Field& f : fields()) {
        std::string name = "TACE_";
        for (const char* c = f.key; *c; ++c)
            name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(*c))));
        if (const char* value = std::getenv(name.c_str()))
            assign(hp, f.key, value, "environment " + name);
    }
}

HyperParams load_hyperparams(const std::string& config_path) {
    HyperParams hp;
    if (!config_path.empty()) apply_config_file(hp, config_path);
    apply_env_overrides(hp);
    return hp;
}

std::vector<std::string> hyperparam_keys() {
    std::vector<std::string> keys;
    for (const Field& f : fields()) keys.emplace_back(f.key);
    return keys;
}

}  // namespace tace
