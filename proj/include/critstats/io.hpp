#ifndef CRITSTATS_IO_HPP
#define CRITSTATS_IO_HPP

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "critstats/errors.hpp"
#include "critstats/kacrice.hpp"

namespace critstats {

// JSON output carries full double precision; CSV is for plotting.
inline constexpr int kJsonDigits = 17;
inline constexpr int kCsvDigits = 12;

inline std::string format_double(double x, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, x);
    return buf;
}

struct RGrid {
    double start = 0.01;
    double stop = 0.5;
    int count = 20;
    bool log_spaced = false;

    std::vector<double> values() const {
        if (count < 1) throw Error("r-grid: count must be >= 1");
        if (!(start > 0) || !(stop > 0) || stop < start) throw Error("r-grid: need 0 < start <= stop");
        std::vector<double> v(count);
        if (count == 1) {
            v[0] = start;
            return v;
        }
        for (int i = 0; i < count; ++i) {
            const double t = static_cast<double>(i) / (count - 1);
            v[i] = log_spaced ? start * std::pow(stop / start, t) : start + (stop - start) * t;
        }
        return v;
    }
};

// start:stop:count
inline RGrid parse_r_grid(const std::string& s, bool log_spaced) {
    RGrid g;
    g.log_spaced = log_spaced;
    const auto c1 = s.find(':');
    const auto c2 = s.find(':', c1 == std::string::npos ? c1 : c1 + 1);
    try {
        if (c1 == std::string::npos) {
            g.start = g.stop = std::stod(s);
            g.count = 1;
        } else if (c2 == std::string::npos) {
            throw Error("r-grid: expected start:stop:count");
        } else {
            g.start = std::stod(s.substr(0, c1));
            g.stop = std::stod(s.substr(c1 + 1, c2 - c1 - 1));
            g.count = static_cast<int>(std::stod(s.substr(c2 + 1)));
        }
    } catch (const std::invalid_argument&) {
        throw Error("r-grid: cannot parse '" + s + "'");
    }
    g.values(); // validate
    return g;
}

struct RunConfig {
    std::string command;
    std::string model = "rwm";
    RGrid r_grid;
    std::size_t samples = 1u << 20;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out_path; // empty = stdout
    std::string format = "csv";
    std::optional<std::pair<CritType, CritType>> typed;
    double L = 30.0;
    std::size_t n_field_samples = 200;
};

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j{{"command", c.command},
                     {"model", c.model},
                     {"r", {{"start", c.r_grid.start},
                            {"stop", c.r_grid.stop},
                            {"count", c.r_grid.count},
                            {"log", c.r_grid.log_spaced}}},
                     {"samples", c.samples},
                     {"seed", c.seed},
                     {"threads", c.threads},
                     {"out", c.out_path},
                     {"format", c.format},
                     {"L", c.L},
                     {"n_field_samples", c.n_field_samples}};
    if (c.typed)
        j["typed"] = {to_string(c.typed->first), to_string(c.typed->second)};
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    c.command = j.at("command").get<std::string>();
    c.model = j.at("model").get<std::string>();
    c.r_grid.start = j.at("r").at("start").get<double>();
    c.r_grid.stop = j.at("r").at("stop").get<double>();
    c.r_grid.count = j.at("r").at("count").get<int>();
    c.r_grid.log_spaced = j.at("r").at("log").get<bool>();
    c.samples = j.at("samples").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.threads = j.at("threads").get<int>();
    c.out_path = j.at("out").get<std::string>();
    c.format = j.at("format").get<std::string>();
    c.L = j.at("L").get<double>();
    c.n_field_samples = j.at("n_field_samples").get<std::size_t>();
    if (j.contains("typed"))
        c.typed = {parse_crit_type(j["typed"][0].get<std::string>()),
                   parse_crit_type(j["typed"][1].get<std::string>())};
    return c;
}

inline nlohmann::json k2_record(const std::string& model, const K2Estimate& est) {
    nlohmann::json j{{"model", model},
                     {"r", est.r},
                     {"value", est.value},
                     {"std_error", est.std_error},
                     {"n_samples", est.n_samples},
                     {"seed", est.seed}};
    if (est.type_pair)
        j["type_pair"] = {to_string(est.type_pair->first), to_string(est.type_pair->second)};
    return j;
}

inline std::string k2_csv_row(const K2Estimate& est) {
    std::string row = format_double(est.r, kCsvDigits) + "," + format_double(est.value, kCsvDigits) +
                      "," + format_double(est.std_error, kCsvDigits);
    return row;
}

} // namespace critstats

#endif
