#pragma once

// Pipeline configuration: UTF-8 key=value lines with section prefixes
// (extractor.threshold=0.5). Flags override file values; derived defaults
// (match radius, fusion radius, patch half-side) follow the nucleus radius
// unless set explicitly. The resolved set is echoed into every output.

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class KvConfig {
public:
    static KvConfig defaults() {
        KvConfig cfg;
        cfg.values_ = {
            {"bootstrap.confidence", "0.95"},
            {"bootstrap.outer_repeats", "10000"},
            {"bootstrap.resamples", "10000"},
            {"calib.grid_hi", "160"},
            {"calib.grid_lo", "40"},
            {"calib.grid_step", "5"},
            {"eval.batch_size", "8"},
            {"eval.match_radius", "13"},
            {"extractor.min_distance", "13"},
            {"extractor.pool_size", "3"},
            {"extractor.threshold", "0.5"},
            {"filter.mean_high", "250"},
            {"filter.mean_low", "5"},
            {"filter.std_min", "4"},
            {"fuse.radius", "13"},
            {"pipeline.nucleus_radius_px", "13"},
            {"pipeline.output_size_px", "512"},
            {"pipeline.seed", "0"},
            {"pipeline.threads", "1"},
            {"pipeline.tile_fov_um", "100"},
            {"render.sigma", "4"},
            {"stain.brown_hue_ref_deg", "30"},
            {"stain.hue_split_deg", "125"},
            {"stain.nucleus_half_side_px", "10"},
        };
        return cfg;
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
            set(line.substr(0, eq), line.substr(eq + 1));
        }
    }

    void set(const std::string& key, const std::string& value) {
        if (!values_.count(key)) throw ConfigError("unknown config key '" + key + "'");
        values_[key] = value;
        explicit_.insert(key);
    }

    /// Re-derives radius-coupled defaults after all overrides are applied.
    void finalize() {
        const double radius = get_double("pipeline.nucleus_radius_px");
        auto derive = [&](const char* key, double value) {
            if (!explicit_.count(key)) values_[key] = format_number(value);
        };
        derive("extractor.min_distance", radius);
        derive("fuse.radius", radius);
        derive("eval.match_radius", radius);
        derive("stain.nucleus_half_side_px", std::floor(0.8 * radius));
    }

    const std::string& get(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
        return it->second;
    }

    double get_double(const std::string& key) const {
        const std::string& text = get(key);
        double v = 0.0;
        const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
        if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
            throw ConfigError("config key '" + key + "' is not a number: '" + text + "'");
        return v;
    }

    long long get_int(const std::string& key) const {
        const std::string& text = get(key);
        long long v = 0;
        const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
        if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
            throw ConfigError("config key '" + key + "' is not an integer: '" + text + "'");
        return v;
    }

    // pipeline.threads affects scheduling only, never results, so it stays
    // out of the echo: outputs must be bit-identical across thread counts.
    static bool echoed(const std::string& key) { return key != "pipeline.threads"; }

    /// key=value lines in sorted key order.
    std::string echo() const {
        std::ostringstream out;
        for (const auto& [key, value] : values_)
            if (echoed(key)) out << key << '=' << value << '\n';
        return out.str();
    }

    /// The same mapping as a flat JSON object (values kept as strings).
    std::string echo_json() const {
        std::ostringstream out;
        out << '{';
        bool first = true;
        for (const auto& [key, value] : values_) {
            if (!echoed(key)) continue;
            if (!first) out << ',';
            first = false;
            out << '"' << key << "\":\"" << value << '"';
        }
        out << '}';
        return out.str();
    }

private:
    static std::string format_number(double v) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, res.ptr);
    }

    std::map<std::string, std::string> values_;
    std::set<std::string> explicit_;
};
