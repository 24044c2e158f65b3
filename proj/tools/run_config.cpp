#include "run_config.hpp"

#include "critdiff/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace critdiff::cli {

namespace {

KeySpec req(std::string s, std::string k, KeyType t, double lo, double hi) {
    return {std::move(s), std::move(k), t, lo, hi, true, "", {}};
}
KeySpec opt(std::string s, std::string k, KeyType t, double lo, double hi, std::string fallback) {
    return {std::move(s), std::move(k), t, lo, hi, false, std::move(fallback), {}};
}
KeySpec pick(std::string s, std::string k, std::vector<std::string> choices, std::string fallback) {
    return {std::move(s), std::move(k), KeyType::choice, 0, 0, false, std::move(fallback), std::move(choices)};
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(v);
    while (std::getline(in, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

std::string context(const KeySpec& s, const std::string& v) {
    return "config: [" + s.section + "] " + s.key + " = '" + v + "'";
}

double parse_real(const KeySpec& s, const std::string& v) {
    double x = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(x))
        throw ValidationError(context(s, v) + " is not a finite number");
    if (x < s.lo || x > s.hi)
        throw ValidationError(context(s, v) + " outside [" + format_real(s.lo) + ", " + format_real(s.hi) + "]");
    return x;
}

std::int64_t parse_int(const KeySpec& s, const std::string& v) {
    std::int64_t x = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ValidationError(context(s, v) + " is not an integer");
    if (static_cast<double>(x) < s.lo || static_cast<double>(x) > s.hi)
        throw ValidationError(context(s, v) + " outside [" + format_real(s.lo) + ", " + format_real(s.hi) + "]");
    return x;
}

// Validates a raw value and returns its canonical spelling.
std::string canonical(const KeySpec& s, const std::string& v) {
    switch (s.type) {
        case KeyType::real:
            return format_real(parse_real(s, v));
        case KeyType::integer:
            return std::to_string(parse_int(s, v));
        case KeyType::seed: {
            std::uint64_t x = 0;
            const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
            if (r.ec != std::errc() || r.ptr != v.data() + v.size())
                throw ValidationError(context(s, v) + " is not an unsigned 64-bit integer");
            return std::to_string(x);
        }
        case KeyType::boolean:
            if (v == "true" || v == "1" || v == "yes" || v == "on") return "true";
            if (v == "false" || v == "0" || v == "no" || v == "off") return "false";
            throw ValidationError(context(s, v) + " is not a boolean");
        case KeyType::text:
            return v;
        case KeyType::choice:
            if (std::find(s.choices.begin(), s.choices.end(), v) == s.choices.end()) {
                std::string all;
                for (const auto& c : s.choices) all += (all.empty() ? "" : "|") + c;
                throw ValidationError(context(s, v) + " is not one of " + all);
            }
            return v;
        case KeyType::real_list:
        case KeyType::int_list: {
            std::string out;
            for (const auto& item : split_list(v)) {
                out += out.empty() ? "" : ", ";
                out += s.type == KeyType::real_list ? format_real(parse_real(s, item)) : std::to_string(parse_int(s, item));
            }
            return out;
        }
    }
    return v;
}

const KeySpec& spec_for(const std::string& section, const std::string& key) {
    for (const auto& s : schema())
        if (s.section == section && s.key == key) return s;
    bool known_section = false;
    for (const auto& s : schema()) known_section = known_section || s.section == section;
    if (!known_section) throw ValidationError("config: unknown section [" + section + "]");
    throw ValidationError("config: unknown key '" + key + "' in [" + section + "]");
}

}  // namespace

const std::vector<KeySpec>& schema() {
    using T = KeyType;
    static const std::vector<KeySpec> s = {
        opt("run", "experiment", T::text, 0, 0, "default"),
        opt("run", "seed", T::seed, 0, 0, "0"),
        opt("run", "threads", T::integer, 0, 1024, "0"),
        opt("run", "out", T::text, 0, 0, "."),

        opt("qv", "samples", T::integer, 1, 1e8, "10000"),
        opt("qv", "x", T::real_list, 1.0, 1e6, "1, 1.3, 2, 4"),
        opt("qv", "eps", T::real, 1e-3, 2.0, "0.4"),
        opt("qv", "field", T::boolean, 0, 0, "true"),

        req("sde", "eps", T::real, 1e-3, 2.0),
        opt("sde", "lambda2_max", T::real, 1.0, 1e4, "4"),
        opt("sde", "n_steps", T::integer, 1, 1e8, "400"),
        opt("sde", "n_traj", T::integer, 1, 1e10, "10000"),
        pick("sde", "mode", {"full", "exp"}, "full"),
        pick("sde", "scheme", {"scaled", "raw_shell"}, "scaled"),
        opt("sde", "record_every", T::integer, 1, 1e8, "1"),
        opt("sde", "snapshot_lambda2", T::real_list, 1.0, 1e4, ""),
        opt("sde", "zero_c02", T::boolean, 0, 0, "false"),

        req("ode", "eps", T::real, 1e-3, 2.0),
        opt("ode", "x_end", T::real, 1.0, 1e4, "4"),
        pick("ode", "closure", {"bound", "mc"}, "bound"),
        opt("ode", "n_points", T::integer, 2, 1e6, "201"),
        opt("ode", "n_steps", T::integer, 1, 1e8, "400"),
        opt("ode", "n_traj", T::integer, 1, 1e10, "10000"),
        opt("ode", "rel_tol", T::real, 1e-14, 1e-2, "1e-10"),

        req("tail", "eps", T::real, 1e-3, 2.0),
        opt("tail", "lambda2", T::real, 1.0, 1e4, "25"),
        opt("tail", "margin", T::real, 1e-6, 1.0, "0.1"),
        opt("tail", "threshold", T::real, 0.0, 1.0, "0.3"),
        opt("tail", "resolution", T::integer, 1000, 1e7, "2000"),
        opt("tail", "tau_slices", T::integer, 2, 1e6, "192"),
        opt("tail", "n_steps", T::integer, 1, 1e8, "1200"),
        opt("tail", "n_traj", T::integer, 0, 1e10, "10000"),
        opt("tail", "tau", T::real, 0.0, 1e4, "0"),
        opt("tail", "sigma_hat", T::real, -1e4, 1e4, "0"),

        req("field", "eps", T::real, 1e-3, 2.0),
        opt("field", "n", T::integer, 16, 16384, "256"),
        opt("field", "box_mult", T::real, 1.0, 64.0, "4"),
        opt("field", "L_max", T::real, 1.0, 1e6, "16"),
        opt("field", "per_octave", T::integer, 1, 64, "4"),
        opt("field", "n_samples", T::integer, 1, 1e6, "16"),
        pick("field", "mode", {"full", "exp"}, "full"),
        opt("field", "snapshot", T::boolean, 0, 0, "false"),

        req("corrector", "eps", T::real, 1e-3, 2.0),
        opt("corrector", "n", T::integer, 16, 16384, "512"),
        opt("corrector", "box_mult", T::real, 1.0, 64.0, "4"),
        opt("corrector", "L", T::real_list, 1.0, 1e6, "8, 16, 32"),
        opt("corrector", "per_octave", T::integer, 1, 64, "4"),
        opt("corrector", "n_samples", T::integer, 2, 1e6, "20"),
        opt("corrector", "tol", T::real, 1e-15, 1e-2, "1e-08"),
        opt("corrector", "max_iter", T::integer, 1, 1e7, "2000"),
        opt("corrector", "restart", T::integer, 1, 1000, "30"),
        opt("corrector", "r_schedule", T::real_list, 1e-6, 1e6, "2, 2.5, 3, 4, 6, 8, 16"),

        req("particle", "eps", T::real, 1e-3, 2.0),
        opt("particle", "n", T::integer, 16, 16384, "2048"),
        opt("particle", "box_mult", T::real, 1.0, 64.0, "4"),
        opt("particle", "L", T::real, 1.0, 1e6, "64"),
        opt("particle", "per_octave", T::integer, 1, 64, "4"),
        opt("particle", "dt", T::real, 1e-6, 0.1, "0.1"),
        opt("particle", "times", T::real_list, 1e-6, 1e9, "1, 10, 100"),
        opt("particle", "n_paths", T::integer, 2, 1e10, "10000"),
        opt("particle", "occupancy_cells", T::integer, 1, 4096, "8"),

        opt("accept", "only", T::int_list, 1, 11, ""),
    };
    return s;
}

RunConfig RunConfig::parse(std::string_view text) {
    RunConfig c;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ValidationError("config: line " + std::to_string(lineno) + ": malformed section header");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            bool known = false;
            for (const auto& s : schema()) known = known || s.section == section;
            if (!known) throw ValidationError("config: unknown section [" + section + "]");
            c.values_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ValidationError("config: line " + std::to_string(lineno) + ": expected key = value");
        if (section.empty()) throw ValidationError("config: line " + std::to_string(lineno) + ": key outside a section");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        if (c.values_[section].count(key)) throw ValidationError("config: duplicate key '" + key + "' in [" + section + "]");
        c.set(section, key, trim(std::string_view(line).substr(eq + 1)));
    }
    return c;
}

std::string RunConfig::default_text() {
    return "[run]\n"
           "experiment = default\n"
           "seed = 20240917\n"
           "\n[qv]\nsamples = 10000\n"
           "\n[sde]\neps = 0.2\nlambda2_max = 4\nn_steps = 400\nn_traj = 10000\nrecord_every = 5\n"
           "\n[ode]\neps = 0.2\nx_end = 4\nclosure = bound\n"
           "\n[tail]\neps = 0.2\nlambda2 = 25\n"
           "\n[field]\neps = 0.6\nn = 256\nL_max = 16\nn_samples = 16\n"
           "\n[corrector]\neps = 0.05\nn = 512\nL = 32\nn_samples = 20\n"
           "\n[particle]\neps = 0.4\nn = 1024\nL = 32\nbox_mult = 2\ntimes = 1, 10, 100\nn_paths = 10000\n"
           "\n[accept]\n";
}

RunConfig RunConfig::load(const std::string& path) {
    if (path == "default") return parse(default_text());
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
    values_[section][key] = canonical(spec_for(section, key), value);
}

bool RunConfig::has(const std::string& section, const std::string& key) const {
    const auto s = values_.find(section);
    return s != values_.end() && s->second.count(key) > 0;
}

const std::string& RunConfig::raw(const std::string& section, const std::string& key) const {
    const KeySpec& s = spec_for(section, key);
    if (has(section, key)) return values_.at(section).at(key);
    if (s.required) throw ValidationError("config: missing required key '" + key + "' in [" + section + "]");
    return s.fallback;
}

double RunConfig::real(const std::string& section, const std::string& key) const {
    return parse_real(spec_for(section, key), raw(section, key));
}

std::int64_t RunConfig::integer(const std::string& section, const std::string& key) const {
    return parse_int(spec_for(section, key), raw(section, key));
}

std::uint64_t RunConfig::seed(const std::string& section, const std::string& key) const {
    return std::stoull(canonical(spec_for(section, key), raw(section, key)));
}

bool RunConfig::boolean(const std::string& section, const std::string& key) const {
    return raw(section, key) == "true";
}

std::string RunConfig::text(const std::string& section, const std::string& key) const { return raw(section, key); }

std::vector<double> RunConfig::reals(const std::string& section, const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(raw(section, key))) out.push_back(parse_real(spec_for(section, key), item));
    return out;
}

std::vector<std::int64_t> RunConfig::integers(const std::string& section, const std::string& key) const {
    std::vector<std::int64_t> out;
    for (const auto& item : split_list(raw(section, key))) out.push_back(parse_int(spec_for(section, key), item));
    return out;
}

std::string RunConfig::serialize() const {
    std::string out;
    for (const auto& [section, keys] : values_) {
        if (!out.empty()) out += '\n';
        out += '[' + section + "]\n";
        for (const auto& [k, v] : keys) out += k + " = " + v + '\n';
    }
    return out;
}

std::string RunConfig::hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : serialize()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace critdiff::cli
