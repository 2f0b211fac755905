#include "zsar/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

#include "zsar/errors.hpp"

namespace zsar {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw ParameterError(fmt::format("{}: '{}' is not a non-negative integer", key, v));
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw ParameterError(fmt::format("{}: '{}' is not a number", key, v));
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ParameterError(fmt::format("{}: '{}' is not a boolean", key, v));
}

std::string fmt_real(double v) { return fmt::format("{}", v); }
std::string fmt_bool(bool v) { return v ? "true" : "false"; }

struct Field {
    const char* key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define ZSAR_COUNT(k, member)                                                                          \
    Field{k, [](ExperimentConfig& c, const std::string& v) { c.member = parse_u64(k, v); },           \
          [](const ExperimentConfig& c) { return std::to_string(c.member); }}
#define ZSAR_REAL(k, member)                                                                           \
    Field{k, [](ExperimentConfig& c, const std::string& v) { c.member = parse_real(k, v); },          \
          [](const ExperimentConfig& c) { return fmt_real(c.member); }}
#define ZSAR_BOOL(k, member)                                                                           \
    Field{k, [](ExperimentConfig& c, const std::string& v) { c.member = parse_bool(k, v); },          \
          [](const ExperimentConfig& c) { return fmt_bool(c.member); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> table{
        Field{"name", [](ExperimentConfig& c, const std::string& v) { c.name = v; },
              [](const ExperimentConfig& c) { return c.name; }},
        Field{"seeds", [](ExperimentConfig& c, const std::string& v) { c.seeds = parse_seed_list(v); },
              [](const ExperimentConfig& c) {
                  std::string s;
                  for (std::size_t i = 0; i < c.seeds.size(); ++i) s += (i ? "," : "") + std::to_string(c.seeds[i]);
                  return s;
              }},
        ZSAR_COUNT("k_seen", k_seen),
        ZSAR_COUNT("k_unseen", k_unseen),
        ZSAR_COUNT("videos_per_class", videos_per_class),
        ZSAR_COUNT("frames", frames),
        ZSAR_COUNT("height", height),
        ZSAR_COUNT("width", width),
        ZSAR_COUNT("channels", channels),
        ZSAR_COUNT("embed_dim", embed_dim),
        ZSAR_COUNT("context_length", context_length),
        ZSAR_REAL("alpha", alpha),
        ZSAR_REAL("beta", beta),
        ZSAR_REAL("delta", delta),
        ZSAR_COUNT("offset_hidden", offset_hidden),
        ZSAR_BOOL("use_da", use_da),
        ZSAR_BOOL("use_msm", use_msm),
        ZSAR_BOOL("use_mab", use_mab),
        Field{"splitting", [](ExperimentConfig& c, const std::string& v) { c.splitting = parse_splitting(v); },
              [](const ExperimentConfig& c) { return to_string(c.splitting); }},
        ZSAR_REAL("lambda_n", lambda_n),
        ZSAR_REAL("temperature", temperature),
        ZSAR_BOOL("use_ce", loss.ce),
        ZSAR_BOOL("use_cl", loss.cl),
        ZSAR_BOOL("use_clip", loss.clip),
        ZSAR_BOOL("use_proj", loss.proj),
        ZSAR_BOOL("use_neg", loss.neg),
        ZSAR_REAL("lr", lr),
        ZSAR_COUNT("epochs", epochs),
        ZSAR_COUNT("batch_size", batch_size),
        ZSAR_REAL("noise_sigma", noise_sigma),
        ZSAR_REAL("motion_amplitude", motion_amplitude),
        ZSAR_COUNT("motion_frames", motion_frames),
        ZSAR_REAL("domain_gap", domain_gap),
        ZSAR_REAL("background", background),
        ZSAR_REAL("text_noise", text_noise),
        Field{"classes_file", [](ExperimentConfig& c, const std::string& v) { c.classes_file = v; },
              [](const ExperimentConfig& c) { return c.classes_file; }},
    };
    return table;
}

#undef ZSAR_COUNT
#undef ZSAR_REAL
#undef ZSAR_BOOL

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (key == f.key) {
            f.set(*this, trim(value));
            return;
        }
    }
    throw ParameterError(fmt::format("unknown config key '{}'", key));
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::entries() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : fields()) out.emplace_back(f.key, f.get(*this));
    return out;
}

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw ParameterError("seeds must not be empty");
    if (k_seen < 2 || k_unseen < 2) throw ParameterError("k_seen and k_unseen must both be at least 2");
    if (videos_per_class == 0) throw ParameterError("videos_per_class must be positive");
    if (frames < 4 || frames % 2 != 0) throw DimensionError(fmt::format("frames must be even and >= 4, got {}", frames));
    if (height == 0 || width == 0) throw DimensionError("height and width must be positive");
    if (channels != embed_dim) throw DimensionError("channels must equal embed_dim (the adapter is shared)");
    if (embed_dim < 4) throw DimensionError("embed_dim must be at least 4");
    if (alpha < 0.0 || beta < 0.0) throw ParameterError("alpha and beta must be non-negative");
    if (!(delta > 0.0)) throw ParameterError("delta must be positive");
    if (offset_hidden == 0) throw ParameterError("offset_hidden must be positive");
    if (lambda_n < 0.0) throw ParameterError("lambda_n must be non-negative");
    if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
    if (!(lr >= 0.0)) throw ParameterError("lr must be non-negative");
    if (!loss.ce && !loss.cl && !loss.clip && !loss.proj && !loss.neg) {
        throw ParameterError("at least one loss component must be enabled");
    }
    if (noise_sigma < 0.0 || motion_amplitude < 0.0) throw ParameterError("noise_sigma and motion_amplitude must be >= 0");
    if (motion_frames > frames) throw ParameterError("motion_frames cannot exceed frames");
    if (domain_gap < 0.0 || background < 0.0 || text_noise < 0.0) {
        throw ParameterError("domain_gap, background and text_noise must be >= 0");
    }
}

Architecture ExperimentConfig::architecture() const {
    Architecture a;
    a.use_da = use_da;
    a.use_msm = use_msm;
    a.use_mab = use_mab;
    a.splitting = splitting;
    a.saliency = {alpha, beta};
    a.max_offset = delta;
    a.offset_hidden = offset_hidden;
    return a;
}

ObjectiveOptions ExperimentConfig::objective_options() const { return {loss, lambda_n, temperature}; }

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParameterError(fmt::format("config line {}: expected key = value", lineno));
        base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw ParameterError(fmt::format("cannot open config {}", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        if (const auto dash = item.find('-'); dash != std::string::npos && dash > 0) {
            const auto lo = parse_u64("seeds", trim(item.substr(0, dash)));
            const auto hi = parse_u64("seeds", trim(item.substr(dash + 1)));
            if (hi < lo) throw ParameterError(fmt::format("seeds: empty range '{}'", item));
            for (auto s = lo; s <= hi; ++s) out.push_back(s);
        } else {
            out.push_back(parse_u64("seeds", item));
        }
    }
    if (out.empty()) throw ParameterError("seeds: empty list");
    return out;
}

}  // namespace zsar
