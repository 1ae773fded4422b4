#include "sdan/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "sdan/errors.hpp"

namespace sdan {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

template <typename Int>
Int parse_int(std::string_view v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw std::invalid_argument("expected an integer");
  }
  return out;
}

double parse_double(std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw std::invalid_argument("expected a finite number");
  }
  return out;
}

bool parse_bool(std::string_view v) {
  std::string lower(v);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "true" || lower == "1" || lower == "yes") return true;
  if (lower == "false" || lower == "0" || lower == "no") return false;
  throw std::invalid_argument("expected true or false");
}

std::string show_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string show_bool(bool b) { return b ? "true" : "false"; }

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SDAN_INT_FIELD(key, member, type)                                     \
  Field {                                                                     \
    key, [](RunConfig& c, std::string_view v) { c.member = parse_int<type>(v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }           \
  }
#define SDAN_REAL_FIELD(key, member)                                          \
  Field {                                                                     \
    key, [](RunConfig& c, std::string_view v) { c.member = parse_double(v); }, \
        [](const RunConfig& c) { return show_double(c.member); }              \
  }
#define SDAN_BOOL_FIELD(key, member)                                          \
  Field {                                                                     \
    key, [](RunConfig& c, std::string_view v) { c.member = parse_bool(v); },  \
        [](const RunConfig& c) { return show_bool(c.member); }                \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SDAN_INT_FIELD("scale", model.scale, int),
      SDAN_INT_FIELD("channels", model.channels, int),
      SDAN_INT_FIELD("num_blocks", model.num_blocks, int),
      SDAN_INT_FIELD("replicate_n", model.replicate_n, int),
      SDAN_INT_FIELD("star_kernel", model.star_kernel, int),
      SDAN_INT_FIELD("strip_kernel", model.strip_kernel, int),
      SDAN_INT_FIELD("square_kernel", model.square_kernel, int),
      SDAN_INT_FIELD("dilation", model.dilation, int),
      SDAN_INT_FIELD("distill_channels", model.distill_channels, int),
      Field{"attention_variant",
            [](RunConfig& c, std::string_view v) {
              c.model.attention_variant = parse_attention(v);
            },
            [](const RunConfig& c) {
              return std::string(attention_name(c.model.attention_variant));
            }},
      SDAN_BOOL_FIELD("enable_sdm", model.enable_sdm),
      SDAN_BOOL_FIELD("enable_mmlka", model.enable_mmlka),
      SDAN_REAL_FIELD("lr", train.lr),
      SDAN_REAL_FIELD("beta1", train.beta1),
      SDAN_REAL_FIELD("beta2", train.beta2),
      SDAN_REAL_FIELD("beta3", train.beta3),
      SDAN_REAL_FIELD("eps", train.eps),
      SDAN_REAL_FIELD("weight_decay", train.weight_decay),
      SDAN_REAL_FIELD("ema_decay", train.ema_decay),
      SDAN_INT_FIELD("iterations", train.iterations, std::int64_t),
      SDAN_INT_FIELD("batch_size", train.batch_size, int),
      SDAN_INT_FIELD("patch_size", train.patch_size, int),
      SDAN_INT_FIELD("seed", train.seed, std::uint64_t),
      SDAN_BOOL_FIELD("deterministic", train.deterministic),
      SDAN_INT_FIELD("log_interval", train.log_interval, std::int64_t),
      SDAN_BOOL_FIELD("augment_flip", train.augment_flip),
      SDAN_BOOL_FIELD("augment_rot90", train.augment_rot90),
      Field{"data_root",
            [](RunConfig& c, std::string_view v) { c.data_root = std::string(v); },
            [](const RunConfig& c) { return c.data_root; }},
      Field{"out_dir",
            [](RunConfig& c, std::string_view v) { c.out_dir = std::string(v); },
            [](const RunConfig& c) { return c.out_dir; }},
  };
  return table;
}

#undef SDAN_INT_FIELD
#undef SDAN_REAL_FIELD
#undef SDAN_BOOL_FIELD

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const Field& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

RunConfig parse_run_config(std::string_view text, const std::string& source) {
  std::map<std::string, const Field*, std::less<>> by_key;
  for (const Field& f : fields()) by_key.emplace(f.key, &f);

  RunConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(where + ": expected 'key = value'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) {
      throw ConfigError(where + ": unknown key '" + std::string(key) + "'");
    }
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError(where + ": key '" + std::string(key) +
                        "' given more than once");
    }
    try {
      it->second->set(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + ": bad value '" + std::string(value) +
                        "' for key '" + std::string(key) + "': " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": key '" + std::string(key) + "': " + e.what());
    }
  }
  if (seen.count("channels") && !seen.count("distill_channels")) {
    cfg.model.distill_channels = cfg.model.channels / 2;
  }
  cfg.model.validate();
  cfg.train.validate(cfg.model);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.string());
}

std::string render_run_config(const RunConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace sdan
