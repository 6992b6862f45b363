#include "damgan/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace damgan::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  T v{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "' as a number");
  }
  return v;
}

template <typename T>
std::string format_number(T v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
data::Range<T> parse_range(const std::string& key, const std::string& text) {
  const auto parts = split_list(text);
  if (parts.size() != 2) throw ConfigError("config key '" + key + "': expected 'lo, hi', got '" + text + "'");
  return {parse_number<T>(key, parts[0]), parse_number<T>(key, parts[1])};
}

template <typename T>
std::string format_range(const data::Range<T>& r) {
  return format_number(r.lo) + ", " + format_number(r.hi);
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& name, const std::string& value)> set;
};

template <typename T, typename Access>
Field number(std::string section, std::string key, Access access) {
  return {std::move(section), std::move(key),
          [access](const RunConfig& c) { return format_number(access(c)); },
          [access](RunConfig& c, const std::string& name, const std::string& v) {
            access(c) = parse_number<T>(name, v);
          }};
}

template <typename T, typename Access>
Field range(std::string section, std::string key, Access access) {
  return {std::move(section), std::move(key),
          [access](const RunConfig& c) { return format_range(access(c)); },
          [access](RunConfig& c, const std::string& name, const std::string& v) {
            access(c) = parse_range<T>(name, v);
          }};
}

template <typename Access>
Field path(std::string section, std::string key, Access access) {
  return {std::move(section), std::move(key),
          [access](const RunConfig& c) { return access(c).generic_string(); },
          [access](RunConfig& c, const std::string&, const std::string& v) { access(c) = trim(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    // [model]
    f.push_back(number<Index>("model", "resolution", [](auto& c) -> auto& { return c.model.resolution; }));
    f.push_back(number<int>("model", "coarse_levels", [](auto& c) -> auto& { return c.model.coarse_levels; }));
    f.push_back(number<int>("model", "dam_levels", [](auto& c) -> auto& { return c.model.dam_levels; }));
    f.push_back(number<Index>("model", "base_width", [](auto& c) -> auto& { return c.model.base_width; }));
    f.push_back(number<int>("model", "max_width_multiplier",
                            [](auto& c) -> auto& { return c.model.max_width_multiplier; }));
    f.push_back({"model", "dilation_rates",
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.model.dilation_rates.size(); ++i) {
                     s += (i ? ", " : "") + format_number(c.model.dilation_rates[i]);
                   }
                   return s;
                 },
                 [](RunConfig& c, const std::string& name, const std::string& v) {
                   c.model.dilation_rates.clear();
                   for (const auto& p : split_list(v)) c.model.dilation_rates.push_back(parse_number<int>(name, p));
                 }});
    f.push_back({"model", "norm",
                 [](const RunConfig& c) { return std::string(c.model.norm == model::Norm::none ? "none" : "instance"); },
                 [](RunConfig& c, const std::string& name, const std::string& v) {
                   const auto t = trim(v);
                   if (t == "none") c.model.norm = model::Norm::none;
                   else if (t == "instance") c.model.norm = model::Norm::instance;
                   else throw ConfigError("config key '" + name + "': expected none|instance, got '" + t + "'");
                 }});
    f.push_back(number<double>("model", "leaky_slope", [](auto& c) -> auto& { return c.model.leaky_slope; }));
    f.push_back(number<Index>("model", "disc_base_width", [](auto& c) -> auto& { return c.model.disc_base_width; }));
    // [train]
    f.push_back(number<int>("train", "batch_size", [](auto& c) -> auto& { return c.train.batch_size; }));
    f.push_back(number<std::int64_t>("train", "steps", [](auto& c) -> auto& { return c.train.steps; }));
    f.push_back(number<double>("train", "lr_g", [](auto& c) -> auto& { return c.train.lr_g; }));
    f.push_back(number<double>("train", "lr_d", [](auto& c) -> auto& { return c.train.lr_d; }));
    f.push_back(number<double>("train", "adam_beta1", [](auto& c) -> auto& { return c.train.adam_beta1; }));
    f.push_back(number<double>("train", "adam_beta2", [](auto& c) -> auto& { return c.train.adam_beta2; }));
    f.push_back(number<double>("train", "adam_eps", [](auto& c) -> auto& { return c.train.adam_eps; }));
    f.push_back(number<int>("train", "d_steps_per_g", [](auto& c) -> auto& { return c.train.d_steps_per_g; }));
    f.push_back(number<double>("train", "lambda_re", [](auto& c) -> auto& { return c.train.weights.re; }));
    f.push_back(number<double>("train", "lambda_adv", [](auto& c) -> auto& { return c.train.weights.adv; }));
    f.push_back(number<double>("train", "lambda_dam", [](auto& c) -> auto& { return c.train.weights.dam; }));
    f.push_back({"train", "mask_schedule",
                 [](const RunConfig& c) { return std::string(train::to_string(c.train.mask_schedule)); },
                 [](RunConfig& c, const std::string& name, const std::string& v) {
                   try {
                     c.train.mask_schedule = train::parse_mask_schedule(trim(v));
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError("config key '" + name + "': " + e.what());
                   }
                 }});
    f.push_back(number<std::uint64_t>("train", "seed", [](auto& c) -> auto& { return c.train.seed; }));
    f.push_back(number<std::int64_t>("train", "checkpoint_every",
                                     [](auto& c) -> auto& { return c.train.checkpoint_every; }));
    f.push_back(number<std::int64_t>("train", "eval_every", [](auto& c) -> auto& { return c.train.eval_every; }));
    // [mask]
    f.push_back(number<Index>("mask", "center_size", [](auto& c) -> auto& { return c.train.mask_spec.center_size; }));
    f.push_back(range<int>("mask", "stroke_count", [](auto& c) -> auto& { return c.train.mask_spec.stroke_count; }));
    f.push_back(range<double>("mask", "stroke_width", [](auto& c) -> auto& { return c.train.mask_spec.stroke_width; }));
    f.push_back(range<int>("mask", "vertex_count", [](auto& c) -> auto& { return c.train.mask_spec.vertex_count; }));
    f.push_back(range<double>("mask", "segment_length",
                              [](auto& c) -> auto& { return c.train.mask_spec.segment_length; }));
    f.push_back(number<double>("mask", "max_turn_angle",
                               [](auto& c) -> auto& { return c.train.mask_spec.max_turn_angle; }));
    f.push_back(range<double>("mask", "coverage", [](auto& c) -> auto& { return c.train.mask_spec.coverage; }));
    f.push_back(number<int>("mask", "max_attempts", [](auto& c) -> auto& { return c.train.mask_spec.max_attempts; }));
    // [paths]
    f.push_back(path("paths", "data_root", [](auto& c) -> auto& { return c.paths.data_root; }));
    f.push_back(path("paths", "manifest", [](auto& c) -> auto& { return c.paths.manifest; }));
    f.push_back(path("paths", "out_dir", [](auto& c) -> auto& { return c.paths.out_dir; }));
    return f;
  }();
  return table;
}

const Field& find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields())
    if (f.section == section && f.key == key) return f;
  throw ConfigError("unknown config key '" + section + "." + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  try {
    model.validate();
    train.validate();
    auto spec = train.mask_spec;
    spec.resolution = model.resolution;
    spec.validate();
    spec.mode = data::MaskMode::free_form;
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_config(std::istream& in, RunConfig base) {
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "train" && section != "mask" && section != "paths") {
        throw ConfigError("config line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    if (section.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": key outside a section");
    apply_override(base, section + "." + trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& file, RunConfig base) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  return parse_config(in, std::move(base));
}

void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) throw ConfigError("config key '" + dotted_key + "' must be section.key");
  const auto& f = find_field(dotted_key.substr(0, dot), dotted_key.substr(dot + 1));
  f.set(cfg, dotted_key, value);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' must be section.key=value");
  apply_override(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

std::string dump_config(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.section + "." + f.key);
  return keys;
}

}  // namespace damgan::cli
