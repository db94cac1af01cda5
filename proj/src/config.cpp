#include "jigsawhsi/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "jigsawhsi/error.hpp"
#include "jigsawhsi/raster_header.hpp"

namespace jigsawhsi {

namespace {

constexpr std::string_view kModule = "config";

// Thrown by value parsers; the caller adds line and key.
struct BadValue {
  std::string what;
};

std::size_t to_size(std::string_view text) {
  const std::string t = trim(text);
  std::size_t v = 0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || end != t.data() + t.size()) {
    throw BadValue{fmt::format("expected a non-negative integer, got '{}'", t)};
  }
  return v;
}

std::uint64_t to_u64(std::string_view text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || end != t.data() + t.size()) {
    throw BadValue{fmt::format("expected a non-negative integer, got '{}'", t)};
  }
  return v;
}

double to_double(std::string_view text) {
  const std::string t = trim(text);
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used == t.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw BadValue{fmt::format("expected a number, got '{}'", t)};
}

bool to_bool(std::string_view text) {
  const std::string t = lowercase(trim(text));
  if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
  if (t == "false" || t == "no" || t == "off" || t == "0") return false;
  throw BadValue{fmt::format("expected true or false, got '{}'", t)};
}

bool is_none(std::string_view text) {
  const std::string t = lowercase(trim(text));
  return t == "none" || t.empty();
}

std::optional<std::size_t> to_optional_size(std::string_view text) {
  if (is_none(text)) return std::nullopt;
  return to_size(text);
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

std::vector<std::size_t> to_size_list(std::string_view text) {
  std::vector<std::size_t> out;
  if (is_none(text)) return out;
  for (const auto& item : split_list(text)) out.push_back(to_size(item));
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out;
}

std::string join_sizes(std::span<const std::size_t> items) {
  if (items.empty()) return "None";
  std::vector<std::string> s;
  for (auto v : items) s.push_back(std::to_string(v));
  return join(s);
}

std::string optional_size(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : "None"; }

std::filesystem::path resolve(const std::filesystem::path& base, std::string_view text) {
  std::filesystem::path p{trim(text)};
  if (p.empty()) throw BadValue{"path must not be empty"};
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

using Setter = std::function<void(RunConfig&, std::string_view)>;

std::map<std::string, std::map<std::string, Setter>> key_table(const std::filesystem::path& base) {
  std::map<std::string, std::map<std::string, Setter>> t;
  auto& data = t["data"];
  data["cube"] = [base](RunConfig& c, std::string_view v) { c.cube = resolve(base, v); };
  data["labels"] = [base](RunConfig& c, std::string_view v) { c.labels = resolve(base, v); };
  data["output_dir"] = [base](RunConfig& c, std::string_view v) { c.output_dir = resolve(base, v); };
  data["class_names"] = [](RunConfig& c, std::string_view v) {
    c.class_names = is_none(v) ? std::vector<std::string>{} : split_list(v);
  };

  auto& dec = t["decomposition"];
  dec["decomposition"] = [](RunConfig& c, std::string_view v) {
    try {
      c.decomposition = parse_decomposition_method(v);
    } catch (const Error& e) {
      throw BadValue{fmt::format("unknown method '{}' (expected PCA, FA, SVD or NMF)", trim(v))};
    }
  };
  dec["input_channels"] = [](RunConfig& c, std::string_view v) { c.input_channels = to_size(v); };
  dec["fit_scope"] = [](RunConfig& c, std::string_view v) {
    try {
      c.fit_scope = parse_fit_scope(v);
    } catch (const Error&) {
      throw BadValue{fmt::format("expected full or train, got '{}'", trim(v))};
    }
  };

  auto& tiling = t["tiling"];
  tiling["window_size"] = [](RunConfig& c, std::string_view v) { c.window_size = to_size(v); };
  tiling["train_frac"] = [](RunConfig& c, std::string_view v) { c.train_frac = to_double(v); };
  tiling["stratified"] = [](RunConfig& c, std::string_view v) {
    c.stratified = to_bool(v);
  };

  auto& net = t["network"];
  net["hsi_filters"] = [](RunConfig& c, std::string_view v) { c.hsi_filters = to_optional_size(v); };
  net["module_a"] = [](RunConfig& c, std::string_view v) { c.module_a = to_size_list(v); };
  net["filter_size"] = [](RunConfig& c, std::string_view v) { c.filter_size = to_size(v); };
  net["branch_units"] = [](RunConfig& c, std::string_view v) { c.branch_units = to_size(v); };
  net["nin_before"] = [](RunConfig& c, std::string_view v) { c.nin_before = to_optional_size(v); };
  net["nin_after"] = [](RunConfig& c, std::string_view v) { c.nin_after = to_optional_size(v); };
  net["max_pool_size"] = [](RunConfig& c, std::string_view v) { c.max_pool_size = to_size(v); };
  net["avg_pool_size"] = [](RunConfig& c, std::string_view v) { c.avg_pool_size = to_size(v); };
  net["crop"] = [](RunConfig& c, std::string_view v) { c.crop = to_bool(v); };
  net["dense_units"] = [](RunConfig& c, std::string_view v) {
    const auto units = to_size_list(v);
    if (units.size() != 2) throw BadValue{"expected two comma-separated sizes"};
    c.dense_units = {units[0], units[1]};
  };
  net["dropout"] = [](RunConfig& c, std::string_view v) { c.dropout = to_double(v); };
  net["l2"] = [](RunConfig& c, std::string_view v) { c.training.l2_coeff = to_double(v); };

  auto& tr = t["training"];
  tr["optimizer"] = [](RunConfig& c, std::string_view v) {
    try {
      c.training.optimizer = parse_optimizer(v);
    } catch (const Error&) {
      throw BadValue{fmt::format("unknown optimizer '{}' (expected SGD, Adam or Adadelta)", trim(v))};
    }
  };
  tr["learning_rate"] = [](RunConfig& c, std::string_view v) { c.training.learning_rate = to_double(v); };
  tr["batch_size"] = [](RunConfig& c, std::string_view v) { c.training.batch_size = to_size(v); };
  tr["max_epochs"] = [](RunConfig& c, std::string_view v) { c.training.max_epochs = to_size(v); };
  tr["patience"] = [](RunConfig& c, std::string_view v) { c.training.patience = to_size(v); };
  tr["val_fraction"] = [](RunConfig& c, std::string_view v) { c.training.val_fraction = to_double(v); };
  tr["monitor_scope"] = [](RunConfig& c, std::string_view v) {
    try {
      c.training.monitor = parse_monitor_scope(v);
    } catch (const Error&) {
      throw BadValue{fmt::format("expected val or train_loss, got '{}'", trim(v))};
    }
  };
  tr["seed"] = [](RunConfig& c, std::string_view v) { c.training.seed = to_u64(v); };
  return t;
}

// Drops a trailing "# ..." or "; ..." comment that follows whitespace.
std::string_view strip_inline_comment(std::string_view line) {
  for (std::size_t i = 1; i < line.size(); ++i) {
    if ((line[i] == '#' || line[i] == ';') && (line[i - 1] == ' ' || line[i - 1] == '\t')) {
      return line.substr(0, i);
    }
  }
  return line;
}

}  // namespace

std::string_view to_string(FitScope scope) { return scope == FitScope::Full ? "full" : "train"; }

FitScope parse_fit_scope(std::string_view text) {
  const std::string t = lowercase(trim(text));
  if (t == "full") return FitScope::Full;
  if (t == "train") return FitScope::Train;
  throw ValidationError(kModule, fmt::format("unknown fit_scope '{}' (expected full or train)", text));
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError(kModule, msg); };
  if (cube.empty()) fail("[data] cube is required");
  if (labels.empty()) fail("[data] labels is required");
  if (window_size == 0) fail("[tiling] window_size is required");
  if (window_size % 2 == 0) fail("window_size must be odd");
  if (input_channels == 0) fail("[decomposition] input_channels is required and must be at least 1");
  if (filter_size == 0 || filter_size % 2 == 0) fail("filter_size must be odd");
  if (filter_size > window_size) fail("filter_size must not exceed window_size");
  if (!(train_frac > 0.0 && train_frac < 1.0)) fail("train_frac must be in (0, 1)");
  if (!(training.learning_rate > 0.0)) fail("learning_rate must be positive");
  if (training.batch_size == 0) fail("batch_size must be positive");
  if (training.max_epochs == 0) fail("max_epochs must be positive");
  if (training.patience == 0) fail("patience must be at least 1");
  if (!(training.val_fraction >= 0.0 && training.val_fraction < 1.0)) fail("val_fraction must be in [0, 1)");
  if (training.monitor == MonitorScope::ValAccuracy && training.val_fraction == 0.0) {
    fail("monitor_scope = val needs val_fraction > 0");
  }
  if (!(training.l2_coeff >= 0.0)) fail("l2 must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (branch_units == 0) fail("branch_units must be positive");
  if (hsi_filters && *hsi_filters == 0) fail("hsi_filters must be positive or None");
  if (nin_before && *nin_before == 0) fail("nin_before must be positive or None");
  if (nin_after && *nin_after == 0) fail("nin_after must be positive or None");
  for (auto u : module_a)
    if (u == 0) fail("module_a sizes must be positive");
  if (dense_units[0] == 0 || dense_units[1] == 0) fail("dense_units must be positive");
  if (max_pool_size == 0) fail("max_pool_size must be positive");
  if (avg_pool_size == 0) fail("avg_pool_size must be positive");
  // Everything the network checks too, with a dummy class count.
  try {
    network_spec(2).validate();
  } catch (const Error& e) {
    fail(e.what());
  }
}

NetworkSpec RunConfig::network_spec(std::size_t num_classes) const {
  NetworkSpec s;
  s.window = window_size;
  s.channels = input_channels;
  s.hsi_filters = hsi_filters;
  s.module_a = module_a;
  s.max_filter_size = filter_size;
  s.branch_units = branch_units;
  s.nin_before = nin_before;
  s.nin_after = nin_after;
  s.max_pool_size = max_pool_size;
  s.avg_pool_size = avg_pool_size;
  s.crop_enabled = crop;
  s.dense_units = dense_units;
  s.dropout_rate = dropout;
  s.num_classes = num_classes;
  return s;
}

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  const auto table = key_table(base_dir);
  RunConfig cfg;
  std::string section;
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    const std::string_view raw = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    auto fail = [&](const std::string& msg) {
      throw ValidationError(kModule, fmt::format("line {}: {}", line_no, msg));
    };

    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(fmt::format("malformed section header '{}'", line));
      section = lowercase(trim(std::string_view(line).substr(1, line.size() - 2)));
      if (!table.contains(section)) fail(fmt::format("unknown section [{}]", section));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(fmt::format("expected 'key = value', got '{}'", line));
    const std::string key = lowercase(trim(std::string_view(line).substr(0, eq)));
    const std::string value = trim(strip_inline_comment(std::string_view(line).substr(eq + 1)));
    if (key.empty()) fail("missing key before '='");
    if (section.empty()) fail(fmt::format("key '{}' appears before any [section]", key));
    const auto& keys = table.at(section);
    const auto it = keys.find(key);
    if (it == keys.end()) fail(fmt::format("unknown key '{}' in [{}]", key, section));
    if (!seen.insert({section, key}).second) fail(fmt::format("duplicate key '{}' in [{}]", key, section));
    try {
      it->second(cfg, value);
    } catch (const BadValue& e) {
      fail(fmt::format("{}: {}", key, e.what));
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(kModule, fmt::format("cannot open config file '{}'", path.string()));
  std::ostringstream text;
  text << in.rdbuf();
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  return parse_config(text.str(), base);
}

std::string serialize_config(const RunConfig& c) {
  std::string out;
  out += "[data]\n";
  out += fmt::format("cube = {}\n", c.cube.string());
  out += fmt::format("labels = {}\n", c.labels.string());
  out += fmt::format("output_dir = {}\n", c.output_dir.string());
  out += fmt::format("class_names = {}\n", c.class_names.empty() ? "None" : join(c.class_names));
  out += "\n[decomposition]\n";
  out += fmt::format("decomposition = {}\n", to_string(c.decomposition));
  out += fmt::format("input_channels = {}\n", c.input_channels);
  out += fmt::format("fit_scope = {}\n", to_string(c.fit_scope));
  out += "\n[tiling]\n";
  out += fmt::format("window_size = {}\n", c.window_size);
  out += fmt::format("train_frac = {}\n", c.train_frac);
  out += fmt::format("stratified = {}\n", c.stratified);
  out += "\n[network]\n";
  out += fmt::format("hsi_filters = {}\n", optional_size(c.hsi_filters));
  out += fmt::format("module_a = {}\n", join_sizes(c.module_a));
  out += fmt::format("filter_size = {}\n", c.filter_size);
  out += fmt::format("branch_units = {}\n", c.branch_units);
  out += fmt::format("nin_before = {}\n", optional_size(c.nin_before));
  out += fmt::format("nin_after = {}\n", optional_size(c.nin_after));
  out += fmt::format("max_pool_size = {}\n", c.max_pool_size);
  out += fmt::format("avg_pool_size = {}\n", c.avg_pool_size);
  out += fmt::format("crop = {}\n", c.crop);
  out += fmt::format("dense_units = {}, {}\n", c.dense_units[0], c.dense_units[1]);
  out += fmt::format("dropout = {}\n", c.dropout);
  out += fmt::format("l2 = {}\n", c.training.l2_coeff);
  out += "\n[training]\n";
  out += fmt::format("optimizer = {}\n", to_string(c.training.optimizer));
  out += fmt::format("learning_rate = {}\n", c.training.learning_rate);
  out += fmt::format("batch_size = {}\n", c.training.batch_size);
  out += fmt::format("max_epochs = {}\n", c.training.max_epochs);
  out += fmt::format("patience = {}\n", c.training.patience);
  out += fmt::format("val_fraction = {}\n", c.training.val_fraction);
  out += fmt::format("monitor_scope = {}\n", to_string(c.training.monitor));
  out += fmt::format("seed = {}\n", c.training.seed);
  return out;
}

}  // namespace jigsawhsi
