#include "recapfx/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "recapfx/error.hpp"

namespace recapfx {
namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void flatten(const nlohmann::json& node, const std::string& prefix, KeyValues& out) {
  if (node.is_object()) {
    for (const auto& [k, v] : node.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else if (node.is_array()) {
    std::string joined;
    for (const auto& v : node) {
      if (!joined.empty()) joined += ",";
      joined += v.is_string() ? v.get<std::string>() : v.dump();
    }
    out.set(prefix, joined);
  } else if (node.is_string()) {
    out.set(prefix, node.get<std::string>());
  } else {
    out.set(prefix, node.dump());
  }
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ParameterError("config key `" + key + "`: `" + v + "` is not a number");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ParameterError("config key `" + key + "`: `" + v + "` is not a non-negative integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ParameterError("config key `" + key + "`: `" + v + "` is not a boolean");
}

trees::Growth to_growth(const std::string& key, const std::string& v) {
  if (v == "level_wise") return trees::Growth::level_wise;
  if (v == "leaf_wise") return trees::Growth::leaf_wise;
  throw ParameterError("config key `" + key + "`: growth must be level_wise or leaf_wise");
}

trees::Splitter to_splitter(const std::string& key, const std::string& v) {
  if (v == "exact") return trees::Splitter::exact;
  if (v == "histogram") return trees::Splitter::histogram;
  throw ParameterError("config key `" + key + "`: splitter must be exact or histogram");
}

using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;

template <class T>
Setter size_field(T PipelineConfig::*field) {
  return [field](PipelineConfig& c, const std::string& k, const std::string& v) {
    c.*field = static_cast<T>(to_uint(k, v));
  };
}

Setter range_field(std::optional<TimeRange> PipelineConfig::*field) {
  return [field](PipelineConfig& c, const std::string& k, const std::string& v) {
    try {
      c.*field = parse_range(v);
    } catch (const Error& e) {
      throw ParameterError("config key `" + k + "`: " + e.what());
    }
  };
}

void add_boost_keys(std::map<std::string, Setter>& s, const std::string& prefix,
                    trees::BoostParams PipelineConfig::*field) {
  auto on = [field](auto fn) {
    return [field, fn](PipelineConfig& c, const std::string& k, const std::string& v) { fn(c.*field, k, v); };
  };
  s[prefix + ".n_trees"] = on([](auto& p, auto& k, auto& v) { p.n_trees = to_uint(k, v); });
  s[prefix + ".learning_rate"] = on([](auto& p, auto& k, auto& v) { p.learning_rate = to_double(k, v); });
  s[prefix + ".lambda"] = on([](auto& p, auto& k, auto& v) { p.tree.lambda = to_double(k, v); });
  s[prefix + ".gamma"] = on([](auto& p, auto& k, auto& v) { p.tree.gamma = to_double(k, v); });
  s[prefix + ".max_depth"] = on([](auto& p, auto& k, auto& v) { p.tree.max_depth = to_uint(k, v); });
  s[prefix + ".max_leaves"] = on([](auto& p, auto& k, auto& v) { p.tree.max_leaves = to_uint(k, v); });
  s[prefix + ".min_samples_leaf"] = on([](auto& p, auto& k, auto& v) { p.tree.min_samples_leaf = to_uint(k, v); });
  s[prefix + ".min_child_weight"] = on([](auto& p, auto& k, auto& v) { p.tree.min_child_weight = to_double(k, v); });
  s[prefix + ".growth"] = on([](auto& p, auto& k, auto& v) { p.tree.growth = to_growth(k, v); });
  s[prefix + ".splitter"] = on([](auto& p, auto& k, auto& v) { p.tree.splitter = to_splitter(k, v); });
  s[prefix + ".bins"] = on([](auto& p, auto& k, auto& v) { p.tree.bins = to_uint(k, v); });
  s[prefix + ".goss"] = on([](auto& p, auto& k, auto& v) {
    if (to_bool(k, v)) {
      if (!p.goss) p.goss = trees::Goss{};
    } else {
      p.goss.reset();
    }
  });
  s[prefix + ".goss.top"] = on([](auto& p, auto& k, auto& v) {
    if (!p.goss) p.goss = trees::Goss{};
    p.goss->top = to_double(k, v);
  });
  s[prefix + ".goss.other"] = on([](auto& p, auto& k, auto& v) {
    if (!p.goss) p.goss = trees::Goss{};
    p.goss->other = to_double(k, v);
  });
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> s;
    s["data.source"] = [](auto& c, auto& k, auto& v) {
      if (v != "synthetic" && v != "csv") throw ParameterError("config key `" + k + "`: expected synthetic or csv");
      c.source = v;
    };
    s["data.path"] = [](auto& c, auto&, auto& v) { c.csv_path = v; };
    s["data.synthetic.n"] = [](auto& c, auto& k, auto& v) { c.synthetic.n = to_uint(k, v); };
    s["data.synthetic.seed"] = [](auto& c, auto& k, auto& v) { c.synthetic.seed = to_uint(k, v); };
    s["data.synthetic.volatility"] = [](auto& c, auto& k, auto& v) { c.synthetic.volatility = to_double(k, v); };
    s["data.synthetic.start_price"] = [](auto& c, auto& k, auto& v) { c.synthetic.start_price = to_double(k, v); };
    s["data.synthetic.start"] = [](auto& c, auto&, auto& v) { c.synthetic.start = parse_timestamp(v); };
    s["data.synthetic.timeframe_minutes"] = [](auto& c, auto& k, auto& v) {
      c.synthetic.timeframe = std::chrono::minutes(to_uint(k, v));
    };
    s["data.synthetic.planted.count"] = [](auto& c, auto& k, auto& v) { c.synthetic.planted.count = to_uint(k, v); };
    s["data.synthetic.planted.coefficient"] = [](auto& c, auto& k, auto& v) {
      c.synthetic.planted.coefficient = to_double(k, v);
    };
    s["data.synthetic.planted.persistence"] = [](auto& c, auto& k, auto& v) {
      c.synthetic.planted.persistence = to_double(k, v);
    };
    s["target.horizon"] = size_field(&PipelineConfig::horizon);
    s["window.lookback"] = size_field(&PipelineConfig::lookback);

    s["arima.enabled"] = [](auto& c, auto& k, auto& v) { c.arima_enabled = to_bool(k, v); };
    s["arima.columns"] = [](auto& c, auto&, auto& v) { c.arima_columns = split_list(v); };
    s["arima.p_max"] = size_field(&PipelineConfig::arima_p_max);
    s["arima.q_max"] = size_field(&PipelineConfig::arima_q_max);
    s["arima.d_set"] = [](auto& c, auto& k, auto& v) {
      c.arima_d_set.clear();
      for (const auto& item : split_list(v)) c.arima_d_set.push_back(to_uint(k, item));
    };
    s["arima.d"] = s["arima.d_set"];
    s["arima.fit_bars"] = size_field(&PipelineConfig::arima_fit_bars);
    s["arima.refit_every"] = size_field(&PipelineConfig::arima_refit_every);

    s["split.train"] = range_field(&PipelineConfig::train);
    s["split.validation"] = range_field(&PipelineConfig::validation);
    s["split.test"] = range_field(&PipelineConfig::test);
    s["recap.train"] = range_field(&PipelineConfig::recap_train);
    s["recap.heldout"] = range_field(&PipelineConfig::recap_heldout);
    s["meta.train"] = range_field(&PipelineConfig::meta_train);
    s["meta.validation"] = range_field(&PipelineConfig::meta_validation);
    s["meta.test"] = range_field(&PipelineConfig::meta_test);

    add_boost_keys(s, "newton_boost", &PipelineConfig::newton_boost);
    add_boost_keys(s, "hist_boost", &PipelineConfig::hist_boost);
    s["forest.n_trees"] = [](auto& c, auto& k, auto& v) { c.forest.n_trees = to_uint(k, v); };
    s["forest.max_depth"] = [](auto& c, auto& k, auto& v) { c.forest.max_depth = to_uint(k, v); };
    s["forest.features_per_split"] = [](auto& c, auto& k, auto& v) { c.forest.features_per_split = to_uint(k, v); };
    s["forest.min_samples_leaf"] = [](auto& c, auto& k, auto& v) { c.forest.min_samples_leaf = to_uint(k, v); };
    s["forest.bootstrap"] = [](auto& c, auto& k, auto& v) { c.forest.bootstrap = to_bool(k, v); };

    s["rnn.hidden"] = [](auto& c, auto& k, auto& v) { c.rnn_arch.hidden = to_uint(k, v); };
    s["rnn.batch_size"] = [](auto& c, auto& k, auto& v) { c.rnn_train.batch_size = to_uint(k, v); };
    s["rnn.learning_rate"] = [](auto& c, auto& k, auto& v) { c.rnn_train.learning_rate = to_double(k, v); };
    s["rnn.max_epochs"] = [](auto& c, auto& k, auto& v) { c.rnn_train.max_epochs = to_uint(k, v); };
    s["rnn.patience"] = [](auto& c, auto& k, auto& v) { c.rnn_train.patience = to_uint(k, v); };
    s["rnn.early_stop_fraction"] = [](auto& c, auto& k, auto& v) { c.rnn_early_stop_fraction = to_double(k, v); };
    s["rnn.optimizer"] = [](auto& c, auto& k, auto& v) {
      if (v == "adam")
        c.rnn_train.optimizer = recurrent::Optimizer::adam;
      else if (v == "sgd")
        c.rnn_train.optimizer = recurrent::Optimizer::sgd;
      else
        throw ParameterError("config key `" + k + "`: optimizer must be adam or sgd");
    };

    s["meta.net.hidden"] = [](auto& c, auto& k, auto& v) { c.meta.hidden = to_uint(k, v); };
    s["meta.net.learning_rate"] = [](auto& c, auto& k, auto& v) { c.meta.learning_rate = to_double(k, v); };
    s["meta.net.batch_size"] = [](auto& c, auto& k, auto& v) { c.meta.batch_size = to_uint(k, v); };
    s["meta.net.max_epochs"] = [](auto& c, auto& k, auto& v) { c.meta.max_epochs = to_uint(k, v); };
    s["meta.net.patience"] = [](auto& c, auto& k, auto& v) { c.meta.patience = to_uint(k, v); };

    s["recap.k"] = [](auto& c, auto& k, auto& v) {
      c.recap_k.clear();
      for (const auto& item : split_list(v)) c.recap_k.push_back(to_uint(k, item));
    };
    s["stacking.k"] = size_field(&PipelineConfig::stacking_k);
    s["seed"] = [](auto& c, auto& k, auto& v) { c.seed = to_uint(k, v); };
    s["threads"] = [](auto& c, auto& k, auto& v) { c.threads = static_cast<unsigned>(to_uint(k, v)); };
    s["output.dir"] = [](auto& c, auto&, auto& v) { c.output_dir = v; };
    s["paper_mode"] = [](auto& c, auto& k, auto& v) { c.paper_mode = to_bool(k, v); };
    s["leakage_guard"] = [](auto& c, auto& k, auto& v) { c.leakage_guard = to_bool(k, v); };
    return s;
  }();
  return table;
}

/// `indicator.<name>.<kind>` or `indicator.<name>.<kind>.<param>`.
void apply_indicator_key(PipelineConfig& c, const std::string& key, const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream in(key);
  std::string part;
  while (std::getline(in, part, '.')) parts.push_back(part);
  if (parts.size() < 3 || parts.size() > 4 || parts[1].empty())
    throw ParameterError("config key `" + key + "`: expected indicator.<name>.<kind>[.<param>]");
  const auto kind = indicators::parse_kind(parts[2]);
  auto it = std::find_if(c.indicators.begin(), c.indicators.end(),
                         [&](const auto& s) { return s.name == parts[1]; });
  if (it == c.indicators.end()) {
    c.indicators.push_back({parts[1], kind, {}});
    it = std::prev(c.indicators.end());
  } else if (it->kind != kind) {
    throw ParameterError("config key `" + key + "`: indicator `" + parts[1] + "` declared with two kinds");
  }
  if (parts.size() == 4)
    it->params[parts[3]] = to_double(key, value);
  else if (!to_bool(key, value))
    c.indicators.erase(it);
}

bool has_parent_dir(const std::filesystem::path& p) { return !p.parent_path().empty(); }

}  // namespace

TimeRange parse_range(const std::string& text) {
  const auto slash = text.find('/');
  if (slash == std::string::npos) throw ParameterError("range `" + text + "` must be `start/end`");
  return {parse_timestamp(trim(text.substr(0, slash))), parse_timestamp(trim(text.substr(slash + 1)))};
}

KeyValues KeyValues::parse_text(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParameterError("config line " + std::to_string(line_no) + ": expected `key = value`");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParameterError("config line " + std::to_string(line_no) + ": empty key");
    kv.set(key, value);
  }
  return kv;
}

KeyValues KeyValues::parse_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParameterError("JSON config must be an object");
  KeyValues kv;
  flatten(doc, "", kv);
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config `" + path.string() + "`");
  std::stringstream buf;
  buf << in.rdbuf();
  const auto text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return parse_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
      throw ParameterError("config `" + path.string() + "` is not valid JSON: " + e.what());
    }
  }
  return parse_text(text);
}

PipelineConfig default_config() {
  PipelineConfig c;
  c.indicators = indicators::default_specs();
  c.newton_boost.n_trees = 100;
  c.newton_boost.learning_rate = 0.3;
  c.newton_boost.tree.max_depth = 6;
  c.hist_boost.n_trees = 100;
  c.hist_boost.learning_rate = 0.1;
  c.hist_boost.tree.max_depth = 0;
  c.hist_boost.tree.max_leaves = 31;
  c.hist_boost.tree.growth = trees::Growth::leaf_wise;
  c.hist_boost.tree.splitter = trees::Splitter::histogram;
  c.hist_boost.tree.min_samples_leaf = 20;
  c.hist_boost.goss = trees::Goss{};
  c.forest.n_trees = 100;
  c.rnn_train.max_epochs = 100;
  return c;
}

PipelineConfig parse_config(const KeyValues& kv) {
  PipelineConfig c = default_config();
  bool custom_indicators = false;
  for (const auto& [key, value] : kv.values()) {
    if (key.rfind("indicator.", 0) == 0) {
      if (!custom_indicators) {
        c.indicators.clear();
        custom_indicators = true;
      }
      continue;
    }
  }
  for (const auto& [key, value] : kv.values()) {
    c.echo[key] = value;
    if (key.rfind("indicator.", 0) == 0) {
      apply_indicator_key(c, key, value);
      continue;
    }
    const auto it = setters().find(key);
    if (it == setters().end()) throw ParameterError("unknown config key `" + key + "`");
    try {
      it->second(c, key, value);
    } catch (const ParameterError&) {
      throw;
    } catch (const Error& e) {
      throw ParameterError("config key `" + key + "`: " + e.what());
    }
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  auto c = parse_config(KeyValues::load(path));
  if (c.source == "csv" && c.csv_path.is_relative() && has_parent_dir(path))
    c.csv_path = path.parent_path() / c.csv_path;
  return c;
}

std::string to_string(Finding::Severity s) { return s == Finding::Severity::error ? "error" : "warning"; }

namespace {

// Window boundaries used when paper mode runs without explicit recap keys.
TimeRange paper_recap_train() {
  using namespace std::chrono;
  return {sys_days{year{2014} / 4 / 1}, sys_days{year{2018} / 4 / 1}};
}
TimeRange paper_recap_heldout() {
  using namespace std::chrono;
  return {sys_days{year{2020} / 4 / 1}, sys_days{year{2021} / 5 / 1}};
}

}  // namespace

TimeRange effective_recap_train(const PipelineConfig& c) {
  if (c.recap_train) return *c.recap_train;
  if (c.paper_mode) return paper_recap_train();
  if (!c.train) throw ParameterError("split.train is not set");
  return *c.train;
}

TimeRange effective_recap_heldout(const PipelineConfig& c) {
  if (c.recap_heldout) return *c.recap_heldout;
  if (c.paper_mode) return paper_recap_heldout();
  if (!c.validation) throw ParameterError("split.validation is not set");
  return *c.validation;
}

std::vector<Finding> validate_config(const PipelineConfig& c) {
  std::vector<Finding> out;
  auto error = [&](std::string key, std::string msg) {
    out.push_back({Finding::Severity::error, std::move(key), std::move(msg)});
  };
  auto warning = [&](std::string key, std::string msg) {
    out.push_back({Finding::Severity::warning, std::move(key), std::move(msg)});
  };
  // In paper mode the guard downgrades to warnings.
  auto leak = [&](std::string key, std::string msg) {
    if (c.paper_mode || !c.leakage_guard)
      warning(std::move(key), "leakage: " + msg);
    else
      error(std::move(key), "leakage: " + msg);
  };

  if (c.source == "csv" && c.csv_path.empty()) error("data.path", "csv source needs a path");
  if (c.source == "synthetic") {
    if (c.synthetic.n == 0) error("data.synthetic.n", "must be >= 1");
    if (!(c.synthetic.volatility > 0.0)) error("data.synthetic.volatility", "must be > 0");
  }
  if (c.horizon == 0) error("target.horizon", "must be >= 1");
  if (c.lookback == 0) error("window.lookback", "must be >= 1");
  if (c.indicators.empty()) warning("indicator", "no indicators configured; only OHLC columns are used");

  const std::pair<const char*, const std::optional<TimeRange>*> main_ranges[] = {
      {"split.train", &c.train}, {"split.validation", &c.validation}, {"split.test", &c.test}};
  bool main_ok = true;
  for (const auto& [key, r] : main_ranges) {
    if (!*r) {
      error(key, "range is not set");
      main_ok = false;
    } else if (!(*r)->valid()) {
      error(key, "range end must be after its start");
      main_ok = false;
    }
  }
  if (main_ok) {
    if (c.validation->start < c.train->end) error("split.validation", "must start at or after the end of split.train");
    if (c.test->start < c.validation->end) error("split.test", "must start at or after the end of split.validation");
  }

  if (main_ok || c.paper_mode || (c.recap_train && c.recap_heldout)) {
    TimeRange rt{}, rh{};
    bool have = true;
    try {
      rt = effective_recap_train(c);
      rh = effective_recap_heldout(c);
    } catch (const Error&) {
      have = false;
    }
    if (have) {
      if (!rt.valid()) error("recap.train", "range end must be after its start");
      if (!rh.valid()) error("recap.heldout", "range end must be after its start");
      if (rt.valid() && rh.valid() && rh.start < rt.end)
        error("recap.heldout", "must start at or after the end of recap.train");
      if (c.test) {
        if (rt.overlaps(*c.test)) leak("recap.train", "recap training window overlaps split.test");
        if (rh.overlaps(*c.test)) leak("recap.heldout", "recap held-out window overlaps split.test");
      }
    }
  }

  const std::pair<const char*, const std::optional<TimeRange>*> meta_ranges[] = {
      {"meta.train", &c.meta_train}, {"meta.validation", &c.meta_validation}, {"meta.test", &c.meta_test}};
  bool meta_ok = true;
  for (const auto& [key, r] : meta_ranges) {
    if (!*r) {
      error(key, "range is not set");
      meta_ok = false;
    } else if (!(*r)->valid()) {
      error(key, "range end must be after its start");
      meta_ok = false;
    } else if (c.test && (((*r)->start < c.test->start) || ((*r)->end > c.test->end))) {
      leak(key, "meta range must lie inside split.test, where layer-one predictions are out of sample");
    }
  }
  if (meta_ok) {
    if (c.meta_validation->start < c.meta_train->end) error("meta.validation", "must start at or after meta.train ends");
    if (c.meta_test->start < c.meta_validation->end) error("meta.test", "must start at or after meta.validation ends");
  }
  if (c.paper_mode)
    warning("paper_mode", "stacking selects on meta-test RMSE; the reported winner is optimistically biased");

  if (c.recap_k.empty()) error("recap.k", "needs at least one value");
  for (auto k : c.recap_k)
    if (k == 0) error("recap.k", "values must be >= 1");
  if (c.stacking_k == 0) error("stacking.k", "must be >= 1");
  if (std::find(c.recap_k.begin(), c.recap_k.end(), c.stacking_k) == c.recap_k.end())
    error("stacking.k", "must be one of the recap.k values");

  if (c.arima_enabled) {
    if (c.arima_d_set.empty()) error("arima.d_set", "needs at least one value");
    if (c.arima_refit_every == 0) error("arima.refit_every", "must be >= 1");
    if (c.arima_fit_bars < 10 * (c.arima_p_max + c.arima_q_max + 1) + 2)
      error("arima.fit_bars", "too short for the largest order in the grid");
    for (const auto& col : c.arima_columns)
      if (col != "open" && col != "high" && col != "low" && col != "close")
        error("arima.columns", "`" + col + "` is not an OHLC column");
  }

  auto check = [&](const char* key, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      error(key, e.what());
    }
  };
  check("newton_boost", [&] { c.newton_boost.validate(); });
  check("hist_boost", [&] { c.hist_boost.validate(); });
  check("forest", [&] { c.forest.validate(); });
  check("rnn", [&] { c.rnn_train.validate(); });
  check("meta.net", [&] { c.meta.validate(); });
  if (c.rnn_arch.hidden == 0) error("rnn.hidden", "must be >= 1");
  if (c.rnn_early_stop_fraction < 0.0 || c.rnn_early_stop_fraction >= 1.0)
    error("rnn.early_stop_fraction", "must be in [0, 1)");
  return out;
}

}  // namespace recapfx
