#include "awdlab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "awdlab/csv.hpp"
#include "awdlab/error.hpp"

namespace awdlab {

RegularizerMode OptimConfig::regularizer() const {
  if (mode == "fixed") return FixedDecay{weight_decay};
  if (mode == "adaptive") return AdaptiveDecay{dog, ema_old, ema_new};
  if (mode == "adadecay") return AdaDecay{weight_decay, alpha};
  throw ConfigError("optim.mode: unknown mode '" + mode + "'");
}

double OptimConfig::lambda_or_dog() const { return mode == "adaptive" ? dog : weight_decay; }

void OptimConfig::set_lambda_or_dog(double v) {
  if (mode == "adaptive") {
    dog = v;
  } else {
    weight_decay = v;
  }
}

AttackConfig AttackSection::train_config() const {
  AttackConfig c;
  c.epsilon = epsilon;
  c.step_size = step_size;
  c.steps = train_steps;
  c.random_start = random_start;
  return c;
}

AttackConfig AttackSection::eval_config() const {
  AttackConfig c = train_config();
  c.steps = eval_steps;
  return c;
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& raw) {
  std::string s = trim(raw);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) return s.substr(1, s.size() - 2);
  return s;
}

double to_double(const std::string& key, const std::string& raw) {
  const std::string s = unquote(raw);
  try {
    // Accepts simple ratios such as 8/255.
    if (auto slash = s.find('/'); slash != std::string::npos) {
      return parse_double(trim(s.substr(0, slash))) / parse_double(trim(s.substr(slash + 1)));
    }
    return parse_double(s);
  } catch (const Error&) {
    throw ConfigError(key + ": expected a number, got '" + s + "'");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& raw) {
  const std::string s = unquote(raw);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError(key + ": expected a nonnegative integer, got '" + s + "'");
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw ConfigError(key + ": integer out of range: '" + s + "'");
  }
}

bool to_bool(const std::string& key, const std::string& raw) {
  const std::string s = unquote(raw);
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

std::vector<std::string> to_items(const std::string& raw) {
  std::string s = trim(raw);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw ConfigError("unterminated list: '" + s + "'");
    s = s.substr(1, s.size() - 2);
  }
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string list_str(const std::vector<std::string>& items) {
  std::string s = "[";
  for (std::size_t i = 0; i < items.size(); ++i) s += (i ? ", " : "") + items[i];
  return s + "]";
}

struct Field {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <typename Cfg>
std::vector<Field> fields(Cfg& c) {
  std::vector<Field> f;
  auto str = [&f](std::string key, std::string& v) {
    f.push_back({key, [&v](const std::string& raw) { v = unquote(raw); }, [&v] { return "\"" + v + "\""; }});
  };
  auto num = [&f](std::string key, double& v) {
    f.push_back({key, [&v, key](const std::string& raw) { v = to_double(key, raw); }, [&v] { return fmt_double(v); }});
  };
  auto uint = [&f](std::string key, auto& v) {
    f.push_back({key,
                 [&v, key](const std::string& raw) { v = static_cast<std::remove_reference_t<decltype(v)>>(to_uint(key, raw)); },
                 [&v] { return std::to_string(v); }});
  };
  auto flag = [&f](std::string key, bool& v) {
    f.push_back({key, [&v, key](const std::string& raw) { v = to_bool(key, raw); }, [&v] { return v ? "true" : "false"; }});
  };
  auto sizes = [&f](std::string key, std::vector<std::size_t>& v) {
    f.push_back({key,
                 [&v, key](const std::string& raw) {
                   v.clear();
                   for (const auto& it : to_items(raw)) v.push_back(to_uint(key, it));
                 },
                 [&v] {
                   std::vector<std::string> s;
                   for (auto x : v) s.push_back(std::to_string(x));
                   return list_str(s);
                 }});
  };
  auto nums = [&f](std::string key, std::vector<double>& v) {
    f.push_back({key,
                 [&v, key](const std::string& raw) {
                   v.clear();
                   for (const auto& it : to_items(raw)) v.push_back(to_double(key, it));
                 },
                 [&v] {
                   std::vector<std::string> s;
                   for (auto x : v) s.push_back(fmt_double(x));
                   return list_str(s);
                 }});
  };

  str("data.kind", c.data.kind);
  uint("data.classes", c.data.classes);
  uint("data.per_class", c.data.per_class);
  uint("data.test_per_class", c.data.test_per_class);
  uint("data.dim", c.data.dim);
  num("data.separation", c.data.separation);
  uint("data.height", c.data.height);
  uint("data.width", c.data.width);
  uint("data.channels", c.data.channels);
  num("data.stripe_amplitude", c.data.stripe_amplitude);
  num("data.blob_amplitude", c.data.blob_amplitude);
  num("data.blob_reliability", c.data.blob_reliability);
  num("data.noise_std", c.data.noise_std);
  str("data.train_path", c.data.train_path);
  str("data.test_path", c.data.test_path);
  num("data.val_fraction", c.data.val_fraction);
  num("data.noise_rate", c.data.noise_rate);
  flag("data.augment", c.data.augment);
  uint("data.pad", c.data.pad);
  flag("data.flip", c.data.flip);

  str("model.kind", c.model.kind);
  sizes("model.hidden", c.model.hidden);
  sizes("model.channels", c.model.channels);

  str("optim.mode", c.optim.mode);
  num("optim.lr", c.optim.lr);
  num("optim.weight_decay", c.optim.weight_decay);
  num("optim.dog", c.optim.dog);
  num("optim.ema_old", c.optim.ema_old);
  num("optim.ema_new", c.optim.ema_new);
  num("optim.alpha", c.optim.alpha);
  num("optim.momentum", c.optim.momentum);
  uint("optim.epochs", c.optim.epochs);
  uint("optim.batch_size", c.optim.batch_size);

  flag("attack.enabled", c.attack.enabled);
  num("attack.epsilon", c.attack.epsilon);
  num("attack.step_size", c.attack.step_size);
  uint("attack.train_steps", c.attack.train_steps);
  uint("attack.eval_steps", c.attack.eval_steps);
  flag("attack.random_start", c.attack.random_start);

  uint("run.seed", c.run.seed);
  str("run.early_stopping", c.run.early_stopping);
  uint("run.eval_stride", c.run.eval_stride);
  uint("run.trace_stride", c.run.trace_stride);
  num("run.plateau_tol", c.run.plateau_tol);
  uint("run.plateau_patience", c.run.plateau_patience);
  str("run.out", c.run.out);
  uint("run.threads", c.run.threads);

  nums("grid.lrs", c.grid.lrs);
  nums("grid.lambdas", c.grid.lambdas);
  num("grid.start_lr", c.grid.start_lr);
  num("grid.start_lambda", c.grid.start_lambda);
  return f;
}

bool known_key(const std::string& key) {
  ExperimentConfig scratch;
  for (const auto& f : fields(scratch))
    if (f.key == key) return true;
  return false;
}

}  // namespace

ConfigEntries parse_config_text(const std::string& text) {
  ConfigEntries out;
  std::istringstream is(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    // Comments: '#' outside quotes.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.find('=') == std::string::npos) {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    if (out.count(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

ConfigEntries read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

void apply_override(ConfigEntries& entries, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = trim(assignment.substr(0, eq));
  if (!known_key(key)) throw ConfigError("override: unknown key '" + key + "'");
  entries[key] = trim(assignment.substr(eq + 1));
}

ExperimentConfig config_from_entries(const ConfigEntries& entries) {
  ExperimentConfig cfg;
  auto table = fields(cfg);
  std::vector<std::string> errors;
  for (const auto& [key, value] : entries) {
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) {
      errors.push_back("unknown key '" + key + "'");
      continue;
    }
    try {
      it->set(value);
    } catch (const ConfigError& e) {
      errors.emplace_back(e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::string& text) { return config_from_entries(parse_config_text(text)); }

std::string config_to_text(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  std::string out, section;
  for (const auto& f : fields(copy)) {
    const auto dot = f.key.find('.');
    const std::string sec = f.key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
      section = sec;
    }
    out += f.key.substr(dot + 1) + " = " + f.get() + "\n";
  }
  return out;
}

void ExperimentConfig::validate() const {
  std::vector<std::string> e;
  auto need = [&e](bool ok, const std::string& msg) {
    if (!ok) e.push_back(msg);
  };
  const auto& d = data;
  need(d.kind == "images" || d.kind == "clusters" || d.kind == "file" || d.kind == "csv",
       "data.kind must be images, clusters, file or csv");
  need(d.classes >= 2, "data.classes must be >= 2");
  need(d.per_class >= 2, "data.per_class must be >= 2");
  need(d.test_per_class >= 1, "data.test_per_class must be >= 1");
  need(d.dim >= 1, "data.dim must be >= 1");
  need(d.separation >= 0.0, "data.separation must be >= 0");
  if (d.kind == "images") need(d.height >= 8 && d.width >= 8, "data.height and data.width must be >= 8");
  need(d.channels >= 1, "data.channels must be >= 1");
  need(d.stripe_amplitude >= 0.0, "data.stripe_amplitude must be >= 0");
  need(d.blob_amplitude >= 0.0, "data.blob_amplitude must be >= 0");
  need(d.blob_reliability >= 0.0 && d.blob_reliability <= 1.0, "data.blob_reliability must lie in [0, 1]");
  need(d.noise_std >= 0.0, "data.noise_std must be >= 0");
  if (d.kind == "file" || d.kind == "csv") {
    need(!d.train_path.empty() && !d.test_path.empty(), "data.train_path and data.test_path are required");
  }
  need(d.val_fraction > 0.0 && d.val_fraction < 1.0, "data.val_fraction must lie in (0, 1)");
  need(d.noise_rate >= 0.0 && d.noise_rate <= 1.0, "data.noise_rate must lie in [0, 1]");
  need(model.kind == "mlp" || model.kind == "cnn", "model.kind must be mlp or cnn");
  for (auto h : model.hidden) need(h > 0, "model.hidden entries must be positive");
  if (model.kind == "cnn") {
    need(!model.channels.empty(), "model.channels must be nonempty for cnn");
    need(d.kind == "images" || d.kind == "file", "model.kind = cnn needs image data");
  }
  for (auto c : model.channels) need(c > 0, "model.channels entries must be positive");
  const auto& o = optim;
  need(o.mode == "fixed" || o.mode == "adaptive" || o.mode == "adadecay", "optim.mode must be fixed, adaptive or adadecay");
  need(o.lr > 0.0, "optim.lr must be > 0");
  need(o.weight_decay >= 0.0, "optim.weight_decay must be >= 0");
  need(o.dog > 0.0, "optim.dog must be > 0");
  need(o.ema_old >= 0.0 && o.ema_new >= 0.0 && std::abs(o.ema_old + o.ema_new - 1.0) <= 1e-12,
       "optim.ema_old + optim.ema_new must equal 1");
  need(std::isfinite(o.alpha), "optim.alpha must be finite");
  need(o.momentum >= 0.0 && o.momentum < 1.0, "optim.momentum must lie in [0, 1)");
  need(o.batch_size >= 1, "optim.batch_size must be >= 1");
  need(attack.epsilon >= 0.0, "attack.epsilon must be >= 0");
  need(attack.step_size > 0.0, "attack.step_size must be > 0");
  need(attack.train_steps >= 1 && attack.eval_steps >= 1, "attack steps must be >= 1");
  need(run.early_stopping == "clean-val" || run.early_stopping == "robust-val" || run.early_stopping == "none",
       "run.early_stopping must be clean-val, robust-val or none");
  need(run.eval_stride >= 1, "run.eval_stride must be >= 1");
  need(run.trace_stride >= 1, "run.trace_stride must be >= 1");
  need(run.plateau_tol >= 0.0, "run.plateau_tol must be >= 0");
  need(run.plateau_patience >= 1, "run.plateau_patience must be >= 1");
  need(run.threads >= 1, "run.threads must be >= 1");
  for (double v : grid.lrs) need(v > 0.0, "grid.lrs entries must be > 0");
  for (double v : grid.lambdas) need(v >= 0.0, "grid.lambdas entries must be >= 0");
  if (!e.empty()) {
    std::string msg = "invalid config:";
    for (const auto& m : e) msg += "\n  " + m;
    throw ConfigError(msg);
  }
}

}  // namespace awdlab
