#include "rapidash/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <fstream>
#include <sstream>

namespace rapidash {

namespace {

struct Field {
  const char* section;
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true/false, got '" + v + "'");
}

std::string fmt_scales(const std::vector<double>& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + fmt_double(s[i]);
  return out;
}

std::vector<double> parse_scales(const std::string& v) {
  std::vector<double> out;
  std::istringstream is(v);
  std::string tok;
  while (std::getline(is, tok, ','))
    if (!tok.empty()) out.push_back(std::stod(tok));
  return out;
}

#define FIELD(sec, name, setter, getter)                                     \
  Field {                                                                    \
    sec, name, [](ExperimentConfig& c, const std::string& v) { setter; },    \
        [](const ExperimentConfig& c) -> std::string { return getter; }      \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      FIELD("run", "seed", c.seed = std::stoull(v), std::to_string(c.seed)),
      FIELD("run", "output_dir", c.output_dir = v, c.output_dir),

      FIELD("model", "regime", c.model.regime = regime_from_name(v), regime_name(c.model.regime)),
      FIELD("model", "layers", c.model.layers = std::stoi(v), std::to_string(c.model.layers)),
      FIELD("model", "channels", c.model.channels = std::stoi(v), std::to_string(c.model.channels)),
      FIELD("model", "inflated_channels", c.model.inflated_channels = std::stoi(v),
            std::to_string(c.model.inflated_channels)),
      FIELD("model", "fiber_size", c.model.fiber_size = std::stoi(v),
            std::to_string(c.model.fiber_size)),
      FIELD("model", "readout", c.model.readout = readout_from_name(v),
            readout_name(c.model.readout)),
      FIELD("model", "scales", c.model.scales = parse_scales(v), fmt_scales(c.model.scales)),
      FIELD("model", "in_scalars", c.model.in_scalars = std::stoi(v),
            std::to_string(c.model.in_scalars)),
      FIELD("model", "in_aux_vectors", c.model.in_aux_vectors = std::stoi(v),
            std::to_string(c.model.in_aux_vectors)),
      FIELD("model", "target_dim", c.model.target_dim = std::stoi(v),
            std::to_string(c.model.target_dim)),
      FIELD("model", "neighbors_k", c.model.neighbors_k = std::stoi(v),
            std::to_string(c.model.neighbors_k)),
      FIELD("model", "grid_method",
            c.model.grid_method = v == "repulsion" ? GridMethod::repulsion : GridMethod::fibonacci,
            c.model.grid_method == GridMethod::repulsion ? "repulsion" : "fibonacci"),
      FIELD("model", "coords_as_scalars", c.model.input_spec.coords_as_scalars = parse_bool(v),
            c.model.input_spec.coords_as_scalars ? "true" : "false"),
      FIELD("model", "coords_as_vectors", c.model.input_spec.coords_as_vectors = parse_bool(v),
            c.model.input_spec.coords_as_vectors ? "true" : "false"),
      FIELD("model", "aux_as_scalars", c.model.input_spec.aux_as_scalars = parse_bool(v),
            c.model.input_spec.aux_as_scalars ? "true" : "false"),
      FIELD("model", "aux_as_vectors", c.model.input_spec.aux_as_vectors = parse_bool(v),
            c.model.input_spec.aux_as_vectors ? "true" : "false"),
      FIELD("model", "global_frame", c.model.input_spec.global_frame = parse_bool(v),
            c.model.input_spec.global_frame ? "true" : "false"),
      FIELD("model", "onehot_channels", c.model.input_spec.onehot_channels = std::stoi(v),
            std::to_string(c.model.input_spec.onehot_channels)),

      FIELD("task", "kind", c.task.kind = task_from_name(v), task_name(c.task.kind)),
      FIELD("task", "train_size", c.task.train_size = std::stoi(v),
            std::to_string(c.task.train_size)),
      FIELD("task", "test_size", c.task.test_size = std::stoi(v), std::to_string(c.task.test_size)),
      FIELD("task", "rotate_train", c.task.rotate_train = parse_bool(v),
            c.task.rotate_train ? "true" : "false"),
      FIELD("task", "rotate_test", c.task.rotate_test = parse_bool(v),
            c.task.rotate_test ? "true" : "false"),
      FIELD("task", "noise_level", c.task.noise_level = std::stod(v),
            fmt_double(c.task.noise_level)),
      FIELD("task", "points", c.task.points = std::stoi(v), std::to_string(c.task.points)),

      FIELD("harness", "trials", c.harness.trials = std::stoi(v),
            std::to_string(c.harness.trials)),
      FIELD("harness", "mode", c.harness.mode = v, c.harness.mode),
      FIELD("harness", "audit_clouds", c.harness.audit_clouds = std::stoi(v),
            std::to_string(c.harness.audit_clouds)),
      FIELD("harness", "audit_points", c.harness.audit_points = std::stoi(v),
            std::to_string(c.harness.audit_points)),

      FIELD("train", "epochs", c.train.epochs = std::stoi(v), std::to_string(c.train.epochs)),
      FIELD("train", "lr", c.train.lr = std::stod(v), fmt_double(c.train.lr)),
      FIELD("train", "warmup", c.train.warmup = std::stoi(v), std::to_string(c.train.warmup)),
      FIELD("train", "batch", c.train.batch = std::stoi(v), std::to_string(c.train.batch)),
      FIELD("train", "weight_decay", c.train.weight_decay = std::stod(v),
            fmt_double(c.train.weight_decay)),
  };
  return table;
}

#undef FIELD

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

}  // namespace

void derive_seeds(ExperimentConfig& cfg) {
  cfg.model.seed = split_seed(cfg.seed, 1);
  cfg.task.seed = split_seed(cfg.seed, 2);
  cfg.harness.seed = split_seed(cfg.seed, 3);
  cfg.train.seed = split_seed(cfg.seed, 4);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = t.substr(1, t.size() - 2);
      bool known = false;
      for (const Field& f : fields()) known |= section == f.section;
      if (!known)
        throw std::invalid_argument("config: unknown section [" + section + "] at line " +
                                    std::to_string(line_no));
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key=value at line " + std::to_string(line_no));
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    const Field* found = nullptr;
    for (const Field& f : fields())
      if (section == f.section && key == f.key) found = &f;
    if (!found)
      throw std::invalid_argument("config: unknown key '" + key + "' in section [" + section +
                                  "] at line " + std::to_string(line_no));
    try {
      found->set(cfg, value);
    } catch (const std::exception& e) {
      throw std::invalid_argument("config: bad value for '" + key + "' at line " +
                                  std::to_string(line_no) + ": " + e.what());
    }
  }
  derive_seeds(cfg);
  return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const Field& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) os << "\n";
      section = f.section;
      os << "[" << section << "]\n";
    }
    os << f.key << "=" << f.get(cfg) << "\n";
  }
  return os.str();
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void apply_env_overrides(ExperimentConfig& cfg) {
  bool touched = false;
  for (const Field& f : fields()) {
    std::string name = "RAPIDASH_" + upper(f.section) + "_" + upper(f.key);
    if (const char* v = std::getenv(name.c_str())) {
      f.set(cfg, v);
      touched = true;
    }
  }
  if (touched) derive_seeds(cfg);
}

}  // namespace rapidash
