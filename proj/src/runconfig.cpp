#include "choplab/runconfig.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <json.hpp>
#include <sstream>

#include "choplab/rng.hpp"

namespace choplab {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) throw ConfigError("config: empty list for " + key);
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, bool> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string val = trim(stripped.substr(eq + 1));
    if (seen[key])
      throw ConfigError("config: duplicate key " + key);
    seen[key] = true;

    if (key == "seed") cfg.seed = parse_u64(key, val);
    else if (key == "encoder.layers") cfg.encoder.layers = parse_u64(key, val);
    else if (key == "encoder.heads") cfg.encoder.heads = parse_u64(key, val);
    else if (key == "encoder.d_model") cfg.encoder.d_model = parse_u64(key, val);
    else if (key == "encoder.d_ff") cfg.encoder.d_ff = parse_u64(key, val);
    else if (key == "encoder.vocab_size") cfg.encoder.vocab_size = parse_u64(key, val);
    else if (key == "encoder.max_seq_len") cfg.encoder.max_seq_len = parse_u64(key, val);
    else if (key == "encoder.num_classes") cfg.encoder.num_classes = parse_u64(key, val);
    else if (key == "tasks.types") cfg.task_types = parse_u64(key, val);
    else if (key == "tasks.seq_len") cfg.task_seq_len = parse_u64(key, val);
    else if (key == "tasks.num_classes") cfg.task_num_classes = parse_u64(key, val);
    else if (key == "tasks.instances_per_type") cfg.instances_per_type = parse_u64(key, val);
    else if (key == "train.steps") cfg.train.steps = parse_u64(key, val);
    else if (key == "train.batch") cfg.train.batch = parse_u64(key, val);
    else if (key == "train.lr") cfg.train.lr = parse_double(key, val);
    else if (key == "train.warmup") cfg.train.warmup = parse_u64(key, val);
    else if (key == "train.eval_interval") cfg.train.eval_interval = parse_u64(key, val);
    else if (key == "train.ladder_steps") cfg.train.ladder_steps = parse_u64(key, val);
    else if (key == "gate.steps") cfg.gate_train.steps = parse_u64(key, val);
    else if (key == "gate.batch") cfg.gate_train.batch = parse_u64(key, val);
    else if (key == "gate.lr") cfg.gate_train.lr = parse_double(key, val);
    else if (key == "gate.warmup") cfg.gate_train.warmup = parse_u64(key, val);
    else if (key == "gate.lambda") cfg.gate_lambda = parse_double(key, val);
    else if (key == "gate.per_layer") cfg.gate_per_layer = parse_bool(key, val);
    else if (key == "sweep.thresholds") cfg.thresholds = parse_double_list(key, val);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

void RunConfig::validate() const {
  try {
    encoder.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (task_types != 4 && task_types != 12)
    throw ConfigError("config: tasks.types must be 4 or 12");
  if (task_num_classes > encoder.num_classes)
    throw ConfigError("config: tasks.num_classes exceeds encoder.num_classes");
  if (task_seq_len + 1 > encoder.max_seq_len)
    throw ConfigError("config: tasks.seq_len + [CLS] exceeds encoder.max_seq_len");
  TaskSpec probe;
  probe.seq_len = task_seq_len;
  probe.num_classes = task_num_classes;
  if (probe.vocab_required() > encoder.vocab_size)
    throw ConfigError("config: task vocabulary exceeds encoder.vocab_size");
  if (instances_per_type < 1) throw ConfigError("config: tasks.instances_per_type < 1");
  for (double t : thresholds)
    if (t < 0.0 || t > 1.0) throw ConfigError("config: threshold outside [0,1]");
}

std::string RunConfig::canonical_text() const {
  std::map<std::string, std::string> kv{
      {"seed", std::to_string(seed)},
      {"encoder.layers", std::to_string(encoder.layers)},
      {"encoder.heads", std::to_string(encoder.heads)},
      {"encoder.d_model", std::to_string(encoder.d_model)},
      {"encoder.d_ff", std::to_string(encoder.d_ff)},
      {"encoder.vocab_size", std::to_string(encoder.vocab_size)},
      {"encoder.max_seq_len", std::to_string(encoder.max_seq_len)},
      {"encoder.num_classes", std::to_string(encoder.num_classes)},
      {"tasks.types", std::to_string(task_types)},
      {"tasks.seq_len", std::to_string(task_seq_len)},
      {"tasks.num_classes", std::to_string(task_num_classes)},
      {"tasks.instances_per_type", std::to_string(instances_per_type)},
      {"train.steps", std::to_string(train.steps)},
      {"train.batch", std::to_string(train.batch)},
      {"train.lr", format_double(train.lr)},
      {"train.warmup", std::to_string(train.warmup)},
      {"train.eval_interval", std::to_string(train.eval_interval)},
      {"train.ladder_steps", std::to_string(train.ladder_steps)},
      {"gate.steps", std::to_string(gate_train.steps)},
      {"gate.batch", std::to_string(gate_train.batch)},
      {"gate.lr", format_double(gate_train.lr)},
      {"gate.warmup", std::to_string(gate_train.warmup)},
      {"gate.lambda", format_double(gate_lambda)},
      {"gate.per_layer", gate_per_layer ? "true" : "false"},
  };
  std::string th;
  for (double t : thresholds) {
    if (!th.empty()) th += ",";
    th += format_double(t);
  }
  kv["sweep.thresholds"] = th;
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::string RunConfig::hash() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : canonical_text()) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<TaskSpec> RunConfig::task_specs() const {
  return make_suite(task_types, task_seq_len, task_num_classes);
}

Dataset RunConfig::build_dataset() const {
  return generate_dataset(task_specs(), instances_per_type, seed);
}

Dataset RunConfig::build_ramp_dataset() const {
  return generate_dataset(count_cued_variant(task_specs()), instances_per_type,
                          derive_seed(seed, "taskgen/ramp"));
}

void RunManifest::write(const std::string& path) const {
  nlohmann::json metrics_json = nlohmann::json::object();
  for (const auto& [k, v] : metrics) metrics_json[k] = v;
  const nlohmann::json j{{"command", command},
                         {"config_hash", config_hash},
                         {"seed", seed},
                         {"code_version", code_version},
                         {"started", started},
                         {"finished", finished},
                         {"artifacts", artifacts},
                         {"metrics", metrics_json}};
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write manifest: " + tmp);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("manifest write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot move manifest into place: " + path);
}

std::string current_timestamp() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string code_version() { return "choplab 0.1.0"; }

}  // namespace choplab
