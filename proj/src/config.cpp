#include "hydra/config.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <vector>

namespace hydra {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) {
    throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key));
  }
  return out;
}

std::size_t parse_size(std::string_view key, std::string_view v) { return parse_number<std::size_t>(key, v); }
double parse_real(std::string_view key, std::string_view v) { return parse_number<double>(key, v); }

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError("bad boolean '" + std::string(v) + "' for " + std::string(key));
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Stage lists may change the number of stages; the first list sets it.
template <class F>
void set_stage_field(ModelConfig& m, std::string_view key, std::string_view v, F&& set) {
  const auto items = split_list(v);
  if (items.size() != m.stages.size()) m.stages.resize(items.size(), m.stages.empty() ? StageConfig{} : m.stages.back());
  for (std::size_t i = 0; i < items.size(); ++i) set(m.stages[i], items[i]);
  (void)key;
}

template <class Enum, class Parse>
Enum parse_enum(std::string_view key, std::string_view v, Parse&& parse) {
  try {
    return parse(v);
  } catch (const std::exception&) {
    throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key));
  }
}

}  // namespace

RunConfig preset(std::string_view name) {
  RunConfig cfg;
  if (name == "toy") return cfg;
  if (name == "tiny") {
    cfg.model.stages = {{1, 12, 3, 1.0}, {1, 12, 3, 2.0}};
    cfg.model.state_dim = 4;
    cfg.model.conv_kernel = 3;
    cfg.model.ffn_ratio = 2;
    cfg.data.points = 32;
    cfg.data.train_size = 40;
    cfg.data.test_size = 20;
    cfg.train.epochs = 5;
    cfg.train.batch_size = 8;
    return cfg;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected toy or tiny)");
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view v) {
  auto& m = cfg.model;
  auto& t = cfg.train;
  auto& d = cfg.data;
  if (key == "task") m.task = parse_enum<Task>(key, v, parse_task);
  else if (key == "num_classes") m.num_classes = parse_size(key, v);
  else if (key == "in_features") m.in_features = parse_size(key, v);
  else if (key == "stage_blocks") set_stage_field(m, key, v, [&](StageConfig& s, std::string_view x) { s.blocks = parse_size(key, x); });
  else if (key == "stage_dims") set_stage_field(m, key, v, [&](StageConfig& s, std::string_view x) { s.dim = parse_size(key, x); });
  else if (key == "stage_heads") set_stage_field(m, key, v, [&](StageConfig& s, std::string_view x) { s.heads = parse_size(key, x); });
  else if (key == "stage_down") set_stage_field(m, key, v, [&](StageConfig& s, std::string_view x) { s.down = parse_real(key, x); });
  else if (key == "transition") m.transition = parse_enum<Transition>(key, v, parse_transition);
  else if (key == "decoder_blocks") m.decoder_blocks = parse_size(key, v);
  else if (key == "curve_bits") m.curve_bits = parse_number<int>(key, v);
  else if (key == "serialization") m.serialization = parse_enum<SerializationMode>(key, v, parse_serialization_mode);
  else if (key == "plan_seed") m.plan_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "state_dim") m.state_dim = parse_size(key, v);
  else if (key == "conv_kind") m.conv_kind = parse_enum<ConvKind>(key, v, parse_conv_kind);
  else if (key == "conv_kernel") m.conv_kernel = parse_size(key, v);
  else if (key == "ffn_ratio") m.ffn_ratio = parse_size(key, v);
  else if (key == "bidirectional") m.bidirectional = parse_bool(key, v);
  else if (key == "conv_branch") m.conv_branch = parse_bool(key, v);
  else if (key == "interp_k") m.interp_k = parse_size(key, v);
  else if (key == "epochs") t.epochs = parse_size(key, v);
  else if (key == "batch_size") t.batch_size = parse_size(key, v);
  else if (key == "lr") t.lr = parse_real(key, v);
  else if (key == "weight_decay") t.weight_decay = parse_real(key, v);
  else if (key == "seed") t.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "threads") t.threads = parse_size(key, v);
  else if (key == "target_acc") t.target_acc = parse_real(key, v);
  else if (key == "train_size") d.train_size = parse_size(key, v);
  else if (key == "test_size") d.test_size = parse_size(key, v);
  else if (key == "points") d.points = parse_size(key, v);
  else if (key == "noise") d.noise = parse_real(key, v);
  else if (key == "rotate") d.rotate = parse_bool(key, v);
  else if (key == "data_seed") d.seed = parse_number<std::uint64_t>(key, v);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply_config_text(RunConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str());
}

std::string format_config(const RunConfig& cfg) {
  const auto& m = cfg.model;
  const auto& t = cfg.train;
  const auto& d = cfg.data;
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  auto list = [&](auto field) {
    std::string s;
    for (std::size_t i = 0; i < m.stages.size(); ++i) {
      std::ostringstream one;
      one << std::setprecision(std::numeric_limits<double>::max_digits10) << field(m.stages[i]);
      s += (i ? "," : "") + one.str();
    }
    return s;
  };
  os << "task = " << task_name(m.task) << '\n'
     << "num_classes = " << m.num_classes << '\n'
     << "in_features = " << m.in_features << '\n'
     << "stage_blocks = " << list([](const StageConfig& s) { return s.blocks; }) << '\n'
     << "stage_dims = " << list([](const StageConfig& s) { return s.dim; }) << '\n'
     << "stage_heads = " << list([](const StageConfig& s) { return s.heads; }) << '\n'
     << "stage_down = " << list([](const StageConfig& s) { return s.down; }) << '\n'
     << "transition = " << transition_name(m.transition) << '\n'
     << "decoder_blocks = " << m.decoder_blocks << '\n'
     << "curve_bits = " << m.curve_bits << '\n'
     << "serialization = " << serialization_mode_name(m.serialization) << '\n'
     << "plan_seed = " << m.plan_seed << '\n'
     << "state_dim = " << m.state_dim << '\n'
     << "conv_kind = " << conv_kind_name(m.conv_kind) << '\n'
     << "conv_kernel = " << m.conv_kernel << '\n'
     << "ffn_ratio = " << m.ffn_ratio << '\n'
     << "bidirectional = " << (m.bidirectional ? "true" : "false") << '\n'
     << "conv_branch = " << (m.conv_branch ? "true" : "false") << '\n'
     << "interp_k = " << m.interp_k << '\n'
     << "epochs = " << t.epochs << '\n'
     << "batch_size = " << t.batch_size << '\n'
     << "lr = " << t.lr << '\n'
     << "weight_decay = " << t.weight_decay << '\n'
     << "seed = " << t.seed << '\n'
     << "threads = " << t.threads << '\n'
     << "target_acc = " << t.target_acc << '\n'
     << "train_size = " << d.train_size << '\n'
     << "test_size = " << d.test_size << '\n'
     << "points = " << d.points << '\n'
     << "noise = " << d.noise << '\n'
     << "rotate = " << (d.rotate ? "true" : "false") << '\n'
     << "data_seed = " << d.seed << '\n';
  return os.str();
}

}  // namespace hydra
