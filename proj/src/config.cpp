#include "pct3d/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace pct3d {

namespace {

ModuleSpec make_module(std::vector<int> ks, std::vector<int> ds) {
  ModuleSpec m;
  for (std::size_t i = 0; i < ks.size(); ++i) m.scales.push_back({ks[i], ds[i]});
  return m;
}

}  // namespace

ModelConfig ModelConfig::classification_default() {
  ModelConfig c;
  c.task = Task::kClassification;
  c.input_points = 1024;
  c.modules = {make_module({8, 16, 32}, {64, 128, 256}),
               make_module({4, 8, 16}, {128, 256, 512})};
  c.num_classes = 40;
  return c;
}

ModelConfig ModelConfig::segmentation_default() {
  ModelConfig c;
  c.task = Task::kSegmentation;
  c.input_points = 2048;
  c.modules = {make_module({8, 16, 32}, {64, 128, 256}),
               make_module({4, 8, 16}, {128, 256, 512}),
               make_module({2, 4, 8}, {128, 256, 512})};
  c.num_classes = 16;
  c.num_parts = 50;
  c.decoder_widths = {256, 128, 128};
  return c;
}

ModelConfig ModelConfig::toy_classification() {
  ModelConfig c;
  c.task = Task::kClassification;
  c.input_points = 64;
  c.stem_width = 16;
  c.modules = {make_module({4, 8, 12}, {16, 32, 48})};
  c.head_width1 = 64;
  c.head_width2 = 32;
  c.num_classes = 4;
  return c;
}

ModelConfig ModelConfig::toy_segmentation() {
  ModelConfig c;
  c.task = Task::kSegmentation;
  c.input_points = 128;
  c.stem_width = 16;
  c.modules = {make_module({4, 8, 12}, {16, 32, 48}),
               make_module({2, 4, 6}, {32, 64, 96})};
  c.num_classes = 1;
  c.num_parts = 6;
  c.decoder_widths = {64, 64};
  return c;
}

void ModelConfig::validate() const {
  if (in_channels != 3 && in_channels != 6) {
    throw ConfigError("in_channels must be 3 or 6");
  }
  if (input_points < 16) throw ConfigError("input_points must be >= 16");
  if (modules.empty()) throw ConfigError("at least one module required");
  if (stem_width < 1) throw ConfigError("stem_width must be positive");
  for (std::size_t m = 0; m < modules.size(); ++m) {
    const auto& sc = modules[m].scales;
    if (sc.empty() || sc.size() > 3) {
      throw ConfigError("module" + std::to_string(m + 1) +
                        " needs 1 to 3 scales");
    }
    for (std::size_t i = 0; i < sc.size(); ++i) {
      if (sc[i].k < 1 || sc[i].d < 1) {
        throw ConfigError("module" + std::to_string(m + 1) +
                          ": k and d must be positive");
      }
      if (i > 0 && (sc[i].k <= sc[i - 1].k || sc[i].d <= sc[i - 1].d)) {
        throw ConfigError("module" + std::to_string(m + 1) +
                          ": k's and d's must be strictly increasing");
      }
    }
  }
  const std::vector<int> counts = point_counts();
  for (std::size_t m = 0; m < modules.size(); ++m) {
    const int k_max = modules[m].scales.back().k;
    if (counts[m] < 4 * k_max) {
      throw ConfigError("module" + std::to_string(m + 1) + ": " +
                        std::to_string(counts[m]) + " points cannot support k=" +
                        std::to_string(k_max) + " (need >= 4k)");
    }
    if (use_gfl && use_csa && counts[m + 1] < 8) {
      throw ConfigError("module" + std::to_string(m + 1) +
                        ": CSA needs >= 8 sampled points, got " +
                        std::to_string(counts[m + 1]));
    }
  }
  if (use_gfl && !use_csa && !use_ppsa) {
    throw ConfigError("GFL enabled but both attention branches disabled");
  }
  if (task == Task::kClassification) {
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  } else {
    if (num_parts < 1) throw ConfigError("num_parts must be >= 1");
    if (decoder_widths.size() < modules.size()) {
      throw ConfigError("decoder_widths needs one entry per module");
    }
    if (counts.back() < 3) {
      throw ConfigError("deepest module keeps fewer than 3 points; "
                        "interpolation needs at least 3");
    }
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
  if (pos_hidden < 1) throw ConfigError("pos_hidden must be positive");
}

std::vector<int> ModelConfig::point_counts() const {
  std::vector<int> counts{input_points};
  for (std::size_t m = 0; m < modules.size(); ++m) {
    counts.push_back(counts.back() / 4);
  }
  return counts;
}

int ModelConfig::module_out_width(std::size_t module_index) const {
  int w = 0;
  for (const ScaleSpec& sc : modules[module_index].scales) w += sc.d;
  return w;
}

int ModelConfig::global_width() const {
  if (!multi_level_global) return module_out_width(modules.size() - 1);
  int w = 0;
  for (std::size_t m = 0; m < modules.size(); ++m) w += module_out_width(m);
  return w;
}

namespace {

std::vector<int> parse_int_list(const std::string& value, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': bad integer '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

int parse_int_value(const std::string& value, const std::string& key) {
  try {
    return std::stoi(value);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad integer '" + value + "'");
  }
}

double parse_double_value(const std::string& value, const std::string& key) {
  try {
    return std::stod(value);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad number '" + value + "'");
  }
}

bool parse_bool_value(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }

  ModelConfig cfg;
  cfg.modules.clear();
  int module_count = -1;
  std::map<int, std::vector<int>> mod_k, mod_d;

  for (const auto& [key, value] : kv) {
    if (key == "task") {
      if (value == "classification") cfg.task = Task::kClassification;
      else if (value == "segmentation") cfg.task = Task::kSegmentation;
      else throw ConfigError("config key 'task': unknown value '" + value + "'");
    } else if (key == "input_points") cfg.input_points = parse_int_value(value, key);
    else if (key == "in_channels") cfg.in_channels = parse_int_value(value, key);
    else if (key == "stem_width") cfg.stem_width = parse_int_value(value, key);
    else if (key == "num_classes") cfg.num_classes = parse_int_value(value, key);
    else if (key == "num_parts") cfg.num_parts = parse_int_value(value, key);
    else if (key == "head_widths") {
      const auto ws = parse_int_list(value, key);
      if (ws.size() != 2) throw ConfigError("head_widths needs exactly 2 entries");
      cfg.head_width1 = ws[0];
      cfg.head_width2 = ws[1];
    } else if (key == "decoder_widths") cfg.decoder_widths = parse_int_list(value, key);
    else if (key == "csa_mode") {
      if (value == "linear_point") cfg.csa_mode = CsaMode::kLinearPoint;
      else if (value == "fps_subsample") cfg.csa_mode = CsaMode::kFpsSubsample;
      else throw ConfigError("config key 'csa_mode': unknown value '" + value + "'");
    } else if (key == "dropout") cfg.dropout = parse_double_value(value, key);
    else if (key == "pos_hidden") cfg.pos_hidden = parse_int_value(value, key);
    else if (key == "modules") module_count = parse_int_value(value, key);
    else if (key == "use_gfl") cfg.use_gfl = parse_bool_value(value, key);
    else if (key == "use_csa") cfg.use_csa = parse_bool_value(value, key);
    else if (key == "use_ppsa") cfg.use_ppsa = parse_bool_value(value, key);
    else if (key == "standard_psa") cfg.standard_psa = parse_bool_value(value, key);
    else if (key == "multi_level_global") cfg.multi_level_global = parse_bool_value(value, key);
    else if (key == "mlp_lfa") cfg.mlp_lfa = parse_bool_value(value, key);
    else if (key.rfind("module", 0) == 0) {
      const auto dot = key.find('.');
      if (dot == std::string::npos) throw ConfigError("unknown config key '" + key + "'");
      int idx;
      try {
        idx = std::stoi(key.substr(6, dot - 6));
      } catch (const std::exception&) {
        throw ConfigError("unknown config key '" + key + "'");
      }
      const std::string field = key.substr(dot + 1);
      if (field == "k") mod_k[idx] = parse_int_list(value, key);
      else if (field == "d") mod_d[idx] = parse_int_list(value, key);
      else throw ConfigError("unknown config key '" + key + "'");
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  if (module_count < 0) module_count = static_cast<int>(mod_k.size());
  if (module_count < 1) throw ConfigError("config declares no modules");
  for (int m = 1; m <= module_count; ++m) {
    if (!mod_k.count(m) || !mod_d.count(m)) {
      throw ConfigError("missing module" + std::to_string(m) + ".k/.d");
    }
    if (mod_k[m].size() != mod_d[m].size()) {
      throw ConfigError("module" + std::to_string(m) + ": k and d lists differ in length");
    }
    cfg.modules.push_back(make_module(mod_k[m], mod_d[m]));
  }
  cfg.validate();
  return cfg;
}

void write_model_config(const ModelConfig& cfg, std::ostream& os) {
  os << "task = "
     << (cfg.task == Task::kClassification ? "classification" : "segmentation")
     << '\n';
  os << "input_points = " << cfg.input_points << '\n';
  os << "in_channels = " << cfg.in_channels << '\n';
  os << "stem_width = " << cfg.stem_width << '\n';
  os << "num_classes = " << cfg.num_classes << '\n';
  if (cfg.task == Task::kSegmentation) os << "num_parts = " << cfg.num_parts << '\n';
  os << "head_widths = " << cfg.head_width1 << ',' << cfg.head_width2 << '\n';
  if (cfg.task == Task::kSegmentation) {
    os << "decoder_widths = ";
    for (std::size_t i = 0; i < cfg.decoder_widths.size(); ++i) {
      os << (i ? "," : "") << cfg.decoder_widths[i];
    }
    os << '\n';
  }
  os << "csa_mode = "
     << (cfg.csa_mode == CsaMode::kLinearPoint ? "linear_point" : "fps_subsample")
     << '\n';
  os << "dropout = " << cfg.dropout << '\n';
  os << "pos_hidden = " << cfg.pos_hidden << '\n';
  os << "modules = " << cfg.modules.size() << '\n';
  for (std::size_t m = 0; m < cfg.modules.size(); ++m) {
    os << "module" << m + 1 << ".k = ";
    for (std::size_t i = 0; i < cfg.modules[m].scales.size(); ++i) {
      os << (i ? "," : "") << cfg.modules[m].scales[i].k;
    }
    os << '\n' << "module" << m + 1 << ".d = ";
    for (std::size_t i = 0; i < cfg.modules[m].scales.size(); ++i) {
      os << (i ? "," : "") << cfg.modules[m].scales[i].d;
    }
    os << '\n';
  }
  os << "use_gfl = " << (cfg.use_gfl ? "true" : "false") << '\n';
  os << "use_csa = " << (cfg.use_csa ? "true" : "false") << '\n';
  os << "use_ppsa = " << (cfg.use_ppsa ? "true" : "false") << '\n';
  os << "standard_psa = " << (cfg.standard_psa ? "true" : "false") << '\n';
  os << "multi_level_global = " << (cfg.multi_level_global ? "true" : "false") << '\n';
  os << "mlp_lfa = " << (cfg.mlp_lfa ? "true" : "false") << '\n';
}

}  // namespace pct3d
