#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "absa/errors.hpp"
#include "absa/model.hpp"
#include "absa/training.hpp"

namespace absa {

// Flat "key = value" text file, '#' comments.
class KeyValueFile {
 public:
  KeyValueFile() = default;

  static KeyValueFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    KeyValueFile kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
      };
      std::string t = trim(line);
      if (t.empty()) continue;
      size_t eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(lineno) +
                          ": expected key = value");
      std::string key = trim(t.substr(0, eq));
      std::string val = trim(t.substr(eq + 1));
      if (key.empty())
        throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
      kv.values_[key] = val;
    }
    return kv;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config: " + path);
    for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key: " + key);
    return it->second;
  }

  std::string get_or(const std::string& key, const std::string& dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }

  double get_double(const std::string& key) const {
    return parse_double(key, get(key));
  }
  double get_double_or(const std::string& key, double dflt) const {
    return has(key) ? get_double(key) : dflt;
  }

  long long get_int(const std::string& key) const {
    return parse_int(key, get(key));
  }
  long long get_int_or(const std::string& key, long long dflt) const {
    return has(key) ? get_int(key) : dflt;
  }

  bool get_bool_or(const std::string& key, bool dflt) const {
    if (!has(key)) return dflt;
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key " + key + ": not a boolean: " + v);
  }

  void set(const std::string& key, const std::string& val) {
    values_[key] = val;
  }
  template <typename T>
  void set_num(const std::string& key, T v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    values_[key] = os.str();
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static double parse_double(const std::string& key, const std::string& v) {
    try {
      size_t pos = 0;
      double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": not a number: " + v);
    }
  }
  static long long parse_int(const std::string& key, const std::string& v) {
    try {
      size_t pos = 0;
      long long d = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": not an integer: " + v);
    }
  }

  std::map<std::string, std::string> values_;
};

inline void write_model_config(const ModelConfig& c, KeyValueFile& kv) {
  kv.set_num("d_model", c.d_model);
  kv.set_num("transformer_layers", c.n_transformer_layers);
  kv.set_num("heads", c.n_heads);
  kv.set_num("d_ff", c.d_ff);
  kv.set_num("d_gcn", c.d_gcn);
  kv.set_num("gcn_layers", c.n_gcn_layers);
  kv.set_num("d_label", c.d_label);
  kv.set_num("max_seq_len", c.max_seq_len);
  kv.set_num("dropout_embed", c.dropout_embed);
  kv.set_num("dropout_feat", c.dropout_feat);
  kv.set_num("init_seed", c.init_seed);
}

inline ModelConfig read_model_config(const KeyValueFile& kv,
                                     ModelConfig base = {}) {
  ModelConfig c = base;
  c.d_model = static_cast<int>(kv.get_int_or("d_model", c.d_model));
  c.n_transformer_layers = static_cast<int>(
      kv.get_int_or("transformer_layers", c.n_transformer_layers));
  c.n_heads = static_cast<int>(kv.get_int_or("heads", c.n_heads));
  c.d_ff = static_cast<int>(kv.get_int_or("d_ff", c.d_ff));
  c.d_gcn = static_cast<int>(kv.get_int_or("d_gcn", c.d_gcn));
  c.n_gcn_layers =
      static_cast<int>(kv.get_int_or("gcn_layers", c.n_gcn_layers));
  c.d_label = static_cast<int>(kv.get_int_or("d_label", c.d_label));
  c.max_seq_len =
      static_cast<int>(kv.get_int_or("max_seq_len", c.max_seq_len));
  c.dropout_embed = kv.get_double_or("dropout_embed", c.dropout_embed);
  c.dropout_feat = kv.get_double_or("dropout_feat", c.dropout_feat);
  c.init_seed =
      static_cast<uint64_t>(kv.get_int_or("init_seed", c.init_seed));
  c.validate();
  return c;
}

}  // namespace absa
