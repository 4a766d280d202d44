#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "absa/errors.hpp"
#include "absa/tensor.hpp"

namespace absa {

// Named parameter tensors, iterated in name order everywhere so that
// updates and checkpoints are deterministic.
class ParamStore {
 public:
  Tensor& create(const std::string& name, Tensor init) {
    auto [it, inserted] = params_.emplace(name, std::move(init));
    if (!inserted) throw StructuralError("duplicate parameter: " + name);
    return it->second;
  }

  Tensor& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end())
      throw StructuralError("unknown parameter: " + name);
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
  }
  bool contains(const std::string& name) const {
    return params_.count(name) > 0;
  }

  std::map<std::string, Tensor>& all() { return params_; }
  const std::map<std::string, Tensor>& all() const { return params_; }

  // Checkpoint: <stem>.manifest (text: name shape... offset) plus
  // <stem>.bin (raw little-endian float64). Bit-exact round trip.
  void save(const std::string& stem) const {
    std::ofstream bin(stem + ".bin", std::ios::binary);
    std::ofstream man(stem + ".manifest");
    if (!bin || !man) throw ConfigError("cannot write checkpoint " + stem);
    uint64_t offset = 0;
    for (const auto& [name, t] : params_) {
      man << name;
      man << " " << t.shape.size();
      for (int d : t.shape) man << " " << d;
      man << " " << offset << "\n";
      bin.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
      offset += t.data.size() * sizeof(double);
    }
  }

  void load(const std::string& stem) {
    std::ifstream man(stem + ".manifest");
    std::ifstream bin(stem + ".bin", std::ios::binary);
    if (!man || !bin) throw ConfigError("cannot read checkpoint " + stem);
    params_.clear();
    std::string line;
    while (std::getline(man, line)) {
      if (line.empty()) continue;
      std::istringstream is(line);
      std::string name;
      size_t rank;
      is >> name >> rank;
      std::vector<int> shape(rank);
      for (auto& d : shape) is >> d;
      uint64_t offset;
      is >> offset;
      if (!is) throw ParseError("bad manifest line: " + line);
      Tensor t = Tensor::zeros(shape);
      bin.seekg(static_cast<std::streamoff>(offset));
      bin.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(double)));
      if (!bin) throw ParseError("checkpoint payload truncated at " + name);
      params_.emplace(name, std::move(t));
    }
  }

 private:
  std::map<std::string, Tensor> params_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-5;
};

// Adam with bias correction and decoupled L2 decay.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParamStore& params,
            const std::map<std::string, Tensor>& grads) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (auto& [name, p] : params.all()) {
      auto git = grads.find(name);
      if (git == grads.end()) continue;
      const Tensor& g = git->second;
      if (!g.same_shape(p))
        throw StructuralError("gradient shape mismatch for " + name);
      Tensor& m = moment(m_, name, p);
      Tensor& v = moment(v_, name, p);
      for (int64_t i = 0; i < p.size(); ++i) {
        m.data[i] = cfg_.beta1 * m.data[i] + (1 - cfg_.beta1) * g.data[i];
        v.data[i] = cfg_.beta2 * v.data[i] +
                    (1 - cfg_.beta2) * g.data[i] * g.data[i];
        double mhat = m.data[i] / bc1;
        double vhat = v.data[i] / bc2;
        p.data[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                cfg_.weight_decay * p.data[i]);
      }
    }
  }

  int64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  static Tensor& moment(std::map<std::string, Tensor>& store,
                        const std::string& name, const Tensor& like) {
    auto it = store.find(name);
    if (it == store.end())
      it = store.emplace(name, Tensor::zeros(like.shape)).first;
    return it->second;
  }

  AdamConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace absa
