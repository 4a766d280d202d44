#pragma once

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "absa/corpus.hpp"
#include "absa/model.hpp"

namespace absa {

struct EvalReport {
  double overall_accuracy = 0;
  int total = 0;
  int correct = 0;
  // confusion[gold][pred]
  std::array<std::array<int, kNumPolarities>, kNumPolarities> confusion{};
  struct TagStats {
    int total = 0;
    int correct = 0;
    double accuracy() const {
      return total ? static_cast<double>(correct) / total : 0.0;
    }
  };
  std::map<std::string, TagStats> per_tag;
  double mean_faithfulness_deviation = 0;
  int faithfulness_count = 0;

  std::string to_text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "overall_accuracy " << overall_accuracy << " (" << correct << "/"
       << total << ")\n";
    os << "confusion (rows gold, cols predicted; pos/neg/neu):\n";
    for (int g = 0; g < kNumPolarities; ++g) {
      os << " ";
      for (int p = 0; p < kNumPolarities; ++p) os << " " << confusion[g][p];
      os << "\n";
    }
    for (const auto& [tag, st] : per_tag)
      os << "tag " << tag << " accuracy " << st.accuracy() << " (" << st.correct
         << "/" << st.total << ")\n";
    if (faithfulness_count)
      os << "mean_faithfulness_deviation " << mean_faithfulness_deviation
         << " over " << faithfulness_count << " instances\n";
    return os.str();
  }

  // single-record structured form, one key=value per token
  std::string to_record() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "overall=" << overall_accuracy << " total=" << total
       << " correct=" << correct;
    for (int g = 0; g < kNumPolarities; ++g)
      for (int p = 0; p < kNumPolarities; ++p)
        os << " c" << g << p << "=" << confusion[g][p];
    for (const auto& [tag, st] : per_tag)
      os << " tag:" << tag << "=" << st.accuracy();
    if (faithfulness_count)
      os << " faithfulness_dev=" << mean_faithfulness_deviation;
    return os.str();
  }
};

// 1 - sum of aggregation-attention mass on the gold opinion tokens.
inline double faithfulness_deviation(const Prediction& pred,
                                     const AbsaInstance& inst) {
  if (!inst.gold_opinion || inst.gold_opinion->empty())
    throw StructuralError("faithfulness requires a gold opinion span");
  double mass = 0;
  for (int i : *inst.gold_opinion) mass += pred.beta(i - 1);
  double dev = 1.0 - mass;
  return std::min(1.0, std::max(0.0, dev));
}

inline EvalReport evaluate(const Model& model,
                           const std::vector<AbsaInstance>& corpus) {
  if (corpus.empty()) throw ConfigError("evaluation corpus is empty");
  EvalReport rep;
  double dev_sum = 0;
  for (const auto& inst : corpus) {
    Prediction pred = model.predict(inst);
    int g = static_cast<int>(inst.label);
    int p = static_cast<int>(pred.predicted);
    ++rep.total;
    ++rep.confusion[g][p];
    bool ok = g == p;
    if (ok) ++rep.correct;
    for (const auto& tag : inst.subset_tags) {
      auto& st = rep.per_tag[tag];
      ++st.total;
      if (ok) ++st.correct;
    }
    if (inst.gold_opinion && !inst.gold_opinion->empty()) {
      dev_sum += faithfulness_deviation(pred, inst);
      ++rep.faithfulness_count;
    }
  }
  rep.overall_accuracy = static_cast<double>(rep.correct) / rep.total;
  if (rep.faithfulness_count)
    rep.mean_faithfulness_deviation = dev_sum / rep.faithfulness_count;
  return rep;
}

enum class ReprKind { RF, RS, RAdv };

inline ReprKind repr_kind_from_string(const std::string& s) {
  if (s == "r_f") return ReprKind::RF;
  if (s == "r_s") return ReprKind::RS;
  if (s == "r_adv") return ReprKind::RAdv;
  throw ConfigError("unknown representation: " + s + " (r_f|r_s|r_adv)");
}

// TSV: id, gold, predicted, vector components.
inline void dump_representations(const Model& model,
                                 const std::vector<AbsaInstance>& corpus,
                                 ReprKind which, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write: " + path);
  out << "id\tgold\tpredicted\tvector...\n";
  out << std::setprecision(17);
  for (const auto& inst : corpus) {
    Prediction pred = model.predict(inst);
    const Tensor& v = which == ReprKind::RF   ? pred.r_f
                      : which == ReprKind::RS ? pred.r_s
                                              : pred.r_adv;
    out << inst.id << '\t' << to_string(inst.label) << '\t'
        << to_string(pred.predicted);
    for (double x : v.data) out << '\t' << x;
    out << '\n';
  }
}

}  // namespace absa
