// Batch driver: synthetic-corpus generation, the four training regimes,
// evaluation, gradient checking and the parse round-trip.
//
// Exit codes: 0 success, 1 internal error, 2 user/config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "absa/augment.hpp"
#include "absa/config.hpp"
#include "absa/corpus.hpp"
#include "absa/eval.hpp"
#include "absa/gradcheck.hpp"
#include "absa/lexicon.hpp"
#include "absa/model.hpp"
#include "absa/training.hpp"
#include "absa/vocab.hpp"

namespace fs = std::filesystem;
using namespace absa;

namespace {

int g_exit = 0;

std::vector<AbsaInstance> load_corpus(const std::string& conllu,
                                      const std::string& instances) {
  auto trees = load_conllu(conllu);
  return load_instances(instances, trees);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write: " + path);
  out << text;
}

// ---- augment ----

struct AugmentArgs {
  std::string corpus, instances, sentiment_lexicon, relation_lexicon;
  std::string negations, output_dir;
  double theta_a = 0.2, theta_n = 0.25, theta_m = 0.85;
  uint64_t seed = 42;
  int samples_per_target = 2, embed_dim = 32, top_j = 3;
};

void histogram(std::ostream& os, const std::vector<SyntheticSample>& samples) {
  int bins[11] = {0};
  for (const auto& s : samples) {
    int b = s.confidence >= 1.0
                ? 10
                : static_cast<int>(s.confidence * 10);
    bins[std::max(0, std::min(10, b))]++;
  }
  for (int b = 0; b < 10; ++b)
    os << "  [" << b / 10.0 << "," << (b + 1) / 10.0 << ") " << bins[b] << "\n";
  os << "  [1,inf) " << bins[10] << "\n";
}

void run_augment(const AugmentArgs& a) {
  fs::create_directories(a.output_dir);
  auto corpus = load_corpus(a.corpus, a.instances);
  SentimentLexicon sent = SentimentLexicon::load(a.sentiment_lexicon);
  RelationLexicon rel = RelationLexicon::load(a.relation_lexicon);
  NegationList negs =
      a.negations.empty() ? NegationList() : NegationList::load(a.negations);
  StubParaphraser para(&rel, a.seed);

  std::vector<SyntheticSample> d_a, d_n, d_m;
  int paraphrase_skips = 0;
  std::vector<AspectUnit> units;
  try {
    units = build_aspect_units(corpus, hash_embedder(a.embed_dim, a.seed));
  } catch (const StructuralError&) {
    units.clear();
  }
  for (const auto& inst : corpus) {
    for (auto& s : gen_sentiment_mod(inst, sent, rel, negs, a.theta_a))
      d_a.push_back(std::move(s));
    RewriteOptions ropts;
    for (auto& s :
         rewrite_background(inst, sent, rel, a.theta_n, para, ropts,
                            &paraphrase_skips))
      d_n.push_back(std::move(s));
    if (!units.empty()) {
      AspectAdditionOptions mopts;
      mopts.samples_per_target = a.samples_per_target;
      for (auto& s :
           gen_aspect_addition(inst, units, a.top_j, a.theta_m, mopts))
        d_m.push_back(std::move(s));
    }
  }
  sort_synthetic(d_a);
  sort_synthetic(d_n);
  sort_synthetic(d_m);
  save_synthetic(d_a, (fs::path(a.output_dir) / "d_a").string());
  save_synthetic(d_n, (fs::path(a.output_dir) / "d_n").string());
  save_synthetic(d_m, (fs::path(a.output_dir) / "d_m").string());

  // sentences whose trees still need an external parse, in file order
  std::ostringstream ex;
  int reparse = 0;
  for (const auto& s : d_n)
    if (s.needs_reparse) {
      bool first = true;
      for (const auto& t : s.tree.tokens) {
        if (!first) ex << ' ';
        ex << t.form;
        first = false;
      }
      ex << '\n';
      ++reparse;
    }
  write_text((fs::path(a.output_dir) / "reparse_sentences.txt").string(),
             ex.str());

  std::ostringstream sum;
  sum << "sources " << corpus.size() << "\n";
  sum << "sentiment_mod " << d_a.size() << "\n";
  histogram(sum, d_a);
  sum << "background_rewrite " << d_n.size() << "\n";
  histogram(sum, d_n);
  sum << "aspect_addition " << d_m.size() << "\n";
  histogram(sum, d_m);
  sum << "needs_reparse " << reparse << "\n";
  sum << "paraphrase_skips " << paraphrase_skips << "\n";
  sum << "lexicon_duplicate_rows " << sent.duplicate_rows() << "\n";
  write_text((fs::path(a.output_dir) / "summary.txt").string(), sum.str());
  std::cout << sum.str();
  if (d_a.empty() && d_n.empty() && d_m.empty())
    std::cerr << "warning: no synthetic samples produced\n";
}

// ---- train ----

struct TrainArgs {
  std::string corpus, instances, dev_corpus, dev_instances;
  std::string labels, vocab, word_vectors, synthetic, output_dir;
  std::string regime = "e";
  ModelConfig model;
  TrainConfig train;
  bool separate_weights = false;
  std::vector<double> lambda_c = {0.3, 0.2, 0.3, 0.2};
};

void run_train(TrainArgs& a) {
  fs::create_directories(a.output_dir);
  LabelInventory labels = LabelInventory::load(a.labels);
  Vocab vocab = Vocab::load(a.vocab);
  auto raw = load_corpus(a.corpus, a.instances);
  std::vector<AbsaInstance> dev;
  if (!a.dev_instances.empty())
    dev = load_corpus(a.dev_corpus.empty() ? a.corpus : a.dev_corpus,
                      a.dev_instances);
  std::vector<SyntheticSample> synth;
  if (!a.synthetic.empty()) synth = load_synthetic(a.synthetic);

  a.train.regime = regime_from_string(a.regime);
  a.train.share_weights = !a.separate_weights;
  for (int i = 0; i < 4; ++i) a.train.lambda_c[i] = a.lambda_c.at(i);
  if (regime_adversarial(a.train.regime) && synth.empty())
    throw ConfigError("regime " + a.regime + " requires --synthetic");

  Model model_o(a.model, &vocab, &labels);
  std::optional<Model> model_s;
  if (a.train.share_weights == false) {
    ModelConfig cfg_s = a.model;
    cfg_s.init_seed = a.model.init_seed + 1;
    model_s.emplace(cfg_s, &vocab, &labels);
  }
  if (!a.word_vectors.empty()) {
    model_o.load_word_vectors(a.word_vectors);
    if (model_s) model_s->load_word_vectors(a.word_vectors);
  }

  TrainResult res = train(a.train, model_o, model_s ? &*model_s : nullptr,
                          raw, synth, dev);

  fs::path out(a.output_dir);
  model_o.params().save((out / "model").string());
  if (model_s) model_s->params().save((out / "model_s").string());
  KeyValueFile kv;
  write_model_config(a.model, kv);
  kv.save((out / "model.cfg").string());

  std::ostringstream log;
  log << "epoch\tloss_e\tloss_a\tloss_c\tdev_acc\n";
  for (const auto& e : res.log)
    log << e.epoch << '\t' << format_double(e.loss_e) << '\t'
        << format_double(e.loss_a) << '\t' << format_double(e.loss_c) << '\t'
        << format_double(e.dev_acc) << '\n';
  write_text((out / "train_log.tsv").string(), log.str());

  std::cout << "regime " << a.regime << " epochs " << res.log.size()
            << " best_epoch " << res.best_epoch << " best_dev_acc "
            << format_double(res.best_dev_acc) << " skipped_anchors "
            << res.skipped_anchors << "\n";
}

// ---- eval / dump-reprs ----

struct EvalArgs {
  std::string checkpoint, model_config, corpus, instances, labels, vocab;
  std::string report;
  double parse_noise = 0;
  uint64_t noise_seed = 1;
  std::string repr = "r_f";  // dump-reprs only
  std::string output;        // dump-reprs only
};

Model load_model(const EvalArgs& a, Vocab& vocab, LabelInventory& labels) {
  ModelConfig mc = read_model_config(KeyValueFile::load(a.model_config));
  Model model(mc, &vocab, &labels);
  model.params().load(a.checkpoint);
  return model;
}

std::vector<AbsaInstance> load_eval_corpus(const EvalArgs& a,
                                           const LabelInventory& labels) {
  auto corpus = load_corpus(a.corpus, a.instances);
  if (a.parse_noise > 0)
    for (size_t i = 0; i < corpus.size(); ++i)
      corpus[i].tree = inject_parse_noise(
          corpus[i].tree, a.parse_noise,
          mix(a.noise_seed, static_cast<uint64_t>(i)), labels);
  return corpus;
}

void run_eval(const EvalArgs& a) {
  LabelInventory labels = LabelInventory::load(a.labels);
  Vocab vocab = Vocab::load(a.vocab);
  Model model = load_model(a, vocab, labels);
  auto corpus = load_eval_corpus(a, labels);
  EvalReport rep = evaluate(model, corpus);
  std::cout << rep.to_text();
  if (!a.report.empty()) write_text(a.report, rep.to_text());
}

void run_dump_reprs(const EvalArgs& a) {
  LabelInventory labels = LabelInventory::load(a.labels);
  Vocab vocab = Vocab::load(a.vocab);
  Model model = load_model(a, vocab, labels);
  auto corpus = load_eval_corpus(a, labels);
  dump_representations(model, corpus, repr_kind_from_string(a.repr), a.output);
  std::cout << "wrote " << corpus.size() << " rows to " << a.output << "\n";
}

// ---- gradcheck ----

struct GradArgs {
  int op_seeds = 100;
  int model_seeds = 3;
  int entries = 2;
};

void run_gradcheck(const GradArgs& a) {
  bool ok = true;
  auto print = [&](const GradCheckRow& r) {
    bool p = r.pass();
    ok = ok && p;
    std::cout << (p ? "PASS" : "FAIL") << "  " << r.name << "  max_err "
              << r.max_err << "  tol " << r.tolerance << "\n";
  };
  for (const auto& r : run_op_gradchecks(a.op_seeds)) print(r);
  for (int s = 0; s < a.model_seeds; ++s)
    for (const auto& r :
         run_model_gradcheck(static_cast<uint64_t>(1000 + s), a.entries))
      print(r);
  for (Regime reg : {Regime::E, Regime::A, Regime::EC, Regime::AC})
    print(run_regime_gradcheck(reg));
  if (!ok) {
    std::cerr << "gradient check failed\n";
    g_exit = 1;
  }
}

// ---- parse round-trip ----

void run_export_sentences(const std::string& stem, const std::string& output) {
  auto samples = load_synthetic(stem);
  std::ostringstream os;
  for (const auto& s : samples)
    if (s.needs_reparse) {
      bool first = true;
      for (const auto& t : s.tree.tokens) {
        if (!first) os << ' ';
        os << t.form;
        first = false;
      }
      os << '\n';
    }
  if (output == "-")
    std::cout << os.str();
  else
    write_text(output, os.str());
}

void run_import_parses(const std::string& stem, const std::string& parses,
                       const std::string& output) {
  auto samples = load_synthetic(stem);
  auto trees = load_conllu(parses);
  size_t next = 0;
  for (auto& s : samples) {
    if (!s.needs_reparse) continue;
    if (next >= trees.size())
      throw ParseError("parse file has fewer sentences than samples needing "
                       "a reparse");
    const DepTree& t = trees[next++];
    if (t.forms() != s.tree.forms())
      throw ParseError("parse " + std::to_string(next) +
                       " does not match the tokens of sample " + s.id);
    s.tree = t;
    s.needs_reparse = false;
  }
  if (next != trees.size())
    throw ParseError("parse file has " + std::to_string(trees.size()) +
                     " sentences, expected " + std::to_string(next));
  save_synthetic(samples, output);
  std::cout << "reparsed " << next << " samples\n";
}

void add_model_options(CLI::App* cmd, ModelConfig& m) {
  cmd->add_option("--d-model", m.d_model)->capture_default_str();
  cmd->add_option("--transformer-layers", m.n_transformer_layers)
      ->capture_default_str();
  cmd->add_option("--heads", m.n_heads)->capture_default_str();
  cmd->add_option("--d-ff", m.d_ff)->capture_default_str();
  cmd->add_option("--d-gcn", m.d_gcn)->capture_default_str();
  cmd->add_option("--gcn-layers", m.n_gcn_layers)->capture_default_str();
  cmd->add_option("--d-label", m.d_label)->capture_default_str();
  cmd->add_option("--max-seq-len", m.max_seq_len)->capture_default_str();
  cmd->add_option("--dropout-embed", m.dropout_embed)->capture_default_str();
  cmd->add_option("--dropout-feat", m.dropout_feat)->capture_default_str();
  cmd->add_option("--init-seed", m.init_seed)->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust aspect-based sentiment analysis workbench"};
  app.require_subcommand(1);
  const char* env_cfg = std::getenv("ABSA_CONFIG");
  app.set_config("--config", env_cfg ? env_cfg : "",
                 "key = value config file; subcommand keys go in "
                 "[subcommand] sections");

  AugmentArgs aug;
  auto* c_aug = app.add_subcommand("augment", "generate synthetic corpora");
  c_aug->add_option("--corpus", aug.corpus, "CoNLL-U sentences")->required();
  c_aug->add_option("--instances", aug.instances, "instance records")
      ->required();
  c_aug->add_option("--sentiment-lexicon", aug.sentiment_lexicon)->required();
  c_aug->add_option("--relation-lexicon", aug.relation_lexicon)->required();
  c_aug->add_option("--negations", aug.negations);
  c_aug->add_option("--output-dir", aug.output_dir)->required();
  c_aug->add_option("--theta-a", aug.theta_a)->capture_default_str();
  c_aug->add_option("--theta-n", aug.theta_n)->capture_default_str();
  c_aug->add_option("--theta-m", aug.theta_m)->capture_default_str();
  c_aug->add_option("--seed", aug.seed)->capture_default_str();
  c_aug->add_option("--samples-per-target", aug.samples_per_target)
      ->capture_default_str();
  c_aug->add_option("--embed-dim", aug.embed_dim)->capture_default_str();
  c_aug->add_option("--top-j", aug.top_j)->capture_default_str();
  c_aug->callback([&] { run_augment(aug); });

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "train a classifier");
  c_tr->add_option("--corpus", tr.corpus)->required();
  c_tr->add_option("--instances", tr.instances)->required();
  c_tr->add_option("--dev-corpus", tr.dev_corpus);
  c_tr->add_option("--dev-instances", tr.dev_instances);
  c_tr->add_option("--labels", tr.labels)->required();
  c_tr->add_option("--vocab", tr.vocab)->required();
  c_tr->add_option("--word-vectors", tr.word_vectors);
  c_tr->add_option("--synthetic", tr.synthetic, "synthetic corpus stem");
  c_tr->add_option("--output-dir", tr.output_dir)->required();
  c_tr->add_option("--regime", tr.regime, "e|a|e+c|a+c")
      ->capture_default_str();
  c_tr->add_option("--batch-size", tr.train.batch_size)
      ->capture_default_str();
  c_tr->add_option("--max-epochs", tr.train.max_epochs)
      ->capture_default_str();
  c_tr->add_option("--patience", tr.train.patience)->capture_default_str();
  c_tr->add_option("--lr", tr.train.lr)->capture_default_str();
  c_tr->add_option("--weight-decay", tr.train.weight_decay)
      ->capture_default_str();
  c_tr->add_option("--lambda-a", tr.train.lambda_a)->capture_default_str();
  c_tr->add_option("--lambda-c", tr.lambda_c, "four scheme weights")
      ->expected(4);
  c_tr->add_option("--mu", tr.train.mu)->capture_default_str();
  c_tr->add_option("--seed", tr.train.seed)->capture_default_str();
  c_tr->add_flag("--separate-weights", tr.separate_weights,
                 "give the synthetic-side encoder its own parameters");
  c_tr->add_option("--max-positives", tr.train.max_positives)
      ->capture_default_str();
  c_tr->add_option("--max-negatives", tr.train.max_negatives)
      ->capture_default_str();
  add_model_options(c_tr, tr.model);
  c_tr->callback([&] { run_train(tr); });

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "evaluate a checkpoint");
  c_ev->add_option("--checkpoint", ev.checkpoint)->required();
  c_ev->add_option("--model-config", ev.model_config)->required();
  c_ev->add_option("--corpus", ev.corpus)->required();
  c_ev->add_option("--instances", ev.instances)->required();
  c_ev->add_option("--labels", ev.labels)->required();
  c_ev->add_option("--vocab", ev.vocab)->required();
  c_ev->add_option("--report", ev.report);
  c_ev->add_option("--parse-noise", ev.parse_noise)->capture_default_str();
  c_ev->add_option("--noise-seed", ev.noise_seed)->capture_default_str();
  c_ev->callback([&] { run_eval(ev); });

  GradArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "finite-difference checks");
  c_gc->add_option("--op-seeds", gc.op_seeds)->capture_default_str();
  c_gc->add_option("--model-seeds", gc.model_seeds)->capture_default_str();
  c_gc->add_option("--entries", gc.entries)->capture_default_str();
  c_gc->callback([&] { run_gradcheck(gc); });

  std::string es_stem, es_out = "-";
  auto* c_es = app.add_subcommand("export-sentences",
                                  "emit sentences awaiting a reparse");
  c_es->add_option("--synthetic", es_stem)->required();
  c_es->add_option("--output", es_out)->capture_default_str();
  c_es->callback([&] { run_export_sentences(es_stem, es_out); });

  std::string ip_stem, ip_parses, ip_out;
  auto* c_ip = app.add_subcommand("import-parses",
                                  "join returned parses by line index");
  c_ip->add_option("--synthetic", ip_stem)->required();
  c_ip->add_option("--parses", ip_parses)->required();
  c_ip->add_option("--output", ip_out)->required();
  c_ip->callback([&] { run_import_parses(ip_stem, ip_parses, ip_out); });

  EvalArgs dr;
  auto* c_dr = app.add_subcommand("dump-reprs",
                                  "write per-instance representations");
  c_dr->add_option("--checkpoint", dr.checkpoint)->required();
  c_dr->add_option("--model-config", dr.model_config)->required();
  c_dr->add_option("--corpus", dr.corpus)->required();
  c_dr->add_option("--instances", dr.instances)->required();
  c_dr->add_option("--labels", dr.labels)->required();
  c_dr->add_option("--vocab", dr.vocab)->required();
  c_dr->add_option("--repr", dr.repr, "r_f|r_s|r_adv")->capture_default_str();
  c_dr->add_option("--output", dr.output)->required();
  c_dr->callback([&] { run_dump_reprs(dr); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return g_exit;
}
