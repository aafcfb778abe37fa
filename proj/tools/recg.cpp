// recg: command-line front end for the zero-shot recommendation pipeline.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <iostream>
#include <map>

#include <nlohmann/json.hpp>

#include "recg/binio.hpp"
#include "recg/config.hpp"
#include "recg/corpus.hpp"
#include "recg/evalkit.hpp"
#include "recg/patterns.hpp"
#include "recg/semstore.hpp"
#include "recg/synth.hpp"
#include "recg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace recg;

namespace {

enum Exit { kOk = 0, kUsage = 2, kParse = 2, kEmpty = 3, kIo = 4, kConfig = 5, kGuard = 6, kDiverged = 7 };

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::CorpusEmpty:
      return kEmpty;
    case ErrorCode::Io:
      return kIo;
    case ErrorCode::DomainOverlap:
    case ErrorCode::FingerprintMismatch:
      return kGuard;
    case ErrorCode::Divergence:
      return kDiverged;
    case ErrorCode::InvalidConfig:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::UnboundItems:
    case ErrorCode::EmptyHistory:
    case ErrorCode::EmptyGroup:
    case ErrorCode::TooFewDomains:
    case ErrorCode::TooFewPoints:
      return kConfig;
    default:
      return kParse;  // malformed text or binary input
  }
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string file_sha256(const fs::path& p) {
  const auto b = read_file(p);
  return to_hex(sha256(b));
}

/// Records inputs, outputs (with checksums) and timings for one subcommand.
struct Manifest {
  std::string command;
  json j = json::object();
  Clock::time_point start = Clock::now();

  void input(const fs::path& p) { j["inputs"].push_back({{"path", p.string()}, {"sha256", file_sha256(p)}}); }
  void output(const fs::path& p) { j["outputs"].push_back({{"path", p.string()}, {"sha256", file_sha256(p)}}); }
  void timing(const std::string& stage, double s) { j["timings"][stage] = s; }

  void write(const fs::path& dir, const RunConfig& cfg) {
    j["command"] = command;
    j["config"] = format_config(cfg);
    j["seeds"] = {{"train", cfg.train.seed}, {"eval", cfg.eval.seed}, {"synth", cfg.synth.seed}};
    timing("total", seconds_since(start));
    if (!j.contains("inputs")) j["inputs"] = json::array();
    if (!j.contains("outputs")) j["outputs"] = json::array();
    write_text(dir / "manifest.json", j.dump(2) + "\n");
  }
};

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  int threads = 1;
  std::vector<std::string> sets;
};

RunConfig resolve(const Globals& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg = load_config(g.config_path);
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::Parse, "--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) cfg.train.seed = cfg.eval.seed = cfg.synth.seed = *g.seed;
  return cfg;
}

fs::path out_dir(const Globals& g) {
  fs::create_directories(g.out);
  return g.out;
}

DomainIndex require_domain(const Corpus& c, const std::string& name) {
  const auto d = c.find_domain(name);
  if (!d) throw Error(ErrorCode::InvalidConfig, "corpus has no domain '" + name + "'");
  return *d;
}

void log(const std::string& s) { std::cerr << s << '\n'; }

// ---- subcommands ------------------------------------------------------------

int cmd_prepare(const Globals& g, const std::string& inter, const std::string& meta) {
  Manifest m{"prepare"};
  const auto cfg = resolve(g);
  const auto res = ingest(inter, meta, cfg.ingest);
  const auto dir = out_dir(g);
  write_corpus(res.corpus, dir);
  const auto spec = split(res.corpus);
  write_text(dir / "split.jsonl", format_split_manifest(res.corpus, spec));
  m.input(inter);
  m.input(meta);
  for (const char* f : {"interactions.tsv", "metadata.jsonl", "split.jsonl"}) m.output(dir / f);
  m.j["stats"] = {{"users", res.corpus.users.size()},
                  {"items", res.corpus.items.size()},
                  {"domains", res.corpus.domains.size()},
                  {"filter_passes", res.stats.filter_passes},
                  {"dropped_users", res.stats.dropped_users},
                  {"dropped_items", res.stats.dropped_items},
                  {"textless_items", res.stats.textless_items},
                  {"split_excluded", spec.excluded}};
  if (spec.excluded) log("warning: " + std::to_string(spec.excluded) + " user(s) shorter than 3 excluded from split");
  m.write(dir, cfg);
  log("prepared " + std::to_string(res.corpus.users.size()) + " users, " +
      std::to_string(res.corpus.items.size()) + " items");
  return kOk;
}

double center_distance(const SynthOutput& out) {
  const auto& rows = out.store.rows();
  std::vector<DVec> c(2, DVec(rows.cols(), 0.0));
  std::vector<double> n(2, 0.0);
  for (std::size_t i = 0; i < out.corpus.items.size(); ++i) {
    const auto d = out.corpus.items[i].domain;
    n[d] += 1;
    for (std::size_t k = 0; k < rows.cols(); ++k) c[d][k] += rows(i, k);
  }
  double s = 0;
  for (std::size_t k = 0; k < rows.cols(); ++k) {
    const double diff = c[0][k] / n[0] - c[1][k] / n[1];
    s += diff * diff;
  }
  return std::sqrt(s);
}

void write_synth(const SynthOutput& out, const fs::path& dir, Manifest& m) {
  write_corpus(out.corpus, dir);
  out.store.save(dir / "embeddings.semb");
  for (const char* f : {"interactions.tsv", "metadata.jsonl", "embeddings.semb"}) m.output(dir / f);
}

int cmd_synth(const Globals& g, const std::vector<double>& sweep) {
  Manifest m{"synth"};
  auto cfg = resolve(g);
  const auto dir = out_dir(g);
  if (sweep.empty()) {
    const auto out = synthesize(cfg.synth);
    write_synth(out, dir, m);
    m.j["center_distance"] = center_distance(out);
  } else {
    std::string csv = "bias_strength,center_distance,dir\n";
    for (double b : sweep) {
      auto sc = cfg.synth;
      sc.bias_strength = b;
      const auto out = synthesize(sc);
      std::ostringstream name;
      name << "bias_" << b;
      const auto sub = dir / name.str();
      fs::create_directories(sub);
      write_synth(out, sub, m);
      std::ostringstream row;
      row << b << ',' << center_distance(out) << ',' << name.str() << '\n';
      csv += row.str();
    }
    write_text(dir / "sweep.csv", csv);
    m.output(dir / "sweep.csv");
  }
  m.write(dir, cfg);
  return kOk;
}

struct Inputs {
  Corpus corpus;
  SemanticStore store;
};

Inputs load_inputs(const std::string& corpus_dir, const std::string& semb, Manifest& m) {
  m.input(fs::path(corpus_dir) / "interactions.tsv");
  m.input(fs::path(corpus_dir) / "metadata.jsonl");
  m.input(semb);
  return {load_corpus(corpus_dir), SemanticStore::load(semb)};
}

struct TrainFlags {
  std::string corpus, semb, source, variant = "recg";
  bool no_intra = false, no_inter = false, no_sg = false;
};

int cmd_train(const Globals& g, const TrainFlags& f) {
  Manifest m{"train"};
  auto cfg = resolve(g);
  if (f.variant == "sem") {
    cfg.train.item_generalization = false;
    cfg.train.sequence_generalization = false;
  } else if (f.variant != "recg") {
    throw Error(ErrorCode::InvalidConfig, "--variant must be sem or recg");
  }
  if (f.no_intra) cfg.loss.use_intra = false;
  if (f.no_inter) cfg.loss.use_inter = false;
  if (f.no_sg) cfg.train.sequence_generalization = false;

  auto in = load_inputs(f.corpus, f.semb, m);
  const auto src = require_domain(in.corpus, f.source.empty() ? cfg.synth.source_name : f.source);
  auto t0 = Clock::now();
  const auto data = make_train_data(in.corpus, bind(in.store, in.corpus), src, cfg.loss.purity);
  const auto res = train(data, cfg.model, cfg.loss, cfg.train);
  m.timing("train", seconds_since(t0));

  const auto dir = out_dir(g);
  const auto label = ablation_label(cfg.train, cfg.loss);
  const CheckpointMeta meta{corpus_digest(data.source), in.corpus.domains[src].name, label};
  const auto ckpt = encode_checkpoint(res.params, meta);
  write_file(dir / "model.zrcg", ckpt);
  m.output(dir / "model.zrcg");
  if (res.bank) {
    auto bank = *res.bank;
    bank.fingerprint = bank_fingerprint(ckpt);
    bank.save(dir / "patterns.ptrn");
    m.output(dir / "patterns.ptrn");
  }
  std::string loss_log = loss_log_header();
  for (std::size_t i = 0; i < res.steps.size(); ++i) loss_log += loss_log_row(i, res.steps[i]);
  write_text(dir / "loss_log.csv", loss_log);
  std::string epochs = "epoch,mean_rec,mean_total,val_ndcg10,fused\n";
  for (const auto& e : res.epochs) {
    std::ostringstream row;
    row.precision(17);
    row << e.epoch << ',' << e.mean_rec << ',' << e.mean_total << ',' << e.val_ndcg10 << ',' << e.fused << '\n';
    epochs += row.str();
  }
  write_text(dir / "epochs.csv", epochs);
  m.output(dir / "loss_log.csv");
  m.output(dir / "epochs.csv");
  m.j["variant"] = label;
  m.j["best_epoch"] = res.best_epoch;
  m.j["diverged"] = res.diverged;
  if (res.diverged) m.j["divergence"] = res.divergence;
  m.write(dir, cfg);
  log(label + ": best epoch " + std::to_string(res.best_epoch) + " of " + std::to_string(res.epochs.size()));
  if (res.diverged) {
    log("training diverged: " + res.divergence + " (best checkpoint kept)");
    return kDiverged;
  }
  return kOk;
}

struct EvalFlags {
  std::string checkpoint, bank, corpus, semb, source, target;
  bool no_fuse = false;
};

int cmd_eval(const Globals& g, const EvalFlags& f) {
  Manifest m{"eval"};
  const auto cfg = resolve(g);
  auto in = load_inputs(f.corpus, f.semb, m);
  m.input(f.checkpoint);
  const auto ckpt_bytes = read_file(f.checkpoint);
  std::optional<PatternBank> bank;
  if (!f.bank.empty() && !f.no_fuse) {
    m.input(f.bank);
    bank = PatternBank::load(f.bank);
  }
  const auto src = domain_view(in.corpus, require_domain(in.corpus, f.source.empty() ? cfg.synth.source_name : f.source));
  EvalReport report;
  auto t0 = Clock::now();
  if (!f.target.empty()) {
    const auto tgt = domain_view(in.corpus, require_domain(in.corpus, f.target));
    report = zero_shot_eval(ckpt_bytes, bank ? &*bank : nullptr, src, tgt, bind(in.store, tgt).rows, cfg.eval);
  } else {
    const auto ck = decode_checkpoint(ckpt_bytes);
    if (bank) require_fingerprint(*bank, ckpt_bytes);
    const Scorer scorer{&ck.params, bank ? &*bank : nullptr};
    report = evaluate(scorer, src, bind(in.store, src).rows, EvalTarget::Test, cfg.eval);
    report.variant = variant_label(ck.params, bank.has_value());
    report.source_domain = src.domains[0].name;
  }
  m.timing("eval", seconds_since(t0));
  const auto dir = out_dir(g);
  write_text(dir / "report.json", report.to_json().dump(2) + "\n");
  m.output(dir / "report.json");
  m.write(dir, cfg);
  std::ostringstream line;
  line.precision(4);
  line << report.variant << ' ' << report.source_domain << "->" << report.target_domain;
  for (const auto& c : report.cutoffs) line << "  R@" << c.k << '=' << c.recall_pct << " N@" << c.k << '=' << c.ndcg_pct;
  std::cout << line.str() << '\n';
  return kOk;
}

DiagnosticsReport diagnose(const fs::path& ckpt, const Inputs& in, Matrix* projected) {
  const auto ck = checkpoint_load(ckpt);
  const auto raw = bind(in.store, in.corpus).rows;
  auto emb = project_all(ck.params, raw);
  std::vector<std::size_t> dom;
  for (const auto& it : in.corpus.items) dom.push_back(it.domain);
  auto rep = embedding_diagnostics(emb, dom);
  if (projected) *projected = std::move(emb);
  return rep;
}

int cmd_analyze(const Globals& g, const std::string& ckpt, const std::vector<std::string>& compare,
                const std::string& corpus, const std::string& semb) {
  Manifest m{"analyze"};
  const auto cfg = resolve(g);
  const auto in = load_inputs(corpus, semb, m);
  const auto dir = out_dir(g);
  std::vector<std::string> ids, domains;
  for (const auto& it : in.corpus.items) {
    ids.push_back(it.item_id);
    domains.push_back(in.corpus.domains[it.domain].name);
  }
  if (!ckpt.empty()) {
    m.input(ckpt);
    const auto rep = diagnose(ckpt, in, nullptr);
    write_text(dir / "diagnostics.csv", rep.metrics_csv());
    write_text(dir / "pca.csv", pca_csv(ids, domains, rep.pca));
    m.output(dir / "diagnostics.csv");
    m.output(dir / "pca.csv");
    for (const auto& w : rep.warnings) log("warning: " + w);
  }
  if (!compare.empty()) {
    std::vector<DiagnosticsReport> reps;
    std::string header = "metric";
    for (std::size_t i = 0; i < compare.size(); ++i) {
      m.input(compare[i]);
      reps.push_back(diagnose(compare[i], in, nullptr));
      header += "," + fs::path(compare[i]).parent_path().filename().string();
      write_text(dir / ("pca_" + std::to_string(i) + ".csv"), pca_csv(ids, domains, reps.back().pca));
      m.output(dir / ("pca_" + std::to_string(i) + ".csv"));
    }
    std::ostringstream csv;
    csv.precision(10);
    csv << header << '\n';
    auto row = [&](const char* name, auto get) {
      csv << name;
      for (const auto& r : reps) csv << ',' << get(r);
      csv << '\n';
    };
    row("center_distance", [](const DiagnosticsReport& r) { return r.center_distance; });
    row("mean_intra_cosine", [](const DiagnosticsReport& r) { return r.mean_intra_cosine; });
    row("probe_accuracy", [](const DiagnosticsReport& r) { return r.probe_accuracy; });
    write_text(dir / "compare.csv", csv.str());
    m.output(dir / "compare.csv");
    std::cout << csv.str();
  }
  if (ckpt.empty() && compare.empty()) throw Error(ErrorCode::InvalidConfig, "analyze needs --checkpoint or --compare");
  m.write(dir, cfg);
  return kOk;
}

int cmd_semb_info(const std::string& path) {
  const auto store = SemanticStore::load(path);
  json j = {{"path", path}, {"count", store.count()}, {"dim", store.dim()}, {"sha256", file_sha256(path)}};
  json head = json::array();
  for (std::size_t i = 0; i < std::min<std::size_t>(store.count(), 5); ++i) head.push_back(store.ids()[i]);
  j["first_ids"] = head;
  std::cout << j.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot cross-domain sequential recommendation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "flat key = value config file");
  app.add_option("--seed", g.seed, "overrides train, eval and synth seeds");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "worker threads (computation is sequential; recorded only)");
  app.add_option("--set", g.sets, "config override key=value (repeatable; wins over --config)");

  std::string inter, meta;
  auto* prepare = app.add_subcommand("prepare", "ingest raw interactions + metadata, filter, split");
  prepare->add_option("--interactions", inter, "user<TAB>item<TAB>timestamp file")->required();
  prepare->add_option("--metadata", meta, "item metadata JSONL")->required();

  std::vector<double> sweep;
  auto* synth = app.add_subcommand("synth", "write a synthetic two-domain corpus and SEMB file");
  synth->add_option("--bias-sweep", sweep, "one corpus per listed bias_strength")->delimiter(',');

  TrainFlags tf;
  auto* trn = app.add_subcommand("train", "train on the source domain");
  trn->add_option("--corpus", tf.corpus, "corpus directory")->required();
  trn->add_option("--semb", tf.semb, "SEMB embeddings")->required();
  trn->add_option("--source", tf.source, "source domain name (default synth.source_name)");
  trn->add_option("--variant", tf.variant, "sem | recg")->check(CLI::IsMember({"sem", "recg"}));
  trn->add_flag("--no-intra", tf.no_intra, "drop the intra-domain diversity term");
  trn->add_flag("--no-inter", tf.no_inter, "drop the inter-domain compactness term");
  trn->add_flag("--no-sg", tf.no_sg, "disable sequence-level pattern fusion");

  EvalFlags ef;
  auto* ev = app.add_subcommand("eval", "rank held-out items (in-domain, or zero-shot with --target)");
  ev->add_option("--checkpoint", ef.checkpoint)->required();
  ev->add_option("--bank", ef.bank, "pattern bank; enables fusion");
  ev->add_option("--corpus", ef.corpus)->required();
  ev->add_option("--semb", ef.semb)->required();
  ev->add_option("--source", ef.source);
  ev->add_option("--target", ef.target, "target domain for zero-shot evaluation");
  ev->add_flag("--no-fuse", ef.no_fuse, "ignore the bank (-Sem style scoring)");

  std::string an_ckpt, an_corpus, an_semb;
  std::vector<std::string> compare;
  auto* an = app.add_subcommand("analyze", "embedding diagnostics and PCA");
  an->add_option("--checkpoint", an_ckpt);
  an->add_option("--compare", compare, "two or more checkpoints side by side");
  an->add_option("--corpus", an_corpus)->required();
  an->add_option("--semb", an_semb)->required();

  std::string semb_path;
  auto* info = app.add_subcommand("semb-info", "describe a SEMB file");
  info->add_option("path", semb_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*prepare) return cmd_prepare(g, inter, meta);
    if (*synth) return cmd_synth(g, sweep);
    if (*trn) return cmd_train(g, tf);
    if (*ev) return cmd_eval(g, ef);
    if (*an) return cmd_analyze(g, an_ckpt, compare, an_corpus, an_semb);
    if (*info) return cmd_semb_info(semb_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    const auto& det = e.details();
    for (std::size_t i = 0; i < std::min<std::size_t>(det.size(), 10); ++i) std::cerr << "  " << det[i] << '\n';
    if (det.size() > 10) std::cerr << "  ... " << det.size() - 10 << " more\n";
    return exit_code(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}
