#include "recg/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "recg/binio.hpp"

namespace recg {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

[[noreturn]] void bad(std::string_view key, std::string_view value) {
  throw Error(ErrorCode::Parse, "bad value '" + std::string(value) + "' for " + std::string(key));
}

double to_double(std::string_view k, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(k, v);
  return out;
}

std::uint64_t to_u64(std::string_view k, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(k, v);
  return out;
}

bool to_bool(std::string_view k, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(k, v);
}

std::vector<std::size_t> to_list(std::string_view k, std::string_view v) {
  std::vector<std::size_t> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(to_u64(k, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

template <typename E>
E to_enum(std::string_view k, std::string_view v, std::initializer_list<std::pair<const char*, E>> table) {
  for (const auto& [name, e] : table)
    if (v == name) return e;
  bad(k, v);
}

using Setter = std::function<void(RunConfig&, std::string_view, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
#define SZ(key, field) t[key] = [](RunConfig& c, auto k, auto v) { c.field = to_u64(k, v); }
#define DB(key, field) t[key] = [](RunConfig& c, auto k, auto v) { c.field = to_double(k, v); }
#define BL(key, field) t[key] = [](RunConfig& c, auto k, auto v) { c.field = to_bool(k, v); }
    SZ("model.d_h", model.d_h);
    SZ("model.d_l", model.d_l);
    SZ("model.max_seq_len", model.max_seq_len);
    t["model.encoder"] = [](RunConfig& c, auto k, auto v) {
      c.model.encoder = to_enum(k, v, {std::pair{"mean-pool", EncoderVariant::MeanPool},
                                       std::pair{"recurrent-gate", EncoderVariant::RecurrentGate}});
    };
    t["model.merge"] = [](RunConfig& c, auto k, auto v) {
      c.model.merge = to_enum(k, v, {std::pair{"sum", MergeMode::Sum}});
    };
    t["model.fusion_init"] = [](RunConfig& c, auto k, auto v) {
      c.model.fusion_init = to_enum(k, v, {std::pair{"identity", FusionInit::Identity},
                                           std::pair{"uniform", FusionInit::Uniform}});
    };

    DB("loss.alpha", loss.alpha);
    DB("loss.tau", loss.tau);
    t["loss.beta_rule"] = [](RunConfig& c, auto k, auto v) {
      c.loss.beta_rule = to_enum(k, v, {std::pair{"domain-cubic", BetaRule::DomainCubic},
                                        std::pair{"manual", BetaRule::Manual}});
    };
    t["loss.manual_beta"] = [](RunConfig& c, auto k, auto v) { c.loss.manual_beta = to_double(k, v); };
    t["loss.n_for_beta"] = [](RunConfig& c, auto k, auto v) {
      c.loss.n_for_beta = to_enum(k, v, {std::pair{"batch-items", BetaCount::BatchItems},
                                         std::pair{"corpus-items", BetaCount::CorpusItems}});
    };
    BL("loss.include_self_pairs", loss.include_self_pairs);
    t["loss.inter_mode"] = [](RunConfig& c, auto k, auto v) {
      c.loss.inter_mode = to_enum(k, v, {std::pair{"literal-exclude-own", InterMode::LiteralExcludeOwn},
                                         std::pair{"include-own", InterMode::IncludeOwn}});
    };
    SZ("loss.sample_size", loss.sample_size);
    t["loss.purity"] = [](RunConfig& c, auto k, auto v) {
      c.loss.purity = to_enum(k, v, {std::pair{"strict", GenPurity::Strict},
                                     std::pair{"metadata", GenPurity::Metadata}});
    };
    BL("loss.use_intra", loss.use_intra);
    BL("loss.use_inter", loss.use_inter);

    DB("train.learning_rate", train.learning_rate);
    SZ("train.batch_size", train.batch_size);
    SZ("train.epochs", train.epochs);
    SZ("train.seed", train.seed);
    DB("train.adam_beta1", train.adam_beta1);
    DB("train.adam_beta2", train.adam_beta2);
    DB("train.adam_eps", train.adam_eps);
    t["train.grad_clip"] = [](RunConfig& c, auto k, auto v) {
      if (v == "none") c.train.grad_clip.reset();
      else c.train.grad_clip = to_double(k, v);
    };
    SZ("train.patience", train.patience);
    BL("train.item_generalization", train.item_generalization);
    BL("train.sequence_generalization", train.sequence_generalization);
    DB("train.fusion_warm_fraction", train.fusion_warm_fraction);
    SZ("train.n_patterns", train.n_patterns);
    SZ("train.validation_negatives", train.validation.n_negatives);

    t["eval.cutoffs"] = [](RunConfig& c, auto k, auto v) { c.eval.cutoffs = to_list(k, v); };
    SZ("eval.n_negatives", eval.n_negatives);
    SZ("eval.n_repeats", eval.n_repeats);
    SZ("eval.seed", eval.seed);
    t["eval.tie_rule"] = [](RunConfig& c, auto k, auto v) {
      c.eval.tie_rule = to_enum(k, v, {std::pair{"pessimistic", TieRule::Pessimistic},
                                       std::pair{"optimistic", TieRule::Optimistic}});
    };

    SZ("synth.n_items", synth.n_items);
    SZ("synth.n_users", synth.n_users);
    SZ("synth.d_h", synth.d_h);
    DB("synth.bias_strength", synth.bias_strength);
    SZ("synth.n_latent_topics", synth.n_latent_topics);
    DB("synth.transition_sharpness", synth.transition_sharpness);
    DB("synth.item_noise", synth.item_noise);
    SZ("synth.seq_len_min", synth.seq_len_min);
    SZ("synth.seq_len_max", synth.seq_len_max);
    SZ("synth.seed", synth.seed);
    t["synth.source_name"] = [](RunConfig& c, auto, auto v) { c.synth.source_name = std::string(v); };
    t["synth.target_name"] = [](RunConfig& c, auto, auto v) { c.synth.target_name = std::string(v); };

    SZ("ingest.min_interactions", ingest.min_interactions);
    BL("ingest.collapse_consecutive_duplicates", ingest.collapse_consecutive_duplicates);
#undef SZ
#undef DB
#undef BL
    return t;
  }();
  return table;
}

}  // namespace

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto& t = setters();
  const auto it = t.find(key);
  if (it == t.end()) throw Error(ErrorCode::Parse, "unknown config key '" + std::string(key) + "'");
  it->second(cfg, key, value);
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  return parse_config(read_text(path), std::move(base));
}

std::string format_config(const RunConfig& c) {
  std::ostringstream o;
  o.precision(17);
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "model.d_h = " << c.model.d_h << "\n"
    << "model.d_l = " << c.model.d_l << "\n"
    << "model.max_seq_len = " << c.model.max_seq_len << "\n"
    << "model.encoder = " << to_string(c.model.encoder) << "\n"
    << "model.merge = sum\n"
    << "model.fusion_init = " << (c.model.fusion_init == FusionInit::Identity ? "identity" : "uniform") << "\n"
    << "loss.alpha = " << c.loss.alpha << "\n"
    << "loss.tau = " << c.loss.tau << "\n"
    << "loss.beta_rule = " << (c.loss.beta_rule == BetaRule::DomainCubic ? "domain-cubic" : "manual") << "\n";
  if (c.loss.manual_beta) o << "loss.manual_beta = " << *c.loss.manual_beta << "\n";
  o << "loss.n_for_beta = " << (c.loss.n_for_beta == BetaCount::BatchItems ? "batch-items" : "corpus-items") << "\n"
    << "loss.include_self_pairs = " << b(c.loss.include_self_pairs) << "\n"
    << "loss.inter_mode = "
    << (c.loss.inter_mode == InterMode::LiteralExcludeOwn ? "literal-exclude-own" : "include-own") << "\n"
    << "loss.sample_size = " << c.loss.sample_size << "\n"
    << "loss.purity = " << (c.loss.purity == GenPurity::Strict ? "strict" : "metadata") << "\n"
    << "loss.use_intra = " << b(c.loss.use_intra) << "\n"
    << "loss.use_inter = " << b(c.loss.use_inter) << "\n"
    << "train.learning_rate = " << c.train.learning_rate << "\n"
    << "train.batch_size = " << c.train.batch_size << "\n"
    << "train.epochs = " << c.train.epochs << "\n"
    << "train.seed = " << c.train.seed << "\n"
    << "train.adam_beta1 = " << c.train.adam_beta1 << "\n"
    << "train.adam_beta2 = " << c.train.adam_beta2 << "\n"
    << "train.adam_eps = " << c.train.adam_eps << "\n"
    << "train.grad_clip = ";
  if (c.train.grad_clip) o << *c.train.grad_clip;
  else o << "none";
  o << "\n"
    << "train.patience = " << c.train.patience << "\n"
    << "train.item_generalization = " << b(c.train.item_generalization) << "\n"
    << "train.sequence_generalization = " << b(c.train.sequence_generalization) << "\n"
    << "train.fusion_warm_fraction = " << c.train.fusion_warm_fraction << "\n"
    << "train.n_patterns = " << c.train.n_patterns << "\n"
    << "train.validation_negatives = " << c.train.validation.n_negatives << "\n"
    << "eval.cutoffs = ";
  for (std::size_t i = 0; i < c.eval.cutoffs.size(); ++i) o << (i ? "," : "") << c.eval.cutoffs[i];
  o << "\n"
    << "eval.n_negatives = " << c.eval.n_negatives << "\n"
    << "eval.n_repeats = " << c.eval.n_repeats << "\n"
    << "eval.seed = " << c.eval.seed << "\n"
    << "eval.tie_rule = " << (c.eval.tie_rule == TieRule::Pessimistic ? "pessimistic" : "optimistic") << "\n"
    << "synth.n_items = " << c.synth.n_items << "\n"
    << "synth.n_users = " << c.synth.n_users << "\n"
    << "synth.d_h = " << c.synth.d_h << "\n"
    << "synth.bias_strength = " << c.synth.bias_strength << "\n"
    << "synth.n_latent_topics = " << c.synth.n_latent_topics << "\n"
    << "synth.transition_sharpness = " << c.synth.transition_sharpness << "\n"
    << "synth.item_noise = " << c.synth.item_noise << "\n"
    << "synth.seq_len_min = " << c.synth.seq_len_min << "\n"
    << "synth.seq_len_max = " << c.synth.seq_len_max << "\n"
    << "synth.seed = " << c.synth.seed << "\n"
    << "synth.source_name = " << c.synth.source_name << "\n"
    << "synth.target_name = " << c.synth.target_name << "\n"
    << "ingest.min_interactions = " << c.ingest.min_interactions << "\n"
    << "ingest.collapse_consecutive_duplicates = " << b(c.ingest.collapse_consecutive_duplicates) << "\n";
  return o.str();
}

}  // namespace recg
