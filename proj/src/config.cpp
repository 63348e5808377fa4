#include "dada/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace dada {

ProxyLossKind parse_proxy_loss(const std::string &s) {
  if (s == "pa") return ProxyLossKind::Anchor;
  if (s == "pnca") return ProxyLossKind::Nca;
  throw ConfigError("loss.kind must be pa or pnca; got '" + s + "'");
}

std::string to_string(ProxyLossKind k) { return k == ProxyLossKind::Anchor ? "pa" : "pnca"; }

NwdForm parse_nwd_form(const std::string &s) {
  if (s == "matrix") return NwdForm::BatchMatrix;
  if (s == "per_row") return NwdForm::PerRow;
  throw ConfigError("loss.nwd_form must be matrix or per_row; got '" + s + "'");
}

std::string to_string(NwdForm f) { return f == NwdForm::BatchMatrix ? "matrix" : "per_row"; }

void HyperParams::validate() const {
  weights.validate();
  if (!(mix.alpha > 0.0) || !(mix.beta > 0.0)) throw ConfigError("mix.alpha and mix.beta must be positive");
  for (auto [name, lr] : {std::pair{"lr_gen", lr_gen}, {"lr_disc", lr_disc}, {"lr_proxy", lr_proxy}})
    if (!(lr > 0.0)) throw ConfigError(std::string("train.") + name + " must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  if (k_disc_steps < 1) throw ConfigError("train.k_disc_steps must be >= 1");
  if (samples_per_class < 2) throw ConfigError("train.samples_per_class must be >= 2");
  if (batch_size < samples_per_class) throw ConfigError("train.batch_size must be >= train.samples_per_class");
  if (warmup_epochs < 0) throw ConfigError("train.warmup_epochs must be >= 0");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
}

void RunConfig::validate() const {
  hp.validate();
  if (data.source != "synth" && data.source != "csv") throw ConfigError("data.source must be synth or csv; got '" + data.source + "'");
  if (data.source == "csv" && data.path.empty()) throw ConfigError("data.path is required when data.source = csv");
  if (data.source == "synth") data.synth.validate();
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) throw ConfigError("data.train_fraction must lie in (0, 1)");
  for (Index d : {dims.embed_dim, dims.generator_hidden, dims.domain_hidden, dims.category_hidden1, dims.category_hidden2})
    if (d < 1) throw ConfigError("model dims must be >= 1");
  if (eval_every < 1) throw ConfigError("eval.every must be >= 1");
  if (ks.empty()) throw ConfigError("eval.ks must list at least one K");
  for (size_t i = 0; i < ks.size(); ++i)
    if (ks[i] < 1 || (i > 0 && ks[i] <= ks[i - 1])) throw ConfigError("eval.ks must be positive and strictly ascending");
  if (checkpoint_every < 0) throw ConfigError("output.checkpoint_every must be >= 0");
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

// Text conversions for every field type that appears in the config.
std::string encode(const std::string &v) { return v; }
std::string encode(double v) { return fmt(v); }
std::string encode(int v) { return std::to_string(v); }
std::string encode(Index v) { return std::to_string(v); }
std::string encode(std::uint64_t v) { return std::to_string(v); }
std::string encode(bool v) { return v ? "true" : "false"; }
std::string encode(AdaptGroup v) { return to_string(v); }
std::string encode(Discrepancy v) { return to_string(v); }
std::string encode(ProxyLossKind v) { return to_string(v); }
std::string encode(NwdForm v) { return to_string(v); }
std::string encode(const std::vector<int> &v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

template <typename T>
T parse_number(const std::string &key, const std::string &text) {
  T v{};
  const char *b = text.data(), *e = text.data() + text.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw ConfigError("bad value for " + key + ": '" + text + "'");
  return v;
}

void decode(const std::string &key, const std::string &t, std::string &v) { (void)key; v = t; }
void decode(const std::string &key, const std::string &t, double &v) { v = parse_number<double>(key, t); }
void decode(const std::string &key, const std::string &t, int &v) { v = parse_number<int>(key, t); }
void decode(const std::string &key, const std::string &t, Index &v) { v = parse_number<Index>(key, t); }
void decode(const std::string &key, const std::string &t, std::uint64_t &v) { v = parse_number<std::uint64_t>(key, t); }
void decode(const std::string &key, const std::string &t, bool &v) {
  if (t == "true" || t == "1" || t == "yes" || t == "on")
    v = true;
  else if (t == "false" || t == "0" || t == "no" || t == "off")
    v = false;
  else
    throw ConfigError("bad boolean for " + key + ": '" + t + "'");
}
void decode(const std::string &, const std::string &t, AdaptGroup &v) { v = parse_adapt_group(t); }
void decode(const std::string &, const std::string &t, Discrepancy &v) { v = parse_discrepancy(t); }
void decode(const std::string &, const std::string &t, ProxyLossKind &v) { v = parse_proxy_loss(t); }
void decode(const std::string &, const std::string &t, NwdForm &v) { v = parse_nwd_form(t); }
void decode(const std::string &key, const std::string &t, std::vector<int> &v) {
  v.clear();
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    v.push_back(parse_number<int>(key, item));
  }
}

// Single source of truth for the key set and its order.
template <typename Config, typename Visitor>
void visit_fields(Config &c, Visitor &&f) {
  f("data.source", c.data.source);
  f("data.path", c.data.path);
  f("data.train_fraction", c.data.train_fraction);
  f("data.split_seed", c.data.split_seed);
  f("synth.num_classes", c.data.synth.num_classes);
  f("synth.dim", c.data.synth.dim);
  f("synth.samples_per_class", c.data.synth.samples_per_class);
  f("synth.center_scale", c.data.synth.center_scale);
  f("synth.noise_sigma", c.data.synth.noise_sigma);
  f("synth.seed", c.data.synth.seed);
  f("model.embed_dim", c.dims.embed_dim);
  f("model.generator_hidden", c.dims.generator_hidden);
  f("model.domain_hidden", c.dims.domain_hidden);
  f("model.category_hidden1", c.dims.category_hidden1);
  f("model.category_hidden2", c.dims.category_hidden2);
  f("loss.kind", c.hp.loss);
  f("loss.tau", c.hp.weights.tau);
  f("loss.delta", c.hp.weights.delta);
  f("loss.eta", c.hp.weights.eta);
  f("loss.gamma", c.hp.weights.gamma);
  f("loss.nca_negatives_only", c.hp.nca_negatives_only);
  f("loss.nwd_form", c.hp.nwd_form);
  f("loss.adv_raw_sum", c.hp.adv_raw_sum);
  f("mix.alpha", c.hp.mix.alpha);
  f("mix.beta", c.hp.mix.beta);
  f("train.epochs", c.hp.epochs);
  f("train.batch_size", c.hp.batch_size);
  f("train.samples_per_class", c.hp.samples_per_class);
  f("train.k_disc_steps", c.hp.k_disc_steps);
  f("train.warmup_epochs", c.hp.warmup_epochs);
  f("train.lr_gen", c.hp.lr_gen);
  f("train.lr_disc", c.hp.lr_disc);
  f("train.lr_proxy", c.hp.lr_proxy);
  f("train.adam_beta1", c.hp.adam_beta1);
  f("train.adam_beta2", c.hp.adam_beta2);
  f("train.adam_eps", c.hp.adam_eps);
  f("train.weight_decay", c.hp.weight_decay);
  f("train.decoupled_weight_decay", c.hp.decoupled_weight_decay);
  f("train.seed", c.hp.seed);
  f("dada.enabled", c.hp.dada_enabled);
  f("dada.adapt_group", c.hp.adapt_group);
  f("dada.discrepancy", c.hp.discrepancy);
  f("dada.aug", c.hp.use_aug);
  f("dada.adv", c.hp.use_adv);
  f("dada.cls", c.hp.use_cls);
  f("eval.every", c.eval_every);
  f("eval.ks", c.ks);
  f("eval.probe_seed", c.probe_seed);
  f("output.dir", c.output_dir);
  f("output.checkpoint_every", c.checkpoint_every);
  f("output.record_wallclock", c.record_wallclock);
}

} // namespace

std::vector<std::string> RunConfig::known_keys() {
  std::vector<std::string> keys;
  RunConfig c;
  visit_fields(c, [&](const char *key, auto &) { keys.emplace_back(key); });
  return keys;
}

RunConfig RunConfig::parse(const std::string &ini_text, std::span<const std::pair<std::string, std::string>> overrides) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error &e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }

  std::map<std::string, std::string> values;
  for (const auto &[section, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + section + "' must live inside a [section]");
    for (const auto &[key, leaf] : body) values[section + "." + key] = leaf.get_value<std::string>();
  }
  for (const auto &[k, v] : overrides) values[k] = v;

  const auto known = known_keys();
  for (const auto &[k, v] : values)
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown config key '" + k + "'");

  RunConfig cfg;
  visit_fields(cfg, [&](const char *key, auto &field) {
    auto it = values.find(key);
    if (it != values.end()) decode(key, it->second, field);
  });
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string &path, std::span<const std::pair<std::string, std::string>> overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), overrides);
}

std::string RunConfig::to_ini() const {
  std::string out;
  std::string current;
  visit_fields(*this, [&](const char *key, const auto &field) {
    const std::string k(key);
    const auto dot = k.find('.');
    const std::string section = k.substr(0, dot);
    if (section != current) {
      out += (current.empty() ? "" : "\n") + std::string("[") + section + "]\n";
      current = section;
    }
    out += k.substr(dot + 1) + " = " + encode(field) + "\n";
  });
  return out;
}

} // namespace dada
