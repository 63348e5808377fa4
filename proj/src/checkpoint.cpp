#include "dada/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace dada {

namespace {

constexpr const char *kMagic = "DADA-CHECKPOINT";
constexpr int kVersion = 1;

// Every persisted array, in file order: learnable tensors, then BN running statistics.
template <typename ModelsT, typename OnParam, typename OnBuffer>
void for_each_array(ModelsT &m, OnParam &&on_param, OnBuffer &&on_buffer) {
  for (auto *mlp : {&m.generator.mlp, &m.domain.mlp, &m.category.mlp})
    for (auto *p : mlp->parameters()) on_param(*p);
  on_param(m.bank.proxies);
  for (auto *mlp : {&m.generator.mlp, &m.domain.mlp, &m.category.mlp})
    for (size_t l = 0; l < mlp->norms.size(); ++l) {
      auto &bn = mlp->norms[l];
      const std::string base = bn.gamma.name.substr(0, bn.gamma.name.rfind(".gamma"));
      on_buffer(base + ".running_mean", bn.running_mean);
      on_buffer(base + ".running_var", bn.running_var);
    }
}

template <typename Derived>
void write_array(std::ostream &out, const char *kind, const std::string &name, const Eigen::DenseBase<Derived> &a) {
  out << kind << ' ' << name << ' ' << a.rows() << ' ' << a.cols() << '\n';
  char buf[64];
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), a(i, j));
      if (j) out << ' ';
      out.write(buf, p - buf);
    }
    out << '\n';
  }
}

struct RawArray {
  Index rows = 0, cols = 0;
  std::vector<double> values;
};

} // namespace

void save_checkpoint(const std::string &path, const Models &models, const std::string &config_ini, const Rng &rng) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  const ModelDims d = models.dims();
  out << kMagic << ' ' << kVersion << '\n';
  out << "dims " << d.input_dim << ' ' << d.generator_hidden << ' ' << d.embed_dim << ' ' << d.domain_hidden << ' '
      << d.num_domains << ' ' << d.category_hidden1 << ' ' << d.category_hidden2 << ' ' << d.num_classes << '\n';
  out << "config " << config_ini.size() << '\n' << config_ini << '\n';
  std::ostringstream rs;
  rs << rng;
  out << "rng " << rs.str() << '\n';
  auto &mutable_models = const_cast<Models &>(models);
  for_each_array(
      mutable_models, [&](const Parameter &p) { write_array(out, "tensor", p.name, p.value); },
      [&](const std::string &name, const RowVector &v) { write_array(out, "buffer", name, v); });
  out << "end\n";
  if (!out) throw IoError("write failed for checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  auto fail = [&](const std::string &what) -> void { throw ParseError("checkpoint '" + path + "': " + what); };

  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic) fail("not a checkpoint file");
  if (version != kVersion) fail("unsupported version " + std::to_string(version));

  std::string tag;
  ModelDims d;
  in >> tag >> d.input_dim >> d.generator_hidden >> d.embed_dim >> d.domain_hidden >> d.num_domains >> d.category_hidden1 >>
      d.category_hidden2 >> d.num_classes;
  if (!in || tag != "dims") fail("missing dims");

  size_t config_len = 0;
  in >> tag >> config_len;
  if (!in || tag != "config") fail("missing config");
  in.get();
  Checkpoint ck;
  ck.config_ini.resize(config_len);
  in.read(ck.config_ini.data(), static_cast<std::streamsize>(config_len));
  in.get();

  in >> tag;
  if (tag != "rng") fail("missing rng state");
  std::getline(in, ck.rng_state);
  if (!ck.rng_state.empty() && ck.rng_state.front() == ' ') ck.rng_state.erase(0, 1);

  std::map<std::string, RawArray> arrays;
  std::string line;
  while (in >> tag) {
    if (tag == "end") break;
    if (tag != "tensor" && tag != "buffer") fail("unexpected record '" + tag + "'");
    std::string name;
    RawArray a;
    in >> name >> a.rows >> a.cols;
    if (!in || a.rows < 0 || a.cols < 0) fail("bad header for '" + name + "'");
    a.values.resize(static_cast<size_t>(a.rows * a.cols));
    std::string tok;
    for (double &v : a.values) {
      in >> tok;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || p != tok.data() + tok.size()) fail("bad value '" + tok + "' in '" + name + "'");
    }
    arrays[name] = std::move(a);
  }
  if (tag != "end") fail("truncated file");

  Rng scratch(0);
  ck.models = build_models(d, scratch);
  auto take = [&](const std::string &name, Index rows, Index cols) -> const RawArray & {
    auto it = arrays.find(name);
    if (it == arrays.end()) fail("missing array '" + name + "'");
    if (it->second.rows != rows || it->second.cols != cols)
      fail("array '" + name + "' is " + shape_str(it->second.rows, it->second.cols) + ", expected " + shape_str(rows, cols));
    return it->second;
  };
  for_each_array(
      ck.models,
      [&](Parameter &p) {
        const RawArray &a = take(p.name, p.value.rows(), p.value.cols());
        p.value = Eigen::Map<const Matrix>(a.values.data(), a.rows, a.cols);
        p.zero_grad();
      },
      [&](const std::string &name, RowVector &v) {
        const RawArray &a = take(name, 1, v.size());
        v = Eigen::Map<const RowVector>(a.values.data(), a.cols);
      });
  return ck;
}

} // namespace dada
