#include "wpb/models.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>

#include "wpb/error.hpp"

namespace wpb {

void MlpSpec::validate() const {
  if (input_dim < 1) throw ValidationError("MLP input_dim must be at least 1");
  if (num_classes < 2) throw ValidationError("MLP needs at least 2 classes");
  for (std::size_t width : hidden)
    if (width < 1) throw ValidationError("MLP hidden widths must be positive");
}

std::vector<std::size_t> MlpSpec::layer_dims() const {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(num_classes);
  return dims;
}

void Parameters::validate() const {
  if (entries.empty() || entries.size() % 2 != 0)
    throw ValidationError("parameters must hold weight/bias pairs");
  for (std::size_t layer = 0; layer < layer_count(); ++layer) {
    const Tensor& w = weight(layer);
    const Tensor& b = bias(layer);
    if (w.rank() != 2 || b.rank() != 1 || b.size() != w.dim(1))
      throw ValidationError("layer " + std::to_string(layer) + " has inconsistent shapes " +
                            shape_string(w.shape()) + " / " + shape_string(b.shape()));
    if (layer > 0 && w.dim(0) != weight(layer - 1).dim(1))
      throw ValidationError("layer " + std::to_string(layer) + " does not chain from the previous layer");
  }
  if (num_classes() < 2) throw ValidationError("classifier needs at least 2 outputs");
}

bool Parameters::bit_equal(const Parameters& other) const {
  if (entries.size() != other.entries.size()) return false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name != other.entries[i].name || !entries[i].value.bit_equal(other.entries[i].value))
      return false;
  }
  return true;
}

namespace {

Parameters build(const MlpSpec& spec, const std::function<double(std::size_t, double)>& draw) {
  spec.validate();
  const auto dims = spec.layer_dims();
  Parameters params;
  for (std::size_t layer = 0; layer + 1 < dims.size(); ++layer) {
    const std::size_t fan_in = dims[layer], fan_out = dims[layer + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w(Shape{fan_in, fan_out});
    for (double& v : w.data()) v = draw(layer, limit);
    const std::string prefix = "layer" + std::to_string(layer);
    params.entries.push_back({prefix + ".weight", std::move(w)});
    params.entries.push_back({prefix + ".bias", Tensor(Shape{fan_out}, 0.0)});
  }
  return params;
}

}  // namespace

Parameters init_parameters(const MlpSpec& spec, std::uint64_t seed) {
  std::vector<CounterRng> streams;
  for (std::size_t layer = 0; layer <= spec.hidden.size(); ++layer)
    streams.push_back(CounterRng::derive(seed, {0x1417u, layer}));
  return build(spec, [&](std::size_t layer, double limit) { return streams[layer].uniform(-limit, limit); });
}

Parameters zero_parameters(const MlpSpec& spec) {
  return build(spec, [](std::size_t, double) { return 0.0; });
}

MlpSpec spec_of(const Parameters& params) {
  params.validate();
  MlpSpec spec;
  spec.input_dim = params.input_dim();
  for (std::size_t layer = 0; layer + 1 < params.layer_count(); ++layer) spec.hidden.push_back(params.weight(layer).dim(1));
  spec.num_classes = params.num_classes();
  return spec;
}

Tensor forward_logits(const Parameters& params, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != params.input_dim()) {
    throw ValidationError("input shape " + shape_string(x.shape()) + " does not match model input width " +
                          std::to_string(params.input_dim()));
  }
  Tensor h = x;
  for (std::size_t layer = 0; layer < params.layer_count(); ++layer) {
    h = ops::add(ops::matmul(h, params.weight(layer)), params.bias(layer));
    if (layer + 1 < params.layer_count()) h = ops::relu(h);
  }
  return h;
}

std::vector<Var> record_parameters(Tape& tape, const Parameters& params) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& entry : params.entries) vars.push_back(tape.leaf(entry.value));
  return vars;
}

Var forward_logits(Tape& tape, std::span<const Var> param_vars, Var x) {
  const std::size_t layers = param_vars.size() / 2;
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 2 || xv.cols() != tape.value(param_vars[0]).dim(0)) {
    throw ValidationError("input shape " + shape_string(xv.shape()) + " does not match model input width " +
                          std::to_string(tape.value(param_vars[0]).dim(0)));
  }
  Var h = x;
  for (std::size_t layer = 0; layer < layers; ++layer) {
    h = tape.add(tape.matmul(h, param_vars[2 * layer]), param_vars[2 * layer + 1]);
    if (layer + 1 < layers) h = tape.relu(h);
  }
  return h;
}

Var forward_logits(Tape& tape, const Parameters& params, Var x) {
  const auto vars = record_parameters(tape, params);
  return forward_logits(tape, vars, x);
}

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
      if (row[j] > row[best]) best = j;
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict_class(const Parameters& params, const Tensor& x) {
  return argmax_rows(forward_logits(params, x));
}

bool Checkpoint::bit_equal(const Checkpoint& other) const {
  return spec == other.spec && params.bit_equal(other.params) && epoch == other.epoch && rng == other.rng;
}

// Layout (little-endian): magic[8], version u32, dim count u32, dims u32...,
// epoch u32, rng key u64, rng position u64, tensor count u32, then per tensor
// name length u32, name bytes, rank u32, extents u32..., raw f64 data.
namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw RuntimeError(std::string("checkpoint truncated while reading ") + what);
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t narrow(std::size_t v) {
  if (v > 0xFFFFFFFFu) throw ValidationError("extent too large for checkpoint format");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  ckpt.spec.validate();
  ckpt.params.validate();
  if (!(spec_of(ckpt.params) == ckpt.spec)) throw ValidationError("checkpoint parameters do not match its spec");
  Writer w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  const auto dims = ckpt.spec.layer_dims();
  w.u32(narrow(dims.size()));
  for (std::size_t d : dims) w.u32(narrow(d));
  w.u32(ckpt.epoch);
  w.u64(ckpt.rng.key);
  w.u64(ckpt.rng.position);
  w.u32(narrow(ckpt.params.size()));
  for (const auto& [name, value] : ckpt.params.entries) {
    w.u32(narrow(name.size()));
    w.raw(name.data(), name.size());
    w.u32(narrow(value.rank()));
    for (std::size_t e : value.shape()) w.u32(narrow(e));
    for (double v : value.data()) w.f64(v);
  }
  return std::move(w.bytes);
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(sizeof kCheckpointMagic, "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw RuntimeError("not a checkpoint: bad magic bytes (expected BATCKPT1)");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw RuntimeError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  const std::uint32_t dim_count = r.u32("spec block");
  if (dim_count < 2) throw RuntimeError("checkpoint spec block needs at least 2 dims");
  std::vector<std::size_t> dims;
  for (std::uint32_t i = 0; i < dim_count; ++i) dims.push_back(r.u32("spec block"));
  ckpt.spec.input_dim = dims.front();
  ckpt.spec.hidden.assign(dims.begin() + 1, dims.end() - 1);
  ckpt.spec.num_classes = dims.back();
  ckpt.epoch = r.u32("epoch");
  ckpt.rng.key = r.u64("rng state");
  ckpt.rng.position = r.u64("rng state");

  const std::uint32_t tensor_count = r.u32("tensor count");
  for (std::uint32_t t = 0; t < tensor_count; ++t) {
    const std::uint32_t name_len = r.u32("tensor name");
    const auto name_bytes = r.take(name_len, "tensor name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank > 8) throw RuntimeError("implausible tensor rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32("tensor extents"));
    const std::size_t n = shape_size(shape);
    if (n > bytes.size()) throw RuntimeError("checkpoint truncated in tensor " + name);
    std::vector<double> data(n);
    for (double& v : data) v = r.f64("tensor data");
    ckpt.params.entries.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  if (!r.done()) throw RuntimeError("trailing bytes after checkpoint payload");
  try {
    ckpt.spec.validate();
    ckpt.params.validate();
  } catch (const ValidationError& e) {
    throw RuntimeError(std::string("corrupt checkpoint: ") + e.what());
  }
  if (!(spec_of(ckpt.params) == ckpt.spec)) throw RuntimeError("checkpoint tensors do not match its spec block");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace wpb
