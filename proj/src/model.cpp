#include "cxrnet/model.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cxrnet/errors.hpp"

namespace cxr {

namespace {

constexpr char kMagic[8] = {'C', 'X', 'R', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw InputError("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

void put_str(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& in) {
  const auto n = get_u64(in);
  if (n > 4096) throw InputError("implausible string length in checkpoint");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw InputError("truncated checkpoint");
  return s;
}

}  // namespace

Model Model::build(const ArchitectureSpec& spec, Rng& rng) {
  validate_spec(spec);
  const auto shapes = infer_shapes(spec);
  Model model;
  model.spec_ = spec;
  Shape in{spec.height, spec.width, spec.channels};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& ls = spec.layers[i];
    std::unique_ptr<Layer> layer;
    if (auto* c = std::get_if<spec::Conv2D>(&ls.kind)) {
      layer = std::make_unique<Conv2DLayer>(ls.name, c->kernel, in[2], c->filters);
    } else if (auto* p = std::get_if<spec::MaxPool>(&ls.kind)) {
      layer = std::make_unique<MaxPoolLayer>(ls.name, p->pool, p->stride);
    } else if (std::holds_alternative<spec::Flatten>(ls.kind)) {
      layer = std::make_unique<FlattenLayer>(ls.name);
    } else if (auto* d = std::get_if<spec::Dense>(&ls.kind)) {
      layer = std::make_unique<DenseLayer>(ls.name, in[0], d->units);
    } else if (std::holds_alternative<spec::BatchNorm>(ls.kind)) {
      layer = std::make_unique<BatchNormLayer>(ls.name, in[0]);
    } else if (auto* dr = std::get_if<spec::Dropout>(&ls.kind)) {
      layer = std::make_unique<DropoutLayer>(ls.name, dr->p);
    } else if (auto* o = std::get_if<spec::SoftmaxOutput>(&ls.kind)) {
      layer = std::make_unique<SoftmaxOutputLayer>(ls.name, in[0], o->classes);
    }
    Rng layer_rng = rng.derive("init/" + ls.name);
    layer->initialize(layer_rng);
    model.layers_.push_back(std::move(layer));
    in = shapes[i];
  }
  return model;
}

Layer& Model::layer(const std::string& name) {
  for (auto& l : layers_) {
    if (l->name() == name) return *l;
  }
  throw SpecError("no layer named '" + name + "'");
}

Tensor Model::forward(const Tensor& x, Mode mode, Rng* rng) {
  if (x.rank() != 4 || x.dim(1) != spec_.height || x.dim(2) != spec_.width || x.dim(3) != spec_.channels) {
    throw DimensionError("model expects N x " + std::to_string(spec_.height) + " x " + std::to_string(spec_.width) +
                         " x " + std::to_string(spec_.channels) + " input, got " + shape_str(x.shape()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (rng != nullptr) {
      Rng layer_rng = rng->derive(layers_[i]->name());
      h = layers_[i]->forward(h, mode, &layer_rng);
    } else {
      h = layers_[i]->forward(h, mode, nullptr);
    }
  }
  return h;
}

Tensor Model::backward(const Tensor& dlogits) {
  Tensor g = dlogits;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g);
  return g;
}

std::vector<ParamRef> Model::parameters() {
  std::vector<ParamRef> refs;
  for (auto& l : layers_) {
    auto& st = l->state();
    for (auto& [key, value] : st.params) {
      auto it = st.grads.find(key);
      if (it == st.grads.end()) {
        throw StateError("layer '" + l->name() + "' has no gradient for '" + key + "'; run backward first");
      }
      refs.push_back({&value, &it->second});
    }
  }
  return refs;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    for (const auto& [key, value] : l->state().params) n += value.size();
    for (const auto& [key, value] : l->state().buffers) n += value.size();
  }
  return n;
}

void Model::save_checkpoint(std::ostream& out) const {
  out.write(kMagic, sizeof kMagic);
  std::uint64_t records = 0;
  for (const auto& l : layers_) records += l->state().params.size() + l->state().buffers.size();
  put_u64(out, records);
  for (const auto& l : layers_) {
    for (const auto* group : {&l->state().params, &l->state().buffers}) {
      for (const auto& [key, value] : *group) {
        put_str(out, l->name());
        put_str(out, key);
        write_tensor(out, value);
      }
    }
  }
}

void Model::save_checkpoint(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  save_checkpoint(out);
}

void Model::load_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw InputError("not a checkpoint stream");
  const auto records = get_u64(in);
  for (std::uint64_t r = 0; r < records; ++r) {
    const std::string lname = get_str(in);
    const std::string key = get_str(in);
    Tensor value = read_tensor(in);
    auto& st = layer(lname).state();
    Tensor* target = nullptr;
    if (auto it = st.params.find(key); it != st.params.end()) target = &it->second;
    else if (auto jt = st.buffers.find(key); jt != st.buffers.end()) target = &jt->second;
    if (target == nullptr) throw InputError("checkpoint entry " + lname + "/" + key + " has no matching slot");
    if (target->shape() != value.shape()) {
      throw DimensionError("checkpoint entry " + lname + "/" + key + " has shape " + shape_str(value.shape()) +
                           ", model expects " + shape_str(target->shape()));
    }
    *target = std::move(value);
  }
}

void Model::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  load_checkpoint(in);
}

std::string Model::checkpoint_bytes() const {
  std::ostringstream os(std::ios::binary);
  save_checkpoint(os);
  return os.str();
}

}  // namespace cxr
