#include "dagcomm/numkit.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace dagcomm::numkit {

namespace {

bool all_finite(const Vec& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void apply_activation(Act act, Vec& z) {
  switch (act) {
    case Act::Tanh:
      for (double& x : z) x = std::tanh(x);
      break;
    case Act::Identity:
      break;
    case Act::Softmax:
      z = softmax(z);
      break;
  }
}

// delta = dL/dz given dL/da and a = act(z).
Vec activation_backward(Act act, const Vec& a, const Vec& upstream) {
  Vec delta(a.size());
  switch (act) {
    case Act::Tanh:
      for (size_t i = 0; i < a.size(); ++i) delta[i] = upstream[i] * (1.0 - a[i] * a[i]);
      break;
    case Act::Identity:
      delta = upstream;
      break;
    case Act::Softmax: {
      double dot = 0.0;
      for (size_t i = 0; i < a.size(); ++i) dot += upstream[i] * a[i];
      for (size_t i = 0; i < a.size(); ++i) delta[i] = a[i] * (upstream[i] - dot);
      break;
    }
  }
  return delta;
}

}  // namespace

MlpParams MlpParams::create(const std::vector<int>& widths, Act output_act, Rng& rng,
                            Act hidden_act) {
  if (widths.size() < 2) throw ContractError("mlp needs at least input and output widths");
  MlpParams p;
  p.hidden = hidden_act;
  p.output = output_act;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l];
    const int out = widths[l + 1];
    if (in <= 0 || out <= 0) throw ContractError("mlp layer widths must be positive");
    Layer layer{Mat(out, in), Vec(static_cast<size_t>(out), 0.0)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : layer.w.data) w = rng.uniform(-bound, bound);
    for (double& b : layer.b) b = rng.uniform(-bound, bound);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

MlpParams MlpParams::zeros_like(const MlpParams& other) {
  MlpParams p;
  p.hidden = other.hidden;
  p.output = other.output;
  for (const Layer& l : other.layers) {
    p.layers.push_back(Layer{Mat(l.w.rows, l.w.cols), Vec(l.b.size(), 0.0)});
  }
  return p;
}

size_t MlpParams::param_count() const {
  size_t n = 0;
  for (const Layer& l : layers) n += l.w.size() + l.b.size();
  return n;
}

void MlpParams::fill(double v) {
  for (Layer& l : layers) {
    std::fill(l.w.data.begin(), l.w.data.end(), v);
    std::fill(l.b.begin(), l.b.end(), v);
  }
}

void MlpParams::add_scaled(const MlpParams& other, double scale) {
  if (other.layers.size() != layers.size()) throw DimensionError("add_scaled: layer count mismatch");
  for (size_t l = 0; l < layers.size(); ++l) {
    if (other.layers[l].w.size() != layers[l].w.size() ||
        other.layers[l].b.size() != layers[l].b.size()) {
      throw DimensionError("add_scaled: layer shape mismatch");
    }
    for (size_t i = 0; i < layers[l].w.data.size(); ++i) {
      layers[l].w.data[i] += scale * other.layers[l].w.data[i];
    }
    for (size_t i = 0; i < layers[l].b.size(); ++i) layers[l].b[i] += scale * other.layers[l].b[i];
  }
}

double MlpParams::sq_norm() const {
  double s = 0.0;
  for (const Layer& l : layers) {
    for (double w : l.w.data) s += w * w;
    for (double b : l.b) s += b * b;
  }
  return s;
}

void MlpParams::scale(double s) {
  for (Layer& l : layers) {
    for (double& w : l.w.data) w *= s;
    for (double& b : l.b) b *= s;
  }
}

Vec mlp_forward(const MlpParams& params, const Vec& input, MlpCache* cache) {
  if (params.layers.empty()) throw ContractError("mlp_forward: empty net");
  if (static_cast<int>(input.size()) != params.in_width()) {
    throw DimensionError("mlp_forward: input width " + std::to_string(input.size()) +
                         " != expected " + std::to_string(params.in_width()));
  }
  if (cache) {
    cache->input = input;
    cache->post.clear();
    cache->post.reserve(params.layers.size());
  }
  Vec a = input;
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const Layer& layer = params.layers[l];
    Vec z(layer.b);
    const double* wrow = layer.w.data.data();
    for (int r = 0; r < layer.w.rows; ++r, wrow += layer.w.cols) {
      double acc = 0.0;
      for (int c = 0; c < layer.w.cols; ++c) acc += wrow[c] * a[static_cast<size_t>(c)];
      z[static_cast<size_t>(r)] += acc;
    }
    apply_activation(l + 1 == params.layers.size() ? params.output : params.hidden, z);
    a = std::move(z);
    if (cache) cache->post.push_back(a);
  }
  if (!all_finite(a)) throw NumericError("mlp_forward: non-finite output");
  return a;
}

Vec mlp_backward(const MlpParams& params, const MlpCache& cache, const Vec& upstream,
                 MlpParams& grads) {
  const size_t nl = params.layers.size();
  if (cache.post.size() != nl || static_cast<int>(cache.input.size()) != params.in_width()) {
    throw ContractError("mlp_backward: cache does not match params");
  }
  if (grads.layers.size() != nl) throw ContractError("mlp_backward: grads do not mirror params");
  if (upstream.size() != cache.post.back().size()) {
    throw DimensionError("mlp_backward: upstream width mismatch");
  }

  Vec up = upstream;
  for (size_t l = nl; l-- > 0;) {
    const Layer& layer = params.layers[l];
    const Vec& a_out = cache.post[l];
    const Vec& a_in = l == 0 ? cache.input : cache.post[l - 1];
    const Act act = (l + 1 == nl) ? params.output : params.hidden;
    Vec delta = activation_backward(act, a_out, up);

    Layer& g = grads.layers[l];
    double* grow = g.w.data.data();
    for (int r = 0; r < layer.w.rows; ++r, grow += layer.w.cols) {
      const double d = delta[static_cast<size_t>(r)];
      for (int c = 0; c < layer.w.cols; ++c) grow[c] += d * a_in[static_cast<size_t>(c)];
      g.b[static_cast<size_t>(r)] += d;
    }

    Vec down(static_cast<size_t>(layer.w.cols), 0.0);
    const double* wrow = layer.w.data.data();
    for (int r = 0; r < layer.w.rows; ++r, wrow += layer.w.cols) {
      const double d = delta[static_cast<size_t>(r)];
      for (int c = 0; c < layer.w.cols; ++c) down[static_cast<size_t>(c)] += d * wrow[c];
    }
    up = std::move(down);
  }
  return up;
}

Vec softmax(const Vec& v) {
  if (v.empty()) throw ContractError("softmax: empty input");
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  Vec out(v.size());
  double sum = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

namespace {

// Fixed readout weights make the check scalar-valued without favoring any
// particular output unit.
double readout(const Vec& out) {
  double s = 0.0;
  for (size_t i = 0; i < out.size(); ++i) s += (std::sin(static_cast<double>(i) + 1.0) + 1.5) * out[i];
  return s;
}

double* param_at(MlpParams& p, size_t flat) {
  for (Layer& l : p.layers) {
    if (flat < l.w.data.size()) return &l.w.data[flat];
    flat -= l.w.data.size();
    if (flat < l.b.size()) return &l.b[flat];
    flat -= l.b.size();
  }
  return nullptr;
}

}  // namespace

double grad_check(const MlpParams& params, const Vec& input, double eps,
                  const std::function<void(MlpParams&)>& corrupt) {
  if (eps < 1e-7 || eps > 1e-3) throw ContractError("grad_check: eps out of [1e-7, 1e-3]");

  MlpCache cache;
  Vec out = mlp_forward(params, input, &cache);
  Vec up(out.size());
  for (size_t i = 0; i < out.size(); ++i) up[i] = std::sin(static_cast<double>(i) + 1.0) + 1.5;
  MlpParams analytic = MlpParams::zeros_like(params);
  mlp_backward(params, cache, up, analytic);
  if (corrupt) corrupt(analytic);

  MlpParams work = params;
  double max_rel = 0.0;
  for (size_t i = 0; i < params.param_count(); ++i) {
    double* p = param_at(work, i);
    const double saved = *p;
    *p = saved + eps;
    const double hi = readout(mlp_forward(work, input));
    *p = saved - eps;
    const double lo = readout(mlp_forward(work, input));
    *p = saved;
    const double numeric = (hi - lo) / (2.0 * eps);
    const double a = *param_at(analytic, i);
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

OptimState OptimState::create(const MlpParams& params, AdamConfig cfg) {
  OptimState st;
  st.cfg = cfg;
  for (const Layer& l : params.layers) {
    st.m.push_back(Layer{Mat(l.w.rows, l.w.cols), Vec(l.b.size(), 0.0)});
    st.v.push_back(Layer{Mat(l.w.rows, l.w.cols), Vec(l.b.size(), 0.0)});
  }
  return st;
}

namespace {

void adam_update(double* p, const double* g, double* m, double* v, size_t n, const AdamConfig& c,
                 long t) {
  if (c.plain_sgd) {
    for (size_t i = 0; i < n; ++i) p[i] -= c.lr * g[i];
    return;
  }
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (size_t i = 0; i < n; ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    p[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
  }
}

}  // namespace

void optim_step(MlpParams& params, const MlpParams& grads, OptimState& state) {
  if (grads.layers.size() != params.layers.size() || state.m.size() != params.layers.size()) {
    throw DimensionError("optim_step: shape mismatch");
  }
  if (state.cfg.lr <= 0.0) throw ContractError("optim_step: lr must be positive");
  for (size_t l = 0; l < params.layers.size(); ++l) {
    if (!all_finite(grads.layers[l].w.data) || !all_finite(grads.layers[l].b)) {
      throw NumericError("optim_step: non-finite gradient in layer " + std::to_string(l));
    }
  }
  ++state.step;
  for (size_t l = 0; l < params.layers.size(); ++l) {
    adam_update(params.layers[l].w.data.data(), grads.layers[l].w.data.data(),
                state.m[l].w.data.data(), state.v[l].w.data.data(), params.layers[l].w.size(),
                state.cfg, state.step);
    adam_update(params.layers[l].b.data(), grads.layers[l].b.data(), state.m[l].b.data(),
                state.v[l].b.data(), params.layers[l].b.size(), state.cfg, state.step);
  }
}

FlatOptimState FlatOptimState::create(size_t n, AdamConfig cfg) {
  FlatOptimState st;
  st.cfg = cfg;
  st.m.assign(n, 0.0);
  st.v.assign(n, 0.0);
  return st;
}

void optim_step_flat(Vec& params, const Vec& grads, FlatOptimState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw DimensionError("optim_step_flat: shape mismatch");
  }
  if (!all_finite(grads)) throw NumericError("optim_step_flat: non-finite gradient");
  ++state.step;
  adam_update(params.data(), grads.data(), state.m.data(), state.v.data(), params.size(),
              state.cfg, state.step);
}

// ---------------------------------------------------------------------------
// Checkpoint IO

namespace {

constexpr char kMagic[8] = {'D', 'A', 'G', 'C', 'O', 'M', 'M', '1'};
constexpr uint8_t kKindMlp = 0;
constexpr uint8_t kKindMats = 1;
constexpr uint8_t kKindText = 2;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  const uint64_t v = std::bit_cast<uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct ByteReader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw ConfigError("checkpoint: truncated file");
  }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(buf[pos++]);
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

void put_mat(std::string& out, const Mat& m) {
  put_u32(out, static_cast<uint32_t>(m.rows));
  put_u32(out, static_cast<uint32_t>(m.cols));
  for (double d : m.data) put_f64(out, d);
}

Mat read_mat(ByteReader& r) {
  const uint32_t rows = r.u32();
  const uint32_t cols = r.u32();
  if (rows > 1u << 20 || cols > 1u << 20) throw ConfigError("checkpoint: absurd matrix shape");
  Mat m(static_cast<int>(rows), static_cast<int>(cols));
  for (double& d : m.data) d = r.f64();
  return m;
}

}  // namespace

void CheckpointWriter::add_mlp(const std::string& name, const MlpParams& params) {
  blocks_.push_back(Block{name, kKindMlp, params, {}, {}});
}

void CheckpointWriter::add_mats(const std::string& name, const std::vector<Mat>& mats) {
  blocks_.push_back(Block{name, kKindMats, {}, mats, {}});
}

void CheckpointWriter::add_text(const std::string& name, const std::string& text) {
  blocks_.push_back(Block{name, kKindText, {}, {}, text});
}

void CheckpointWriter::save(const std::string& path) const {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, 1);  // version
  put_u32(out, static_cast<uint32_t>(blocks_.size()));
  for (const Block& b : blocks_) {
    put_u32(out, static_cast<uint32_t>(b.name.size()));
    out += b.name;
    out.push_back(static_cast<char>(b.kind));
    switch (b.kind) {
      case kKindMlp: {
        out.push_back(static_cast<char>(b.mlp.hidden));
        out.push_back(static_cast<char>(b.mlp.output));
        put_u32(out, static_cast<uint32_t>(b.mlp.layers.size()));
        for (const Layer& l : b.mlp.layers) {
          put_mat(out, l.w);
          put_u32(out, static_cast<uint32_t>(l.b.size()));
          for (double d : l.b) put_f64(out, d);
        }
        break;
      }
      case kKindMats: {
        put_u32(out, static_cast<uint32_t>(b.mats.size()));
        for (const Mat& m : b.mats) put_mat(out, m);
        break;
      }
      case kKindText: {
        put_u32(out, static_cast<uint32_t>(b.text.size()));
        out += b.text;
        break;
      }
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("checkpoint: cannot open for write: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw ConfigError("checkpoint: write failed: " + path);
}

CheckpointReader::CheckpointReader(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("checkpoint: cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  ByteReader r{buf};
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw ConfigError("checkpoint: bad magic in " + path);
  }
  const uint32_t version = r.u32();
  if (version != 1) throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
  const uint32_t n_blocks = r.u32();
  for (uint32_t i = 0; i < n_blocks; ++i) {
    const std::string name = r.bytes(r.u32());
    Entry e;
    e.kind = r.u8();
    switch (e.kind) {
      case kKindMlp: {
        e.mlp.hidden = static_cast<Act>(r.u8());
        e.mlp.output = static_cast<Act>(r.u8());
        const uint32_t nl = r.u32();
        for (uint32_t l = 0; l < nl; ++l) {
          Layer layer;
          layer.w = read_mat(r);
          const uint32_t blen = r.u32();
          if (static_cast<int>(blen) != layer.w.rows) {
            throw ConfigError("checkpoint: bias length does not match layer rows");
          }
          layer.b.resize(blen);
          for (double& d : layer.b) d = r.f64();
          e.mlp.layers.push_back(std::move(layer));
        }
        break;
      }
      case kKindMats: {
        const uint32_t nm = r.u32();
        for (uint32_t m = 0; m < nm; ++m) e.mats.push_back(read_mat(r));
        break;
      }
      case kKindText:
        e.text = r.bytes(r.u32());
        break;
      default:
        throw ConfigError("checkpoint: unknown block kind");
    }
    entries_.emplace_back(name, std::move(e));
  }
}

bool CheckpointReader::has(const std::string& name) const {
  for (const auto& [n, e] : entries_) {
    if (n == name) return true;
  }
  return false;
}

const CheckpointReader::Entry& CheckpointReader::find(const std::string& name, uint8_t kind) const {
  for (const auto& [n, e] : entries_) {
    if (n == name) {
      if (e.kind != kind) throw ConfigError("checkpoint: block '" + name + "' has wrong kind");
      return e;
    }
  }
  throw ConfigError("checkpoint: missing block '" + name + "'");
}

const MlpParams& CheckpointReader::mlp(const std::string& name) const {
  return find(name, kKindMlp).mlp;
}

const std::vector<Mat>& CheckpointReader::mats(const std::string& name) const {
  return find(name, kKindMats).mats;
}

const std::string& CheckpointReader::text(const std::string& name) const {
  return find(name, kKindText).text;
}

}  // namespace dagcomm::numkit
