#include "neon/gat.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "neon/errors.hpp"

namespace neon {

// ---------------------------------------------------------------------------
// Model construction

template <typename T>
GatModelT<T> GatModelT<T>::random_init(Rng& rng) {
  auto glorot = [&rng](Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in,
                       Eigen::Index fan_out) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    MatX<T> m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<T>(u(rng));
    return m;
  };
  GatModelT<T> model;
  model.in_w = glorot(kStateDim, kFeatureDim, kFeatureDim, kStateDim);
  model.in_b = VecX<T>::Zero(kStateDim);
  for (auto& layer : model.layers)
    for (auto& head : layer) {
      head.weight = glorot(kHeadDim, kStateDim, kStateDim, kHeadDim);
      head.attn = glorot(2 * kHeadDim, 1, 2 * kHeadDim, 1).col(0);
    }
  model.out_w = glorot(kStateDim, 1, kStateDim, 1).col(0);
  model.out_b = VecX<T>::Zero(1);
  return model;
}

template <typename T>
template <typename U>
GatModelT<U> GatModelT<T>::cast() const {
  GatModelT<U> out;
  out.in_w = in_w.template cast<U>();
  out.in_b = in_b.template cast<U>();
  for (int l = 0; l < kGatLayers; ++l)
    for (int h = 0; h < kHeads; ++h) {
      out.layers[l][h].weight = layers[l][h].weight.template cast<U>();
      out.layers[l][h].attn = layers[l][h].attn.template cast<U>();
    }
  out.out_w = out_w.template cast<U>();
  out.out_b = out_b.template cast<U>();
  return out;
}

template <typename T>
std::size_t GatModelT<T>::param_count() const {
  std::size_t n = in_w.size() + in_b.size() + out_w.size() + out_b.size();
  for (const auto& layer : layers)
    for (const auto& head : layer) n += head.weight.size() + head.attn.size();
  return n;
}

template <typename T>
std::vector<ParamView<T>> param_views(GatModelT<T>& model) {
  std::vector<ParamView<T>> out;
  auto add_mat = [&out](std::string name, MatX<T>& m) {
    out.push_back({std::move(name), m.data(),
                   {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
                   static_cast<std::size_t>(m.size())});
  };
  auto add_vec = [&out](std::string name, VecX<T>& v) {
    out.push_back({std::move(name), v.data(), {static_cast<std::uint32_t>(v.size())},
                   static_cast<std::size_t>(v.size())});
  };
  add_mat("input.weight", model.in_w);
  add_vec("input.bias", model.in_b);
  for (int l = 0; l < kGatLayers; ++l)
    for (int h = 0; h < kHeads; ++h) {
      std::string base = "layers." + std::to_string(l) + ".heads." + std::to_string(h);
      add_mat(base + ".weight", model.layers[l][h].weight);
      add_vec(base + ".attn", model.layers[l][h].attn);
    }
  add_vec("output.weight", model.out_w);
  add_vec("output.bias", model.out_b);
  return out;
}

template <typename T>
GatModelT<T> zero_like(const GatModelT<T>& m) {
  GatModelT<T> out;
  out.in_w = MatX<T>::Zero(m.in_w.rows(), m.in_w.cols());
  out.in_b = VecX<T>::Zero(m.in_b.size());
  for (int l = 0; l < kGatLayers; ++l)
    for (int h = 0; h < kHeads; ++h) {
      out.layers[l][h].weight =
          MatX<T>::Zero(m.layers[l][h].weight.rows(), m.layers[l][h].weight.cols());
      out.layers[l][h].attn = VecX<T>::Zero(m.layers[l][h].attn.size());
    }
  out.out_w = VecX<T>::Zero(m.out_w.size());
  out.out_b = VecX<T>::Zero(1);
  return out;
}

// ---------------------------------------------------------------------------
// Forward

namespace {

// elu(x) = max(x,0) + exp(min(x,0)) - 1; elu'(x) = exp(min(x,0))
template <typename T>
void elu_inplace(MatX<T>& h, const MatX<T>& pre) {
  h = pre.array().max(T(0)) + (pre.array().min(T(0)).exp() - T(1));
}

template <typename T>
T leaky(T x) {
  return x > T(0) ? x : static_cast<T>(kAttnLeakySlope) * x;
}

}  // namespace

template <typename T>
VecX<T> gat_forward(const GatModelT<T>& model, const GatGraph& g, const MatX<T>& x,
                    int batch, ForwardTrace<T>* trace) {
  const int m = g.num_nodes;
  const Eigen::Index n_rows = static_cast<Eigen::Index>(m) * batch;
  if (m == 0 || batch == 0) return VecX<T>();
  if (x.rows() != n_rows || x.cols() != kFeatureDim)
    throw Error("feature matrix shape mismatch");
  const int edges = g.num_edges();

  MatX<T> h = (x * model.in_w.transpose()).rowwise() + model.in_b.transpose();
  MatX<T> pre(n_rows, kStateDim);
  MatX<T> z;
  std::vector<T> edge_pre, edge_alpha;

  for (int l = 0; l < kGatLayers; ++l) {
    LayerTrace<T>* lt = trace ? &trace->layers[l] : nullptr;
    if (lt) lt->h_in = h;
    for (int hd = 0; hd < kHeads; ++hd) {
      const GatHead<T>& head = model.layers[l][hd];
      z.noalias() = h * head.weight.transpose();  // N x kHeadDim
      VecX<T> dst_sc = z * head.attn.head(kHeadDim);
      VecX<T> src_sc = z * head.attn.tail(kHeadDim);
      std::vector<T>& epre = lt ? lt->edge_pre[hd] : edge_pre;
      std::vector<T>& ealpha = lt ? lt->edge_alpha[hd] : edge_alpha;
      epre.assign(static_cast<std::size_t>(edges) * batch, T(0));
      ealpha.assign(static_cast<std::size_t>(edges) * batch, T(0));

      for (int b = 0; b < batch; ++b) {
        const Eigen::Index off = static_cast<Eigen::Index>(b) * m;
        const std::size_t eoff = static_cast<std::size_t>(b) * edges;
        for (int i = 0; i < m; ++i) {
          const int e0 = g.row_ptr[i], e1 = g.row_ptr[i + 1];
          T mx = -std::numeric_limits<T>::infinity();
          for (int e = e0; e < e1; ++e) {
            T v = leaky(dst_sc[off + i] + src_sc[off + g.col_idx[e]]);
            epre[eoff + e] = v;
            if (v > mx) mx = v;
          }
          T sum = T(0);
          for (int e = e0; e < e1; ++e) {
            T a = std::exp(epre[eoff + e] - mx);
            ealpha[eoff + e] = a;
            sum += a;
          }
          const T inv = T(1) / sum;
          auto out_row = pre.row(off + i).segment(hd * kHeadDim, kHeadDim);
          out_row.setZero();
          for (int e = e0; e < e1; ++e) {
            ealpha[eoff + e] *= inv;
            out_row += ealpha[eoff + e] * z.row(off + g.col_idx[e]);
          }
        }
      }
      if (lt) lt->z[hd] = z;
    }
    if (lt) lt->pre = pre;
    elu_inplace(h, pre);
  }

  VecX<T> logits = (h * model.out_w).col(0);
  logits.array() += model.out_b[0];
  if (trace) {
    trace->h_out = h;
    trace->logits = logits;
  }
  VecX<T> scores(n_rows);
  const T lo = std::numeric_limits<T>::min();
  const T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    T s = T(1) / (T(1) + std::exp(-logits[i]));
    scores[i] = std::min(std::max(s, lo), hi);
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Loss + backward

template <typename T>
T gat_front_bce(const GatModelT<T>& model, const GatGraph& g, const MatX<T>& x,
                int batch, std::span<const std::uint8_t> targets, T pos_weight,
                GatModelT<T>* grads) {
  const int m = g.num_nodes;
  const int edges = g.num_edges();
  const Eigen::Index n_rows = static_cast<Eigen::Index>(m) * batch;
  const std::size_t n_front = g.front_rows.size();
  if (targets.size() != n_front) throw Error("target length does not match front size");
  if (n_front == 0) throw Error("graph has no front nodes");

  ForwardTrace<T> trace;
  gat_forward(model, g, x, batch, &trace);

  // softplus(z) = max(z,0) + log1p(exp(-|z|))
  auto softplus = [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); };

  const T scale = T(1) / static_cast<T>(n_front * static_cast<std::size_t>(batch));
  T loss = T(0);
  VecX<T> dlogits = VecX<T>::Zero(n_rows);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index off = static_cast<Eigen::Index>(b) * m;
    for (std::size_t f = 0; f < n_front; ++f) {
      const Eigen::Index r = off + g.front_rows[f];
      const T zv = trace.logits[r];
      const T sig = T(1) / (T(1) + std::exp(-zv));
      if (targets[f]) {
        loss += pos_weight * softplus(-zv) * scale;
        dlogits[r] = pos_weight * (sig - T(1)) * scale;
      } else {
        loss += softplus(zv) * scale;
        dlogits[r] = sig * scale;
      }
    }
  }
  if (!grads) return loss;

  // output head
  grads->out_w.noalias() += trace.h_out.transpose() * dlogits;
  grads->out_b[0] += dlogits.sum();
  MatX<T> dh = dlogits * model.out_w.transpose();  // N x kStateDim

  MatX<T> dz(n_rows, kHeadDim);
  VecX<T> dd(n_rows), ds(n_rows);
  std::vector<T> dalpha;
  for (int l = kGatLayers - 1; l >= 0; --l) {
    const LayerTrace<T>& lt = trace.layers[l];
    // through ELU
    MatX<T> dpre = dh.array() * lt.pre.array().min(T(0)).exp();
    MatX<T> dh_prev = MatX<T>::Zero(n_rows, kStateDim);
    for (int hd = 0; hd < kHeads; ++hd) {
      const GatHead<T>& head = model.layers[l][hd];
      GatHead<T>& ghead = grads->layers[l][hd];
      auto d_out = dpre.middleCols(hd * kHeadDim, kHeadDim);
      const MatX<T>& z = lt.z[hd];
      const std::vector<T>& epre = lt.edge_pre[hd];
      const std::vector<T>& ealpha = lt.edge_alpha[hd];
      dz.setZero();
      dd.setZero();
      ds.setZero();
      for (int b = 0; b < batch; ++b) {
        const Eigen::Index off = static_cast<Eigen::Index>(b) * m;
        const std::size_t eoff = static_cast<std::size_t>(b) * edges;
        for (int i = 0; i < m; ++i) {
          const int e0 = g.row_ptr[i], e1 = g.row_ptr[i + 1];
          dalpha.resize(e1 - e0);
          auto grad_row = d_out.row(off + i);
          T dot = T(0);
          for (int e = e0; e < e1; ++e) {
            const Eigen::Index src = off + g.col_idx[e];
            T da = grad_row.dot(z.row(src));
            dalpha[e - e0] = da;
            dot += ealpha[eoff + e] * da;
            dz.row(src) += ealpha[eoff + e] * grad_row;
          }
          for (int e = e0; e < e1; ++e) {
            const T de = ealpha[eoff + e] * (dalpha[e - e0] - dot);
            const T dp = epre[eoff + e] > T(0) ? de : de * static_cast<T>(kAttnLeakySlope);
            dd[off + i] += dp;
            ds[off + g.col_idx[e]] += dp;
          }
        }
      }
      ghead.attn.head(kHeadDim).noalias() += z.transpose() * dd;
      ghead.attn.tail(kHeadDim).noalias() += z.transpose() * ds;
      dz.noalias() += dd * head.attn.head(kHeadDim).transpose();
      dz.noalias() += ds * head.attn.tail(kHeadDim).transpose();
      ghead.weight.noalias() += dz.transpose() * lt.h_in;
      dh_prev.noalias() += dz * head.weight;
    }
    dh = std::move(dh_prev);
  }
  grads->in_w.noalias() += dh.transpose() * x;
  grads->in_b.noalias() += dh.colwise().sum().transpose();
  return loss;
}

// ---------------------------------------------------------------------------
// Saliency

SaliencyMap saliency_map(const GatModel& model, const SemGraph& g, const GatGraph& gg) {
  SaliencyMap out;
  for (int row : gg.front_rows) out.app_ids.push_back(gg.app_id[row]);
  const int m = gg.num_nodes;
  const int n = static_cast<int>(g.n_task());
  const std::size_t n_front = gg.front_rows.size();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n_front);

  // chunk examples to bound the stacked state size (~25k rows)
  const int chunk = std::max(1, static_cast<int>(25000 / std::max(1, m)));
  MatX<float> x;
  for (int j0 = 0; j0 < n; j0 += chunk) {
    const int b = std::min(chunk, n - j0);
    fill_feature_block<float>(g, gg, j0, b, x);
    VecX<float> scores = gat_forward<float>(model, gg, x, b, nullptr);
    for (int b_i = 0; b_i < b; ++b_i) {
      const Eigen::Index off = static_cast<Eigen::Index>(b_i) * m;
      for (std::size_t f = 0; f < n_front; ++f)
        acc[f] += static_cast<double>(scores[off + gg.front_rows[f]]);
    }
  }
  out.scores = (acc / static_cast<double>(n)).cast<float>();
  return out;
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(GatModel& model, const GatModel& grads, AdamState& state) {
  auto params = param_views(model);
  auto gviews = param_views(const_cast<GatModel&>(grads));

  std::size_t total = 0;
  for (const auto& p : params) total += p.size;
  if (state.m.size() != static_cast<Eigen::Index>(total)) state.init(total);

  state.step += 1;
  const float b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const float corr1 = 1.0f - std::pow(b1, static_cast<float>(state.step));
  const float corr2 = 1.0f - std::pow(b2, static_cast<float>(state.step));
  std::size_t offset = 0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    float* p = params[t].data;
    const float* gr = gviews[t].data;
    float* mm = state.m.data() + offset;
    float* vv = state.v.data() + offset;
    for (std::size_t i = 0; i < params[t].size; ++i) {
      mm[i] = b1 * mm[i] + (1.0f - b1) * gr[i];
      vv[i] = b2 * vv[i] + (1.0f - b2) * gr[i] * gr[i];
      const float mhat = mm[i] / corr1;
      const float vhat = vv[i] / corr2;
      p[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
    }
    offset += params[t].size;
  }
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[8] = {'N', 'E', 'O', 'N', 'G', 'A', 'T', '1'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void read_raw(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw IoError("model file truncated");
}

}  // namespace

void save_model(const GatModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  auto views = param_views(const_cast<GatModel&>(model));
  os.write(kMagic, sizeof kMagic);
  write_raw(os, kFormatVersion);
  write_raw(os, static_cast<std::uint32_t>(views.size()));
  for (const auto& v : views) {
    write_raw(os, static_cast<std::uint16_t>(v.name.size()));
    os.write(v.name.data(), static_cast<std::streamsize>(v.name.size()));
    write_raw(os, static_cast<std::uint8_t>(v.dims.size()));
    for (auto d : v.dims) write_raw(os, d);
    os.write(reinterpret_cast<const char*>(v.data),
             static_cast<std::streamsize>(v.size * sizeof(float)));
  }
  if (!os) throw IoError("failed writing model to '" + path.string() + "'");
}

namespace {

struct TensorHeader {
  TensorInfo info;
  std::size_t size;
};

TensorHeader read_tensor_header(std::istream& is) {
  std::uint16_t name_len;
  read_raw(is, name_len);
  TensorHeader h;
  h.info.name.resize(name_len);
  is.read(h.info.name.data(), name_len);
  if (!is) throw IoError("model file truncated");
  std::uint8_t rank;
  read_raw(is, rank);
  h.size = 1;
  for (int i = 0; i < rank; ++i) {
    std::uint32_t d;
    read_raw(is, d);
    h.info.dims.push_back(d);
    h.size *= d;
  }
  return h;
}

void read_preamble(std::istream& is, const std::filesystem::path& path,
                   std::uint32_t& count) {
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw IoError("'" + path.string() + "' is not a NEONGAT1 model file (bad magic)");
  std::uint32_t version;
  read_raw(is, version);
  if (version != kFormatVersion)
    throw IoError("unsupported model format version " + std::to_string(version));
  read_raw(is, count);
}

}  // namespace

GatModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open model file '" + path.string() + "'");
  std::uint32_t count;
  read_preamble(is, path, count);

  GatModel model;
  Rng dummy(0);
  model = GatModel::random_init(dummy);  // allocate shapes
  auto views = param_views(model);
  if (count != views.size())
    throw IoError("model file has " + std::to_string(count) + " tensors, expected " +
                  std::to_string(views.size()));
  std::vector<bool> seen(views.size(), false);
  for (std::uint32_t t = 0; t < count; ++t) {
    TensorHeader h = read_tensor_header(is);
    auto it = std::find_if(views.begin(), views.end(),
                           [&](const auto& v) { return v.name == h.info.name; });
    if (it == views.end()) throw IoError("unknown tensor '" + h.info.name + "'");
    if (it->dims != h.info.dims)
      throw IoError("tensor '" + h.info.name + "' has unexpected shape");
    if (seen[it - views.begin()])
      throw IoError("duplicate tensor '" + h.info.name + "'");
    seen[it - views.begin()] = true;
    is.read(reinterpret_cast<char*>(it->data),
            static_cast<std::streamsize>(h.size * sizeof(float)));
    if (!is) throw IoError("model file truncated");
  }
  return model;
}

std::vector<TensorInfo> list_model_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open model file '" + path.string() + "'");
  std::uint32_t count;
  read_preamble(is, path, count);
  std::vector<TensorInfo> out;
  for (std::uint32_t t = 0; t < count; ++t) {
    TensorHeader h = read_tensor_header(is);
    is.seekg(static_cast<std::streamoff>(h.size * sizeof(float)), std::ios::cur);
    if (!is) throw IoError("model file truncated");
    out.push_back(std::move(h.info));
  }
  return out;
}

// ---------------------------------------------------------------------------

template struct GatModelT<float>;
template struct GatModelT<double>;
template GatModelT<double> GatModelT<float>::cast<double>() const;
template GatModelT<float> GatModelT<double>::cast<float>() const;
template GatModelT<float> GatModelT<float>::cast<float>() const;
template std::vector<ParamView<float>> param_views(GatModelT<float>&);
template std::vector<ParamView<double>> param_views(GatModelT<double>&);
template GatModelT<float> zero_like(const GatModelT<float>&);
template GatModelT<double> zero_like(const GatModelT<double>&);
template VecX<float> gat_forward(const GatModelT<float>&, const GatGraph&,
                                 const MatX<float>&, int, ForwardTrace<float>*);
template VecX<double> gat_forward(const GatModelT<double>&, const GatGraph&,
                                  const MatX<double>&, int, ForwardTrace<double>*);
template float gat_front_bce(const GatModelT<float>&, const GatGraph&, const MatX<float>&,
                             int, std::span<const std::uint8_t>, float,
                             GatModelT<float>*);
template double gat_front_bce(const GatModelT<double>&, const GatGraph&,
                              const MatX<double>&, int, std::span<const std::uint8_t>,
                              double, GatModelT<double>*);

}  // namespace neon
