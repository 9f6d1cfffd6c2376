#include "neuvis/encoder.hpp"

#include <cmath>

#include "neuvis/errors.hpp"

namespace neuvis {

void EncoderConfig::validate() const {
  if (channels <= 0 || samples <= 0) throw ConfigError("encoder: channels/samples must be positive");
  if (temporal_kernel <= 0 || temporal_kernel > samples)
    throw ConfigError("encoder: temporal_kernel must fit within samples");
  if (temporal_filters <= 0 || spatial_filters <= 0)
    throw ConfigError("encoder: filter counts must be positive");
  if (pool <= 0 || pool > conv_steps())
    throw ConfigError("encoder: pool must fit within the convolved length");
  if (tokens() < 1) throw ConfigError("encoder: no temporal tokens after pooling");
  if (feature_dim <= 0) throw ConfigError("encoder: feature_dim must be positive");
  if (embed_dim <= 0) throw ConfigError("encoder: embed_dim must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("encoder: dropout_rate must be in [0, 1)");
  if (attention) {
    if (attention_heads <= 0 || spatial_filters % attention_heads != 0)
      throw ConfigError("encoder: spatial_filters must divide by attention_heads");
    if (attention_ffn <= 0) throw ConfigError("encoder: attention_ffn must be positive");
  }
}

KvList EncoderConfig::to_kv() const {
  KvList kv;
  kv.emplace_back("channels", std::to_string(channels));
  kv.emplace_back("samples", std::to_string(samples));
  kv.emplace_back("temporal_kernel", std::to_string(temporal_kernel));
  kv.emplace_back("temporal_filters", std::to_string(temporal_filters));
  kv.emplace_back("spatial_filters", std::to_string(spatial_filters));
  kv.emplace_back("pool", std::to_string(pool));
  kv.emplace_back("feature_dim", std::to_string(feature_dim));
  kv.emplace_back("embed_dim", std::to_string(embed_dim));
  kv.emplace_back("attention", attention ? "true" : "false");
  kv.emplace_back("attention_heads", std::to_string(attention_heads));
  kv.emplace_back("attention_ffn", std::to_string(attention_ffn));
  kv.emplace_back("dropout_rate", format_double(dropout_rate));
  kv.emplace_back("seed", std::to_string(seed));
  return kv;
}

EncoderConfig EncoderConfig::from_kv(const KvList& kv) {
  EncoderConfig c;
  c.channels = parse_int(kv_get(kv, "channels"));
  c.samples = parse_int(kv_get(kv, "samples"));
  c.temporal_kernel = parse_int(kv_get(kv, "temporal_kernel"));
  c.temporal_filters = parse_int(kv_get(kv, "temporal_filters"));
  c.spatial_filters = parse_int(kv_get(kv, "spatial_filters"));
  c.pool = parse_int(kv_get(kv, "pool"));
  c.feature_dim = parse_int(kv_get(kv, "feature_dim"));
  c.embed_dim = parse_int(kv_get(kv, "embed_dim"));
  c.attention = parse_bool(kv_get(kv, "attention"));
  c.attention_heads = parse_int(kv_get(kv, "attention_heads"));
  c.attention_ffn = parse_int(kv_get(kv, "attention_ffn"));
  c.dropout_rate = parse_double(kv_get(kv, "dropout_rate"));
  c.seed = static_cast<std::uint64_t>(parse_int(kv_get(kv, "seed")));
  c.validate();
  return c;
}

AlignModel AlignModel::init(const EncoderConfig& cfg) {
  cfg.validate();
  AlignModel m;
  m.cfg_ = cfg;
  ParamStore& p = m.params_;
  Rng root(cfg.seed);
  std::uint64_t salt = 0;
  auto rng = [&]() { return root.fork(++salt); };

  const Eigen::Index c = cfg.channels;
  const Eigen::Index k = cfg.temporal_kernel;
  const Eigen::Index ft = cfg.temporal_filters;
  const Eigen::Index fs = cfg.spatial_filters;
  const Eigen::Index tok = cfg.tokens();
  const Eigen::Index d = cfg.embed_dim;

  {
    Rng r = rng();
    p.add("enc.tconv.w", glorot_init(r, k, ft));
  }
  p.add("enc.tconv.b", Mat::Zero(1, ft));
  {
    Rng r = rng();
    p.add("enc.sconv.w", glorot_init(r, c * ft, fs));
  }
  p.add("enc.sconv.b", Mat::Zero(1, fs));

  if (cfg.attention) {
    const Eigen::Index dh = fs / cfg.attention_heads;
    p.add("enc.attn.ln1.gain", Mat::Ones(1, fs));
    p.add("enc.attn.ln1.bias", Mat::Zero(1, fs));
    for (Eigen::Index h = 0; h < cfg.attention_heads; ++h) {
      const std::string base = "enc.attn.h" + std::to_string(h);
      Rng rq = rng(), rk = rng(), rv = rng();
      p.add(base + ".q", glorot_init(rq, fs, dh));
      p.add(base + ".k", glorot_init(rk, fs, dh));
      p.add(base + ".v", glorot_init(rv, fs, dh));
    }
    {
      Rng r = rng();
      p.add("enc.attn.o", glorot_init(r, fs, fs));
    }
    p.add("enc.attn.ln2.gain", Mat::Ones(1, fs));
    p.add("enc.attn.ln2.bias", Mat::Zero(1, fs));
    {
      Rng r = rng();
      p.add("enc.attn.ffn.w1", glorot_init(r, fs, cfg.attention_ffn));
    }
    p.add("enc.attn.ffn.b1", Mat::Zero(1, cfg.attention_ffn));
    {
      Rng r = rng();
      p.add("enc.attn.ffn.w2", glorot_init(r, cfg.attention_ffn, fs));
    }
    p.add("enc.attn.ffn.b2", Mat::Zero(1, fs));
  }

  {
    Rng r = rng();
    p.add("enc.out.w", glorot_init(r, tok * fs, cfg.feature_dim));
  }
  p.add("enc.out.b", Mat::Zero(1, cfg.feature_dim));

  for (const std::string head : {"v", "t"}) {
    const std::string base = "proj." + head;
    Rng r1 = rng(), r2 = rng(), r3 = rng();
    p.add(base + ".in.w", glorot_init(r1, cfg.feature_dim, d));
    p.add(base + ".in.b", Mat::Zero(1, d));
    p.add(base + ".mlp.w1", glorot_init(r2, d, d));
    p.add(base + ".mlp.b1", Mat::Zero(1, d));
    p.add(base + ".mlp.w2", glorot_init(r3, d, d));
    p.add(base + ".mlp.b2", Mat::Zero(1, d));
    p.add(base + ".ln.gain", Mat::Ones(1, d));
    p.add(base + ".ln.bias", Mat::Zero(1, d));
  }

  Mat log_tau(1, 1);
  log_tau(0, 0) = std::log(0.07);
  p.add("log_tau", log_tau);
  return m;
}

double AlignModel::tau() const { return std::exp(params_.at("log_tau")(0, 0)); }

namespace {

Graph::Id dropout_node(Graph& g, Graph::Id x, double rate, Rng* rng) {
  if (rate <= 0.0 || !rng) return x;
  const Mat& v = g.value(x);
  Mat mask(v.rows(), v.cols());
  const double keep = 1.0 - rate;
  for (Eigen::Index r = 0; r < v.rows(); ++r)
    for (Eigen::Index c = 0; c < v.cols(); ++c)
      mask(r, c) = rng->uniform() < keep ? 1.0 / keep : 0.0;
  return g.hadamard(x, g.leaf(mask));
}

}  // namespace

Graph::Id AlignModel::build_encode(Graph& g, GraphBinder& bind,
                                   const Mat& batch_signal, Eigen::Index batch,
                                   bool training, Rng* dropout_rng) const {
  const Eigen::Index c = cfg_.channels;
  const Eigen::Index t = cfg_.samples;
  const Eigen::Index k = cfg_.temporal_kernel;
  const Eigen::Index ft = cfg_.temporal_filters;
  const Eigen::Index fs = cfg_.spatial_filters;
  const Eigen::Index t1 = cfg_.conv_steps();
  const Eigen::Index tok = cfg_.tokens();

  if (batch_signal.rows() != batch * c || batch_signal.cols() != t)
    throw ConfigError("encoder input shape does not match config");

  Graph::Id x = g.leaf(batch_signal);

  // temporal convolution as gather + matmul: (B*C*T1) x k patches
  Eigen::MatrixXi rows(batch * c * t1, k), cols(batch * c * t1, k);
  for (Eigen::Index bc = 0; bc < batch * c; ++bc)
    for (Eigen::Index s = 0; s < t1; ++s)
      for (Eigen::Index j = 0; j < k; ++j) {
        rows(bc * t1 + s, j) = static_cast<int>(bc);
        cols(bc * t1 + s, j) = static_cast<int>(s + j);
      }
  Graph::Id patches = g.gather(x, rows, cols);
  Graph::Id tconv = g.gelu(
      g.add_rowvec(g.matmul(patches, bind("enc.tconv.w")), bind("enc.tconv.b")));
  if (training) tconv = dropout_node(g, tconv, cfg_.dropout_rate, dropout_rng);

  // regroup (B*C*T1) x Ft -> (B*T1) x (C*Ft): all channel/filter activations
  // of one time step in one row
  Eigen::MatrixXi rrows(batch * t1, c * ft), rcols(batch * t1, c * ft);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index s = 0; s < t1; ++s)
      for (Eigen::Index ch = 0; ch < c; ++ch)
        for (Eigen::Index f = 0; f < ft; ++f) {
          rrows(b * t1 + s, ch * ft + f) = static_cast<int>((b * c + ch) * t1 + s);
          rcols(b * t1 + s, ch * ft + f) = static_cast<int>(f);
        }
  Graph::Id grouped = g.gather(tconv, rrows, rcols);
  Graph::Id sconv = g.gelu(
      g.add_rowvec(g.matmul(grouped, bind("enc.sconv.w")), bind("enc.sconv.b")));
  if (training) sconv = dropout_node(g, sconv, cfg_.dropout_rate, dropout_rng);

  Graph::Id pooled = g.mean_pool_rows(sconv, cfg_.pool, t1);  // (B*tok) x Fs

  Graph::Id tokens_out = pooled;
  if (cfg_.attention) {
    const Eigen::Index dh = fs / cfg_.attention_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Graph::Id> blocks;
    for (Eigen::Index b = 0; b < batch; ++b) {
      Graph::Id xb = g.slice_rows(pooled, b * tok, tok);
      Graph::Id ln1 = g.add_rowvec(
          g.mul_rowvec(g.layer_norm_rows(xb), bind("enc.attn.ln1.gain")),
          bind("enc.attn.ln1.bias"));
      Graph::Id heads = -1;
      for (Eigen::Index h = 0; h < cfg_.attention_heads; ++h) {
        const std::string base = "enc.attn.h" + std::to_string(h);
        Graph::Id q = g.matmul(ln1, bind(base + ".q"));
        Graph::Id kk = g.matmul(ln1, bind(base + ".k"));
        Graph::Id v = g.matmul(ln1, bind(base + ".v"));
        Graph::Id att =
            g.softmax_rows(g.scale(g.matmul(q, g.transpose(kk)), scale));
        Graph::Id out = g.matmul(att, v);
        heads = (h == 0) ? out : g.concat_cols(heads, out);
      }
      Graph::Id attn_out = g.matmul(heads, bind("enc.attn.o"));
      Graph::Id x2 = g.add(xb, attn_out);
      Graph::Id ln2 = g.add_rowvec(
          g.mul_rowvec(g.layer_norm_rows(x2), bind("enc.attn.ln2.gain")),
          bind("enc.attn.ln2.bias"));
      Graph::Id ffn = g.add_rowvec(
          g.matmul(g.gelu(g.add_rowvec(g.matmul(ln2, bind("enc.attn.ffn.w1")),
                                       bind("enc.attn.ffn.b1"))),
                   bind("enc.attn.ffn.w2")),
          bind("enc.attn.ffn.b2"));
      blocks.push_back(g.add(x2, ffn));
    }
    tokens_out = g.stack_rows(blocks);
  }

  // flatten (B*tok) x Fs -> B x (tok*Fs)
  Eigen::MatrixXi frows(batch, tok * fs), fcols(batch, tok * fs);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index s = 0; s < tok; ++s)
      for (Eigen::Index f = 0; f < fs; ++f) {
        frows(b, s * fs + f) = static_cast<int>(b * tok + s);
        fcols(b, s * fs + f) = static_cast<int>(f);
      }
  Graph::Id flat = g.gather(tokens_out, frows, fcols);

  return g.add_rowvec(g.matmul(flat, bind("enc.out.w")), bind("enc.out.b"));
}

Graph::Id AlignModel::build_project(Graph& g, GraphBinder& bind,
                                    Graph::Id features,
                                    const std::string& head) const {
  if (head != "v" && head != "t")
    throw ConfigError("projector head must be 'v' or 't'");
  const std::string base = "proj." + head;
  Graph::Id h = g.add_rowvec(g.matmul(features, bind(base + ".in.w")),
                             bind(base + ".in.b"));
  Graph::Id r = g.add_rowvec(
      g.matmul(g.gelu(g.add_rowvec(g.matmul(h, bind(base + ".mlp.w1")),
                                   bind(base + ".mlp.b1"))),
               bind(base + ".mlp.w2")),
      bind(base + ".mlp.b2"));
  Graph::Id ln = g.layer_norm_rows(g.add(h, r));
  return g.add_rowvec(g.mul_rowvec(ln, bind(base + ".ln.gain")),
                      bind(base + ".ln.bias"));
}

Graph::Id AlignModel::build_tau(Graph& g, GraphBinder& bind) const {
  return g.exp(bind("log_tau"));
}

Mat stack_batch_signal(const std::vector<const NeuralTrial*>& batch,
                       const EncoderConfig& cfg) {
  if (batch.empty()) throw DataError("empty batch");
  Mat out(static_cast<Eigen::Index>(batch.size()) * cfg.channels, cfg.samples);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const MatF& s = batch[i]->signal;
    if (s.rows() != cfg.channels || s.cols() != cfg.samples)
      throw DataError("trial shape does not match encoder config");
    out.middleRows(static_cast<Eigen::Index>(i) * cfg.channels, cfg.channels) =
        s.cast<double>();
  }
  return out;
}

Mat AlignModel::encode(const std::vector<const NeuralTrial*>& batch) const {
  Graph g;
  ParamStore& p = const_cast<ParamStore&>(params_);
  GraphBinder bind(g, p);
  Mat sig = stack_batch_signal(batch, cfg_);
  Graph::Id f = build_encode(g, bind, sig, static_cast<Eigen::Index>(batch.size()),
                             false, nullptr);
  return g.value(f);
}

Mat AlignModel::project_visual(const Mat& features) const {
  Graph g;
  ParamStore& p = const_cast<ParamStore&>(params_);
  GraphBinder bind(g, p);
  return g.value(build_project(g, bind, g.leaf(features), "v"));
}

Mat AlignModel::project_semantic(const Mat& features) const {
  Graph g;
  ParamStore& p = const_cast<ParamStore&>(params_);
  GraphBinder bind(g, p);
  return g.value(build_project(g, bind, g.leaf(features), "t"));
}

AlignModel AlignModel::from_parts(const EncoderConfig& cfg, ParamStore params) {
  cfg.validate();
  AlignModel m;
  m.cfg_ = cfg;
  m.params_ = std::move(params);
  if (!m.params_.has("log_tau"))
    throw DataError("parameter store is missing alignment parameters");
  return m;
}

void AlignModel::save(const std::string& path, const KvList& extra_meta) const {
  KvList meta;
  meta.emplace_back("model", "align-v1");
  for (const auto& [k, v] : cfg_.to_kv()) meta.emplace_back("cfg." + k, v);
  for (const auto& [k, v] : extra_meta) meta.emplace_back(k, v);
  params_.save(path, meta);
}

AlignModel AlignModel::load(const std::string& path, KvList* meta_out) {
  KvList meta;
  ParamStore ps = ParamStore::load(path, &meta);
  if (kv_get(meta, "model") != "align-v1")
    throw DataError("checkpoint is not an alignment model: " + path);
  KvList cfg_kv;
  for (const auto& [k, v] : meta)
    if (starts_with(k, "cfg.")) cfg_kv.emplace_back(k.substr(4), v);
  AlignModel m;
  m.cfg_ = EncoderConfig::from_kv(cfg_kv);
  m.params_ = std::move(ps);
  if (meta_out) *meta_out = std::move(meta);
  return m;
}

}  // namespace neuvis
