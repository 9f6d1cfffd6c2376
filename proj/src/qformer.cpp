#include "neuvis/qformer.hpp"

#include <cmath>
#include <utility>

#include "neuvis/errors.hpp"

namespace neuvis {

namespace {

constexpr std::uint64_t kSaltShuffleBase = 40000;

void require(bool cond, const char* msg) {
  if (!cond) throw ConfigError(msg);
}

Mat reshape_tokens(const Mat& zs, Eigen::Index row, Eigen::Index tokens,
                   Eigen::Index d_model) {
  Mat out(tokens, d_model);
  for (Eigen::Index l = 0; l < tokens; ++l)
    for (Eigen::Index j = 0; j < d_model; ++j)
      out(l, j) = zs(row, l * d_model + j);
  return out;
}

Mat gelu_mat(Mat x) {
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = gelu_value(x(i, j));
  return x;
}

}  // namespace

void QFormerConfig::validate() const {
  require(n_queries >= 1, "qformer: n_queries must be at least 1");
  require(d_model >= 1 && n_heads >= 1 && ffn_dim >= 1,
          "qformer: d_model, n_heads and ffn_dim must be at least 1");
  require(d_in >= 1 && d_prompt >= 1 && d_pool >= 1,
          "qformer: d_in, d_prompt and d_pool must be at least 1");
  require(d_model % n_heads == 0,
          "qformer: d_model must be divisible by n_heads");
  require(d_in % d_model == 0,
          "qformer: d_in must be divisible by d_model to form tokens");
}

KvList QFormerConfig::to_kv() const {
  KvList kv;
  kv.emplace_back("n_queries", std::to_string(n_queries));
  kv.emplace_back("d_model", std::to_string(d_model));
  kv.emplace_back("n_heads", std::to_string(n_heads));
  kv.emplace_back("ffn_dim", std::to_string(ffn_dim));
  kv.emplace_back("d_in", std::to_string(d_in));
  kv.emplace_back("d_prompt", std::to_string(d_prompt));
  kv.emplace_back("d_pool", std::to_string(d_pool));
  kv.emplace_back("seed", std::to_string(seed));
  return kv;
}

QFormerConfig QFormerConfig::from_kv(const KvList& kv) {
  QFormerConfig c;
  c.n_queries = parse_int(kv_get(kv, "n_queries"));
  c.d_model = parse_int(kv_get(kv, "d_model"));
  c.n_heads = parse_int(kv_get(kv, "n_heads"));
  c.ffn_dim = parse_int(kv_get(kv, "ffn_dim"));
  c.d_in = parse_int(kv_get(kv, "d_in"));
  c.d_prompt = parse_int(kv_get(kv, "d_prompt"));
  c.d_pool = parse_int(kv_get(kv, "d_pool"));
  c.seed = static_cast<std::uint64_t>(parse_int(kv_get(kv, "seed")));
  c.validate();
  return c;
}

Mat softmax_rows_value(const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    Eigen::RowVectorXd e = (x.row(i).array() - m).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

Mat self_attention_value(const Mat& x, const Mat& wq, const Mat& wk,
                         const Mat& wv, const Mat& wo, Eigen::Index n_heads) {
  if (x.cols() != wq.rows() || wq.cols() % n_heads != 0)
    throw DataError("self-attention shapes do not match");
  const Eigen::Index hd = wq.cols() / n_heads;
  const Mat q = x * wq;
  const Mat k = x * wk;
  const Mat v = x * wv;
  Mat concat(x.rows(), wq.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (Eigen::Index h = 0; h < n_heads; ++h) {
    const Mat qh = q.middleCols(h * hd, hd);
    const Mat kh = k.middleCols(h * hd, hd);
    const Mat vh = v.middleCols(h * hd, hd);
    concat.middleCols(h * hd, hd) =
        softmax_rows_value((qh * kh.transpose()) * scale) * vh;
  }
  return concat * wo;
}

Mat cross_attention_value(const Mat& queries, const Mat& tokens, const Mat& wq,
                          const Mat& wk, const Mat& wv) {
  if (queries.cols() != wq.rows() || tokens.cols() != wk.rows())
    throw DataError("cross-attention shapes do not match");
  const Mat q = queries * wq;
  const Mat k = tokens * wk;
  const Mat v = tokens * wv;
  const double scale = 1.0 / std::sqrt(static_cast<double>(k.cols()));
  return softmax_rows_value((q * k.transpose()) * scale) * v;
}

QFormer QFormer::init(const QFormerConfig& cfg) {
  cfg.validate();
  QFormer m;
  m.cfg_ = cfg;
  Rng rng(cfg.seed);
  auto& p = m.params_;
  p.add("zq", gaussian_init(rng, cfg.n_queries, cfg.d_model, 0.02));
  p.add("self.wq", glorot_init(rng, cfg.d_model, cfg.d_model));
  p.add("self.wk", glorot_init(rng, cfg.d_model, cfg.d_model));
  p.add("self.wv", glorot_init(rng, cfg.d_model, cfg.d_model));
  p.add("self.wo", glorot_init(rng, cfg.d_model, cfg.d_model));
  p.add("cross.wq", glorot_init(rng, cfg.d_model, cfg.d_model));
  p.add("cross.wk", glorot_init(rng, cfg.d_model, cfg.d_model));
  p.add("cross.wv", glorot_init(rng, cfg.d_model, cfg.d_model));
  p.add("ffn.w1", glorot_init(rng, cfg.d_model, cfg.ffn_dim));
  p.add("ffn.b1", Mat::Zero(1, cfg.ffn_dim));
  p.add("ffn.w2", glorot_init(rng, cfg.ffn_dim, cfg.d_model));
  p.add("ffn.b2", Mat::Zero(1, cfg.d_model));
  p.add("prompt.w", glorot_init(rng, cfg.d_model, cfg.d_prompt));
  p.add("prompt.b", Mat::Zero(1, cfg.d_prompt));
  p.add("pool.w", glorot_init(rng, cfg.d_model, cfg.d_pool));
  p.add("pool.b", Mat::Zero(1, cfg.d_pool));
  return m;
}

QFormer QFormer::from_parts(const QFormerConfig& cfg, ParamStore params) {
  cfg.validate();
  if (!params.has("zq") || !params.has("pool.w"))
    throw DataError("parameter store does not hold a query transformer");
  QFormer m;
  m.cfg_ = cfg;
  m.params_ = std::move(params);
  return m;
}

Mat QFormer::attended_queries() const {
  return self_attention_value(params_.at("zq"), params_.at("self.wq"),
                              params_.at("self.wk"), params_.at("self.wv"),
                              params_.at("self.wo"), cfg_.n_heads);
}

QFormerOutput QFormer::forward(const Mat& zs) const {
  if (zs.cols() != cfg_.d_in)
    throw DataError("semantic vector width does not match qformer d_in");
  const Eigen::Index batch = zs.rows();
  const Eigen::Index nq = cfg_.n_queries;
  const Mat zq1 = attended_queries();
  const auto& p = params_;

  QFormerOutput out;
  out.prompts.resize(batch * nq, cfg_.d_prompt);
  out.pooled.resize(batch, cfg_.d_pool);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Mat tokens = reshape_tokens(zs, b, cfg_.tokens(), cfg_.d_model);
    const Mat zq2 = cross_attention_value(zq1, tokens, p.at("cross.wq"),
                                          p.at("cross.wk"), p.at("cross.wv"));
    const Mat h1 = gelu_mat((zq2 * p.at("ffn.w1")).rowwise() +
                            p.at("ffn.b1").row(0));
    const Mat h = (h1 * p.at("ffn.w2")).rowwise() + p.at("ffn.b2").row(0);
    out.prompts.middleRows(b * nq, nq) =
        (h * p.at("prompt.w")).rowwise() + p.at("prompt.b").row(0);
    out.pooled.row(b) =
        h.colwise().mean() * p.at("pool.w") + p.at("pool.b").row(0);
  }
  return out;
}

std::pair<Graph::Id, Graph::Id> QFormer::build_forward(Graph& g,
                                                       GraphBinder& bind,
                                                       const Mat& zs) const {
  if (zs.cols() != cfg_.d_in)
    throw DataError("semantic vector width does not match qformer d_in");
  const Eigen::Index batch = zs.rows();
  const Eigen::Index nq = cfg_.n_queries;
  const Eigen::Index dm = cfg_.d_model;
  const Eigen::Index hd = cfg_.head_dim();
  const Eigen::Index tok = cfg_.tokens();

  // Self-attention over the learned queries (input-independent).
  Graph::Id zq = bind("zq");
  Graph::Id q = g.matmul(zq, bind("self.wq"));
  Graph::Id k = g.matmul(zq, bind("self.wk"));
  Graph::Id v = g.matmul(zq, bind("self.wv"));
  const double self_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Graph::Id heads = -1;
  for (Eigen::Index h = 0; h < cfg_.n_heads; ++h) {
    Graph::Id qh = g.slice_cols(q, h * hd, hd);
    Graph::Id kh = g.slice_cols(k, h * hd, hd);
    Graph::Id vh = g.slice_cols(v, h * hd, hd);
    Graph::Id attn =
        g.softmax_rows(g.scale(g.matmul(qh, g.transpose(kh)), self_scale));
    Graph::Id ho = g.matmul(attn, vh);
    heads = (h == 0) ? ho : g.concat_cols(heads, ho);
  }
  Graph::Id zq1 = g.matmul(heads, bind("self.wo"));

  // Token stack for the whole batch, then per-sample cross-attention.
  Graph::Id zs_leaf = g.leaf(zs);
  std::vector<Graph::Id> token_rows;
  token_rows.reserve(static_cast<std::size_t>(batch * tok));
  for (Eigen::Index b = 0; b < batch; ++b) {
    Graph::Id row = g.slice_rows(zs_leaf, b, 1);
    for (Eigen::Index l = 0; l < tok; ++l)
      token_rows.push_back(g.slice_cols(row, l * dm, dm));
  }
  Graph::Id tokens = g.stack_rows(token_rows);
  Graph::Id qc = g.matmul(zq1, bind("cross.wq"));
  Graph::Id kc = g.matmul(tokens, bind("cross.wk"));
  Graph::Id vc = g.matmul(tokens, bind("cross.wv"));
  const double cross_scale = 1.0 / std::sqrt(static_cast<double>(dm));
  std::vector<Graph::Id> sample_outs;
  sample_outs.reserve(static_cast<std::size_t>(batch));
  for (Eigen::Index b = 0; b < batch; ++b) {
    Graph::Id kb = g.slice_rows(kc, b * tok, tok);
    Graph::Id vb = g.slice_rows(vc, b * tok, tok);
    Graph::Id attn =
        g.softmax_rows(g.scale(g.matmul(qc, g.transpose(kb)), cross_scale));
    sample_outs.push_back(g.matmul(attn, vb));
  }
  Graph::Id zq2 = g.stack_rows(sample_outs);  // (B*nq) x dm

  Graph::Id h1 = g.gelu(g.add_rowvec(g.matmul(zq2, bind("ffn.w1")),
                                     bind("ffn.b1")));
  Graph::Id hid = g.add_rowvec(g.matmul(h1, bind("ffn.w2")), bind("ffn.b2"));

  Graph::Id prompts =
      g.add_rowvec(g.matmul(hid, bind("prompt.w")), bind("prompt.b"));
  Graph::Id pooled_tokens = g.mean_pool_rows(hid, nq, nq);  // B x dm
  Graph::Id pooled =
      g.add_rowvec(g.matmul(pooled_tokens, bind("pool.w")), bind("pool.b"));
  return {prompts, pooled};
}

void QFormer::save(const std::string& path, const KvList& extra_meta) const {
  KvList meta;
  meta.emplace_back("model", "qformer-v1");
  for (const auto& [key, val] : cfg_.to_kv()) meta.emplace_back("cfg." + key, val);
  for (const auto& [key, val] : extra_meta) meta.emplace_back(key, val);
  params_.save(path, meta);
}

QFormer QFormer::load(const std::string& path, KvList* meta_out) {
  KvList meta;
  ParamStore ps = ParamStore::load(path, &meta);
  if (kv_get(meta, "model") != "qformer-v1")
    throw DataError("checkpoint is not a query transformer: " + path);
  KvList cfg_kv;
  for (const auto& [key, val] : meta)
    if (starts_with(key, "cfg.")) cfg_kv.emplace_back(key.substr(4), val);
  QFormer m;
  m.cfg_ = QFormerConfig::from_kv(cfg_kv);
  m.params_ = std::move(ps);
  if (meta_out) *meta_out = std::move(meta);
  return m;
}

PromptTargets build_prompt_targets(const std::vector<std::int64_t>& image_ids,
                                   const EmbeddingProvider& provider,
                                   const QFormerConfig& cfg,
                                   std::uint64_t seed) {
  if (image_ids.empty()) throw DataError("no images to build prompt targets for");
  const Eigen::Index d = provider.dim();
  Rng rng(seed);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(2 * d));
  const Mat w_prompt =
      rng.gaussian_mat(2 * d, cfg.n_queries * cfg.d_prompt, sigma);
  const Mat w_pool = rng.gaussian_mat(2 * d, cfg.d_pool, sigma);

  PromptTargets out;
  out.image_ids = image_ids;
  const Eigen::Index n = static_cast<Eigen::Index>(image_ids.size());
  out.prompts.resize(n * cfg.n_queries, cfg.d_prompt);
  out.pooled.resize(n, cfg.d_pool);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::int64_t image_id = image_ids[static_cast<std::size_t>(i)];
    Eigen::RowVectorXd fused(2 * d);
    fused.head(d) =
        provider.coarse_text_embedding(provider.category_of(image_id))
            .transpose();
    fused.tail(d) = provider.fine_text_embedding(image_id).transpose();
    const Eigen::RowVectorXd flat = fused * w_prompt;
    for (Eigen::Index qrow = 0; qrow < cfg.n_queries; ++qrow)
      out.prompts.row(i * cfg.n_queries + qrow) =
          flat.segment(qrow * cfg.d_prompt, cfg.d_prompt);
    out.pooled.row(i) = fused * w_pool;
  }
  return out;
}

void QFormerTrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("qformer training: epochs must be >= 0");
  if (!(lr >= 0.0)) throw ConfigError("qformer training: lr must be >= 0");
  if (batch_size < 1)
    throw ConfigError("qformer training: batch_size must be >= 1");
}

double qformer_loss(const QFormer& model, const Mat& zs, const Mat& prompts,
                    const Mat& pooled) {
  QFormerOutput out = model.forward(zs);
  if (out.prompts.rows() != prompts.rows() ||
      out.prompts.cols() != prompts.cols() ||
      out.pooled.rows() != pooled.rows() || out.pooled.cols() != pooled.cols())
    throw DataError("qformer targets do not match output shapes");
  const double mse_prompt =
      (out.prompts - prompts).array().square().mean();
  const double mse_pool = (out.pooled - pooled).array().square().mean();
  return mse_prompt + mse_pool;
}

QFormer train_qformer(QFormer model, const Mat& zs, const Mat& prompts,
                      const Mat& pooled, const QFormerTrainConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = zs.rows();
  const Eigen::Index nq = model.config().n_queries;
  if (n == 0) throw DataError("qformer training set is empty");
  if (prompts.rows() != n * nq || pooled.rows() != n)
    throw DataError("qformer targets do not match the training set size");

  AdamConfig adam;
  adam.lr = cfg.lr;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = Rng(cfg.seed).fork(kSaltShuffleBase + static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);
    for (Eigen::Index begin = 0; begin < n; begin += cfg.batch_size) {
      const Eigen::Index count = std::min<Eigen::Index>(cfg.batch_size, n - begin);
      Mat bz(count, zs.cols());
      Mat bp(count * nq, prompts.cols());
      Mat bo(count, pooled.cols());
      for (Eigen::Index i = 0; i < count; ++i) {
        const Eigen::Index src = order[static_cast<std::size_t>(begin + i)];
        bz.row(i) = zs.row(src);
        bp.middleRows(i * nq, nq) = prompts.middleRows(src * nq, nq);
        bo.row(i) = pooled.row(src);
      }

      Graph g;
      GraphBinder bind(g, model.params());
      auto [out_prompts, out_pooled] = model.build_forward(g, bind, bz);
      Graph::Id loss = g.add(g.mean_all(g.square(g.sub(out_prompts, g.leaf(bp)))),
                             g.mean_all(g.square(g.sub(out_pooled, g.leaf(bo)))));
      if (!std::isfinite(g.scalar(loss)))
        throw NumericError("qformer training loss is not finite");
      model.params().zero_grads();
      g.backward(loss);
      bind.accumulate_grads();
      model.params().adam_step(adam);
    }
  }
  return model;
}

}  // namespace neuvis
