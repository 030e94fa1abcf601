#include "trailermatch/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace trailermatch {

const Mat& ModelParams::at(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw std::invalid_argument("unknown parameter: " + name);
}

Mat& ModelParams::at(const std::string& name) {
  for (auto& [n, m] : tensors)
    if (n == name) return m;
  throw std::invalid_argument("unknown parameter: " + name);
}

bool ModelParams::has(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return true;
  return false;
}

std::vector<std::pair<std::string, std::pair<Index, Index>>> param_shapes(int dim) {
  const Index d = dim;
  std::vector<std::pair<std::string, std::pair<Index, Index>>> shapes;
  for (const std::string tower : {"movie", "music"}) {
    shapes.emplace_back(tower + ".mlp.w1", std::make_pair(d, d));
    shapes.emplace_back(tower + ".mlp.b1", std::make_pair(Index{1}, d));
    shapes.emplace_back(tower + ".mlp.w2", std::make_pair(d, d));
    shapes.emplace_back(tower + ".mlp.b2", std::make_pair(Index{1}, d));
    for (const std::string block : {"sa", "ca"}) {
      const std::string base = tower + "." + block;
      shapes.emplace_back(base + ".pre.w", std::make_pair(d, d));
      shapes.emplace_back(base + ".pre.b", std::make_pair(Index{1}, d));
      shapes.emplace_back(base + ".wq", std::make_pair(d, d));
      shapes.emplace_back(base + ".wk", std::make_pair(d, d));
      shapes.emplace_back(base + ".wv", std::make_pair(d, d));
      shapes.emplace_back(base + ".post.w", std::make_pair(d, d));
      shapes.emplace_back(base + ".post.b", std::make_pair(Index{1}, d));
    }
  }
  shapes.emplace_back("selector.w1", std::make_pair(d, d));
  shapes.emplace_back("selector.b1", std::make_pair(Index{1}, d));
  shapes.emplace_back("selector.w2", std::make_pair(d, Index{1}));
  shapes.emplace_back("selector.b2", std::make_pair(Index{1}, Index{1}));
  return shapes;
}

ModelParams init_params(int dim, int heads, std::uint64_t seed) {
  if (dim < 1 || heads < 1) throw std::invalid_argument("dim and heads must be >= 1");
  if (dim % heads != 0) throw std::invalid_argument("dim must be divisible by heads");

  ModelParams params;
  params.dim = dim;
  params.heads = heads;
  params.seed = seed;

  Rng rng(seed);
  for (const auto& [name, shape] : param_shapes(dim)) {
    Mat m(shape.first, shape.second);
    const bool is_bias = name.find(".b") != std::string::npos;
    if (is_bias) {
      m.setZero();
    } else {
      const double bound =
          std::sqrt(6.0 / static_cast<double>(shape.first + shape.second));
      for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
    }
    params.tensors.emplace_back(name, std::move(m));
  }
  return params;
}

namespace {

struct TapeParams {
  ad::Tape* tape;
  const ModelParams* model;
  bool with_grad;
  std::vector<std::pair<std::string, ad::Var>> vars;

  ad::Var at(const std::string& name) {
    for (auto& [n, v] : vars)
      if (n == name) return v;
    ad::Var v = tape->param(name, model->at(name), with_grad);
    vars.emplace_back(name, v);
    return v;
  }
};

ad::Var linear(ad::Tape& t, ad::Var x, ad::Var w, ad::Var b) {
  return t.add_rowvec(t.matmul(x, w), b);
}

ad::Var mlp(ad::Tape& t, TapeParams& p, const std::string& tower, ad::Var x) {
  ad::Var h = t.relu(linear(t, x, p.at(tower + ".mlp.w1"), p.at(tower + ".mlp.b1")));
  return linear(t, h, p.at(tower + ".mlp.w2"), p.at(tower + ".mlp.b2"));
}

// Multi-head scaled dot-product attention. query/key_value are already
// projected through the block's pre-linear where applicable; wq applies to
// the query side, wk/wv to the key/value side. Softmax rows are appended to
// attn_out.
ad::Var attention(ad::Tape& t, ad::Var query, ad::Var key_value, ad::Var wq,
                  ad::Var wk, ad::Var wv, int heads,
                  std::vector<ad::Var>* attn_out) {
  const Index d = wq.cols();
  const Index dh = d / heads;
  ad::Var q = t.matmul(query, wq);
  ad::Var k = t.matmul(key_value, wk);
  ad::Var v = t.matmul(key_value, wv);
  std::vector<ad::Var> head_outputs;
  head_outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    ad::Var qh = t.split_cols(q, h * dh, dh);
    ad::Var kh = t.split_cols(k, h * dh, dh);
    ad::Var vh = t.split_cols(v, h * dh, dh);
    ad::Var scores =
        t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    ad::Var weights = t.rowsoftmax(scores);
    if (attn_out) attn_out->push_back(weights);
    head_outputs.push_back(t.matmul(weights, vh));
  }
  return t.concat_cols(head_outputs);
}

// pre-linear -> multi-head attention -> post-linear
ad::Var attention_block(ad::Tape& t, TapeParams& p, const std::string& base,
                        ad::Var query_in, ad::Var key_value, int heads,
                        std::vector<ad::Var>* attn_out) {
  ad::Var q = linear(t, query_in, p.at(base + ".pre.w"), p.at(base + ".pre.b"));
  ad::Var o = attention(t, q, key_value, p.at(base + ".wq"), p.at(base + ".wk"),
                        p.at(base + ".wv"), heads, attn_out);
  return linear(t, o, p.at(base + ".post.w"), p.at(base + ".post.b"));
}

}  // namespace

ForwardTrace encode(ad::Tape& tape, const Mat& movie, const Mat& music,
                    const ModelParams& params, bool with_grad) {
  if (params.dim < 1) throw std::invalid_argument("encode: params not initialized");
  if (movie.cols() != params.dim || music.cols() != params.dim)
    throw std::invalid_argument("encode: embedding dim does not match params");
  if (movie.rows() < 1 || music.rows() < 1)
    throw std::invalid_argument("encode: empty input");
  if (!movie.allFinite() || !music.allFinite())
    throw std::invalid_argument("encode: non-finite input embeddings");

  TapeParams p{&tape, &params, with_grad, {}};
  ForwardTrace trace;

  ad::Var m_in = tape.constant(movie);
  ad::Var a_in = tape.constant(music);

  trace.movie_mlp = mlp(tape, p, "movie", m_in);
  trace.music_mlp = mlp(tape, p, "music", a_in);

  // self-attention, no residual
  trace.movie_self = attention_block(tape, p, "movie.sa", trace.movie_mlp,
                                     trace.movie_mlp, params.heads,
                                     &trace.attention_weights);
  trace.music_self = attention_block(tape, p, "music.sa", trace.music_mlp,
                                     trace.music_mlp, params.heads,
                                     &trace.attention_weights);

  // cross-attention with residual; key/value come from the other tower
  trace.movie_latent =
      tape.add(trace.movie_self,
               attention_block(tape, p, "movie.ca", trace.movie_self,
                               trace.music_self, params.heads,
                               &trace.attention_weights));
  trace.music_latent =
      tape.add(trace.music_self,
               attention_block(tape, p, "music.ca", trace.music_self,
                               trace.movie_self, params.heads,
                               &trace.attention_weights));

  ad::Var hidden = tape.relu(
      linear(tape, trace.movie_latent, p.at("selector.w1"), p.at("selector.b1")));
  ad::Var logits = linear(tape, hidden, p.at("selector.w2"), p.at("selector.b2"));
  trace.select_probs = tape.sigmoid(logits);

  if (!trace.movie_latent.value().allFinite() ||
      !trace.music_latent.value().allFinite())
    throw std::runtime_error("encode: non-finite activations");

  return trace;
}

SelectionVector select_probs(const ForwardTrace& trace) {
  return trace.select_probs.value().col(0);
}

ad::Var cost_matrix(ad::Tape& tape, const ForwardTrace& trace) {
  ad::Var m = trace.movie_latent;
  ad::Var a = trace.music_latent;
  // ||m_i - a_j||^2 = |m_i|^2 + |a_j|^2 - 2 <m_i, a_j>, clipped at zero
  // before the square root to absorb cancellation.
  ad::Var m_sq = tape.rowsum(tape.square(m));                  // I x 1
  ad::Var a_sq = tape.transpose(tape.rowsum(tape.square(a)));  // 1 x J
  ad::Var cross = tape.scale(tape.matmul(m, tape.transpose(a)), -2.0);
  ad::Var sq_dist = tape.add_colvec(tape.add_rowvec(cross, a_sq), m_sq);
  return tape.sqrt(tape.relu(sq_dist));
}

}  // namespace trailermatch
