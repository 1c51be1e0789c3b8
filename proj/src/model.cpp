#include "spotting/model.hpp"

#include <cmath>
#include <stdexcept>

#include "spotting/rng.hpp"

namespace spotting {

namespace {

void add_param(ModelParams& p, const std::string& name, Shape shape) {
  p.index[name] = p.params.size();
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  p.params.push_back(Param{name, std::move(shape), std::vector<double>(n, 0.0)});
}

void add_attention(ModelParams& p, const std::string& prefix,
                   const ModelConfig& c) {
  const std::size_t d = static_cast<std::size_t>(c.model_dim);
  const std::size_t dh = d / static_cast<std::size_t>(c.num_heads);
  for (int h = 0; h < c.num_heads; ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    add_param(p, hp + ".wq", {d, dh});
    add_param(p, hp + ".wk", {d, dh});
    add_param(p, hp + ".wv", {d, dh});
  }
  add_param(p, prefix + ".wo", {d, d});
}

void add_ff(ModelParams& p, const std::string& prefix, const ModelConfig& c) {
  const std::size_t d = static_cast<std::size_t>(c.model_dim);
  const std::size_t f = static_cast<std::size_t>(c.ff_dim);
  add_param(p, prefix + ".w1", {d, f});
  add_param(p, prefix + ".b1", {f});
  add_param(p, prefix + ".w2", {f, d});
  add_param(p, prefix + ".b2", {d});
}

// Leaves for all parameters on one tape, accessible by name.
struct ParamLeaves {
  const ModelParams* params;
  std::vector<Tensor> leaves;

  const Tensor& operator()(const std::string& name) const {
    return leaves[params->index.at(name)];
  }
};

ParamLeaves make_leaves(Tape& tape, const ModelParams& params) {
  ParamLeaves pl;
  pl.params = &params;
  pl.leaves.reserve(params.params.size());
  for (const Param& p : params.params) pl.leaves.push_back(tape.leaf(p.shape, p.value));
  return pl;
}

Tensor affine(Tape& t, const Tensor& x, const Tensor& w, const Tensor& b) {
  return t.broadcast_add_row(t.matmul(x, w), b);
}

// Columns-wise concat of two equal-height matrices, via transposes.
Tensor hcat(Tape& t, const Tensor& a, const Tensor& b) {
  return t.transpose(t.concat_rows({t.transpose(a), t.transpose(b)}));
}

Tensor multihead_attention(Tape& t, const ParamLeaves& pl,
                           const std::string& prefix, const Tensor& q_in,
                           const Tensor& k_in, const Tensor& v_in, int heads) {
  const double dh =
      static_cast<double>(q_in.shape()[1]) / static_cast<double>(heads);
  Tensor concat;
  for (int h = 0; h < heads; ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    Tensor q = t.matmul(q_in, pl(hp + ".wq"));
    Tensor k = t.matmul(k_in, pl(hp + ".wk"));
    Tensor v = t.matmul(v_in, pl(hp + ".wv"));
    Tensor attn = t.row_softmax(
        t.scale(t.matmul(q, t.transpose(k)), 1.0 / std::sqrt(dh)));
    Tensor out = t.matmul(attn, v);
    concat = h == 0 ? out : hcat(t, concat, out);
  }
  return t.matmul(concat, pl(prefix + ".wo"));
}

Tensor feed_forward(Tape& t, const ParamLeaves& pl, const std::string& prefix,
                    const Tensor& x) {
  Tensor inner = t.relu(affine(t, x, pl(prefix + ".w1"), pl(prefix + ".b1")));
  return affine(t, inner, pl(prefix + ".w2"), pl(prefix + ".b2"));
}

Tensor encode_impl(Tape& t, const ParamLeaves& pl, const ModelConfig& cfg,
                   const Matrix& features, const Tensor& frame_pos) {
  if (static_cast<int>(features.cols) != cfg.feat_dim) {
    throw std::invalid_argument("encode: clip feature width " +
                                std::to_string(features.cols) +
                                " != configured " +
                                std::to_string(cfg.feat_dim));
  }
  Tensor x = t.leaf({features.rows, features.cols}, features.data);
  Tensor h = affine(t, x, pl("embed.w"), pl("embed.b"));
  for (int l = 0; l < cfg.num_encoder_layers; ++l) {
    const std::string prefix = "enc" + std::to_string(l);
    Tensor hn = t.layer_norm(h);
    // positional encoding enters queries and keys only, never values
    Tensor qk = t.add(hn, frame_pos);
    h = t.add(h, multihead_attention(t, pl, prefix + ".attn", qk, qk, hn,
                                     cfg.num_heads));
    h = t.add(h, feed_forward(t, pl, prefix + ".ff", t.layer_norm(h)));
  }
  return h;
}

Tensor reference_logits_impl(Tape& t, const ParamLeaves& pl) {
  Tensor inner = t.relu(affine(t, pl("queries"), pl("ref.w1"), pl("ref.b1")));
  return affine(t, inner, pl("ref.w2"), pl("ref.b2"));
}

// Differentiable sinusoidal term at continuous positions sigmoid(r_i) * T.
Tensor query_positional(Tape& t, const Tensor& ref_logits, int frames,
                        int dim) {
  const int half = dim / 2;
  std::vector<double> freqs(half);
  for (int k = 0; k < half; ++k)
    freqs[k] = std::pow(10000.0, -2.0 * k / static_cast<double>(dim));
  Tensor pos = t.scale(t.sigmoid(ref_logits), static_cast<double>(frames));
  Tensor arg =
      t.matmul(pos, t.leaf({1, static_cast<std::size_t>(half)}, freqs));
  return hcat(t, t.sin(arg), t.cos(arg));
}

}  // namespace

std::size_t ModelParams::total_values() const {
  std::size_t n = 0;
  for (const Param& p : params) n += p.value.size();
  return n;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  if (config.model_dim % 2 != 0) {
    throw std::invalid_argument("init_params: model_dim must be even");
  }
  if (config.model_dim % config.num_heads != 0) {
    throw std::invalid_argument(
        "init_params: model_dim must be divisible by num_heads");
  }
  ModelParams p;
  p.config = config;
  const std::size_t df = static_cast<std::size_t>(config.feat_dim);
  const std::size_t d = static_cast<std::size_t>(config.model_dim);
  const std::size_t nq = static_cast<std::size_t>(config.num_queries);
  const std::size_t nc = static_cast<std::size_t>(config.num_classes);

  add_param(p, "embed.w", {df, d});
  add_param(p, "embed.b", {d});
  for (int l = 0; l < config.num_encoder_layers; ++l) {
    const std::string prefix = "enc" + std::to_string(l);
    add_attention(p, prefix + ".attn", config);
    add_ff(p, prefix + ".ff", config);
  }
  add_param(p, "queries", {nq, d});
  add_param(p, "ref.w1", {d, d});
  add_param(p, "ref.b1", {d});
  add_param(p, "ref.w2", {d, 1});
  add_param(p, "ref.b2", {1});
  for (int l = 0; l < config.num_decoder_layers; ++l) {
    const std::string prefix = "dec" + std::to_string(l);
    add_attention(p, prefix + ".self", config);
    add_attention(p, prefix + ".cross", config);
    add_ff(p, prefix + ".ff", config);
  }
  add_param(p, "class.w", {d, nc});
  add_param(p, "class.b", {nc});
  add_param(p, "time.w1", {d, d});
  add_param(p, "time.b1", {d});
  add_param(p, "time.w2", {d, d});
  add_param(p, "time.b2", {d});
  add_param(p, "time.w3", {d, 1});
  add_param(p, "time.b3", {1});

  Rng rng(seed);
  for (Param& param : p.params) {
    if (param.shape.size() < 2) continue;  // biases stay zero
    const std::size_t fan_in =
        param.name == "queries" ? d : param.shape[0];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : param.value) v = rng.uniform(-bound, bound);
  }
  return p;
}

Matrix sinusoidal_encoding(int frames, int dim) {
  if (dim % 2 != 0) {
    throw std::invalid_argument("sinusoidal_encoding: dimension must be even");
  }
  Matrix m(static_cast<std::size_t>(frames), static_cast<std::size_t>(dim));
  const int half = dim / 2;
  for (int t = 0; t < frames; ++t) {
    for (int k = 0; k < half; ++k) {
      const double w = std::pow(10000.0, -2.0 * k / static_cast<double>(dim));
      m.at(t, k) = std::sin(t * w);
      m.at(t, half + k) = std::cos(t * w);
    }
  }
  return m;
}

Tensor encode(Tape& tape, const Matrix& features, const ModelParams& params) {
  ParamLeaves pl = make_leaves(tape, params);
  Matrix pe = sinusoidal_encoding(static_cast<int>(features.rows),
                                  params.config.model_dim);
  Tensor frame_pos = tape.leaf({pe.rows, pe.cols}, pe.data);
  return encode_impl(tape, pl, params.config, features, frame_pos);
}

ForwardResult forward(Tape& tape, const Matrix& features,
                      const ModelParams& params) {
  const ModelConfig& cfg = params.config;
  ParamLeaves pl = make_leaves(tape, params);
  Matrix pe =
      sinusoidal_encoding(static_cast<int>(features.rows), cfg.model_dim);
  Tensor frame_pos = tape.leaf({pe.rows, pe.cols}, pe.data);

  ForwardResult result;
  result.param_leaves = pl.leaves;
  result.encoded = encode_impl(tape, pl, cfg, features, frame_pos);
  result.reference_logits = reference_logits_impl(tape, pl);

  // Positional term for decoder queries, anchored at sigmoid(r_i) * T.
  // Fixed for the whole forward pass rather than refined per layer.
  Tensor query_pos =
      query_positional(tape, result.reference_logits,
                       static_cast<int>(features.rows), cfg.model_dim);
  Tensor enc_keys = tape.add(result.encoded, frame_pos);

  Tensor h = pl("queries");
  for (int l = 0; l < cfg.num_decoder_layers; ++l) {
    const std::string prefix = "dec" + std::to_string(l);
    Tensor hn = tape.layer_norm(h);
    Tensor qk = tape.add(hn, query_pos);
    h = tape.add(h, multihead_attention(tape, pl, prefix + ".self", qk, qk, hn,
                                        cfg.num_heads));
    Tensor hn2 = tape.layer_norm(h);
    h = tape.add(h, multihead_attention(tape, pl, prefix + ".cross",
                                        tape.add(hn2, query_pos), enc_keys,
                                        result.encoded, cfg.num_heads));
    h = tape.add(h, feed_forward(tape, pl, prefix + ".ff",
                                 tape.layer_norm(h)));

    Tensor out = tape.layer_norm(h);
    Tensor class_logits = affine(tape, out, pl("class.w"), pl("class.b"));
    result.layer_scores.push_back(tape.sigmoid(class_logits));
    Tensor t1 = tape.relu(affine(tape, out, pl("time.w1"), pl("time.b1")));
    Tensor t2 = tape.relu(affine(tape, t1, pl("time.w2"), pl("time.b2")));
    Tensor time_logits = affine(tape, t2, pl("time.w3"), pl("time.b3"));
    result.layer_times.push_back(
        tape.sigmoid(tape.add(time_logits, result.reference_logits)));
  }
  return result;
}

std::vector<Prediction> to_predictions(const Tensor& scores,
                                       const Tensor& times) {
  const std::size_t nq = scores.shape()[0];
  const std::size_t nc = scores.shape()[1];
  std::vector<Prediction> preds(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    preds[i].scores.assign(scores.values().begin() + i * nc,
                           scores.values().begin() + (i + 1) * nc);
    preds[i].time_norm = times.values()[i];
  }
  return preds;
}

std::vector<Prediction> predict(const Matrix& features,
                                const ModelParams& params) {
  Tape tape;
  ForwardResult r = forward(tape, features, params);
  return to_predictions(r.layer_scores.back(), r.layer_times.back());
}

}  // namespace spotting
