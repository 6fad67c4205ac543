#include "seqmtl/encoders.hpp"

#include <algorithm>
#include <cmath>

#include "seqmtl/corpus.hpp"
#include "seqmtl/kernels.hpp"
#include "seqmtl/numeric.hpp"

namespace seqmtl {

DropoutMask::DropoutMask(std::size_t n, double rate, Mode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout rate must lie in [0, 1)");
  if (mode == Mode::eval || rate == 0.0) return;
  const double keep_scale = 1.0 / (1.0 - rate);
  scale_.resize(n);
  for (double& s : scale_) s = rng.uniform() < rate ? 0.0 : keep_scale;
}

void DropoutMask::apply(std::span<double> values) const {
  if (identity()) return;
  for (std::size_t i = 0; i < values.size(); ++i) values[i] *= scale_[i];
}

void init_glorot(Parameter& p, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  init_uniform(p, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), seed);
}

void init_uniform(Parameter& p, double bound, std::uint64_t seed) {
  Rng rng(Rng::derive_seed(seed, p.name));
  for (double& v : p.value.values()) v = rng.uniform(-bound, bound);
}

// ------------------------------------------------------------------- CharCnn

CharCnn::CharCnn(const std::string& prefix, std::size_t chars, std::size_t char_dim,
                 std::size_t window, std::size_t filters)
    : embed(prefix + ".embed", Tensor::matrix(chars, char_dim)),
      filters(prefix + ".filters", Tensor::matrix(filters, window * char_dim)),
      bias(prefix + ".bias", Tensor({filters})),
      char_dim_(char_dim),
      window_(window),
      filters_(filters) {
  if (window % 2 == 0) throw Error("char CNN window must be odd");
}

void CharCnn::init(std::uint64_t seed) {
  init_uniform(embed, std::sqrt(3.0 / static_cast<double>(char_dim_)), seed);
  init_glorot(filters, window_ * char_dim_, filters_, seed);
  bias.value.fill(0.0);
}

std::vector<double> CharCnn::forward(std::span<const int> chars, Cache* cache) const {
  std::size_t len = chars.size();
  while (len > 0 && chars[len - 1] == Vocabulary::kCharPad) --len;
  if (len == 0) throw Error("char CNN needs a word of at least one character");

  const std::size_t half = window_ / 2;
  const int n_chars = static_cast<int>(embed.value.rows());
  std::vector<int> padded(len + 2 * half, Vocabulary::kCharPad);
  for (std::size_t i = 0; i < len; ++i) {
    const int id = chars[i];
    padded[half + i] = (id >= 0 && id < n_chars) ? id : Vocabulary::kCharUnk;
  }

  const auto& k = kernels::active();
  const std::size_t span = window_ * char_dim_;
  std::vector<double> window(span);
  std::vector<double> z(filters_);
  std::vector<double> best(filters_, -INFINITY);
  std::vector<std::size_t> argmax(filters_, 0);
  for (std::size_t p = 0; p < len; ++p) {
    for (std::size_t j = 0; j < window_; ++j) {
      const auto row = embed.value.row(static_cast<std::size_t>(padded[p + j]));
      std::copy(row.begin(), row.end(), window.begin() + static_cast<long>(j * char_dim_));
    }
    std::copy(bias.value.values().begin(), bias.value.values().end(), z.begin());
    k.gemv(filters.value.data(), filters_, span, window.data(), z.data());
    for (std::size_t f = 0; f < filters_; ++f) {
      const double y = std::tanh(z[f]);
      if (y > best[f]) {
        best[f] = y;
        argmax[f] = p;
      }
    }
  }
  if (cache != nullptr) {
    cache->padded = std::move(padded);
    cache->argmax = std::move(argmax);
    cache->out = best;
  }
  return best;
}

void CharCnn::backward(const Cache& cache, std::span<const double> out_grad) {
  for (std::size_t f = 0; f < filters_; ++f) {
    const double y = cache.out[f];
    const double dz = out_grad[f] * (1.0 - y * y);
    if (dz == 0.0) continue;
    bias.grad[f] += dz;
    const std::size_t p = cache.argmax[f];
    auto filter_grad = filters.grad.row(f);
    const auto filter = filters.value.row(f);
    for (std::size_t j = 0; j < window_; ++j) {
      const auto id = static_cast<std::size_t>(cache.padded[p + j]);
      const auto emb = embed.value.row(id);
      auto emb_grad = embed.grad.row(id);
      for (std::size_t d = 0; d < char_dim_; ++d) {
        filter_grad[j * char_dim_ + d] += dz * emb[d];
        emb_grad[d] += dz * filter[j * char_dim_ + d];
      }
    }
  }
}

// ---------------------------------------------------------------------- LSTM

Lstm::Lstm(const std::string& prefix, std::size_t input_size, std::size_t hidden)
    : weight(prefix + ".W", Tensor::matrix(4 * hidden, input_size + hidden)),
      bias(prefix + ".b", Tensor({4 * hidden})),
      input_(input_size),
      hidden_(hidden) {}

void Lstm::init(std::uint64_t seed) {
  init_glorot(weight, input_ + hidden_, 4 * hidden_, seed);
  bias.value.fill(0.0);
  for (std::size_t i = hidden_; i < 2 * hidden_; ++i) bias.value[i] = 1.0;
}

Tensor Lstm::forward(const Tensor& x, bool reverse, Cache* cache) const {
  if (x.cols() != input_) {
    throw Error("LSTM " + weight.name + " expects input width " + std::to_string(input_) +
                ", got " + std::to_string(x.cols()));
  }
  const std::size_t steps = x.rows();
  const std::size_t H = hidden_;
  const std::size_t width = input_ + H;
  const auto& k = kernels::active();

  Tensor h_out = Tensor::matrix(steps, H);
  std::vector<double> xh(width, 0.0);
  std::vector<double> gates(4 * H);
  std::vector<double> c(H, 0.0);
  std::vector<double> h(H, 0.0);
  if (cache != nullptr) {
    cache->steps = steps;
    cache->reverse = reverse;
    cache->xh.assign(steps * width, 0.0);
    cache->gates.assign(steps * 4 * H, 0.0);
    cache->cell.assign(steps * H, 0.0);
    cache->tanh_cell.assign(steps * H, 0.0);
  }
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    const auto xt = x.row(t);
    std::copy(xt.begin(), xt.end(), xh.begin());
    std::copy(h.begin(), h.end(), xh.begin() + static_cast<long>(input_));

    std::copy(bias.value.values().begin(), bias.value.values().end(), gates.begin());
    k.gemv(weight.value.data(), 4 * H, width, xh.data(), gates.data());
    for (std::size_t j = 0; j < 3 * H; ++j) gates[j] = sigmoid(gates[j]);
    for (std::size_t j = 3 * H; j < 4 * H; ++j) gates[j] = std::tanh(gates[j]);

    auto hrow = h_out.row(t);
    for (std::size_t j = 0; j < H; ++j) {
      const double i_g = gates[j], f_g = gates[H + j], o_g = gates[2 * H + j], g_g = gates[3 * H + j];
      c[j] = f_g * c[j] + i_g * g_g;
      const double tc = std::tanh(c[j]);
      h[j] = o_g * tc;
      hrow[j] = h[j];
      if (cache != nullptr) {
        cache->cell[s * H + j] = c[j];
        cache->tanh_cell[s * H + j] = tc;
      }
    }
    if (cache != nullptr) {
      std::copy(xh.begin(), xh.end(), cache->xh.begin() + static_cast<long>(s * width));
      std::copy(gates.begin(), gates.end(), cache->gates.begin() + static_cast<long>(s * 4 * H));
    }
  }
  return h_out;
}

Tensor Lstm::backward(const Cache& cache, const Tensor& h_grad) {
  const std::size_t steps = cache.steps;
  const std::size_t H = hidden_;
  const std::size_t width = input_ + H;
  const auto& k = kernels::active();

  Tensor x_grad = Tensor::matrix(steps, input_);
  std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0);
  std::vector<double> dz(4 * H);
  std::vector<double> dxh(width);
  for (std::size_t s = steps; s-- > 0;) {
    const std::size_t t = cache.reverse ? steps - 1 - s : s;
    const double* gates = cache.gates.data() + s * 4 * H;
    const double* tc = cache.tanh_cell.data() + s * H;
    const double* c_prev = s > 0 ? cache.cell.data() + (s - 1) * H : nullptr;
    const auto hg = h_grad.row(t);
    for (std::size_t j = 0; j < H; ++j) {
      const double i_g = gates[j], f_g = gates[H + j], o_g = gates[2 * H + j], g_g = gates[3 * H + j];
      const double dh = hg[j] + dh_next[j];
      const double dc = dh * o_g * (1.0 - tc[j] * tc[j]) + dc_next[j];
      const double cp = c_prev != nullptr ? c_prev[j] : 0.0;
      dz[j] = dc * g_g * i_g * (1.0 - i_g);
      dz[H + j] = dc * cp * f_g * (1.0 - f_g);
      dz[2 * H + j] = dh * tc[j] * o_g * (1.0 - o_g);
      dz[3 * H + j] = dc * i_g * (1.0 - g_g * g_g);
      dc_next[j] = dc * f_g;
    }
    for (std::size_t j = 0; j < 4 * H; ++j) bias.grad[j] += dz[j];
    k.ger(weight.grad.data(), 4 * H, width, dz.data(), cache.xh.data() + s * width);
    std::fill(dxh.begin(), dxh.end(), 0.0);
    k.gemv_t(weight.value.data(), 4 * H, width, dz.data(), dxh.data());
    auto xg = x_grad.row(t);
    std::copy(dxh.begin(), dxh.begin() + static_cast<long>(input_), xg.begin());
    std::copy(dxh.begin() + static_cast<long>(input_), dxh.end(), dh_next.begin());
  }
  return x_grad;
}

// --------------------------------------------------------------------- BLSTM

Blstm::Blstm(const std::string& prefix, std::size_t input_size, std::size_t hidden)
    : fwd_(prefix + ".fwd", input_size, hidden), bwd_(prefix + ".bwd", input_size, hidden) {}

void Blstm::init(std::uint64_t seed) {
  fwd_.init(seed);
  bwd_.init(seed);
}

Tensor Blstm::forward(const Tensor& x, Cache* cache) const {
  if (x.rows() == 0) throw Error("BLSTM needs at least one time step");
  const Tensor f = fwd_.forward(x, false, cache ? &cache->forward : nullptr);
  const Tensor b = bwd_.forward(x, true, cache ? &cache->backward : nullptr);
  const std::size_t H = hidden();
  Tensor out = Tensor::matrix(x.rows(), 2 * H);
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto row = out.row(t);
    std::copy(f.row(t).begin(), f.row(t).end(), row.begin());
    std::copy(b.row(t).begin(), b.row(t).end(), row.begin() + static_cast<long>(H));
  }
  return out;
}

Tensor Blstm::backward(const Cache& cache, const Tensor& out_grad) {
  const std::size_t H = hidden();
  const std::size_t T = out_grad.rows();
  Tensor gf = Tensor::matrix(T, H), gb = Tensor::matrix(T, H);
  for (std::size_t t = 0; t < T; ++t) {
    const auto row = out_grad.row(t);
    std::copy(row.begin(), row.begin() + static_cast<long>(H), gf.row(t).begin());
    std::copy(row.begin() + static_cast<long>(H), row.end(), gb.row(t).begin());
  }
  Tensor dx = fwd_.backward(cache.forward, gf);
  const Tensor dxb = bwd_.backward(cache.backward, gb);
  kernels::axpy(1.0, dxb.values(), dx.values());
  return dx;
}

ParameterList Blstm::parameters() {
  ParameterList out = fwd_.parameters();
  for (Parameter* p : bwd_.parameters()) out.push_back(p);
  return out;
}

// ------------------------------------------------------------ WordRepresenter

WordRepresenter::WordRepresenter(const WordReprConfig& config, std::size_t vocab_words,
                                 std::size_t vocab_chars)
    : word_embed("embed.word", Tensor::matrix(vocab_words, config.word_dim), config.word_trainable),
      char_cnn("charcnn", vocab_chars, config.char_dim, config.char_window, config.char_filters),
      config_(config) {
  if (contextual()) {
    if (config.context_dim == 0) throw Error("contextual vectors need a nonzero dimension");
    std::vector<double> raw = config.context_raw_weights;
    if (raw.empty()) raw.assign(config.context_layers, 0.0);
    if (raw.size() != config.context_layers) {
      throw Error("contextual mix has " + std::to_string(raw.size()) + " weights for " +
                  std::to_string(config.context_layers) + " layers");
    }
    context_weights = Parameter("elmo.weights", Tensor::vector(raw), config.context_trainable);
    context_gamma = Parameter("elmo.gamma", Tensor({1}, config.gamma), config.context_trainable);
  }
}

void WordRepresenter::init(std::uint64_t seed) {
  init_uniform(word_embed, std::sqrt(3.0 / static_cast<double>(config_.word_dim)), seed);
  for (double& v : word_embed.value.row(Vocabulary::kPad)) v = 0.0;
  char_cnn.init(seed);
}

void WordRepresenter::set_embeddings(const EmbeddingMatrix& m) {
  if (m.matrix.shape() != word_embed.value.shape()) {
    throw Error("embedding matrix shape " + m.matrix.shape_string() + " does not match " +
                word_embed.value.shape_string());
  }
  word_embed.value = m.matrix;
  for (double& v : word_embed.value.row(Vocabulary::kPad)) v = 0.0;
}

std::size_t WordRepresenter::output_dim() const {
  return config_.word_dim + config_.char_filters + (contextual() ? config_.context_dim : 0);
}

Tensor WordRepresenter::forward(const SentenceInput& input, double dropout_rate, Mode mode,
                                Rng& rng, Cache* cache) const {
  const std::size_t T = input.length();
  if (input.chars.size() != T) throw Error("word_repr: char runs do not match token count");
  Tensor raw = Tensor::matrix(T, output_dim());
  const std::size_t wd = config_.word_dim;
  const std::size_t cf = config_.char_filters;

  if (cache != nullptr) {
    cache->word_ids.assign(input.words.begin(), input.words.end());
    cache->chars.assign(T, {});
    cache->context = input.context;
  }
  for (std::size_t t = 0; t < T; ++t) {
    auto row = raw.row(t);
    const int id = input.words[t];
    if (id < 0 || static_cast<std::size_t>(id) >= word_embed.value.rows()) {
      throw Error("word id out of range");
    }
    const auto emb = word_embed.value.row(static_cast<std::size_t>(id));
    std::copy(emb.begin(), emb.end(), row.begin());
    const auto c = char_cnn.forward(input.chars[t], cache ? &cache->chars[t] : nullptr);
    std::copy(c.begin(), c.end(), row.begin() + static_cast<long>(wd));
  }
  if (contextual()) {
    if (input.context == nullptr) throw Error("contextual vectors missing for sentence");
    if (input.context->tokens != T) {
      throw Error("contextual record has " + std::to_string(input.context->tokens) +
                  " tokens, sentence has " + std::to_string(T));
    }
    if (input.context->layers != config_.context_layers || input.context->dim != config_.context_dim) {
      throw Error("contextual record shape does not match the model");
    }
    const Tensor mixed = elmo_combine(*input.context, context_weights.value.values(),
                                      context_gamma.value[0]);
    for (std::size_t t = 0; t < T; ++t) {
      std::copy(mixed.row(t).begin(), mixed.row(t).end(),
                raw.row(t).begin() + static_cast<long>(wd + cf));
    }
  }

  Tensor out = raw;
  DropoutMask mask(out.size(), dropout_rate, mode, rng);
  mask.apply(out.values());
  if (cache != nullptr) {
    cache->raw = std::move(raw);
    cache->mask = std::move(mask);
  }
  return out;
}

void WordRepresenter::backward_raw(const Cache& cache, const Tensor& raw_grad) {
  const std::size_t T = cache.word_ids.size();
  const std::size_t wd = config_.word_dim;
  const std::size_t cf = config_.char_filters;
  for (std::size_t t = 0; t < T; ++t) {
    const auto g = raw_grad.row(t);
    const int id = cache.word_ids[t];
    if (word_embed.trainable && id != Vocabulary::kPad) {
      kernels::axpy(1.0, g.subspan(0, wd), word_embed.grad.row(static_cast<std::size_t>(id)));
    }
    char_cnn.backward(cache.chars[t], g.subspan(wd, cf));
  }
  if (contextual() && context_weights.trainable) {
    Tensor mix_grad = Tensor::matrix(T, config_.context_dim);
    for (std::size_t t = 0; t < T; ++t) {
      const auto g = raw_grad.row(t).subspan(wd + cf);
      std::copy(g.begin(), g.end(), mix_grad.row(t).begin());
    }
    double gamma_grad = 0.0;
    elmo_combine_backward(*cache.context, context_weights.value.values(), context_gamma.value[0],
                          mix_grad, context_weights.grad.values(), gamma_grad);
    context_gamma.grad[0] += gamma_grad;
  }
}

ParameterList WordRepresenter::parameters() {
  ParameterList out{&word_embed};
  for (Parameter* p : char_cnn.parameters()) out.push_back(p);
  if (contextual()) {
    out.push_back(&context_weights);
    out.push_back(&context_gamma);
  }
  return out;
}

}  // namespace seqmtl
