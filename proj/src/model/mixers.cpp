#include "mixerbench/mixers.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "mixerbench/ops.hpp"

namespace mixerbench {

MixerKind parse_mixer(const std::string& name) {
  if (name == "attention") return MixerKind::attention;
  if (name == "hyena") return MixerKind::hyena;
  if (name == "mamba_vision" || name == "mambavision" || name == "mamba") return MixerKind::mamba_vision;
  throw ConfigError("unknown mixer '" + name + "' (expected attention, hyena or mamba_vision)");
}

const char* mixer_name(MixerKind kind) {
  switch (kind) {
    case MixerKind::attention: return "attention";
    case MixerKind::hyena: return "hyena";
    case MixerKind::mamba_vision: return "mamba_vision";
  }
  return "?";
}

namespace {

// Lifts [n, d] to [1, n, d]; returns whether it did.
bool as_batched(const Tensor& x, Tensor& out, std::int64_t d, const char* who) {
  if (x.rank() == 2 && x.dim(1) == d) {
    out = reshape(x, {1, x.dim(0), d});
    return true;
  }
  if (x.rank() == 3 && x.dim(2) == d) {
    out = x;
    return false;
  }
  throw ShapeError(std::string(who) + ": expected [B, n, " + std::to_string(d) + "], got " +
                   shape_str(x.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

Attention::Attention(ParameterSet& ps, const std::string& name, std::int64_t dim,
                     std::int64_t num_heads, Rng& rng, DType dtype)
    : heads_(num_heads) {
  if (num_heads <= 0 || dim % num_heads != 0)
    throw ConfigError("attention: embed dim " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(num_heads) + " heads");
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  wq_ = ps.add(name + ".wq", init_uniform(rng, {dim, dim}, bound, dtype));
  wk_ = ps.add(name + ".wk", init_uniform(rng, {dim, dim}, bound, dtype));
  wv_ = ps.add(name + ".wv", init_uniform(rng, {dim, dim}, bound, dtype));
  wo_ = ps.add(name + ".wo", init_uniform(rng, {dim, dim}, bound, dtype));
}

Tensor Attention::forward(const Tensor& input, const Tensor& bias) const {
  const std::int64_t d = dim();
  Tensor x;
  const bool lifted = as_batched(input, x, d, "attention");
  const std::int64_t B = x.dim(0), n = x.dim(1), hd = d / heads_;
  if (n < 1) throw ShapeError("attention: empty sequence");

  auto split_heads = [&](const Tensor& t) {
    Tensor r = reshape(t, {B, n, heads_, hd});
    return heads_ == 1 ? reshape(r, {B, 1, n, hd}) : permute(r, {0, 2, 1, 3});
  };
  // Scaling q before the product is cheaper than scaling the n x n scores.
  Tensor q = split_heads(mul_scalar(matmul(x, wq_), 1.0 / std::sqrt(static_cast<double>(hd))));
  Tensor k = split_heads(matmul(x, wk_));
  Tensor v = split_heads(matmul(x, wv_));
  Tensor scores = matmul(q, k, false, true);  // [B, H, n, n]
  Tensor weights = bias.defined() ? masked_softmax(scores, bias) : softmax(scores, -1);
  scores = Tensor();
  Tensor o = matmul(weights, v);  // [B, H, n, hd]
  Tensor merged = heads_ == 1 ? reshape(o, {B, n, d}) : reshape(permute(o, {0, 2, 1, 3}), {B, n, d});
  Tensor y = matmul(merged, wo_);
  return lifted ? reshape(y, {n, d}) : y;
}

std::uint64_t Attention::flop_count(std::int64_t n, std::int64_t batch) const {
  const auto d = static_cast<std::uint64_t>(dim());
  const auto N = static_cast<std::uint64_t>(n);
  const auto B = static_cast<std::uint64_t>(batch);
  // four d x d projections, then QK^T and AV summed over heads
  return B * (4 * 2 * N * d * d + 2 * 2 * N * N * d);
}

ShiftMask build_shift_mask(const Shape& grid, std::int64_t window, std::int64_t shift, DType dtype) {
  if (grid.empty()) throw ShapeError("build_shift_mask: empty grid");
  if (window <= 0) throw ConfigError("build_shift_mask: window must be positive");
  if (shift < 0 || shift >= window)
    throw ConfigError("build_shift_mask: shift " + std::to_string(shift) + " must be in [0, window " +
                      std::to_string(window) + ")");
  for (auto g : grid)
    if (g % window != 0)
      throw ShapeError("build_shift_mask: grid " + shape_str(grid) + " not divisible by window " +
                       std::to_string(window));
  const std::size_t rank = grid.size();
  ShiftMask m;
  m.grid = grid;
  m.window = window;
  m.shift = shift;
  const std::int64_t n = shape_numel(grid);
  m.labels.assign(static_cast<std::size_t>(n), 0);
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t rem = i, label = 0, scale = 1;
    for (std::size_t a = rank; a-- > 0;) {
      const std::int64_t p = rem % grid[a];
      rem /= grid[a];
      std::int64_t region = 0;
      if (shift > 0) region = p < grid[a] - window ? 0 : (p < grid[a] - shift ? 1 : 2);
      label += region * scale;
      scale *= 3;
    }
    m.labels[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(label);
  }
  m.num_regions = static_cast<std::int64_t>(std::set<std::int32_t>(m.labels.begin(), m.labels.end()).size());

  // windows in raster order over the window grid, tokens raster inside each
  std::vector<std::int64_t> wgrid(rank);
  std::int64_t windows = 1, per = 1;
  for (std::size_t a = 0; a < rank; ++a) {
    wgrid[a] = grid[a] / window;
    windows *= wgrid[a];
    per *= window;
  }
  const double masked = dtype == DType::f64 ? -INFINITY : -1e9;
  std::vector<double> bias(static_cast<std::size_t>(windows * per * per), 0.0);
  std::vector<std::int32_t> local(static_cast<std::size_t>(per));
  for (std::int64_t w = 0; w < windows; ++w) {
    for (std::int64_t t = 0; t < per; ++t) {
      std::int64_t wr = w, tr = t, flat = 0;
      std::vector<std::int64_t> coord(rank);
      for (std::size_t a = rank; a-- > 0;) {
        coord[a] = (wr % wgrid[a]) * window + tr % window;
        wr /= wgrid[a];
        tr /= window;
      }
      for (std::size_t a = 0; a < rank; ++a) flat = flat * grid[a] + coord[a];
      local[static_cast<std::size_t>(t)] = m.labels[static_cast<std::size_t>(flat)];
    }
    for (std::int64_t i = 0; i < per; ++i)
      for (std::int64_t j = 0; j < per; ++j)
        if (local[static_cast<std::size_t>(i)] != local[static_cast<std::size_t>(j)])
          bias[static_cast<std::size_t>((w * per + i) * per + j)] = masked;
  }
  {
    FiniteCheckScope off(false);
    m.bias = Tensor::from(bias, {windows, 1, per, per}, dtype);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Hyena
// ---------------------------------------------------------------------------

Hyena::Hyena(ParameterSet& ps, const std::string& name, std::int64_t dim, Rng& rng, DType dtype,
             const HyenaOptions& options)
    : options_(options) {
  if (options.order < 1) throw ConfigError("hyena: order must be >= 1");
  if (options.min_decay <= 0 || options.max_decay < options.min_decay)
    throw ConfigError("hyena: invalid decay range");
  const std::int64_t features = 1 + 2 * options.frequencies;
  in_proj_ = Linear(ps, name + ".in_proj", dim, (options.order + 1) * dim, rng, dtype);
  filter_in_ = Linear(ps, name + ".filter.in", features, options.filter_hidden, rng, dtype);
  filter_out_ = Linear(ps, name + ".filter.out", options.filter_hidden, options.order * dim, rng, dtype);
  out_proj_ = Linear(ps, name + ".out_proj", dim, dim, rng, dtype);
  // decay rates spread evenly over [min_decay, max_decay] across channels
  std::vector<double> la(static_cast<std::size_t>(options.order * dim));
  for (std::int64_t o = 0; o < options.order; ++o)
    for (std::int64_t c = 0; c < dim; ++c) {
      const double f = dim > 1 ? static_cast<double>(c) / static_cast<double>(dim - 1) : 0.0;
      la[static_cast<std::size_t>(o * dim + c)] =
          std::log(options.min_decay + f * (options.max_decay - options.min_decay));
    }
  log_alpha_ = ps.add(name + ".filter.log_alpha", Tensor::from(la, {options.order, dim}, dtype));
}

Tensor Hyena::positional_features(std::int64_t n) const {
  const std::int64_t nf = options_.frequencies;
  std::vector<double> f(static_cast<std::size_t>(n * (1 + 2 * nf)));
  for (std::int64_t t = 0; t < n; ++t) {
    const double pos = static_cast<double>(t) / static_cast<double>(n);
    double* row = f.data() + t * (1 + 2 * nf);
    row[0] = pos;
    for (std::int64_t k = 1; k <= nf; ++k) {
      row[2 * k - 1] = std::sin(2 * std::numbers::pi * static_cast<double>(k) * pos);
      row[2 * k] = std::cos(2 * std::numbers::pi * static_cast<double>(k) * pos);
    }
  }
  return Tensor::from(f, {n, 1 + 2 * nf}, log_alpha_.dtype());
}

Tensor Hyena::decay(std::int64_t n) const {
  const std::int64_t d = dim();
  std::vector<double> pos(static_cast<std::size_t>(n));
  for (std::int64_t t = 0; t < n; ++t) pos[static_cast<std::size_t>(t)] = static_cast<double>(t) / static_cast<double>(n);
  Tensor t = Tensor::from(pos, {n, 1}, log_alpha_.dtype());
  Tensor alpha = reshape(exp(log_alpha_), {options_.order, 1, d});
  return exp(neg(mul(alpha, t)));  // [order, n, d]
}

std::vector<Tensor> Hyena::filters(std::int64_t n) const {
  const std::int64_t d = dim();
  Tensor h = filter_out_(gelu(filter_in_(positional_features(n))));  // [n, order d]
  Tensor env = decay(n);
  std::vector<Tensor> out;
  for (std::int64_t o = 0; o < options_.order; ++o)
    out.push_back(mul(slice(h, 1, o * d, (o + 1) * d), reshape(slice(env, 0, o, o + 1), {n, d})));
  return out;
}

Tensor Hyena::forward(const Tensor& x) const {
  const std::int64_t n = x.rank() >= 2 ? x.dim(-2) : 0;
  return forward(x, filters(n));
}

Tensor Hyena::forward(const Tensor& input, const std::vector<Tensor>& filters) const {
  const std::int64_t d = dim();
  Tensor x;
  const bool lifted = as_batched(input, x, d, "hyena");
  const std::int64_t n = x.dim(1);
  if (n < 1) throw ShapeError("hyena: empty sequence");
  if (static_cast<std::int64_t>(filters.size()) != options_.order)
    throw ShapeError("hyena: expected " + std::to_string(options_.order) + " filters");
  for (const auto& h : filters)
    if (h.shape() != Shape{n, d})
      throw ShapeError("hyena: filter " + shape_str(h.shape()) + " does not match sequence length " +
                       std::to_string(n));
  Tensor proj = in_proj_(x);  // [B, n, (order + 1) d]
  Tensor z = slice(proj, 2, 0, d);
  for (std::int64_t i = 0; i < options_.order; ++i) {
    Tensor gate = slice(proj, 2, (i + 1) * d, (i + 2) * d);
    z = mul(gate, causal_conv(z, filters[static_cast<std::size_t>(i)]));
  }
  Tensor y = out_proj_(z);
  return lifted ? reshape(y, {n, d}) : y;
}

std::uint64_t Hyena::flop_count(std::int64_t n, std::int64_t batch) const {
  const auto d = static_cast<std::uint64_t>(dim());
  const auto N = static_cast<std::uint64_t>(n);
  const auto B = static_cast<std::uint64_t>(batch);
  const auto order = static_cast<std::uint64_t>(options_.order);
  const auto hidden = static_cast<std::uint64_t>(options_.filter_hidden);
  const auto features = static_cast<std::uint64_t>(1 + 2 * options_.frequencies);
  const std::uint64_t m = static_cast<std::uint64_t>(conv_fft_size(n));
  const std::uint64_t fft = fft_flops(static_cast<std::int64_t>(m));
  const std::uint64_t projections = B * (2 * N * d * (order + 1) * d + 2 * N * d * d);
  const std::uint64_t filter_net = 2 * N * features * hidden + 2 * N * hidden * order * d;
  const std::uint64_t convs = order * d * (fft + B * (2 * fft + 6 * m));
  return projections + filter_net + convs;
}

// ---------------------------------------------------------------------------
// MambaVision
// ---------------------------------------------------------------------------

MambaVision::MambaVision(ParameterSet& ps, const std::string& name, std::int64_t dim, Rng& rng,
                         DType dtype, const MambaOptions& options)
    : options_(options) {
  if (dim % 2 != 0) throw ConfigError("mamba_vision: embed dim " + std::to_string(dim) + " must be even");
  if (options.state < 1) throw ConfigError("mamba_vision: state must be >= 1");
  if (options.conv_kernel < 1 || options.conv_kernel % 2 == 0)
    throw ConfigError("mamba_vision: conv kernel must be odd");
  const std::int64_t half = dim / 2, s = options.state, k = options.conv_kernel;
  dt_rank_ = options.dt_rank > 0 ? options.dt_rank : (dim + 15) / 16;
  in_x_ = Linear(ps, name + ".in_x", dim, half, rng, dtype, false);
  in_z_ = Linear(ps, name + ".in_z", dim, half, rng, dtype, false);
  const double cb = 1.0 / std::sqrt(static_cast<double>(k));
  conv_x_w_ = ps.add(name + ".conv_x.weight", init_uniform(rng, {half, k}, cb, dtype));
  conv_x_b_ = ps.add(name + ".conv_x.bias", init_uniform(rng, {half}, cb, dtype));
  conv_z_w_ = ps.add(name + ".conv_z.weight", init_uniform(rng, {half, k}, cb, dtype));
  conv_z_b_ = ps.add(name + ".conv_z.bias", init_uniform(rng, {half}, cb, dtype));
  x_proj_ = Linear(ps, name + ".x_proj", half, dt_rank_ + 2 * s, rng, dtype, false);
  dt_proj_ = Linear(ps, name + ".dt_proj", dt_rank_, half, rng, dtype, true);
  // step sizes start log-uniform in [1e-3, 1e-1]; the bias holds softplus^-1
  std::vector<double> dtb(static_cast<std::size_t>(half));
  for (auto& v : dtb) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    v = dt + std::log(-std::expm1(-dt));
  }
  dt_proj_.b.assign(Tensor::from(dtb, {half}, dtype));
  std::vector<double> alog(static_cast<std::size_t>(half * s));
  for (std::int64_t c = 0; c < half; ++c)
    for (std::int64_t j = 0; j < s; ++j) alog[static_cast<std::size_t>(c * s + j)] = std::log(static_cast<double>(j + 1));
  A_log_ = ps.add(name + ".A_log", Tensor::from(alog, {half, s}, dtype));
  out_proj_ = Linear(ps, name + ".out_proj", dim, dim, rng, dtype, true);
}

Tensor MambaVision::A() const { return neg(exp(A_log_)); }

Tensor MambaVision::forward(const Tensor& input) const {
  const std::int64_t d = dim();
  Tensor x;
  const bool lifted = as_batched(input, x, d, "mamba_vision");
  const std::int64_t n = x.dim(1), s = options_.state;
  if (n < 1) throw ShapeError("mamba_vision: empty sequence");

  Tensor xb = silu(depthwise_conv1d(in_x_(x), conv_x_w_, conv_x_b_));
  Tensor zb = silu(depthwise_conv1d(in_z_(x), conv_z_w_, conv_z_b_));
  Tensor dbc = x_proj_(xb);
  Tensor delta = softplus(dt_proj_(slice(dbc, 2, 0, dt_rank_)));
  Tensor Bm = slice(dbc, 2, dt_rank_, dt_rank_ + s);
  Tensor Cm = slice(dbc, 2, dt_rank_ + s, dt_rank_ + 2 * s);
  Tensor y1 = selective_scan(xb, delta, A(), Bm, Cm, options_.scan_chunk);
  Tensor y = out_proj_(concat({y1, zb}, 2));
  return lifted ? reshape(y, {n, d}) : y;
}

std::uint64_t MambaVision::flop_count(std::int64_t n, std::int64_t batch) const {
  const auto d = static_cast<std::uint64_t>(dim());
  const auto h = d / 2;
  const auto N = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(batch);
  const auto s = static_cast<std::uint64_t>(options_.state);
  const auto r = static_cast<std::uint64_t>(dt_rank_);
  const auto k = static_cast<std::uint64_t>(options_.conv_kernel);
  return N * (2 * 2 * d * h        // in projections
              + 2 * 2 * h * k      // depthwise convs
              + 2 * h * (r + 2 * s)  // x_proj
              + 2 * r * h          // dt_proj
              + 4 * h * s          // scan
              + 2 * d * d);        // out projection
}

// ---------------------------------------------------------------------------

std::unique_ptr<Mixer> make_mixer(MixerKind kind, ParameterSet& ps, const std::string& name,
                                  std::int64_t dim, Rng& rng, DType dtype, const MixerOptions& options) {
  switch (kind) {
    case MixerKind::attention:
      return std::make_unique<Attention>(ps, name, dim, options.num_heads, rng, dtype);
    case MixerKind::hyena:
      return std::make_unique<Hyena>(ps, name, dim, rng, dtype, options.hyena);
    case MixerKind::mamba_vision:
      return std::make_unique<MambaVision>(ps, name, dim, rng, dtype, options.mamba);
  }
  throw ConfigError("unknown mixer kind");
}

std::uint64_t flop_count(MixerKind kind, std::int64_t n, std::int64_t d, const MixerOptions& options) {
  ParameterSet ps;
  Rng rng(0);
  return make_mixer(kind, ps, "m", d, rng, DType::f32, options)->flop_count(n);
}

}  // namespace mixerbench
