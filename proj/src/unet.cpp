// Copyright 2026 The fastdenoise Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fastdenoise/unet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "fastdenoise/error.hpp"
#include "fastdenoise/rng.hpp"
#include "fastdenoise/tns.hpp"

namespace fastdenoise {
namespace {

using Frames = std::vector<DenseArray>;  // N frames of [C, h, w]

constexpr int kTimeEncodingDim = 64;
// Elementwise operations per element of normalize + silu.
constexpr std::uint64_t kNormCost = 6;

bool contains(const std::vector<std::string>& v, std::string_view s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

bool is_layer(std::string_view s) {
  return std::find(kLayerIds.begin(), kLayerIds.end(), s) != kLayerIds.end();
}

// (input channels, output channels) of a layer's residual sublayer.
std::pair<std::size_t, std::size_t> layer_io(const UNetConfig& cfg, std::string_view layer) {
  const auto c = [&](int level) { return static_cast<std::size_t>(cfg.channels[level]); };
  if (layer == "D0") return {c(0), c(0)};
  if (layer == "D1") return {c(1), c(1)};
  if (layer == "D2") return {c(2), c(2)};
  if (layer == "D3" || layer == "M") return {c(3), c(3)};
  if (layer == "U0") return {c(3) + c(3), c(3)};
  if (layer == "U1") return {c(3) + c(2), c(2)};
  if (layer == "U2") return {c(2) + c(1), c(1)};
  if (layer == "U30") return {c(1) + c(0), c(0)};
  if (layer == "U31") return {c(0), c(0)};
  if (layer == "U32") return {c(0) + c(0), c(0)};
  throw ConfigError("unknown layer id '" + std::string(layer) + "'");
}

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in;
};

// Parameters in a fixed generation order; the Rng stream is consumed in
// exactly this order.
std::vector<ParamSpec> parameter_specs(const UNetConfig& cfg) {
  const auto E = static_cast<std::size_t>(cfg.time_embed_dim);
  const auto lat = static_cast<std::size_t>(cfg.latent_channels);
  const auto d = static_cast<std::size_t>(cfg.head_dim);
  const auto da = static_cast<std::size_t>(cfg.audio_dim);
  const auto c0 = static_cast<std::size_t>(cfg.channels[0]);
  std::vector<ParamSpec> specs;
  const auto add = [&](std::string name, Shape shape, std::size_t fan_in) {
    specs.push_back({std::move(name), std::move(shape), fan_in});
  };
  add("time.w", Shape{E, kTimeEncodingDim}, kTimeEncodingDim);
  add("time.b", Shape{E}, kTimeEncodingDim);
  add("conv_in.w", Shape{c0, lat, 3, 3}, lat * 9);
  add("conv_in.b", Shape{c0}, lat * 9);
  for (auto id : kLayerIds) {
    const std::string l(id);
    const auto [cin, cout] = layer_io(cfg, id);
    add(l + ".conv1.w", Shape{cout, cin, 3, 3}, cin * 9);
    add(l + ".conv1.b", Shape{cout}, cin * 9);
    add(l + ".temb.w", Shape{cout, E}, E);
    add(l + ".temb.b", Shape{cout}, E);
    add(l + ".conv2.w", Shape{cout, cout, 3, 3}, cout * 9);
    add(l + ".conv2.b", Shape{cout}, cout * 9);
    if (cin != cout) add(l + ".skip.w", Shape{cout, cin}, cin);
    if (id == "D0" || id == "D1" || id == "D2") {
      const int lv = layer_level(id);
      const auto next = static_cast<std::size_t>(cfg.channels[lv + 1]);
      add(l + ".down.w", Shape{next, cout, 3, 3}, cout * 9);
      add(l + ".down.b", Shape{next}, cout * 9);
    }
    if (cfg.has_attention(id)) {
      const auto C = static_cast<std::size_t>(cfg.channels[layer_level(id)]);
      for (const char* site : {"ref", "temporal"}) {
        for (const char* p : {"q", "k", "v"}) add(l + "." + site + "." + p, Shape{C, d}, C);
        add(l + "." + site + ".o", Shape{d, C}, d);
      }
      add(l + ".audio.q", Shape{C, d}, C);
      add(l + ".audio.k", Shape{da, d}, da);
      add(l + ".audio.v", Shape{da, d}, da);
      add(l + ".audio.o", Shape{d, C}, d);
    }
  }
  add("out.w", Shape{lat, c0, 3, 3}, c0 * 9);
  add("out.b", Shape{lat}, c0 * 9);
  add("out.residual", Shape{1}, 0);
  return specs;
}

Frames latent_to_frames(const DenseArray& z) {
  const std::size_t b = z.dim(0), c = z.dim(1), f = z.dim(2), h = z.dim(3), w = z.dim(4);
  const std::size_t hw = h * w;
  Frames frames;
  frames.reserve(b * f);
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t fi = 0; fi < f; ++fi) {
      DenseArray fr(Shape{c, h, w});
      for (std::size_t ch = 0; ch < c; ++ch)
        std::copy_n(z.data() + ((bi * c + ch) * f + fi) * hw, hw, fr.data() + ch * hw);
      frames.push_back(std::move(fr));
    }
  }
  return frames;
}

DenseArray frames_to_latent(const Frames& frames, const Shape& latent_shape) {
  const std::size_t b = latent_shape[0], c = latent_shape[1], f = latent_shape[2];
  const std::size_t hw = latent_shape[3] * latent_shape[4];
  DenseArray z(latent_shape);
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t fi = 0; fi < f; ++fi)
      for (std::size_t ch = 0; ch < c; ++ch)
        std::copy_n(frames[bi * f + fi].data() + ch * hw, hw, z.data() + ((bi * c + ch) * f + fi) * hw);
  return z;
}

DenseArray stack(const Frames& frames) {
  std::vector<std::size_t> dims{frames.size()};
  for (auto d : frames.front().shape().dims()) dims.push_back(d);
  std::vector<float> data;
  data.reserve(frames.size() * frames.front().size());
  for (const auto& f : frames) data.insert(data.end(), f.values().begin(), f.values().end());
  return DenseArray(Shape(std::move(dims)), std::move(data));
}

Frames unstack(const DenseArray& a) {
  std::vector<std::size_t> dims(a.shape().dims().begin() + 1, a.shape().dims().end());
  const Shape inner(dims);
  const std::size_t per = inner.numel();
  Frames out;
  for (std::size_t n = 0; n < a.dim(0); ++n) {
    const auto first = a.values().begin() + static_cast<std::ptrdiff_t>(n * per);
    out.emplace_back(inner, std::vector<float>(first, first + static_cast<std::ptrdiff_t>(per)));
  }
  return out;
}

// Rows [first, first + count) of the leading axis.
DenseArray leading_slice(const DenseArray& a, std::size_t first, std::size_t count) {
  std::vector<std::size_t> dims = a.shape().dims();
  const std::size_t per = a.size() / dims[0];
  dims[0] = count;
  const auto begin = a.values().begin() + static_cast<std::ptrdiff_t>(first * per);
  return DenseArray(Shape(std::move(dims)),
                    std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(count * per)));
}

DenseArray drop_leading(const DenseArray& a) {
  std::vector<std::size_t> dims(a.shape().dims().begin() + 1, a.shape().dims().end());
  return a.reshaped(Shape(std::move(dims)));
}

}  // namespace

int layer_level(std::string_view layer) {
  if (layer == "D0" || layer == "U30" || layer == "U31" || layer == "U32") return 0;
  if (layer == "D1" || layer == "U2") return 1;
  if (layer == "D2" || layer == "U1") return 2;
  if (layer == "D3" || layer == "M" || layer == "U0") return 3;
  throw ConfigError("unknown layer id '" + std::string(layer) + "'");
}

// ---- UNetConfig -----------------------------------------------------------------

void UNetConfig::validate() const {
  const auto positive = [](int v, const char* what) {
    if (v < 1) throw ConfigError(std::string("unet: ") + what + " must be >= 1");
  };
  positive(latent_channels, "latent_channels");
  positive(frames, "frames");
  positive(batch, "batch");
  positive(audio_tokens, "audio_tokens");
  positive(audio_dim, "audio_dim");
  positive(head_dim, "head_dim");
  positive(time_embed_dim, "time_embed_dim");
  for (int c : channels) positive(c, "channels");
  if (height < 8 || width < 8 || height % 8 != 0 || width % 8 != 0) {
    throw ConfigError("unet: height and width must be positive multiples of 8");
  }
  for (const auto& l : attention_layers)
    if (!is_layer(l)) throw ConfigError("unet: unknown attention layer '" + l + "'");
  for (const auto& l : removal_set) {
    if (!is_layer(l)) throw ConfigError("unet: unknown removal layer '" + l + "'");
    if (!contains(attention_layers, l)) {
      throw ConfigError("unet: removal layer '" + l + "' has no reference attention");
    }
  }
  if (!contains(attention_layers, "U32")) {
    throw ConfigError("unet: U32 must carry attention");
  }
}

Shape UNetConfig::latent_shape() const {
  return Shape{static_cast<std::size_t>(batch), static_cast<std::size_t>(latent_channels),
               static_cast<std::size_t>(frames), static_cast<std::size_t>(height),
               static_cast<std::size_t>(width)};
}

bool UNetConfig::has_attention(std::string_view layer) const {
  return contains(attention_layers, layer);
}

bool UNetConfig::removes_reference(std::string_view layer) const {
  return contains(removal_set, layer);
}

// ---- weights ----------------------------------------------------------------------

const DenseArray& ModelWeights::at(const std::string& name) const {
  const auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("missing weight '" + name + "'");
  return it->second;
}

void ModelWeights::set(const std::string& name, DenseArray value) {
  params_[name] = std::move(value);
}

std::uint64_t ModelWeights::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, arr] : params_) {
    for (char c : name) {
      h ^= static_cast<std::uint8_t>(c);
      h *= 0x100000001b3ULL;
    }
    h ^= fastdenoise::checksum(arr);
    h *= 0x100000001b3ULL;
  }
  return h;
}

ModelWeights init_weights(const UNetConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.weight_seed);
  ModelWeights w;
  for (auto& spec : parameter_specs(cfg)) {
    if (spec.fan_in == 0) {
      w.set(spec.name, DenseArray(spec.shape, 1.0f));
      continue;
    }
    const float scale = 1.0f / std::sqrt(static_cast<float>(spec.fan_in));
    w.set(spec.name, rng.normal_array(spec.shape, scale));
  }
  return w;
}

ModelWeights with_constant_output(ModelWeights weights, float value) {
  const auto& ow = weights.at("out.w");
  const auto& ob = weights.at("out.b");
  weights.set("out.w", DenseArray(ow.shape(), 0.0f));
  weights.set("out.b", DenseArray(ob.shape(), value));
  weights.set("out.residual", DenseArray(Shape{1}, 0.0f));
  return weights;
}

void save_weights(const std::filesystem::path& dir, const ModelWeights& weights) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw ConfigError("cannot write manifest in " + dir.string());
  for (const auto& [name, arr] : weights.params()) {
    const std::string file = name + ".tns";
    write_tns(dir / file, arr);
    manifest << name << ' ' << file << '\n';
  }
}

ModelWeights load_weights(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw ConfigError("weights manifest not found in " + dir.string());
  ModelWeights w;
  std::string name, file;
  while (manifest >> name >> file) w.set(name, read_tns(dir / file));
  return w;
}

// ---- conditioning ---------------------------------------------------------------

std::vector<DenseArray> make_reference_features(const UNetConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5245'4600));
  std::vector<DenseArray> ref;
  for (int level = 0; level < 4; ++level) {
    ref.push_back(rng.normal_array(Shape{static_cast<std::size_t>(cfg.channels[level]),
                                         cfg.level_height(level), cfg.level_width(level)}));
  }
  return ref;
}

Conditioning make_conditioning(const UNetConfig& cfg, std::uint64_t seed,
                               std::shared_ptr<const ForegroundMask> mask) {
  Conditioning c;
  c.reference = make_reference_features(cfg, seed);
  Rng rng(derive_seed(seed, 0x4155'4400));
  c.audio = rng.normal_array(Shape{static_cast<std::size_t>(cfg.frames),
                                   static_cast<std::size_t>(cfg.audio_tokens),
                                   static_cast<std::size_t>(cfg.audio_dim)});
  c.mask = mask ? std::move(mask)
                : std::make_shared<const ForegroundMask>(ForegroundMask::filled(
                      static_cast<std::size_t>(cfg.height), static_cast<std::size_t>(cfg.width), true));
  c.valid_frames = cfg.frames;
  return c;
}

std::string module_name(std::string_view layer, AttentionSite site) {
  return std::string(layer) + "." + std::string(to_string(site));
}

// ---- attention modules ---------------------------------------------------------------

AttentionOutput reference_attention(const DenseArray& x, const DenseArray& ref, bool removal,
                                    const AttentionWeights& w, const DfaContext* dfa,
                                    FlopLedger* ledger, std::string_view layer,
                                    bool want_probabilities) {
  if (!removal && !(x.shape() == ref.shape())) {
    throw ShapeError("reference_attention: tokens " + x.shape().to_string() + " vs reference " +
                     ref.shape().to_string());
  }
  const std::size_t L = x.dim(0), C = x.dim(1), d = w.q.dim(1);
  auto rec = [&](std::initializer_list<std::uint64_t> dims) {
    if (ledger) ledger->record(OpTag::kMatmul, layer, 0, dims);
  };
  const DenseArray q = matmul(x, w.q);
  const DenseArray k = matmul(x, w.k);
  const DenseArray v = matmul(x, w.v);
  for (int i = 0; i < 3; ++i) rec({L, C, d});
  DenseArray rk, rv;
  if (!removal) {
    rk = matmul(ref, w.k);
    rv = matmul(ref, w.v);
    for (int i = 0; i < 2; ++i) rec({L, C, d});
  }
  AttentionOutput out;
  if (dfa) {
    out.attention = dfa_attention(q, k, v, *dfa, AttentionSite::kReference,
                                  removal ? nullptr : &rk, removal ? nullptr : &rv, ledger, layer);
  } else {
    const DenseArray keys = removal ? k : concat_rows(k, rk);
    const DenseArray values = removal ? v : concat_rows(v, rv);
    DenseArray probs = attention_probabilities(q, keys);
    out.attention = matmul(probs, values);
    record_attention_flops(ledger, layer, L, keys.dim(0), d);
    if (want_probabilities) out.probabilities = std::move(probs);
  }
  out.output = matmul(out.attention, w.o);
  rec({L, d, w.o.dim(1)});
  return out;
}

AttentionOutput audio_attention(const DenseArray& x, const DenseArray& audio_frame,
                                const AttentionWeights& w, const DfaContext* dfa,
                                FlopLedger* ledger, std::string_view layer) {
  if (audio_frame.rank() != 2 || audio_frame.dim(0) == 0) {
    throw ConfigError("audio_attention: no audio tokens for this frame");
  }
  const std::size_t L = x.dim(0), C = x.dim(1), d = w.q.dim(1), La = audio_frame.dim(0);
  const DenseArray q = matmul(x, w.q);
  const DenseArray k = matmul(audio_frame, w.k);
  const DenseArray v = matmul(audio_frame, w.v);
  if (ledger) {
    ledger->record(OpTag::kMatmul, layer, 0, {L, C, d});
    ledger->record(OpTag::kMatmul, layer, 0, {La, audio_frame.dim(1), d});
    ledger->record(OpTag::kMatmul, layer, 0, {La, audio_frame.dim(1), d});
  }
  AttentionOutput out;
  if (dfa) {
    out.attention = dfa_attention(q, k, v, *dfa, AttentionSite::kAudio, nullptr, nullptr, ledger, layer);
  } else {
    out.attention = scaled_dot_attention(q, k, v);
    record_attention_flops(ledger, layer, L, La, d);
  }
  out.output = matmul(out.attention, w.o);
  if (ledger) ledger->record(OpTag::kMatmul, layer, 0, {L, d, w.o.dim(1)});
  return out;
}

AttentionOutput temporal_attention(const DenseArray& x, const AttentionWeights& w,
                                   const DfaContext* dfa, FlopLedger* ledger,
                                   std::string_view layer) {
  if (x.rank() != 3) throw ShapeError("temporal_attention: expected [f x L x C], got " + x.shape().to_string());
  const std::size_t f = x.dim(0), L = x.dim(1), C = x.dim(2), d = w.q.dim(1);
  const DenseArray flat = x.reshaped(Shape{f * L, C});
  const DenseArray q = matmul(flat, w.q).reshaped(Shape{f, L, d});
  const DenseArray k = matmul(flat, w.k).reshaped(Shape{f, L, d});
  const DenseArray v = matmul(flat, w.v).reshaped(Shape{f, L, d});
  if (ledger)
    for (int i = 0; i < 3; ++i) ledger->record(OpTag::kMatmul, layer, 0, {f * L, C, d});
  AttentionOutput out;
  if (dfa) {
    out.attention = dfa_attention(q, k, v, *dfa, AttentionSite::kTemporal, nullptr, nullptr, ledger, layer);
  } else {
    std::vector<std::size_t> all(L);
    for (std::size_t i = 0; i < L; ++i) all[i] = i;
    out.attention = frame_attention(q, k, v, all, ledger, layer);
  }
  out.output = matmul(out.attention.reshaped(Shape{f * L, d}), w.o).reshaped(Shape{f, L, w.o.dim(1)});
  if (ledger) ledger->record(OpTag::kMatmul, layer, 0, {f * L, d, w.o.dim(1)});
  return out;
}

DenseArray to_temporal_tokens(const DenseArray& latent) {
  if (latent.rank() != 5) throw ShapeError("to_temporal_tokens: expected (b,c,f,h,w)");
  const std::size_t b = latent.dim(0), c = latent.dim(1), f = latent.dim(2);
  const std::size_t hw = latent.dim(3) * latent.dim(4);
  DenseArray out(Shape{b * hw, f, c});
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t fi = 0; fi < f; ++fi)
        for (std::size_t p = 0; p < hw; ++p)
          out[((bi * hw + p) * f + fi) * c + ch] = latent[((bi * c + ch) * f + fi) * hw + p];
  return out;
}

DenseArray from_temporal_tokens(const DenseArray& tokens, const Shape& latent_shape) {
  const std::size_t b = latent_shape[0], c = latent_shape[1], f = latent_shape[2];
  const std::size_t hw = latent_shape[3] * latent_shape[4];
  if (!(tokens.shape() == Shape{b * hw, f, c})) {
    throw ShapeError("from_temporal_tokens: " + tokens.shape().to_string() + " does not fit " +
                     latent_shape.to_string());
  }
  DenseArray out(latent_shape);
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t fi = 0; fi < f; ++fi)
        for (std::size_t p = 0; p < hw; ++p)
          out[((bi * c + ch) * f + fi) * hw + p] = tokens[((bi * hw + p) * f + fi) * c + ch];
  return out;
}

DenseArray timestep_encoding(int t) {
  constexpr int half = kTimeEncodingDim / 2;
  DenseArray enc(Shape{kTimeEncodingDim});
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    enc[i] = static_cast<float>(std::sin(t * freq));
    enc[half + i] = static_cast<float>(std::cos(t * freq));
  }
  return enc;
}

// ---- forward pass -----------------------------------------------------------------

class ToyUNet::Pass {
 public:
  Pass(const ToyUNet& net, int t, const Conditioning& cond, const ForwardOptions& opts)
      : cfg_(net.cfg_), w_(net.weights_), t_(t), cond_(cond), opts_(opts) {
    if (t < 0 || static_cast<std::size_t>(t) >= net.prior_gain_.size()) {
      throw ConfigError("timestep " + std::to_string(t) + " outside the model schedule 0.." +
                        std::to_string(net.prior_gain_.size() - 1));
    }
    prior_gain_ = net.prior_gain_[static_cast<std::size_t>(t)];
    check_conditioning();
    const DenseArray enc = timestep_encoding(t).reshaped(Shape{kTimeEncodingDim, 1});
    DenseArray h = matmul(w_.at("time.w"), enc);
    rec(OpTag::kMatmul, "time", {static_cast<std::uint64_t>(cfg_.time_embed_dim), kTimeEncodingDim, 1});
    temb_ = silu(add(h.reshaped(Shape{h.size()}), w_.at("time.b")));
    rec(OpTag::kElementwise, "time", {2 * temb_.size()});
  }

  Frames conv(const Frames& x, const std::string& prefix, std::string_view layer, int stride = 1) {
    const auto& k = w_.at(prefix + ".w");
    const auto& b = w_.at(prefix + ".b");
    Frames out;
    out.reserve(x.size());
    for (const auto& fr : x) out.push_back(add_channel_bias(conv2d(fr, k, stride), b));
    const auto& s = out.front().shape();
    rec(OpTag::kConv2d, layer, {s[0], k.dim(1), s[1] * x.size(), s[2]});
    rec(OpTag::kElementwise, layer, {s.numel() * x.size()});
    return out;
  }

  Frames residual(std::string_view layer, const Frames& x) {
    const std::string l(layer);
    const auto [cin, cout] = layer_io(cfg_, layer);
    const DenseArray tproj =
        add(matmul(w_.at(l + ".temb.w"), temb_.reshaped(Shape{temb_.size(), 1})).reshaped(Shape{cout}),
            w_.at(l + ".temb.b"));
    rec(OpTag::kMatmul, layer, {cout, temb_.size(), 1});
    Frames h = conv(activate(x, layer), l + ".conv1", layer);
    for (auto& fr : h) fr = add_channel_bias(fr, tproj);
    rec(OpTag::kElementwise, layer, {h.size() * h.front().size()});
    h = conv(activate(h, layer), l + ".conv2", layer);
    const bool project = w_.contains(l + ".skip.w");
    for (std::size_t i = 0; i < h.size(); ++i) {
      const auto& s = x[i].shape();
      const DenseArray skip =
          project ? matmul(w_.at(l + ".skip.w"), x[i].reshaped(Shape{cin, s[1] * s[2]}))
                        .reshaped(h[i].shape())
                  : x[i];
      h[i] = add(h[i], skip);
      if (project) rec(OpTag::kMatmul, layer, {cout, cin, s[1] * s[2]});
    }
    rec(OpTag::kElementwise, layer, {h.size() * h.front().size()});
    return h;
  }

  // silu(normalize(x)) per frame.
  Frames activate(const Frames& x, std::string_view layer) {
    Frames out;
    out.reserve(x.size());
    for (const auto& fr : x) out.push_back(silu(normalize(fr)));
    rec(OpTag::kElementwise, layer, {kNormCost * x.size() * x.front().size()});
    return out;
  }

  void attention(std::string_view layer, Frames& h) {
    if (!cfg_.has_attention(layer)) return;
    const std::string l(layer);
    const int level = layer_level(layer);
    const std::size_t C = h.front().dim(0), hh = h.front().dim(1), ww = h.front().dim(2);
    const std::size_t L = hh * ww, N = h.size(), f = static_cast<std::size_t>(cfg_.frames);
    const bool removal = opts_.reference_removal && cfg_.removes_reference(layer);
    const bool capture = std::find(opts_.capture_sites.begin(), opts_.capture_sites.end(), l) !=
                         opts_.capture_sites.end();
    const auto wr = site_weights(l + ".ref");
    const auto wa = site_weights(l + ".audio");
    const auto wt = site_weights(l + ".temporal");
    const DenseArray ref_tokens = normalize_rows(transpose(cond_.reference[level].reshaped(Shape{C, L})));
    const DfaContext* ref_ctx = context(module_name(layer, AttentionSite::kReference));
    const DfaContext* audio_ctx = context(module_name(layer, AttentionSite::kAudio));
    const DfaContext* temp_ctx = context(module_name(layer, AttentionSite::kTemporal));

    std::vector<DenseArray> tokens(N);
    Frames cap_ref, cap_audio;
    for (std::size_t n = 0; n < N; ++n) {
      DenseArray x = transpose(h[n].reshaped(Shape{C, L}));
      DfaContext frame_ctx;
      if (ref_ctx) frame_ctx = slice_context(*ref_ctx, n, 1);
      auto r = reference_attention(normalize_rows(x), ref_tokens, removal, wr, ref_ctx ? &frame_ctx : nullptr,
                                   &trace_.flops, layer, capture && opts_.capture_reference_weights && n == 0);
      x = add(x, r.output);
      if (audio_ctx) frame_ctx = slice_context(*audio_ctx, n, 1);
      const DenseArray audio_frame = drop_leading(leading_slice(cond_.audio, n % f, 1));
      auto a = audio_attention(normalize_rows(x), audio_frame, wa, audio_ctx ? &frame_ctx : nullptr, &trace_.flops, layer);
      x = add(x, a.output);
      rec(OpTag::kElementwise, layer, {(2 * kNormCost + 2) * L * C});
      if (capture) {
        cap_ref.push_back(std::move(r.attention));
        cap_audio.push_back(std::move(a.attention));
        if (!r.probabilities.empty()) trace_.captured[l + ".reference.weights"] = std::move(r.probabilities);
      }
      tokens[n] = std::move(x);
    }

    Frames cap_temp;
    for (std::size_t first = 0; first < N; first += f) {
      std::vector<float> data;
      data.reserve(f * L * C);
      for (std::size_t i = 0; i < f; ++i)
        data.insert(data.end(), tokens[first + i].values().begin(), tokens[first + i].values().end());
      const DenseArray X(Shape{f, L, C}, std::move(data));
      DfaContext clip_ctx;
      if (temp_ctx) clip_ctx = slice_context(*temp_ctx, first, f);
      const DenseArray Xn = normalize_rows(X.reshaped(Shape{f * L, C})).reshaped(X.shape());
      auto r = temporal_attention(Xn, wt, temp_ctx ? &clip_ctx : nullptr, &trace_.flops, layer);
      const DenseArray Y = add(X, r.output);
      rec(OpTag::kElementwise, layer, {(kNormCost + 1) * f * L * C});
      for (std::size_t i = 0; i < f; ++i) {
        tokens[first + i] = drop_leading(leading_slice(Y, i, 1));
        if (capture) cap_temp.push_back(drop_leading(leading_slice(r.attention, i, 1)));
      }
    }
    for (std::size_t n = 0; n < N; ++n) h[n] = transpose(tokens[n]).reshaped(Shape{C, hh, ww});

    if (capture) {
      trace_.captured[module_name(layer, AttentionSite::kReference)] = stack(cap_ref);
      trace_.captured[module_name(layer, AttentionSite::kAudio)] = stack(cap_audio);
      trace_.captured[module_name(layer, AttentionSite::kTemporal)] = stack(cap_temp);
    }
  }

  Frames block(std::string_view layer, const Frames& x) {
    Frames h = residual(layer, x);
    attention(layer, h);
    return h;
  }

  Frames upsample(const Frames& x, std::string_view layer) {
    Frames out;
    for (const auto& fr : x) out.push_back(upsample_nearest(fr));
    rec(OpTag::kElementwise, layer, {out.size() * out.front().size()});
    return out;
  }

  static Frames concat(const Frames& a, const Frames& b) {
    Frames out;
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(concat_channels(a[i], b[i]));
    return out;
  }

  // U32 on (f_U31, conv(z)), the output convolution, and the gated z residual.
  DenseArray tail(const Frames& f_u31, const Frames& skip, const DenseArray& z) {
    Frames h = block("U32", concat(f_u31, skip));
    const DenseArray head = frames_to_latent(conv(activate(h, "out"), "out", "out"), z.shape());
    rec(OpTag::kElementwise, "out", {2 * z.size()});
    return axpby(1.0f, head, w_.at("out.residual")[0] * prior_gain_, z);
  }

  ForwardTrace& trace() { return trace_; }

 private:
  void rec(OpTag tag, std::string_view layer, std::initializer_list<std::uint64_t> dims) {
    trace_.flops.record(tag, layer, t_, dims);
  }

  AttentionWeights site_weights(const std::string& prefix) const {
    return {w_.at(prefix + ".q"), w_.at(prefix + ".k"), w_.at(prefix + ".v"), w_.at(prefix + ".o")};
  }

  const DfaContext* context(const std::string& module) const {
    if (!opts_.dfa) return nullptr;
    const auto it = opts_.dfa->find(module);
    return it == opts_.dfa->end() ? nullptr : &it->second;
  }

  // Frames [first, first + count) of a module context; count == 1 drops the
  // frame axis.
  static DfaContext slice_context(const DfaContext& ctx, std::size_t first, std::size_t count) {
    DfaContext out;
    out.mask = ctx.mask;
    if (ctx.bg_cache.empty()) return out;
    if (ctx.bg_cache.rank() != 3 || first + count > ctx.bg_cache.dim(0)) {
      throw ShapeError("dfa cache " + ctx.bg_cache.shape().to_string() + " does not cover frames " +
                       std::to_string(first) + ".." + std::to_string(first + count - 1));
    }
    out.bg_cache = leading_slice(ctx.bg_cache, first, count);
    if (count == 1) out.bg_cache = drop_leading(out.bg_cache);
    return out;
  }

  void check_conditioning() const {
    if (cond_.reference.size() != 4) throw ShapeError("conditioning: need 4 reference feature levels");
    for (int level = 0; level < 4; ++level) {
      const Shape want{static_cast<std::size_t>(cfg_.channels[level]), cfg_.level_height(level),
                       cfg_.level_width(level)};
      if (!(cond_.reference[level].shape() == want)) {
        throw ShapeError("conditioning: reference level " + std::to_string(level) + " is " +
                         cond_.reference[level].shape().to_string() + ", expected " + want.to_string());
      }
    }
    const Shape audio{static_cast<std::size_t>(cfg_.frames), static_cast<std::size_t>(cfg_.audio_tokens),
                      static_cast<std::size_t>(cfg_.audio_dim)};
    if (!(cond_.audio.shape() == audio)) {
      throw ShapeError("conditioning: audio is " + cond_.audio.shape().to_string() + ", expected " +
                       audio.to_string());
    }
  }

  const UNetConfig& cfg_;
  const ModelWeights& w_;
  int t_;
  const Conditioning& cond_;
  const ForwardOptions& opts_;
  DenseArray temb_;
  float prior_gain_ = 0.0f;
  ForwardTrace trace_;
};

ToyUNet::ToyUNet(UNetConfig cfg, ModelWeights weights, const NoiseSchedule& schedule)
    : cfg_(std::move(cfg)), weights_(std::move(weights)) {
  cfg_.validate();
  prior_gain_.resize(static_cast<std::size_t>(schedule.T()) + 1);
  for (int t = 0; t <= schedule.T(); ++t)
    prior_gain_[static_cast<std::size_t>(t)] = static_cast<float>(std::sqrt(1.0 - schedule.alpha_bar(t)));
  for (const auto& spec : parameter_specs(cfg_)) {
    if (!(weights_.at(spec.name).shape() == spec.shape)) {
      throw ConfigError("weight '" + spec.name + "' has shape " +
                        weights_.at(spec.name).shape().to_string() + ", expected " +
                        spec.shape.to_string());
    }
  }
}

Shape ToyUNet::f_u31_shape() const {
  return Shape{static_cast<std::size_t>(cfg_.batch * cfg_.frames),
               static_cast<std::size_t>(cfg_.channels[0]), static_cast<std::size_t>(cfg_.height),
               static_cast<std::size_t>(cfg_.width)};
}

ForwardTrace ToyUNet::forward(const DenseArray& z, int t, const Conditioning& cond,
                              const ForwardOptions& opts) const {
  const Shape latent = cfg_.latent_shape();
  if (!(z.shape() == latent)) {
    throw ShapeError("unet_forward: latent " + z.shape().to_string() + ", expected " + latent.to_string());
  }
  Pass pass(*this, t, cond, opts);
  const Frames s0 = pass.conv(latent_to_frames(z), "conv_in", "conv_in");
  Frames h = pass.block("D0", s0);
  const Frames s1 = h;
  h = pass.block("D1", pass.conv(h, "D0.down", "D0", 2));
  const Frames s2 = h;
  h = pass.block("D2", pass.conv(h, "D1.down", "D1", 2));
  const Frames s3 = h;
  h = pass.block("D3", pass.conv(h, "D2.down", "D2", 2));
  const Frames s4 = h;
  h = pass.block("M", h);
  h = pass.upsample(pass.block("U0", Pass::concat(h, s4)), "U0");
  h = pass.upsample(pass.block("U1", Pass::concat(h, s3)), "U1");
  h = pass.upsample(pass.block("U2", Pass::concat(h, s2)), "U2");
  h = pass.block("U30", Pass::concat(h, s1));
  h = pass.block("U31", h);
  pass.trace().captured["f_U31"] = stack(h);
  pass.trace().eps_pred = pass.tail(h, s0, z);
  pass.trace().flops.set_timestep(t);
  return std::move(pass.trace());
}

ForwardTrace ToyUNet::subnet_forward(const DenseArray& f_u31, const DenseArray& z, int t,
                                     const Conditioning& cond, const ForwardOptions& opts) const {
  const Shape latent = cfg_.latent_shape();
  if (!(z.shape() == latent)) {
    throw ShapeError("subnet_forward: latent " + z.shape().to_string() + ", expected " + latent.to_string());
  }
  if (!(f_u31.shape() == f_u31_shape())) {
    throw ShapeError("subnet_forward: cached f_U31 " + f_u31.shape().to_string() + ", expected " +
                     f_u31_shape().to_string());
  }
  Pass pass(*this, t, cond, opts);
  const Frames s0 = pass.conv(latent_to_frames(z), "conv_in", "conv_in");
  pass.trace().eps_pred = pass.tail(unstack(f_u31), s0, z);
  pass.trace().flops.set_timestep(t);
  return std::move(pass.trace());
}

}  // namespace fastdenoise
