#ifndef ROLLBOX_NN_LAYERS_HPP_
#define ROLLBOX_NN_LAYERS_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "rollbox/core/rng.hpp"
#include "rollbox/nn/ops.hpp"

namespace rollbox::nn {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

inline void append(ParamList& out, const ParamList& more) { out.insert(out.end(), more.begin(), more.end()); }

inline ParamList prefixed(const std::string& prefix, ParamList list) {
  for (auto& p : list) p.name = prefix + p.name;
  return list;
}

inline std::vector<Tensor> tensors_of(const ParamList& list) {
  std::vector<Tensor> out;
  for (const auto& p : list) out.push_back(p.tensor);
  return out;
}

inline std::size_t parameter_count(const ParamList& list) {
  std::size_t n = 0;
  for (const auto& p : list) n += p.tensor.size();
  return n;
}

// Copies values from `src` into `dst` (same names and shapes).
inline void copy_values(const ParamList& src, ParamList& dst) {
  if (src.size() != dst.size()) throw Error("parameter lists differ in length");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].tensor.shape() != dst[i].tensor.shape()) {
      throw Error("parameter '" + src[i].name + "' shape mismatch " + shape_str(src[i].tensor.shape()) + " vs " +
                  shape_str(dst[i].tensor.shape()));
    }
    dst[i].tensor.values() = src[i].tensor.values();
  }
}

// Orthogonal [rows, cols] matrix scaled by `gain` (QR of a Gaussian matrix,
// sign-corrected so the distribution is uniform over orthogonal matrices).
inline std::vector<double> orthogonal(int rows, int cols, double gain, Rng& rng) {
  const int big = std::max(rows, cols), small = std::min(rows, cols);
  Eigen::MatrixXd a(big, small);
  for (int j = 0; j < small; ++j) {
    for (int i = 0; i < big; ++i) a(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(small, small);
  for (int j = 0; j < small; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  std::vector<double> out(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(i) * cols + j] = gain * (rows >= cols ? q(i, j) : q(j, i));
  }
  return out;
}

inline const double kReluGain = std::sqrt(2.0);

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]

  Linear() = default;
  Linear(int in, int out, double gain, Rng& rng)
      : w(Tensor::from({in, out}, orthogonal(in, out, gain, rng), true)), b(Tensor::zeros({out}, true)) {}

  Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
  int in() const { return w.dim(0); }
  int out() const { return w.dim(1); }
  ParamList params() const { return {{"w", w}, {"b", b}}; }
};

struct Conv2d {
  Tensor w;  // [k*k*in, out]
  Tensor b;  // [out]
  int kernel = 1;
  int stride = 1;

  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel_size, int stride_, double gain, Rng& rng)
      : w(Tensor::from({kernel_size * kernel_size * in_channels, out_channels},
                       orthogonal(kernel_size * kernel_size * in_channels, out_channels, gain, rng), true)),
        b(Tensor::zeros({out_channels}, true)), kernel(kernel_size), stride(stride_) {}

  Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, kernel, stride); }
  ParamList params() const { return {{"w", w}, {"b", b}}; }
};

struct ConvLayerSpec {
  int out_channels = 32;
  int kernel = 8;
  int stride = 4;
  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

struct EncoderSpec {
  std::array<ConvLayerSpec, 3> conv{{{32, 8, 4}, {64, 4, 2}, {64, 3, 1}}};
  int latent_dim = 128;
  int input_size = 84;
  int input_channels = 3;

  friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;

  // Spatial extent after conv layer `i` (0-based).
  int spatial(int i) const {
    int s = input_size;
    for (int k = 0; k <= i; ++k) s = (s - conv[k].kernel) / conv[k].stride + 1;
    return s;
  }

  int flat_size() const { return spatial(2) * spatial(2) * conv[2].out_channels; }

  void validate() const {
    if (latent_dim <= 0) throw UsageError("latent_dim must be > 0");
    if (input_channels <= 0) throw UsageError("input_channels must be > 0");
    int s = input_size;
    for (const auto& c : conv) {
      if (c.out_channels <= 0 || c.kernel <= 0 || c.stride <= 0) throw UsageError("conv layer sizes must be > 0");
      if (s < c.kernel) throw UsageError("encoder input too small for its kernels");
      s = (s - c.kernel) / c.stride + 1;
    }
  }

  std::string descriptor() const {
    std::string d = "enc";
    for (const auto& c : conv) {
      d += "-c" + std::to_string(c.out_channels) + "k" + std::to_string(c.kernel) + "s" + std::to_string(c.stride);
    }
    d += "-d" + std::to_string(latent_dim) + "-in" + std::to_string(input_size) + "x" + std::to_string(input_size) + "x" +
         std::to_string(input_channels);
    return d;
  }
};

inline nlohmann::json to_json(const EncoderSpec& s) {
  nlohmann::json conv = nlohmann::json::array();
  for (const auto& c : s.conv) conv.push_back({{"out_channels", c.out_channels}, {"kernel", c.kernel}, {"stride", c.stride}});
  return {{"conv", conv}, {"latent_dim", s.latent_dim}, {"input_size", s.input_size}, {"input_channels", s.input_channels}};
}

inline EncoderSpec encoder_spec_from_json(const nlohmann::json& j) {
  EncoderSpec s;
  try {
    if (j.contains("conv")) {
      if (j["conv"].size() != 3) throw UsageError("encoder needs exactly three convolution layers");
      for (std::size_t i = 0; i < 3; ++i) {
        const auto& c = j["conv"][i];
        s.conv[i] = {c.at("out_channels").get<int>(), c.at("kernel").get<int>(), c.at("stride").get<int>()};
      }
    }
    if (j.contains("latent_dim")) s.latent_dim = j["latent_dim"].get<int>();
    if (j.contains("input_size")) s.input_size = j["input_size"].get<int>();
    if (j.contains("input_channels")) s.input_channels = j["input_channels"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed encoder spec: ") + e.what());
  }
  s.validate();
  return s;
}

// Three ReLU conv layers followed by a ReLU dense projection.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderSpec& spec, Rng& rng) : spec_(spec) {
    spec.validate();
    int in = spec.input_channels;
    for (int i = 0; i < 3; ++i) {
      conv_[i] = Conv2d(in, spec.conv[i].out_channels, spec.conv[i].kernel, spec.conv[i].stride, kReluGain, rng);
      in = spec.conv[i].out_channels;
    }
    fc_ = Linear(spec.flat_size(), spec.latent_dim, kReluGain, rng);
  }

  // x [B, H, W, C] in [0, 1] -> [B, latent_dim]
  Tensor operator()(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != spec_.input_size || x.dim(2) != spec_.input_size || x.dim(3) != spec_.input_channels) {
      throw Error("encoder: shape mismatch " + shape_str(x.shape()) + " vs expected [B," + std::to_string(spec_.input_size) + "," +
                  std::to_string(spec_.input_size) + "," + std::to_string(spec_.input_channels) + "]");
    }
    Tensor h = x;
    for (const auto& c : conv_) h = relu(c(h));
    h = reshape(h, {x.dim(0), spec_.flat_size()});
    return relu(fc_(h));
  }

  const EncoderSpec& spec() const { return spec_; }

  ParamList params() const {
    ParamList out;
    for (int i = 0; i < 3; ++i) append(out, prefixed("conv" + std::to_string(i + 1) + ".", conv_[i].params()));
    append(out, prefixed("fc.", fc_.params()));
    return out;
  }

  // Deep copy with independent storage (momentum and target networks).
  Encoder clone(bool requires_grad = true) const {
    Encoder e = *this;
    for (auto& c : e.conv_) {
      c.w = Tensor::from(c.w.shape(), c.w.values(), requires_grad);
      c.b = Tensor::from(c.b.shape(), c.b.values(), requires_grad);
    }
    e.fc_.w = Tensor::from(fc_.w.shape(), fc_.w.values(), requires_grad);
    e.fc_.b = Tensor::from(fc_.b.shape(), fc_.b.values(), requires_grad);
    return e;
  }

 private:
  EncoderSpec spec_;
  std::array<Conv2d, 3> conv_;
  Linear fc_;
};

// Packs uint8 HWC images into a [B, H, W, C] tensor scaled to [0, 1].
inline Tensor images_to_tensor(const std::vector<const std::uint8_t*>& images, int size, int channels) {
  const std::size_t per = static_cast<std::size_t>(size) * size * channels;
  std::vector<double> v(images.size() * per);
  for (std::size_t b = 0; b < images.size(); ++b) {
    for (std::size_t k = 0; k < per; ++k) v[b * per + k] = images[b][k] * (1.0 / 255.0);
  }
  return Tensor::from({static_cast<int>(images.size()), size, size, channels}, std::move(v));
}

}  // namespace rollbox::nn

#endif  // ROLLBOX_NN_LAYERS_HPP_
