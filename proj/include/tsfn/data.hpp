#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "tsfn/tensor.hpp"

namespace tsfn {

inline constexpr std::size_t kClassCount = 6;
inline constexpr double kMinDistance = 4.0;
inline constexpr double kMaxDistance = 28.0;

/// Gesture classes with stable integer codes 0..5.
enum class GestureClass : int {
  beckoning = 0,
  stop = 1,
  null_gesture = 2,
  thumbs_up = 3,
  pointing = 4,
  thumbs_down = 5,
};

inline const std::array<std::string, kClassCount>& gesture_names() {
  static const std::array<std::string, kClassCount> names = {
      "beckoning", "stop", "null", "thumbs_up", "pointing", "thumbs_down"};
  return names;
}

inline GestureClass gesture_from_code(int code) {
  if (code < 0 || code >= static_cast<int>(kClassCount))
    throw InvalidInput("gesture class code out of range: " + std::to_string(code));
  return static_cast<GestureClass>(code);
}

/// One gesture video: T x H x W x 3, channel values in [0,1].
struct VideoClip {
  std::size_t frames = 0, height = 0, width = 0;
  std::vector<double> values;  // row-major T x H x W x 3

  VideoClip() = default;
  VideoClip(std::size_t t, std::size_t h, std::size_t w)
      : frames(t), height(h), width(w), values(t * h * w * 3, 0.0) {}

  double& at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) {
    return values[((t * height + y) * width + x) * 3 + c];
  }
  double at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
    return values[((t * height + y) * width + x) * 3 + c];
  }

  /// Reorders to the model input layout C x T x H x W.
  Tensor to_cthw() const {
    Tensor out(Shape{3, frames, height, width});
    double* d = out.data();
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t y = 0; y < height; ++y)
          for (std::size_t x = 0; x < width; ++x)
            d[((c * frames + t) * height + y) * width + x] = at(t, y, x, c);
    return out;
  }

  /// Temporal stride-2 subsample, front-padded by repeating the first kept
  /// frame so the result has the original length.
  VideoClip subsample_stride2() const {
    VideoClip out(frames, height, width);
    const std::size_t kept = (frames + 1) / 2;
    const std::size_t pad = frames - kept;
    const std::size_t frame_sz = height * width * 3;
    for (std::size_t t = 0; t < frames; ++t) {
      const std::size_t src = (t < pad) ? 0 : (t - pad) * 2;
      std::copy(values.begin() + src * frame_sz, values.begin() + (src + 1) * frame_sz,
                out.values.begin() + t * frame_sz);
    }
    return out;
  }
};

/// Dataset element: clip, label, camera distance in meters.
struct Sample {
  VideoClip clip;
  GestureClass label = GestureClass::beckoning;
  double distance = kMinDistance;
  std::uint64_t seed = 0;  // drives deterministic view generation
};

}  // namespace tsfn
