#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pbooth/nn/tensor.h"

namespace pbooth::data {

inline constexpr std::size_t kChannels = 32;
inline constexpr std::size_t kMinFrames = 32;
inline constexpr std::size_t kMaxFrames = 64;
inline constexpr double kFrameRate = 20.0;
inline constexpr int kNeutralPersona = 0;

// Feature channel layout.
//   0-2   root position (lateral x, height y, forward z)
//   3-5   root velocity (x, y, z)
//   6-9   torso pitch, torso roll, head pitch, spine yaw
//   10-29 ten left/right limb pairs (left at even index)
//   30-31 left/right foot contact in {0, 1}
namespace channel {
inline constexpr std::size_t kRootX = 0;
inline constexpr std::size_t kRootY = 1;
inline constexpr std::size_t kRootZ = 2;
inline constexpr std::size_t kVelX = 3;
inline constexpr std::size_t kVelY = 4;
inline constexpr std::size_t kVelZ = 5;
inline constexpr std::size_t kTorsoPitch = 6;
inline constexpr std::size_t kTorsoRoll = 7;
inline constexpr std::size_t kHeadPitch = 8;
inline constexpr std::size_t kSpineYaw = 9;
inline constexpr std::size_t kShoulderPitchL = 10;
inline constexpr std::size_t kShoulderRollL = 12;
inline constexpr std::size_t kElbowL = 14;
inline constexpr std::size_t kWristL = 16;
inline constexpr std::size_t kHandHeightL = 18;
inline constexpr std::size_t kHipPitchL = 20;
inline constexpr std::size_t kHipRollL = 22;
inline constexpr std::size_t kKneeL = 24;
inline constexpr std::size_t kAnkleL = 26;
inline constexpr std::size_t kFootHeightL = 28;
inline constexpr std::size_t kContactL = 30;
inline constexpr std::size_t kContactR = 31;
inline constexpr std::size_t kFirstContact = 30;
inline constexpr std::size_t kContactCount = 2;
// The right-side partner of a left channel in the paired block.
constexpr std::size_t Right(std::size_t left) { return left + 1; }
}  // namespace channel

// Mirror map used by FlipLR: out[c] = sign[c] * in[source[c]].
struct ChannelLayout {
  std::array<std::size_t, kChannels> source{};
  std::array<float, kChannels> sign{};

  static const ChannelLayout& Default();
  std::string Describe() const;
};

enum class Content : int {
  kWalkLine = 0,
  kWalkCircle = 1,
  kRun = 2,
  kHop = 3,
  kWave = 4,
  kPunch = 5,
};
inline constexpr std::size_t kContentCount = 6;

std::string_view ContentName(int content_id);
// Throws DataError for ids outside the registry.
void CheckContent(int content_id);
int ContentFromName(std::string_view name);

struct PersonaParams {
  int persona_id = kNeutralPersona;
  double amplitude_scale = 1.0;
  double frequency_scale = 1.0;
  double lean = 0.0;
  double arm_bias = 0.0;
  double tempo_jitter = 0.0;

  static PersonaParams Neutral() { return {}; }
};

// Persona parameters as a pure function of (corpus_seed, persona_id).
// Persona k is drawn by rejection so that it differs from every persona
// 1..k-1 by at least `margin` in one of amplitude, frequency, lean or arm
// bias. Id 0 is the neutral persona.
PersonaParams MakePersona(std::uint64_t corpus_seed, int persona_id,
                          double margin = 0.25);
double PersonaDistance(const PersonaParams& a, const PersonaParams& b);

struct MotionClip {
  nn::Tensor<float> features;  // frames x kChannels
  int persona_id = kNeutralPersona;
  int content_id = 0;
  std::uint64_t take_seed = 0;
  int description_variant = 0;
  bool flipped = false;

  std::size_t frames() const { return features.rows(); }
  bool operator==(const MotionClip&) const = default;
};

// Deterministic synthetic clip. Persona parameters modulate amplitude,
// frequency, posture and timing of the content's canonical waveforms; the
// take seed picks phase, speed and small posture offsets.
MotionClip SynthesizeClip(const PersonaParams& persona, int content_id,
                          std::size_t frames, std::uint64_t take_seed);

// Swaps left/right pairs and contacts and negates lateral channels.
MotionClip FlipLR(const MotionClip& clip);

// Contiguous sub-clip [start, start + length). Throws DataError when out of
// range or shorter than min_frames.
MotionClip Crop(const MotionClip& clip, std::size_t start, std::size_t length,
                std::size_t min_frames = kMinFrames);

}  // namespace pbooth::data

namespace pbooth::data {

// Per-channel z-scoring applied at every network boundary. Contact channels
// pass through unchanged so they stay in {0, 1}.
struct FeatureNormalizer {
  nn::Tensor<float> mean;  // 1 x kChannels
  nn::Tensor<float> std;   // 1 x kChannels

  static FeatureNormalizer Identity();
  // Statistics over all frames of `clips`, with std floored at `min_std`.
  static FeatureNormalizer Fit(const std::vector<const MotionClip*>& clips,
                               float min_std = 0.1f);

  nn::Tensor<float> Normalize(const nn::Tensor<float>& features) const;
  nn::Tensor<float> Denormalize(const nn::Tensor<float>& features) const;
};

}  // namespace pbooth::data
