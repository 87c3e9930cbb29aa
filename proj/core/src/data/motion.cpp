#include "pbooth/data/motion.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pbooth/errors.h"
#include "pbooth/nn/random.h"

namespace pbooth::data {
namespace {

constexpr double kTwoPi = 2.0 * M_PI;
constexpr std::array<std::string_view, kContentCount> kContentNames = {
    "walk-line", "walk-circle", "run", "hop", "wave", "punch"};
// Base cycle frequency in Hz for each content.
constexpr std::array<double, kContentCount> kBaseFrequency = {0.9, 0.9, 1.4,
                                                               1.1, 1.2, 1.0};

using Pose = std::array<double, kChannels>;

double Positive(double x) { return x > 0.0 ? x : 0.0; }

struct TakeParams {
  double phase0 = 0.0;
  double speed = 1.0;
  double amplitude = 1.0;
  double jitter_rate = 0.3;
  double jitter_phase = 0.0;
  double head_offset = 0.0;
  double hip_roll_offset = 0.0;
};

class Waveform {
 public:
  Waveform(const PersonaParams& persona, int content, const TakeParams& take)
      : persona_(persona), content_(static_cast<Content>(content)), take_(take) {
    amp_ = persona.amplitude_scale * take.amplitude;
    freq_ = kBaseFrequency[static_cast<std::size_t>(content)] *
            persona.frequency_scale * take.speed;
  }

  double Phase(double t) const {
    return kTwoPi * freq_ * t + take_.phase0 +
           persona_.tempo_jitter *
               std::sin(kTwoPi * take_.jitter_rate * t + take_.jitter_phase);
  }

  // Every channel except root velocity, which is differentiated from this.
  Pose Evaluate(double t) const {
    Pose p{};
    const double phi = Phase(t);
    const double a = amp_;
    p[channel::kRootY] = 0.9;
    p[channel::kTorsoPitch] = persona_.lean;
    p[channel::kHeadPitch] = take_.head_offset;
    p[channel::kShoulderRollL] = persona_.arm_bias + 0.1;
    p[channel::Right(channel::kShoulderRollL)] = persona_.arm_bias + 0.1;
    p[channel::kHipRollL] = take_.hip_roll_offset;
    p[channel::Right(channel::kHipRollL)] = take_.hip_roll_offset;
    p[channel::kHandHeightL] = -0.5;
    p[channel::Right(channel::kHandHeightL)] = -0.5;
    switch (content_) {
      case Content::kWalkLine:
      case Content::kWalkCircle:
        Gait(p, phi, a, 1.0);
        break;
      case Content::kRun:
        Gait(p, phi, 1.6 * a, 1.6);
        break;
      case Content::kHop:
        Hop(p, phi, a);
        break;
      case Content::kWave:
        Wave(p, phi, a);
        break;
      case Content::kPunch:
        Punch(p, phi, a);
        break;
    }
    Root(p, t);
    return p;
  }

 private:
  void Gait(Pose& p, double phi, double a, double intensity) const {
    using namespace channel;
    const double legs[2] = {phi, phi + M_PI};
    for (int side = 0; side < 2; ++side) {
      const std::size_t o = static_cast<std::size_t>(side);
      const double leg = legs[side];
      const double arm = legs[1 - side];
      p[kHipPitchL + o] = 0.5 * a * std::sin(leg);
      p[kKneeL + o] = 0.2 * intensity + 0.6 * a * Positive(std::sin(leg + M_PI / 2));
      p[kAnkleL + o] = 0.3 * a * std::sin(leg - M_PI / 3);
      p[kFootHeightL + o] = 0.1 * a * Positive(std::sin(leg));
      p[kShoulderPitchL + o] = 0.4 * a * std::sin(arm);
      p[kElbowL + o] = 0.3 * intensity + 0.1 * a * (1.0 + std::sin(arm));
      p[kWristL + o] = 0.1 * a * std::sin(arm + 0.5);
      p[kHandHeightL + o] = -0.5 + 0.1 * a * std::sin(arm);
      // Stance while the leg swings back; running has a flight phase.
      const double threshold = intensity > 1.0 ? -0.3 : 0.0;
      p[kFirstContact + o] = std::sin(leg) < threshold ? 1.0 : 0.0;
    }
    p[kTorsoPitch] += 0.05 * a * std::sin(2.0 * phi) + 0.1 * (intensity - 1.0);
    p[kTorsoRoll] = 0.05 * a * std::sin(phi);
    p[kHeadPitch] += 0.03 * a * std::sin(2.0 * phi);
    p[kSpineYaw] = 0.1 * a * std::sin(phi);
    p[kRootY] = 0.9 + 0.03 * a * intensity * std::sin(2.0 * phi);
    if (content_ == Content::kWalkCircle) {
      p[kSpineYaw] += 0.2;
      p[kTorsoRoll] += 0.1;
    }
  }

  void Hop(Pose& p, double phi, double a) const {
    using namespace channel;
    const double lift = Positive(std::sin(phi));
    for (std::size_t o = 0; o < 2; ++o) {
      p[kHipPitchL + o] = 0.4 * a * std::sin(phi);
      p[kKneeL + o] = 0.3 + 0.7 * a * lift;
      p[kAnkleL + o] = 0.4 * a * std::sin(phi - M_PI / 4);
      p[kFootHeightL + o] = 0.2 * a * lift;
      p[kShoulderPitchL + o] = 0.5 * a * std::sin(phi);
      p[kElbowL + o] = 0.4 + 0.2 * a * lift;
      p[kWristL + o] = 0.1 * a * std::sin(phi);
      p[kHandHeightL + o] = -0.4 + 0.2 * a * std::sin(phi);
      p[kFirstContact + o] = std::sin(phi) <= 0.0 ? 1.0 : 0.0;
    }
    p[kTorsoPitch] += 0.08 * a * std::sin(phi);
    p[kHeadPitch] += 0.04 * a * std::sin(phi);
    p[kRootY] = 0.9 + 0.25 * a * lift;
  }

  void Wave(Pose& p, double phi, double a) const {
    using namespace channel;
    const std::size_t r = 1;  // right arm waves
    p[kShoulderPitchL + r] = 2.2;
    p[kShoulderRollL + r] += 0.2;
    p[kElbowL + r] = 0.8 + 0.4 * a * std::sin(phi);
    p[kWristL + r] = 0.6 * a * std::sin(phi);
    p[kHandHeightL + r] = 0.6 + 0.1 * a * std::sin(phi);
    p[kElbowL] = 0.2;
    for (std::size_t o = 0; o < 2; ++o) {
      p[kKneeL + o] = 0.1;
      p[kFirstContact + o] = 1.0;
    }
    p[kTorsoRoll] = 0.04 * a * std::sin(phi);
    p[kHeadPitch] += 0.05 * a * std::sin(phi + 0.3);
  }

  void Punch(Pose& p, double phi, double a) const {
    using namespace channel;
    const double pulse[2] = {std::pow(Positive(std::sin(phi)), 3.0),
                             std::pow(Positive(std::sin(phi + M_PI)), 3.0)};
    for (std::size_t o = 0; o < 2; ++o) {
      p[kShoulderPitchL + o] = 0.3 + 1.2 * a * pulse[o];
      p[kElbowL + o] = 1.6 - 1.4 * a * pulse[o];
      p[kWristL + o] = 0.2 * a * pulse[o];
      p[kHandHeightL + o] = -0.1 + 0.4 * a * pulse[o];
      p[kKneeL + o] = 0.25;
      p[kHipPitchL + o] = 0.1 * (o == 0 ? 1.0 : -1.0);
      p[kFirstContact + o] = 1.0;
    }
    p[kSpineYaw] = 0.2 * a * (pulse[0] - pulse[1]);
    p[kTorsoPitch] += 0.1;
  }

  void Root(Pose& p, double t) const {
    using namespace channel;
    const double pace = persona_.frequency_scale * take_.speed;
    switch (content_) {
      case Content::kWalkLine:
        p[kRootZ] = 1.2 * pace * t;
        p[kRootX] = 0.03 * amp_ * std::sin(Phase(t));
        break;
      case Content::kWalkCircle: {
        const double radius = 2.0;
        const double angle = 1.0 * pace * t / radius;
        p[kRootX] = radius * (1.0 - std::cos(angle));
        p[kRootZ] = radius * std::sin(angle);
        break;
      }
      case Content::kRun:
        p[kRootZ] = 2.8 * pace * t;
        p[kRootX] = 0.04 * amp_ * std::sin(Phase(t));
        break;
      case Content::kHop:
        p[kRootZ] = 0.6 * pace * t;
        break;
      case Content::kWave:
      case Content::kPunch:
        break;
    }
  }

  PersonaParams persona_;
  Content content_;
  TakeParams take_;
  double amp_ = 1.0;
  double freq_ = 1.0;
};

PersonaParams DrawPersona(nn::Rng& rng, int id) {
  PersonaParams p;
  p.persona_id = id;
  p.amplitude_scale = rng.Uniform(0.6, 1.6);
  p.frequency_scale = rng.Uniform(0.7, 1.4);
  p.lean = rng.Uniform(-0.4, 0.4);
  p.arm_bias = rng.Uniform(-0.4, 0.4);
  p.tempo_jitter = rng.Uniform(0.0, 0.3);
  return p;
}

}  // namespace

const ChannelLayout& ChannelLayout::Default() {
  static const ChannelLayout layout = [] {
    ChannelLayout l;
    for (std::size_t c = 0; c < kChannels; ++c) {
      l.source[c] = c;
      l.sign[c] = 1.0f;
    }
    for (std::size_t c = channel::kShoulderPitchL; c < kChannels; c += 2) {
      l.source[c] = c + 1;
      l.source[c + 1] = c;
    }
    for (std::size_t c : {channel::kRootX, channel::kVelX, channel::kTorsoRoll,
                          channel::kSpineYaw}) {
      l.sign[c] = -1.0f;
    }
    return l;
  }();
  return layout;
}

std::string ChannelLayout::Describe() const {
  std::ostringstream os;
  for (std::size_t c = 0; c < kChannels; ++c) {
    if (c) os << ",";
    os << (sign[c] < 0 ? "-" : "") << source[c];
  }
  return os.str();
}

std::string_view ContentName(int content_id) {
  CheckContent(content_id);
  return kContentNames[static_cast<std::size_t>(content_id)];
}

void CheckContent(int content_id) {
  if (content_id < 0 || content_id >= static_cast<int>(kContentCount)) {
    throw DataError("unknown content id " + std::to_string(content_id) +
                    " (registry has " + std::to_string(kContentCount) + ")");
  }
}

int ContentFromName(std::string_view name) {
  for (std::size_t i = 0; i < kContentCount; ++i) {
    if (kContentNames[i] == name) return static_cast<int>(i);
  }
  throw DataError("unknown content '" + std::string(name) + "'");
}

double PersonaDistance(const PersonaParams& a, const PersonaParams& b) {
  return std::max({std::abs(a.amplitude_scale - b.amplitude_scale),
                   std::abs(a.frequency_scale - b.frequency_scale),
                   std::abs(a.lean - b.lean), std::abs(a.arm_bias - b.arm_bias)});
}

PersonaParams MakePersona(std::uint64_t corpus_seed, int persona_id,
                          double margin) {
  if (persona_id == kNeutralPersona) return PersonaParams::Neutral();
  if (persona_id < 0) {
    throw DataError("persona id must be >= 0, got " + std::to_string(persona_id));
  }
  std::vector<PersonaParams> earlier;
  for (int k = 1; k < persona_id; ++k) {
    earlier.push_back(MakePersona(corpus_seed, k, margin));
  }
  nn::Rng rng(nn::Rng::Mix(corpus_seed) ^
              nn::Rng::Mix(0x5045524fULL + static_cast<std::uint64_t>(persona_id)));
  PersonaParams best = DrawPersona(rng, persona_id);
  double best_gap = -1.0;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const PersonaParams candidate = attempt == 0 ? best : DrawPersona(rng, persona_id);
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& e : earlier) gap = std::min(gap, PersonaDistance(candidate, e));
    if (gap >= margin) return candidate;
    if (gap > best_gap) {
      best_gap = gap;
      best = candidate;
    }
  }
  return best;
}

MotionClip SynthesizeClip(const PersonaParams& persona, int content_id,
                          std::size_t frames, std::uint64_t take_seed) {
  CheckContent(content_id);
  if (frames < kMinFrames || frames > kMaxFrames) {
    throw DataError("clip length " + std::to_string(frames) + " outside [" +
                    std::to_string(kMinFrames) + ", " +
                    std::to_string(kMaxFrames) + "]");
  }
  nn::Rng rng(take_seed);
  TakeParams take;
  take.phase0 = rng.Uniform(0.0, kTwoPi);
  take.speed = rng.Uniform(0.95, 1.05);
  take.amplitude = rng.Uniform(0.95, 1.05);
  take.jitter_rate = rng.Uniform(0.25, 0.45);
  take.jitter_phase = rng.Uniform(0.0, kTwoPi);
  take.head_offset = rng.Uniform(-0.05, 0.05);
  take.hip_roll_offset = rng.Uniform(-0.05, 0.05);
  const Waveform wave(persona, content_id, take);

  MotionClip clip;
  clip.persona_id = persona.persona_id;
  clip.content_id = content_id;
  clip.take_seed = take_seed;
  clip.features = nn::Tensor<float>::Matrix(frames, kChannels);
  constexpr double h = 1e-3;
  for (std::size_t i = 0; i < frames; ++i) {
    const double t = static_cast<double>(i) / kFrameRate;
    const Pose pose = wave.Evaluate(t);
    const Pose ahead = wave.Evaluate(t + h);
    const Pose behind = wave.Evaluate(t - h);
    for (std::size_t c = 0; c < kChannels; ++c) {
      clip.features(i, c) = static_cast<float>(pose[c]);
    }
    for (std::size_t d = 0; d < 3; ++d) {
      clip.features(i, channel::kVelX + d) = static_cast<float>(
          (ahead[channel::kRootX + d] - behind[channel::kRootX + d]) / (2.0 * h));
    }
  }
  return clip;
}

MotionClip FlipLR(const MotionClip& clip) {
  const auto& layout = ChannelLayout::Default();
  MotionClip out = clip;
  out.flipped = !clip.flipped;
  for (std::size_t i = 0; i < clip.frames(); ++i) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      out.features(i, c) = layout.sign[c] * clip.features(i, layout.source[c]);
    }
  }
  return out;
}

MotionClip Crop(const MotionClip& clip, std::size_t start, std::size_t length,
                std::size_t min_frames) {
  if (length < min_frames || start + length > clip.frames()) {
    throw DataError("crop [" + std::to_string(start) + ", " +
                    std::to_string(start + length) + ") invalid for a " +
                    std::to_string(clip.frames()) + "-frame clip (min length " +
                    std::to_string(min_frames) + ")");
  }
  MotionClip out = clip;
  out.features = clip.features.RowSlice(start, length);
  return out;
}

}  // namespace pbooth::data

namespace pbooth::data {

FeatureNormalizer FeatureNormalizer::Identity() {
  return {nn::Tensor<float>::Matrix(1, kChannels, 0.0f),
          nn::Tensor<float>::Matrix(1, kChannels, 1.0f)};
}

FeatureNormalizer FeatureNormalizer::Fit(
    const std::vector<const MotionClip*>& clips, float min_std) {
  if (clips.empty()) throw DataError("cannot fit a normalizer on zero clips");
  std::vector<double> sum(kChannels, 0.0);
  std::vector<double> sq(kChannels, 0.0);
  double count = 0.0;
  for (const auto* clip : clips) {
    for (std::size_t i = 0; i < clip->frames(); ++i) {
      for (std::size_t c = 0; c < kChannels; ++c) {
        const double v = clip->features(i, c);
        sum[c] += v;
        sq[c] += v * v;
      }
      count += 1.0;
    }
  }
  FeatureNormalizer n = Identity();
  for (std::size_t c = 0; c < channel::kFirstContact; ++c) {
    const double mean = sum[c] / count;
    const double var = std::max(0.0, sq[c] / count - mean * mean);
    n.mean[c] = static_cast<float>(mean);
    n.std[c] = std::max(min_std, static_cast<float>(std::sqrt(var)));
  }
  return n;
}

nn::Tensor<float> FeatureNormalizer::Normalize(const nn::Tensor<float>& x) const {
  nn::Tensor<float> out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      out(i, c) = (x(i, c) - mean[c]) / std[c];
    }
  }
  return out;
}

nn::Tensor<float> FeatureNormalizer::Denormalize(const nn::Tensor<float>& x) const {
  nn::Tensor<float> out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      out(i, c) = x(i, c) * std[c] + mean[c];
    }
  }
  return out;
}

}  // namespace pbooth::data
