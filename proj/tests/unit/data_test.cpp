#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "pbooth/data/corpus.h"
#include "pbooth/data/motion.h"
#include "pbooth/data/text.h"
#include "pbooth/errors.h"
#include "pbooth/nn/blob_store.h"
#include "test_support.h"

using namespace pbooth;
using namespace pbooth::data;
namespace pt = pbooth::testing;

namespace {

double PeakAbs(const MotionClip& clip, std::size_t c) {
  double m = 0.0;
  for (std::size_t i = 0; i < clip.frames(); ++i) m = std::max(m, std::abs(double(clip.features(i, c))));
  return m;
}

// Per-channel mean and standard deviation, the raw statistics used by the
// nearest-centroid separation oracle.
std::vector<double> ChannelStats(const MotionClip& clip) {
  std::vector<double> out;
  for (std::size_t c = 0; c < kChannels; ++c) {
    double s = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < clip.frames(); ++i) {
      const double v = clip.features(i, c);
      s += v;
      sq += v * v;
    }
    const double n = double(clip.frames());
    const double mean = s / n;
    out.push_back(mean);
    out.push_back(std::sqrt(std::max(0.0, sq / n - mean * mean)));
  }
  return out;
}

}  // namespace

TEST_SUITE("synthesis") {
  TEST_CASE("identical inputs give bit-identical clips") {
    const auto persona = MakePersona(7, 2);
    const auto a = SynthesizeClip(persona, 3, 64, 1234);
    const auto b = SynthesizeClip(persona, 3, 64, 1234);
    CHECK(a == b);
    CHECK(!(a == SynthesizeClip(persona, 3, 64, 1235)));
  }

  TEST_CASE("neutral walk-line travels strictly forward") {
    const auto clip = SynthesizeClip(PersonaParams::Neutral(), 0, 64, 5);
    for (std::size_t i = 1; i < clip.frames(); ++i) {
      CHECK(clip.features(i, channel::kRootZ) > clip.features(i - 1, channel::kRootZ));
    }
  }

  TEST_CASE("amplitude scale multiplies the waving arm's peak") {
    PersonaParams one = PersonaParams::Neutral();
    PersonaParams two = one;
    two.amplitude_scale = 2.0;
    const std::size_t wrist = channel::Right(channel::kWristL);
    const auto a = SynthesizeClip(one, static_cast<int>(Content::kWave), 64, 77);
    const auto b = SynthesizeClip(two, static_cast<int>(Content::kWave), 64, 77);
    CHECK(PeakAbs(b, wrist) / PeakAbs(a, wrist) == doctest::Approx(2.0).epsilon(1e-6));
  }

  TEST_CASE("root velocity is the derivative of root position") {
    const auto clip = SynthesizeClip(MakePersona(7, 1), 1, 64, 9);
    for (std::size_t i = 1; i + 1 < clip.frames(); ++i) {
      for (std::size_t d = 0; d < 3; ++d) {
        const double central = (clip.features(i + 1, d) - clip.features(i - 1, d)) * kFrameRate / 2.0;
        CHECK(clip.features(i, channel::kVelX + d) == doctest::Approx(central).epsilon(0.05).scale(0.5));
      }
    }
  }

  TEST_CASE("contacts are binary") {
    for (int c = 0; c < int(kContentCount); ++c) {
      const auto clip = SynthesizeClip(MakePersona(7, 3), c, 64, 11);
      for (std::size_t i = 0; i < clip.frames(); ++i) {
        for (std::size_t k = channel::kFirstContact; k < kChannels; ++k) {
          const float v = clip.features(i, k);
          CHECK((v == 0.0f || v == 1.0f));
        }
      }
    }
  }

  TEST_CASE("personas approach the neutral persona continuously") {
    const auto neutral = SynthesizeClip(PersonaParams::Neutral(), 2, 64, 21);
    double previous = 1e9;
    for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
      PersonaParams p;
      p.persona_id = 0;
      p.amplitude_scale = 1 + eps;
      p.frequency_scale = 1 + eps;
      p.lean = eps;
      p.arm_bias = eps;
      p.tempo_jitter = eps;
      const auto clip = SynthesizeClip(p, 2, 64, 21);
      double diff = 0.0;
      for (std::size_t i = 0; i < clip.frames(); ++i) {
        for (std::size_t c = 0; c < channel::kFirstContact; ++c) {
          diff = std::max(diff, std::abs(double(clip.features(i, c)) - neutral.features(i, c)));
        }
      }
      CHECK(diff < previous);
      previous = diff;
    }
    CHECK(previous < 1e-2);
  }

  TEST_CASE("persona draws respect the separation margin") {
    std::vector<PersonaParams> ps;
    for (int id = 1; id <= 6; ++id) ps.push_back(MakePersona(7, id, 0.3));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) CHECK(PersonaDistance(ps[i], ps[j]) >= 0.3);
    }
    CHECK(MakePersona(7, 0).amplitude_scale == 1.0);
  }

  TEST_CASE("invalid content and lengths are rejected") {
    CHECK_THROWS_AS(SynthesizeClip(PersonaParams::Neutral(), 6, 64, 1), DataError);
    CHECK_THROWS_AS(SynthesizeClip(PersonaParams::Neutral(), 0, 31, 1), DataError);
    CHECK_THROWS_AS(SynthesizeClip(PersonaParams::Neutral(), 0, 65, 1), DataError);
    CHECK(ContentFromName(ContentName(4)) == 4);
  }
}

TEST_SUITE("flip") {
  TEST_CASE("flipping twice restores every generated clip bit-exactly") {
    const auto corpus = GenerateCorpus({});
    for (const auto& clip : corpus.clips) {
      const auto twice = FlipLR(FlipLR(clip));
      CHECK(twice.features == clip.features);
      CHECK(twice.flipped == clip.flipped);
    }
  }

  TEST_CASE("a laterally symmetric clip is its own mirror image") {
    // Hop moves both sides in phase and never leaves the sagittal plane.
    const auto hop = SynthesizeClip(MakePersona(7, 2), static_cast<int>(Content::kHop), 64, 3);
    CHECK(FlipLR(hop).features == hop.features);
  }

  TEST_CASE("flipping preserves the total absolute magnitude") {
    const auto clip = SynthesizeClip(MakePersona(7, 1), static_cast<int>(Content::kWave), 64, 3);
    auto total = [](const MotionClip& c) {
      double s = 0.0;
      for (float v : c.features.values()) s += std::abs(double(v));
      return s;
    };
    CHECK(total(FlipLR(clip)) == doctest::Approx(total(clip)).epsilon(1e-12));
    CHECK(!(FlipLR(clip).features == clip.features));
  }

  TEST_CASE("the mirror map swaps pairs and negates lateral channels") {
    const auto& layout = ChannelLayout::Default();
    CHECK(layout.source[channel::kElbowL] == channel::Right(channel::kElbowL));
    CHECK(layout.source[channel::kContactR] == channel::kContactL);
    CHECK(layout.sign[channel::kRootX] == -1.0f);
    CHECK(layout.sign[channel::kRootZ] == 1.0f);
  }
}

TEST_SUITE("crop") {
  TEST_CASE("crop of the full range is the identity") {
    const auto clip = SynthesizeClip(MakePersona(7, 1), 0, 64, 3);
    CHECK(Crop(clip, 0, 64) == clip);
  }

  TEST_CASE("crops compose by adding offsets") {
    const auto clip = SynthesizeClip(MakePersona(7, 1), 0, 64, 3);
    for (std::size_t a = 0; a <= 8; ++a) {
      for (std::size_t b = 0; b <= 4; ++b) {
        const auto nested = Crop(Crop(clip, a, 56 - a, 1), b, 40, 1);
        CHECK(nested.features == Crop(clip, a + b, 40, 1).features);
      }
    }
  }

  TEST_CASE("every crop either meets the minimum length or fails") {
    const auto clip = SynthesizeClip(MakePersona(7, 1), 0, 64, 3);
    for (std::size_t start = 0; start <= 64; ++start) {
      for (std::size_t len = 0; len <= 64; ++len) {
        const bool valid = len >= kMinFrames && start + len <= 64;
        if (valid) {
          CHECK(Crop(clip, start, len).frames() == len);
        } else {
          CHECK_THROWS_AS(Crop(clip, start, len), DataError);
        }
      }
    }
  }
}

TEST_SUITE("text") {
  TEST_CASE("canonical walk-line description") {
    const auto p = Describe(0, 0);
    CHECK(p.text == "a person walks forward");
    CHECK(p.subject_index == 0u);
    CHECK(!p.placeholder_index);
  }

  TEST_CASE("personalization inserts the placeholder before the subject") {
    const auto plain = Describe(0, 0);
    const auto p = Describe(0, 0, true);
    CHECK(p.text == "[P] a person walks forward");
    CHECK(p.placeholder_index == 0u);
    CHECK(p.placeholder_index == plain.subject_index);
    CHECK(p.subject_index == *plain.subject_index + 1);
    CHECK(p.tokens[*p.placeholder_index] == Vocabulary::Default().placeholder());
  }

  TEST_CASE("every template tokenizes and detokenizes exactly") {
    const auto& vocab = Vocabulary::Default();
    for (int c = 0; c < int(kContentCount); ++c) {
      for (int v = 0; v < int(kVariantsPerContent); ++v) {
        const auto p = Describe(c, v);
        CHECK(vocab.Detokenize(p.tokens) == Template(c, v));
        CHECK(p.subject_index.has_value());
        const auto q = vocab.Tokenize(Describe(c, v, true).text);
        CHECK(q.placeholder_index == p.subject_index);
      }
    }
  }

  TEST_CASE("unknown words and missing subjects are errors") {
    const auto& vocab = Vocabulary::Default();
    CHECK_THROWS_AS(vocab.Tokenize("a person juggles"), VocabularyError);
    CHECK_THROWS_AS(Personalize(vocab.Tokenize("walks forward")), VocabularyError);
    CHECK_THROWS_AS(Describe(0, 8), DataError);
  }
}

TEST_SUITE("corpus") {
  TEST_CASE("split sizes follow the spec counts") {
    CorpusSpec spec;
    spec.personas = 4;
    spec.contents = 6;
    spec.takes = 4;
    const auto corpus = GenerateCorpus(spec);
    CHECK(corpus.Indices(Split::kFinetune).size() == 4 * 6 * 4 * 2);
    CHECK(corpus.Indices(Split::kTest).size() == 4 * 6 * 3 * 2);
    CHECK(corpus.Indices(Split::kPretrain).size() == 6 * 16 * 2);
    for (std::size_t i : corpus.Indices(Split::kPretrain)) {
      CHECK(corpus.clips[i].persona_id == kNeutralPersona);
    }
    std::set<int> finetune_personas;
    for (std::size_t i : corpus.Indices(Split::kFinetune)) {
      finetune_personas.insert(corpus.clips[i].persona_id);
    }
    CHECK(finetune_personas == std::set<int>{1, 2, 3, 4});
  }

  TEST_CASE("clips are a pure function of their identifying seeds") {
    const auto corpus = GenerateCorpus({});
    for (std::size_t i = 0; i < corpus.clips.size(); i += 37) {
      const auto& c = corpus.clips[i];
      const auto persona = c.persona_id == 0 ? PersonaParams::Neutral()
                                             : corpus.personas[std::size_t(c.persona_id - 1)];
      auto fresh = SynthesizeClip(persona, c.content_id, corpus.spec.frames, c.take_seed);
      if (c.flipped) fresh = FlipLR(fresh);
      CHECK(fresh.features == c.features);
    }
  }

  TEST_CASE("save and load round-trip bit-exactly") {
    const auto dir = pt::ScratchDir("corpus");
    const auto corpus = GenerateCorpus({});
    SaveCorpus(corpus, dir);
    const auto loaded = LoadCorpus(dir);
    CHECK(loaded.clips == corpus.clips);
    CHECK(loaded.splits == corpus.splits);
    CHECK(loaded.personas.size() == corpus.personas.size());
    CHECK(loaded.personas[2].lean == corpus.personas[2].lean);
  }

  TEST_CASE("a corrupted payload byte is detected") {
    const auto dir = pt::ScratchDir("corpus-corrupt");
    SaveCorpus(GenerateCorpus({}), dir);
    const auto file = dir / "clips" / "000010.bin";
    auto bytes = io::ReadBytes(file);
    bytes[17] ^= 0x40;
    io::WriteBytes(file, bytes);
    CHECK_THROWS_AS(LoadCorpus(dir), IntegrityError);
  }

  TEST_CASE("a truncated clip is detected even with a matching checksum") {
    const auto dir = pt::ScratchDir("corpus-truncated");
    const auto corpus = GenerateCorpus({});
    SaveCorpus(corpus, dir);
    auto bytes = io::ReadBytes(dir / "clips" / "000000.bin");
    bytes.resize(bytes.size() - 4);
    io::WriteBytes(dir / "clips" / "000000.bin", bytes);
    std::vector<std::string> files = {"manifest.json"};
    for (std::size_t i = 0; i < corpus.clips.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "clips/%06zu.bin", i);
      files.push_back(name);
    }
    io::WriteChecksums(dir, files);
    CHECK_THROWS_AS(LoadCorpus(dir), IntegrityError);
  }

  TEST_CASE("personas are separable by a nearest-centroid oracle") {
    const auto corpus = GenerateCorpus({});
    // Standardize statistics with the finetune split, then classify test
    // clips by the nearest persona centroid within their content.
    const auto train = corpus.Indices(Split::kFinetune);
    std::vector<std::vector<double>> feats(corpus.clips.size());
    for (std::size_t i = 0; i < corpus.clips.size(); ++i) feats[i] = ChannelStats(corpus.clips[i]);
    const std::size_t d = feats[0].size();
    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    for (std::size_t i : train) for (std::size_t k = 0; k < d; ++k) mu[k] += feats[i][k] / double(train.size());
    for (std::size_t i : train) for (std::size_t k = 0; k < d; ++k) sd[k] += std::pow(feats[i][k] - mu[k], 2) / double(train.size());
    for (auto& v : sd) v = std::sqrt(v) + 1e-6;
    std::map<std::pair<int, int>, std::vector<double>> centroid;
    std::map<std::pair<int, int>, double> count;
    for (std::size_t i : train) {
      const auto key = std::make_pair(corpus.clips[i].persona_id, corpus.clips[i].content_id);
      auto& c = centroid[key];
      c.resize(d, 0.0);
      for (std::size_t k = 0; k < d; ++k) c[k] += (feats[i][k] - mu[k]) / sd[k];
      count[key] += 1.0;
    }
    for (auto& [key, c] : centroid) for (auto& v : c) v /= count[key];
    std::size_t correct = 0;
    const auto test = corpus.Indices(Split::kTest);
    for (std::size_t i : test) {
      int best = -1;
      double best_d = 1e300;
      for (int p = 1; p <= int(corpus.spec.personas); ++p) {
        const auto& c = centroid[{p, corpus.clips[i].content_id}];
        double dist = 0.0;
        for (std::size_t k = 0; k < d; ++k) dist += std::pow((feats[i][k] - mu[k]) / sd[k] - c[k], 2);
        if (dist < best_d) {
          best_d = dist;
          best = p;
        }
      }
      correct += best == corpus.clips[i].persona_id;
    }
    CHECK(double(correct) / double(test.size()) > 0.9);
  }

  TEST_CASE("invalid specs are rejected") {
    CorpusSpec spec;
    spec.contents = 7;
    CHECK_THROWS_AS(GenerateCorpus(spec), ConfigError);
    spec = {};
    spec.frames = 20;
    CHECK_THROWS_AS(GenerateCorpus(spec), ConfigError);
  }
}

TEST_SUITE("normalizer") {
  TEST_CASE("fitted statistics whiten the fitting set and spare contacts") {
    const auto corpus = GenerateCorpus({});
    std::vector<const MotionClip*> clips;
    for (std::size_t i : corpus.Indices(Split::kPretrain)) clips.push_back(&corpus.clips[i]);
    const auto n = FeatureNormalizer::Fit(clips);
    std::vector<double> sum(kChannels, 0.0), sq(kChannels, 0.0);
    double count = 0.0;
    for (const auto* clip : clips) {
      const auto z = n.Normalize(clip->features);
      for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t c = 0; c < kChannels; ++c) {
          sum[c] += z(i, c);
          sq[c] += double(z(i, c)) * z(i, c);
        }
        count += 1;
      }
    }
    for (std::size_t c = 0; c < channel::kFirstContact; ++c) {
      CAPTURE(c);
      CHECK(std::abs(sum[c] / count) < 1e-3);
      const double var = sq[c] / count - std::pow(sum[c] / count, 2);
      // Floored channels have variance below one.
      CHECK(var <= 1.0 + 1e-3);
      if (n.std[c] > 0.1f) CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
    for (std::size_t c = channel::kFirstContact; c < kChannels; ++c) {
      CHECK(n.mean[c] == 0.0f);
      CHECK(n.std[c] == 1.0f);
    }
    const auto& x = clips[3]->features;
    CHECK(nn::MaxAbsDiff(n.Denormalize(n.Normalize(x)), x) < 1e-5f);
  }

  TEST_CASE("fitting on nothing fails") {
    CHECK_THROWS_AS(FeatureNormalizer::Fit({}), DataError);
  }
}
