#include <cmath>
#include <map>

#include "doctest.h"
#include "pbooth/data/corpus.h"
#include "pbooth/errors.h"
#include "pbooth/persona/extractor.h"
#include "test_support.h"

using namespace pbooth;
using nn::Tensor;
using nn::Var;
namespace pt = pbooth::testing;

namespace {

persona::PersonaConfig SmallConfig() {
  persona::PersonaConfig c;
  c.d_model = 16;
  c.d_text = 12;
  c.d_proj = 8;
  c.heads = 2;
  c.blocks = 1;
  c.ff_width = 24;
  return c;
}

double Loss(const Tensor<double>& h, const std::vector<int>& labels,
            const std::vector<std::size_t>& positives, double tau) {
  return persona::PersonaCohesionLoss(Var<double>::Constant(h), labels, positives, tau).value()[0];
}

}  // namespace

TEST_SUITE("extractor") {
  TEST_CASE("Y is exactly the first row of V*") {
    nn::Rng rng(1);
    persona::PersonaExtractor<double> extractor(SmallConfig(), rng);
    for (std::size_t frames : {1u, 7u, 48u}) {
      nn::Graph<double> g(false);
      const auto f = Var<double>::Constant(pt::RandomMatrix<double>(frames, 16, rng));
      const auto out = extractor.Extract(g, f);
      CHECK(out.v_star.rows() == frames + 1);
      CHECK(out.y.value() == out.v_star.value().RowSlice(0, 1));
      CHECK(out.p_star.cols() == 12);
      nn::Graph<double> again(false);
      CHECK(extractor.Extract(again, f).v_star.value() == out.v_star.value());
    }
  }
}

TEST_SUITE("cohesion loss") {
  TEST_CASE("two orthogonal clusters at unit temperature") {
    const Tensor<double> h({4, 2}, {1, 0, 1, 0, 0, 1, 0, 1});
    const double loss = Loss(h, {1, 1, 2, 2}, {1, 0, 3, 2}, 1.0);
    const double e = std::exp(1.0);
    CHECK(loss == doctest::Approx(-std::log(e / (e + 2.0))).epsilon(1e-12));
    CHECK(loss == doctest::Approx(0.5514).epsilon(1e-4));
  }

  TEST_CASE("identical outputs give log(2N - 1)") {
    const Tensor<double> h({4, 3}, {1, 2, 3, 1, 2, 3, 1, 2, 3, 1, 2, 3});
    CHECK(Loss(h, {1, 1, 2, 2}, {1, 0, 3, 2}, 0.3) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  }

  TEST_CASE("matches a double-loop oracle on random batches") {
    nn::Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t pairs = 1 + rng.Index(8);
      const std::size_t n = 2 * pairs;
      std::vector<int> labels(n);
      for (std::size_t m = 0; m < pairs; ++m) labels[2 * m] = labels[2 * m + 1] = 1 + int(rng.Index(3));
      // Any same-label row other than the anchor may serve as the positive.
      std::vector<std::size_t> positives(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> options;
        for (std::size_t j = 0; j < n; ++j) {
          if (j != i && labels[j] == labels[i]) options.push_back(j);
        }
        positives[i] = options[rng.Index(options.size())];
      }
      const double tau = rng.Uniform(0.05, 1.0);
      const auto h = pt::RandomMatrix<double>(n, 6, rng);
      CHECK(Loss(h, labels, positives, tau) ==
            doctest::Approx(pt::CohesionOracle(h, positives, tau)).epsilon(1e-9));
    }
  }

  TEST_CASE("uniform positive scaling of the projections changes nothing") {
    nn::Rng rng(3);
    const auto h = pt::RandomMatrix<double>(8, 6, rng);
    const std::vector<int> labels = {1, 1, 2, 2, 3, 3, 1, 1};
    const auto positives = persona::PairedPositives(labels);
    const double base = Loss(h, labels, positives, 0.1);
    for (double c : {0.05, 0.5, 7.0, 1e4}) {
      Tensor<double> scaled = h;
      for (auto& v : scaled.values()) v *= c;
      CHECK(std::abs(Loss(scaled, labels, positives, 0.1) - base) < 1e-6);
    }
  }

  TEST_CASE("raising only the positive-pair cosine lowers the loss") {
    // Rows 0/1 live in span(e0, e3); rows 2/3 in span(e1, e2), so turning
    // row 1 toward row 0 changes no other similarity.
    nn::Rng rng(4);
    const double a = rng.Uniform(0, 6.28), b = rng.Uniform(0, 6.28);
    double previous = 1e9;
    for (double theta : {1.4, 1.0, 0.6, 0.2, 0.0}) {
      const Tensor<double> h({4, 4}, {1, 0, 0, 0,
                                      std::cos(theta), 0, 0, std::sin(theta),
                                      0, std::cos(a), std::sin(a), 0,
                                      0, std::cos(b), std::sin(b), 0});
      const double loss = Loss(h, {1, 1, 2, 2}, {1, 0, 3, 2}, 0.5);
      CHECK(std::isfinite(loss));
      CHECK(loss < previous);
      previous = loss;
    }
  }

  TEST_CASE("malformed batches are rejected") {
    const Tensor<double> h({4, 2}, {1, 0, 1, 0, 0, 1, 0, 1});
    CHECK_THROWS_AS(Loss(h, {1, 2, 2, 1}, {1, 0, 3, 2}, 1.0), DataError);
    CHECK_THROWS_AS(Loss(h, {1, 1, 2, 2}, {0, 0, 3, 2}, 1.0), DataError);
    CHECK_THROWS_AS(Loss(h, {1, 1, 2, 2}, {1, 0, 9, 2}, 1.0), DataError);
    CHECK_THROWS_AS(persona::PairedPositives({1, 1, 2}), DataError);
    CHECK(persona::PairedPositives({5, 5, 6, 6}) == std::vector<std::size_t>{1, 0, 3, 2});
  }

  TEST_CASE("gradients through projection, extractor and class token") {
    nn::Rng rng(5);
    persona::PersonaExtractor<double> extractor(SmallConfig(), rng);
    nn::ParameterList<double> params;
    extractor.CollectParameters(params);
    std::vector<Tensor<double>> frames;
    for (int i = 0; i < 4; ++i) frames.push_back(pt::RandomMatrix<double>(5 + std::size_t(i), 16, rng));
    const std::vector<int> labels = {1, 1, 2, 2};
    const auto r = pt::CheckGradients(
        [&](nn::Graph<double>& g) {
          std::vector<Var<double>> ys;
          for (const auto& f : frames) ys.push_back(extractor.Extract(g, Var<double>::Constant(f)).y);
          return persona::PersonaCohesionLoss(extractor.Project(g, nn::ConcatRows(ys)), labels,
                                              persona::PairedPositives(labels), 0.1);
        },
        params, 4);
    CHECK(r.max_relative_error < 1e-3);
    bool class_token_checked = false;
    for (auto* p : params) class_token_checked |= p->name == "persona.class_token" && p->grad.MaxAbs() > 0;
    CHECK(class_token_checked);
  }
}

TEST_SUITE("positive sampling") {
  TEST_CASE("positives share the anchor's persona and never equal it") {
    const auto corpus = data::GenerateCorpus({});
    nn::Rng rng(6);
    for (std::size_t anchor : corpus.Indices(data::Split::kFinetune)) {
      const auto j = persona::SamplePositive(corpus, data::Split::kFinetune, anchor, rng);
      CHECK(j != anchor);
      CHECK(corpus.clips[j].persona_id == corpus.clips[anchor].persona_id);
      CHECK(corpus.splits[j] == data::Split::kFinetune);
    }
  }

  TEST_CASE("draws are uniform over the other group members") {
    data::CorpusSpec spec;
    spec.contents = 1;
    spec.takes = 5;  // with mirroring, 10 clips per persona
    const auto corpus = data::GenerateCorpus(spec);
    const auto group = corpus.PersonaGroup(data::Split::kFinetune, 2);
    REQUIRE(group.size() == 10);
    nn::Rng rng(7);
    std::map<std::size_t, int> counts;
    const int draws = 1000;
    for (int i = 0; i < draws; ++i) counts[persona::SamplePositive(corpus, data::Split::kFinetune, group[0], rng)]++;
    CHECK(counts.count(group[0]) == 0);
    CHECK(counts.size() == 9);
    const double p = 1.0 / 9.0;
    const double sigma = std::sqrt(draws * p * (1 - p));
    for (const auto& [idx, n] : counts) CHECK(std::abs(n - draws * p) <= 3 * sigma);
  }

  TEST_CASE("a singleton group cannot provide a positive") {
    data::CorpusSpec spec;
    spec.contents = 1;
    spec.takes = 1;
    spec.flip_augment = false;
    const auto corpus = data::GenerateCorpus(spec);
    nn::Rng rng(8);
    const auto anchor = corpus.Indices(data::Split::kFinetune)[0];
    CHECK_THROWS_AS(persona::SamplePositive(corpus, data::Split::kFinetune, anchor, rng), DataError);
  }
}
