#include <atomic>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "pbooth/errors.h"
#include "pbooth/nn/autograd.h"
#include "pbooth/nn/blob_store.h"
#include "pbooth/nn/layers.h"
#include "pbooth/nn/optim.h"
#include "pbooth/nn/parallel.h"
#include "test_support.h"

using namespace pbooth;
using nn::Tensor;
using nn::Var;
namespace pt = pbooth::testing;

namespace {

Tensor<double> SoftmaxOf(const std::vector<double>& row) {
  auto out = nn::SoftmaxRows(Var<double>::Constant(Tensor<double>::RowVector(row)));
  return out.value();
}

// Loss sum(op(x) * R) for a fixed random R, so every output entry matters.
pt::LossBuilder Probe(nn::Parameter<double>& x, const Tensor<double>& weights,
                      std::function<Var<double>(const Var<double>&)> op) {
  return [&x, weights, op](nn::Graph<double>& g) {
    return nn::Sum(nn::Mul(op(g.Bind(x)), Var<double>::Constant(weights)));
  };
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("linear layer on the identity returns the identity") {
    nn::Rng rng(1);
    nn::Linear<double> layer("l", 2, 2, rng);
    layer.weight().value = Tensor<double>({2, 2}, {1, 0, 0, 1});
    layer.bias().value = Tensor<double>::Matrix(1, 2);
    nn::Graph<double> g(false);
    const auto y = layer(g, Var<double>::Constant(Tensor<double>({2, 2}, {1, 0, 0, 1})));
    CHECK(y.value() == Tensor<double>({2, 2}, {1, 0, 0, 1}));
  }

  TEST_CASE("linear layer adds its bias") {
    nn::Rng rng(1);
    nn::Linear<double> layer("l", 2, 2, rng);
    layer.weight().value = Tensor<double>({2, 2}, {1, 0, 0, 1});
    layer.bias().value = Tensor<double>::RowVector({3, 3});
    nn::Graph<double> g(false);
    const auto y = layer(g, Var<double>::Constant(Tensor<double>::RowVector({1, 2})));
    CHECK(y.value() == Tensor<double>::RowVector({4, 5}));
  }

  TEST_CASE("matrix product matches a triple loop") {
    nn::Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t m = 1 + rng.Index(9), k = 1 + rng.Index(9), n = 1 + rng.Index(9);
      const auto a = pt::RandomMatrix<float>(m, k, rng);
      const auto b = pt::RandomMatrix<float>(k, n, rng);
      CHECK(nn::MaxAbsDiff(nn::MatMul(a, b), pt::NaiveMatMul(a, b)) <= 1e-6f * float(k));
    }
    const auto a = pt::RandomMatrix<double>(3, 4, rng);
    const auto b = pt::RandomMatrix<double>(4, 2, rng);
    CHECK(nn::MaxAbsDiff(nn::MatMul(a, b), pt::NaiveMatMul(a, b)) <= 1e-12);
  }

  TEST_CASE("transposed products agree with explicit transposes") {
    nn::Rng rng(3);
    const auto a = pt::RandomMatrix<double>(5, 3, rng);
    const auto b = pt::RandomMatrix<double>(4, 3, rng);
    Tensor<double> out;
    nn::Gemm(a, false, b, true, out, false);
    const auto bt = nn::Transpose(Var<double>::Constant(b)).value();
    CHECK(nn::MaxAbsDiff(out, pt::NaiveMatMul(a, bt)) <= 1e-12);
  }

  TEST_CASE("shape mismatch raises a dimension error") {
    const auto a = Tensor<float>::Matrix(2, 3);
    const auto b = Tensor<float>::Matrix(2, 3);
    CHECK_THROWS_AS(nn::MatMul(a, b), DimensionError);
  }
}

TEST_SUITE("softmax") {
  TEST_CASE("equal logits split evenly") {
    const auto p = SoftmaxOf({0, 0});
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-15));
  }

  TEST_CASE("large equal logits do not overflow") {
    const auto p = SoftmaxOf({1000, 1000});
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);
  }

  TEST_CASE("two-element case matches direct evaluation") {
    const auto p = SoftmaxOf({0.9, 0.5});
    const double e = std::exp(0.4);
    CHECK(p[0] == doctest::Approx(e / (1 + e)).epsilon(1e-12));
    CHECK(p[0] == doctest::Approx(0.59869).epsilon(1e-5));
    CHECK(p[1] == doctest::Approx(0.40131).epsilon(1e-5));
  }

  TEST_CASE("rows sum to one for arbitrary finite inputs") {
    nn::Rng rng(4);
    for (double scale : {1e-3, 1.0, 30.0, 1e3}) {
      const auto x = pt::RandomMatrix<double>(6, 9, rng, scale);
      const auto p = nn::SoftmaxRows(Var<double>::Constant(x)).value();
      for (std::size_t r = 0; r < p.rows(); ++r) {
        double s = 0.0;
        for (double v : p.row(r)) {
          CHECK(std::isfinite(v));
          s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        const auto oracle = pt::NaiveSoftmax(pt::RowOf(x, r));
        for (std::size_t c = 0; c < p.cols(); ++c) CHECK(p(r, c) == doctest::Approx(oracle[c]));
      }
    }
  }
}

TEST_SUITE("attention") {
  TEST_CASE("a single token attends only to itself") {
    nn::Rng rng(5);
    nn::MultiHeadAttention<double> attn("a", 8, 2, rng);
    const auto x = pt::RandomMatrix<double>(1, 8, rng);
    nn::Graph<double> g(false);
    const auto y = attn.SelfAttention(g, Var<double>::Constant(x));
    const auto v = attn.value()(g, Var<double>::Constant(x));
    const auto expected = attn.output()(g, v);
    CHECK(nn::MaxAbsDiff(y.value(), expected.value()) <= 1e-12);
  }

  TEST_CASE("permuting input rows permutes output rows") {
    nn::Rng rng(6);
    nn::MultiHeadAttention<double> attn("a", 8, 2, rng);
    const auto x = pt::RandomMatrix<double>(5, 8, rng);
    const auto perm = nn::Permutation(5, rng);
    Tensor<double> xp = x;
    for (std::size_t i = 0; i < 5; ++i) {
      std::copy(x.row(perm[i]).begin(), x.row(perm[i]).end(), xp.row(i).begin());
    }
    nn::Graph<double> g(false);
    const auto y = attn.SelfAttention(g, Var<double>::Constant(x)).value();
    const auto yp = attn.SelfAttention(g, Var<double>::Constant(xp)).value();
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t c = 0; c < 8; ++c) CHECK(yp(i, c) == doctest::Approx(y(perm[i], c)));
    }
  }

  TEST_CASE("two heads on 4x8 match a per-head loop") {
    nn::Rng rng(7);
    nn::MultiHeadAttention<double> attn("a", 8, 2, rng);
    const auto x = pt::RandomMatrix<double>(4, 8, rng);
    nn::Graph<double> g(false);
    const auto y = attn.SelfAttention(g, Var<double>::Constant(x)).value();

    auto project = [&](nn::Linear<double>& l) {
      Tensor<double> out = pt::NaiveMatMul(x, l.weight().value);
      for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += l.bias().value[c];
      }
      return out;
    };
    const auto q = project(attn.query());
    const auto k = project(attn.key());
    const auto v = project(attn.value());
    Tensor<double> merged = Tensor<double>::Matrix(4, 8);
    for (std::size_t h = 0; h < 2; ++h) {
      for (std::size_t i = 0; i < 4; ++i) {
        std::vector<double> scores(4);
        for (std::size_t j = 0; j < 4; ++j) {
          double s = 0.0;
          for (std::size_t d = 0; d < 4; ++d) s += q(i, h * 4 + d) * k(j, h * 4 + d);
          scores[j] = s / 2.0;
        }
        const auto w = pt::NaiveSoftmax(scores);
        for (std::size_t d = 0; d < 4; ++d) {
          double s = 0.0;
          for (std::size_t j = 0; j < 4; ++j) s += w[j] * v(j, h * 4 + d);
          merged(i, h * 4 + d) = s;
        }
      }
    }
    Tensor<double> expected = pt::NaiveMatMul(merged, attn.output().weight().value);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 8; ++c) expected(r, c) += attn.output().bias().value[c];
    }
    CHECK(nn::MaxAbsDiff(y, expected) <= 1e-6);
  }

  TEST_CASE("width not divisible by heads is rejected") {
    nn::Rng rng(8);
    CHECK_THROWS_AS(nn::MultiHeadAttention<float>("a", 10, 4, rng), ConfigError);
  }
}

TEST_SUITE("autodiff") {
  TEST_CASE("linear loss gives the outer-product gradient") {
    nn::Rng rng(9);
    nn::Parameter<double> w("w", pt::RandomMatrix<double>(3, 2, rng));
    const auto x = pt::RandomMatrix<double>(1, 3, rng);
    nn::Graph<double> g;
    const auto loss = nn::Sum(nn::MatMul(Var<double>::Constant(x), g.Bind(w)));
    g.Backward(loss);
    g.AccumulateGrads();
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 2; ++j) CHECK(w.grad(i, j) == x[i]);
    }
  }

  TEST_CASE("half squared norm has the parameter as its gradient") {
    nn::Rng rng(10);
    nn::Parameter<double> w("w", pt::RandomMatrix<double>(4, 3, rng));
    nn::Graph<double> g;
    const auto bound = g.Bind(w);
    const auto loss = nn::Scale(nn::Sum(nn::Mul(bound, bound)), 0.5);
    g.Backward(loss);
    g.AccumulateGrads();
    CHECK(nn::MaxAbsDiff(w.grad, w.value) == 0.0);
  }

  TEST_CASE("every op passes a central-difference check") {
    nn::Rng rng(11);
    nn::Parameter<double> x("x", pt::RandomMatrix<double>(4, 6, rng));
    nn::Parameter<double> y("y", pt::RandomMatrix<double>(4, 6, rng));
    nn::Parameter<double> m("m", pt::RandomMatrix<double>(6, 3, rng));
    nn::Parameter<double> row("row", pt::RandomMatrix<double>(1, 6, rng));
    nn::Parameter<double> s("s", Tensor<double>::Scalar(0.7));
    nn::Parameter<double> prob("prob", Tensor<double>({4, 6}, 0.0));
    for (auto& v : prob.value.values()) v = rng.Uniform(0.05, 0.95);
    const auto r46 = pt::RandomMatrix<double>(4, 6, rng);
    const auto r43 = pt::RandomMatrix<double>(4, 3, rng);
    const auto r64 = pt::RandomMatrix<double>(6, 4, rng);

    struct Case {
      const char* name;
      pt::LossBuilder build;
      nn::ParameterList<double> params;
    };
    auto bin = [&](auto op, const Tensor<double>& w) {
      return [&, op, w](nn::Graph<double>& g) {
        return nn::Sum(nn::Mul(op(g.Bind(x), g.Bind(y)), Var<double>::Constant(w)));
      };
    };
    std::vector<Case> cases = {
        {"matmul",
         [&](nn::Graph<double>& g) {
           return nn::Sum(nn::Mul(nn::MatMul(g.Bind(x), g.Bind(m)), Var<double>::Constant(r43)));
         },
         {&x, &m}},
        {"matmul_nt",
         [&](nn::Graph<double>& g) {
           const auto p = nn::MatMulNT(g.Bind(x), g.Bind(y));
           return nn::Sum(nn::Mul(p, Var<double>::Constant(pt::NaiveMatMul(r46, nn::Transpose(Var<double>::Constant(r46)).value()))));
         },
         {&x, &y}},
        {"add", bin([](auto a, auto b) { return nn::Add(a, b); }, r46), {&x, &y}},
        {"sub", bin([](auto a, auto b) { return nn::Sub(a, b); }, r46), {&x, &y}},
        {"mul", bin([](auto a, auto b) { return nn::Mul(a, b); }, r46), {&x, &y}},
        {"add_bias",
         [&](nn::Graph<double>& g) {
           return nn::Sum(nn::Mul(nn::AddBias(g.Bind(x), g.Bind(row)), Var<double>::Constant(r46)));
         },
         {&x, &row}},
        {"scale_by",
         [&](nn::Graph<double>& g) {
           return nn::Sum(nn::Mul(nn::ScaleBy(g.Bind(x), g.Bind(s)), Var<double>::Constant(r46)));
         },
         {&x, &s}},
        {"tanh", Probe(x, r46, [](auto a) { return nn::Tanh(a); }), {&x}},
        {"gelu", Probe(x, r46, [](auto a) { return nn::Gelu(a); }), {&x}},
        {"sqrt", Probe(prob, r46, [](auto a) { return nn::Sqrt(a); }), {&prob}},
        {"scale", Probe(x, r46, [](auto a) { return nn::Scale(a, 1.7); }), {&x}},
        {"add_scalar", Probe(x, r46, [](auto a) { return nn::AddScalar(a, 0.3); }), {&x}},
        {"transpose", Probe(x, r64, [](auto a) { return nn::Transpose(a); }), {&x}},
        {"softmax_rows", Probe(x, r46, [](auto a) { return nn::SoftmaxRows(a); }), {&x}},
        {"normalize_rows", Probe(x, r46, [](auto a) { return nn::NormalizeRows(a); }), {&x}},
        {"slice_rows",
         [&](nn::Graph<double>& g) { return nn::Sum(nn::Mul(nn::SliceRows(g.Bind(x), 1, 2), Var<double>::Constant(r46.RowSlice(0, 2)))); },
         {&x}},
        {"slice_cols",
         [&](nn::Graph<double>& g) { return nn::Sum(nn::Mul(nn::SliceCols(g.Bind(x), 2, 3), Var<double>::Constant(r43))); },
         {&x}},
        {"concat_rows",
         [&](nn::Graph<double>& g) {
           const auto c = nn::ConcatRows<double>({g.Bind(row), g.Bind(x)});
           return nn::Sum(nn::Mul(nn::SliceRows(c, 0, 4), Var<double>::Constant(r46)));
         },
         {&x, &row}},
        {"concat_cols",
         [&](nn::Graph<double>& g) {
           const auto c = nn::ConcatCols<double>({g.Bind(x), g.Bind(y)});
           return nn::Sum(nn::Mul(nn::SliceCols(c, 3, 6), Var<double>::Constant(r46)));
         },
         {&x, &y}},
        {"mean_rows",
         [&](nn::Graph<double>& g) { return nn::Sum(nn::Mul(nn::MeanRows(g.Bind(x)), g.Bind(row))); },
         {&x, &row}},
        {"broadcast_rows",
         [&](nn::Graph<double>& g) { return nn::Sum(nn::Mul(nn::BroadcastRows(g.Bind(row), 4), Var<double>::Constant(r46))); },
         {&row}},
        {"gather_rows",
         [&](nn::Graph<double>& g) {
           return nn::Sum(nn::Mul(nn::GatherRows<double>(g.Bind(x), {3, 0, 3, 1}), Var<double>::Constant(r46)));
         },
         {&x}},
        {"mean", [&](nn::Graph<double>& g) { return nn::Mean(nn::Mul(g.Bind(x), g.Bind(y))); }, {&x, &y}},
        {"mse", [&](nn::Graph<double>& g) { return nn::MeanSquaredError(g.Bind(x), g.Bind(y)); }, {&x, &y}},
        {"bce",
         [&](nn::Graph<double>& g) {
           Tensor<double> target = r46;
           for (auto& v : target.values()) v = v > 0 ? 1.0 : 0.0;
           return nn::BinaryCrossEntropy(g.Bind(prob), target);
         },
         {&prob}},
        {"softmax_cross_entropy",
         [&](nn::Graph<double>& g) {
           return nn::SoftmaxCrossEntropy(nn::MatMulNT(g.Bind(x), g.Bind(y)), {1, 0, 3, 2});
         },
         {&x, &y}},
        {"softmax_cross_entropy_excluding_diagonal",
         [&](nn::Graph<double>& g) {
           return nn::SoftmaxCrossEntropy(nn::MatMulNT(g.Bind(x), g.Bind(y)), {1, 0, 3, 2}, true);
         },
         {&x, &y}},
        {"layer_norm",
         [&](nn::Graph<double>& g) {
           return nn::Sum(nn::Mul(nn::LayerNorm(g.Bind(x), g.Bind(row), g.Bind(row)), Var<double>::Constant(r46)));
         },
         {&x, &row}},
    };
    for (auto& c : cases) {
      CAPTURE(c.name);
      const auto r = pt::CheckGradients(c.build, c.params, 12);
      CHECK(r.max_relative_error < 1e-3);
      CHECK(r.max_abs_gradient > 0.0);
    }
  }

  TEST_CASE("layers pass a central-difference check") {
    nn::Rng rng(12);
    nn::TransformerBlock<double> block("b", 8, 2, 16, rng);
    nn::Mlp<double> mlp("m", 8, 12, 5, rng);
    nn::ParameterList<double> params;
    block.CollectParameters(params);
    mlp.CollectParameters(params);
    // Perturb the LayerNorm gains and biases away from their initial values.
    for (auto* p : params) {
      if (p->name.find("norm") != std::string::npos) {
        for (auto& v : p->value.values()) v += 0.3 * rng.Normal();
      }
    }
    const auto x = pt::RandomMatrix<double>(5, 8, rng);
    const auto w = pt::RandomMatrix<double>(5, 5, rng);
    const auto r = pt::CheckGradients(
        [&](nn::Graph<double>& g) {
          const auto h = block(g, Var<double>::Constant(x));
          return nn::Sum(nn::Mul(mlp(g, h), Var<double>::Constant(w)));
        },
        params, 4);
    CHECK(r.max_relative_error < 1e-3);
  }

  TEST_CASE("frozen parameters receive no gradient") {
    nn::Rng rng(13);
    nn::Linear<double> a("a", 3, 3, rng), b("b", 3, 1, rng);
    nn::ParameterList<double> pa, pb;
    a.CollectParameters(pa);
    b.CollectParameters(pb);
    nn::SetTrainable(pa, false);
    nn::Graph<double> g;
    const auto loss = nn::Sum(b(g, a(g, Var<double>::Constant(pt::RandomMatrix<double>(2, 3, rng)))));
    g.Backward(loss);
    g.AccumulateGrads();
    CHECK(nn::GradNorm(pa) == 0.0);
    CHECK(nn::GradNorm(pb) > 0.0);
  }
}

TEST_SUITE("optimizer") {
  TEST_CASE("zero gradient without decay leaves parameters unchanged") {
    nn::Parameter<float> p("p", Tensor<float>::RowVector({1.0f, -2.0f}));
    nn::AdamW<float> opt({0.1, 0.0});
    opt.Step({&p});
    CHECK(p.value == Tensor<float>::RowVector({1.0f, -2.0f}));
  }

  TEST_CASE("first step moves by the learning rate") {
    nn::Parameter<double> p("p", Tensor<double>::Scalar(1.0));
    p.grad[0] = 1.0;
    nn::AdamW<double> opt({0.1, 0.0, 0.9, 0.999, 1e-8});
    opt.Step({&p});
    // Bias-corrected m/sqrt(v) is exactly 1 after one step.
    CHECK(p.value[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
  }

  TEST_CASE("decoupled weight decay shrinks by lr * wd * p") {
    nn::Parameter<double> p("p", Tensor<double>::Scalar(2.0));
    nn::AdamW<double> opt({0.1, 0.5});
    opt.Step({&p});
    CHECK(p.value[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0).epsilon(1e-12));
  }

  TEST_CASE("non-finite gradients are refused") {
    nn::Parameter<float> p("weights", Tensor<float>::Scalar(1.0f));
    p.grad[0] = std::nanf("");
    nn::AdamW<float> opt({0.1, 0.0});
    CHECK_THROWS_WITH_AS(opt.Step({&p}), doctest::Contains("weights"), NumericError);
  }

  TEST_CASE("invalid configuration is rejected") {
    CHECK_THROWS_AS(nn::OptimizerConfig({-1.0}).Validate(), ConfigError);
  }
}

TEST_SUITE("random") {
  TEST_CASE("streams are reproducible and forks are independent") {
    nn::Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.NextU64() == b.NextU64());
    nn::Rng base(42);
    CHECK(base.Fork(1).NextU64() != base.Fork(2).NextU64());
    CHECK(base.Fork(1).NextU64() == nn::Rng(42).Fork(1).NextU64());
  }

  TEST_CASE("permutation covers every index once") {
    nn::Rng rng(3);
    auto p = nn::Permutation(50, rng);
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < 50; ++i) CHECK(p[i] == i);
  }
}

TEST_SUITE("parallel") {
  TEST_CASE("results do not depend on the worker count") {
    std::vector<double> one(257), many(257);
    auto body = [](std::vector<double>& out) {
      return [&out](std::size_t i) {
        nn::Rng rng(i);
        out[i] = rng.Normal();
      };
    };
    nn::ParallelFor(257, 1, body(one));
    nn::ParallelFor(257, 7, body(many));
    CHECK(one == many);
  }

  TEST_CASE("every index runs exactly once") {
    std::vector<std::atomic<int>> hits(100);
    nn::ParallelFor(100, 4, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
  }
}

TEST_SUITE("storage") {
  TEST_CASE("crc32 matches the standard check value") {
    const std::string s = "123456789";
    CHECK(io::Crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}) == 0xCBF43926u);
  }

  TEST_CASE("float encoding is little-endian binary32") {
    const std::vector<float> v = {1.0f, -2.5f};
    const auto bytes = io::EncodeFloats(v);
    const std::vector<std::uint8_t> expected = {0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x20, 0xc0};
    CHECK(bytes == expected);
    CHECK(io::DecodeFloats(bytes) == v);
    CHECK_THROWS_AS(io::DecodeFloats(std::vector<std::uint8_t>(3)), IntegrityError);
  }

  TEST_CASE("archives round-trip and detect corruption") {
    const auto dir = pt::ScratchDir("archive");
    nn::Rng rng(5);
    nn::Linear<float> layer("layer", 4, 3, rng);
    nn::ParameterList<float> params;
    layer.CollectParameters(params);
    io::TensorArchive archive;
    archive.stage = "unit";
    archive.metadata["k"] = "v";
    io::StoreParameters(params, archive);
    archive.Save(dir);

    const auto loaded = io::TensorArchive::Load(dir);
    CHECK(loaded.stage == "unit");
    CHECK(loaded.metadata.at("k") == "v");
    nn::Linear<float> other("layer", 4, 3, rng);
    nn::ParameterList<float> other_params;
    other.CollectParameters(other_params);
    io::RestoreParameters(other_params, loaded);
    CHECK(other.weight().value == layer.weight().value);

    auto bytes = io::ReadBytes(dir / "tensors.bin");
    bytes[5] ^= 0x01;
    io::WriteBytes(dir / "tensors.bin", bytes);
    CHECK_THROWS_AS(io::TensorArchive::Load(dir), IntegrityError);
  }

  TEST_CASE("restoring into a differently shaped parameter fails") {
    const auto dir = pt::ScratchDir("archive-shape");
    nn::Rng rng(6);
    nn::Linear<float> small("layer", 2, 2, rng), large("layer", 3, 2, rng);
    nn::ParameterList<float> ps, pl;
    small.CollectParameters(ps);
    large.CollectParameters(pl);
    io::TensorArchive archive;
    io::StoreParameters(ps, archive);
    CHECK_THROWS_AS(io::RestoreParameters(pl, archive), DimensionError);
  }
}
