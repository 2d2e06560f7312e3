#include <gtest/gtest.h>

#include "support.hpp"

using namespace signet;
using signet::testing::grad_check;
using signet::testing::random_tensor;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), Error);
  EXPECT_THROW(Tensor<float>({2, 0}, {}), Error);
  EXPECT_THROW(Tensor<float>(Shape{}, {1.0f}), Error);
  Tensor<float> t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.at({1, 2}), 6.0f);
  EXPECT_THROW(t.at({2, 0}), Error);
  EXPECT_THROW(t.item(), Error);
}

TEST(Tensor, GradBufferMatchesShape) {
  auto t = Tensor<double>::zeros({3, 4}, true);
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.grad_buffer().size(), t.numel());
  EXPECT_TRUE(t.has_grad());
  t.clear_grad();
  EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, CopiesShareStorageDetachDoesNot) {
  Tensor<float> a({2}, {1, 2});
  Tensor<float> b = a;
  b.mutable_data()[0] = 5;
  EXPECT_EQ(a.data()[0], 5.0f);
  auto c = a.detach();
  c.mutable_data()[0] = 7;
  EXPECT_EQ(a.data()[0], 5.0f);
  EXPECT_NE(a.id(), c.id());
}

TEST(Tape, NothingRecordedWithoutActiveTapeOrGradInputs) {
  Tensor<float> a({2}, {1, 2}, true);
  Tensor<float> b({2}, {3, 4});
  auto y = add(a, b);
  EXPECT_FALSE(y.requires_grad());
  Tape<float> tape;
  {
    Tape<float>::Scope scope(tape);
    auto z = add(b, b);
    EXPECT_EQ(tape.size(), 0u);
    auto w = add(a, b);
    EXPECT_EQ(tape.size(), 1u);
    EXPECT_TRUE(w.requires_grad());
  }
  EXPECT_EQ(Tape<float>::active(), nullptr);
}

TEST(Tape, ScopesNestAndRestore) {
  Tape<double> outer, inner;
  {
    Tape<double>::Scope s1(outer);
    {
      Tape<double>::Scope s2(inner);
      EXPECT_EQ(Tape<double>::active(), &inner);
    }
    EXPECT_EQ(Tape<double>::active(), &outer);
  }
  EXPECT_EQ(Tape<double>::active(), nullptr);
}

TEST(Tape, ReusedTensorAccumulates) {
  Tensor<double> x({3}, {1, -2, 3}, true);
  Tape<double> tape;
  Tensor<double> loss;
  {
    Tape<double>::Scope s(tape);
    loss = sum(add(mul(x, x), x));  // d/dx = 2x + 1
  }
  const auto g = tape.backward(loss);
  ASSERT_TRUE(g.contains(x));
  EXPECT_EQ(g.at(x).to_vector(), (std::vector<double>{3, -3, 7}));
}

TEST(Tape, EveryLeafOnceAndOnlyLeaves) {
  Tensor<double> a({2}, {1, 2}, true), b({2}, {3, 4}, true), unused({1}, {0}, true);
  Tape<double> tape;
  Tensor<double> loss;
  Tensor<double> mid;
  {
    Tape<double>::Scope s(tape);
    mid = mul(a, b);
    loss = sum(add(mid, a));
    add(unused, 1.0);  // recorded but does not reach the loss
  }
  const auto g = tape.backward(loss);
  EXPECT_EQ(g.size(), 2u);
  EXPECT_TRUE(g.contains(a));
  EXPECT_TRUE(g.contains(b));
  EXPECT_FALSE(g.contains(mid));
  EXPECT_FALSE(g.contains(unused));
}

TEST(Tape, BackwardTwiceGivesSameGradients) {
  Tensor<double> a({2}, {1, 2}, true);
  Tape<double> tape;
  Tensor<double> loss;
  {
    Tape<double>::Scope s(tape);
    loss = sum(square(a));
  }
  const auto g1 = tape.backward(loss).at(a).to_vector();
  const auto g2 = tape.backward(loss).at(a).to_vector();
  EXPECT_EQ(g1, g2);
}

TEST(Tape, DetachedLossHasNoGradients) {
  Tensor<double> a({2}, {1, 2}, true);
  Tape<double> tape;
  Tensor<double> loss;
  {
    Tape<double>::Scope s(tape);
    loss = sum(square(a)).detach();
  }
  EXPECT_TRUE(tape.backward(loss).empty());
}

TEST(Tape, NonScalarLossRejected) {
  Tensor<double> a({2}, {1, 2}, true);
  Tape<double> tape;
  Tensor<double> y;
  {
    Tape<double>::Scope s(tape);
    y = square(a);
  }
  EXPECT_THROW(tape.backward(y), Error);
}

TEST(Tape, NodesAreTopologicallyOrdered) {
  Tensor<double> a({2}, {1, 2}, true);
  Tape<double> tape;
  {
    Tape<double>::Scope s(tape);
    sum(sqrt(add(square(a), 1.0)));
  }
  std::set<const void*> seen{a.id()};
  for (const auto& node : tape.nodes()) {
    for (const auto& in : node.inputs) EXPECT_TRUE(seen.count(in.id())) << node.kind;
    seen.insert(node.output.id());
  }
}

TEST(Ops, ForwardValues) {
  Tensor<double> a({2, 2}, {1, 4, 9, 16});
  Tensor<double> b({2, 2}, {1, 1, 2, 2});
  EXPECT_EQ(sqrt(a).to_vector(), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(sub(a, b).to_vector(), (std::vector<double>{0, 3, 7, 14}));
  EXPECT_EQ(row_sum(a).to_vector(), (std::vector<double>{5, 25}));
  EXPECT_EQ(mean(a).item(), 7.5);
  EXPECT_EQ(max_with_scalar(add(b, -1.5), 0.0).to_vector(), (std::vector<double>{0, 0, 0.5, 0.5}));
  EXPECT_THROW(add(a, Tensor<double>({4}, {1, 2, 3, 4})), Error);
}

TEST(Ops, MaxWithScalarPropagatesNan) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto v = max_with_scalar(Tensor<double>({3}, {nan, -1.0, 2.0}), 0.0).to_vector();
  EXPECT_TRUE(std::isnan(v[0]));
  EXPECT_EQ(v[1], 0.0);
  EXPECT_EQ(v[2], 2.0);
}

TEST(Ops, MatmulMatchesNaive) {
  Rng rng(3);
  auto a = random_tensor<double>({5, 7}, rng);
  auto b = random_tensor<double>({7, 3}, rng);
  const auto c = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 7; ++k) s += a.at({i, k}) * b.at({k, j});
      EXPECT_NEAR(c.at({i, j}), s, 1e-14);
    }
  }
  EXPECT_THROW(matmul(a, a), Error);
}

TEST(Ops, GradientsMatchFiniteDifferences) {
  Rng rng(11);
  auto a = random_tensor<double>({4, 5}, rng, 0.5, 2.0);
  auto b = random_tensor<double>({4, 5}, rng, 0.5, 2.0);
  auto m = random_tensor<double>({5, 3}, rng);
  const auto r = grad_check<double>(
      {a, b, m},
      [&] {
        auto x = add(mul(a, b), scalar_mul(sqrt(a), 0.7));
        auto y = sub(square(x), b);
        auto z = max_with_scalar(add(y, -1.0), 0.25);
        return add(mean(row_sum(matmul(z, m))), sum(y));
      },
      100, rng);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(Ops, SqrtGradientAtZeroIsZero) {
  Tensor<double> a({2}, {0, 4}, true);
  Tape<double> tape;
  Tensor<double> loss;
  {
    Tape<double>::Scope s(tape);
    loss = sum(sqrt(a));
  }
  const auto g = tape.backward(loss).at(a).to_vector();
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.25);
}

TEST(Ops, CastRoundTrip) {
  Tensor<float> f({3}, {1.5f, -2.25f, 3.0f});
  const auto d = cast<double>(f);
  EXPECT_EQ(d.to_vector(), (std::vector<double>{1.5, -2.25, 3.0}));
  EXPECT_EQ(cast<float>(d).to_vector(), f.to_vector());
}

TEST(Rng, DeriveSeedSeparatesStreams) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, "a"), derive_seed(1, "b"));
  EXPECT_EQ(derive_seed(9, "writer"), derive_seed(9, "writer"));
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(uniform_index(a, 17), uniform_index(b, 17));
}

TEST(Rng, UniformIndexCoversRange) {
  Rng rng(1);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[uniform_index(rng, 7)];
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Threads, ResultsIndependentOfWorkerCount) {
  Rng rng(2);
  auto a = random_tensor<float>({33, 40}, rng);
  auto b = random_tensor<float>({40, 9}, rng);
  set_num_threads(1);
  const auto one = matmul(a, b).to_vector();
  set_num_threads(3);
  const auto three = matmul(a, b).to_vector();
  set_num_threads(1);
  EXPECT_EQ(one, three);
}
