#include <gtest/gtest.h>

#include <cmath>

#include "nirgnn/encoder.hpp"
#include "nirgnn/ingest/dataset.hpp"
#include "nirgnn/ingest/toy.hpp"
#include "nirgnn/zeroshot.hpp"
#include "support/gradcheck.hpp"

namespace ad = nirgnn::ad;
namespace ing = nirgnn::ingest;
using testing_support::gradcheck;
using testing_support::random_tensor;
using testing_support::weighted_sum;

namespace {

// Direct definition on plain numbers: softmax both, sum sqrt(p q), -log.
double bc_ref(const std::vector<double>& v, const std::vector<double>& w) {
  auto softmax = [](const std::vector<double>& x) {
    const double m = *std::max_element(x.begin(), x.end());
    std::vector<double> p(x.size());
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += p[i] = std::exp(x[i] - m);
    for (double& e : p) e /= s;
    return p;
  };
  const auto p = softmax(v), q = softmax(w);
  double rho = 0;
  for (std::size_t i = 0; i < p.size(); ++i) rho += std::sqrt(p[i] * q[i]);
  return rho > 1e-12 ? -std::log(rho) : 0.0;
}

std::vector<double> row(const ad::Tensor& t, std::size_t i) {
  std::vector<double> r(t.cols());
  for (std::size_t j = 0; j < t.cols(); ++j) r[j] = t.at(i, j);
  return r;
}

double bc(const std::vector<double>& v, const std::vector<double>& w) {
  return nirgnn::bhattacharyya(ad::Tensor::matrix(1, v.size(), v), ad::Tensor::matrix(1, w.size(), w)).item();
}

}  // namespace

TEST(Theta, ZeroWeightsGiveOutputBias) {
  ad::ParamStore store;
  auto p = nirgnn::ThetaParams::create(store, 3, 6, 4, 1);
  std::fill(p.o_w.mutable_data().begin(), p.o_w.mutable_data().end(), 0.0);
  ad::Rng rng(1);
  const auto out = nirgnn::theta(p, random_tensor(rng, {2, 3}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(out.at(i, j), p.o_b.at(0, j));
}

TEST(Theta, MatchesLoopFormulaAndRejectsWrongWidth) {
  ad::ParamStore store;
  const auto p = nirgnn::ThetaParams::create(store, 2, 3, 2, 5);
  const auto atr = ad::Tensor::matrix(1, 2, {0.3, -0.8});
  const auto out = nirgnn::theta(p, atr);
  for (std::size_t j = 0; j < 2; ++j) {
    double s = p.o_b.at(0, j);
    for (std::size_t k = 0; k < 3; ++k) {
      const double h = std::tanh(0.3 * p.h_w.at(0, k) - 0.8 * p.h_w.at(1, k) + p.h_b.at(0, k));
      s += h * p.o_w.at(k, j);
    }
    EXPECT_NEAR(out.at(0, j), s, 1e-14);
  }
  EXPECT_THROW(nirgnn::theta(p, ad::Tensor::zeros({1, 3})), nirgnn::DimensionError);
  EXPECT_TRUE(store.contains("zeroshot.theta.h_w"));
  EXPECT_TRUE(store.contains("zeroshot.theta.o_b"));
}

TEST(Theta, Gradcheck) {
  ad::ParamStore store;
  const auto p = nirgnn::ThetaParams::create(store, 3, 4, 2, 9);
  ad::Rng rng(2);
  auto atr = random_tensor(rng, {3, 3});
  const auto r = gradcheck({atr, p.h_w, p.h_b, p.o_w, p.o_b}, [&] { return weighted_sum(nirgnn::theta(p, atr)); });
  EXPECT_LT(r.max_rel, 1e-4) << r.worst;
}

TEST(Bhattacharyya, HandValue) {
  // p = softmax([0,0]) = [0.5,0.5]; q = [0.9,0.1] via logits log(0.9), log(0.1).
  const double expected = -std::log(std::sqrt(0.45) + std::sqrt(0.05));
  EXPECT_NEAR(expected, 0.1115718, 1e-6);
  EXPECT_NEAR(bc({0.0, 0.0}, {std::log(0.9), std::log(0.1)}), expected, 1e-12);
  EXPECT_EQ(bc({0.0, 0.0}, {0.0, 0.0}), 0.0);
}

TEST(Bhattacharyya, DisjointLimitTakesZeroBranch) {
  EXPECT_EQ(bc({400.0, -400.0}, {-400.0, 400.0}), 0.0);
}

TEST(Bhattacharyya, PropertiesOnRandomPairs) {
  ad::Rng rng(3);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t d = 1 + rng.below(8);
    const double scale = rng.uniform(0.1, 10.0);
    std::vector<double> v(d), w(d);
    for (std::size_t j = 0; j < d; ++j) {
      v[j] = rng.uniform(-scale, scale);
      w[j] = rng.uniform(-scale, scale);
    }
    const double rho = nirgnn::bhattacharyya_coefficient(v, w);
    ASSERT_GT(rho, 0.0);
    ASSERT_LE(rho, 1.0 + 1e-12);
    const double dvw = bc(v, w), dwv = bc(w, v);
    ASSERT_NEAR(dvw, dwv, 1e-12);
    ASSERT_GE(dvw, -1e-15);
    ASSERT_NEAR(bc(v, v), 0.0, 1e-12);
    ASSERT_NEAR(dvw, bc_ref(v, w), 1e-12);
  }
}

TEST(Bhattacharyya, ShiftInvariantInEachArgument) {
  const std::vector<double> v{0.3, -1.2, 2.0}, w{1.0, 0.5, -0.5};
  std::vector<double> v2 = v;
  for (double& x : v2) x += 7.5;
  EXPECT_NEAR(bc(v, w), bc(v2, w), 1e-12);
}

TEST(Bhattacharyya, RowsGradcheck) {
  ad::Rng rng(4);
  auto v = random_tensor(rng, {3, 5}, -2, 2);
  auto w = random_tensor(rng, {3, 5}, -2, 2);
  const auto r = gradcheck({v, w}, [&] { return weighted_sum(nirgnn::bhattacharyya_rows(v, w)); });
  EXPECT_LT(r.max_rel, 1e-4) << r.worst;
  EXPECT_THROW(nirgnn::bhattacharyya_rows(v, ad::Tensor::zeros({3, 4})), nirgnn::DimensionError);
}

TEST(LZero, EqualsTermByTermSum) {
  ad::ParamStore store;
  const auto p = nirgnn::ThetaParams::create(store, 3, 8, 4, 6);
  ad::Rng rng(5);
  const auto v = random_tensor(rng, {3, 4});
  const auto atr = random_tensor(rng, {3, 3});
  const auto vs = nirgnn::theta(p, atr);
  double expected = 0;
  for (std::size_t i = 0; i < 3; ++i) expected += bc_ref(row(v, i), row(vs, i));
  EXPECT_NEAR(nirgnn::l_zero(v, atr, p).item(), expected, 1e-12);
  const auto one = nirgnn::l_zero(ad::Tensor::matrix(1, 4, row(v, 0)), ad::Tensor::matrix(1, 3, row(atr, 0)), p);
  EXPECT_NEAR(one.item(), bc_ref(row(v, 0), row(vs, 0)), 1e-12);
}

TEST(LZero, ZeroWhenThetaReproducesEmbedding) {
  ad::ParamStore store;
  auto p = nirgnn::ThetaParams::create(store, 2, 4, 3, 1);
  std::fill(p.o_w.mutable_data().begin(), p.o_w.mutable_data().end(), 0.0);
  const auto v = ad::Tensor::matrix(2, 3, {p.o_b[0], p.o_b[1], p.o_b[2], p.o_b[0], p.o_b[1], p.o_b[2]});
  EXPECT_NEAR(nirgnn::l_zero(v, ad::Tensor::zeros({2, 2}), p).item(), 0.0, 1e-15);
}

class ToyAttributes : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto toy = ing::make_toy_data();
    ds = ing::prepare_dataset(toy.sessions, toy.catalog, {});
    enc.layout = &ds.attributes;
    enc.tokens = ing::initial_token_table(ds.attributes, 42);
  }
  ing::Dataset ds;
  nirgnn::AttributeEncoder enc;
};

TEST_F(ToyAttributes, EmbedIsTokenMean) {
  const std::vector<nirgnn::ItemIndex> items{1, 7};
  const auto e = enc.embed(items);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto& toks = ds.attributes.item_tokens[items[r]];
    ASSERT_EQ(toks.size(), 2u);
    for (std::size_t j = 0; j < ds.attributes.dim; ++j) {
      EXPECT_NEAR(e.at(r, j), 0.5 * (enc.tokens.at(toks[0], j) + enc.tokens.at(toks[1], j)), 1e-15);
    }
  }
  const std::vector<nirgnn::ItemIndex> bad{999};
  EXPECT_THROW(enc.embed(bad), nirgnn::LookupError);
}

TEST_F(ToyAttributes, NewItemSharingTokensGetsSameEmbedding) {
  ad::ParamStore store;
  const auto p = nirgnn::ThetaParams::create(store, ds.attributes.dim, 16, 8, 3);
  // A new item (not in the training vocabulary) with item 3's tokens.
  ing::AttributeTable layout = ds.attributes;
  layout.item_tokens.push_back(layout.item_tokens[3]);
  nirgnn::AttributeEncoder e2{&layout, enc.tokens};
  const auto fresh = nirgnn::infer_new_item(e2, p, layout.item_tokens.size() - 1);
  const auto old = nirgnn::infer_new_item(e2, p, 3);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(fresh[j], old[j]);
}

TEST_F(ToyAttributes, ItemWithoutTokensUsesUnknownRow) {
  ad::ParamStore store;
  const auto p = nirgnn::ThetaParams::create(store, ds.attributes.dim, 16, 8, 3);
  ing::AttributeTable layout = ds.attributes;
  layout.item_tokens.push_back({});
  nirgnn::AttributeEncoder e2{&layout, enc.tokens};
  const auto got = nirgnn::infer_new_item(e2, p, layout.item_tokens.size() - 1);
  const auto unk = nirgnn::theta(p, ad::gather_row(enc.tokens, 0));
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(got[j], unk[j]);
}

TEST_F(ToyAttributes, FullPoolInferenceIsFinite) {
  ad::ParamStore store;
  const auto p = nirgnn::ThetaParams::create(store, ds.attributes.dim, 16, 8, 3);
  std::vector<nirgnn::ItemIndex> all;
  for (std::size_t i = 1; i < ds.catalog.size(); ++i) all.push_back(i);
  const auto c = nirgnn::infer_items(enc, p, all);
  EXPECT_EQ(c.rows(), all.size());
  for (double x : c.data()) EXPECT_TRUE(std::isfinite(x));
}

TEST_F(ToyAttributes, LZeroOnlyTrainingStrictlyDecreases) {
  // Frozen encoder: node embeddings are computed once as constants.
  ad::ParamStore enc_store;
  const std::size_t d = 16;
  const auto encp = nirgnn::EncoderParams::create(
      enc_store, {ds.catalog.size(), {ds.catalog.taxonomy[0].size(), ds.catalog.taxonomy[1].size(), ds.catalog.taxonomy[2].size()}, d, 1}, 42);
  std::vector<ad::Tensor> node_v;
  std::vector<std::vector<nirgnn::ItemIndex>> node_items;
  {
    ad::NoGrad ng;
    for (const auto& ex : ds.train) {
      const auto g = nirgnn::build_graph(ex.history);
      node_v.push_back(nirgnn::embed_session(g, encp, ds.catalog.paths).v);
      node_items.push_back(g.nodes);
    }
  }
  ad::ParamStore store;
  const auto p = nirgnn::ThetaParams::create(store, ds.attributes.dim, 2 * d, d, 7);
  auto& tokens = store.add("attr.tokens", enc.tokens);
  const nirgnn::AttributeEncoder trainable{&ds.attributes, tokens};
  ad::Adam adam({1e-3, 0.9, 0.999, 1e-8});

  auto total = [&]() {
    ad::Tensor s = ad::Tensor::scalar(0.0);
    for (std::size_t k = 0; k < node_v.size(); ++k) s = s + nirgnn::l_zero(node_v[k], trainable.embed(node_items[k]), p);
    return s;
  };
  double prev = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 100; ++step) {
    store.zero_grad();
    ad::Tape tape;
    ad::Recording rec(tape);
    const auto loss = total();
    ASSERT_LT(loss.item(), prev) << "step " << step;
    prev = loss.item();
    tape.backward(loss);
    adam.step(store);
  }
}
