// Trains on the built-in toy dataset and prints test metrics.

#include <iostream>

#include "nirgnn/eval.hpp"
#include "nirgnn/ingest/toy.hpp"

int main() {
  using namespace nirgnn;
  const auto toy = ingest::make_toy_data();
  const ingest::Dataset ds = ingest::prepare_dataset(toy.sessions, toy.catalog, {});
  std::cout << ds.stats.items << " items, " << ds.train.size() << " train / " << ds.test.size() << " test sessions\n";

  TrainConfig cfg;
  Model model(ds.catalog, ds.attributes, cfg);
  train(model, ds.train, [](const EpochLog& e) {
    if (e.epoch % 5 == 0) std::cout << "epoch " << e.epoch << "  loss " << e.loss << '\n';
  });

  eval::EvalOptions opt;
  opt.ks = {1, 5, 10};
  const auto res = eval::evaluate(model, ds.test, opt);
  for (auto k : res.report.ks) {
    std::cout << "P@" << k << " = " << res.report.p.at(k) << "  MRR@" << k << " = " << res.report.mrr.at(k) << '\n';
  }
}
