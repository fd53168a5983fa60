#include "gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "incepse/errors.hpp"
#include "incepse/model.hpp"
#include "incepse/nn.hpp"
#include "incepse/ops.hpp"
#include "incepse/rng.hpp"
#include "incepse/training.hpp"

namespace incepse::cli {

namespace {

Tensor rand_tensor(Rng& rng, std::vector<std::int64_t> shape, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.mutable_data()[i] = rng.uniform(lo, hi);
  return t;
}

Tensor fd_gradient(const std::function<double()>& f, Tensor& t, double h = 1e-5) {
  Tensor g = Tensor::zeros(t.shape());
  for (std::int64_t i = 0; i < t.size(); ++i) {
    const double orig = t.mutable_data()[i];
    t.mutable_data()[i] = orig + h;
    const double fp = f();
    t.mutable_data()[i] = orig - h;
    const double fm = f();
    t.mutable_data()[i] = orig;
    g.mutable_data()[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double worst_rel_err(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double x = a.at(i), y = b.at(i);
    const double denom = std::max({std::abs(x), std::abs(y), 1e-3});
    worst = std::max(worst, std::abs(x - y) / denom);
  }
  return worst;
}

struct Reporter {
  bool all_ok = true;

  void report(const std::string& name, double err, double tol) {
    const bool ok = err < tol;
    all_ok = all_ok && ok;
    std::printf("  %-22s worst_rel_err=%.3e  tol=%.0e  %s\n", name.c_str(), err, tol,
                ok ? "PASS" : "FAIL");
  }
};

double weighted_sum(Tape* tape, const Tensor& t, const Tensor& w, Tensor* out = nullptr) {
  Tensor prod = ops::mul(tape, t, w);
  std::vector<int> axes;
  for (int i = 0; i < t.rank(); ++i) axes.push_back(i);
  Tensor s = ops::reduce(tape, ops::Reduce::Sum, prod, axes);
  if (out) *out = s;
  return s.at(0);
}

// Checks d(eval)/d(leaf) for every leaf; eval must rebuild the graph from
// the leaves' current storage on each call.
void check_leaves(Reporter& rep, const std::string& name, double tol,
                  std::vector<std::pair<std::string, Tensor*>> leaves,
                  const std::function<double(Tape*, Tensor*)>& eval) {
  Tape tape;
  for (auto& [n, t] : leaves) tape.watch(*t);
  Tensor loss;
  eval(&tape, &loss);
  GradientMap g = tape.backward(loss);
  double worst = 0.0;
  for (auto& [n, t] : leaves) {
    Tensor fd = fd_gradient([&] { return eval(nullptr, nullptr); }, *t);
    worst = std::max(worst, worst_rel_err(g.grad(*t), fd));
  }
  rep.report(name, worst, tol);
}

void op_suite(Reporter& rep) {
  Rng rng(1234);
  const double tol = 1e-4;

  {
    Tensor a = rand_tensor(rng, {2, 3}), b = rand_tensor(rng, {2, 3});
    Tensor w = rand_tensor(rng, {2, 3});
    check_leaves(rep, "add", tol, {{"a", &a}, {"b", &b}}, [&](Tape* tp, Tensor* out) {
      return weighted_sum(tp, ops::add(tp, a, b), w, out);
    });
    check_leaves(rep, "mul", tol, {{"a", &a}, {"b", &b}}, [&](Tape* tp, Tensor* out) {
      return weighted_sum(tp, ops::mul(tp, a, b), w, out);
    });
    check_leaves(rep, "scale_by_const", tol, {{"a", &a}}, [&](Tape* tp, Tensor* out) {
      return weighted_sum(tp, ops::scale(tp, a, -2.3), w, out);
    });
    check_leaves(rep, "relu", tol, {{"a", &a}}, [&](Tape* tp, Tensor* out) {
      return weighted_sum(tp, ops::relu(tp, a), w, out);
    });
    check_leaves(rep, "sigmoid", tol, {{"a", &a}}, [&](Tape* tp, Tensor* out) {
      return weighted_sum(tp, ops::sigmoid(tp, a), w, out);
    });
  }
  {
    Tensor a = rand_tensor(rng, {3, 4}), b = rand_tensor(rng, {4, 2});
    Tensor w = rand_tensor(rng, {3, 2});
    check_leaves(rep, "matmul", tol, {{"a", &a}, {"b", &b}}, [&](Tape* tp, Tensor* out) {
      return weighted_sum(tp, ops::matmul(tp, a, b), w, out);
    });
  }
  {
    Tensor a = rand_tensor(rng, {2, 3, 4});
    Tensor w = rand_tensor(rng, {2, 4});
    check_leaves(rep, "reduce_sum", tol, {{"a", &a}}, [&](Tape* tp, Tensor* out) {
      return weighted_sum(tp, ops::reduce(tp, ops::Reduce::Sum, a, {1}), w, out);
    });
    check_leaves(rep, "reduce_mean", tol, {{"a", &a}}, [&](Tape* tp, Tensor* out) {
      return weighted_sum(tp, ops::reduce(tp, ops::Reduce::Mean, a, {1}), w, out);
    });
  }
  {
    Tensor a = rand_tensor(rng, {2, 2, 3}), b = rand_tensor(rng, {2, 1, 3});
    Tensor w = rand_tensor(rng, {2, 3, 3});
    check_leaves(rep, "concat", tol, {{"a", &a}, {"b", &b}}, [&](Tape* tp, Tensor* out) {
      return weighted_sum(tp, ops::concat(tp, {a, b}, 1), w, out);
    });
  }
  for (int stride : {1, 2}) {
    Tensor x = rand_tensor(rng, {2, 3, 11});
    Tensor wt = rand_tensor(rng, {4, 3, 5});
    Tensor bias = rand_tensor(rng, {4});
    Tensor w = rand_tensor(rng, {2, 4, (11 + stride - 1) / stride});
    check_leaves(rep, "conv1d(stride=" + std::to_string(stride) + ")", tol,
                 {{"x", &x}, {"w", &wt}, {"b", &bias}}, [&](Tape* tp, Tensor* out) {
                   nn::ConvParams p;
                   p.weight = wt;
                   p.bias = bias;
                   p.stride = stride;
                   return weighted_sum(tp, nn::conv1d(tp, x, p), w, out);
                 });
  }
  {
    Tensor x = rand_tensor(rng, {2, 2, 9});
    Tensor w = rand_tensor(rng, {2, 2, 9});
    check_leaves(rep, "maxpool1d", tol, {{"x", &x}}, [&](Tape* tp, Tensor* out) {
      return weighted_sum(tp, nn::maxpool1d(tp, x, 3, 1), w, out);
    });
  }
  {
    Tensor x = rand_tensor(rng, {3, 2, 6});
    Tensor gamma = rand_tensor(rng, {2}, 0.5, 1.5);
    Tensor beta = rand_tensor(rng, {2}, -0.5, 0.5);
    Tensor w = rand_tensor(rng, {3, 2, 6});
    check_leaves(rep, "batchnorm1d", tol, {{"x", &x}, {"gamma", &gamma}, {"beta", &beta}},
                 [&](Tape* tp, Tensor* out) {
                   nn::BatchNormState s;
                   s.gamma = gamma;
                   s.beta = beta;
                   s.running_mean = Tensor::zeros({2});
                   s.running_var = Tensor::full({2}, 1.0);
                   return weighted_sum(tp, nn::batchnorm1d(tp, x, s, nn::Mode::Train), w, out);
                 });
  }
  {
    Tensor x = rand_tensor(rng, {3, 4});
    Tensor wt = rand_tensor(rng, {2, 4});
    Tensor bias = rand_tensor(rng, {2});
    Tensor w = rand_tensor(rng, {3, 2});
    check_leaves(rep, "linear", tol, {{"x", &x}, {"w", &wt}, {"b", &bias}},
                 [&](Tape* tp, Tensor* out) {
                   nn::LinearParams p;
                   p.weight = wt;
                   p.bias = bias;
                   return weighted_sum(tp, nn::linear(tp, x, p), w, out);
                 });
  }
  {
    Tensor x = rand_tensor(rng, {2, 3, 7});
    Tensor w = rand_tensor(rng, {2, 3});
    check_leaves(rep, "global_avg_pool", tol, {{"x", &x}}, [&](Tape* tp, Tensor* out) {
      return weighted_sum(tp, nn::global_avg_pool(tp, x), w, out);
    });
  }
  {
    Tensor x = rand_tensor(rng, {2, 3, 5});
    Tensor cw = rand_tensor(rng, {2, 3});
    Tensor w = rand_tensor(rng, {2, 3, 5});
    check_leaves(rep, "channel_scale", tol, {{"x", &x}, {"w", &cw}},
                 [&](Tape* tp, Tensor* out) {
                   return weighted_sum(tp, nn::channel_scale(tp, x, cw), w, out);
                 });
  }
  {
    // fixed mask: identical rng seed on every evaluation
    Tensor x = rand_tensor(rng, {4, 6});
    Tensor w = rand_tensor(rng, {4, 6});
    check_leaves(rep, "dropout", tol, {{"x", &x}}, [&](Tape* tp, Tensor* out) {
      Rng mask_rng(77);
      return weighted_sum(tp, nn::dropout(tp, x, 0.4, nn::Mode::Train, &mask_rng), w, out);
    });
  }
  {
    Tensor z = rand_tensor(rng, {3, 4}, -2.0, 2.0);
    Tensor y = Tensor::zeros({3, 4});
    for (std::int64_t i = 0; i < y.size(); ++i)
      y.mutable_data()[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    check_leaves(rep, "bce_with_logits", tol, {{"z", &z}}, [&](Tape* tp, Tensor* out) {
      Tensor loss = training::bce_with_logits(tp, z, y);
      if (out) *out = loss;
      return loss.at(0);
    });
  }
}

model::IncepSEConfig compact_config(int depth) {
  model::IncepSEConfig cfg;
  cfg.depth = depth;
  cfg.branch_channels = 4;
  cfg.bottleneck_channels = 4;
  cfg.se_reduction = 2;
  cfg.num_classes = 2;
  cfg.dropout_p = 0.0;
  return cfg;
}

void layer_suite(Reporter& rep) {
  Rng rng(555);
  model::ModelParams m = model::init_params(compact_config(1), 3);
  Tensor x = rand_tensor(rng, {2, 12, 48});
  Tensor w = rand_tensor(rng, {2, static_cast<std::int64_t>(m.config.layer_out_channels(0)),
                                48 / m.config.layer_stride(0)});

  std::vector<std::pair<std::string, Tensor*>> leaves = {{"input", &x}};
  model::for_each_param(m, [&leaves](const std::string& name, Tensor& t) {
    leaves.emplace_back(name, &t);
  });
  leaves.pop_back(); // head weight/bias do not participate in one layer
  leaves.pop_back();

  check_leaves(rep, "incepse_layer", 1e-3, std::move(leaves), [&](Tape* tp, Tensor* out) {
    Tensor y = model::incepse_layer(tp, x, m.layers[0], m.config.layer_stride(0), nn::Mode::Train);
    return weighted_sum(tp, y, w, out);
  });
}

void mini_suite(Reporter& rep) {
  Rng rng(777);
  model::ModelParams m = model::init_params(compact_config(2), 4);
  Tensor x = rand_tensor(rng, {2, 12, 48});
  Tensor w = rand_tensor(rng, {2, 2});

  std::vector<std::pair<std::string, Tensor*>> leaves;
  model::for_each_param(m, [&leaves](const std::string& name, Tensor& t) {
    leaves.emplace_back(name, &t);
  });

  check_leaves(rep, "mini_model(all params)", 1e-3, std::move(leaves),
               [&](Tape* tp, Tensor* out) {
                 Tensor logits = model::model_forward(tp, x, m, nn::Mode::Train);
                 return weighted_sum(tp, logits, w, out);
               });
}

} // namespace

bool run_gradcheck(const std::string& scale) {
  Reporter rep;
  if (scale == "op") {
    std::printf("gradcheck: primitive ops, central differences h=1e-5, 64-bit\n");
    op_suite(rep);
  } else if (scale == "layer") {
    std::printf("gradcheck: complete IncepSE layer (compact width)\n");
    layer_suite(rep);
  } else if (scale == "mini") {
    std::printf("gradcheck: depth-2 model, all parameters\n");
    mini_suite(rep);
  } else {
    fail_validation("gradcheck: unknown scale '" + scale + "' (expected op|layer|mini)");
  }
  std::printf("gradcheck %s: %s\n", scale.c_str(), rep.all_ok ? "PASS" : "FAIL");
  return rep.all_ok;
}

} // namespace incepse::cli
