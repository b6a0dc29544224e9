#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <random>

#include "harness.hpp"
#include "itsgw/model/checkpoint.hpp"
#include "itsgw/model/macs.hpp"
#include "oracles.hpp"

using namespace itsgw;
using namespace itsgw::model;

namespace {

EncoderConfig tiny_token_config(std::uint64_t seed = 1) {
  EncoderConfig c;
  c.layers = 1;
  c.heads = 2;
  c.d_model = 4;
  c.d_ff = 6;
  c.max_len = 5;
  c.vocab_size = 7;
  c.n_classes = 3;
  c.seed = seed;
  return c;
}

ModelInput token_input(std::vector<std::size_t> ids, std::size_t real) {
  std::vector<std::uint8_t> mask(ids.size(), 0);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(real), 1);
  return {std::move(ids), {}, std::move(mask)};
}

// Perturbs every parameter away from its init so biases, gammas and betas are
// all exercised.
void jitter(EncoderModel& m, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  for (auto& p : m.parameters())
    for (double& v : p.value->data()) v += d(rng);
}

using Mat = std::vector<std::vector<double>>;

struct NaiveParams {
  std::map<std::string, const Tensor2D*> by_name;
  const Tensor2D& operator[](const std::string& n) const { return *by_name.at(n); }
};

Mat naive_linear(const Mat& x, const Tensor2D& w, const Tensor2D* b) {
  Mat y(x.size(), std::vector<double>(w.cols(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t o = 0; o < w.cols(); ++o) {
      double acc = b ? (*b)(0, o) : 0.0;
      for (std::size_t k = 0; k < w.rows(); ++k) acc += x[i][k] * w(k, o);
      y[i][o] = acc;
    }
  return y;
}

Mat naive_norm(const Mat& x, const Tensor2D& g, const Tensor2D& b) {
  Mat y = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mu = 0.0, var = 0.0;
    for (double v : x[i]) mu += v;
    mu /= static_cast<double>(x[i].size());
    for (double v : x[i]) var += (v - mu) * (v - mu);
    var /= static_cast<double>(x[i].size());
    for (std::size_t c = 0; c < x[i].size(); ++c) y[i][c] = (x[i][c] - mu) / std::sqrt(var + 1e-5) * g(0, c) + b(0, c);
  }
  return y;
}

// Step-by-step token-mode forward written from the architecture description.
std::vector<double> naive_forward(EncoderModel& m, const ModelInput& in) {
  const auto& c = m.config();
  NaiveParams p;
  for (auto& pr : m.parameters()) p.by_name[pr.name] = pr.value;
  const std::size_t S = in.ids.size(), d = c.d_model, dk = d / c.heads;
  Mat x(S, std::vector<double>(d));
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < d; ++j) x[i][j] = p["embed.token"](in.ids[i], j) + p["embed.position"](i, j);
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string b = "block" + std::to_string(l) + ".";
    const Mat n1 = naive_norm(x, p[b + "ln1.gamma"], p[b + "ln1.beta"]);
    const Mat q = naive_linear(n1, p[b + "attn.q.weight"], &p[b + "attn.q.bias"]);
    const Mat k = naive_linear(n1, p[b + "attn.k.weight"], nullptr);
    const Mat v = naive_linear(n1, p[b + "attn.v.weight"], &p[b + "attn.v.bias"]);
    Mat concat(S, std::vector<double>(d, 0.0));
    for (std::size_t h = 0; h < c.heads; ++h)
      for (std::size_t i = 0; i < S; ++i) {
        std::vector<double> w(S, 0.0);
        double total = 0.0;
        for (std::size_t j = 0; j < S; ++j) {
          if (!in.mask[j]) continue;
          double s = 0.0;
          for (std::size_t t = 0; t < dk; ++t) s += q[i][h * dk + t] * k[j][h * dk + t];
          w[j] = std::exp(s / std::sqrt(static_cast<double>(dk)));
          total += w[j];
        }
        for (std::size_t j = 0; j < S; ++j)
          for (std::size_t t = 0; t < dk; ++t) concat[i][h * dk + t] += w[j] / total * v[j][h * dk + t];
      }
    const Mat attn = naive_linear(concat, p[b + "attn.o.weight"], &p[b + "attn.o.bias"]);
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t j = 0; j < d; ++j) x[i][j] += attn[i][j];
    const Mat n2 = naive_norm(x, p[b + "ln2.gamma"], p[b + "ln2.beta"]);
    Mat up = naive_linear(n2, p[b + "ffn.up.weight"], &p[b + "ffn.up.bias"]);
    for (auto& row : up)
      for (double& u : row) u = 0.5 * u * (1.0 + std::tanh(0.7978845608 * (u + 0.044715 * u * u * u)));
    const Mat down = naive_linear(up, p[b + "ffn.down.weight"], &p[b + "ffn.down.bias"]);
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t j = 0; j < d; ++j) x[i][j] += down[i][j];
  }
  Mat pooled{x[0]};
  if (c.layers > 0) pooled = naive_norm(pooled, p["final_norm.gamma"], p["final_norm.beta"]);
  return naive_linear(pooled, p["head.weight"], &p["head.bias"])[0];
}

}  // namespace

TEST(InitModel, ParameterCountExample) {
  EncoderConfig c;
  c.layers = 0;
  c.d_model = 8;
  c.heads = 2;
  c.n_classes = 3;
  c.vocab_size = 10;
  c.max_len = 4;
  EncoderModel m(c);
  EXPECT_EQ(nn::count_parameters(m.parameters()), 139u);
  EXPECT_EQ(parameter_count(c), 139u);
}

TEST(InitModel, ParameterCountMatchesClosedFormForRandomConfigs) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    EncoderConfig c;
    c.heads = 1 + rng() % 4;
    c.d_model = c.heads * (1 + rng() % 6);
    c.layers = rng() % 4;
    c.d_ff = 1 + rng() % 40;
    c.max_len = 4 + rng() % 30;
    c.n_classes = 2 + rng() % 5;
    c.mode = rng() % 2 ? InputMode::token_input : InputMode::feature_input;
    c.vocab_size = 5 + rng() % 50;
    c.feature_dim = 1 + rng() % 300;
    c.seed = rng();
    EncoderModel m(c);
    ASSERT_EQ(nn::count_parameters(m.parameters()), parameter_count(c)) << i;
  }
}

TEST(InitModel, InitialisationRules) {
  EncoderConfig c = tiny_token_config();
  c.layers = 2;
  EncoderModel m(c);
  for (auto& p : m.parameters()) {
    const auto& v = p.value->data();
    if (p.name.ends_with("bias") || p.name.ends_with("beta")) {
      for (double x : v) ASSERT_EQ(x, 0.0) << p.name;
    } else if (p.name.ends_with("gamma")) {
      for (double x : v) ASSERT_EQ(x, 1.0) << p.name;
    }
  }
  // all weight draws pooled: sample std close to 0.02
  std::vector<double> w;
  EncoderConfig big = c;
  big.d_model = 64;
  big.d_ff = 256;
  EncoderModel mb(big);
  for (auto& p : mb.parameters())
    if (p.name.ends_with("weight") || p.name.starts_with("embed")) w.insert(w.end(), p.value->data().begin(), p.value->data().end());
  const auto [mean, sd] = oracle::mean_std(w);
  EXPECT_NEAR(mean, 0.0, 1e-3);
  EXPECT_NEAR(sd, 0.02, 5e-4);
}

TEST(InitModel, DeterministicPerSeed) {
  EncoderModel a(tiny_token_config(5)), b(tiny_token_config(5)), c(tiny_token_config(6));
  EXPECT_EQ(encode_checkpoint(a), encode_checkpoint(b));
  EXPECT_NE(encode_checkpoint(a), encode_checkpoint(c));
}

TEST(InitModel, InvalidConfig) {
  EncoderConfig c = tiny_token_config();
  c.d_model = 10;
  c.heads = 4;
  try {
    EncoderModel m(c);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::invalid_config);
  }
  c = tiny_token_config();
  c.max_len = 3;
  EXPECT_THROW(EncoderModel{c}, error);
  c = tiny_token_config();
  c.n_classes = 1;
  EXPECT_THROW(EncoderModel{c}, error);
}

TEST(ForwardClassify, LogitsLengthAndShapeErrors) {
  EncoderModel m(tiny_token_config());
  EXPECT_EQ(forward_classify(m, token_input({2, 4, 3, 0, 0}, 3)).size(), 3u);
  auto code = [&](const ModelInput& in) {
    try {
      forward_classify(m, in);
    } catch (const error& e) {
      return e.code();
    }
    return errc::io_error;
  };
  EXPECT_EQ(code(token_input({2, 4, 3}, 3)), errc::shape_mismatch);
  EXPECT_EQ(code(token_input({2, 4, 3, 0, 9}, 3)), errc::shape_mismatch);
  EXPECT_EQ(code(token_input({2, 4, 3, 0, 0}, 0)), errc::shape_mismatch);
}

TEST(ForwardClassify, PaddedPositionsNeverMatter) {
  std::mt19937_64 rng(9);
  for (std::size_t layers : {1, 2, 3}) {
    EncoderConfig c = tiny_token_config(layers);
    c.layers = layers;
    EncoderModel m(c);
    jitter(m, layers);
    const auto base = forward_classify(m, token_input({2, 5, 3, 0, 0}, 3));
    for (int t = 0; t < 20; ++t) {
      const auto other = forward_classify(m, token_input({2, 5, 3, rng() % 7, rng() % 7}, 3));
      for (std::size_t k = 0; k < base.size(); ++k) ASSERT_NEAR(other[k], base[k], 1e-12);
    }
  }
}

TEST(ForwardClassify, FeatureModePaddingInvariance) {
  EncoderConfig c = tiny_token_config();
  c.mode = InputMode::feature_input;
  c.feature_dim = 6;
  c.layers = 2;
  EncoderModel m(c);
  jitter(m, 3);
  std::mt19937_64 rng(4);
  Tensor2D x = oracle::Tensor2D(5, 6);
  std::normal_distribution<double> d;
  for (double& v : x.data()) v = d(rng);
  const std::vector<std::uint8_t> mask{1, 1, 1, 0, 0};
  const auto base = forward_classify(m, {{}, x, mask});
  for (std::size_t col = 0; col < 6; ++col) x(4, col) = 1e3 * d(rng);
  const auto other = forward_classify(m, {{}, x, mask});
  for (std::size_t k = 0; k < base.size(); ++k) EXPECT_NEAR(other[k], base[k], 1e-12);
}

TEST(ForwardClassify, MatchesNaiveLoopForward) {
  std::mt19937_64 rng(10);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (std::size_t layers : {0, 1, 2}) {
      EncoderConfig c = tiny_token_config(seed);
      c.layers = layers;
      EncoderModel m(c);
      jitter(m, seed + 100);
      const std::size_t real = 1 + rng() % 5;
      std::vector<std::size_t> ids(5, 0);
      for (std::size_t i = 0; i < real; ++i) ids[i] = rng() % 7;
      const auto in = token_input(ids, real);
      const auto got = forward_classify(m, in);
      const auto want = naive_forward(m, in);
      for (std::size_t k = 0; k < got.size(); ++k) ASSERT_NEAR(got[k], want[k], 1e-10);
    }
  }
}

TEST(ForwardClassify, TrainingForwardEqualsInference) {
  EncoderModel m(tiny_token_config());
  jitter(m, 1);
  const auto in = token_input({2, 1, 4, 3, 0}, 4);
  const auto a = m.forward(in).data();
  const auto b = forward_classify(m, in);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], b[k]);
}

TEST(AdamW, FirstStepClosedForms) {
  Tensor2D theta(1, 1), grad(1, 1);
  nn::ParamList params{{"t", &theta, &grad}};
  grad(0, 0) = 1.0;
  AdamW opt(params);
  opt.step(params);
  EXPECT_DOUBLE_EQ(theta(0, 0), -1e-3 / (1.0 + 1e-8));
  EXPECT_NEAR(theta(0, 0), -9.99999990e-4, 1e-12);

  theta(0, 0) = 1.0;
  grad(0, 0) = 0.0;
  AdamW fresh(params);
  fresh.step(params);
  EXPECT_DOUBLE_EQ(theta(0, 0), 0.99999);
  EXPECT_EQ(fresh.step_count(), 1u);
}

TEST(AdamW, HundredStepsMatchScalarReference) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> d;
  for (int trial = 0; trial < 10; ++trial) {
    const AdamWParams hp{1e-3 * (1 + trial), 0.9, 0.999, 1e-8, 0.01 * trial};
    Tensor2D theta(1, 3), grad(1, 3);
    for (double& v : theta.data()) v = d(rng);
    nn::ParamList params{{"t", &theta, &grad}};
    std::vector<oracle::ScalarAdamW> ref(3, oracle::ScalarAdamW{hp.lr, hp.beta1, hp.beta2, hp.eps, hp.weight_decay});
    std::vector<double> ref_theta = theta.data();
    AdamW opt(params, hp);
    for (int step = 0; step < 100; ++step) {
      for (std::size_t j = 0; j < 3; ++j) {
        grad(0, j) = d(rng);
        ref_theta[j] = ref[j].step(ref_theta[j], grad(0, j));
      }
      opt.step(params);
      for (std::size_t j = 0; j < 3; ++j) ASSERT_NEAR(theta(0, j), ref_theta[j], 1e-12);
    }
    EXPECT_EQ(opt.step_count(), 100u);
  }
}

TEST(AdamW, ZeroDecayIsAdam) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> d;
  Tensor2D theta(2, 2), grad(2, 2);
  for (double& v : theta.data()) v = d(rng);
  nn::ParamList params{{"t", &theta, &grad}};
  AdamW opt(params, {1e-2, 0.9, 0.999, 1e-8, 0.0});
  std::vector<double> m(4, 0.0), v(4, 0.0), adam = theta.data();
  for (int t = 1; t <= 50; ++t) {
    for (double& g : grad.data()) g = d(rng);
    for (std::size_t j = 0; j < 4; ++j) {
      const double g = grad.data()[j];
      m[j] = 0.9 * m[j] + 0.1 * g;
      v[j] = 0.999 * v[j] + 0.001 * g * g;
      adam[j] -= 1e-2 * (m[j] / (1 - std::pow(0.9, t))) / (std::sqrt(v[j] / (1 - std::pow(0.999, t))) + 1e-8);
    }
    opt.step(params);
    for (std::size_t j = 0; j < 4; ++j) ASSERT_NEAR(theta.data()[j], adam[j], 1e-15);
  }
}

TEST(AdamW, ShapeMismatch) {
  Tensor2D a(1, 2), ga(1, 2), b(2, 2), gb(2, 2);
  AdamW opt(nn::ParamList{{"a", &a, &ga}});
  try {
    opt.step(nn::ParamList{{"b", &b, &gb}});
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::shape_mismatch);
  }
}

TEST(GradCheck, FullEncoderThroughCrossEntropy) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EncoderConfig c;
    c.layers = 1;
    c.heads = 2;
    c.d_model = 8;
    c.d_ff = 16;
    c.max_len = 6;
    c.mode = InputMode::feature_input;
    c.feature_dim = 5;
    c.n_classes = 3;
    c.seed = seed;
    EncoderModel m(c);
    jitter(m, seed + 50, 0.2);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    Tensor2D x(5, 5);
    for (double& v : x.data()) v = d(rng);
    FeatureClassifierLayer layer(m, {1, 1, 1, 1, 0});
    nn::CrossEntropyLoss loss{{seed % 3}};
    const auto res = nn::grad_check(layer, x, loss, 1e-5);
    EXPECT_LT(res.max_rel_error, 1e-4) << "seed " << seed << " worst " << res.worst_param;
  }
}

TEST(GradCheck, TokenEncoderThroughCrossEntropy) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EncoderConfig c = tiny_token_config(seed);
    c.d_model = 8;
    c.d_ff = 12;
    EncoderModel m(c);
    jitter(m, seed + 70, 0.2);
    TokenClassifierLayer layer(m, token_input({2, 4, 6, 3, 0}, 4));
    nn::CrossEntropyLoss loss{{seed % 3}};
    const auto res = nn::grad_check(layer, Tensor2D(1, 1), loss, 1e-5);
    EXPECT_LT(res.max_rel_error, 1e-4) << "seed " << seed << " worst " << res.worst_param;
  }
}

TEST(CountMacs, WorkedExample) {
  EXPECT_EQ(count_macs(2, 64, 256, 3, 128), 16'777'408u);
  static_assert(count_macs(2, 64, 256, 3, 128) == 2 * 8'388'608ull + 192);
  EXPECT_EQ(count_macs(0, 64, 256, 3, 128), 192u);
  EncoderConfig c;
  c.max_len = 16;
  c.vocab_size = 10;
  EXPECT_THROW(count_macs(c, 17), error);
}

TEST(CountMacs, MonotoneInEachArgument) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 100; ++i) {
    std::uint64_t a[5], b[5];
    for (int k = 0; k < 5; ++k) {
      a[k] = rng() % 300;
      b[k] = a[k];
    }
    const int which = static_cast<int>(rng() % 5);
    b[which] += 1 + rng() % 50;
    ASSERT_LE(count_macs(a[0], a[1], a[2], a[3], a[4]), count_macs(b[0], b[1], b[2], b[3], b[4]));
  }
}

TEST(EvaluateAccuracy, CountingFixtures) {
  EncoderModel m(tiny_token_config());
  jitter(m, 2, 1.0);
  std::vector<LabeledInput> data;
  std::mt19937_64 rng(15);
  for (int i = 0; i < 40; ++i) {
    std::vector<std::size_t> ids{2, rng() % 7, rng() % 7, rng() % 7, 3};
    data.push_back({token_input(ids, 5), 0});
  }
  std::size_t agree = 0;
  for (auto& item : data) item.label = argmax(forward_classify(m, item.input));
  EXPECT_EQ(evaluate_accuracy(m, data), 1.0);
  for (std::size_t i = 0; i < data.size(); i += 2) data[i].label = (data[i].label + 1) % 3;
  EXPECT_EQ(evaluate_accuracy(m, data), 0.5);
  for (auto& item : data) {
    item.label = rng() % 3;
    agree += argmax(forward_classify(m, item.input)) == item.label;
  }
  EXPECT_EQ(evaluate_accuracy(m, data), static_cast<double>(agree) / 40.0);
  EXPECT_THROW(evaluate_accuracy(m, std::span<const LabeledInput>{}), error);
}

TEST(Argmax, TiesGoToLowestIndex) {
  const std::vector<double> v{0.2, 0.5, 0.5};
  EXPECT_EQ(argmax(v), 1u);
}

TEST(Train, ErrorsAndDeterminism) {
  EncoderModel m(tiny_token_config());
  AdamW opt(m.parameters());
  TrainOptions o;
  EXPECT_THROW(train(m, {}, {}, o, opt), error);
  std::vector<LabeledInput> bad{{token_input({2, 3, 0, 0, 0}, 2), 5}};
  try {
    train(m, bad, {}, o, opt);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::label_out_of_range);
  }

  auto run = [] {
    harness::SpeedTask task = harness::speed_task(21);
    EncoderModel model(task.config);
    AdamW adam(model.parameters(), {3e-3, 0.9, 0.999, 1e-8, 0.01});
    TrainOptions opts;
    opts.epochs = 3;
    opts.batch_size = 32;
    opts.shuffle_seed = 4;
    return train(model, task.train, task.eval, opts, adam);
  };
  const TrainLog a = run(), b = run();
  EXPECT_EQ(a.step_loss, b.step_loss);
  ASSERT_EQ(a.epoch_mean_loss.size(), 3u);
  EXPECT_LT(a.epoch_mean_loss[2], a.epoch_mean_loss[0]);
  for (double l : a.step_loss) EXPECT_TRUE(std::isfinite(l));
}

TEST(Train, MaxStepsCap) {
  harness::SpeedTask task = harness::speed_task(22, 100);
  EncoderModel model(task.config);
  AdamW adam(model.parameters());
  TrainOptions opts;
  opts.epochs = 50;
  opts.batch_size = 8;
  opts.max_steps = 13;
  const auto log = train(model, task.train, {}, opts, adam);
  EXPECT_EQ(log.step_loss.size(), 13u);
  EXPECT_EQ(adam.step_count(), 13u);
}

TEST(Checkpoint, ByteIdenticalRoundTrip) {
  for (auto mode : {InputMode::token_input, InputMode::feature_input}) {
    EncoderConfig c = tiny_token_config(3);
    c.mode = mode;
    c.feature_dim = 9;
    EncoderModel m(c);
    jitter(m, 4);
    const std::map<std::string, std::string> meta{{"classes", "normal,warning,fault"}, {"modality", "audio"}};
    const auto bytes = encode_checkpoint(m, meta);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 6), "ITSM1\n");
    Checkpoint ck = decode_checkpoint(bytes);
    EXPECT_EQ(ck.meta, meta);
    EXPECT_EQ(ck.model.config(), c);
    EXPECT_EQ(encode_checkpoint(ck.model, ck.meta), bytes);
  }
  const auto path = (std::filesystem::temp_directory_path() / "itsgw_ckpt_test.bin").string();
  EncoderModel m(tiny_token_config());
  save_checkpoint(path, m);
  EXPECT_EQ(encode_checkpoint(load_checkpoint(path).model), encode_checkpoint(m));
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsDamage) {
  EncoderModel m(tiny_token_config());
  auto bytes = encode_checkpoint(m);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  EXPECT_THROW(decode_checkpoint(truncated), error);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), error);
}

TEST(Dataset, ParsesCsvWithLabelColumn) {
  const auto ds = text::parse_tabular_csv("speed_kph,gear,label\n42.5,drive,normal\n80,park,fault\n", LabelSchema::demo());
  ASSERT_EQ(ds.records.size(), 2u);
  EXPECT_EQ(ds.schema.fields[0].kind, FieldKind::numeric);
  EXPECT_EQ(ds.schema.fields[1].kind, FieldKind::categorical);
  EXPECT_EQ(*ds.records[1].label, 2u);
  EXPECT_EQ(text::serialize_record(ds.records[0]), "speed_kph is 42.5 [SEP] gear is drive");
  EXPECT_THROW(text::parse_tabular_csv("a,label\n1,unknown\n", LabelSchema::demo()), error);
  EXPECT_THROW(text::parse_tabular_csv("a,b\n1\n", LabelSchema::demo()), error);
  EXPECT_THROW(text::parse_tabular_csv("a,label\n", LabelSchema::demo()), error);
}
